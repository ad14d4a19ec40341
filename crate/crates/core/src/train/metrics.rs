//! Per-epoch metrics and the convergence rule.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One CSV row. Column order is field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_ce: f64,
    pub loss_assor: f64,
    pub loss_cons: f64,
    pub train_micro_f1: f64,
    pub train_macro_f1: f64,
    pub val_micro_f1: f64,
    pub val_macro_f1: f64,
    pub test_micro_f1: f64,
    pub test_macro_f1: f64,
    pub subgraph_edge_homophily: f64,
    pub temperature: f64,
    /// True when every part updated the encoder this epoch.
    pub encoder_updated: bool,
    pub encoder_updated_parts: usize,
    pub parts: usize,
}

/// Number of trailing losses the convergence rule looks at.
pub const CONVERGENCE_WINDOW: usize = 5;
pub const CONVERGENCE_STD: f64 = 1e-3;

/// True iff the last five losses exist and their population standard
/// deviation is at most `1e-3`.
pub fn detect_convergence(losses: &[f64]) -> bool {
    if losses.len() < CONVERGENCE_WINDOW {
        return false;
    }
    let tail = &losses[losses.len() - CONVERGENCE_WINDOW..];
    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt() <= CONVERGENCE_STD
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(path, i + 2, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_rule() {
        assert!(!detect_convergence(&[1.0; 4]));
        assert!(detect_convergence(&[0.7; 5]));
        assert!(detect_convergence(&[9.0, 1.000, 1.001, 0.999, 1.000, 1.000]));
        assert!(!detect_convergence(&[1.0, 1.01, 0.99, 1.0, 1.0]));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let row = EpochMetrics {
            epoch: 3,
            loss_total: 0.1 + 0.2,
            loss_ce: 1.0 / 3.0,
            loss_assor: 0.0,
            loss_cons: 2.5,
            train_micro_f1: 1.0,
            train_macro_f1: 0.5,
            val_micro_f1: 0.25,
            val_macro_f1: 0.125,
            test_micro_f1: 0.75,
            test_macro_f1: 0.7,
            subgraph_edge_homophily: 0.9,
            temperature: 0.55,
            encoder_updated: true,
            encoder_updated_parts: 1,
            parts: 1,
        };
        write_metrics_csv(&p, &[row.clone(), row.clone()]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("epoch,loss_total,loss_ce,loss_assor,loss_cons,train_micro_f1"));
        assert_eq!(read_metrics_csv(&p).unwrap(), vec![row.clone(), row]);
    }
}

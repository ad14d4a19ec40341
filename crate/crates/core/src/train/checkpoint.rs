//! Binary checkpoint container.
//!
//! Layout (little endian): magic `SGSG`, `u32` version, `u32` tensor
//! count, then per tensor a `u32` name length, the UTF-8 name, `u64` rows,
//! `u64` cols and `rows * cols` `f64` values in row-major order. Scalars
//! and flags are stored as `1 x 1` tensors under `meta.*`.

use std::collections::BTreeMap;
use std::path::Path;

use super::ModelState;
use crate::config::Method;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::gnn::GnnParams;
use crate::tensor::{Adam, AdamConfig, Matrix};

const MAGIC: &[u8; 4] = b"SGSG";
pub const CHECKPOINT_VERSION: u32 = 1;

const METHODS: [Method; 5] = [
    Method::Learned,
    Method::Random,
    Method::Degree,
    Method::EffectiveResistance,
    Method::FullGraph,
];

fn encode(tensors: &[(String, Matrix)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn decode(buf: &[u8]) -> Result<Vec<(String, Matrix)>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?;
        let (rows, cols) = (r.u64()? as usize, r.u64()? as usize);
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= buf.len()))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} is too large")))?;
        let data = r.take(n * 8)?;
        let vals = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Matrix::from_vec(rows, cols, vals)?));
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(out)
}

fn meta(name: &str, v: f64) -> (String, Matrix) {
    (format!("meta.{name}"), Matrix::scalar(v))
}

fn push_params(out: &mut Vec<(String, Matrix)>, prefix: &str, names: Vec<String>, tensors: Vec<&Matrix>) {
    for (n, t) in names.into_iter().zip(tensors) {
        out.push((format!("{prefix}{n}"), t.clone()));
    }
}

fn push_adam(out: &mut Vec<(String, Matrix)>, tag: &str, names: Vec<String>, adam: &Adam) {
    for (n, (m, v)) in names.iter().zip(adam.m.iter().zip(&adam.v)) {
        out.push((format!("adam.{tag}.m.{n}"), m.clone()));
        out.push((format!("adam.{tag}.v.{n}"), v.clone()));
    }
    out.push(meta(&format!("adam.{tag}.step"), adam.step as f64));
}

fn to_tensors(s: &ModelState) -> Vec<(String, Matrix)> {
    let mut out = Vec::new();
    let method = METHODS.iter().position(|&m| m == s.method).expect("listed");
    for (k, v) in [
        ("method", method as f64),
        ("epoch", s.epoch as f64),
        ("best_t", s.best_t),
        ("best_val_f1", s.best_val_f1),
        ("best_epoch", s.best_epoch as f64),
        ("stale_epochs", s.stale_epochs as f64),
        ("converged_at", s.converged_at.map_or(-1.0, |c| c as f64)),
        ("num_nodes", s.num_nodes as f64),
        ("num_edges", s.num_edges as f64),
        ("lr", s.gnn_adam.config.lr),
        ("beta1", s.gnn_adam.config.beta1),
        ("beta2", s.gnn_adam.config.beta2),
        ("eps", s.gnn_adam.config.eps),
    ] {
        out.push(meta(k, v));
    }
    out.push(("meta.loss_tail".into(), Matrix::from_vec(1, s.loss_tail.len(), s.loss_tail.clone()).expect("row")));
    push_params(&mut out, "", s.encoder.names(), s.encoder.tensors());
    push_params(&mut out, "", s.gnn.names(), s.gnn.tensors());
    push_params(&mut out, "best.", s.best_encoder.names(), s.best_encoder.tensors());
    push_params(&mut out, "best.", s.best_gnn.names(), s.best_gnn.tensors());
    push_adam(&mut out, "enc", s.encoder.names(), &s.enc_adam);
    push_adam(&mut out, "gnn", s.gnn.names(), &s.gnn_adam);
    out
}

struct Bag(BTreeMap<String, Matrix>);

impl Bag {
    fn take(&mut self, name: &str) -> Result<Matrix> {
        self.0
            .remove(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    }

    fn scalar(&mut self, name: &str) -> Result<f64> {
        let m = self.take(&format!("meta.{name}"))?;
        if m.shape() != (1, 1) {
            return Err(Error::Checkpoint(format!("meta.{name} is not a scalar")));
        }
        Ok(m.as_slice()[0])
    }

    fn count(&mut self, name: &str) -> Result<usize> {
        let v = self.scalar(name)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Checkpoint(format!("meta.{name} = {v} is not a count")));
        }
        Ok(v as usize)
    }

    fn encoder(&mut self, prefix: &str) -> Result<EncoderParams> {
        let mut t = Vec::new();
        let mut i = 0;
        while self.0.contains_key(&format!("{prefix}enc.gcn.{i}")) {
            t.push(self.take(&format!("{prefix}enc.gcn.{i}"))?);
            i += 1;
        }
        if i == 0 {
            return Err(Error::Checkpoint(format!("no {prefix}enc.gcn.* tensors")));
        }
        for n in ["w_diff", "w_prod", "b1", "w2", "b2"] {
            t.push(self.take(&format!("{prefix}enc.{n}"))?);
        }
        EncoderParams::from_tensors(t)
    }

    fn gnn(&mut self, prefix: &str) -> Result<GnnParams> {
        let mut weights = Vec::new();
        while self.0.contains_key(&format!("{prefix}gnn.w.{}", weights.len())) {
            weights.push(self.take(&format!("{prefix}gnn.w.{}", weights.len()))?);
        }
        if weights.is_empty() {
            return Err(Error::Checkpoint(format!("no {prefix}gnn.w.* tensors")));
        }
        let biases = if self.0.contains_key(&format!("{prefix}gnn.b.0")) {
            Some(
                (0..weights.len())
                    .map(|i| self.take(&format!("{prefix}gnn.b.{i}")))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(GnnParams { weights, biases })
    }

    fn adam(&mut self, tag: &str, names: Vec<String>, params: Vec<&Matrix>, config: AdamConfig) -> Result<Adam> {
        let mut adam = Adam::new(config, &params);
        for (i, n) in names.iter().enumerate() {
            let m = self.take(&format!("adam.{tag}.m.{n}"))?;
            let v = self.take(&format!("adam.{tag}.v.{n}"))?;
            if m.shape() != params[i].shape() || v.shape() != params[i].shape() {
                return Err(Error::Checkpoint(format!("adam moments of {n} have the wrong shape")));
            }
            adam.m[i] = m;
            adam.v[i] = v;
        }
        adam.step = self.count(&format!("adam.{tag}.step"))? as u64;
        Ok(adam)
    }
}

fn from_tensors(tensors: Vec<(String, Matrix)>) -> Result<ModelState> {
    let mut b = Bag(BTreeMap::new());
    for (n, m) in tensors {
        if b.0.insert(n.clone(), m).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {n}")));
        }
    }
    let method = *METHODS
        .get(b.count("method")?)
        .ok_or_else(|| Error::Checkpoint("unknown method id".into()))?;
    let config = AdamConfig {
        lr: b.scalar("lr")?,
        beta1: b.scalar("beta1")?,
        beta2: b.scalar("beta2")?,
        eps: b.scalar("eps")?,
    };
    let encoder = b.encoder("")?;
    let gnn = b.gnn("")?;
    let best_encoder = b.encoder("best.")?;
    let best_gnn = b.gnn("best.")?;
    let enc_adam = b.adam("enc", encoder.names(), encoder.tensors(), config)?;
    let gnn_adam = b.adam("gnn", gnn.names(), gnn.tensors(), config)?;
    let converged = b.scalar("converged_at")?;
    let state = ModelState {
        method,
        epoch: b.count("epoch")?,
        best_t: b.scalar("best_t")?,
        best_val_f1: b.scalar("best_val_f1")?,
        best_epoch: b.count("best_epoch")?,
        stale_epochs: b.count("stale_epochs")?,
        converged_at: (converged >= 0.0).then_some(converged as usize),
        num_nodes: b.count("num_nodes")?,
        num_edges: b.count("num_edges")?,
        loss_tail: b.take("meta.loss_tail")?.into_vec(),
        encoder,
        gnn,
        best_encoder,
        best_gnn,
        enc_adam,
        gnn_adam,
    };
    if let Some(extra) = b.0.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
    }
    if !(0.0..=1.0).contains(&state.best_val_f1) {
        return Err(Error::Checkpoint(format!("best_val_f1 {} outside [0,1]", state.best_val_f1)));
    }
    Ok(state)
}

pub fn save_checkpoint(state: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(&to_tensors(state))).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_tensors(decode(&buf)?)
}

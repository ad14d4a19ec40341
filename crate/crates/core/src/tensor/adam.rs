//! Adam with bias-corrected moments.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl Adam {
    /// Zeroed moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[&Matrix]) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One update of every parameter. Nothing is modified if any gradient
    /// is non-finite or any shape disagrees.
    pub fn step(&mut self, names: &[&str], params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() || names.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "adam: {} moments, {} params, {} grads, {} names",
                self.m.len(),
                params.len(),
                grads.len(),
                names.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != params[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::Shape {
                    op: "adam",
                    lhs: params[i].shape(),
                    rhs: g.shape(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(names[i].to_string()));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            let p = params[i].as_mut_slice();
            for j in 0..p.len() {
                let gj = g.as_slice()[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut w = Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let before = w.clone();
        let mut adam = Adam::new(AdamConfig::default(), &[&w]);
        let g = Matrix::zeros(1, 2);
        adam.step(&["w"], &mut [&mut w], &[&g]).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut w = Matrix::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &[&w]);
        let g = Matrix::from_rows(&[vec![3.0, -0.5, 1e-3]]).unwrap();
        adam.step(&["w"], &mut [&mut w], &[&g]).unwrap();
        for (p, gv) in w.as_slice().iter().zip(g.as_slice()) {
            let want = -1e-3 * gv / (gv.abs() + 1e-8);
            assert!((p - want).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_descends() {
        let mut w = Matrix::scalar(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &[&w]);
        for _ in 0..100 {
            let g = w.scale(2.0);
            adam.step(&["w"], &mut [&mut w], &[&g]).unwrap();
        }
        assert!(w.as_slice()[0].abs() < 1.0);
        assert_eq!(adam.step, 100);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut a = Matrix::scalar(1.0);
        let mut b = Matrix::scalar(2.0);
        let mut adam = Adam::new(AdamConfig::default(), &[&a, &b]);
        let ga = Matrix::scalar(0.1);
        let gb = Matrix::scalar(f64::NAN);
        let err = adam
            .step(&["enc.w0", "gnn.w1"], &mut [&mut a, &mut b], &[&ga, &gb])
            .unwrap_err();
        assert!(err.to_string().contains("gnn.w1"));
        assert_eq!(a.as_slice()[0], 1.0);
        assert_eq!(adam.step, 0);
    }
}

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::network::{Checkpoint, Parameterized};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clipping threshold; 0 disables clipping.
    pub clip: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 5.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.lr > 0.0) {
            bad.push("optimizer.lr must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            bad.push("optimizer.beta1 must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            bad.push("optimizer.beta2 must be in [0, 1)");
        }
        if !(self.eps > 0.0) {
            bad.push("optimizer.eps must be > 0");
        }
        if !(self.clip >= 0.0) {
            bad.push("optimizer.clip must be >= 0");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// Adam with global-norm clipping. Tensors whose gradient is exactly zero
/// in a step are left untouched, moments included.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    counts: Vec<u64>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
            counts: Vec::new(),
        }
    }

    /// Apply one update from the accumulated gradients and clear them;
    /// returns the gradient norm before clipping.
    pub fn step<M: Parameterized>(&mut self, model: &mut M) -> f64 {
        let mut sq = 0.0;
        model.visit("", &mut |_, p| sq += p.grad.iter().map(|g| g * g).sum::<f64>());
        let norm = sq.sqrt();
        let scale = if self.config.clip > 0.0 && norm > self.config.clip {
            self.config.clip / norm
        } else {
            1.0
        };
        if self.m.is_empty() {
            model.visit("", &mut |_, p| {
                self.m.push(Array2::zeros(p.shape()));
                self.v.push(Array2::zeros(p.shape()));
                self.counts.push(0);
            });
        }
        self.t += 1;
        let c = self.config.clone();
        let mut i = 0;
        let (ms, vs, counts) = (&mut self.m, &mut self.v, &mut self.counts);
        model.visit_mut("", &mut |_, p| {
            let idx = i;
            i += 1;
            if p.grad.iter().all(|&g| g == 0.0) {
                return;
            }
            counts[idx] += 1;
            let k = counts[idx] as i32;
            let bc1 = 1.0 - c.beta1.powi(k);
            let bc2 = 1.0 - c.beta2.powi(k);
            Zip::from(&mut p.value)
                .and(&p.grad)
                .and(&mut ms[idx])
                .and(&mut vs[idx])
                .for_each(|w, &g, m, v| {
                    let g = g * scale;
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    *w -= c.lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                });
            p.grad.fill(0.0);
        });
        norm
    }

    /// Store the moments as extra checkpoint tensors.
    pub fn save_into<M: Parameterized>(&self, model: &M, ck: &mut Checkpoint) {
        let mut names = Vec::new();
        model.visit("", &mut |n, _| names.push(n.to_string()));
        for (i, name) in names.iter().enumerate() {
            if let (Some(m), Some(v)) = (self.m.get(i), self.v.get(i)) {
                ck.push_tensor(format!("adam.m.{name}"), m.clone());
                ck.push_tensor(format!("adam.v.{name}"), v.clone());
                ck.push_tensor(
                    format!("adam.n.{name}"),
                    Array2::from_elem((1, 1), self.counts[i] as f64),
                );
            }
        }
    }

    pub fn load_from<M: Parameterized>(config: AdamConfig, t: u64, model: &M, ck: &Checkpoint) -> Result<Self> {
        let mut adam = Adam::new(config);
        adam.t = t;
        if t == 0 {
            return Ok(adam);
        }
        let mut err = None;
        model.visit("", &mut |name, p| {
            let get = |kind: &str| ck.tensor(&format!("adam.{kind}.{name}"));
            match (get("m"), get("v"), get("n")) {
                (Some(m), Some(v), Some(n)) if m.dim() == p.shape() && v.dim() == p.shape() => {
                    adam.m.push(m.clone());
                    adam.v.push(v.clone());
                    adam.counts.push(n[[0, 0]] as u64);
                }
                _ => err = Some(Error::Checkpoint(format!("optimizer state for {name} missing or misshapen"))),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(adam),
        }
    }
}

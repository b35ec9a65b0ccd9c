//! Central finite-difference checking of hand-written gradients.

use rand::seq::index::sample;

use super::param::Parameterized;
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Denominator floor for the relative error, so near-zero gradients are
    /// compared in absolute terms.
    pub floor: f64,
    /// Check at most this many entries per tensor (sampled), or all if `None`.
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
    /// Use the five-point stencil instead of the two-point one. Lets a larger
    /// `eps` keep truncation error small when the loss is large enough that
    /// round-off swamps small gradients at tiny steps.
    pub fourth_order: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            floor: 1e-6,
            max_per_tensor: None,
            seed: 0,
            fourth_order: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

fn set_entry<M: Parameterized>(model: &mut M, name: &str, idx: usize, value: f64) -> f64 {
    let mut old = f64::NAN;
    model.visit_mut("", &mut |n, p| {
        if n == name {
            let slot = p.value.iter_mut().nth(idx).expect("index in range");
            old = *slot;
            *slot = value;
        }
    });
    old
}

/// Compare analytic gradients to central differences.
///
/// `analytic` must compute the loss and accumulate gradients into the
/// (already zeroed) parameter slots; `loss` recomputes it without touching
/// gradients. Parameters are restored exactly afterwards.
pub fn grad_check<M, A, L>(
    model: &mut M,
    mut analytic: A,
    loss: L,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    M: Parameterized,
    A: FnMut(&mut M) -> f64,
    L: Fn(&M) -> f64,
{
    model.zero_grad();
    let base = analytic(model);
    if !base.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let mut tensors = Vec::new();
    model.visit("", &mut |n, p| {
        tensors.push((n.to_string(), p.grad.iter().copied().collect::<Vec<f64>>()))
    });
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (t, (name, grads)) in tensors.iter().enumerate() {
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}[{i}]")));
        }
        let indices: Vec<usize> = match cfg.max_per_tensor {
            Some(k) if k < grads.len() => {
                let mut rng = substream(cfg.seed, "grad-check", t as u64);
                let mut v = sample(&mut rng, grads.len(), k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..grads.len()).collect(),
        };
        for idx in indices {
            let orig = set_entry(model, name, idx, f64::NAN);
            let mut at = |h: f64| {
                set_entry(model, name, idx, orig + h);
                let v = loss(model);
                set_entry(model, name, idx, orig);
                v
            };
            let (up, down) = (at(cfg.eps), at(-cfg.eps));
            let numeric = if cfg.fourth_order {
                let (up2, down2) = (at(2.0 * cfg.eps), at(-2.0 * cfg.eps));
                if !up2.is_finite() || !down2.is_finite() {
                    return Err(Error::NonFinite(format!("loss when perturbing {name}[{idx}]")));
                }
                (8.0 * (up - down) - (up2 - down2)) / (12.0 * cfg.eps)
            } else {
                (up - down) / (2.0 * cfg.eps)
            };
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!("loss when perturbing {name}[{idx}]")));
            }
            let a = grads[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.checked += 1;
            if rel > report.max_rel_err || report.worst_tensor.is_empty() {
                report.max_rel_err = rel;
                report.worst_tensor = name.clone();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

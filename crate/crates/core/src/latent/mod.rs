//! The two latent distributions: von Mises-Fisher on the unit sphere for
//! semantics and a diagonal Gaussian for syntax.

mod bessel;
mod gauss;
mod vmf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bessel::{bessel_ratio, log_bessel_i};
pub use gauss::{gauss_kl_std, gauss_sample, GaussNoise, GaussPosterior};
pub use vmf::{
    householder_backward, householder_rotate, log_inverse_sphere_area, vmf_kl_uniform,
    vmf_log_norm, vmf_mean_cosine, vmf_sample, vmf_sample_with, VmfNoise, VmfPosterior,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatentConfig {
    /// Dimension of the semantic (vMF) variable.
    pub d_sem: usize,
    /// Dimension of the syntactic (Gaussian) variable.
    pub d_syn: usize,
    /// Fixed vMF concentration.
    pub kappa: f64,
    pub lambda_y: f64,
    pub lambda_z: f64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            d_sem: 50,
            d_syn: 50,
            kappa: 80.0,
            lambda_y: 1e-4,
            lambda_z: 1e-3,
        }
    }
}

impl LatentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.d_sem < 2 {
            bad.push("d_sem must be >= 2");
        }
        if self.d_syn < 2 {
            bad.push("d_syn must be >= 2");
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            bad.push("kappa must be finite and >= 0");
        }
        if !(self.lambda_y >= 0.0) {
            bad.push("lambda_y must be >= 0");
        }
        if !(self.lambda_z >= 0.0) {
            bad.push("lambda_z must be >= 0");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

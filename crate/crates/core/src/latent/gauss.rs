use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Diagonal Gaussian posterior parameterized by mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussPosterior {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussPosterior {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::Shape(format!(
                "gaussian mu has {} dims, sigma {}",
                mu.len(),
                sigma.len()
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::invalid(format!("gaussian sigma {s} is not positive")));
        }
        Ok(GaussPosterior { mu, sigma })
    }

    pub fn standard(d: usize) -> Self {
        GaussPosterior {
            mu: vec![0.0; d],
            sigma: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Standard-normal noise for the reparameterized draw `mu + sigma * eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussNoise(pub Vec<f64>);

impl GaussNoise {
    pub fn sample<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        GaussNoise((0..d).map(|_| rng.sample(StandardNormal)).collect())
    }

    pub fn apply(&self, post: &GaussPosterior) -> Vec<f64> {
        post.mu
            .iter()
            .zip(&post.sigma)
            .zip(&self.0)
            .map(|((m, s), e)| m + s * e)
            .collect()
    }
}

pub fn gauss_sample<R: Rng + ?Sized>(post: &GaussPosterior, rng: &mut R) -> Vec<f64> {
    GaussNoise::sample(post.dim(), rng).apply(post)
}

/// `KL(N(mu, diag sigma^2) || N(0, I))`.
pub fn gauss_kl_std(post: &GaussPosterior) -> f64 {
    0.5 * post
        .mu
        .iter()
        .zip(&post.sigma)
        .map(|(m, s)| s * s + m * m - 1.0 - 2.0 * s.ln())
        .sum::<f64>()
}

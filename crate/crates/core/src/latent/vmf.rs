use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::bessel::{bessel_ratio, log_bessel_i};
use crate::error::{Error, Result};

/// vMF posterior: a unit mean direction with the (fixed) concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfPosterior {
    pub mu: Vec<f64>,
    pub kappa: f64,
}

impl VmfPosterior {
    pub fn new(mu: Vec<f64>, kappa: f64) -> Result<Self> {
        let norm = l2(&mu);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("vMF mean direction has norm {norm}")));
        }
        if !(kappa >= 0.0) {
            return Err(Error::invalid(format!("vMF kappa {kappa} < 0")));
        }
        Ok(VmfPosterior { mu, kappa })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Noise that determines one vMF draw independently of the mean direction:
/// the polar cosine `omega` and a unit tangent direction in `d-1` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfNoise {
    pub omega: f64,
    pub tangent: Vec<f64>,
}

impl VmfNoise {
    /// Draw the noise for `vMF(., kappa)` in `d` dimensions (Wood's
    /// rejection sampler for `omega`).
    pub fn sample<R: Rng + ?Sized>(kappa: f64, d: usize, rng: &mut R) -> Self {
        assert!(d >= 2, "vMF dimension must be >= 2");
        let dm1 = (d - 1) as f64;
        let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
        let beta = Beta::new(0.5 * dm1, 0.5 * dm1).expect("valid beta parameters");
        let omega = loop {
            let z: f64 = beta.sample(rng);
            let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
            let u: f64 = rng.random();
            if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
                break w.clamp(-1.0, 1.0);
            }
        };
        let mut tangent: Vec<f64> = (0..d - 1).map(|_| rng.sample(StandardNormal)).collect();
        let n = l2(&tangent);
        tangent.iter_mut().for_each(|v| *v /= n);
        VmfNoise { omega, tangent }
    }

    /// The draw for mean direction `e_1`.
    pub fn base_point(&self) -> Vec<f64> {
        let r = (1.0 - self.omega * self.omega).max(0.0).sqrt();
        std::iter::once(self.omega)
            .chain(self.tangent.iter().map(|v| r * v))
            .collect()
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `ln(Gamma(d/2) / (2 pi^(d/2)))`, the uniform density on `S^(d-1)`.
pub fn log_inverse_sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    ln_gamma(h) - std::f64::consts::LN_2 - h * std::f64::consts::PI.ln()
}

/// `ln C_d(kappa)`, the log normalizer of the vMF density.
pub fn vmf_log_norm(kappa: f64, d: usize) -> f64 {
    assert!(kappa >= 0.0 && d >= 2, "vmf_log_norm: kappa={kappa} d={d}");
    if kappa == 0.0 {
        return log_inverse_sphere_area(d);
    }
    let nu = 0.5 * d as f64 - 1.0;
    nu * kappa.ln() - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - log_bessel_i(nu, kappa)
}

/// `A_d(kappa) = E[mu . x]` under `vMF(mu, kappa)`.
pub fn vmf_mean_cosine(kappa: f64, d: usize) -> f64 {
    bessel_ratio(0.5 * d as f64 - 1.0, kappa)
}

/// KL divergence from `vMF(mu, kappa)` to the uniform distribution on the
/// sphere. Independent of `mu`.
pub fn vmf_kl_uniform(kappa: f64, d: usize) -> f64 {
    if kappa == 0.0 {
        return 0.0;
    }
    let kl = kappa * vmf_mean_cosine(kappa, d) + vmf_log_norm(kappa, d) - log_inverse_sphere_area(d);
    kl.max(0.0)
}

/// Reflect the base point of `noise` onto mean direction `mu` with the
/// Householder map that sends `e_1` to `mu`.
pub fn householder_rotate(mu: &[f64], noise: &VmfNoise) -> Vec<f64> {
    let x = noise.base_point();
    let mut a = mu.iter().map(|m| -m).collect::<Vec<_>>();
    a[0] += 1.0;
    let n: f64 = a.iter().map(|v| v * v).sum();
    if n < 1e-24 {
        return x;
    }
    let s: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
    x.iter().zip(&a).map(|(xi, ai)| xi - 2.0 * s / n * ai).collect()
}

/// Gradient of a loss with respect to `mu`, given its gradient `dy` with
/// respect to the reflected sample. The noise is held fixed.
pub fn householder_backward(mu: &[f64], noise: &VmfNoise, dy: &[f64]) -> Vec<f64> {
    let x = noise.base_point();
    let mut a = mu.iter().map(|m| -m).collect::<Vec<_>>();
    a[0] += 1.0;
    let n: f64 = a.iter().map(|v| v * v).sum();
    if n < 1e-24 {
        return vec![0.0; mu.len()];
    }
    let s: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
    let ga: f64 = dy.iter().zip(&a).map(|(p, q)| p * q).sum();
    // dL/da = -(2/n)(s g + (g.a) x) + (4 s (g.a) / n^2) a ; dL/dmu = -dL/da
    (0..mu.len())
        .map(|i| (2.0 / n) * (s * dy[i] + ga * x[i]) - 4.0 * s * ga / (n * n) * a[i])
        .collect()
}

/// One draw from `vMF(mu, kappa)`.
pub fn vmf_sample<R: Rng + ?Sized>(post: &VmfPosterior, rng: &mut R) -> Vec<f64> {
    let noise = VmfNoise::sample(post.kappa, post.dim(), rng);
    householder_rotate(&post.mu, &noise)
}

/// Deterministic draw for pre-sampled noise.
pub fn vmf_sample_with(post: &VmfPosterior, noise: &VmfNoise) -> Vec<f64> {
    householder_rotate(&post.mu, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = l2(&v);
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn uniform_limit() {
        for d in [2, 3, 10, 50] {
            assert_eq!(vmf_log_norm(0.0, d), log_inverse_sphere_area(d));
            assert_eq!(vmf_kl_uniform(0.0, d), 0.0);
        }
        // S^2 has area 4 pi.
        assert!((log_inverse_sphere_area(3) + (4.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        // Tiny kappa approaches the uniform limit continuously.
        assert!((vmf_log_norm(1e-8, 50) - log_inverse_sphere_area(50)).abs() < 1e-9);
    }

    #[test]
    fn d3_closed_form() {
        for k in [0.01_f64, 0.5, 2.0, 10.0, 80.0, 300.0] {
            let ln_sinh = k + (-(-2.0 * k).exp()).ln_1p() - std::f64::consts::LN_2;
            let closed = k.ln() - (4.0 * std::f64::consts::PI).ln() - ln_sinh;
            assert!((vmf_log_norm(k, 3) - closed).abs() < 1e-8, "kappa={k}");
        }
    }

    #[test]
    fn kl_monotone_in_kappa() {
        let mut prev = 0.0;
        for k in 0..=100 {
            let kl = vmf_kl_uniform(k as f64, 50);
            assert!(kl >= prev, "kappa={k}: {kl} < {prev}");
            prev = kl;
        }
    }

    #[test]
    fn samples_are_unit_and_concentrate() {
        let mut rng = substream(1, "test", 0);
        let mu = unit(vec![0.3, -0.2, 0.9, 0.1, 0.0]);
        let post = VmfPosterior::new(mu.clone(), 1e6).unwrap();
        for _ in 0..100 {
            let x = vmf_sample(&post, &mut rng);
            assert!((l2(&x) - 1.0).abs() < 1e-6);
            let dot: f64 = x.iter().zip(&mu).map(|(a, b)| a * b).sum();
            assert!(dot > 0.999);
        }
        let uni = VmfPosterior::new(mu, 0.0).unwrap();
        for _ in 0..100 {
            assert!((l2(&vmf_sample(&uni, &mut rng)) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn reflection_maps_e1_to_mu() {
        let mu = unit(vec![0.1, 0.7, -0.4]);
        let noise = VmfNoise {
            omega: 1.0,
            tangent: vec![1.0, 0.0],
        };
        let y = householder_rotate(&mu, &noise);
        for (a, b) in y.iter().zip(&mu) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_gradient_matches_finite_differences() {
        let mut rng = substream(3, "test", 0);
        let mu = unit(vec![0.2, -0.5, 0.4, 0.7]);
        let noise = VmfNoise::sample(5.0, 4, &mut rng);
        let g = [0.3, -1.1, 0.25, 0.9];
        let loss = |m: &[f64]| -> f64 {
            householder_rotate(m, &noise)
                .iter()
                .zip(&g)
                .map(|(a, b)| a * b)
                .sum()
        };
        let analytic = householder_backward(&mu, &noise, &g);
        let eps = 1e-6;
        for i in 0..4 {
            let mut p = mu.clone();
            let mut m = mu.clone();
            p[i] += eps;
            m[i] -= eps;
            let num = (loss(&p) - loss(&m)) / (2.0 * eps);
            let rel = (num - analytic[i]).abs() / num.abs().max(analytic[i].abs()).max(1e-8);
            assert!(rel < 1e-6, "i={i} {num} {}", analytic[i]);
        }
    }

    #[test]
    fn posterior_validation() {
        assert!(VmfPosterior::new(vec![1.0, 1.0], 1.0).is_err());
        assert!(VmfPosterior::new(vec![1.0, 0.0], -1.0).is_err());
    }
}

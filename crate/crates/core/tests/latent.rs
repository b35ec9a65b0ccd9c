mod oracles;

use mvgvae::latent::{
    bessel_ratio, gauss_kl_std, gauss_sample, log_bessel_i, vmf_kl_uniform, vmf_log_norm, vmf_mean_cosine,
    vmf_sample, GaussPosterior, VmfPosterior,
};
use mvgvae::rng::substream;
use proptest::prelude::*;

#[test]
fn log_bessel_matches_big_integer_series() {
    for (nu, x) in [(24, 80), (4, 5), (5, 5), (0, 1), (24, 2), (49, 200), (4, 40)] {
        let want = oracles::log_bessel_i_series(nu, x);
        let got = log_bessel_i(nu as f64, x as f64);
        assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "nu={nu} x={x}: {got} vs {want}");
    }
}

#[test]
fn kl_at_zero_concentration_is_exactly_zero() {
    for d in [2, 10, 50] {
        assert_eq!(vmf_kl_uniform(0.0, d), 0.0);
    }
}

#[test]
fn kl_matches_quadrature() {
    for (k, d) in [(80.0, 50), (5.0, 10), (1.0, 3), (30.0, 16)] {
        let want = oracles::vmf_kl_quadrature(k, d);
        let got = vmf_kl_uniform(k, d);
        assert!((got - want).abs() < 1e-5, "kappa={k} d={d}: {got} vs {want}");
    }
}

#[test]
fn log_norm_matches_d3_closed_form() {
    for k in [0.1_f64, 1.0, 80.0] {
        let closed = k.ln() - (2.0 * std::f64::consts::PI).ln() - (k.exp() - (-k).exp()).ln();
        assert!((vmf_log_norm(k, 3) - closed).abs() < 1e-8);
    }
}

#[test]
fn gaussian_kl_matches_monte_carlo() {
    let q = GaussPosterior::new(vec![0.5, -1.0, 0.0, 2.0], vec![0.7, 1.3, 1.0, 0.4]).unwrap();
    let log_ratio = |x: &[f64]| -> f64 {
        x.iter()
            .zip(&q.mu)
            .zip(&q.sigma)
            .map(|((x, m), s)| {
                let u = (x - m) / s;
                -0.5 * u * u - s.ln() + 0.5 * x * x
            })
            .sum()
    };
    let mut rng = substream(11, "mc-kl", 0);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let v = log_ratio(&gauss_sample(&q, &mut rng));
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    let kl = gauss_kl_std(&q);
    assert!((kl - mean).abs() < 3.0 * se, "closed {kl} vs mc {mean} +- {se}");
}

#[test]
fn sampler_mean_cosine_matches_bessel_ratio() {
    // d = 10, kappa = 5: E[mu.x] = I_5(5) / I_4(5).
    let (d, kappa) = (10, 5.0);
    let oracle = (oracles::log_bessel_i_series(5, 5) - oracles::log_bessel_i_series(4, 5)).exp();
    assert!((vmf_mean_cosine(kappa, d) - oracle).abs() < 1e-12);
    let mu: Vec<f64> = (0..d).map(|i| if i == 3 { -1.0 } else { 0.0 }).collect();
    let post = VmfPosterior::new(mu.clone(), kappa).unwrap();
    let mut rng = substream(5, "sampler", 0);
    let n = 100_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let x = vmf_sample(&post, &mut rng);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        acc += x.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>();
    }
    let mean = acc / n as f64;
    assert!((mean - oracle).abs() < 0.005, "{mean} vs {oracle}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vmf_samples_are_unit_norm(seed in 0u64..1000, d in 2usize..40, kappa in 0.0f64..500.0, raw in prop::collection::vec(-1.0f64..1.0, 40)) {
        let mut mu: Vec<f64> = raw[..d].to_vec();
        mu[0] += 2.0;
        let n = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        mu.iter_mut().for_each(|v| *v /= n);
        let post = VmfPosterior::new(mu, kappa).unwrap();
        let x = vmf_sample(&post, &mut substream(seed, "prop", 0));
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ratio_bounded_and_kl_nonnegative(nu in 0.0f64..60.0, x in 0.0f64..400.0) {
        let r = bessel_ratio(nu, x);
        prop_assert!((0.0..1.0).contains(&r));
        let d = (2.0 * nu + 2.0).round() as usize;
        prop_assert!(vmf_kl_uniform(x, d.max(2)) >= 0.0);
    }

    #[test]
    fn gaussian_kl_nonnegative(mu in prop::collection::vec(-5.0f64..5.0, 6), s in prop::collection::vec(0.01f64..10.0, 6)) {
        prop_assert!(gauss_kl_std(&GaussPosterior::new(mu, s).unwrap()) >= 0.0);
    }
}

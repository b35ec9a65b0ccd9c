//! Log-space modified Bessel functions of the first kind.

use statrs::function::gamma::ln_gamma;

/// Below this argument the power series is summed directly.
const SERIES_MAX_X: f64 = 600.0;

/// `ln I_nu(x)` for `nu >= 0`, `x >= 0`.
///
/// Power series (accumulated in log space) for moderate `x`; for large `x`
/// the Hankel expansion when `x >> nu^2`, otherwise the Debye uniform
/// expansion. Never overflows; `x == 0` yields `-inf` unless `nu == 0`.
pub fn log_bessel_i(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x >= 0.0, "log_bessel_i: nu={nu} x={x}");
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x <= SERIES_MAX_X {
        series(nu, x)
    } else if x > 40.0 * (nu * nu).max(1.0) {
        hankel(nu, x)
    } else {
        debye(nu, x)
    }
}

fn series(nu: f64, x: f64) -> f64 {
    // term_k = (x/2)^(2k+nu) / (k! Gamma(k+nu+1))
    let lhx = (0.5 * x).ln();
    let log_t0 = nu * lhx - ln_gamma(nu + 1.0);
    // Ratio of consecutive terms: (x/2)^2 / ((k+1)(k+1+nu)). Sum relative to
    // the largest term to stay in range.
    let q = 0.25 * x * x;
    let mut log_terms = Vec::with_capacity(64);
    let mut lt = log_t0;
    let mut k = 0.0_f64;
    let mut max_lt = lt;
    loop {
        log_terms.push(lt);
        max_lt = max_lt.max(lt);
        let ratio = q / ((k + 1.0) * (k + 1.0 + nu));
        lt += ratio.ln();
        k += 1.0;
        if ratio < 1.0 && lt < max_lt - 40.0 {
            break;
        }
    }
    let s: f64 = log_terms.iter().map(|&t| (t - max_lt).exp()).sum();
    max_lt + s.ln()
}

fn hankel(nu: f64, x: f64) -> f64 {
    // I_nu(x) ~ e^x / sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=12 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (kf * 8.0 * x);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln()
}

fn debye(nu: f64, x: f64) -> f64 {
    // Uniform asymptotic expansion in nu with z = x / nu.
    let z = x / nu;
    let s = (1.0 + z * z).sqrt();
    let t = 1.0 / s;
    let eta = s + (z / (1.0 + s)).ln();
    let t2 = t * t;
    let u1 = t * (3.0 - 5.0 * t2) / 24.0;
    let u2 = t2 * (81.0 - 462.0 * t2 + 385.0 * t2 * t2) / 1152.0;
    let u3 = t * t2 * (30375.0 - 369603.0 * t2 + 765765.0 * t2 * t2 - 425425.0 * t2 * t2 * t2)
        / 414720.0;
    let u4 = t2
        * t2
        * (4465125.0 - 94121676.0 * t2 + 349922430.0 * t2 * t2 - 446185740.0 * t2.powi(3)
            + 185910725.0 * t2.powi(4))
        / 39813120.0;
    let corr = 1.0 + u1 / nu + u2 / nu.powi(2) + u3 / nu.powi(3) + u4 / nu.powi(4);
    nu * eta - 0.5 * (2.0 * std::f64::consts::PI * nu).ln() - 0.25 * (1.0 + z * z).ln() + corr.ln()
}

/// `I_{nu+1}(x) / I_nu(x)`.
pub fn bessel_ratio(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    (log_bessel_i(nu + 1.0, x) - log_bessel_i(nu, x)).exp()
}

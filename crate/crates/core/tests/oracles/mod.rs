//! Independent reference implementations used to check the library.
//! Shared with the acceptance target in the cli crate.
#![allow(dead_code)]

use mvgvae::trees::ParseTree;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// `ln I_nu(x)` for integer `nu` and integer `x`, summing the power series
/// `sum_k x^(2k+nu) / (2^(2k+nu) k! (k+nu)!)` exactly in big integers, scaled
/// by `10^digits` before the final division.
pub fn log_bessel_i_series(nu: u32, x: u32) -> f64 {
    let xb = BigUint::from(x);
    let two = BigUint::from(2u32);
    let digits = 80u32;
    let scale = BigUint::from(10u32).pow(digits);
    let mut sum = BigUint::zero();
    let mut k_fact = BigUint::one();
    let mut knu_fact: BigUint = (1..=nu).map(BigUint::from).product();
    let mut k = 0u32;
    loop {
        if k > 0 {
            k_fact *= BigUint::from(k);
            knu_fact *= BigUint::from(k + nu);
        }
        let term = xb.pow(2 * k + nu) * &scale / (two.pow(2 * k + nu) * &k_fact * &knu_fact);
        if term.is_zero() && k > x {
            break;
        }
        sum += term;
        k += 1;
    }
    big_ln(&sum) - digits as f64 * std::f64::consts::LN_10
}

fn big_ln(v: &BigUint) -> f64 {
    let bits = v.bits();
    let shift = bits.saturating_sub(60);
    let top = (v >> shift).to_f64().unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn ln_sphere_area(d: usize) -> f64 {
    // Surface area of the unit sphere in R^d.
    let h = 0.5 * d as f64;
    std::f64::consts::LN_2 + h * std::f64::consts::PI.ln() - statrs::function::gamma::ln_gamma(h)
}

/// KL(vMF(kappa) || uniform) on `S^(d-1)` by 1-D quadrature over the polar
/// cosine `t`, whose density is proportional to `e^(kappa t) (1-t^2)^((d-3)/2)`.
pub fn vmf_kl_quadrature(kappa: f64, d: usize) -> f64 {
    let p = 0.5 * (d as f64 - 3.0);
    let w = |t: f64| (kappa * (t - 1.0)).exp() * (1.0 - t * t).max(0.0).powf(p);
    let n = 400_000;
    let z = simpson(w, -1.0, 1.0, n);
    let m = simpson(|t| t * w(t), -1.0, 1.0, n) / z;
    // log density at x: kappa t - ln(e^kappa Z area(S^(d-2))), against -ln area(S^(d-1)).
    kappa * m - kappa - z.ln() - ln_sphere_area(d - 1) + ln_sphere_area(d)
}

/// Every ordered tree with `1..=max_nodes` nodes whose labels come from
/// `labels`. Childless nodes are leaves.
pub fn all_trees(max_nodes: usize, labels: &[&str]) -> Vec<ParseTree> {
    (1..=max_nodes).flat_map(|n| trees_of_size(n, labels)).collect()
}

fn trees_of_size(n: usize, labels: &[&str]) -> Vec<ParseTree> {
    let mut out = Vec::new();
    for forest in forests_of_size(n - 1, labels) {
        for l in labels {
            out.push(if forest.is_empty() {
                ParseTree::leaf(*l)
            } else {
                ParseTree::node(*l, forest.clone())
            });
        }
    }
    out
}

fn forests_of_size(n: usize, labels: &[&str]) -> Vec<Vec<ParseTree>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 1..=n {
        for t in trees_of_size(first, labels) {
            for rest in forests_of_size(n - first, labels) {
                let mut f = vec![t.clone()];
                f.extend(rest);
                out.push(f);
            }
        }
    }
    out
}

struct Flat {
    labels: Vec<String>,
    /// Preorder index range `[i, end[i])` covers the subtree of `i`.
    end: Vec<usize>,
}

fn flatten(t: &ParseTree) -> Flat {
    fn go(t: &ParseTree, f: &mut Flat) {
        let i = f.labels.len();
        f.labels.push(t.label().to_string());
        f.end.push(0);
        for c in t.children() {
            go(c, f);
        }
        f.end[i] = f.labels.len();
    }
    let mut f = Flat {
        labels: Vec::new(),
        end: Vec::new(),
    };
    go(t, &mut f);
    f
}

/// Tree edit distance by exhaustive search over all valid (Tai) mappings:
/// one-to-one node pairings that preserve ancestry and left-to-right order.
/// Cost is deletions + insertions + relabels of mapped pairs.
pub fn ted_brute_force(t1: &ParseTree, t2: &ParseTree) -> usize {
    let a = flatten(t1);
    let b = flatten(t2);
    let (n, m) = (a.labels.len(), b.labels.len());
    let mut best = n + m;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut used = vec![false; m];
    search(&a, &b, 0, &mut pairs, &mut used, &mut best);
    best
}

fn rel(f: &Flat, i: usize, j: usize) -> u8 {
    // 0: ancestor, 1: descendant, 2: left of, 3: right of.
    if i < j && j < f.end[i] {
        0
    } else if j < i && i < f.end[j] {
        1
    } else if i < j {
        2
    } else {
        3
    }
}

fn search(a: &Flat, b: &Flat, i: usize, pairs: &mut Vec<(usize, usize)>, used: &mut [bool], best: &mut usize) {
    if i == a.labels.len() {
        let relabel = pairs.iter().filter(|(x, y)| a.labels[*x] != b.labels[*y]).count();
        let cost = a.labels.len() + b.labels.len() - 2 * pairs.len() + relabel;
        *best = (*best).min(cost);
        return;
    }
    search(a, b, i + 1, pairs, used, best);
    for j in 0..b.labels.len() {
        if used[j] || pairs.iter().any(|&(x, y)| rel(a, x, i) != rel(b, y, j)) {
            continue;
        }
        used[j] = true;
        pairs.push((i, j));
        search(a, b, i + 1, pairs, used, best);
        pairs.pop();
        used[j] = false;
    }
}

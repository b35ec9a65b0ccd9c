//! ELBO, paraphrase reconstruction and word-position losses over a batch of
//! sentence pairs, with gradients.
//!
//! All latent samples are reparameterized from explicit noise, so a loss is
//! a deterministic function of `(params, batch, noise)`.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::latent::{householder_backward, householder_rotate, vmf_kl_uniform, GaussNoise, LatentConfig, VmfNoise};
use crate::network::{DecCache, ModelParams, SemCache, SynCache, WplCache};
use crate::subword::SubwordSeq;
use crate::{Error, Result};

/// One bitext pair: syntactic encoder inputs (possibly noised) and clean
/// sentences, which feed the semantic encoder and serve as targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInput {
    pub enc: [SubwordSeq; 2],
    pub clean: [SubwordSeq; 2],
}

impl PairInput {
    pub fn clean(x1: SubwordSeq, x2: SubwordSeq) -> Self {
        PairInput {
            enc: [x1.clone(), x2.clone()],
            clean: [x1, x2],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideNoise {
    pub y: VmfNoise,
    pub z: GaussNoise,
}

impl SideNoise {
    fn sample<R: Rng + ?Sized>(cfg: &LatentConfig, rng: &mut R) -> Self {
        SideNoise {
            y: VmfNoise::sample(cfg.kappa, cfg.d_sem, rng),
            z: GaussNoise::sample(cfg.d_syn, rng),
        }
    }

    fn mean(cfg: &LatentConfig) -> Self {
        let mut tangent = vec![0.0; cfg.d_sem - 1];
        tangent[0] = 1.0;
        SideNoise {
            y: VmfNoise { omega: 1.0, tangent },
            z: GaussNoise(vec![0.0; cfg.d_syn]),
        }
    }
}

/// Independent noise for every sampled latent of one pair: one draw per
/// term (ELBO, PRL, WPL) and side.
#[derive(Debug, Clone, PartialEq)]
pub struct PairNoise {
    pub elbo: [SideNoise; 2],
    pub prl: [SideNoise; 2],
    pub wpl: [GaussNoise; 2],
}

impl PairNoise {
    pub fn sample<R: Rng + ?Sized>(cfg: &LatentConfig, rng: &mut R) -> Self {
        PairNoise {
            elbo: [SideNoise::sample(cfg, rng), SideNoise::sample(cfg, rng)],
            prl: [SideNoise::sample(cfg, rng), SideNoise::sample(cfg, rng)],
            wpl: [GaussNoise::sample(cfg.d_syn, rng), GaussNoise::sample(cfg.d_syn, rng)],
        }
    }

    /// Noise that makes every sample equal its posterior mean.
    pub fn mean(cfg: &LatentConfig) -> Self {
        let z = GaussNoise(vec![0.0; cfg.d_syn]);
        PairNoise {
            elbo: [SideNoise::mean(cfg), SideNoise::mean(cfg)],
            prl: [SideNoise::mean(cfg), SideNoise::mean(cfg)],
            wpl: [z.clone(), z],
        }
    }

    pub fn sample_batch<R: Rng + ?Sized>(cfg: &LatentConfig, n: usize, rng: &mut R) -> Vec<Self> {
        (0..n).map(|_| Self::sample(cfg, rng)).collect()
    }
}

/// Which loss terms to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub elbo: [bool; 2],
    pub prl: bool,
    pub wpl: bool,
}

impl Terms {
    pub const ALL: Terms = Terms {
        elbo: [true, true],
        prl: true,
        wpl: true,
    };
    pub const NONE: Terms = Terms {
        elbo: [false, false],
        prl: false,
        wpl: false,
    };
}

/// Batch means of each term. KL values are unweighted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub elbo: [f64; 2],
    pub rec: [f64; 2],
    pub kl_z: [f64; 2],
    pub kl_y: f64,
    pub prl: f64,
    pub wpl: f64,
    pub total: f64,
}

struct Job {
    y_row: usize,
    z_row: usize,
    y_noise: (usize, usize, Which),
    z_noise: (usize, usize, Which),
}

#[derive(Clone, Copy)]
enum Which {
    Elbo,
    Prl,
}

fn side_noise(noise: &[PairNoise], b: usize, side: usize, which: Which) -> &SideNoise {
    match which {
        Which::Elbo => &noise[b].elbo[side],
        Which::Prl => &noise[b].prl[side],
    }
}

/// Forward results kept for the backward pass.
struct Tape {
    n: usize,
    terms: Terms,
    jobs: Vec<Job>,
    sem: Option<(Array2<f64>, SemCache)>,
    mu_z: Array2<f64>,
    sig_z: Array2<f64>,
    syn: SynCache,
    dec: Option<DecCache>,
    wpl: Option<WplCache>,
}

fn forward(
    model: &ModelParams,
    batch: &[PairInput],
    noise: &[PairNoise],
    terms: Terms,
) -> Result<(LossBreakdown, Tape)> {
    let cfg = &model.config.latent;
    let n = batch.len();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if noise.len() != n {
        return Err(Error::Shape(format!("{} noise records for {n} pairs", noise.len())));
    }
    let inv_n = 1.0 / n as f64;
    // Row s*n + b holds side s of pair b.
    let enc: Vec<&SubwordSeq> = (0..2).flat_map(|s| batch.iter().map(move |p| &p.enc[s])).collect();
    let clean: Vec<&SubwordSeq> = (0..2).flat_map(|s| batch.iter().map(move |p| &p.clean[s])).collect();
    let need_y = terms.elbo[0] || terms.elbo[1] || terms.prl;

    let sem = if need_y {
        let ids: Vec<&[u32]> = clean.iter().map(|s| s.ids.as_slice()).collect();
        Some(model.sem_forward(&ids)?)
    } else {
        None
    };
    let (mu_z, sig_z, syn_cache) = model.syn_forward(&enc)?;

    let mut jobs = Vec::new();
    let mut targets: Vec<&[u32]> = Vec::new();
    for s in 0..2 {
        if terms.elbo[s] {
            for b in 0..n {
                let r = s * n + b;
                jobs.push(Job {
                    y_row: r,
                    z_row: r,
                    y_noise: (b, s, Which::Elbo),
                    z_noise: (b, s, Which::Elbo),
                });
                targets.push(&clean[r].ids);
            }
        }
    }
    let prl_start = jobs.len();
    if terms.prl {
        for s in 0..2 {
            let o = 1 - s;
            for b in 0..n {
                jobs.push(Job {
                    y_row: o * n + b,
                    z_row: s * n + b,
                    y_noise: (b, o, Which::Prl),
                    z_noise: (b, s, Which::Prl),
                });
                targets.push(&clean[s * n + b].ids);
            }
        }
    }

    let mut out = LossBreakdown {
        kl_y: vmf_kl_uniform(cfg.kappa, cfg.d_sem),
        ..Default::default()
    };
    let kl_row = |r: usize| -> f64 {
        0.5 * mu_z
            .row(r)
            .iter()
            .zip(sig_z.row(r))
            .map(|(m, s)| s * s + m * m - 1.0 - 2.0 * s.ln())
            .sum::<f64>()
    };
    for s in 0..2 {
        out.kl_z[s] = (0..n).map(|b| kl_row(s * n + b)).sum::<f64>() * inv_n;
    }

    let mut dec = None;
    if !jobs.is_empty() {
        let mu_y = &sem.as_ref().expect("semantic encoding").0;
        let mut y = Array2::zeros((jobs.len(), cfg.d_sem));
        let mut z = Array2::zeros((jobs.len(), cfg.d_syn));
        for (j, job) in jobs.iter().enumerate() {
            let (b, s, w) = job.y_noise;
            let mu = mu_y.row(job.y_row).to_vec();
            let yv = householder_rotate(&mu, &side_noise(noise, b, s, w).y);
            y.row_mut(j).assign(&ndarray::ArrayView1::from(&yv));
            let (b, s, w) = job.z_noise;
            let eps = &side_noise(noise, b, s, w).z.0;
            for k in 0..cfg.d_syn {
                z[[j, k]] = mu_z[[job.z_row, k]] + sig_z[[job.z_row, k]] * eps[k];
            }
        }
        let (nll, cache) = model.dec_forward(&y, &z, &targets)?;
        let mut j = 0;
        for s in 0..2 {
            if terms.elbo[s] {
                out.rec[s] = nll[j..j + n].iter().sum::<f64>() * inv_n;
                out.elbo[s] = out.rec[s] + cfg.lambda_z * out.kl_z[s] + cfg.lambda_y * out.kl_y;
                j += n;
            }
        }
        if terms.prl {
            out.prl = nll[prl_start..].iter().sum::<f64>() * inv_n;
        }
        dec = Some(cache);
    }

    let mut wpl = None;
    if terms.wpl {
        let mut z = Array2::zeros((2 * n, cfg.d_syn));
        for s in 0..2 {
            for b in 0..n {
                let r = s * n + b;
                let eps = &noise[b].wpl[s].0;
                for k in 0..cfg.d_syn {
                    z[[r, k]] = mu_z[[r, k]] + sig_z[[r, k]] * eps[k];
                }
            }
        }
        let (loss, cache) = model.wpl_forward(&clean, &z)?;
        out.wpl = loss.iter().sum::<f64>() * inv_n;
        wpl = Some(cache);
    }

    out.total = (0..2).filter(|&s| terms.elbo[s]).map(|s| out.elbo[s]).sum::<f64>()
        + if terms.prl { out.prl } else { 0.0 }
        + if terms.wpl { out.wpl } else { 0.0 };
    if !out.total.is_finite() {
        return Err(Error::NonFinite(format!("training loss: {out:?}")));
    }

    let tape = Tape {
        n,
        terms,
        jobs,
        sem,
        mu_z,
        sig_z,
        syn: syn_cache,
        dec,
        wpl,
    };
    Ok((out, tape))
}

fn backward(gm: &mut ModelParams, tape: &Tape, noise: &[PairNoise]) {
    let cfg = gm.config.latent.clone();
    let Tape {
        n,
        terms,
        ref jobs,
        ref sem,
        ref mu_z,
        ref sig_z,
        ..
    } = *tape;
    let inv_n = 1.0 / n as f64;
    let mut dmu_y = Array2::zeros((2 * n, cfg.d_sem));
    let mut dmu_z = Array2::zeros((2 * n, cfg.d_syn));
    let mut dsig = Array2::zeros((2 * n, cfg.d_syn));
    if let Some(cache) = &tape.dec {
        let mu_y = &sem.as_ref().expect("semantic encoding").0;
        let (dy, dz) = gm.dec_backward(cache, &vec![inv_n; jobs.len()]);
        for (j, job) in jobs.iter().enumerate() {
            let (b, s, w) = job.y_noise;
            let mu = mu_y.row(job.y_row).to_vec();
            let g = householder_backward(&mu, &side_noise(noise, b, s, w).y, &dy.row(j).to_vec());
            for (k, v) in g.into_iter().enumerate() {
                dmu_y[[job.y_row, k]] += v;
            }
            let (b, s, w) = job.z_noise;
            let eps = &side_noise(noise, b, s, w).z.0;
            for k in 0..cfg.d_syn {
                dmu_z[[job.z_row, k]] += dz[[j, k]];
                dsig[[job.z_row, k]] += dz[[j, k]] * eps[k];
            }
        }
    }
    if let Some(cache) = &tape.wpl {
        let dz = gm.wpl_backward(cache, &vec![inv_n; 2 * n]);
        for s in 0..2 {
            for b in 0..n {
                let r = s * n + b;
                let eps = &noise[b].wpl[s].0;
                for k in 0..cfg.d_syn {
                    dmu_z[[r, k]] += dz[[r, k]];
                    dsig[[r, k]] += dz[[r, k]] * eps[k];
                }
            }
        }
    }
    for s in 0..2 {
        if terms.elbo[s] {
            let w = cfg.lambda_z * inv_n;
            for b in 0..n {
                let r = s * n + b;
                for k in 0..cfg.d_syn {
                    let (m, sg) = (mu_z[[r, k]], sig_z[[r, k]]);
                    dmu_z[[r, k]] += w * m;
                    dsig[[r, k]] += w * (sg - 1.0 / sg);
                }
            }
        }
    }
    if let Some((_, cache)) = &sem {
        gm.sem_backward(cache, &dmu_y);
    }
    gm.syn_backward(&tape.syn, &dmu_z, &dsig);
}

/// Evaluate the selected terms without touching gradients.
pub fn batch_loss(model: &ModelParams, batch: &[PairInput], noise: &[PairNoise], terms: Terms) -> Result<LossBreakdown> {
    Ok(forward(model, batch, noise, terms)?.0)
}

/// Evaluate the selected terms and accumulate their gradient (of
/// `LossBreakdown::total`) into the parameter gradient slots.
pub fn batch_loss_grad(
    model: &mut ModelParams,
    batch: &[PairInput],
    noise: &[PairNoise],
    terms: Terms,
) -> Result<LossBreakdown> {
    let (out, tape) = forward(model, batch, noise, terms)?;
    backward(model, &tape, noise);
    Ok(out)
}

/// Mean ELBO loss of side `side` of each pair.
pub fn elbo_loss(model: &ModelParams, batch: &[PairInput], noise: &[PairNoise], side: usize) -> Result<f64> {
    let mut t = Terms::NONE;
    t.elbo[side] = true;
    Ok(batch_loss(model, batch, noise, t)?.elbo[side])
}

pub fn prl_loss(model: &ModelParams, batch: &[PairInput], noise: &[PairNoise]) -> Result<f64> {
    let t = Terms {
        prl: true,
        ..Terms::NONE
    };
    Ok(batch_loss(model, batch, noise, t)?.prl)
}

pub fn wpl_loss(model: &ModelParams, batch: &[PairInput], noise: &[PairNoise]) -> Result<f64> {
    let t = Terms {
        wpl: true,
        ..Terms::NONE
    };
    Ok(batch_loss(model, batch, noise, t)?.wpl)
}

pub fn total_loss(model: &ModelParams, batch: &[PairInput], noise: &[PairNoise]) -> Result<LossBreakdown> {
    batch_loss(model, batch, noise, Terms::ALL)
}

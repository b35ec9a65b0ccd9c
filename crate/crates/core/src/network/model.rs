//! The model: shared semantic encoder, per-language syntactic encoders,
//! a shared decoder and the word-position classifier.
//!
//! Each component has a batched forward returning a cache and a backward
//! that accumulates into the parameter gradients.

use std::collections::BTreeMap;

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::layers::{log_softmax_rows, Ffn, FfnCache, Lstm, LstmTrace, Linear};
use super::param::{join, Param, Parameterized};
use crate::latent::{GaussPosterior, LatentConfig, VmfPosterior};
use crate::rng::substream;
use crate::subword::{SubwordSeq, BOS, EOS, PAD};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Filled from the subword model when left at 0.
    pub vocab_size: usize,
    /// Filled from the subword model when empty. Order fixes tag IDs.
    pub languages: Vec<String>,
    pub emb_dim: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub init_scale: f64,
    pub latent: LatentConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            languages: Vec::new(),
            emb_dim: 100,
            hidden: 512,
            max_len: 64,
            init_scale: 0.1,
            latent: LatentConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn num_special(&self) -> usize {
        4 + self.languages.len()
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < self.num_special()
    }

    pub fn tag_id(&self, lang: &str) -> Result<u32> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .map(|i| 4 + i as u32)
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.latent.validate()?;
        if self.languages.is_empty() {
            return Err(Error::Config("model needs at least one language".into()));
        }
        let mut sorted = self.languages.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.languages.len() {
            return Err(Error::Config("duplicate language codes".into()));
        }
        if self.vocab_size <= self.num_special() {
            return Err(Error::Config(format!(
                "vocab_size {} leaves no room for content symbols",
                self.vocab_size
            )));
        }
        if self.emb_dim == 0 || self.hidden == 0 || self.max_len == 0 {
            return Err(Error::Config("emb_dim, hidden and max_len must be positive".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Bidirectional recurrent encoder plus its output head for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct SynEncoder {
    pub fwd: Lstm,
    pub bwd: Lstm,
    pub ffn: Ffn,
}

impl Parameterized for SynEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.fwd.visit(&join(prefix, "fwd"), f);
        self.bwd.visit(&join(prefix, "bwd"), f);
        self.ffn.visit(&join(prefix, "ffn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.fwd.visit_mut(&join(prefix, "fwd"), f);
        self.bwd.visit_mut(&join(prefix, "bwd"), f);
        self.ffn.visit_mut(&join(prefix, "ffn"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub sem_embed: Param,
    pub syn_embed: Param,
    pub dec_embed: Param,
    pub sem_ffn: Ffn,
    pub syn: BTreeMap<String, SynEncoder>,
    pub dec_init: Linear,
    pub dec_rnn: Lstm,
    /// Gate weights for `[y; z]`, added to the decoder input at every step.
    pub dec_cond: Param,
    pub out_proj: Linear,
    pub wpl_ffn: Ffn,
}

impl Parameterized for ModelParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "sem_embed"), &self.sem_embed);
        f(&join(prefix, "syn_embed"), &self.syn_embed);
        f(&join(prefix, "dec_embed"), &self.dec_embed);
        self.sem_ffn.visit(&join(prefix, "sem_ffn"), f);
        for (lang, enc) in &self.syn {
            enc.visit(&join(prefix, &format!("syn.{lang}")), f);
        }
        self.dec_init.visit(&join(prefix, "dec_init"), f);
        self.dec_rnn.visit(&join(prefix, "dec_rnn"), f);
        f(&join(prefix, "dec_rnn.w_yz"), &self.dec_cond);
        self.out_proj.visit(&join(prefix, "out_proj"), f);
        self.wpl_ffn.visit(&join(prefix, "wpl_ffn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "sem_embed"), &mut self.sem_embed);
        f(&join(prefix, "syn_embed"), &mut self.syn_embed);
        f(&join(prefix, "dec_embed"), &mut self.dec_embed);
        self.sem_ffn.visit_mut(&join(prefix, "sem_ffn"), f);
        for (lang, enc) in &mut self.syn {
            enc.visit_mut(&join(prefix, &format!("syn.{lang}")), f);
        }
        self.dec_init.visit_mut(&join(prefix, "dec_init"), f);
        self.dec_rnn.visit_mut(&join(prefix, "dec_rnn"), f);
        f(&join(prefix, "dec_rnn.w_yz"), &mut self.dec_cond);
        self.out_proj.visit_mut(&join(prefix, "out_proj"), f);
        self.wpl_ffn.visit_mut(&join(prefix, "wpl_ffn"), f);
    }
}

#[derive(Debug, Clone)]
pub struct SemCache {
    content: Vec<Vec<u32>>,
    ffn: FfnCache,
    norms: Vec<f64>,
    mu: Array2<f64>,
}

#[derive(Debug, Clone)]
struct SynGroup {
    lang: String,
    rows: Vec<usize>,
    ids_fwd: Vec<u32>,
    ids_bwd: Vec<u32>,
    fwd: LstmTrace,
    bwd: LstmTrace,
    ffn: FfnCache,
    sigma: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct SynCache {
    batch: usize,
    groups: Vec<SynGroup>,
}

#[derive(Debug, Clone)]
pub struct DecCache {
    batch: usize,
    inputs: Vec<u32>,
    targets: Vec<u32>,
    latent: Array2<f64>,
    trace: LstmTrace,
    logp: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct WplCache {
    batch: usize,
    seq_of_row: Vec<usize>,
    ids: Vec<u32>,
    targets: Vec<usize>,
    counts: Vec<usize>,
    ffn: FfnCache,
    logp: Array2<f64>,
}

/// Decoder recurrent state for incremental generation.
#[derive(Debug, Clone)]
pub struct DecState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
    /// Constant gate contribution of the latent pair.
    pub cond: Array2<f64>,
}

fn gather(table: &Array2<f64>, ids: &[u32]) -> Array2<f64> {
    let mut out = Array2::zeros((ids.len(), table.ncols()));
    for (r, &id) in ids.iter().enumerate() {
        out.row_mut(r).assign(&table.row(id as usize));
    }
    out
}

/// Accumulate row gradients into an embedding table; padding is skipped.
fn scatter(grad: &mut Array2<f64>, ids: &[u32], d: &Array2<f64>) {
    for (r, &id) in ids.iter().enumerate() {
        if id != PAD {
            let mut row = grad.row_mut(id as usize);
            row += &d.row(r);
        }
    }
}

fn check_rows(what: &str, m: &Array2<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.dim() != (rows, cols) {
        return Err(Error::Shape(format!(
            "{what}: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn row_matrix(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape")
}

impl ModelParams {
    /// Fresh parameters, initialized uniformly from a seed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(seed, "init", 0);
        let (v, e, h) = (config.vocab_size, config.emb_dim, config.hidden);
        let (dy, dz) = (config.latent.d_sem, config.latent.d_syn);
        let sc = config.init_scale;
        let sem_embed = Param::uniform(v, e, sc, &mut rng);
        let syn_embed = Param::uniform(v, e, sc, &mut rng);
        let dec_embed = Param::uniform(v, e, sc, &mut rng);
        let sem_ffn = Ffn::new(&[e, h, dy], sc, &mut rng);
        let mut syn = BTreeMap::new();
        for lang in &config.languages {
            let enc = SynEncoder {
                fwd: Lstm::new(e, h, sc, &mut rng),
                bwd: Lstm::new(e, h, sc, &mut rng),
                ffn: Ffn::new(&[2 * h, h, 2 * dz], sc, &mut rng),
            };
            syn.insert(lang.clone(), enc);
        }
        let dec_init = Linear::new(dy + dz, h, sc, &mut rng);
        let dec_rnn = Lstm::new(e, h, sc, &mut rng);
        let dec_cond = Param::uniform(dy + dz, 4 * h, sc, &mut rng);
        let out_proj = Linear::new(h, v, sc, &mut rng);
        let wpl_ffn = Ffn::new(&[e + dz, h, h, config.max_len], sc, &mut rng);
        Ok(ModelParams {
            config,
            sem_embed,
            syn_embed,
            dec_embed,
            sem_ffn,
            syn,
            dec_init,
            dec_rnn,
            dec_cond,
            out_proj,
            wpl_ffn,
        })
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            Some(&id) => Err(Error::UnknownId(id)),
            None => Ok(()),
        }
    }

    // ---- semantic encoder ----

    /// Mean directions (`batch x d_sem`) from averaged content embeddings.
    pub fn sem_forward(&self, seqs: &[&[u32]]) -> Result<(Array2<f64>, SemCache)> {
        let e = self.config.emb_dim;
        let mut avg = Array2::zeros((seqs.len(), e));
        let mut content = Vec::with_capacity(seqs.len());
        for (b, ids) in seqs.iter().enumerate() {
            self.check_ids(ids)?;
            let c: Vec<u32> = ids.iter().copied().filter(|&id| !self.config.is_special(id)).collect();
            if c.is_empty() {
                return Err(Error::invalid("semantic encoder input has no content tokens"));
            }
            let mut row = avg.row_mut(b);
            for &id in &c {
                row += &self.sem_embed.value.row(id as usize);
            }
            row /= c.len() as f64;
            content.push(c);
        }
        let (raw, ffn) = self.sem_ffn.forward(&avg);
        let mut mu = raw;
        let mut norms = Vec::with_capacity(seqs.len());
        for mut row in mu.rows_mut() {
            let n = row.dot(&row).sqrt();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::NonFinite("semantic mean direction".into()));
            }
            row /= n;
            norms.push(n);
        }
        Ok((mu.clone(), SemCache { content, ffn, norms, mu }))
    }

    pub fn sem_backward(&mut self, cache: &SemCache, dmu: &Array2<f64>) {
        let mut draw = dmu.clone();
        for (b, mut row) in draw.rows_mut().into_iter().enumerate() {
            let m = cache.mu.row(b);
            let proj = m.dot(&row);
            row.scaled_add(-proj, &m);
            row /= cache.norms[b];
        }
        let davg = self.sem_ffn.backward(&cache.ffn, &draw);
        for (b, c) in cache.content.iter().enumerate() {
            let g = &davg.row(b) / c.len() as f64;
            for &id in c {
                let mut row = self.sem_embed.grad.row_mut(id as usize);
                row += &g;
            }
        }
    }

    pub fn sem_encode(&self, seq: &SubwordSeq) -> Result<VmfPosterior> {
        let (mu, _) = self.sem_forward(&[&seq.ids])?;
        Ok(VmfPosterior {
            mu: mu.row(0).to_vec(),
            kappa: self.config.latent.kappa,
        })
    }

    // ---- syntactic encoders ----

    /// Gaussian posteriors `(mu, sigma)`, each `batch x d_syn`, using each
    /// sequence's own language encoder.
    pub fn syn_forward(&self, seqs: &[&SubwordSeq]) -> Result<(Array2<f64>, Array2<f64>, SynCache)> {
        let dz = self.config.latent.d_syn;
        let h = self.config.hidden;
        let mut by_lang: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (b, s) in seqs.iter().enumerate() {
            if !self.syn.contains_key(&s.lang) {
                return Err(Error::UnknownLanguage(s.lang.clone()));
            }
            if s.ids.is_empty() {
                return Err(Error::invalid("empty sequence"));
            }
            self.check_ids(&s.ids)?;
            by_lang.entry(&s.lang).or_default().push(b);
        }
        let mut mu = Array2::zeros((seqs.len(), dz));
        let mut sigma = Array2::zeros((seqs.len(), dz));
        let mut groups = Vec::new();
        for (lang, rows) in by_lang {
            let enc = &self.syn[lang];
            let bg = rows.len();
            let steps = rows.iter().map(|&b| seqs[b].ids.len()).max().unwrap_or(0);
            let mut ids_fwd = vec![PAD; steps * bg];
            let mut ids_bwd = vec![PAD; steps * bg];
            let mut masks = vec![vec![0.0; bg]; steps];
            for (j, &b) in rows.iter().enumerate() {
                let ids = &seqs[b].ids;
                let n = ids.len();
                for t in 0..n {
                    ids_fwd[t * bg + j] = ids[t];
                    ids_bwd[t * bg + j] = ids[n - 1 - t];
                    masks[t][j] = 1.0;
                }
            }
            let zeros = Array2::zeros((bg, h));
            let fwd = enc.fwd.forward(
                gather(&self.syn_embed.value, &ids_fwd),
                bg,
                zeros.clone(),
                zeros.clone(),
                None,
                Some(masks.clone()),
            );
            let bwd = enc.bwd.forward(
                gather(&self.syn_embed.value, &ids_bwd),
                bg,
                zeros.clone(),
                zeros,
                None,
                Some(masks),
            );
            let state = concatenate![Axis(1), fwd.h_last, bwd.h_last];
            let (out, ffn) = enc.ffn.forward(&state);
            let sig = out.slice(s![.., dz..]).mapv(f64::exp);
            for (j, &b) in rows.iter().enumerate() {
                mu.row_mut(b).assign(&out.slice(s![j, ..dz]));
                sigma.row_mut(b).assign(&sig.row(j));
            }
            groups.push(SynGroup {
                lang: lang.to_string(),
                rows,
                ids_fwd,
                ids_bwd,
                fwd,
                bwd,
                ffn,
                sigma: sig,
            });
        }
        Ok((mu, sigma, SynCache { batch: seqs.len(), groups }))
    }

    pub fn syn_backward(&mut self, cache: &SynCache, dmu: &Array2<f64>, dsigma: &Array2<f64>) {
        let dz = self.config.latent.d_syn;
        let h = self.config.hidden;
        debug_assert_eq!(dmu.nrows(), cache.batch);
        for g in &cache.groups {
            let bg = g.rows.len();
            let mut dout = Array2::zeros((bg, 2 * dz));
            for (j, &b) in g.rows.iter().enumerate() {
                dout.slice_mut(s![j, ..dz]).assign(&dmu.row(b));
                let dls = &dsigma.row(b) * &g.sigma.row(j);
                dout.slice_mut(s![j, dz..]).assign(&dls);
            }
            let enc = self.syn.get_mut(&g.lang).expect("language present");
            let dstate = enc.ffn.backward(&g.ffn, &dout);
            let dh_f = dstate.slice(s![.., ..h]).to_owned();
            let dh_b = dstate.slice(s![.., h..]).to_owned();
            let gf = enc.fwd.backward(&g.fwd, None, Some(&dh_f), None);
            let gb = enc.bwd.backward(&g.bwd, None, Some(&dh_b), None);
            scatter(&mut self.syn_embed.grad, &g.ids_fwd, &gf.dx_all);
            scatter(&mut self.syn_embed.grad, &g.ids_bwd, &gb.dx_all);
        }
    }

    pub fn syn_encode(&self, seq: &SubwordSeq) -> Result<GaussPosterior> {
        let (mu, sigma, _) = self.syn_forward(&[seq])?;
        Ok(GaussPosterior {
            mu: mu.row(0).to_vec(),
            sigma: sigma.row(0).to_vec(),
        })
    }

    // ---- decoder ----

    fn latent_rows(&self, y: &Array2<f64>, z: &Array2<f64>) -> Result<Array2<f64>> {
        let b = y.nrows();
        check_rows("y", y, b, self.config.latent.d_sem)?;
        check_rows("z", z, b, self.config.latent.d_syn)?;
        Ok(concatenate![Axis(1), *y, *z])
    }

    /// Teacher-forced negative log-likelihood of each target sequence
    /// (`[tag, subwords...]`, EOS appended here) given its latent pair.
    pub fn dec_forward(
        &self,
        y: &Array2<f64>,
        z: &Array2<f64>,
        targets: &[&[u32]],
    ) -> Result<(Vec<f64>, DecCache)> {
        let latent = self.latent_rows(y, z)?;
        let batch = targets.len();
        if latent.nrows() != batch {
            return Err(Error::Shape(format!(
                "{} latent rows for {batch} targets",
                latent.nrows()
            )));
        }
        let steps = targets.iter().map(|t| t.len() + 1).max().unwrap_or(0);
        let mut inputs = vec![PAD; steps * batch];
        let mut outs = vec![PAD; steps * batch];
        for (b, tgt) in targets.iter().enumerate() {
            self.check_ids(tgt)?;
            inputs[b] = BOS;
            for (t, &id) in tgt.iter().enumerate() {
                inputs[(t + 1) * batch + b] = id;
                outs[t * batch + b] = id;
            }
            outs[tgt.len() * batch + b] = EOS;
        }
        let cond = latent.dot(&self.dec_cond.value);
        let h0 = self.dec_init.forward(&latent);
        let c0 = Array2::zeros(h0.dim());
        let trace = self.dec_rnn.forward(
            gather(&self.dec_embed.value, &inputs),
            batch,
            h0,
            c0,
            Some(&cond),
            None,
        );
        let logp = log_softmax_rows(&self.out_proj.forward(&trace.outputs));
        let mut nll = vec![0.0; batch];
        for (r, &tgt) in outs.iter().enumerate() {
            if tgt != PAD {
                nll[r % batch] -= logp[[r, tgt as usize]];
            }
        }
        Ok((
            nll,
            DecCache {
                batch,
                inputs,
                targets: outs,
                latent,
                trace,
                logp,
            },
        ))
    }

    /// Backward of `sum_b weights[b] * nll[b]`; returns `(dy, dz)`.
    pub fn dec_backward(&mut self, cache: &DecCache, weights: &[f64]) -> (Array2<f64>, Array2<f64>) {
        let batch = cache.batch;
        let mut dlogits = cache.logp.mapv(f64::exp);
        for (r, &tgt) in cache.targets.iter().enumerate() {
            let mut row = dlogits.row_mut(r);
            if tgt == PAD {
                row.fill(0.0);
            } else {
                row[tgt as usize] -= 1.0;
                row *= weights[r % batch];
            }
        }
        let dhs = self.out_proj.backward(&cache.trace.outputs, &dlogits);
        let g = self.dec_rnn.backward(&cache.trace, Some(&dhs), None, None);
        scatter(&mut self.dec_embed.grad, &cache.inputs, &g.dx_all);
        ndarray::linalg::general_mat_mul(1.0, &cache.latent.t(), &g.dextra, 1.0, &mut self.dec_cond.grad);
        let mut dlat = g.dextra.dot(&self.dec_cond.value.t());
        dlat += &self.dec_init.backward(&cache.latent, &g.dh0);
        let dy = self.config.latent.d_sem;
        (
            dlat.slice(s![.., ..dy]).to_owned(),
            dlat.slice(s![.., dy..]).to_owned(),
        )
    }

    /// Initial decoder state for a batch of latent pairs.
    pub fn dec_start(&self, y: &Array2<f64>, z: &Array2<f64>) -> Result<DecState> {
        let latent = self.latent_rows(y, z)?;
        let h = self.dec_init.forward(&latent);
        Ok(DecState {
            c: Array2::zeros(h.dim()),
            h,
            cond: latent.dot(&self.dec_cond.value),
        })
    }

    /// Feed one token per row; returns next-token log-probabilities.
    pub fn dec_step(&self, state: &DecState, tokens: &[u32]) -> Result<(Array2<f64>, DecState)> {
        self.check_ids(tokens)?;
        if tokens.len() != state.h.nrows() {
            return Err(Error::Shape(format!(
                "{} tokens for {} decoder rows",
                tokens.len(),
                state.h.nrows()
            )));
        }
        let x = gather(&self.dec_embed.value, tokens);
        let (h, c) = self.dec_rnn.step(&x, &state.h, &state.c, Some(&state.cond));
        let logp = log_softmax_rows(&self.out_proj.forward(&h));
        Ok((
            logp,
            DecState {
                h,
                c,
                cond: state.cond.clone(),
            },
        ))
    }

    /// Teacher-forced logits for a decoder input sequence, which must start
    /// with BOS followed by the target-language tag. Row `t` predicts the
    /// token after `prefix[t]`.
    pub fn decode_logits(&self, y: &[f64], z: &[f64], prefix: &[u32]) -> Result<Array2<f64>> {
        if prefix.len() < 2 || prefix[0] != BOS || !(4..self.config.num_special() as u32).contains(&prefix[1]) {
            return Err(Error::invalid("decoder prefix must start with BOS and a language tag"));
        }
        self.check_ids(prefix)?;
        let latent = self.latent_rows(&row_matrix(y), &row_matrix(z))?;
        let trace = self.dec_rnn.forward(
            gather(&self.dec_embed.value, prefix),
            1,
            self.dec_init.forward(&latent),
            Array2::zeros((1, self.config.hidden)),
            Some(&latent.dot(&self.dec_cond.value)),
            None,
        );
        Ok(self.out_proj.forward(&trace.outputs))
    }

    // ---- word-position classifier ----

    fn wpl_inputs(&self, ids: &[u32], seq_of_row: &[usize], z: &Array2<f64>) -> Array2<f64> {
        let emb = gather(&self.syn_embed.value, ids);
        let mut zr = Array2::zeros((ids.len(), z.ncols()));
        for (r, &b) in seq_of_row.iter().enumerate() {
            zr.row_mut(r).assign(&z.row(b));
        }
        concatenate![Axis(1), emb, zr]
    }

    /// Mean position negative log-likelihood per sequence over its subword
    /// positions (language tags carry no word index and are skipped).
    pub fn wpl_forward(&self, seqs: &[&SubwordSeq], z: &Array2<f64>) -> Result<(Vec<f64>, WplCache)> {
        check_rows("z", z, seqs.len(), self.config.latent.d_syn)?;
        let mut seq_of_row = Vec::new();
        let mut ids = Vec::new();
        let mut targets = Vec::new();
        let mut counts = vec![0; seqs.len()];
        for (b, s) in seqs.iter().enumerate() {
            self.check_ids(&s.ids)?;
            for (&id, w) in s.ids.iter().zip(&s.word_boundary) {
                if let Some(w) = *w {
                    if w >= self.config.max_len {
                        return Err(Error::invalid(format!(
                            "word index {w} exceeds max_len {}",
                            self.config.max_len
                        )));
                    }
                    seq_of_row.push(b);
                    ids.push(id);
                    targets.push(w);
                    counts[b] += 1;
                }
            }
        }
        let input = self.wpl_inputs(&ids, &seq_of_row, z);
        let (logits, ffn) = self.wpl_ffn.forward(&input);
        let logp = log_softmax_rows(&logits);
        let mut loss = vec![0.0; seqs.len()];
        for (r, (&b, &w)) in seq_of_row.iter().zip(&targets).enumerate() {
            loss[b] -= logp[[r, w]] / counts[b] as f64;
        }
        Ok((
            loss,
            WplCache {
                batch: seqs.len(),
                seq_of_row,
                ids,
                targets,
                counts,
                ffn,
                logp,
            },
        ))
    }

    /// Backward of `sum_b weights[b] * loss[b]`; returns `dz`.
    pub fn wpl_backward(&mut self, cache: &WplCache, weights: &[f64]) -> Array2<f64> {
        let e = self.config.emb_dim;
        let mut dlogits = cache.logp.mapv(f64::exp);
        for (r, (&b, &w)) in cache.seq_of_row.iter().zip(&cache.targets).enumerate() {
            let mut row = dlogits.row_mut(r);
            row[w] -= 1.0;
            row *= weights[b] / cache.counts[b] as f64;
        }
        let dinput = self.wpl_ffn.backward(&cache.ffn, &dlogits);
        scatter(&mut self.syn_embed.grad, &cache.ids, &dinput.slice(s![.., ..e]).to_owned());
        let mut dz = Array2::zeros((cache.batch, self.config.latent.d_syn));
        for (r, &b) in cache.seq_of_row.iter().enumerate() {
            let mut row = dz.row_mut(b);
            row += &dinput.slice(s![r, e..]);
        }
        dz
    }

    /// Position logits for every subword position of `seq`.
    pub fn wpl_logits(&self, seq: &SubwordSeq, z: &[f64]) -> Result<Array2<f64>> {
        if seq.ids.len() > self.config.max_len {
            return Err(Error::invalid(format!(
                "sequence of {} positions exceeds max_len {}",
                seq.ids.len(),
                self.config.max_len
            )));
        }
        self.check_ids(&seq.ids)?;
        let z = row_matrix(z);
        check_rows("z", &z, 1, self.config.latent.d_syn)?;
        let rows = vec![0; seq.ids.len()];
        Ok(self.wpl_ffn.forward(&self.wpl_inputs(&seq.ids, &rows, &z)).0)
    }
}

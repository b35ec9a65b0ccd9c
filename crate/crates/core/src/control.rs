//! Exemplar-controlled generation by latent swapping, and nearest-neighbor
//! retrieval over the two latent variables.

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::EvalTriple;
use crate::metrics::cosine;
use crate::network::ModelParams;
use crate::subword::{BpeModel, SubwordSeq, BOS, EOS};
use crate::{Error, Result};

pub const DEFAULT_BEAM: usize = 10;
pub const DEFAULT_MAX_OUTPUT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub sem_input: Vec<String>,
    pub sem_lang: String,
    pub syn_exemplar: Vec<String>,
    pub syn_lang: String,
    pub tgt_lang: String,
    pub beam: usize,
    /// Limit on generated subwords, end marker included.
    pub max_len: usize,
}

impl GenerationRequest {
    pub fn from_triple(t: &EvalTriple, beam: usize, max_len: usize) -> Self {
        GenerationRequest {
            sem_input: t.sem.clone(),
            sem_lang: t.sem_lang.clone(),
            syn_exemplar: t.syn.clone(),
            syn_lang: t.tgt_lang.clone(),
            tgt_lang: t.tgt_lang.clone(),
            beam,
            max_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.syn_lang != self.tgt_lang {
            return Err(Error::invalid(format!(
                "exemplar language {} differs from target language {}",
                self.syn_lang, self.tgt_lang
            )));
        }
        if self.beam < 1 {
            return Err(Error::invalid("beam width must be >= 1"));
        }
        if self.max_len < 1 {
            return Err(Error::invalid("max output length must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPair {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub words: Vec<String>,
    pub ids: Vec<u32>,
    /// Length-normalized log-probability.
    pub score: f64,
    /// No hypothesis reached the end marker within the length limit.
    pub truncated: bool,
}

/// Posterior means: `y` of the semantic input, `z` of the exemplar.
pub fn encode_latents(model: &ModelParams, bpe: &BpeModel, req: &GenerationRequest) -> Result<LatentPair> {
    req.validate()?;
    let sem = bpe.encode(&req.sem_input, &req.sem_lang)?;
    let syn = bpe.encode(&req.syn_exemplar, &req.syn_lang)?;
    Ok(LatentPair {
        y: model.sem_encode(&sem)?.mu,
        z: model.syn_encode(&syn)?.mu,
    })
}

struct Hyp {
    tokens: Vec<u32>,
    logp: f64,
}

/// Beam search from `(y, z)` with the language tag forced as the first
/// token. Hypotheses are pruned by cumulative log-probability and ranked at
/// the end by log-probability per generated token. Returns generated ids
/// (tag excluded, end marker dropped).
pub fn beam_search(
    model: &ModelParams,
    latent: &LatentPair,
    tag: u32,
    beam: usize,
    max_len: usize,
) -> Result<(Vec<u32>, f64, bool)> {
    let num_special = model.config.num_special() as u32;
    if !(4..num_special).contains(&tag) {
        return Err(Error::invalid(format!("{tag} is not a language tag")));
    }
    let row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape");
    let start = model.dec_start(&row(&latent.y), &row(&latent.z))?;
    let (_, state) = model.dec_step(&start, &[BOS])?;
    let mut state = state;
    let mut live = vec![Hyp {
        tokens: vec![],
        logp: 0.0,
    }];
    let mut last: Vec<u32> = vec![tag];
    let mut finished: Vec<(Vec<u32>, f64)> = Vec::new();
    let vocab = model.config.vocab_size;
    for step in 0..max_len {
        let (logp, next) = model.dec_step(&state, &last)?;
        let mut cands: Vec<(f64, usize, u32)> = Vec::with_capacity(live.len() * vocab);
        for (k, h) in live.iter().enumerate() {
            let r = logp.row(k);
            cands.push((h.logp + r[EOS as usize], k, EOS));
            for v in num_special..vocab as u32 {
                cands.push((h.logp + r[v as usize], k, v));
            }
        }
        let keep = beam.min(cands.len());
        if keep < cands.len() {
            cands.select_nth_unstable_by(keep - 1, |a, b| {
                b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
            });
            cands.truncate(keep);
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut new_live = Vec::new();
        let mut rows = Vec::new();
        let mut tokens = Vec::new();
        for (score, k, v) in cands {
            let len = step + 1;
            if v == EOS {
                finished.push((live[k].tokens.clone(), score / len as f64));
            } else {
                let mut t = live[k].tokens.clone();
                t.push(v);
                new_live.push(Hyp { tokens: t, logp: score });
                rows.push(k);
                tokens.push(v);
            }
        }
        if finished.len() >= beam || new_live.is_empty() {
            live.clear();
            break;
        }
        state = ndarray_select(&next, &rows);
        live = new_live;
        last = tokens;
    }
    let best_finished = finished
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a });
    if let Some((ids, score)) = best_finished {
        return Ok((ids, score, false));
    }
    let best = live
        .into_iter()
        .reduce(|a, b| {
            let (sa, sb) = (a.logp / a.tokens.len() as f64, b.logp / b.tokens.len() as f64);
            if sb > sa {
                b
            } else {
                a
            }
        })
        .expect("at least one live hypothesis");
    let score = best.logp / best.tokens.len() as f64;
    Ok((best.tokens, score, true))
}

fn ndarray_select(state: &crate::network::DecState, rows: &[usize]) -> crate::network::DecState {
    use ndarray::Axis;
    crate::network::DecState {
        h: state.h.select(Axis(0), rows),
        c: state.c.select(Axis(0), rows),
        cond: state.cond.select(Axis(0), rows),
    }
}

pub fn controlled_generate(model: &ModelParams, bpe: &BpeModel, req: &GenerationRequest) -> Result<Generation> {
    let latent = encode_latents(model, bpe, req)?;
    let tag = bpe.tag_id(&req.tgt_lang)?;
    let (ids, score, truncated) = beam_search(model, &latent, tag, req.beam, req.max_len)?;
    if truncated {
        warn!("generation hit the length limit of {} without an end marker", req.max_len);
    }
    Ok(Generation {
        words: bpe.decode(&ids)?,
        ids,
        score,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Semantic,
    Syntactic,
}

impl std::str::FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semantic" | "sem" | "y" => Ok(Variable::Semantic),
            "syntactic" | "syn" | "z" => Ok(Variable::Syntactic),
            _ => Err(Error::invalid(format!("unknown variable `{s}`"))),
        }
    }
}

/// `y` (semantic) or the `z` mean (syntactic) for each sentence.
pub fn represent(model: &ModelParams, seqs: &[SubwordSeq], var: Variable) -> Result<Vec<Vec<f64>>> {
    const CHUNK: usize = 256;
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(CHUNK) {
        let m = match var {
            Variable::Semantic => {
                let ids: Vec<&[u32]> = chunk.iter().map(|s| s.ids.as_slice()).collect();
                model.sem_forward(&ids)?.0
            }
            Variable::Syntactic => {
                let refs: Vec<&SubwordSeq> = chunk.iter().collect();
                model.syn_forward(&refs)?.0
            }
        };
        out.extend(m.rows().into_iter().map(|r| r.to_vec()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub score: f64,
}

/// Rank pool vectors by cosine similarity to `query`; ties go to the lower
/// index. Returns at most `k` entries.
pub fn rank_by_cosine(query: &[f64], pool: &[Vec<f64>], k: usize) -> Vec<Neighbor> {
    let mut scored: Vec<Neighbor> = pool
        .iter()
        .enumerate()
        .map(|(index, v)| {
            // -0.0 must tie with 0.0 under total_cmp.
            let s = cosine(query, v);
            Neighbor {
                index,
                score: if s == 0.0 { 0.0 } else { s },
            }
        })
        .collect();
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    scored.truncate(k);
    scored
}

pub fn nearest_neighbors(
    model: &ModelParams,
    query: &SubwordSeq,
    pool: &[SubwordSeq],
    var: Variable,
    k: usize,
) -> Result<Vec<Neighbor>> {
    if pool.is_empty() {
        return Err(Error::invalid("empty candidate pool"));
    }
    let q = represent(model, std::slice::from_ref(query), var)?.remove(0);
    let p = represent(model, pool, var)?;
    Ok(rank_by_cosine(&q, &p, k))
}

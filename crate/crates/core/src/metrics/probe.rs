//! Disentanglement probes: semantic similarity correlation and
//! nearest-neighbor retrieval of syntactic and semantic structure.

use std::collections::BTreeMap;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stats::{cosine, pearson};
use crate::control::{rank_by_cosine, represent, Variable};
use crate::corpus::{ParseEntry, ProbeSet};
use crate::network::ModelParams;
use crate::rng::substream;
use crate::subword::{BpeModel, SubwordSeq};
use crate::trees::{labeled_f1, pos_accuracy};
use crate::Result;

/// Number of seeded draws averaged for the Random baseline.
pub const RANDOM_RUNS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Higher is better for the semantic variable; delta = sem - syn.
    Semantic,
    /// Higher is better for the syntactic variable; delta = syn - sem.
    Syntactic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: String,
    pub orientation: Orientation,
    pub sem: f64,
    pub syn: f64,
    pub delta: f64,
    pub oracle: Option<f64>,
    pub random: Option<f64>,
    pub bag_of_vectors: Option<f64>,
    /// Number of scored items (queries or pairs).
    pub n: usize,
}

impl ProbeReport {
    pub fn new(probe: &str, orientation: Orientation, sem: f64, syn: f64, n: usize) -> Self {
        let delta = match orientation {
            Orientation::Semantic => sem - syn,
            Orientation::Syntactic => syn - sem,
        };
        ProbeReport {
            probe: probe.to_string(),
            orientation,
            sem,
            syn,
            delta,
            oracle: None,
            random: None,
            bag_of_vectors: None,
            n,
        }
    }

    /// Oracle >= score >= Random for both variables. The lower bound allows
    /// three binomial standard errors of sampling noise around Random.
    pub fn ordering_holds(&self) -> bool {
        let (Some(oracle), Some(random)) = (self.oracle, self.random) else {
            return true;
        };
        let n = self.n.max(1) as f64;
        let slack = 3.0 * (random * (1.0 - random)).max(0.0).sqrt() / n.sqrt();
        [self.sem, self.syn]
            .iter()
            .all(|&v| v <= oracle + 1e-12 && v >= random - slack - 1e-12)
    }
}

/// Pearson correlation between gold similarity and the cosine of each
/// variable, plus a bag-of-vectors baseline over the semantic embeddings.
pub fn sts_probe(model: &ModelParams, pairs: &[(SubwordSeq, SubwordSeq)], gold: &[f64]) -> Result<ProbeReport> {
    let (a, b): (Vec<SubwordSeq>, Vec<SubwordSeq>) = pairs.iter().cloned().unzip();
    let cosines = |var: Variable| -> Result<Vec<f64>> {
        let ra = represent(model, &a, var)?;
        let rb = represent(model, &b, var)?;
        Ok(ra.iter().zip(&rb).map(|(x, y)| cosine(x, y)).collect())
    };
    let sem = pearson(&cosines(Variable::Semantic)?, gold)?;
    let syn = pearson(&cosines(Variable::Syntactic)?, gold)?;
    let bag: Vec<f64> = pairs
        .iter()
        .map(|(x, y)| cosine(&bag_of_vectors(model, x), &bag_of_vectors(model, y)))
        .collect();
    let mut report = ProbeReport::new("sts", Orientation::Semantic, sem, syn, pairs.len());
    report.bag_of_vectors = pearson(&bag, gold).ok();
    Ok(report)
}

/// Average of the semantic embeddings over content positions.
pub fn bag_of_vectors(model: &ModelParams, seq: &SubwordSeq) -> Vec<f64> {
    let e = &model.sem_embed.value;
    let mut v = vec![0.0; e.ncols()];
    let mut n = 0usize;
    for &id in seq.ids.iter().filter(|&&id| !model.config.is_special(id)) {
        for (acc, x) in v.iter_mut().zip(e.row(id as usize)) {
            *acc += x;
        }
        n += 1;
    }
    if n > 0 {
        v.iter_mut().for_each(|x| *x /= n as f64);
    }
    v
}

fn nn_index(query: &[f64], pool: &[Vec<f64>]) -> usize {
    rank_by_cosine(query, pool, 1)[0].index
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    /// Does the neighbor share the query's semantic frame?
    pub frame: ProbeReport,
    /// Does the neighbor share the query's syntactic template?
    pub template: ProbeReport,
    /// Positionwise POS agreement with the neighbor (0 on length mismatch).
    pub pos: ProbeReport,
}

/// Nearest-neighbor retrieval over a synthetic probe set with gold frame
/// and template labels.
pub fn retrieval_probe(model: &ModelParams, bpe: &BpeModel, set: &ProbeSet, seed: u64) -> Result<RetrievalReport> {
    let enc = |items: &[crate::corpus::ProbeItem]| -> Result<Vec<SubwordSeq>> {
        items.iter().map(|it| bpe.encode(&it.entry.tokens, &set.lang)).collect()
    };
    let (q, p) = (enc(&set.queries)?, enc(&set.pool)?);
    let pos_score = |a: usize, b: usize| {
        pos_accuracy(&set.queries[a].entry.pos, &set.pool[b].entry.pos).unwrap_or(0.0)
    };
    type Scorer<'a> = Box<dyn Fn(usize, usize) -> f64 + 'a>;
    let scorers: [(&str, Orientation, Scorer); 3] = [
        (
            "frame",
            Orientation::Semantic,
            Box::new(|a, b| f64::from(u8::from(set.queries[a].gold.frame == set.pool[b].gold.frame))),
        ),
        (
            "template",
            Orientation::Syntactic,
            Box::new(|a, b| f64::from(u8::from(set.queries[a].gold.template == set.pool[b].gold.template))),
        ),
        ("template-pos", Orientation::Syntactic, Box::new(pos_score)),
    ];
    let mut picks = BTreeMap::new();
    for var in [Variable::Semantic, Variable::Syntactic] {
        let rq = represent(model, &q, var)?;
        let rp = represent(model, &p, var)?;
        picks.insert(var == Variable::Semantic, rq.iter().map(|v| nn_index(v, &rp)).collect::<Vec<_>>());
    }
    let nq = q.len();
    let mut reports = Vec::new();
    for (name, orient, score) in &scorers {
        let avg = |pick: &[usize]| mean(&(0..nq).map(|i| score(i, pick[i])).collect::<Vec<_>>());
        let mut r = ProbeReport::new(name, *orient, avg(&picks[&true]), avg(&picks[&false]), nq);
        r.oracle = Some(mean(
            &(0..nq)
                .map(|i| (0..p.len()).map(|j| score(i, j)).fold(0.0, f64::max))
                .collect::<Vec<_>>(),
        ));
        let runs: Vec<f64> = (0..RANDOM_RUNS)
            .map(|run| {
                let mut rng = substream(seed, "random-baseline", run);
                let pick: Vec<usize> = (0..nq).map(|_| rng.random_range(0..p.len())).collect();
                avg(&pick)
            })
            .collect();
        r.random = Some(mean(&runs));
        reports.push(r);
    }
    let pos = reports.pop().unwrap();
    let template = reports.pop().unwrap();
    let frame = reports.pop().unwrap();
    Ok(RetrievalReport { frame, template, pos })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntaxProbeReport {
    pub pos_accuracy: ProbeReport,
    pub labeled_f1: ProbeReport,
    /// Query count per sentence length.
    pub strata: BTreeMap<usize, usize>,
}

/// Length-stratified retrieval over a parse bank: up to `per_length`
/// queries of each length `<= max_len`, the rest of the stratum serving as
/// candidates. Each query is scored against its nearest candidate's gold
/// POS tags and tree.
pub fn syntax_probe(
    model: &ModelParams,
    bpe: &BpeModel,
    lang: &str,
    bank: &[ParseEntry],
    max_len: usize,
    per_length: usize,
    seed: u64,
) -> Result<SyntaxProbeReport> {
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in bank.iter().enumerate() {
        if !e.tokens.is_empty() && e.tokens.len() <= max_len {
            strata.entry(e.tokens.len()).or_default().push(i);
        }
    }
    let mut counts = BTreeMap::new();
    // (query, candidates) in bank indices
    let mut tasks: Vec<(usize, std::rc::Rc<Vec<usize>>)> = Vec::new();
    for (&len, idx) in &strata {
        if idx.len() < 2 {
            warn!("length {len}: only {} sentence(s), stratum skipped", idx.len());
            continue;
        }
        let mut rng = substream(seed, "syntax-probe", len as u64);
        let m = per_length.min(idx.len() - 1);
        let chosen = rand::seq::index::sample(&mut rng, idx.len(), m).into_vec();
        let is_query: std::collections::HashSet<usize> = chosen.iter().copied().collect();
        let cands: Vec<usize> = (0..idx.len()).filter(|k| !is_query.contains(k)).map(|k| idx[k]).collect();
        let cands = std::rc::Rc::new(cands);
        let mut queries: Vec<usize> = chosen.iter().map(|&k| idx[k]).collect();
        queries.sort_unstable();
        counts.insert(len, queries.len());
        for qi in queries {
            tasks.push((qi, cands.clone()));
        }
    }
    let encoded: Vec<SubwordSeq> = bank
        .iter()
        .map(|e| bpe.encode(&e.tokens, lang))
        .collect::<Result<_>>()?;
    let pos = |a: usize, b: usize| pos_accuracy(&bank[a].pos, &bank[b].pos).unwrap_or(0.0);
    let f1 = |a: usize, b: usize| labeled_f1(&bank[a].tree, &bank[b].tree).unwrap_or(0.0);
    let mut picks = BTreeMap::new();
    for var in [Variable::Semantic, Variable::Syntactic] {
        let reps = represent(model, &encoded, var)?;
        let chosen: Vec<usize> = tasks
            .iter()
            .map(|(q, cands)| {
                let pool: Vec<Vec<f64>> = cands.iter().map(|&c| reps[c].clone()).collect();
                cands[nn_index(&reps[*q], &pool)]
            })
            .collect();
        picks.insert(var == Variable::Semantic, chosen);
    }
    let n = tasks.len();
    let build = |name: &str, metric: &dyn Fn(usize, usize) -> f64| {
        let avg = |pick: &[usize]| mean(&tasks.iter().zip(pick).map(|((q, _), &c)| metric(*q, c)).collect::<Vec<_>>());
        let mut r = ProbeReport::new(name, Orientation::Syntactic, avg(&picks[&true]), avg(&picks[&false]), n);
        r.oracle = Some(mean(
            &tasks
                .iter()
                .map(|(q, cands)| cands.iter().map(|&c| metric(*q, c)).fold(0.0, f64::max))
                .collect::<Vec<_>>(),
        ));
        let runs: Vec<f64> = (0..RANDOM_RUNS)
            .map(|run| {
                let mut rng = substream(seed, "random-baseline", run);
                let pick: Vec<usize> = tasks
                    .iter()
                    .map(|(_, cands)| cands[rng.random_range(0..cands.len())])
                    .collect();
                avg(&pick)
            })
            .collect();
        r.random = Some(mean(&runs));
        r
    };
    Ok(SyntaxProbeReport {
        pos_accuracy: build("pos-accuracy", &pos),
        labeled_f1: build("labeled-f1", &f1),
        strata: counts,
    })
}

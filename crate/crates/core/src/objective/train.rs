//! The training loop: noised syntactic encoder inputs, one optimizer step per batch,
//! periodic dev-set BLEU with early stopping, checkpoints and a CSV log.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::loss::{batch_loss_grad, PairInput, PairNoise, Terms};
use super::optim::{Adam, AdamConfig};
use crate::control::{controlled_generate, GenerationRequest};
use crate::corpus::{make_batches, noise_within_classes, BankParser, BitextCorpus, EncodedPair, EvalTriple};
use crate::metrics::{bleu, TextMode};
use crate::network::{Checkpoint, ModelParams, Parameterized};
use crate::rng::substream;
use crate::subword::{BpeModel, SubwordSeq};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Probability of replacing each encoder-input word.
    pub noise_prob: f64,
    /// Evaluate every this many steps; 0 means once per epoch.
    pub eval_every: usize,
    /// Stop after this many consecutive non-improving evaluations beyond
    /// the first; `None` never stops early.
    pub patience: Option<usize>,
    pub seed: u64,
    /// Beam width for dev-set generation.
    pub dev_beam: usize,
    /// Evaluate on at most this many dev triples.
    pub dev_max: usize,
    /// Hard cap on optimizer steps (for smoke runs).
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            optimizer: AdamConfig::default(),
            noise_prob: 0.9,
            eval_every: 0,
            patience: Some(5),
            seed: 1,
            dev_beam: 1,
            dev_max: 200,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.epochs < 1 {
            bad.push("train.epochs must be >= 1".to_string());
        }
        if self.batch_size < 1 {
            bad.push("train.batch_size must be >= 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            bad.push("train.noise_prob must be in [0, 1]".to_string());
        }
        if self.dev_beam < 1 {
            bad.push("train.dev_beam must be >= 1".to_string());
        }
        if let Err(Error::Config(m)) = self.optimizer.validate() {
            bad.push(m);
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// One side of a training pair, with its words as vocabulary indices so
/// that noising never needs to re-segment.
#[derive(Debug, Clone)]
struct Side {
    clean: SubwordSeq,
    words: Vec<usize>,
}

/// Encoded training corpus plus per-language word vocabularies for noising.
#[derive(Debug, Clone)]
pub struct TrainData {
    pairs: Vec<[Side; 2]>,
    encoded: Vec<EncodedPair>,
    vocab: BTreeMap<String, LangVocab>,
}

#[derive(Debug, Clone)]
struct LangVocab {
    tag: u32,
    /// Subword ids of every vocabulary word.
    words: Vec<Vec<u32>>,
    /// Noise class of each word and the words in each class.
    class_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl TrainData {
    /// Sentences with more than `max_words` words are dropped. Noise draws
    /// replacements from the whole vocabulary of a language.
    pub fn new(bpe: &BpeModel, corpus: &BitextCorpus, max_words: usize) -> Result<Self> {
        Self::with_tagger(bpe, corpus, max_words, None)
    }

    /// As [`TrainData::new`], but with a tagger noise replaces a word only
    /// by another word carrying the same POS tag.
    pub fn with_tagger(
        bpe: &BpeModel,
        corpus: &BitextCorpus,
        max_words: usize,
        tagger: Option<&BankParser>,
    ) -> Result<Self> {
        let mut words: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for p in &corpus.pairs {
            for (lang, toks) in [(&p.src_lang, &p.src_tokens), (&p.tgt_lang, &p.tgt_tokens)] {
                let w = words.entry(lang.clone()).or_default();
                for t in toks {
                    w.entry(t.clone()).or_insert(0);
                }
            }
        }
        let mut vocab = BTreeMap::new();
        for (lang, w) in words.iter_mut() {
            let mut list = Vec::with_capacity(w.len());
            let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            let mut class_names = Vec::with_capacity(w.len());
            for (i, (word, slot)) in w.iter_mut().enumerate() {
                *slot = i;
                list.push(bpe.encode_word(word));
                let class = tagger.map_or("", |t| t.tag(word));
                classes.entry(class).or_default().push(i);
                class_names.push(class);
            }
            let index: BTreeMap<&str, usize> = classes.keys().enumerate().map(|(i, k)| (*k, i)).collect();
            vocab.insert(
                lang.clone(),
                LangVocab {
                    tag: bpe.tag_id(lang)?,
                    words: list,
                    class_of: class_names.iter().map(|c| index[c]).collect(),
                    members: classes.into_values().collect(),
                },
            );
        }
        let mut pairs = Vec::new();
        let mut encoded = Vec::new();
        let mut dropped = 0;
        for p in &corpus.pairs {
            if p.src_tokens.is_empty()
                || p.tgt_tokens.is_empty()
                || p.src_tokens.len() > max_words
                || p.tgt_tokens.len() > max_words
            {
                dropped += 1;
                continue;
            }
            let side = |lang: &String, toks: &[String]| -> Result<Side> {
                Ok(Side {
                    clean: bpe.encode(toks, lang)?,
                    words: toks.iter().map(|t| words[lang][t]).collect(),
                })
            };
            let s = side(&p.src_lang, &p.src_tokens)?;
            let t = side(&p.tgt_lang, &p.tgt_tokens)?;
            encoded.push(EncodedPair {
                src: s.clean.clone(),
                tgt: t.clean.clone(),
            });
            pairs.push([s, t]);
        }
        if dropped > 0 {
            warn!("dropped {dropped} pair(s) that are empty or longer than {max_words} words");
        }
        if pairs.is_empty() {
            return Err(Error::invalid("no usable training pairs"));
        }
        Ok(TrainData { pairs, encoded, vocab })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn noised(&self, side: &Side, p: f64, rng: &mut crate::rng::Rng) -> SubwordSeq {
        if p == 0.0 {
            return side.clean.clone();
        }
        let v = &self.vocab[&side.clean.lang];
        let words = noise_within_classes(&side.words, p, &v.class_of, &v.members, rng);
        let mut ids = vec![v.tag];
        let mut word_boundary = vec![None];
        for (i, &w) in words.iter().enumerate() {
            for &id in &v.words[w] {
                ids.push(id);
                word_boundary.push(Some(i));
            }
        }
        SubwordSeq {
            ids,
            word_boundary,
            lang: side.clean.lang.clone(),
        }
    }

    /// Inputs for the pairs at `indices`, encoder sides noised from the
    /// stream for `step`.
    pub fn batch(&self, indices: &[usize], noise_prob: f64, seed: u64, step: u64) -> Vec<PairInput> {
        let mut rng = substream(seed, "word-noise", step);
        indices
            .iter()
            .map(|&i| {
                let [a, b] = &self.pairs[i];
                PairInput {
                    enc: [self.noised(a, noise_prob, &mut rng), self.noised(b, noise_prob, &mut rng)],
                    clean: [a.clean.clone(), b.clean.clone()],
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub epoch: u64,
    /// Sum of both sides' ELBO losses.
    pub elbo: f64,
    /// Mean unweighted Gaussian KL per sentence.
    pub kl_z: f64,
    pub kl_y: f64,
    pub prl: f64,
    pub wpl: f64,
    pub dev_bleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: ModelParams,
    pub adam: Adam,
    pub step: u64,
    pub best_bleu: Option<f64>,
    pub best_step: u64,
    pub evals_since_best: usize,
    pub stopped_early: bool,
    pub log: Vec<LogRow>,
}

impl TrainState {
    pub fn new(model: ModelParams, optimizer: AdamConfig) -> Self {
        TrainState {
            model,
            adam: Adam::new(optimizer),
            step: 0,
            best_bleu: None,
            best_step: 0,
            evals_since_best: 0,
            stopped_early: false,
            log: Vec::new(),
        }
    }

    pub fn to_checkpoint(&self, bpe: &BpeModel, cfg: &TrainConfig) -> Checkpoint {
        let meta = json!({
            "kind": "train-state",
            "step": self.step,
            "best_bleu": self.best_bleu,
            "best_step": self.best_step,
            "evals_since_best": self.evals_since_best,
            "stopped_early": self.stopped_early,
            "adam_t": self.adam.t,
            "train": cfg,
            "bpe": bpe.to_text(),
            "log": self.log,
        });
        let mut ck = Checkpoint::from_model(&self.model, meta);
        self.adam.save_into(&self.model, &mut ck);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, optimizer: AdamConfig) -> Result<Self> {
        let model = ck.to_model()?;
        let m = &ck.meta;
        let bad = |k: &str| Error::Checkpoint(format!("missing or invalid `{k}` in training state"));
        let step = m["step"].as_u64().ok_or_else(|| bad("step"))?;
        let adam_t = m["adam_t"].as_u64().ok_or_else(|| bad("adam_t"))?;
        let adam = Adam::load_from(optimizer, adam_t, &model, ck)?;
        Ok(TrainState {
            adam,
            step,
            best_bleu: m["best_bleu"].as_f64(),
            best_step: m["best_step"].as_u64().ok_or_else(|| bad("best_step"))?,
            evals_since_best: m["evals_since_best"].as_u64().ok_or_else(|| bad("evals_since_best"))? as usize,
            stopped_early: m["stopped_early"].as_bool().ok_or_else(|| bad("stopped_early"))?,
            log: serde_json::from_value(m["log"].clone()).map_err(|_| bad("log"))?,
            model,
        })
    }
}

/// Where training writes its artifacts.
#[derive(Debug, Clone)]
pub struct TrainPaths {
    pub dir: PathBuf,
}

impl TrainPaths {
    pub fn last(&self) -> PathBuf {
        self.dir.join("last.ckpt")
    }
    pub fn best(&self) -> PathBuf {
        self.dir.join("best.ckpt")
    }
    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Parameters at the best dev evaluation (the final ones if no dev set).
    pub best: ModelParams,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn write_metrics(path: &Path, log: &[LogRow]) -> Result<()> {
    let mut s = String::from("step,elbo,kl_z,kl_y,prl,wpl,dev_bleu\n");
    for r in log {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step,
            r.elbo,
            r.kl_z,
            r.kl_y,
            r.prl,
            r.wpl,
            fmt_opt(r.dev_bleu)
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Corpus BLEU of controlled generations on dev triples.
pub fn dev_bleu(model: &ModelParams, bpe: &BpeModel, dev: &[EvalTriple], beam: usize) -> Result<f64> {
    let mut hyps = Vec::with_capacity(dev.len());
    let mut refs = Vec::with_capacity(dev.len());
    for t in dev {
        let req = GenerationRequest::from_triple(t, beam, model.config.max_len);
        hyps.push(controlled_generate(model, bpe, &req)?.words);
        refs.push(t.reference.clone());
    }
    bleu(&hyps, &refs, TextMode::Word)
}

/// Train from `state` (fresh or resumed) until the epoch budget, the step
/// cap or early stopping ends the run.
pub fn train(
    cfg: &TrainConfig,
    bpe: &BpeModel,
    data: &TrainData,
    dev: &[EvalTriple],
    mut state: TrainState,
    paths: Option<&TrainPaths>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(p) = paths {
        fs::create_dir_all(&p.dir).map_err(|e| Error::io(&p.dir, e))?;
    }
    let stream = make_batches(&data.encoded, cfg.batch_size, cfg.seed)?;
    let per_epoch = stream.batches_per_epoch() as u64;
    let mut total = per_epoch * cfg.epochs as u64;
    if let Some(m) = cfg.max_steps {
        total = total.min(m);
    }
    let eval_every = if cfg.eval_every == 0 {
        per_epoch
    } else {
        cfg.eval_every as u64
    };
    let dev = &dev[..dev.len().min(cfg.dev_max)];
    let mut best = if let (Some(p), Some(_)) = (paths, state.best_bleu) {
        Checkpoint::load(&p.best())?.to_model()?
    } else {
        state.model.clone()
    };
    let mut order_epoch = u64::MAX;
    let mut order = Vec::new();
    while state.step < total && !state.stopped_early {
        let epoch = state.step / per_epoch;
        if epoch != order_epoch {
            order = stream.order(epoch);
            order_epoch = epoch;
        }
        let indices = &order[(state.step % per_epoch) as usize];
        let batch = data.batch(indices, cfg.noise_prob, cfg.seed, state.step);
        let mut rng = substream(cfg.seed, "latent-noise", state.step);
        let noise = PairNoise::sample_batch(&state.model.config.latent, batch.len(), &mut rng);
        state.model.zero_grad();
        let loss = batch_loss_grad(&mut state.model, &batch, &noise, Terms::ALL)?;
        state.adam.step(&mut state.model);
        state.step += 1;
        state.log.push(LogRow {
            step: state.step,
            epoch,
            elbo: loss.elbo[0] + loss.elbo[1],
            kl_z: 0.5 * (loss.kl_z[0] + loss.kl_z[1]),
            kl_y: loss.kl_y,
            prl: loss.prl,
            wpl: loss.wpl,
            dev_bleu: None,
        });
        if state.step % eval_every != 0 && state.step != total {
            continue;
        }
        let score = if dev.is_empty() {
            None
        } else {
            Some(dev_bleu(&state.model, bpe, dev, cfg.dev_beam)?)
        };
        state.log.last_mut().expect("row just pushed").dev_bleu = score;
        info!(
            "step {} epoch {} total {:.4} dev_bleu {}",
            state.step,
            epoch,
            loss.total,
            fmt_opt(score)
        );
        let improved = match (score, state.best_bleu) {
            (None, _) => true,
            (Some(s), None) => s.is_finite(),
            (Some(s), Some(b)) => s > b,
        };
        if improved {
            state.best_bleu = score;
            state.best_step = state.step;
            state.evals_since_best = 0;
            best = state.model.clone();
        } else {
            state.evals_since_best += 1;
            if cfg.patience.is_some_and(|p| state.evals_since_best > p) {
                info!("early stop at step {}: no dev improvement in {} evaluations", state.step, state.evals_since_best);
                state.stopped_early = true;
            }
        }
        if let Some(p) = paths {
            if improved {
                state.to_checkpoint(bpe, cfg).save(&p.best())?;
            }
            state.to_checkpoint(bpe, cfg).save(&p.last())?;
            write_metrics(&p.metrics(), &state.log)?;
        }
    }
    Ok(TrainOutcome { state, best })
}

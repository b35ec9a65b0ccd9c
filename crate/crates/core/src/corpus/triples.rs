//! Evaluation triples for exemplar-controlled generation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::synth::{SentenceGold, SyntheticBitext, SyntheticWorld};
use super::{detokenize, tokenize};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::trees::pos_seq_edit_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Paraphrase,
    Translation,
}

/// (semantic input, syntactic exemplar, reference). The exemplar and the
/// reference are both in the target language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalTriple {
    pub sem: Vec<String>,
    pub sem_lang: String,
    pub syn: Vec<String>,
    pub reference: Vec<String>,
    pub tgt_lang: String,
}

impl EvalTriple {
    pub fn task_kind(&self) -> TaskKind {
        if self.sem_lang == self.tgt_lang {
            TaskKind::Paraphrase
        } else {
            TaskKind::Translation
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripleRecord {
    sem: String,
    syn: String,
    #[serde(rename = "ref")]
    reference: String,
    sem_lang: String,
    tgt_lang: String,
}

pub fn save_triples(triples: &[EvalTriple], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for t in triples {
        let rec = TripleRecord {
            sem: detokenize(&t.sem),
            syn: detokenize(&t.syn),
            reference: detokenize(&t.reference),
            sem_lang: t.sem_lang.clone(),
            tgt_lang: t.tgt_lang.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_triples(path: &Path) -> Result<Vec<EvalTriple>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TripleRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            context: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(EvalTriple {
            sem: tokenize(&rec.sem),
            sem_lang: rec.sem_lang,
            syn: tokenize(&rec.syn),
            reference: tokenize(&rec.reference),
            tgt_lang: rec.tgt_lang,
        });
    }
    Ok(out)
}

/// A generated triple with the gold labels of its three sentences and the
/// pool index the exemplar was mined from.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldTriple {
    pub triple: EvalTriple,
    pub sem_gold: SentenceGold,
    pub syn_gold: SentenceGold,
    pub ref_gold: SentenceGold,
    pub exemplar_index: usize,
}

/// Independent validity check for a generated triple.
pub fn check_triple(world: &SyntheticWorld, t: &GoldTriple) -> std::result::Result<(), String> {
    if t.ref_gold.frame != t.sem_gold.frame {
        return Err("reference frame differs from semantic input".into());
    }
    if t.ref_gold.template != t.syn_gold.template {
        return Err("reference template differs from exemplar".into());
    }
    if t.syn_gold.frame == t.ref_gold.frame {
        return Err("exemplar shares the reference frame".into());
    }
    if t.sem_gold.template == t.ref_gold.template {
        return Err("semantic input shares the reference template".into());
    }
    let pos_of = |g: &SentenceGold| {
        world
            .locate_template(g.template)
            .map(|(l, i)| world.templates(l)[i].pos.clone())
    };
    match (pos_of(&t.sem_gold), pos_of(&t.ref_gold)) {
        (Some(a), Some(b)) if t.triple.task_kind() == TaskKind::Paraphrase => {
            if pos_seq_edit_distance(&a, &b) == 0 {
                return Err("semantic input has the reference POS sequence".into());
            }
        }
        (Some(_), Some(_)) => {}
        _ => return Err("unknown template id".into()),
    }
    Ok(())
}

/// Build `n` triples for generating into `tgt_lang` from inputs in
/// `sem_lang` (paraphrase when they coincide).
///
/// The reference renders a fresh frame through a random target template;
/// the semantic input renders the same frame through a different template;
/// the exemplar is the pool sentence (target side of `pool`) with a
/// different frame whose POS sequence is closest to the reference's, ties
/// going to the lowest pool index.
pub fn gen_synthetic_triples(
    world: &SyntheticWorld,
    pool: &SyntheticBitext,
    n: usize,
    sem_lang: &str,
    tgt_lang: &str,
    seed: u64,
) -> Result<Vec<GoldTriple>> {
    let si = world.lang_index(sem_lang)?;
    let ti = world.lang_index(tgt_lang)?;
    let paraphrase = si == ti;
    if n == 0 {
        return Ok(Vec::new());
    }
    if paraphrase && world.templates(ti).len() < 2 {
        return Err(Error::invalid("paraphrase triples need >= 2 templates"));
    }
    if world.n_frames() < 2 {
        return Err(Error::invalid("triples need >= 2 distinct frames"));
    }
    let bank = &pool.banks[ti];
    let pool_gold: Vec<SentenceGold> = pool.side_gold(ti).collect();
    if bank.is_empty() {
        return Err(Error::invalid("empty exemplar pool"));
    }

    let stream = format!("triples:{sem_lang}:{tgt_lang}");
    let mut rng = substream(seed, &stream, 0);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let frame = world.sample_frame(&mut rng);
        let frame_id = world.frame_id(&frame);
        let nt = world.templates(ti).len();
        let t_ref = rng.random_range(0..nt);
        let t_sem = if paraphrase {
            let x = rng.random_range(0..nt - 1);
            if x >= t_ref {
                x + 1
            } else {
                x
            }
        } else {
            rng.random_range(0..world.templates(si).len())
        };
        let reference = world.render(&frame, ti, t_ref);
        let sem = world.render(&frame, si, t_sem);

        let mut best: Option<(usize, usize)> = None;
        for (i, (e, g)) in bank.entries.iter().zip(&pool_gold).enumerate() {
            if g.frame == frame_id {
                continue;
            }
            let d = pos_seq_edit_distance(&reference.pos, &e.pos);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
                if d == 0 {
                    break;
                }
            }
        }
        let Some((ex, _)) = best else {
            return Err(Error::invalid("no exemplar candidate with a different frame"));
        };
        let ref_gold = world.gold(&frame, ti, t_ref);
        if pool_gold[ex].template != ref_gold.template {
            return Err(Error::invalid(format!(
                "pool has no sentence with template {} and a different frame",
                ref_gold.template
            )));
        }
        out.push(GoldTriple {
            triple: EvalTriple {
                sem: sem.tokens,
                sem_lang: sem_lang.to_string(),
                syn: bank.entries[ex].tokens.clone(),
                reference: reference.tokens,
                tgt_lang: tgt_lang.to_string(),
            },
            sem_gold: world.gold(&frame, si, t_sem),
            syn_gold: pool_gold[ex],
            ref_gold,
            exemplar_index: ex,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_synthetic_bitext, SyntheticWorldConfig};

    fn world(n: usize) -> (SyntheticWorld, SyntheticBitext) {
        let w = SyntheticWorld::new(SyntheticWorldConfig {
            n_pairs: n,
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        let bt = gen_synthetic_bitext(&w).unwrap();
        (w, bt)
    }

    #[test]
    fn zero_triples() {
        let (w, bt) = world(50);
        assert!(gen_synthetic_triples(&w, &bt, 0, "l1", "l1", 1).unwrap().is_empty());
    }

    #[test]
    fn all_tasks_pass_checker() {
        let (w, bt) = world(400);
        for (s, t) in [("l1", "l1"), ("l2", "l2"), ("l1", "l2"), ("l2", "l1")] {
            let ts = gen_synthetic_triples(&w, &bt, 40, s, t, 3).unwrap();
            assert_eq!(ts.len(), 40);
            for g in &ts {
                check_triple(&w, g).unwrap();
                assert_eq!(g.triple.sem_lang, s);
                assert_eq!(g.triple.tgt_lang, t);
            }
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let (w, bt) = world(100);
        let ts: Vec<EvalTriple> = gen_synthetic_triples(&w, &bt, 5, "l2", "l1", 3)
            .unwrap()
            .into_iter()
            .map(|g| g.triple)
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        save_triples(&ts, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["sem", "syn", "ref", "sem_lang", "tgt_lang"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert_eq!(load_triples(&p).unwrap(), ts);
        assert_eq!(ts[0].task_kind(), TaskKind::Translation);
    }
}

//! JSONL and line-oriented file formats used by the commands.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use mvgvae::corpus::{tokenize, GoldTriple, ParseEntry, ProbeItem, ProbeSet, SentenceGold};
use mvgvae::trees::parse_brackets;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for it in items {
        serde_json::to_writer(&mut w, &it)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| mvgvae::Error::Format {
                context: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(item);
    }
    Ok(out)
}

/// One tokenized sentence per non-blank line.
pub fn read_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(tokenize).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hypothesis {
    pub hypothesis: String,
    pub score: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleGold {
    pub sem: SentenceGold,
    pub syn: SentenceGold,
    #[serde(rename = "ref")]
    pub reference: SentenceGold,
    pub exemplar_index: usize,
}

impl From<&GoldTriple> for TripleGold {
    fn from(g: &GoldTriple) -> Self {
        TripleGold {
            sem: g.sem_gold,
            syn: g.syn_gold,
            reference: g.ref_gold,
            exemplar_index: g.exemplar_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeRole {
    Query,
    Pool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeRecord {
    pub lang: String,
    pub role: ProbeRole,
    pub tree: String,
    pub frame: u64,
    pub template: usize,
}

pub fn save_probe_set(set: &ProbeSet, path: &Path) -> Result<()> {
    let rec = |role, it: &ProbeItem| ProbeRecord {
        lang: set.lang.clone(),
        role,
        tree: it.entry.tree.to_string(),
        frame: it.gold.frame,
        template: it.gold.template,
    };
    let items = set
        .queries
        .iter()
        .map(|q| rec(ProbeRole::Query, q))
        .chain(set.pool.iter().map(|p| rec(ProbeRole::Pool, p)));
    write_jsonl(path, items)
}

pub fn load_probe_set(path: &Path) -> Result<ProbeSet> {
    let records: Vec<ProbeRecord> = read_jsonl(path)?;
    let Some(lang) = records.first().map(|r| r.lang.clone()) else {
        bail!(mvgvae::Error::Invalid(format!("{}: empty probe set", path.display())));
    };
    let mut set = ProbeSet {
        lang,
        queries: Vec::new(),
        pool: Vec::new(),
    };
    for (i, r) in records.into_iter().enumerate() {
        if r.lang != set.lang {
            bail!(mvgvae::Error::Invalid(format!(
                "{}: record {} is in {}, expected {}",
                path.display(),
                i + 1,
                r.lang,
                set.lang
            )));
        }
        let entry = ParseEntry::from_tree(parse_brackets(&r.tree)?)?;
        let item = ProbeItem {
            entry,
            gold: SentenceGold {
                frame: r.frame,
                template: r.template,
            },
        };
        match r.role {
            ProbeRole::Query => set.queries.push(item),
            ProbeRole::Pool => set.pool.push(item),
        }
    }
    if set.queries.is_empty() || set.pool.is_empty() {
        bail!(mvgvae::Error::Invalid(format!("{}: probe set needs queries and a pool", path.display())));
    }
    Ok(set)
}

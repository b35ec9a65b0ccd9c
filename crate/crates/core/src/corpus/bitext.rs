use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{detokenize, tokenize};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitextPair {
    pub src_lang: String,
    pub tgt_lang: String,
    pub src_tokens: Vec<String>,
    pub tgt_tokens: Vec<String>,
}

/// Aligned sentence pairs. A corpus whose two languages coincide is a
/// monolingual paraphrase corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitextCorpus {
    pub src_lang: String,
    pub tgt_lang: String,
    pub pairs: Vec<BitextPair>,
}

impl BitextCorpus {
    pub fn new(src_lang: &str, tgt_lang: &str) -> Self {
        BitextCorpus {
            src_lang: src_lang.to_string(),
            tgt_lang: tgt_lang.to_string(),
            pairs: Vec::new(),
        }
    }

    pub fn is_monolingual(&self) -> bool {
        self.src_lang == self.tgt_lang
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn languages(&self) -> Vec<String> {
        let mut l = vec![self.src_lang.clone()];
        if !self.is_monolingual() {
            l.push(self.tgt_lang.clone());
        }
        l
    }

    pub fn push(&mut self, src: Vec<String>, tgt: Vec<String>) {
        self.pairs.push(BitextPair {
            src_lang: self.src_lang.clone(),
            tgt_lang: self.tgt_lang.clone(),
            src_tokens: src,
            tgt_tokens: tgt,
        });
    }

    /// Every sentence of both sides with its language.
    pub fn sentences(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.pairs.iter().flat_map(|p| {
            [
                (p.src_lang.as_str(), p.src_tokens.as_slice()),
                (p.tgt_lang.as_str(), p.tgt_tokens.as_slice()),
            ]
        })
    }
}

#[derive(Debug, Clone)]
pub enum BitextSource {
    /// `src<TAB>tgt` per line.
    Tsv(PathBuf),
    /// Two line-aligned files.
    PairedFiles { src: PathBuf, tgt: PathBuf },
}

#[derive(Debug, Clone)]
pub struct LoadedBitext {
    pub corpus: BitextCorpus,
    /// Records dropped because one side was empty.
    pub rejected: usize,
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = Result<String>> + '_> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(f)
        .lines()
        .map(move |l| l.map_err(|e| Error::io(path, e))))
}

fn strip_cr(mut s: String) -> String {
    if s.ends_with('\r') {
        s.pop();
    }
    s
}

pub fn load_bitext(source: &BitextSource, src_lang: &str, tgt_lang: &str) -> Result<LoadedBitext> {
    let mut corpus = BitextCorpus::new(src_lang, tgt_lang);
    let mut rejected = 0;
    let mut accept = |src: Vec<String>, tgt: Vec<String>| {
        if src.is_empty() || tgt.is_empty() {
            rejected += 1;
        } else {
            corpus.push(src, tgt);
        }
    };
    match source {
        BitextSource::Tsv(path) => {
            for (i, line) in open_lines(path)?.enumerate() {
                let line = strip_cr(line?);
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 2 {
                    return Err(Error::Format {
                        context: path.display().to_string(),
                        line: i + 1,
                        message: format!("expected 2 tab-separated columns, found {}", fields.len()),
                    });
                }
                accept(tokenize(fields[0]), tokenize(fields[1]));
            }
        }
        BitextSource::PairedFiles { src, tgt } => {
            let mut a = open_lines(src)?;
            let mut b = open_lines(tgt)?;
            let mut line = 0;
            loop {
                line += 1;
                match (a.next(), b.next()) {
                    (None, None) => break,
                    (Some(x), Some(y)) => accept(tokenize(&strip_cr(x?)), tokenize(&strip_cr(y?))),
                    _ => {
                        return Err(Error::Format {
                            context: format!("{} / {}", src.display(), tgt.display()),
                            line,
                            message: "paired files have different line counts".into(),
                        })
                    }
                }
            }
        }
    }
    Ok(LoadedBitext { corpus, rejected })
}

pub fn save_bitext(corpus: &BitextCorpus, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for p in &corpus.pairs {
        writeln!(w, "{}\t{}", detokenize(&p.src_tokens), detokenize(&p.tgt_tokens))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

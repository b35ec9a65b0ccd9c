//! Corpus BLEU and ROUGE over token sequences.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TextMode {
    #[default]
    Word,
    /// Every non-space character is a token.
    Char,
}

fn units<S: AsRef<str>>(tokens: &[S], mode: TextMode) -> Vec<String> {
    match mode {
        TextMode::Word => tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        TextMode::Char => tokens
            .iter()
            .flat_map(|t| t.as_ref().chars().filter(|c| !c.is_whitespace()))
            .map(String::from)
            .collect(),
    }
}

fn ngram_counts(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn clipped_overlap(h: &HashMap<&[String], usize>, r: &HashMap<&[String], usize>) -> usize {
    h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum()
}

fn check_aligned(h: usize, r: usize) -> Result<()> {
    if h == 0 {
        return Err(Error::invalid("no hypotheses to score"));
    }
    if h != r {
        return Err(Error::invalid(format!("{h} hypotheses but {r} references")));
    }
    Ok(())
}

/// Corpus BLEU-4 on a 0..100 scale.
///
/// Modified n-gram precisions are pooled over the corpus. Orders n >= 2 are
/// add-one smoothed, `(matches + 1) / (total + 1)`.
pub fn bleu<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], mode: TextMode) -> Result<f64> {
    check_aligned(hyps.len(), refs.len())?;
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (units(h, mode), units(r, mode));
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            matches[n - 1] += clipped_overlap(&hc, &rc);
            totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    if hyp_len == 0 || matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_p = (matches[0] as f64 / totals[0] as f64).ln();
    for n in 1..4 {
        log_p += ((matches[n] + 1) as f64 / (totals[n] + 1) as f64).ln();
    }
    let bp = if hyp_len > ref_len {
        0.0
    } else {
        1.0 - ref_len as f64 / hyp_len as f64
    };
    Ok(100.0 * (bp + log_p / 4.0).exp())
}

fn f1(overlap: usize, h: usize, r: usize) -> f64 {
    if h == 0 && r == 0 {
        return 1.0;
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / h as f64;
    let rc = overlap as f64 / r as f64;
    2.0 * p * rc / (p + rc)
}

/// ROUGE-N F-measure averaged over pairs.
pub fn rouge_n<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], n: usize, mode: TextMode) -> Result<f64> {
    if n < 1 {
        return Err(Error::invalid("ROUGE-N needs n >= 1"));
    }
    check_aligned(hyps.len(), refs.len())?;
    let mut sum = 0.0;
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (units(h, mode), units(r, mode));
        let (hc, rc) = (ngram_counts(&h, n), ngram_counts(&r, n));
        let total = |m: &HashMap<&[String], usize>| m.values().sum::<usize>();
        sum += f1(clipped_overlap(&hc, &rc), total(&hc), total(&rc));
    }
    Ok(sum / hyps.len() as f64)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L (longest common subsequence) F-measure averaged over pairs.
pub fn rouge_l<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], mode: TextMode) -> Result<f64> {
    check_aligned(hyps.len(), refs.len())?;
    let mut sum = 0.0;
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (units(h, mode), units(r, mode));
        sum += f1(lcs_len(&h, &r), h.len(), r.len());
    }
    Ok(sum / hyps.len() as f64)
}

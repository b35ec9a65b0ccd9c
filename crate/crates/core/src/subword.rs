//! Byte-pair-encoding subwords with word-boundary tracking and language tags.
//!
//! One model is trained jointly over every language of a corpus. The last
//! symbol of each word carries the `</w>` marker so decoding is unambiguous.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
const FIRST_TAG: u32 = 4;

pub const END_OF_WORD: &str = "</w>";
const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];
const HEADER: &str = "mvg-bpe 1";

/// A subword-encoded sentence. Position 0 holds the language tag, whose
/// boundary entry is `None`; every other position maps to the index of the
/// original word it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordSeq {
    pub ids: Vec<u32>,
    pub word_boundary: Vec<Option<usize>>,
    pub lang: String,
}

impl SubwordSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_words(&self) -> usize {
        self.word_boundary
            .iter()
            .flatten()
            .max()
            .map_or(0, |m| m + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    languages: Vec<String>,
    symbols: Vec<String>,
    index: HashMap<String, u32>,
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    chars
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == n {
                format!("{c}{END_OF_WORD}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn merge_pair(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let merged = format!("{left}{right}");
            symbols[i] = merged;
            symbols.remove(i + 1);
        }
        i += 1;
    }
}

/// Learn `n_merges` merge operations from tokenized sentences. Pair-count
/// ties are broken by the lexicographically smallest `(left, right)`.
pub fn bpe_train<'a, I, S>(sentences: I, languages: &[String], n_merges: i64) -> Result<BpeModel>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[String]> + 'a,
{
    if n_merges < 0 {
        return Err(Error::Config(format!("n_merges must be >= 0, got {n_merges}")));
    }
    if languages.is_empty() {
        return Err(Error::Config("at least one language is required".into()));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for sent in sentences {
        for w in sent.as_ref() {
            *counts.entry(w.clone()).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::invalid("bpe_train: empty corpus"));
    }
    let mut words: Vec<(Vec<String>, u64)> =
        counts.iter().map(|(w, &c)| (word_symbols(w), c)).collect();

    let mut base: Vec<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
    base.sort();
    base.dedup();

    let mut merges = Vec::new();
    for _ in 0..n_merges {
        let mut pairs: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for (syms, c) in &words {
            for w in syms.windows(2) {
                *pairs.entry((w[0].as_str(), w[1].as_str())).or_insert(0) += c;
            }
        }
        // BTreeMap iterates in lexicographic order, so the first maximum wins ties.
        let best = pairs
            .iter()
            .fold(None::<((&str, &str), u64)>, |acc, (&p, &c)| match acc {
                Some((_, bc)) if bc >= c => acc,
                _ => Some((p, c)),
            });
        let Some(((l, r), _)) = best else { break };
        let (l, r) = (l.to_string(), r.to_string());
        for (syms, _) in &mut words {
            merge_pair(syms, &l, &r);
        }
        merges.push((l, r));
    }

    let mut symbols: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    symbols.extend(languages.iter().map(|l| tag_symbol(l)));
    symbols.extend(base);
    symbols.extend(merges.iter().map(|(l, r)| format!("{l}{r}")));
    BpeModel::assemble(merges, languages.to_vec(), symbols)
}

fn tag_symbol(lang: &str) -> String {
    format!("<lang:{lang}>")
}

impl BpeModel {
    fn assemble(
        merges: Vec<(String, String)>,
        languages: Vec<String>,
        raw_symbols: Vec<String>,
    ) -> Result<Self> {
        let mut symbols = Vec::with_capacity(raw_symbols.len());
        let mut index = HashMap::new();
        for s in raw_symbols {
            if !index.contains_key(&s) {
                index.insert(s.clone(), symbols.len() as u32);
                symbols.push(s);
            }
        }
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        Ok(BpeModel {
            merges,
            ranks,
            languages,
            symbols,
            index,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn languages(&self) -> &[String] {
        &self.languages
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    pub fn tag_id(&self, lang: &str) -> Result<u32> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .map(|i| FIRST_TAG + i as u32)
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    /// Language whose tag is `id`, if it is a tag.
    pub fn tag_language(&self, id: u32) -> Option<&str> {
        let i = id.checked_sub(FIRST_TAG)? as usize;
        self.languages.get(i).map(String::as_str)
    }

    /// Reserved IDs: padding, unknown, sentence markers and language tags.
    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) < SPECIALS.len() + self.languages.len()
    }

    pub fn num_special(&self) -> usize {
        SPECIALS.len() + self.languages.len()
    }

    /// Segment one word into subword symbols by applying merges in rank order.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut syms = word_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            merge_pair(&mut syms, l, r);
        }
        syms
    }

    /// Subword IDs of one word (no tag).
    pub fn encode_word(&self, word: &str) -> Vec<u32> {
        self.segment_word(word)
            .iter()
            .map(|s| self.id_of(s).unwrap_or(UNK))
            .collect()
    }

    /// Encode a sentence, prepending the language tag.
    pub fn encode<S: AsRef<str>>(&self, words: &[S], lang: &str) -> Result<SubwordSeq> {
        let tag = self.tag_id(lang)?;
        let mut ids = vec![tag];
        let mut word_boundary = vec![None];
        for (i, w) in words.iter().enumerate() {
            for id in self.encode_word(w.as_ref()) {
                ids.push(id);
                word_boundary.push(Some(i));
            }
        }
        Ok(SubwordSeq {
            ids,
            word_boundary,
            lang: lang.to_string(),
        })
    }

    /// Invert [`BpeModel::encode`]; tags and other specials are dropped.
    pub fn decode(&self, ids: &[u32]) -> Result<Vec<String>> {
        let mut words = Vec::new();
        let mut cur = String::new();
        for &id in ids {
            let sym = self.symbol(id).ok_or(Error::UnknownId(id))?;
            if id == UNK {
                cur.push_str(sym);
                continue;
            }
            if self.is_special(id) {
                continue;
            }
            match sym.strip_suffix(END_OF_WORD) {
                Some(stem) => {
                    cur.push_str(stem);
                    words.push(std::mem::take(&mut cur));
                }
                None => cur.push_str(sym),
            }
        }
        if !cur.is_empty() {
            words.push(cur);
        }
        Ok(words)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        writeln!(out, "languages {}", self.languages.join(" ")).unwrap();
        writeln!(out, "merges {}", self.merges.len()).unwrap();
        for (l, r) in &self.merges {
            writeln!(out, "{l} {r}").unwrap();
        }
        writeln!(out, "vocab {}", self.symbols.len()).unwrap();
        for (i, s) in self.symbols.iter().enumerate() {
            writeln!(out, "{i} {s}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "bpe model";
        let err = |line: usize, message: String| Error::Format {
            context: ctx.into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
        };
        let (n, l) = next("header")?;
        if l != HEADER {
            return Err(err(n, format!("bad header `{l}`")));
        }
        let (n, l) = next("languages")?;
        let languages: Vec<String> = l
            .strip_prefix("languages ")
            .ok_or_else(|| err(n, "expected `languages`".into()))?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let count = |n: usize, l: &str, key: &str| -> Result<usize> {
            l.strip_prefix(key)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| err(n, format!("expected `{key} <count>`")))
        };
        let (n, l) = next("merges")?;
        let n_merges = count(n, l, "merges ")?;
        let mut merges = Vec::with_capacity(n_merges);
        for _ in 0..n_merges {
            let (n, l) = next("merge")?;
            let mut it = l.split(' ');
            match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    merges.push((a.to_string(), b.to_string()))
                }
                _ => return Err(err(n, format!("bad merge line `{l}`"))),
            }
        }
        let (n, l) = next("vocab")?;
        let n_vocab = count(n, l, "vocab ")?;
        let mut symbols = Vec::with_capacity(n_vocab);
        for i in 0..n_vocab {
            let (n, l) = next("vocab entry")?;
            let (id, sym) = l
                .split_once(' ')
                .ok_or_else(|| err(n, format!("bad vocab line `{l}`")))?;
            if id.parse::<usize>().ok() != Some(i) {
                return Err(err(n, format!("vocab id {id} out of order, expected {i}")));
            }
            symbols.push(sym.to_string());
        }
        let model = BpeModel::assemble(merges, languages, symbols)?;
        if model.symbols.len() != n_vocab {
            return Err(err(0, "duplicate vocabulary symbols".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sents(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn langs() -> Vec<String> {
        vec!["en".to_string(), "xx".to_string()]
    }

    #[test]
    fn zero_merges_is_character_vocabulary() {
        let m = bpe_train(&sents(&["ab ba"]), &langs(), 0).unwrap();
        assert!(m.merges().is_empty());
        let syms: Vec<&str> = (m.num_special()..m.vocab_size())
            .map(|i| m.symbol(i as u32).unwrap())
            .collect();
        assert_eq!(syms, vec!["a", "a</w>", "b", "b</w>"]);
    }

    #[test]
    fn first_merge_low_lower() {
        // Pairs: (l,o)=3, (o,w</w>)=2, (o,w)=1, (w,e)=1, (e,r</w>)=1.
        let m = bpe_train(&sents(&["low low lower"]), &langs(), 1).unwrap();
        assert_eq!(m.merges(), &[("l".to_string(), "o".to_string())]);
    }

    #[test]
    fn ties_break_lexicographically() {
        // Every adjacent pair occurs once; (a,b) is the smallest.
        let m = bpe_train(&sents(&["cd ab"]), &langs(), 1).unwrap();
        assert_eq!(m.merges()[0], ("a".to_string(), "b</w>".to_string()));
    }

    #[test]
    fn retraining_is_deterministic() {
        let corpus = sents(&["the cat sat", "the mat", "cats sat on mats"]);
        let a = bpe_train(&corpus, &langs(), 20).unwrap();
        let b = bpe_train(&corpus, &langs(), 20).unwrap();
        assert_eq!(a, b);
        assert!(bpe_train(&corpus, &langs(), -1).is_err());
    }

    #[test]
    fn boundaries_follow_words() {
        let corpus = sents(&["playing fetch", "play ing", "fetch fetch"]);
        let mut m = bpe_train(&corpus, &langs(), 0).unwrap();
        // Force the segmentation play|ing|fetch by training enough merges on
        // a corpus where `play` and `ing</w>` are frequent units.
        for n in 1..200 {
            m = bpe_train(&corpus, &langs(), n).unwrap();
            if m.segment_word("playing") == vec!["play", "ing</w>"] {
                break;
            }
        }
        assert_eq!(m.segment_word("playing"), vec!["play", "ing</w>"]);
        assert_eq!(m.segment_word("fetch"), vec!["fetch</w>"]);
        let seq = m.encode(&["playing", "fetch"], "en").unwrap();
        assert_eq!(seq.ids[0], m.tag_id("en").unwrap());
        assert_eq!(seq.word_boundary, vec![None, Some(0), Some(0), Some(1)]);
        assert_eq!(seq.num_words(), 2);
    }

    #[test]
    fn unknown_symbols_and_languages() {
        let m = bpe_train(&sents(&["ab"]), &langs(), 5).unwrap();
        let seq = m.encode(&["zz"], "en").unwrap();
        assert!(seq.ids[1..].iter().all(|&i| i == UNK));
        assert!(matches!(m.encode(&["ab"], "fr"), Err(Error::UnknownLanguage(_))));
    }

    #[test]
    fn decode_edge_cases() {
        let m = bpe_train(&sents(&["ab"]), &langs(), 5).unwrap();
        assert!(m.decode(&[]).unwrap().is_empty());
        assert!(m.decode(&[PAD, BOS, EOS, 4, 5]).unwrap().is_empty());
        assert!(matches!(m.decode(&[9999]), Err(Error::UnknownId(9999))));
    }

    #[test]
    fn text_format_round_trips() {
        let corpus = sents(&["the cat sat", "der hund lief"]);
        let m = bpe_train(&corpus, &langs(), 12).unwrap();
        let back = BpeModel::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
        assert!(BpeModel::from_text("nope").is_err());
    }
}

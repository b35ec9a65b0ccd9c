use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trees::{parse_brackets, ParseTree};

/// One parsed sentence: tokens, their POS tags and the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseEntry {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub tree: ParseTree,
}

impl ParseEntry {
    /// Every token must sit under a preterminal.
    pub fn from_tree(tree: ParseTree) -> Result<Self> {
        let tokens: Vec<String> = tree.tokens().into_iter().map(str::to_string).collect();
        let pos: Vec<String> = tree.pos_tags().into_iter().map(str::to_string).collect();
        if tokens.len() != pos.len() {
            return Err(Error::invalid(format!(
                "tree has {} tokens but {} preterminals: {tree}",
                tokens.len(),
                pos.len()
            )));
        }
        Ok(ParseEntry { tokens, pos, tree })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseBank {
    pub lang: String,
    pub entries: Vec<ParseEntry>,
}

impl ParseBank {
    pub fn new(lang: &str) -> Self {
        ParseBank {
            lang: lang.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Read one bracketed tree per line; blank lines are skipped.
pub fn load_parse_bank(path: &Path, lang: &str) -> Result<ParseBank> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bank = ParseBank::new(lang);
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fmt_err = |message: String| Error::Format {
            context: path.display().to_string(),
            line: i + 1,
            message,
        };
        let tree = parse_brackets(&line).map_err(|e| fmt_err(e.to_string()))?;
        bank.entries
            .push(ParseEntry::from_tree(tree).map_err(|e| fmt_err(e.to_string()))?);
    }
    Ok(bank)
}

pub fn save_parse_bank(bank: &ParseBank, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for e in &bank.entries {
        writeln!(w, "{}", e.tree).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Deterministic stand-in parser derived from a parse bank: words are
/// tagged with their most frequent bank POS, and a POS sequence seen in the
/// bank reuses that tree's bracketing. Anything else gets a flat tree.
#[derive(Debug, Clone)]
pub struct BankParser {
    root_label: String,
    tags: HashMap<String, String>,
    skeletons: HashMap<Vec<String>, ParseTree>,
}

pub const UNKNOWN_POS: &str = "X";

impl BankParser {
    pub fn new<'a>(banks: impl IntoIterator<Item = &'a ParseBank>) -> Self {
        let mut counts: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
        let mut skeletons = HashMap::new();
        let mut roots: BTreeMap<String, usize> = BTreeMap::new();
        for bank in banks {
            for e in &bank.entries {
                for (t, p) in e.tokens.iter().zip(&e.pos) {
                    *counts
                        .entry(t.clone())
                        .or_default()
                        .entry(p.clone())
                        .or_insert(0) += 1;
                }
                skeletons
                    .entry(e.pos.clone())
                    .or_insert_with(|| e.tree.clone());
                *roots.entry(e.tree.label().to_string()).or_insert(0) += 1;
            }
        }
        let tags = counts
            .into_iter()
            .map(|(w, c)| {
                // Highest count; ties go to the alphabetically first tag.
                let best = c
                    .iter()
                    .fold(None::<(&String, usize)>, |acc, (p, &n)| match acc {
                        Some((_, bn)) if bn >= n => acc,
                        _ => Some((p, n)),
                    })
                    .map(|(p, _)| p.clone())
                    .unwrap_or_else(|| UNKNOWN_POS.to_string());
                (w, best)
            })
            .collect();
        let root_label = roots
            .iter()
            .fold(None::<(&String, usize)>, |acc, (r, &n)| match acc {
                Some((_, bn)) if bn >= n => acc,
                _ => Some((r, n)),
            })
            .map(|(r, _)| r.clone())
            .unwrap_or_else(|| "S".to_string());
        BankParser {
            root_label,
            tags,
            skeletons,
        }
    }

    pub fn tag(&self, token: &str) -> &str {
        self.tags.get(token).map_or(UNKNOWN_POS, String::as_str)
    }

    pub fn parse<S: AsRef<str>>(&self, tokens: &[S]) -> ParseTree {
        let pos: Vec<String> = tokens.iter().map(|t| self.tag(t.as_ref()).to_string()).collect();
        if let Some(skel) = self.skeletons.get(&pos) {
            let mut it = tokens.iter();
            return skel.map_tokens(&mut |_| it.next().expect("same length").as_ref().to_string());
        }
        ParseTree::node(
            self.root_label.clone(),
            tokens
                .iter()
                .zip(pos)
                .map(|(t, p)| ParseTree::preterminal(p, t.as_ref()))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_round_trip_and_parser() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bank.txt");
        std::fs::write(
            &p,
            "(S (NP (DT the) (N dog)) (VP (V ran)))\n\n(S (NP (N cats)) (VP (V sleep)))\n",
        )
        .unwrap();
        let bank = load_parse_bank(&p, "en").unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank.entries[0].pos, vec!["DT", "N", "V"]);
        let out = dir.path().join("out.txt");
        save_parse_bank(&bank, &out).unwrap();
        assert_eq!(load_parse_bank(&out, "en").unwrap(), bank);

        let parser = BankParser::new([&bank]);
        let t = parser.parse(&["the", "cats", "sleep"]);
        assert_eq!(t.to_string(), "(S (NP (DT the) (N cats)) (VP (V sleep)))");
        let flat = parser.parse(&["zzz", "ran"]);
        assert_eq!(flat.to_string(), "(S (X zzz) (V ran))");
    }

    #[test]
    fn bad_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bank.txt");
        std::fs::write(&p, "(S (N a))\n(S (N a)\n").unwrap();
        match load_parse_bank(&p, "en") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}

//! A synthetic bitext world with gold semantics and syntax.
//!
//! A *frame* fixes one lexeme per semantic role; a *template* is a bracketed
//! tree per language with one slot per role plus function words. Each pair
//! renders one frame through independently drawn templates of the two
//! languages, so meaning is shared across the pair while syntax varies.

use std::collections::{BTreeSet, HashSet};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BitextCorpus, ParseBank, ParseEntry};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::trees::{parse_brackets, ParseTree};

const SLOT_PREFIX: char = '$';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleSpec {
    pub name: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub code: String,
    /// Letters used to build content-word syllables.
    pub consonants: String,
    pub vowels: String,
    /// Bracketed templates; `$ROLE` leaves are slots.
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticWorldConfig {
    pub roles: Vec<RoleSpec>,
    pub languages: Vec<LanguageSpec>,
    pub n_pairs: usize,
    pub seed: u64,
}

impl Default for SyntheticWorldConfig {
    fn default() -> Self {
        let roles = ["AGT", "ACT", "THM", "LOC"]
            .iter()
            .map(|r| RoleSpec {
                name: r.to_string(),
                size: 20,
            })
            .collect();
        let l1 = [
            "(S (NP (DT the) (N $AGT)) (VP (V $ACT) (NP (DT the) (N $THM)) (PP (P in) (NP (DT the) (N $LOC)))))",
            "(S (NP (DT the) (N $THM)) (VP (AUX was) (V $ACT) (PP (P by) (NP (DT the) (N $AGT))) (PP (P in) (NP (N $LOC)))))",
            "(S (PP (P in) (NP (DT the) (N $LOC))) (NP (N $AGT)) (VP (V $ACT) (NP (DT a) (N $THM))))",
            "(SQ (AUX did) (NP (DT the) (N $AGT)) (VP (V $ACT) (NP (DT the) (N $THM)) (PP (P at) (NP (N $LOC)))))",
            "(S (NP (N $AGT)) (VP (V $ACT) (NP (N $THM)) (PP (P near) (NP (DT the) (N $LOC)))))",
            "(S (NP (DT a) (N $THM)) (VP (AUX was) (V $ACT) (PP (P near) (NP (N $LOC))) (PP (P by) (NP (DT a) (N $AGT)))))",
        ];
        let l2 = [
            "(S (NP (N $AGT) (PT ga)) (NP (N $THM) (PT o)) (NP (N $LOC) (PT de)) (VP (V $ACT)))",
            "(S (NP (N $LOC) (PT de)) (NP (N $AGT) (PT ga)) (NP (N $THM) (PT o)) (VP (V $ACT) (AX ta)))",
            "(S (NP (N $THM) (PT wa)) (NP (N $AGT) (PT ni)) (VP (V $ACT) (AX re) (AX ta)) (NP (N $LOC) (PT de)))",
            "(S (NP (DM ko) (N $AGT) (PT ga)) (NP (N $LOC) (PT de)) (NP (N $THM) (PT o)) (VP (V $ACT)))",
            "(S (VP (V $ACT)) (NP (N $AGT) (PT ga)) (NP (N $THM) (PT o)) (NP (N $LOC) (PT ni)))",
            "(SQ (NP (N $AGT) (PT ga)) (NP (DM so) (N $THM) (PT o)) (NP (N $LOC) (PT de)) (VP (V $ACT)) (Q ka))",
        ];
        let lang = |code: &str, consonants: &str, vowels: &str, t: &[&str]| LanguageSpec {
            code: code.to_string(),
            consonants: consonants.to_string(),
            vowels: vowels.to_string(),
            templates: t.iter().map(|s| s.to_string()).collect(),
        };
        SyntheticWorldConfig {
            roles,
            languages: vec![
                lang("l1", "bdgklmnprst", "aeiou", &l1),
                lang("l2", "cfhjqvwxz", "aeiouy", &l2),
            ],
            n_pairs: 10_000,
            seed: 1,
        }
    }
}

/// A parsed template. `slots[i]` is the role index of the i-th slot leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    /// Global template ID, unique across languages.
    pub id: usize,
    pub tree: ParseTree,
    pub pos: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentenceGold {
    pub frame: u64,
    pub template: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: SyntheticWorldConfig,
    /// `[lang][role][lexeme]`
    lexicon: Vec<Vec<Vec<String>>>,
    function_words: Vec<BTreeSet<String>>,
    templates: Vec<Vec<Template>>,
}

impl SyntheticWorld {
    pub fn new(config: SyntheticWorldConfig) -> Result<Self> {
        if config.roles.is_empty() {
            return Err(Error::Config("synthetic world needs at least one role".into()));
        }
        if let Some(r) = config.roles.iter().find(|r| r.size == 0) {
            return Err(Error::Config(format!("role {} has an empty lexicon", r.name)));
        }
        if config.languages.len() != 2 {
            return Err(Error::Config(format!(
                "synthetic bitext needs exactly 2 languages, got {}",
                config.languages.len()
            )));
        }
        if config.languages[0].code == config.languages[1].code {
            return Err(Error::Config("the two languages must differ".into()));
        }
        let role_index = |name: &str| config.roles.iter().position(|r| r.name == name);

        let mut templates = Vec::new();
        let mut function_words = Vec::new();
        let mut next_id = 0;
        for lang in &config.languages {
            if lang.templates.len() < 2 {
                return Err(Error::Config(format!(
                    "language {} needs at least 2 templates",
                    lang.code
                )));
            }
            let mut fw = BTreeSet::new();
            let mut parsed: Vec<Template> = Vec::new();
            for (ti, text) in lang.templates.iter().enumerate() {
                let bad = |m: String| Error::Config(format!("{} template {ti}: {m}", lang.code));
                let tree = parse_brackets(text).map_err(|e| bad(e.to_string()))?;
                let entry = ParseEntry::from_tree(tree).map_err(|e| bad(e.to_string()))?;
                let mut seen = vec![0usize; config.roles.len()];
                for tok in &entry.tokens {
                    match tok.strip_prefix(SLOT_PREFIX) {
                        Some(role) => {
                            let r = role_index(role)
                                .ok_or_else(|| bad(format!("unknown role slot {tok}")))?;
                            seen[r] += 1;
                        }
                        None => {
                            fw.insert(tok.clone());
                        }
                    }
                }
                if seen.iter().any(|&c| c != 1) {
                    return Err(bad("every role must fill exactly one slot".into()));
                }
                if let Some(prev) = parsed.iter().position(|t| t.pos == entry.pos) {
                    return Err(bad(format!(
                        "POS sequence {:?} duplicates template {prev}",
                        entry.pos
                    )));
                }
                parsed.push(Template {
                    id: next_id,
                    tree: entry.tree,
                    pos: entry.pos,
                });
                next_id += 1;
            }
            templates.push(parsed);
            function_words.push(fw);
        }

        let mut used: HashSet<String> = function_words.iter().flatten().cloned().collect();
        let mut lexicon = Vec::new();
        for (li, lang) in config.languages.iter().enumerate() {
            let cons: Vec<char> = lang.consonants.chars().collect();
            let vows: Vec<char> = lang.vowels.chars().collect();
            if cons.is_empty() || vows.is_empty() {
                return Err(Error::Config(format!("language {} has no letters", lang.code)));
            }
            let mut rng = substream(config.seed, "lexicon", li as u64);
            let mut per_role = Vec::new();
            for role in &config.roles {
                let mut words = Vec::with_capacity(role.size);
                let mut attempts = 0;
                while words.len() < role.size {
                    attempts += 1;
                    if attempts > 100_000 {
                        return Err(Error::Config(format!(
                            "language {}: letter inventory too small for the lexicon",
                            lang.code
                        )));
                    }
                    let n_syll = rng.random_range(2..=3);
                    let w: String = (0..n_syll)
                        .flat_map(|_| {
                            [
                                cons[rng.random_range(0..cons.len())],
                                vows[rng.random_range(0..vows.len())],
                            ]
                        })
                        .collect();
                    if used.insert(w.clone()) {
                        words.push(w);
                    }
                }
                per_role.push(words);
            }
            lexicon.push(per_role);
        }

        Ok(SyntheticWorld {
            config,
            lexicon,
            function_words,
            templates,
        })
    }

    pub fn languages(&self) -> Vec<String> {
        self.config.languages.iter().map(|l| l.code.clone()).collect()
    }

    pub fn lang_index(&self, code: &str) -> Result<usize> {
        self.config
            .languages
            .iter()
            .position(|l| l.code == code)
            .ok_or_else(|| Error::UnknownLanguage(code.to_string()))
    }

    pub fn templates(&self, lang: usize) -> &[Template] {
        &self.templates[lang]
    }

    /// Language index and local index of a global template ID.
    pub fn locate_template(&self, id: usize) -> Option<(usize, usize)> {
        self.templates.iter().enumerate().find_map(|(li, ts)| {
            ts.iter().position(|t| t.id == id).map(|ti| (li, ti))
        })
    }

    pub fn n_frames(&self) -> u64 {
        self.config.roles.iter().map(|r| r.size as u64).product()
    }

    pub fn frame_id(&self, fillers: &[usize]) -> u64 {
        fillers
            .iter()
            .zip(&self.config.roles)
            .fold(0u64, |acc, (&f, r)| acc * r.size as u64 + f as u64)
    }

    pub fn frame_fillers(&self, mut id: u64) -> Vec<usize> {
        let mut out = vec![0; self.config.roles.len()];
        for (slot, r) in out.iter_mut().zip(&self.config.roles).rev() {
            *slot = (id % r.size as u64) as usize;
            id /= r.size as u64;
        }
        out
    }

    pub fn sample_frame<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.config
            .roles
            .iter()
            .map(|r| rng.random_range(0..r.size))
            .collect()
    }

    pub fn lexeme(&self, lang: usize, role: usize, filler: usize) -> &str {
        &self.lexicon[lang][role][filler]
    }

    /// All words of a language: content lexemes and function words.
    pub fn vocabulary(&self, lang: usize) -> BTreeSet<String> {
        self.lexicon[lang]
            .iter()
            .flatten()
            .cloned()
            .chain(self.function_words[lang].iter().cloned())
            .collect()
    }

    /// Render `fillers` through template `template` of language `lang`.
    pub fn render(&self, fillers: &[usize], lang: usize, template: usize) -> ParseEntry {
        let t = &self.templates[lang][template];
        let tree = t.tree.map_tokens(&mut |tok| match tok.strip_prefix(SLOT_PREFIX) {
            Some(role) => {
                let r = self
                    .config
                    .roles
                    .iter()
                    .position(|x| x.name == role)
                    .expect("validated slot");
                self.lexicon[lang][r][fillers[r]].clone()
            }
            None => tok.to_string(),
        });
        ParseEntry {
            tokens: tree.tokens().into_iter().map(str::to_string).collect(),
            pos: t.pos.clone(),
            tree,
        }
    }

    pub fn gold(&self, fillers: &[usize], lang: usize, template: usize) -> SentenceGold {
        SentenceGold {
            frame: self.frame_id(fillers),
            template: self.templates[lang][template].id,
        }
    }
}

/// Bitext drawn from a world, with per-language parse banks aligned to the
/// corpus and gold labels for both sides of every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBitext {
    pub corpus: BitextCorpus,
    pub banks: Vec<ParseBank>,
    pub gold: Vec<[SentenceGold; 2]>,
}

impl SyntheticBitext {
    pub fn side_gold(&self, lang: usize) -> impl Iterator<Item = SentenceGold> + '_ {
        self.gold.iter().map(move |g| g[lang])
    }
}

pub fn gen_synthetic_bitext(world: &SyntheticWorld) -> Result<SyntheticBitext> {
    let langs = world.languages();
    let mut corpus = BitextCorpus::new(&langs[0], &langs[1]);
    let mut banks = vec![ParseBank::new(&langs[0]), ParseBank::new(&langs[1])];
    let mut gold = Vec::with_capacity(world.config.n_pairs);
    let mut rng = substream(world.config.seed, "bitext", 0);
    for _ in 0..world.config.n_pairs {
        let frame = world.sample_frame(&mut rng);
        let t0 = rng.random_range(0..world.templates(0).len());
        let t1 = rng.random_range(0..world.templates(1).len());
        let a = world.render(&frame, 0, t0);
        let b = world.render(&frame, 1, t1);
        corpus.push(a.tokens.clone(), b.tokens.clone());
        banks[0].entries.push(a);
        banks[1].entries.push(b);
        gold.push([world.gold(&frame, 0, t0), world.gold(&frame, 1, t1)]);
    }
    Ok(SyntheticBitext {
        corpus,
        banks,
        gold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeItem {
    pub entry: ParseEntry,
    pub gold: SentenceGold,
}

/// Retrieval probe data for one language: each query frame appears exactly
/// once in the pool, under an independently drawn template.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub lang: String,
    pub queries: Vec<ProbeItem>,
    pub pool: Vec<ProbeItem>,
}

pub fn gen_probe_set(world: &SyntheticWorld, lang: &str, n_frames: usize, seed: u64) -> Result<ProbeSet> {
    let li = world.lang_index(lang)?;
    if (n_frames as u64) > world.n_frames() {
        return Err(Error::Config(format!(
            "probe asks for {n_frames} frames, world has {}",
            world.n_frames()
        )));
    }
    let nt = world.templates(li).len();
    let mut rng = substream(seed, "probe", li as u64);
    let mut seen = HashSet::new();
    let mut queries = Vec::with_capacity(n_frames);
    let mut pool = Vec::with_capacity(n_frames);
    while queries.len() < n_frames {
        let frame = world.sample_frame(&mut rng);
        if !seen.insert(world.frame_id(&frame)) {
            continue;
        }
        let tq = rng.random_range(0..nt);
        let tp = rng.random_range(0..nt);
        queries.push(ProbeItem {
            entry: world.render(&frame, li, tq),
            gold: world.gold(&frame, li, tq),
        });
        pool.push(ProbeItem {
            entry: world.render(&frame, li, tp),
            gold: world.gold(&frame, li, tp),
        });
    }
    Ok(ProbeSet {
        lang: lang.to_string(),
        queries,
        pool,
    })
}

/// Sentence pair with graded gold similarity (fraction of shared role fillers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsPair {
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub gold: f64,
}

pub fn gen_sts_pairs(world: &SyntheticWorld, lang: &str, n: usize, seed: u64) -> Result<Vec<StsPair>> {
    let li = world.lang_index(lang)?;
    let n_roles = world.config.roles.len();
    let nt = world.templates(li).len();
    let mut rng = substream(seed, "sts", li as u64);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let fa = world.sample_frame(&mut rng);
        let keep = rng.random_range(0..=n_roles);
        let kept: HashSet<usize> = sample(&mut rng, n_roles, keep).into_iter().collect();
        let mut fb = fa.clone();
        let mut shared = keep;
        for (r, f) in fb.iter_mut().enumerate() {
            if kept.contains(&r) {
                continue;
            }
            let size = world.config.roles[r].size;
            if size < 2 {
                shared += 1;
                continue;
            }
            let x = rng.random_range(0..size - 1);
            *f = if x >= *f { x + 1 } else { x };
        }
        let ta = rng.random_range(0..nt);
        let tb = rng.random_range(0..nt);
        out.push(StsPair {
            a: world.render(&fa, li, ta).tokens,
            b: world.render(&fb, li, tb).tokens,
            gold: shared as f64 / n_roles as f64,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_world(n_pairs: usize, seed: u64) -> SyntheticWorld {
        SyntheticWorld::new(SyntheticWorldConfig {
            n_pairs,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = gen_synthetic_bitext(&small_world(300, 4)).unwrap();
        let b = gen_synthetic_bitext(&small_world(300, 4)).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic_bitext(&small_world(300, 5)).unwrap();
        assert_ne!(a.corpus, c.corpus);
    }

    #[test]
    fn pairs_share_frames() {
        let w = small_world(500, 2);
        let bt = gen_synthetic_bitext(&w).unwrap();
        for (g, (e0, e1)) in bt.gold.iter().zip(bt.banks[0].entries.iter().zip(&bt.banks[1].entries)) {
            assert_eq!(g[0].frame, g[1].frame);
            assert_eq!(e0.tokens.len(), e0.pos.len());
            assert_eq!(e1.tree.tokens().len(), e1.tokens.len());
        }
        for (p, e) in bt.corpus.pairs.iter().zip(&bt.banks[0].entries) {
            assert_eq!(p.src_tokens, e.tokens);
        }
    }

    #[test]
    fn lexicons_are_disjoint() {
        let w = small_world(1, 3);
        let a = w.vocabulary(0);
        let b = w.vocabulary(1);
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len(), 80 + w.function_words[0].len());
    }

    #[test]
    fn frame_ids_round_trip() {
        let w = small_world(1, 3);
        assert_eq!(w.n_frames(), 160_000);
        for id in [0u64, 1, 12345, 159_999] {
            assert_eq!(w.frame_id(&w.frame_fillers(id)), id);
        }
    }

    #[test]
    fn rejects_indistinguishable_templates() {
        let mut cfg = SyntheticWorldConfig::default();
        cfg.languages[0].templates[1] = cfg.languages[0].templates[0].replace("the", "a");
        assert!(matches!(SyntheticWorld::new(cfg), Err(Error::Config(_))));
        let mut cfg = SyntheticWorldConfig::default();
        cfg.languages[1].templates.truncate(1);
        assert!(SyntheticWorld::new(cfg).is_err());
        let mut cfg = SyntheticWorldConfig::default();
        cfg.languages[0].templates[0] = "(S (N $AGT) (V $ACT))".into();
        assert!(SyntheticWorld::new(cfg).is_err());
    }

    #[test]
    fn probe_set_structure() {
        let w = small_world(1, 3);
        let p = gen_probe_set(&w, "l1", 50, 9).unwrap();
        assert_eq!(p.queries.len(), 50);
        let mut same_template = 0;
        for (q, c) in p.queries.iter().zip(&p.pool) {
            assert_eq!(q.gold.frame, c.gold.frame);
            same_template += usize::from(q.gold.template == c.gold.template);
        }
        assert!(same_template < 25);
    }

    #[test]
    fn sts_gold_in_range() {
        let w = small_world(1, 3);
        let pairs = gen_sts_pairs(&w, "l2", 200, 1).unwrap();
        assert!(pairs.iter().all(|p| (0.0..=1.0).contains(&p.gold)));
        assert!(pairs.iter().any(|p| p.gold == 1.0));
        assert!(pairs.iter().any(|p| p.gold == 0.0));
    }
}

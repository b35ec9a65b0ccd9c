//! Corpus ingestion, the synthetic bitext world, evaluation triples,
//! word noising and batching.

mod batch;
mod bitext;
mod noise;
mod parsebank;
mod synth;
mod triples;

pub use batch::{make_batches, Batch, BatchStream, EncodedPair, Padded};
pub use bitext::{
    load_bitext, save_bitext, BitextCorpus, BitextPair, BitextSource, LoadedBitext,
};
pub use noise::{noise_indices, noise_within_classes, noise_words, noise_words_with};
pub use parsebank::{load_parse_bank, save_parse_bank, BankParser, ParseBank, ParseEntry};
pub use synth::{
    gen_probe_set, gen_sts_pairs, gen_synthetic_bitext, LanguageSpec, ProbeItem, ProbeSet,
    RoleSpec, SentenceGold, StsPair, SyntheticBitext, SyntheticWorld, SyntheticWorldConfig,
    Template,
};
pub use triples::{
    check_triple, gen_synthetic_triples, load_triples, save_triples, EvalTriple, GoldTriple,
    TaskKind,
};

/// Split on whitespace into owned tokens.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// Join tokens with single spaces.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(" ")
}

//! Overlap metrics, correlation and the disentanglement probes.

mod overlap;
mod probe;
mod stats;

pub use overlap::{bleu, lcs_len, rouge_l, rouge_n, TextMode};
pub use probe::{
    bag_of_vectors, retrieval_probe, sts_probe, syntax_probe, Orientation, ProbeReport,
    RetrievalReport, SyntaxProbeReport, RANDOM_RUNS,
};
pub use stats::{cosine, pearson};

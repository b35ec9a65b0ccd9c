//! Bracketed parse trees, tree edit distance, labeled span F1 and
//! POS-sequence utilities.

mod pos;
mod spans;
mod ted;
mod tree;

pub use pos::{pos_accuracy, pos_seq_edit_distance};
pub use spans::{labeled_f1, labeled_spans, Span};
pub use ted::{st_score, tree_edit_distance};
pub use tree::{parse_brackets, ParseTree};

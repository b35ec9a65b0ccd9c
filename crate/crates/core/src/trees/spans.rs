use std::collections::BTreeMap;

use super::ParseTree;
use crate::error::{Error, Result};

/// A labeled constituent span over token positions `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Span {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// Multiset of labeled spans used for F1. Preterminals are excluded, as is
/// a unary root that only wraps a child over the same span.
pub fn labeled_spans(tree: &ParseTree) -> BTreeMap<Span, usize> {
    let mut out = BTreeMap::new();
    let mut pos = 0;
    collect(tree, &mut pos, &mut out);
    if let ParseTree::Node { label, children } = tree {
        let wrapper = children.len() == 1 && !children[0].is_leaf() && !tree.is_preterminal();
        if wrapper {
            let root = Span {
                label: label.clone(),
                start: 0,
                end: pos,
            };
            if let Some(c) = out.get_mut(&root) {
                *c -= 1;
                if *c == 0 {
                    out.remove(&root);
                }
            }
        }
    }
    out
}

fn collect(node: &ParseTree, pos: &mut usize, out: &mut BTreeMap<Span, usize>) {
    match node {
        ParseTree::Leaf(_) => *pos += 1,
        ParseTree::Node { label, children } => {
            let start = *pos;
            for c in children {
                collect(c, pos, out);
            }
            if !node.is_preterminal() {
                let span = Span {
                    label: label.clone(),
                    start,
                    end: *pos,
                };
                *out.entry(span).or_insert(0) += 1;
            }
        }
    }
}

/// Labeled span F1 between two parses of equal-length sentences.
pub fn labeled_f1(t1: &ParseTree, t2: &ParseTree) -> Result<f64> {
    let (n1, n2) = (t1.tokens().len(), t2.tokens().len());
    if n1 != n2 {
        return Err(Error::invalid(format!(
            "labeled_f1: yield lengths differ ({n1} vs {n2})"
        )));
    }
    let a = labeled_spans(t1);
    let b = labeled_spans(t2);
    let total_a: usize = a.values().sum();
    let total_b: usize = b.values().sum();
    if total_a == 0 && total_b == 0 {
        return Ok(1.0);
    }
    let matched: usize = a
        .iter()
        .map(|(s, &c)| c.min(b.get(s).copied().unwrap_or(0)))
        .sum();
    if matched == 0 {
        return Ok(0.0);
    }
    let p = matched as f64 / total_a as f64;
    let r = matched as f64 / total_b as f64;
    Ok(2.0 * p * r / (p + r))
}

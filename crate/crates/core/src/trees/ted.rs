//! Zhang-Shasha ordered tree edit distance with unit costs.

use super::ParseTree;
use crate::error::{Error, Result};

/// Postorder view of a tree: labels, leftmost-leaf indices and keyroots,
/// all 1-based as in the classic formulation.
struct Postorder<'a> {
    labels: Vec<&'a str>,
    lml: Vec<usize>,
    keyroots: Vec<usize>,
}

impl<'a> Postorder<'a> {
    fn new(tree: &'a ParseTree) -> Self {
        let mut labels = vec![""];
        let mut lml = vec![0];
        Self::walk(tree, &mut labels, &mut lml);
        let n = labels.len() - 1;
        // A keyroot is the highest-numbered node for each distinct leftmost leaf.
        let mut seen = vec![false; n + 1];
        let mut keyroots = Vec::new();
        for i in (1..=n).rev() {
            if !seen[lml[i]] {
                seen[lml[i]] = true;
                keyroots.push(i);
            }
        }
        keyroots.reverse();
        Postorder {
            labels,
            lml,
            keyroots,
        }
    }

    fn walk(node: &'a ParseTree, labels: &mut Vec<&'a str>, lml: &mut Vec<usize>) -> usize {
        let mut first = None;
        for c in node.children() {
            let leftmost = Self::walk(c, labels, lml);
            first.get_or_insert(leftmost);
        }
        labels.push(node.label());
        let idx = labels.len() - 1;
        let leftmost = first.unwrap_or(idx);
        lml.push(leftmost);
        leftmost
    }

    fn len(&self) -> usize {
        self.labels.len() - 1
    }
}

/// Edit distance between two ordered labeled trees (insert, delete and
/// relabel all cost 1). Every node, token leaves included, is an edit unit;
/// use [`ParseTree::strip_tokens`] first to compare syntax only.
pub fn tree_edit_distance(t1: &ParseTree, t2: &ParseTree) -> usize {
    let a = Postorder::new(t1);
    let b = Postorder::new(t2);
    let (n, m) = (a.len(), b.len());
    let mut td = vec![vec![0usize; m + 1]; n + 1];
    let mut fd = vec![vec![0usize; m + 1]; n + 1];

    for &i in &a.keyroots {
        for &j in &b.keyroots {
            let (li, lj) = (a.lml[i], b.lml[j]);
            fd[li - 1][lj - 1] = 0;
            for di in li..=i {
                fd[di][lj - 1] = fd[di - 1][lj - 1] + 1;
            }
            for dj in lj..=j {
                fd[li - 1][dj] = fd[li - 1][dj - 1] + 1;
            }
            for di in li..=i {
                for dj in lj..=j {
                    let del = fd[di - 1][dj] + 1;
                    let ins = fd[di][dj - 1] + 1;
                    if a.lml[di] == li && b.lml[dj] == lj {
                        let relabel = usize::from(a.labels[di] != b.labels[dj]);
                        let v = del.min(ins).min(fd[di - 1][dj - 1] + relabel);
                        fd[di][dj] = v;
                        td[di][dj] = v;
                    } else {
                        let sub = fd[a.lml[di] - 1][b.lml[dj] - 1] + td[di][dj];
                        fd[di][dj] = del.min(ins).min(sub);
                    }
                }
            }
        }
    }
    td[n][m]
}

/// Mean tree edit distance over aligned (hypothesis, target) parses, with
/// word tokens stripped so only constituent and POS labels are compared.
pub fn st_score(hypotheses: &[ParseTree], targets: &[ParseTree]) -> Result<f64> {
    if hypotheses.len() != targets.len() {
        return Err(Error::invalid(format!(
            "st_score: {} hypotheses vs {} targets",
            hypotheses.len(),
            targets.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::invalid("st_score: no sentence pairs"));
    }
    let total: usize = hypotheses
        .iter()
        .zip(targets)
        .map(|(h, t)| tree_edit_distance(&h.strip_tokens(), &t.strip_tokens()))
        .sum();
    Ok(total as f64 / hypotheses.len() as f64)
}

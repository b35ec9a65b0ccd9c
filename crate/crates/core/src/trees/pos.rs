use crate::error::{Error, Result};

/// Fraction of positions whose labels agree.
pub fn pos_accuracy<T: PartialEq>(p1: &[T], p2: &[T]) -> Result<f64> {
    if p1.len() != p2.len() {
        return Err(Error::invalid(format!(
            "pos_accuracy: lengths differ ({} vs {})",
            p1.len(),
            p2.len()
        )));
    }
    if p1.is_empty() {
        return Ok(1.0);
    }
    let hits = p1.iter().zip(p2).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / p1.len() as f64)
}

/// Levenshtein distance over label sequences with unit costs.
pub fn pos_seq_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

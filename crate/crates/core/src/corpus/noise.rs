use rand::Rng;

use crate::rng::{substream, Rng as StreamRng};

/// Replace each index independently with probability `p` by a different
/// index drawn uniformly from `0..vocab_len`.
pub fn noise_indices<R: Rng + ?Sized>(ids: &[usize], p: f64, vocab_len: usize, rng: &mut R) -> Vec<usize> {
    assert!((0.0..=1.0).contains(&p), "noise probability {p} outside [0, 1]");
    ids.iter()
        .map(|&id| {
            if vocab_len < 2 || !rng.random_bool(p) {
                return id;
            }
            let r = rng.random_range(0..vocab_len - 1);
            if r >= id {
                r + 1
            } else {
                r
            }
        })
        .collect()
}

/// Like [`noise_indices`], but a selected word is replaced by a different
/// member of its own class (`class_of[id]` indexes `members`). Words alone
/// in their class are kept.
pub fn noise_within_classes<R: Rng + ?Sized>(
    ids: &[usize],
    p: f64,
    class_of: &[usize],
    members: &[Vec<usize>],
    rng: &mut R,
) -> Vec<usize> {
    assert!((0.0..=1.0).contains(&p), "noise probability {p} outside [0, 1]");
    ids.iter()
        .map(|&id| {
            let class = &members[class_of[id]];
            if class.len() < 2 || !rng.random_bool(p) {
                return id;
            }
            let own = class.iter().position(|&m| m == id).expect("word belongs to its class");
            let r = rng.random_range(0..class.len() - 1);
            class[if r >= own { r + 1 } else { r }]
        })
        .collect()
}

/// Word-level noising of encoder inputs: each word is replaced with
/// probability `p` by a different word drawn uniformly from `vocab`.
/// Words outside `vocab` are replaced by a uniform draw from all of it.
pub fn noise_words_with<R: Rng + ?Sized>(
    tokens: &[String],
    p: f64,
    vocab: &[String],
    rng: &mut R,
) -> Vec<String> {
    assert!((0.0..=1.0).contains(&p), "noise probability {p} outside [0, 1]");
    tokens
        .iter()
        .map(|t| {
            if vocab.is_empty() || !rng.random_bool(p) {
                return t.clone();
            }
            match vocab.iter().position(|v| v == t) {
                Some(own) if vocab.len() > 1 => {
                    let r = rng.random_range(0..vocab.len() - 1);
                    vocab[if r >= own { r + 1 } else { r }].clone()
                }
                Some(_) => t.clone(),
                None => vocab[rng.random_range(0..vocab.len())].clone(),
            }
        })
        .collect()
}

pub fn noise_words(tokens: &[String], p: f64, vocab: &[String], seed: u64) -> Vec<String> {
    let mut rng: StreamRng = substream(seed, "noise", 0);
    noise_words_with(tokens, p, vocab, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vec<String> {
        (0..50).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn zero_is_identity_one_replaces_all() {
        let v = vocab();
        let toks: Vec<String> = v[..10].to_vec();
        assert_eq!(noise_words(&toks, 0.0, &v, 3), toks);
        let all = noise_words(&toks, 1.0, &v, 3);
        assert_eq!(all.len(), toks.len());
        assert!(all.iter().zip(&toks).all(|(a, b)| a != b));
    }

    #[test]
    fn deterministic_given_seed() {
        let v = vocab();
        let toks: Vec<String> = v[..20].to_vec();
        assert_eq!(noise_words(&toks, 0.5, &v, 11), noise_words(&toks, 0.5, &v, 11));
    }

    #[test]
    fn empirical_rate_near_p() {
        let mut rng = substream(5, "rate", 0);
        let ids: Vec<usize> = (0..100_000).map(|i| i % 50).collect();
        let out = noise_indices(&ids, 0.9, 50, &mut rng);
        let changed = ids.iter().zip(&out).filter(|(a, b)| a != b).count();
        let rate = changed as f64 / ids.len() as f64;
        assert!((rate - 0.9).abs() < 0.005, "rate {rate}");
    }

    #[test]
    fn class_noise_stays_in_class() {
        let members = vec![vec![0, 2, 4], vec![1, 3], vec![5]];
        let class_of = [0, 1, 0, 1, 0, 2];
        let mut rng = substream(2, "class", 0);
        let ids: Vec<usize> = (0..6).cycle().take(6000).collect();
        let out = noise_within_classes(&ids, 1.0, &class_of, &members, &mut rng);
        for (a, b) in ids.iter().zip(&out) {
            assert_eq!(class_of[*a], class_of[*b]);
            assert_eq!(a == b, *a == 5);
        }
        assert_eq!(noise_within_classes(&ids, 0.0, &class_of, &members, &mut rng), ids);
    }
}

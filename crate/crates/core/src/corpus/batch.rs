use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::subword::{SubwordSeq, PAD};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub src: SubwordSeq,
    pub tgt: SubwordSeq,
}

/// Token IDs right-padded with [`PAD`] to the longest sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Padded {
    pub ids: Vec<Vec<u32>>,
    pub lengths: Vec<usize>,
}

impl Padded {
    pub fn new<'a>(seqs: impl IntoIterator<Item = &'a [u32]>) -> Self {
        let seqs: Vec<&[u32]> = seqs.into_iter().collect();
        let max = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        Padded {
            ids: seqs
                .iter()
                .map(|s| {
                    let mut v = s.to_vec();
                    v.resize(max, PAD);
                    v
                })
                .collect(),
            lengths: seqs.iter().map(|s| s.len()).collect(),
        }
    }

    pub fn max_len(&self) -> usize {
        self.ids.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// Corpus indices of the pairs in this batch.
    pub indices: Vec<usize>,
    pub src: Padded,
    pub tgt: Padded,
}

/// Per-epoch shuffled batches over a fixed encoded corpus.
#[derive(Debug, Clone)]
pub struct BatchStream<'a> {
    pairs: &'a [EncodedPair],
    batch_size: usize,
    seed: u64,
}

pub fn make_batches(pairs: &[EncodedPair], batch_size: usize, seed: u64) -> Result<BatchStream<'_>> {
    if batch_size < 1 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    Ok(BatchStream {
        pairs,
        batch_size,
        seed,
    })
}

impl BatchStream<'_> {
    pub fn batches_per_epoch(&self) -> usize {
        self.pairs.len().div_ceil(self.batch_size)
    }

    /// Shuffled corpus order for `epoch`, chunked into batch index lists.
    pub fn order(&self, epoch: u64) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.pairs.len()).collect();
        idx.shuffle(&mut substream(self.seed, "batches", epoch));
        idx.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub fn epoch(&self, epoch: u64) -> Vec<Batch> {
        self.order(epoch)
            .into_iter()
            .map(|indices| Batch {
                src: Padded::new(indices.iter().map(|&i| self.pairs[i].src.ids.as_slice())),
                tgt: Padded::new(indices.iter().map(|&i| self.pairs[i].tgt.ids.as_slice())),
                indices,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(n: usize) -> Vec<EncodedPair> {
        (0..n)
            .map(|i| {
                let s = SubwordSeq {
                    ids: (0..=(i % 4) as u32).map(|x| x + 10).collect(),
                    word_boundary: vec![None; i % 4 + 1],
                    lang: "a".into(),
                };
                EncodedPair {
                    src: s.clone(),
                    tgt: s,
                }
            })
            .collect()
    }

    #[test]
    fn sizes_and_padding() {
        let p = pairs(10);
        let s = make_batches(&p, 3, 1).unwrap();
        let b = s.epoch(0);
        assert_eq!(b.iter().map(|b| b.indices.len()).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        for batch in &b {
            for (row, &len) in batch.src.ids.iter().zip(&batch.src.lengths) {
                assert!(row[len..].iter().all(|&x| x == PAD));
            }
        }
        assert!(make_batches(&p, 0, 1).is_err());
    }

    #[test]
    fn deterministic_and_complete() {
        let p = pairs(25);
        let s = make_batches(&p, 4, 7).unwrap();
        assert_eq!(s.epoch(0), s.epoch(0));
        let mut seen: Vec<usize> = (0..2).flat_map(|e| s.order(e).concat()).collect();
        seen.sort();
        let mut expect: Vec<usize> = (0..25).chain(0..25).collect();
        expect.sort();
        assert_eq!(seen, expect);
    }
}

mod common;

use mvgvae::corpus::{
    check_triple, gen_synthetic_bitext, gen_synthetic_triples, load_bitext, make_batches, noise_words, save_bitext,
    BitextSource, EncodedPair, SyntheticWorld, SyntheticWorldConfig,
};
use mvgvae::subword::{bpe_train, BpeModel};
use proptest::prelude::*;

fn corpus_bpe(merges: i64) -> (SyntheticWorld, BpeModel) {
    let f = common::fixture(300, merges, 5);
    (f.world, f.bpe)
}

#[test]
fn every_corpus_sentence_round_trips_through_bpe() {
    let f = common::fixture(300, 80, 5);
    for (lang, sent) in f.bitext.corpus.sentences() {
        let seq = f.bpe.encode(sent, lang).unwrap();
        assert_eq!(f.bpe.decode(&seq.ids).unwrap(), sent);
        assert_eq!(seq.num_words(), sent.len());
        assert_eq!(seq.ids.len(), seq.word_boundary.len());
    }
}

#[test]
fn merges_shorten_encodings() {
    let f0 = common::fixture(300, 0, 5);
    let f1 = common::fixture(300, 200, 5);
    let total = |bpe: &BpeModel| -> usize {
        f0.bitext
            .corpus
            .sentences()
            .map(|(l, s)| bpe.encode(s, l).unwrap().len())
            .sum()
    };
    assert!(total(&f1.bpe) < total(&f0.bpe));
    assert_eq!(f1.bpe.merges().len(), 200);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn unseen_words_over_known_characters_round_trip(words in prop::collection::vec("([bdgklmnprst][aeiou]){1,5}", 1..8)) {
        let (_, bpe) = corpus_bpe(60);
        let seq = bpe.encode(&words, "l1").unwrap();
        prop_assert_eq!(bpe.decode(&seq.ids).unwrap(), words);
    }

    #[test]
    fn text_format_round_trips(merges in 0i64..120) {
        let (_, bpe) = corpus_bpe(merges);
        prop_assert_eq!(BpeModel::from_text(&bpe.to_text()).unwrap(), bpe);
    }

    #[test]
    fn noise_keeps_length_and_vocabulary(p in 0.0f64..=1.0, seed in 0u64..500) {
        let vocab: Vec<String> = ["ka", "mo", "ti", "ru", "se"].iter().map(|s| s.to_string()).collect();
        let sent: Vec<String> = ["ka", "ti", "se", "se"].iter().map(|s| s.to_string()).collect();
        let out = noise_words(&sent, p, &vocab, seed);
        prop_assert_eq!(out.len(), sent.len());
        prop_assert!(out.iter().all(|w| vocab.contains(w)));
        prop_assert_eq!(&out, &noise_words(&sent, p, &vocab, seed));
    }
}

#[test]
fn bpe_training_is_deterministic_across_input_order() {
    let f = common::fixture(200, 40, 9);
    let langs = f.bitext.corpus.languages();
    let mut sents: Vec<&[String]> = f.bitext.corpus.sentences().map(|(_, s)| s).collect();
    sents.reverse();
    assert_eq!(bpe_train(sents, &langs, 40).unwrap(), f.bpe);
}

#[test]
fn synthetic_corpus_saves_and_loads() {
    let f = common::fixture(50, 0, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bitext.tsv");
    save_bitext(&f.bitext.corpus, &path).unwrap();
    let loaded = load_bitext(&BitextSource::Tsv(path), "l1", "l2").unwrap();
    assert_eq!(loaded.corpus, f.bitext.corpus);
    assert_eq!(loaded.rejected, 0);
}

#[test]
fn generated_triples_pass_the_checker() {
    let world = SyntheticWorld::new(SyntheticWorldConfig {
        n_pairs: 100,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let bitext = gen_synthetic_bitext(&world).unwrap();
    for (s, t) in [("l1", "l1"), ("l1", "l2"), ("l2", "l1"), ("l2", "l2")] {
        let triples = gen_synthetic_triples(&world, &bitext, 25, s, t, 3).unwrap();
        assert_eq!(triples.len(), 25);
        for g in &triples {
            check_triple(&world, g).unwrap();
            assert_eq!(g.triple.sem_lang, s);
            assert_eq!(g.triple.tgt_lang, t);
        }
    }
}

#[test]
fn batches_cover_every_pair_once_per_epoch() {
    let f = common::fixture(23, 0, 2);
    let pairs: Vec<EncodedPair> = f
        .bitext
        .corpus
        .pairs
        .iter()
        .map(|p| EncodedPair {
            src: f.bpe.encode(&p.src_tokens, "l1").unwrap(),
            tgt: f.bpe.encode(&p.tgt_tokens, "l2").unwrap(),
        })
        .collect();
    let stream = make_batches(&pairs, 5, 11).unwrap();
    for epoch in 0..3 {
        let mut seen: Vec<usize> = stream.order(epoch).concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
    }
    assert_ne!(stream.order(0), stream.order(1));
    assert!(make_batches(&pairs, 0, 11).is_err());
}

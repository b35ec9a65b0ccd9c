mod common;

use mvgvae::control::{
    beam_search, controlled_generate, encode_latents, nearest_neighbors, rank_by_cosine, represent,
    GenerationRequest, LatentPair, Variable,
};
use mvgvae::metrics::cosine;
use mvgvae::network::{log_softmax_rows, ModelParams};
use mvgvae::rng::substream;
use mvgvae::subword::{BOS, EOS};
use proptest::prelude::*;
use rand::Rng;

fn latent(model: &ModelParams, seed: u64) -> LatentPair {
    let mut rng = substream(seed, "latent", 0);
    let mut y: Vec<f64> = (0..model.config.latent.d_sem).map(|_| rng.random::<f64>() - 0.5).collect();
    let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    y.iter_mut().for_each(|v| *v /= n);
    let z = (0..model.config.latent.d_syn).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    LatentPair { y, z }
}

fn allowed(model: &ModelParams, v: usize) -> bool {
    v as u32 == EOS || v >= model.config.num_special()
}

/// Log-probabilities of each continuation of `generated` under teacher forcing.
fn next_logp(model: &ModelParams, lat: &LatentPair, tag: u32, generated: &[u32]) -> Vec<f64> {
    let mut prefix = vec![BOS, tag];
    prefix.extend_from_slice(generated);
    let lp = log_softmax_rows(&model.decode_logits(&lat.y, &lat.z, &prefix).unwrap());
    lp.row(prefix.len() - 1).to_vec()
}

fn greedy(model: &ModelParams, lat: &LatentPair, tag: u32, max_len: usize) -> (Vec<u32>, f64, bool) {
    let mut out = Vec::new();
    let mut total = 0.0;
    for step in 0..max_len {
        let lp = next_logp(model, lat, tag, &out);
        let (best, score) = lp
            .iter()
            .enumerate()
            .filter(|(v, _)| allowed(model, *v))
            .fold((0, f64::NEG_INFINITY), |acc, (v, &s)| if s > acc.1 { (v, s) } else { acc });
        total += score;
        if best as u32 == EOS {
            return (out, total / (step + 1) as f64, false);
        }
        out.push(best as u32);
    }
    let n = out.len() as f64;
    (out, total / n, true)
}

fn sequence_score(model: &ModelParams, lat: &LatentPair, tag: u32, ids: &[u32], truncated: bool) -> f64 {
    let mut total = 0.0;
    for t in 0..ids.len() {
        total += next_logp(model, lat, tag, &ids[..t])[ids[t] as usize];
    }
    if truncated {
        return total / ids.len() as f64;
    }
    total += next_logp(model, lat, tag, ids)[EOS as usize];
    total / (ids.len() + 1) as f64
}

#[test]
fn beam_one_is_greedy() {
    let f = common::fixture(40, 7, 3);
    for seed in 0..6 {
        let model = common::model(&f.bpe, 8, 16, seed);
        let lat = latent(&model, seed);
        let tag = f.bpe.tag_id(if seed % 2 == 0 { "l1" } else { "l2" }).unwrap();
        let (ids, score, trunc) = beam_search(&model, &lat, tag, 1, 12).unwrap();
        let (g_ids, g_score, g_trunc) = greedy(&model, &lat, tag, 12);
        assert_eq!(ids, g_ids);
        assert_eq!(trunc, g_trunc);
        assert!((score - g_score).abs() < 1e-9);
    }
}

#[test]
fn beam_output_is_well_formed_and_scored() {
    let f = common::fixture(40, 7, 3);
    for seed in 0..4 {
        let model = common::model(&f.bpe, 8, 16, seed);
        let lat = latent(&model, 10 + seed);
        let tag = f.bpe.tag_id("l2").unwrap();
        for beam in [2, 5, 10] {
            let (ids, score, trunc) = beam_search(&model, &lat, tag, beam, 10).unwrap();
            assert!(ids.len() <= 10);
            assert!(ids.iter().all(|&v| !f.bpe.is_special(v)), "{ids:?}");
            let want = sequence_score(&model, &lat, tag, &ids, trunc);
            assert!((score - want).abs() < 1e-9, "beam {beam}: {score} vs {want}");
        }
    }
}

#[test]
fn hitting_the_length_limit_is_flagged() {
    let f = common::fixture(40, 7, 3);
    let mut model = common::model(&f.bpe, 8, 16, 1);
    // Make the end marker practically impossible.
    model.out_proj.b.value[[0, EOS as usize]] = -1e3;
    let lat = latent(&model, 1);
    let (ids, score, trunc) = beam_search(&model, &lat, f.bpe.tag_id("l1").unwrap(), 3, 5).unwrap();
    assert!(trunc);
    assert_eq!(ids.len(), 5);
    assert!(score.is_finite());
    assert!(beam_search(&model, &lat, EOS, 3, 5).is_err());
}

#[test]
fn generation_is_deterministic_and_uses_requested_latents() {
    let f = common::fixture(40, 7, 3);
    let model = common::model(&f.bpe, 8, 16, 2);
    let (s, t) = (&f.bitext.corpus.pairs[0].src_tokens, &f.bitext.corpus.pairs[1].tgt_tokens);
    let req = GenerationRequest {
        sem_input: s.clone(),
        sem_lang: "l1".into(),
        syn_exemplar: t.clone(),
        syn_lang: "l2".into(),
        tgt_lang: "l2".into(),
        beam: 4,
        max_len: 12,
    };
    let a = controlled_generate(&model, &f.bpe, &req).unwrap();
    assert_eq!(a, controlled_generate(&model, &f.bpe, &req).unwrap());
    let lat = encode_latents(&model, &f.bpe, &req).unwrap();
    assert_eq!(lat.y, model.sem_encode(&f.bpe.encode(s, "l1").unwrap()).unwrap().mu);
    assert_eq!(lat.z, model.syn_encode(&f.bpe.encode(t, "l2").unwrap()).unwrap().mu);
    assert_eq!(f.bpe.decode(&a.ids).unwrap(), a.words);

    let mut bad = req.clone();
    bad.syn_lang = "l1".into();
    assert!(controlled_generate(&model, &f.bpe, &bad).is_err());
    let mut bad = req;
    bad.beam = 0;
    assert!(controlled_generate(&model, &f.bpe, &bad).is_err());
}

fn brute_force_rank(query: &[f64], pool: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    // Stable sort keeps lower indices first among ties.
    idx.sort_by(|&a, &b| cosine(query, &pool[b]).partial_cmp(&cosine(query, &pool[a])).unwrap());
    idx.truncate(k);
    idx
}

proptest! {
    #[test]
    fn ranking_matches_brute_force(
        pool in prop::collection::vec(prop::collection::vec(-3i8..4, 3), 1..30),
        q in prop::collection::vec(-3i8..4, 3),
        k in 0usize..40,
    ) {
        let pool: Vec<Vec<f64>> = pool.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect();
        let q: Vec<f64> = q.iter().map(|&x| x as f64).collect();
        let got: Vec<usize> = rank_by_cosine(&q, &pool, k).iter().map(|n| n.index).collect();
        prop_assert_eq!(got, brute_force_rank(&q, &pool, k));
    }
}

#[test]
fn query_in_pool_ranks_itself_first() {
    let f = common::fixture(40, 7, 3);
    let model = common::model(&f.bpe, 8, 16, 2);
    let pool: Vec<_> = f.bitext.corpus.pairs[..20]
        .iter()
        .map(|p| f.bpe.encode(&p.src_tokens, "l1").unwrap())
        .collect();
    for var in [Variable::Semantic, Variable::Syntactic] {
        for i in [0, 7, 19] {
            let nn = nearest_neighbors(&model, &pool[i], &pool, var, 5).unwrap();
            assert_eq!(nn.len(), 5);
            assert_eq!(nn[0].index, i);
            assert!((nn[0].score - 1.0).abs() < 1e-12);
            assert!(nn.windows(2).all(|w| w[0].score >= w[1].score));
        }
        assert!(nearest_neighbors(&model, &pool[0], &pool, var, 0).unwrap().is_empty());
        assert!(nearest_neighbors(&model, &pool[0], &[], var, 3).is_err());
        let reps = represent(&model, &pool, var).unwrap();
        assert_eq!(reps.len(), 20);
    }
    assert_eq!("sem".parse::<Variable>().unwrap(), Variable::Semantic);
    assert_eq!("syntactic".parse::<Variable>().unwrap(), Variable::Syntactic);
    assert!("other".parse::<Variable>().is_err());
}

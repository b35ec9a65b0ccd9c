#![allow(dead_code)]

use mvgvae::corpus::{gen_synthetic_bitext, SyntheticBitext, SyntheticWorld, SyntheticWorldConfig};
use mvgvae::latent::LatentConfig;
use mvgvae::network::{ModelConfig, ModelParams};
use mvgvae::subword::{bpe_train, BpeModel};

pub struct Fixture {
    pub world: SyntheticWorld,
    pub bitext: SyntheticBitext,
    pub bpe: BpeModel,
}

pub fn fixture(n_pairs: usize, merges: i64, seed: u64) -> Fixture {
    let world = SyntheticWorld::new(SyntheticWorldConfig {
        n_pairs,
        seed,
        ..Default::default()
    })
    .unwrap();
    let bitext = gen_synthetic_bitext(&world).unwrap();
    let langs = bitext.corpus.languages();
    let bpe = bpe_train(bitext.corpus.sentences().map(|(_, t)| t), &langs, merges).unwrap();
    Fixture { world, bitext, bpe }
}

pub fn model_config(bpe: &BpeModel, d: usize, hidden: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: bpe.vocab_size(),
        languages: bpe.languages().to_vec(),
        emb_dim: d,
        hidden,
        max_len: 16,
        init_scale: 0.1,
        latent: LatentConfig {
            d_sem: d,
            d_syn: d,
            ..LatentConfig::default()
        },
    }
}

pub fn model(bpe: &BpeModel, d: usize, hidden: usize, seed: u64) -> ModelParams {
    ModelParams::new(model_config(bpe, d, hidden), seed).unwrap()
}

//! The run configuration document (TOML) shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mvgvae::corpus::SyntheticWorldConfig;
use mvgvae::latent::LatentConfig;
use mvgvae::metrics::TextMode;
use mvgvae::network::ModelConfig;
use mvgvae::objective::TrainConfig;
use mvgvae::subword::BpeModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Top-level seed. World generation, initialization, batching, noise
    /// and probes all draw from named streams of it.
    pub seed: u64,
    pub world: SyntheticWorldConfig,
    pub synth: SynthConfig,
    pub bpe: BpeConfig,
    pub model: ModelSection,
    pub latent: LatentConfig,
    pub train: TrainConfig,
    pub generate: GenerateConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            world: SyntheticWorldConfig::default(),
            synth: SynthConfig::default(),
            bpe: BpeConfig::default(),
            model: ModelSection::default(),
            latent: LatentConfig::default(),
            train: TrainConfig::default(),
            generate: GenerateConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Test triples per task direction.
    pub n_triples: usize,
    /// Dev triples per task direction.
    pub n_dev: usize,
    /// Query frames in each retrieval probe set.
    pub probe_frames: usize,
    /// Sentence pairs in each similarity set.
    pub n_sts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_triples: 200,
            n_dev: 25,
            probe_frames: 500,
            n_sts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BpeConfig {
    pub merges: i64,
}

impl Default for BpeConfig {
    fn default() -> Self {
        BpeConfig { merges: 200 }
    }
}

/// Network sizes; vocabulary and languages come from the subword model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub emb_dim: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub init_scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            emb_dim: m.emb_dim,
            hidden: m.hidden,
            max_len: m.max_len,
            init_scale: m.init_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub beam: usize,
    /// Limit on generated subwords.
    pub max_len: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            beam: mvgvae::control::DEFAULT_BEAM,
            max_len: mvgvae::control::DEFAULT_MAX_OUTPUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub text_mode: TextMode,
    /// Longest sentence length stratum in the syntax probe.
    pub syn_max_len: usize,
    /// Queries per length stratum in the syntax probe.
    pub per_length: usize,
    /// Neighbors listed per query by `nn`.
    pub k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            text_mode: TextMode::Word,
            syn_max_len: 30,
            per_length: 300,
            k: 5,
        }
    }
}

/// Fallback input paths; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub bpe: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

/// Keys that exist in the nested library structs but are driven by the
/// top-level seed instead.
const SEED_KEYS: [&str; 2] = ["world.seed", "train.seed"];

impl RunConfig {
    /// Load from TOML, listing every unknown key and every invalid value in
    /// one error.
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        let mut unknown = Vec::new();
        unknown_keys(&toml::Value::Table(value.clone()), &schema(), "", &mut unknown);
        if !unknown.is_empty() {
            bail!(mvgvae::Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        let cfg: RunConfig = toml::Value::Table(value).try_into().context("config has a value of the wrong type")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut note = |r: mvgvae::Result<()>| {
            if let Err(e) = r {
                bad.push(match e {
                    mvgvae::Error::Config(m) => m,
                    other => other.to_string(),
                });
            }
        };
        note(self.train.validate());
        note(self.latent.validate());
        note(self.model_config(100, vec!["l1".into(), "l2".into()]).validate());
        if self.generate.beam < 1 {
            bad.push("generate.beam must be >= 1".into());
        }
        if self.generate.max_len < 1 {
            bad.push("generate.max_len must be >= 1".into());
        }
        if self.bpe.merges < 0 {
            bad.push("bpe.merges must be >= 0".into());
        }
        if self.world.n_pairs < 1 {
            bad.push("world.n_pairs must be >= 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            bail!(mvgvae::Error::Config(bad.join("; ")))
        }
    }

    /// The world configuration with the run seed applied.
    pub fn world_config(&self) -> SyntheticWorldConfig {
        SyntheticWorldConfig {
            seed: self.seed,
            ..self.world.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    fn model_config(&self, vocab_size: usize, languages: Vec<String>) -> ModelConfig {
        ModelConfig {
            vocab_size,
            languages,
            emb_dim: self.model.emb_dim,
            hidden: self.model.hidden,
            max_len: self.model.max_len,
            init_scale: self.model.init_scale,
            latent: self.latent.clone(),
        }
    }

    pub fn model_config_for(&self, bpe: &BpeModel) -> ModelConfig {
        self.model_config(bpe.vocab_size(), bpe.languages().to_vec())
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(canonical.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Every accepted key: the defaults with optional fields filled in.
fn schema() -> toml::Value {
    let mut full = RunConfig::default();
    full.train.patience = Some(0);
    full.train.max_steps = Some(0);
    full.paths = PathsConfig {
        corpus: Some(PathBuf::new()),
        bpe: Some(PathBuf::new()),
        dev: Some(PathBuf::new()),
        checkpoint: Some(PathBuf::new()),
    };
    toml::Value::try_from(&full).expect("defaults serialize")
}

fn unknown_keys(value: &toml::Value, schema: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    match (value, schema) {
        (toml::Value::Table(t), toml::Value::Table(s)) => {
            for (k, v) in t {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                match s.get(k) {
                    Some(sv) if !SEED_KEYS.contains(&path.as_str()) => unknown_keys(v, sv, &path, out),
                    _ => out.push(path),
                }
            }
        }
        (toml::Value::Array(items), toml::Value::Array(s)) => {
            if let Some(first) = s.first() {
                for (i, v) in items.iter().enumerate() {
                    unknown_keys(v, first, &format!("{prefix}[{i}]"), out);
                }
            }
        }
        _ => {}
    }
}

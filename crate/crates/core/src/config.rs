//! Run configuration: flat `key = value` text with `#` comments.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::checkpoint::ModelKind;
use crate::corpus::{fingerprint, SplitRatios};
use crate::error::{Error, Result};
use crate::selector::{SelectorConfig, SelectorTrainConfig};
use crate::summarizer::{Mode, SummarizerConfig, SummarizerTrainConfig};

pub const KEYS: &[&str] = &[
    "corpus",
    "lexicon",
    "embeddings",
    "tagged",
    "output_dir",
    "selector_checkpoint",
    "embedding_dim",
    "trainable_embeddings",
    "selector_hidden",
    "encoder_hidden",
    "ontology_hidden",
    "decoder_hidden",
    "dropout",
    "init_scale",
    "selector_lr",
    "summarizer_lr",
    "batch_size",
    "selector_epochs",
    "summarizer_epochs",
    "selector_patience",
    "summarizer_patience",
    "grad_clip",
    "epsilon",
    "epsilon_grid",
    "beam_size",
    "max_findings",
    "max_impression",
    "max_decode",
    "min_freq",
    "max_vocab",
    "train_ratio",
    "dev_ratio",
    "test_ratio",
    "mode",
    "seed",
    "precision",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Labeled dataset; defaults to `<output_dir>/tagged.jsonl`.
    pub tagged: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub selector_checkpoint: Option<PathBuf>,
    pub embedding_dim: usize,
    pub trainable_embeddings: bool,
    /// Selector hidden units per direction.
    pub selector_hidden: usize,
    /// Findings encoder width, both directions together.
    pub encoder_hidden: usize,
    pub ontology_hidden: usize,
    pub decoder_hidden: usize,
    pub dropout: f64,
    pub init_scale: f64,
    pub selector_lr: f64,
    pub summarizer_lr: f64,
    pub batch_size: usize,
    pub selector_epochs: usize,
    pub summarizer_epochs: usize,
    pub selector_patience: usize,
    pub summarizer_patience: usize,
    /// Global gradient-norm cap; 0 disables clipping.
    pub grad_clip: f64,
    pub epsilon: f64,
    pub epsilon_grid: Vec<f64>,
    pub beam_size: usize,
    pub max_findings: usize,
    pub max_impression: usize,
    pub max_decode: usize,
    pub min_freq: usize,
    /// 0 means unlimited.
    pub max_vocab: usize,
    pub train_ratio: f64,
    pub dev_ratio: f64,
    pub test_ratio: f64,
    pub mode: Mode,
    pub seed: u64,
    pub precision: String,
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            lexicon: None,
            embeddings: None,
            tagged: None,
            output_dir: PathBuf::from("runs"),
            selector_checkpoint: None,
            embedding_dim: 100,
            trainable_embeddings: true,
            selector_hidden: 256,
            encoder_hidden: 200,
            ontology_hidden: 100,
            decoder_hidden: 100,
            dropout: 0.2,
            init_scale: 0.1,
            selector_lr: 2e-5,
            summarizer_lr: 1e-3,
            batch_size: 8,
            selector_epochs: 50,
            summarizer_epochs: 50,
            selector_patience: 5,
            summarizer_patience: 0,
            grad_clip: 5.0,
            epsilon: 0.5,
            epsilon_grid: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            beam_size: 4,
            max_findings: 400,
            max_impression: 100,
            max_decode: 60,
            min_freq: 1,
            max_vocab: 0,
            train_ratio: 0.8,
            dev_ratio: 0.1,
            test_ratio: 0.1,
            mode: Mode::Filtered,
            seed: 42,
            precision: "f64".into(),
            explicit: BTreeSet::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", i + 1)))?;
            let key = key.trim();
            if cfg.explicit.contains(key) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", i + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Sets one key from its textual value; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "corpus" => self.corpus = opt_path(value),
            "lexicon" => self.lexicon = opt_path(value),
            "embeddings" => self.embeddings = opt_path(value),
            "tagged" => self.tagged = opt_path(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "selector_checkpoint" => self.selector_checkpoint = opt_path(value),
            "embedding_dim" => self.embedding_dim = parse(key, value)?,
            "trainable_embeddings" => self.trainable_embeddings = parse(key, value)?,
            "selector_hidden" => self.selector_hidden = parse(key, value)?,
            "encoder_hidden" => self.encoder_hidden = parse(key, value)?,
            "ontology_hidden" => self.ontology_hidden = parse(key, value)?,
            "decoder_hidden" => self.decoder_hidden = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "init_scale" => self.init_scale = parse(key, value)?,
            "selector_lr" => self.selector_lr = parse(key, value)?,
            "summarizer_lr" => self.summarizer_lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "selector_epochs" => self.selector_epochs = parse(key, value)?,
            "summarizer_epochs" => self.summarizer_epochs = parse(key, value)?,
            "selector_patience" => self.selector_patience = parse(key, value)?,
            "summarizer_patience" => self.summarizer_patience = parse(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "epsilon_grid" => {
                self.epsilon_grid = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<Vec<f64>>>()?
            }
            "beam_size" => self.beam_size = parse(key, value)?,
            "max_findings" => self.max_findings = parse(key, value)?,
            "max_impression" => self.max_impression = parse(key, value)?,
            "max_decode" => self.max_decode = parse(key, value)?,
            "min_freq" => self.min_freq = parse(key, value)?,
            "max_vocab" => self.max_vocab = parse(key, value)?,
            "train_ratio" => self.train_ratio = parse(key, value)?,
            "dev_ratio" => self.dev_ratio = parse(key, value)?,
            "test_ratio" => self.test_ratio = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "precision" => self.precision = value.to_string(),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Canonical textual value of a key.
    pub fn value(&self, key: &str) -> Option<String> {
        Some(match key {
            "corpus" => show_path(&self.corpus),
            "lexicon" => show_path(&self.lexicon),
            "embeddings" => show_path(&self.embeddings),
            "tagged" => show_path(&self.tagged),
            "output_dir" => self.output_dir.display().to_string(),
            "selector_checkpoint" => show_path(&self.selector_checkpoint),
            "embedding_dim" => self.embedding_dim.to_string(),
            "trainable_embeddings" => self.trainable_embeddings.to_string(),
            "selector_hidden" => self.selector_hidden.to_string(),
            "encoder_hidden" => self.encoder_hidden.to_string(),
            "ontology_hidden" => self.ontology_hidden.to_string(),
            "decoder_hidden" => self.decoder_hidden.to_string(),
            "dropout" => self.dropout.to_string(),
            "init_scale" => self.init_scale.to_string(),
            "selector_lr" => self.selector_lr.to_string(),
            "summarizer_lr" => self.summarizer_lr.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "selector_epochs" => self.selector_epochs.to_string(),
            "summarizer_epochs" => self.summarizer_epochs.to_string(),
            "selector_patience" => self.selector_patience.to_string(),
            "summarizer_patience" => self.summarizer_patience.to_string(),
            "grad_clip" => self.grad_clip.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "epsilon_grid" => self
                .epsilon_grid
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "beam_size" => self.beam_size.to_string(),
            "max_findings" => self.max_findings.to_string(),
            "max_impression" => self.max_impression.to_string(),
            "max_decode" => self.max_decode.to_string(),
            "min_freq" => self.min_freq.to_string(),
            "max_vocab" => self.max_vocab.to_string(),
            "train_ratio" => self.train_ratio.to_string(),
            "dev_ratio" => self.dev_ratio.to_string(),
            "test_ratio" => self.test_ratio.to_string(),
            "mode" => self.mode.to_string(),
            "seed" => self.seed.to_string(),
            "precision" => self.precision.clone(),
            _ => return None,
        })
    }

    /// Keys left at their defaults.
    pub fn defaults_used(&self) -> Vec<&'static str> {
        KEYS.iter().copied().filter(|k| !self.explicit.contains(*k)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.precision != "f64" {
            return fail(format!(
                "precision '{}' is not supported; only f64 is available",
                self.precision
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return fail(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return fail(format!("epsilon_grid value {e} outside [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.encoder_hidden == 0 || !self.encoder_hidden.is_multiple_of(2) {
            return fail(format!(
                "encoder_hidden {} must be a positive even number",
                self.encoder_hidden
            ));
        }
        for (k, v) in [
            ("embedding_dim", self.embedding_dim),
            ("selector_hidden", self.selector_hidden),
            ("ontology_hidden", self.ontology_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("batch_size", self.batch_size),
            ("beam_size", self.beam_size),
            ("min_freq", self.min_freq),
            ("max_findings", self.max_findings),
        ] {
            if v == 0 {
                return fail(format!("{k} must be positive"));
            }
        }
        for (k, v) in [("selector_lr", self.selector_lr), ("summarizer_lr", self.summarizer_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{k} must be positive"));
            }
        }
        if self.grad_clip < 0.0 {
            return fail("grad_clip must be non-negative".into());
        }
        self.split_ratios().validate()
    }

    /// Fails when a path the subcommand needs is missing.
    pub fn require<'a>(&self, key: &'static str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("'{key}' must be set for this command")))
    }

    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train_ratio,
            dev: self.dev_ratio,
            test: self.test_ratio,
        }
    }

    pub fn tagged_path(&self) -> PathBuf {
        self.tagged
            .clone()
            .unwrap_or_else(|| self.output_dir.join("tagged.jsonl"))
    }

    pub fn max_vocab(&self) -> Option<usize> {
        (self.max_vocab > 0).then_some(self.max_vocab)
    }

    fn clip(&self) -> Option<f64> {
        (self.grad_clip > 0.0).then_some(self.grad_clip)
    }

    pub fn selector_config(&self) -> SelectorConfig {
        SelectorConfig {
            embedding_dim: self.embedding_dim,
            hidden_size: self.selector_hidden,
            dropout: self.dropout,
            init_scale: self.init_scale,
        }
    }

    pub fn selector_train_config(&self) -> SelectorTrainConfig {
        SelectorTrainConfig {
            learning_rate: self.selector_lr,
            epochs: self.selector_epochs,
            batch_size: self.batch_size,
            patience: self.selector_patience,
            grad_clip: self.clip(),
            seed: self.seed,
        }
    }

    pub fn summarizer_config(&self) -> SummarizerConfig {
        SummarizerConfig {
            embedding_dim: self.embedding_dim,
            encoder_hidden: self.encoder_hidden,
            ontology_hidden: self.ontology_hidden,
            decoder_hidden: self.decoder_hidden,
            dropout: self.dropout,
            init_scale: self.init_scale,
            mode: self.mode,
        }
    }

    pub fn summarizer_train_config(&self) -> SummarizerTrainConfig {
        SummarizerTrainConfig {
            learning_rate: self.summarizer_lr,
            epochs: self.summarizer_epochs,
            batch_size: self.batch_size,
            patience: self.summarizer_patience,
            grad_clip: self.clip(),
            seed: self.seed,
            epsilon: self.epsilon,
            max_len: self.max_decode,
        }
    }

    /// Fingerprint of the settings a checkpoint of `kind` depends on:
    /// architecture, vocabulary construction and data split.
    pub fn model_hash(&self, kind: ModelKind) -> String {
        let mut keys = vec![
            "embedding_dim",
            "min_freq",
            "max_vocab",
            "max_findings",
            "max_impression",
            "train_ratio",
            "dev_ratio",
            "test_ratio",
        ];
        match kind {
            ModelKind::Selector => keys.push("selector_hidden"),
            ModelKind::Summarizer => keys.extend(["encoder_hidden", "ontology_hidden", "decoder_hidden", "mode"]),
        }
        let text: String = keys
            .iter()
            .map(|k| format!("{k}={}\n", self.value(k).expect("known key")))
            .collect();
        fingerprint(text.as_bytes())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_tracks_defaults() {
        let cfg = RunConfig::parse_str(
            "# desk run\ncorpus = data/c.jsonl\nepsilon = 0.3   # threshold\n\nmode = all-ontology\nepsilon_grid = 0.1, 0.9\n",
        )
        .unwrap();
        assert_eq!(cfg.corpus, Some(PathBuf::from("data/c.jsonl")));
        assert_eq!(cfg.epsilon, 0.3);
        assert_eq!(cfg.mode, Mode::AllOntology);
        assert_eq!(cfg.epsilon_grid, vec![0.1, 0.9]);
        let defaults = cfg.defaults_used();
        assert!(defaults.contains(&"seed") && !defaults.contains(&"epsilon"));
        assert_eq!(defaults.len(), KEYS.len() - 4);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        let err = RunConfig::parse_str("seed = 1\nlearning_rate = 3\n").unwrap_err();
        assert!(err.to_string().contains("line 2") && err.to_string().contains("unknown key"));
        assert!(RunConfig::parse_str("seed = x").is_err());
        assert!(RunConfig::parse_str("seed").is_err());
        assert!(RunConfig::parse_str("seed = 1\nseed = 2").is_err());
        assert!(RunConfig::parse_str("precision = f32").unwrap().validate().is_err());
        assert!(RunConfig::parse_str("epsilon = 1.5").unwrap().validate().is_err());
        assert!(RunConfig::parse_str("encoder_hidden = 7").unwrap().validate().is_err());
        assert!(RunConfig::parse_str("train_ratio = 0.9").unwrap().validate().is_err());
    }

    #[test]
    fn every_key_round_trips() {
        let base = RunConfig::default();
        let mut copy = RunConfig::default();
        for k in KEYS {
            copy.set(k, &base.value(k).unwrap()).unwrap();
        }
        assert!(copy.defaults_used().is_empty());
        copy.explicit.clear();
        assert_eq!(copy, base);
    }

    #[test]
    fn hash_tracks_architecture_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.set("beam_size", "2").unwrap();
        assert_eq!(a.model_hash(ModelKind::Summarizer), b.model_hash(ModelKind::Summarizer));
        b.set("mode", "plain").unwrap();
        assert_ne!(a.model_hash(ModelKind::Summarizer), b.model_hash(ModelKind::Summarizer));
        assert_eq!(a.model_hash(ModelKind::Selector), b.model_hash(ModelKind::Selector));
    }
}

//! Experiment configuration: a TOML document with documented defaults.
//!
//! Only `dataset` is required. Unknown keys are rejected. Relative dataset
//! paths resolve against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::BundleMeta;
use crate::model::{AuxTasks, ErTarget, ReconstructionMode};
use crate::tasks::{TaskWeights, VertexSetPolicy};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("config key `{key}`: {message}")]
    Key { key: String, message: String },
}

fn key_err(key: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Key {
        key: key.to_string(),
        message: message.to_string(),
    }
}

/// Corruption settings of a reconstruction head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionSettings {
    pub mode: ReconstructionMode,
    /// Size of the zeroed index set (|M| for features, |N| for embeddings).
    pub corrupted_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateauSettings {
    pub patience: usize,
    pub factor: f64,
    /// Minimum absolute decrease that counts as an improvement.
    pub threshold: f64,
}

impl Default for PlateauSettings {
    fn default() -> Self {
        Self {
            patience: 40,
            factor: 0.1,
            threshold: 1e-6,
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub dropout: f64,
    pub normalize_features: bool,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub runs: usize,
    pub seed: u64,
    pub vertex_set_policy: VertexSetPolicy,
    pub er_target: ErTarget,
    pub tasks: AuxTasks,
    pub weights: TaskWeights,
    pub fr: ReconstructionSettings,
    pub er: ReconstructionSettings,
    pub plateau: PlateauSettings,
    /// Directory the config was read from; anchors a relative `dataset`.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// The on-disk form: everything optional except what has no default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    dataset: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    hidden_layers: Option<usize>,
    hidden_units: Option<usize>,
    dropout: Option<f64>,
    normalize_features: Option<bool>,
    epochs: Option<usize>,
    lr: Option<f64>,
    l2: Option<f64>,
    runs: Option<usize>,
    seed: Option<u64>,
    vertex_set_policy: Option<VertexSetPolicy>,
    er_target: Option<ErTarget>,
    tasks: Option<RawTasks>,
    weights: Option<RawWeights>,
    fr: Option<RawReconstruction>,
    er: Option<RawReconstruction>,
    plateau: Option<RawPlateau>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTasks {
    ae: Option<bool>,
    fr: Option<bool>,
    er: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    main: Option<f64>,
    ae: Option<f64>,
    fr: Option<f64>,
    er: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReconstruction {
    mode: Option<ReconstructionMode>,
    corrupted_count: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlateau {
    patience: Option<usize>,
    factor: Option<f64>,
    threshold: Option<f64>,
}

pub const DEFAULT_EPOCHS: usize = 5000;
/// Pubmed is larger and converges in half the epochs.
pub const DEFAULT_EPOCHS_PUBMED: usize = 2500;
pub const DEFAULT_FR: ReconstructionSettings = ReconstructionSettings {
    mode: ReconstructionMode::Full,
    corrupted_count: 100,
};
pub const DEFAULT_ER: ReconstructionSettings = ReconstructionSettings {
    mode: ReconstructionMode::Full,
    corrupted_count: 2,
};

/// Short label of the head combination, e.g. `main+AE+FR`; `gcn` when no
/// auxiliary head is enabled.
pub fn network_label(tasks: &AuxTasks) -> String {
    if !tasks.any() {
        return "gcn".into();
    }
    let mut s = String::from("main");
    for (on, tag) in [(tasks.ae, "+AE"), (tasks.fr, "+FR"), (tasks.er, "+ER")] {
        if on {
            s.push_str(tag);
        }
    }
    s
}

impl ExperimentConfig {
    /// Defaults for `dataset`, before any file is consulted.
    pub fn with_dataset(dataset: impl Into<PathBuf>) -> Self {
        Self {
            name: "gcn".into(),
            dataset: dataset.into(),
            output_dir: PathBuf::from("results/gcn"),
            hidden_layers: 1,
            hidden_units: 16,
            dropout: 0.5,
            normalize_features: true,
            epochs: DEFAULT_EPOCHS,
            lr: 0.01,
            l2: 5e-4,
            runs: 10,
            seed: 0,
            vertex_set_policy: VertexSetPolicy::LabeledOnly,
            er_target: ErTarget::Detached,
            tasks: AuxTasks::none(),
            weights: TaskWeights {
                main: 1.0,
                ae: 1.0,
                fr: 1.0,
                er: 1.0,
            },
            fr: DEFAULT_FR,
            er: DEFAULT_ER,
            plateau: PlateauSettings::default(),
            base_dir: PathBuf::new(),
        }
    }

    /// Dataset directory, resolved against the config file's directory.
    pub fn dataset_path(&self) -> PathBuf {
        if self.dataset.is_absolute() {
            self.dataset.clone()
        } else {
            self.base_dir.join(&self.dataset)
        }
    }

    /// Weights actually applied: disabled tasks contribute nothing.
    pub fn effective_weights(&self) -> TaskWeights {
        TaskWeights {
            main: self.weights.main,
            ae: if self.tasks.ae { self.weights.ae } else { 0.0 },
            fr: if self.tasks.fr { self.weights.fr } else { 0.0 },
            er: if self.tasks.er { self.weights.er } else { 0.0 },
        }
    }

    /// Range checks that need no dataset.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(key_err("name", "must not be empty"));
        }
        if ![1, 2, 5].contains(&self.hidden_layers) {
            return Err(key_err("hidden_layers", format!("{} not in {{1, 2, 5}}", self.hidden_layers)));
        }
        if self.hidden_units < 2 {
            return Err(key_err("hidden_units", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(key_err("dropout", format!("{} outside [0, 1)", self.dropout)));
        }
        if self.epochs == 0 {
            return Err(key_err("epochs", "must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(key_err("lr", "must be positive"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(key_err("l2", "must be >= 0"));
        }
        if self.runs == 0 {
            return Err(key_err("runs", "must be at least 1"));
        }
        for (key, w) in [
            ("weights.main", self.weights.main),
            ("weights.ae", self.weights.ae),
            ("weights.fr", self.weights.fr),
            ("weights.er", self.weights.er),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(key_err(key, format!("{w} must be finite and >= 0")));
            }
        }
        if self.weights.main <= 0.0 {
            return Err(key_err("weights.main", "must be positive"));
        }
        if self.tasks.er {
            let n = self.er.corrupted_count;
            if n == 0 || n >= self.hidden_units {
                return Err(key_err(
                    "er.corrupted_count",
                    format!("{n} not in [1, {}]", self.hidden_units - 1),
                ));
            }
        }
        if self.plateau.patience == 0 {
            return Err(key_err("plateau.patience", "must be at least 1"));
        }
        if !(self.plateau.factor > 0.0 && self.plateau.factor < 1.0) {
            return Err(key_err("plateau.factor", "must lie in (0, 1)"));
        }
        if !(self.plateau.threshold >= 0.0) {
            return Err(key_err("plateau.threshold", "must be >= 0"));
        }
        Ok(())
    }

    /// Checks that depend on the dataset's dimensions.
    pub fn validate_for(&self, num_features: usize) -> Result<(), ConfigError> {
        self.validate()?;
        if self.tasks.fr {
            let m = self.fr.corrupted_count;
            if m == 0 || m >= num_features {
                return Err(key_err(
                    "fr.corrupted_count",
                    format!("{m} not in [1, {}]", num_features.saturating_sub(1)),
                ));
            }
        }
        Ok(())
    }

    /// Canonical TOML form; parsing it back yields an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    /// Used as given, not relative to the config file.
    pub dataset: Option<PathBuf>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

/// Reads, defaults and validates an experiment config file. The dataset's
/// `meta.json` is consulted for dimension checks and the epoch default.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    parse_config_with(path, &ConfigOverrides::default())
}

pub fn parse_config_with(
    path: impl AsRef<Path>,
    overrides: &ConfigOverrides,
) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str_with(&text, path, base_dir, overrides)
}

/// [`parse_config`] over an in-memory document. `origin` only labels errors.
pub fn parse_config_str(
    text: &str,
    origin: &Path,
    base_dir: PathBuf,
) -> Result<ExperimentConfig, ConfigError> {
    parse_config_str_with(text, origin, base_dir, &ConfigOverrides::default())
}

pub fn parse_config_str_with(
    text: &str,
    origin: &Path,
    base_dir: PathBuf,
    overrides: &ConfigOverrides,
) -> Result<ExperimentConfig, ConfigError> {
    let mut raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut base_dir = base_dir;
    if let Some(d) = &overrides.dataset {
        raw.dataset = Some(d.clone());
        base_dir = PathBuf::new();
    }
    raw.runs = overrides.runs.or(raw.runs);
    raw.seed = overrides.seed.or(raw.seed);
    raw.epochs = overrides.epochs.or(raw.epochs);
    raw.output_dir = overrides.output_dir.clone().or(raw.output_dir);
    let dataset = raw
        .dataset
        .ok_or_else(|| key_err("dataset", "missing dataset path"))?;
    let mut cfg = ExperimentConfig::with_dataset(dataset);
    cfg.base_dir = base_dir;

    let meta = BundleMeta::read(&cfg.dataset_path()).map_err(|e| key_err("dataset", e))?;

    let tasks = raw.tasks.unwrap_or_default();
    cfg.tasks = AuxTasks {
        ae: tasks.ae.unwrap_or(false),
        fr: tasks.fr.unwrap_or(false),
        er: tasks.er.unwrap_or(false),
    };
    cfg.name = raw.name.unwrap_or_else(|| network_label(&cfg.tasks));
    cfg.output_dir = raw
        .output_dir
        .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    macro_rules! take {
        ($($field:ident),*) => { $( if let Some(v) = raw.$field { cfg.$field = v; } )* };
    }
    take!(hidden_layers, hidden_units, dropout, normalize_features, lr, l2, runs, seed, vertex_set_policy, er_target);
    cfg.epochs = raw.epochs.unwrap_or(if meta.name.eq_ignore_ascii_case("pubmed") {
        DEFAULT_EPOCHS_PUBMED
    } else {
        DEFAULT_EPOCHS
    });

    let w = raw.weights.unwrap_or_default();
    cfg.weights = TaskWeights {
        main: w.main.unwrap_or(cfg.weights.main),
        ae: w.ae.unwrap_or(cfg.weights.ae),
        fr: w.fr.unwrap_or(cfg.weights.fr),
        er: w.er.unwrap_or(cfg.weights.er),
    };
    let recon = |r: Option<RawReconstruction>, d: ReconstructionSettings| {
        let r = r.unwrap_or_default();
        ReconstructionSettings {
            mode: r.mode.unwrap_or(d.mode),
            corrupted_count: r.corrupted_count.unwrap_or(d.corrupted_count),
        }
    };
    cfg.fr = recon(raw.fr, DEFAULT_FR);
    cfg.er = recon(raw.er, DEFAULT_ER);
    let p = raw.plateau.unwrap_or_default();
    let dp = PlateauSettings::default();
    cfg.plateau = PlateauSettings {
        patience: p.patience.unwrap_or(dp.patience),
        factor: p.factor.unwrap_or(dp.factor),
        threshold: p.threshold.unwrap_or(dp.threshold),
    };

    cfg.validate_for(meta.num_features)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle_dir(features: usize, name: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("meta.json"),
            format!(
                r#"{{"name": "{name}", "num_nodes": 4, "num_features": {features}, "num_classes": 2}}"#
            ),
        )
        .unwrap();
        dir
    }

    fn parse(text: &str, dir: &Path) -> Result<ExperimentConfig, ConfigError> {
        parse_config_str(text, Path::new("test.toml"), dir.to_path_buf())
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let d = bundle_dir(20, "toy");
        let cfg = parse(r#"dataset = ".""#, d.path()).unwrap();
        let mut expected = ExperimentConfig::with_dataset(".");
        expected.base_dir = d.path().to_path_buf();
        assert_eq!(cfg, expected);
        assert_eq!(cfg.effective_weights(), TaskWeights::default());
    }

    #[test]
    fn pubmed_epoch_default() {
        let d = bundle_dir(20, "pubmed");
        assert_eq!(parse(r#"dataset = ".""#, d.path()).unwrap().epochs, 2500);
    }

    #[test]
    fn fr_count_equal_to_d_rejected() {
        let d = bundle_dir(20, "toy");
        let err = parse(
            "dataset = \".\"\n[tasks]\nfr = true\n[fr]\ncorrupted_count = 20\n",
            d.path(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("fr.corrupted_count"), "{err}");
        parse(
            "dataset = \".\"\n[tasks]\nfr = true\n[fr]\ncorrupted_count = 19\n",
            d.path(),
        )
        .unwrap();
    }

    #[test]
    fn er_count_bounds() {
        let d = bundle_dir(20, "toy");
        let bad = "dataset = \".\"\n[tasks]\ner = true\n[er]\ncorrupted_count = 16\n";
        assert!(parse(bad, d.path()).unwrap_err().to_string().contains("er.corrupted_count"));
    }

    #[test]
    fn unknown_key_named() {
        let d = bundle_dir(20, "toy");
        let err = parse("dataset = \".\"\nlearning_rate = 0.1\n", d.path()).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        let err = parse("dataset = \".\"\n[weights]\nmain = 1.0\nfoo = 2.0\n", d.path()).unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
    }

    #[test]
    fn missing_dataset_named() {
        let d = bundle_dir(20, "toy");
        let err = parse("epochs = 3\n", d.path()).unwrap_err();
        assert!(err.to_string().contains("`dataset`"), "{err}");
        let err = parse("dataset = \"nowhere\"\n", d.path()).unwrap_err();
        assert!(err.to_string().contains("`dataset`"), "{err}");
    }

    #[test]
    fn out_of_range_values_named() {
        let d = bundle_dir(20, "toy");
        for (text, key) in [
            ("dropout = 1.0", "dropout"),
            ("hidden_layers = 3", "hidden_layers"),
            ("lr = 0.0", "lr"),
            ("[weights]\nae = -1.0", "weights.ae"),
            ("[weights]\nmain = 0.0", "weights.main"),
            ("[plateau]\nfactor = 1.5", "plateau.factor"),
        ] {
            let err = parse(&format!("dataset = \".\"\n{text}\n"), d.path()).unwrap_err();
            assert!(err.to_string().contains(key), "{text}: {err}");
        }
    }

    #[test]
    fn overrides_take_precedence() {
        let d = bundle_dir(20, "toy");
        let o = ConfigOverrides {
            dataset: Some(d.path().to_path_buf()),
            runs: Some(2),
            seed: Some(40),
            epochs: Some(9),
            output_dir: None,
        };
        let cfg = parse_config_str_with(
            "dataset = \"elsewhere\"\nruns = 5\nseed = 1\n",
            Path::new("x.toml"),
            PathBuf::from("/nonexistent"),
            &o,
        )
        .unwrap();
        assert_eq!((cfg.runs, cfg.seed, cfg.epochs), (2, 40, 9));
        assert_eq!(cfg.dataset_path(), d.path());
    }

    #[test]
    fn emit_parse_round_trip() {
        let d = bundle_dir(30, "toy");
        let text = "dataset = \".\"\nepochs = 7\nvertex_set_policy = \"all-nodes\"\n[tasks]\nae = true\nfr = true\n[weights]\nae = 0.5\n[fr]\nmode = \"partial\"\ncorrupted_count = 4\n";
        let cfg = parse(text, d.path()).unwrap();
        assert_eq!(cfg.name, "main+AE+FR");
        let emitted = cfg.to_toml();
        let again = parse(&emitted, d.path()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml(), emitted);
    }
}

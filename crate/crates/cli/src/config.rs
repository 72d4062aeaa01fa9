//! Run configuration: a TOML file plus `--key=value` overrides.
//!
//! Keys are dotted paths into the sections below, e.g.
//! `--stance.epochs=5` or `--paths.train=data/train.csv`. Override values
//! are read as TOML literals and fall back to plain strings.
//!
//! ```toml
//! seed = 42
//! variant = "BS-RGCN"
//! extraction = "vicinity"
//!
//! [paths]
//! kg = "suite/kg.tsv"
//! train = "suite/train.csv"
//!
//! [stance]
//! epochs = 30
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use kestance::evalkit::{CoverageMode, DatasetConfig, SyntheticConfig};
use kestance::kgae::KgaeConfig;
use kestance::kgraph::{ExtractionMode, IngestConfig};
use kestance::pipeline::PipelineConfig;
use kestance::stance::StanceConfig;
use kestance::textenc::{EncoderConfig, SentimentPretrainConfig, SPECIAL_TOKENS};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const DEFAULT_SEED: u64 = 42;
pub const OUT_DIR_ENV: &str = "KESTANCE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "kestance-out";

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config key `{}`: {}", self.key, self.reason)
    }
}

/// Input files. Artifacts a command produces go to the output directory
/// under fixed names; point these at them to chain commands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Triple dump: ConceptNet assertions or `head<TAB>rel<TAB>tail`.
    pub kg: Option<PathBuf>,
    /// `word<TAB>TAG` part-of-speech lexicon.
    pub pos: Option<PathBuf>,
    /// `word<TAB>polarity`; the bundled lexicon when unset.
    pub lexicon: Option<PathBuf>,
    /// `text<TAB>rating` corpus for sentiment pretraining.
    pub ratings: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Directory written by `pretrain-kg`.
    pub features: Option<PathBuf>,
    /// Directory written by `pretrain-sentiment`.
    pub sentiment: Option<PathBuf>,
    /// Directory written by `train-stance`.
    pub model: Option<PathBuf>,
    /// `predictions.tsv` written by `evaluate`.
    pub predictions: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageSection {
    pub percents: Vec<f64>,
    pub mode: CoverageMode,
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self {
            percents: vec![10.0, 25.0, 50.0, 75.0, 100.0],
            mode: CoverageMode::Concepts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    /// Shorthand for `stance.variant`: BS-RGCN, BS, B-RGCN or S-RGCN.
    pub variant: Option<String>,
    pub extraction: ExtractionMode,
    pub paths: Paths,
    pub ingest: IngestConfig,
    pub dataset: DatasetConfig,
    pub kgae: KgaeConfig,
    pub sentiment: SentimentPretrainConfig,
    pub sentiment_min_freq: usize,
    pub stance: StanceConfig,
    pub coverage: CoverageSection,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::desk_scale();
        Self {
            seed: DEFAULT_SEED,
            out_dir: None,
            variant: None,
            extraction: p.extraction,
            paths: Paths::default(),
            ingest: IngestConfig::default(),
            dataset: DatasetConfig::default(),
            kgae: p.kgae,
            sentiment: p.sentiment,
            sentiment_min_freq: p.sentiment_min_freq,
            stance: p.stance,
            coverage: CoverageSection::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            kgae: self.kgae.clone(),
            sentiment: self.sentiment.clone(),
            sentiment_min_freq: self.sentiment_min_freq,
            stance: self.stance.clone(),
            extraction: self.extraction,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| {
            std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
        })
    }

    /// Resolved input path, checked for existence.
    pub fn input(&self, key: &str) -> Result<&Path, ConfigError> {
        let p = &self.paths;
        let slot = match key {
            "kg" => &p.kg,
            "pos" => &p.pos,
            "lexicon" => &p.lexicon,
            "ratings" => &p.ratings,
            "train" => &p.train,
            "dev" => &p.dev,
            "test" => &p.test,
            "features" => &p.features,
            "sentiment" => &p.sentiment,
            "model" => &p.model,
            "predictions" => &p.predictions,
            _ => unreachable!("unknown path key {key}"),
        };
        let full = format!("paths.{key}");
        let path = slot.as_deref().ok_or_else(|| ConfigError::new(&full, "required by this command"))?;
        if !path.exists() {
            return Err(ConfigError::new(&full, format!("{} does not exist", path.display())));
        }
        Ok(path)
    }

    /// Like [`RunConfig::input`] but unset is allowed.
    pub fn optional_input(&self, key: &str) -> Result<Option<&Path>, ConfigError> {
        match self.input(key) {
            Ok(p) => Ok(Some(p)),
            Err(e) if e.reason == "required by this command" => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Checks that do not depend on the command.
    fn validate(&mut self) -> Result<(), ConfigError> {
        if let Some(v) = &self.variant {
            self.stance.variant = v.parse().map_err(|e: String| ConfigError::new("variant", e))?;
        }
        self.stance
            .variant
            .validate()
            .map_err(|e| ConfigError::new("stance.variant", e.to_string()))?;
        for (key, enc) in [("stance.encoder", &self.stance.encoder), ("sentiment.encoder", &self.sentiment.encoder)] {
            // vocab_size comes from the data at run time.
            let sized = EncoderConfig {
                vocab_size: SPECIAL_TOKENS.len() + 1,
                ..enc.clone()
            };
            sized.validate().map_err(|e| ConfigError::new(key, e.to_string()))?;
        }
        if self.kgae.dim == 0 {
            return Err(ConfigError::new("kgae.dim", "must be positive"));
        }
        if !(self.kgae.edge_keep_prob > 0.0 && self.kgae.edge_keep_prob <= 1.0) {
            return Err(ConfigError::new("kgae.edge_keep_prob", "must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.kgae.holdout_fraction) {
            return Err(ConfigError::new("kgae.holdout_fraction", "must lie in [0, 1)"));
        }
        if self.stance.batch_size == 0 {
            return Err(ConfigError::new("stance.batch_size", "must be positive"));
        }
        if self.sentiment.batch_size == 0 {
            return Err(ConfigError::new("sentiment.batch_size", "must be positive"));
        }
        if !(self.stance.lambda >= 0.0) {
            return Err(ConfigError::new("stance.lambda", "must be nonnegative"));
        }
        if self.coverage.percents.is_empty() {
            return Err(ConfigError::new("coverage.percents", "must not be empty"));
        }
        if let Some(p) = self.coverage.percents.iter().find(|p| !(**p > 0.0 && **p <= 100.0)) {
            return Err(ConfigError::new("coverage.percents", format!("{p} outside (0, 100]")));
        }
        self.synthetic
            .validate()
            .map_err(|e| ConfigError::new("synthetic", e.to_string()))?;
        Ok(())
    }
}

/// Parses an override value as a TOML literal, or as a bare string.
fn override_value(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t
            .remove("v")
            .and_then(|v| serde_json::to_value(v).ok())
            .unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Overlays `top` onto `base`, descending into tables present in both.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(key, "malformed key"));
    }
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::new(parts[..i].join("."), "is not a section"))?;
        if i + 1 == parts.len() {
            match map.get_mut(*part) {
                Some(slot) => merge(slot, value),
                None => {
                    map.insert(part.to_string(), value);
                }
            }
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Builds the effective config: file, then overrides, then `seed` and
/// `out_dir` from dedicated flags.
pub fn load(
    file: Option<&Path>,
    overrides: &[(String, String)],
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<RunConfig, ConfigError> {
    let mut tree = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        let table: toml::Table = toml::from_str(&text)
            .map_err(|e| ConfigError::new("--config", format!("{}: {}", path.display(), e.message())))?;
        merge(&mut tree, serde_json::to_value(table).map_err(|e| ConfigError::new("--config", e.to_string()))?);
    }
    for (k, v) in overrides {
        set_path(&mut tree, k, override_value(v))?;
    }
    if let Some(s) = seed {
        set_path(&mut tree, "seed", Value::from(s))?;
    }
    if let Some(o) = out {
        set_path(&mut tree, "out_dir", Value::String(o.to_string_lossy().into_owned()))?;
    }

    let mut unknown = Vec::new();
    let _: Result<RunConfig, _> = serde_ignored::deserialize(tree.clone(), |path| unknown.push(path.to_string()));
    if let Some(k) = unknown.into_iter().next() {
        return Err(ConfigError::new(k, "unknown key"));
    }
    let mut cfg: RunConfig = serde_path_to_error::deserialize(tree).map_err(|e| {
        let key = e.path().to_string();
        ConfigError::new(if key == "." { "<root>".into() } else { key }, e.inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kestance::stance::ModelVariant;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_and_overrides() {
        let c = load(None, &[], None, None).unwrap();
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.stance.variant, ModelVariant::BS_RGCN);
        let c = load(
            None,
            &ov(&[("stance.epochs", "3"), ("variant", "BS"), ("paths.train", "a/b.csv"), ("coverage.percents", "[10, 100]")]),
            Some(7),
            None,
        )
        .unwrap();
        assert_eq!(c.stance.epochs, 3);
        assert_eq!(c.stance.variant, ModelVariant::BS);
        assert_eq!(c.paths.train.as_deref(), Some(Path::new("a/b.csv")));
        assert_eq!(c.coverage.percents, vec![10.0, 100.0]);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn file_then_override_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("run.toml");
        std::fs::write(&f, "seed = 5\n[stance]\nepochs = 4\nlambda = 2\n").unwrap();
        let c = load(Some(&f), &ov(&[("stance.epochs", "9")]), None, None).unwrap();
        assert_eq!((c.seed, c.stance.epochs, c.stance.lambda), (5, 9, 2.0));
        let c = load(Some(&f), &[], Some(1), None).unwrap();
        assert_eq!(c.seed, 1);
    }

    #[test]
    fn bad_keys_are_named() {
        let e = load(None, &ov(&[("stance.epoch", "3")]), None, None).unwrap_err();
        assert_eq!(e.key, "stance.epoch");
        let e = load(None, &ov(&[("stance.epochs", "many")]), None, None).unwrap_err();
        assert_eq!(e.key, "stance.epochs");
        let e = load(None, &ov(&[("variant", "XL")]), None, None).unwrap_err();
        assert_eq!(e.key, "variant");
        let e = load(None, &ov(&[("coverage.percents", "[0, 50]")]), None, None).unwrap_err();
        assert_eq!(e.key, "coverage.percents");
        let e = load(None, &ov(&[("stance.variant.use_sentiment", "false"), ("stance.variant.use_context", "false")]), None, None)
            .unwrap_err();
        assert_eq!(e.key, "stance.variant");
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = load(None, &ov(&[("stance.variant.use_kg", "false")]), None, None).unwrap();
        assert_eq!(c.stance.variant, ModelVariant::BS);
        assert_eq!(c.stance.epochs, RunConfig::default().stance.epochs);
    }

    #[test]
    fn dataset_label_map_accepts_new_codes() {
        let c = load(None, &ov(&[("dataset.labels.0", "\"Con\"")]), None, None).unwrap();
        assert_eq!(c.dataset.labels.get("0"), Some(&kestance::stance::StanceLabel::Con));
    }

    #[test]
    fn missing_inputs_name_the_path_key() {
        let c = load(None, &ov(&[("paths.dev", "/definitely/not/here.csv")]), None, None).unwrap();
        assert_eq!(c.input("train").unwrap_err().key, "paths.train");
        let e = c.input("dev").unwrap_err();
        assert_eq!(e.key, "paths.dev");
        assert!(e.reason.contains("does not exist"));
        assert_eq!(c.optional_input("lexicon").unwrap(), None);
    }
}

//! Platform configuration, read from TOML.
//!
//! Every table rejects unknown keys so a typo fails loudly at startup instead
//! of silently falling back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerConfig,
    pub storage: StorageConfig,
    pub min_votes: u32,
    pub controversy_band: [f64; 2],
    pub spam: SpamConfig,
    pub sparkles: SparklesConfig,
    pub reason: ReasonConfig,
    pub bootstrap: BootstrapConfig,
    pub regression: RegressionConfig,
    pub experiment: ExperimentConfig,
    pub classifier: ClassifierSection,
    pub baseline: BaselineSection,
    pub admin: AdminConfig,
    pub experts: ExpertsConfig,
    pub replay: ReplayColumns,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            server: ServerConfig::default(),
            storage: StorageConfig::default(),
            min_votes: 5,
            controversy_band: [0.4, 0.6],
            spam: SpamConfig::default(),
            sparkles: SparklesConfig::default(),
            reason: ReasonConfig::default(),
            bootstrap: BootstrapConfig::default(),
            regression: RegressionConfig::default(),
            experiment: ExperimentConfig::default(),
            classifier: ClassifierSection::default(),
            baseline: BaselineSection::default(),
            admin: AdminConfig::default(),
            experts: ExpertsConfig::default(),
            replay: ReplayColumns::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    pub dir: PathBuf,
    /// Write a snapshot after this many appended records (0 disables).
    pub snapshot_every: u64,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            snapshot_every: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpamConfig {
    /// Annotators at or below this percentile of the score distribution are removed.
    pub percentile: f64,
    /// Minimum cells before an annotator is scored at all.
    pub min_votes: u32,
    /// Annotators agreeing with the leave-one-out majority less often than this are removed.
    pub agreement_floor: f64,
}

impl Default for SpamConfig {
    fn default() -> Self {
        Self {
            percentile: 5.0,
            min_votes: 5,
            agreement_floor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparklesConfig {
    pub k: usize,
    pub refresh_secs: u64,
}

impl Default for SparklesConfig {
    fn default() -> Self {
        Self {
            k: 3,
            refresh_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonConfig {
    pub max_chars: usize,
}

impl Default for ReasonConfig {
    fn default() -> Self {
        Self {
            max_chars: crate::model::DEFAULT_REASON_MAX_CHARS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            seed: 20230304,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityKind {
    Alpha,
    F1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    /// Number of random subsets; 0 skips the regression.
    pub samples: usize,
    /// Quality function; defaults to F1 when expert labels exist, else alpha.
    pub quality: Option<QualityKind>,
    pub min_size: usize,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            quality: None,
            min_size: 10,
            seed: 20230311,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    Remote,
    #[default]
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub mode: ClassifierMode,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            mode: ClassifierMode::Baseline,
            endpoint: None,
            timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub lexicon_path: Option<PathBuf>,
    pub w0: f64,
    pub w1: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            lexicon_path: None,
            w0: -2.0,
            w1: 1.5,
        }
    }
}

/// `classifier.*` and `baseline.*` merged into what the gateway needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub mode: ClassifierMode,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub lexicon_path: Option<PathBuf>,
    pub w0: f64,
    pub w1: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AdminConfig {
    /// Falls back to the `BIASFEED_ADMIN_TOKEN` environment variable.
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertsConfig {
    pub path: Option<PathBuf>,
}

/// Column names used when reading an annotation dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayColumns {
    pub session: String,
    pub sentence: String,
    pub label: String,
    pub verdict: String,
    pub timestamp: String,
    pub expert_sentence: String,
    pub expert_label: String,
}

impl Default for ReplayColumns {
    fn default() -> Self {
        Self {
            session: "session_id".into(),
            sentence: "sentence_id".into(),
            label: "label".into(),
            verdict: "verdict".into(),
            timestamp: "timestamp".into(),
            expert_sentence: "sentence_id".into(),
            expert_label: "label".into(),
        }
    }
}

impl Config {
    pub fn from_toml_str(source: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&source)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let [lo, hi] = self.controversy_band;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(ConfigError::Invalid {
                key: "controversy_band",
                message: format!("expected 0 <= lo <= hi <= 1, got [{lo}, {hi}]"),
            });
        }
        if !(0.0..=100.0).contains(&self.spam.percentile) {
            return Err(ConfigError::Invalid {
                key: "spam.percentile",
                message: format!("{} is not in [0, 100]", self.spam.percentile),
            });
        }
        if !(0.0..1.0).contains(&self.bootstrap.confidence) || self.bootstrap.confidence <= 0.0 {
            return Err(ConfigError::Invalid {
                key: "bootstrap.confidence",
                message: format!("{} is not in (0, 1)", self.bootstrap.confidence),
            });
        }
        if self.min_votes == 0 {
            return Err(ConfigError::Invalid {
                key: "min_votes",
                message: "must be at least 1".into(),
            });
        }
        if self.classifier.mode == ClassifierMode::Remote && self.classifier.endpoint.is_none() {
            return Err(ConfigError::Invalid {
                key: "classifier.endpoint",
                message: "required when classifier.mode = \"remote\"".into(),
            });
        }
        Ok(())
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig {
            mode: self.classifier.mode,
            endpoint: self.classifier.endpoint.clone(),
            timeout_ms: self.classifier.timeout_ms,
            lexicon_path: self.baseline.lexicon_path.clone(),
            w0: self.baseline.w0,
            w1: self.baseline.w1,
        }
    }

    pub fn admin_token(&self) -> Option<String> {
        self.admin
            .token
            .clone()
            .or_else(|| std::env::var("BIASFEED_ADMIN_TOKEN").ok())
            .filter(|t| !t.is_empty())
    }

    pub fn band(&self) -> (f64, f64) {
        (self.controversy_band[0], self.controversy_band[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.min_votes, 5);
        assert_eq!(c.sparkles.k, 3);
        assert_eq!(c.spam.percentile, 5.0);
    }

    #[test]
    fn documented_keys_parse() {
        let c = Config::from_toml_str(
            r#"
            min_votes = 7
            controversy_band = [0.35, 0.65]
            [server]
            port = 9000
            [spam]
            percentile = 0.05
            min_votes = 3
            [sparkles]
            k = 5
            [reason]
            max_chars = 280
            [bootstrap]
            iterations = 200
            seed = 9
            [experiment]
            enabled = true
            [classifier]
            mode = "remote"
            endpoint = "http://localhost:9999/classify"
            timeout_ms = 500
            [baseline]
            w0 = -1.0
            w1 = 2.0
            [admin]
            token = "secret"
            "#,
        )
        .unwrap();
        assert_eq!(c.server.port, 9000);
        assert_eq!(c.spam.percentile, 0.05);
        assert_eq!(c.classifier.mode, ClassifierMode::Remote);
        assert_eq!(c.admin_token().as_deref(), Some("secret"));
        assert!(c.experiment.enabled);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::from_toml_str("[sparkles]\nkk = 3\n").unwrap_err();
        assert!(err.to_string().contains("kk"), "{err}");
        let err = Config::from_toml_str("min_vote = 3\n").unwrap_err();
        assert!(err.to_string().contains("min_vote"), "{err}");
    }

    #[test]
    fn invalid_band_is_rejected() {
        let err = Config::from_toml_str("controversy_band = [0.7, 0.3]\n").unwrap_err();
        assert!(err.to_string().contains("controversy_band"));
    }

    #[test]
    fn remote_mode_needs_endpoint() {
        let err = Config::from_toml_str("[classifier]\nmode = \"remote\"\n").unwrap_err();
        assert!(err.to_string().contains("classifier.endpoint"));
    }
}

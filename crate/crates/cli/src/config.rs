//! `key = value` run configuration. `#` starts a comment line.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use multicrf::{FamilyTag, RngSeed, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: None,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricChoice {
    Auto,
    F1,
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeChoice {
    /// Labels are used as read.
    Keep,
    /// BIO labels are converted to BIOES on load.
    Bioes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub train: TrainConfig,
    pub metric: MetricChoice,
    pub scheme: SchemeChoice,
    pub train_path: Option<PathBuf>,
    pub dev_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            train: TrainConfig::default(),
            metric: MetricChoice::Auto,
            scheme: SchemeChoice::Keep,
            train_path: None,
            dev_path: None,
            test_path: None,
            embeddings_path: None,
            model_path: None,
            output_path: None,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| err(format!("bad value for {key}: {value:?}")))
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = CliConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
                line: Some(idx + 1),
                message: format!("expected key = value, found {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| ConfigError {
                line: Some(idx + 1),
                message: e.message,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        CliConfig::parse(&text)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        let path = || Some(PathBuf::from(value));
        match key {
            "family" => {
                t.family = value
                    .parse()
                    .map_err(|e: multicrf::Error| err(e.to_string()))?
            }
            "learning_rate" => t.learning_rate = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "l2" => t.l2 = num(key, value)?,
            "max_epochs" => t.max_epochs = num(key, value)?,
            "patience" => t.patience = num(key, value)?,
            "d_t" => t.d_t = num(key, value)?,
            "d_r" => t.d_r = num(key, value)?,
            "mlp_hidden" => t.mlp_hidden = num(key, value)?,
            "seed" => t.seed = RngSeed(num(key, value)?),
            "subsample" => t.subsample_fraction = num(key, value)?,
            "lr_decay" => t.lr_decay = num(key, value)?,
            "max_grad_norm" => {
                t.max_grad_norm = match value {
                    "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "threads" => t.threads = num(key, value)?,
            "metric" => {
                self.metric = match value {
                    "auto" => MetricChoice::Auto,
                    "f1" => MetricChoice::F1,
                    "accuracy" => MetricChoice::Accuracy,
                    _ => {
                        return Err(err(format!(
                            "metric must be auto, f1 or accuracy, not {value:?}"
                        )))
                    }
                }
            }
            "scheme" => {
                self.scheme = match value {
                    "keep" => SchemeChoice::Keep,
                    "bioes" => SchemeChoice::Bioes,
                    _ => return Err(err(format!("scheme must be keep or bioes, not {value:?}"))),
                }
            }
            "train_path" => self.train_path = path(),
            "dev_path" => self.dev_path = path(),
            "test_path" => self.test_path = path(),
            "embeddings_path" => self.embeddings_path = path(),
            "model_path" => self.model_path = path(),
            "output_path" => self.output_path = path(),
            _ => return Err(err(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Text that [`CliConfig::parse`] maps back to `self`.
    pub fn dump(&self) -> String {
        let t = &self.train;
        let mut out = String::new();
        let mut put = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("family", &t.family);
        put("learning_rate", &t.learning_rate);
        put("batch_size", &t.batch_size);
        put("l2", &t.l2);
        put("max_epochs", &t.max_epochs);
        put("patience", &t.patience);
        put("d_t", &t.d_t);
        put("d_r", &t.d_r);
        put("mlp_hidden", &t.mlp_hidden);
        put("seed", &t.seed.0);
        put("subsample", &t.subsample_fraction);
        put("lr_decay", &t.lr_decay);
        match t.max_grad_norm {
            Some(n) => put("max_grad_norm", &n),
            None => put("max_grad_norm", &"none"),
        }
        put("threads", &t.threads);
        put(
            "metric",
            &match self.metric {
                MetricChoice::Auto => "auto",
                MetricChoice::F1 => "f1",
                MetricChoice::Accuracy => "accuracy",
            },
        );
        put(
            "scheme",
            &match self.scheme {
                SchemeChoice::Keep => "keep",
                SchemeChoice::Bioes => "bioes",
            },
        );
        for (k, p) in [
            ("train_path", &self.train_path),
            ("dev_path", &self.dev_path),
            ("test_path", &self.test_path),
            ("embeddings_path", &self.embeddings_path),
            ("model_path", &self.model_path),
            ("output_path", &self.output_path),
        ] {
            if let Some(p) = p {
                put(k, &p.display());
            }
        }
        out
    }

    /// The path stored under `key`, or "missing key: {key}".
    pub fn require<'a>(
        &self,
        key: &str,
        value: &'a Option<PathBuf>,
    ) -> Result<&'a Path, ConfigError> {
        value
            .as_deref()
            .ok_or_else(|| err(format!("missing key: {key}")))
    }
}

pub fn family_list(spec: &str) -> Result<Vec<FamilyTag>, ConfigError> {
    if spec == "all" {
        return Ok(FamilyTag::ALL.to_vec());
    }
    spec.split(',')
        .map(|f| {
            f.trim()
                .parse()
                .map_err(|e: multicrf::Error| err(e.to_string()))
        })
        .collect()
}

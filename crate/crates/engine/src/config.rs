use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NotifierKind {
    Log,
    Webhook,
}

/// Routes notifications for `recipient` (or `*` for anyone) to a notifier.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteConfig {
    pub recipient: String,
    pub notifier: NotifierKind,
    #[serde(default)]
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentConfig {
    pub name: String,
    /// `.muit` source of the task UI.
    pub source: PathBuf,
    /// Service description used for typed transcoding.
    #[serde(default)]
    pub wsdl: Option<PathBuf>,
    /// Recipient when neither the request nor the module names one.
    #[serde(default)]
    pub recipient: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub listen: String,
    /// Public origin used in deep links; defaults to the bound address.
    pub base_url: Option<String>,
    pub idle_threshold_s: f64,
    pub queue_capacity: usize,
    pub instance_deadline_s: Option<f64>,
    /// Append-log file for instance records; in memory when absent.
    pub store_path: Option<PathBuf>,
    /// How long a synchronous caller is held before it gets a resume token.
    pub long_poll_s: f64,
    /// Period of the passivation and expiry sweep.
    pub sweep_interval_s: f64,
    pub callback_attempts: u32,
    pub callback_backoff_ms: u64,
    pub http_timeout_s: f64,
    pub deployments: Vec<DeploymentConfig>,
    pub routes: Vec<RouteConfig>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            listen: "127.0.0.1:8080".into(),
            base_url: None,
            idle_threshold_s: 60.0,
            queue_capacity: 10_000,
            instance_deadline_s: None,
            store_path: None,
            long_poll_s: 30.0,
            sweep_interval_s: 1.0,
            callback_attempts: 5,
            callback_backoff_ms: 200,
            http_timeout_s: 5.0,
            deployments: Vec::new(),
            routes: Vec::new(),
        }
    }
}

fn seconds(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be a non-negative number of seconds")))
    }
}

impl EngineConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = cfg.store_path.as_mut() {
            fix(p);
        }
        for d in &mut cfg.deployments {
            fix(&mut d.source);
            if let Some(w) = d.wsdl.as_mut() {
                fix(w);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        seconds("idle_threshold_s", self.idle_threshold_s)?;
        seconds("long_poll_s", self.long_poll_s)?;
        seconds("sweep_interval_s", self.sweep_interval_s)?;
        seconds("http_timeout_s", self.http_timeout_s)?;
        if let Some(d) = self.instance_deadline_s {
            seconds("instance_deadline_s", d)?;
        }
        if self.queue_capacity == 0 {
            return Err(ConfigError::Invalid("queue_capacity must be at least 1".into()));
        }
        if self.callback_attempts == 0 {
            return Err(ConfigError::Invalid("callback_attempts must be at least 1".into()));
        }
        let mut names: Vec<&str> = self.deployments.iter().map(|d| d.name.as_str()).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(ConfigError::Invalid(format!("deployment `{}` is declared twice", w[0])));
        }
        for r in &self.routes {
            if r.notifier == NotifierKind::Webhook && r.url.is_none() {
                return Err(ConfigError::Invalid(format!("webhook route for `{}` has no url", r.recipient)));
            }
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::protocol::{find_stimulus, Strategy};

pub const DEFAULT_API_KEY_ENV: &str = "OPENROUTER_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Identifier sent as `model` on the wire.
    pub slug: String,
    #[serde(default)]
    pub display_name: String,
    #[serde(default)]
    pub provider: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens_override: Option<u32>,
}

impl ModelSpec {
    pub fn new(slug: impl Into<String>, display_name: impl Into<String>, provider: impl Into<String>) -> Self {
        Self {
            slug: slug.into(),
            display_name: display_name.into(),
            provider: provider.into(),
            max_tokens_override: None,
        }
    }

    /// Display name, falling back to the slug.
    pub fn label(&self) -> &str {
        if self.display_name.is_empty() {
            &self.slug
        } else {
            &self.display_name
        }
    }
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}
fn default_repetitions() -> u32 {
    5
}
fn default_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> u32 {
    500
}
fn default_parallelism() -> usize {
    4
}
fn default_retry_limit() -> u32 {
    3
}
fn default_retry_base_delay_ms() -> u64 {
    500
}
fn default_timeout_secs() -> u64 {
    60
}

/// One experiment grid plus transport settings. Loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub base_url: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    pub models: Vec<ModelSpec>,
    pub stimuli: Vec<String>,
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_retry_base_delay_ms")]
    pub retry_base_delay_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    /// A config with defaults for everything except the grid.
    pub fn new(base_url: impl Into<String>, models: Vec<ModelSpec>, stimuli: Vec<String>, strategies: Vec<Strategy>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key_env: default_api_key_env(),
            models,
            stimuli,
            strategies,
            repetitions: default_repetitions(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            parallelism: default_parallelism(),
            retry_limit: default_retry_limit(),
            retry_base_delay_ms: default_retry_base_delay_ms(),
            timeout_secs: default_timeout_secs(),
            lexicon: None,
            seed: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.base_url.trim().is_empty() {
            return fail("base_url is empty".into());
        }
        if self.models.is_empty() || self.stimuli.is_empty() || self.strategies.is_empty() {
            return fail("models, stimuli and strategies must all be non-empty".into());
        }
        for m in &self.models {
            if m.slug.trim().is_empty() {
                return fail("model slug is empty".into());
            }
            if m.max_tokens_override == Some(0) {
                return fail(format!("{}: max_tokens_override must be >= 1", m.slug));
            }
        }
        for s in &self.stimuli {
            if find_stimulus(s).is_none() {
                return fail(format!("unknown stimulus id `{s}`"));
            }
        }
        if self.repetitions == 0 {
            return fail("repetitions must be >= 1".into());
        }
        if self.parallelism == 0 {
            return fail("parallelism must be >= 1".into());
        }
        if self.max_tokens == 0 {
            return fail("max_tokens must be >= 1".into());
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.timeout_secs == 0 {
            return fail("timeout_secs must be >= 1".into());
        }
        Ok(())
    }

    pub fn max_tokens_for(&self, model: &ModelSpec) -> u32 {
        model.max_tokens_override.unwrap_or(self.max_tokens)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.retry_base_delay_ms.saturating_mul(1u64 << attempt.min(20)))
    }

    /// Number of transcripts a completed run produces.
    pub fn grid_size(&self) -> usize {
        self.models.len() * self.stimuli.len() * self.strategies.len() * self.repetitions as usize
    }

    pub fn model(&self, slug: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.slug == slug)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
base_url = "https://example.test/api/v1"
stimuli = ["paradox", "ignorance"]
strategies = ["S1", "S4"]

[[models]]
slug = "vendor/model-a"
display_name = "Model A"
provider = "Vendor"

[[models]]
slug = "vendor/model-b"
max_tokens_override = 1500
"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.api_key_env, "OPENROUTER_API_KEY");
        assert_eq!(c.repetitions, 5);
        assert_eq!(c.temperature, 0.7);
        assert_eq!(c.max_tokens, 500);
        assert_eq!(c.retry_limit, 3);
        assert_eq!(c.timeout_secs, 60);
        assert_eq!(c.strategies, vec![Strategy::Neutrosophic, Strategy::TensorLosses]);
        assert_eq!(c.max_tokens_for(&c.models[0]), 500);
        assert_eq!(c.max_tokens_for(&c.models[1]), 1500);
        assert_eq!(c.models[1].label(), "vendor/model-b");
        assert_eq!(c.grid_size(), 2 * 2 * 2 * 5);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            MINIMAL.replace("[\"paradox\", \"ignorance\"]", "[\"nope\"]"),
            format!("repetitions = 0\n{MINIMAL}"),
            format!("parallelism = 0\n{MINIMAL}"),
            format!("temperature = -0.1\n{MINIMAL}"),
            MINIMAL.replace("1500", "0"),
            format!("mystery = 1\n{MINIMAL}"),
        ];
        for text in bad {
            assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn backoff_doubles() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.backoff(0), Duration::from_millis(500));
        assert_eq!(c.backoff(1), Duration::from_millis(1000));
        assert_eq!(c.backoff(3), Duration::from_millis(4000));
    }
}

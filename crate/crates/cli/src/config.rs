use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

/// Pipeline settings read from TOML; every field can be overridden by a flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Root seed; stage seeds are derived from it.
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub sampling: SamplingConfig,
    pub generate: GenerateConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratio: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub order: Option<usize>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub temperature: Option<f64>,
    pub guarded: Option<bool>,
    pub max_chars: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub count: Option<usize>,
    pub ablate: Option<Vec<String>>,
    pub wav: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub samples: Option<usize>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if let Some(r) = self.split.ratio {
            if r < 2 {
                bail!("split.ratio must exceed 1");
            }
        }
        if self.generate.count == Some(0) {
            bail!("generate.count must be positive");
        }
        if self.eval.samples == Some(0) {
            bail!("eval.samples must be positive");
        }
        Ok(())
    }

    pub fn root_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Flag value, else config value, else default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let c: Config = toml::from_str(
            "seed = 3\ninputs = [\"a/*.abc\"]\n[model]\norder = 4\n[generate]\nablate = [\"tempo\"]\n",
        )
        .unwrap();
        assert_eq!(c.root_seed(), 3);
        assert_eq!(c.model.order, Some(4));
        assert_eq!(c.generate.ablate.as_deref(), Some(&["tempo".to_string()][..]));
        assert!(toml::from_str::<Config>("bogus = 1").is_err());
        assert_eq!(pick(None, Some(2), 1), 2);
        assert_eq!(pick(Some(5), Some(2), 1), 5);
    }

    #[test]
    fn rejects_bad_values() {
        let c: Config = toml::from_str("[split]\nratio = 1").unwrap();
        assert!(c.validate().is_err());
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rbal::harness::SyntheticConfig;
use rbal::{Error, Result, ScenarioConfig};

/// Everything a run needs, read from one JSON document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; overrides the seeds of every section.
    pub seed: u64,
    /// Dataset CSV. Relative paths resolve against the config file.
    pub dataset: Option<PathBuf>,
    /// Used when no dataset is given.
    pub synthetic: SyntheticConfig,
    pub scenario: ScenarioConfig,
}

pub struct Loaded {
    pub config: RunConfig,
    /// SHA-256 of the config bytes, or of the default config's JSON.
    pub hash: String,
}

pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Loaded> {
    let (mut config, bytes) = match path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::from(e).context(format!("reading {}", p.display())))?;
            let mut cfg: RunConfig = serde_json::from_slice(&bytes).map_err(|e| Error::config("config", e.to_string()))?;
            if let Some(d) = cfg.dataset.as_mut().filter(|d| d.is_relative()) {
                *d = p.parent().unwrap_or(Path::new("")).join(&*d);
            }
            (cfg, bytes)
        }
        None => {
            let cfg = RunConfig::default();
            let bytes = serde_json::to_vec(&cfg)?;
            (cfg, bytes)
        }
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.synthetic.seed = config.seed;
    config.scenario.seed = config.seed;
    config.scenario.sampler.seed = config.seed;
    config.synthetic.validate()?;
    config.scenario.validate()?;
    Ok(Loaded {
        config,
        hash: hex::encode(Sha256::digest(&bytes)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn unknown_fields_name_the_field() {
        let err = serde_json::from_str::<RunConfig>(r#"{"synthetic": {"n_tool": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("n_tool"), "{err}");
    }
}

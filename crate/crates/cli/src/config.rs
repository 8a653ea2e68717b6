use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

/// Run settings, read from a flat TOML file. Unset keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// OpenAI-compatible endpoint, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Name of the environment variable holding the API key (never the key itself).
    pub api_key_env: Option<String>,
    pub model_id: String,
    pub parallelism: usize,
    /// On-disk Wikipedia page cache; in-memory when unset.
    pub cache_dir: Option<PathBuf>,
    pub char_cap: usize,
    pub page_cap: usize,
    pub step_cap: usize,
    pub cache_ttl_days: u64,
    pub timeout_secs: u64,
    pub wiki_api_url: String,
    /// Serve Wikipedia from recorded fixtures instead of the live API.
    pub wiki_fixtures: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            model_id: "gpt-4o".into(),
            parallelism: 1,
            cache_dir: None,
            char_cap: 2000,
            page_cap: 2000,
            step_cap: 15,
            cache_ttl_days: 90,
            timeout_secs: 120,
            wiki_api_url: geocheck_core::wikitools::DEFAULT_API_URL.into(),
            wiki_fixtures: None,
        }
    }
}

impl Config {
    /// Loads `path`; relative fixture and cache paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Config =
            toml::from_str(&text).map_err(|e| CliError::Io(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.cache_dir, &mut cfg.wiki_fixtures].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("parallelism", self.parallelism as u64),
            ("char_cap", self.char_cap as u64),
            ("page_cap", self.page_cap as u64),
            ("step_cap", self.step_cap as u64),
            ("cache_ttl_days", self.cache_ttl_days),
            ("timeout_secs", self.timeout_secs),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(CliError::Io(format!("config: {name} must be positive")));
        }
        if self.model_id.trim().is_empty() {
            return Err(CliError::Io("config: model_id must not be empty".into()));
        }
        Ok(())
    }
}

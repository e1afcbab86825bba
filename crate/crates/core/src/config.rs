//! Service configuration: a TOML file plus `SKETCHVOX_*` environment
//! overrides.
//!
//! ```toml
//! mode = "mock"                  # or "live"
//! mock_scripts = "scripts.json"  # relative to this file
//! api_token = "env:SKETCHVOX_API_TOKEN"
//! log_dir = "sessions"
//! gallery_dir = "gallery"
//!
//! [session]
//! canvas_width = 1024
//! canvas_height = 768
//! history_turn_budget = 50
//!
//! [[providers]]
//! role = "CHAT_TEXT"
//! endpoint = "https://models.example/v1/generate"
//! model = "text-model"
//! credentials = "env:MODEL_API_KEY"
//! timeout_ms = 30000
//! max_retries = 3
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::config::{ProviderConfigError, Secret, SecretRef};
use crate::providers::http::HttpClient;
use crate::providers::mock::{MockProvider, MockScriptError, MockScripts};
use crate::providers::{ProviderConfig, ProviderRole, Providers};
use crate::session::{SessionError, SessionSettings};

pub const ENV_PREFIX: &str = "SKETCHVOX";
pub const CONFIG_ENV: &str = "SKETCHVOX_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {key}: {value:?}")]
    BadEnv { key: String, value: String },
    #[error(transparent)]
    Provider(#[from] ProviderConfigError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Scripts(#[from] MockScriptError),
    #[error("provider role {0} configured twice")]
    DuplicateRole(ProviderRole),
    #[error("live mode needs a provider entry for {0}")]
    MissingRole(ProviderRole),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub mode: ProviderMode,
    pub mock_scripts: Option<PathBuf>,
    pub api_token: Option<SecretRef>,
    pub log_dir: Option<PathBuf>,
    pub gallery_dir: Option<PathBuf>,
    pub session: SessionSettings,
    pub providers: Vec<ProviderConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::Mock,
            mock_scripts: None,
            api_token: None,
            log_dir: None,
            gallery_dir: None,
            session: SessionSettings::default(),
            providers: Vec::new(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` (if any), resolves relative paths against its
    /// directory, applies environment overrides from `vars` and validates.
    pub fn load(
        path: Option<&Path>,
        vars: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                let mut cfg = Self::from_toml(&text)?;
                if let Some(base) = p.parent() {
                    cfg.resolve_paths(base);
                }
                cfg
            }
            None => Self::default(),
        };
        cfg.apply_env(vars)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads from the process environment; the file path comes from
    /// `path` or `SKETCHVOX_CONFIG`.
    pub fn load_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let path = path.map(Path::to_path_buf).or(from_env);
        Self::load(path.as_deref(), &|k| std::env::var(k).ok())
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.mock_scripts, &mut self.log_dir, &mut self.gallery_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    fn apply_env(&mut self, vars: &dyn Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let key = |k: &str| format!("{ENV_PREFIX}_{k}");
        if let Some(v) = vars(&key("MODE")) {
            self.mode = match v.as_str() {
                "mock" => ProviderMode::Mock,
                "live" => ProviderMode::Live,
                _ => {
                    return Err(ConfigError::BadEnv {
                        key: key("MODE"),
                        value: v,
                    })
                }
            };
        }
        if let Some(v) = vars(&key("MOCK_SCRIPTS")) {
            self.mock_scripts = Some(v.into());
        }
        if let Some(v) = vars(&key("LOG_DIR")) {
            self.log_dir = Some(v.into());
        }
        if let Some(v) = vars(&key("GALLERY_DIR")) {
            self.gallery_dir = Some(v.into());
        }
        if let Some(v) = vars(&key("API_TOKEN_REF")) {
            self.api_token = Some(SecretRef(v));
        }
        for role in ProviderRole::ALL {
            let touched = ["ENDPOINT", "MODEL", "API_KEY_REF", "TIMEOUT_MS", "MAX_RETRIES"]
                .iter()
                .any(|s| vars(&format!("{ENV_PREFIX}_{}_{s}", role.as_str())).is_some());
            if touched && !self.providers.iter().any(|p| p.role == role) {
                self.providers.push(ProviderConfig::new(role));
            }
        }
        for p in &mut self.providers {
            p.apply_env(ENV_PREFIX, vars);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.session.validate()?;
        let mut seen = BTreeMap::new();
        for p in &self.providers {
            if seen.insert(p.role, ()).is_some() {
                return Err(ConfigError::DuplicateRole(p.role));
            }
            p.validate(self.mode == ProviderMode::Live)?;
        }
        if self.mode == ProviderMode::Live {
            if let Some(role) = ProviderRole::ALL.into_iter().find(|r| !seen.contains_key(r)) {
                return Err(ConfigError::MissingRole(role));
            }
        }
        Ok(())
    }

    pub fn provider(&self, role: ProviderRole) -> ProviderConfig {
        self.providers
            .iter()
            .find(|p| p.role == role)
            .cloned()
            .unwrap_or_else(|| ProviderConfig::new(role))
    }

    pub fn api_token(&self) -> Result<Option<Secret>, ConfigError> {
        Ok(self.api_token.as_ref().map(SecretRef::resolve).transpose()?)
    }

    pub fn load_scripts(&self) -> Result<MockScripts, ConfigError> {
        Ok(match &self.mock_scripts {
            Some(p) => MockScripts::load(p)?,
            None => MockScripts::default(),
        })
    }

    pub fn build_providers(&self) -> Result<Providers, ConfigError> {
        match self.mode {
            ProviderMode::Mock => {
                let mut mock = MockProvider::new(self.load_scripts()?);
                for role in ProviderRole::ALL {
                    mock = mock.with_timeout(role, self.provider(role).timeout_ms);
                }
                Ok(Providers::from_mock(Arc::new(mock)))
            }
            ProviderMode::Live => {
                let client = |role| HttpClient::new(self.provider(role)).map(Arc::new);
                Ok(Providers {
                    transcriber: client(ProviderRole::Transcribe)?,
                    insight: client(ProviderRole::InsightText)?,
                    chat_text: client(ProviderRole::ChatText)?,
                    chat_image: client(ProviderRole::ChatImage)?,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
mode = "live"
api_token = "env:SV_TOKEN"

[session]
canvas_width = 800
canvas_height = 600
history_turn_budget = 20

[[providers]]
role = "TRANSCRIBE"
endpoint = "http://127.0.0.1:9/asr"

[[providers]]
role = "INSIGHT_TEXT"
endpoint = "http://127.0.0.1:9/text"
model = "m1"

[[providers]]
role = "CHAT_TEXT"
endpoint = "http://127.0.0.1:9/text"
credentials = "env:SV_KEY"

[[providers]]
role = "CHAT_IMAGE"
endpoint = "http://127.0.0.1:9/image"
timeout_ms = 60000
"#;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn parses_file_and_defaults() {
        let cfg = ServiceConfig::from_toml(SAMPLE).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.mode, ProviderMode::Live);
        assert_eq!(cfg.session.canvas_width, 800.0);
        assert_eq!(cfg.session.templates, Default::default());
        assert_eq!(cfg.provider(ProviderRole::ChatImage).timeout_ms, 60_000);
        assert_eq!(cfg.provider(ProviderRole::ChatText).max_retries, 3);
    }

    #[test]
    fn empty_config_is_mock_default() {
        let cfg = ServiceConfig::load(None, &no_env).unwrap();
        assert_eq!(cfg.mode, ProviderMode::Mock);
        assert_eq!(cfg.session, SessionSettings::default());
        assert!(cfg.build_providers().is_ok());
    }

    #[test]
    fn env_overrides_apply() {
        let cfg = ServiceConfig::load(None, &|k| match k {
            "SKETCHVOX_CHAT_TEXT_TIMEOUT_MS" => Some("1234".into()),
            "SKETCHVOX_LOG_DIR" => Some("/tmp/x".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.provider(ProviderRole::ChatText).timeout_ms, 1234);
        assert_eq!(cfg.log_dir, Some(PathBuf::from("/tmp/x")));
        assert!(matches!(
            ServiceConfig::load(None, &|k| (k == "SKETCHVOX_MODE").then(|| "bogus".into())),
            Err(ConfigError::BadEnv { .. })
        ));
    }

    #[test]
    fn live_mode_needs_every_role() {
        let mut cfg = ServiceConfig::from_toml(SAMPLE).unwrap();
        cfg.providers.retain(|p| p.role != ProviderRole::ChatImage);
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::MissingRole(ProviderRole::ChatImage))
        ));
    }

    #[test]
    fn zero_canvas_rejected() {
        let mut cfg = ServiceConfig::default();
        cfg.session.canvas_width = 0.0;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::Session(SessionError::InvalidConfig(_)))
        ));
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sv.toml");
        std::fs::write(&path, "log_dir = \"logs\"\n").unwrap();
        let cfg = ServiceConfig::load(Some(&path), &no_env).unwrap();
        assert_eq!(cfg.log_dir, Some(dir.path().join("logs")));
    }
}

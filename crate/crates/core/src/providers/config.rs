use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ProviderRole;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderConfigError {
    #[error("{role}: timeout_ms must be positive")]
    ZeroTimeout { role: ProviderRole },
    #[error("{role}: endpoint is empty")]
    MissingEndpoint { role: ProviderRole },
    #[error("unsupported secret reference {0:?} (expected env:NAME)")]
    BadSecretRef(String),
    #[error("environment variable {0} is not set")]
    MissingSecret(String),
}

/// Where a credential lives, e.g. `env:MODEL_API_KEY`. Only the reference
/// is ever stored or logged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecretRef(pub String);

impl SecretRef {
    pub fn resolve(&self) -> Result<Secret, ProviderConfigError> {
        let name = self
            .0
            .strip_prefix("env:")
            .ok_or_else(|| ProviderConfigError::BadSecretRef(self.0.clone()))?;
        std::env::var(name)
            .map(Secret)
            .map_err(|_| ProviderConfigError::MissingSecret(name.to_string()))
    }
}

/// Resolved credential. Not serializable; formats as `<redacted>`.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Debug for Secret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("<redacted>")
    }
}

impl std::fmt::Display for Secret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("<redacted>")
    }
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub role: ProviderRole,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials: Option<SecretRef>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

impl ProviderConfig {
    pub fn new(role: ProviderRole) -> Self {
        Self {
            role,
            endpoint: String::new(),
            model: String::new(),
            credentials: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
        }
    }

    pub fn validate(&self, live: bool) -> Result<(), ProviderConfigError> {
        if self.timeout_ms == 0 {
            return Err(ProviderConfigError::ZeroTimeout { role: self.role });
        }
        if live && self.endpoint.trim().is_empty() {
            return Err(ProviderConfigError::MissingEndpoint { role: self.role });
        }
        Ok(())
    }

    /// Applies `<PREFIX>_<ROLE>_ENDPOINT`, `_MODEL`, `_API_KEY_REF`,
    /// `_TIMEOUT_MS` and `_MAX_RETRIES` from `vars`.
    pub fn apply_env(&mut self, prefix: &str, vars: &dyn Fn(&str) -> Option<String>) {
        let key = |suffix: &str| format!("{prefix}_{}_{suffix}", self.role.as_str());
        if let Some(v) = vars(&key("ENDPOINT")) {
            self.endpoint = v;
        }
        if let Some(v) = vars(&key("MODEL")) {
            self.model = v;
        }
        if let Some(v) = vars(&key("API_KEY_REF")) {
            self.credentials = Some(SecretRef(v));
        }
        if let Some(v) = vars(&key("TIMEOUT_MS")).and_then(|v| v.parse().ok()) {
            self.timeout_ms = v;
        }
        if let Some(v) = vars(&key("MAX_RETRIES")).and_then(|v| v.parse().ok()) {
            self.max_retries = v;
        }
    }
}

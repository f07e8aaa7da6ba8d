//! Proxy configuration file handling.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::ProxyError;

fn default_timeout_secs() -> u64 {
    30
}

/// Proxy settings, loaded from a JSON file.
///
/// The upstream credential is never stored in the file; `upstream_auth_env`
/// names an environment variable holding it. An `upstream_url` of the form
/// `mock://?seed=N` selects the deterministic mock upstream instead of a
/// real HTTP provider.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProxyConfig {
    /// `host:port` to listen on.
    pub listen_address: String,
    pub upstream_url: String,
    #[serde(default)]
    pub upstream_auth_env: Option<String>,
    /// Path to the watermark key file. The key file is the entire secret.
    pub key_path: PathBuf,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: u64,
    pub max_batch: usize,
}

impl ProxyConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProxyError> {
        let file = std::fs::File::open(path)?;
        let config: ProxyConfig = serde_json::from_reader(std::io::BufReader::new(file))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ProxyError> {
        if self.max_batch < 1 {
            return Err(ProxyError::Config("max_batch must be at least 1".into()));
        }
        if self.request_timeout_secs < 1 {
            return Err(ProxyError::Config(
                "request_timeout_secs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proxy.json");
        std::fs::write(
            &path,
            r#"{
                "listen_address": "127.0.0.1:0",
                "upstream_url": "mock://?seed=7",
                "key_path": "key.json",
                "max_batch": 32
            }"#,
        )
        .unwrap();
        let config = ProxyConfig::load(&path).unwrap();
        assert_eq!(config.request_timeout_secs, 30);
        assert_eq!(config.max_batch, 32);
        assert!(config.upstream_auth_env.is_none());

        std::fs::write(
            &path,
            r#"{
                "listen_address": "127.0.0.1:0",
                "upstream_url": "mock://",
                "key_path": "key.json",
                "max_batch": 0
            }"#,
        )
        .unwrap();
        assert!(ProxyConfig::load(&path).is_err());
    }
}

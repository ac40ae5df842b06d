use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::HashProfile;
use crate::kem::KemProfile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unsupported security parameter {0} (expected 128, 192 or 256)")]
    UnsupportedLambda(u32),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
}

/// Security parameter λ in bits. Sets the length of the note secret `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Lambda(u16);

impl Lambda {
    pub const L128: Lambda = Lambda(128);
    pub const L192: Lambda = Lambda(192);
    pub const L256: Lambda = Lambda(256);

    pub fn new(bits: u32) -> Result<Self, ConfigError> {
        match bits {
            128 | 192 | 256 => Ok(Lambda(bits as u16)),
            other => Err(ConfigError::UnsupportedLambda(other)),
        }
    }

    pub fn bits(self) -> u32 {
        self.0 as u32
    }

    pub fn bytes(self) -> usize {
        self.0 as usize / 8
    }
}

impl Default for Lambda {
    fn default() -> Self {
        Lambda::L256
    }
}

impl TryFrom<u32> for Lambda {
    type Error = ConfigError;
    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Lambda::new(value)
    }
}

impl From<Lambda> for u32 {
    fn from(l: Lambda) -> u32 {
        l.bits()
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Global protocol parameters. Every party must agree on all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub hash_profile: HashProfile,
    pub kem_profile: KemProfile,
    pub lambda: Lambda,
}

impl ProtocolConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("protocol config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_accepts_only_supported_sizes() {
        for bits in [128, 192, 256] {
            assert_eq!(Lambda::new(bits).unwrap().bytes(), bits as usize / 8);
        }
        assert!(matches!(
            Lambda::new(64),
            Err(ConfigError::UnsupportedLambda(64))
        ));
    }

    #[test]
    fn config_toml_keys() {
        let cfg = ProtocolConfig::from_toml(
            "hash_profile = \"sha256\"\nkem_profile = \"rsa-oaep\"\nlambda = 128\n",
        )
        .unwrap();
        assert_eq!(cfg.hash_profile, HashProfile::Sha256);
        assert_eq!(cfg.kem_profile, KemProfile::RsaOaep);
        assert_eq!(cfg.lambda, Lambda::L128);
        assert_eq!(ProtocolConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);

        assert_eq!(ProtocolConfig::from_toml("").unwrap(), ProtocolConfig::default());
        assert!(ProtocolConfig::from_toml("lambda = 64").is_err());
        assert!(ProtocolConfig::from_toml("colour = 1").is_err());
    }
}

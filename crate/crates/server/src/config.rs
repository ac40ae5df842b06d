//! On-disk server configuration (`config.toml` in the data directory).

use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use anonkey_core::cert::CaVerifyingKey;
use anonkey_core::entropy::EntropyKind;
use anonkey_core::kem::KemProfile;
use anonkey_core::zkp::{BackendKind, RelationConfig};
use anonkey_core::{HashProfile, Lambda};
use serde::{Deserialize, Serialize};

use crate::ServerError;

pub const DEFAULT_MAX_T: u32 = 65536;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub protocol: ProtocolSection,
    pub auth: AuthSection,
    #[serde(default)]
    pub pvs: PvsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub hash_profile: HashProfile,
    pub kem_profile: KemProfile,
    pub lambda: Lambda,
    pub depth: u32,
    pub backend: BackendKind,
}

impl ProtocolSection {
    pub fn relation(&self) -> RelationConfig {
        RelationConfig::new(self.hash_profile, self.kem_profile, self.lambda, self.depth)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthSection {
    /// Hex-encoded CA verification key.
    pub ca_public_key: String,
    #[serde(default = "default_as_listen")]
    pub listen: SocketAddr,
    /// Keep only this many old roots. Proofs against evicted roots fail.
    #[serde(default)]
    pub old_root_retention: Option<usize>,
}

impl AuthSection {
    pub fn ca_key(&self) -> Result<CaVerifyingKey, ServerError> {
        let bytes = hex::decode(&self.ca_public_key).map_err(|e| ServerError::Config(format!("ca_public_key: {e}")))?;
        CaVerifyingKey::from_bytes(&bytes).map_err(|e| ServerError::Config(format!("ca_public_key: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PvsSection {
    pub tunnel_listen: SocketAddr,
    pub http_listen: SocketAddr,
    pub entropy: EntropyKind,
    pub mock_seed: u64,
    /// File path or `host:port` for the external source.
    pub external_source: Option<String>,
    pub external_latency_ms: u64,
    pub max_t: u32,
    /// Where to sync roots from. Unset means the shared data directory.
    pub as_url: Option<String>,
    pub sync_interval_ms: u64,
    /// Tunnel throttle in bytes per second.
    pub tunnel_rate: Option<u64>,
    /// Hex AID, defaults to the built-in one.
    pub aid: Option<String>,
}

impl Default for PvsSection {
    fn default() -> Self {
        Self {
            tunnel_listen: "127.0.0.1:7200".parse().expect("static address"),
            http_listen: "127.0.0.1:7201".parse().expect("static address"),
            entropy: EntropyKind::Os,
            mock_seed: 0,
            external_source: None,
            external_latency_ms: 0,
            max_t: DEFAULT_MAX_T,
            as_url: None,
            sync_interval_ms: 1000,
            tunnel_rate: None,
            aid: None,
        }
    }
}

impl PvsSection {
    pub fn sync_interval(&self) -> Duration {
        Duration::from_millis(self.sync_interval_ms)
    }

    pub fn aid_bytes(&self) -> Result<Vec<u8>, ServerError> {
        match &self.aid {
            None => Ok(anonkey_tunnel::DEFAULT_AID.to_vec()),
            Some(h) => hex::decode(h).map_err(|e| ServerError::Config(format!("aid: {e}"))),
        }
    }
}

fn default_as_listen() -> SocketAddr {
    "127.0.0.1:7100".parse().expect("static address")
}

impl ServerConfig {
    pub fn new(relation: RelationConfig, backend: BackendKind, ca: &CaVerifyingKey) -> Self {
        Self {
            protocol: ProtocolSection {
                hash_profile: relation.hash_profile,
                kem_profile: relation.kem_profile,
                lambda: relation.lambda,
                depth: relation.depth,
                backend,
            },
            auth: AuthSection {
                ca_public_key: hex::encode(ca.to_bytes()),
                listen: default_as_listen(),
                old_root_retention: None,
            },
            pvs: PvsSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ServerError> {
        toml::from_str(text).map_err(|e| ServerError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("server config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ServerError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anonkey_core::cert::CertificateAuthority;

    #[test]
    fn toml_roundtrip_and_defaults() {
        let ca = CertificateAuthority::from_secret_bytes(&[3; 32]);
        let relation = RelationConfig::new(HashProfile::Algebraic, KemProfile::X25519Hpke, Lambda::L256, 8);
        let cfg = ServerConfig::new(relation, BackendKind::Groth16, &ca.verifying_key());
        let text = cfg.to_toml();
        let back = ServerConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.protocol.relation(), relation);
        assert_eq!(back.auth.ca_key().unwrap().to_bytes(), ca.verifying_key().to_bytes());
        assert_eq!(back.pvs.max_t, DEFAULT_MAX_T);

        let minimal = format!(
            "[protocol]\nhash_profile = \"sha256\"\nkem_profile = \"rsa-oaep\"\nlambda = 128\ndepth = 4\nbackend = \"groth16\"\n\
             [auth]\nca_public_key = \"{}\"\n[pvs]\nentropy = \"mock\"\nmock_seed = 9\n",
            cfg.auth.ca_public_key
        );
        let m = ServerConfig::from_toml(&minimal).unwrap();
        assert_eq!(m.pvs.entropy, EntropyKind::Mock);
        assert_eq!(m.pvs.mock_seed, 9);
        assert!(ServerConfig::from_toml(&format!("{minimal}extra = 1\n")).is_err());
    }
}

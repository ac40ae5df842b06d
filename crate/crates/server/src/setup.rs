//! Initial setup and opening of a data directory.

use std::sync::Arc;
use std::time::Duration;

use anonkey_core::entropy::{EntropyKind, EntropySource, ExternalSource, MockSource, OsSource};
use anonkey_core::zkp::{self, Crs, SetupMode};
use anonkey_core::MerkleTree;

use crate::config::{PvsSection, ServerConfig};
use crate::nullifiers::NullifierList;
use crate::pvs::{HttpRegistry, ProofValidationServer, RegistrySource, SharedDirRegistry};
use crate::registry::{AuthServer, RegistryState};
use crate::store::{write_atomic, DataDir};
use crate::ServerError;

/// Generates the CRS, an empty tree of the configured depth and an empty
/// nullifier list, and persists all of them. Refuses to touch an existing
/// deployment unless `reset` is set.
pub fn server_setup(
    dir: &DataDir,
    config: &ServerConfig,
    mode: SetupMode,
    reset: bool,
) -> Result<(Crs, RegistryState, NullifierList), ServerError> {
    if dir.is_initialized() {
        if !reset {
            return Err(ServerError::AlreadyInitialized(dir.root().to_path_buf()));
        }
        log::warn!("resetting existing state in {}", dir.root().display());
        dir.reset()?;
    }
    config.auth.ca_key()?;
    let relation = config.protocol.relation();
    let crs = zkp::setup(config.protocol.backend, &relation, mode)?;
    crs.save(&dir.crs())?;

    let tree = MerkleTree::empty_tree(relation.hash_profile, relation.depth)?;
    let state = RegistryState::new(tree);
    write_atomic(&dir.registry(), &state.to_bytes())?;
    let nullifiers = NullifierList::open(dir)?;
    write_atomic(&dir.config(), config.to_toml().as_bytes())?;
    log::info!(
        "initialized {} (depth {}, fingerprint {})",
        dir.root().display(),
        relation.depth,
        crs.fingerprint()
    );
    Ok((crs, state, nullifiers))
}

pub fn load_config(dir: &DataDir) -> Result<ServerConfig, ServerError> {
    if !dir.config().exists() {
        return Err(ServerError::NotInitialized(dir.root().to_path_buf()));
    }
    ServerConfig::load(&dir.config())
}

pub fn load_crs(dir: &DataDir, config: &ServerConfig) -> Result<Crs, ServerError> {
    let crs = Crs::load(&dir.crs())?;
    if *crs.config() != config.protocol.relation() {
        return Err(ServerError::Config("CRS was generated for a different configuration".into()));
    }
    Ok(crs)
}

pub fn open_auth_server(dir: &DataDir) -> Result<(ServerConfig, AuthServer, Crs), ServerError> {
    let config = load_config(dir)?;
    let crs = load_crs(dir, &config)?;
    let auth = AuthServer::open(dir.clone(), config.auth.ca_key()?)?.with_retention(config.auth.old_root_retention);
    Ok((config, auth, crs))
}

/// Opens the PVS over `dir`. Roots come from `source`, or from the AS URL in
/// the config, or from the shared registry file.
pub fn open_pvs(
    dir: &DataDir,
    source: Option<Box<dyn RegistrySource>>,
) -> Result<(ServerConfig, ProofValidationServer), ServerError> {
    let config = load_config(dir)?;
    let crs = load_crs(dir, &config)?;
    let source = source.unwrap_or_else(|| match &config.pvs.as_url {
        Some(url) => Box::new(HttpRegistry::new(url)) as Box<dyn RegistrySource>,
        None => Box::new(SharedDirRegistry(dir.clone())),
    });
    let pvs = ProofValidationServer::new(
        crs.verification_key,
        source,
        NullifierList::open(dir)?,
        entropy_from_config(&config.pvs)?,
        config.pvs.max_t,
    )
    .with_redemption_log(dir)?;
    Ok((config, pvs))
}

pub fn entropy_from_config(pvs: &PvsSection) -> Result<Arc<dyn EntropySource>, ServerError> {
    Ok(match pvs.entropy {
        EntropyKind::Mock => {
            log::warn!("PVS uses the deterministic mock entropy source (seed {})", pvs.mock_seed);
            Arc::new(MockSource::new(pvs.mock_seed))
        }
        EntropyKind::Os => Arc::new(OsSource::new()),
        EntropyKind::External => {
            let target = pvs
                .external_source
                .clone()
                .ok_or_else(|| ServerError::Config("external entropy needs external_source".into()))?;
            let latency = Duration::from_millis(pvs.external_latency_ms);
            if std::path::Path::new(&target).exists() {
                Arc::new(ExternalSource::from_path(target, latency))
            } else {
                Arc::new(ExternalSource::from_tcp(target, latency))
            }
        }
    })
}

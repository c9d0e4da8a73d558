use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::MockError;
use crate::wire::{CertificateChain, CrtEncoding, ServerConfig, VersionTag, WireError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Version negotiation for unknown versions, a minimal REJ otherwise.
    Negotiate,
    /// Public reset for every CHLO.
    Reset,
    /// Never replies.
    Silent,
    /// Replies with the scripted garbage bytes.
    Malformed,
    /// Version negotiation for unknown versions, full REJ otherwise.
    ServeRej,
}

impl Behavior {
    pub const ALL: [Behavior; 5] =
        [Behavior::Negotiate, Behavior::Reset, Behavior::Silent, Behavior::Malformed, Behavior::ServeRej];
}

/// Garbage the Malformed behavior sends unless a profile scripts its own:
/// unused flag bit set, so no decoder accepts it.
pub const DEFAULT_GARBAGE: &[u8] = b"\x80quic-recon-garbage";

pub const DEFAULT_SOURCE_TOKEN: &[u8] = b"quic-recon-source-token";

#[derive(Debug, Clone, PartialEq)]
pub struct ResponderProfile {
    pub supported_versions: Vec<VersionTag>,
    pub behavior: Behavior,
    pub sni_required: bool,
    pub scfg: Option<ServerConfig>,
    /// Certificate chains keyed by lowercase hostname.
    pub cert_inventory: BTreeMap<String, CertificateChain>,
    /// Host whose chain is served when SNI is absent or unknown and SNI is
    /// not required. Defaults to the first inventory entry.
    pub default_host: Option<String>,
    pub reply_delay: Duration,
    pub drop_probability: f64,
    pub garbage: Vec<u8>,
    pub crt_encoding: CrtEncoding,
    pub source_token: Vec<u8>,
    /// Withhold CRT until the client echoes the source token.
    pub require_token_for_certs: bool,
    pub seed: u64,
}

impl Default for ResponderProfile {
    fn default() -> Self {
        ResponderProfile {
            supported_versions: vec![VersionTag(*b"Q035")],
            behavior: Behavior::Negotiate,
            sni_required: false,
            scfg: None,
            cert_inventory: BTreeMap::new(),
            default_host: None,
            reply_delay: Duration::ZERO,
            drop_probability: 0.0,
            garbage: DEFAULT_GARBAGE.to_vec(),
            crt_encoding: CrtEncoding::Zlib,
            source_token: DEFAULT_SOURCE_TOKEN.to_vec(),
            require_token_for_certs: false,
            seed: 0,
        }
    }
}

impl ResponderProfile {
    pub fn with_behavior(behavior: Behavior) -> Self {
        ResponderProfile { behavior, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), MockError> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(MockError::InvalidProfile(format!(
                "drop_probability {} outside [0,1]",
                self.drop_probability
            )));
        }
        if self.behavior == Behavior::ServeRej && self.scfg.is_none() {
            return Err(MockError::InvalidProfile("serve_rej needs a server config".into()));
        }
        if let Some(cfg) = &self.scfg {
            cfg.validate().map_err(|e| MockError::InvalidProfile(e.to_string()))?;
        }
        if let Some(h) = &self.default_host {
            if !self.cert_inventory.contains_key(h) {
                return Err(MockError::InvalidProfile(format!("default_host {h} has no certificate")));
            }
        }
        Ok(())
    }

    /// Chain to hand out for the given SNI, if any.
    pub fn chain_for(&self, sni: Option<&str>) -> Option<&CertificateChain> {
        let name = sni.map(|s| s.trim_end_matches('.').to_ascii_lowercase()).filter(|s| !s.is_empty());
        if let Some(chain) = name.as_deref().and_then(|n| self.cert_inventory.get(n)) {
            return Some(chain);
        }
        if self.sni_required {
            return None;
        }
        match &self.default_host {
            Some(h) => self.cert_inventory.get(h),
            None => self.cert_inventory.values().next(),
        }
    }

    /// Loads a profile file; certificate paths are relative to the file.
    pub fn from_file(path: &Path) -> Result<ResponderProfile, MockError> {
        let text = std::fs::read_to_string(path).map_err(|e| MockError::Io(path.display().to_string(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ResponderProfile::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<ResponderProfile, MockError> {
        let f: ProfileFile = toml::from_str(text).map_err(|e| MockError::InvalidProfile(e.to_string()))?;
        let mut cert_inventory = BTreeMap::new();
        for (host, files) in f.certs {
            let mut entries = Vec::new();
            for file in files {
                let p = base.join(&file);
                let raw = std::fs::read(&p).map_err(|e| MockError::Io(p.display().to_string(), e))?;
                entries.extend(crate::handshake::load_certificates(&raw).map_err(|e| {
                    MockError::InvalidProfile(format!("{}: {e}", p.display()))
                })?);
            }
            cert_inventory.insert(host.trim_end_matches('.').to_ascii_lowercase(), CertificateChain::new(entries));
        }
        let hex_field = |name: &str, v: Option<String>, default: &[u8]| -> Result<Vec<u8>, MockError> {
            match v {
                Some(h) => hex::decode(h).map_err(|e| MockError::InvalidProfile(format!("{name}: {e}"))),
                None => Ok(default.to_vec()),
            }
        };
        let profile = ResponderProfile {
            supported_versions: f.supported_versions,
            behavior: f.behavior,
            sni_required: f.sni_required,
            scfg: f.scfg,
            cert_inventory,
            default_host: f.default_host,
            reply_delay: Duration::from_millis(f.reply_delay_ms),
            drop_probability: f.drop_probability,
            garbage: hex_field("garbage_hex", f.garbage_hex, DEFAULT_GARBAGE)?,
            crt_encoding: f.crt_encoding,
            source_token: hex_field("source_token_hex", f.source_token_hex, DEFAULT_SOURCE_TOKEN)?,
            require_token_for_certs: f.require_token_for_certs,
            seed: f.seed,
        };
        profile.validate()?;
        Ok(profile)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    behavior: Behavior,
    #[serde(default = "default_versions")]
    supported_versions: Vec<VersionTag>,
    #[serde(default)]
    sni_required: bool,
    #[serde(default)]
    reply_delay_ms: u64,
    #[serde(default)]
    drop_probability: f64,
    #[serde(default)]
    seed: u64,
    garbage_hex: Option<String>,
    source_token_hex: Option<String>,
    #[serde(default = "default_crt_encoding")]
    crt_encoding: CrtEncoding,
    #[serde(default)]
    require_token_for_certs: bool,
    default_host: Option<String>,
    scfg: Option<ServerConfig>,
    #[serde(default)]
    certs: BTreeMap<String, Vec<String>>,
}

fn default_versions() -> Vec<VersionTag> {
    vec![VersionTag(*b"Q035")]
}

fn default_crt_encoding() -> CrtEncoding {
    CrtEncoding::Zlib
}

impl From<WireError> for MockError {
    fn from(e: WireError) -> Self {
        MockError::InvalidProfile(e.to_string())
    }
}

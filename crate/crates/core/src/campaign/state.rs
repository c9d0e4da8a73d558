use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CampaignError, CampaignKind, OutputFormat};
use crate::util::write_atomic;

/// Progress of a resumable campaign, checkpointed next to its output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignState {
    pub id: String,
    pub kind: CampaignKind,
    /// Hex SHA-256 of the input file.
    pub input_digest: String,
    /// Input items whose results are all in the output.
    pub cursor: u64,
    pub output: PathBuf,
    /// Output length at the last checkpoint; anything after it is discarded
    /// on resume.
    pub output_offset: u64,
    pub format: OutputFormat,
    /// The configuration the campaign runs with, as TOML.
    pub config: String,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub done: bool,
}

impl CampaignState {
    pub fn path(state_dir: &Path, id: &str) -> PathBuf {
        state_dir.join(format!("{id}.json"))
    }

    pub fn load(state_dir: &Path, id: &str) -> Result<CampaignState, CampaignError> {
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(CampaignError::UnknownCampaign(id.to_string()));
        }
        let path = CampaignState::path(state_dir, id);
        let text = std::fs::read_to_string(&path).map_err(|_| CampaignError::UnknownCampaign(id.to_string()))?;
        serde_json::from_str(&text).map_err(|e| CampaignError::io(&path, std::io::Error::other(e)))
    }

    /// Atomically replaces the checkpoint file.
    pub fn save(&mut self, state_dir: &Path) -> Result<(), CampaignError> {
        self.updated = Utc::now();
        std::fs::create_dir_all(state_dir).map_err(|e| CampaignError::io(state_dir, e))?;
        let path = CampaignState::path(state_dir, &self.id);
        let body = serde_json::to_vec_pretty(self).expect("state serializes");
        write_atomic(&path, &body).map_err(|e| CampaignError::io(&path, e))
    }
}

/// A fresh campaign id: UTC start time plus random suffix.
pub fn new_campaign_id() -> String {
    format!("{}-{:08x}", Utc::now().format("%Y%m%dT%H%M%SZ"), rand::thread_rng().gen::<u32>())
}

pub fn file_digest(path: &Path) -> Result<String, CampaignError> {
    let mut f = std::fs::File::open(path).map_err(|e| CampaignError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(|e| CampaignError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

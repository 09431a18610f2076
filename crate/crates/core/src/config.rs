//! Run configuration: one JSON document with the channel constants, protocol
//! parameters, search ranges, sweep definition, seed and output paths.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelParams, ProtocolParams};
use crate::error::{ensure, Error, Result};
use crate::optimize::SearchSpace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub dmin: f64,
    pub dmax: f64,
    pub step: f64,
    pub optimize: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { dmin: 0.0, dmax: 175.0, step: 5.0, optimize: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub channel: ChannelParams,
    pub protocol: Option<ProtocolParams>,
    pub search: SearchSpace,
    pub sweep: SweepConfig,
    pub seed: u64,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.channel.validate().map_err(wrap)?;
        if let Some(pp) = &self.protocol {
            pp.validate().map_err(wrap)?;
        }
        self.search.validate().map_err(wrap)?;
        let s = &self.sweep;
        ensure(s.step > 0.0 && s.dmin >= 0.0 && s.dmin.is_finite() && s.dmax.is_finite(), || {
            format!("sweep needs step > 0 and finite distances >= 0, got {s:?}")
        })
        .map_err(wrap)
    }

    /// Hex SHA-256 of the canonical JSON form of the parsed configuration.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(config: Option<&RunConfig>, seed: Option<u64>) -> Self {
        Self {
            tool: "rrdps".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: config.map(RunConfig::sha256),
            seed,
        }
    }
}

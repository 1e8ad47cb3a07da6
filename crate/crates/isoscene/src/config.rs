//! Run configuration: a single TOML or JSON file with defaults, overridden
//! by command-line flags (flags > file > defaults). Every random decision
//! is driven by an explicit seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{IsoError, Result};
use crate::fixture::FixtureConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Rendered frame size in pixels.
    pub frame_width: usize,
    pub frame_height: usize,
    pub fixture: FixtureConfig,
    /// BEV grid resolution, meters per cell.
    pub bev_cell_size: f64,
    pub sal_sigma: f64,
    pub schedule_t: usize,
    pub alpha_bar_start: f64,
    pub alpha_bar_end: f64,
    pub unroll: bool,
    pub unroll_start: f64,
    pub samples: usize,
    /// How far the recovered water bed sits below the water line, meters.
    pub water_bed_offset: f64,
    pub splat_feather: f64,
    pub asset_manifest: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            frame_width: 512,
            frame_height: 512,
            fixture: FixtureConfig::default(),
            bev_cell_size: 0.5,
            sal_sigma: 4.0,
            schedule_t: 200,
            alpha_bar_start: 0.9999,
            alpha_bar_end: 0.01,
            unroll: false,
            unroll_start: 0.5,
            samples: 20_000,
            water_bed_offset: 0.5,
            splat_feather: 1.0,
            asset_manifest: None,
        }
    }
}

impl PipelineConfig {
    /// Reads TOML (by extension) or JSON. Unknown fields are rejected so
    /// typos fail loudly instead of silently using defaults.
    pub fn from_file(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IsoError::Config(format!("{}: {e}", path.display())))?;
        let cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text)
                .map_err(|e| IsoError::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text)
                .map_err(|e| IsoError::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    /// Referenced paths must exist up front; catching this before any
    /// stage runs keeps partial output out of the output directory.
    pub fn validate(&self) -> Result<()> {
        if let Some(manifest) = &self.asset_manifest {
            if !manifest.exists() {
                return Err(IsoError::Config(format!(
                    "asset manifest not found: {}",
                    manifest.display()
                )));
            }
        }
        if let Some(parent) = self.out_dir.parent() {
            if !parent.as_os_str().is_empty() && !parent.exists() {
                return Err(IsoError::Config(format!(
                    "output location does not exist: {}",
                    parent.display()
                )));
            }
        }
        if self.schedule_t < 2 {
            return Err(IsoError::Config("schedule_t must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.unroll_start) {
            return Err(IsoError::Config("unroll_start must be in [0, 1]".into()));
        }
        if self.bev_cell_size <= 0.0 {
            return Err(IsoError::Config("bev_cell_size must be positive".into()));
        }
        Ok(())
    }
}

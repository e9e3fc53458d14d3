//! Run configuration: one TOML file per run, flags override file values, and
//! the resolved merge is persisted next to the outputs so any artifact
//! directory can be re-derived from it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use relage_core::config::config_hash;
use relage_core::data::GeneratorConfig;
use relage_core::experiments::{EvalConfig, LossConfig, TrainConfig};
use relage_core::model::{BackboneConfig, HeadConfig};
use relage_core::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct CvSection {
    pub k: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection { k: 5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(default)]
pub struct RunConfig {
    /// The one seed that determines the run; copied into every stage.
    pub seed: u64,
    /// Default output directory (overridden by `--output`).
    pub output_dir: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub loss: LossConfig,
    pub training: TrainConfig,
    pub cv: CvSection,
    pub evaluation: EvalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Propagate the run seed into every stage and sanity-check coherence
    /// between sections.
    pub fn resolve(mut self) -> Result<Self> {
        self.generator.seed = self.seed;
        self.training.seed = self.seed;
        self.evaluation.seed = self.seed;
        self.generator.validate()?;
        self.backbone.validate()?;
        self.head.validate(self.backbone.feature_dim())?;
        self.training.validate()?;
        self.evaluation.validate()?;
        if self.cv.k < 2 {
            return Err(Error::Config(format!(
                "cv.k must be at least 2, got {}",
                self.cv.k
            )));
        }
        if self.backbone.input_spatial != self.generator.spatial_extents {
            return Err(Error::Config(format!(
                "backbone.input_spatial {:?} does not match generator.spatial_extents {:?}",
                self.backbone.input_spatial, self.generator.spatial_extents
            )));
        }
        Ok(self)
    }

    /// Architecture fingerprint of one trained member (its head carries the
    /// member's relation subset); embedded in checkpoints and re-checked at
    /// evaluation time.
    pub fn member_hash(&self, member_head: &HeadConfig) -> [u8; 32] {
        config_hash(&(&self.backbone, member_head, self.generator.max_age))
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
        std::fs::write(dir.join("config.resolved.toml"), text)?;
        Ok(())
    }
}

/// Pick the output directory: the `--output` flag, then the config file's
/// `output_dir`, then `$RELAGE_OUTPUT_ROOT/<label>`.
pub fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig, label: &str) -> Result<PathBuf> {
    if let Some(dir) = flag {
        return Ok(dir);
    }
    if let Some(dir) = &cfg.output_dir {
        return Ok(dir.clone());
    }
    if let Ok(root) = std::env::var("RELAGE_OUTPUT_ROOT") {
        return Ok(PathBuf::from(root).join(label));
    }
    Err(Error::Config(
        "no output directory: pass --output, set output_dir in the config, \
         or set RELAGE_OUTPUT_ROOT"
            .into(),
    ))
}

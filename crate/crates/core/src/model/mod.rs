//! The pair architecture: feature extraction through an SFCN-style
//! convolutional backbone (optionally shared between the two inputs),
//! tokenization of the paired features, and relation regression through
//! either a transformer encoder or a fully-connected baseline head.

mod ops;
mod pair;

pub use ops::{attention, tokenize_pair};
pub use pair::{BatchPreds, PairModel, PairModel32, Slot};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relations::RelationId;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum BackboneVariant {
    /// Six conv blocks; the first five end in a max-pool.
    Sfcn,
    /// Same, with one extra max-pool applied to the input before block 1.
    MSfcn,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Sharing {
    /// Both inputs traverse identical parameters (siamese).
    Shared,
    /// Two parameter sets of identical architecture.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    pub variant: BackboneVariant,
    pub sharing: Sharing,
    pub spatial_dims: usize,
    pub in_channels: usize,
    /// Spatial extents of the images this model is built for.
    pub input_spatial: Vec<usize>,
    /// Output channels of the six conv blocks.
    pub channel_plan: Vec<usize>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            variant: BackboneVariant::Sfcn,
            sharing: Sharing::Shared,
            spatial_dims: 2,
            in_channels: 2,
            input_spatial: vec![32, 32],
            channel_plan: vec![32, 64, 128, 256, 256, 64],
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channel_plan.len() != 6 {
            return Err(Error::Config(format!(
                "channel plan must list exactly 6 blocks, got {:?}",
                self.channel_plan
            )));
        }
        if self.channel_plan.contains(&0) {
            return Err(Error::Config(
                "channel plan entries must be positive".into(),
            ));
        }
        if !(self.spatial_dims == 2 || self.spatial_dims == 3) {
            return Err(Error::Config(format!(
                "spatial_dims must be 2 or 3, got {}",
                self.spatial_dims
            )));
        }
        if self.input_spatial.len() != self.spatial_dims {
            return Err(Error::Config(format!(
                "input_spatial {:?} does not match spatial_dims {}",
                self.input_spatial, self.spatial_dims
            )));
        }
        if self.in_channels == 0 {
            return Err(Error::Config("in_channels must be positive".into()));
        }
        Ok(())
    }

    /// Feature dimension d: the last channel-plan entry.
    pub fn feature_dim(&self) -> usize {
        self.channel_plan[5]
    }

    /// Propagate spatial extents through the backbone: an optional leading
    /// halving (mSFCN), then one halving after each of the first five blocks.
    /// Fails if any extent would collapse to zero.
    pub fn feature_spatial_for(&self, input_spatial: &[usize]) -> Result<Vec<usize>> {
        let mut extents = input_spatial.to_vec();
        let pools = match self.variant {
            BackboneVariant::Sfcn => 5,
            BackboneVariant::MSfcn => 6,
        };
        for pool in 0..pools {
            for e in extents.iter_mut() {
                *e /= 2;
            }
            if extents.contains(&0) {
                return Err(Error::Config(format!(
                    "input extents {input_spatial:?} collapse to zero at pooling stage {}; \
                     provide a larger input",
                    pool + 1
                )));
            }
        }
        Ok(extents)
    }

    /// Feature extents for the configured input.
    pub fn feature_spatial(&self) -> Result<Vec<usize>> {
        self.feature_spatial_for(&self.input_spatial)
    }

    /// Token count per image: L = product of feature extents.
    pub fn token_count(&self) -> Result<usize> {
        Ok(self.feature_spatial()?.iter().product())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum HeadVariant {
    /// Three fully-connected layers (64, 64, K) on the flattened concatenated
    /// features, ReLU between the hidden layers.
    FullyConnected,
    /// Transformer encoder blocks over the concatenated token sequence,
    /// one affine read-out per relation.
    Transformer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub variant: HeadVariant,
    pub num_blocks: usize,
    pub num_heads: usize,
    /// Relations this model predicts, in output order. K in {1, 2, 4}
    /// corresponds to single / pair / joint learning.
    pub relation_subset: Vec<RelationId>,
    /// Learned additive positional embeddings (off by default).
    pub positional_embedding: bool,
    /// Heads produce `scale * (w·t + b)`; with the scale set to the maximum
    /// target, weights stay O(1) while outputs span the target range.
    pub output_scale: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            variant: HeadVariant::Transformer,
            num_blocks: 2,
            num_heads: 8,
            relation_subset: RelationId::TRAINABLE.to_vec(),
            positional_embedding: false,
            output_scale: 100.0,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.num_blocks == 0 {
            return Err(Error::Config("head needs at least one block".into()));
        }
        if self.num_heads == 0 || !feature_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "feature dimension {feature_dim} is not divisible by {} heads",
                self.num_heads
            )));
        }
        if self.relation_subset.is_empty() {
            return Err(Error::Config("relation subset must not be empty".into()));
        }
        let mut seen = Vec::new();
        for &r in &self.relation_subset {
            if !r.is_trainable() {
                return Err(Error::Config(format!(
                    "relation {r} cannot be a training target"
                )));
            }
            if seen.contains(&r) {
                return Err(Error::Config(format!("relation {r} listed twice")));
            }
            seen.push(r);
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(Error::Config(format!(
                "output_scale must be positive, got {}",
                self.output_scale
            )));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.relation_subset.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sfcn_three_d_shapes_match_quoted_pipeline() {
        let cfg = BackboneConfig {
            spatial_dims: 3,
            input_spatial: vec![80, 130, 170],
            ..Default::default()
        };
        assert_eq!(cfg.feature_spatial().unwrap(), vec![2, 4, 5]);
        assert_eq!(cfg.token_count().unwrap(), 40);
        assert_eq!(cfg.feature_dim(), 64);
    }

    #[test]
    fn msfcn_adds_exactly_one_extra_halving() {
        let sfcn = BackboneConfig {
            spatial_dims: 3,
            input_spatial: vec![160, 260, 340],
            ..Default::default()
        };
        let msfcn = BackboneConfig {
            variant: BackboneVariant::MSfcn,
            ..sfcn.clone()
        };
        let a = sfcn.feature_spatial().unwrap();
        let b = msfcn.feature_spatial().unwrap();
        assert_eq!(b, a.iter().map(|&e| e / 2).collect::<Vec<_>>());
    }

    #[test]
    fn desk_geometry_collapses_to_single_position() {
        let cfg = BackboneConfig::default();
        assert_eq!(cfg.feature_spatial().unwrap(), vec![1, 1]);
        assert_eq!(cfg.token_count().unwrap(), 1);
    }

    #[test]
    fn collapsing_input_advises_larger_input() {
        let cfg = BackboneConfig {
            variant: BackboneVariant::MSfcn,
            ..Default::default()
        };
        let err = cfg.feature_spatial().unwrap_err();
        assert!(err.to_string().contains("larger input"));
    }

    #[test]
    fn channel_plan_must_have_six_blocks() {
        let cfg = BackboneConfig {
            channel_plan: vec![32, 64, 128],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn head_rejects_indivisible_heads_and_bad_subsets() {
        let head = HeadConfig {
            num_heads: 7,
            ..Default::default()
        };
        assert!(head.validate(64).is_err());
        let head = HeadConfig {
            relation_subset: vec![],
            ..Default::default()
        };
        assert!(head.validate(64).is_err());
        let head = HeadConfig {
            relation_subset: vec![RelationId::Sum, RelationId::Sum],
            ..Default::default()
        };
        assert!(head.validate(64).is_err());
        let head = HeadConfig {
            relation_subset: vec![RelationId::Product],
            ..Default::default()
        };
        assert!(head.validate(64).is_err());
        assert!(HeadConfig::default().validate(64).is_ok());
    }
}

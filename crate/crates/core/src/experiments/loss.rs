//! The relation regression loss: per-relation mean absolute error over the
//! batch, summed across the K trained relations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Element, Graph, Tensor};
use crate::relations::RelationId;

/// How the four relations are split across trained networks.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum LossMode {
    /// One network estimates all four relations (K = 4).
    Joint,
    /// Two networks estimate (r1, r2) and (r3, r4) (K = 2 each).
    Pair,
    /// Four networks estimate one relation each (K = 1).
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub mode: LossMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            mode: LossMode::Joint,
        }
    }
}

impl LossConfig {
    /// Relation subsets, one per network to train.
    pub fn model_subsets(&self) -> Vec<Vec<RelationId>> {
        use RelationId::*;
        match self.mode {
            LossMode::Joint => vec![vec![Sum, Difference, Max, Min]],
            LossMode::Pair => vec![vec![Sum, Difference], vec![Max, Min]],
            LossMode::Single => RelationId::TRAINABLE.iter().map(|&r| vec![r]).collect(),
        }
    }
}

/// Sum over relations of the batch-mean absolute error:
/// `L = sum_i mean_j |pred_i[j] - truth_i[j]|`.
///
/// `preds` are `[n]` graph tensors (one per relation), `targets` the matching
/// ground-truth vectors.
pub fn relation_loss<E: Element>(
    g: &mut Graph<E>,
    preds: &[Tensor],
    targets: &[Vec<E>],
) -> Result<Tensor> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "relation count mismatch: {} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut total: Option<Tensor> = None;
    for (&pred, target) in preds.iter().zip(targets) {
        let n = g.shape(pred).iter().product::<usize>();
        if n != target.len() {
            return Err(Error::Shape(format!(
                "prediction batch {} vs target batch {}",
                n,
                target.len()
            )));
        }
        let t = g.constant(&[n], target.clone())?;
        let d = g.sub(pred, t)?;
        let a = g.abs(d)?;
        let m = g.mean_all(a)?;
        total = Some(match total {
            None => m,
            Some(acc) => g.add(acc, m)?,
        });
    }
    Ok(total.expect("at least one relation"))
}

//! Held-out evaluation in the three pairing modes: test-test pairs,
//! reference-based estimation (including the maximum-consistency rule), and
//! self pairs. Produces per-subject estimates for every strategy plus the
//! per-mode strategy-disagreement uncertainties.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ImageData, Subject};
use crate::error::{Error, Result};
use crate::experiments::metrics::population_std;
use crate::experiments::train::mix_seed;
use crate::model::{PairModel32, Sharing, Slot};
use crate::relations::{
    binarize_relation, mc_estimate, recover_pair, recover_self, recover_with_reference, RelationId,
    RelationVector, StrategyId,
};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize, Hash)]
pub enum EvalMode {
    /// x != y, both from the held-out fold (strategies S1–S3).
    Paired,
    /// x held out, y from the training folds with known target (S4–S9).
    Reference,
    /// y = x (S10–S16).
    SelfPair,
}

impl EvalMode {
    pub const ALL: [EvalMode; 3] = [EvalMode::Paired, EvalMode::Reference, EvalMode::SelfPair];
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvalMode::Paired => "paired",
            EvalMode::Reference => "reference",
            EvalMode::SelfPair => "self",
        })
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paired" => Ok(EvalMode::Paired),
            "reference" => Ok(EvalMode::Reference),
            "self" | "selfpair" | "self-pair" => Ok(EvalMode::SelfPair),
            other => Err(Error::InvalidArgument(format!(
                "unknown evaluation mode '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Cumulative-score threshold, years.
    pub alpha: f64,
    /// Binarization threshold for the maximum-consistency rule, years.
    pub mc_threshold: f64,
    /// At most this many references per integer age bin.
    pub refs_per_bin: usize,
    pub modes: Vec<EvalMode>,
    /// Restrict reported strategies (None = all 16).
    pub strategies: Option<Vec<StrategyId>>,
    /// Clamp estimates into [0, max_age] (reported raw by default).
    pub clamp_to_range: bool,
    /// Random perfect matchings drawn for the paired mode; a subject's
    /// estimate is the mean over its appearances.
    pub paired_rounds: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            alpha: 5.0,
            mc_threshold: 5.0,
            refs_per_bin: 2,
            modes: EvalMode::ALL.to_vec(),
            strategies: None,
            clamp_to_range: false,
            paired_rounds: 1,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.mc_threshold < 0.0 {
            return Err(Error::Config(
                "alpha and mc_threshold must be non-negative".into(),
            ));
        }
        if self.refs_per_bin == 0 {
            return Err(Error::Config("refs_per_bin must be at least 1".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config(
                "at least one evaluation mode is required".into(),
            ));
        }
        if self.paired_rounds == 0 {
            return Err(Error::Config("paired_rounds must be at least 1".into()));
        }
        Ok(())
    }

    pub fn keeps(&self, strategy: StrategyId) -> bool {
        match &self.strategies {
            None => true,
            Some(list) => list.contains(&strategy),
        }
    }
}

/// One trained network and the relations it predicts.
pub struct ModelMember {
    pub subset: Vec<RelationId>,
    pub model: PairModel32,
}

/// The networks that together predict all four relations: one (joint), two
/// (pair) or four (single relation learning).
pub struct ModelSet {
    pub members: Vec<ModelMember>,
}

fn relation_slot(rel: RelationId) -> usize {
    RelationId::TRAINABLE
        .iter()
        .position(|&r| r == rel)
        .expect("trainable relation")
}

impl ModelSet {
    pub fn new(members: Vec<ModelMember>) -> Result<Self> {
        let mut covered = [false; 4];
        for m in &members {
            if m.subset != m.model.head.relation_subset {
                return Err(Error::Config(
                    "member subset does not match its model".into(),
                ));
            }
            for &rel in &m.subset {
                let slot = relation_slot(rel);
                if covered[slot] {
                    return Err(Error::Config(format!("relation {rel} predicted twice")));
                }
                covered[slot] = true;
            }
        }
        if !covered.iter().all(|&c| c) {
            return Err(Error::Config(
                "model set does not cover all four relations".into(),
            ));
        }
        Ok(ModelSet { members })
    }

    /// Evaluation-mode features per member per image.
    fn features(&self, images: &[&ImageData], slot: Slot) -> Result<Vec<Vec<Vec<f32>>>> {
        self.members
            .iter()
            .map(|m| m.model.extract_features_batch(images, slot))
            .collect()
    }

    /// Y-slot features, reusing the X-slot cache for shared backbones.
    fn features_y(
        &self,
        images: &[&ImageData],
        cache_x: &[Vec<Vec<f32>>],
    ) -> Result<Vec<Vec<Vec<f32>>>> {
        self.members
            .iter()
            .zip(cache_x)
            .map(|(m, cached)| {
                if m.model.backbone.sharing == Sharing::Shared {
                    Ok(cached.clone())
                } else {
                    m.model.extract_features_batch(images, Slot::Y)
                }
            })
            .collect()
    }

    /// Assemble full relation vectors for (x index, y index) pairs from the
    /// per-member caches.
    fn predict_pairs(
        &self,
        cache_x: &[Vec<Vec<f32>>],
        cache_y: &[Vec<Vec<f32>>],
        pairs: &[(usize, usize)],
    ) -> Result<Vec<RelationVector>> {
        let mut values = vec![[0.0f64; 4]; pairs.len()];
        for (mi, member) in self.members.iter().enumerate() {
            let feats: Vec<(&[f32], &[f32])> = pairs
                .iter()
                .map(|&(xi, yi)| (cache_x[mi][xi].as_slice(), cache_y[mi][yi].as_slice()))
                .collect();
            let preds = member.model.head_eval_batch(&feats)?;
            for (pi, pred) in preds.iter().enumerate() {
                for (slot, &rel) in member.subset.iter().enumerate() {
                    values[pi][relation_slot(rel)] = pred[slot];
                }
            }
        }
        Ok(values
            .into_iter()
            .map(|v| RelationVector::predicted(v[0], v[1], v[2], v[3]))
            .collect())
    }
}

/// Raw per-fold evaluation output: per-strategy per-subject estimates (a
/// subject may appear more than once in paired mode) and per-mode
/// uncertainties.
pub struct FoldEvaluation {
    pub estimates: BTreeMap<StrategyId, Vec<(usize, f64)>>,
    pub uncertainties: BTreeMap<EvalMode, Vec<(usize, f64)>>,
    /// Relation-level MAE over the paired-mode test pairs.
    pub relation_mae: Vec<(RelationId, f64)>,
    pub n_references: usize,
}

/// Choose references from the training folds: at most `per_bin` subjects per
/// integer age bin, picked by seeded shuffle within each bin.
pub fn select_references(
    train: &[Subject],
    per_bin: usize,
    max_age: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut bins: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in train.iter().enumerate() {
        let bin = (s.tau.clamp(0.0, max_age)) as u32;
        bins.entry(bin).or_default().push(i);
    }
    let mut refs = Vec::new();
    for members in bins.values_mut() {
        for i in (1..members.len()).rev() {
            let j = rng.gen_range(0..=i);
            members.swap(i, j);
        }
        refs.extend(members.iter().take(per_bin));
    }
    refs
}

/// Random perfect matching over the held-out fold; an odd leftover subject is
/// paired with a random earlier subject (and both estimates of every
/// appearance are averaged downstream).
fn pair_up(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut pairs = Vec::with_capacity(n / 2 + 1);
    let mut iter = order.chunks_exact(2);
    for c in &mut iter {
        pairs.push((c[0], c[1]));
    }
    if let [leftover] = iter.remainder() {
        let partner = order[rng.gen_range(0..n - 1)];
        pairs.push((*leftover, partner));
    }
    pairs
}

pub fn evaluate_fold(
    models: &ModelSet,
    test: &[Subject],
    train: &[Subject],
    cfg: &EvalConfig,
    max_age: f64,
) -> Result<FoldEvaluation> {
    cfg.validate()?;
    if test.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "evaluation needs at least 2 held-out subjects, got {}",
            test.len()
        )));
    }
    let test_images: Vec<&ImageData> = test.iter().map(|s| &s.image).collect();
    let cache_x = models.features(&test_images, Slot::X)?;
    let cache_y = models.features_y(&test_images, &cache_x)?;

    let clamp = |v: f64| {
        if cfg.clamp_to_range {
            v.clamp(0.0, max_age)
        } else {
            v
        }
    };
    let mut estimates: BTreeMap<StrategyId, Vec<(usize, f64)>> = BTreeMap::new();
    let mut uncertainties: BTreeMap<EvalMode, Vec<(usize, f64)>> = BTreeMap::new();
    let mut relation_mae = Vec::new();
    let mut n_references = 0usize;

    if cfg.modes.contains(&EvalMode::Paired) {
        let mut pairs = Vec::new();
        for round in 0..cfg.paired_rounds {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x10 + round as u64));
            pairs.extend(pair_up(test.len(), &mut rng));
        }
        let rels = models.predict_pairs(&cache_x, &cache_y, &pairs)?;

        let mut abs_err = [0.0f64; 4];
        for (&(xi, yi), r) in pairs.iter().zip(&rels) {
            let truth =
                crate::relations::ground_truth_relations(test[xi].tau, test[yi].tau, max_age)?;
            for (slot, (p, t)) in r.values().iter().zip(truth.values()).enumerate() {
                abs_err[slot] += (p - t).abs();
            }
            let rec = recover_pair(r);
            for (sid, est) in [
                (StrategyId::S1, rec.s1),
                (StrategyId::S2, rec.s2),
                (StrategyId::S3, rec.s3),
            ] {
                let e = estimates.entry(sid).or_default();
                e.push((xi, clamp(est.0)));
                e.push((yi, clamp(est.1)));
            }
            let unc = uncertainties.entry(EvalMode::Paired).or_default();
            unc.push((xi, population_std(&[rec.s1.0, rec.s2.0])));
            unc.push((yi, population_std(&[rec.s1.1, rec.s2.1])));
        }
        relation_mae = RelationId::TRAINABLE
            .iter()
            .enumerate()
            .map(|(i, &r)| (r, abs_err[i] / pairs.len() as f64))
            .collect();
    }

    if cfg.modes.contains(&EvalMode::Reference) {
        if train.is_empty() {
            return Err(Error::InvalidArgument(
                "reference mode needs training subjects to draw references from".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x20));
        let ref_idx = select_references(train, cfg.refs_per_bin, max_age, &mut rng);
        n_references = ref_idx.len();
        let ref_images: Vec<&ImageData> = ref_idx.iter().map(|&i| &train[i].image).collect();
        let ref_taus: Vec<f64> = ref_idx.iter().map(|&i| train[i].tau).collect();
        let cache_refs = models.features(&ref_images, Slot::Y)?;

        let mut pairs = Vec::with_capacity(test.len() * ref_idx.len());
        for xi in 0..test.len() {
            for ri in 0..ref_idx.len() {
                pairs.push((xi, ri));
            }
        }
        let rels = models.predict_pairs(&cache_x, &cache_refs, &pairs)?;

        let grid_max = max_age.ceil() as u32;
        for xi in 0..test.len() {
            let window = &rels[xi * ref_idx.len()..(xi + 1) * ref_idx.len()];
            let mut sums = [0.0f64; 5];
            let mut comparisons = Vec::with_capacity(window.len());
            for (r, &tau_y) in window.iter().zip(&ref_taus) {
                let rec = recover_with_reference(r, tau_y);
                sums[0] += rec.s5;
                sums[1] += rec.s6;
                sums[2] += rec.s7;
                sums[3] += rec.s8;
                sums[4] += rec.s9;
                comparisons.push((tau_y, binarize_relation(r.r2, cfg.mc_threshold)?));
            }
            let n = window.len() as f64;
            let finals = [sums[0] / n, sums[1] / n, sums[2] / n, sums[3] / n];
            let mc = mc_estimate(&comparisons, cfg.mc_threshold, grid_max)?;
            estimates
                .entry(StrategyId::S4)
                .or_default()
                .push((xi, clamp(mc)));
            for (sid, v) in [
                (StrategyId::S5, finals[0]),
                (StrategyId::S6, finals[1]),
                (StrategyId::S7, finals[2]),
                (StrategyId::S8, finals[3]),
                (StrategyId::S9, sums[4] / n),
            ] {
                estimates.entry(sid).or_default().push((xi, clamp(v)));
            }
            uncertainties
                .entry(EvalMode::Reference)
                .or_default()
                .push((xi, population_std(&finals)));
        }
    }

    if cfg.modes.contains(&EvalMode::SelfPair) {
        let pairs: Vec<(usize, usize)> = (0..test.len()).map(|i| (i, i)).collect();
        let rels = models.predict_pairs(&cache_x, &cache_y, &pairs)?;
        for (xi, r) in rels.iter().enumerate() {
            let rec = recover_self(r);
            for (sid, v) in [
                (StrategyId::S10, rec.s10),
                (StrategyId::S11, rec.s11),
                (StrategyId::S12, rec.s12),
                (StrategyId::S13, rec.s13),
                (StrategyId::S14, rec.s14),
                (StrategyId::S15, rec.s15),
                (StrategyId::S16, rec.s16),
            ] {
                estimates.entry(sid).or_default().push((xi, clamp(v)));
            }
            uncertainties.entry(EvalMode::SelfPair).or_default().push((
                xi,
                population_std(&[rec.s10, rec.s11, rec.s12, rec.s13, rec.s14, rec.s15]),
            ));
        }
    }

    Ok(FoldEvaluation {
        estimates,
        uncertainties,
        relation_mae,
        n_references,
    })
}

//! The relation algebra: ground-truth relations between a pair of targets,
//! the closed-form recovery strategies S1–S16 that turn predicted relations
//! back into per-subject estimates, relation binarization, and the
//! maximum-consistency rule.
//!
//! Everything here is a pure function of its inputs.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The relations a pair network can represent. Only the first four are
/// bounded tightly enough to serve as training targets; product and quotient
/// are representable for completeness but never trained.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Hash)]
pub enum RelationId {
    /// r1 = tau_x + tau_y, in [0, 2A]
    Sum,
    /// r2 = tau_x - tau_y, in [-A, A]
    Difference,
    /// r3 = max(tau_x, tau_y), in [0, A]
    Max,
    /// r4 = min(tau_x, tau_y), in [0, A]
    Min,
    /// r5 = tau_x * tau_y, in [0, A^2]; not a training target
    Product,
    /// r6 = tau_x / tau_y, unbounded; not a training target
    Quotient,
}

impl RelationId {
    pub const TRAINABLE: [RelationId; 4] = [
        RelationId::Sum,
        RelationId::Difference,
        RelationId::Max,
        RelationId::Min,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RelationId::Sum => "r1",
            RelationId::Difference => "r2",
            RelationId::Max => "r3",
            RelationId::Min => "r4",
            RelationId::Product => "r5",
            RelationId::Quotient => "r6",
        }
    }

    pub fn is_trainable(self) -> bool {
        Self::TRAINABLE.contains(&self)
    }

    /// Relation value for a pair of targets (any of the six).
    pub fn evaluate(self, tau_x: f64, tau_y: f64) -> f64 {
        match self {
            RelationId::Sum => tau_x + tau_y,
            RelationId::Difference => tau_x - tau_y,
            RelationId::Max => tau_x.max(tau_y),
            RelationId::Min => tau_x.min(tau_y),
            RelationId::Product => tau_x * tau_y,
            RelationId::Quotient => tau_x / tau_y,
        }
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum RelationKind {
    GroundTruth,
    /// Network outputs: no algebraic constraints hold; their disagreement is
    /// what the uncertainty measure feeds on.
    Predicted,
}

/// The four relation values (r1..r4) for an ordered pair.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct RelationVector {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub kind: RelationKind,
}

impl RelationVector {
    pub fn predicted(r1: f64, r2: f64, r3: f64, r4: f64) -> Self {
        RelationVector {
            r1,
            r2,
            r3,
            r4,
            kind: RelationKind::Predicted,
        }
    }

    pub fn get(&self, id: RelationId) -> Option<f64> {
        match id {
            RelationId::Sum => Some(self.r1),
            RelationId::Difference => Some(self.r2),
            RelationId::Max => Some(self.r3),
            RelationId::Min => Some(self.r4),
            _ => None,
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.r1, self.r2, self.r3, self.r4]
    }
}

/// Ground-truth relations of a pair of targets in [0, max_age].
pub fn ground_truth_relations(tau_x: f64, tau_y: f64, max_age: f64) -> Result<RelationVector> {
    for (name, tau) in [("tau_x", tau_x), ("tau_y", tau_y)] {
        if !(0.0..=max_age).contains(&tau) {
            return Err(Error::InvalidArgument(format!(
                "{name} = {tau} outside [0, {max_age}]"
            )));
        }
    }
    Ok(RelationVector {
        r1: tau_x + tau_y,
        r2: tau_x - tau_y,
        r3: tau_x.max(tau_y),
        r4: tau_x.min(tau_y),
        kind: RelationKind::GroundTruth,
    })
}

/// Recovery strategy identifiers, matching the strategy table: S1–S3 recover
/// both members of a test pair, S4–S9 use a reference with known target,
/// S10–S16 use the self pair (x, x). S3, S9 and S16 are ensemble averages.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Hash, PartialOrd, Ord)]
pub enum StrategyId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
    S9,
    S10,
    S11,
    S12,
    S13,
    S14,
    S15,
    S16,
}

/// Which evaluation mode a strategy belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Hash)]
pub enum StrategyMode {
    /// Both inputs from the test set, x != y.
    Paired,
    /// x from the test set, y a reference with known target.
    Reference,
    /// Both inputs are the same image.
    SelfPair,
}

impl StrategyId {
    pub const ALL: [StrategyId; 16] = [
        StrategyId::S1,
        StrategyId::S2,
        StrategyId::S3,
        StrategyId::S4,
        StrategyId::S5,
        StrategyId::S6,
        StrategyId::S7,
        StrategyId::S8,
        StrategyId::S9,
        StrategyId::S10,
        StrategyId::S11,
        StrategyId::S12,
        StrategyId::S13,
        StrategyId::S14,
        StrategyId::S15,
        StrategyId::S16,
    ];

    pub fn mode(self) -> StrategyMode {
        use StrategyId::*;
        match self {
            S1 | S2 | S3 => StrategyMode::Paired,
            S4 | S5 | S6 | S7 | S8 | S9 => StrategyMode::Reference,
            _ => StrategyMode::SelfPair,
        }
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, StrategyId::S3 | StrategyId::S9 | StrategyId::S16)
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).unwrap() + 1
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.index())
    }
}

impl std::str::FromStr for StrategyId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let digits = t
            .strip_prefix('S')
            .or_else(|| t.strip_prefix('s'))
            .unwrap_or(t);
        let n: usize = digits
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("unknown strategy '{s}'")))?;
        StrategyId::ALL
            .get(n.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy '{s}'")))
    }
}

/// Per-pair estimates from the paired strategies S1–S3: each entry is
/// (tau_x_hat, tau_y_hat).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairRecovery {
    pub s1: (f64, f64),
    pub s2: (f64, f64),
    pub s3: (f64, f64),
}

/// Recover both targets of a pair from its predicted relations.
///
/// S1 inverts the sum/difference pair; S2 assigns max/min by the sign of the
/// predicted difference (at exactly zero both fall to the "otherwise" branch:
/// tau_x = r4, tau_y = r3); S3 averages the two.
pub fn recover_pair(r: &RelationVector) -> PairRecovery {
    let s1 = ((r.r1 + r.r2) / 2.0, (r.r1 - r.r2) / 2.0);
    let s2 = if r.r2 > 0.0 {
        (r.r3, r.r4)
    } else {
        (r.r4, r.r3)
    };
    let s3 = ((s1.0 + s2.0) / 2.0, (s1.1 + s2.1) / 2.0);
    PairRecovery { s1, s2, s3 }
}

/// Estimates of tau_x from the reference strategies S5–S9 given the known
/// target of the reference input y.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceRecovery {
    pub s5: f64,
    pub s6: f64,
    pub s7: f64,
    pub s8: f64,
    pub s9: f64,
}

pub fn recover_with_reference(r: &RelationVector, tau_y: f64) -> ReferenceRecovery {
    let s5 = r.r1 - tau_y;
    let s6 = r.r2 + tau_y;
    let s7 = (r.r1 + r.r2) / 2.0;
    let s8 = r.r3 + r.r4 - tau_y;
    let s9 = (s5 + s6 + s7 + s8) / 4.0;
    ReferenceRecovery { s5, s6, s7, s8, s9 }
}

/// Estimates of tau_x from the self-pair strategies S10–S16, valid when both
/// model inputs were the same image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelfRecovery {
    pub s10: f64,
    pub s11: f64,
    pub s12: f64,
    pub s13: f64,
    pub s14: f64,
    pub s15: f64,
    pub s16: f64,
}

pub fn recover_self(r: &RelationVector) -> SelfRecovery {
    let s10 = r.r1 / 2.0;
    let s11 = (r.r1 + r.r2) / 2.0;
    let s12 = (r.r1 - r.r2) / 2.0;
    let s13 = r.r3;
    let s14 = r.r4;
    let s15 = (r.r3 + r.r4) / 2.0;
    let s16 = (s10 + s11 + s12 + s13 + s14 + s15) / 6.0;
    SelfRecovery {
        s10,
        s11,
        s12,
        s13,
        s14,
        s15,
        s16,
    }
}

/// Ternary order verdict from a binarized difference relation.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Ternary {
    Greater,
    Similar,
    Smaller,
}

/// Binarize a predicted difference relation with threshold `t >= 0`:
/// greater if r2 > t, similar if |r2| <= t, smaller if r2 < -t.
pub fn binarize_relation(r2_hat: f64, t: f64) -> Result<Ternary> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "binarization threshold must be non-negative, got {t}"
        )));
    }
    Ok(if r2_hat > t {
        Ternary::Greater
    } else if r2_hat < -t {
        Ternary::Smaller
    } else {
        Ternary::Similar
    })
}

/// Consistency of a candidate target against one verdict (0 or 1).
fn consistent(verdict: Ternary, candidate: f64, tau_y: f64, t: f64) -> u32 {
    let d = candidate - tau_y;
    let ok = match verdict {
        Ternary::Greater => d > t,
        Ternary::Similar => d.abs() <= t,
        Ternary::Smaller => d < -t,
    };
    ok as u32
}

/// Maximum-consistency estimate over the integer candidate grid 0..=max_age:
/// the candidate agreeing with the most ternary verdicts wins, smallest
/// candidate on ties.
pub fn mc_estimate(comparisons: &[(f64, Ternary)], t: f64, max_age: u32) -> Result<f64> {
    if comparisons.is_empty() {
        return Err(Error::InvalidArgument(
            "maximum-consistency rule needs at least one comparison".into(),
        ));
    }
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold must be non-negative, got {t}"
        )));
    }
    let mut best_age = 0u32;
    let mut best_count = 0u32;
    let mut first = true;
    for candidate in 0..=max_age {
        let c = candidate as f64;
        let count: u32 = comparisons
            .iter()
            .map(|&(tau_y, v)| consistent(v, c, tau_y, t))
            .sum();
        if first || count > best_count {
            best_age = candidate;
            best_count = count;
            first = false;
        }
    }
    Ok(best_age as f64)
}

// ── Relation-prediction CSV interchange ─────────────────────────────

/// One row of the relation-prediction interchange format.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PredictionRow {
    pub pair_id: String,
    pub x_id: String,
    pub y_id: String,
    pub r1_hat: f64,
    pub r2_hat: f64,
    pub r3_hat: f64,
    pub r4_hat: f64,
}

impl PredictionRow {
    pub fn relations(&self) -> RelationVector {
        RelationVector::predicted(self.r1_hat, self.r2_hat, self.r3_hat, self.r4_hat)
    }
}

/// Write predictions as CSV with header
/// `pair_id,x_id,y_id,r1_hat,r2_hat,r3_hat,r4_hat`.
pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_direct_evaluation() {
        let r = ground_truth_relations(10.0, 30.0, 100.0).unwrap();
        assert_eq!(r.values(), [40.0, -20.0, 30.0, 10.0]);
        assert_eq!(r.kind, RelationKind::GroundTruth);
    }

    #[test]
    fn reflexive_pair() {
        let r = ground_truth_relations(25.0, 25.0, 100.0).unwrap();
        assert_eq!(r.values(), [50.0, 0.0, 25.0, 25.0]);
    }

    #[test]
    fn boundary_pair() {
        let a = 100.0;
        let r = ground_truth_relations(0.0, a, a).unwrap();
        assert_eq!(r.values(), [a, -a, a, 0.0]);
    }

    #[test]
    fn out_of_range_target_is_rejected() {
        assert!(ground_truth_relations(-0.1, 5.0, 100.0).is_err());
        assert!(ground_truth_relations(5.0, 100.1, 100.0).is_err());
    }

    #[test]
    fn pair_recovery_inverts_exact_relations() {
        let r = ground_truth_relations(10.0, 30.0, 100.0).unwrap();
        let rec = recover_pair(&r);
        assert_eq!(rec.s1, (10.0, 30.0));
    }

    #[test]
    fn pair_recovery_worked_example() {
        let r = RelationVector::predicted(40.0, -20.0, 29.0, 11.0);
        let rec = recover_pair(&r);
        assert_eq!(rec.s2, (11.0, 29.0));
        assert_eq!(rec.s3, (10.5, 29.5));
    }

    #[test]
    fn pair_recovery_zero_difference_takes_otherwise_branches() {
        let r = RelationVector::predicted(50.0, 0.0, 27.0, 23.0);
        let rec = recover_pair(&r);
        assert_eq!(rec.s2, (23.0, 27.0));
    }

    #[test]
    fn reference_recovery_identities_and_example() {
        let exact = ground_truth_relations(25.0, 40.0, 100.0).unwrap();
        let rec = recover_with_reference(&exact, 40.0);
        for v in [rec.s5, rec.s6, rec.s7, rec.s8, rec.s9] {
            assert!((v - 25.0).abs() < 1e-12);
        }

        let noisy = RelationVector::predicted(66.0, -14.0, 40.5, 24.5);
        let rec = recover_with_reference(&noisy, 40.0);
        assert_eq!((rec.s5, rec.s6, rec.s7, rec.s8), (26.0, 26.0, 26.0, 25.0));
        assert_eq!(rec.s9, 25.75);
    }

    #[test]
    fn self_recovery_reflexivity_and_example() {
        let exact = ground_truth_relations(31.0, 31.0, 100.0).unwrap();
        let rec = recover_self(&exact);
        for v in [
            rec.s10, rec.s11, rec.s12, rec.s13, rec.s14, rec.s15, rec.s16,
        ] {
            assert!((v - 31.0).abs() < 1e-12);
        }

        let noisy = RelationVector::predicted(50.0, 2.0, 27.0, 24.0);
        let rec = recover_self(&noisy);
        assert_eq!(
            [rec.s10, rec.s11, rec.s12, rec.s13, rec.s14, rec.s15],
            [25.0, 26.0, 24.0, 27.0, 24.0, 25.5]
        );
        assert_eq!(rec.s16, 25.25);
    }

    #[test]
    fn binarization_boundaries() {
        assert_eq!(binarize_relation(7.0, 5.0).unwrap(), Ternary::Greater);
        assert_eq!(binarize_relation(-5.0, 5.0).unwrap(), Ternary::Similar);
        assert_eq!(binarize_relation(-5.01, 5.0).unwrap(), Ternary::Smaller);
        assert!(binarize_relation(1.0, -0.5).is_err());
    }

    #[test]
    fn mc_single_similar_verdict_ties_to_smallest() {
        // Every candidate in [25, 35] is consistent; tie-break picks 25.
        let est = mc_estimate(&[(30.0, Ternary::Similar)], 5.0, 100).unwrap();
        assert_eq!(est, 25.0);
    }

    #[test]
    fn mc_three_verdicts_match_brute_force() {
        let comps = [
            (20.0, Ternary::Greater),
            (40.0, Ternary::Smaller),
            (30.0, Ternary::Similar),
        ];
        let est = mc_estimate(&comps, 5.0, 100).unwrap();
        // Brute force: scan the full grid by hand.
        let mut best = (0u32, 0u32);
        for cand in (0..=100u32).rev() {
            let c = cand as f64;
            let count = comps
                .iter()
                .map(|&(y, v)| consistent(v, c, y, 5.0))
                .sum::<u32>();
            if count >= best.1 {
                best = (cand, count);
            }
        }
        assert_eq!(est, best.0 as f64);
        assert_eq!(est, 26.0); // > 25, in [25, 35], < 35: smallest is 26
    }

    #[test]
    fn mc_contradictory_verdicts_still_return_a_grid_point() {
        let comps = [(50.0, Ternary::Greater), (50.0, Ternary::Smaller)];
        let est = mc_estimate(&comps, 5.0, 100).unwrap();
        assert!((0.0..=100.0).contains(&est));
    }

    #[test]
    fn mc_empty_comparisons_fail() {
        assert!(mc_estimate(&[], 5.0, 100).is_err());
    }

    #[test]
    fn strategy_id_parsing_and_modes() {
        use std::str::FromStr;
        assert_eq!(StrategyId::from_str("S8").unwrap(), StrategyId::S8);
        assert_eq!(StrategyId::from_str("s15").unwrap(), StrategyId::S15);
        assert!(StrategyId::from_str("S17").is_err());
        assert_eq!(StrategyId::S4.mode(), StrategyMode::Reference);
        assert!(StrategyId::S16.is_ensemble());
        assert_eq!(StrategyId::S16.to_string(), "S16");
    }

    #[test]
    fn prediction_csv_round_trip() {
        let rows = vec![PredictionRow {
            pair_id: "p0".into(),
            x_id: "a".into(),
            y_id: "b".into(),
            r1_hat: 40.0,
            r2_hat: -20.0,
            r3_hat: 30.0,
            r4_hat: 10.0,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.csv");
        write_predictions(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("pair_id,x_id,y_id,r1_hat,r2_hat,r3_hat,r4_hat"));
        assert_eq!(read_predictions(&path).unwrap(), rows);
    }
}

//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line with the measured quantities (visible with `--nocapture`).
//!
//! Run with `cargo test -p relage-core --test acceptance`.

mod common;

use std::time::Instant;

use common::{finite_diff_max_rel_err, Draw, FD_TOL};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relage_core::data::make_folds;
use relage_core::experiments::{compute_metrics, paired_t_test, rank_models};
use relage_core::model::{attention, tokenize_pair, BackboneConfig};
use relage_core::numerics::Graph;
use relage_core::relations::{
    ground_truth_relations, mc_estimate, recover_pair, recover_self, recover_with_reference,
    RelationVector, Ternary,
};

const SEEDS: u64 = 20;

fn weighted_sum(
    g: &mut Graph<f64>,
    t: relage_core::numerics::Tensor,
    weights: &[f64],
) -> relage_core::numerics::Tensor {
    let shape = g.shape(t).to_vec();
    let w = g
        .constant(&shape, weights[..g.value(t).len()].to_vec())
        .unwrap();
    let prod = g.mul(t, w).unwrap();
    g.sum_all(prod).unwrap()
}

/// ACCEPTANCE 1 — analytic gradients of every layer kind agree with central
/// finite differences (f64, step 1e-5) to relative error < 1e-4 over >= 20
/// seeds, in under a minute.
#[test]
fn acceptance_1_gradient_suite() {
    let started = Instant::now();
    let mut fixed = ChaCha8Rng::seed_from_u64(0xFEED);
    let w: Vec<f64> = (0..2048).map(|_| fixed.gen_range(-1.0..1.0)).collect();

    type BuildFn = Box<
        dyn Fn(
            &mut Graph<f64>,
            &[relage_core::numerics::Tensor],
            &[f64],
        ) -> relage_core::numerics::Tensor,
    >;
    struct Case {
        name: &'static str,
        shapes: Vec<(Vec<usize>, Draw)>,
        build: BuildFn,
    }
    let case = |name: &'static str, shapes: Vec<(Vec<usize>, Draw)>, build: BuildFn| Case {
        name,
        shapes,
        build,
    };

    let cases: Vec<Case> = vec![
        case(
            "conv2d_k3",
            vec![
                (vec![2, 3, 5, 6], Draw::Normal),
                (vec![4, 3, 3, 3], Draw::Normal),
                (vec![4], Draw::Normal),
            ],
            Box::new(|g, l, w| {
                let y = g.conv(l[0], l[1], Some(l[2])).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "conv2d_k1",
            vec![
                (vec![2, 3, 4, 4], Draw::Normal),
                (vec![2, 3, 1, 1], Draw::Normal),
            ],
            Box::new(|g, l, w| {
                let y = g.conv(l[0], l[1], None).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "conv3d_k3",
            vec![
                (vec![1, 2, 3, 4, 5], Draw::Normal),
                (vec![3, 2, 3, 3, 3], Draw::Normal),
                (vec![3], Draw::Normal),
            ],
            Box::new(|g, l, w| {
                let y = g.conv(l[0], l[1], Some(l[2])).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "max_pool2d",
            vec![(vec![2, 2, 4, 6], Draw::Distinct)],
            Box::new(|g, l, w| {
                let y = g.max_pool(l[0]).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "max_pool3d",
            vec![(vec![1, 2, 4, 4, 4], Draw::Distinct)],
            Box::new(|g, l, w| {
                let y = g.max_pool(l[0]).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "batch_norm_train",
            vec![
                (vec![3, 2, 2, 2], Draw::Normal),
                (vec![2], Draw::AwayFromZero),
                (vec![2], Draw::Normal),
            ],
            Box::new(|g, l, w| {
                let (y, _, _) = g.batch_norm_train(l[0], l[1], l[2], 1e-5).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "batch_norm_eval",
            vec![
                (vec![2, 2, 3, 3], Draw::Normal),
                (vec![2], Draw::AwayFromZero),
                (vec![2], Draw::Normal),
            ],
            Box::new(|g, l, w| {
                let y = g
                    .batch_norm_eval(l[0], l[1], l[2], &[0.1, -0.2], &[0.9, 1.3], 1e-5)
                    .unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "relu",
            vec![(vec![3, 4], Draw::AwayFromZero)],
            Box::new(|g, l, w| {
                let y = g.relu(l[0]).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "linear",
            vec![
                (vec![3, 4], Draw::Normal),
                (vec![4, 2], Draw::Normal),
                (vec![2], Draw::Normal),
            ],
            Box::new(|g, l, w| {
                let y = g.linear(l[0], l[1], Some(l[2])).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "softmax",
            vec![(vec![3, 5], Draw::Normal)],
            Box::new(|g, l, w| {
                let y = g.softmax(l[0]).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "layer_norm",
            vec![
                (vec![4, 3], Draw::Normal),
                (vec![4], Draw::AwayFromZero),
                (vec![4], Draw::Normal),
            ],
            Box::new(|g, l, w| {
                let y = g.layer_norm(l[0], l[1], l[2], 0, 1e-5).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "attention",
            vec![
                (vec![4, 3], Draw::Normal),
                (vec![4, 3], Draw::Normal),
                (vec![4, 3], Draw::Normal),
            ],
            Box::new(|g, l, w| {
                let y = attention(g, l[0], l[1], l[2]).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "abs",
            vec![(vec![2, 5], Draw::AwayFromZero)],
            Box::new(|g, l, w| {
                let y = g.abs(l[0]).unwrap();
                weighted_sum(g, y, w)
            }),
        ),
        case(
            "composed_network",
            vec![
                (vec![2, 2, 4, 4], Draw::Normal),
                (vec![3, 2, 3, 3], Draw::Normal),
                (vec![3], Draw::AwayFromZero),
                (vec![3], Draw::Normal),
                (vec![12, 4], Draw::Normal),
                (vec![4], Draw::Normal),
            ],
            Box::new(|g, l, w| {
                // conv -> bn -> relu -> pool -> flatten -> linear -> softmax
                let c = g.conv(l[0], l[1], None).unwrap();
                let (b, _, _) = g.batch_norm_train(c, l[2], l[3], 1e-5).unwrap();
                let r = g.relu(b).unwrap();
                let p = g.max_pool(r).unwrap();
                let flat = g.reshape(p, &[2, 12]).unwrap();
                let lin = g.linear(flat, l[4], Some(l[5])).unwrap();
                let s = g.softmax(lin).unwrap();
                weighted_sum(g, s, w)
            }),
        ),
        case(
            "token_glue",
            vec![(vec![3, 2], Draw::Normal), (vec![3, 2], Draw::Normal)],
            Box::new(|g, l, w| {
                // tokenize -> narrow -> transpose -> matmul -> select
                let seq = tokenize_pair(g, l[0], l[1]).unwrap();
                let head = g.narrow(seq, 0, 1, 2).unwrap();
                let t = g.transpose(head).unwrap();
                let m = g.matmul(head, t).unwrap();
                let col = g.select(m, 1, 0).unwrap();
                weighted_sum(g, col, w)
            }),
        ),
    ];

    for c in &cases {
        let mut worst = 0.0f64;
        for seed in 0..SEEDS {
            let shapes: Vec<(&[usize], Draw)> =
                c.shapes.iter().map(|(s, d)| (s.as_slice(), *d)).collect();
            let err = finite_diff_max_rel_err(&shapes, seed, |g, leaves| (c.build)(g, leaves, &w));
            worst = worst.max(err);
        }
        assert!(
            worst < FD_TOL,
            "{}: max relative error {worst} >= {FD_TOL}",
            c.name
        );
        println!("  gradient check {:<18} max rel err {worst:.3e}", c.name);
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "gradient suite took {elapsed:?}, budget is one minute"
    );
    println!(
        "ACCEPTANCE 1 gradient suite: PASS ({} layer kinds x {SEEDS} seeds in {elapsed:?})",
        cases.len()
    );
}

/// ACCEPTANCE 2 — ground-truth relation identities hold exactly over 10,000
/// random target pairs.
#[test]
fn acceptance_2_relation_algebra() {
    let a = 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let tx = rng.gen_range(0.0..=a);
        let ty = rng.gen_range(0.0..=a);
        let r = ground_truth_relations(tx, ty, a).unwrap();
        assert_eq!(r.r1, r.r3 + r.r4, "r1 = r3 + r4 violated at ({tx}, {ty})");
        assert_eq!(
            r.r2.abs(),
            r.r3 - r.r4,
            "|r2| = r3 - r4 violated at ({tx}, {ty})"
        );
        let swapped = ground_truth_relations(ty, tx, a).unwrap();
        assert_eq!(
            (swapped.r1, swapped.r2, swapped.r3, swapped.r4),
            (r.r1, -r.r2, r.r3, r.r4),
            "swap law violated at ({tx}, {ty})"
        );
        let refl = ground_truth_relations(tx, tx, a).unwrap();
        assert_eq!(
            (refl.r1, refl.r2, refl.r3, refl.r4),
            (2.0 * tx, 0.0, tx, tx)
        );
    }
    println!("ACCEPTANCE 2 relation algebra: PASS (identities exact over 10,000 draws)");
}

/// ACCEPTANCE 3 — with exact relations, S1, S5–S8 and S10–S15 recover tau_x
/// to within 1e-9 years over 10,000 draws.
#[test]
fn acceptance_3_recovery_round_trip() {
    let a = 100.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let tx = rng.gen_range(0.0..=a);
        let ty = rng.gen_range(0.0..=a);
        let r = ground_truth_relations(tx, ty, a).unwrap();
        let pr = recover_pair(&r);
        let rr = recover_with_reference(&r, ty);
        let sr = recover_self(&ground_truth_relations(tx, tx, a).unwrap());
        for est in [
            pr.s1.0, rr.s5, rr.s6, rr.s7, rr.s8, sr.s10, sr.s11, sr.s12, sr.s13, sr.s14, sr.s15,
        ] {
            worst = worst.max((est - tx).abs());
        }
    }
    assert!(worst < 1e-9, "worst recovery error {worst} >= 1e-9 years");
    println!("ACCEPTANCE 3 recovery round-trip: PASS (worst error {worst:.2e} years)");
}

/// ACCEPTANCE 4 — the maximum-consistency estimate matches an exhaustive
/// brute-force argmax (same smallest-age tie-break) on 1,000 random
/// instances with up to 10 references and A <= 20.
#[test]
fn acceptance_4_mc_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1_000 {
        let max_age = rng.gen_range(1..=20u32);
        let n_refs = rng.gen_range(1..=10usize);
        let t = rng.gen_range(0.0..5.0f64);
        let comparisons: Vec<(f64, Ternary)> = (0..n_refs)
            .map(|_| {
                let tau_y = rng.gen_range(0.0..=max_age as f64);
                let verdict = match rng.gen_range(0..3) {
                    0 => Ternary::Greater,
                    1 => Ternary::Similar,
                    _ => Ternary::Smaller,
                };
                (tau_y, verdict)
            })
            .collect();

        // Brute-force oracle, written independently of the implementation.
        let mut best_age = 0u32;
        let mut best_count = -1i64;
        for cand in 0..=max_age {
            let c = cand as f64;
            let mut count = 0i64;
            for &(tau_y, v) in &comparisons {
                let d = c - tau_y;
                let ok = match v {
                    Ternary::Greater => d > t,
                    Ternary::Similar => d.abs() <= t,
                    Ternary::Smaller => d < -t,
                };
                if ok {
                    count += 1;
                }
            }
            if count > best_count {
                best_count = count;
                best_age = cand;
            }
        }

        let got = mc_estimate(&comparisons, t, max_age).unwrap();
        assert_eq!(
            got, best_age as f64,
            "case {case}: mc_estimate {got} != brute force {best_age} (A={max_age}, t={t})"
        );
    }
    println!("ACCEPTANCE 4 MC oracle equivalence: PASS (1,000 instances, ties included)");
}

/// ACCEPTANCE 5 — the 3-d path reproduces the quoted pipeline shapes by pure
/// shape propagation: input 2 x 80 x 130 x 170, 40 feature positions, token
/// sequences 64 x 40 and 64 x 80.
#[test]
fn acceptance_5_shape_parity() {
    let started = Instant::now();
    let cfg = BackboneConfig {
        spatial_dims: 3,
        input_spatial: vec![80, 130, 170],
        ..Default::default()
    };
    cfg.validate().unwrap();
    let feat = cfg.feature_spatial().unwrap();
    let positions: usize = feat.iter().product();
    assert_eq!(positions, 40, "feature positions {feat:?}");
    assert_eq!(cfg.feature_dim(), 64);

    let mut g: Graph<f64> = Graph::new();
    let tx = g.constant(&[64, 40], vec![0.0; 64 * 40]).unwrap();
    let ty = g.constant(&[64, 40], vec![0.5; 64 * 40]).unwrap();
    assert_eq!(g.shape(tx), &[64, 40]);
    let seq = tokenize_pair(&mut g, tx, ty).unwrap();
    assert_eq!(g.shape(seq), &[64, 80]);
    assert!(started.elapsed().as_secs() < 10);
    println!(
        "ACCEPTANCE 5 shape parity: PASS (2x80x130x170 -> {feat:?} = 40 positions, tokens 64x40, concatenated 64x80)"
    );
}

/// ACCEPTANCE 6 — desk-scale learning: 2,000 subjects with uniform targets
/// over [0, 100], 2x32x32 images, joint mode, transformer head, default
/// schedule; held-out MAE via strategy S3 must beat 12.5 years (half the
/// best-constant-predictor MAE of 25) within a 20-minute budget.
#[test]
fn acceptance_6_desk_scale_learning() {
    use relage_core::data::{assign_folds, generate_dataset, GeneratorConfig};
    use relage_core::experiments::{
        evaluate_fold, train_model_set, EvalConfig, EvalMode, LossConfig, ReportBuilder,
        TrainConfig,
    };
    use relage_core::model::{BackboneConfig, HeadConfig};
    use relage_core::relations::StrategyId;

    let started = Instant::now();
    let gen_cfg = GeneratorConfig {
        n_subjects: 2000,
        seed: 6,
        ..Default::default()
    };
    assert_eq!(gen_cfg.max_age, 100.0);
    assert_eq!(gen_cfg.spatial_extents, vec![32, 32]);
    assert!(matches!(
        gen_cfg.age_distribution,
        relage_core::data::AgeDistribution::Uniform
    ));
    let mut subjects = generate_dataset(&gen_cfg).unwrap();
    assign_folds(&mut subjects, 5, 6).unwrap();
    let test: Vec<_> = subjects.iter().filter(|s| s.fold == 0).cloned().collect();
    let train: Vec<_> = subjects.iter().filter(|s| s.fold != 0).cloned().collect();

    let train_cfg = TrainConfig {
        seed: 6,
        ..Default::default()
    };
    assert_eq!(train_cfg.epochs, 30);
    assert_eq!(train_cfg.half_period, 15);
    assert_eq!(train_cfg.base_lr, 1e-4);
    assert_eq!(train_cfg.batch_size, 20);
    let (models, _) = train_model_set(
        &BackboneConfig::default(),
        &HeadConfig::default(), // transformer head, joint K = 4
        &LossConfig::default(),
        &train_cfg,
        &train,
        &test,
        gen_cfg.max_age,
        6,
        |_, _| {},
    )
    .unwrap();

    let eval_cfg = EvalConfig {
        modes: vec![EvalMode::Paired],
        ..Default::default()
    };
    let fold_eval = evaluate_fold(&models, &test, &train, &eval_cfg, gen_cfg.max_age).unwrap();

    // Self-pair sanity at convergence: the predicted |r2| on identical pairs
    // is strictly smaller than on random cross pairs.
    let self_cfg = EvalConfig {
        modes: vec![EvalMode::SelfPair],
        ..Default::default()
    };
    let self_eval = evaluate_fold(&models, &test, &train, &self_cfg, gen_cfg.max_age).unwrap();
    // S11 - S12 = r2 on self pairs; recover |r2| via the strategy identities.
    let self_r2: f64 = {
        let s11 = &self_eval.estimates[&StrategyId::S11];
        let s12 = &self_eval.estimates[&StrategyId::S12];
        s11.iter()
            .zip(s12)
            .map(|(&(_, a), &(_, b))| (a - b).abs())
            .sum::<f64>()
            / s11.len() as f64
    };
    let cross_r2: f64 = {
        let s1 = &fold_eval.estimates[&StrategyId::S1];
        // S1 x-estimate minus y-estimate reconstructs r2 per pair; entries
        // alternate (x, y) per pair.
        let mut total = 0.0;
        let mut n = 0usize;
        for pair in s1.chunks_exact(2) {
            total += (pair[0].1 - pair[1].1).abs();
            n += 1;
        }
        total / n as f64
    };
    assert!(
        self_r2 < cross_r2,
        "self-pair |r2| {self_r2:.3} not smaller than cross-pair |r2| {cross_r2:.3}"
    );

    let mut builder = ReportBuilder::new(&eval_cfg);
    builder.add_fold(0, &test, &fold_eval).unwrap();
    let report = builder.finish(1).unwrap();
    let s3 = report
        .strategies
        .iter()
        .find(|s| s.strategy == StrategyId::S3)
        .unwrap();
    let elapsed = started.elapsed();
    assert!(
        s3.mae_mean < 12.5,
        "held-out S3 MAE {:.3} years >= 12.5 (best constant predictor is 25)",
        s3.mae_mean
    );
    assert!(
        elapsed.as_secs() < 1200,
        "desk run took {elapsed:?}, budget is 20 minutes"
    );
    println!(
        "ACCEPTANCE 6 desk-scale learning: PASS (S3 MAE {:.3} years < 12.5, self |r2| {:.2} < cross |r2| {:.2}, total {elapsed:?})",
        s3.mae_mean, self_r2, cross_r2
    );
}

/// ACCEPTANCE 7 — transformer vs. FC head on the desk task, reported with a
/// paired t-test rather than hard-asserted (the direction is expected, not
/// gated, at this scale).
#[test]
fn acceptance_7_head_comparison_reported() {
    use relage_core::data::{assign_folds, generate_dataset, GeneratorConfig};
    use relage_core::experiments::{
        evaluate_fold, paired_t_test, significance_label, train_model_set, EvalConfig, EvalMode,
        LossConfig, ReportBuilder, TrainConfig,
    };
    use relage_core::model::{BackboneConfig, HeadConfig, HeadVariant};
    use relage_core::relations::StrategyId;
    use std::collections::BTreeMap;

    let gen_cfg = GeneratorConfig {
        n_subjects: 2000,
        seed: 7,
        ..Default::default()
    };
    let mut subjects = generate_dataset(&gen_cfg).unwrap();
    assign_folds(&mut subjects, 5, 7).unwrap();
    let test: Vec<_> = subjects.iter().filter(|s| s.fold == 0).cloned().collect();
    let train: Vec<_> = subjects.iter().filter(|s| s.fold != 0).cloned().collect();

    // A shortened schedule keeps the comparison affordable; both heads get
    // identical budgets and data.
    let train_cfg = TrainConfig {
        epochs: 10,
        val_pairs: 0,
        seed: 7,
        ..Default::default()
    };
    let eval_cfg = EvalConfig {
        modes: vec![EvalMode::Paired],
        ..Default::default()
    };

    let mut errors: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    let mut maes: BTreeMap<&str, f64> = BTreeMap::new();
    for (label, variant) in [
        ("transformer", HeadVariant::Transformer),
        ("fc", HeadVariant::FullyConnected),
    ] {
        let head = HeadConfig {
            variant,
            ..Default::default()
        };
        let (models, _) = train_model_set(
            &BackboneConfig::default(),
            &head,
            &LossConfig::default(),
            &train_cfg,
            &train,
            &[],
            gen_cfg.max_age,
            7,
            |_, _| {},
        )
        .unwrap();
        let fold_eval = evaluate_fold(&models, &test, &train, &eval_cfg, gen_cfg.max_age).unwrap();
        let mut builder = ReportBuilder::new(&eval_cfg);
        builder.add_fold(0, &test, &fold_eval).unwrap();
        let report = builder.finish(1).unwrap();
        let per_subject: BTreeMap<String, f64> = report
            .per_subject
            .iter()
            .filter(|r| r.strategy == StrategyId::S3)
            .map(|r| (r.subject_id.clone(), r.abs_error))
            .collect();
        let s3 = report
            .strategies
            .iter()
            .find(|s| s.strategy == StrategyId::S3)
            .unwrap();
        maes.insert(label, s3.mae_mean);
        errors.insert(label, per_subject);
    }

    let ids: Vec<&String> = errors["transformer"].keys().collect();
    let a: Vec<f64> = ids.iter().map(|id| errors["transformer"][*id]).collect();
    let b: Vec<f64> = ids.iter().map(|id| errors["fc"][*id]).collect();
    let tt = paired_t_test(&a, &b).unwrap();

    // Emit the comparison table (logged, non-gating).
    let table = format!(
        "head            S3 MAE (years)\n\
         transformer     {:.3}\n\
         fc              {:.3}\n\
         paired t-test (transformer vs fc): t = {:.3}, p = {:.3e} {}\n",
        maes["transformer"],
        maes["fc"],
        tt.t,
        tt.p_two_sided,
        significance_label(tt.p_two_sided)
    );
    println!("ACCEPTANCE 7 head comparison (reported, non-gating):\n{table}");
    let out = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("head_comparison.txt");
    std::fs::write(&out, &table).unwrap();
    println!("comparison table -> {}", out.display());

    assert!(maes["transformer"].is_finite() && maes["fc"].is_finite());
}

/// ACCEPTANCE 8 — metric and statistics oracles: CS edge laws, Pearson
/// degenerate cases, the worked t-test example, ranking tie conventions.
#[test]
fn acceptance_8_metrics_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // CS(inf) = 100 %, CS monotone in alpha.
    let truths: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..100.0)).collect();
    let estimates: Vec<f64> = truths
        .iter()
        .map(|t| t + rng.gen_range(-20.0..20.0))
        .collect();
    let inf = compute_metrics(&estimates, &truths, f64::INFINITY).unwrap();
    assert_eq!(inf.cs_percent, 100.0);
    let mut last = -1.0;
    for alpha in [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
        let m = compute_metrics(&estimates, &truths, alpha).unwrap();
        assert!(m.cs_percent >= last, "CS not monotone at alpha {alpha}");
        last = m.cs_percent;
    }

    // Pearson degenerate cases, exact within 1e-8.
    let scaled: Vec<f64> = truths.iter().map(|t| 2.0 * t + 7.0).collect();
    assert!((compute_metrics(&scaled, &truths, 5.0).unwrap().pearson - 1.0).abs() < 1e-8);
    let zero_mean: Vec<f64> = vec![-4.0, -1.0, 0.0, 1.0, 4.0];
    let negated: Vec<f64> = zero_mean.iter().map(|v| -v).collect();
    assert!((compute_metrics(&negated, &zero_mean, 5.0).unwrap().pearson + 1.0).abs() < 1e-8);

    // Worked t-test example: differences (1, 1, 1, -1) give t = 1.0 and
    // p = P(|T_3| >= 1); checked against an independent evaluation.
    let errs_a = [2.0, 3.0, 4.0, 0.0];
    let errs_b = [1.0, 2.0, 3.0, 1.0];
    let tt = paired_t_test(&errs_a, &errs_b).unwrap();
    assert!((tt.t - 1.0).abs() < 1e-12, "t = {}", tt.t);
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let oracle = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, 3.0).unwrap().cdf(1.0));
    assert!(
        (tt.p_two_sided - oracle).abs() < 1e-8,
        "p = {} vs oracle {oracle}",
        tt.p_two_sided
    );
    assert!(
        (tt.p_two_sided - 0.391).abs() < 1e-3,
        "p = {}",
        tt.p_two_sided
    );

    // Ranking tie conventions.
    let ranks = rank_models(&[vec![2.0, 3.0], vec![3.0, 2.0], vec![4.0, 4.0]]).unwrap();
    assert_eq!(ranks, vec![1.5, 1.5, 3.0]);
    let ranks = rank_models(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    assert_eq!(ranks, vec![1.5, 1.5]);

    println!(
        "ACCEPTANCE 8 metrics oracles: PASS (CS edge laws, Pearson ±1, t-test p = {:.6} vs oracle {:.6}, rank ties)",
        tt.p_two_sided, oracle
    );
}

/// ACCEPTANCE 9 — the k-fold protocol holds every subject out exactly once
/// with fold sizes balanced within one, for any n.
#[test]
fn acceptance_9_cv_protocol() {
    for (n, k) in [
        (10usize, 5usize),
        (11, 5),
        (23, 5),
        (100, 5),
        (101, 5),
        (6049, 5),
        (7, 3),
    ] {
        let folds = make_folds(n, k, 0xC0FFEE).unwrap();
        assert_eq!(folds.len(), n);
        let mut sizes = vec![0usize; k];
        for &f in &folds {
            sizes[f] += 1;
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(
            hi - lo <= 1,
            "fold sizes {sizes:?} unbalanced for n={n}, k={k}"
        );
        assert_eq!(sizes.iter().sum::<usize>(), n, "not a partition for n={n}");
    }

    // A relation vector built from predictions participates in every
    // strategy; sanity-check the estimate column coverage claim at the type
    // level (S1..S16 enumerable).
    assert_eq!(relage_core::relations::StrategyId::ALL.len(), 16);
    let r = RelationVector::predicted(50.0, 2.0, 27.0, 24.0);
    let rec = recover_self(&r);
    assert_eq!(rec.s16, 25.25);

    println!("ACCEPTANCE 9 CV protocol: PASS (exact cover, balance within 1, incl. n = 6049)");
}

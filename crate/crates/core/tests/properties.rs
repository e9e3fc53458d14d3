//! Invariant and property tests across the modules: relation algebra laws,
//! recovery/ensemble identities, sampler and generator statistics, shape
//! totality, encoder-block behavior and end-to-end gradient flow.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relage_core::data::{
    generate_dataset, generate_subject, sample_pair_batch, AgeDistribution, GeneratorConfig,
    MixtureComponent, Subject,
};
use relage_core::experiments::{relation_loss, uncertainty};
use relage_core::model::{
    tokenize_pair, BackboneConfig, HeadConfig, HeadVariant, PairModel, Sharing,
};
use relage_core::numerics::Graph;
use relage_core::relations::{
    ground_truth_relations, recover_pair, recover_self, recover_with_reference, RelationVector,
};

proptest! {
    /// Ground-truth redundancy and the swap law, over arbitrary valid pairs.
    #[test]
    fn relation_identities(tx in 0.0..100.0f64, ty in 0.0..100.0f64) {
        let r = ground_truth_relations(tx, ty, 100.0).unwrap();
        prop_assert_eq!(r.r1, r.r3 + r.r4);
        prop_assert_eq!(r.r2.abs(), r.r3 - r.r4);
        let s = ground_truth_relations(ty, tx, 100.0).unwrap();
        prop_assert_eq!((s.r1, s.r2, s.r3, s.r4), (r.r1, -r.r2, r.r3, r.r4));
    }

    /// Ensembles are exact arithmetic means of their constituents for
    /// arbitrary (not necessarily consistent) predicted relations.
    #[test]
    fn ensembles_are_means(
        r1 in -50.0..250.0f64,
        r2 in -120.0..120.0f64,
        r3 in -20.0..120.0f64,
        r4 in -20.0..120.0f64,
        tau_y in 0.0..100.0f64,
    ) {
        let r = RelationVector::predicted(r1, r2, r3, r4);
        let p = recover_pair(&r);
        prop_assert!((p.s3.0 - (p.s1.0 + p.s2.0) / 2.0).abs() < 1e-12);
        prop_assert!((p.s3.1 - (p.s1.1 + p.s2.1) / 2.0).abs() < 1e-12);
        let f = recover_with_reference(&r, tau_y);
        prop_assert!((f.s9 - (f.s5 + f.s6 + f.s7 + f.s8) / 4.0).abs() < 1e-12);
        let s = recover_self(&r);
        let mean = (s.s10 + s.s11 + s.s12 + s.s13 + s.s14 + s.s15) / 6.0;
        prop_assert!((s.s16 - mean).abs() < 1e-12);
    }

    /// Pooling and convolution shape rules are total over valid inputs.
    #[test]
    fn shape_rules_are_total(
        n in 1usize..3,
        c in 1usize..4,
        h in 2usize..12,
        w in 2usize..12,
        k in prop::sample::select(vec![1usize, 3]),
        out_c in 1usize..4,
    ) {
        let mut g: Graph<f32> = Graph::new();
        let x = g.constant(&[n, c, h, w], vec![0.0; n * c * h * w]).unwrap();
        let weight = g.constant(&[out_c, c, k, k], vec![0.1; out_c * c * k * k]).unwrap();
        let y = g.conv(x, weight, None).unwrap();
        prop_assert_eq!(g.shape(y), &[n, out_c, h, w]);
        let p = g.max_pool(y).unwrap();
        prop_assert_eq!(g.shape(p), &[n, out_c, h / 2, w / 2]);
    }

    /// Uncertainty is the population standard deviation, cross-checked with
    /// an independent two-pass computation.
    #[test]
    fn uncertainty_matches_two_pass_variance(est in prop::collection::vec(-50.0..150.0f64, 2..8)) {
        let got = uncertainty(&est).unwrap();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let var = est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / est.len() as f64;
        prop_assert!((got - var.sqrt()).abs() < 1e-10);
    }

    /// Fold assignment is an exact balanced cover for any n >= k.
    #[test]
    fn folds_partition_and_balance(n in 5usize..400, seed in 0u64..1000) {
        let k = 5;
        let folds = relage_core::data::make_folds(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), n);
        let mut sizes = vec![0usize; k];
        for &f in &folds {
            prop_assert!(f < k);
            sizes[f] += 1;
        }
        let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "sizes {:?}", sizes);
    }
}

/// Directional noise on the two contributors of r1 cancels, so S5 lands
/// closer to the truth than S6, which inherits the full error of r2
/// (Monte-Carlo over synthetic draws).
#[test]
fn reference_strategies_split_directional_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut s5_wins = 0usize;
    let trials = 2000;
    for _ in 0..trials {
        use rand::Rng;
        let tx = rng.gen_range(10.0..90.0);
        let ty = rng.gen_range(10.0..90.0);
        // Errors in opposite directions on the two subjects: the sum keeps
        // only the difference of the errors, the difference keeps their sum.
        let e: f64 = rng.gen_range(0.5..5.0);
        let r = RelationVector::predicted((tx + e) + (ty - e), (tx + e) - (ty - e), 0.0, 0.0);
        let rec = recover_with_reference(&r, ty);
        if (rec.s5 - tx).abs() < (rec.s6 - tx).abs() {
            s5_wins += 1;
        }
    }
    assert_eq!(
        s5_wins, trials,
        "S5 should dominate S6 under directional noise"
    );
}

/// Swapping the pair swaps the token halves exactly.
#[test]
fn tokenize_swap_symmetry() {
    let mut g: Graph<f64> = Graph::new();
    let a = g
        .constant(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        .unwrap();
    let b = g
        .constant(&[3, 2], vec![-1.0, -2.0, -3.0, -4.0, -5.0, -6.0])
        .unwrap();
    let ab = tokenize_pair(&mut g, a, b).unwrap();
    let ba = tokenize_pair(&mut g, b, a).unwrap();
    let (vab, vba) = (g.value(ab).to_vec(), g.value(ba).to_vec());
    for row in 0..3 {
        for i in 0..2 {
            assert_eq!(vab[row * 4 + i], vba[row * 4 + 2 + i]);
            assert_eq!(vab[row * 4 + 2 + i], vba[row * 4 + i]);
        }
    }
}

/// The sampler picks non-empty age groups uniformly: two groups of very
/// different sizes are selected equally often (chi-square at the 0.01 level).
#[test]
fn sampler_group_marginal_is_uniform() {
    let cfg = GeneratorConfig {
        n_subjects: 2,
        noise_sigma: 0.0,
        ..Default::default()
    };
    let mut subjects: Vec<Subject> = Vec::new();
    // Group A: 1000 subjects around age 10; group B: 10 subjects around 90.
    for i in 0..1010 {
        let tau = if i < 1000 { 10.2 } else { 90.2 };
        let mut s = generate_subject(tau, &cfg, &format!("s{i}")).unwrap();
        s.tau = tau + (i % 7) as f64 * 0.01;
        subjects.push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let draws = 10_000usize;
    let mut group_a = 0usize;
    for chunk in 0..(draws / 100) {
        let _ = chunk;
        let pairs = sample_pair_batch(&subjects, 100, 100.0, false, &mut rng).unwrap();
        for (x, _) in pairs {
            if subjects[x].tau < 50.0 {
                group_a += 1;
            }
        }
    }
    let expected = draws as f64 / 2.0;
    let chi2 = {
        let a = group_a as f64;
        let b = (draws - group_a) as f64;
        (a - expected).powi(2) / expected + (b - expected).powi(2) / expected
    };
    // One degree of freedom, significance 0.01 -> critical value 6.635.
    assert!(
        chi2 < 6.635,
        "group selection not uniform: chi2 = {chi2:.2} ({group_a}/{draws})"
    );
}

/// Least-squares recoverability of the target from the noiseless channel-2
/// mean: the synthetic task is well-posed.
#[test]
fn generator_label_recoverable_from_intensity() {
    let cfg = GeneratorConfig {
        n_subjects: 64,
        noise_sigma: 0.0,
        ..Default::default()
    };
    let subjects = generate_dataset(&cfg).unwrap();
    let positions = 32 * 32;
    let (taus, means): (Vec<f64>, Vec<f64>) = subjects
        .iter()
        .map(|s| {
            let m = s.image.values[positions..]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>()
                / positions as f64;
            (s.tau, m)
        })
        .unzip();
    let r = relage_core::experiments::pearson(&means, &taus).unwrap();
    assert!(
        r > 0.999,
        "channel-2 mean correlates only {r} with the target"
    );
}

/// Mixture sampling matches the configured component weights (chi-square on
/// well-separated components, 0.01 significance, 2 degrees of freedom).
#[test]
fn mixture_age_histogram_matches_weights() {
    let cfg = GeneratorConfig {
        n_subjects: 4000,
        age_distribution: AgeDistribution::Mixture(vec![
            MixtureComponent {
                weight: 0.5,
                mean: 10.0,
                std: 1.0,
            },
            MixtureComponent {
                weight: 0.3,
                mean: 50.0,
                std: 1.0,
            },
            MixtureComponent {
                weight: 0.2,
                mean: 90.0,
                std: 1.0,
            },
        ]),
        noise_sigma: 0.0,
        seed: 5,
        ..Default::default()
    };
    let subjects = generate_dataset(&cfg).unwrap();
    let mut counts = [0usize; 3];
    for s in &subjects {
        let bin = if s.tau < 30.0 {
            0
        } else if s.tau < 70.0 {
            1
        } else {
            2
        };
        counts[bin] += 1;
    }
    let n = subjects.len() as f64;
    let expected = [0.5 * n, 0.3 * n, 0.2 * n];
    let chi2: f64 = counts
        .iter()
        .zip(expected)
        .map(|(&c, e)| (c as f64 - e).powi(2) / e)
        .sum();
    // Two degrees of freedom, significance 0.01 -> critical value 9.210.
    assert!(
        chi2 < 9.210,
        "histogram {counts:?} vs expected {expected:?}: chi2 = {chi2:.2}"
    );
}

fn tiny_backbone() -> BackboneConfig {
    BackboneConfig {
        channel_plan: vec![4, 4, 4, 4, 4, 8],
        ..Default::default()
    }
}

/// After one random batch, every trainable parameter receives a nonzero
/// gradient (end-to-end differentiability; probability-1 under random play).
#[test]
fn gradient_reaches_every_parameter() {
    for variant in [HeadVariant::Transformer, HeadVariant::FullyConnected] {
        let head = HeadConfig {
            num_blocks: 1,
            num_heads: 2,
            variant,
            ..Default::default()
        };
        let mut model = PairModel::<f64>::build(tiny_backbone(), head, 11).unwrap();
        let data = generate_dataset(&GeneratorConfig {
            n_subjects: 6,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let mut g = Graph::new();
        let xs: Vec<_> = data[..3].iter().map(|s| &s.image).collect();
        let ys: Vec<_> = data[3..].iter().map(|s| &s.image).collect();
        let preds = model.forward_pair_batch(&mut g, &xs, &ys, true).unwrap();
        let targets: Vec<Vec<f64>> = (0..4).map(|i| vec![10.0 * i as f64; 3]).collect();
        let loss = relation_loss(&mut g, &preds.per_relation, &targets).unwrap();
        g.backward(loss).unwrap();
        model.store.accumulate_grads(&g, &preds.bindings);
        for (_, p) in model.store.iter() {
            if !p.trainable {
                continue;
            }
            assert!(p.grad_set, "{}: no gradient at all", p.name);
            assert!(
                p.grad.iter().any(|&v| v != 0.0),
                "{}: gradient identically zero",
                p.name
            );
        }
    }
}

/// With the attention output projection and the FFN second layer zeroed, the
/// residual encoder blocks act as the identity: the relation heads then read
/// the raw tokens, reproducing a hand-computed affine map.
#[test]
fn encoder_blocks_near_identity_when_zeroed() {
    let head = HeadConfig {
        num_blocks: 2,
        num_heads: 2,
        ..Default::default()
    };
    let mut model = PairModel::<f64>::build(tiny_backbone(), head, 17).unwrap();
    for block in 0..2 {
        for name in ["attn.wo", "attn.bo", "ffn.w2", "ffn.b2"] {
            let id = model
                .store
                .lookup(&format!("head.block{block}.{name}"))
                .unwrap();
            let p = model.store.get_mut(id);
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let data = generate_dataset(&GeneratorConfig {
        n_subjects: 2,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let fx = model
        .extract_features(&data[0].image, relage_core::model::Slot::X)
        .unwrap();
    let fy = model
        .extract_features(&data[1].image, relage_core::model::Slot::Y)
        .unwrap();
    let preds = model.head_eval_batch(&[(&fx, &fy)]).unwrap().remove(0);

    let d = model.feature_dim();
    // Tokens are the two feature columns; relation i reads token i mod 2.
    let tokens = [fx, fy];
    for (i, rel) in model.head.relation_subset.clone().iter().enumerate() {
        let w_id = model.store.lookup(&format!("head.rel.{rel}.w")).unwrap();
        let b_id = model.store.lookup(&format!("head.rel.{rel}.b")).unwrap();
        let w = &model.store.get(w_id).value;
        let b = model.store.get(b_id).value[0];
        let tok = &tokens[i % 2];
        let mut dot = 0.0;
        for j in 0..d {
            dot += w[j] * tok[j];
        }
        let expected = model.head.output_scale * (dot + b);
        assert!(
            (preds[i] - expected).abs() < 1e-9,
            "relation {rel}: {} vs hand-computed {expected}",
            preds[i]
        );
    }
}

/// The FC head on zero input reduces to its composed biases pushed through
/// the ReLUs.
#[test]
fn fc_head_zero_input_equals_composed_biases() {
    let head = HeadConfig {
        variant: HeadVariant::FullyConnected,
        ..Default::default()
    };
    let model = PairModel::<f64>::build(tiny_backbone(), head, 31).unwrap();
    let d = model.feature_dim();
    let zeros = vec![0.0f64; d * model.token_count()];
    let preds = model
        .head_eval_batch(&[(&zeros, &zeros)])
        .unwrap()
        .remove(0);

    let get = |name: &str| model.store.get(model.store.lookup(name).unwrap());
    let relu = |v: f64| v.max(0.0);
    let mut h: Vec<f64> = get("head.fc1.b").value.iter().map(|&b| relu(b)).collect();
    let (w2, b2) = (get("head.fc2.w"), get("head.fc2.b"));
    let mut h2 = vec![0.0f64; 64];
    for (j, out) in h2.iter_mut().enumerate() {
        let mut acc = b2.value[j];
        for (i, &hv) in h.iter().enumerate() {
            acc += hv * w2.value[i * 64 + j];
        }
        *out = relu(acc);
    }
    h = h2;
    let (w3, b3) = (get("head.fc3.w"), get("head.fc3.b"));
    for (k, &pred) in preds.iter().enumerate() {
        let mut acc = b3.value[k];
        for (i, &hv) in h.iter().enumerate() {
            acc += hv * w3.value[i * 4 + k];
        }
        let expected = model.head.output_scale * acc;
        assert!(
            (pred - expected).abs() < 1e-9,
            "relation {k}: {pred} vs {expected}"
        );
    }
}

/// The transformer head runs at the full quoted token geometry (64 x 80,
/// eight heads) and stays shape-consistent end to end.
#[test]
fn transformer_head_at_quoted_token_geometry() {
    let backbone = BackboneConfig {
        spatial_dims: 3,
        input_spatial: vec![80, 130, 170],
        ..Default::default()
    };
    let model = PairModel::<f64>::build(backbone, HeadConfig::default(), 41).unwrap();
    assert_eq!(model.token_count(), 40);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    use rand::Rng;
    let fx: Vec<f64> = (0..64 * 40).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fy: Vec<f64> = (0..64 * 40).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let preds = model.head_eval_batch(&[(&fx, &fy)]).unwrap().remove(0);
    assert_eq!(preds.len(), 4);
    assert!(preds.iter().all(|p| p.is_finite()));
}

/// Evaluation-mode inference is safe to run concurrently on a frozen model.
#[test]
fn frozen_model_supports_concurrent_inference() {
    let head = HeadConfig {
        num_blocks: 1,
        num_heads: 2,
        ..Default::default()
    };
    let model = PairModel::<f32>::build(tiny_backbone(), head, 23).unwrap();
    let data = generate_dataset(&GeneratorConfig {
        n_subjects: 8,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let reference = model
        .predict_relations(&data[0].image, &data[1].image)
        .unwrap();
    std::thread::scope(|s| {
        for chunk in data.chunks(2) {
            s.spawn(|| {
                let r = model
                    .predict_relations(&chunk[0].image, &chunk[1].image)
                    .unwrap();
                assert_eq!(r.len(), 4);
            });
        }
    });
    let after = model
        .predict_relations(&data[0].image, &data[1].image)
        .unwrap();
    assert_eq!(reference, after);
}

/// Shared sharing halves the backbone parameters but keeps slot behavior
/// identical; independent sharing separates the slots.
#[test]
fn sharing_contract() {
    let shared = PairModel::<f64>::build(tiny_backbone(), HeadConfig::default(), 3).unwrap();
    let independent = PairModel::<f64>::build(
        BackboneConfig {
            sharing: Sharing::Independent,
            ..tiny_backbone()
        },
        HeadConfig::default(),
        3,
    )
    .unwrap();
    assert_eq!(
        independent.backbone_parameter_count(),
        2 * shared.backbone_parameter_count()
    );
}

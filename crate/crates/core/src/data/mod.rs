//! Synthetic desk-scale dataset: a procedural two-channel image family with a
//! learnable monotone age signal, plus manifests, fold assignment and the
//! age-group-balanced pair sampler.

mod manifest;
mod raster;

pub use manifest::{load_dataset, read_rows, save_dataset, ManifestRow};
pub use raster::{read_raster, write_raster};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of age groups the pair sampler balances over.
pub const AGE_GROUPS: usize = 100;

/// A dense channels-first image, `[channels, spatial…]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageData {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl ImageData {
    pub fn new(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(Error::Shape(format!(
                "image shape {shape:?} expects {numel} values, got {}",
                values.len()
            )));
        }
        Ok(ImageData { shape, values })
    }
}

/// One sample: identifier, scalar target in years, rendered input image,
/// cohort label and fold assignment.
#[derive(Clone, Debug)]
pub struct Subject {
    pub id: String,
    pub tau: f64,
    pub cohort: String,
    pub fold: usize,
    pub image: ImageData,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum AgeDistribution {
    Uniform,
    Mixture(Vec<MixtureComponent>),
}

impl AgeDistribution {
    /// A right-skewed lifespan-like mixture: most mass around young adults,
    /// a long tail of older subjects and a small infant mode.
    pub fn skewed_default() -> Self {
        AgeDistribution::Mixture(vec![
            MixtureComponent {
                weight: 0.5,
                mean: 22.0,
                std: 8.0,
            },
            MixtureComponent {
                weight: 0.2,
                mean: 5.0,
                std: 4.0,
            },
            MixtureComponent {
                weight: 0.3,
                mean: 60.0,
                std: 20.0,
            },
        ])
    }

    fn sample<R: Rng>(&self, rng: &mut R, max_age: f64) -> f64 {
        match self {
            AgeDistribution::Uniform => rng.gen_range(0.0..=max_age),
            AgeDistribution::Mixture(components) => {
                let total: f64 = components.iter().map(|c| c.weight).sum();
                let mut pick = rng.gen_range(0.0..total);
                let mut chosen = &components[components.len() - 1];
                for c in components {
                    if pick < c.weight {
                        chosen = c;
                        break;
                    }
                    pick -= c.weight;
                }
                let normal = Normal::new(chosen.mean, chosen.std).expect("finite std");
                for _ in 0..64 {
                    let draw = normal.sample(rng);
                    if (0.0..=max_age).contains(&draw) {
                        return draw;
                    }
                }
                // Pathological component far outside the range: clamp.
                normal.sample(rng).clamp(0.0, max_age)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GeneratorConfig {
    pub max_age: f64,
    pub n_subjects: usize,
    /// Spatial extents of the rendered images (2 or 3 axes); each must admit
    /// five halvings.
    pub spatial_extents: Vec<usize>,
    pub noise_sigma: f32,
    pub age_distribution: AgeDistribution,
    /// Cohort labels are equal-width age bands ("c0", "c1", …).
    pub n_cohorts: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_age: 100.0,
            n_subjects: 2000,
            spatial_extents: vec![32, 32],
            noise_sigma: 0.05,
            age_distribution: AgeDistribution::Uniform,
            n_cohorts: 8,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.max_age.is_finite() || self.max_age <= 0.0 {
            return Err(Error::Config(format!(
                "max_age must be positive, got {}",
                self.max_age
            )));
        }
        if self.n_subjects == 0 {
            return Err(Error::Config("n_subjects must be at least 1".into()));
        }
        if !(self.spatial_extents.len() == 2 || self.spatial_extents.len() == 3) {
            return Err(Error::Config(format!(
                "images must have 2 or 3 spatial axes, got {:?}",
                self.spatial_extents
            )));
        }
        for &e in &self.spatial_extents {
            if e < 32 {
                return Err(Error::Config(format!(
                    "extent {e} does not admit five halvings (needs at least 32): {:?}",
                    self.spatial_extents
                )));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if self.n_cohorts == 0 {
            return Err(Error::Config("n_cohorts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cohort_of(&self, tau: f64) -> String {
        let band = ((tau / self.max_age) * self.n_cohorts as f64) as usize;
        format!("c{}", band.min(self.n_cohorts - 1))
    }
}

/// Per-subject RNG derived from (seed, id); parallel and serial generation
/// agree bit-exactly.
fn subject_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Render one subject deterministically from (tau, config, id).
///
/// Channel 1 carries the structural signal: a centered disk (2-d) or ball
/// (3-d) whose radius grows linearly with tau, up to half the smallest
/// extent. Channel 2 carries an intensity signal: a fixed spatial ramp scaled
/// by tau, so its mean is strictly increasing in the target. Zero-mean
/// Gaussian noise with `noise_sigma` is added to both channels.
pub fn generate_subject(tau: f64, cfg: &GeneratorConfig, id: &str) -> Result<Subject> {
    if !(0.0..=cfg.max_age).contains(&tau) {
        return Err(Error::InvalidArgument(format!(
            "tau = {tau} outside [0, {}]",
            cfg.max_age
        )));
    }
    let sp = &cfg.spatial_extents;
    let positions: usize = sp.iter().product();
    let mut values = vec![0.0f32; 2 * positions];
    let frac = (tau / cfg.max_age) as f32;

    let radius = frac * (*sp.iter().min().unwrap() as f32) / 2.0;
    let center: Vec<f32> = sp.iter().map(|&e| (e as f32 - 1.0) / 2.0).collect();
    let last = sp[sp.len() - 1];
    for (pos, v) in values[..positions].iter_mut().enumerate() {
        let mut rem = pos;
        let mut dist2 = 0.0f32;
        for ax in (0..sp.len()).rev() {
            let coord = (rem % sp[ax]) as f32;
            rem /= sp[ax];
            let d = coord - center[ax];
            dist2 += d * d;
        }
        if dist2.sqrt() <= radius {
            *v = 1.0;
        }
    }
    for (pos, v) in values[positions..].iter_mut().enumerate() {
        let col = pos % last;
        let ramp = 0.25 + 0.75 * col as f32 / (last - 1).max(1) as f32;
        *v = frac * ramp;
    }

    if cfg.noise_sigma > 0.0 {
        let mut rng = subject_rng(cfg.seed, id);
        let normal = Normal::new(0.0f64, cfg.noise_sigma as f64).expect("finite sigma");
        for v in &mut values {
            *v += normal.sample(&mut rng) as f32;
        }
    }

    let mut shape = vec![2];
    shape.extend_from_slice(sp);
    Ok(Subject {
        id: id.to_string(),
        tau,
        cohort: cfg.cohort_of(tau),
        fold: 0,
        image: ImageData::new(shape, values)?,
    })
}

/// Draw targets from the configured age distribution and render all subjects.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Vec<Subject>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    for i in 0..cfg.n_subjects {
        let tau = cfg.age_distribution.sample(&mut rng, cfg.max_age);
        let id = format!("s{i:06}");
        subjects.push(generate_subject(tau, cfg, &id)?);
    }
    Ok(subjects)
}

/// Seed-determined fold assignment: every index lands in exactly one of `k`
/// folds and fold sizes differ by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs k >= 2, got {k}"
        )));
    }
    if n < k {
        return Err(Error::Config(format!("{n} subjects cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    // First n % k folds get the extra subject.
    let base = n / k;
    let extra = n % k;
    let mut folds = vec![0usize; n];
    let mut cursor = 0usize;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &idx in &order[cursor..cursor + size] {
            folds[idx] = f;
        }
        cursor += size;
    }
    Ok(folds)
}

pub fn assign_folds(subjects: &mut [Subject], k: usize, seed: u64) -> Result<()> {
    let folds = make_folds(subjects.len(), k, seed)?;
    for (s, f) in subjects.iter_mut().zip(folds) {
        s.fold = f;
    }
    Ok(())
}

/// Age-group-balanced pair sampling: subjects are bucketed into
/// [`AGE_GROUPS`] equal-width groups over [0, max_age]; each pair element is
/// drawn by first picking a non-empty group uniformly, then a subject within
/// it uniformly. x and y are drawn independently; unless `allow_self` is set,
/// y is redrawn while it coincides with x.
pub fn sample_pair_batch<R: Rng>(
    train: &[Subject],
    batch_size: usize,
    max_age: f64,
    allow_self: bool,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot sample pairs from an empty training set".into(),
        ));
    }
    if !allow_self && train.len() < 2 {
        return Err(Error::InvalidArgument(
            "cannot sample distinct pairs from a single-subject training set".into(),
        ));
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); AGE_GROUPS];
    for (i, s) in train.iter().enumerate() {
        let g = ((s.tau / max_age) * AGE_GROUPS as f64) as usize;
        groups[g.min(AGE_GROUPS - 1)].push(i);
    }
    let nonempty: Vec<&Vec<usize>> = groups.iter().filter(|g| !g.is_empty()).collect();
    let draw = |rng: &mut R| {
        let g = nonempty[rng.gen_range(0..nonempty.len())];
        g[rng.gen_range(0..g.len())]
    };
    let mut pairs = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let x = draw(rng);
        let mut y = draw(rng);
        if !allow_self {
            while y == x {
                y = draw(rng);
            }
        }
        pairs.push((x, y));
    }
    Ok(pairs)
}

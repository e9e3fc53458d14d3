//! Accuracy metrics (MAE, cumulative score, Pearson), the paired t-test,
//! the strategy-disagreement uncertainty measure, and model ranking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::stats::student_t_two_sided_p;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean absolute error, in years.
    pub mae: f64,
    /// Cumulative score CS(alpha): percentage of estimates within alpha years.
    pub cs_percent: f64,
    /// Pearson correlation between estimates and truths.
    pub pearson: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "pearson needs two equal-length series with n >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::InvalidArgument(
            "pearson undefined for zero-variance input".into(),
        ));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// MAE, CS(alpha) and Pearson between estimates and ground truths.
pub fn compute_metrics(estimates: &[f64], truths: &[f64], alpha: f64) -> Result<Metrics> {
    if estimates.len() != truths.len() || estimates.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "metrics need two equal-length series with n >= 2, got {} and {}",
            estimates.len(),
            truths.len()
        )));
    }
    let errors: Vec<f64> = estimates
        .iter()
        .zip(truths)
        .map(|(e, t)| (e - t).abs())
        .collect();
    let mae = mean(&errors);
    let within = errors.iter().filter(|&&e| e <= alpha).count();
    let cs_percent = within as f64 / errors.len() as f64 * 100.0;
    let pearson = pearson(estimates, truths)?;
    Ok(Metrics {
        mae,
        cs_percent,
        pearson,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p_two_sided: f64,
}

/// Two-sided paired t-test on matched samples (typically absolute errors of
/// two methods over the same subjects). Zero-variance differences follow the
/// convention t = 0, p = 1 when the mean difference is zero, and p = 0
/// otherwise.
pub fn paired_t_test(errs_a: &[f64], errs_b: &[f64]) -> Result<TTest> {
    let n = errs_a.len();
    if n != errs_b.len() || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "paired t-test needs two equal-length samples with n >= 2, got {} and {}",
            errs_a.len(),
            errs_b.len()
        )));
    }
    let d: Vec<f64> = errs_a.iter().zip(errs_b).map(|(a, b)| a - b).collect();
    let md = mean(&d);
    let var = d.iter().map(|x| (x - md) * (x - md)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Ok(if md == 0.0 {
            TTest {
                t: 0.0,
                p_two_sided: 1.0,
            }
        } else {
            TTest {
                t: md.signum() * f64::INFINITY,
                p_two_sided: 0.0,
            }
        });
    }
    let t = md / (var.sqrt() / (n as f64).sqrt());
    let p = student_t_two_sided_p(t, n as f64 - 1.0);
    Ok(TTest { t, p_two_sided: p })
}

/// Significance stars: * p<0.05, ** p<0.01, *** p<0.001, **** p<0.0001.
pub fn significance_label(p: f64) -> &'static str {
    if p < 0.0001 {
        "****"
    } else if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Disagreement across recovery strategies for one subject: the population
/// standard deviation of the per-strategy estimates.
pub fn uncertainty(estimates_per_strategy: &[f64]) -> Result<f64> {
    if estimates_per_strategy.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "uncertainty needs at least 2 estimates, got {}",
            estimates_per_strategy.len()
        )));
    }
    Ok(population_std(estimates_per_strategy))
}

/// Average rank per model over a model x cohort MAE matrix. Rank 1 is the
/// lowest MAE within a cohort; ties share the mean of the tied ranks.
pub fn rank_models(per_cohort_mae: &[Vec<f64>]) -> Result<Vec<f64>> {
    if per_cohort_mae.is_empty() {
        return Err(Error::InvalidArgument("no models to rank".into()));
    }
    let n_cohorts = per_cohort_mae[0].len();
    if n_cohorts == 0 || per_cohort_mae.iter().any(|row| row.len() != n_cohorts) {
        return Err(Error::InvalidArgument(
            "ranking needs a complete model x cohort matrix".into(),
        ));
    }
    if per_cohort_mae.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "ranking matrix contains non-finite entries".into(),
        ));
    }
    let n_models = per_cohort_mae.len();
    let mut totals = vec![0.0f64; n_models];
    for c in 0..n_cohorts {
        for m in 0..n_models {
            let v = per_cohort_mae[m][c];
            let below = per_cohort_mae.iter().filter(|row| row[c] < v).count();
            let tied = per_cohort_mae.iter().filter(|row| row[c] == v).count();
            // Mean of ranks (below+1)..=(below+tied).
            totals[m] += below as f64 + (tied as f64 + 1.0) / 2.0;
        }
    }
    Ok(totals.into_iter().map(|t| t / n_cohorts as f64).collect())
}

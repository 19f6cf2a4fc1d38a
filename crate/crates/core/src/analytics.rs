//! Closed-form variances of the estimators and a Monte Carlo harness that
//! checks them.
//!
//! Notation: `M[s][t] = sum_i x_i^s y_i^t` (see [`JointMomentTable`]). All
//! formulas are exact in `k` except the margin-MLE one, which is the leading
//! `1/k` term.
//!
//! p = 4, normal entries:
//!
//! ```text
//! Var_alt   = 36/k (M40 M04 + M22^2) + 16/k (M60 M02 + M31^2) + 16/k (M20 M06 + M13^2)
//! Delta4    = -48/k (M50 M03 + M21 M32) - 48/k (M30 M05 + M12 M23) + 32/k (M40 M04 + M11 M33)
//! Var_basic = Var_alt + Delta4
//! ```
//!
//! With sub-Gaussian entries of fourth moment `s`, each group of the basic
//! variance gains `(s - 3) M[a][b]` where `a + b = 8` follows the group's
//! powers (`M44`, `M62`, `M26`, `M53`, `M35`, `M44`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{check_estimator, estimate, EstimateOptions, EstimatorKind};
use crate::model::{exact_lp_distance, joint_moments, EvenOrder, JointMomentTable};
use crate::projections::{derive_seed, moment_s, ProjectionFamily, SeededProjection};
use crate::sketcher::{sketch_rows_with, SketchConfig, StrategyKind};

pub const MIN_TRIALS: usize = 100;

/// Trials per deterministic accumulation chunk.
const TRIAL_CHUNK: usize = 1024;

fn check_k(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "sketch width k must be >= 1".into(),
        ));
    }
    Ok(k as f64)
}

fn check_s(s: f64) -> Result<()> {
    if !(s.is_finite() && s >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fourth moment s must be >= 1, got {s}"
        )));
    }
    Ok(())
}

/// Variance formulas evaluated from one moment table.
pub mod formulas {
    use crate::model::JointMomentTable;

    pub fn alternative_p4(m: &JointMomentTable, k: f64) -> f64 {
        let g = |s, t| m.get(s, t);
        (36.0 * (g(4, 0) * g(0, 4) + g(2, 2).powi(2))
            + 16.0 * (g(6, 0) * g(0, 2) + g(3, 1).powi(2))
            + 16.0 * (g(2, 0) * g(0, 6) + g(1, 3).powi(2)))
            / k
    }

    pub fn delta_p4(m: &JointMomentTable, k: f64) -> f64 {
        let g = |s, t| m.get(s, t);
        (-48.0 * (g(5, 0) * g(0, 3) + g(2, 1) * g(3, 2))
            - 48.0 * (g(3, 0) * g(0, 5) + g(1, 2) * g(2, 3))
            + 32.0 * (g(4, 0) * g(0, 4) + g(1, 1) * g(3, 3)))
            / k
    }

    pub fn basic_p4(m: &JointMomentTable, k: f64) -> f64 {
        alternative_p4(m, k) + delta_p4(m, k)
    }

    pub fn sub_gaussian_p4(m: &JointMomentTable, k: f64, s: f64) -> f64 {
        let g = |a, b| m.get(a, b);
        let e = s - 3.0;
        (36.0 * (g(4, 0) * g(0, 4) + g(2, 2).powi(2) + e * g(4, 4))
            + 16.0 * (g(6, 0) * g(0, 2) + g(3, 1).powi(2) + e * g(6, 2))
            + 16.0 * (g(2, 0) * g(0, 6) + g(1, 3).powi(2) + e * g(2, 6))
            - 48.0 * (g(5, 0) * g(0, 3) + g(2, 1) * g(3, 2) + e * g(5, 3))
            - 48.0 * (g(3, 0) * g(0, 5) + g(1, 2) * g(2, 3) + e * g(3, 5))
            + 32.0 * (g(4, 0) * g(0, 4) + g(1, 1) * g(3, 3) + e * g(4, 4)))
            / k
    }

    /// `(PQ - a^2)^2 / (PQ + a^2)`, zero when the denominator vanishes.
    fn mle_term(pq: f64, a: f64) -> f64 {
        let den = pq + a * a;
        if den == 0.0 {
            0.0
        } else {
            (pq - a * a).powi(2) / den
        }
    }

    pub fn mle_p4(m: &JointMomentTable, k: f64) -> f64 {
        let g = |s, t| m.get(s, t);
        (36.0 * mle_term(g(4, 0) * g(0, 4), g(2, 2))
            + 16.0 * mle_term(g(6, 0) * g(0, 2), g(3, 1))
            + 16.0 * mle_term(g(2, 0) * g(0, 6), g(1, 3)))
            / k
    }

    pub fn alternative_p6(m: &JointMomentTable, k: f64) -> f64 {
        let g = |s, t| m.get(s, t);
        (400.0 * (g(6, 0) * g(0, 6) + g(3, 3).powi(2))
            + 225.0 * (g(4, 0) * g(0, 8) + g(2, 4).powi(2))
            + 225.0 * (g(8, 0) * g(0, 4) + g(4, 2).powi(2))
            + 36.0 * (g(2, 0) * g(0, 10) + g(1, 5).powi(2))
            + 36.0 * (g(10, 0) * g(0, 2) + g(5, 1).powi(2)))
            / k
    }

    pub fn delta_p6(m: &JointMomentTable, k: f64) -> f64 {
        let g = |s, t| m.get(s, t);
        (-600.0 * (g(5, 0) * g(0, 7) + g(3, 4) * g(2, 3))
            - 600.0 * (g(7, 0) * g(0, 5) + g(3, 2) * g(4, 3))
            + 240.0 * (g(4, 0) * g(0, 8) + g(3, 5) * g(1, 3))
            + 240.0 * (g(8, 0) * g(0, 4) + g(3, 1) * g(5, 3))
            + 450.0 * (g(6, 0) * g(0, 6) + g(2, 2) * g(4, 4))
            - 180.0 * (g(3, 0) * g(0, 9) + g(2, 5) * g(1, 4))
            - 180.0 * (g(7, 0) * g(0, 5) + g(2, 1) * g(5, 4))
            - 180.0 * (g(5, 0) * g(0, 7) + g(4, 5) * g(1, 2))
            - 180.0 * (g(9, 0) * g(0, 3) + g(4, 1) * g(5, 2))
            + 72.0 * (g(6, 0) * g(0, 6) + g(1, 1) * g(5, 5)))
            / k
    }

    pub fn basic_p6(m: &JointMomentTable, k: f64) -> f64 {
        alternative_p6(m, k) + delta_p6(m, k)
    }
}

fn table(x: &[f64], y: &[f64], max_order: usize) -> Result<JointMomentTable> {
    joint_moments(x, y, max_order)
}

/// Variance of the basic `p = 4` estimator with normal projections.
pub fn variance_basic_p4(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    let k = check_k(k)?;
    Ok(formulas::basic_p4(&table(x, y, 6)?, k))
}

/// Variance of the alternative `p = 4` estimator with normal projections.
pub fn variance_alternative_p4(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    let k = check_k(k)?;
    Ok(formulas::alternative_p4(&table(x, y, 6)?, k))
}

/// Basic minus alternative variance at `p = 4`; never positive for
/// non-negative data.
pub fn delta4(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    let k = check_k(k)?;
    Ok(formulas::delta_p4(&table(x, y, 6)?, k))
}

/// Leading-order variance of the margin MLE (alternative strategy, `p = 4`).
pub fn variance_mle_p4(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    let k = check_k(k)?;
    Ok(formulas::mle_p4(&table(x, y, 6)?, k))
}

pub fn variance_basic_p6(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    let k = check_k(k)?;
    Ok(formulas::basic_p6(&table(x, y, 10)?, k))
}

/// Variance of the `p = 6` estimator when every cross term has its own matrix.
pub fn variance_alternative_p6(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    let k = check_k(k)?;
    Ok(formulas::alternative_p6(&table(x, y, 10)?, k))
}

/// Basic minus alternative variance at `p = 6`. Its sign on non-negative data
/// is an open question and is only ever reported.
pub fn delta6(x: &[f64], y: &[f64], k: usize) -> Result<f64> {
    let k = check_k(k)?;
    Ok(formulas::delta_p6(&table(x, y, 10)?, k))
}

/// Variance of the basic `p = 4` estimator with entries of fourth moment `s`.
pub fn variance_subgaussian_p4(x: &[f64], y: &[f64], k: usize, s: f64) -> Result<f64> {
    let k = check_k(k)?;
    check_s(s)?;
    Ok(formulas::sub_gaussian_p4(&table(x, y, 6)?, k, s))
}

/// Streaming mean and variance; chunks merge pairwise in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn merge(self, other: RunningMoments) -> RunningMoments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / count as f64;
        RunningMoments {
            count,
            mean: self.mean + delta * w,
            m2: self.m2 + other.m2 + delta * delta * self.count as f64 * w,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Tree reduction over `parts` in index order.
    pub fn merge_all(mut parts: Vec<RunningMoments>) -> RunningMoments {
        while parts.len() > 1 {
            parts = parts
                .chunks(2)
                .map(|pair| match pair {
                    [a, b] => a.merge(*b),
                    [a] => *a,
                    _ => unreachable!(),
                })
                .collect();
        }
        parts.pop().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub estimator: EstimatorKind,
    pub strategy: StrategyKind,
    pub family: ProjectionFamily,
    pub trials: usize,
    pub mean: f64,
    pub variance: f64,
    /// `(mean - d) / sqrt(variance / trials)`; absent when undefined.
    pub mean_z_score: Option<f64>,
    /// The closed form matching this estimator and family, when one exists.
    pub analytic_variance: Option<f64>,
    /// `variance / analytic_variance`.
    pub variance_ratio: Option<f64>,
}

/// Analytic variance terms for one vector pair, optionally with a Monte Carlo
/// counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub p: EvenOrder,
    pub k: usize,
    pub exact_distance: f64,
    /// Basic strategy, normal projections.
    pub basic: f64,
    /// Independent matrix per cross term, normal projections.
    pub alternative: f64,
    /// `basic - alternative`.
    pub delta: f64,
    /// `|basic - (alternative + delta)|` relative to the larger side.
    pub identity_residual: f64,
    pub mle_asymptotic: Option<f64>,
    pub sub_gaussian_s: Option<f64>,
    /// Basic-strategy variance at `sub_gaussian_s` (p = 4 only).
    pub sub_gaussian_variance: Option<f64>,
    pub empirical: Option<EmpiricalSummary>,
}

/// Closed-form terms for `p` in {4, 6}; `s` adds the sub-Gaussian variance.
pub fn variance_report(
    x: &[f64],
    y: &[f64],
    p: EvenOrder,
    k: usize,
    s: Option<f64>,
) -> Result<VarianceReport> {
    let kf = check_k(k)?;
    if let Some(s) = s {
        check_s(s)?;
    }
    let exact_distance = exact_lp_distance(x, y, p)?;
    let (alternative, delta, mle_asymptotic, sub_gaussian_variance) = match p.get() {
        4 => {
            let m = table(x, y, 6)?;
            (
                formulas::alternative_p4(&m, kf),
                formulas::delta_p4(&m, kf),
                Some(formulas::mle_p4(&m, kf)),
                s.map(|s| formulas::sub_gaussian_p4(&m, kf, s)),
            )
        }
        6 => {
            let m = table(x, y, 10)?;
            (
                formulas::alternative_p6(&m, kf),
                formulas::delta_p6(&m, kf),
                None,
                None,
            )
        }
        other => {
            return Err(Error::UnsupportedCombination(format!(
                "closed-form variances exist for p = 4 and p = 6, got p = {other}"
            )))
        }
    };
    let basic = alternative + delta;
    let side = basic.abs().max(alternative.abs() + delta.abs());
    let identity_residual = if side == 0.0 {
        0.0
    } else {
        (basic - (alternative + delta)).abs() / side
    };
    Ok(VarianceReport {
        p,
        k,
        exact_distance,
        basic,
        alternative,
        delta,
        identity_residual,
        mle_asymptotic,
        sub_gaussian_s: s,
        sub_gaussian_variance,
        empirical: None,
    })
}

/// Runs `trials` independent sketch-and-estimate cycles on one pair and returns
/// the running moments of the estimates. Trial `t` uses master seed
/// `derive_seed(config.seed, t)`.
pub fn simulate_estimates(
    x: &[f64],
    y: &[f64],
    config: &SketchConfig,
    estimator: EstimatorKind,
    trials: usize,
) -> Result<RunningMoments> {
    config.validate()?;
    let chunks: Vec<Result<RunningMoments>> = (0..trials.div_ceil(TRIAL_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = RunningMoments::default();
            for t in c * TRIAL_CHUNK..((c + 1) * TRIAL_CHUNK).min(trials) {
                let seeded = config.with_seed(derive_seed(config.seed, t as u64));
                let source = SeededProjection::new(seeded.seed, &seeded.family)?;
                let sketches = sketch_rows_with(&[(0, x), (1, y)], &seeded, &source)?;
                let est = estimate(
                    estimator,
                    &sketches[0],
                    &sketches[1],
                    EstimateOptions::default(),
                )?;
                acc.push(est.value);
            }
            Ok(acc)
        })
        .collect();
    Ok(RunningMoments::merge_all(
        chunks.into_iter().collect::<Result<Vec<_>>>()?,
    ))
}

fn matching_formula(
    report: &VarianceReport,
    config: &SketchConfig,
    estimator: EstimatorKind,
) -> Option<f64> {
    let normal = matches!(config.family, ProjectionFamily::Normal);
    match (estimator, config.strategy, config.p.get()) {
        (EstimatorKind::Basic, _, 4) => report.sub_gaussian_variance,
        (EstimatorKind::Basic, _, 6) if normal => Some(report.basic),
        (EstimatorKind::Alternative, _, _) if normal => Some(report.alternative),
        (EstimatorKind::MarginMle, StrategyKind::Alternative, 4) if normal => report.mle_asymptotic,
        _ => None,
    }
}

/// Empirical check of the closed forms for one pair.
pub fn monte_carlo_validate(
    x: &[f64],
    y: &[f64],
    config: &SketchConfig,
    estimator: EstimatorKind,
    trials: usize,
) -> Result<VarianceReport> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_TRIALS} trials are needed to estimate a variance, got {trials}"
        )));
    }
    config.validate()?;
    let s = moment_s(&config.family);
    let mut report = variance_report(x, y, config.p, config.k, Some(s))?;

    // Surface estimator/config incompatibilities before running any trials.
    let probe = sketch_rows_with(
        &[(0, x)],
        config,
        &crate::projections::FnProjection(|_, _, _| 0.0),
    )?;
    check_estimator(estimator, &probe[0])?;

    let moments = simulate_estimates(x, y, config, estimator, trials)?;
    let variance = moments.variance();
    let d = report.exact_distance;
    let mean_z_score = if variance > 0.0 {
        Some((moments.mean - d) / (variance / trials as f64).sqrt())
    } else if (moments.mean - d).abs() <= 1e-12 * d.abs().max(f64::MIN_POSITIVE) {
        Some(0.0)
    } else {
        None
    };
    let analytic_variance = matching_formula(&report, config, estimator);
    let variance_ratio = analytic_variance.and_then(|a| (a > 0.0).then(|| variance / a));
    report.empirical = Some(EmpiricalSummary {
        estimator,
        strategy: config.strategy,
        family: config.family,
        trials,
        mean: moments.mean,
        variance,
        mean_z_score,
        analytic_variance,
        variance_ratio,
    });
    Ok(report)
}

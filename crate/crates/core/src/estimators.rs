//! Distance estimators built from pairs of row sketches.
//!
//! Every estimator has the same shape: the two exact marginal `p`-th moments
//! plus a weighted sum of estimated cross terms `sum_i x_i^(p-t) y_i^t`. They
//! differ in how the cross terms are estimated:
//!
//! * basic: `u^T v / k` with every power under one shared matrix,
//! * alternative: `u^T v / k` with an independent matrix per term,
//! * margin MLE (p = 4): the root of a cubic that also uses the exact margins
//!   `sum x^(2s)` and `sum y^(2t)` and the sketch norms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{decomposition_coefficients, EvenOrder};
use crate::sketcher::{RowSketch, StrategyKind};

/// Residual tolerance for accepted cubic roots, relative to `max(1, scale)`.
pub const CUBIC_RESIDUAL_TOL: f64 = 1e-9;

/// Slack when deciding whether a normalized root lies in `[-1, 1]`.
const INTERVAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "basic")]
    Basic,
    #[serde(rename = "alternative")]
    Alternative,
    #[serde(rename = "mle")]
    MarginMle,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Basic => "basic",
            EstimatorKind::Alternative => "alternative",
            EstimatorKind::MarginMle => "mle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateFlag {
    /// Margin MLE computed from basic-strategy sketches, whose cross terms
    /// share one matrix.
    MleOnBasicStrategy,
    /// No cubic root lay inside the Cauchy-Schwarz interval; the nearest root
    /// was clamped to the boundary.
    CubicRootClamped,
    /// A cubic root failed the residual check; the plain `u^T v / k` term was
    /// used for that cross term.
    CubicFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    #[serde(rename = "i")]
    pub row_a: usize,
    #[serde(rename = "j")]
    pub row_b: usize,
    pub p: EvenOrder,
    pub estimator: EstimatorKind,
    /// May be negative unless clamping was requested.
    pub value: f64,
    pub clamped: bool,
    pub flags: Vec<EstimateFlag>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EstimateOptions {
    /// Replace negative estimates with 0. Breaks unbiasedness.
    pub clamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicSolution {
    pub a_hat: f64,
    /// `|f(a_hat)|` for the unnormalized cubic.
    pub residual: f64,
    /// Sum of the absolute values of the cubic's four terms at `a_hat`.
    pub scale: f64,
    pub root_count: usize,
    pub clamped: bool,
}

impl CubicSolution {
    pub fn within_tolerance(&self) -> bool {
        self.residual <= CUBIC_RESIDUAL_TOL * self.scale.max(1.0)
    }
}

/// Real roots of the monic cubic `z^3 + b z^2 + c z + d`, each polished by one
/// Newton step when that step lowers the residual.
pub fn real_cubic_roots(b: f64, c: f64, d: f64) -> Vec<f64> {
    use std::f64::consts::TAU;

    let shift = b / 3.0;
    let p = c - b * shift;
    let q = 2.0 * shift * shift * shift - c * shift + d;

    let mut roots: Vec<f64> = if p == 0.0 && q == 0.0 {
        vec![0.0]
    } else {
        let half_q = q / 2.0;
        let third_p = p / 3.0;
        let disc = half_q * half_q + third_p * third_p * third_p;
        if disc > 0.0 {
            // one real root; pick the cube root that avoids cancellation
            let big = -half_q.signum() * (half_q.abs() + disc.sqrt()).cbrt();
            let small = if big != 0.0 { -third_p / big } else { 0.0 };
            vec![big + small]
        } else {
            let m = 2.0 * (-third_p).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            (0..3)
                .map(|j| m * (theta - TAU * j as f64 / 3.0).cos())
                .collect()
        }
    };

    let f = |z: f64| ((z + b) * z + c) * z + d;
    let df = |z: f64| (3.0 * z + 2.0 * b) * z + c;
    for root in roots.iter_mut() {
        let z = *root - shift;
        let slope = df(z);
        let polished = if slope != 0.0 { z - f(z) / slope } else { z };
        *root = if polished.is_finite() && f(polished).abs() < f(z).abs() {
            polished
        } else {
            z
        };
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Solves the margin-constrained cubic for one cross term.
///
/// The cubic is
/// `a^3 - (ip/k) a^2 + (-mx my + (mx nv + my nu)/k) a - mx my ip / k = 0`
/// with `ip = u^T v`, `nu = |u|^2`, `nv = |v|^2` and exact margins `mx`, `my`.
/// Among real roots inside `[-sqrt(mx my), sqrt(mx my)]` the one closest to the
/// plain estimate `ip / k` wins.
pub fn solve_margin_cubic(ip: f64, nu: f64, nv: f64, mx: f64, my: f64, k: usize) -> CubicSolution {
    let kf = k as f64;
    let coeffs = [
        -ip / kf,
        -mx * my + (mx * nv + my * nu) / kf,
        -mx * my * ip / kf,
    ];
    let eval = |a: f64| {
        let terms = [a * a * a, coeffs[0] * a * a, coeffs[1] * a, coeffs[2]];
        let value: f64 = terms.iter().sum();
        (value.abs(), terms.iter().map(|t| t.abs()).sum::<f64>())
    };

    let bound_sq = mx * my;
    if bound_sq.is_nan() || bound_sq <= 0.0 {
        // Cauchy-Schwarz pins the cross term to zero.
        let (residual, scale) = eval(0.0);
        return CubicSolution {
            a_hat: 0.0,
            residual,
            scale,
            root_count: 0,
            clamped: false,
        };
    }

    // Substitute a = B z with B = sqrt(mx my); roots of interest lie in [-1, 1].
    let bound = bound_sq.sqrt();
    let rho = ip / (kf * bound);
    let gamma = -1.0 + (nv / my + nu / mx) / kf;
    let roots = real_cubic_roots(-rho, gamma, -rho);

    let closest = |candidates: &mut dyn Iterator<Item = f64>| {
        candidates.min_by(|a, b| (a - rho).abs().total_cmp(&(b - rho).abs()))
    };
    let inside = closest(
        &mut roots
            .iter()
            .copied()
            .filter(|z| z.abs() <= 1.0 + INTERVAL_SLACK),
    );
    let (z, clamped) = match inside {
        Some(z) => (z.clamp(-1.0, 1.0), false),
        None => {
            let z = closest(&mut roots.iter().copied()).unwrap_or(rho);
            (z.clamp(-1.0, 1.0), true)
        }
    };

    let a_hat = bound * z;
    let (residual, scale) = eval(a_hat);
    CubicSolution {
        a_hat,
        residual,
        scale,
        root_count: roots.len(),
        clamped,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_compatible(sa: &RowSketch, sb: &RowSketch) -> Result<()> {
    if sa.config != sb.config {
        return Err(Error::IncompatibleSketch(format!(
            "rows {} and {} were sketched with different configurations",
            sa.row_id, sb.row_id
        )));
    }
    if sa.dim != sb.dim {
        return Err(Error::IncompatibleSketch(format!(
            "rows {} and {} have dimensions {} and {}",
            sa.row_id, sb.row_id, sa.dim, sb.dim
        )));
    }
    Ok(())
}

fn require_strategy(s: &RowSketch, expected: StrategyKind) -> Result<()> {
    if s.config.strategy != expected {
        return Err(Error::StrategyMismatch {
            expected: expected.name(),
            found: s.config.strategy.name(),
        });
    }
    Ok(())
}

/// Matrix that carries cross term `t` for the sketch's strategy.
fn term_matrix(strategy: StrategyKind, t: u32) -> u32 {
    match strategy {
        StrategyKind::Basic => 0,
        StrategyKind::Alternative => t,
    }
}

/// The two projections entering cross term `t`: power `p - t` of the first row
/// and power `t` of the second, under the term's matrix.
fn term_vectors<'a>(sa: &'a RowSketch, sb: &'a RowSketch, t: u32) -> (&'a [f64], &'a [f64]) {
    let p = sa.config.p.get();
    let m = term_matrix(sa.config.strategy, t);
    let u = sa
        .projection(p - t, m)
        .expect("layout holds every cross-term power");
    let v = sb
        .projection(t, m)
        .expect("layout holds every cross-term power");
    (u, v)
}

fn linear_estimate(sa: &RowSketch, sb: &RowSketch, estimator: EstimatorKind) -> DistanceEstimate {
    let p = sa.config.p;
    let half = p.get() / 2;
    let coeffs = decomposition_coefficients(p);
    let ip = |t: u32| {
        let (u, v) = term_vectors(sa, sb, t);
        dot(u, v)
    };
    // Mirrored terms are added in pairs so that swapping the rows of a basic
    // estimate reproduces the value bit for bit.
    let mut inner = 0.0;
    for t in 1..half {
        inner += coeffs.weight(t as usize) as f64 * (ip(t) + ip(p.get() - t));
    }
    inner += coeffs.weight(half as usize) as f64 * ip(half);

    let pu = p.as_usize();
    DistanceEstimate {
        row_a: sa.row_id,
        row_b: sb.row_id,
        p,
        estimator,
        value: (sa.marginal(pu) + sb.marginal(pu)) + inner / sa.config.k as f64,
        clamped: false,
        flags: Vec::new(),
    }
}

pub fn estimate_basic(sa: &RowSketch, sb: &RowSketch) -> Result<DistanceEstimate> {
    check_compatible(sa, sb)?;
    require_strategy(sa, StrategyKind::Basic)?;
    Ok(linear_estimate(sa, sb, EstimatorKind::Basic))
}

/// Alternative-strategy estimate with `sa` in the first-row role. Not
/// symmetric: swapping the rows changes which matrix each term uses.
pub fn estimate_alternative(sa: &RowSketch, sb: &RowSketch) -> Result<DistanceEstimate> {
    check_compatible(sa, sb)?;
    require_strategy(sa, StrategyKind::Alternative)?;
    Ok(linear_estimate(sa, sb, EstimatorKind::Alternative))
}

/// Margin-MLE estimate for `p = 4`, `sa` in the first-row role.
pub fn estimate_margin_mle(sa: &RowSketch, sb: &RowSketch) -> Result<DistanceEstimate> {
    Ok(margin_mle_terms(sa, sb)?.0)
}

/// Margin-MLE estimate together with the three cubic solutions, in the order
/// `(2,2)`, `(3,1)`, `(1,3)`.
pub fn margin_mle_terms(
    sa: &RowSketch,
    sb: &RowSketch,
) -> Result<(DistanceEstimate, [CubicSolution; 3])> {
    check_compatible(sa, sb)?;
    if sa.config.p != EvenOrder::FOUR {
        return Err(Error::UnsupportedCombination(format!(
            "the margin MLE estimator is only defined for p = 4, got p = {}",
            sa.config.p
        )));
    }
    let k = sa.config.k;
    let mut flags = Vec::new();
    if sa.config.strategy == StrategyKind::Basic {
        flags.push(EstimateFlag::MleOnBasicStrategy);
    }

    // (weight, power of x, power of y): 6 a22 - 4 a31 - 4 a13
    const TERMS: [(f64, u32, u32); 3] = [(6.0, 2, 2), (-4.0, 3, 1), (-4.0, 1, 3)];
    let mut solutions = [CubicSolution {
        a_hat: 0.0,
        residual: 0.0,
        scale: 0.0,
        root_count: 0,
        clamped: false,
    }; 3];
    let mut value = sa.marginal(4) + sb.marginal(4);
    for (slot, &(weight, s, t)) in TERMS.iter().enumerate() {
        let (u, v) = term_vectors(sa, sb, t);
        let ip = dot(u, v);
        let sol = solve_margin_cubic(
            ip,
            dot(u, u),
            dot(v, v),
            sa.marginal(2 * s as usize),
            sb.marginal(2 * t as usize),
            k,
        );
        let term = if sol.within_tolerance() {
            if sol.clamped && !flags.contains(&EstimateFlag::CubicRootClamped) {
                flags.push(EstimateFlag::CubicRootClamped);
            }
            sol.a_hat
        } else {
            if !flags.contains(&EstimateFlag::CubicFallback) {
                flags.push(EstimateFlag::CubicFallback);
            }
            ip / k as f64
        };
        value += weight * term;
        solutions[slot] = sol;
    }

    let estimate = DistanceEstimate {
        row_a: sa.row_id,
        row_b: sb.row_id,
        p: sa.config.p,
        estimator: EstimatorKind::MarginMle,
        value,
        clamped: false,
        flags,
    };
    Ok((estimate, solutions))
}

/// Runs the chosen estimator and applies the options.
pub fn estimate(
    kind: EstimatorKind,
    sa: &RowSketch,
    sb: &RowSketch,
    opts: EstimateOptions,
) -> Result<DistanceEstimate> {
    let mut est = match kind {
        EstimatorKind::Basic => estimate_basic(sa, sb)?,
        EstimatorKind::Alternative => estimate_alternative(sa, sb)?,
        EstimatorKind::MarginMle => estimate_margin_mle(sa, sb)?,
    };
    if opts.clamp && est.value < 0.0 {
        est.value = 0.0;
        est.clamped = true;
    }
    Ok(est)
}

/// Checks up front that `kind` can run on sketches made with this config.
pub fn check_estimator(kind: EstimatorKind, sketch: &RowSketch) -> Result<()> {
    match kind {
        EstimatorKind::Basic => require_strategy(sketch, StrategyKind::Basic),
        EstimatorKind::Alternative => require_strategy(sketch, StrategyKind::Alternative),
        EstimatorKind::MarginMle if sketch.config.p != EvenOrder::FOUR => {
            Err(Error::UnsupportedCombination(format!(
                "the margin MLE estimator is only defined for p = 4, got p = {}",
                sketch.config.p
            )))
        }
        EstimatorKind::MarginMle => Ok(()),
    }
}

fn check_homogeneous(sketches: &[RowSketch]) -> Result<()> {
    let Some(first) = sketches.first() else {
        return Ok(());
    };
    for (idx, s) in sketches.iter().enumerate().skip(1) {
        if s.config != first.config || s.dim != first.dim {
            return Err(Error::IncompatibleSketch(format!(
                "sketch at position {idx} (row {}) differs from the first sketch",
                s.row_id
            )));
        }
    }
    Ok(())
}

/// Estimates for the given index pairs. Each pair is put in canonical order
/// (lower index in the first-row role); output is sorted and deduplicated.
pub fn estimate_pairs(
    sketches: &[RowSketch],
    pairs: &[(usize, usize)],
    kind: EstimatorKind,
    opts: EstimateOptions,
) -> Result<Vec<DistanceEstimate>> {
    check_homogeneous(sketches)?;
    if let Some(first) = sketches.first() {
        check_estimator(kind, first)?;
    }
    let mut canonical: Vec<(usize, usize)> =
        pairs.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
    canonical.sort_unstable();
    canonical.dedup();
    if let Some(&(_, j)) = canonical.iter().find(|&&(_, j)| j >= sketches.len()) {
        return Err(Error::InvalidParameter(format!(
            "pair index {j} out of range for {} sketches",
            sketches.len()
        )));
    }
    canonical
        .par_iter()
        .map(|&(i, j)| estimate(kind, &sketches[i], &sketches[j], opts))
        .collect()
}

/// All `n (n - 1) / 2` pairwise estimates, ordered by `(i, j)` with `i < j`.
pub fn all_pairs(
    sketches: &[RowSketch],
    kind: EstimatorKind,
    opts: EstimateOptions,
) -> Result<Vec<DistanceEstimate>> {
    let n = sketches.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    estimate_pairs(sketches, &pairs, kind, opts)
}

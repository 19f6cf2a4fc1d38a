//! Core data types, the binomial decomposition of even-order distances, and
//! exact moment computations.
//!
//! For even `p` the distance `sum_i |x_i - y_i|^p` expands into two marginal
//! norms plus `p - 1` cross sums of the form `sum_i x_i^(p-t) y_i^t`:
//!
//! ```text
//! d_p(x, y) = sum_t c_t * sum_i x_i^(p-t) y_i^t,   c_t = (-1)^t * C(p, t)
//! ```
//!
//! The exact routines here are the ground truth every estimator and variance
//! formula is checked against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest order accepted. Binomials up to C(16, 8) fit comfortably in `i64`.
pub const MAX_ORDER: u32 = 16;

/// Vectors longer than this are summed with a pairwise tree.
const PAIRWISE_BLOCK: usize = 4096;

/// An even distance order `p >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct EvenOrder(u32);

impl EvenOrder {
    pub const TWO: EvenOrder = EvenOrder(2);
    pub const FOUR: EvenOrder = EvenOrder(4);
    pub const SIX: EvenOrder = EvenOrder(6);

    pub fn new(p: i64) -> Result<Self> {
        if p < 2 || p % 2 != 0 || p > i64::from(MAX_ORDER) {
            return Err(Error::UnsupportedOrder(p));
        }
        Ok(EvenOrder(p as u32))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_usize(self) -> usize {
        self.0 as usize
    }

    /// Highest marginal order a sketch keeps: `2p - 2`.
    pub fn max_marginal(self) -> usize {
        2 * self.as_usize() - 2
    }
}

impl TryFrom<u32> for EvenOrder {
    type Error = Error;

    fn try_from(p: u32) -> Result<Self> {
        EvenOrder::new(i64::from(p))
    }
}

impl From<EvenOrder> for u32 {
    fn from(p: EvenOrder) -> u32 {
        p.0
    }
}

impl std::fmt::Display for EvenOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Signed binomial weights `c_t = (-1)^t C(p, t)` for `t = 0..=p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionCoefficients {
    p: EvenOrder,
    coeffs: Vec<i64>,
}

impl DecompositionCoefficients {
    pub fn order(&self) -> EvenOrder {
        self.p
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.coeffs
    }

    /// Weight of the cross term `sum_i x_i^(p-t) y_i^t`.
    pub fn weight(&self, t: usize) -> i64 {
        self.coeffs[t]
    }

    /// Cross-term weights `c_1..c_{p-1}` as floats, indexed by `t - 1`.
    pub fn inner_weights(&self) -> Vec<f64> {
        let p = self.p.as_usize();
        self.coeffs[1..p].iter().map(|&c| c as f64).collect()
    }
}

pub fn decomposition_coefficients(p: EvenOrder) -> DecompositionCoefficients {
    let p_us = p.as_usize();
    let mut coeffs = Vec::with_capacity(p_us + 1);
    let mut binom: i64 = 1;
    for t in 0..=p_us {
        let sign = if t % 2 == 0 { 1 } else { -1 };
        coeffs.push(sign * binom);
        // C(p, t+1) = C(p, t) * (p - t) / (t + 1), exact in integers.
        binom = binom * (p_us - t) as i64 / (t + 1) as i64;
    }
    DecompositionCoefficients { p, coeffs }
}

/// Dense `n x D` matrix of finite reals, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    dim: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("data matrix has no rows".into()));
        }
        if dim == 0 {
            return Err(Error::Empty("data matrix has no columns".into()));
        }
        if values.len() != n * dim {
            return Err(Error::DimensionMismatch {
                left: values.len(),
                right: n * dim,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(DataMatrix { n, dim, values })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: row.len(),
                    right: dim,
                });
            }
            values.extend(row);
        }
        DataMatrix::new(n, dim, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }
}

/// Mixed power sums `M[s][t] = sum_i x_i^s y_i^t` for `0 <= s, t <= max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMomentTable {
    max_order: usize,
    sums: Vec<f64>,
}

impl JointMomentTable {
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `sum_i x_i^s y_i^t`. Panics if either order exceeds `max_order`.
    #[inline]
    pub fn get(&self, s: usize, t: usize) -> f64 {
        assert!(
            s <= self.max_order && t <= self.max_order,
            "moment ({s}, {t}) outside table of order {}",
            self.max_order
        );
        self.sums[s * (self.max_order + 1) + t]
    }

    fn zeros(max_order: usize) -> Self {
        let side = max_order + 1;
        JointMomentTable {
            max_order,
            sums: vec![0.0; side * side],
        }
    }

    fn accumulate_direct(&mut self, x: &[f64], y: &[f64]) {
        let side = self.max_order + 1;
        let mut xp = vec![1.0; side];
        let mut yp = vec![1.0; side];
        for (&xi, &yi) in x.iter().zip(y) {
            for s in 1..side {
                xp[s] = xp[s - 1] * xi;
                yp[s] = yp[s - 1] * yi;
            }
            for (row, &xps) in self.sums.chunks_exact_mut(side).zip(&xp) {
                for (cell, &ypt) in row.iter_mut().zip(&yp) {
                    *cell += xps * ypt;
                }
            }
        }
    }

    fn build(x: &[f64], y: &[f64], max_order: usize) -> Self {
        if x.len() <= PAIRWISE_BLOCK {
            let mut table = JointMomentTable::zeros(max_order);
            table.accumulate_direct(x, y);
            return table;
        }
        let mid = x.len() / 2;
        let mut left = JointMomentTable::build(&x[..mid], &y[..mid], max_order);
        let right = JointMomentTable::build(&x[mid..], &y[mid..], max_order);
        for (l, r) in left.sums.iter_mut().zip(&right.sums) {
            *l += r;
        }
        left
    }
}

pub fn joint_moments(x: &[f64], y: &[f64], max_order: usize) -> Result<JointMomentTable> {
    check_same_len(x, y)?;
    Ok(JointMomentTable::build(x, y, max_order))
}

pub fn exact_lp_distance(x: &[f64], y: &[f64], p: EvenOrder) -> Result<f64> {
    check_same_len(x, y)?;
    let p = p.get() as i32;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).powi(p)).sum())
}

/// Evaluates the distance through its binomial expansion into moment sums.
pub fn decomposed_lp_distance(x: &[f64], y: &[f64], p: EvenOrder) -> Result<f64> {
    let table = joint_moments(x, y, p.as_usize())?;
    let coeffs = decomposition_coefficients(p);
    let p = p.as_usize();
    Ok((0..=p)
        .map(|t| coeffs.weight(t) as f64 * table.get(p - t, t))
        .sum())
}

fn check_same_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(())
}

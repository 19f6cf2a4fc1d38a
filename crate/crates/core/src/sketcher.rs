//! Power sketches of data rows.
//!
//! A row `x` is summarized by the exact marginal moments `m_t = sum_i x_i^t`
//! for `t = 1..=2p-2` and by projections `u = R^T (x^t)` of its coordinate-wise
//! powers. Which powers go through which matrix depends on the strategy:
//!
//! * Basic: powers `1..p-1`, all under matrix 0.
//! * Alternative: the cross term `sum_i x_i^(p-t) y_i^t` owns matrix `t`. A row
//!   stores power `t` under matrix `t` (its role as the second row of a pair)
//!   and power `p-t` under matrix `t` (its role as the first row). The two
//!   coincide at `t = p/2`, leaving `2p - 3` vectors.
//!
//! Vector slots are stored matrix by matrix in increasing matrix index; within
//! a matrix the power `t` slot comes before the power `p - t` slot.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DataMatrix, EvenOrder};
use crate::projections::{ProjectionFamily, ProjectionSource, SeededProjection};

/// Rows sketched together share each generated projection row.
const ROW_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Basic,
    Alternative,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Basic => "basic",
            StrategyKind::Alternative => "alternative",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            StrategyKind::Basic => 0,
            StrategyKind::Alternative => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(StrategyKind::Basic),
            1 => Ok(StrategyKind::Alternative),
            other => Err(Error::Format(format!("unknown strategy code {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchConfig {
    pub p: EvenOrder,
    pub k: usize,
    pub strategy: StrategyKind,
    pub family: ProjectionFamily,
    pub seed: u64,
}

impl SketchConfig {
    pub fn new(
        p: EvenOrder,
        k: usize,
        strategy: StrategyKind,
        family: ProjectionFamily,
        seed: u64,
    ) -> Result<Self> {
        let config = SketchConfig {
            p,
            k,
            strategy,
            family,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter(
                "sketch width k must be >= 1".into(),
            ));
        }
        if u32::try_from(self.k).is_err() {
            return Err(Error::InvalidParameter(format!(
                "sketch width {} too large",
                self.k
            )));
        }
        if self.strategy == StrategyKind::Alternative && !matches!(self.p.get(), 4 | 6) {
            return Err(Error::UnsupportedCombination(format!(
                "the alternative strategy supports p = 4 or 6, got p = {}",
                self.p
            )));
        }
        self.family.validate()
    }

    /// Same config under a different master seed.
    pub fn with_seed(self, seed: u64) -> Self {
        SketchConfig { seed, ..self }
    }

    pub fn layout(&self) -> SketchLayout {
        SketchLayout::new(self.p, self.strategy)
    }
}

/// One stored projection: `power` of the row under matrix `matrix`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub power: u32,
    pub matrix: u32,
}

/// Where each projection vector lives inside a [`RowSketch`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchLayout {
    slots: Vec<Slot>,
}

impl SketchLayout {
    pub fn new(p: EvenOrder, strategy: StrategyKind) -> Self {
        let p = p.get();
        let slots = match strategy {
            StrategyKind::Basic => (1..p).map(|power| Slot { power, matrix: 0 }).collect(),
            StrategyKind::Alternative => {
                let mut slots = Vec::with_capacity(2 * p as usize - 3);
                for m in 1..p {
                    slots.push(Slot {
                        power: m,
                        matrix: m,
                    });
                    if p - m != m {
                        slots.push(Slot {
                            power: p - m,
                            matrix: m,
                        });
                    }
                }
                slots
            }
        };
        SketchLayout { slots }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn position(&self, power: u32, matrix: u32) -> Option<usize> {
        self.slots
            .iter()
            .position(|s| s.power == power && s.matrix == matrix)
    }

    /// Distinct matrices in increasing order, each with the slots it feeds.
    fn by_matrix(&self) -> Vec<(u32, Vec<(usize, u32)>)> {
        let mut out: Vec<(u32, Vec<(usize, u32)>)> = Vec::new();
        for (idx, slot) in self.slots.iter().enumerate() {
            match out.iter_mut().find(|(m, _)| *m == slot.matrix) {
                Some((_, v)) => v.push((idx, slot.power)),
                None => out.push((slot.matrix, vec![(idx, slot.power)])),
            }
        }
        out
    }
}

/// Compressed representation of one data row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSketch {
    pub row_id: usize,
    pub config: SketchConfig,
    /// Length `D` of the sketched row.
    pub dim: usize,
    /// `m_1 ..= m_{2p-2}`.
    pub marginals: Vec<f64>,
    /// `layout().len()` vectors of length `k`, concatenated.
    pub vectors: Vec<f64>,
}

impl RowSketch {
    /// `sum_i x_i^t`; `t = 0` gives `D`.
    pub fn marginal(&self, t: usize) -> f64 {
        if t == 0 {
            self.dim as f64
        } else {
            self.marginals[t - 1]
        }
    }

    pub fn slot(&self, idx: usize) -> &[f64] {
        let k = self.config.k;
        &self.vectors[idx * k..(idx + 1) * k]
    }

    /// Projection of power `power` under matrix `matrix`, if this sketch has it.
    pub fn projection(&self, power: u32, matrix: u32) -> Option<&[f64]> {
        self.config
            .layout()
            .position(power, matrix)
            .map(|idx| self.slot(idx))
    }
}

/// Exact power sums `m_1..=m_max` of a row.
pub fn marginal_moments(row_id: usize, x: &[f64], max_power: usize) -> Result<Vec<f64>> {
    const BLOCK: usize = 4096;
    fn direct(row_id: usize, offset: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (col, &xi) in x.iter().enumerate() {
            let mut pw = 1.0;
            for (t, m) in out.iter_mut().enumerate() {
                pw *= xi;
                if !pw.is_finite() {
                    return Err(Error::Overflow {
                        row: row_id,
                        col: offset + col,
                        power: t as u32 + 1,
                    });
                }
                *m += pw;
            }
        }
        Ok(())
    }
    fn tree(row_id: usize, offset: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() <= BLOCK {
            return direct(row_id, offset, x, out);
        }
        let mid = x.len() / 2;
        let mut right = vec![0.0; out.len()];
        tree(row_id, offset, &x[..mid], out)?;
        tree(row_id, offset + mid, &x[mid..], &mut right)?;
        for (l, r) in out.iter_mut().zip(right) {
            *l += r;
        }
        Ok(())
    }

    if let Some(col) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: row_id, col });
    }
    let mut out = vec![0.0; max_power];
    tree(row_id, 0, x, &mut out)?;
    Ok(out)
}

/// Sketches several rows at once, drawing each projection row a single time.
///
/// The result for a row does not depend on which other rows share the batch.
pub fn sketch_rows_with<S: ProjectionSource + ?Sized>(
    rows: &[(usize, &[f64])],
    config: &SketchConfig,
    source: &S,
) -> Result<Vec<RowSketch>> {
    config.validate()?;
    let Some(&(_, first)) = rows.first() else {
        return Ok(Vec::new());
    };
    let dim = first.len();
    for &(row_id, x) in rows {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: dim,
            });
        }
        if x.is_empty() {
            return Err(Error::Empty(format!("row {row_id} has no columns")));
        }
    }

    let k = config.k;
    let layout = config.layout();
    let max_marginal = config.p.max_marginal();
    let mut sketches = rows
        .iter()
        .map(|&(row_id, x)| {
            Ok(RowSketch {
                row_id,
                config: *config,
                dim,
                marginals: marginal_moments(row_id, x, max_marginal)?,
                vectors: vec![0.0; layout.len() * k],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let max_power = config.p.get() as usize - 1;
    let mut powers = vec![0.0; max_power + 1];
    let mut r = vec![0.0; k];
    for (matrix, slots) in layout.by_matrix() {
        for i in 0..dim {
            if rows.iter().all(|&(_, x)| x[i] == 0.0) {
                continue;
            }
            source.fill_row(matrix, i, &mut r);
            for (sketch, &(_, x)) in sketches.iter_mut().zip(rows) {
                let xi = x[i];
                if xi == 0.0 {
                    continue;
                }
                powers[0] = 1.0;
                for t in 1..=max_power {
                    powers[t] = powers[t - 1] * xi;
                }
                for &(idx, power) in &slots {
                    let w = powers[power as usize];
                    let dst = &mut sketch.vectors[idx * k..(idx + 1) * k];
                    for (d, &rij) in dst.iter_mut().zip(&r) {
                        *d += w * rij;
                    }
                }
            }
        }
    }
    Ok(sketches)
}

pub fn sketch_row_with<S: ProjectionSource + ?Sized>(
    row_id: usize,
    x: &[f64],
    config: &SketchConfig,
    source: &S,
) -> Result<RowSketch> {
    let mut out = sketch_rows_with(&[(row_id, x)], config, source)?;
    Ok(out.pop().expect("one row in, one sketch out"))
}

/// Sketches a single row (row id 0) with the config's seeded projections.
pub fn sketch_row(x: &[f64], config: &SketchConfig) -> Result<RowSketch> {
    let source = SeededProjection::new(config.seed, &config.family)?;
    sketch_row_with(0, x, config, &source)
}

/// Sketches every row of `data`; row ids are the row indices.
pub fn sketch_matrix(data: &DataMatrix, config: &SketchConfig) -> Result<Vec<RowSketch>> {
    let source = SeededProjection::new(config.seed, &config.family)?;
    let rows: Vec<(usize, &[f64])> = data.rows().enumerate().collect();
    let chunks: Vec<Result<Vec<RowSketch>>> = rows
        .par_chunks(ROW_CHUNK)
        .map(|chunk| sketch_rows_with(chunk, config, &source))
        .collect();
    let mut out = Vec::with_capacity(rows.len());
    for chunk in chunks {
        out.extend(chunk?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projections::FnProjection;

    fn config(p: i64, k: usize, strategy: StrategyKind) -> SketchConfig {
        SketchConfig::new(
            EvenOrder::new(p).unwrap(),
            k,
            strategy,
            ProjectionFamily::Normal,
            1234,
        )
        .unwrap()
    }

    #[test]
    fn layouts() {
        let basic = SketchLayout::new(EvenOrder::FOUR, StrategyKind::Basic);
        assert_eq!(basic.len(), 3);
        assert!(basic.slots().iter().all(|s| s.matrix == 0));

        let alt = SketchLayout::new(EvenOrder::FOUR, StrategyKind::Alternative);
        let pairs: Vec<_> = alt.slots().iter().map(|s| (s.power, s.matrix)).collect();
        assert_eq!(pairs, vec![(1, 1), (3, 1), (2, 2), (3, 3), (1, 3)]);

        let alt6 = SketchLayout::new(EvenOrder::SIX, StrategyKind::Alternative);
        assert_eq!(alt6.len(), 9);
    }

    #[test]
    fn config_validation() {
        let p4 = EvenOrder::FOUR;
        let normal = ProjectionFamily::Normal;
        assert!(SketchConfig::new(p4, 0, StrategyKind::Basic, normal, 0).is_err());
        assert!(SketchConfig::new(
            EvenOrder::new(8).unwrap(),
            4,
            StrategyKind::Alternative,
            normal,
            0
        )
        .is_err());
        assert!(SketchConfig::new(
            EvenOrder::new(8).unwrap(),
            4,
            StrategyKind::Basic,
            normal,
            0
        )
        .is_ok());
        let bad = ProjectionFamily::ThreePoint { s: 0.2 };
        assert!(SketchConfig::new(p4, 4, StrategyKind::Basic, bad, 0).is_err());
    }

    #[test]
    fn zero_row_sketch_is_zero() {
        let s = sketch_row(&[0.0; 10], &config(4, 8, StrategyKind::Basic)).unwrap();
        assert!(s.vectors.iter().all(|&v| v == 0.0));
        assert!(s.marginals.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pinned_entries_hand_example() {
        // x = (1, 2), all entries 1, k = 1, p = 4.
        let ones = FnProjection(|_, _, _| 1.0);
        let s = sketch_row_with(0, &[1.0, 2.0], &config(4, 1, StrategyKind::Basic), &ones).unwrap();
        assert_eq!(s.projection(1, 0).unwrap(), &[3.0]);
        assert_eq!(s.projection(2, 0).unwrap(), &[5.0]);
        assert_eq!(s.projection(3, 0).unwrap(), &[9.0]);
        assert_eq!(s.marginals, vec![3.0, 5.0, 9.0, 17.0, 33.0, 65.0]);
        assert_eq!(s.marginal(4), 17.0);
        assert_eq!(s.marginal(0), 2.0);
    }

    #[test]
    fn disjoint_support_is_additive() {
        let cfg = config(6, 16, StrategyKind::Basic);
        let x = [1.5, 0.0, -2.0, 0.0, 0.25];
        let z = [0.0, 3.0, 0.0, -0.5, 0.0];
        let sum: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        let (sx, sz, ss) = (
            sketch_row(&x, &cfg).unwrap(),
            sketch_row(&z, &cfg).unwrap(),
            sketch_row(&sum, &cfg).unwrap(),
        );
        for ((a, b), c) in sx.vectors.iter().zip(&sz.vectors).zip(&ss.vectors) {
            assert!((a + b - c).abs() <= 1e-12 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn overflow_reports_row_and_column() {
        let cfg = config(4, 4, StrategyKind::Basic);
        let src = SeededProjection::new(1, &ProjectionFamily::Normal).unwrap();
        let err = sketch_row_with(7, &[1.0, 1e60, 2.0], &cfg, &src).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Overflow {
                    row: 7,
                    col: 1,
                    power: 6
                }
            ),
            "{err:?}"
        );
        let err = sketch_row_with(3, &[f64::NAN], &cfg, &src).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 3, col: 0 }));
    }

    #[test]
    fn batch_and_single_agree_bitwise() {
        let cfg = config(4, 8, StrategyKind::Alternative);
        let data = DataMatrix::from_rows(
            (0..5)
                .map(|r| (0..7).map(|c| ((r * 7 + c) % 5) as f64 - 1.5).collect())
                .collect(),
        )
        .unwrap();
        let all = sketch_matrix(&data, &cfg).unwrap();
        let src = SeededProjection::new(cfg.seed, &cfg.family).unwrap();
        for (i, s) in all.iter().enumerate() {
            let single = sketch_row_with(i, data.row(i), &cfg, &src).unwrap();
            assert_eq!(&single, s);
        }
    }

    #[test]
    fn shuffled_rows_give_identical_sketches() {
        let cfg = config(4, 6, StrategyKind::Basic);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|r| {
                (0..9)
                    .map(|c| ((r * 31 + c * 7) % 11) as f64 / 3.0)
                    .collect()
            })
            .collect();
        let forward = sketch_matrix(&DataMatrix::from_rows(rows.clone()).unwrap(), &cfg).unwrap();
        let mut reversed_rows = rows.clone();
        reversed_rows.reverse();
        let backward = sketch_matrix(&DataMatrix::from_rows(reversed_rows).unwrap(), &cfg).unwrap();
        let n = rows.len();
        for (i, s) in forward.iter().enumerate() {
            let b = &backward[n - 1 - i];
            assert_eq!(s.vectors, b.vectors);
            assert_eq!(s.marginals, b.marginals);
        }
    }

    #[test]
    fn storage_layout_for_basic_p4() {
        let cfg = config(4, 64, StrategyKind::Basic);
        let data = DataMatrix::new(
            100,
            1000,
            (0..100_000).map(|v| (v % 13) as f64 * 0.1).collect(),
        )
        .unwrap();
        let sketches = sketch_matrix(&data, &cfg).unwrap();
        assert_eq!(sketches.len(), 100);
        let reals: usize = sketches
            .iter()
            .map(|s| s.vectors.len() + s.marginals.len())
            .sum();
        assert_eq!(reals, 100 * (3 * 64 + 6));
    }
}

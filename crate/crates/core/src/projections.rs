//! Seed-addressable projection matrix entries.
//!
//! Entry `r_ij` of matrix `m` is a pure function of `(seed, m, i, j)`, so any
//! row can be sketched in any order, on any thread, without materializing the
//! `D x k` matrix.
//!
//! Generation scheme (version 1 of the sketch file format depends on it):
//!
//! * `stream = mix(mix(seed ^ G) ^ (m + 1) * G)`
//! * `row = mix(stream + (i + 1) * G)`
//! * lane `l` of column `j` is `mix(row + (2j + l + 1) * G)`
//!
//! where `mix` is the SplitMix64 finalizer and `G = 0x9E3779B97F4A7C15`, all in
//! wrapping 64-bit arithmetic. A lane becomes a uniform double from its top 53
//! bits. Normal entries use Box-Muller (`sqrt(-2 ln u0) * cos(2 pi u1)`, with
//! `u0` in `(0, 1]`) evaluated through `libm` so the result does not depend on
//! the platform's math library.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th independent repetition under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master.wrapping_add(GOLDEN)) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Distribution of projection entries. Every family has mean 0 and unit
/// variance; they differ in the fourth moment `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProjectionFamily {
    Normal,
    /// Uniform on `(-sqrt 3, sqrt 3)`.
    Uniform,
    /// `+sqrt s` and `-sqrt s` with probability `1 / (2s)` each, else 0.
    #[serde(rename = "threepoint")]
    ThreePoint {
        s: f64,
    },
}

impl ProjectionFamily {
    pub fn three_point(s: f64) -> Result<Self> {
        let family = ProjectionFamily::ThreePoint { s };
        family.validate()?;
        Ok(family)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ProjectionFamily::ThreePoint { s } if !(s.is_finite() && s >= 1.0) => Err(
                Error::InvalidParameter(format!("three-point family needs s >= 1, got {s}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            ProjectionFamily::Normal => 0,
            ProjectionFamily::Uniform => 1,
            ProjectionFamily::ThreePoint { .. } => 2,
        }
    }

    pub fn from_code(code: u8, s: f64) -> Result<Self> {
        match code {
            0 => Ok(ProjectionFamily::Normal),
            1 => Ok(ProjectionFamily::Uniform),
            2 => ProjectionFamily::three_point(s),
            other => Err(Error::Format(format!("unknown family code {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProjectionFamily::Normal => "normal",
            ProjectionFamily::Uniform => "uniform",
            ProjectionFamily::ThreePoint { .. } => "threepoint",
        }
    }
}

/// Fourth moment `E[r^4]` of the family.
pub fn moment_s(family: &ProjectionFamily) -> f64 {
    match *family {
        ProjectionFamily::Normal => 3.0,
        ProjectionFamily::Uniform => 9.0 / 5.0,
        ProjectionFamily::ThreePoint { s } => s,
    }
}

/// Identifies one projection matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatrixKey {
    pub master_seed: u64,
    pub matrix_index: u32,
}

impl MatrixKey {
    pub fn new(master_seed: u64, matrix_index: u32) -> Self {
        MatrixKey {
            master_seed,
            matrix_index,
        }
    }

    fn stream(&self) -> u64 {
        mix64(
            mix64(self.master_seed ^ GOLDEN)
                ^ (u64::from(self.matrix_index) + 1).wrapping_mul(GOLDEN),
        )
    }
}

#[inline]
fn row_key(stream: u64, i: usize) -> u64 {
    mix64(stream.wrapping_add((i as u64).wrapping_add(1).wrapping_mul(GOLDEN)))
}

#[inline]
fn lane(row: u64, j: usize, l: u64) -> u64 {
    let counter = ((j as u64) << 1 | l).wrapping_add(1);
    mix64(row.wrapping_add(counter.wrapping_mul(GOLDEN)))
}

#[inline]
fn unit_open_closed(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * INV_2_53
}

#[inline]
fn unit_closed_open(bits: u64) -> f64 {
    (bits >> 11) as f64 * INV_2_53
}

/// Maps counter bits to entries of a validated family.
#[derive(Debug, Clone, Copy)]
enum Sampler {
    Normal,
    Uniform,
    ThreePoint { half_p: f64, p: f64, mag: f64 },
}

impl Sampler {
    fn new(family: &ProjectionFamily) -> Result<Self> {
        family.validate()?;
        Ok(match *family {
            ProjectionFamily::Normal => Sampler::Normal,
            ProjectionFamily::Uniform => Sampler::Uniform,
            ProjectionFamily::ThreePoint { s } => Sampler::ThreePoint {
                half_p: 0.5 / s,
                p: 1.0 / s,
                mag: s.sqrt(),
            },
        })
    }

    #[inline]
    fn sample(&self, row: u64, j: usize) -> f64 {
        match *self {
            Sampler::Normal => {
                let u0 = unit_open_closed(lane(row, j, 0));
                let u1 = unit_closed_open(lane(row, j, 1));
                libm::sqrt(-2.0 * libm::log(u0)) * libm::cos(std::f64::consts::TAU * u1)
            }
            Sampler::Uniform => {
                let u = unit_closed_open(lane(row, j, 0));
                3f64.sqrt() * (2.0 * u - 1.0)
            }
            Sampler::ThreePoint { half_p, p, mag } => {
                let u = unit_closed_open(lane(row, j, 0));
                if u < half_p {
                    mag
                } else if u < p {
                    -mag
                } else {
                    0.0
                }
            }
        }
    }
}

/// The entry `r_ij` of the matrix named by `key`.
pub fn entry(key: MatrixKey, i: usize, j: usize, family: &ProjectionFamily) -> Result<f64> {
    let sampler = Sampler::new(family)?;
    Ok(sampler.sample(row_key(key.stream(), i), j))
}

/// Anything that can supply rows of projection matrices.
///
/// `fill_row(m, i, out)` writes `r_i0 .. r_i(k-1)` of matrix `m` into `out`.
pub trait ProjectionSource: Sync {
    fn fill_row(&self, matrix: u32, row: usize, out: &mut [f64]);
}

/// The counter-based generator used for real sketches.
#[derive(Debug, Clone)]
pub struct SeededProjection {
    master_seed: u64,
    sampler: Sampler,
}

impl SeededProjection {
    pub fn new(master_seed: u64, family: &ProjectionFamily) -> Result<Self> {
        Ok(SeededProjection {
            master_seed,
            sampler: Sampler::new(family)?,
        })
    }
}

impl ProjectionSource for SeededProjection {
    fn fill_row(&self, matrix: u32, row: usize, out: &mut [f64]) {
        let stream = MatrixKey::new(self.master_seed, matrix).stream();
        let rk = row_key(stream, row);
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.sampler.sample(rk, j);
        }
    }
}

/// Projection entries given by a closure `(matrix, i, j) -> r`. Handy for
/// pinning entries in tests and worked examples.
pub struct FnProjection<F>(pub F);

impl<F> ProjectionSource for FnProjection<F>
where
    F: Fn(u32, usize, usize) -> f64 + Sync,
{
    fn fill_row(&self, matrix: u32, row: usize, out: &mut [f64]) {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = (self.0)(matrix, row, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream_stats(family: &ProjectionFamily, n: usize) -> (f64, f64, f64) {
        let src = SeededProjection::new(42, family).unwrap();
        let k = 1000;
        let mut buf = vec![0.0; k];
        let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
        for i in 0..n / k {
            src.fill_row(0, i, &mut buf);
            for &r in &buf {
                s1 += r;
                s2 += r * r;
                s4 += r * r * r * r;
            }
        }
        let n = (n / k * k) as f64;
        (s1 / n, s2 / n, s4 / n)
    }

    #[test]
    fn moment_s_values() {
        assert_eq!(moment_s(&ProjectionFamily::Normal), 3.0);
        assert_eq!(moment_s(&ProjectionFamily::Uniform), 1.8);
        assert_eq!(moment_s(&ProjectionFamily::three_point(5.0).unwrap()), 5.0);
    }

    #[test]
    fn three_point_rejects_small_s() {
        for s in [0.0, 0.5, 0.999, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                ProjectionFamily::three_point(s),
                Err(Error::InvalidParameter(_))
            ));
        }
        let bad = ProjectionFamily::ThreePoint { s: 0.5 };
        assert!(entry(MatrixKey::new(1, 0), 0, 0, &bad).is_err());
    }

    #[test]
    fn entries_are_deterministic() {
        for family in [
            ProjectionFamily::Normal,
            ProjectionFamily::Uniform,
            ProjectionFamily::three_point(3.0).unwrap(),
        ] {
            let key = MatrixKey::new(0xDEAD_BEEF, 2);
            for (i, j) in [(0, 0), (5, 3), (1000, 63)] {
                let a = entry(key, i, j, &family).unwrap();
                let b = entry(key, i, j, &family).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
            let src = SeededProjection::new(0xDEAD_BEEF, &family).unwrap();
            let mut row = vec![0.0; 8];
            src.fill_row(2, 5, &mut row);
            assert_eq!(
                row[3].to_bits(),
                entry(key, 5, 3, &family).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn rademacher_support() {
        let family = ProjectionFamily::three_point(1.0).unwrap();
        let src = SeededProjection::new(7, &family).unwrap();
        let mut buf = vec![0.0; 1000];
        let mut plus = 0usize;
        for i in 0..100 {
            src.fill_row(0, i, &mut buf);
            for &r in &buf {
                assert!(r == 1.0 || r == -1.0);
                plus += usize::from(r > 0.0);
            }
        }
        // 1e5 fair coin flips: sd = 158
        assert!((plus as f64 - 50_000.0).abs() < 800.0);
    }

    #[test]
    fn three_point_support_is_exact() {
        let s = 4.0;
        let family = ProjectionFamily::three_point(s).unwrap();
        let src = SeededProjection::new(11, &family).unwrap();
        let mut buf = vec![0.0; 500];
        for i in 0..200 {
            src.fill_row(3, i, &mut buf);
            assert!(buf.iter().all(|&r| r == 0.0 || r == 2.0 || r == -2.0));
        }
    }

    #[test]
    fn empirical_moments_match_families() {
        let n = 1_000_000;
        for family in [
            ProjectionFamily::Normal,
            ProjectionFamily::Uniform,
            ProjectionFamily::three_point(1.0).unwrap(),
            ProjectionFamily::three_point(3.0).unwrap(),
        ] {
            let (mean, var, fourth) = stream_stats(&family, n);
            assert!(mean.abs() < 0.005, "{family:?} mean {mean}");
            assert!((var - 1.0).abs() < 0.01, "{family:?} variance {var}");
            if family == ProjectionFamily::Uniform {
                assert!(
                    (fourth - 1.8).abs() < 0.01,
                    "uniform fourth moment {fourth}"
                );
            }
        }
    }

    #[test]
    fn matrices_are_uncorrelated() {
        let family = ProjectionFamily::Normal;
        let src = SeededProjection::new(99, &family).unwrap();
        let k = 100;
        let (mut a, mut b) = (vec![0.0; k], vec![0.0; k]);
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for i in 0..1000 {
            src.fill_row(0, i, &mut a);
            src.fill_row(1, i, &mut b);
            for (x, y) in a.iter().zip(&b) {
                sab += x * y;
                saa += x * x;
                sbb += y * y;
            }
        }
        let corr = sab / (saa * sbb).sqrt();
        assert!(corr.abs() < 0.01, "correlation {corr}");
    }
}

//! Checks against independent re-derivations. The variance formulas are
//! compared with a generic covariance expansion; sketches and the cubic
//! solver with brute-force counterparts.

use lpsketch::estimators::{estimate_basic, margin_mle_terms, solve_margin_cubic};
use lpsketch::projections::{entry, FnProjection, MatrixKey};
use lpsketch::sketcher::sketch_row_with;
use lpsketch::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn vector(r: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| r.gen_range(lo..hi)).collect()
}

/// `sum_i x_i^a y_i^b` straight from the definition.
fn m(x: &[f64], y: &[f64], a: i32, b: i32) -> f64 {
    x.iter().zip(y).map(|(u, v)| u.powi(a) * v.powi(b)).sum()
}

fn binom(n: i64, r: i64) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Variance of `sum_t c_t u_{p-t}^T v_t / k` from the fourth-moment expansion
/// `Cov(u_a v_b, u_c v_d) = M[a+c,0] M[0,b+d] + M[a,d] M[c,b] + (s-3) M[a+c,b+d]`
/// per column. With `shared == false` only same-term covariances survive.
fn covariance_oracle(x: &[f64], y: &[f64], p: i32, k: usize, s: f64, shared: bool) -> f64 {
    let c = |t: i32| if t % 2 == 0 { 1.0 } else { -1.0 } * binom(p as i64, t as i64);
    let mut total = 0.0;
    for t in 1..p {
        for t2 in 1..p {
            if !shared && t != t2 {
                continue;
            }
            let (a, b, cc, d) = (p - t, t, p - t2, t2);
            let cov = m(x, y, a + cc, 0) * m(x, y, 0, b + d)
                + m(x, y, a, d) * m(x, y, cc, b)
                + (s - 3.0) * m(x, y, a + cc, b + d);
            total += c(t) * c(t2) * cov;
        }
    }
    total / k as f64
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn p4_formulas_match_covariance_expansion() {
    let mut r = rng(1);
    for trial in 0..200 {
        let d = 1 + trial % 12;
        let x = vector(&mut r, d, -2.0, 2.0);
        let y = vector(&mut r, d, -2.0, 2.0);
        let k = 1 + trial % 7;
        let basic = covariance_oracle(&x, &y, 4, k, 3.0, true);
        let alt = covariance_oracle(&x, &y, 4, k, 3.0, false);
        let scale = alt.abs();
        assert!((variance_basic_p4(&x, &y, k).unwrap() - basic).abs() <= 1e-10 * scale);
        assert!(close(
            variance_alternative_p4(&x, &y, k).unwrap(),
            alt,
            1e-10
        ));
        assert!((delta4(&x, &y, k).unwrap() - (basic - alt)).abs() <= 1e-10 * scale);
        for s in [1.0, 1.8, 4.5] {
            let sub = covariance_oracle(&x, &y, 4, k, s, true);
            let got = variance_subgaussian_p4(&x, &y, k, s).unwrap();
            assert!((got - sub).abs() <= 1e-10 * scale.max(sub.abs()), "s={s}");
        }
    }
}

#[test]
fn p6_formulas_match_covariance_expansion() {
    let mut r = rng(2);
    for trial in 0..200 {
        let d = 1 + trial % 10;
        let x = vector(&mut r, d, -1.5, 1.5);
        let y = vector(&mut r, d, -1.5, 1.5);
        let basic = covariance_oracle(&x, &y, 6, 3, 3.0, true);
        let alt = covariance_oracle(&x, &y, 6, 3, 3.0, false);
        let scale = alt.abs();
        assert!((variance_basic_p6(&x, &y, 3).unwrap() - basic).abs() <= 1e-10 * scale);
        assert!(close(
            variance_alternative_p6(&x, &y, 3).unwrap(),
            alt,
            1e-10
        ));
        assert!((delta6(&x, &y, 3).unwrap() - (basic - alt)).abs() <= 1e-10 * scale);
    }
}

#[test]
fn mle_formula_matches_term_definition() {
    let mut r = rng(3);
    for _ in 0..100 {
        let x = vector(&mut r, 6, 0.0, 1.0);
        let y = vector(&mut r, 6, 0.0, 1.0);
        let term = |w: f64, a: i32, b: i32| {
            let pq = m(&x, &y, 2 * a, 0) * m(&x, &y, 0, 2 * b);
            let ab = m(&x, &y, a, b);
            w * (pq - ab * ab).powi(2) / (pq + ab * ab)
        };
        let want = (term(36.0, 2, 2) + term(16.0, 3, 1) + term(16.0, 1, 3)) / 5.0;
        assert!(close(variance_mle_p4(&x, &y, 5).unwrap(), want, 1e-10));
    }
}

#[test]
fn coefficients_match_pascal_triangle() {
    let mut row: Vec<i128> = vec![1];
    for n in 1..=16i64 {
        let mut next = vec![1i128; n as usize + 1];
        for i in 1..n as usize {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
        if n % 2 == 0 {
            let c = decomposition_coefficients(EvenOrder::new(n).unwrap());
            for (t, &v) in c.as_slice().iter().enumerate() {
                let sign = if t % 2 == 0 { 1 } else { -1 };
                assert_eq!(v as i128, sign * row[t], "p={n} t={t}");
            }
        }
    }
}

#[test]
fn sketch_vectors_match_materialized_matrices() {
    let mut r = rng(4);
    let families = [
        ProjectionFamily::Normal,
        ProjectionFamily::Uniform,
        ProjectionFamily::ThreePoint { s: 4.0 },
    ];
    for (n, family) in families.iter().enumerate() {
        for strategy in [StrategyKind::Basic, StrategyKind::Alternative] {
            let p = if n == 1 {
                EvenOrder::SIX
            } else {
                EvenOrder::FOUR
            };
            let k = 5;
            let config = SketchConfig::new(p, k, strategy, *family, 77 + n as u64).unwrap();
            let mut x = vector(&mut r, 9, -1.0, 1.0);
            x[3] = 0.0;
            let sk = sketch_row(&x, &config).unwrap();
            for (idx, slot) in config.layout().slots().iter().enumerate() {
                let key = MatrixKey::new(config.seed, slot.matrix);
                for j in 0..k {
                    let want: f64 = x
                        .iter()
                        .enumerate()
                        .map(|(i, xi)| {
                            xi.powi(slot.power as i32) * entry(key, i, j, family).unwrap()
                        })
                        .sum();
                    let got = sk.slot(idx)[j];
                    assert!(
                        (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
                        "{slot:?} j={j}"
                    );
                }
            }
            for t in 1..=p.max_marginal() {
                assert!(close(sk.marginal(t), m(&x, &x, t as i32, 0), 1e-13));
            }
        }
    }
}

#[test]
fn alternative_layout_for_p4() {
    let layout = SketchConfig::new(
        EvenOrder::FOUR,
        1,
        StrategyKind::Alternative,
        ProjectionFamily::Normal,
        0,
    )
    .unwrap()
    .layout();
    let got: Vec<(u32, u32)> = layout.slots().iter().map(|s| (s.power, s.matrix)).collect();
    assert_eq!(got, vec![(1, 1), (3, 1), (2, 2), (3, 3), (1, 3)]);
}

#[test]
fn basic_estimate_matches_dense_computation() {
    let mut r = rng(5);
    let (d, k) = (7, 4);
    let matrix: Vec<f64> = (0..d * k).map(|_| r.gen_range(-2.0..2.0)).collect();
    let src = FnProjection(|_: u32, i: usize, j: usize| matrix[i * k + j]);
    let config = SketchConfig::new(
        EvenOrder::SIX,
        k,
        StrategyKind::Basic,
        ProjectionFamily::Normal,
        0,
    )
    .unwrap();
    let x = vector(&mut r, d, -1.0, 1.0);
    let y = vector(&mut r, d, -1.0, 1.0);
    let sa = sketch_row_with(0, &x, &config, &src).unwrap();
    let sb = sketch_row_with(1, &y, &config, &src).unwrap();
    let proj = |v: &[f64], t: i32, j: usize| -> f64 {
        (0..d).map(|i| v[i].powi(t) * matrix[i * k + j]).sum()
    };
    let mut want = m(&x, &x, 6, 0) + m(&y, &y, 6, 0);
    for t in 1..6 {
        let c = if t % 2 == 0 { 1.0 } else { -1.0 } * binom(6, t as i64);
        let ip: f64 = (0..k).map(|j| proj(&x, 6 - t, j) * proj(&y, t, j)).sum();
        want += c * ip / k as f64;
    }
    let got = estimate_basic(&sa, &sb).unwrap().value;
    assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()));
}

/// All roots of `z^3 - rho z^2 + gamma z - rho` in `[-1, 1]` by sign changes
/// on a fine grid, refined by bisection.
fn bracketed_roots(rho: f64, gamma: f64) -> Vec<f64> {
    let g = |z: f64| ((z - rho) * z + gamma) * z - rho;
    let n = 20_000;
    let mut roots = Vec::new();
    let mut prev = -1.0;
    for i in 1..=n {
        let z = -1.0 + 2.0 * i as f64 / n as f64;
        if g(prev) == 0.0 {
            roots.push(prev);
        } else if g(prev).signum() != g(z).signum() && g(z) != 0.0 {
            let (mut lo, mut hi) = (prev, z);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if g(lo).signum() == g(mid).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = z;
    }
    if g(1.0) == 0.0 {
        roots.push(1.0);
    }
    roots
}

#[test]
fn cubic_solver_matches_bracketing_search() {
    let mut r = rng(6);
    let mut checked = 0;
    for trial in 0..2000 {
        let k = [1usize, 2, 4, 16, 64][trial % 5];
        let u = vector(&mut r, k, -2.0, 2.0);
        let mut v = vector(&mut r, k, -2.0, 2.0);
        if trial % 3 == 0 {
            // strongly correlated sketches push roots toward the boundary
            v = u
                .iter()
                .map(|a| a * 1.3 + r.gen_range(-0.05..0.05))
                .collect();
        }
        let ip: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let nu: f64 = u.iter().map(|a| a * a).sum();
        let nv: f64 = v.iter().map(|a| a * a).sum();
        let mx = r.gen_range(0.1..5.0);
        let my = r.gen_range(0.1..5.0);
        let sol = solve_margin_cubic(ip, nu, nv, mx, my, k);
        assert!(sol.within_tolerance(), "{sol:?}");
        let b = (mx * my).sqrt();
        let rho = ip / (k as f64 * b);
        let gamma = -1.0 + (nv / my + nu / mx) / k as f64;
        let roots = bracketed_roots(rho, gamma);
        if roots.is_empty() {
            // only tangential roots, which a sign scan cannot see
            continue;
        }
        let best = roots
            .iter()
            .copied()
            .min_by(|a, b| (a - rho).abs().total_cmp(&(b - rho).abs()))
            .unwrap();
        assert!(
            (sol.a_hat / b - best).abs() < 1e-6,
            "got {} want {best}",
            sol.a_hat / b
        );
        checked += 1;
    }
    assert!(checked > 1900);
}

#[test]
fn mle_on_real_sketches_solves_every_cubic() {
    let mut r = rng(7);
    for seed in 0..300 {
        let config = SketchConfig::new(
            EvenOrder::FOUR,
            64,
            StrategyKind::Alternative,
            ProjectionFamily::Normal,
            seed,
        )
        .unwrap();
        let x = vector(&mut r, 16, 0.0, 1.0);
        let y = vector(&mut r, 16, 0.0, 1.0);
        let a = sketch_row(&x, &config).unwrap();
        let b = sketch_row(&y, &config).unwrap();
        let (est, sols) = margin_mle_terms(&a, &b).unwrap();
        assert!(est.flags.is_empty(), "{:?}", est.flags);
        for s in sols {
            assert!(s.residual <= 1e-9 * s.scale.max(1.0));
        }
    }
}

#[test]
fn decomposition_matches_direct_distance() {
    let mut r = rng(8);
    for p in [2, 4, 6, 8, 10, 16] {
        let p = EvenOrder::new(p).unwrap();
        for _ in 0..100 {
            let x = vector(&mut r, 20, -1.0, 1.0);
            let y = vector(&mut r, 20, -1.0, 1.0);
            let direct: f64 = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).powi(p.get() as i32))
                .sum();
            let scale: f64 = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a.abs() + b.abs()).powi(p.get() as i32))
                .sum();
            let got = decomposed_lp_distance(&x, &y, p).unwrap();
            assert!((got - direct).abs() <= 1e-12 * scale, "p={p}");
        }
    }
}

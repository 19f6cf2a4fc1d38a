//! The margin MLE for p = 4 against the plain alternative estimator, over
//! many independent sketches of one pair.

use lpsketch::analytics::RunningMoments;
use lpsketch::estimators::margin_mle_terms;
use lpsketch::projections::derive_seed;
use lpsketch::{
    estimate, exact_lp_distance, sketch_row, variance_alternative_p4, variance_mle_p4,
    EstimateOptions, EstimatorKind, EvenOrder, ProjectionFamily, SketchConfig, StrategyKind,
};

fn main() -> lpsketch::Result<()> {
    let x: Vec<f64> = (0..16).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0).collect();
    let y: Vec<f64> = (0..16).map(|i| ((i * 5 + 1) % 13) as f64 / 13.0).collect();
    let k = 64;
    let d = exact_lp_distance(&x, &y, EvenOrder::FOUR)?;

    let (mut mle, mut alt) = (RunningMoments::default(), RunningMoments::default());
    let mut flagged = 0;
    for t in 0..5000 {
        let config = SketchConfig::new(
            EvenOrder::FOUR,
            k,
            StrategyKind::Alternative,
            ProjectionFamily::Normal,
            derive_seed(9, t),
        )?;
        let (a, b) = (sketch_row(&x, &config)?, sketch_row(&y, &config)?);
        let (est, cubics) = margin_mle_terms(&a, &b)?;
        if t == 0 {
            for c in cubics {
                println!(
                    "cubic: a_hat {:.6} residual {:.2e} real roots {}",
                    c.a_hat, c.residual, c.root_count
                );
            }
        }
        flagged += usize::from(!est.flags.is_empty());
        mle.push(est.value);
        alt.push(
            estimate(
                EstimatorKind::Alternative,
                &a,
                &b,
                EstimateOptions::default(),
            )?
            .value,
        );
    }
    println!("exact distance {d:.4}");
    println!(
        "alternative: mean {:.4}  variance {:.5}  (formula {:.5})",
        alt.mean,
        alt.variance(),
        variance_alternative_p4(&x, &y, k)?
    );
    println!(
        "margin MLE:  mean {:.4}  variance {:.5}  (asymptotic {:.5}), {flagged} flagged",
        mle.mean,
        mle.variance(),
        variance_mle_p4(&x, &y, k)?
    );
    Ok(())
}

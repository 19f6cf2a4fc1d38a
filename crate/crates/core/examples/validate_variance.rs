//! Monte Carlo check of the closed-form variance for one pair, printed as the
//! same JSON report the `validate` command writes.

use lpsketch::io::to_json;
use lpsketch::{
    monte_carlo_validate, EstimatorKind, EvenOrder, ProjectionFamily, SketchConfig, StrategyKind,
};

fn main() -> lpsketch::Result<()> {
    let x = [0.3, 0.9, 0.0, 0.4, 0.6, 0.2, 0.8, 0.1];
    let y = [0.5, 0.1, 0.7, 0.4, 0.0, 0.9, 0.3, 0.6];
    let config = SketchConfig::new(
        EvenOrder::SIX,
        8,
        StrategyKind::Basic,
        ProjectionFamily::Normal,
        1,
    )?;
    let report = monte_carlo_validate(&x, &y, &config, EstimatorKind::Basic, 20_000)?;
    print!("{}", to_json(&report)?);
    Ok(())
}

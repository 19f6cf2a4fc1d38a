//! Projection families and how the fourth moment s moves the variance.

use lpsketch::{moment_s, variance_basic_p4, variance_subgaussian_p4, ProjectionFamily};

fn main() -> lpsketch::Result<()> {
    let x = [0.9, 0.1, 0.4, 0.0, 0.7, 0.3];
    let y = [0.2, 0.8, 0.5, 0.6, 0.0, 0.3];
    let k = 20;
    println!("normal-entry variance {:.5}", variance_basic_p4(&x, &y, k)?);
    for family in [
        ProjectionFamily::Normal,
        ProjectionFamily::Uniform,
        ProjectionFamily::three_point(1.0)?,
        ProjectionFamily::three_point(10.0)?,
    ] {
        let s = moment_s(&family);
        println!(
            "{:>10} s = {s:<4}  variance {:.5}",
            family.name(),
            variance_subgaussian_p4(&x, &y, k, s)?
        );
    }
    // Disjoint supports: s has no effect.
    let (a, b) = ([1.0, 2.0, 0.0, 0.0], [0.0, 0.0, 3.0, 0.5]);
    println!(
        "disjoint supports: s=1 {:.4}  s=3 {:.4}",
        variance_subgaussian_p4(&a, &b, k, 1.0)?,
        variance_subgaussian_p4(&a, &b, k, 3.0)?
    );
    Ok(())
}

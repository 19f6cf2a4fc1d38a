//! Basic versus alternative projections: the closed-form variances and the
//! sign of their difference on non-negative and on opposite-sign data.

use lpsketch::{
    delta4, delta6, variance_alternative_p4, variance_alternative_p6, variance_basic_p4,
    variance_basic_p6,
};

fn main() -> lpsketch::Result<()> {
    let x = [0.9, 0.1, 0.4, 0.0, 0.7, 0.3];
    let y = [0.2, 0.8, 0.5, 0.6, 0.0, 0.3];
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let k = 50;

    for (label, a) in [("x >= 0, y >= 0", &x[..]), ("x <= 0, y >= 0", &neg[..])] {
        println!("{label}");
        println!(
            "  p=4  basic {:.5}  alternative {:.5}  delta {:+.5}",
            variance_basic_p4(a, &y, k)?,
            variance_alternative_p4(a, &y, k)?,
            delta4(a, &y, k)?
        );
        println!(
            "  p=6  basic {:.5}  alternative {:.5}  delta {:+.5}",
            variance_basic_p6(a, &y, k)?,
            variance_alternative_p6(a, &y, k)?,
            delta6(a, &y, k)?
        );
    }
    Ok(())
}

//! The distance as marginal terms plus weighted cross terms.

use lpsketch::{
    decomposed_lp_distance, decomposition_coefficients, exact_lp_distance, joint_moments, EvenOrder,
};

fn main() -> lpsketch::Result<()> {
    let x = [1.0, 0.5, 0.0, 2.0, 1.5];
    let y = [0.0, 1.0, 0.25, 1.0, 2.0];
    for p in [2, 4, 6, 8] {
        let p = EvenOrder::new(p)?;
        let c = decomposition_coefficients(p);
        println!("p = {p}: coefficients {:?}", c.as_slice());

        let m = joint_moments(&x, &y, p.as_usize())?;
        let pu = p.as_usize();
        let cross: Vec<String> = (1..pu)
            .map(|t| format!("{:+} * {:.4}", c.weight(t), m.get(pu - t, t)))
            .collect();
        println!(
            "  {:.4} + {:.4} {}",
            m.get(pu, 0),
            m.get(0, pu),
            cross.join(" ")
        );
        println!(
            "  expanded {:.10}  direct {:.10}",
            decomposed_lp_distance(&x, &y, p)?,
            exact_lp_distance(&x, &y, p)?
        );
    }
    Ok(())
}

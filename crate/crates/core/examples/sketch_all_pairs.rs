//! Sketch a small matrix once, then estimate every pairwise l_4 distance.

use lpsketch::{
    all_pairs, exact_lp_distance, sketch_matrix, DataMatrix, EstimateOptions, EstimatorKind,
    EvenOrder, ProjectionFamily, SketchConfig, StrategyKind,
};

fn main() -> lpsketch::Result<()> {
    // A shared background plus a few row-specific spikes: the rows differ in
    // a handful of coordinates, which is where l_4 puts its weight.
    let (n, dim) = (6, 2000);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let background = ((j * 7) % 10) as f64 / 40.0;
                    let spike = if (j + 97 * i) % 331 == 0 {
                        2.0 + 0.25 * i as f64
                    } else {
                        0.0
                    };
                    background + spike
                })
                .collect()
        })
        .collect();
    let data = DataMatrix::from_rows(rows)?;

    let p = EvenOrder::FOUR;
    let config = SketchConfig::new(p, 400, StrategyKind::Basic, ProjectionFamily::Normal, 2024)?;
    let sketches = sketch_matrix(&data, &config)?;
    let stored = sketches[0].vectors.len() + sketches[0].marginals.len();
    println!("{n} rows of length {dim} -> {stored} numbers each");

    for e in all_pairs(&sketches, EstimatorKind::Basic, EstimateOptions::default())? {
        let exact = exact_lp_distance(data.row(e.row_a), data.row(e.row_b), p)?;
        println!(
            "({}, {})  estimate {:8.2}  exact {:8.2}  rel err {:+.3}",
            e.row_a,
            e.row_b,
            e.value,
            exact,
            (e.value - exact) / exact
        );
    }
    Ok(())
}

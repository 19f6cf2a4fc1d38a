//! Write sketches to the binary file format, read them back and estimate
//! selected pairs.

use lpsketch::io::{parse_pairs, read_csv, read_sketch_path, write_sketch_path, SketchFile};
use lpsketch::{
    estimate_pairs, sketch_matrix, EstimateOptions, EstimatorKind, EvenOrder, ProjectionFamily,
    SketchConfig, StrategyKind,
};

fn main() -> lpsketch::Result<()> {
    let csv = "1,0,2,0.5\n0,1,1,0.5\n2,2,0,0\n0.5,0.5,0.5,0.5\n";
    let data = read_csv(csv.as_bytes(), false)?;
    let config = SketchConfig::new(
        EvenOrder::FOUR,
        16,
        StrategyKind::Alternative,
        ProjectionFamily::Uniform,
        5,
    )?;
    let file = SketchFile::new(config, data.dim(), sketch_matrix(&data, &config)?)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("rows.lpsk");
    write_sketch_path(&path, &file)?;
    println!("wrote {} bytes", std::fs::metadata(&path)?.len());

    let back = read_sketch_path(&path)?;
    assert_eq!(back, file);
    let pairs = parse_pairs("# some pairs\n0,1\n3 2\n0,3\n")?;
    for e in estimate_pairs(
        &back.rows,
        &pairs,
        EstimatorKind::MarginMle,
        EstimateOptions { clamp: true },
    )? {
        println!("({}, {}) -> {:.4} {:?}", e.row_a, e.row_b, e.value, e.flags);
    }
    Ok(())
}

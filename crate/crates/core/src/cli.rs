//! The `lpsketch` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytics::monte_carlo_validate;
use crate::error::{Error, Result};
use crate::estimators::{all_pairs, estimate_pairs, EstimateOptions, EstimatorKind};
use crate::io::{
    parse_pairs, read_csv_path, read_sketch_path, to_json, write_json_path, write_sketch_path,
    SketchFile,
};
use crate::model::EvenOrder;
use crate::projections::ProjectionFamily;
use crate::sketcher::{sketch_matrix, SketchConfig, StrategyKind};

#[derive(Debug, Parser)]
#[command(
    name = "lpsketch",
    version,
    about = "Sketch rows and estimate pairwise even-order l_p distances"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sketch every row of a CSV matrix into a binary sketch file.
    Sketch {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        sketch: SketchArgs,
        /// Skip the first CSV line.
        #[arg(long)]
        header: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Estimate distances between sketched rows.
    Estimate {
        #[arg(long)]
        sketches: PathBuf,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Basic)]
        estimator: EstimatorArg,
        /// `all`, or a file with one `i,j` pair per line.
        #[arg(long, default_value = "all")]
        pairs: String,
        /// Replace negative estimates with 0.
        #[arg(long)]
        clamp: bool,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare empirical estimator moments on a two-row CSV with the closed forms.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[command(flatten)]
        sketch: SketchArgs,
        /// Defaults to the estimator matching the strategy.
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        #[arg(long)]
        header: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SketchArgs {
    #[arg(long, default_value_t = 4, allow_negative_numbers = true)]
    pub p: i64,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = StrategyArg::Basic)]
    pub strategy: StrategyArg,
    #[arg(long, value_enum, default_value_t = FamilyArg::Normal)]
    pub family: FamilyArg,
    /// Fourth moment of three-point entries.
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Basic,
    Alternative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Normal,
    Uniform,
    Threepoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Basic,
    Alternative,
    Mle,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(a: EstimatorArg) -> Self {
        match a {
            EstimatorArg::Basic => EstimatorKind::Basic,
            EstimatorArg::Alternative => EstimatorKind::Alternative,
            EstimatorArg::Mle => EstimatorKind::MarginMle,
        }
    }
}

impl SketchArgs {
    pub fn config(&self) -> Result<SketchConfig> {
        let p = EvenOrder::new(self.p)?;
        let strategy = match self.strategy {
            StrategyArg::Basic => StrategyKind::Basic,
            StrategyArg::Alternative => StrategyKind::Alternative,
        };
        let family = match (self.family, self.s) {
            (FamilyArg::Threepoint, Some(s)) => ProjectionFamily::three_point(s)?,
            (FamilyArg::Threepoint, None) => {
                return Err(Error::Usage("--family threepoint needs --s".into()))
            }
            (_, Some(_)) => {
                return Err(Error::Usage(
                    "--s only applies to --family threepoint".into(),
                ))
            }
            (FamilyArg::Normal, None) => ProjectionFamily::Normal,
            (FamilyArg::Uniform, None) => ProjectionFamily::Uniform,
        };
        SketchConfig::new(p, self.k, strategy, family, self.seed)
    }
}

fn emit(output: Option<&Path>, text: &str, value: &impl serde::Serialize) -> Result<()> {
    match output {
        Some(path) => write_json_path(path, value),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn cmd_sketch(
    input: &Path,
    config: &SketchConfig,
    header: bool,
    output: &Path,
) -> Result<SketchFile> {
    let data = read_csv_path(input, header)?;
    let rows = sketch_matrix(&data, config)?;
    let file = SketchFile::new(*config, data.dim(), rows)?;
    write_sketch_path(output, &file)?;
    Ok(file)
}

pub fn cmd_estimate(
    sketches: &Path,
    estimator: EstimatorKind,
    pairs: &str,
    clamp: bool,
    output: Option<&Path>,
) -> Result<()> {
    let file = read_sketch_path(sketches)?;
    let opts = EstimateOptions { clamp };
    let estimates = if pairs == "all" {
        all_pairs(&file.rows, estimator, opts)?
    } else {
        let list = parse_pairs(&std::fs::read_to_string(pairs)?)?;
        estimate_pairs(&file.rows, &list, estimator, opts)?
    };
    emit(output, &to_json(&estimates)?, &estimates)
}

fn default_estimator(strategy: StrategyKind) -> EstimatorKind {
    match strategy {
        StrategyKind::Basic => EstimatorKind::Basic,
        StrategyKind::Alternative => EstimatorKind::Alternative,
    }
}

pub fn cmd_validate(
    input: &Path,
    header: bool,
    config: &SketchConfig,
    estimator: Option<EstimatorKind>,
    trials: usize,
    output: Option<&Path>,
) -> Result<()> {
    let data = read_csv_path(input, header)?;
    if data.n_rows() != 2 {
        return Err(Error::Usage(format!(
            "validate needs exactly 2 rows, found {}",
            data.n_rows()
        )));
    }
    let estimator = estimator.unwrap_or_else(|| default_estimator(config.strategy));
    let report = monte_carlo_validate(data.row(0), data.row(1), config, estimator, trials)?;
    emit(output, &to_json(&report)?, &report)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sketch {
            input,
            sketch,
            header,
            output,
        } => {
            let config = sketch.config()?;
            let file = cmd_sketch(&input, &config, header, &output)?;
            let reduced = config.k * (config.p.as_usize() - 1);
            println!("rows: {}", file.rows.len());
            println!("dimension: {}", file.dim);
            println!(
                "compression: {} -> {} (k * (p - 1)), ratio {:.3}",
                file.dim,
                reduced,
                file.dim as f64 / reduced as f64
            );
            println!("wrote {}", output.display());
            Ok(())
        }
        Command::Estimate {
            sketches,
            estimator,
            pairs,
            clamp,
            output,
        } => cmd_estimate(
            &sketches,
            estimator.into(),
            &pairs,
            clamp,
            output.as_deref(),
        ),
        Command::Validate {
            input,
            trials,
            sketch,
            estimator,
            header,
            output,
        } => {
            let config = sketch.config()?;
            cmd_validate(
                &input,
                header,
                &config,
                estimator.map(Into::into),
                trials,
                output.as_deref(),
            )
        }
    }
}

//! Random-projection sketches for pairwise `l_p` distances with even `p`.
//!
//! `d_p(x, y) = sum_i (x_i - y_i)^p` expands binomially into marginal terms,
//! which are exact, and cross terms `sum_i x_i^(p-t) y_i^t`, which are inner
//! products of coordinate-wise powers and so can be estimated from random
//! projections. Each row is sketched once; any pair can then be estimated
//! from the two sketches alone.
//!
//! ```
//! use lpsketch::{estimate, sketch_row, EstimateOptions, EstimatorKind, EvenOrder,
//!     ProjectionFamily, SketchConfig, StrategyKind};
//!
//! let config = SketchConfig::new(EvenOrder::FOUR, 256, StrategyKind::Basic,
//!     ProjectionFamily::Normal, 7).unwrap();
//! let a = sketch_row(&[0.5, 1.0, 0.0, 2.0], &config).unwrap();
//! let b = sketch_row(&[1.5, 0.0, 0.5, 1.0], &config).unwrap();
//! let d = estimate(EstimatorKind::Basic, &a, &b, EstimateOptions::default()).unwrap();
//! assert!(d.value.is_finite());
//! ```

pub mod analytics;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod io;
pub mod model;
pub mod projections;
pub mod sketcher;

pub use analytics::{
    delta4, delta6, monte_carlo_validate, variance_alternative_p4, variance_alternative_p6,
    variance_basic_p4, variance_basic_p6, variance_mle_p4, variance_report,
    variance_subgaussian_p4, VarianceReport,
};
pub use error::{Error, Result};
pub use estimators::{
    all_pairs, estimate, estimate_pairs, DistanceEstimate, EstimateFlag, EstimateOptions,
    EstimatorKind,
};
pub use model::{
    decomposed_lp_distance, decomposition_coefficients, exact_lp_distance, joint_moments,
    DataMatrix, EvenOrder, JointMomentTable,
};
pub use projections::{moment_s, ProjectionFamily, SeededProjection};
pub use sketcher::{sketch_matrix, sketch_row, RowSketch, SketchConfig, StrategyKind};

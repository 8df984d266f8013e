//! Parameter choice for filter-based regularization of linear inverse
//! problems in sequence space, driven by pairwise comparisons of candidate
//! estimators against generalized χ² thresholds.

// negated comparisons reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod candidates;
pub mod error;
pub mod filters;
pub mod genchi2;
pub mod harness;
pub mod model;
pub mod problems;
mod quadrature;
pub mod results;
pub mod selectors;
pub mod table;

pub use candidates::{build_grid, build_grid_with, CandidateGrid, GridOptions};
pub use error::{Error, Result};
pub use filters::{FilterKind, FilterSpec, SpectralFilter};
pub use harness::{run_experiment, ExperimentConfig, ExperimentResult, SigmaGrid};
pub use model::{DataRealization, SpectralProblem};
pub use problems::ProblemSpec;
pub use selectors::Selector;
pub use table::PairTable;

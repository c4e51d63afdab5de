//! Identification of modified differential equations (MDEs) from the output
//! of finite-difference solvers.
//!
//! The crate covers the whole chain: periodic 1-D solvers that generate data,
//! centered finite-difference stencils, candidate-term libraries, column
//! scaling and the puffer preconditioner, sparse regression (FoBa, STRidge,
//! Lasso, SR3), BIC model selection against an independent test simulation,
//! and closed-form truncation-error coefficients used to score the result.
//!
//! The usual entry point is [`pipeline::run_site`] with a
//! [`pipeline::PipelineConfig`].

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// dense elimination loops read better with explicit indices
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod exec;
pub mod library;
pub mod linalg;
pub mod oracle;
pub mod pipeline;
pub mod precondition;
pub mod regress;
pub mod select;
pub mod solvers;
pub mod spline;
pub mod stencil;
pub mod swarm;

pub use error::{Error, Result};
pub use exec::Parallelism;
pub use library::{build_library, enumerate_terms, CandidateLibrary, LibrarySpec, TermDescriptor};
pub use oracle::{AnalyticMde, CaseId};
pub use pipeline::{run_site, ExperimentReport, PipelineConfig};
pub use regress::{Algorithm, SparseModel, SweepResult};
pub use solvers::{Grid1D, Scheme, SolutionField};

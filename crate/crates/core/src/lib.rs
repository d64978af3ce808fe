//! Variance-reduced stochastic optimization for finite-sum problems.
//!
//! The crate bundles:
//!
//! - [`dataset`]: LIBSVM reader/writer, a seeded synthetic generator and row normalization.
//! - [`problem`]: the finite-sum objective abstraction with regularized logistic and ridge
//!   regression instances, plus incremental first-order oracle (IFO) accounting.
//! - [`averaging`]: averaging weight vectors over inner iterates and snapshot-index sampling.
//! - [`solvers`]: GD, SGD, SVRG and SARAH with fixed or Barzilai-Borwein step sizes and a
//!   fixed or adaptive inner-loop length.
//! - [`rates`]: closed-form per-outer-loop convergence-rate calculators and rate grids.
//! - [`harness`]: reference optima, traces, budgeted experiments and CSV/SVG output.
//! - [`cli`]: the `tunefree` command-line front end.
//!
//! ```
//! use tunefree::dataset::generate_synthetic;
//! use tunefree::problem::{ErmProblem, LogisticProblem};
//! use tunefree::solvers::{run, SolverConfig};
//!
//! let data = generate_synthetic(200, 5, 7, 2.0).unwrap().normalize_rows().unwrap();
//! let problem = LogisticProblem::new(data, 0.01).unwrap();
//! let config = SolverConfig::tune_free_sarah(&problem.constants())
//!     .with_ifo_budget(20 * problem.n() as u64);
//! let trace = run(&problem, &config).unwrap();
//! assert!(trace.last().grad_sq.unwrap() < trace.first().grad_sq.unwrap());
//! ```

pub mod averaging;
pub mod cli;
pub mod dataset;
pub mod harness;
pub mod linalg;
pub mod problem;
pub mod rates;
pub mod solvers;

pub use averaging::{AveragingScheme, WeightVector};
pub use dataset::{Dataset, SparseVector};
pub use harness::{ReferenceOptimum, Trace, TracePoint};
pub use problem::{Constants, ErmProblem, IfoCounter, LogisticProblem, RidgeProblem};
pub use solvers::{Algorithm, InnerLengthRule, SolverConfig, StepRule};

//! Solvers for distributionally robust chance-constrained binary programs
//! (DCBP) under mean-covariance ambiguity, specialized to chance-constrained
//! bin packing.
//!
//! A distributionally robust chance constraint requires that the worst-case
//! probability of a random linear row `t~' y <= T` holding, over every
//! distribution that matches (or nearly matches) given first and second
//! moments, is at least `1 - alpha`. Under the ambiguity sets supported here
//! every such constraint is equivalent to a 0-1 second-order-cone row
//!
//! ```text
//! mu' y + sqrt(y' Lambda y) <= T,      Lambda = Omega^2 * Sigma,
//! ```
//!
//! where the scalar `Omega` depends on the ambiguity model and risk level.
//! The crate builds these rows from sample data, strengthens them with
//! extended polymatroid inequalities obtained from submodular (approximate or
//! lifted) views of the cone, and solves the resulting binary programs with a
//! branch-and-cut algorithm over an in-house bounded-variable simplex core.
//!
//! Module map:
//!
//! - [`moments`]: moment estimation and the second-order-cone reformulations.
//! - [`submodular`]: submodularity tests, greedy separation of extended
//!   polymatroid inequalities, and the lifted-space reformulation.
//! - [`sdp`]: relaxed/conservative submodular matrix approximations via
//!   Dykstra's alternating projections on an in-house eigendecomposition.
//! - [`simplex`]: dense bounded-variable primal simplex used for node
//!   relaxations.
//! - [`solver`]: branch-and-cut over the simplex core with outer
//!   approximation, polymatroid, and lifted cuts.
//! - [`binpack`]: instance generation, model building (exact, Gaussian, and
//!   sample-average approximations), and out-of-sample evaluation.
//! - [`oracle`]: brute-force enumeration references for desk-scale
//!   verification.
//! - [`cli`]: the command-line pipeline tying the pieces together.
//!
//! The `examples/` directory contains one runnable program per major
//! capability; start with `branch_and_cut`.

pub mod binpack;
pub mod cli;
pub mod linalg;
pub mod moments;
pub mod oracle;
pub mod sdp;
pub mod simplex;
pub mod solver;
pub mod submodular;

pub use binpack::{BinPackInstance, Solution};
pub use moments::{AmbiguitySpec, MomentData, SocRow};
pub use sdp::ApproxResult;
pub use solver::{ModelIr, SolveConfig, SolveStats};
pub use submodular::{LiftedForm, PolymatroidCut, SetFunction};

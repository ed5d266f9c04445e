//! Interactive constraint acquisition with classifier-guided queries.
//!
//! The crate learns a constraint network from yes/no answers to (partial)
//! membership queries. Every layer that asks the user something (top-level
//! query generation, scope finding and relation finding) can be steered by a
//! probabilistic estimate of how likely each candidate constraint is to be
//! part of the hidden network.
//!
//! Module map:
//! - [`model`]: vocabularies, relations, constraints, assignments, biases.
//! - [`problem`]: the JSON problem-definition format.
//! - [`solver`]: anytime branch-and-bound used to generate queries.
//! - [`learning`]: constraint features, labeled dataset and classifiers.
//! - [`acquisition`]: the acquisition loop, scope and relation finding.
//! - [`benchmarks`]: generators for the benchmark problems.
//! - [`harness`]: seeded experiment runs and classifier evaluation.

pub mod acquisition;
pub mod benchmarks;
pub mod error;
pub mod harness;
pub mod learning;
pub mod model;
pub mod problem;
mod sat;
pub mod solver;

pub use error::{AcqError, LearnError, ModelError, SolverError};
pub use model::{
    build_bias, evaluate_constraint, kappa, Assignment, Constraint, ConstraintSet, Domain, Relation,
    RelationKind, VarId, VarSet, Verdict, Vocabulary,
};

//! Propositional encoding of substituted trees and the theorem-prover path.
//!
//! The encoding abstracts runs to occurrence sets, no time ordering. Per node
//! instance (loops are unrolled into copies) it declares a `done` variable;
//! exclusive choices get one `choice` variable per branch, loops one `redo`
//! variable per unrolled iteration, activity leaves an `occ` variable.
//! Decision variables (`choice`, `redo`) fix a commitment; every other
//! variable is defined from them by an equivalence.

mod encode;
mod prover;
mod solver;
mod tptp;

pub use encode::{encode, Formula, PropositionalSpec, VarId};
pub use prover::{
    parse_szs_status, run_prover, value_via_prover, ProverConfig, ProverError, ProverOutcome, SzsStatus,
    UnknownPolicy,
};
pub use solver::{decide, entails, satisfiable, TruthTable};
pub use tptp::{emit_tptp, parse_tptp, TptpError, TptpProblem};

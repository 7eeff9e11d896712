//! Mining process trees from event logs, checking satisfiability, liveness
//! and safety of their coalition-reduced variants, and attributing the
//! verdicts to tree nodes with Shapley values.

pub mod diagnostics;
pub mod event_log;
pub mod logic;
pub mod miner;
pub mod oracle;
pub mod process_tree;
pub mod report;
pub mod shapley;

pub use event_log::{build_dfg, parse_xes, read_xes_file, DirectlyFollowsGraph, Event, EventLog, Trace};
pub use miner::{discover, filter_dfg, MinerConfig, NoiseThreshold};
pub use oracle::{evaluate, Backend, Evaluator, Property, PropertySpec, TauMode, ValueCache};
pub use process_tree::{Coalition, LoopBound, Node, NodeId, ProcessTree};
pub use shapley::{
    estimate, exact_shapley, mc_permutation_shapley, rs_subset_shapley, ConvergenceReport, Game, McConfig, Method, MethodKind,
    RsConfig, ShapleyEstimate,
};

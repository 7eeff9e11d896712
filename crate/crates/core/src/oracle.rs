//! Boolean value functions over τ-substituted trees.
//!
//! A run commits blindly at every exclusive choice and every loop; loop
//! iterations are unrolled into independent copies, so each copy of a choice
//! commits separately. In [`TauMode::Blocked`] a removed-τ on the committed
//! path deadlocks the run; in [`TauMode::Skip`] it completes silently.
//!
//! * sat: some commitment completes.
//! * liv: sat, and every commitment completes.
//! * saf: no completing run contains both `A` and `B` (vacuously true when
//!   nothing completes).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{self, ProverConfig, ProverError};
use crate::process_tree::{Coalition, LoopBound, Node, NodeKind, Operator, ProcessTree, TreeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauMode {
    #[default]
    Blocked,
    Skip,
}

impl FromStr for TauMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "blocked" => Ok(TauMode::Blocked),
            "skip" => Ok(TauMode::Skip),
            other => Err(format!("unknown tau mode {other:?} (expected blocked|skip)")),
        }
    }
}

impl fmt::Display for TauMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TauMode::Blocked => "blocked",
            TauMode::Skip => "skip",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Property {
    Sat,
    Liv,
    Saf,
}

impl Property {
    pub const ALL: [Property; 3] = [Property::Sat, Property::Liv, Property::Saf];
}

impl FromStr for Property {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sat" => Ok(Property::Sat),
            "liv" => Ok(Property::Liv),
            "saf" => Ok(Property::Saf),
            other => Err(format!("unknown property {other:?} (expected sat|liv|saf)")),
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Property::Sat => "sat",
            Property::Liv => "liv",
            Property::Saf => "saf",
        })
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("safety property needs an activity pair (A,B)")]
    MissingSafetyPair,
    #[error("safety pair must name two different activities, got {0:?} twice")]
    DegenerateSafetyPair(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Prover(#[from] ProverError),
}

/// Which property to check and under which semantics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PropertySpec {
    pub property: Property,
    pub safety_pair: Option<(String, String)>,
    pub mode: TauMode,
    pub bound: LoopBound,
}

impl PropertySpec {
    pub fn new(
        property: Property,
        safety_pair: Option<(String, String)>,
        mode: TauMode,
        bound: LoopBound,
    ) -> Result<Self, OracleError> {
        match (&property, &safety_pair) {
            (Property::Saf, None) => return Err(OracleError::MissingSafetyPair),
            (_, Some((a, b))) if a == b => return Err(OracleError::DegenerateSafetyPair(a.clone())),
            _ => {}
        }
        Ok(PropertySpec {
            property,
            safety_pair,
            mode,
            bound,
        })
    }

    pub fn sat() -> Self {
        PropertySpec {
            property: Property::Sat,
            safety_pair: None,
            mode: TauMode::Blocked,
            bound: LoopBound::default(),
        }
    }

    pub fn liv() -> Self {
        PropertySpec {
            property: Property::Liv,
            ..PropertySpec::sat()
        }
    }

    pub fn saf(a: &str, b: &str) -> Self {
        PropertySpec {
            property: Property::Saf,
            safety_pair: Some((a.to_string(), b.to_string())),
            ..PropertySpec::sat()
        }
    }

    #[must_use]
    pub fn with_mode(mut self, mode: TauMode) -> Self {
        self.mode = mode;
        self
    }

    #[must_use]
    pub fn with_bound(mut self, bound: LoopBound) -> Self {
        self.bound = bound;
        self
    }

    /// The same semantics for another property (keeps the pair if present).
    #[must_use]
    pub fn for_property(&self, property: Property) -> Self {
        PropertySpec {
            property,
            ..self.clone()
        }
    }

    pub(crate) fn require_pair(&self) -> Result<(&str, &str), OracleError> {
        match &self.safety_pair {
            Some((a, b)) if a == b => Err(OracleError::DegenerateSafetyPair(a.clone())),
            Some((a, b)) => Ok((a, b)),
            None => Err(OracleError::MissingSafetyPair),
        }
    }
}

/// Compositional summary of the runs of a subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Summary {
    /// Some commitment completes.
    can: bool,
    /// Every commitment completes.
    must: bool,
    /// Bit `s` set iff a completing run has occurrence signature `s`
    /// (bit 0: A occurs, bit 1: B occurs).
    signatures: u8,
}

const BOTH: u8 = 0b11;

fn combine(x: u8, y: u8) -> u8 {
    let mut out = 0;
    for s in 0..4 {
        if x & (1 << s) == 0 {
            continue;
        }
        for t in 0..4 {
            if y & (1 << t) != 0 {
                out |= 1 << (s | t);
            }
        }
    }
    out
}

fn summarize(node: &Node, spec: &PropertySpec, pair: Option<(&str, &str)>) -> Summary {
    let silent = Summary {
        can: true,
        must: true,
        signatures: 1,
    };
    match &node.kind {
        NodeKind::Activity(label) => {
            let mut sig = 0;
            if let Some((a, b)) = pair {
                if label == a {
                    sig |= 1;
                }
                if label == b {
                    sig |= 2;
                }
            }
            Summary {
                signatures: 1 << sig,
                ..silent
            }
        }
        NodeKind::Tau => silent,
        NodeKind::Removed => match spec.mode {
            TauMode::Skip => silent,
            TauMode::Blocked => Summary {
                can: false,
                must: false,
                signatures: 0,
            },
        },
        NodeKind::Operator(op) => {
            let kids: Vec<Summary> = node
                .children
                .iter()
                .map(|c| summarize(c, spec, pair))
                .collect();
            match op {
                Operator::Seq | Operator::And => Summary {
                    can: kids.iter().all(|k| k.can),
                    must: kids.iter().all(|k| k.must),
                    signatures: kids.iter().fold(1, |acc, k| combine(acc, k.signatures)),
                },
                Operator::Xor => Summary {
                    can: kids.iter().any(|k| k.can),
                    must: kids.iter().all(|k| k.must),
                    signatures: kids.iter().fold(0, |acc, k| acc | k.signatures),
                },
                Operator::Loop => {
                    let (body, redo) = (kids[0], kids[1]);
                    let mut sigs = body.signatures;
                    let mut current = body.signatures;
                    for _ in 0..spec.bound.0 {
                        current = combine(combine(current, redo.signatures), body.signatures);
                        sigs |= current;
                    }
                    Summary {
                        can: body.can,
                        must: body.must && (spec.bound.0 == 0 || redo.must),
                        signatures: sigs,
                    }
                }
            }
        }
    }
}

/// Satisfiability: some commitment of the substituted tree completes.
pub fn v_sat(tree_c: &ProcessTree, spec: &PropertySpec) -> bool {
    summarize(tree_c.root(), spec, None).can
}

/// Liveness: the model is satisfiable and no commitment deadlocks.
pub fn v_liv(tree_c: &ProcessTree, spec: &PropertySpec) -> bool {
    let s = summarize(tree_c.root(), spec, None);
    s.can && s.must
}

/// Safety `□¬(A ∧ B)` read as: no completing run contains both A and B.
pub fn v_saf(tree_c: &ProcessTree, spec: &PropertySpec) -> Result<bool, OracleError> {
    let pair = spec.require_pair()?;
    Ok(summarize(tree_c.root(), spec, Some(pair)).signatures & (1 << BOTH) == 0)
}

pub fn value(tree_c: &ProcessTree, spec: &PropertySpec) -> Result<bool, OracleError> {
    match spec.property {
        Property::Sat => Ok(v_sat(tree_c, spec)),
        Property::Liv => Ok(v_liv(tree_c, spec)),
        Property::Saf => v_saf(tree_c, spec),
    }
}

/// Key of a node copy produced by loop unrolling: the node index plus the
/// iteration taken at every enclosing loop (`0` = body, `2j-1` = redo `j`,
/// `2j` = body after redo `j`).
pub type InstanceKey = (usize, Vec<u32>);

/// One blind resolution of every choice reached by a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Commitment {
    pub xor_choice: BTreeMap<InstanceKey, usize>,
    pub loop_redo: BTreeMap<InstanceKey, u32>,
}

/// Outcome of executing one commitment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub commitment: Commitment,
    pub completes: bool,
    /// Activities executed, with one fixed interleaving for `And`.
    pub trace: Vec<String>,
}

/// Explicitly enumerates every commitment. Exponential; meant as a
/// reference for the compositional checks on small trees.
pub fn enumerate_runs(tree_c: &ProcessTree, spec: &PropertySpec, limit: usize) -> Result<Vec<Run>, TreeError> {
    let runs = runs_of(tree_c.root(), &[], spec, limit)?;
    Ok(runs)
}

fn runs_of(node: &Node, path: &[u32], spec: &PropertySpec, limit: usize) -> Result<Vec<Run>, TreeError> {
    let key = (node.index, path.to_vec());
    let leaf = |completes: bool, trace: Vec<String>| {
        Ok(vec![Run {
            commitment: Commitment::default(),
            completes,
            trace,
        }])
    };
    let too_large = || TreeError::LanguageTooLarge {
        node: node.id_text(),
        limit,
    };
    match &node.kind {
        NodeKind::Activity(a) => leaf(true, vec![a.clone()]),
        NodeKind::Tau => leaf(true, Vec::new()),
        NodeKind::Removed => leaf(spec.mode == TauMode::Skip, Vec::new()),
        NodeKind::Operator(Operator::Seq | Operator::And) => {
            let mut acc = leaf(true, Vec::new())?;
            for child in &node.children {
                acc = product(&acc, &runs_of(child, path, spec, limit)?);
                if acc.len() > limit {
                    return Err(too_large());
                }
            }
            Ok(acc)
        }
        NodeKind::Operator(Operator::Xor) => {
            let mut out = Vec::new();
            for (i, child) in node.children.iter().enumerate() {
                for mut run in runs_of(child, path, spec, limit)? {
                    run.commitment.xor_choice.insert(key.clone(), i);
                    out.push(run);
                }
            }
            if out.len() > limit {
                return Err(too_large());
            }
            Ok(out)
        }
        NodeKind::Operator(Operator::Loop) => {
            let mut out = Vec::new();
            for j in 0..=spec.bound.0 {
                let mut iter_path = path.to_vec();
                iter_path.push(0);
                let mut acc = runs_of(&node.children[0], &iter_path, spec, limit)?;
                for r in 1..=j {
                    let mut redo_path = path.to_vec();
                    redo_path.push(2 * r - 1);
                    acc = product(&acc, &runs_of(&node.children[1], &redo_path, spec, limit)?);
                    let mut body_path = path.to_vec();
                    body_path.push(2 * r);
                    acc = product(&acc, &runs_of(&node.children[0], &body_path, spec, limit)?);
                    if acc.len() > limit {
                        return Err(too_large());
                    }
                }
                for mut run in acc {
                    run.commitment.loop_redo.insert(key.clone(), j);
                    out.push(run);
                }
            }
            if out.len() > limit {
                return Err(too_large());
            }
            Ok(out)
        }
    }
}

fn product(left: &[Run], right: &[Run]) -> Vec<Run> {
    let mut out = Vec::with_capacity(left.len() * right.len());
    for l in left {
        for r in right {
            let mut commitment = l.commitment.clone();
            commitment.xor_choice.extend(r.commitment.xor_choice.clone());
            commitment.loop_redo.extend(r.commitment.loop_redo.clone());
            let mut trace = l.trace.clone();
            trace.extend(r.trace.iter().cloned());
            out.push(Run {
                commitment,
                completes: l.completes && r.completes,
                trace,
            });
        }
    }
    out
}

/// Where coalition values come from.
#[derive(Debug, Clone, Default)]
pub enum Backend {
    #[default]
    Oracle,
    Prover(ProverConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    coalition: Coalition,
    property: Property,
    mode: TauMode,
    bound: LoopBound,
    safety_pair: Option<(String, String)>,
}

/// Snapshot of the cache bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CacheCounters {
    pub total_queries: u64,
    pub distinct_queries: u64,
    pub warnings: u64,
}

/// Memo table of coalition values for one tree.
///
/// Coalitions are normalized to their surviving node set before lookup, so
/// coalitions that induce the same substituted tree share an entry. Each
/// distinct key is computed once even under concurrent access.
#[derive(Debug, Default)]
pub struct ValueCache {
    entries: DashMap<CacheKey, Arc<Mutex<Option<bool>>>>,
    total: AtomicU64,
    distinct: AtomicU64,
    warnings: AtomicU64,
}

impl ValueCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counters(&self) -> CacheCounters {
        CacheCounters {
            total_queries: self.total.load(Ordering::Relaxed),
            distinct_queries: self.distinct.load(Ordering::Relaxed),
            warnings: self.warnings.load(Ordering::Relaxed),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn add_warning(&self) {
        self.warnings.fetch_add(1, Ordering::Relaxed);
    }

    fn get_or_compute<E>(&self, key: CacheKey, compute: impl FnOnce() -> Result<bool, E>) -> Result<bool, E> {
        self.total.fetch_add(1, Ordering::Relaxed);
        let slot = self.entries.entry(key).or_default().value().clone();
        let mut guard = slot.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(v) = *guard {
            return Ok(v);
        }
        let v = compute()?;
        *guard = Some(v);
        self.distinct.fetch_add(1, Ordering::Relaxed);
        Ok(v)
    }
}

/// Substitutes, dispatches to the backend and memoizes.
pub fn evaluate(
    tree: &ProcessTree,
    coalition: Coalition,
    spec: &PropertySpec,
    cache: &ValueCache,
    backend: &Backend,
) -> Result<bool, OracleError> {
    if spec.property == Property::Saf {
        spec.require_pair()?;
    }
    let survivors = tree.surviving(coalition);
    let key = CacheKey {
        coalition: survivors,
        property: spec.property,
        mode: spec.mode,
        bound: spec.bound,
        safety_pair: spec.safety_pair.clone(),
    };
    cache.get_or_compute(key, || {
        let tree_c = tree.substitute(survivors);
        match backend {
            Backend::Oracle => value(&tree_c, spec),
            Backend::Prover(config) => {
                let outcome = logic::value_via_prover(&tree_c, spec, config)?;
                if outcome.warned {
                    cache.add_warning();
                }
                Ok(outcome.value)
            }
        }
    })
}

/// A tree, a property and a backend bound together with a shared cache.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub tree: Arc<ProcessTree>,
    pub spec: PropertySpec,
    pub backend: Backend,
    pub cache: Arc<ValueCache>,
}

impl Evaluator {
    pub fn new(tree: Arc<ProcessTree>, spec: PropertySpec, backend: Backend) -> Self {
        Evaluator {
            tree,
            spec,
            backend,
            cache: Arc::new(ValueCache::new()),
        }
    }

    pub fn value(&self, coalition: Coalition) -> Result<bool, OracleError> {
        evaluate(&self.tree, coalition, &self.spec, &self.cache, &self.backend)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process_tree::{trace_language, DEFAULT_LANGUAGE_LIMIT};

    fn a(l: &str) -> Node {
        Node::activity(l)
    }

    fn seq_ab() -> ProcessTree {
        ProcessTree::new(Node::seq(vec![a("a"), a("b")])).unwrap()
    }

    fn xor_ab() -> ProcessTree {
        ProcessTree::new(Node::xor(vec![a("a"), a("b")])).unwrap()
    }

    #[test]
    fn sat_examples() {
        let spec = PropertySpec::sat();
        assert!(v_sat(&seq_ab(), &spec));
        assert!(!v_sat(&seq_ab().substitute(Coalition::from_indices([0, 1])), &spec));
        assert!(v_sat(&xor_ab().substitute(Coalition::from_indices([0, 2])), &spec));
    }

    #[test]
    fn liv_examples() {
        let spec = PropertySpec::liv();
        let xor_minus_a = xor_ab().substitute(Coalition::from_indices([0, 2]));
        assert!(v_sat(&xor_minus_a, &spec));
        assert!(!v_liv(&xor_minus_a, &spec));
        assert!(v_liv(&seq_ab(), &spec));
        assert!(!v_liv(&seq_ab().substitute(Coalition::from_indices([0, 1])), &spec));
    }

    #[test]
    fn saf_examples() {
        let spec = PropertySpec::saf("a", "b");
        assert!(!v_saf(&seq_ab(), &spec).unwrap());
        assert!(v_saf(&xor_ab(), &spec).unwrap());
        assert!(v_saf(&seq_ab().substitute(Coalition::from_indices([0, 1])), &spec).unwrap());
    }

    #[test]
    fn saf_needs_pair() {
        let mut spec = PropertySpec::saf("a", "b");
        spec.safety_pair = None;
        assert!(matches!(v_saf(&seq_ab(), &spec), Err(OracleError::MissingSafetyPair)));
        assert!(PropertySpec::new(Property::Saf, None, TauMode::Blocked, LoopBound(1)).is_err());
        assert!(PropertySpec::new(
            Property::Saf,
            Some(("a".into(), "a".into())),
            TauMode::Blocked,
            LoopBound(1)
        )
        .is_err());
    }

    #[test]
    fn loop_iterations_choose_independently() {
        // Loop(Xor(a,b), tau): with one redo the run a,b is possible.
        let t = ProcessTree::new(Node::looping(Node::xor(vec![a("a"), a("b")]), Node::tau())).unwrap();
        let spec = PropertySpec::saf("a", "b");
        assert!(!v_saf(&t, &spec).unwrap());
        assert!(v_saf(&t, &spec.clone().with_bound(LoopBound(0))).unwrap());
    }

    #[test]
    fn loop_liveness_depends_on_redo_when_unrolled() {
        let t = ProcessTree::new(Node::looping(a("a"), a("b"))).unwrap();
        let redo_gone = t.substitute(Coalition::from_indices([0, 1]));
        let spec = PropertySpec::liv();
        assert!(v_sat(&redo_gone, &spec));
        assert!(!v_liv(&redo_gone, &spec));
        assert!(v_liv(&redo_gone, &spec.with_bound(LoopBound(0))));
    }

    #[test]
    fn skip_mode_is_degenerate_for_sat_and_liv() {
        let t = seq_ab();
        let spec = PropertySpec::sat().with_mode(TauMode::Skip);
        for bits in 0..8u128 {
            let tc = t.substitute(Coalition(bits));
            assert!(v_sat(&tc, &spec));
            assert!(v_liv(&tc, &spec));
        }
    }

    #[test]
    fn enumerated_runs_agree_with_summary() {
        let t = ProcessTree::new(Node::seq(vec![
            Node::looping(Node::xor(vec![a("a"), a("b")]), Node::xor(vec![a("c"), Node::tau()])),
            Node::and(vec![a("b"), Node::xor(vec![a("d"), a("a")])]),
        ]))
        .unwrap();
        let n = t.size();
        for bits in 0..(1u128 << n) {
            let tc = t.substitute(Coalition(bits));
            for mode in [TauMode::Blocked, TauMode::Skip] {
                let spec = PropertySpec::saf("a", "c").with_mode(mode);
                let runs = enumerate_runs(&tc, &spec, 100_000).unwrap();
                let any = runs.iter().any(|r| r.completes);
                let all = runs.iter().all(|r| r.completes);
                let safe = !runs.iter().any(|r| {
                    r.completes && r.trace.iter().any(|x| x == "a") && r.trace.iter().any(|x| x == "c")
                });
                assert_eq!(v_sat(&tc, &spec), any);
                assert_eq!(v_liv(&tc, &spec), any && all);
                assert_eq!(v_saf(&tc, &spec).unwrap(), safe);
                let lang = trace_language(&tc, spec.bound, mode, DEFAULT_LANGUAGE_LIMIT).unwrap();
                assert_eq!(any, !lang.is_empty());
            }
        }
    }

    #[test]
    fn cache_hits_do_not_recompute() {
        let tree = seq_ab();
        let cache = ValueCache::new();
        let spec = PropertySpec::sat();
        let c = Coalition::full(3);
        let v1 = evaluate(&tree, c, &spec, &cache, &Backend::Oracle).unwrap();
        let v2 = evaluate(&tree, c, &spec, &cache, &Backend::Oracle).unwrap();
        assert_eq!(v1, v2);
        let counters = cache.counters();
        assert_eq!(counters.total_queries, 2);
        assert_eq!(counters.distinct_queries, 1);
        // {1,2} without the root induces the same tree as the empty coalition
        evaluate(&tree, Coalition::EMPTY, &spec, &cache, &Backend::Oracle).unwrap();
        evaluate(&tree, Coalition::from_indices([1, 2]), &spec, &cache, &Backend::Oracle).unwrap();
        assert_eq!(cache.counters().distinct_queries, 2);
    }

    #[test]
    fn empty_coalition_mode_boundary() {
        let tree = seq_ab();
        let cache = ValueCache::new();
        let blocked = PropertySpec::sat();
        let skip = PropertySpec::sat().with_mode(TauMode::Skip);
        assert!(!evaluate(&tree, Coalition::EMPTY, &blocked, &cache, &Backend::Oracle).unwrap());
        assert!(evaluate(&tree, Coalition::EMPTY, &skip, &cache, &Backend::Oracle).unwrap());
    }
}

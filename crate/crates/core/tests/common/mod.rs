#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wfshap::logic::{decide, emit_tptp, encode, parse_tptp, SzsStatus};
use wfshap::oracle::OracleError;
use wfshap::process_tree::{Node, NodeKind, Operator};
use wfshap::{Coalition, ProcessTree, Property, PropertySpec};

pub const LABELS: [&str; 4] = ["a", "b", "c", "d"];

/// Random tree with at most `max_nodes` nodes over a small alphabet, so
/// labels repeat and safety pairs over `a`/`b` are meaningful.
pub fn random_tree(rng: &mut ChaCha8Rng, max_nodes: usize) -> ProcessTree {
    loop {
        let mut budget = max_nodes;
        let tree = ProcessTree::new(grow(rng, &mut budget, 0)).expect("generated tree is valid");
        if tree.size() <= max_nodes {
            return tree;
        }
    }
}

fn grow(rng: &mut ChaCha8Rng, budget: &mut usize, depth: usize) -> Node {
    *budget -= 1;
    let leaf = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.15) {
            Node::tau()
        } else {
            Node::activity(*LABELS.choose(rng).unwrap())
        }
    };
    if *budget < 2 || depth >= 4 || rng.gen_bool(0.35) {
        return leaf(rng);
    }
    let op = rng.gen_range(0..4);
    if op == 3 {
        let body = grow(rng, budget, depth + 1);
        let redo = if *budget >= 1 { grow(rng, budget, depth + 1) } else { Node::tau() };
        return Node::looping(body, redo);
    }
    let want = rng.gen_range(2..=3).min(*budget).max(1);
    let mut children = Vec::new();
    for _ in 0..want {
        if *budget == 0 {
            break;
        }
        children.push(grow(rng, budget, depth + 1));
    }
    match op {
        0 => Node::seq(children),
        1 => Node::xor(children),
        _ => Node::and(children),
    }
}

/// A fixed corpus of `count` trees, each with at most 10 nodes.
pub fn corpus(count: usize, seed: u64) -> Vec<ProcessTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=10);
            random_tree(&mut rng, n)
        })
        .collect()
}

/// Loop-free, tau-free tree with distinct labels where no operator has a
/// child of the same operator; at most 8 leaves keeps the language small.
pub fn canonical_tree(rng: &mut ChaCha8Rng, max_depth: usize) -> ProcessTree {
    loop {
        let mut next = 0;
        let root = canonical(rng, max_depth, None, &mut next);
        if next <= 8 {
            return ProcessTree::new(root).expect("valid");
        }
    }
}

fn canonical(rng: &mut ChaCha8Rng, depth: usize, parent: Option<usize>, next: &mut usize) -> Node {
    if depth == 0 || rng.gen_bool(0.3) {
        let label = format!("t{next}");
        *next += 1;
        return Node::activity(label);
    }
    let choices: Vec<usize> = (0..3).filter(|&o| Some(o) != parent).collect();
    let op = *choices.choose(rng).unwrap();
    let n = rng.gen_range(2..=3);
    let children = (0..n).map(|_| canonical(rng, depth - 1, Some(op), next)).collect();
    match op {
        0 => Node::seq(children),
        1 => Node::xor(children),
        _ => Node::and(children),
    }
}

/// Whether `trace` is a complete run of `node` (unbounded loops).
pub fn accepts(node: &Node, trace: &[String]) -> bool {
    ends(node, trace, 0).contains(&trace.len())
}

/// Positions reachable after executing `node` from `start`.
fn ends(node: &Node, trace: &[String], start: usize) -> BTreeSet<usize> {
    match &node.kind {
        NodeKind::Activity(l) => {
            if trace.get(start) == Some(l) {
                BTreeSet::from([start + 1])
            } else {
                BTreeSet::new()
            }
        }
        NodeKind::Tau => BTreeSet::from([start]),
        NodeKind::Removed => BTreeSet::new(),
        NodeKind::Operator(Operator::Seq) => {
            let mut cur = BTreeSet::from([start]);
            for c in &node.children {
                cur = cur.iter().flat_map(|&p| ends(c, trace, p)).collect();
            }
            cur
        }
        NodeKind::Operator(Operator::Xor) => node.children.iter().flat_map(|c| ends(c, trace, start)).collect(),
        NodeKind::Operator(Operator::Loop) => {
            let (body, redo) = (&node.children[0], &node.children[1]);
            let mut out = ends(body, trace, start);
            let mut frontier = out.clone();
            while !frontier.is_empty() {
                let next: BTreeSet<usize> = frontier
                    .iter()
                    .flat_map(|&p| ends(redo, trace, p))
                    .flat_map(|p| ends(body, trace, p))
                    .filter(|p| !out.contains(p))
                    .collect();
                out.extend(next.iter().copied());
                frontier = next;
            }
            out
        }
        NodeKind::Operator(Operator::And) => {
            // children of mined trees have disjoint alphabets, so a segment is
            // accepted when each child accepts its projection
            let alphabets: Vec<BTreeSet<String>> = node.children.iter().map(leaf_labels).collect();
            let union: BTreeSet<&String> = alphabets.iter().flatten().collect();
            (start..=trace.len())
                .filter(|&end| {
                    let seg = &trace[start..end];
                    seg.iter().all(|a| union.contains(a))
                        && node.children.iter().zip(&alphabets).all(|(c, alpha)| {
                            let proj: Vec<String> = seg.iter().filter(|a| alpha.contains(*a)).cloned().collect();
                            accepts(c, &proj)
                        })
                })
                .collect()
        }
    }
}

pub fn leaf_labels(node: &Node) -> BTreeSet<String> {
    node.preorder()
        .into_iter()
        .filter_map(|n| match &n.kind {
            NodeKind::Activity(l) => Some(l.clone()),
            _ => None,
        })
        .collect()
}

/// Value of the coalition computed from the emitted TPTP text: encode,
/// print, parse back and decide by truth table.
pub fn value_from_tptp(tree: &ProcessTree, c: Coalition, spec: &PropertySpec) -> Result<bool, OracleError> {
    let tree_c = tree.substitute(tree.surviving(c));
    let status = |s: &PropertySpec| -> Result<SzsStatus, OracleError> {
        let text = emit_tptp(&encode(&tree_c, s)?, "check");
        Ok(decide(&parse_tptp(&text).expect("emitted TPTP parses").into_spec()))
    };
    Ok(match spec.property {
        Property::Sat => status(spec)? == SzsStatus::Satisfiable,
        Property::Liv => {
            status(&spec.for_property(Property::Sat))? == SzsStatus::Satisfiable && status(spec)? == SzsStatus::Theorem
        }
        Property::Saf => status(spec)? == SzsStatus::Theorem,
    })
}

/// Shapley values straight from the definition: average marginal
/// contribution over all n! orderings.
pub fn brute_force_shapley(n: usize, v: &dyn Fn(u32) -> bool) -> Vec<f64> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sums = vec![0i64; n];
    let mut count = 0i64;
    loop {
        let mut mask = 0u32;
        let mut prev = v(0) as i64;
        for &i in &perm {
            mask |= 1 << i;
            let cur = v(mask) as i64;
            sums[i] += cur - prev;
            prev = cur;
        }
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    sums.iter().map(|&s| s as f64 / count as f64).collect()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

pub fn running_example_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/running-example.xes")
}

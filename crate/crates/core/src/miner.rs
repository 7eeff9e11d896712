//! Inductive mining of block-structured process trees.
//!
//! The miner works on the directly-follows graph of each (sub)log after
//! infrequent edges are filtered out, tries the exclusive-choice, sequence,
//! parallel and loop cuts in that order, splits the log along the first cut
//! that applies and recurses. When nothing applies the flower model
//! `Loop(Xor(activities), τ)` is emitted.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::event_log::{build_dfg, DirectlyFollowsGraph, EventLog};
use crate::process_tree::{Node, ProcessTree, TreeError};

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("noise threshold must lie in [0, 1], got {0}")]
    Noise(f64),
    #[error("max_depth must be at least 1")]
    Depth,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct NoiseThreshold(f64);

impl NoiseThreshold {
    pub fn new(value: f64) -> Result<Self, MinerError> {
        if (0.0..=1.0).contains(&value) {
            Ok(NoiseThreshold(value))
        } else {
            Err(MinerError::Noise(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinerConfig {
    pub noise: NoiseThreshold,
    pub max_depth: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            noise: NoiseThreshold::default(),
            max_depth: 64,
        }
    }
}

impl MinerConfig {
    pub fn with_noise(noise: f64) -> Result<Self, MinerError> {
        Ok(MinerConfig {
            noise: NoiseThreshold::new(noise)?,
            ..MinerConfig::default()
        })
    }
}

/// Drops edges whose frequency is below `noise` times the largest outgoing
/// frequency of their source; start and end activities are filtered against
/// their own maxima. Activity frequencies are left alone.
pub fn filter_dfg(dfg: &DirectlyFollowsGraph, noise: NoiseThreshold) -> DirectlyFollowsGraph {
    let n = noise.value();
    let mut max_out: BTreeMap<&str, u64> = BTreeMap::new();
    for ((a, _), &f) in &dfg.edge_freq {
        let m = max_out.entry(a.as_str()).or_default();
        *m = (*m).max(f);
    }
    let keep = |f: u64, max: u64| f as f64 >= n * max as f64;
    let edge_freq = dfg
        .edge_freq
        .iter()
        .filter(|((a, _), &f)| keep(f, max_out[a.as_str()]))
        .map(|(k, &f)| (k.clone(), f))
        .collect();
    let filter_marks = |marks: &BTreeMap<String, u64>| {
        let max = marks.values().copied().max().unwrap_or(0);
        marks
            .iter()
            .filter(|(_, &f)| keep(f, max))
            .map(|(k, &f)| (k.clone(), f))
            .collect()
    };
    DirectlyFollowsGraph {
        edge_freq,
        start_freq: filter_marks(&dfg.start_freq),
        end_freq: filter_marks(&dfg.end_freq),
        activity_freq: dfg.activity_freq.clone(),
    }
}

pub fn discover(log: &EventLog, config: &MinerConfig) -> Result<ProcessTree, MinerError> {
    if config.max_depth == 0 {
        return Err(MinerError::Depth);
    }
    let traces = log.sequences();
    let root = Miner { config }.mine(traces, 0);
    Ok(ProcessTree::new(root)?)
}

type Sublog = Vec<Vec<String>>;

/// Partition of the activities, in cut order.
type Groups = Vec<BTreeSet<String>>;

enum Cut {
    Xor(Groups),
    Seq(Groups),
    And(Groups),
    Loop { body: BTreeSet<String>, redo: Groups },
    TauLoop,
}

struct Miner<'a> {
    config: &'a MinerConfig,
}

impl Miner<'_> {
    fn mine(&self, log: Sublog, depth: usize) -> Node {
        if log.is_empty() {
            return Node::tau();
        }
        let total = log.len();
        let (empties, log): (Sublog, Sublog) = log.into_iter().partition(|t| t.is_empty());
        if log.is_empty() {
            return Node::tau();
        }
        if !empties.is_empty() {
            let noise = self.config.noise.value();
            if noise == 0.0 || empties.len() as f64 >= noise * total as f64 {
                return Node::xor(vec![Node::tau(), self.mine(log, depth + 1)]);
            }
        }

        let alphabet: BTreeSet<String> = log.iter().flatten().cloned().collect();
        if alphabet.len() == 1 {
            let a = alphabet.into_iter().next().expect("one activity");
            return if log.iter().all(|t| t.len() == 1) {
                Node::activity(a)
            } else {
                Node::looping(Node::activity(a), Node::tau())
            };
        }
        if depth >= self.config.max_depth {
            return flower(&alphabet);
        }

        let dfg = filter_dfg(&build_dfg(&EventLog::from_sequences(&log)), self.config.noise);
        let graph = Graph::new(&alphabet, &dfg);
        let cut = graph
            .xor_cut()
            .map(Cut::Xor)
            .or_else(|| graph.seq_cut().map(Cut::Seq))
            .or_else(|| graph.and_cut().map(Cut::And))
            .or_else(|| graph.loop_cut().map(|(body, redo)| Cut::Loop { body, redo }))
            .or_else(|| graph.tau_loop(&log).then_some(Cut::TauLoop));

        let recurse = |logs: Vec<Sublog>| -> Vec<Node> {
            logs.into_iter().map(|l| self.mine(l, depth + 1)).collect()
        };
        match cut {
            Some(Cut::Xor(groups)) => Node::xor(recurse(split_xor(&log, &groups))),
            Some(Cut::Seq(groups)) => Node::seq(recurse(split_seq(&log, &groups))),
            Some(Cut::And(groups)) => Node::and(recurse(split_and(&log, &groups))),
            Some(Cut::Loop { body, redo }) => {
                let mut parts = vec![body];
                parts.extend(redo);
                let mut children = recurse(split_loop(&log, &parts));
                let body = children.remove(0);
                let redo = if children.len() == 1 {
                    children.remove(0)
                } else {
                    Node::xor(children)
                };
                Node::looping(body, redo)
            }
            Some(Cut::TauLoop) => Node::looping(self.mine(split_tau_loop(&log, &graph), depth + 1), Node::tau()),
            None => flower(&alphabet),
        }
    }
}

fn flower(alphabet: &BTreeSet<String>) -> Node {
    let mut leaves: Vec<Node> = alphabet.iter().map(Node::activity).collect();
    let body = if leaves.len() == 1 {
        leaves.remove(0)
    } else {
        Node::xor(leaves)
    };
    Node::looping(body, Node::tau())
}

/// Activities as dense indices, with the filtered edges and their closure.
struct Graph {
    names: Vec<String>,
    edge: Vec<Vec<bool>>,
    reach: Vec<Vec<bool>>,
    start: Vec<bool>,
    end: Vec<bool>,
}

impl Graph {
    fn new(alphabet: &BTreeSet<String>, dfg: &DirectlyFollowsGraph) -> Graph {
        let names: Vec<String> = alphabet.iter().cloned().collect();
        let idx: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
        let n = names.len();
        let mut edge = vec![vec![false; n]; n];
        for (a, b) in dfg.edge_freq.keys() {
            if let (Some(&i), Some(&j)) = (idx.get(a.as_str()), idx.get(b.as_str())) {
                edge[i][j] = true;
            }
        }
        let mark = |m: &BTreeMap<String, u64>| (0..n).map(|i| m.contains_key(&names[i])).collect();
        let start = mark(&dfg.start_freq);
        let end = mark(&dfg.end_freq);
        let mut reach = edge.clone();
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        Graph {
            names,
            edge,
            reach,
            start,
            end,
        }
    }

    fn len(&self) -> usize {
        self.names.len()
    }

    fn to_groups(&self, classes: Vec<Vec<usize>>) -> Groups {
        classes
            .into_iter()
            .map(|c| c.into_iter().map(|i| self.names[i].clone()).collect())
            .collect()
    }

    /// Connected components of the undirected graph given by `linked`,
    /// ordered by smallest member.
    fn components(&self, nodes: &[usize], linked: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.len());
        for (k, &i) in nodes.iter().enumerate() {
            for &j in &nodes[k + 1..] {
                if linked(i, j) {
                    uf.union(i, j);
                }
            }
        }
        uf.classes(nodes)
    }

    fn xor_cut(&self) -> Option<Groups> {
        let all: Vec<usize> = (0..self.len()).collect();
        let comps = self.components(&all, |i, j| self.edge[i][j] || self.edge[j][i]);
        (comps.len() > 1).then(|| self.to_groups(comps))
    }

    fn seq_cut(&self) -> Option<Groups> {
        let n = self.len();
        let all: Vec<usize> = (0..n).collect();
        // strongly connected components, then merge mutually unreachable ones
        let sccs = self.components(&all, |i, j| self.reach[i][j] && self.reach[j][i]);
        let reaches = |x: &[usize], y: &[usize]| x.iter().any(|&i| y.iter().any(|&j| self.reach[i][j]));
        let mut uf = UnionFind::new(sccs.len());
        for a in 0..sccs.len() {
            for b in a + 1..sccs.len() {
                if !reaches(&sccs[a], &sccs[b]) && !reaches(&sccs[b], &sccs[a]) {
                    uf.union(a, b);
                }
            }
        }
        let scc_ids: Vec<usize> = (0..sccs.len()).collect();
        let mut groups: Vec<Vec<usize>> = uf
            .classes(&scc_ids)
            .into_iter()
            .map(|cls| {
                let mut g: Vec<usize> = cls.into_iter().flat_map(|s| sccs[s].clone()).collect();
                g.sort_unstable();
                g
            })
            .collect();
        if groups.len() < 2 {
            return None;
        }
        let predecessors = |g: &[usize], groups: &[Vec<usize>]| {
            groups.iter().filter(|h| h.as_slice() != g && reaches(h, g)).count()
        };
        let keys: Vec<(usize, usize)> = groups.iter().map(|g| (predecessors(g, &groups), g[0])).collect();
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.sort_by_key(|&k| keys[k]);
        groups = order.into_iter().map(|k| groups[k].clone()).collect();
        for (a, ga) in groups.iter().enumerate() {
            for gb in &groups[a + 1..] {
                for &i in ga {
                    for &j in gb {
                        if !self.reach[i][j] || self.reach[j][i] {
                            return None;
                        }
                    }
                }
            }
        }
        Some(self.to_groups(groups))
    }

    fn and_cut(&self) -> Option<Groups> {
        let all: Vec<usize> = (0..self.len()).collect();
        let comps = self.components(&all, |i, j| !(self.edge[i][j] && self.edge[j][i]));
        if comps.len() < 2 {
            return None;
        }
        let (mut ok, deficient): (Vec<Vec<usize>>, Vec<Vec<usize>>) = comps.into_iter().partition(|c| {
            c.iter().any(|&i| self.start[i]) && c.iter().any(|&i| self.end[i])
        });
        if ok.is_empty() {
            return None;
        }
        for d in deficient {
            ok[0].extend(d);
        }
        ok.iter_mut().for_each(|g| g.sort_unstable());
        ok.sort_by_key(|g| g[0]);
        (ok.len() > 1).then(|| self.to_groups(ok))
    }

    fn loop_cut(&self) -> Option<(BTreeSet<String>, Groups)> {
        let n = self.len();
        let mut body: Vec<bool> = (0..n).map(|i| self.start[i] || self.end[i]).collect();
        if !body.iter().any(|&b| b) {
            return None;
        }
        loop {
            let rest: Vec<usize> = (0..n).filter(|&i| !body[i]).collect();
            let comps = self.components(&rest, |i, j| self.edge[i][j] || self.edge[j][i]);
            let mut changed = false;
            let mut redo = Vec::new();
            for comp in comps {
                let in_comp = |i: usize| comp.contains(&i);
                let mut valid = true;
                let mut from_end = false;
                let mut to_start = false;
                for x in 0..n {
                    if !body[x] {
                        continue;
                    }
                    for &c in &comp {
                        if self.edge[x][c] {
                            valid &= self.end[x];
                            from_end = true;
                        }
                        if self.edge[c][x] {
                            valid &= self.start[x];
                            to_start = true;
                        }
                    }
                }
                // every end activity must be able to enter the redo part and
                // every start activity must be re-entered from it
                valid &= (0..n).filter(|&e| self.end[e]).all(|e| comp.iter().any(|&c| self.edge[e][c]));
                valid &= (0..n).filter(|&s| self.start[s]).all(|s| comp.iter().any(|&c| self.edge[c][s]));
                if valid && from_end && to_start {
                    redo.push(comp);
                } else {
                    for i in (0..n).filter(|&i| in_comp(i)) {
                        body[i] = true;
                    }
                    changed = true;
                }
            }
            if !changed {
                if redo.is_empty() {
                    return None;
                }
                let body_set = (0..n).filter(|&i| body[i]).map(|i| self.names[i].clone()).collect();
                return Some((body_set, self.to_groups(redo)));
            }
        }
    }

    /// Some end activity directly precedes some start activity.
    fn tau_loop(&self, log: &Sublog) -> bool {
        let splits = split_tau_loop(log, self);
        splits.len() > log.len()
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut i = i;
        while self.parent[i] != r {
            let next = self.parent[i];
            self.parent[i] = r;
            i = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }

    /// Classes of `nodes`, each sorted, ordered by smallest member.
    fn classes(&mut self, nodes: &[usize]) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in nodes {
            let r = self.find(i);
            by_root.entry(r).or_default().push(i);
        }
        let mut classes: Vec<Vec<usize>> = by_root.into_values().collect();
        classes.iter_mut().for_each(|c| c.sort_unstable());
        classes.sort_by_key(|c| c[0]);
        classes
    }
}

fn group_of(groups: &[BTreeSet<String>], activity: &str) -> Option<usize> {
    groups.iter().position(|g| g.contains(activity))
}

/// Each trace goes to the group holding most of its events (first on ties),
/// projected onto that group.
fn split_xor(log: &Sublog, groups: &Groups) -> Vec<Sublog> {
    let mut out = vec![Vec::new(); groups.len()];
    for trace in log {
        let mut counts = vec![0usize; groups.len()];
        for a in trace {
            if let Some(g) = group_of(groups, a) {
                counts[g] += 1;
            }
        }
        let best = (0..groups.len())
            .max_by_key(|&g| (counts[g], std::cmp::Reverse(g)))
            .expect("at least two groups");
        out[best].push(trace.iter().filter(|a| groups[best].contains(*a)).cloned().collect());
    }
    out
}

/// Events are assigned left to right; an event of an earlier group than the
/// current one is dropped.
fn split_seq(log: &Sublog, groups: &Groups) -> Vec<Sublog> {
    let mut out = vec![Vec::new(); groups.len()];
    for trace in log {
        let mut parts: Vec<Vec<String>> = vec![Vec::new(); groups.len()];
        let mut current = 0;
        for a in trace {
            if let Some(g) = group_of(groups, a) {
                if g >= current {
                    current = g;
                    parts[g].push(a.clone());
                }
            }
        }
        for (g, p) in parts.into_iter().enumerate() {
            out[g].push(p);
        }
    }
    out
}

fn split_and(log: &Sublog, groups: &Groups) -> Vec<Sublog> {
    groups
        .iter()
        .map(|g| {
            log.iter()
                .map(|t| t.iter().filter(|a| g.contains(*a)).cloned().collect())
                .collect()
        })
        .collect()
}

/// Maximal runs of events within one part become traces of that part.
fn split_loop(log: &Sublog, parts: &Groups) -> Vec<Sublog> {
    let mut out = vec![Vec::new(); parts.len()];
    for trace in log {
        let mut current: Option<(usize, Vec<String>)> = None;
        for a in trace {
            let Some(g) = group_of(parts, a) else { continue };
            match current.as_mut() {
                Some((cg, seg)) if *cg == g => seg.push(a.clone()),
                _ => {
                    if let Some((cg, seg)) = current.take() {
                        out[cg].push(seg);
                    }
                    current = Some((g, vec![a.clone()]));
                }
            }
        }
        if let Some((cg, seg)) = current {
            out[cg].push(seg);
        }
    }
    out
}

/// Cuts every trace between an end activity and a following start activity.
fn split_tau_loop(log: &Sublog, graph: &Graph) -> Sublog {
    let is = |a: &str, marks: &[bool]| graph.index(a).is_some_and(|i| marks[i]);
    let mut out = Vec::new();
    for trace in log {
        let mut seg: Vec<String> = Vec::new();
        for (k, a) in trace.iter().enumerate() {
            seg.push(a.clone());
            if let Some(next) = trace.get(k + 1) {
                if is(a, &graph.end) && is(next, &graph.start) {
                    out.push(std::mem::take(&mut seg));
                }
            }
        }
        out.push(seg);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dfg_of(edges: &[(&str, &str, u64)]) -> DirectlyFollowsGraph {
        let mut d = DirectlyFollowsGraph::default();
        for &(a, b, f) in edges {
            d.edge_freq.insert((a.into(), b.into()), f);
            d.activity_freq.insert(a.into(), 1);
            d.activity_freq.insert(b.into(), 1);
        }
        d
    }

    fn mine(seqs: &[Vec<&str>], noise: f64) -> String {
        let log = EventLog::from_sequences(seqs);
        discover(&log, &MinerConfig::with_noise(noise).unwrap()).unwrap().to_string()
    }

    #[test]
    fn filter_rule() {
        let d = dfg_of(&[("a", "b", 10), ("a", "c", 1)]);
        let f = filter_dfg(&d, NoiseThreshold::new(0.2).unwrap());
        assert!(f.has_edge("a", "b"));
        assert!(!f.has_edge("a", "c"));
        assert_eq!(filter_dfg(&d, NoiseThreshold::new(0.0).unwrap()), d);
        let d = dfg_of(&[("a", "b", 5), ("a", "c", 5), ("a", "d", 4), ("d", "a", 1)]);
        let f = filter_dfg(&d, NoiseThreshold::new(1.0).unwrap());
        assert_eq!(f.edge_freq.len(), 3);
        assert!(!f.has_edge("a", "d"));
        assert!(f.has_edge("d", "a"));
    }

    #[test]
    fn filter_start_end_against_own_max() {
        let mut d = DirectlyFollowsGraph::default();
        d.start_freq = BTreeMap::from([("a".into(), 9), ("b".into(), 1)]);
        d.end_freq = BTreeMap::from([("c".into(), 3)]);
        let f = filter_dfg(&d, NoiseThreshold::new(0.5).unwrap());
        assert_eq!(f.start_freq.keys().collect::<Vec<_>>(), ["a"]);
        assert_eq!(f.end_freq.len(), 1);
    }

    #[test]
    fn noise_bounds() {
        assert!(NoiseThreshold::new(-0.1).is_err());
        assert!(NoiseThreshold::new(1.1).is_err());
        assert!(NoiseThreshold::new(f64::NAN).is_err());
    }

    #[test]
    fn base_cases() {
        assert_eq!(mine(&[], 0.0), "tau@0");
        assert_eq!(mine(&[vec!["a"], vec!["a"]], 0.0), "a@0");
        assert_eq!(mine(&[vec!["a", "a"], vec!["a"]], 0.0), "Loop2@0(a@1, tau@2)");
        assert_eq!(mine(&[vec![], vec!["a"]], 0.0), "Xor2@0(tau@1, a@2)");
    }

    #[test]
    fn elementary_cuts() {
        assert_eq!(mine(&[vec!["a", "b"], vec!["a", "b"]], 0.0), "Seq2@0(a@1, b@2)");
        assert_eq!(mine(&[vec!["a"], vec!["b"]], 0.0), "Xor2@0(a@1, b@2)");
        assert_eq!(mine(&[vec!["a", "b"], vec!["b", "a"]], 0.0), "And2@0(a@1, b@2)");
        assert_eq!(
            mine(&[vec!["a"], vec!["a", "b", "a"], vec!["a", "b", "a", "b", "a"]], 0.0),
            "Loop2@0(a@1, b@2)"
        );
    }

    #[test]
    fn tau_loop_fallthrough() {
        assert_eq!(
            mine(&[vec!["a", "b"], vec!["a", "b", "a", "b"]], 0.0),
            "Loop2@0(Seq2@1(a@2, b@3), tau@4)"
        );
    }

    #[test]
    fn noise_drops_rare_empty_traces() {
        let mut log = vec![vec!["a"]; 9];
        log.push(vec![]);
        assert_eq!(mine(&log, 0.5), "a@0");
        assert_eq!(mine(&log, 0.0), "Xor2@0(tau@1, a@2)");
    }

    #[test]
    fn depth_guard_gives_flower() {
        let log = EventLog::from_sequences(&[vec!["a", "b", "c"], vec!["a", "c", "b"]]);
        let config = MinerConfig {
            noise: NoiseThreshold::default(),
            max_depth: 1,
        };
        let t = discover(&log, &config).unwrap();
        assert_eq!(t.to_string(), "Seq2@0(a@1, Loop2@2(Xor2@3(b@4, c@5), tau@6))");
        let unguarded = discover(&log, &MinerConfig::default()).unwrap();
        assert_eq!(unguarded.to_string(), "Seq2@0(a@1, And2@2(b@3, c@4))");
        assert!(discover(&log, &MinerConfig { max_depth: 0, ..config }).is_err());
    }
}

//! Block-structured process trees.
//!
//! Every node, internal or leaf, is a player of the attribution game and is
//! addressed by its preorder index. Coalitions keep a subset of nodes; the
//! others are cut out together with their subtree and replaced by a
//! [`NodeKind::Removed`] leaf, which the value functions treat differently
//! from a mined silent step ([`NodeKind::Tau`]).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::TauMode;

/// Coalitions are 128-bit sets, so larger trees cannot be attributed.
pub const MAX_PLAYERS: usize = 128;

pub const DEFAULT_LANGUAGE_LIMIT: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("{operator} node needs {expected} children, found {found}")]
    Arity {
        operator: Operator,
        expected: &'static str,
        found: usize,
    },
    #[error("empty activity label")]
    EmptyLabel,
    #[error("tree has {0} nodes, coalitions support at most {MAX_PLAYERS}")]
    TooManyPlayers(usize),
    #[error("tree text line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace language of {node} exceeds {limit} traces")]
    LanguageTooLarge { node: String, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    Seq,
    Xor,
    And,
    Loop,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Seq => "Seq",
            Operator::Xor => "Xor",
            Operator::And => "And",
            Operator::Loop => "Loop",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Operator(Operator),
    Activity(String),
    /// Silent step present in the mined model.
    Tau,
    /// Placeholder for a subtree excluded from the coalition.
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    pub index: usize,
    pub kind: NodeKind,
    pub children: Vec<Node>,
}

impl Node {
    fn op(operator: Operator, children: Vec<Node>) -> Node {
        Node {
            index: 0,
            kind: NodeKind::Operator(operator),
            children,
        }
    }

    pub fn seq(children: Vec<Node>) -> Node {
        Node::op(Operator::Seq, children)
    }

    pub fn xor(children: Vec<Node>) -> Node {
        Node::op(Operator::Xor, children)
    }

    pub fn and(children: Vec<Node>) -> Node {
        Node::op(Operator::And, children)
    }

    pub fn looping(body: Node, redo: Node) -> Node {
        Node::op(Operator::Loop, vec![body, redo])
    }

    pub fn activity(label: impl Into<String>) -> Node {
        Node {
            index: 0,
            kind: NodeKind::Activity(label.into()),
            children: Vec::new(),
        }
    }

    pub fn tau() -> Node {
        Node {
            index: 0,
            kind: NodeKind::Tau,
            children: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn operator(&self) -> Option<Operator> {
        match self.kind {
            NodeKind::Operator(op) => Some(op),
            _ => None,
        }
    }

    /// `Seq2@18` for operators, `label@3` for leaves.
    pub fn id_text(&self) -> String {
        match &self.kind {
            NodeKind::Operator(op) => format!("{op}{}@{}", self.children.len(), self.index),
            NodeKind::Activity(label) => format!("{label}@{}", self.index),
            NodeKind::Tau => format!("tau@{}", self.index),
            NodeKind::Removed => format!("removed@{}", self.index),
        }
    }

    pub fn node_id(&self) -> NodeId {
        NodeId {
            index: self.index,
            text: self.id_text(),
        }
    }

    /// Preorder traversal of this subtree.
    pub fn preorder(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            stack.extend(node.children.iter().rev());
        }
        out
    }

    fn validate(&self) -> Result<(), TreeError> {
        match &self.kind {
            NodeKind::Operator(Operator::Loop) if self.children.len() != 2 => Err(TreeError::Arity {
                operator: Operator::Loop,
                expected: "exactly 2",
                found: self.children.len(),
            }),
            NodeKind::Operator(op) if self.children.is_empty() => Err(TreeError::Arity {
                operator: *op,
                expected: "at least 1",
                found: 0,
            }),
            NodeKind::Activity(label) if label.is_empty() => Err(TreeError::EmptyLabel),
            _ => self.children.iter().try_for_each(Node::validate),
        }
    }

    fn number(&mut self, next: &mut usize) {
        self.index = *next;
        *next += 1;
        for child in &mut self.children {
            child.number(next);
        }
    }
}

/// Stable node identifier, e.g. `Seq2@18`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub index: usize,
    pub text: String,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Unrolling depth for loops: at most this many redo iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LoopBound(pub u32);

impl Default for LoopBound {
    fn default() -> Self {
        LoopBound(1)
    }
}

/// Set of retained node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Coalition(pub u128);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn full(n: usize) -> Coalition {
        assert!(n <= MAX_PLAYERS, "coalition over {n} players");
        if n == MAX_PLAYERS {
            Coalition(u128::MAX)
        } else {
            Coalition((1u128 << n) - 1)
        }
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Coalition {
        indices.into_iter().fold(Coalition::EMPTY, Coalition::with)
    }

    pub fn contains(self, index: usize) -> bool {
        index < MAX_PLAYERS && self.0 & (1u128 << index) != 0
    }

    #[must_use]
    pub fn with(self, index: usize) -> Coalition {
        Coalition(self.0 | (1u128 << index))
    }

    #[must_use]
    pub fn without(self, index: usize) -> Coalition {
        Coalition(self.0 & !(1u128 << index))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..MAX_PLAYERS).filter(move |&i| self.contains(i))
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// A process tree with preorder node indices.
///
/// `size` is the node count of the tree the indices were assigned on; it is
/// kept by [`ProcessTree::substitute`] so coalitions stay comparable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProcessTree {
    root: Node,
    size: usize,
}

/// Validates the tree and numbers its nodes in preorder (root = 0).
pub fn assign_node_ids(mut root: Node) -> Result<ProcessTree, TreeError> {
    root.validate()?;
    let mut next = 0;
    root.number(&mut next);
    Ok(ProcessTree { root, size: next })
}

impl ProcessTree {
    pub fn new(root: Node) -> Result<ProcessTree, TreeError> {
        assign_node_ids(root)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Number of players: the node count of the originally numbered tree.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn nodes(&self) -> Vec<&Node> {
        self.root.preorder()
    }

    pub fn node(&self, index: usize) -> Option<&Node> {
        self.nodes().into_iter().find(|n| n.index == index)
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes().into_iter().map(Node::node_id).collect()
    }

    pub fn depth(&self) -> usize {
        fn go(n: &Node) -> usize {
            1 + n.children.iter().map(go).max().unwrap_or(0)
        }
        go(&self.root)
    }

    pub fn full_coalition(&self) -> Result<Coalition, TreeError> {
        if self.size > MAX_PLAYERS {
            return Err(TreeError::TooManyPlayers(self.size));
        }
        Ok(Coalition::full(self.size))
    }

    /// Replaces every maximal excluded node, with its subtree, by a removed-τ
    /// leaf carrying the same index.
    pub fn substitute(&self, coalition: Coalition) -> ProcessTree {
        fn go(node: &Node, coalition: Coalition) -> Node {
            if !coalition.contains(node.index) {
                return Node {
                    index: node.index,
                    kind: NodeKind::Removed,
                    children: Vec::new(),
                };
            }
            Node {
                index: node.index,
                kind: node.kind.clone(),
                children: node.children.iter().map(|c| go(c, coalition)).collect(),
            }
        }
        ProcessTree {
            root: go(&self.root, coalition),
            size: self.size,
        }
    }

    /// Nodes that survive substitution by `coalition`: members whose
    /// ancestors are all members. Coalitions with equal survivors induce the
    /// same substituted tree.
    pub fn surviving(&self, coalition: Coalition) -> Coalition {
        fn go(node: &Node, coalition: Coalition, acc: &mut Coalition) {
            if coalition.contains(node.index) {
                *acc = acc.with(node.index);
                for child in &node.children {
                    go(child, coalition, acc);
                }
            }
        }
        let mut acc = Coalition::EMPTY;
        go(&self.root, coalition, &mut acc);
        acc
    }

    /// Activity labels of all leaves, sorted.
    pub fn activities(&self) -> BTreeSet<String> {
        self.nodes()
            .into_iter()
            .filter_map(|n| match &n.kind {
                NodeKind::Activity(a) => Some(a.clone()),
                _ => None,
            })
            .collect()
    }

    /// Indented one-node-per-line form; see [`ProcessTree::parse_debug`].
    pub fn to_debug_string(&self) -> String {
        let mut out = String::new();
        for (depth, node) in with_depth(&self.root) {
            out.push_str(&"  ".repeat(depth));
            match &node.kind {
                NodeKind::Operator(op) => out.push_str(&op.to_string().to_lowercase()),
                NodeKind::Activity(label) => {
                    out.push_str("act ");
                    out.push_str(&escape_label(label));
                }
                NodeKind::Tau => out.push_str("tau"),
                NodeKind::Removed => out.push_str("removed"),
            }
            out.push_str(&format!(" @{}\n", node.index));
        }
        out
    }

    /// Parses the debug form. Indices are reassigned in preorder; a trailing
    /// ` @<n>` on a line is accepted and ignored.
    pub fn parse_debug(text: &str) -> Result<ProcessTree, TreeError> {
        let mut stack: Vec<(usize, Node)> = Vec::new();
        let mut root: Option<Node> = None;
        let fold = |stack: &mut Vec<(usize, Node)>, root: &mut Option<Node>, depth: usize| {
            while stack.last().is_some_and(|(d, _)| *d >= depth) {
                let (_, node) = stack.pop().expect("checked non-empty");
                match stack.last_mut() {
                    Some((_, parent)) => parent.children.push(node),
                    None => *root = Some(node),
                }
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let indent = raw.len() - raw.trim_start_matches(' ').len();
            if indent % 2 != 0 {
                return Err(TreeError::Parse {
                    line: line_no,
                    message: "indentation must be a multiple of two spaces".into(),
                });
            }
            let depth = indent / 2;
            let mut body = raw.trim();
            if let Some(pos) = body.rfind(" @") {
                if body[pos + 2..].chars().all(|c| c.is_ascii_digit()) {
                    body = &body[..pos];
                }
            }
            let node = match body {
                "seq" => Node::seq(Vec::new()),
                "xor" => Node::xor(Vec::new()),
                "and" => Node::and(Vec::new()),
                "loop" => Node::op(Operator::Loop, Vec::new()),
                "tau" => Node::tau(),
                "removed" => Node {
                    index: 0,
                    kind: NodeKind::Removed,
                    children: Vec::new(),
                },
                other => match other.strip_prefix("act ") {
                    Some(label) => Node::activity(unescape_label(label)),
                    None => {
                        return Err(TreeError::Parse {
                            line: line_no,
                            message: format!("unknown node {other:?}"),
                        })
                    }
                },
            };
            if root.is_some() {
                return Err(TreeError::Parse {
                    line: line_no,
                    message: "more than one root".into(),
                });
            }
            match stack.last() {
                None if depth != 0 => {
                    return Err(TreeError::Parse {
                        line: line_no,
                        message: "root must not be indented".into(),
                    })
                }
                Some(_) if depth == 0 => {
                    return Err(TreeError::Parse {
                        line: line_no,
                        message: "more than one root".into(),
                    })
                }
                _ => {}
            }
            fold(&mut stack, &mut root, depth);
            match stack.last() {
                Some((d, parent)) if *d + 1 == depth => {
                    if parent.is_leaf() && parent.operator().is_none() {
                        return Err(TreeError::Parse {
                            line: line_no,
                            message: "leaf nodes cannot have children".into(),
                        });
                    }
                }
                Some(_) => {
                    return Err(TreeError::Parse {
                        line: line_no,
                        message: "indentation skips a level".into(),
                    })
                }
                None => {}
            }
            stack.push((depth, node));
        }
        fold(&mut stack, &mut root, 0);
        let root = root.ok_or(TreeError::Parse {
            line: 0,
            message: "empty tree text".into(),
        })?;
        assign_node_ids(root)
    }
}

impl fmt::Display for ProcessTree {
    /// Compact term syntax, e.g. `Seq2@0(a@1, Xor2@2(b@3, c@4))`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(n: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            write!(f, "{}", n.id_text())?;
            if !n.children.is_empty() {
                write!(f, "(")?;
                for (i, c) in n.children.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    go(c, f)?;
                }
                write!(f, ")")?;
            }
            Ok(())
        }
        go(&self.root, f)
    }
}

fn with_depth(root: &Node) -> Vec<(usize, &Node)> {
    let mut out = Vec::new();
    let mut stack = vec![(0, root)];
    while let Some((d, node)) = stack.pop() {
        out.push((d, node));
        stack.extend(node.children.iter().rev().map(|c| (d + 1, c)));
    }
    out
}

fn escape_label(label: &str) -> String {
    label.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape_label(label: &str) -> String {
    let mut out = String::new();
    let mut chars = label.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(o) => out.push(o),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub type Language = BTreeSet<Vec<String>>;

/// Bounded trace language of the (possibly substituted) tree.
pub fn trace_language(
    tree: &ProcessTree,
    bound: LoopBound,
    mode: TauMode,
    limit: usize,
) -> Result<Language, TreeError> {
    language_of(tree.root(), bound, mode, limit)
}

fn language_of(node: &Node, bound: LoopBound, mode: TauMode, limit: usize) -> Result<Language, TreeError> {
    let too_large = || TreeError::LanguageTooLarge {
        node: node.id_text(),
        limit,
    };
    let check = |lang: Language| if lang.len() > limit { Err(too_large()) } else { Ok(lang) };
    match &node.kind {
        NodeKind::Activity(a) => Ok(BTreeSet::from([vec![a.clone()]])),
        NodeKind::Tau => Ok(BTreeSet::from([Vec::new()])),
        NodeKind::Removed => Ok(match mode {
            TauMode::Skip => BTreeSet::from([Vec::new()]),
            TauMode::Blocked => BTreeSet::new(),
        }),
        NodeKind::Operator(op) => {
            let children = node
                .children
                .iter()
                .map(|c| language_of(c, bound, mode, limit))
                .collect::<Result<Vec<_>, _>>()?;
            match op {
                Operator::Seq => children
                    .into_iter()
                    .try_fold(BTreeSet::from([Vec::new()]), |acc, l| concat(&acc, &l, limit).ok_or_else(too_large)),
                Operator::Xor => check(children.into_iter().flatten().collect()),
                Operator::And => children
                    .into_iter()
                    .try_fold(BTreeSet::from([Vec::new()]), |acc, l| {
                        let mut out = BTreeSet::new();
                        for x in &acc {
                            for y in &l {
                                shuffle(x, y, &mut Vec::new(), &mut out, limit);
                                if out.len() > limit {
                                    return Err(too_large());
                                }
                            }
                        }
                        Ok(out)
                    }),
                Operator::Loop => {
                    let (body, redo) = (&children[0], &children[1]);
                    let mut result = body.clone();
                    let mut current = body.clone();
                    for _ in 0..bound.0 {
                        current = concat(&current, redo, limit)
                            .and_then(|c| concat(&c, body, limit))
                            .ok_or_else(too_large)?;
                        result.extend(current.iter().cloned());
                        result = check(result)?;
                    }
                    Ok(result)
                }
            }
        }
    }
}

/// `None` as soon as the result would exceed `limit` traces.
fn concat(left: &Language, right: &Language, limit: usize) -> Option<Language> {
    let mut out = BTreeSet::new();
    for x in left {
        for y in right {
            let mut t = x.clone();
            t.extend(y.iter().cloned());
            out.insert(t);
            if out.len() > limit {
                return None;
            }
        }
    }
    Some(out)
}

fn shuffle(x: &[String], y: &[String], prefix: &mut Vec<String>, out: &mut Language, limit: usize) {
    if out.len() > limit {
        return;
    }
    match (x.split_first(), y.split_first()) {
        (None, _) => {
            let mut t = prefix.clone();
            t.extend(y.iter().cloned());
            out.insert(t);
        }
        (_, None) => {
            let mut t = prefix.clone();
            t.extend(x.iter().cloned());
            out.insert(t);
        }
        (Some((hx, tx)), Some((hy, ty))) => {
            prefix.push(hx.clone());
            shuffle(tx, y, prefix, out, limit);
            prefix.pop();
            prefix.push(hy.clone());
            shuffle(x, ty, prefix, out, limit);
            prefix.pop();
        }
    }
}

/// Graphviz rendering with a blue-white-red fill keyed on the node values.
///
/// Colours are anchored at `min(φ, 0)` (blue), `0` (white) and `max(φ, 0)`
/// (red). Nodes without a value are drawn white with no value in the label.
pub fn export_dot(tree: &ProcessTree, values: &BTreeMap<usize, f64>) -> String {
    let lo = values.values().copied().fold(0.0_f64, f64::min);
    let hi = values.values().copied().fold(0.0_f64, f64::max);
    let mut out = String::from("digraph process_tree {\n");
    out.push_str("  node [shape=box, style=\"rounded,filled\", fontname=\"Helvetica\"];\n");
    for node in tree.nodes() {
        let (fill, label) = match values.get(&node.index) {
            Some(&phi) => (
                heat_color(phi, lo, hi),
                format!("{}\\nφ={:.3}", dot_escape(&node.id_text()), round3(phi)),
            ),
            None => ("#ffffff".to_string(), dot_escape(&node.id_text())),
        };
        let shape = match node.kind {
            NodeKind::Operator(_) => "",
            NodeKind::Activity(_) => ", shape=box",
            NodeKind::Tau | NodeKind::Removed => ", shape=box, style=\"rounded,filled,dashed\"",
        };
        out.push_str(&format!(
            "  n{} [label=\"{}\", fillcolor=\"{}\"{}];\n",
            node.index, label, fill, shape
        ));
    }
    for node in tree.nodes() {
        for child in &node.children {
            out.push_str(&format!("  n{} -> n{};\n", node.index, child.index));
        }
    }
    out.push_str("}\n");
    out
}

/// Rounds to three decimals so tiny negatives do not print as `-0.000`.
fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0 + 0.0
}

fn heat_color(phi: f64, lo: f64, hi: f64) -> String {
    // fraction of the way from white to the saturated end
    let (t, red) = if phi > 0.0 && hi > 0.0 {
        ((phi / hi).min(1.0), true)
    } else if phi < 0.0 && lo < 0.0 {
        ((phi / lo).min(1.0), false)
    } else {
        (0.0, true)
    };
    let fade = (255.0 * (1.0 - t)).round() as u8;
    if red {
        format!("#ff{fade:02x}{fade:02x}")
    } else {
        format!("#{fade:02x}{fade:02x}ff")
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

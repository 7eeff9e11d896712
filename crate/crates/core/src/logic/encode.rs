use std::collections::BTreeMap;

use crate::oracle::{OracleError, Property, PropertySpec, TauMode};
use crate::process_tree::{Node, NodeKind, Operator, ProcessTree};

pub type VarId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Var(VarId),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    pub fn eval(&self, assignment: &[bool]) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Var(v) => assignment[*v],
            Formula::Not(f) => !f.eval(assignment),
            Formula::And(fs) => fs.iter().all(|f| f.eval(assignment)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(assignment)),
            Formula::Implies(a, b) => !a.eval(assignment) || b.eval(assignment),
            Formula::Iff(a, b) => a.eval(assignment) == b.eval(assignment),
        }
    }

    /// Largest variable id mentioned, if any.
    pub fn max_var(&self) -> Option<VarId> {
        match self {
            Formula::True | Formula::False => None,
            Formula::Var(v) => Some(*v),
            Formula::Not(f) => f.max_var(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().filter_map(Formula::max_var).max(),
            Formula::Implies(a, b) | Formula::Iff(a, b) => a.max_var().max(b.max_var()),
        }
    }

    pub fn vars(&self, out: &mut Vec<VarId>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Var(v) => out.push(*v),
            Formula::Not(f) => f.vars(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.vars(out)),
            Formula::Implies(a, b) | Formula::Iff(a, b) => {
                a.vars(out);
                b.vars(out);
            }
        }
    }
}

/// Axioms plus an optional conjecture over named propositional variables.
///
/// Variables are ordered with all decision variables first; the definitional
/// axiom of every other variable only mentions variables declared before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropositionalSpec {
    pub variables: Vec<String>,
    pub axioms: Vec<Formula>,
    pub conjecture: Option<Formula>,
    pub flavor: Property,
}

impl PropositionalSpec {
    pub fn var(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v == name)
    }
}

/// Pending variable: decision variables are numbered before defined ones.
#[derive(Debug, Clone, Copy)]
enum Slot {
    Decision(usize),
    Defined(usize),
}

#[derive(Default)]
struct Builder {
    decisions: Vec<String>,
    defined: Vec<String>,
    axioms: Vec<PendingFormula>,
    occurrences: BTreeMap<String, Vec<Slot>>,
}

/// Formula over pending slots, resolved to final ids at the end.
#[derive(Debug, Clone)]
enum PendingFormula {
    True,
    False,
    Var(Slot),
    Not(Box<PendingFormula>),
    And(Vec<PendingFormula>),
    Or(Vec<PendingFormula>),
    Implies(Box<PendingFormula>, Box<PendingFormula>),
    Iff(Box<PendingFormula>, Box<PendingFormula>),
}

use PendingFormula as P;

impl PendingFormula {
    fn resolve(&self, offset: usize) -> Formula {
        match self {
            P::True => Formula::True,
            P::False => Formula::False,
            P::Var(Slot::Decision(i)) => Formula::Var(*i),
            P::Var(Slot::Defined(i)) => Formula::Var(offset + i),
            P::Not(f) => Formula::not(f.resolve(offset)),
            P::And(fs) => Formula::And(fs.iter().map(|f| f.resolve(offset)).collect()),
            P::Or(fs) => Formula::Or(fs.iter().map(|f| f.resolve(offset)).collect()),
            P::Implies(a, b) => Formula::implies(a.resolve(offset), b.resolve(offset)),
            P::Iff(a, b) => Formula::iff(a.resolve(offset), b.resolve(offset)),
        }
    }
}

fn iff(a: PendingFormula, b: PendingFormula) -> PendingFormula {
    match b {
        P::True => a,
        P::False => not(a),
        b => P::Iff(Box::new(a), Box::new(b)),
    }
}

fn implies(a: PendingFormula, b: PendingFormula) -> PendingFormula {
    P::Implies(Box::new(a), Box::new(b))
}

fn not(a: PendingFormula) -> PendingFormula {
    P::Not(Box::new(a))
}

fn suffix(path: &[u32]) -> String {
    if path.is_empty() {
        String::new()
    } else {
        let parts: Vec<String> = path.iter().map(u32::to_string).collect();
        format!("_i{}", parts.join("_"))
    }
}

impl Builder {
    fn decision(&mut self, name: String) -> Slot {
        self.decisions.push(name);
        Slot::Decision(self.decisions.len() - 1)
    }

    fn defined(&mut self, name: String) -> Slot {
        self.defined.push(name);
        Slot::Defined(self.defined.len() - 1)
    }

    /// Encodes one node instance reached under `guard` (a literal or ⊤);
    /// returns its `done` variable.
    fn node(&mut self, node: &Node, path: &[u32], guard: PendingFormula, spec: &PropertySpec) -> Slot {
        let tag = format!("n{}{}", node.index, suffix(path));
        match &node.kind {
            NodeKind::Activity(label) => {
                let occ = self.defined(format!("occ_{tag}"));
                self.axioms.push(iff(P::Var(occ), guard));
                self.occurrences.entry(label.clone()).or_default().push(occ);
                let done = self.defined(format!("done_{tag}"));
                self.axioms.push(iff(P::Var(done), P::Var(occ)));
                done
            }
            NodeKind::Tau => {
                let done = self.defined(format!("done_{tag}"));
                self.axioms.push(iff(P::Var(done), guard));
                done
            }
            NodeKind::Removed => {
                let done = self.defined(format!("done_{tag}"));
                let def = match spec.mode {
                    TauMode::Blocked => P::False,
                    TauMode::Skip => guard,
                };
                self.axioms.push(iff(P::Var(done), def));
                done
            }
            NodeKind::Operator(Operator::Seq | Operator::And) => {
                let kids: Vec<Slot> = node
                    .children
                    .iter()
                    .map(|c| self.node(c, path, guard.clone(), spec))
                    .collect();
                let done = self.defined(format!("done_{tag}"));
                self.axioms
                    .push(iff(P::Var(done), P::And(kids.into_iter().map(P::Var).collect())));
                done
            }
            NodeKind::Operator(Operator::Xor) => {
                let choices: Vec<Slot> = (0..node.children.len())
                    .map(|i| self.decision(format!("choice_{tag}_c{i}")))
                    .collect();
                // reached: exactly one branch; unreached: none
                self.axioms.push(implies(
                    guard.clone(),
                    P::Or(choices.iter().copied().map(P::Var).collect()),
                ));
                for (i, &ci) in choices.iter().enumerate() {
                    for &cj in &choices[i + 1..] {
                        self.axioms.push(not(P::And(vec![P::Var(ci), P::Var(cj)])));
                    }
                    if !matches!(guard, P::True) {
                        self.axioms.push(implies(not(guard.clone()), not(P::Var(ci))));
                    }
                }
                let kids: Vec<Slot> = node
                    .children
                    .iter()
                    .zip(&choices)
                    .map(|(c, &ch)| self.node(c, path, P::Var(ch), spec))
                    .collect();
                let done = self.defined(format!("done_{tag}"));
                let branches = choices
                    .iter()
                    .zip(&kids)
                    .map(|(&ch, &k)| P::And(vec![P::Var(ch), P::Var(k)]))
                    .collect();
                self.axioms.push(iff(P::Var(done), P::Or(branches)));
                done
            }
            NodeKind::Operator(Operator::Loop) => {
                let k = spec.bound.0;
                let redos: Vec<Slot> = (1..=k).map(|j| self.decision(format!("redo_{tag}_{j}"))).collect();
                if let Some(&first) = redos.first() {
                    if !matches!(guard, P::True) {
                        self.axioms.push(implies(not(guard.clone()), not(P::Var(first))));
                    }
                }
                for pair in redos.windows(2) {
                    self.axioms.push(implies(P::Var(pair[1]), P::Var(pair[0])));
                }
                let (body, redo) = (&node.children[0], &node.children[1]);
                let mut child_path = path.to_vec();
                child_path.push(0);
                let first_body = self.node(body, &child_path, guard.clone(), spec);
                let mut conj = vec![P::Var(first_body)];
                for (j, &r) in (1..=k).zip(&redos) {
                    *child_path.last_mut().expect("pushed above") = 2 * j - 1;
                    let redo_done = self.node(redo, &child_path, P::Var(r), spec);
                    *child_path.last_mut().expect("pushed above") = 2 * j;
                    let body_done = self.node(body, &child_path, P::Var(r), spec);
                    conj.push(implies(P::Var(r), P::And(vec![P::Var(redo_done), P::Var(body_done)])));
                }
                let done = self.defined(format!("done_{tag}"));
                self.axioms.push(iff(P::Var(done), P::And(conj)));
                done
            }
        }
    }

    fn occurs(&self, label: &str) -> PendingFormula {
        match self.occurrences.get(label) {
            Some(slots) => P::Or(slots.iter().copied().map(P::Var).collect()),
            None => P::False,
        }
    }
}

/// Builds the problem for `spec.property`:
///
/// * sat: axioms ∧ done_root, no conjecture (satisfiable iff v = 1);
/// * liv: axioms ⊢ done_root;
/// * saf: axioms ∧ done_root ⊢ ¬(occ_A ∧ occ_B).
pub fn encode(tree_c: &ProcessTree, spec: &PropertySpec) -> Result<PropositionalSpec, OracleError> {
    let pair = match spec.property {
        Property::Saf => Some(spec.require_pair()?),
        _ => None,
    };
    let mut b = Builder::default();
    let root = b.node(tree_c.root(), &[], P::True, spec);
    let conjecture = match spec.property {
        Property::Sat => {
            b.axioms.push(P::Var(root));
            None
        }
        Property::Liv => Some(P::Var(root)),
        Property::Saf => {
            let (a, bb) = pair.expect("checked above");
            b.axioms.push(P::Var(root));
            Some(not(P::And(vec![b.occurs(a), b.occurs(bb)])))
        }
    };
    let offset = b.decisions.len();
    let mut variables = b.decisions;
    variables.extend(b.defined);
    Ok(PropositionalSpec {
        variables,
        axioms: b.axioms.iter().map(|f| f.resolve(offset)).collect(),
        conjecture: conjecture.map(|f| f.resolve(offset)),
        flavor: spec.property,
    })
}

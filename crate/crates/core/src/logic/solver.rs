//! Exhaustive propositional model enumeration.
//!
//! Assignments are enumerated in variable order; a formula is evaluated as
//! soon as its last variable is assigned and a false formula cuts the branch.
//! The answer is the truth-table answer, the pruning only skips rows that are
//! already known to falsify some formula.

use super::encode::{Formula, PropositionalSpec};
use super::prover::SzsStatus;

/// Formulas bucketed by the last variable they mention.
pub struct TruthTable<'a> {
    num_vars: usize,
    ground: Vec<&'a Formula>,
    buckets: Vec<Vec<&'a Formula>>,
}

impl<'a> TruthTable<'a> {
    pub fn new(formulas: &'a [Formula], num_vars: usize) -> Self {
        let mut ground = Vec::new();
        let mut buckets = vec![Vec::new(); num_vars];
        for f in formulas {
            match f.max_var() {
                Some(v) => {
                    assert!(v < num_vars, "formula mentions undeclared variable {v}");
                    buckets[v].push(f);
                }
                None => ground.push(f),
            }
        }
        TruthTable {
            num_vars,
            ground,
            buckets,
        }
    }

    /// First model in lexicographic order (false before true), if any.
    pub fn first_model(&self) -> Option<Vec<bool>> {
        let empty: Vec<bool> = Vec::new();
        if !self.ground.iter().all(|f| f.eval(&empty)) {
            return None;
        }
        let mut assignment = vec![false; self.num_vars];
        self.search(0, &mut assignment).then_some(assignment)
    }

    /// Counts every model. Exponential; for tests on small specs.
    pub fn count_models(&self) -> u64 {
        let empty: Vec<bool> = Vec::new();
        if !self.ground.iter().all(|f| f.eval(&empty)) {
            return 0;
        }
        let mut assignment = vec![false; self.num_vars];
        self.count(0, &mut assignment)
    }

    fn consistent(&self, var: usize, assignment: &[bool]) -> bool {
        self.buckets[var].iter().all(|f| f.eval(assignment))
    }

    fn search(&self, var: usize, assignment: &mut [bool]) -> bool {
        if var == self.num_vars {
            return true;
        }
        for value in [false, true] {
            assignment[var] = value;
            if self.consistent(var, assignment) && self.search(var + 1, assignment) {
                return true;
            }
        }
        false
    }

    fn count(&self, var: usize, assignment: &mut [bool]) -> u64 {
        if var == self.num_vars {
            return 1;
        }
        let mut total = 0;
        for value in [false, true] {
            assignment[var] = value;
            if self.consistent(var, assignment) {
                total += self.count(var + 1, assignment);
            }
        }
        total
    }
}

pub fn satisfiable(formulas: &[Formula], num_vars: usize) -> Option<Vec<bool>> {
    TruthTable::new(formulas, num_vars).first_model()
}

/// Whether every model of `premises` satisfies `goal`.
pub fn entails(premises: &[Formula], goal: &Formula, num_vars: usize) -> bool {
    let mut all = premises.to_vec();
    all.push(Formula::not(goal.clone()));
    satisfiable(&all, num_vars).is_none()
}

/// SZS verdict of a problem: Theorem/CounterSatisfiable with a conjecture,
/// Satisfiable/Unsatisfiable without.
pub fn decide(spec: &PropositionalSpec) -> SzsStatus {
    let n = spec.variables.len();
    match &spec.conjecture {
        Some(goal) => {
            if entails(&spec.axioms, goal, n) {
                SzsStatus::Theorem
            } else {
                SzsStatus::CounterSatisfiable
            }
        }
        None => {
            if satisfiable(&spec.axioms, n).is_some() {
                SzsStatus::Satisfiable
            } else {
                SzsStatus::Unsatisfiable
            }
        }
    }
}

//! TPTP FOF text for propositional problems.
//!
//! Emission covers the whole problem; the reader accepts the propositional
//! FOF fragment (nullary predicates, `$true`/`$false`, all binary
//! connectives), which is what the bundled checker needs.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::encode::{Formula, PropositionalSpec};
use crate::oracle::Property;

fn write_formula(f: &Formula, names: &[String], out: &mut String) {
    match f {
        Formula::True => out.push_str("$true"),
        Formula::False => out.push_str("$false"),
        Formula::Var(v) => out.push_str(&names[*v]),
        Formula::Not(inner) => {
            out.push_str("~ ");
            write_unitary(inner, names, out);
        }
        Formula::And(fs) | Formula::Or(fs) if fs.is_empty() => {
            out.push_str(if matches!(f, Formula::And(_)) { "$true" } else { "$false" })
        }
        Formula::And(fs) | Formula::Or(fs) if fs.len() == 1 => write_formula(&fs[0], names, out),
        Formula::And(fs) | Formula::Or(fs) => {
            let op = if matches!(f, Formula::And(_)) { " & " } else { " | " };
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    out.push_str(op);
                }
                write_unitary(g, names, out);
            }
        }
        Formula::Implies(a, b) | Formula::Iff(a, b) => {
            let op = if matches!(f, Formula::Implies(..)) { " => " } else { " <=> " };
            write_unitary(a, names, out);
            out.push_str(op);
            write_unitary(b, names, out);
        }
    }
}

/// Writes `f`, parenthesised unless it is atomic or a negation.
fn write_unitary(f: &Formula, names: &[String], out: &mut String) {
    let atomic = match f {
        Formula::True | Formula::False | Formula::Var(_) | Formula::Not(_) => true,
        Formula::And(fs) | Formula::Or(fs) => fs.is_empty() || (fs.len() == 1 && is_atomic(&fs[0])),
        _ => false,
    };
    if atomic {
        write_formula(f, names, out);
    } else {
        out.push('(');
        write_formula(f, names, out);
        out.push(')');
    }
}

fn is_atomic(f: &Formula) -> bool {
    matches!(f, Formula::True | Formula::False | Formula::Var(_) | Formula::Not(_))
}

/// FOF problem text: one `fof(axN, axiom, …)` per axiom, then
/// `fof(goal, conjecture, …)` when there is a conjecture.
pub fn emit_tptp(spec: &PropositionalSpec, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "% Problem  : {name}");
    let _ = writeln!(
        out,
        "% Flavor   : {} ({} variables, {} axioms)",
        spec.flavor,
        spec.variables.len(),
        spec.axioms.len()
    );
    for (i, ax) in spec.axioms.iter().enumerate() {
        let mut body = String::new();
        write_formula(ax, &spec.variables, &mut body);
        let _ = writeln!(out, "fof(ax{}, axiom, {body}).", i + 1);
    }
    if let Some(goal) = &spec.conjecture {
        let mut body = String::new();
        write_formula(goal, &spec.variables, &mut body);
        let _ = writeln!(out, "fof(goal, conjecture, {body}).");
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("TPTP syntax error at byte {offset}: {message}")]
pub struct TptpError {
    pub offset: usize,
    pub message: String,
}

/// A parsed propositional problem; formulas refer to `variables` by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TptpProblem {
    pub variables: Vec<String>,
    pub axioms: Vec<Formula>,
    pub conjectures: Vec<Formula>,
}

impl TptpProblem {
    /// The problem as a spec: several conjectures are read as their conjunction.
    pub fn into_spec(self) -> PropositionalSpec {
        let conjecture = match self.conjectures.len() {
            0 => None,
            1 => self.conjectures.into_iter().next(),
            _ => Some(Formula::And(self.conjectures)),
        };
        let flavor = if conjecture.is_some() {
            Property::Liv
        } else {
            Property::Sat
        };
        PropositionalSpec {
            variables: self.variables,
            axioms: self.axioms,
            conjecture,
            flavor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Dollar(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Not,
    And,
    Or,
    Implies,
    Implied,
    Iff,
    Xor,
    Nor,
    Nand,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, TptpError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |offset, message: &str| TptpError {
        offset,
        message: message.to_string(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'%' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let end = text[i + 2..]
                    .find("*/")
                    .ok_or_else(|| err(i, "unterminated comment"))?;
                i += end + 4;
            }
            b'(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            b',' => {
                out.push((start, Tok::Comma));
                i += 1;
            }
            b'.' => {
                out.push((start, Tok::Dot));
                i += 1;
            }
            b'&' => {
                out.push((start, Tok::And));
                i += 1;
            }
            b'|' => {
                out.push((start, Tok::Or));
                i += 1;
            }
            b'~' => {
                let (tok, len) = match bytes.get(i + 1) {
                    Some(b'|') => (Tok::Nor, 2),
                    Some(b'&') => (Tok::Nand, 2),
                    _ => (Tok::Not, 1),
                };
                out.push((start, tok));
                i += len;
            }
            b'=' if bytes.get(i + 1) == Some(&b'>') => {
                out.push((start, Tok::Implies));
                i += 2;
            }
            b'<' => {
                let rest = &text[i..];
                let (tok, len) = if rest.starts_with("<=>") {
                    (Tok::Iff, 3)
                } else if rest.starts_with("<~>") {
                    (Tok::Xor, 3)
                } else if rest.starts_with("<=") {
                    (Tok::Implied, 2)
                } else {
                    return Err(err(i, "unknown connective"));
                };
                out.push((start, tok));
                i += len;
            }
            b'$' | b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_' => {
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = text[start..i].to_string();
                if let Some(d) = word.strip_prefix('$') {
                    out.push((start, Tok::Dollar(d.to_string())));
                } else {
                    out.push((start, Tok::Word(word)));
                }
            }
            b'\'' => {
                i += 1;
                while i < bytes.len() && bytes[i] != b'\'' {
                    i += if bytes[i] == b'\\' { 2 } else { 1 };
                }
                if i >= bytes.len() {
                    return Err(err(start, "unterminated quoted name"));
                }
                i += 1;
                out.push((start, Tok::Word(text[start..i].to_string())));
            }
            _ => return Err(err(i, "unexpected character")),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    vars: HashMap<String, usize>,
    names: Vec<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, TptpError> {
        Err(TptpError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), TptpError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {tok:?}"))
        }
    }

    fn word(&mut self) -> Result<String, TptpError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.fail("expected a name"),
        }
    }

    fn formula(&mut self) -> Result<Formula, TptpError> {
        let first = self.unitary()?;
        match self.peek() {
            Some(Tok::And) | Some(Tok::Or) => {
                let is_and = self.peek() == Some(&Tok::And);
                let op = self.peek().cloned();
                let mut parts = vec![first];
                while self.peek() == op.as_ref() {
                    self.pos += 1;
                    parts.push(self.unitary()?);
                }
                if matches!(
                    self.peek(),
                    Some(Tok::And | Tok::Or | Tok::Implies | Tok::Implied | Tok::Iff | Tok::Xor | Tok::Nor | Tok::Nand)
                ) {
                    return self.fail("mixed connectives need parentheses");
                }
                Ok(if is_and { Formula::And(parts) } else { Formula::Or(parts) })
            }
            Some(Tok::Implies | Tok::Implied | Tok::Iff | Tok::Xor | Tok::Nor | Tok::Nand) => {
                let op = self.peek().cloned().expect("matched");
                self.pos += 1;
                let second = self.unitary()?;
                Ok(match op {
                    Tok::Implies => Formula::implies(first, second),
                    Tok::Implied => Formula::implies(second, first),
                    Tok::Iff => Formula::iff(first, second),
                    Tok::Xor => Formula::not(Formula::iff(first, second)),
                    Tok::Nor => Formula::not(Formula::Or(vec![first, second])),
                    Tok::Nand => Formula::not(Formula::And(vec![first, second])),
                    _ => unreachable!(),
                })
            }
            _ => Ok(first),
        }
    }

    fn unitary(&mut self) -> Result<Formula, TptpError> {
        match self.peek().cloned() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Formula::not(self.unitary()?))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.formula()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Some(Tok::Dollar(d)) => {
                self.pos += 1;
                match d.as_str() {
                    "true" => Ok(Formula::True),
                    "false" => Ok(Formula::False),
                    other => self.fail(format!("unsupported defined symbol ${other}")),
                }
            }
            Some(Tok::Word(w)) => {
                if w.starts_with(|c: char| c.is_ascii_uppercase()) {
                    return self.fail("variables are outside the propositional fragment");
                }
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    return self.fail("non-nullary predicates are outside the propositional fragment");
                }
                let next = self.names.len();
                let id = *self.vars.entry(w.clone()).or_insert(next);
                if id == next {
                    self.names.push(w);
                }
                Ok(Formula::Var(id))
            }
            _ => self.fail("expected a formula"),
        }
    }
}

pub fn parse_tptp(text: &str) -> Result<TptpProblem, TptpError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        vars: HashMap::new(),
        names: Vec::new(),
    };
    let mut axioms = Vec::new();
    let mut conjectures = Vec::new();
    while p.peek().is_some() {
        let kind = p.word()?;
        if kind != "fof" {
            return p.fail(format!("unsupported annotated formula kind {kind:?}"));
        }
        p.expect(Tok::LParen)?;
        p.word()?;
        p.expect(Tok::Comma)?;
        let role = p.word()?;
        p.expect(Tok::Comma)?;
        let f = p.formula()?;
        // annotations (source, useful info) are skipped
        let mut depth = 0usize;
        loop {
            match p.peek() {
                Some(Tok::LParen) => depth += 1,
                Some(Tok::RParen) if depth == 0 => break,
                Some(Tok::RParen) => depth -= 1,
                None => return p.fail("unterminated fof"),
                _ => {}
            }
            p.pos += 1;
        }
        p.expect(Tok::RParen)?;
        p.expect(Tok::Dot)?;
        match role.as_str() {
            "axiom" | "hypothesis" | "definition" | "assumption" | "lemma" | "theorem" => axioms.push(f),
            "conjecture" => conjectures.push(f),
            "negated_conjecture" => axioms.push(f),
            other => return p.fail(format!("unsupported role {other:?}")),
        }
    }
    Ok(TptpProblem {
        variables: p.names,
        axioms,
        conjectures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::encode::encode;
    use crate::oracle::PropertySpec;
    use crate::process_tree::{Node, ProcessTree};

    #[test]
    fn empty_problem_is_header_only() {
        let spec = PropositionalSpec {
            variables: vec![],
            axioms: vec![],
            conjecture: None,
            flavor: Property::Sat,
        };
        let text = emit_tptp(&spec, "empty");
        assert!(text.lines().all(|l| l.starts_with('%')));
        assert_eq!(parse_tptp(&text).unwrap().axioms.len(), 0);
    }

    #[test]
    fn emission_is_deterministic_and_parses_back() {
        let t = ProcessTree::new(Node::seq(vec![
            Node::activity("a"),
            Node::looping(Node::xor(vec![Node::activity("b"), Node::tau()]), Node::activity("a")),
        ]))
        .unwrap();
        let spec = encode(&t, &PropertySpec::saf("a", "b")).unwrap();
        let text = emit_tptp(&spec, "p1");
        assert_eq!(text, emit_tptp(&encode(&t, &PropertySpec::saf("a", "b")).unwrap(), "p1"));
        let parsed = parse_tptp(&text).unwrap();
        assert_eq!(parsed.axioms.len(), spec.axioms.len());
        assert_eq!(parsed.conjectures.len(), 1);
        // same semantics after renumbering
        let round = parsed.into_spec();
        assert_eq!(
            crate::logic::decide(&round),
            crate::logic::decide(&spec)
        );
    }

    #[test]
    fn reader_rejects_mixed_connectives() {
        assert!(parse_tptp("fof(a, axiom, p & q | r).").is_err());
        assert!(parse_tptp("fof(a, axiom, (p & q) | r).").is_ok());
        assert!(parse_tptp("fof(a, axiom, p(X)).").is_err());
        assert!(parse_tptp("fof(a, axiom, p").is_err());
    }

    #[test]
    fn reader_handles_other_connectives() {
        let p = parse_tptp("/* c */ fof(a, axiom, (p <~> q)). fof(b, axiom, p <= q). fof(c, hypothesis, p ~| $false, file('x', y)).").unwrap();
        assert_eq!(p.axioms.len(), 3);
        assert_eq!(p.variables, ["p", "q"]);
    }
}

use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use super::encode::encode;
use super::tptp::emit_tptp;
use crate::oracle::{OracleError, Property, PropertySpec};
use crate::process_tree::{Coalition, NodeKind, ProcessTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SzsStatus {
    Theorem,
    /// Axioms alone are contradictory; entailment holds vacuously.
    ContradictoryAxioms,
    CounterSatisfiable,
    Satisfiable,
    Unsatisfiable,
    Timeout,
    GaveUp,
    Unknown,
    Error,
}

impl fmt::Display for SzsStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for SzsStatus {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "Theorem" | "Equivalent" | "TautologousConclusion" => SzsStatus::Theorem,
            "ContradictoryAxioms" => SzsStatus::ContradictoryAxioms,
            "CounterSatisfiable" | "CounterTheorem" => SzsStatus::CounterSatisfiable,
            "Satisfiable" => SzsStatus::Satisfiable,
            "Unsatisfiable" => SzsStatus::Unsatisfiable,
            "Timeout" | "ResourceOut" => SzsStatus::Timeout,
            "GaveUp" | "Incomplete" | "MemoryOut" => SzsStatus::GaveUp,
            "Unknown" => SzsStatus::Unknown,
            "Error" | "InputError" | "SyntaxError" | "OSError" | "UsageError" => SzsStatus::Error,
            _ => return Err(()),
        })
    }
}

/// First `SZS status <Status>` line of prover output; `Unknown` when absent.
pub fn parse_szs_status(output: &str) -> SzsStatus {
    for line in output.lines() {
        if let Some(pos) = line.find("SZS status ") {
            let word = line[pos + "SZS status ".len()..]
                .split_whitespace()
                .next()
                .unwrap_or("");
            if let Ok(status) = word.parse() {
                return status;
            }
        }
    }
    SzsStatus::Unknown
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownPolicy {
    /// Value 0 and one warning.
    #[default]
    TreatAsZero,
    Abort,
}

impl FromStr for UnknownPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "treat-as-0" | "treat-as-zero" => Ok(UnknownPolicy::TreatAsZero),
            "abort" => Ok(UnknownPolicy::Abort),
            other => Err(format!("unknown policy {other:?} (expected treat-as-0|abort)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProverConfig {
    pub executable: PathBuf,
    pub timeout: Duration,
    /// Passed before the problem file path.
    pub args: Vec<String>,
    pub unknown_policy: UnknownPolicy,
    /// When set, every emitted problem is also written here as `<name>.p`.
    pub dump_dir: Option<PathBuf>,
}

impl ProverConfig {
    pub fn new(executable: impl Into<PathBuf>) -> Self {
        ProverConfig {
            executable: executable.into(),
            timeout: Duration::from_millis(2000),
            args: Vec::new(),
            unknown_policy: UnknownPolicy::default(),
            dump_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ProverError {
    #[error("cannot run prover {path}: {source}")]
    Spawn {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("prover I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("prover timeout must be positive")]
    ZeroTimeout,
    #[error("prover returned {status} on {problem}")]
    Inconclusive { status: SzsStatus, problem: String },
}

/// Runs the prover on `problem` (written to a temporary `.p` file) and
/// returns the first SZS status it prints. A run exceeding the timeout is
/// killed and reported as [`SzsStatus::Timeout`].
pub fn run_prover(problem: &str, config: &ProverConfig) -> Result<SzsStatus, ProverError> {
    if config.timeout.is_zero() {
        return Err(ProverError::ZeroTimeout);
    }
    let mut file = tempfile::Builder::new().suffix(".p").tempfile()?;
    file.write_all(problem.as_bytes())?;
    file.flush()?;

    let mut child = Command::new(&config.executable)
        .args(&config.args)
        .arg(file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| ProverError::Spawn {
            path: config.executable.display().to_string(),
            source,
        })?;

    let drain = |pipe: Option<Box<dyn Read + Send>>| {
        thread::spawn(move || {
            let mut text = String::new();
            if let Some(mut p) = pipe {
                let mut raw = Vec::new();
                let _ = p.read_to_end(&mut raw);
                text = String::from_utf8_lossy(&raw).into_owned();
            }
            text
        })
    };
    let stdout = drain(child.stdout.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
    let stderr = drain(child.stderr.take().map(|p| Box::new(p) as Box<dyn Read + Send>));

    let finished = child.wait_timeout(config.timeout)?;
    if finished.is_none() {
        let _ = child.kill();
        let _ = child.wait();
        // readers are left detached: grandchildren may still hold the pipes
        drop((stdout, stderr));
        return Ok(SzsStatus::Timeout);
    }
    let out = stdout.join().unwrap_or_default();
    let err = stderr.join().unwrap_or_default();
    match parse_szs_status(&out) {
        SzsStatus::Unknown => Ok(parse_szs_status(&err)),
        status => Ok(status),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProverOutcome {
    pub value: bool,
    /// An inconclusive status was mapped to 0.
    pub warned: bool,
}

fn problem_name(tree_c: &ProcessTree, property: Property) -> String {
    let survivors = Coalition::from_indices(
        tree_c
            .nodes()
            .into_iter()
            .filter(|n| n.kind != NodeKind::Removed)
            .map(|n| n.index),
    );
    format!("wfshap_{property}_{:032x}", survivors.0)
}

fn prove_flavor(
    tree_c: &ProcessTree,
    spec: &PropertySpec,
    config: &ProverConfig,
) -> Result<(String, SzsStatus), OracleError> {
    let encoded = encode(tree_c, spec)?;
    let name = problem_name(tree_c, spec.property);
    let text = emit_tptp(&encoded, &name);
    if let Some(dir) = &config.dump_dir {
        std::fs::create_dir_all(dir).map_err(ProverError::from)?;
        std::fs::write(dir.join(format!("{name}.p")), &text).map_err(ProverError::from)?;
    }
    Ok((name, run_prover(&text, config)?))
}

/// Maps prover verdicts to a coalition value.
///
/// sat needs `Satisfiable`; liv needs sat and `Theorem` for the liveness
/// conjecture (an inconsistent premise set would otherwise entail it); saf
/// needs `Theorem`. Other statuses follow the unknown policy.
pub fn value_via_prover(
    tree_c: &ProcessTree,
    spec: &PropertySpec,
    config: &ProverConfig,
) -> Result<ProverOutcome, OracleError> {
    let inconclusive = |name: String, status| match config.unknown_policy {
        UnknownPolicy::TreatAsZero => Ok(ProverOutcome {
            value: false,
            warned: true,
        }),
        UnknownPolicy::Abort => Err(OracleError::Prover(ProverError::Inconclusive { status, problem: name })),
    };
    let definite = |value| {
        Ok(ProverOutcome {
            value,
            warned: false,
        })
    };
    let entailment = |name: String, status| match status {
        SzsStatus::Theorem | SzsStatus::ContradictoryAxioms => definite(true),
        SzsStatus::CounterSatisfiable => definite(false),
        other => inconclusive(name, other),
    };
    match spec.property {
        Property::Sat => {
            let (name, status) = prove_flavor(tree_c, spec, config)?;
            match status {
                SzsStatus::Satisfiable => definite(true),
                SzsStatus::Unsatisfiable | SzsStatus::ContradictoryAxioms => definite(false),
                other => inconclusive(name, other),
            }
        }
        Property::Liv => {
            let sat = value_via_prover(tree_c, &spec.for_property(Property::Sat), config)?;
            if !sat.value {
                return Ok(sat);
            }
            let (name, status) = prove_flavor(tree_c, spec, config)?;
            entailment(name, status)
        }
        Property::Saf => {
            let (name, status) = prove_flavor(tree_c, spec, config)?;
            entailment(name, status)
        }
    }
}

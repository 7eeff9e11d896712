//! Configuration sweeps (noise level × property) and their report files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{
    adaptive_nodes, classify, jaccard, noise_correlation, quality_perspectives, summarize_attributions, top_k,
    AdaptiveNode, AttributionSummary, DiagnosticsConfig, NoiseSeries, PerspectiveRow,
};
use crate::event_log::{read_xes_file, EventLog, XesError};
use crate::miner::{discover, MinerConfig};
use crate::oracle::{Backend, CacheCounters, Evaluator, Property, PropertySpec, TauMode};
use crate::process_tree::{export_dot, Coalition, NodeKind, ProcessTree};
use crate::shapley::{estimate, Game, Method, MethodKind, ShapleyEstimate};

pub const DEFAULT_NOISE_LEVELS: [f64; 4] = [0.0, 0.25, 0.5, 1.0];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Xes(#[from] XesError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}:{line}: {message}")]
    ConfigFile { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub log: PathBuf,
    pub classifier: String,
    pub noise_levels: Vec<f64>,
    pub properties: Vec<PropertySpec>,
    pub method: Method,
    /// Extra estimator runs per configuration, compared against `method`.
    pub comparisons: Vec<Method>,
    pub backend: Backend,
    pub diagnostics: DiagnosticsConfig,
    pub max_depth: usize,
}

impl RunConfig {
    pub fn new(log: impl Into<PathBuf>, properties: Vec<PropertySpec>, method: Method) -> Self {
        RunConfig {
            log: log.into(),
            classifier: crate::event_log::DEFAULT_CLASSIFIER.to_string(),
            noise_levels: DEFAULT_NOISE_LEVELS.to_vec(),
            properties,
            method,
            comparisons: Vec::new(),
            backend: Backend::Oracle,
            diagnostics: DiagnosticsConfig::standard(),
            max_depth: MinerConfig::default().max_depth,
        }
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        if self.noise_levels.is_empty() {
            return Err(ReportError::Config("at least one noise level is required".into()));
        }
        if self.properties.is_empty() {
            return Err(ReportError::Config("at least one property is required".into()));
        }
        let mut seen = BTreeSet::new();
        for &n in &self.noise_levels {
            if !(0.0..=1.0).contains(&n) {
                return Err(ReportError::Config(format!("noise level {n} outside [0, 1]")));
            }
            if !seen.insert(n.to_bits()) {
                return Err(ReportError::Config(format!("noise level {n} listed twice")));
            }
        }
        Ok(())
    }

    /// Warnings about option combinations that make results degenerate.
    pub fn warnings(&self) -> Vec<String> {
        self.properties
            .iter()
            .filter(|p| p.mode == TauMode::Skip && p.property != Property::Saf)
            .map(|p| {
                format!(
                    "skip mode makes removed nodes complete silently, so {} is 1 for every coalition and all values are 0",
                    p.property
                )
            })
            .collect()
    }

    pub fn dataset(&self) -> String {
        dataset_name(&self.log)
    }
}

/// File name without `.xes` / `.xes.gz`.
pub fn dataset_name(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let name = name.strip_suffix(".gz").unwrap_or(&name);
    name.strip_suffix(".xes").unwrap_or(name).to_string()
}

pub fn config_id(dataset: &str, noise: f64, property: Property) -> String {
    format!("{dataset}_noise{noise}_{property}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub kind: String,
    pub executable: Option<String>,
    pub timeout_ms: Option<u64>,
}

impl BackendInfo {
    pub fn of(backend: &Backend) -> Self {
        match backend {
            Backend::Oracle => BackendInfo {
                kind: "oracle".into(),
                executable: None,
                timeout_ms: None,
            },
            Backend::Prover(p) => BackendInfo {
                kind: "prover".into(),
                executable: Some(p.executable.display().to_string()),
                timeout_ms: Some(p.timeout.as_millis() as u64),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAttribution {
    pub index: usize,
    pub id: String,
    /// Name used to match the node across trees mined at other noise levels.
    pub key: String,
    pub phi: f64,
    /// Exact value as a fraction, when computed exactly.
    pub exact: Option<String>,
    pub rank: usize,
    pub class: String,
    pub sign: String,
    pub harmful: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMeta {
    pub method: MethodKind,
    pub seed: Option<u64>,
    pub samples: u64,
    pub delta_max: Option<f64>,
    pub checkpoints: usize,
    /// First checkpoint whose Δ_max fell below 0.01.
    pub converged_at: Option<u64>,
}

impl MethodMeta {
    fn of(est: &ShapleyEstimate, conv: Option<&crate::shapley::ConvergenceReport>) -> Self {
        MethodMeta {
            method: est.method,
            seed: est.seed,
            samples: est.samples.iter().copied().max().unwrap_or(0),
            delta_max: conv.and_then(|c| c.delta_max),
            checkpoints: conv.map_or(0, |c| c.checkpoints.len()),
            converged_at: conv.and_then(|c| c.first_below(0.01)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub meta: MethodMeta,
    pub top_k: Vec<String>,
    pub jaccard_top_k: f64,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub tree: String,
    pub tree_debug: String,
    pub node_count: usize,
    pub value_full: bool,
    pub value_empty: bool,
    pub nodes: Vec<NodeAttribution>,
    pub meta: MethodMeta,
    pub counters: CacheCounters,
    pub top_k: Vec<String>,
    pub summary: AttributionSummary,
    pub perspectives: Vec<PerspectiveRow>,
    pub comparisons: Vec<Comparison>,
}

impl Attribution {
    pub fn mean_abs_phi(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        self.nodes.iter().map(|n| n.phi.abs()).sum::<f64>() / self.nodes.len() as f64
    }

    pub fn phi_by_key(&self) -> BTreeMap<String, f64> {
        self.nodes.iter().map(|n| (n.key.clone(), n.phi)).collect()
    }

    pub fn top_k_keys(&self) -> BTreeSet<&str> {
        self.top_k
            .iter()
            .filter_map(|id| self.nodes.iter().find(|n| &n.id == id))
            .map(|n| n.key.as_str())
            .collect()
    }

    pub fn phi_by_index(&self) -> BTreeMap<usize, f64> {
        self.nodes.iter().map(|n| (n.index, n.phi)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigResult {
    pub id: String,
    pub dataset: String,
    pub noise: f64,
    pub spec: PropertySpec,
    pub attribution: Option<Attribution>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEntry {
    pub property: Property,
    pub noise_a: f64,
    pub noise_b: f64,
    pub jaccard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub property: Property,
    pub points: Vec<(f64, f64)>,
    pub r: Option<f64>,
    pub zero_variance: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveEntry {
    pub property: Property,
    pub baseline: f64,
    pub nodes: Vec<AdaptiveNode<String>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub dataset: String,
    pub log: String,
    pub traces: usize,
    pub events: usize,
    pub noise_levels: Vec<f64>,
    pub properties: Vec<PropertySpec>,
    pub method: Option<Method>,
    pub backend: Option<BackendInfo>,
    pub diagnostics: DiagnosticsConfig,
    pub warnings: Vec<String>,
    pub configurations: Vec<ConfigResult>,
    pub stability: Vec<StabilityEntry>,
    pub noise_correlations: Vec<CorrelationEntry>,
    pub adaptive: Vec<AdaptiveEntry>,
}

impl AttributionReport {
    pub fn empty() -> Self {
        AttributionReport {
            dataset: String::new(),
            log: String::new(),
            traces: 0,
            events: 0,
            noise_levels: Vec::new(),
            properties: Vec::new(),
            method: None,
            backend: None,
            diagnostics: DiagnosticsConfig::standard(),
            warnings: Vec::new(),
            configurations: Vec::new(),
            stability: Vec::new(),
            noise_correlations: Vec::new(),
            adaptive: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Activity leaves whose label occurs once are keyed by the label; every
/// other node by its id text.
pub fn match_keys(tree: &ProcessTree) -> Vec<String> {
    let nodes = tree.nodes();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for n in &nodes {
        if let NodeKind::Activity(l) = &n.kind {
            *counts.entry(l.as_str()).or_default() += 1;
        }
    }
    nodes
        .iter()
        .map(|n| match &n.kind {
            NodeKind::Activity(l) if counts[l.as_str()] == 1 => l.clone(),
            _ => n.id_text(),
        })
        .collect()
}

/// Mines, attributes and diagnoses one tree under one property.
pub fn attribute(
    tree: Arc<ProcessTree>,
    spec: &PropertySpec,
    method: &Method,
    comparisons: &[Method],
    backend: &Backend,
    diagnostics: &DiagnosticsConfig,
) -> anyhow::Result<Attribution> {
    let evaluator = Evaluator::new(tree.clone(), spec.clone(), backend.clone());
    let game = Game::from_evaluator(&evaluator)?;
    let (est, conv) = estimate(&game, method)?;
    let counters = evaluator.cache.counters();
    let full = tree.full_coalition()?;
    let value_full = evaluator.value(full)?;
    let value_empty = evaluator.value(Coalition::EMPTY)?;

    let values = est.by_player();
    let ids = tree.node_ids();
    let keys = match_keys(&tree);
    let classification = classify(&values, diagnostics);
    let ranking = top_k(&values, values.len());
    let rank_of: BTreeMap<usize, usize> = ranking.iter().enumerate().map(|(r, &n)| (n, r + 1)).collect();
    let exact: Option<Vec<String>> = est.exact.as_ref().map(|v| v.iter().map(|r| r.to_string()).collect());
    let nodes = est
        .players
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let verdict = classification.nodes[&i];
            NodeAttribution {
                index: i,
                id: ids[i].text.clone(),
                key: keys[i].clone(),
                phi: est.phi[k] + 0.0,
                exact: exact.as_ref().map(|e| e[k].clone()),
                rank: rank_of[&i],
                class: verdict.class.to_string(),
                sign: verdict.sign.to_string(),
                harmful: verdict.harmful,
            }
        })
        .collect();
    let top: Vec<usize> = ranking.iter().copied().take(diagnostics.top_k).collect();
    let top_set: BTreeSet<usize> = top.iter().copied().collect();

    let mut compared = Vec::new();
    for m in comparisons {
        let (other, oconv) = estimate(&game, m)?;
        let ov = other.by_player();
        let otop = top_k(&ov, diagnostics.top_k);
        let max_abs_diff = values
            .iter()
            .map(|(k, v)| (v - ov.get(k).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max);
        compared.push(Comparison {
            meta: MethodMeta::of(&other, oconv.as_ref()),
            jaccard_top_k: jaccard(&top_set, &otop.iter().copied().collect()),
            top_k: otop.iter().map(|&i| ids[i].text.clone()).collect(),
            max_abs_diff,
        });
    }

    Ok(Attribution {
        tree: tree.to_string(),
        tree_debug: tree.to_debug_string(),
        node_count: tree.size(),
        value_full,
        value_empty,
        nodes,
        meta: MethodMeta::of(&est, conv.as_ref()),
        counters,
        top_k: top.iter().map(|&i| ids[i].text.clone()).collect(),
        summary: summarize_attributions(&values, &tree),
        perspectives: quality_perspectives(&values).into_iter().map(|(r, _)| r).collect(),
        comparisons: compared,
    })
}

/// Runs every (noise level, property) configuration and the cross analyses.
pub fn run_matrix(config: &RunConfig) -> Result<AttributionReport, ReportError> {
    config.validate()?;
    let log = read_xes_file(&config.log, &config.classifier)?;
    Ok(run_matrix_on_log(config, &log))
}

pub fn run_matrix_on_log(config: &RunConfig, log: &EventLog) -> AttributionReport {
    let dataset = config.dataset();
    let trees: Vec<Result<Arc<ProcessTree>, String>> = config
        .noise_levels
        .par_iter()
        .map(|&noise| {
            let miner = MinerConfig::with_noise(noise).map_err(|e| e.to_string())?;
            let miner = MinerConfig {
                max_depth: config.max_depth,
                ..miner
            };
            discover(log, &miner).map(Arc::new).map_err(|e| e.to_string())
        })
        .collect();

    let jobs: Vec<(usize, &PropertySpec)> = (0..config.noise_levels.len())
        .flat_map(|i| config.properties.iter().map(move |p| (i, p)))
        .collect();
    let configurations: Vec<ConfigResult> = jobs
        .par_iter()
        .map(|&(i, spec)| {
            let noise = config.noise_levels[i];
            let backend = match &config.backend {
                Backend::Prover(p) => {
                    let mut p = p.clone();
                    if let Some(dir) = &p.dump_dir {
                        p.dump_dir = Some(dir.join(config_id(&dataset, noise, spec.property)));
                    }
                    Backend::Prover(p)
                }
                b => b.clone(),
            };
            let outcome = trees[i].clone().and_then(|tree| {
                attribute(
                    tree,
                    spec,
                    &config.method,
                    &config.comparisons,
                    &backend,
                    &config.diagnostics,
                )
                .map_err(|e| format!("{e:#}"))
            });
            let (attribution, error) = match outcome {
                Ok(a) => (Some(a), None),
                Err(e) => (None, Some(e)),
            };
            ConfigResult {
                id: config_id(&dataset, noise, spec.property),
                dataset: dataset.clone(),
                noise,
                spec: spec.clone(),
                attribution,
                error,
            }
        })
        .collect();

    let mut report = AttributionReport {
        dataset: dataset.clone(),
        log: config.log.display().to_string(),
        traces: log.len(),
        events: log.event_count(),
        noise_levels: config.noise_levels.clone(),
        properties: config.properties.clone(),
        method: Some(config.method),
        backend: Some(BackendInfo::of(&config.backend)),
        diagnostics: config.diagnostics,
        warnings: config.warnings(),
        configurations,
        stability: Vec::new(),
        noise_correlations: Vec::new(),
        adaptive: Vec::new(),
    };
    cross_analyses(&mut report);
    report
}

fn cross_analyses(report: &mut AttributionReport) {
    let baseline = report.noise_levels.iter().copied().fold(f64::INFINITY, f64::min);
    for spec in &report.properties {
        let done: Vec<(f64, &Attribution)> = report
            .configurations
            .iter()
            .filter(|c| &c.spec == spec)
            .filter_map(|c| c.attribution.as_ref().map(|a| (c.noise, a)))
            .collect();
        for (i, (na, a)) in done.iter().enumerate() {
            for (nb, b) in &done[i + 1..] {
                let (sa, sb) = (a.top_k_keys(), b.top_k_keys());
                report.stability.push(StabilityEntry {
                    property: spec.property,
                    noise_a: *na,
                    noise_b: *nb,
                    jaccard: jaccard(&sa, &sb),
                });
            }
        }

        let points: Vec<(f64, f64)> = done.iter().map(|(n, a)| (*n, a.mean_abs_phi())).collect();
        let corr = NoiseSeries::new(points.clone()).and_then(|s| noise_correlation(&s));
        report.noise_correlations.push(match corr {
            Ok(c) => CorrelationEntry {
                property: spec.property,
                points,
                r: Some(c.r),
                zero_variance: c.zero_variance,
                error: None,
            },
            Err(e) => CorrelationEntry {
                property: spec.property,
                points,
                r: None,
                zero_variance: false,
                error: Some(e.to_string()),
            },
        });

        let per_noise: Vec<(f64, BTreeMap<String, f64>)> = done.iter().map(|(n, a)| (*n, a.phi_by_key())).collect();
        report.adaptive.push(match adaptive_nodes(&per_noise, baseline, &report.diagnostics) {
            Ok(nodes) => AdaptiveEntry {
                property: spec.property,
                baseline,
                nodes,
                error: None,
            },
            Err(e) => AdaptiveEntry {
                property: spec.property,
                baseline,
                nodes: Vec::new(),
                error: Some(e.to_string()),
            },
        });
    }
}

/// Plain-text digest of a report.
pub fn render_summary(report: &AttributionReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "dataset {} ({} traces, {} events), {} configurations\n",
        report.dataset,
        report.traces,
        report.events,
        report.configurations.len()
    ));
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    for c in &report.configurations {
        out.push_str(&format!("\n[{}]\n", c.id));
        let Some(a) = &c.attribution else {
            out.push_str(&format!("  error: {}\n", c.error.as_deref().unwrap_or("unknown")));
            continue;
        };
        out.push_str(&format!("  tree: {}\n", a.tree));
        out.push_str(&format!(
            "  v(N)={} v(empty)={} method={} samples={}",
            a.value_full as u8, a.value_empty as u8, a.meta.method, a.meta.samples
        ));
        if let Some(seed) = a.meta.seed {
            out.push_str(&format!(" seed={seed}"));
        }
        if let Some(d) = a.meta.delta_max {
            out.push_str(&format!(" delta_max={d:.4}"));
        }
        out.push('\n');
        out.push_str(&format!(
            "  queries: {} total, {} distinct, {} warnings\n",
            a.counters.total_queries, a.counters.distinct_queries, a.counters.warnings
        ));
        out.push_str("  top:");
        for id in &a.top_k {
            let phi = a.nodes.iter().find(|n| &n.id == id).map_or(0.0, |n| n.phi);
            out.push_str(&format!(" {id}={phi:.4}"));
        }
        out.push('\n');
        out.push_str(&format!(
            "  positive {} (sum {:.4}), negative {} (sum {:.4}), zero {}\n",
            a.summary.positive, a.summary.positive_sum, a.summary.negative, a.summary.negative_sum, a.summary.zero
        ));
        if let Some(d) = &a.summary.dominant {
            out.push_str(&format!("  dominant operator: {d}\n"));
        }
        for p in &a.perspectives {
            out.push_str(&format!(
                "  {:<8} critical {} ({:.1}%), neutral {} ({:.1}%), redundant {} ({:.1}%)\n",
                p.perspective, p.critical, p.critical_pct, p.neutral, p.neutral_pct, p.redundant, p.redundant_pct
            ));
        }
        for cmp in &a.comparisons {
            out.push_str(&format!(
                "  vs {} seed={:?}: top-k jaccard {:.3}, max |diff| {:.4}\n",
                cmp.meta.method, cmp.meta.seed, cmp.jaccard_top_k, cmp.max_abs_diff
            ));
        }
    }
    if !report.stability.is_empty() {
        out.push_str("\nstability across noise levels (top-k jaccard)\n");
        for s in &report.stability {
            out.push_str(&format!("  {} {} vs {}: {:.3}\n", s.property, s.noise_a, s.noise_b, s.jaccard));
        }
    }
    if !report.noise_correlations.is_empty() {
        out.push_str("\nnoise vs mean |phi|\n");
        for c in &report.noise_correlations {
            match (c.r, &c.error) {
                (Some(r), _) if c.zero_variance => out.push_str(&format!("  {}: r={r:.3} (zero variance)\n", c.property)),
                (Some(r), _) => out.push_str(&format!("  {}: r={r:.3}\n", c.property)),
                (None, e) => out.push_str(&format!("  {}: n/a ({})\n", c.property, e.as_deref().unwrap_or(""))),
            }
        }
    }
    if !report.adaptive.is_empty() {
        out.push_str("\nadaptive nodes\n");
        for a in &report.adaptive {
            if let Some(e) = &a.error {
                out.push_str(&format!("  {}: n/a ({e})\n", a.property));
                continue;
            }
            out.push_str(&format!("  {} (baseline {}): {}\n", a.property, a.baseline, a.nodes.len()));
            for n in &a.nodes {
                out.push_str(&format!("    {}: {}\n", n.node, n.reasons.join("; ")));
            }
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes report.json, rankings.csv, noise_series.csv, summary.txt and one
/// DOT file per successful configuration. Returns the written paths.
pub fn emit_report(report: &AttributionReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let json = dir.join("report.json");
    write_file(&json, &report.to_json())?;
    written.push(json);

    let rankings = dir.join("rankings.csv");
    let mut w = csv::Writer::from_path(&rankings).map_err(csv_err(&rankings))?;
    w.write_record(["config", "node_id", "phi", "abs_phi", "rank", "class", "sign"])
        .map_err(csv_err(&rankings))?;
    for c in &report.configurations {
        let Some(a) = &c.attribution else { continue };
        let mut rows: Vec<&NodeAttribution> = a.nodes.iter().collect();
        rows.sort_by_key(|n| n.rank);
        for n in rows {
            w.write_record([
                c.id.as_str(),
                &n.id,
                &n.phi.to_string(),
                &n.phi.abs().to_string(),
                &n.rank.to_string(),
                &n.class,
                &n.sign,
            ])
            .map_err(csv_err(&rankings))?;
        }
    }
    w.flush().map_err(io_err(&rankings))?;
    written.push(rankings);

    let series = dir.join("noise_series.csv");
    let mut w = csv::Writer::from_path(&series).map_err(csv_err(&series))?;
    w.write_record(["property", "noise", "series", "value"]).map_err(csv_err(&series))?;
    for c in &report.configurations {
        let Some(a) = &c.attribution else { continue };
        let (prop, noise) = (c.spec.property.to_string(), c.noise.to_string());
        w.write_record([prop.as_str(), &noise, "mean_abs_phi", &a.mean_abs_phi().to_string()])
            .map_err(csv_err(&series))?;
        for n in &a.nodes {
            w.write_record([prop.as_str(), &noise, &n.id, &n.phi.to_string()])
                .map_err(csv_err(&series))?;
        }
    }
    w.flush().map_err(io_err(&series))?;
    written.push(series);

    for c in &report.configurations {
        let Some(a) = &c.attribution else { continue };
        let tree = ProcessTree::parse_debug(&a.tree_debug)
            .map_err(|e| ReportError::Config(format!("{}: stored tree does not parse: {e}", c.id)))?;
        let path = dir.join(format!("tree_{}.dot", c.id));
        write_file(&path, &export_dot(&tree, &a.phi_by_index()))?;
        written.push(path);
    }

    let summary = dir.join("summary.txt");
    write_file(&summary, &render_summary(report))?;
    written.push(summary);
    Ok(written)
}

/// Reads a saved report.json.
pub fn load_report(path: &Path) -> Result<AttributionReport, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    AttributionReport::from_json(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped
/// and a later duplicate key replaces an earlier one.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config_text(&text).map_err(|(line, message)| ReportError::ConfigFile {
        path: path.to_path_buf(),
        line,
        message,
    })
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, (usize, String)> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| (no + 1, format!("expected key = value, got {line:?}")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err((no + 1, "empty key".into()));
        }
        out.insert(k.replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

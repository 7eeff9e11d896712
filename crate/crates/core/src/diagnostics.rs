//! Classification, rankings, stability and noise analyses over Shapley values.
//!
//! Thresholds are applied to `|φ|`; the sign is reported separately.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::process_tree::{NodeKind, ProcessTree};

/// Values closer to zero than this are treated as zero.
const ZERO_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("thresholds must satisfy 0 <= redundant ({redundant}) < critical ({critical})")]
    Thresholds { critical: f64, redundant: f64 },
    #[error("top_k must be at least 1")]
    ZeroK,
    #[error("correlation needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("noise level {0} appears more than once")]
    DuplicateNoise(f64),
    #[error("baseline noise level {0} has no values")]
    MissingBaseline(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub critical_threshold: f64,
    pub redundant_threshold: f64,
    pub top_k: usize,
    pub adaptive_magnitude: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig::standard()
    }
}

impl DiagnosticsConfig {
    pub fn new(critical: f64, redundant: f64, top_k: usize, adaptive_magnitude: f64) -> Result<Self, DiagnosticsError> {
        if !(0.0 <= redundant && redundant < critical) {
            return Err(DiagnosticsError::Thresholds { critical, redundant });
        }
        if top_k == 0 {
            return Err(DiagnosticsError::ZeroK);
        }
        Ok(DiagnosticsConfig {
            critical_threshold: critical,
            redundant_threshold: redundant,
            top_k,
            adaptive_magnitude,
        })
    }

    pub fn standard() -> Self {
        Self::thresholds(0.1, 0.01)
    }

    pub fn high_sensitivity() -> Self {
        Self::thresholds(0.05, 0.005)
    }

    pub fn low_sensitivity() -> Self {
        Self::thresholds(0.2, 0.02)
    }

    fn thresholds(critical: f64, redundant: f64) -> Self {
        DiagnosticsConfig {
            critical_threshold: critical,
            redundant_threshold: redundant,
            top_k: 5,
            adaptive_magnitude: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    Critical,
    Neutral,
    Redundant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
    Zero,
}

impl Sign {
    pub fn of(phi: f64) -> Sign {
        if phi > ZERO_EPS {
            Sign::Positive
        } else if phi < -ZERO_EPS {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeClass::Critical => "critical",
            NodeClass::Neutral => "neutral",
            NodeClass::Redundant => "redundant",
        })
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "positive",
            Sign::Negative => "negative",
            Sign::Zero => "zero",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeVerdict {
    pub class: NodeClass,
    pub sign: Sign,
    pub harmful: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub nodes: BTreeMap<usize, NodeVerdict>,
}

impl Classification {
    pub fn count(&self, class: NodeClass) -> usize {
        self.nodes.values().filter(|v| v.class == class).count()
    }

    pub fn of_class(&self, class: NodeClass) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter(|(_, v)| v.class == class)
            .map(|(&k, _)| k)
            .collect()
    }

    pub fn harmful(&self) -> BTreeSet<usize> {
        self.nodes.iter().filter(|(_, v)| v.harmful).map(|(&k, _)| k).collect()
    }
}

pub fn classify(values: &BTreeMap<usize, f64>, config: &DiagnosticsConfig) -> Classification {
    let nodes = values
        .iter()
        .map(|(&node, &phi)| {
            let mag = phi.abs();
            let class = if mag >= config.critical_threshold {
                NodeClass::Critical
            } else if mag <= config.redundant_threshold {
                NodeClass::Redundant
            } else {
                NodeClass::Neutral
            };
            let sign = Sign::of(phi);
            let harmful = sign == Sign::Negative && class != NodeClass::Redundant;
            (node, NodeVerdict { class, sign, harmful })
        })
        .collect();
    Classification { nodes }
}

/// Nodes by descending `|φ|`, ties by ascending index; at most `k`.
pub fn top_k(values: &BTreeMap<usize, f64>, k: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = values.iter().map(|(&n, &p)| (n, p.abs())).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(n, _)| n).collect()
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSeries {
    pub points: Vec<(f64, f64)>,
}

impl NoiseSeries {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, DiagnosticsError> {
        let mut seen: Vec<f64> = Vec::with_capacity(points.len());
        for &(noise, _) in &points {
            if seen.contains(&noise) {
                return Err(DiagnosticsError::DuplicateNoise(noise));
            }
            seen.push(noise);
        }
        Ok(NoiseSeries { points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub zero_variance: bool,
}

/// Pearson correlation between noise level and statistic.
pub fn noise_correlation(series: &NoiseSeries) -> Result<Correlation, DiagnosticsError> {
    let pts = &series.points;
    if pts.len() < 2 {
        return Err(DiagnosticsError::TooFewPoints(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pts {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    // relative tolerance so rounding noise in a flat series still counts as flat
    let flat = |s: f64, m: f64| s <= 1e-24 * (1.0 + m * m) * n;
    if flat(sxx, mx) || flat(syy, my) {
        return Ok(Correlation { r: 0.0, zero_variance: true });
    }
    Ok(Correlation {
        r: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        zero_variance: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorStat {
    pub count: usize,
    pub mean_abs_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub positive_sum: f64,
    pub negative_sum: f64,
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
    /// Keyed by `Seq`, `Xor`, `And`, `Loop` or `leaf`.
    pub by_operator: BTreeMap<String, OperatorStat>,
    /// Operator kind with the largest mean `|φ|` (ties by name).
    pub dominant: Option<String>,
}

pub fn operator_kind(kind: &NodeKind) -> String {
    match kind {
        NodeKind::Operator(op) => op.to_string(),
        _ => "leaf".to_string(),
    }
}

pub fn summarize_attributions(values: &BTreeMap<usize, f64>, tree: &ProcessTree) -> AttributionSummary {
    let mut s = AttributionSummary {
        positive_sum: 0.0,
        negative_sum: 0.0,
        positive: 0,
        negative: 0,
        zero: 0,
        by_operator: BTreeMap::new(),
        dominant: None,
    };
    let mut sums: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for (&node, &phi) in values {
        match Sign::of(phi) {
            Sign::Positive => {
                s.positive += 1;
                s.positive_sum += phi;
            }
            Sign::Negative => {
                s.negative += 1;
                s.negative_sum += phi;
            }
            Sign::Zero => s.zero += 1,
        }
        if let Some(n) = tree.node(node) {
            let e = sums.entry(operator_kind(&n.kind)).or_default();
            e.0 += 1;
            e.1 += phi.abs();
        }
    }
    s.by_operator = sums
        .into_iter()
        .map(|(k, (count, total))| {
            (
                k,
                OperatorStat {
                    count,
                    mean_abs_phi: total / count as f64,
                },
            )
        })
        .collect();
    s.dominant = s
        .by_operator
        .iter()
        .fold(None::<(&String, f64)>, |best, (k, st)| match best {
            Some((_, m)) if m >= st.mean_abs_phi => best,
            _ => Some((k, st.mean_abs_phi)),
        })
        .filter(|(_, m)| *m > ZERO_EPS)
        .map(|(k, _)| k.clone());
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveNode<K> {
    pub node: K,
    pub reasons: Vec<String>,
}

/// Flags nodes whose φ flips sign or moves by at least `adaptive_magnitude`
/// relative to the baseline level. A node missing at a level counts as φ = 0
/// there, so trees mined at different noise levels can be compared by id.
pub fn adaptive_nodes<K: Ord + Clone>(
    per_noise: &[(f64, BTreeMap<K, f64>)],
    baseline_noise: f64,
    config: &DiagnosticsConfig,
) -> Result<Vec<AdaptiveNode<K>>, DiagnosticsError> {
    let baseline = per_noise
        .iter()
        .find(|(n, _)| *n == baseline_noise)
        .map(|(_, v)| v)
        .ok_or(DiagnosticsError::MissingBaseline(baseline_noise))?;
    let keys: BTreeSet<&K> = per_noise.iter().flat_map(|(_, v)| v.keys()).collect();
    let mut out = Vec::new();
    for key in keys {
        let base = baseline.get(key).copied().unwrap_or(0.0);
        let mut reasons = Vec::new();
        for (noise, values) in per_noise {
            if *noise == baseline_noise {
                continue;
            }
            let phi = values.get(key).copied().unwrap_or(0.0);
            let (a, b) = (Sign::of(base), Sign::of(phi));
            if matches!((a, b), (Sign::Positive, Sign::Negative) | (Sign::Negative, Sign::Positive)) {
                reasons.push(format!("sign change at noise {noise}: {base:.4} -> {phi:.4}"));
            } else if (phi - base).abs() >= config.adaptive_magnitude - ZERO_EPS {
                reasons.push(format!("magnitude change at noise {noise}: {base:.4} -> {phi:.4}"));
            }
        }
        if !reasons.is_empty() {
            out.push(AdaptiveNode {
                node: key.clone(),
                reasons,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveRow {
    pub perspective: String,
    pub critical_threshold: f64,
    pub redundant_threshold: f64,
    pub critical: usize,
    pub neutral: usize,
    pub redundant: usize,
    pub critical_pct: f64,
    pub neutral_pct: f64,
    pub redundant_pct: f64,
}

pub fn perspectives() -> [(&'static str, DiagnosticsConfig); 3] {
    [
        ("standard", DiagnosticsConfig::standard()),
        ("high", DiagnosticsConfig::high_sensitivity()),
        ("low", DiagnosticsConfig::low_sensitivity()),
    ]
}

pub fn quality_perspectives(values: &BTreeMap<usize, f64>) -> Vec<(PerspectiveRow, Classification)> {
    let n = values.len();
    let pct = |c: usize| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
    perspectives()
        .into_iter()
        .map(|(name, cfg)| {
            let cls = classify(values, &cfg);
            let (c, m, r) = (
                cls.count(NodeClass::Critical),
                cls.count(NodeClass::Neutral),
                cls.count(NodeClass::Redundant),
            );
            let row = PerspectiveRow {
                perspective: name.to_string(),
                critical_threshold: cfg.critical_threshold,
                redundant_threshold: cfg.redundant_threshold,
                critical: c,
                neutral: m,
                redundant: r,
                critical_pct: pct(c),
                neutral_pct: pct(m),
                redundant_pct: pct(r),
            };
            (row, cls)
        })
        .collect()
}

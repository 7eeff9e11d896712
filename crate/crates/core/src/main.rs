use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wfshap::diagnostics::DiagnosticsConfig;
use wfshap::logic::{decide, parse_tptp, ProverConfig, UnknownPolicy};
use wfshap::process_tree::{export_dot, LoopBound};
use wfshap::report::{
    emit_report, load_report, parse_config_file, render_summary, run_matrix, RunConfig, DEFAULT_NOISE_LEVELS,
};
use wfshap::shapley::{McConfig, Method, MethodKind, RsConfig, DEFAULT_EXACT_LIMIT};
use wfshap::{discover, evaluate, read_xes_file, Backend, Coalition, MinerConfig, ProcessTree, Property, PropertySpec};
use wfshap::{TauMode, ValueCache};

#[derive(Parser)]
#[command(name = "wfshap", version, about = "Mine process trees, check properties and attribute verdicts to nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discover a process tree from an event log.
    Mine(Opts),
    /// Evaluate properties of a tree for one coalition.
    Verify {
        #[command(flatten)]
        opts: Opts,
        /// Tree in the indented debug format (instead of mining --log).
        #[arg(long)]
        tree: Option<PathBuf>,
        /// `all`, `none` or comma-separated node indices.
        #[arg(long, default_value = "all")]
        coalition: String,
    },
    /// Attribute one configuration (single noise level and property).
    Attribute(Opts),
    /// Run every noise level × property configuration.
    Matrix(Opts),
    /// Re-render report files from a saved report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide a propositional TPTP problem and print its SZS status.
    Prove { problem: PathBuf },
}

#[derive(Args, Default)]
struct Opts {
    /// key = value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    classifier: Option<String>,
    /// Comma-separated noise thresholds.
    #[arg(long)]
    noise: Option<String>,
    /// Comma-separated subset of sat,liv,saf.
    #[arg(long)]
    property: Option<String>,
    /// Activity pair A,B for saf.
    #[arg(long)]
    safety_pair: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    permutations: Option<u64>,
    /// Samples per player for rs.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also run the method with this seed and report top-k agreement.
    #[arg(long)]
    compare_seed: Option<u64>,
    /// Also run this method (same seed) and report top-k agreement.
    #[arg(long)]
    compare_method: Option<String>,
    #[arg(long)]
    early_stop: bool,
    #[arg(long)]
    exact_limit: Option<usize>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    prover_path: Option<PathBuf>,
    /// Argument passed to the prover before the problem file (repeatable).
    #[arg(long = "prover-arg", allow_hyphen_values = true)]
    prover_args: Vec<String>,
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// treat-as-0 or abort.
    #[arg(long)]
    unknown: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    loop_bound: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_tptp: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    critical: Option<f64>,
    #[arg(long)]
    redundant: Option<f64>,
    #[arg(long)]
    adaptive_magnitude: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

/// Flag values with config-file fallback.
struct Settings<'a> {
    opts: &'a Opts,
    file: BTreeMap<String, String>,
}

impl<'a> Settings<'a> {
    fn load(opts: &'a Opts) -> Result<Self> {
        let file = match &opts.config {
            Some(p) => parse_config_file(p)?,
            None => BTreeMap::new(),
        };
        let known = [
            "log", "classifier", "noise", "property", "safety_pair", "method", "permutations", "samples", "seed",
            "compare_seed", "compare_method", "early_stop", "exact_limit", "backend", "prover_path", "prover_args",
            "timeout_ms", "unknown", "tau", "loop_bound", "out", "dump_tptp", "top_k", "critical", "redundant",
            "adaptive_magnitude", "threads",
        ];
        if let Some(k) = file.keys().find(|k| !known.contains(&k.as_str())) {
            bail!("unknown config key {k:?}");
        }
        Ok(Settings { opts, file })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("config key {key}: {e}")))
            .transpose()
    }

    fn log(&self) -> Result<PathBuf> {
        self.get(self.opts.log.clone(), "log")?
            .ok_or_else(|| anyhow!("--log is required"))
    }

    fn classifier(&self) -> Result<String> {
        Ok(self
            .get(self.opts.classifier.clone(), "classifier")?
            .unwrap_or_else(|| wfshap::event_log::DEFAULT_CLASSIFIER.to_string()))
    }

    fn noise_levels(&self) -> Result<Vec<f64>> {
        match self.get(self.opts.noise.clone(), "noise")? {
            None => Ok(DEFAULT_NOISE_LEVELS.to_vec()),
            Some(s) => s
                .split(',')
                .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad noise level {x:?}")))
                .collect(),
        }
    }

    fn properties(&self) -> Result<Vec<PropertySpec>> {
        let mode: TauMode = self.parse_or(self.opts.tau.clone(), "tau", TauMode::Blocked)?;
        let bound = LoopBound(self.get(self.opts.loop_bound, "loop_bound")?.unwrap_or(1));
        let pair = self
            .get(self.opts.safety_pair.clone(), "safety_pair")?
            .map(|s| {
                let (a, b) = s
                    .split_once(',')
                    .ok_or_else(|| anyhow!("--safety-pair expects A,B, got {s:?}"))?;
                Ok::<_, anyhow::Error>((a.trim().to_string(), b.trim().to_string()))
            })
            .transpose()?;
        let list = match self.get(self.opts.property.clone(), "property")? {
            Some(s) => s
                .split(',')
                .map(|p| p.trim().parse::<Property>().map_err(|e| anyhow!(e)))
                .collect::<Result<Vec<_>>>()?,
            // saf joins the defaults only when a pair is known
            None if pair.is_some() => Property::ALL.to_vec(),
            None => vec![Property::Sat, Property::Liv],
        };
        list.into_iter()
            .map(|p| {
                let pair = if p == Property::Saf { pair.clone() } else { None };
                PropertySpec::new(p, pair, mode, bound)
                    .map_err(|e| anyhow!("{p}: {e} (use --safety-pair A,B)"))
            })
            .collect()
    }

    fn parse_or<T: FromStr>(&self, flag: Option<String>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(flag, key)? {
            Some(s) => s.parse::<T>().map_err(|e| anyhow!("{e}")),
            None => Ok(default),
        }
    }

    fn method_of(&self, kind: MethodKind, seed: Option<u64>) -> Result<Method> {
        let need_seed = || seed.ok_or_else(|| anyhow!("--seed is required for method {kind}"));
        Ok(match kind {
            MethodKind::Exact => Method::Exact {
                limit: self
                    .get(self.opts.exact_limit, "exact_limit")?
                    .unwrap_or(DEFAULT_EXACT_LIMIT),
            },
            MethodKind::Mc => {
                let mut c = McConfig::new(
                    self.get(self.opts.permutations, "permutations")?.unwrap_or(1000),
                    need_seed()?,
                );
                c.early_stop = self.opts.early_stop || self.get(None::<bool>, "early_stop")?.unwrap_or(false);
                Method::Mc(c)
            }
            MethodKind::Rs => Method::Rs(RsConfig {
                samples_per_player: self.get(self.opts.samples, "samples")?.unwrap_or(1000),
                seed: need_seed()?,
            }),
        })
    }

    fn method(&self) -> Result<Method> {
        let kind = self.parse_or(self.opts.method.clone(), "method", MethodKind::Exact)?;
        self.method_of(kind, self.get(self.opts.seed, "seed")?)
    }

    fn comparisons(&self, primary: &Method) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        if let Some(seed) = self.get(self.opts.compare_seed, "compare_seed")? {
            if primary.kind() == MethodKind::Exact {
                bail!("--compare-seed needs a sampling method");
            }
            out.push(primary.with_seed(seed));
        }
        if let Some(kind) = self.get(self.opts.compare_method.clone(), "compare_method")? {
            let kind: MethodKind = kind.parse().map_err(|e: String| anyhow!(e))?;
            out.push(self.method_of(kind, self.get(self.opts.seed, "seed")?)?);
        }
        Ok(out)
    }

    fn backend(&self) -> Result<Backend> {
        let kind = self
            .get(self.opts.backend.clone(), "backend")?
            .unwrap_or_else(|| "oracle".into());
        match kind.as_str() {
            "oracle" => Ok(Backend::Oracle),
            "prover" => {
                let exe = self
                    .get(self.opts.prover_path.clone(), "prover_path")?
                    .ok_or_else(|| anyhow!("--backend prover needs --prover-path"))?;
                let mut cfg = ProverConfig::new(exe);
                cfg.timeout = Duration::from_millis(self.get(self.opts.timeout_ms, "timeout_ms")?.unwrap_or(2000));
                cfg.args = if self.opts.prover_args.is_empty() {
                    self.file
                        .get("prover_args")
                        .map(|s| s.split_whitespace().map(str::to_string).collect())
                        .unwrap_or_default()
                } else {
                    self.opts.prover_args.clone()
                };
                cfg.unknown_policy =
                    self.parse_or(self.opts.unknown.clone(), "unknown", UnknownPolicy::TreatAsZero)?;
                cfg.dump_dir = self.get(self.opts.dump_tptp.clone(), "dump_tptp")?;
                Ok(Backend::Prover(cfg))
            }
            other => bail!("unknown backend {other:?} (expected oracle|prover)"),
        }
    }

    fn diagnostics(&self) -> Result<DiagnosticsConfig> {
        let d = DiagnosticsConfig::standard();
        Ok(DiagnosticsConfig::new(
            self.get(self.opts.critical, "critical")?.unwrap_or(d.critical_threshold),
            self.get(self.opts.redundant, "redundant")?.unwrap_or(d.redundant_threshold),
            self.get(self.opts.top_k, "top_k")?.unwrap_or(d.top_k),
            self.get(self.opts.adaptive_magnitude, "adaptive_magnitude")?
                .unwrap_or(d.adaptive_magnitude),
        )?)
    }

    fn out(&self) -> Result<Option<PathBuf>> {
        self.get(self.opts.out.clone(), "out")
    }

    fn run_config(&self) -> Result<RunConfig> {
        let method = self.method()?;
        let mut cfg = RunConfig::new(self.log()?, self.properties()?, method);
        cfg.classifier = self.classifier()?;
        cfg.noise_levels = self.noise_levels()?;
        cfg.comparisons = self.comparisons(&method)?;
        cfg.backend = self.backend()?;
        cfg.diagnostics = self.diagnostics()?;
        Ok(cfg)
    }

    fn init_threads(&self) -> Result<()> {
        if let Some(n) = self.get(self.opts.threads, "threads")? {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        }
        Ok(())
    }
}

fn mine(settings: &Settings) -> Result<ProcessTree> {
    let levels = settings.noise_levels()?;
    let noise = match settings.get(settings.opts.noise.clone(), "noise")? {
        Some(_) if levels.len() == 1 => levels[0],
        Some(_) => bail!("mining takes a single --noise level"),
        None => 0.0,
    };
    let log = read_xes_file(&settings.log()?, &settings.classifier()?)?;
    Ok(discover(&log, &MinerConfig::with_noise(noise)?)?)
}

fn parse_coalition(text: &str, tree: &ProcessTree) -> Result<Coalition> {
    match text.trim() {
        "all" => Ok(tree.full_coalition()?),
        "none" | "" => Ok(Coalition::EMPTY),
        list => {
            let idx = list
                .split(',')
                .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad node index {s:?}")))
                .collect::<Result<Vec<_>>>()?;
            if let Some(bad) = idx.iter().find(|&&i| i >= tree.size()) {
                bail!("node {bad} is not in the tree ({} nodes)", tree.size());
            }
            Ok(Coalition::from_indices(idx))
        }
    }
}

fn write_outputs(report: &wfshap::report::AttributionReport, out: Option<&Path>) -> Result<()> {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", render_summary(report));
    if let Some(dir) = out {
        let files = emit_report(report, dir)?;
        eprintln!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mine(opts) => {
            let s = Settings::load(&opts)?;
            let tree = mine(&s)?;
            print!("{}", tree.to_debug_string());
            if let Some(dir) = s.out()? {
                fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
                fs::write(dir.join("tree.txt"), tree.to_debug_string())?;
                fs::write(dir.join("tree.dot"), export_dot(&tree, &BTreeMap::new()))?;
            }
        }
        Command::Verify { opts, tree, coalition } => {
            let s = Settings::load(&opts)?;
            let tree = match tree {
                Some(p) => {
                    let text = fs::read_to_string(&p).with_context(|| p.display().to_string())?;
                    ProcessTree::parse_debug(&text)?
                }
                None => mine(&s)?,
            };
            let c = parse_coalition(&coalition, &tree)?;
            let backend = s.backend()?;
            let cache = ValueCache::new();
            println!("tree: {tree}");
            println!("coalition: {c}");
            for spec in s.properties()? {
                let v = evaluate(&tree, c, &spec, &cache, &backend)?;
                println!("{} = {}", spec.property, v as u8);
            }
            if cache.counters().warnings > 0 {
                eprintln!("warning: {} inconclusive prover answers counted as 0", cache.counters().warnings);
            }
        }
        Command::Attribute(opts) => {
            let s = Settings::load(&opts)?;
            s.init_threads()?;
            let mut cfg = s.run_config()?;
            if s.get(s.opts.noise.clone(), "noise")?.is_none() {
                cfg.noise_levels = vec![0.0];
            }
            if cfg.noise_levels.len() != 1 || cfg.properties.len() != 1 {
                bail!("attribute takes one --noise level and one --property; use matrix for sweeps");
            }
            let report = run_matrix(&cfg)?;
            write_outputs(&report, s.out()?.as_deref())?;
            if let Some(e) = report.configurations.iter().find_map(|c| c.error.as_ref()) {
                bail!("{e}");
            }
        }
        Command::Matrix(opts) => {
            let s = Settings::load(&opts)?;
            s.init_threads()?;
            let cfg = s.run_config()?;
            let report = run_matrix(&cfg)?;
            let out = s.out()?.unwrap_or_else(|| PathBuf::from("out"));
            write_outputs(&report, Some(&out))?;
        }
        Command::Report { input, out } => {
            let report = load_report(&input)?;
            let dir = out.unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
            write_outputs(&report, Some(&dir))?;
        }
        Command::Prove { problem } => {
            let text = fs::read_to_string(&problem).with_context(|| problem.display().to_string())?;
            let spec = parse_tptp(&text)?.into_spec();
            println!("% SZS status {} for {}", decide(&spec), problem.display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

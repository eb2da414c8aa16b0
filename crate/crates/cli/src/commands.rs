//! The `run`, `sweep` and `check` commands, callable without a process.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use peerhedge_core::sim::{
    identity_suite, monte_carlo, monte_carlo_checks, run_streaming, CheckOptions, CheckReport,
    RunSummary, TraceRecord,
};
use serde_json::Value;

use crate::config::{apply_axis, ConfigDocument, ConfigError};
use crate::output::{summary_table, write_summary, Provenance, SweepWriter, TraceWriter};

/// Environment variable that overrides the default output directory.
pub const OUT_DIR_ENV: &str = "PEERHEDGE_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    /// Bad config or arguments; exit status 2.
    Config(String),
    /// Failure while running; exit status 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

/// `--out-dir`, else the environment override, else `./out`.
pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub trace_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
    pub table: String,
}

pub fn cmd_run(opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let doc = ConfigDocument::load(&opts.config)?;
    let mut spec = doc.spec.clone();
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    if let Some(h) = opts.horizon {
        spec.world.horizon = h;
    }
    doc.validate(&spec)?;

    let out_dir = resolve_out_dir(opts.out_dir.as_deref());
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let provenance = Provenance {
        config_sha256: doc.hash.clone(),
        seed: spec.seed,
    };
    let trace_path = spec.output.trace.as_ref().map(|name| out_dir.join(name));
    let summary_path = spec.output.summary.as_ref().map(|name| out_dir.join(name));

    let summary = match &trace_path {
        Some(path) => {
            let mut writer = TraceWriter::create(path, &provenance, spec.experts.len())?;
            let mut sink = |r: &TraceRecord| {
                writer
                    .write(r)
                    .map_err(|e| peerhedge_core::Error::Trace(format!("{e:#}")))
            };
            let summary = run_streaming(&spec, Some(&mut sink)).map_err(|e| anyhow::anyhow!(e))?;
            writer.finish()?;
            summary
        }
        None => run_streaming(&spec, None).map_err(|e| anyhow::anyhow!(e))?,
    };
    if let Some(path) = &summary_path {
        write_summary(path, &provenance, &summary)?;
    }
    let table = summary_table(&summary);
    Ok(RunOutcome {
        summary,
        trace_path,
        summary_path,
        table,
    })
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub config: PathBuf,
    pub param: String,
    pub values: Vec<String>,
    pub seeds: usize,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub path: PathBuf,
    pub rows: usize,
    /// `(value, median regret)` per swept value.
    pub medians: Vec<(String, f64)>,
}

pub fn cmd_sweep(opts: &SweepOptions) -> Result<SweepOutcome, CliError> {
    let doc = ConfigDocument::load(&opts.config)?;
    let values: Vec<&str> = opts
        .values
        .iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    if opts.seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    // Build every variant before running anything so a bad value fails fast.
    let mut specs = Vec::with_capacity(values.len());
    for raw in &values {
        let v: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let modified = apply_axis(&doc.value, &opts.param, &v).map_err(CliError::Config)?;
        let spec = doc
            .spec_from_value(modified)
            .map_err(|e| CliError::Config(format!("{} = {raw}: {}", opts.param, e.message)))?;
        specs.push(spec);
    }

    let path = match &opts.out {
        Some(p) => p.clone(),
        None => {
            let dir = resolve_out_dir(opts.out_dir.as_deref());
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("cannot create output directory {}", dir.display()))?;
            dir.join("sweep.csv")
        }
    };
    let provenance = Provenance {
        config_sha256: doc.hash.clone(),
        seed: doc.spec.seed,
    };
    let mut writer = SweepWriter::create(&path, &provenance, &opts.param)?;
    let mut rows = 0;
    let mut medians = Vec::new();
    for (raw, spec) in values.iter().zip(&specs) {
        let mc = monte_carlo(spec, opts.seeds, opts.threads).map_err(|e| anyhow::anyhow!(e))?;
        writer.write_all(&opts.param, raw, &mc)?;
        rows += mc.runs.len();
        medians.push((raw.to_string(), mc.regret.median));
    }
    writer.finish()?;
    Ok(SweepOutcome {
        path,
        rows,
        medians,
    })
}

#[derive(Debug, Clone, Default)]
pub struct CheckCommand {
    pub options: CheckOptions,
    pub report: Option<PathBuf>,
}

/// Identity suite plus Monte Carlo checks; returns the merged report.
pub fn cmd_check(opts: &CheckCommand) -> Result<CheckReport, CliError> {
    let mut report = identity_suite(opts.options);
    let mc = monte_carlo_checks(opts.options).map_err(|e| anyhow::anyhow!(e))?;
    report.checks.extend(mc.checks);
    if let Some(path) = &opts.report {
        let text = serde_json::to_string_pretty(&report).context("cannot encode check report")?;
        std::fs::write(path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(report)
}

pub fn format_check_report(report: &CheckReport) -> String {
    let width = report
        .checks
        .iter()
        .map(|c| c.name.len())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for c in &report.checks {
        out += &format!(
            "{} {:<width$}  value={:.3e}  limit={:.3e}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.limit,
        );
    }
    let failed = report.failures().count();
    if failed == 0 {
        out += &format!("all {} checks passed\n", report.checks.len());
    } else {
        out += &format!("{failed} of {} checks failed\n", report.checks.len());
    }
    out
}

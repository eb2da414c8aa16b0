//! Trace CSV, summary JSON and sweep CSV writers.
//!
//! Every file starts with the config hash and root seed. CSV files carry
//! them as `#` comment lines ahead of the fixed header; floats are written
//! with 17 significant digits so values round-trip exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use peerhedge_core::sim::{MonteCarloSummary, RunSummary, TraceRecord};
use peerhedge_core::Outcome;
use serde::Serialize;

/// Provenance stamped on every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

/// Float with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn bit(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn outcome(y: Outcome) -> String {
    bit(y.is_one())
}

/// Fixed columns, then `pred_i`, `score_i`, `loss_i` for each expert.
pub fn trace_header(experts: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "t",
        "p_t",
        "y",
        "y_hat",
        "y_hat_b",
        "y_tilde",
        "sym_flip",
        "homog_flip",
        "tie_coin",
        "revealed",
        "chosen",
        "eta_hat",
        "weight_max",
        "weight_argmax",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["pred", "score", "loss"] {
        h.extend((0..experts).map(|i| format!("{prefix}_{i}")));
    }
    h
}

pub struct TraceWriter {
    csv: csv::Writer<BufWriter<File>>,
}

impl TraceWriter {
    pub fn create(path: &Path, provenance: &Provenance, experts: usize) -> Result<TraceWriter> {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# config_sha256={}", provenance.config_sha256)?;
        writeln!(out, "# seed={}", provenance.seed)?;
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(trace_header(experts))?;
        Ok(TraceWriter { csv })
    }

    pub fn write(&mut self, r: &TraceRecord) -> Result<()> {
        let mut row = vec![
            r.t.to_string(),
            fmt_float(r.p_t),
            outcome(r.y),
            outcome(r.y_hat),
            opt(r.y_hat_b, outcome),
            opt(r.y_tilde, outcome),
            opt(r.sym_flip, bit),
            opt(r.homog_flip, bit),
            opt(r.tie_coin, bit),
            opt(r.revealed, bit),
            r.chosen.to_string(),
            opt(r.eta_hat, fmt_float),
            fmt_float(r.weight_max),
            r.weight_argmax.to_string(),
        ];
        for values in [&r.predictions, &r.scores, &r.losses] {
            row.extend(values.iter().map(|v| fmt_float(*v)));
        }
        self.csv.write_record(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.csv.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    summary: &'a RunSummary,
}

pub fn write_summary(path: &Path, provenance: &Provenance, summary: &RunSummary) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(
        &mut out,
        &SummaryFile {
            provenance,
            summary,
        },
    )?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub const SWEEP_HEADER: [&str; 26] = [
    "param",
    "value",
    "replication",
    "seed",
    "horizon",
    "experts",
    "regret",
    "regret_realized",
    "peer_regret",
    "algorithm_loss",
    "best_loss",
    "best_true",
    "best_peer",
    "best_f",
    "best_g",
    "terminal_argmax",
    "theorem1",
    "theorem1_holds",
    "theorem3",
    "theorem3_holds",
    "theorem6",
    "theorem6_holds",
    "final_eta_hat",
    "disagreement_rate",
    "g_gap",
    "sigma_g_empirical",
];

pub struct SweepWriter {
    csv: csv::Writer<BufWriter<File>>,
}

impl SweepWriter {
    pub fn create(path: &Path, provenance: &Provenance, param: &str) -> Result<SweepWriter> {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# config_sha256={}", provenance.config_sha256)?;
        writeln!(out, "# seed={}", provenance.seed)?;
        writeln!(out, "# param={param}")?;
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(SWEEP_HEADER)?;
        Ok(SweepWriter { csv })
    }

    pub fn write_all(&mut self, param: &str, value: &str, mc: &MonteCarloSummary) -> Result<()> {
        for (k, r) in mc.runs.iter().enumerate() {
            let l = &r.ledger;
            let b = &r.bounds;
            self.csv.write_record([
                param.to_string(),
                value.to_string(),
                k.to_string(),
                r.seed.to_string(),
                r.horizon.to_string(),
                r.experts.to_string(),
                fmt_float(l.regret),
                fmt_float(l.regret_realized),
                fmt_float(l.peer_regret),
                fmt_float(l.algorithm_loss),
                fmt_float(l.best_loss),
                l.best_true.to_string(),
                l.best_peer.to_string(),
                l.best_f.to_string(),
                l.best_g.to_string(),
                r.terminal_argmax.to_string(),
                opt(b.theorem1, fmt_float),
                opt(b.theorem1_holds, bit),
                opt(b.theorem3, fmt_float),
                opt(b.theorem3_holds, bit),
                opt(b.theorem6, fmt_float),
                opt(b.theorem6_holds, bit),
                opt(
                    r.estimator.as_ref().and_then(|e| e.final_eta_hat),
                    fmt_float,
                ),
                fmt_float(r.disagreement_rate),
                opt(l.g_gap, fmt_float),
                fmt_float(b.sigma_g_empirical),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.csv.flush()?;
        Ok(())
    }
}

/// Human-readable summary table.
pub fn summary_table(s: &RunSummary) -> String {
    let l = &s.ledger;
    let b = &s.bounds;
    let mut rows: Vec<(&str, String)> = vec![
        ("seed", s.seed.to_string()),
        ("horizon", s.horizon.to_string()),
        ("experts", s.experts.to_string()),
        ("regret R_T", format!("{:.6}", l.regret)),
        ("peer regret", format!("{:.6}", l.peer_regret)),
        ("best expert (true loss)", l.best_true.to_string()),
        ("best expert (peer score)", l.best_peer.to_string()),
        ("best expert (f)", l.best_f.to_string()),
        ("best expert (g)", l.best_g.to_string()),
        ("terminal weight argmax", s.terminal_argmax.to_string()),
        (
            "reference disagreement rate",
            format!("{:.6}", s.disagreement_rate),
        ),
        (
            "sigma_g (closed form / empirical)",
            format!("{:.4} / {:.4}", b.sigma_g_closed_form, b.sigma_g_empirical),
        ),
    ];
    let bound_row = |v: Option<f64>, holds: Option<bool>| {
        v.map(|v| {
            format!(
                "{:.3} ({})",
                v,
                if holds == Some(true) {
                    "holds"
                } else {
                    "violated"
                }
            )
        })
    };
    if let Some(v) = bound_row(b.theorem1, b.theorem1_holds) {
        rows.push(("known-noise bound", v));
    }
    if let Some(v) = bound_row(b.theorem3, b.theorem3_holds) {
        rows.push(("estimated-noise bound", v));
    }
    if let Some(v) = bound_row(b.theorem6, b.theorem6_holds) {
        rows.push(("heterogeneous-noise bound", v));
    }
    if let Some(e) = s.estimator.as_ref().and_then(|e| e.final_eta_hat) {
        rows.push(("final noise estimate", format!("{e:.6}")));
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{k:<width$}  {v}\n"))
        .collect()
}

//! Benchmark drivers and CSV emission over scenario runs.
//!
//! Two experiments mirror the questions a deployment would ask. The impact
//! benchmark runs matched pairs of scenarios, identical seeds, with the
//! re-encryption path on and off, and reports the latency cost of the extra
//! on-chain hop. The scale benchmark sweeps the number of concurrent
//! requesters and reports how mean completion time grows as blocks fill up.
//!
//! All times are simulated seconds. Output is plain CSV with floats printed
//! to millisecond precision, so a fixed seed yields byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::actors::{run_scenario, ScenarioConfig, ScenarioError, ScenarioTrace};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config rejected: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("scenario failed: {0}")]
    Scenario(String),
}

/// One per-request measurement. The five phase columns cover the whole
/// request lifetime: waiting for the request to mine, waiting for the re-key
/// (or grant) to land, proxy re-encryption work, waiting for the share
/// address to mine, and the final fetch-and-decrypt.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: String,
    pub n_requests: usize,
    pub request_id: u64,
    pub latency_s: f64,
    pub t_request_mine: f64,
    pub t_rekey_mine: f64,
    pub t_reencrypt: f64,
    pub t_addr_mine: f64,
    pub t_fetch_decrypt: f64,
}

pub const METRICS_HEADER: &str =
    "scenario,n_requests,request_id,latency_s,t_request_mine,t_rekey_mine,t_reencrypt,t_addr_mine,t_fetch_decrypt";

pub fn rows_from_trace(scenario: &str, n_requests: usize, trace: &ScenarioTrace) -> Vec<MetricsRow> {
    trace
        .latencies
        .iter()
        .map(|l| MetricsRow {
            scenario: scenario.to_string(),
            n_requests,
            request_id: l.request_id,
            latency_s: l.latency(),
            t_request_mine: l.t_request_mined - l.t_request,
            t_rekey_mine: l.t_rekey_mined - l.t_request_mined,
            t_reencrypt: l.t_share_ready - l.t_rekey_mined,
            t_addr_mine: l.t_data_ready - l.t_share_ready,
            t_fetch_decrypt: l.t_decrypted - l.t_data_ready,
        })
        .collect()
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            r.scenario,
            r.n_requests,
            r.request_id,
            r.latency_s,
            r.t_request_mine,
            r.t_rekey_mine,
            r.t_reencrypt,
            r.t_addr_mine,
            r.t_fetch_decrypt
        )
        .expect("write to String cannot fail");
    }
    out
}

fn scenario_label(cfg: &ScenarioConfig) -> &'static str {
    if cfg.pre_enabled {
        "pre"
    } else {
        "baseline"
    }
}

fn lift(err: ScenarioError) -> BenchError {
    match err {
        ScenarioError::InvalidConfig(m) => BenchError::Config(m),
        other => BenchError::Scenario(other.to_string()),
    }
}

/// Outcome of one scenario run, graded the way the CLI reports it.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    /// Every request completed and every payload verified.
    Clean,
    /// Completed, but some payloads failed verification.
    Mismatch(usize),
    /// Requests were still pending at the timeout horizon.
    Stalled { at: f64, pending: usize },
}

/// Run one scenario and write `trace.jsonl` + `metrics.csv` into `dir`.
/// A stalled run produces no files (there is nothing trustworthy to write).
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<RunOutcome, BenchError> {
    let trace = match run_scenario(cfg.clone()) {
        Ok(t) => t,
        Err(ScenarioError::Stalled { at, pending }) => {
            return Ok(RunOutcome::Stalled { at, pending })
        }
        Err(e) => return Err(lift(e)),
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trace.jsonl"), trace.to_jsonl())?;
    let rows = rows_from_trace(scenario_label(cfg), cfg.n_requesters, &trace);
    fs::write(dir.join("metrics.csv"), metrics_csv(&rows))?;
    if trace.mismatches > 0 {
        Ok(RunOutcome::Mismatch(trace.mismatches))
    } else {
        Ok(RunOutcome::Clean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactSummary {
    pub reps: usize,
    pub mean_pre_s: f64,
    pub mean_baseline_s: f64,
    /// `mean_pre / mean_baseline - 1`.
    pub overhead_ratio: f64,
}

#[derive(Debug)]
pub struct ImpactResult {
    pub summary: ImpactSummary,
    pub rows: Vec<MetricsRow>,
    /// Per-repetition (pre, baseline) mean latencies, matched by seed.
    pub pairs: Vec<(f64, f64)>,
}

/// Matched-pair comparison of the re-encryption path against the grant-only
/// baseline. Repetition `i` runs both modes on seed `cfg.seed + i`, so the
/// block schedules match and the difference is the protocol, not the dice.
pub fn bench_impact(cfg: &ScenarioConfig, reps: usize) -> Result<ImpactResult, BenchError> {
    assert!(reps >= 1, "bench_impact needs at least one repetition");
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    for rep in 0..reps {
        let seed = cfg.seed.wrapping_add(rep as u64);
        let pre_cfg = ScenarioConfig { seed, pre_enabled: true, ..cfg.clone() };
        let base_cfg = ScenarioConfig { seed, pre_enabled: false, ..cfg.clone() };
        let pre = run_scenario(pre_cfg).map_err(lift)?;
        let base = run_scenario(base_cfg).map_err(lift)?;
        pairs.push((pre.mean_latency(), base.mean_latency()));
        rows.extend(rows_from_trace("pre", cfg.n_requesters, &pre));
        rows.extend(rows_from_trace("baseline", cfg.n_requesters, &base));
    }
    let mean_pre_s = pairs.iter().map(|p| p.0).sum::<f64>() / reps as f64;
    let mean_baseline_s = pairs.iter().map(|p| p.1).sum::<f64>() / reps as f64;
    Ok(ImpactResult {
        summary: ImpactSummary {
            reps,
            mean_pre_s,
            mean_baseline_s,
            overhead_ratio: mean_pre_s / mean_baseline_s - 1.0,
        },
        rows,
        pairs,
    })
}

pub fn impact_summary_csv(s: &ImpactSummary) -> String {
    format!(
        "reps,mean_pre_s,mean_baseline_s,overhead_ratio\n{},{:.3},{:.3},{:.4}\n",
        s.reps, s.mean_pre_s, s.mean_baseline_s, s.overhead_ratio
    )
}

/// Write `impact.csv` (per-request rows) and `impact_summary.csv` into `dir`.
pub fn impact_to_dir(
    cfg: &ScenarioConfig,
    reps: usize,
    dir: &Path,
) -> Result<ImpactSummary, BenchError> {
    let result = bench_impact(cfg, reps)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("impact.csv"), metrics_csv(&result.rows))?;
    fs::write(dir.join("impact_summary.csv"), impact_summary_csv(&result.summary))?;
    Ok(result.summary)
}

/// Request counts used by the load sweep: 1, then steps of 5 up to 50.
pub const SCALE_STEPS: [usize; 11] = [1, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50];
pub const SCALE_REPS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalePoint {
    pub n_requests: usize,
    pub reps: usize,
    pub mean_latency_s: f64,
}

#[derive(Debug)]
pub struct ScaleResult {
    pub points: Vec<ScalePoint>,
    pub rows: Vec<MetricsRow>,
}

/// Sweep concurrent request counts and report the mean completion time at
/// each load level. Repetition `i` uses seed `cfg.seed + i` at every `n`
/// (common random numbers), so adjacent load levels see the same block
/// schedules and the comparison isolates queueing, not interval noise.
pub fn bench_scale(
    cfg: &ScenarioConfig,
    ns: &[usize],
    reps: usize,
) -> Result<ScaleResult, BenchError> {
    assert!(reps >= 1, "bench_scale needs at least one repetition");
    let mut points = Vec::with_capacity(ns.len());
    let mut rows = Vec::new();
    for &n in ns {
        let mut sum = 0.0;
        let mut count = 0usize;
        for rep in 0..reps {
            let seed = cfg.seed.wrapping_add(rep as u64);
            let run_cfg = ScenarioConfig { n_requesters: n, seed, ..cfg.clone() };
            let trace = run_scenario(run_cfg).map_err(lift)?;
            for l in &trace.latencies {
                sum += l.latency();
                count += 1;
            }
            rows.extend(rows_from_trace(scenario_label(cfg), n, &trace));
        }
        points.push(ScalePoint { n_requests: n, reps, mean_latency_s: sum / count as f64 });
    }
    Ok(ScaleResult { points, rows })
}

pub fn scale_csv(points: &[ScalePoint]) -> String {
    let mut out = String::from("n_requests,reps,mean_latency_s\n");
    for p in points {
        writeln!(out, "{},{},{:.3}", p.n_requests, p.reps, p.mean_latency_s)
            .expect("write to String cannot fail");
    }
    out
}

/// Write `scale.csv` (per-n means) and `scale_raw.csv` (every request) into
/// `dir`.
pub fn scale_to_dir(
    cfg: &ScenarioConfig,
    ns: &[usize],
    reps: usize,
    dir: &Path,
) -> Result<Vec<ScalePoint>, BenchError> {
    let result = bench_scale(cfg, ns, reps)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("scale.csv"), scale_csv(&result.points))?;
    fs::write(dir.join("scale_raw.csv"), metrics_csv(&result.rows))?;
    Ok(result.points)
}

//! `phaseserve` command line: single runs, policy comparisons, bound checks
//! and profile generation.
//!
//! Exit codes: 0 success, 1 invalid input, 2 simulator protocol error,
//! 3 bound violated, 4 bound premises not met.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use phaseserve::analysis::{verify_trace, BoundParams};
use phaseserve::engine::{run_outcome, RunConfig, Trace};
use phaseserve::metrics::{session_metrics, summarize, RunSummary};
use phaseserve::profile::{generate_profile, saturation_ratios, ShapeParams};
use phaseserve::scheduler::Policy;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

const EXIT_INVALID: u8 = 1;
const EXIT_PROTOCOL: u8 = 2;
const EXIT_VIOLATION: u8 = 3;
const EXIT_PREMISES: u8 = 4;

#[derive(Parser)]
#[command(
    name = "phaseserve",
    version,
    about = "Phase-aware agent serving simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one config and write trace.jsonl, summary.json and sessions.csv.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run several policies on the same sampled workload, per concurrency.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated policy names, at least two.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
        /// Concurrency levels: `3-6` or `3,4,6`.
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Check the per-interval ratio bound on a recorded trace.
    Verify {
        trace: PathBuf,
        /// `delta_sms=N,eps_bar=X`; measured values are used when omitted.
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic profile document.
    ProfileGen {
        /// TOML file with shape parameters; defaults when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { config, out, seed } => cmd_run(config.as_deref(), out, seed),
        Command::Compare {
            config,
            out,
            seed,
            policies,
            sweep,
        } => cmd_compare(config.as_deref(), out, seed, &policies, sweep.as_deref()),
        Command::Verify { trace, params, out } => cmd_verify(&trace, params.as_deref(), out),
        Command::ProfileGen { params, out } => cmd_profile_gen(params.as_deref(), out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let protocol = e
                .downcast_ref::<phaseserve::Error>()
                .is_some_and(|e| matches!(e, phaseserve::Error::Protocol(_)));
            ExitCode::from(if protocol {
                EXIT_PROTOCOL
            } else {
                EXIT_INVALID
            })
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_path(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig, fallback: &str) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(fallback));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Digest of the sampled session plans; equal digests mean identical
/// request streams.
fn stream_hash(trace: &Trace) -> String {
    let plans = serde_json::to_vec(&trace.header.sessions).expect("plans serialize");
    hex::encode(Sha256::digest(&plans).as_slice())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

#[derive(Serialize)]
struct SessionRow {
    session: u32,
    arrival_ms: f64,
    ttft_ms: Option<f64>,
    tpot_p50_ms: Option<f64>,
    tpot_p95_ms: Option<f64>,
    tokens: u64,
    decode_phases: u32,
    completed: bool,
    ttft_ok: bool,
    tpot_ok: bool,
    slo_met: bool,
}

#[derive(Serialize)]
struct RunArtifact<'a> {
    #[serde(flatten)]
    summary: &'a RunSummary,
    stream_sha256: String,
    error: Option<String>,
}

fn cmd_run(config: Option<&Path>, out: Option<PathBuf>, seed: Option<u64>) -> Result<u8> {
    let cfg = load_config(config)?;
    let sim = cfg.resolve_with(None, None, seed)?;
    let outcome = run_outcome(&sim)?;
    let dir = out_dir(out, &cfg, "out")?;
    let trace = &outcome.trace;

    let trace_path = dir.join("trace.jsonl");
    trace.write_jsonl(BufWriter::new(File::create(&trace_path)?))?;

    let summary = summarize(trace);
    write_json(
        &dir.join("summary.json"),
        &RunArtifact {
            summary: &summary,
            stream_sha256: stream_hash(trace),
            error: outcome.error.as_ref().map(ToString::to_string),
        },
    )?;

    let mut csv = csv::Writer::from_path(dir.join("sessions.csv"))?;
    for s in session_metrics(trace, &sim.slo) {
        csv.serialize(SessionRow {
            session: s.session_id,
            arrival_ms: s.arrival,
            ttft_ms: s.ttft,
            tpot_p50_ms: s.tpot_stat(50.0),
            tpot_p95_ms: s.tpot_stat(95.0),
            tokens: s.tokens,
            decode_phases: s.decode_phases,
            completed: s.completed,
            ttft_ok: s.ttft_ok,
            tpot_ok: s.tpot_ok,
            slo_met: s.slo_met,
        })?;
    }
    csv.flush()?;

    println!(
        "{} c={} seed={}: {} sessions, ttft p95 {} ms, tpot p95 {} ms, slo {:.3} -> {}",
        summary.policy,
        summary.concurrency,
        summary.seed,
        summary.sessions_done,
        fmt_opt(summary.ttft_p95),
        fmt_opt(summary.tpot_p95),
        summary.slo_attainment,
        dir.display()
    );
    if let Some(e) = &outcome.error {
        eprintln!("error: protocol violation, trace kept up to the failure: {e}");
        return Ok(EXIT_PROTOCOL);
    }
    Ok(0)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

/// `3-6` or `3,4,6`.
fn parse_sweep(text: &str) -> Result<Vec<u32>> {
    let text = text.trim();
    let levels: Vec<u32> = if let Some((lo, hi)) = text.split_once('-') {
        let (lo, hi): (u32, u32) = (lo.trim().parse()?, hi.trim().parse()?);
        if lo > hi {
            bail!("empty sweep range {text}");
        }
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_, _>>()?
    };
    if levels.is_empty() || levels.contains(&0) {
        bail!("sweep needs concurrency levels >= 1, got {text:?}");
    }
    Ok(levels)
}

#[derive(Serialize)]
struct CompareRow {
    concurrency: u32,
    policy: String,
    ttft_p50_ms: Option<f64>,
    ttft_p95_ms: Option<f64>,
    tpot_p50_ms: Option<f64>,
    tpot_p95_ms: Option<f64>,
    throughput_tok_s: Option<f64>,
    slo_attainment: f64,
    sessions_done: u32,
    stream_sha256: String,
}

fn cmd_compare(
    config: Option<&Path>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    policy_names: &[String],
    sweep: Option<&str>,
) -> Result<u8> {
    let cfg = load_config(config)?;
    let policies: Vec<Policy> = if policy_names.is_empty() {
        cfg.sweep_policies()?.unwrap_or_default()
    } else {
        policy_names
            .iter()
            .map(|n| Policy::parse(n).with_context(|| format!("unknown policy {n:?}")))
            .collect::<Result<_>>()?
    };
    if policies.len() < 2 {
        bail!("compare needs at least two policies (--policies a,b)");
    }
    let levels = match sweep {
        Some(s) => parse_sweep(s)?,
        None => cfg.sweep_concurrency(),
    };

    let jobs: Vec<(u32, Policy)> = levels
        .iter()
        .flat_map(|&c| policies.iter().map(move |&p| (c, p)))
        .collect();
    // resolve everything before running so a bad level fails fast
    let configs = jobs
        .iter()
        .map(|&(c, p)| cfg.resolve_with(Some(p), Some(c), seed))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes = configs
        .par_iter()
        .map(run_outcome)
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    let mut protocol_errors = 0;
    for ((c, p), o) in jobs.iter().zip(&outcomes) {
        if let Some(e) = &o.error {
            eprintln!("error: {} at concurrency {c}: {e}", p.name());
            protocol_errors += 1;
        }
        let s = summarize(&o.trace);
        rows.push(CompareRow {
            concurrency: *c,
            policy: p.name().to_string(),
            ttft_p50_ms: s.ttft_p50,
            ttft_p95_ms: s.ttft_p95,
            tpot_p50_ms: s.tpot_p50,
            tpot_p95_ms: s.tpot_p95,
            throughput_tok_s: s.throughput,
            slo_attainment: s.slo_attainment,
            sessions_done: s.sessions_done,
            stream_sha256: stream_hash(&o.trace),
        });
    }
    for level in rows.chunk_by(|a, b| a.concurrency == b.concurrency) {
        if level
            .iter()
            .any(|r| r.stream_sha256 != level[0].stream_sha256)
        {
            bail!(
                "request streams differ across policies at concurrency {}",
                level[0].concurrency
            );
        }
    }

    let dir = out_dir(out, &cfg, "out")?;
    let mut csv = csv::Writer::from_path(dir.join("compare.csv"))?;
    for r in &rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    write_json(&dir.join("compare.json"), &rows)?;

    println!(
        "{:>4} {:<17} {:>10} {:>10} {:>9} {:>9} {:>7}",
        "c", "policy", "ttft p50", "ttft p95", "tpot p50", "tpot p95", "slo"
    );
    for r in &rows {
        println!(
            "{:>4} {:<17} {:>10} {:>10} {:>9} {:>9} {:>7.3}",
            r.concurrency,
            r.policy,
            fmt_opt(r.ttft_p50_ms),
            fmt_opt(r.ttft_p95_ms),
            fmt_opt(r.tpot_p50_ms),
            fmt_opt(r.tpot_p95_ms),
            r.slo_attainment
        );
    }
    Ok(if protocol_errors > 0 {
        EXIT_PROTOCOL
    } else {
        0
    })
}

/// `delta_sms=N,eps_bar=X`, both keys required.
fn parse_params(text: &str) -> Result<BoundParams> {
    let (mut delta, mut eps) = (None, None);
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .with_context(|| format!("expected key=value, got {part:?}"))?;
        match k.trim() {
            "delta_sms" => {
                delta = Some(
                    v.trim()
                        .parse()
                        .with_context(|| format!("bad delta_sms {v:?}"))?,
                )
            }
            "eps_bar" => {
                eps = Some(
                    v.trim()
                        .parse()
                        .with_context(|| format!("bad eps_bar {v:?}"))?,
                )
            }
            other => bail!("unknown bound parameter {other:?}"),
        }
    }
    match (delta, eps) {
        (Some(delta_sms), Some(eps_bar)) => Ok(BoundParams { delta_sms, eps_bar }),
        _ => bail!("--params needs both delta_sms and eps_bar"),
    }
}

fn cmd_verify(trace_path: &Path, params: Option<&str>, out: Option<PathBuf>) -> Result<u8> {
    let params = params.map(parse_params).transpose()?;
    let file =
        File::open(trace_path).with_context(|| format!("opening {}", trace_path.display()))?;
    let trace = Trace::read_jsonl(BufReader::new(file))?;
    let report = verify_trace(&trace, params)?;

    let dir = match out {
        Some(d) => d,
        None => trace_path
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    };
    std::fs::create_dir_all(&dir)?;
    let mut csv = csv::Writer::from_path(dir.join("verify.csv"))?;
    for i in &report.intervals {
        csv.serialize(i)?;
    }
    csv.flush()?;
    write_json(&dir.join("verify.json"), &report.summary)?;

    let s = &report.summary;
    println!(
        "{} intervals ({} vacuous), {} violations, min rho {}, min bound {}, R* = {} slots",
        s.intervals,
        s.vacuous,
        s.violations,
        s.min_rho.map_or("-".into(), |x| format!("{x:.6}")),
        s.min_bound.map_or("-".into(), |x| format!("{x:.6}")),
        s.r_g_star
    );
    if !s.assumptions_met() {
        for flag in &s.assumption_flags {
            eprintln!("premise not met: {flag}");
        }
        return Ok(EXIT_PREMISES);
    }
    Ok(if s.violations > 0 { EXIT_VIOLATION } else { 0 })
}

fn cmd_profile_gen(params: Option<&Path>, out: Option<&Path>) -> Result<u8> {
    let shape: ShapeParams = match params {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ShapeParams::default(),
    };
    let generated = generate_profile(&shape)?;
    for w in &generated.warnings {
        eprintln!("warning: {w}");
    }
    if let Some((decode, cold)) = saturation_ratios(&generated.bundle) {
        eprintln!(
            "at half the GPU: decode {:.0}% of max, cold prefill {:.0}% of max",
            decode * 100.0,
            cold * 100.0
        );
    }
    let text = generated.bundle.to_toml_string();
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_forms() {
        assert_eq!(parse_sweep("3-6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(parse_sweep("2, 8").unwrap(), vec![2, 8]);
        assert!(parse_sweep("6-3").is_err());
        assert!(parse_sweep("0,1").is_err());
    }

    #[test]
    fn params_need_both_keys() {
        let p = parse_params("delta_sms=12, eps_bar=0.05").unwrap();
        assert_eq!(p.delta_sms, 12);
        assert_eq!(p.eps_bar, 0.05);
        assert!(parse_params("delta_sms=12").is_err());
        assert!(parse_params("delta=1,eps_bar=0").is_err());
    }
}

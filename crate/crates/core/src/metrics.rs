//! Latency and throughput metrics recomputed from a trace.
//!
//! TTFT runs from session arrival to the first emitted token. TPOT samples
//! are gaps between consecutive tokens of the same decode stream, so tool
//! calls never count. Percentiles use the nearest-rank rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::trace::{EventKind, Trace};
use crate::profile::{Phase, ProfileBundle};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("session {0} emitted no tokens")]
    NoOutput(u32),
    #[error("no samples in scope")]
    NoData,
    #[error("percentile {0} is outside (0, 100]")]
    BadPercentile(f64),
    #[error("empty window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("unknown session {0}")]
    UnknownSession(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SloConfig {
    pub tau_ttft: f64,
    /// ms per token.
    pub tau_tpot: f64,
    pub calibration_factor: f64,
    /// Per-session TPOT statistic checked against `tau_tpot`.
    pub tpot_percentile: f64,
}

impl SloConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau_ttft > 0.0 && self.tau_tpot > 0.0) {
            return Err(format!(
                "SLO thresholds must be positive, got ttft {} / tpot {}",
                self.tau_ttft, self.tau_tpot
            ));
        }
        if !(self.tpot_percentile > 0.0 && self.tpot_percentile <= 100.0) {
            return Err(format!(
                "tpot_percentile {} is outside (0, 100]",
                self.tpot_percentile
            ));
        }
        Ok(())
    }
}

/// Thresholds from isolated full-GPU performance: a cold prefill of
/// `mean_cold_tokens` plus one single-stream step for TTFT, one
/// single-stream step for TPOT, both scaled by `factor`.
pub fn calibrate_slo(bundle: &ProfileBundle, factor: f64, mean_cold_tokens: u32) -> SloConfig {
    let s = bundle.total_sms();
    let cold = bundle
        .lookup(Phase::ColdPrefill, s)
        .expect("S is on the grid");
    let decode = bundle.lookup(Phase::Decode, s).expect("S is on the grid");
    let step = 1000.0 / decode;
    SloConfig {
        tau_ttft: factor * (1000.0 * mean_cold_tokens as f64 / cold + step),
        tau_tpot: factor * step,
        calibration_factor: factor,
        tpot_percentile: 95.0,
    }
}

/// Nearest-rank percentile: the value at rank `ceil(p * n / 100)` of the
/// sorted samples.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64, MetricsError> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> Result<f64, MetricsError> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(MetricsError::BadPercentile(p));
    }
    if sorted.is_empty() {
        return Err(MetricsError::NoData);
    }
    let n = sorted.len();
    // integer rank avoids float noise such as 95 * 20 / 100 = 19.000000000000004
    let scaled = (p * 1e6).round() as u128 * n as u128;
    let rank = scaled.div_ceil(100_000_000) as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

pub fn percentiles(samples: &[f64], ps: &[f64]) -> Result<Vec<f64>, MetricsError> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    ps.iter().map(|&p| percentile_sorted(&sorted, p)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: u32,
    pub arrival: f64,
    pub ttft: Option<f64>,
    pub tpot_samples: Vec<f64>,
    pub tokens: u64,
    pub decode_phases: u32,
    pub completed: bool,
    pub ttft_ok: bool,
    pub tpot_ok: bool,
    pub slo_met: bool,
}

impl SessionMetrics {
    pub fn tpot_stat(&self, p: f64) -> Option<f64> {
        percentile(&self.tpot_samples, p).ok()
    }
}

fn arrivals(trace: &Trace) -> Vec<f64> {
    let mut out = vec![f64::NAN; trace.header.sessions.len()];
    for e in &trace.events {
        if let EventKind::SessionArrival { session } = e.event {
            out[session as usize] = e.time;
        }
    }
    out
}

fn completed(trace: &Trace) -> Vec<bool> {
    let plans = &trace.header.sessions;
    let mut streams = vec![0usize; plans.len()];
    for e in &trace.events {
        if let EventKind::DecodeStreamCompleted { session, .. } = e.event {
            streams[session as usize] += 1;
        }
    }
    plans
        .iter()
        .zip(&streams)
        .map(|(p, &n)| n == p.decode_tokens.len())
        .collect()
}

pub fn ttft(trace: &Trace, session: u32) -> Result<f64, MetricsError> {
    let arrival = *arrivals(trace)
        .get(session as usize)
        .ok_or(MetricsError::UnknownSession(session))?;
    trace
        .events
        .iter()
        .find_map(|e| match &e.event {
            EventKind::DecodeStepCompleted { sessions, .. } if sessions.contains(&session) => {
                Some(e.time)
            }
            _ => None,
        })
        .map(|t| t - arrival)
        .ok_or(MetricsError::NoOutput(session))
}

/// Per-session metrics, judged against `slo`.
pub fn session_metrics(trace: &Trace, slo: &SloConfig) -> Vec<SessionMetrics> {
    let arrival = arrivals(trace);
    let done = completed(trace);
    trace
        .token_times()
        .into_iter()
        .enumerate()
        .map(|(i, phases)| {
            let first = phases.first().and_then(|p| p.first()).copied();
            let ttft = first.map(|t| t - arrival[i]);
            let tpot_samples: Vec<f64> = phases
                .iter()
                .flat_map(|p| p.windows(2).map(|w| w[1] - w[0]))
                .collect();
            let tokens = phases.iter().map(|p| p.len() as u64).sum();
            let ttft_ok = ttft.is_some_and(|t| t <= slo.tau_ttft);
            let tpot_ok = match percentile(&tpot_samples, slo.tpot_percentile) {
                Ok(v) => v <= slo.tau_tpot,
                // a session whose streams were all one token long has no gaps
                Err(_) => ttft.is_some(),
            };
            SessionMetrics {
                session_id: i as u32,
                arrival: arrival[i],
                ttft,
                tpot_samples,
                tokens,
                decode_phases: phases.len() as u32,
                completed: done[i],
                ttft_ok,
                tpot_ok,
                slo_met: ttft_ok && tpot_ok,
            }
        })
        .collect()
}

/// Which sessions a TPOT percentile is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Session(u32),
    Global,
}

pub fn tpot_samples(trace: &Trace, scope: Scope) -> Vec<f64> {
    let times = trace.token_times();
    let gaps = |phases: &Vec<Vec<f64>>| -> Vec<f64> {
        phases
            .iter()
            .flat_map(|p| p.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>())
            .collect()
    };
    match scope {
        Scope::Session(s) => times.get(s as usize).map(gaps).unwrap_or_default(),
        Scope::Global => times.iter().flat_map(gaps).collect(),
    }
}

pub fn tpot_percentiles(trace: &Trace, scope: Scope, ps: &[f64]) -> Result<Vec<f64>, MetricsError> {
    percentiles(&tpot_samples(trace, scope), ps)
}

/// Decode tokens emitted in `(from, to]` per second.
pub fn throughput(trace: &Trace, from: f64, to: f64) -> Result<f64, MetricsError> {
    if to.partial_cmp(&from) != Some(std::cmp::Ordering::Greater) {
        return Err(MetricsError::EmptyWindow(from, to));
    }
    let tokens: usize = trace
        .events
        .iter()
        .filter(|e| e.time > from && e.time <= to)
        .map(|e| match &e.event {
            EventKind::DecodeStepCompleted { sessions, .. } => sessions.len(),
            _ => 0,
        })
        .sum();
    Ok(1000.0 * tokens as f64 / (to - from))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attainment {
    pub joint: f64,
    pub ttft_only: f64,
    pub tpot_only: f64,
    pub sessions: u32,
}

/// Fraction of completed sessions meeting both thresholds, alongside each
/// single-criterion fraction.
pub fn attainment(trace: &Trace, slo: &SloConfig) -> Attainment {
    let sessions: Vec<_> = session_metrics(trace, slo)
        .into_iter()
        .filter(|s| s.completed)
        .collect();
    let n = sessions.len();
    let frac = |f: &dyn Fn(&SessionMetrics) -> bool| {
        if n == 0 {
            0.0
        } else {
            sessions.iter().filter(|s| f(s)).count() as f64 / n as f64
        }
    };
    Attainment {
        joint: frac(&|s| s.slo_met),
        ttft_only: frac(&|s| s.ttft_ok),
        tpot_only: frac(&|s| s.tpot_ok),
        sessions: n as u32,
    }
}

pub fn slo_attainment(trace: &Trace, slo: &SloConfig) -> f64 {
    attainment(trace, slo).joint
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub concurrency: u32,
    pub seed: u64,
    pub sessions_done: u32,
    pub truncated: bool,
    pub makespan_ms: f64,
    pub ttft_p50: Option<f64>,
    pub ttft_p95: Option<f64>,
    pub tpot_p50: Option<f64>,
    pub tpot_p95: Option<f64>,
    pub throughput: Option<f64>,
    pub slo_attainment: f64,
    pub ttft_attainment: f64,
    pub tpot_attainment: f64,
    pub tau_ttft: f64,
    pub tau_tpot: f64,
}

pub fn summarize(trace: &Trace) -> RunSummary {
    let cfg = &trace.header.config;
    let slo = &cfg.slo;
    let sessions = session_metrics(trace, slo);
    let ttfts: Vec<f64> = sessions.iter().filter_map(|s| s.ttft).collect();
    let gaps: Vec<f64> = sessions
        .iter()
        .flat_map(|s| s.tpot_samples.iter().copied())
        .collect();
    let first_arrival = sessions
        .iter()
        .map(|s| s.arrival)
        .fold(f64::INFINITY, f64::min);
    let att = attainment(trace, slo);
    RunSummary {
        policy: cfg.policy.name().to_string(),
        concurrency: cfg.workload.concurrency,
        seed: cfg.seed,
        sessions_done: trace.footer.sessions_done,
        truncated: trace.footer.truncated,
        makespan_ms: trace.footer.end_ms,
        ttft_p50: percentile(&ttfts, 50.0).ok(),
        ttft_p95: percentile(&ttfts, 95.0).ok(),
        tpot_p50: percentile(&gaps, 50.0).ok(),
        tpot_p95: percentile(&gaps, 95.0).ok(),
        throughput: throughput(trace, first_arrival, trace.footer.end_ms).ok(),
        slo_attainment: att.joint,
        ttft_attainment: att.ttft_only,
        tpot_attainment: att.tpot_only,
        tau_ttft: slo.tau_ttft,
        tau_tpot: slo.tau_tpot,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nearest_rank_examples() {
        let gaps = [10.0, 10.0, 10.0, 10.0, 100.0];
        assert_eq!(
            percentiles(&gaps, &[50.0, 95.0]).unwrap(),
            vec![10.0, 100.0]
        );
        assert_eq!(
            percentiles(&[7.0; 9], &[1.0, 50.0, 100.0]).unwrap(),
            vec![7.0; 3]
        );
        let twenty: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&twenty, 95.0).unwrap(), 19.0);
        assert_eq!(percentile(&[], 50.0), Err(MetricsError::NoData));
        assert!(percentile(&[1.0], 0.0).is_err());
    }

    #[test]
    fn calibration() {
        let b = ProfileBundle::default_synthetic();
        let one = calibrate_slo(&b, 1.0, 3000);
        let two = calibrate_slo(&b, 2.0, 3000);
        let s = b.total_sms();
        let iso_step = 1000.0 / b.lookup(Phase::Decode, s).unwrap();
        assert_eq!(one.tau_tpot, iso_step);
        assert_eq!(
            one.tau_ttft,
            1000.0 * 3000.0 / b.lookup(Phase::ColdPrefill, s).unwrap() + iso_step
        );
        assert_eq!(two.tau_tpot, 2.0 * one.tau_tpot);
    }

    proptest! {
        #[test]
        fn matches_sort_oracle(samples in proptest::collection::vec(0.0f64..1e4, 1..200), p in 1u32..=100) {
            let mut sorted = samples.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            // smallest value with at least p% of samples at or below it
            let oracle = sorted.iter().copied().find(|&v| {
                let at_or_below = sorted.iter().filter(|&&x| x <= v).count();
                100 * at_or_below >= p as usize * n
            }).unwrap();
            prop_assert_eq!(percentile(&samples, p as f64).unwrap(), oracle);
        }

        #[test]
        fn p50_never_exceeds_p95(samples in proptest::collection::vec(0.0f64..1e4, 1..100)) {
            let v = percentiles(&samples, &[50.0, 95.0]).unwrap();
            prop_assert!(v[0] <= v[1]);
        }
    }
}

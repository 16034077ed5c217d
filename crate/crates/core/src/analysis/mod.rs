//! Competitive-ratio machinery: the decode-rate floor, the smallest feasible
//! reservation, the offline prefill optimum, the ratio bounds and a trace
//! verifier that checks them interval by interval.
//!
//! Rates are tokens/s, allocations are slot counts unless a name says SMs,
//! and interval lengths are milliseconds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::replay::{recompute_intervals, replay_check};
use crate::engine::trace::Trace;
use crate::profile::{Phase, ProfileBundle, ProfileError};
use crate::scheduler::Policy;

/// Relative tolerance for ratio comparisons.
pub const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("decode SLO infeasible: full-GPU decode rate {full_rate} tok/s is below the required {r_min} tok/s")]
    SloInfeasible { r_min: f64, full_rate: f64 },
    #[error("no prefill capacity at {sms} SMs; the bound is undefined")]
    DegenerateCapacity { sms: u32 },
    #[error("invalid bound parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Minimum per-stream decode rate implied by a TPOT target in ms.
pub fn r_min_rate(tau_tpot_ms: f64) -> f64 {
    1000.0 / tau_tpot_ms
}

/// Smallest slot count whose decode rate reaches `r_min`.
pub fn r_g_star(bundle: &ProfileBundle, r_min: f64) -> Result<u32, AnalysisError> {
    let decode = bundle.profile(Phase::Decode);
    let n = bundle.total_slots();
    (1..=n)
        .find(|&r| decode.at_slots(r) >= r_min)
        .ok_or(AnalysisError::SloInfeasible {
            r_min,
            full_rate: decode.at_slots(n),
        })
}

/// Prefill work (tokens) the SLO-feasible offline optimum completes in each
/// interval: the mixed prefill rate on everything decode does not need.
pub fn offline_optimum(
    bundle: &ProfileBundle,
    eta_series: &[f64],
    r_g_star: u32,
    dt_ms: f64,
) -> Result<Vec<f64>, AnalysisError> {
    let sms = prefill_sms(bundle, r_g_star)?;
    eta_series
        .iter()
        .map(|&eta| Ok(bundle.mixed_prefill_rate_or_zero(eta, sms)? * dt_ms / 1000.0))
        .collect()
}

fn prefill_sms(bundle: &ProfileBundle, r_g_star: u32) -> Result<u32, AnalysisError> {
    if r_g_star > bundle.total_slots() {
        return Err(AnalysisError::InvalidParams(format!(
            "reservation {r_g_star} exceeds {} slots",
            bundle.total_slots()
        )));
    }
    Ok(bundle.total_sms() - r_g_star * bundle.granularity())
}

/// Decode allocations (slots) whose rate meets `r_min`.
pub fn feasible_allocations(bundle: &ProfileBundle, r_min: f64) -> Vec<u32> {
    let decode = bundle.profile(Phase::Decode);
    (1..=bundle.total_slots())
        .filter(|&r| decode.at_slots(r) >= r_min)
        .collect()
}

/// Exhaustive oracle for [`offline_optimum`]: every interval independently
/// tries every feasible decode allocation and keeps the best prefill work.
pub fn brute_force_offline(
    bundle: &ProfileBundle,
    eta_series: &[f64],
    r_min: f64,
    dt_ms: f64,
) -> Result<Vec<f64>, AnalysisError> {
    let feasible = feasible_allocations(bundle, r_min);
    if feasible.is_empty() {
        return Err(AnalysisError::SloInfeasible {
            r_min,
            full_rate: bundle.profile(Phase::Decode).at_slots(bundle.total_slots()),
        });
    }
    let (s, g) = (bundle.total_sms(), bundle.granularity());
    eta_series
        .iter()
        .map(|&eta| {
            let mut best = f64::NEG_INFINITY;
            for &r in &feasible {
                let w = bundle.mixed_prefill_rate_or_zero(eta, s - r * g)? * dt_ms / 1000.0;
                best = best.max(w);
            }
            Ok(best)
        })
        .collect()
}

/// Overshoot and loss allowances for the ratio bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Decode overshoot above the reservation floor, in SMs.
    pub delta_sms: u32,
    /// Relative service loss to control overhead, in `[0, 1)`.
    pub eps_bar: f64,
}

impl BoundParams {
    pub fn exact() -> Self {
        BoundParams {
            delta_sms: 0,
            eps_bar: 0.0,
        }
    }

    fn check(&self, top: u32) -> Result<(), AnalysisError> {
        if !(0.0..1.0).contains(&self.eps_bar) {
            return Err(AnalysisError::InvalidParams(format!(
                "eps_bar {} is outside [0, 1)",
                self.eps_bar
            )));
        }
        if self.delta_sms > top {
            return Err(AnalysisError::InvalidParams(format!(
                "delta {} SMs exceeds the prefill allowance of {top} SMs",
                self.delta_sms
            )));
        }
        Ok(())
    }
}

/// `(top, lowered)`: prefill SMs at the floor, and the same after removing
/// the overshoot, rounded down to the grid.
fn bound_window(
    bundle: &ProfileBundle,
    r_g_star: u32,
    delta: u32,
) -> Result<(u32, u32), AnalysisError> {
    let top = prefill_sms(bundle, r_g_star)?;
    let g = bundle.granularity();
    let lowered = top.saturating_sub(delta) / g * g;
    Ok((top, lowered))
}

fn top_rate(bundle: &ProfileBundle, eta: f64, top: u32) -> Result<f64, AnalysisError> {
    let rate = bundle.mixed_prefill_rate_or_zero(eta, top)?;
    if rate > 0.0 {
        Ok(rate)
    } else {
        Err(AnalysisError::DegenerateCapacity { sms: top })
    }
}

/// `(1 - eps_bar) * mu_P(S - R* g - delta) / mu_P(S - R* g)`, with the
/// lowered allocation rounded down to the grid.
pub fn theorem1_bound(
    bundle: &ProfileBundle,
    eta: f64,
    r_g_star: u32,
    params: BoundParams,
) -> Result<f64, AnalysisError> {
    let (top, lowered) = bound_window(bundle, r_g_star, params.delta_sms)?;
    params.check(top)?;
    let denom = top_rate(bundle, eta, top)?;
    let num = bundle.mixed_prefill_rate_or_zero(eta, lowered)?;
    Ok((1.0 - params.eps_bar) * num / denom)
}

/// Linearized bound `(1 - eps_bar) * (1 - L_P delta / mu_P(S - R* g))`,
/// with `L_P` the steepest grid slope over the rounded window.
pub fn corollary2_bound(
    bundle: &ProfileBundle,
    eta: f64,
    r_g_star: u32,
    params: BoundParams,
) -> Result<f64, AnalysisError> {
    let (top, lowered) = bound_window(bundle, r_g_star, params.delta_sms)?;
    params.check(top)?;
    let denom = top_rate(bundle, eta, top)?;
    let lip = if lowered < top {
        bundle.lipschitz_estimate(eta, lowered, top)?
    } else {
        0.0
    };
    let delta = (top - lowered) as f64;
    Ok((1.0 - params.eps_bar) * (1.0 - lip * delta / denom))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub index: u64,
    pub start: f64,
    pub end: f64,
    pub decode_slots: u32,
    /// ms with prefill work waiting outside the decode queue.
    pub backlog: f64,
    /// Share of that backlog lost to rebind pauses.
    pub eps: f64,
    /// Cold share of the prefill context's busy time.
    pub eta: f64,
    pub w_a: f64,
    pub w_star: f64,
    pub rho: Option<f64>,
    pub bound: Option<f64>,
    pub linearized_bound: Option<f64>,
    pub vacuous: bool,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub intervals: usize,
    pub vacuous: usize,
    pub violations: usize,
    pub min_rho: Option<f64>,
    pub min_bound: Option<f64>,
    pub r_g_star: u32,
    pub params: BoundParams,
    /// Largest overshoot and loss actually observed.
    pub measured_delta_sms: u32,
    pub measured_eps_bar: f64,
    /// Empty iff every premise of the bound held for the run.
    pub assumption_flags: Vec<String>,
}

impl VerifySummary {
    pub fn assumptions_met(&self) -> bool {
        self.assumption_flags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub summary: VerifySummary,
    pub intervals: Vec<IntervalReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.summary.assumptions_met() && self.summary.violations == 0
    }
}

/// Checks the per-interval ratio bound on a trace.
///
/// Interval data is recomputed from the events rather than read from the
/// recorded summaries. With `params = None` the bound uses the run's own
/// measured overshoot and loss. Premise failures are reported as flags; only
/// malformed inputs are errors.
pub fn verify_trace(
    trace: &Trace,
    params: Option<BoundParams>,
) -> Result<VerifyReport, AnalysisError> {
    let cfg = &trace.header.config;
    let bundle = &cfg.profile;
    let g = bundle.granularity();
    let r_star = r_g_star(bundle, r_min_rate(cfg.slo.tau_tpot))?;
    let top = prefill_sms(bundle, r_star)?;
    let intervals = recompute_intervals(trace);
    let mut flags = Vec::new();

    if cfg.policy != Policy::TpotDriven {
        flags.push(format!(
            "policy {} is not the adaptive partitioned policy",
            cfg.policy.name()
        ));
    }
    if cfg.controller.r_base < r_star {
        flags.push(format!(
            "r_base {} is below the feasible floor {r_star}",
            cfg.controller.r_base
        ));
    }
    if let Some(e) = &trace.footer.error {
        flags.push(format!("run aborted: {e}"));
    }
    let replay = replay_check(trace);
    if !replay.is_clean() {
        flags.push(format!(
            "trace inconsistent: {} replay mismatches",
            replay.mismatches.len()
        ));
    }

    let vacuous_at = |i: &crate::engine::trace::IntervalSummary| i.backlog <= 0.0;
    let mut measured_delta = 0u32;
    let mut measured_eps = 0.0f64;
    for i in &intervals {
        if i.decode_slots < r_star && cfg.policy.is_partitioned() {
            flags.push(format!(
                "interval {}: decode binding {} below the floor {r_star}",
                i.index, i.decode_slots
            ));
        }
        if vacuous_at(i) {
            continue;
        }
        measured_delta = measured_delta.max(i.decode_slots.saturating_sub(r_star) * g);
        measured_eps = measured_eps.max(i.backlog_overhead / i.backlog);
    }
    let params = match params {
        Some(p) => {
            if measured_delta > p.delta_sms {
                flags.push(format!(
                    "measured overshoot {measured_delta} SMs exceeds delta {}",
                    p.delta_sms
                ));
            }
            if measured_eps > p.eps_bar {
                flags.push(format!(
                    "measured loss {measured_eps} exceeds eps_bar {}",
                    p.eps_bar
                ));
            }
            p
        }
        None => BoundParams {
            delta_sms: measured_delta,
            eps_bar: measured_eps,
        },
    };
    let params_ok = params
        .check(top)
        .map_err(|e| flags.push(e.to_string()))
        .is_ok();
    let degenerate = bundle.mixed_prefill_rate_or_zero(0.0, top)? <= 0.0
        || bundle.mixed_prefill_rate_or_zero(1.0, top)? <= 0.0;
    if degenerate {
        flags.push(format!("no prefill capacity at {top} SMs"));
    }
    let bounds_ok = params_ok && !degenerate;

    let mut reports = Vec::with_capacity(intervals.len());
    for i in &intervals {
        let eta = i.lane_cold_fraction();
        let w_a = i.prefill_tokens();
        let w_star = bundle.mixed_prefill_rate_or_zero(eta, top)? * i.backlog / 1000.0;
        let vacuous = vacuous_at(i) || w_star <= 0.0;
        let eps = if i.backlog > 0.0 {
            i.backlog_overhead / i.backlog
        } else {
            0.0
        };
        let mut r = IntervalReport {
            index: i.index,
            start: i.start,
            end: i.end,
            decode_slots: i.decode_slots,
            backlog: i.backlog,
            eps,
            eta,
            w_a,
            w_star,
            rho: None,
            bound: None,
            linearized_bound: None,
            vacuous,
            satisfied: true,
        };
        if !vacuous && bounds_ok {
            let rho = w_a / w_star;
            let bound = theorem1_bound(bundle, eta, r_star, params)?;
            r.rho = Some(rho);
            r.bound = Some(bound);
            r.linearized_bound = Some(corollary2_bound(bundle, eta, r_star, params)?);
            r.satisfied = rho >= bound * (1.0 - RATIO_TOLERANCE);
        }
        reports.push(r);
    }

    let min = |xs: &mut dyn Iterator<Item = f64>| {
        xs.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
    };
    let summary = VerifySummary {
        intervals: reports.len(),
        vacuous: reports.iter().filter(|r| r.vacuous).count(),
        violations: reports.iter().filter(|r| !r.satisfied).count(),
        min_rho: min(&mut reports.iter().filter_map(|r| r.rho)),
        min_bound: min(&mut reports.iter().filter_map(|r| r.bound)),
        r_g_star: r_star,
        params,
        measured_delta_sms: measured_delta,
        measured_eps_bar: measured_eps,
        assumption_flags: flags,
    };
    Ok(VerifyReport {
        summary,
        intervals: reports,
    })
}

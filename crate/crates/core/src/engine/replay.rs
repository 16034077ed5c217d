//! Independent recomputation of a trace's derived data from its raw events.
//!
//! Nothing here looks at engine state. Interval summaries, step-level TPOT,
//! token conservation, phase order and control cadence are all rebuilt from
//! the event list and compared against what the run recorded.

use serde::{Deserialize, Serialize};

use crate::engine::trace::{EventKind, IntervalSummary, Trace};
use crate::scheduler::QueueName;
use crate::workload::RequestKind;

/// Relative tolerance for quantities that are float sums accumulated in a
/// different order than the engine's.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub interval: Option<u64>,
    pub field: String,
    pub recorded: String,
    pub recomputed: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplayReport {
    pub intervals_checked: usize,
    pub tpot_values_checked: usize,
    pub streams_checked: usize,
    pub prefills_checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }

    fn flag(
        &mut self,
        interval: Option<u64>,
        field: &str,
        recorded: impl ToString,
        recomputed: impl ToString,
    ) {
        self.mismatches.push(Mismatch {
            interval,
            field: field.to_string(),
            recorded: recorded.to_string(),
            recomputed: recomputed.to_string(),
        });
    }
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= SUM_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Rebuilds every interval summary from the events.
pub fn recompute_intervals(trace: &Trace) -> Vec<IntervalSummary> {
    let cfg = &trace.header.config;
    let n = trace.header.sessions.len();
    let init = trace.header.initial;
    let mut out = Vec::new();
    let mut cur = IntervalSummary {
        decode_slots: init.decode_slots,
        prefill_slots: init.prefill_slots,
        budget: init.budget,
        reservation: init.reservation,
        ..Default::default()
    };
    let mut outstanding = vec![false; n];
    let mut count = 0u32;
    let mut last = 0.0f64;
    let mut pause = (0.0f64, 0.0f64);

    let integrate =
        |cur: &mut IntervalSummary, last: &mut f64, t: f64, count: u32, pause: (f64, f64)| {
            if t > *last && count > 0 {
                cur.backlog += t - *last;
                let lo = last.max(pause.0);
                let hi = t.min(pause.1);
                if hi > lo {
                    cur.backlog_overhead += hi - lo;
                }
            }
            *last = last.max(t);
        };

    for e in &trace.events {
        integrate(&mut cur, &mut last, e.time, count, pause);
        match &e.event {
            EventKind::RequestIssued {
                session,
                request,
                queue,
                ..
            } => {
                if request.is_prefill() && *queue != Some(QueueName::Decode) {
                    outstanding[*session as usize] = true;
                    count += 1;
                }
            }
            EventKind::PrefillCompleted { session, .. } => {
                if std::mem::take(&mut outstanding[*session as usize]) {
                    count -= 1;
                }
            }
            EventKind::PrefillProgress {
                request,
                start,
                tokens,
                share,
                ..
            } => {
                let busy = (e.time - start) * share;
                if *request == RequestKind::ColdPrefill {
                    cur.lane_cold_tokens += tokens;
                    cur.lane_cold_busy += busy;
                } else {
                    cur.lane_resume_tokens += tokens;
                    cur.lane_resume_busy += busy;
                }
            }
            EventKind::DecodeStepCompleted {
                duration,
                sessions,
                chunks,
                ..
            } => {
                if !sessions.is_empty() {
                    cur.decode_time += duration;
                    cur.decode_steps += 1;
                }
                for c in chunks {
                    if c.request == RequestKind::ColdPrefill {
                        cur.step_cold_tokens += c.tokens as f64;
                    } else {
                        cur.step_resume_tokens += c.tokens as f64;
                    }
                }
            }
            EventKind::Rebind { overhead, .. } => {
                cur.rebind_overhead += overhead;
                if *overhead > 0.0 {
                    pause = (e.time, e.time + overhead);
                }
            }
            EventKind::ControlTick {
                tpot: _,
                budget,
                reservation,
                decode_slots,
                prefill_slots,
                ..
            } => {
                cur.end = e.time;
                cur.tpot =
                    (cur.decode_steps > 0).then(|| cur.decode_time / cur.decode_steps as f64);
                cur.updated = cur.tpot.is_some() && cfg.policy.is_adaptive();
                let next = IntervalSummary {
                    index: cur.index + 1,
                    start: e.time,
                    decode_slots: *decode_slots,
                    prefill_slots: *prefill_slots,
                    budget: *budget,
                    reservation: *reservation,
                    ..Default::default()
                };
                out.push(std::mem::replace(&mut cur, next));
            }
            _ => {}
        }
    }
    let end = trace.footer.end_ms;
    integrate(&mut cur, &mut last, end, count, pause);
    if end > cur.start || cur.decode_steps > 0 {
        cur.end = end;
        cur.tpot = (cur.decode_steps > 0).then(|| cur.decode_time / cur.decode_steps as f64);
        cur.updated = false;
        out.push(cur);
    }
    out
}

fn compare_interval(report: &mut ReplayReport, rec: &IntervalSummary, re: &IntervalSummary) {
    let i = Some(rec.index);
    macro_rules! exact {
        ($($f:ident),*) => {$(
            if rec.$f != re.$f {
                report.flag(i, stringify!($f), format!("{:?}", rec.$f), format!("{:?}", re.$f));
            }
        )*};
    }
    macro_rules! approx {
        ($($f:ident),*) => {$(
            if !close(rec.$f, re.$f) {
                report.flag(i, stringify!($f), rec.$f, re.$f);
            }
        )*};
    }
    exact!(
        index,
        start,
        end,
        decode_time,
        decode_steps,
        tpot,
        decode_slots,
        prefill_slots,
        budget,
        reservation,
        updated
    );
    approx!(
        lane_cold_tokens,
        lane_resume_tokens,
        step_cold_tokens,
        step_resume_tokens,
        lane_cold_busy,
        lane_resume_busy,
        backlog,
        backlog_overhead,
        rebind_overhead
    );
}

/// Expected request-kind sequence for a session with `rounds` resumes.
fn expected_kinds(rounds: usize) -> Vec<RequestKind> {
    let mut v = vec![RequestKind::ColdPrefill];
    for _ in 0..rounds {
        v.push(RequestKind::DecodeStream);
        v.push(RequestKind::ResumePrefill);
    }
    v.push(RequestKind::DecodeStream);
    v
}

/// Whether `kinds` matches `ColdPrefill (DecodeStream ResumePrefill)* DecodeStream`.
pub fn matches_phase_order(kinds: &[RequestKind]) -> bool {
    use RequestKind::*;
    if kinds.len() < 2 || !kinds.len().is_multiple_of(2) || kinds[0] != ColdPrefill {
        return false;
    }
    kinds[1..kinds.len() - 1]
        .chunks(2)
        .all(|p| p == [DecodeStream, ResumePrefill])
        && kinds[kinds.len() - 1] == DecodeStream
}

/// Checks everything the trace claims against the events.
pub fn replay_check(trace: &Trace) -> ReplayReport {
    let mut report = ReplayReport::default();
    let cfg = &trace.header.config;
    let plans = &trace.header.sessions;
    let n = plans.len();

    let re = recompute_intervals(trace);
    if re.len() != trace.intervals.len() {
        report.flag(None, "interval_count", trace.intervals.len(), re.len());
    }
    for (rec, r) in trace.intervals.iter().zip(&re) {
        compare_interval(&mut report, rec, r);
    }
    report.intervals_checked = re.len().min(trace.intervals.len());

    // clock order and sequence numbers
    let mut prev = f64::NEG_INFINITY;
    for (k, e) in trace.events.iter().enumerate() {
        if e.seq != k as u64 {
            report.flag(None, "event_seq", e.seq, k);
        }
        if e.time < prev {
            report.flag(None, "event_time_order", e.time, prev);
        }
        prev = e.time;
    }

    // tick cadence and the TPOT values the controller used
    let dt = cfg.controller.delta_t;
    let mut ticks = 0u64;
    let mut recount = (0.0f64, 0u64);
    for e in &trace.events {
        match &e.event {
            EventKind::DecodeStepCompleted {
                duration, sessions, ..
            } if !sessions.is_empty() => {
                recount.0 += duration;
                recount.1 += 1;
            }
            EventKind::ControlTick {
                index,
                tpot,
                decode_slots,
                prefill_slots,
                ..
            } => {
                ticks += 1;
                if *index != ticks {
                    report.flag(None, "tick_index", index, ticks);
                }
                let expected_time = ticks as f64 * dt;
                if e.time != expected_time {
                    report.flag(Some(ticks - 1), "tick_time", e.time, expected_time);
                }
                let recomputed = (recount.1 > 0).then(|| recount.0 / recount.1 as f64);
                if *tpot != recomputed {
                    report.flag(
                        Some(ticks - 1),
                        "tick_tpot",
                        format!("{tpot:?}"),
                        format!("{recomputed:?}"),
                    );
                }
                report.tpot_values_checked += 1;
                recount = (0.0, 0);
                if *decode_slots < 1 {
                    report.flag(
                        Some(ticks - 1),
                        "decode_slots_positive",
                        decode_slots,
                        ">= 1",
                    );
                }
                if cfg.policy.is_partitioned() && decode_slots + prefill_slots != cfg.total_slots()
                {
                    report.flag(
                        Some(ticks - 1),
                        "slot_complementarity",
                        decode_slots + prefill_slots,
                        cfg.total_slots(),
                    );
                }
            }
            _ => {}
        }
    }
    let end = trace.footer.end_ms;
    let below = ((end / dt).ceil() as u64).saturating_sub(1);
    let at_most = (end / dt).floor() as u64;
    if ticks != below && ticks != at_most {
        report.flag(None, "tick_count", ticks, at_most);
    }

    // conservation and phase order, per session
    let mut kinds: Vec<Vec<RequestKind>> = vec![Vec::new(); n];
    let mut emitted = vec![0u32; n];
    let mut prefill_done = vec![0.0f64; n];
    for e in &trace.events {
        match &e.event {
            EventKind::RequestIssued {
                session, request, ..
            } => kinds[*session as usize].push(*request),
            EventKind::DecodeStepCompleted {
                sessions, chunks, ..
            } => {
                for &s in sessions {
                    emitted[s as usize] += 1;
                }
                for c in chunks {
                    prefill_done[c.session as usize] += c.tokens as f64;
                }
            }
            EventKind::PrefillProgress {
                session, tokens, ..
            } => prefill_done[*session as usize] += tokens,
            EventKind::DecodeStreamCompleted { session, tokens } => {
                let s = *session as usize;
                report.streams_checked += 1;
                if emitted[s] != *tokens {
                    report.flag(
                        None,
                        &format!("session {s} decode tokens"),
                        tokens,
                        emitted[s],
                    );
                }
                emitted[s] = 0;
            }
            EventKind::PrefillCompleted {
                session, tokens, ..
            } => {
                let s = *session as usize;
                report.prefills_checked += 1;
                if !close(prefill_done[s], *tokens as f64) {
                    report.flag(
                        None,
                        &format!("session {s} prefill tokens"),
                        tokens,
                        prefill_done[s],
                    );
                }
                prefill_done[s] = 0.0;
            }
            _ => {}
        }
    }
    for (s, k) in kinds.iter().enumerate() {
        let full = expected_kinds(plans[s].rounds() as usize);
        let ok = if k.len() == full.len() {
            matches_phase_order(k) && *k == full
        } else {
            // unfinished sessions must be a prefix of the pattern
            !trace.footer.error.is_none() || trace.footer.truncated && full.starts_with(k)
        };
        if !ok {
            report.flag(
                None,
                &format!("session {s} phase order"),
                format!("{k:?}"),
                format!("{full:?}"),
            );
        }
    }
    report
}

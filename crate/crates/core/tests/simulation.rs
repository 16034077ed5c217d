use phaseserve::engine::{self, replay_check, EventKind};
use phaseserve::metrics::ttft;
use phaseserve::profile::Phase;
use phaseserve::scheduler::Policy;
use phaseserve::workload::Paradigm;
use phaseserve::SimConfig;
use proptest::prelude::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// One session on an idle GPU: every phase runs back to back on all SMs, so
/// the timeline is a plain sum.
#[test]
fn lone_session_under_fcfs_matches_hand_timeline() {
    let cfg = SimConfig::default_for(Paradigm::ReAct, 1, Policy::MixedFcfs, 3).unwrap();
    let trace = engine::run(&cfg).unwrap();
    let plan = &trace.header.sessions[0];
    let s = cfg.profile.total_sms();
    let rate = |phase| cfg.profile.lookup(phase, s).unwrap();
    let (decode, cold, resume) = (
        rate(Phase::Decode),
        rate(Phase::ColdPrefill),
        rate(Phase::ResumePrefill),
    );

    let expected_ttft = 1000.0 * plan.cold_tokens as f64 / cold + 1000.0 / decode;
    assert!(close(ttft(&trace, 0).unwrap(), expected_ttft));

    let mut end = plan.arrival_time + 1000.0 * plan.cold_tokens as f64 / cold;
    end += plan
        .decode_tokens
        .iter()
        .map(|&d| 1000.0 * d as f64 / decode)
        .sum::<f64>();
    end += plan.tool_delays.iter().sum::<f64>();
    end += plan
        .resume_tokens
        .iter()
        .map(|&r| 1000.0 * r as f64 / resume)
        .sum::<f64>();
    let last = trace
        .events
        .iter()
        .rev()
        .find(|e| matches!(e.event, EventKind::DecodeStreamCompleted { .. }))
        .unwrap();
    assert!(close(last.time, end), "{} vs {}", last.time, end);
    assert_eq!(trace.footer.sessions_done, 1);
}

#[test]
fn fcfs_carries_queued_prefills_whole() {
    let cfg = SimConfig::default_for(Paradigm::ReAct, 6, Policy::MixedFcfs, 42).unwrap();
    let trace = engine::run(&cfg).unwrap();
    for e in &trace.events {
        if let EventKind::DecodeStepCompleted { chunks, .. } = &e.event {
            for c in chunks {
                let plan = &trace.header.sessions[c.session as usize];
                assert!(c.tokens == plan.cold_tokens || plan.resume_tokens.contains(&c.tokens));
            }
        }
    }
}

#[test]
fn chunked_prefill_respects_chunk_size() {
    let cfg =
        SimConfig::default_for(Paradigm::PlanAndExecute, 4, Policy::ChunkedPrefill, 5).unwrap();
    let trace = engine::run(&cfg).unwrap();
    let mut carried = 0;
    for e in &trace.events {
        if let EventKind::DecodeStepCompleted { chunks, .. } = &e.event {
            assert!(chunks.len() <= 1);
            carried += chunks.iter().map(|c| c.tokens).sum::<u32>();
            assert!(chunks
                .iter()
                .all(|c| c.tokens <= cfg.executor.prefill_chunk_tokens));
        }
    }
    let planned: u32 = trace
        .header
        .sessions
        .iter()
        .map(|p| p.cold_tokens + p.resume_tokens.iter().sum::<u32>())
        .sum();
    assert_eq!(carried, planned);
}

#[test]
fn horizon_truncates_cleanly() {
    let mut cfg = SimConfig::default_for(Paradigm::ReAct, 6, Policy::TpotDriven, 1).unwrap();
    cfg.horizon_ms = Some(2_000.0);
    let trace = engine::run(&cfg).unwrap();
    assert!(trace.footer.truncated);
    assert!(trace.events.iter().all(|e| e.time <= 2_000.0));
    assert!(replay_check(&trace).is_clean());
}

fn any_policy() -> impl Strategy<Value = Policy> {
    prop::sample::select(Policy::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn runs_complete_and_respect_controller_bounds(
        policy in any_policy(),
        plan_and_execute in any::<bool>(),
        concurrency in 1u32..=8,
        seed in any::<u64>(),
    ) {
        let paradigm = if plan_and_execute { Paradigm::PlanAndExecute } else { Paradigm::ReAct };
        let cfg = SimConfig::default_for(paradigm, concurrency, policy, seed).unwrap();
        let trace = engine::run(&cfg).unwrap();
        prop_assert!(!trace.footer.truncated);
        prop_assert!(trace.footer.error.is_none());
        prop_assert_eq!(trace.footer.sessions_done, concurrency);

        let c = &cfg.controller;
        let n = cfg.total_slots();
        for i in &trace.intervals {
            prop_assert!(c.b_min <= i.budget && i.budget <= c.b_max);
            prop_assert!(c.r_base <= i.reservation && i.reservation <= n);
            if policy.is_partitioned() {
                prop_assert_eq!(i.decode_slots + i.prefill_slots, n);
                prop_assert!(i.decode_slots >= 1);
            }
            if !policy.is_adaptive() {
                prop_assert!(!i.updated);
            }
        }
        let replay = replay_check(&trace);
        prop_assert!(replay.is_clean(), "{:?}", replay.mismatches);
    }

    /// Event times never go backwards and sequence numbers are dense.
    #[test]
    fn event_log_is_ordered(policy in any_policy(), seed in any::<u64>()) {
        let cfg = SimConfig::default_for(Paradigm::ReAct, 4, policy, seed).unwrap();
        let trace = engine::run(&cfg).unwrap();
        for (k, w) in trace.events.windows(2).enumerate() {
            prop_assert_eq!(w[0].seq, k as u64);
            prop_assert!(w[0].time <= w[1].time);
        }
    }
}

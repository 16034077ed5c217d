//! TPOT feedback control, request classification and the SM partition.
//!
//! The controller tracks two knobs: the resume-prefill token budget below
//! which resumes are merged into decode steps, and the number of slots
//! reserved for decode. Once per control interval it measures the average
//! decode step duration and nudges both knobs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::workload::{PhaseRequest, RequestKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Feedback-controlled partition and budget.
    TpotDriven,
    /// Fixed partition and budget, no feedback.
    StaticPartition,
    /// One FIFO over the whole GPU; prefills run to completion.
    MixedFcfs,
    /// Fixed-size prefill chunks interleaved with decode steps, whole GPU.
    ChunkedPrefill,
    /// Budget feedback only; prefill and decode time-slice the whole GPU.
    NoIsolation,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::TpotDriven,
        Policy::StaticPartition,
        Policy::MixedFcfs,
        Policy::ChunkedPrefill,
        Policy::NoIsolation,
    ];

    pub fn parse(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "tpot_driven" | "agentserve" => Some(Policy::TpotDriven),
            "static_partition" | "static" | "no_alg" => Some(Policy::StaticPartition),
            "mixed_fcfs" | "fcfs" => Some(Policy::MixedFcfs),
            "chunked_prefill" | "chunked" => Some(Policy::ChunkedPrefill),
            "no_isolation" | "no_green" => Some(Policy::NoIsolation),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Policy::TpotDriven => "tpot_driven",
            Policy::StaticPartition => "static_partition",
            Policy::MixedFcfs => "mixed_fcfs",
            Policy::ChunkedPrefill => "chunked_prefill",
            Policy::NoIsolation => "no_isolation",
        }
    }

    /// Whether decode and prefill run in disjoint SM partitions.
    pub fn is_partitioned(self) -> bool {
        matches!(self, Policy::TpotDriven | Policy::StaticPartition)
    }

    /// Whether the controller updates its state from TPOT samples.
    pub fn is_adaptive(self) -> bool {
        matches!(self, Policy::TpotDriven | Policy::NoIsolation)
    }

    /// Whether resumes under the budget are merged into decode steps.
    pub fn merges_resumes(self) -> bool {
        matches!(
            self,
            Policy::TpotDriven | Policy::StaticPartition | Policy::NoIsolation
        )
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// ms per step.
    pub theta_low: f64,
    /// ms per step.
    pub theta_high: f64,
    /// Slots added or removed per update.
    pub delta_r: u32,
    /// Tokens added or removed per update.
    pub delta_b: u32,
    /// Control interval, ms.
    pub delta_t: f64,
    pub b_min: u32,
    pub b_max: u32,
    /// Floor of the decode reservation, slots.
    pub r_base: u32,
    pub initial_b: u32,
    pub initial_r: u32,
}

impl ControllerConfig {
    pub fn validate(&self, total_slots: u32) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::new(m));
        if !(self.theta_low > 0.0
            && self.theta_low < self.theta_high
            && self.theta_high.is_finite())
        {
            return fail(format!(
                "need 0 < theta_low < theta_high, got {} / {}",
                self.theta_low, self.theta_high
            ));
        }
        if !(self.b_min <= self.initial_b && self.initial_b <= self.b_max) {
            return fail(format!(
                "need b_min <= initial_b <= b_max, got {} / {} / {}",
                self.b_min, self.initial_b, self.b_max
            ));
        }
        if self.r_base < 1 {
            return fail("r_base must be >= 1 so decode always holds a slot".into());
        }
        if !(self.r_base <= self.initial_r && self.initial_r <= total_slots) {
            return fail(format!(
                "need r_base <= initial_r <= {total_slots}, got {} / {}",
                self.r_base, self.initial_r
            ));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return fail(format!("delta_t must be positive, got {}", self.delta_t));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub budget: u32,
    pub reservation: u32,
    /// Decode time accumulated this interval, ms.
    pub interval_decode_time: f64,
    pub interval_decode_steps: u64,
}

impl ControllerState {
    pub fn new(cfg: &ControllerConfig) -> Self {
        Self {
            budget: cfg.initial_b,
            reservation: cfg.initial_r,
            interval_decode_time: 0.0,
            interval_decode_steps: 0,
        }
    }

    /// Records one completed decode step of `duration_ms`.
    pub fn record_step(&mut self, duration_ms: f64) {
        self.interval_decode_time += duration_ms;
        self.interval_decode_steps += 1;
    }
}

/// Average step duration over the interval, or `None` if no step finished.
/// Resets the accumulators either way.
pub fn measure_tpot_step(state: &mut ControllerState) -> Option<f64> {
    let tpot = (state.interval_decode_steps > 0)
        .then(|| state.interval_decode_time / state.interval_decode_steps as f64);
    state.interval_decode_time = 0.0;
    state.interval_decode_steps = 0;
    tpot
}

/// One feedback step. Both comparisons are strict.
pub fn controller_update(
    state: &ControllerState,
    tpot: f64,
    cfg: &ControllerConfig,
    total_slots: u32,
) -> ControllerState {
    let mut next = *state;
    if tpot > cfg.theta_high {
        next.budget = cfg.b_min.max(state.budget.saturating_sub(cfg.delta_b));
        next.reservation = total_slots.min(state.reservation + cfg.delta_r);
    } else if tpot < cfg.theta_low {
        next.budget = cfg.b_max.min(state.budget + cfg.delta_b);
        next.reservation = cfg
            .r_base
            .max(state.reservation.saturating_sub(cfg.delta_r));
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueName {
    Decode,
    Prefill,
}

/// Where a request goes: decode streams and resumes within the budget join
/// the decode queue; cold prefills and larger resumes go to the prefill
/// queue.
pub fn classify(request: &PhaseRequest, budget: u32) -> QueueName {
    match request.kind {
        RequestKind::DecodeStream => QueueName::Decode,
        RequestKind::ResumePrefill if request.length_tokens <= budget => QueueName::Decode,
        RequestKind::ResumePrefill | RequestKind::ColdPrefill => QueueName::Prefill,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Queues {
    pub decode: VecDeque<PhaseRequest>,
    pub prefill: VecDeque<PhaseRequest>,
}

impl Queues {
    pub fn is_empty(&self) -> bool {
        self.decode.is_empty() && self.prefill.is_empty()
    }
}

pub fn classify_and_enqueue(
    request: PhaseRequest,
    state: &ControllerState,
    queues: &mut Queues,
) -> QueueName {
    let queue = classify(&request, state.budget);
    match queue {
        QueueName::Decode => queues.decode.push_back(request),
        QueueName::Prefill => queues.prefill.push_back(request),
    }
    queue
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub decode_slots: u32,
    pub prefill_slots: u32,
    pub admitted_budget: u32,
    /// Both sides use the whole GPU and serialize or time-slice on it.
    pub shared: bool,
}

/// Partition for the coming interval. `static_decode_slots` is the fixed
/// decode share used by [`Policy::StaticPartition`].
pub fn decide(
    policy: Policy,
    state: &ControllerState,
    total_slots: u32,
    static_decode_slots: u32,
) -> Result<PolicyDecision, ConfigError> {
    let partition = |decode: u32| {
        if decode == 0 || decode > total_slots {
            Err(ConfigError::new(format!(
                "decode reservation {decode} is outside 1..={total_slots}"
            )))
        } else {
            Ok(PolicyDecision {
                decode_slots: decode,
                prefill_slots: total_slots - decode,
                admitted_budget: state.budget,
                shared: false,
            })
        }
    };
    match policy {
        Policy::TpotDriven => partition(state.reservation),
        Policy::StaticPartition => partition(static_decode_slots),
        Policy::MixedFcfs | Policy::ChunkedPrefill | Policy::NoIsolation => Ok(PolicyDecision {
            decode_slots: total_slots,
            prefill_slots: total_slots,
            admitted_budget: state.budget,
            shared: true,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> ControllerConfig {
        ControllerConfig {
            theta_low: 5.0,
            theta_high: 10.0,
            delta_r: 1,
            delta_b: 64,
            delta_t: 250.0,
            b_min: 64,
            b_max: 1024,
            r_base: 2,
            initial_b: 256,
            initial_r: 4,
        }
    }

    fn state(budget: u32, reservation: u32) -> ControllerState {
        ControllerState {
            budget,
            reservation,
            interval_decode_time: 0.0,
            interval_decode_steps: 0,
        }
    }

    fn req(kind: RequestKind, len: u32) -> PhaseRequest {
        PhaseRequest {
            session_id: 0,
            kind,
            length_tokens: len,
            issue_time: 0.0,
        }
    }

    #[test]
    fn tpot_is_time_over_steps() {
        let mut s = state(256, 4);
        s.interval_decode_time = 100.0;
        s.interval_decode_steps = 50;
        assert_eq!(measure_tpot_step(&mut s), Some(2.0));
        assert_eq!((s.interval_decode_time, s.interval_decode_steps), (0.0, 0));
        assert_eq!(measure_tpot_step(&mut s), None);
    }

    #[test]
    fn update_branches() {
        let c = cfg();
        let up = controller_update(&state(256, 4), 12.0, &c, 10);
        assert_eq!((up.budget, up.reservation), (192, 5));

        let down = controller_update(&state(1024, 3), 3.0, &c, 10);
        assert_eq!((down.budget, down.reservation), (1024, 2));
        let floor = controller_update(&down, 3.0, &c, 10);
        assert_eq!(floor.reservation, 2);

        for tpot in [5.0, 7.5, 10.0] {
            assert_eq!(
                controller_update(&state(256, 4), tpot, &c, 10),
                state(256, 4)
            );
        }
        let top = controller_update(&state(64, 10), 50.0, &c, 10);
        assert_eq!((top.budget, top.reservation), (64, 10));
    }

    #[test]
    fn classification_examples() {
        let s = state(256, 4);
        assert_eq!(
            classify(&req(RequestKind::ResumePrefill, 56), s.budget),
            QueueName::Decode
        );
        assert_eq!(
            classify(&req(RequestKind::ResumePrefill, 256), s.budget),
            QueueName::Decode
        );
        assert_eq!(
            classify(&req(RequestKind::ResumePrefill, 421), s.budget),
            QueueName::Prefill
        );
        assert_eq!(
            classify(&req(RequestKind::ColdPrefill, 3000), s.budget),
            QueueName::Prefill
        );
        assert_eq!(
            classify(&req(RequestKind::ColdPrefill, 1), u32::MAX),
            QueueName::Prefill
        );
        assert_eq!(
            classify(&req(RequestKind::DecodeStream, 5000), 0),
            QueueName::Decode
        );

        let mut q = Queues::default();
        classify_and_enqueue(req(RequestKind::ResumePrefill, 56), &s, &mut q);
        classify_and_enqueue(req(RequestKind::ColdPrefill, 3000), &s, &mut q);
        assert_eq!((q.decode.len(), q.prefill.len()), (1, 1));
    }

    #[test]
    fn decisions() {
        let d = decide(Policy::TpotDriven, &state(256, 4), 10, 5).unwrap();
        assert_eq!((d.decode_slots, d.prefill_slots, d.shared), (4, 6, false));
        let d = decide(Policy::StaticPartition, &state(256, 9), 10, 5).unwrap();
        assert_eq!((d.decode_slots, d.prefill_slots), (5, 5));
        let d = decide(Policy::MixedFcfs, &state(256, 4), 10, 5).unwrap();
        assert_eq!((d.decode_slots, d.prefill_slots, d.shared), (10, 10, true));
        assert!(decide(Policy::StaticPartition, &state(256, 4), 10, 0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        assert!(c.validate(10).is_ok());
        c.r_base = 0;
        c.initial_r = 0;
        assert!(c.validate(10).is_err());
        let mut c = cfg();
        c.theta_low = c.theta_high;
        assert!(c.validate(10).is_err());
        let mut c = cfg();
        c.initial_r = 11;
        assert!(c.validate(10).is_err());
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(Policy::parse(p.name()), Some(p));
        }
        assert_eq!(Policy::parse("agentserve"), Some(Policy::TpotDriven));
        assert_eq!(Policy::parse("nope"), None);
    }

    proptest! {
        #[test]
        fn update_stays_in_bounds(b in 64u32..=1024, r in 2u32..=10, tpot in 0.0f64..40.0) {
            let c = cfg();
            let next = controller_update(&state(b, r), tpot, &c, 10);
            prop_assert!(c.b_min <= next.budget && next.budget <= c.b_max);
            prop_assert!(c.r_base <= next.reservation && next.reservation <= 10);
        }

        #[test]
        fn larger_tpot_never_shrinks_reservation(b in 64u32..=1024, r in 2u32..=10, x in 0.0f64..40.0, y in 0.0f64..40.0) {
            let c = cfg();
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            let a = controller_update(&state(b, r), lo, &c, 10);
            let z = controller_update(&state(b, r), hi, &c, 10);
            prop_assert!(z.reservation >= a.reservation);
            prop_assert!(z.budget <= a.budget);
        }

        #[test]
        fn dead_band_is_fixed_point(b in 64u32..=1024, r in 2u32..=10, t in 5.0f64..=10.0) {
            let s = state(b, r);
            prop_assert_eq!(controller_update(&s, t, &cfg(), 10), s);
        }

        #[test]
        fn every_request_lands_in_one_queue(kind in 0u8..3, len in 1u32..5000, budget in 0u32..2000) {
            let kind = [RequestKind::ColdPrefill, RequestKind::ResumePrefill, RequestKind::DecodeStream][kind as usize];
            let mut q = Queues::default();
            classify_and_enqueue(req(kind, len), &state(budget, 4), &mut q);
            prop_assert_eq!(q.decode.len() + q.prefill.len(), 1);
            prop_assert!(q.decode.iter().all(|r| r.kind != RequestKind::ColdPrefill));
        }
    }
}

//! Execution-side model: the slot menu, context rebinding, the KV registry
//! and job progress at profiled rates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProtocolError};
use crate::profile::{Phase, ProfileBundle};
use crate::workload::{PhaseRequest, RequestKind};

/// Complementary decode/prefill bindings over a fixed menu of levels
/// `1..=total_slots`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSet {
    total_slots: u32,
    decode_level: u32,
}

impl SlotSet {
    pub fn new(total_slots: u32, decode_level: u32) -> Self {
        assert!(total_slots >= 1 && (1..=total_slots).contains(&decode_level));
        Self {
            total_slots,
            decode_level,
        }
    }

    pub fn total_slots(&self) -> u32 {
        self.total_slots
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<u32> {
        1..=self.total_slots
    }

    pub fn decode_level(&self) -> u32 {
        self.decode_level
    }

    pub fn prefill_level(&self) -> u32 {
        self.total_slots - self.decode_level
    }
}

/// Smallest level that covers `target_slots`. Targets below one slot get the
/// first level.
pub fn select_slot(target_slots: f64, slots: &SlotSet) -> Result<u32, Error> {
    // absorb float noise such as 0.3 * 10 = 3.0000000000000004
    let snapped = (target_slots * 1e9).round() / 1e9;
    if !snapped.is_finite() || snapped > slots.total_slots as f64 {
        return Err(Error::InfeasibleReservation {
            target: target_slots,
            total: slots.total_slots,
        });
    }
    Ok((snapped.ceil() as u32).max(1))
}

/// [`select_slot`] for a target given as a fraction of all SMs.
pub fn select_slot_for_share(share: f64, slots: &SlotSet) -> Result<u32, Error> {
    select_slot(share * slots.total_slots as f64, slots)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RebindEvent {
    pub time: f64,
    pub from_level: u32,
    pub to_level: u32,
    pub overhead: f64,
}

/// Switches the decode binding to `level`; the prefill binding follows.
/// Returns `None` when nothing changes.
pub fn rebind(slots: &mut SlotSet, level: u32, now: f64, overhead_ms: f64) -> Option<RebindEvent> {
    assert!(
        slots.levels().contains(&level),
        "level {level} not on the menu"
    );
    if level == slots.decode_level {
        return None;
    }
    let event = RebindEvent {
        time: now,
        from_level: slots.decode_level,
        to_level: level,
        overhead: overhead_ms,
    };
    slots.decode_level = level;
    Some(event)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvEntry {
    pub prefix_tokens: u64,
    pub sealed: bool,
}

/// Per-session KV prefix lengths with a read-only seal set at prefill
/// completion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvCacheRegistry {
    entries: BTreeMap<u32, KvEntry>,
}

impl KvCacheRegistry {
    pub fn get(&self, session: u32) -> Option<KvEntry> {
        self.entries.get(&session).copied()
    }

    /// Marks the entry writable while a prefill extends it.
    pub fn begin_prefill(&mut self, session: u32) {
        self.entries
            .entry(session)
            .or_insert(KvEntry {
                prefix_tokens: 0,
                sealed: false,
            })
            .sealed = false;
    }

    /// Extends and seals the entry. Decode may read it immediately.
    pub fn commit(&mut self, session: u32, new_prefix: u64) -> Result<(), ProtocolError> {
        let entry = self.entries.entry(session).or_insert(KvEntry {
            prefix_tokens: 0,
            sealed: false,
        });
        if new_prefix < entry.prefix_tokens {
            return Err(ProtocolError::PrefixShrink {
                session,
                current: entry.prefix_tokens,
                requested: new_prefix,
            });
        }
        entry.prefix_tokens = new_prefix;
        entry.sealed = true;
        Ok(())
    }

    pub fn require_sealed(&self, session: u32) -> Result<(), ProtocolError> {
        match self.entries.get(&session) {
            None => Err(ProtocolError::MissingKv { session }),
            Some(e) if !e.sealed => Err(ProtocolError::UnsealedDecode { session }),
            Some(_) => Ok(()),
        }
    }

    /// Appends generated tokens to a sealed entry.
    pub fn append_decoded(&mut self, session: u32, tokens: u64) -> Result<(), ProtocolError> {
        self.require_sealed(session)?;
        let e = self.entries.get_mut(&session).expect("checked above");
        e.prefix_tokens += tokens;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    Decode,
    Prefill,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveJob {
    pub request: PhaseRequest,
    pub remaining_tokens: u32,
    pub context: Context,
}

impl ActiveJob {
    pub fn new(request: PhaseRequest, context: Context) -> Self {
        Self {
            request,
            remaining_tokens: request.length_tokens,
            context,
        }
    }

    pub fn profile_phase(&self) -> Phase {
        match self.request.kind {
            RequestKind::ColdPrefill => Phase::ColdPrefill,
            RequestKind::ResumePrefill => Phase::ResumePrefill,
            RequestKind::DecodeStream => Phase::Decode,
        }
    }
}

/// Duration in ms of one decode step carrying `streams` tokens and a
/// `chunk`-token merged prefill at the given rates (tokens/s).
pub fn step_duration_ms(streams: u32, decode_rate: f64, chunk: u32, chunk_rate: f64) -> f64 {
    let mut secs = 0.0;
    if streams > 0 {
        secs += streams as f64 / decode_rate;
    }
    if chunk > 0 {
        secs += chunk as f64 / chunk_rate;
    }
    1000.0 * secs
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub start: f64,
    pub duration: f64,
    pub sessions: Vec<u32>,
    pub chunk: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Progress {
    pub steps: Vec<StepRecord>,
    /// Time consumed by whole steps, ms.
    pub decode_busy: f64,
    pub prefill_tokens: f64,
}

/// Runs both contexts side by side for `dt` ms from `now`.
///
/// The decode side executes whole steps only: every job in `decode` that is a
/// [`RequestKind::DecodeStream`] emits one token per step, and the first
/// merged resume (if any) contributes a chunk of up to `chunk_tokens`. The
/// prefill job advances at its phase rate on the prefill binding. Jobs are
/// updated in place; finished decode streams stay in the vector with zero
/// tokens remaining.
#[allow(clippy::too_many_arguments)]
pub fn advance(
    decode: &mut [ActiveJob],
    prefill: Option<&mut ActiveJob>,
    slots: &SlotSet,
    bundle: &ProfileBundle,
    kv: &KvCacheRegistry,
    now: f64,
    dt: f64,
    chunk_tokens: u32,
) -> Result<Progress, Error> {
    let g = bundle.granularity();
    let dsms = slots.decode_level() * g;
    let psms = slots.prefill_level() * g;
    let mu_d = bundle.lookup(Phase::Decode, dsms)?;
    let mu_r = bundle.lookup(Phase::ResumePrefill, dsms)?;
    let mut out = Progress::default();
    let mut t = 0.0;
    loop {
        let sessions: Vec<u32> = decode
            .iter()
            .filter(|j| j.request.kind == RequestKind::DecodeStream && j.remaining_tokens > 0)
            .map(|j| j.request.session_id)
            .collect();
        let merged = decode
            .iter()
            .position(|j| j.request.kind == RequestKind::ResumePrefill && j.remaining_tokens > 0);
        let chunk = merged.map_or(0, |i| decode[i].remaining_tokens.min(chunk_tokens));
        if sessions.is_empty() && chunk == 0 {
            break;
        }
        let d = step_duration_ms(sessions.len() as u32, mu_d, chunk, mu_r);
        if t + d > dt {
            break;
        }
        for s in &sessions {
            kv.require_sealed(*s)?;
        }
        for j in decode.iter_mut() {
            if j.request.kind == RequestKind::DecodeStream && j.remaining_tokens > 0 {
                j.remaining_tokens -= 1;
            }
        }
        if let Some(i) = merged {
            decode[i].remaining_tokens -= chunk;
            out.prefill_tokens += chunk as f64;
        }
        out.steps.push(StepRecord {
            start: now + t,
            duration: d,
            sessions,
            chunk,
        });
        t += d;
    }
    out.decode_busy = t;
    if let Some(job) = prefill {
        if psms > 0 {
            let rate = bundle.lookup(job.profile_phase(), psms)?;
            let done = (rate * dt / 1000.0).min(job.remaining_tokens as f64);
            job.remaining_tokens -= done.floor() as u32;
            out.prefill_tokens += done;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{PhaseProfile, ProfilePoint};

    fn flat_bundle(decode: f64, cold: f64, resume: f64) -> ProfileBundle {
        let mk = |phase, r: f64| {
            PhaseProfile::new(
                phase,
                40,
                4,
                (1..=10)
                    .map(|k| ProfilePoint {
                        sms: 4 * k,
                        tokens_per_second: r,
                    })
                    .collect(),
            )
            .unwrap()
        };
        ProfileBundle::new(
            mk(Phase::Decode, decode),
            mk(Phase::ColdPrefill, cold),
            mk(Phase::ResumePrefill, resume),
        )
        .unwrap()
    }

    fn req(session: u32, kind: RequestKind, len: u32) -> PhaseRequest {
        PhaseRequest {
            session_id: session,
            kind,
            length_tokens: len,
            issue_time: 0.0,
        }
    }

    #[test]
    fn nearest_level_above() {
        let s = SlotSet::new(10, 4);
        assert_eq!(select_slot_for_share(0.37, &s).unwrap(), 4);
        assert_eq!(select_slot_for_share(0.5, &s).unwrap(), 5);
        assert_eq!(select_slot_for_share(0.3, &s).unwrap(), 3);
        assert_eq!(select_slot_for_share(1.0, &s).unwrap(), 10);
        assert_eq!(select_slot(0.2, &s).unwrap(), 1);
        assert!(matches!(
            select_slot_for_share(1.01, &s),
            Err(Error::InfeasibleReservation { .. })
        ));
    }

    #[test]
    fn rebinding() {
        let mut s = SlotSet::new(10, 4);
        assert_eq!(rebind(&mut s, 4, 1000.0, 0.05), None);
        let ev = rebind(&mut s, 5, 1000.0, 0.05).unwrap();
        assert_eq!(
            ev,
            RebindEvent {
                time: 1000.0,
                from_level: 4,
                to_level: 5,
                overhead: 0.05
            }
        );
        assert_eq!(s.decode_level() + s.prefill_level(), 10);
    }

    #[test]
    fn kv_protocol() {
        let mut kv = KvCacheRegistry::default();
        assert_eq!(
            kv.require_sealed(1),
            Err(ProtocolError::MissingKv { session: 1 })
        );
        kv.begin_prefill(1);
        assert_eq!(
            kv.require_sealed(1),
            Err(ProtocolError::UnsealedDecode { session: 1 })
        );
        kv.commit(1, 3000).unwrap();
        assert!(kv.require_sealed(1).is_ok());
        kv.begin_prefill(1);
        kv.commit(1, 3056).unwrap();
        assert_eq!(kv.get(1).unwrap().prefix_tokens, 3056);
        assert!(matches!(
            kv.commit(1, 2999),
            Err(ProtocolError::PrefixShrink { .. })
        ));
    }

    #[test]
    fn step_durations() {
        assert_eq!(step_duration_ms(1, 50.0, 0, 1.0), 20.0);
        assert_eq!(step_duration_ms(4, 80.0, 0, 1.0), 50.0);
        assert_eq!(step_duration_ms(2, 100.0, 64, 3200.0), 40.0);
    }

    #[test]
    fn advance_runs_whole_steps_and_prefill() {
        let bundle = flat_bundle(50.0, 600.0, 1000.0);
        let slots = SlotSet::new(10, 5);
        let mut kv = KvCacheRegistry::default();
        kv.commit(0, 10).unwrap();
        let mut decode = vec![ActiveJob::new(
            req(0, RequestKind::DecodeStream, 3),
            Context::Decode,
        )];
        let mut cold = ActiveJob::new(req(1, RequestKind::ColdPrefill, 3000), Context::Prefill);
        let p = advance(
            &mut decode,
            Some(&mut cold),
            &slots,
            &bundle,
            &kv,
            0.0,
            50.0,
            64,
        )
        .unwrap();
        assert_eq!(p.steps.len(), 2);
        assert_eq!(p.steps[1].start, 20.0);
        assert_eq!(decode[0].remaining_tokens, 1);
        assert_eq!(cold.remaining_tokens, 2970);

        // 3000 tokens at 600 tok/s take 5000 ms
        let mut cold = ActiveJob::new(req(1, RequestKind::ColdPrefill, 3000), Context::Prefill);
        advance(
            &mut [],
            Some(&mut cold),
            &slots,
            &bundle,
            &kv,
            0.0,
            4999.0,
            64,
        )
        .unwrap();
        assert!(cold.remaining_tokens > 0);
        let mut cold = ActiveJob::new(req(1, RequestKind::ColdPrefill, 3000), Context::Prefill);
        advance(
            &mut [],
            Some(&mut cold),
            &slots,
            &bundle,
            &kv,
            0.0,
            5000.0,
            64,
        )
        .unwrap();
        assert_eq!(cold.remaining_tokens, 0);
    }

    #[test]
    fn advance_rejects_unsealed_decode() {
        let bundle = flat_bundle(50.0, 600.0, 1000.0);
        let slots = SlotSet::new(10, 5);
        let mut kv = KvCacheRegistry::default();
        kv.begin_prefill(0);
        let mut decode = vec![ActiveJob::new(
            req(0, RequestKind::DecodeStream, 3),
            Context::Decode,
        )];
        let err = advance(&mut decode, None, &slots, &bundle, &kv, 0.0, 50.0, 64).unwrap_err();
        assert!(matches!(
            err,
            Error::Protocol(ProtocolError::UnsealedDecode { session: 0 })
        ));
    }

    #[test]
    fn merged_resume_rides_in_chunks() {
        let bundle = flat_bundle(100.0, 600.0, 3200.0);
        let slots = SlotSet::new(10, 5);
        let mut kv = KvCacheRegistry::default();
        kv.commit(0, 10).unwrap();
        let mut decode = vec![
            ActiveJob::new(req(0, RequestKind::DecodeStream, 10), Context::Decode),
            ActiveJob::new(req(1, RequestKind::ResumePrefill, 100), Context::Decode),
        ];
        let p = advance(&mut decode, None, &slots, &bundle, &kv, 0.0, 1000.0, 64).unwrap();
        assert_eq!(p.steps[0].chunk, 64);
        assert_eq!(p.steps[1].chunk, 36);
        assert_eq!(p.steps[2].chunk, 0);
        assert_eq!(p.steps[0].duration, 30.0);
        assert_eq!(decode[1].remaining_tokens, 0);
    }
}

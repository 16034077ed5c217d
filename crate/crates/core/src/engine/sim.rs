//! The discrete-event loop.
//!
//! Two logical executors share one clock: a decode side that runs atomic
//! steps over every active stream, and a prefill context that works through
//! its queue one job at a time. Policies without a prefill context carry
//! prefill work inside the decode steps instead. Wakeups are ordered by time, then by kind
//! (completions, control tick, tool returns, arrivals), then by insertion.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::engine::config::SimConfig;
use crate::engine::trace::{
    ChunkRecord, Event, EventKind, InitialState, IntervalSummary, Trace, TraceFooter, TraceHeader,
    TRACE_SCHEMA,
};
use crate::error::{Error, ProtocolError};
use crate::executor::{rebind, step_duration_ms, Context, KvCacheRegistry, SlotSet};
use crate::profile::{Phase, ProfileBundle};
use crate::scheduler::{
    classify, controller_update, decide, measure_tpot_step, ControllerState, Policy,
    PolicyDecision, QueueName, Queues,
};
use crate::workload::{
    generate_plans, Completion, PhaseRequest, RequestKind, SessionPhase, SessionState,
};

/// A finished run. `error` is set when the run aborted on a protocol
/// violation; the trace then holds everything up to the failure.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub trace: Trace,
    pub error: Option<ProtocolError>,
}

/// Runs `config` to completion (or its horizon). Protocol violations are
/// returned as errors; use [`run_outcome`] to keep the partial trace.
pub fn run(config: &SimConfig) -> Result<Trace, Error> {
    let out = run_outcome(config)?;
    match out.error {
        Some(e) => Err(e.into()),
        None => Ok(out.trace),
    }
}

pub fn run_outcome(config: &SimConfig) -> Result<Outcome, Error> {
    config.validate()?;
    let plans = generate_plans(&config.workload, config.seed)?;
    let mut sim = Sim::new(config, plans)?;
    let error = match sim.run_loop() {
        Ok(()) => None,
        Err(Error::Protocol(p)) => Some(p),
        Err(other) => return Err(other),
    };
    Ok(Outcome {
        trace: sim.finish(error.as_ref()),
        error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Wake {
    StepDone(u64),
    LaneDone(u64),
    LaneResume(u64),
    Tick,
    ToolReturn(u32),
    Arrival(u32),
}

impl Wake {
    fn priority(self) -> u8 {
        match self {
            Wake::StepDone(_) | Wake::LaneDone(_) | Wake::LaneResume(_) => 0,
            Wake::Tick => 1,
            Wake::ToolReturn(_) => 2,
            Wake::Arrival(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    priority: u8,
    seq: u64,
    wake: Wake,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.priority.cmp(&self.priority))
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct Stream {
    session: u32,
    remaining: u32,
    total: u32,
}

/// A prefill carried inside decode steps.
#[derive(Debug, Clone, Copy)]
struct Carried {
    request: PhaseRequest,
    remaining: u32,
}

#[derive(Debug, Clone)]
struct Step {
    start: f64,
    duration: f64,
    sessions: Vec<u32>,
    chunks: Vec<ChunkRecord>,
    sms: u32,
    /// Prefill context was busy when the step began (time-sliced policy).
    contended: bool,
}

#[derive(Debug, Clone, Copy)]
struct LaneJob {
    request: PhaseRequest,
    remaining: f64,
    seg_start: f64,
    /// Effective tokens/s over the open segment.
    rate: f64,
    share: f64,
    sms: u32,
}

#[derive(Debug, Default, Clone)]
struct Acc {
    decode_time: f64,
    decode_steps: u64,
    lane_cold_tokens: f64,
    lane_resume_tokens: f64,
    step_cold_tokens: f64,
    step_resume_tokens: f64,
    lane_cold_busy: f64,
    lane_resume_busy: f64,
    backlog: f64,
    backlog_overhead: f64,
    rebind_overhead: f64,
}

fn phase_of(kind: RequestKind) -> Phase {
    match kind {
        RequestKind::ColdPrefill => Phase::ColdPrefill,
        RequestKind::ResumePrefill => Phase::ResumePrefill,
        RequestKind::DecodeStream => Phase::Decode,
    }
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    bundle: &'a ProfileBundle,
    g: u32,
    total_slots: u32,
    horizon: f64,
    now: f64,
    heap: BinaryHeap<Pending>,
    wake_seq: u64,
    events: Vec<Event>,
    intervals: Vec<IntervalSummary>,
    sessions: Vec<SessionState>,
    done: u32,
    truncated: bool,
    kv: KvCacheRegistry,
    ctrl: ControllerState,
    decision: PolicyDecision,
    initial: InitialState,
    slots: Option<SlotSet>,
    queues: Queues,

    streams: Vec<Stream>,
    carried: VecDeque<Carried>,
    step: Option<Step>,
    step_gen: u64,
    decode_pause_until: f64,
    decode_overhead_pending: f64,

    lane: Option<LaneJob>,
    lane_gen: u64,
    pause_from: f64,
    pause_until: f64,

    /// Set while a finished step is being booked; holds back the next launch
    /// until every completion of that step has been issued.
    settling: bool,

    /// Sessions whose current prefill sits outside the decode queue.
    outstanding: Vec<bool>,
    outstanding_count: u32,

    acc: Acc,
    interval_start: f64,
    interval_index: u64,
    last_mark: f64,
    ticks: u64,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig, plans: Vec<crate::workload::SessionPlan>) -> Result<Self, Error> {
        let total_slots = cfg.total_slots();
        let ctrl = ControllerState::new(&cfg.controller);
        let decision = decide(
            cfg.policy,
            &ctrl,
            total_slots,
            cfg.executor.static_decode_slots,
        )?;
        let slots = cfg
            .policy
            .is_partitioned()
            .then(|| SlotSet::new(total_slots, decision.decode_slots));
        let n = plans.len();
        let sessions: Vec<SessionState> = plans
            .into_iter()
            .map(|p| SessionState::new(cfg.workload.paradigm.paradigm, p))
            .collect();
        let mut sim = Sim {
            cfg,
            bundle: &cfg.profile,
            g: cfg.profile.granularity(),
            total_slots,
            horizon: cfg.horizon(),
            now: 0.0,
            heap: BinaryHeap::new(),
            wake_seq: 0,
            events: Vec::new(),
            intervals: Vec::new(),
            sessions,
            done: 0,
            truncated: false,
            kv: KvCacheRegistry::default(),
            ctrl,
            decision,
            initial: InitialState {
                budget: ctrl.budget,
                reservation: ctrl.reservation,
                decode_slots: decision.decode_slots,
                prefill_slots: decision.prefill_slots,
            },
            slots,
            queues: Queues::default(),
            streams: Vec::new(),
            carried: VecDeque::new(),
            step: None,
            step_gen: 0,
            decode_pause_until: 0.0,
            decode_overhead_pending: 0.0,
            lane: None,
            lane_gen: 0,
            pause_from: 0.0,
            pause_until: 0.0,
            settling: false,
            outstanding: vec![false; n],
            outstanding_count: 0,
            acc: Acc::default(),
            interval_start: 0.0,
            interval_index: 0,
            last_mark: 0.0,
            ticks: 0,
        };
        for i in 0..n {
            let t = sim.sessions[i].arrival_time;
            sim.schedule(t, Wake::Arrival(i as u32));
        }
        sim.schedule(cfg.controller.delta_t, Wake::Tick);
        Ok(sim)
    }

    fn schedule(&mut self, time: f64, wake: Wake) {
        self.wake_seq += 1;
        self.heap.push(Pending {
            time,
            priority: wake.priority(),
            seq: self.wake_seq,
            wake,
        });
    }

    fn emit(&mut self, event: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(Event {
            seq,
            time: self.now,
            event,
        });
    }

    fn backlog_active(&self) -> bool {
        self.outstanding_count > 0
    }

    /// Accumulates time-based interval quantities up to `t`.
    fn mark(&mut self, t: f64) {
        if t > self.last_mark && self.backlog_active() {
            self.acc.backlog += t - self.last_mark;
            let lo = self.last_mark.max(self.pause_from);
            let hi = t.min(self.pause_until);
            if hi > lo {
                self.acc.backlog_overhead += hi - lo;
            }
        }
        self.last_mark = self.last_mark.max(t);
    }

    fn run_loop(&mut self) -> Result<(), Error> {
        let n = self.sessions.len() as u32;
        while self.done < n {
            let Some(p) = self.heap.pop() else { break };
            if p.time > self.horizon {
                self.mark(self.horizon);
                self.now = self.horizon;
                self.truncated = true;
                break;
            }
            self.mark(p.time);
            self.now = p.time;
            match p.wake {
                Wake::Arrival(s) => self.on_arrival(s)?,
                Wake::ToolReturn(s) => self.on_tool_return(s)?,
                Wake::Tick => self.on_tick()?,
                Wake::StepDone(gen) if gen == self.step_gen => self.on_step_done()?,
                Wake::LaneDone(gen) if gen == self.lane_gen => self.on_lane_done()?,
                Wake::LaneResume(gen) if gen == self.lane_gen => self.on_lane_resume()?,
                _ => {}
            }
        }
        if self.done < n && !self.truncated {
            // nothing left to wake: only possible if work can never finish
            self.truncated = true;
        }
        Ok(())
    }

    fn finish(mut self, error: Option<&ProtocolError>) -> Trace {
        self.close_segment();
        let tpot = measure_tpot_step(&mut self.ctrl);
        if self.now > self.interval_start || self.acc.decode_steps > 0 {
            let summary = self.summary(tpot, false);
            self.intervals.push(summary);
        }
        Trace {
            header: TraceHeader {
                schema: TRACE_SCHEMA.to_string(),
                config: self.cfg.clone(),
                sessions: self.sessions.iter().map(|s| s.plan.clone()).collect(),
                initial: self.initial,
            },
            events: self.events,
            intervals: self.intervals,
            footer: TraceFooter {
                end_ms: self.now,
                truncated: self.truncated,
                sessions_done: self.done,
                error: error.map(|e| e.to_string()),
            },
        }
    }

    fn summary(&self, tpot: Option<f64>, updated: bool) -> IntervalSummary {
        let a = &self.acc;
        IntervalSummary {
            index: self.interval_index,
            start: self.interval_start,
            end: self.now,
            decode_time: a.decode_time,
            decode_steps: a.decode_steps,
            tpot,
            lane_cold_tokens: a.lane_cold_tokens,
            lane_resume_tokens: a.lane_resume_tokens,
            step_cold_tokens: a.step_cold_tokens,
            step_resume_tokens: a.step_resume_tokens,
            lane_cold_busy: a.lane_cold_busy,
            lane_resume_busy: a.lane_resume_busy,
            backlog: a.backlog,
            backlog_overhead: a.backlog_overhead,
            rebind_overhead: a.rebind_overhead,
            decode_slots: self.decision.decode_slots,
            prefill_slots: self.decision.prefill_slots,
            budget: self.ctrl.budget,
            reservation: self.ctrl.reservation,
            updated,
        }
    }

    // ---- requests and session transitions ----

    fn on_arrival(&mut self, s: u32) -> Result<(), Error> {
        self.emit(EventKind::SessionArrival { session: s });
        let req = self.sessions[s as usize].initial_request();
        self.issue(req)
    }

    fn on_tool_return(&mut self, s: u32) -> Result<(), Error> {
        self.emit(EventKind::ToolReturned { session: s });
        let now = self.now;
        if let Some(req) = self.sessions[s as usize].next_phase(Completion::ToolReturn, now)? {
            self.issue(req)?;
        }
        Ok(())
    }

    fn issue(&mut self, req: PhaseRequest) -> Result<(), Error> {
        let policy = self.cfg.policy;
        let queue = match policy {
            Policy::MixedFcfs | Policy::ChunkedPrefill => None,
            _ => Some(classify(&req, self.ctrl.budget)),
        };
        self.emit(EventKind::RequestIssued {
            session: req.session_id,
            request: req.kind,
            tokens: req.length_tokens,
            queue,
        });
        if req.kind.is_prefill() {
            self.kv.begin_prefill(req.session_id);
            if queue != Some(QueueName::Decode) {
                self.outstanding[req.session_id as usize] = true;
                self.outstanding_count += 1;
            }
        }
        match policy {
            Policy::MixedFcfs | Policy::ChunkedPrefill => {
                match req.kind {
                    RequestKind::DecodeStream => self.add_stream(req),
                    _ => self.carried.push_back(Carried {
                        request: req,
                        remaining: req.length_tokens,
                    }),
                }
                self.try_start_step()
            }
            _ => match queue.expect("classified") {
                QueueName::Decode => {
                    self.queues.decode.push_back(req);
                    self.try_start_step()
                }
                QueueName::Prefill => {
                    self.queues.prefill.push_back(req);
                    self.try_start_lane()
                }
            },
        }
    }

    fn add_stream(&mut self, req: PhaseRequest) {
        self.streams.push(Stream {
            session: req.session_id,
            remaining: req.length_tokens,
            total: req.length_tokens,
        });
    }

    fn complete_prefill(&mut self, request: PhaseRequest, context: Context) -> Result<(), Error> {
        let s = request.session_id;
        if self.outstanding[s as usize] {
            self.outstanding[s as usize] = false;
            self.outstanding_count -= 1;
        }
        self.emit(EventKind::PrefillCompleted {
            session: s,
            request: request.kind,
            tokens: request.length_tokens,
            context,
        });
        let prefix = self.kv.get(s).map_or(0, |e| e.prefix_tokens);
        self.kv.commit(s, prefix + request.length_tokens as u64)?;
        let event = match request.kind {
            RequestKind::ColdPrefill => Completion::ColdPrefill,
            _ => Completion::ResumePrefill,
        };
        let now = self.now;
        let next = self.sessions[s as usize].next_phase(event, now)?;
        debug_assert_eq!(
            self.kv.get(s).map(|e| e.prefix_tokens),
            Some(self.sessions[s as usize].cached_prefix)
        );
        if let Some(req) = next {
            self.issue(req)?;
        }
        Ok(())
    }

    fn complete_stream(&mut self, stream: Stream) -> Result<(), Error> {
        self.emit(EventKind::DecodeStreamCompleted {
            session: stream.session,
            tokens: stream.total,
        });
        let now = self.now;
        let session = &mut self.sessions[stream.session as usize];
        session.next_phase(Completion::Decode, now)?;
        match session.phase {
            SessionPhase::Done => self.done += 1,
            _ => {
                let delay = session.pending_tool_delay().expect("awaiting tool");
                self.schedule(now + delay, Wake::ToolReturn(stream.session));
            }
        }
        Ok(())
    }

    // ---- decode side ----

    fn decode_sms(&self) -> u32 {
        if self.decision.shared {
            self.bundle.total_sms()
        } else {
            self.decision.decode_slots * self.g
        }
    }

    fn chunk_tokens(&self) -> u32 {
        match self.cfg.policy {
            Policy::ChunkedPrefill => self.cfg.executor.prefill_chunk_tokens,
            _ => self.cfg.executor.resume_chunk_tokens,
        }
    }

    /// Prefill work the next step carries. A mixed batch takes every queued
    /// prefill whole; the others take one chunk from the head.
    fn next_chunks(&self) -> Vec<ChunkRecord> {
        let record = |c: &Carried, tokens| ChunkRecord {
            session: c.request.session_id,
            request: c.request.kind,
            tokens,
        };
        if self.cfg.policy == Policy::MixedFcfs {
            self.carried
                .iter()
                .map(|c| record(c, c.remaining))
                .collect()
        } else {
            let limit = self.chunk_tokens();
            self.carried
                .front()
                .map(|c| record(c, c.remaining.min(limit)))
                .into_iter()
                .collect()
        }
    }

    /// Starts the next decode step if the decode side is idle and has work.
    fn try_start_step(&mut self) -> Result<(), Error> {
        if self.step.is_some() || self.settling {
            return Ok(());
        }
        while let Some(req) = self.queues.decode.pop_front() {
            match req.kind {
                RequestKind::DecodeStream => self.add_stream(req),
                _ => self.carried.push_back(Carried {
                    request: req,
                    remaining: req.length_tokens,
                }),
            }
        }
        let chunks = self.next_chunks();
        if self.streams.is_empty() && chunks.is_empty() {
            return Ok(());
        }
        self.launch_step(chunks)
    }

    fn launch_step(&mut self, chunks: Vec<ChunkRecord>) -> Result<(), Error> {
        let sms = self.decode_sms();
        for s in &self.streams {
            self.kv.require_sealed(s.session)?;
        }
        let mu_d = self.bundle.lookup(Phase::Decode, sms)?;
        let n = self.streams.len() as u32;
        let mut duration = step_duration_ms(n, mu_d, 0, 1.0);
        for c in &chunks {
            let rate = self.bundle.lookup(phase_of(c.request), sms)?;
            duration += step_duration_ms(0, mu_d, c.tokens, rate);
        }
        let contended = self.cfg.policy == Policy::NoIsolation && self.lane.is_some();
        if contended {
            duration *= 2.0;
        }
        let start = self.now.max(self.decode_pause_until) + self.decode_overhead_pending;
        self.decode_overhead_pending = 0.0;
        self.step = Some(Step {
            start,
            duration,
            sessions: self.streams.iter().map(|s| s.session).collect(),
            chunks,
            sms,
            contended,
        });
        self.step_gen += 1;
        let gen = self.step_gen;
        self.schedule(start + duration, Wake::StepDone(gen));
        self.relane();
        Ok(())
    }

    fn on_step_done(&mut self) -> Result<(), Error> {
        let step = self.step.take().expect("step running");
        self.emit(EventKind::DecodeStepCompleted {
            start: step.start,
            duration: step.duration,
            sessions: step.sessions.clone(),
            chunks: step.chunks.clone(),
            decode_sms: step.sms,
        });
        if !step.sessions.is_empty() {
            self.ctrl.record_step(step.duration);
            self.acc.decode_time += step.duration;
            self.acc.decode_steps += 1;
        }
        let mut finished = Vec::new();
        for st in &mut self.streams {
            if step.sessions.contains(&st.session) {
                st.remaining -= 1;
                self.kv.append_decoded(st.session, 1)?;
            }
        }
        self.streams.retain(|st| {
            if st.remaining == 0 {
                finished.push(*st);
                false
            } else {
                true
            }
        });
        self.settling = true;
        for st in finished {
            self.complete_stream(st)?;
        }
        // chunks were cut from the front of `carried`, in order
        let mut done = Vec::new();
        for c in &step.chunks {
            match c.request {
                RequestKind::ColdPrefill => self.acc.step_cold_tokens += c.tokens as f64,
                _ => self.acc.step_resume_tokens += c.tokens as f64,
            }
            let head = self.carried.front_mut().expect("chunk came from the head");
            head.remaining -= c.tokens;
            if head.remaining == 0 {
                done.push(self.carried.pop_front().expect("head").request);
            }
        }
        for request in done {
            self.complete_prefill(request, Context::Decode)?;
        }
        self.settling = false;
        self.try_start_step()?;
        self.relane();
        Ok(())
    }

    // ---- prefill context ----

    fn lane_sms(&self) -> u32 {
        if self.decision.shared {
            self.bundle.total_sms()
        } else {
            self.decision.prefill_slots * self.g
        }
    }

    /// Fraction of the prefill context's rate available under the current
    /// decode state. Only the time-sliced policy ever gives less than all.
    fn lane_share(&self) -> f64 {
        if self.cfg.policy != Policy::NoIsolation {
            return 1.0;
        }
        match &self.step {
            None => 1.0,
            Some(s) if s.contended => 0.5,
            Some(_) => 0.0,
        }
    }

    /// Starts a segment at `now` with the rate currently in force and
    /// schedules its completion (or the end of a rebind pause).
    fn open_segment(&mut self) {
        self.lane_gen += 1;
        let gen = self.lane_gen;
        let paused = self.now < self.pause_until;
        let share = self.lane_share();
        let sms = self.lane_sms();
        let Some(job) = self.lane.as_mut() else {
            return;
        };
        job.seg_start = self.now;
        job.share = share;
        job.sms = sms;
        job.rate = if paused || sms == 0 {
            0.0
        } else {
            self.bundle
                .lookup(phase_of(job.request.kind), sms)
                .expect("bindings stay on the grid")
                * share
        };
        let (rate, remaining) = (job.rate, job.remaining);
        if paused {
            let at = self.pause_until;
            self.schedule(at, Wake::LaneResume(gen));
        } else if rate > 0.0 {
            self.schedule(self.now + 1000.0 * remaining / rate, Wake::LaneDone(gen));
        }
    }

    /// Books the work done since the segment opened.
    fn close_segment(&mut self) {
        let Some(job) = self.lane else { return };
        let span = self.now - job.seg_start;
        if span <= 0.0 || job.rate <= 0.0 {
            return;
        }
        let tokens = (job.rate * span / 1000.0).min(job.remaining);
        self.record_segment(&job, tokens, span);
        let j = self.lane.as_mut().expect("checked");
        j.remaining -= tokens;
        j.seg_start = self.now;
    }

    fn record_segment(&mut self, job: &LaneJob, tokens: f64, span: f64) {
        let busy = span * job.share;
        match job.request.kind {
            RequestKind::ColdPrefill => {
                self.acc.lane_cold_tokens += tokens;
                self.acc.lane_cold_busy += busy;
            }
            _ => {
                self.acc.lane_resume_tokens += tokens;
                self.acc.lane_resume_busy += busy;
            }
        }
        self.emit(EventKind::PrefillProgress {
            session: job.request.session_id,
            request: job.request.kind,
            start: job.seg_start,
            tokens,
            sms: job.sms,
            share: job.share,
        });
    }

    fn start_lane_job(&mut self, req: PhaseRequest) {
        self.lane = Some(LaneJob {
            request: req,
            remaining: req.length_tokens as f64,
            seg_start: self.now,
            rate: 0.0,
            share: 1.0,
            sms: 0,
        });
        self.open_segment();
    }

    fn try_start_lane(&mut self) -> Result<(), Error> {
        if self.lane.is_some() {
            return Ok(());
        }
        if let Some(req) = self.queues.prefill.pop_front() {
            self.start_lane_job(req);
        }
        Ok(())
    }

    /// Re-derives the prefill rate after the decode side changed state.
    fn relane(&mut self) {
        if self.cfg.policy != Policy::NoIsolation || self.lane.is_none() {
            return;
        }
        let share = self.lane_share();
        if self.lane.is_some_and(|j| j.share == share) {
            return;
        }
        self.close_segment();
        self.open_segment();
    }

    fn on_lane_done(&mut self) -> Result<(), Error> {
        let job = self.lane.take().expect("lane busy");
        let span = self.now - job.seg_start;
        self.record_segment(&job, job.remaining, span);
        self.complete_prefill(job.request, Context::Prefill)?;
        self.try_start_lane()
    }

    fn on_lane_resume(&mut self) -> Result<(), Error> {
        if self.lane.is_some() {
            self.open_segment();
            Ok(())
        } else {
            self.try_start_lane()
        }
    }

    // ---- control ----

    fn on_tick(&mut self) -> Result<(), Error> {
        self.ticks += 1;
        self.close_segment();
        let tpot = measure_tpot_step(&mut self.ctrl);
        let before = self.summary(tpot, false);
        let mut updated = false;
        if let (Some(t), true) = (tpot, self.cfg.policy.is_adaptive()) {
            self.ctrl = controller_update(&self.ctrl, t, &self.cfg.controller, self.total_slots);
            updated = true;
        }
        self.intervals.push(IntervalSummary { updated, ..before });
        self.decision = decide(
            self.cfg.policy,
            &self.ctrl,
            self.total_slots,
            self.cfg.executor.static_decode_slots,
        )?;
        self.emit(EventKind::ControlTick {
            index: self.ticks,
            tpot,
            budget: self.ctrl.budget,
            reservation: self.ctrl.reservation,
            decode_slots: self.decision.decode_slots,
            prefill_slots: self.decision.prefill_slots,
        });
        self.acc = Acc::default();
        self.interval_start = self.now;
        self.interval_index += 1;

        if let Some(mut slots) = self.slots {
            let overhead = self.cfg.executor.rebind_overhead_ms;
            if let Some(ev) = rebind(&mut slots, self.decision.decode_slots, self.now, overhead) {
                self.slots = Some(slots);
                self.emit(EventKind::Rebind {
                    from_level: ev.from_level,
                    to_level: ev.to_level,
                    overhead: ev.overhead,
                });
                self.acc.rebind_overhead += ev.overhead;
                if ev.overhead > 0.0 {
                    self.pause_from = self.now;
                    self.pause_until = self.now + ev.overhead;
                    if self.step.is_some() {
                        self.decode_overhead_pending += ev.overhead;
                    } else {
                        self.decode_pause_until = self.now + ev.overhead;
                    }
                }
            }
        }
        // rates may have changed
        self.open_segment();
        let next = (self.ticks + 1) as f64 * self.cfg.controller.delta_t;
        self.schedule(next, Wake::Tick);
        Ok(())
    }
}

//! Trace records and their line-delimited JSON form.
//!
//! A trace file is one JSON object per line: a `header`, then every `event`
//! in sequence order, then one `interval` summary per control interval, then
//! a `footer`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::engine::config::SimConfig;
use crate::error::Error;
use crate::executor::Context;
use crate::scheduler::QueueName;
use crate::workload::{RequestKind, SessionPlan};

pub const TRACE_SCHEMA: &str = "phaseserve.trace/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub session: u32,
    pub request: RequestKind,
    pub tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    SessionArrival {
        session: u32,
    },
    /// `queue` is absent for policies with a single shared queue.
    RequestIssued {
        session: u32,
        request: RequestKind,
        tokens: u32,
        queue: Option<QueueName>,
    },
    /// Prefill-context work on `[start, time]`. `share` is the fraction of
    /// the context's rate the job received over the segment.
    PrefillProgress {
        session: u32,
        request: RequestKind,
        start: f64,
        tokens: f64,
        sms: u32,
        share: f64,
    },
    PrefillCompleted {
        session: u32,
        request: RequestKind,
        tokens: u32,
        context: Context,
    },
    /// Every session in `sessions` emitted one token at the event time.
    /// `chunks` is the prefill work the step carried, in execution order.
    DecodeStepCompleted {
        start: f64,
        duration: f64,
        sessions: Vec<u32>,
        chunks: Vec<ChunkRecord>,
        decode_sms: u32,
    },
    DecodeStreamCompleted {
        session: u32,
        tokens: u32,
    },
    ToolReturned {
        session: u32,
    },
    /// Closes control interval `index - 1`. Budget and reservation are the
    /// controller state after this tick's update; the slots are the binding
    /// decided for the next interval.
    ControlTick {
        index: u64,
        tpot: Option<f64>,
        budget: u32,
        reservation: u32,
        decode_slots: u32,
        prefill_slots: u32,
    },
    Rebind {
        from_level: u32,
        to_level: u32,
        overhead: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub time: f64,
    pub event: EventKind,
}

/// Per-interval accounting, recomputable from the events.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub index: u64,
    pub start: f64,
    pub end: f64,
    /// Sum of decode step durations (ms) of steps that finished in the
    /// interval and carried at least one stream.
    pub decode_time: f64,
    pub decode_steps: u64,
    pub tpot: Option<f64>,
    /// Tokens processed by the prefill context, split by kind.
    pub lane_cold_tokens: f64,
    pub lane_resume_tokens: f64,
    /// Prefill tokens carried inside decode steps.
    pub step_cold_tokens: f64,
    pub step_resume_tokens: f64,
    /// Full-rate-equivalent ms the prefill context spent per kind.
    pub lane_cold_busy: f64,
    pub lane_resume_busy: f64,
    /// ms during which queued prefill work existed outside the decode queue.
    pub backlog: f64,
    /// ms of rebind pause that overlapped the backlog.
    pub backlog_overhead: f64,
    pub rebind_overhead: f64,
    pub decode_slots: u32,
    pub prefill_slots: u32,
    pub budget: u32,
    pub reservation: u32,
    /// Whether the tick closing this interval updated the controller.
    pub updated: bool,
}

impl IntervalSummary {
    /// Prefill tokens processed anywhere.
    pub fn prefill_tokens(&self) -> f64 {
        self.lane_cold_tokens
            + self.lane_resume_tokens
            + self.step_cold_tokens
            + self.step_resume_tokens
    }

    /// Fraction of prefill-context busy time spent on cold prefill.
    pub fn lane_cold_fraction(&self) -> f64 {
        let busy = self.lane_cold_busy + self.lane_resume_busy;
        if busy > 0.0 {
            self.lane_cold_busy / busy
        } else {
            0.0
        }
    }

    /// Fraction of prefill tokens that were cold.
    pub fn cold_token_fraction(&self) -> f64 {
        let all = self.prefill_tokens();
        if all > 0.0 {
            (self.lane_cold_tokens + self.step_cold_tokens) / all
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub budget: u32,
    pub reservation: u32,
    pub decode_slots: u32,
    pub prefill_slots: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub config: SimConfig,
    pub sessions: Vec<SessionPlan>,
    pub initial: InitialState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFooter {
    pub end_ms: f64,
    pub truncated: bool,
    pub sessions_done: u32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<Event>,
    pub intervals: Vec<IntervalSummary>,
    pub footer: TraceFooter,
}

// one header per file; boxing it buys nothing
#[allow(clippy::large_enum_variant)]
#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Record {
    Header(TraceHeader),
    Event(Event),
    Interval(IntervalSummary),
    Footer(TraceFooter),
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum RecordRef<'a> {
    Header(&'a TraceHeader),
    Event(&'a Event),
    Interval(&'a IntervalSummary),
    Footer(&'a TraceFooter),
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::TraceIo(e.to_string())
}

impl Trace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), Error> {
        let mut line = |r: RecordRef<'_>| -> Result<(), Error> {
            serde_json::to_writer(&mut w, &r).map_err(io_err)?;
            w.write_all(b"\n").map_err(io_err)
        };
        line(RecordRef::Header(&self.header))?;
        for e in &self.events {
            line(RecordRef::Event(e))?;
        }
        for i in &self.intervals {
            line(RecordRef::Interval(i))?;
        }
        line(RecordRef::Footer(&self.footer))?;
        w.flush().map_err(io_err)
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, Error> {
        let (mut header, mut footer) = (None, None);
        let (mut events, mut intervals) = (Vec::new(), Vec::new());
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line)
                .map_err(|e| Error::TraceIo(format!("line {}: {e}", n + 1)))?;
            match record {
                Record::Header(h) => header = Some(h),
                Record::Event(e) => events.push(e),
                Record::Interval(i) => intervals.push(i),
                Record::Footer(f) => footer = Some(f),
            }
        }
        let header = header.ok_or_else(|| io_err("missing header record"))?;
        if header.schema != TRACE_SCHEMA {
            return Err(io_err(format!("unsupported schema {:?}", header.schema)));
        }
        Ok(Trace {
            header,
            events,
            intervals,
            footer: footer.ok_or_else(|| io_err("missing footer record"))?,
        })
    }

    /// Emission times of every token, per session, grouped by decode phase.
    pub fn token_times(&self) -> Vec<Vec<Vec<f64>>> {
        let n = self.header.sessions.len();
        let mut out: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
        let mut open = vec![false; n];
        for e in &self.events {
            match &e.event {
                EventKind::DecodeStepCompleted { sessions, .. } => {
                    for &s in sessions {
                        let s = s as usize;
                        if !open[s] {
                            out[s].push(Vec::new());
                            open[s] = true;
                        }
                        out[s].last_mut().expect("opened").push(e.time);
                    }
                }
                EventKind::DecodeStreamCompleted { session, .. } => open[*session as usize] = false,
                _ => {}
            }
        }
        out
    }
}

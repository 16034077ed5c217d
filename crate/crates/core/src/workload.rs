//! Agent sessions and their phase state machine.
//!
//! A session is one cold prefill followed by `rounds` repetitions of
//! (decode, tool call, resume prefill) and a closing decode. All lengths and
//! tool delays are drawn up front, so a session list fully determines the
//! request stream a policy will see.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ProtocolError};

/// Sub-stream ids for [`ChaCha8Rng::set_stream`]. New consumers get new ids;
/// existing ids never change meaning.
pub mod streams {
    pub const LENGTHS: u64 = 1;
    pub const STAGGER: u64 = 2;
    pub const TOOL_DELAY: u64 = 3;
}

/// An RNG for one named sub-stream of `seed`.
pub fn sub_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub min_tokens: u32,
    pub max_tokens: u32,
    pub mean_tokens: u32,
}

impl TokenDistribution {
    pub const fn new(min_tokens: u32, max_tokens: u32, mean_tokens: u32) -> Self {
        Self {
            min_tokens,
            max_tokens,
            mean_tokens,
        }
    }

    pub fn validate(&self, what: &str) -> Result<(), ConfigError> {
        if self.min_tokens < 1 {
            return Err(ConfigError::new(format!("{what}: min_tokens must be >= 1")));
        }
        if !(self.min_tokens <= self.mean_tokens && self.mean_tokens <= self.max_tokens) {
            return Err(ConfigError::new(format!(
                "{what}: need min <= mean <= max, got {} / {} / {}",
                self.min_tokens, self.mean_tokens, self.max_tokens
            )));
        }
        Ok(())
    }
}

/// Truncated geometric law on `[min, max]` with its ratio fitted to the mean.
///
/// Offsets `j = x - min` in `0..n` get weight `q^j`. For a mean below the
/// midpoint `q < 1` and mass piles up at `min`; above the midpoint the law is
/// mirrored around `max`. The log-ratio is fitted by bisection, since the
/// mean is strictly increasing in it. Draws use the closed-form inverse CDF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthSampler {
    min: u32,
    max: u32,
    /// `ln q` of the unmirrored law, always `<= 0`.
    log_ratio: f64,
    mirrored: bool,
}

impl LengthSampler {
    pub fn new(dist: &TokenDistribution) -> Self {
        let n = (dist.max_tokens - dist.min_tokens) as usize + 1;
        let below = (dist.mean_tokens - dist.min_tokens) as f64;
        let above = (dist.max_tokens - dist.mean_tokens) as f64;
        let mirrored = above < below;
        let target = if mirrored { above } else { below };
        let log_ratio = if n == 1 || target <= 0.0 {
            f64::NEG_INFINITY
        } else {
            fit_log_ratio(n, target)
        };
        Self {
            min: dist.min_tokens,
            max: dist.max_tokens,
            log_ratio,
            mirrored,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let n = self.max - self.min + 1;
        let offset = if n == 1 || self.log_ratio == f64::NEG_INFINITY {
            0
        } else if self.log_ratio.abs() < 1e-12 {
            ((rng.random::<f64>() * n as f64) as u32).min(n - 1)
        } else {
            let s = self.log_ratio;
            let u: f64 = rng.random();
            // P(J >= j) = (q^j - q^n) / (1 - q^n)
            let tail = -(n as f64 * s).exp_m1();
            let j = (-(u * tail)).ln_1p() / s;
            (j.floor().max(0.0) as u32).min(n - 1)
        };
        if self.mirrored {
            self.max - offset
        } else {
            self.min + offset
        }
    }

    /// Exact mean of the fitted law.
    pub fn mean(&self) -> f64 {
        let n = (self.max - self.min) as usize + 1;
        let m = if self.log_ratio == f64::NEG_INFINITY {
            0.0
        } else {
            offset_mean(n, self.log_ratio)
        };
        if self.mirrored {
            self.max as f64 - m
        } else {
            self.min as f64 + m
        }
    }
}

fn offset_mean(n: usize, s: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..n {
        let w = (j as f64 * s).exp();
        num += j as f64 * w;
        den += w;
    }
    num / den
}

fn fit_log_ratio(n: usize, target: f64) -> f64 {
    let (mut lo, mut hi) = (-60.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if offset_mean(n, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// One draw from `dist`. Prefer building a [`LengthSampler`] once when
/// sampling repeatedly.
pub fn sample_length<R: Rng + ?Sized>(dist: &TokenDistribution, rng: &mut R) -> u32 {
    LengthSampler::new(dist).sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Paradigm {
    #[serde(rename = "react")]
    ReAct,
    #[serde(rename = "plan_and_execute")]
    PlanAndExecute,
}

impl Paradigm {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "react" => Some(Paradigm::ReAct),
            "plan_and_execute" | "planandexecute" | "pne" => Some(Paradigm::PlanAndExecute),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Paradigm::ReAct => "react",
            Paradigm::PlanAndExecute => "plan_and_execute",
        }
    }
}

/// Model whose measured decode lengths are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    #[serde(rename = "qwen2.5-3b")]
    Qwen25_3b,
    #[serde(rename = "qwen2.5-7b")]
    Qwen25_7b,
    #[serde(rename = "llama3-8b")]
    Llama3_8b,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Qwen25_3b, Model::Qwen25_7b, Model::Llama3_8b];

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "qwen2.5-3b" => Some(Model::Qwen25_3b),
            "qwen2.5-7b" => Some(Model::Qwen25_7b),
            "llama3-8b" => Some(Model::Llama3_8b),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Qwen25_3b => "qwen2.5-3b",
            Model::Qwen25_7b => "qwen2.5-7b",
            Model::Llama3_8b => "llama3-8b",
        }
    }
}

/// Measured token-length table. Cold prefill is reported only as a
/// 2.5k–3.5k range; its mean is taken as the midpoint.
pub mod table {
    use super::{Model, Paradigm, TokenDistribution};

    pub const COLD: TokenDistribution = TokenDistribution::new(2500, 3500, 3000);

    pub fn resume(paradigm: Paradigm) -> TokenDistribution {
        match paradigm {
            Paradigm::ReAct => TokenDistribution::new(30, 127, 56),
            Paradigm::PlanAndExecute => TokenDistribution::new(125, 421, 251),
        }
    }

    pub fn decode(paradigm: Paradigm, model: Model) -> TokenDistribution {
        match (paradigm, model) {
            (Paradigm::ReAct, Model::Qwen25_3b) => TokenDistribution::new(27, 99, 37),
            (Paradigm::ReAct, Model::Qwen25_7b) => TokenDistribution::new(21, 127, 45),
            (Paradigm::ReAct, Model::Llama3_8b) => TokenDistribution::new(32, 101, 38),
            (Paradigm::PlanAndExecute, Model::Qwen25_3b) => TokenDistribution::new(41, 125, 55),
            (Paradigm::PlanAndExecute, Model::Qwen25_7b) => TokenDistribution::new(33, 141, 62),
            (Paradigm::PlanAndExecute, Model::Llama3_8b) => TokenDistribution::new(22, 116, 64),
        }
    }

    /// Every distinct distribution in the table, labelled.
    pub fn all() -> Vec<(String, TokenDistribution)> {
        let mut out = vec![("cold".to_string(), COLD)];
        for p in [Paradigm::ReAct, Paradigm::PlanAndExecute] {
            out.push((format!("{}/resume", p.name()), resume(p)));
            for m in Model::ALL {
                out.push((format!("{}/{}/decode", p.name(), m.name()), decode(p, m)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToolDelay {
    Fixed { ms: f64 },
    Uniform { min_ms: f64, max_ms: f64 },
}

impl ToolDelay {
    fn validate(&self) -> Result<(), ConfigError> {
        let ok = match *self {
            ToolDelay::Fixed { ms } => ms.is_finite() && ms >= 0.0,
            ToolDelay::Uniform { min_ms, max_ms } => {
                min_ms.is_finite() && max_ms.is_finite() && 0.0 <= min_ms && min_ms <= max_ms
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ConfigError::new(format!("invalid tool delay {self:?}")))
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ToolDelay::Fixed { ms } => ms,
            ToolDelay::Uniform { min_ms, max_ms } => {
                min_ms + (max_ms - min_ms) * rng.random::<f64>()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmSpec {
    pub paradigm: Paradigm,
    pub cold: TokenDistribution,
    pub resume: TokenDistribution,
    pub decode: TokenDistribution,
    /// Number of (decode, tool, resume) rounds before the closing decode.
    pub steps_per_session: u32,
    pub tool_delay: ToolDelay,
}

impl ParadigmSpec {
    /// Table distributions with default round counts and a fixed 100 ms tool
    /// delay.
    pub fn from_table(paradigm: Paradigm, model: Model) -> Self {
        Self {
            paradigm,
            cold: table::COLD,
            resume: table::resume(paradigm),
            decode: table::decode(paradigm, model),
            steps_per_session: match paradigm {
                Paradigm::ReAct => 4,
                Paradigm::PlanAndExecute => 2,
            },
            tool_delay: ToolDelay::Fixed { ms: 100.0 },
        }
    }

    pub fn react() -> Self {
        Self::from_table(Paradigm::ReAct, Model::Qwen25_7b)
    }

    pub fn plan_and_execute() -> Self {
        Self::from_table(Paradigm::PlanAndExecute, Model::Qwen25_7b)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.cold.validate("cold")?;
        self.resume.validate("resume")?;
        self.decode.validate("decode")?;
        if self.steps_per_session < 1 {
            return Err(ConfigError::new("steps_per_session must be >= 1"));
        }
        self.tool_delay.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    ColdPrefill,
    ResumePrefill,
    DecodeStream,
}

impl RequestKind {
    pub fn is_prefill(self) -> bool {
        !matches!(self, RequestKind::DecodeStream)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRequest {
    pub session_id: u32,
    pub kind: RequestKind,
    /// Input tokens for prefills, output tokens for a decode stream.
    pub length_tokens: u32,
    pub issue_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    AwaitingColdPrefill,
    Decoding,
    AwaitingTool,
    AwaitingResumePrefill,
    Done,
}

/// What just happened to a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    ColdPrefill,
    Decode,
    ToolReturn,
    ResumePrefill,
}

/// Every length and delay a session will use, drawn at generation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session_id: u32,
    pub arrival_time: f64,
    pub cold_tokens: u32,
    /// `rounds + 1` entries.
    pub decode_tokens: Vec<u32>,
    /// `rounds` entries.
    pub resume_tokens: Vec<u32>,
    /// `rounds` entries, in ms.
    pub tool_delays: Vec<f64>,
}

impl SessionPlan {
    pub fn rounds(&self) -> u32 {
        self.resume_tokens.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: u32,
    pub paradigm: Paradigm,
    pub phase: SessionPhase,
    pub cached_prefix: u64,
    pub remaining_rounds: u32,
    pub arrival_time: f64,
    pub plan: SessionPlan,
    decodes_done: u32,
}

impl SessionState {
    pub fn new(paradigm: Paradigm, plan: SessionPlan) -> Self {
        Self {
            session_id: plan.session_id,
            paradigm,
            phase: SessionPhase::AwaitingColdPrefill,
            cached_prefix: 0,
            remaining_rounds: plan.rounds(),
            arrival_time: plan.arrival_time,
            plan,
            decodes_done: 0,
        }
    }

    /// The cold prefill this session opens with.
    pub fn initial_request(&self) -> PhaseRequest {
        PhaseRequest {
            session_id: self.session_id,
            kind: RequestKind::ColdPrefill,
            length_tokens: self.plan.cold_tokens,
            issue_time: self.arrival_time,
        }
    }

    /// Delay of the tool call that the session is currently waiting on.
    pub fn pending_tool_delay(&self) -> Option<f64> {
        (self.phase == SessionPhase::AwaitingTool)
            .then(|| self.plan.tool_delays[(self.decodes_done - 1) as usize])
    }

    fn mismatch(&self, event: Completion) -> ProtocolError {
        ProtocolError::PhaseMismatch {
            session: self.session_id,
            phase: format!("{:?}", self.phase),
            event: format!("{event:?}"),
        }
    }

    fn decode_request(&self, now: f64) -> PhaseRequest {
        PhaseRequest {
            session_id: self.session_id,
            kind: RequestKind::DecodeStream,
            length_tokens: self.plan.decode_tokens[self.decodes_done as usize],
            issue_time: now,
        }
    }

    /// Advances the state machine on `event` at time `now` and returns the
    /// follow-on request, if any.
    pub fn next_phase(
        &mut self,
        event: Completion,
        now: f64,
    ) -> Result<Option<PhaseRequest>, ProtocolError> {
        match (self.phase, event) {
            (SessionPhase::AwaitingColdPrefill, Completion::ColdPrefill) => {
                self.cached_prefix += self.plan.cold_tokens as u64;
                self.phase = SessionPhase::Decoding;
                Ok(Some(self.decode_request(now)))
            }
            (SessionPhase::Decoding, Completion::Decode) => {
                self.cached_prefix += self.plan.decode_tokens[self.decodes_done as usize] as u64;
                self.decodes_done += 1;
                if self.remaining_rounds == 0 {
                    self.phase = SessionPhase::Done;
                } else {
                    self.phase = SessionPhase::AwaitingTool;
                }
                Ok(None)
            }
            (SessionPhase::AwaitingTool, Completion::ToolReturn) => {
                self.phase = SessionPhase::AwaitingResumePrefill;
                let round = (self.decodes_done - 1) as usize;
                Ok(Some(PhaseRequest {
                    session_id: self.session_id,
                    kind: RequestKind::ResumePrefill,
                    length_tokens: self.plan.resume_tokens[round],
                    issue_time: now,
                }))
            }
            (SessionPhase::AwaitingResumePrefill, Completion::ResumePrefill) => {
                let round = (self.decodes_done - 1) as usize;
                self.cached_prefix += self.plan.resume_tokens[round] as u64;
                self.remaining_rounds -= 1;
                self.phase = SessionPhase::Decoding;
                Ok(Some(self.decode_request(now)))
            }
            _ => Err(self.mismatch(event)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub paradigm: ParadigmSpec,
    pub concurrency: u32,
    /// Arrivals are uniform over `[stagger_min_ms, stagger_max_ms]`.
    pub stagger_min_ms: f64,
    pub stagger_max_ms: f64,
}

impl WorkloadSpec {
    pub fn new(paradigm: ParadigmSpec, concurrency: u32) -> Self {
        Self {
            paradigm,
            concurrency,
            stagger_min_ms: 0.0,
            stagger_max_ms: 500.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.paradigm.validate()?;
        if self.concurrency < 1 {
            return Err(ConfigError::new("concurrency must be >= 1"));
        }
        if !(self.stagger_min_ms.is_finite()
            && self.stagger_max_ms.is_finite()
            && 0.0 <= self.stagger_min_ms
            && self.stagger_min_ms <= self.stagger_max_ms)
        {
            return Err(ConfigError::new(format!(
                "invalid stagger window [{}, {}]",
                self.stagger_min_ms, self.stagger_max_ms
            )));
        }
        Ok(())
    }
}

/// Draws the session plans for a workload. Each random quantity comes from
/// its own sub-stream of `seed`.
pub fn generate_plans(spec: &WorkloadSpec, seed: u64) -> Result<Vec<SessionPlan>, ConfigError> {
    spec.validate()?;
    let p = &spec.paradigm;
    let mut lengths = sub_stream(seed, streams::LENGTHS);
    let mut stagger = sub_stream(seed, streams::STAGGER);
    let mut tools = sub_stream(seed, streams::TOOL_DELAY);
    let cold = LengthSampler::new(&p.cold);
    let resume = LengthSampler::new(&p.resume);
    let decode = LengthSampler::new(&p.decode);
    let rounds = p.steps_per_session as usize;
    let span = spec.stagger_max_ms - spec.stagger_min_ms;
    Ok((0..spec.concurrency)
        .map(|session_id| {
            let arrival_time = spec.stagger_min_ms + span * stagger.random::<f64>();
            let cold_tokens = cold.sample(&mut lengths);
            let decode_tokens = (0..=rounds).map(|_| decode.sample(&mut lengths)).collect();
            let resume_tokens = (0..rounds).map(|_| resume.sample(&mut lengths)).collect();
            let tool_delays = (0..rounds)
                .map(|_| p.tool_delay.sample(&mut tools))
                .collect();
            SessionPlan {
                session_id,
                arrival_time,
                cold_tokens,
                decode_tokens,
                resume_tokens,
                tool_delays,
            }
        })
        .collect())
}

pub fn generate_sessions(spec: &WorkloadSpec, seed: u64) -> Result<Vec<SessionState>, ConfigError> {
    Ok(generate_plans(spec, seed)?
        .into_iter()
        .map(|plan| SessionState::new(spec.paradigm.paradigm, plan))
        .collect())
}

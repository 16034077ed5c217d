//! Run configuration: the TOML document users write, and the fully resolved
//! [`SimConfig`] the engine consumes.
//!
//! ```toml
//! seed = 42
//! policy = "tpot_driven"
//!
//! [profile]
//! path = "../profiles/default.toml"   # relative to this file
//!
//! [workload]
//! paradigm = "react"
//! model = "qwen2.5-7b"
//! concurrency = 6
//!
//! [controller]
//! delta_t_ms = 250.0
//!
//! [slo]
//! factor = 8.0
//! ```
//!
//! Every field is optional. Missing values take the documented defaults,
//! several of which are derived from the profile and the SLO.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{r_g_star, r_min_rate};
use crate::error::{line_of, ConfigError, Error};
use crate::metrics::{calibrate_slo, SloConfig};
use crate::profile::{Phase, ProfileBundle};
use crate::scheduler::{ControllerConfig, Policy};
use crate::workload::{Model, Paradigm, ParadigmSpec, TokenDistribution, ToolDelay, WorkloadSpec};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CONCURRENCY: u32 = 6;
pub const DEFAULT_DELTA_T_MS: f64 = 250.0;
pub const DEFAULT_REBIND_OVERHEAD_MS: f64 = 0.05;
pub const DEFAULT_REBIND_OVERHEAD_CAP_MS: f64 = 5.0;
pub const DEFAULT_SLO_FACTOR: f64 = 5.0;
/// Simulated-time cap applied when no horizon is given.
pub const SAFETY_HORIZON_MS: f64 = 3_600_000.0;

/// What the controller thresholds are derived from when not set explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdAnchor {
    /// `theta_high = tau_tpot`, `theta_low = (0.8 / 1.2) * tau_tpot`.
    Slo,
    /// 0.8x and 1.2x of the single-stream step time at `r_base` slots.
    Isolated,
}

impl ThresholdAnchor {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "slo" => Some(ThresholdAnchor::Slo),
            "isolated" => Some(ThresholdAnchor::Isolated),
            _ => None,
        }
    }
}

pub const DEFAULT_ANCHOR: ThresholdAnchor = ThresholdAnchor::Slo;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub rebind_overhead_ms: f64,
    pub rebind_overhead_cap_ms: f64,
    /// Merged-resume tokens carried per decode step.
    pub resume_chunk_tokens: u32,
    /// Prefill tokens per iteration under chunked prefill.
    pub prefill_chunk_tokens: u32,
    /// Decode slots of the static partition.
    pub static_decode_slots: u32,
}

/// Everything one run needs, with every default already applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: Policy,
    pub seed: u64,
    pub horizon_ms: Option<f64>,
    pub profile: ProfileBundle,
    pub workload: WorkloadSpec,
    pub controller: ControllerConfig,
    pub executor: ExecutorConfig,
    pub slo: SloConfig,
}

/// Controller defaults for a profile and SLO: `r_base = initial_r` is the
/// smallest reservation meeting the SLO's decode rate.
pub fn default_controller(
    profile: &ProfileBundle,
    slo: &SloConfig,
    anchor: ThresholdAnchor,
) -> Result<ControllerConfig, Error> {
    let r_star = r_g_star(profile, r_min_rate(slo.tau_tpot))?;
    let (theta_low, theta_high) = match anchor {
        ThresholdAnchor::Slo => (slo.tau_tpot * 0.8 / 1.2, slo.tau_tpot),
        ThresholdAnchor::Isolated => {
            let iso = 1000.0 / profile.lookup(Phase::Decode, r_star * profile.granularity())?;
            (0.8 * iso, 1.2 * iso)
        }
    };
    Ok(ControllerConfig {
        theta_low,
        theta_high,
        delta_r: 1,
        delta_b: 64,
        delta_t: DEFAULT_DELTA_T_MS,
        b_min: 64,
        b_max: 1024,
        r_base: r_star,
        initial_b: 256,
        initial_r: r_star,
    })
}

impl SimConfig {
    /// A config with every default for `workload` on `profile`.
    pub fn standard(
        profile: ProfileBundle,
        workload: WorkloadSpec,
        policy: Policy,
        seed: u64,
    ) -> Result<Self, Error> {
        let slo = calibrate_slo(
            &profile,
            DEFAULT_SLO_FACTOR,
            workload.paradigm.cold.mean_tokens,
        );
        let controller = default_controller(&profile, &slo, DEFAULT_ANCHOR)?;
        let cfg = SimConfig {
            policy,
            seed,
            horizon_ms: None,
            executor: ExecutorConfig {
                rebind_overhead_ms: DEFAULT_REBIND_OVERHEAD_MS,
                rebind_overhead_cap_ms: DEFAULT_REBIND_OVERHEAD_CAP_MS,
                resume_chunk_tokens: 64,
                prefill_chunk_tokens: 256,
                static_decode_slots: controller.initial_r,
            },
            profile,
            workload,
            controller,
            slo,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default profile, table workload for `paradigm`, default everything.
    pub fn default_for(
        paradigm: Paradigm,
        concurrency: u32,
        policy: Policy,
        seed: u64,
    ) -> Result<Self, Error> {
        Self::standard(
            ProfileBundle::default_synthetic(),
            WorkloadSpec::new(
                ParadigmSpec::from_table(paradigm, Model::Qwen25_7b),
                concurrency,
            ),
            policy,
            seed,
        )
    }

    pub fn total_slots(&self) -> u32 {
        self.profile.total_slots()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon_ms.unwrap_or(SAFETY_HORIZON_MS)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.workload.validate()?;
        self.controller.validate(self.total_slots())?;
        self.slo.validate().map_err(ConfigError::new)?;
        let e = &self.executor;
        if !(e.rebind_overhead_ms >= 0.0 && e.rebind_overhead_ms <= e.rebind_overhead_cap_ms) {
            return Err(ConfigError::new(format!(
                "rebind_overhead_ms {} must be in [0, cap {}]",
                e.rebind_overhead_ms, e.rebind_overhead_cap_ms
            )));
        }
        if e.rebind_overhead_cap_ms >= self.controller.delta_t {
            return Err(ConfigError::new(format!(
                "rebind overhead cap {} must be below the control interval {}",
                e.rebind_overhead_cap_ms, self.controller.delta_t
            )));
        }
        if e.resume_chunk_tokens < 1 || e.prefill_chunk_tokens < 1 {
            return Err(ConfigError::new("chunk sizes must be >= 1"));
        }
        if !(1..=self.total_slots()).contains(&e.static_decode_slots) {
            return Err(ConfigError::new(format!(
                "static_decode_slots {} is outside 1..={}",
                e.static_decode_slots,
                self.total_slots()
            )));
        }
        if let Some(h) = self.horizon_ms {
            if !(h > 0.0 && h.is_finite()) {
                return Err(ConfigError::new(format!(
                    "horizon_ms must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub path: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistOverride {
    pub min: Option<u32>,
    pub max: Option<u32>,
    pub mean: Option<u32>,
}

impl DistOverride {
    fn apply(&self, base: TokenDistribution) -> TokenDistribution {
        TokenDistribution {
            min_tokens: self.min.unwrap_or(base.min_tokens),
            max_tokens: self.max.unwrap_or(base.max_tokens),
            mean_tokens: self.mean.unwrap_or(base.mean_tokens),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    pub paradigm: Option<String>,
    pub model: Option<String>,
    pub concurrency: Option<u32>,
    pub stagger_ms: Option<[f64; 2]>,
    pub steps_per_session: Option<u32>,
    pub tool_delay_ms: Option<f64>,
    pub tool_delay_range_ms: Option<[f64; 2]>,
    pub cold: Option<DistOverride>,
    pub resume: Option<DistOverride>,
    pub decode: Option<DistOverride>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub threshold_anchor: Option<String>,
    pub theta_low_ms: Option<f64>,
    pub theta_high_ms: Option<f64>,
    pub delta_r: Option<u32>,
    pub delta_b: Option<u32>,
    pub delta_t_ms: Option<f64>,
    pub b_min: Option<u32>,
    pub b_max: Option<u32>,
    pub r_base: Option<u32>,
    pub initial_b: Option<u32>,
    pub initial_r: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorSection {
    pub total_slots: Option<u32>,
    pub rebind_overhead_ms: Option<f64>,
    pub rebind_overhead_cap_ms: Option<f64>,
    pub resume_chunk_tokens: Option<u32>,
    pub prefill_chunk_tokens: Option<u32>,
    pub static_decode_slots: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SloSection {
    pub factor: Option<f64>,
    pub tau_ttft_ms: Option<f64>,
    pub tau_tpot_ms: Option<f64>,
    pub tpot_percentile: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub concurrency: Option<Vec<u32>>,
    pub policies: Option<Vec<String>>,
}

/// The run-config document as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub policy: Option<String>,
    pub horizon_ms: Option<f64>,
    pub out_dir: Option<String>,
    #[serde(default)]
    pub profile: ProfileSection,
    #[serde(default)]
    pub workload: WorkloadSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub executor: ExecutorSection,
    #[serde(default)]
    pub slo: SloSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(skip)]
    source: Option<String>,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

/// Line of `key = ...` inside `[section]` (or at top level when `section`
/// is empty).
fn key_line(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

impl RunConfig {
    /// Parses a document. Relative paths in it resolve against `base_dir`.
    pub fn from_toml_str(source: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(source).map_err(|e| {
            ConfigError::at(
                e.span().map(|s| line_of(source, s.start)),
                e.message().to_string(),
            )
        })?;
        cfg.source = Some(source.to_string());
        cfg.base_dir = base_dir.map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("{}: {e}", path.display())))?;
        Ok(Self::from_toml_str(&text, path.parent())?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config sections serialize")
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let line = self
            .source
            .as_deref()
            .and_then(|s| key_line(s, section, key));
        ConfigError::at(line, message)
    }

    pub fn policy(&self) -> Result<Policy, ConfigError> {
        match &self.policy {
            None => Ok(Policy::TpotDriven),
            Some(name) => Policy::parse(name)
                .ok_or_else(|| self.err("", "policy", format!("unknown policy {name:?}"))),
        }
    }

    /// Policies listed under `[sweep]`, if any.
    pub fn sweep_policies(&self) -> Result<Option<Vec<Policy>>, ConfigError> {
        self.sweep
            .policies
            .as_ref()
            .map(|names| {
                names
                    .iter()
                    .map(|n| {
                        Policy::parse(n).ok_or_else(|| {
                            self.err("sweep", "policies", format!("unknown policy {n:?}"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn sweep_concurrency(&self) -> Vec<u32> {
        self.sweep
            .concurrency
            .clone()
            .unwrap_or_else(|| vec![3, 4, 5, 6])
    }

    fn load_profile(&self) -> Result<ProfileBundle, Error> {
        match &self.profile.path {
            None => Ok(ProfileBundle::default_synthetic()),
            Some(p) => {
                let path = match &self.base_dir {
                    Some(base) => base.join(p),
                    None => PathBuf::from(p),
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| self.err("profile", "path", format!("{}: {e}", path.display())))?;
                Ok(ProfileBundle::from_toml_str(&text)?)
            }
        }
    }

    fn workload_spec(&self, concurrency: Option<u32>) -> Result<WorkloadSpec, ConfigError> {
        let w = &self.workload;
        let paradigm = match &w.paradigm {
            None => Paradigm::ReAct,
            Some(name) => Paradigm::parse(name).ok_or_else(|| {
                self.err("workload", "paradigm", format!("unknown paradigm {name:?}"))
            })?,
        };
        let model = match &w.model {
            None => Model::Qwen25_7b,
            Some(name) => Model::parse(name)
                .ok_or_else(|| self.err("workload", "model", format!("unknown model {name:?}")))?,
        };
        let mut spec = ParadigmSpec::from_table(paradigm, model);
        if let Some(o) = &w.cold {
            spec.cold = o.apply(spec.cold);
        }
        if let Some(o) = &w.resume {
            spec.resume = o.apply(spec.resume);
        }
        if let Some(o) = &w.decode {
            spec.decode = o.apply(spec.decode);
        }
        if let Some(n) = w.steps_per_session {
            spec.steps_per_session = n;
        }
        match (w.tool_delay_ms, w.tool_delay_range_ms) {
            (Some(_), Some(_)) => {
                return Err(self.err(
                    "workload",
                    "tool_delay_range_ms",
                    "set tool_delay_ms or tool_delay_range_ms, not both",
                ))
            }
            (Some(ms), None) => spec.tool_delay = ToolDelay::Fixed { ms },
            (None, Some([min_ms, max_ms])) => {
                spec.tool_delay = ToolDelay::Uniform { min_ms, max_ms }
            }
            (None, None) => {}
        }
        let mut out = WorkloadSpec::new(
            spec,
            concurrency.or(w.concurrency).unwrap_or(DEFAULT_CONCURRENCY),
        );
        if let Some([lo, hi]) = w.stagger_ms {
            out.stagger_min_ms = lo;
            out.stagger_max_ms = hi;
        }
        out.validate().map_err(|e| {
            let key = [
                "concurrency",
                "stagger_ms",
                "steps_per_session",
                "tool_delay",
                "cold",
                "resume",
                "decode",
            ]
            .into_iter()
            .find(|k| e.message.contains(k))
            .unwrap_or("paradigm");
            self.err("workload", key, e.message)
        })?;
        Ok(out)
    }

    /// Applies defaults and validates. `policy`, `concurrency` and `seed`
    /// override the document when given.
    pub fn resolve_with(
        &self,
        policy: Option<Policy>,
        concurrency: Option<u32>,
        seed: Option<u64>,
    ) -> Result<SimConfig, Error> {
        let profile = self.load_profile()?;
        if let Some(total) = self.executor.total_slots {
            if total != profile.total_slots() {
                return Err(self
                    .err(
                        "executor",
                        "total_slots",
                        format!(
                            "total_slots {total} does not match the profile's {}",
                            profile.total_slots()
                        ),
                    )
                    .into());
            }
        }
        let workload = self.workload_spec(concurrency)?;

        let s = &self.slo;
        let factor = s.factor.unwrap_or(DEFAULT_SLO_FACTOR);
        if !(factor >= 1.0 && factor.is_finite()) {
            return Err(self
                .err(
                    "slo",
                    "factor",
                    format!("factor must be >= 1, got {factor}"),
                )
                .into());
        }
        let mut slo = calibrate_slo(&profile, factor, workload.paradigm.cold.mean_tokens);
        if let Some(t) = s.tau_ttft_ms {
            slo.tau_ttft = t;
        }
        if let Some(t) = s.tau_tpot_ms {
            slo.tau_tpot = t;
        }
        if let Some(p) = s.tpot_percentile {
            slo.tpot_percentile = p;
        }
        slo.validate()
            .map_err(|m| self.err("slo", "tau_tpot_ms", m))?;

        let c = &self.controller;
        let anchor = match &c.threshold_anchor {
            None => DEFAULT_ANCHOR,
            Some(a) => ThresholdAnchor::parse(a).ok_or_else(|| {
                self.err(
                    "controller",
                    "threshold_anchor",
                    format!("unknown anchor {a:?}, use \"slo\" or \"isolated\""),
                )
            })?,
        };
        let mut ctrl = default_controller(&profile, &slo, anchor)
            .map_err(|e| Error::from(self.err("slo", "tau_tpot_ms", e.to_string())))?;
        macro_rules! set {
            ($field:ident, $key:ident) => {
                if let Some(v) = c.$key {
                    ctrl.$field = v;
                }
            };
        }
        set!(theta_low, theta_low_ms);
        set!(theta_high, theta_high_ms);
        set!(delta_r, delta_r);
        set!(delta_b, delta_b);
        set!(delta_t, delta_t_ms);
        set!(b_min, b_min);
        set!(b_max, b_max);
        set!(initial_b, initial_b);
        if let Some(r) = c.r_base {
            ctrl.r_base = r;
            if c.initial_r.is_none() {
                ctrl.initial_r = r.max(ctrl.initial_r);
            }
        }
        set!(initial_r, initial_r);
        ctrl.validate(profile.total_slots()).map_err(|e| {
            let key = ["theta_low", "b_min", "r_base", "initial_r", "delta_t"]
                .into_iter()
                .find(|k| e.message.contains(k))
                .map(|k| match k {
                    "theta_low" => "theta_low_ms",
                    "delta_t" => "delta_t_ms",
                    k => k,
                })
                .unwrap_or("theta_low_ms");
            self.err("controller", key, e.message)
        })?;

        let x = &self.executor;
        let executor = ExecutorConfig {
            rebind_overhead_ms: x.rebind_overhead_ms.unwrap_or(DEFAULT_REBIND_OVERHEAD_MS),
            rebind_overhead_cap_ms: x
                .rebind_overhead_cap_ms
                .unwrap_or(DEFAULT_REBIND_OVERHEAD_CAP_MS),
            resume_chunk_tokens: x.resume_chunk_tokens.unwrap_or(64),
            prefill_chunk_tokens: x.prefill_chunk_tokens.unwrap_or(256),
            static_decode_slots: x.static_decode_slots.unwrap_or(ctrl.initial_r),
        };

        let cfg = SimConfig {
            policy: match policy {
                Some(p) => p,
                None => self.policy()?,
            },
            seed: seed.or(self.seed).unwrap_or(DEFAULT_SEED),
            horizon_ms: self.horizon_ms,
            profile,
            workload,
            controller: ctrl,
            executor,
            slo,
        };
        cfg.validate().map_err(|e| {
            let (section, key) = if e.message.contains("rebind") {
                ("executor", "rebind_overhead_ms")
            } else if e.message.contains("static_decode_slots") {
                ("executor", "static_decode_slots")
            } else if e.message.contains("chunk") {
                ("executor", "resume_chunk_tokens")
            } else {
                ("", "horizon_ms")
            };
            self.err(section, key, e.message)
        })?;
        Ok(cfg)
    }

    pub fn resolve(&self) -> Result<SimConfig, Error> {
        self.resolve_with(None, None, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_resolves_to_defaults() {
        let cfg = RunConfig::from_toml_str("", None)
            .unwrap()
            .resolve()
            .unwrap();
        let std = SimConfig::default_for(
            Paradigm::ReAct,
            DEFAULT_CONCURRENCY,
            Policy::TpotDriven,
            DEFAULT_SEED,
        )
        .unwrap();
        assert_eq!(cfg, std);
        assert_eq!(cfg.controller.r_base, cfg.controller.initial_r);
        assert!(cfg.controller.theta_low < cfg.controller.theta_high);
    }

    #[test]
    fn overrides_apply() {
        let doc = r#"
seed = 7
policy = "mixed_fcfs"

[workload]
paradigm = "plan_and_execute"
concurrency = 3
tool_delay_range_ms = [50.0, 150.0]

[workload.resume]
max = 400

[controller]
theta_low_ms = 1.0
theta_high_ms = 2.0
delta_t_ms = 100.0
"#;
        let cfg = RunConfig::from_toml_str(doc, None)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.policy, Policy::MixedFcfs);
        assert_eq!(cfg.workload.concurrency, 3);
        assert_eq!(
            cfg.workload.paradigm.resume,
            TokenDistribution::new(125, 400, 251)
        );
        assert_eq!(cfg.workload.paradigm.steps_per_session, 2);
        assert_eq!(cfg.controller.delta_t, 100.0);
        assert_eq!(cfg.controller.theta_high, 2.0);
    }

    #[test]
    fn validation_errors_carry_lines() {
        let doc =
            "seed = 1\n\n[controller]\ndelta_r = 1\ntheta_low_ms = 9.0\ntheta_high_ms = 3.0\n";
        let err = RunConfig::from_toml_str(doc, None)
            .unwrap()
            .resolve()
            .unwrap_err();
        match err {
            Error::Config(c) => assert_eq!(c.line, Some(5), "{c}"),
            other => panic!("{other:?}"),
        }

        let err = RunConfig::from_toml_str("seed = 1\npolicy = \"warp\"\n", None)
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");

        let err = RunConfig::from_toml_str("[workload]\nconcurency = 3\n", None).unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn document_round_trips() {
        let doc = "seed = 3\npolicy = \"static_partition\"\n[workload]\nconcurrency = 4\nstagger_ms = [0.0, 100.0]\n[slo]\nfactor = 3.0\n";
        let a = RunConfig::from_toml_str(doc, None).unwrap();
        let b = RunConfig::from_toml_str(&a.to_toml_string(), None).unwrap();
        assert_eq!(a.resolve().unwrap(), b.resolve().unwrap());
        assert_eq!(a.workload, b.workload);
    }

    #[test]
    fn infeasible_slo_is_a_config_error() {
        let doc = "[slo]\ntau_tpot_ms = 0.001\n";
        let err = RunConfig::from_toml_str(doc, None)
            .unwrap()
            .resolve()
            .unwrap_err();
        assert!(
            matches!(err, Error::Config(ConfigError { line: Some(2), .. })),
            "{err:?}"
        );
    }
}

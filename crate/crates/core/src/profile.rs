//! Per-phase throughput curves over SM allocations.
//!
//! Every rate the simulator uses comes from a [`ProfileBundle`]: one
//! [`PhaseProfile`] each for decode, cold prefill and resume prefill, sampled
//! on the slot grid `{g, 2g, .., S}`. Lookups never interpolate; an
//! allocation that is not a whole number of slots is a domain error.
//!
//! Bundles are loaded from a TOML document:
//!
//! ```toml
//! total_sms = 120
//! granularity = 12
//!
//! [[decode]]
//! sms = 12
//! tokens_per_second = 36.0
//! # ... one entry per grid point, for each of
//! # [[decode]], [[cold_prefill]] and [[resume_prefill]]
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::line_of;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Decode,
    ColdPrefill,
    ResumePrefill,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Decode, Phase::ColdPrefill, Phase::ResumePrefill];

    pub fn key(self) -> &'static str {
        match self {
            Phase::Decode => "decode",
            Phase::ColdPrefill => "cold_prefill",
            Phase::ResumePrefill => "resume_prefill",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("{sms} SMs is not on the grid of step {granularity}")]
    OffGrid { sms: u32, granularity: u32 },
    #[error("{sms} SMs is outside [{granularity}, {total_sms}]")]
    OutOfRange {
        sms: u32,
        granularity: u32,
        total_sms: u32,
    },
    #[error("prefill mix fraction {0} is outside [0, 1]")]
    EtaOutOfRange(f64),
    #[error("empty Lipschitz window [{lo}, {hi}]")]
    EmptyWindow { lo: u32, hi: u32 },
    #[error("{}{phase}: rate decreases at sms={sms} ({rate} < {previous})", fmt_line(*line))]
    NonMonotone {
        phase: Phase,
        sms: u32,
        rate: f64,
        previous: f64,
        line: Option<usize>,
    },
    #[error("{}{phase}: {message}", fmt_line(*line))]
    Invalid {
        phase: Phase,
        message: String,
        line: Option<usize>,
    },
    #[error("{}{message}", fmt_line(*line))]
    Document {
        message: String,
        line: Option<usize>,
    },
}

fn fmt_line(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub sms: u32,
    pub tokens_per_second: f64,
}

/// A non-decreasing throughput curve for one phase, defined on the slot grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    phase: Phase,
    total_sms: u32,
    granularity: u32,
    points: Vec<ProfilePoint>,
}

impl PhaseProfile {
    /// Builds a profile, checking grid placement, positivity and monotonicity.
    pub fn new(
        phase: Phase,
        total_sms: u32,
        granularity: u32,
        points: Vec<ProfilePoint>,
    ) -> Result<Self, ProfileError> {
        Self::validated(phase, total_sms, granularity, points, &[])
    }

    /// `lines[i]` is the source line of `points[i]`, when known.
    fn validated(
        phase: Phase,
        total_sms: u32,
        granularity: u32,
        points: Vec<ProfilePoint>,
        lines: &[usize],
    ) -> Result<Self, ProfileError> {
        let line = |i: usize| lines.get(i).copied();
        let invalid = |message: String, line: Option<usize>| ProfileError::Invalid {
            phase,
            message,
            line,
        };
        if granularity == 0 || total_sms == 0 || !total_sms.is_multiple_of(granularity) {
            return Err(invalid(
                format!(
                    "total_sms {total_sms} is not a positive multiple of granularity {granularity}"
                ),
                None,
            ));
        }
        let expected = (total_sms / granularity) as usize;
        if points.len() != expected {
            return Err(invalid(
                format!(
                    "expected {expected} grid points ({granularity}..={total_sms} step {granularity}), found {}",
                    points.len()
                ),
                line(points.len().saturating_sub(1)),
            ));
        }
        for (i, p) in points.iter().enumerate() {
            let grid = granularity * (i as u32 + 1);
            if p.sms != grid {
                return Err(invalid(
                    format!("point {} has sms={}, expected {grid}", i + 1, p.sms),
                    line(i),
                ));
            }
            if !(p.tokens_per_second.is_finite() && p.tokens_per_second > 0.0) {
                return Err(invalid(
                    format!(
                        "rate at sms={} must be positive, got {}",
                        p.sms, p.tokens_per_second
                    ),
                    line(i),
                ));
            }
            if i > 0 && p.tokens_per_second < points[i - 1].tokens_per_second {
                return Err(ProfileError::NonMonotone {
                    phase,
                    sms: p.sms,
                    rate: p.tokens_per_second,
                    previous: points[i - 1].tokens_per_second,
                    line: line(i),
                });
            }
        }
        Ok(Self {
            phase,
            total_sms,
            granularity,
            points,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn points(&self) -> &[ProfilePoint] {
        &self.points
    }

    pub fn total_sms(&self) -> u32 {
        self.total_sms
    }

    pub fn granularity(&self) -> u32 {
        self.granularity
    }

    /// Rate recorded at grid point `sms`.
    pub fn lookup(&self, sms: u32) -> Result<f64, ProfileError> {
        if sms < self.granularity || sms > self.total_sms {
            return Err(ProfileError::OutOfRange {
                sms,
                granularity: self.granularity,
                total_sms: self.total_sms,
            });
        }
        if !sms.is_multiple_of(self.granularity) {
            return Err(ProfileError::OffGrid {
                sms,
                granularity: self.granularity,
            });
        }
        Ok(self.points[(sms / self.granularity - 1) as usize].tokens_per_second)
    }

    /// Rate at `slots` whole slots; zero slots deliver nothing.
    pub fn at_slots(&self, slots: u32) -> f64 {
        match slots {
            0 => 0.0,
            s => self.points[(s.min(self.points.len() as u32) - 1) as usize].tokens_per_second,
        }
    }

    pub fn max_rate(&self) -> f64 {
        self.points
            .last()
            .map(|p| p.tokens_per_second)
            .unwrap_or(0.0)
    }
}

/// Decode, cold-prefill and resume-prefill curves on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBundle {
    decode: PhaseProfile,
    cold: PhaseProfile,
    resume: PhaseProfile,
    granularity: u32,
}

impl ProfileBundle {
    pub fn new(
        decode: PhaseProfile,
        cold: PhaseProfile,
        resume: PhaseProfile,
    ) -> Result<Self, ProfileError> {
        let g = decode.granularity;
        let s = decode.total_sms;
        for p in [&cold, &resume] {
            if p.granularity != g || p.total_sms != s {
                return Err(ProfileError::Invalid {
                    phase: p.phase,
                    message: format!(
                        "grid (total_sms={}, granularity={}) differs from decode grid (total_sms={s}, granularity={g})",
                        p.total_sms, p.granularity
                    ),
                    line: None,
                });
            }
        }
        Ok(Self {
            decode,
            cold,
            resume,
            granularity: g,
        })
    }

    pub fn total_sms(&self) -> u32 {
        self.decode.total_sms
    }

    pub fn granularity(&self) -> u32 {
        self.granularity
    }

    /// Number of slots `S / g`.
    pub fn total_slots(&self) -> u32 {
        self.decode.total_sms / self.granularity
    }

    /// The grid `{g, 2g, .., S}` in SMs.
    pub fn grid(&self) -> impl Iterator<Item = u32> + '_ {
        (1..=self.total_slots()).map(move |k| k * self.granularity)
    }

    pub fn profile(&self, phase: Phase) -> &PhaseProfile {
        match phase {
            Phase::Decode => &self.decode,
            Phase::ColdPrefill => &self.cold,
            Phase::ResumePrefill => &self.resume,
        }
    }

    pub fn lookup(&self, phase: Phase, sms: u32) -> Result<f64, ProfileError> {
        self.profile(phase).lookup(sms)
    }

    /// Like [`lookup`](Self::lookup) but maps `0` SMs to a zero rate.
    pub fn rate_or_zero(&self, phase: Phase, sms: u32) -> Result<f64, ProfileError> {
        if sms == 0 {
            Ok(0.0)
        } else {
            self.lookup(phase, sms)
        }
    }

    /// Effective prefill rate when a fraction `eta` of prefill work is cold:
    /// `eta * mu_cold(sms) + (1 - eta) * mu_resume(sms)`.
    pub fn mixed_prefill_rate(&self, eta: f64, sms: u32) -> Result<f64, ProfileError> {
        check_eta(eta)?;
        Ok(mix(eta, self.cold.lookup(sms)?, self.resume.lookup(sms)?))
    }

    /// [`mixed_prefill_rate`](Self::mixed_prefill_rate) extended with a zero
    /// rate at `sms == 0`.
    pub fn mixed_prefill_rate_or_zero(&self, eta: f64, sms: u32) -> Result<f64, ProfileError> {
        if sms == 0 {
            check_eta(eta)?;
            Ok(0.0)
        } else {
            self.mixed_prefill_rate(eta, sms)
        }
    }

    /// Largest adjacent-grid slope of the mixed prefill curve on `[lo, hi]`,
    /// in tokens/s per SM. `lo` may be `0`, taken as the zero-throughput
    /// origin.
    pub fn lipschitz_estimate(&self, eta: f64, lo: u32, hi: u32) -> Result<f64, ProfileError> {
        check_eta(eta)?;
        if lo >= hi {
            return Err(ProfileError::EmptyWindow { lo, hi });
        }
        let g = self.granularity;
        let mut best = 0.0f64;
        let mut x = lo;
        let mut left = self.mixed_prefill_rate_or_zero(eta, x)?;
        while x < hi {
            let right = self.mixed_prefill_rate_or_zero(eta, x + g)?;
            best = best.max((right - left).abs() / g as f64);
            left = right;
            x += g;
        }
        Ok(best)
    }

    /// Parses and validates a profile document.
    pub fn from_toml_str(source: &str) -> Result<Self, ProfileError> {
        let doc: RawDocument = toml::from_str(source).map_err(|e| ProfileError::Document {
            message: e.message().to_string(),
            line: e.span().map(|s| line_of(source, s.start)),
        })?;
        let build = |phase: Phase, raw: &[RawPoint]| {
            let lines: Vec<usize> = raw
                .iter()
                .map(|p| line_of(source, p.sms.span().start))
                .collect();
            let points = raw
                .iter()
                .map(|p| ProfilePoint {
                    sms: *p.sms.get_ref(),
                    tokens_per_second: p.tokens_per_second,
                })
                .collect();
            PhaseProfile::validated(phase, doc.total_sms, doc.granularity, points, &lines)
        };
        let decode = build(Phase::Decode, &doc.decode)?;
        let cold = build(Phase::ColdPrefill, &doc.cold_prefill)?;
        let resume = build(Phase::ResumePrefill, &doc.resume_prefill)?;
        Self::new(decode, cold, resume)
    }

    pub fn to_toml_string(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "# phaseserve profile document v1");
        let _ = writeln!(out, "total_sms = {}", self.total_sms());
        let _ = writeln!(out, "granularity = {}", self.granularity);
        for phase in Phase::ALL {
            for p in self.profile(phase).points() {
                let _ = writeln!(out, "\n[[{}]]", phase.key());
                let _ = writeln!(out, "sms = {}", p.sms);
                let _ = writeln!(out, "tokens_per_second = {:?}", p.tokens_per_second);
            }
        }
        out
    }

    /// The shipped synthetic bundle, built from [`ShapeParams::default`].
    pub fn default_synthetic() -> Self {
        generate_profile(&ShapeParams::default())
            .expect("default shape parameters are valid")
            .bundle
    }
}

fn check_eta(eta: f64) -> Result<(), ProfileError> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(ProfileError::EtaOutOfRange(eta))
    }
}

#[inline]
pub(crate) fn mix(eta: f64, cold: f64, resume: f64) -> f64 {
    eta * cold + (1.0 - eta) * resume
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    total_sms: u32,
    granularity: u32,
    #[serde(default)]
    decode: Vec<RawPoint>,
    #[serde(default)]
    cold_prefill: Vec<RawPoint>,
    #[serde(default)]
    resume_prefill: Vec<RawPoint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    sms: toml::Spanned<u32>,
    tokens_per_second: f64,
}

/// Saturating curve for one phase: `max * (1 - (1 - min(x / knee, 1))^curvature)`
/// where `x` is the SM share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveShape {
    pub max_tokens_per_second: f64,
    /// SM share in `(0, 1]` at which the curve reaches its maximum.
    pub knee: f64,
    /// Larger values rise faster at low shares.
    pub curvature: f64,
}

impl CurveShape {
    fn rate(&self, share: f64) -> f64 {
        let u = (share / self.knee).min(1.0);
        self.max_tokens_per_second * (1.0 - (1.0 - u).powf(self.curvature))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub total_sms: u32,
    pub granularity: u32,
    pub decode: CurveShape,
    pub cold: CurveShape,
    pub resume: CurveShape,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            total_sms: 120,
            granularity: 12,
            decode: CurveShape {
                max_tokens_per_second: 100.0,
                knee: 0.3,
                curvature: 4.0,
            },
            cold: CurveShape {
                max_tokens_per_second: 6000.0,
                knee: 1.0,
                curvature: 1.5,
            },
            resume: CurveShape {
                max_tokens_per_second: 2500.0,
                knee: 0.8,
                curvature: 2.0,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedProfile {
    pub bundle: ProfileBundle,
    pub warnings: Vec<String>,
}

/// Samples the three curve shapes on the slot grid. Rates are rounded to
/// two decimals.
pub fn generate_profile(params: &ShapeParams) -> Result<GeneratedProfile, ProfileError> {
    let mut warnings = Vec::new();
    let build = |phase: Phase, shape: &CurveShape| {
        let bad = |message: String| ProfileError::Invalid {
            phase,
            message,
            line: None,
        };
        if !(shape.max_tokens_per_second.is_finite() && shape.max_tokens_per_second > 0.0) {
            return Err(bad(format!(
                "max rate must be positive, got {}",
                shape.max_tokens_per_second
            )));
        }
        if !(shape.knee > 0.0 && shape.knee <= 1.0) {
            return Err(bad(format!("knee must be in (0, 1], got {}", shape.knee)));
        }
        // curvature < 1 would still be monotone, but <= 0 is not
        if !(shape.curvature.is_finite() && shape.curvature > 0.0) {
            return Err(bad(format!(
                "curvature must be positive, got {}",
                shape.curvature
            )));
        }
        if params.granularity == 0 || !params.total_sms.is_multiple_of(params.granularity) {
            return Err(bad(format!(
                "total_sms {} is not a multiple of granularity {}",
                params.total_sms, params.granularity
            )));
        }
        let points = (1..=params.total_sms / params.granularity)
            .map(|k| {
                let sms = k * params.granularity;
                let share = sms as f64 / params.total_sms as f64;
                let rate = (shape.rate(share) * 100.0).round() / 100.0;
                ProfilePoint {
                    sms,
                    tokens_per_second: rate.max(0.01),
                }
            })
            .collect();
        PhaseProfile::new(phase, params.total_sms, params.granularity, points)
    };
    if params.decode.knee >= params.cold.knee {
        warnings.push(format!(
            "decode knee {} is not earlier than cold-prefill knee {}; decode is expected to saturate first",
            params.decode.knee, params.cold.knee
        ));
    }
    let bundle = ProfileBundle::new(
        build(Phase::Decode, &params.decode)?,
        build(Phase::ColdPrefill, &params.cold)?,
        build(Phase::ResumePrefill, &params.resume)?,
    )?;
    Ok(GeneratedProfile { bundle, warnings })
}

/// Checks the saturation ordering of a bundle at half the GPU: decode at
/// least `decode_floor` of its max, cold prefill below `cold_ceiling`.
/// Returns the two ratios when the half-GPU share is on the grid.
pub fn saturation_ratios(bundle: &ProfileBundle) -> Option<(f64, f64)> {
    let half = bundle.total_sms() / 2;
    if !half.is_multiple_of(bundle.granularity()) || half == 0 {
        return None;
    }
    let ratio = |phase: Phase| {
        let p = bundle.profile(phase);
        p.lookup(half).ok().map(|r| r / p.max_rate())
    };
    Some((ratio(Phase::Decode)?, ratio(Phase::ColdPrefill)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four_point(decode: [f64; 4]) -> PhaseProfile {
        let points = decode
            .iter()
            .enumerate()
            .map(|(i, &r)| ProfilePoint {
                sms: 32 * (i as u32 + 1),
                tokens_per_second: r,
            })
            .collect();
        PhaseProfile::new(Phase::Decode, 128, 32, points).unwrap()
    }

    fn bundle_with(cold: [f64; 4], resume: [f64; 4]) -> ProfileBundle {
        let mk = |phase, rates: [f64; 4]| {
            let points = rates
                .iter()
                .enumerate()
                .map(|(i, &r)| ProfilePoint {
                    sms: 32 * (i as u32 + 1),
                    tokens_per_second: r,
                })
                .collect();
            PhaseProfile::new(phase, 128, 32, points).unwrap()
        };
        ProfileBundle::new(
            mk(Phase::Decode, [30.0, 55.0, 70.0, 78.0]),
            mk(Phase::ColdPrefill, cold),
            mk(Phase::ResumePrefill, resume),
        )
        .unwrap()
    }

    #[test]
    fn lookup_reads_grid_points() {
        let p = four_point([30.0, 55.0, 70.0, 78.0]);
        assert_eq!(p.lookup(64).unwrap(), 55.0);
        assert_eq!(p.lookup(128).unwrap(), 78.0);
        assert!(matches!(
            p.lookup(48),
            Err(ProfileError::OffGrid { sms: 48, .. })
        ));
        assert!(matches!(p.lookup(0), Err(ProfileError::OutOfRange { .. })));
        assert!(matches!(
            p.lookup(160),
            Err(ProfileError::OutOfRange { .. })
        ));
    }

    #[test]
    fn mixed_rate_boundaries() {
        let b = bundle_with([40.0, 40.0, 50.0, 60.0], [80.0, 80.0, 90.0, 95.0]);
        assert_eq!(b.mixed_prefill_rate(1.0, 64).unwrap(), 40.0);
        assert_eq!(b.mixed_prefill_rate(0.0, 64).unwrap(), 80.0);
        assert_eq!(b.mixed_prefill_rate(0.5, 32).unwrap(), 60.0);
        assert!(matches!(
            b.mixed_prefill_rate(1.5, 32),
            Err(ProfileError::EtaOutOfRange(_))
        ));
        assert!(b.mixed_prefill_rate(-0.1, 32).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let flat = bundle_with([50.0; 4], [50.0; 4]);
        assert_eq!(flat.lipschitz_estimate(0.3, 32, 128).unwrap(), 0.0);

        let b = bundle_with([40.0, 55.0, 60.0, 61.0], [40.0, 55.0, 60.0, 61.0]);
        let l = b.lipschitz_estimate(0.5, 32, 64).unwrap();
        assert!((l - 15.0 / 32.0).abs() < 1e-15);
        assert!((l - 0.469).abs() < 1e-3);
        assert!(matches!(
            b.lipschitz_estimate(0.5, 64, 64),
            Err(ProfileError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn document_round_trip_and_rejection() {
        let bundle = ProfileBundle::default_synthetic();
        let text = bundle.to_toml_string();
        assert_eq!(ProfileBundle::from_toml_str(&text).unwrap(), bundle);

        let bad = text.replacen("tokens_per_second = 98.77", "tokens_per_second = 1.0", 1);
        assert_ne!(bad, text, "fixture must contain the decode point at 24 SMs");
        let err = ProfileBundle::from_toml_str(&bad).unwrap_err();
        match err {
            ProfileError::NonMonotone {
                phase, sms, line, ..
            } => {
                assert_eq!(phase, Phase::Decode);
                assert_eq!(sms, 24);
                assert!(line.is_some());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_document_names_the_grid_point() {
        let doc = "total_sms = 128\ngranularity = 32\n\
            [[decode]]\nsms = 32\ntokens_per_second = 30.0\n\
            [[decode]]\nsms = 64\ntokens_per_second = 55.0\n\
            [[decode]]\nsms = 96\ntokens_per_second = 50.0\n\
            [[decode]]\nsms = 128\ntokens_per_second = 78.0\n";
        let err = ProfileBundle::from_toml_str(doc).unwrap_err();
        assert!(
            matches!(
                err,
                ProfileError::NonMonotone {
                    sms: 96,
                    line: Some(10),
                    ..
                }
            ),
            "{err:?}"
        );
        assert!(err.to_string().contains("sms=96"));
        assert!(err.to_string().starts_with("line 10"));
    }

    #[test]
    fn mismatched_grids_rejected() {
        let mut doc = ProfileBundle::default_synthetic().to_toml_string();
        // drop the last resume point: that phase no longer spans the grid
        let cut = doc.rfind("[[resume_prefill]]").unwrap();
        doc.truncate(cut);
        let err = ProfileBundle::from_toml_str(&doc).unwrap_err();
        assert!(
            matches!(
                err,
                ProfileError::Invalid {
                    phase: Phase::ResumePrefill,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn parse_errors_carry_lines() {
        let err = ProfileBundle::from_toml_str("total_sms = 120\ngranularity = \n").unwrap_err();
        assert!(
            matches!(err, ProfileError::Document { line: Some(2), .. }),
            "{err:?}"
        );
    }

    #[test]
    fn default_bundle_has_saturation_ordering() {
        let b = ProfileBundle::default_synthetic();
        assert_eq!(b.total_slots(), 10);
        let (decode, cold) = saturation_ratios(&b).unwrap();
        assert!(decode >= 0.9, "decode at half GPU = {decode}");
        assert!(cold < 0.7, "cold at half GPU = {cold}");
    }

    #[test]
    fn generator_warns_on_inverted_knees() {
        let mut params = ShapeParams::default();
        params.decode.knee = 1.0;
        params.cold.knee = 0.5;
        let out = generate_profile(&params).unwrap();
        assert_eq!(out.warnings.len(), 1);

        params.cold.max_tokens_per_second = -5.0;
        assert!(generate_profile(&params).is_err());
    }

    fn monotone_rates(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..50.0, n).prop_map(|steps| {
            let mut acc = 1.0;
            steps
                .into_iter()
                .map(|s| {
                    acc += s;
                    acc
                })
                .collect()
        })
    }

    fn arb_bundle() -> impl Strategy<Value = ProfileBundle> {
        (1usize..=12).prop_flat_map(|n| {
            (monotone_rates(n), monotone_rates(n), monotone_rates(n)).prop_map(move |(d, c, r)| {
                let mk = |phase, rates: Vec<f64>| {
                    let points = rates
                        .into_iter()
                        .enumerate()
                        .map(|(i, tokens_per_second)| ProfilePoint {
                            sms: 8 * (i as u32 + 1),
                            tokens_per_second,
                        })
                        .collect();
                    PhaseProfile::new(phase, 8 * n as u32, 8, points).unwrap()
                };
                ProfileBundle::new(
                    mk(Phase::Decode, d),
                    mk(Phase::ColdPrefill, c),
                    mk(Phase::ResumePrefill, r),
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn mixed_rate_within_endpoints(b in arb_bundle(), eta in 0.0f64..=1.0, k in 0usize..12) {
            let sms = b.grid().nth(k % b.total_slots() as usize).unwrap();
            let c = b.lookup(Phase::ColdPrefill, sms).unwrap();
            let r = b.lookup(Phase::ResumePrefill, sms).unwrap();
            let m = b.mixed_prefill_rate(eta, sms).unwrap();
            prop_assert!(m >= c.min(r) * (1.0 - 1e-12) && m <= c.max(r) * (1.0 + 1e-12));
        }

        #[test]
        fn lipschitz_bounds_every_grid_pair(b in arb_bundle(), eta in 0.0f64..=1.0) {
            prop_assume!(b.total_slots() >= 2);
            let g = b.granularity();
            let l = b.lipschitz_estimate(eta, g, b.total_sms()).unwrap();
            // brute force: max slope over every pair, not just neighbours
            let grid: Vec<u32> = b.grid().collect();
            let mut brute = 0.0f64;
            for &x in &grid {
                for &y in &grid {
                    if x < y {
                        let dx = (y - x) as f64;
                        let dy = (b.mixed_prefill_rate(eta, y).unwrap() - b.mixed_prefill_rate(eta, x).unwrap()).abs();
                        prop_assert!(dy <= l * dx * (1.0 + 1e-12) + 1e-9);
                        if y - x == g { brute = brute.max(dy / dx); }
                    }
                }
            }
            prop_assert_eq!(brute, l);
        }

        #[test]
        fn profiles_are_monotone_on_grid(b in arb_bundle()) {
            for phase in Phase::ALL {
                let rates: Vec<f64> = b.grid().map(|s| b.lookup(phase, s).unwrap()).collect();
                prop_assert!(rates.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}

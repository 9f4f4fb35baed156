//! Domain-randomization ranges from per-leg matched gains.

use serde::{Deserialize, Serialize};

use super::MatchError;
use crate::actuator::PDGains;
use crate::num::{abs, Real};

/// Slack when snapping a value that is already a whole number of steps.
const SNAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[serde(bound(deserialize = "T: Real"))]
pub struct RangeOptions<T> {
    pub kp_step: T,
    pub kd_step: T,
    /// Multiplier (≥ 1) on the largest observed deviation.
    pub margin_factor: T,
    /// Replaces the rounded mean as the Kp center.
    pub kp_nominal: Option<T>,
    /// Replaces the rounded mean as the Kd center.
    pub kd_nominal: Option<T>,
}

impl<T: Real> Default for RangeOptions<T> {
    fn default() -> Self {
        Self {
            kp_step: T::lit(0.5),
            kd_step: T::lit(0.05),
            margin_factor: T::lit(1.5),
            kp_nominal: None,
            kd_nominal: None,
        }
    }
}

impl<T: Real> RangeOptions<T> {
    pub fn with_margin(margin_factor: T) -> Self {
        Self {
            margin_factor,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        for (name, step) in [("kp_step", self.kp_step), ("kd_step", self.kd_step)] {
            if !(step.is_finite() && step > T::zero()) {
                return Err(MatchError::InvalidOptions(format!("{name} must be > 0, got {step}")));
            }
        }
        if !(self.margin_factor.is_finite() && self.margin_factor >= T::one()) {
            return Err(MatchError::InvalidOptions(format!(
                "margin_factor must be >= 1, got {}",
                self.margin_factor
            )));
        }
        for v in [self.kp_nominal, self.kd_nominal].into_iter().flatten() {
            if !v.is_finite() {
                return Err(MatchError::InvalidOptions("nominal override is not finite".into()));
            }
        }
        Ok(())
    }
}

/// Symmetric range `nominal ± half_range` for one gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainRange<T> {
    pub nominal: T,
    pub half_range: T,
    pub step: T,
}

impl<T: Real> GainRange<T> {
    pub fn lower(&self) -> T {
        self.nominal - self.half_range
    }

    pub fn upper(&self) -> T {
        self.nominal + self.half_range
    }

    pub fn contains(&self, value: T) -> bool {
        abs(value - self.nominal) <= self.half_range + T::lit(SNAP_TOLERANCE) * self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationRange<T> {
    pub kp: GainRange<T>,
    pub kd: GainRange<T>,
    pub margin_factor: T,
}

/// Block consumed by training configs: nominal gains plus the interval of
/// the uniform offset added to each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationConfig<T> {
    pub stiffness: T,
    pub damping: T,
    pub added_stiffness_range: [T; 2],
    pub added_damping_range: [T; 2],
    pub margin_factor: T,
}

impl<T: Real> RandomizationRange<T> {
    pub fn to_config(&self) -> RandomizationConfig<T> {
        RandomizationConfig {
            stiffness: self.kp.nominal,
            damping: self.kd.nominal,
            added_stiffness_range: [-self.kp.half_range, self.kp.half_range],
            added_damping_range: [-self.kd.half_range, self.kd.half_range],
            margin_factor: self.margin_factor,
        }
    }
}

/// `k · step`, divided through the reciprocal when that is a whole number so
/// decimal steps such as 0.05 give the nearest decimal result.
fn quantize<T: Real>(k: T, step: T) -> T {
    let inv = T::one() / step;
    let inv_int = inv.round();
    if inv_int >= T::one() && abs(inv - inv_int) <= T::lit(SNAP_TOLERANCE) * inv {
        k / inv_int
    } else {
        k * step
    }
}

fn round_to_step<T: Real>(value: T, step: T) -> T {
    quantize((value / step).round(), step)
}

fn ceil_to_step<T: Real>(value: T, step: T) -> T {
    quantize((value / step - T::lit(SNAP_TOLERANCE)).ceil(), step)
}

fn gain_range<T: Real>(values: &[T], step: T, margin: T, nominal: Option<T>) -> GainRange<T> {
    let mean = values.iter().copied().sum::<T>() / T::from_index(values.len());
    let nominal = nominal.unwrap_or_else(|| round_to_step(mean, step));
    let max_dev = values.iter().map(|&v| abs(v - nominal)).fold(T::zero(), T::max);
    let half_range = ceil_to_step(margin * max_dev, step).max(step);
    GainRange {
        nominal,
        half_range,
        step,
    }
}

/// Nominal gains and the smallest step-aligned symmetric ranges that cover
/// every matched pair, widened by the margin factor.
pub fn derive_ranges<T: Real>(
    matched: &[PDGains<T>],
    options: &RangeOptions<T>,
) -> Result<RandomizationRange<T>, MatchError> {
    options.validate()?;
    if matched.len() < 2 {
        return Err(MatchError::InsufficientData(format!(
            "need at least 2 matched gain pairs, got {}",
            matched.len()
        )));
    }
    if matched.iter().any(|g| !(g.kp.is_finite() && g.kd.is_finite())) {
        return Err(MatchError::InsufficientData("matched gains must be finite".into()));
    }
    let kp: Vec<T> = matched.iter().map(|g| g.kp).collect();
    let kd: Vec<T> = matched.iter().map(|g| g.kd).collect();
    Ok(RandomizationRange {
        kp: gain_range(&kp, options.kp_step, options.margin_factor, options.kp_nominal),
        kd: gain_range(&kd, options.kd_step, options.margin_factor, options.kd_nominal),
        margin_factor: options.margin_factor,
    })
}

/// Matched pairs that fall outside a range, by input index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoverageReport<T> {
    pub uncovered_kp: Vec<(usize, T)>,
    pub uncovered_kd: Vec<(usize, T)>,
}

impl<T> CoverageReport<T> {
    pub fn is_covered(&self) -> bool {
        self.uncovered_kp.is_empty() && self.uncovered_kd.is_empty()
    }
}

/// Lists every matched gain that `range` fails to cover.
pub fn check_coverage<T: Real>(range: &RandomizationRange<T>, matched: &[PDGains<T>]) -> CoverageReport<T> {
    let pick = |r: &GainRange<T>, get: fn(&PDGains<T>) -> T| {
        matched
            .iter()
            .enumerate()
            .filter(|(_, g)| !r.contains(get(g)))
            .map(|(i, g)| (i, get(g)))
            .collect()
    };
    CoverageReport {
        uncovered_kp: pick(&range.kp, |g| g.kp),
        uncovered_kd: pick(&range.kd, |g| g.kd),
    }
}

//! Chirp excitation for joint frequency sweeps.
//!
//! The phase is evaluated in closed form, so the velocity channel is the exact
//! derivative of the position channel rather than a numerical approximation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChirpError {
    #[error("invalid chirp: {0}")]
    Invalid(String),
    #[error("time {t} s outside chirp interval [0, {duration}] s")]
    OutOfRange { t: f64, duration: f64 },
}

/// How the instantaneous frequency moves from `f_start` to `f_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepLaw {
    #[default]
    Linear,
    Logarithmic,
}

/// Constant-amplitude position sweep.
///
/// An amplitude of zero is accepted and describes a null excitation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(deserialize = "T: Real"))]
pub struct ChirpSpec<T> {
    /// Hz
    pub f_start: T,
    /// Hz
    pub f_end: T,
    /// rad
    pub amplitude: T,
    /// s
    pub duration: T,
    #[serde(default)]
    pub sweep_law: SweepLaw,
}

impl<T: Real> Default for ChirpSpec<T> {
    /// 0.1 to 25 Hz at 0.25 rad, linear over 120 s.
    fn default() -> Self {
        Self {
            f_start: T::lit(0.1),
            f_end: T::lit(25.0),
            amplitude: T::lit(0.25),
            duration: T::lit(120.0),
            sweep_law: SweepLaw::Linear,
        }
    }
}

impl<T: Real> ChirpSpec<T> {
    pub fn validate(&self) -> Result<(), ChirpError> {
        let all_finite = [self.f_start, self.f_end, self.amplitude, self.duration]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(ChirpError::Invalid("non-finite field".into()));
        }
        if !(self.f_start > T::zero() && self.f_start < self.f_end) {
            return Err(ChirpError::Invalid(format!(
                "need 0 < f_start < f_end, got f_start={} f_end={}",
                self.f_start, self.f_end
            )));
        }
        if self.amplitude < T::zero() {
            return Err(ChirpError::Invalid(format!(
                "amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        if self.duration <= T::zero() {
            return Err(ChirpError::Invalid(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        Ok(())
    }

    fn check_time(&self, t: T) -> Result<(), ChirpError> {
        if t >= T::zero() && t <= self.duration {
            Ok(())
        } else {
            Err(ChirpError::OutOfRange {
                t: t.to_f64().unwrap_or(f64::NAN),
                duration: self.duration.as_f64(),
            })
        }
    }

    /// Instantaneous frequency without range checking.
    fn freq_unchecked(&self, t: T) -> T {
        let u = t / self.duration;
        match self.sweep_law {
            SweepLaw::Linear => self.f_start + (self.f_end - self.f_start) * u,
            SweepLaw::Logarithmic => self.f_start * (self.f_end / self.f_start).powf(u),
        }
    }

    /// Phase φ(t) with φ(0) = 0.
    fn phase_unchecked(&self, t: T) -> T {
        let two_pi = T::TAU();
        match self.sweep_law {
            SweepLaw::Linear => {
                let rate = (self.f_end - self.f_start) / self.duration;
                two_pi * t * (self.f_start + rate * t / T::lit(2.0))
            }
            SweepLaw::Logarithmic => {
                let ratio_ln = (self.f_end / self.f_start).ln();
                let u = t / self.duration;
                // exp_m1 keeps precision near t = 0
                two_pi * self.f_start * self.duration * (ratio_ln * u).exp_m1() / ratio_ln
            }
        }
    }

    /// Instantaneous frequency in Hz.
    pub fn instantaneous_frequency(&self, t: T) -> Result<T, ChirpError> {
        self.check_time(t)?;
        Ok(self.freq_unchecked(t))
    }

    /// Position (rad) and its exact time derivative (rad/s).
    pub fn sample(&self, t: T) -> Result<(T, T), ChirpError> {
        self.check_time(t)?;
        let phase = self.phase_unchecked(t);
        let (s, c) = phase.sin_cos();
        let omega = T::TAU() * self.freq_unchecked(t);
        Ok((self.amplitude * s, self.amplitude * c * omega))
    }
}

/// Free-function form of [`ChirpSpec::sample`].
pub fn chirp_signal<T: Real>(spec: &ChirpSpec<T>, t: T) -> Result<(T, T), ChirpError> {
    spec.sample(t)
}

/// Free-function form of [`ChirpSpec::instantaneous_frequency`].
pub fn instantaneous_frequency<T: Real>(spec: &ChirpSpec<T>, t: T) -> Result<T, ChirpError> {
    spec.instantaneous_frequency(t)
}

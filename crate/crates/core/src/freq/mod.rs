//! Bode magnitude curves: closed-form model response, empirical estimation
//! and band-limited comparison.

mod welch;

pub use welch::{estimate_frf, WelchConfig, COHERENCE_FLOOR};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{ActuatorParams, PDGains, SimError};
use crate::num::Real;

/// Minimum number of reference points inside a comparison band.
pub const MIN_BAND_POINTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid Bode curve: {0}")]
    InvalidCurve(String),
    #[error("invalid frequency band: {0}")]
    InvalidBand(String),
    #[error(transparent)]
    Model(#[from] SimError),
    #[error("closed-loop magnitude is singular at {frequency} Hz (no damping at the natural frequency)")]
    Singularity { frequency: f64 },
    #[error("frequency response estimation failed: {0}")]
    Estimation(String),
    #[error("insufficient band coverage over {low}..{high} Hz: {reason}")]
    Coverage { low: f64, high: f64, reason: String },
}

/// Closed interval of frequencies (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyBand<T> {
    pub f_low: T,
    pub f_high: T,
}

impl<T: Real> FrequencyBand<T> {
    pub fn new(f_low: T, f_high: T) -> Result<Self, AnalysisError> {
        let band = Self { f_low, f_high };
        band.validate()?;
        Ok(band)
    }

    pub(crate) fn new_unchecked(f_low: T, f_high: T) -> Self {
        Self { f_low, f_high }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.f_low.is_finite() && self.f_high.is_finite() && self.f_low > T::zero() && self.f_low < self.f_high {
            Ok(())
        } else {
            Err(AnalysisError::InvalidBand(format!(
                "need 0 < f_low < f_high, got {}..{}",
                self.f_low, self.f_high
            )))
        }
    }

    pub fn contains(&self, f: T) -> bool {
        f >= self.f_low && f <= self.f_high
    }
}

/// Magnitude of a frequency response on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodeMagnitude<T> {
    /// Hz
    pub frequencies: Vec<T>,
    /// 20·log10|H|
    pub magnitude_db: Vec<T>,
}

impl<T: Real> BodeMagnitude<T> {
    pub fn new(frequencies: Vec<T>, magnitude_db: Vec<T>) -> Result<Self, AnalysisError> {
        let curve = Self {
            frequencies,
            magnitude_db,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |m: String| Err(AnalysisError::InvalidCurve(m));
        if self.frequencies.len() != self.magnitude_db.len() {
            return bad(format!(
                "{} frequencies but {} magnitudes",
                self.frequencies.len(),
                self.magnitude_db.len()
            ));
        }
        if self.frequencies.is_empty() {
            return bad("empty curve".into());
        }
        if let Some(f) = self.frequencies.iter().find(|f| !(f.is_finite() && **f > T::zero())) {
            return bad(format!("frequency {f} is not positive and finite"));
        }
        if let Some(w) = self.frequencies.windows(2).find(|w| w[1] <= w[0]) {
            return bad(format!("frequencies not strictly increasing at {} -> {}", w[0], w[1]));
        }
        if let Some(i) = self.magnitude_db.iter().position(|m| !m.is_finite()) {
            return bad(format!("magnitude at {} Hz is not finite", self.frequencies[i]));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Largest magnitude and the frequency where it occurs.
    pub fn peak(&self) -> (T, T) {
        self.frequencies
            .iter()
            .zip(&self.magnitude_db)
            .fold((self.frequencies[0], self.magnitude_db[0]), |best, (&f, &m)| {
                if m > best.1 {
                    (f, m)
                } else {
                    best
                }
            })
    }

    /// Points with frequency inside `band`.
    pub fn restrict(&self, band: &FrequencyBand<T>) -> Result<Self, AnalysisError> {
        let (frequencies, magnitude_db) = self
            .frequencies
            .iter()
            .zip(&self.magnitude_db)
            .filter(|(f, _)| band.contains(**f))
            .map(|(f, m)| (*f, *m))
            .unzip();
        Self::new(frequencies, magnitude_db)
    }

    /// Linear interpolation in (log f, dB). `f` must lie inside the grid.
    pub fn interpolate(&self, f: T) -> Option<T> {
        let freqs = &self.frequencies;
        if f < freqs[0] || f > freqs[freqs.len() - 1] {
            return None;
        }
        let j = freqs.partition_point(|&x| x < f);
        if freqs[j] == f {
            return Some(self.magnitude_db[j]);
        }
        Some(interp_log(freqs[j - 1], freqs[j], self.magnitude_db[j - 1], self.magnitude_db[j], f))
    }
}

fn interp_log<T: Real>(f0: T, f1: T, m0: T, m1: T, f: T) -> T {
    let t = (f.ln() - f0.ln()) / (f1.ln() - f0.ln());
    m0 + t * (m1 - m0)
}

/// `n` logarithmically spaced frequencies from `f_min` to `f_max` inclusive.
pub fn log_space<T: Real>(f_min: T, f_max: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![f_min],
        _ => {
            let (a, b) = (f_min.ln(), f_max.ln());
            let last = T::from_index(n - 1);
            (0..n)
                .map(|i| {
                    if i == 0 {
                        f_min
                    } else if i == n - 1 {
                        f_max
                    } else {
                        (a + (b - a) * T::from_index(i) / last).exp()
                    }
                })
                .collect()
        }
    }
}

/// `|H(jω)|²` of the closed-loop joint model.
pub(crate) fn magnitude_sq_at_omega<T: Real>(inertia: T, damping: T, gains: &PDGains<T>, omega: T) -> Option<T> {
    let kd_w = gains.kd * omega;
    let num = gains.kp * gains.kp + kd_w * kd_w;
    let stiff = gains.kp - inertia * omega * omega;
    let damp = (gains.kd + damping) * omega;
    let den = stiff * stiff + damp * damp;
    if den > T::zero() {
        Some(num / den)
    } else {
        None
    }
}

/// Closed-form magnitude of `θ/θ_des` for the PD-controlled joint,
/// including the `Kd·θ̇_des` feed-forward zero.
pub fn analytic_bode<T: Real>(
    params: &ActuatorParams<T>,
    gains: &PDGains<T>,
    frequencies: &[T],
) -> Result<BodeMagnitude<T>, AnalysisError> {
    params.validate()?;
    gains.validate()?;
    let inertia = params.total_inertia();
    let mut mags = Vec::with_capacity(frequencies.len());
    for &f in frequencies {
        let omega = T::TAU() * f;
        let mag_sq = magnitude_sq_at_omega(inertia, params.viscous_friction, gains, omega)
            .ok_or(AnalysisError::Singularity { frequency: f.as_f64() })?;
        mags.push(T::lit(10.0) * mag_sq.log10());
    }
    BodeMagnitude::new(frequencies.to_vec(), mags)
}

/// Natural frequency `√(Kp/I)/2π` in Hz.
pub fn natural_frequency<T: Real>(params: &ActuatorParams<T>, gains: &PDGains<T>) -> T {
    (gains.kp / params.total_inertia()).sqrt() / T::TAU()
}

/// Checks that `reference` can be compared over `band` and returns the
/// reference points inside it.
pub fn band_points<T: Real>(
    reference: &BodeMagnitude<T>,
    band: &FrequencyBand<T>,
) -> Result<BodeMagnitude<T>, AnalysisError> {
    band.validate()?;
    reference.validate()?;
    let coverage = |reason: String| AnalysisError::Coverage {
        low: band.f_low.as_f64(),
        high: band.f_high.as_f64(),
        reason,
    };
    let freqs = &reference.frequencies;
    let first = freqs.partition_point(|&f| f < band.f_low);
    let end = freqs.partition_point(|&f| f <= band.f_high);
    let count = end.saturating_sub(first);
    if count < MIN_BAND_POINTS {
        return Err(coverage(format!(
            "{count} reference points in band, need at least {MIN_BAND_POINTS}"
        )));
    }
    // a curve that starts or stops inside the band must do so within one grid step of the edge
    if first == 0 {
        let gap = freqs[0] - band.f_low;
        let spacing = freqs[1] - freqs[0];
        if gap > spacing {
            return Err(coverage(format!(
                "reference missing {}..{} Hz",
                band.f_low, freqs[0]
            )));
        }
    }
    if end == freqs.len() {
        let n = freqs.len();
        let gap = band.f_high - freqs[n - 1];
        let spacing = freqs[n - 1] - freqs[n - 2];
        if gap > spacing {
            return Err(coverage(format!(
                "reference missing {}..{} Hz",
                freqs[n - 1],
                band.f_high
            )));
        }
    }
    BodeMagnitude::new(freqs[first..end].to_vec(), reference.magnitude_db[first..end].to_vec())
}

/// Mean squared dB difference between `a` and `b` over the points of `a`
/// inside `band`; `b` is interpolated onto that grid.
pub fn band_mse<T: Real>(
    a: &BodeMagnitude<T>,
    b: &BodeMagnitude<T>,
    band: &FrequencyBand<T>,
) -> Result<T, AnalysisError> {
    let grid = band_points(a, band)?;
    b.validate()?;
    mse_on_grid(&grid, b, band)
}

/// `band_mse` with the reference already reduced by [`band_points`].
pub(crate) fn mse_on_grid<T: Real>(
    grid: &BodeMagnitude<T>,
    b: &BodeMagnitude<T>,
    band: &FrequencyBand<T>,
) -> Result<T, AnalysisError> {
    let lo = grid.frequencies[0];
    let hi = grid.frequencies[grid.len() - 1];
    let b_lo = b.frequencies[0];
    let b_hi = b.frequencies[b.len() - 1];
    if b_lo > lo || b_hi < hi {
        return Err(AnalysisError::Coverage {
            low: band.f_low.as_f64(),
            high: band.f_high.as_f64(),
            reason: format!(
                "compared curve spans {b_lo}..{b_hi} Hz but {lo}..{hi} Hz is required"
            ),
        });
    }
    let mut sum = T::zero();
    let mut j = 0usize;
    for (&f, &m) in grid.frequencies.iter().zip(&grid.magnitude_db) {
        while b.frequencies[j] < f {
            j += 1;
        }
        let other = if b.frequencies[j] == f {
            b.magnitude_db[j]
        } else {
            interp_log(
                b.frequencies[j - 1],
                b.frequencies[j],
                b.magnitude_db[j - 1],
                b.magnitude_db[j],
                f,
            )
        };
        let d = m - other;
        sum = sum + d * d;
    }
    Ok(sum / T::from_index(grid.len()))
}

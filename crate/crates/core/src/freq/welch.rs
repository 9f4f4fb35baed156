//! Averaged cross-spectral (H1) frequency response estimate.

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, BodeMagnitude};
use crate::actuator::TimeSeries;
use crate::num::Real;

/// Bins whose input auto-spectrum falls below this fraction of its maximum
/// are dropped.
pub const COHERENCE_FLOOR: f64 = 1e-12;

/// Shortest accepted segment, in samples.
pub const MIN_SEGMENT_SAMPLES: usize = 16;

/// Segmenting parameters for [`estimate_frf`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[serde(bound(deserialize = "T: Real"))]
pub struct WelchConfig<T> {
    pub window_seconds: T,
    pub overlap_fraction: T,
}

impl<T: Real> Default for WelchConfig<T> {
    fn default() -> Self {
        Self {
            window_seconds: T::lit(20.0),
            overlap_fraction: T::lit(0.5),
        }
    }
}

impl<T: Real> WelchConfig<T> {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.window_seconds.is_finite() && self.window_seconds > T::zero()) {
            return Err(AnalysisError::Estimation(format!(
                "window_seconds must be > 0, got {}",
                self.window_seconds
            )));
        }
        if !(self.overlap_fraction >= T::zero() && self.overlap_fraction < T::one()) {
            return Err(AnalysisError::Estimation(format!(
                "overlap_fraction must be in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        Ok(())
    }

    pub fn estimate(&self, ts: &TimeSeries<T>) -> Result<BodeMagnitude<T>, AnalysisError> {
        estimate_frf(ts, self.window_seconds, self.overlap_fraction)
    }
}

/// Periodic Hann window.
fn hann<T: Real>(n: usize) -> Vec<T> {
    let len = T::from_index(n);
    (0..n)
        .map(|k| {
            let x = T::TAU() * T::from_index(k) / len;
            T::lit(0.5) - T::lit(0.5) * x.cos()
        })
        .collect()
}

/// Estimates `|H(f)|` from command to measurement as `|S_yu| / S_uu`,
/// averaging Hann-windowed segments. The DC bin and bins at or above
/// Nyquist are not returned.
pub fn estimate_frf<T: Real>(
    ts: &TimeSeries<T>,
    window_seconds: T,
    overlap_fraction: T,
) -> Result<BodeMagnitude<T>, AnalysisError> {
    WelchConfig {
        window_seconds,
        overlap_fraction,
    }
    .validate()?;
    ts.validate()?;

    let fs = ts.sample_rate;
    let nperseg = (window_seconds * fs)
        .round()
        .to_usize()
        .ok_or_else(|| AnalysisError::Estimation("window length not representable".into()))?;
    if nperseg < MIN_SEGMENT_SAMPLES {
        return Err(AnalysisError::Estimation(format!(
            "window of {nperseg} samples is shorter than {MIN_SEGMENT_SAMPLES}"
        )));
    }
    if ts.len() < 2 * nperseg {
        return Err(AnalysisError::Estimation(format!(
            "series of {} samples is shorter than two {}-sample windows",
            ts.len(),
            nperseg
        )));
    }
    let overlap = (overlap_fraction * T::from_index(nperseg))
        .floor()
        .to_usize()
        .unwrap_or(0)
        .min(nperseg - 1);
    let hop = nperseg - overlap;

    let window = hann::<T>(nperseg);
    let fft = FftPlanner::<T>::new().plan_fft_forward(nperseg);
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    let mut u_buf = vec![Complex::new(T::zero(), T::zero()); nperseg];
    let mut y_buf = u_buf.clone();

    // bins 1..n_bins lie strictly between DC and Nyquist
    let n_bins = nperseg.div_ceil(2);
    let mut s_uu = vec![T::zero(); n_bins];
    let mut s_yu = vec![Complex::new(T::zero(), T::zero()); n_bins];

    let mut start = 0;
    while start + nperseg <= ts.len() {
        let seg = start..start + nperseg;
        for (((u, y), w), (&c, &m)) in u_buf
            .iter_mut()
            .zip(y_buf.iter_mut())
            .zip(&window)
            .zip(ts.command[seg.clone()].iter().zip(&ts.measured[seg]))
        {
            *u = Complex::new(c * *w, T::zero());
            *y = Complex::new(m * *w, T::zero());
        }
        fft.process_with_scratch(&mut u_buf, &mut scratch);
        fft.process_with_scratch(&mut y_buf, &mut scratch);
        for k in 1..n_bins {
            let u = u_buf[k];
            s_uu[k] = s_uu[k] + u.norm_sqr();
            s_yu[k] = s_yu[k] + y_buf[k] * u.conj();
        }
        start += hop;
    }

    let peak = s_uu[1..].iter().copied().fold(T::zero(), T::max);
    if !(peak > T::zero() && peak.is_finite()) {
        return Err(AnalysisError::Estimation("command channel carries no spectral energy".into()));
    }
    let floor = T::lit(COHERENCE_FLOOR) * peak;
    let bin_width = fs / T::from_index(nperseg);
    let mut freqs = Vec::new();
    let mut mags = Vec::new();
    for k in 1..n_bins {
        if s_uu[k] < floor {
            continue;
        }
        let gain = s_yu[k].norm() / s_uu[k];
        let db = T::lit(20.0) * gain.log10();
        if db.is_finite() {
            freqs.push(T::from_index(k) * bin_width);
            mags.push(db);
        }
    }
    if freqs.is_empty() {
        return Err(AnalysisError::Estimation(
            "no frequency bins survived the coherence guard".into(),
        ));
    }
    BodeMagnitude::new(freqs, mags)
}

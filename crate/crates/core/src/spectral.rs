//! Frequency-offset estimation and Hann-windowed spectra of oscillator traces.
//!
//! Convention: a trace `exp(-i w t)` has offset `+w` (blue shift) and its spectrum
//! peaks at `+w/2pi`. Frequencies are reported in Hz.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectorySegment;
use crate::error::{Error, Result};
use crate::model::TIME_UNIT_S;

/// Normalized regression residual, rad^2, above which an offset is flagged.
pub const LOW_CONFIDENCE_RESIDUAL: f64 = 1.0e-2;

/// Floor applied before taking log10 of a normalized spectrum.
pub const LOG_FLOOR: f64 = 1.0e-6;

/// Minimum number of post-transient samples for the phase-slope fit.
pub const MIN_FIT_SAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSlope {
    /// rad/us
    pub omega: f64,
    pub confidence: f64,
    /// Weighted mean squared phase residual, rad^2.
    pub residual: f64,
}

impl PhaseSlope {
    pub fn is_low_confidence(confidence: f64) -> bool {
        confidence < 1.0 / (1.0 + LOW_CONFIDENCE_RESIDUAL)
    }
}

/// Continuous phase from a sequence of complex samples.
pub fn unwrap_phase(z: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for w in z {
        let p = w.arg();
        if let Some(q) = prev {
            let d = p - q;
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        prev = Some(p);
        out.push(p + offset);
    }
    out
}

/// Fits `phi = phi0 - w t` to samples weighted by `|z|^2`.
pub fn phase_slope(times: &[f64], z: &[Complex64]) -> Result<PhaseSlope> {
    if times.len() != z.len() {
        return Err(Error::Shape(format!("{} times for {} samples", times.len(), z.len())));
    }
    if z.len() < MIN_FIT_SAMPLES {
        return Err(Error::Shape(format!(
            "phase-slope fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            z.len()
        )));
    }
    let w: Vec<f64> = z.iter().map(|v| v.norm_sqr()).collect();
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) || !sw.is_finite() {
        return Err(Error::UndefinedPhase);
    }
    let phi = unwrap_phase(z);
    let tm = times.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>() / sw;
    let pm = phi.iter().zip(&w).map(|(p, w)| p * w).sum::<f64>() / sw;
    let (mut stt, mut stp) = (0.0, 0.0);
    for ((t, p), w) in times.iter().zip(&phi).zip(&w) {
        stt += w * (t - tm) * (t - tm);
        stp += w * (t - tm) * (p - pm);
    }
    if !(stt > 0.0) {
        return Err(Error::UndefinedPhase);
    }
    let slope = stp / stt;
    let residual = times
        .iter()
        .zip(&phi)
        .zip(&w)
        .map(|((t, p), w)| {
            let r = p - (pm + slope * (t - tm));
            w * r * r
        })
        .sum::<f64>()
        / sw;
    Ok(PhaseSlope {
        omega: -slope,
        confidence: 1.0 / (1.0 + residual),
        residual,
    })
}

/// Offset of the photon amplitude over the trailing `fit_fraction` of the
/// post-transient part of `trace`.
pub fn phase_slope_offset(trace: &TrajectorySegment, t_drop: f64, fit_fraction: f64) -> Result<PhaseSlope> {
    if !(fit_fraction > 0.0 && fit_fraction <= 1.0) {
        return Err(Error::Domain(format!("fit_fraction must lie in (0, 1], got {fit_fraction}")));
    }
    let start = trace.drop_index(t_drop);
    let post = trace.len() - start;
    if post < MIN_FIT_SAMPLES {
        return Err(Error::Shape(format!(
            "only {post} samples after the transient cut, need {MIN_FIT_SAMPLES}"
        )));
    }
    let keep = ((post as f64 * fit_fraction).round() as usize).clamp(MIN_FIT_SAMPLES, post);
    let from = trace.len() - keep;
    phase_slope(&trace.times[from..], &trace.a_samples[from..])
}

/// Symmetric Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![1.0; n];
    }
    (0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Unnormalized windowed spectrum on a centred frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSpectrum {
    /// Ascending bin frequencies, Hz.
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Sum of |w_n z_n|^2 over the input.
    pub windowed_energy: f64,
}

/// Bin frequencies in Hz for `n` samples at step `dt` us, ascending, zero at
/// index `n/2`.
pub fn centred_freqs(n: usize, dt: f64) -> Vec<f64> {
    let df = 1.0 / (n as f64 * dt * TIME_UNIT_S);
    let half = (n / 2) as i64;
    (0..n as i64).map(|k| (k - half) as f64 * df).collect()
}

/// Hann-windowed DFT of complex samples with step `dt` (us).
pub fn windowed_spectrum(z: &[Complex64], dt: f64) -> Result<RawSpectrum> {
    let n = z.len();
    if n < 2 {
        return Err(Error::Shape(format!("spectrum needs at least 2 samples, got {n}")));
    }
    let win = hann_window(n);
    let mut buf: Vec<Complex64> = z.iter().zip(&win).map(|(v, w)| v * *w).collect();
    let windowed_energy = buf.iter().map(|v| v.norm_sqr()).sum();
    // Positive-exponent transform so that exp(-i w t) lands on +w.
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let half = n / 2;
    let mut values = Vec::with_capacity(n);
    values.extend_from_slice(&buf[n - half..]);
    values.extend_from_slice(&buf[..n - half]);
    Ok(RawSpectrum {
        freqs: centred_freqs(n, dt),
        values,
        windowed_energy,
    })
}

/// Scales `v` to unit maximum. All-zero input is returned unchanged.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let peak = v.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        v.iter().map(|x| x / peak).collect()
    } else {
        v.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Hz
    pub freqs: Vec<f64>,
    /// Magnitudes normalized to unit maximum.
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    /// Frequency of the largest bin, Hz.
    pub fn peak_frequency(&self) -> f64 {
        let (i, _) = self
            .magnitudes
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
        self.freqs[i]
    }

    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() < 2 {
            0.0
        } else {
            self.freqs[1] - self.freqs[0]
        }
    }
}

/// Normalized magnitude spectrum of the photon amplitude after `t_drop`.
pub fn hann_fft(trace: &TrajectorySegment, t_drop: f64) -> Result<Spectrum> {
    let start = trace.drop_index(t_drop);
    let raw = windowed_spectrum(&trace.a_samples[start..], trace.dt)?;
    let mags: Vec<f64> = raw.values.iter().map(|v| v.norm()).collect();
    Ok(Spectrum {
        freqs: raw.freqs,
        magnitudes: normalize(&mags),
    })
}

/// Normalized spectra stacked column by column against nominal detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    /// Hz
    pub freqs: Vec<f64>,
    /// Nominal detunings, rad/us.
    pub detunings: Vec<f64>,
    /// `magnitudes[k]` is the column for `detunings[k]`, aligned with `freqs`.
    pub magnitudes: Vec<Vec<f64>>,
    pub log10: bool,
}

impl Spectrogram {
    /// log10 of the magnitudes with values below `floor` clamped.
    pub fn log10_view(&self, floor: f64) -> Vec<Vec<f64>> {
        self.magnitudes
            .iter()
            .map(|col| col.iter().map(|m| m.max(floor).log10()).collect())
            .collect()
    }

    /// Values for display, honouring the `log10` flag with [`LOG_FLOOR`].
    pub fn rendered(&self) -> Vec<Vec<f64>> {
        if self.log10 {
            self.log10_view(LOG_FLOOR)
        } else {
            self.magnitudes.clone()
        }
    }
}

/// Builds the spectrogram of a sweep. `window` crops the frequency axis to
/// `[lo, hi]` Hz.
pub fn build_spectrogram(
    segments: &[TrajectorySegment],
    detunings: &[f64],
    t_drop: f64,
    window: Option<(f64, f64)>,
) -> Result<Spectrogram> {
    if segments.len() != detunings.len() {
        return Err(Error::Shape(format!(
            "{} segments for {} detunings",
            segments.len(),
            detunings.len()
        )));
    }
    let Some(first) = segments.first() else {
        return Err(Error::Shape("no segments".into()));
    };
    let post_len = first.len() - first.drop_index(t_drop);
    for (k, s) in segments.iter().enumerate() {
        let n = s.len() - s.drop_index(t_drop);
        if n != post_len || s.dt != first.dt {
            return Err(Error::Shape(format!(
                "segment {k} has {n} post-transient samples at dt {}, expected {post_len} at dt {}",
                s.dt, first.dt
            )));
        }
    }
    let mut freqs = Vec::new();
    let mut magnitudes = Vec::with_capacity(segments.len());
    for s in segments {
        let sp = hann_fft(s, t_drop)?;
        let keep: Vec<usize> = match window {
            Some((lo, hi)) => (0..sp.freqs.len())
                .filter(|&i| sp.freqs[i] >= lo && sp.freqs[i] <= hi)
                .collect(),
            None => (0..sp.freqs.len()).collect(),
        };
        if freqs.is_empty() {
            freqs = keep.iter().map(|&i| sp.freqs[i]).collect();
        }
        magnitudes.push(keep.iter().map(|&i| sp.magnitudes[i]).collect());
    }
    Ok(Spectrogram {
        freqs,
        detunings: detunings.to_vec(),
        magnitudes,
        log10: true,
    })
}

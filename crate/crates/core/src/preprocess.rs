//! Filtering, resampling, artifact rejection and epoching.
//!
//! Every filter here is a cascade of second-order sections run forward and
//! then backward over the signal, so the net phase response is zero and the
//! magnitude response is squared.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal_io::{ChannelMeta, Recording};

pub const DEFAULT_NOTCH_Q: f64 = 30.0;
pub const DEFAULT_Z_THRESHOLD: f64 = 5.0;
pub const DEFAULT_ARTIFACT_WINDOW_S: f64 = 1.0;
const KAISER_BETA: f64 = 8.0;
/// Zero crossings of the interpolation kernel on each side, in units of the
/// lower of the two sample periods.
const SINC_HALF_WIDTH: f64 = 32.0;
/// Anti-alias cutoff as a fraction of the lower Nyquist frequency.
const SINC_CUTOFF: f64 = 0.9;

/// One second-order section, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn from_raw(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Self {
        Biquad {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a1 / a0, a2 / a0],
        }
    }

    pub fn lowpass(fc: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let (sn, cs) = w0.sin_cos();
        let alpha = sn / (2.0 * q);
        // 1 - cos(w0), written to stay accurate for tiny w0
        let omc = 2.0 * (w0 / 2.0).sin().powi(2);
        Biquad::from_raw([omc / 2.0, omc, omc / 2.0], 1.0 + alpha, -2.0 * cs, 1.0 - alpha)
    }

    pub fn highpass(fc: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let (sn, cs) = w0.sin_cos();
        let alpha = sn / (2.0 * q);
        let opc = 1.0 + cs;
        Biquad::from_raw([opc / 2.0, -opc, opc / 2.0], 1.0 + alpha, -2.0 * cs, 1.0 - alpha)
    }

    pub fn notch(f0: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let (sn, cs) = w0.sin_cos();
        let alpha = sn / (2.0 * q);
        Biquad::from_raw([1.0, -2.0 * cs, 1.0], 1.0 + alpha, -2.0 * cs, 1.0 - alpha)
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Magnitude response at `f` for sample rate `fs` (single pass).
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let z1 = num_complex::Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + self.b[1] * z1 + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z1 + self.a[1] * z2;
        (num / den).norm()
    }
}

/// Butterworth section quality factors for an even `order`.
fn butterworth_qs(order: usize) -> Vec<f64> {
    (0..order / 2)
        .map(|k| 1.0 / (2.0 * (PI * (2 * k + 1) as f64 / (2 * order) as f64).cos()))
        .collect()
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    /// 4th-order Butterworth band-pass (high-pass then low-pass); `lo_hz == 0`
    /// leaves only the low-pass half.
    pub fn butter_bandpass(lo_hz: f64, hi_hz: f64, fs: f64) -> Result<Self> {
        let nyq = fs / 2.0;
        if !(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz < nyq) || !lo_hz.is_finite() {
            return Err(Error::arg(format!(
                "band edges must satisfy 0 <= lo < hi < {nyq}, got {lo_hz}..{hi_hz}"
            )));
        }
        let qs = butterworth_qs(4);
        let mut sections = Vec::with_capacity(4);
        if lo_hz > 0.0 {
            sections.extend(qs.iter().map(|&q| Biquad::highpass(lo_hz, fs, q)));
        }
        sections.extend(qs.iter().map(|&q| Biquad::lowpass(hi_hz, fs, q)));
        Ok(SosFilter { sections })
    }

    pub fn notch(f0_hz: f64, fs: f64, quality: f64) -> Result<Self> {
        if !(f0_hz > 0.0 && f0_hz < fs / 2.0) {
            return Err(Error::arg(format!("notch frequency {f0_hz} outside (0, {})", fs / 2.0)));
        }
        if !(quality > 0.0 && quality.is_finite()) {
            return Err(Error::arg(format!("notch quality must be positive, got {quality}")));
        }
        Ok(SosFilter {
            sections: vec![Biquad::notch(f0_hz, fs, quality)],
        })
    }

    /// Combined forward-backward magnitude response at `f`.
    pub fn zero_phase_gain(&self, f: f64, fs: f64) -> f64 {
        self.sections.iter().map(|s| s.magnitude(f, fs).powi(2)).product()
    }

    /// Causal single pass with explicit initial states (transposed direct form II).
    fn run(&self, x: &mut [f64], x0: f64) {
        let mut scale = x0;
        for s in &self.sections {
            // steady state for a constant input `scale`
            let g = s.dc_gain();
            let y = g * scale;
            let mut z2 = s.b[2] * scale - s.a[1] * y;
            let mut z1 = s.b[1] * scale - s.a[0] * y + z2;
            for v in x.iter_mut() {
                let input = *v;
                let out = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[0] * out + z2;
                z2 = s.b[2] * input - s.a[1] * out;
                *v = out;
            }
            scale = y;
        }
    }

    /// Forward-backward application with odd-extension padding.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 || self.sections.is_empty() {
            return x.to_vec();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let first = ext[0];
        self.run(&mut ext, first);
        ext.reverse();
        let first = ext[0];
        self.run(&mut ext, first);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }

    fn apply(&self, rec: &Recording) -> Result<Recording> {
        let cols: Vec<Vec<f64>> = rec.columns().par_iter().map(|c| self.filtfilt(c)).collect();
        rec.with_columns(cols)
    }
}

/// Zero-phase 4th-order band-pass between `lo_hz` and `hi_hz`.
pub fn bandpass(rec: &Recording, lo_hz: f64, hi_hz: f64) -> Result<Recording> {
    SosFilter::butter_bandpass(lo_hz, hi_hz, rec.sample_rate_hz())?.apply(rec)
}

/// Zero-phase band-stop at `f0_hz` with the given quality factor.
pub fn notch(rec: &Recording, f0_hz: f64, quality: f64) -> Result<Recording> {
    SosFilter::notch(f0_hz, rec.sample_rate_hz(), quality)?.apply(rec)
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Ratio `up/down` in lowest terms when both rates are (close to) integers
/// with a small enough denominator.
fn rational_ratio(from: f64, to: f64) -> Option<(u64, u64)> {
    let (a, b) = (from.round(), to.round());
    if (a - from).abs() > 1e-9 || (b - to).abs() > 1e-9 || a < 1.0 || b < 1.0 {
        return None;
    }
    let (a, b) = (a as u64, b as u64);
    let g = gcd(a, b);
    let (down, up) = (a / g, b / g);
    (up <= 4096).then_some((up, down))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Kaiser-windowed sinc interpolator between two sample rates.
struct SincResampler {
    ratio: f64,
    /// Kernel cutoff in cycles per input sample.
    cutoff: f64,
    /// Half width in input samples.
    half_width: f64,
    i0_beta: f64,
}

impl SincResampler {
    fn new(from: f64, to: f64) -> Self {
        let ratio = to / from;
        let stretch = (from / to).max(1.0);
        SincResampler {
            ratio,
            cutoff: SINC_CUTOFF * 0.5 / stretch,
            half_width: SINC_HALF_WIDTH * stretch,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn kernel(&self, d: f64) -> f64 {
        let r = d / self.half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let w = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta;
        let arg = 2.0 * self.cutoff * d;
        let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
        w * sinc
    }

    /// Taps for an output instant sitting `frac` input samples after input
    /// index `base`; returns the first input index and the weights.
    fn taps(&self, base: i64, frac: f64) -> (i64, Vec<f64>) {
        let reach = self.half_width.ceil() as i64;
        let first = base - reach + 1;
        let w = (first..=base + reach)
            .map(|i| self.kernel((i - base) as f64 - frac))
            .collect();
        (first, w)
    }

    fn apply(&self, x: &[f64], out_len: usize, phases: Option<(u64, u64)>) -> Vec<f64> {
        let mut cache: Vec<Option<(i64, Vec<f64>)>> = match phases {
            Some((up, _)) => vec![None; up as usize],
            None => Vec::new(),
        };
        (0..out_len)
            .map(|k| match phases {
                Some((up, down)) => {
                    let num = k as u64 * down;
                    let phase = (num % up) as usize;
                    let (first, w) = cache[phase].get_or_insert_with(|| self.taps(0, phase as f64 / up as f64));
                    weighted_mean(x, (num / up) as i64 + *first, w)
                }
                None => {
                    let t = k as f64 / self.ratio;
                    let base = t.floor() as i64;
                    let (first, w) = self.taps(base, t - base as f64);
                    weighted_mean(x, first, &w)
                }
            })
            .collect()
    }
}

/// Kernel-weighted mean of `x` over the in-range taps starting at `first`.
fn weighted_mean(x: &[f64], first: i64, weights: &[f64]) -> f64 {
    let n = x.len() as i64;
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (j, w) in weights.iter().enumerate() {
        let i = first + j as i64;
        if i >= 0 && i < n {
            acc += w * x[i as usize];
            wsum += w;
        }
    }
    if wsum != 0.0 {
        acc / wsum
    } else {
        0.0
    }
}

/// Resample every channel to `target_rate_hz` by windowed-sinc interpolation
/// (Kaiser window, beta 8). Weights are renormalised per output sample so
/// constants pass through unchanged, including at the edges.
pub fn resample(rec: &Recording, target_rate_hz: f64) -> Result<Recording> {
    if !(target_rate_hz > 0.0 && target_rate_hz.is_finite()) {
        return Err(Error::arg(format!(
            "target rate must be positive, got {target_rate_hz}"
        )));
    }
    let from = rec.sample_rate_hz();
    if target_rate_hz == from {
        return Ok(rec.clone());
    }
    let ratio = target_rate_hz / from;
    let out_len = (rec.n_samples() as f64 * ratio).round() as usize;
    let rs = SincResampler::new(from, target_rate_hz);
    let phases = rational_ratio(from, target_rate_hz);
    let cols: Vec<Vec<f64>> = rec.columns().par_iter().map(|c| rs.apply(c, out_len, phases)).collect();
    let markers = rec
        .markers()
        .iter()
        .filter_map(|m| {
            let s = ((m.start_sample as f64 * ratio).round() as usize).min(out_len);
            let e = ((m.end_sample as f64 * ratio).round() as usize).min(out_len);
            (s < e).then(|| crate::signal_io::Marker {
                name: m.name.clone(),
                start_sample: s,
                end_sample: e,
            })
        })
        .collect();
    Recording::new(target_rate_hz, rec.channels().to_vec(), cols, markers)
}

/// Whole samples in `seconds` at `fs`, rounding toward zero (a hair of slack
/// absorbs binary representation error such as 0.1 * 30).
pub fn seconds_to_samples(seconds: f64, fs: f64) -> usize {
    let exact = seconds * fs;
    (exact + 1e-9 * exact.abs().max(1.0)).floor().max(0.0) as usize
}

/// Keep/reject decision for one artifact window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowVerdict {
    pub start_sample: usize,
    pub keep: bool,
    pub reason: Option<String>,
}

/// Per-window keep flags on a non-overlapping grid of `window_samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactMask {
    pub window_samples: usize,
    pub windows: Vec<WindowVerdict>,
}

impl ArtifactMask {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn kept(&self) -> usize {
        self.windows.iter().filter(|w| w.keep).count()
    }

    pub fn rejected_indices(&self) -> Vec<usize> {
        self.windows
            .iter()
            .enumerate()
            .filter(|(_, w)| !w.keep)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Reject windows whose peak-to-peak amplitude on any channel exceeds that
/// channel's mean + `z_threshold` standard deviations of windowed
/// peak-to-peak values.
pub fn reject_artifacts(rec: &Recording, window_s: f64, z_threshold: f64) -> Result<ArtifactMask> {
    if !(window_s > 0.0) || !(z_threshold > 0.0) {
        return Err(Error::arg("window length and z threshold must be positive"));
    }
    let w = seconds_to_samples(window_s, rec.sample_rate_hz());
    if w == 0 || w > rec.n_samples() {
        return Err(Error::arg(format!(
            "artifact window of {w} samples does not fit a recording of {} samples",
            rec.n_samples()
        )));
    }
    let n_win = rec.n_samples() / w;
    let mut windows: Vec<WindowVerdict> = (0..n_win)
        .map(|i| WindowVerdict {
            start_sample: i * w,
            keep: true,
            reason: None,
        })
        .collect();
    for (ch, col) in rec.channels().iter().zip(rec.columns()) {
        let ptp: Vec<f64> = col
            .chunks_exact(w)
            .map(|c| {
                let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
                hi - lo
            })
            .collect();
        let mean = ptp.iter().sum::<f64>() / n_win as f64;
        let var = ptp.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n_win as f64;
        let limit = mean + z_threshold * var.sqrt();
        for (verdict, &p) in windows.iter_mut().zip(&ptp) {
            if p > limit && var > 0.0 && verdict.keep {
                verdict.keep = false;
                verdict.reason = Some(format!("{}: peak-to-peak {:.4} exceeds {:.4}", ch.name, p, limit));
            }
        }
    }
    Ok(ArtifactMask {
        window_samples: w,
        windows,
    })
}

/// Fixed-length analysis window cut from a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub start_sample: usize,
    pub sample_rate_hz: f64,
    pub channels: Vec<ChannelMeta>,
    /// One column per channel.
    pub columns: Vec<Vec<f64>>,
}

impl Epoch {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start_s(&self) -> f64 {
        self.start_sample as f64 / self.sample_rate_hz
    }
}

/// Window starts for a `window`/`step` grid over `n` samples.
pub fn epoch_starts(n: usize, window: usize, step: usize) -> Result<Vec<usize>> {
    if window == 0 || step == 0 || step > window {
        return Err(Error::arg(format!(
            "need 0 < step <= window in samples, got window {window}, step {step}"
        )));
    }
    if window > n {
        return Err(Error::arg(format!(
            "window of {window} samples is longer than the {n}-sample recording"
        )));
    }
    Ok((0..=(n - window) / step).map(|i| i * step).collect())
}

/// Sliding windows of `window_s` every `step_s`; fractional sample counts
/// round toward zero.
pub fn epoch(rec: &Recording, window_s: f64, step_s: f64) -> Result<Vec<Epoch>> {
    if !(window_s > 0.0 && step_s > 0.0 && step_s <= window_s) {
        return Err(Error::arg(format!(
            "need 0 < step_s <= window_s, got window {window_s}, step {step_s}"
        )));
    }
    let fs = rec.sample_rate_hz();
    let w = seconds_to_samples(window_s, fs);
    let s = seconds_to_samples(step_s, fs);
    let starts = epoch_starts(rec.n_samples(), w, s)?;
    Ok(starts
        .into_iter()
        .map(|start| Epoch {
            start_sample: start,
            sample_rate_hz: fs,
            channels: rec.channels().to_vec(),
            columns: rec.columns().iter().map(|c| c[start..start + w].to_vec()).collect(),
        })
        .collect())
}

//! Welch auto- and cross-spectral densities, band power and time-resolved
//! band power.
//!
//! Spectra are one-sided densities in signal²/Hz: every bin except DC (and
//! Nyquist for even segment lengths) is doubled, and periodograms are
//! normalised by the window energy so that the integral over frequency
//! equals the mean square of the signal.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{epoch_starts, seconds_to_samples};

pub const MIN_SEGMENT_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WindowKind {
    #[default]
    Hann,
}

impl WindowKind {
    /// Periodic (DFT-even) window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_len: usize,
    pub overlap_fraction: f64,
    pub window: WindowKind,
    pub sample_rate_hz: f64,
}

impl WelchConfig {
    pub fn new(segment_len: usize, overlap_fraction: f64, sample_rate_hz: f64) -> Result<Self> {
        if segment_len < MIN_SEGMENT_LEN {
            return Err(Error::arg(format!(
                "segment length {segment_len} below the minimum of {MIN_SEGMENT_LEN}"
            )));
        }
        if !(0.0..1.0).contains(&overlap_fraction) {
            return Err(Error::arg(format!(
                "overlap fraction {overlap_fraction} outside [0, 1)"
            )));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::arg(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(WelchConfig {
            segment_len,
            overlap_fraction,
            window: WindowKind::Hann,
            sample_rate_hz,
        })
    }

    /// Segments of one eighth of the data, overlapping by half (15 segments
    /// when the length divides by 16).
    pub fn eighths(n_samples: usize, sample_rate_hz: f64) -> Result<Self> {
        Self::fraction(n_samples, 0.125, 0.5, sample_rate_hz)
    }

    /// Segments of `fraction` of the data with the given overlap.
    pub fn fraction(n_samples: usize, fraction: f64, overlap: f64, sample_rate_hz: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::arg(format!("segment fraction {fraction} outside (0, 1]")));
        }
        Self::new((n_samples as f64 * fraction).floor() as usize, overlap, sample_rate_hz)
    }

    pub fn step(&self) -> usize {
        let overlap = (self.overlap_fraction * self.segment_len as f64).floor() as usize;
        (self.segment_len - overlap).max(1)
    }

    pub fn resolution_hz(&self) -> f64 {
        self.sample_rate_hz / self.segment_len as f64
    }

    pub fn n_bins(&self) -> usize {
        self.segment_len / 2 + 1
    }

    pub fn freqs(&self) -> Vec<f64> {
        let df = self.resolution_hz();
        (0..self.n_bins()).map(|k| k as f64 * df).collect()
    }

    /// Segment starts for a signal of `n` samples.
    pub fn segment_starts(&self, n: usize) -> Result<Vec<usize>> {
        if n < self.segment_len {
            return Err(Error::arg(format!(
                "signal of {n} samples is shorter than one {}-sample segment",
                self.segment_len
            )));
        }
        epoch_starts(n, self.segment_len, self.step())
    }

    pub fn n_segments(&self, n: usize) -> usize {
        self.segment_starts(n).map_or(0, |s| s.len())
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub freqs_hz: Vec<f64>,
    pub values: Vec<f64>,
    pub n_segments: usize,
}

impl SpectralEstimate {
    pub fn resolution_hz(&self) -> f64 {
        self.freqs_hz.get(1).copied().unwrap_or(0.0)
    }

    /// Index of the largest value.
    pub fn peak_bin(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            )
            .0
    }

    /// Σ values · Δf over the whole grid.
    pub fn total_power(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.resolution_hz()
    }
}

/// One-sided cross-spectral density `conj(X)·Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSpectrum {
    pub freqs_hz: Vec<f64>,
    pub values: Vec<Complex64>,
    pub n_segments: usize,
}

/// Auto and cross spectra from one shared segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub pxx: SpectralEstimate,
    pub pyy: SpectralEstimate,
    pub pxy: CrossSpectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandSpec {
    pub fn new(name: &str, lo_hz: f64, hi_hz: f64) -> Result<Self> {
        if !(lo_hz >= 0.0 && lo_hz < hi_hz && hi_hz.is_finite()) {
            return Err(Error::arg(format!(
                "band {name} needs 0 <= lo < hi, got {lo_hz}..{hi_hz}"
            )));
        }
        Ok(BandSpec {
            name: name.to_string(),
            lo_hz,
            hi_hz,
        })
    }

    pub fn theta() -> Self {
        Self::new("theta", 4.0, 8.0).unwrap()
    }

    pub fn alpha() -> Self {
        Self::new("alpha", 8.0, 12.0).unwrap()
    }

    pub fn beta() -> Self {
        Self::new("beta", 15.0, 30.0).unwrap()
    }

    /// 30–45 Hz, stopping short of 50/60 Hz mains.
    pub fn gamma() -> Self {
        Self::new("gamma", 30.0, 45.0).unwrap()
    }

    pub fn width_hz(&self) -> f64 {
        self.hi_hz - self.lo_hz
    }

    /// `alpha`, `beta`, `gamma`, `theta`, or an explicit `lo:hi`.
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "alpha" => Ok(Self::alpha()),
            "beta" => Ok(Self::beta()),
            "gamma" => Ok(Self::gamma()),
            "theta" => Ok(Self::theta()),
            other => {
                let (lo, hi) = other
                    .split_once(':')
                    .ok_or_else(|| Error::arg(format!("band {text:?} is neither a name nor lo:hi")))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::arg(format!("bad band edge {s:?} in {text:?}")))
                };
                Self::new(other, parse(lo)?, parse(hi)?)
            }
        }
    }
}

/// Bands used for features by default; theta is left out because it is
/// dominated by machine vibration in the field recordings.
pub fn default_bands() -> Vec<BandSpec> {
    vec![BandSpec::alpha(), BandSpec::beta(), BandSpec::gamma()]
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

/// Windowed spectra of every segment, truncated to the one-sided bins.
fn segment_ffts(x: &[f64], cfg: &WelchConfig, starts: &[usize], window: &[f64]) -> Vec<Vec<Complex64>> {
    let fft = plan(cfg.segment_len);
    let n_bins = cfg.n_bins();
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    starts
        .iter()
        .map(|&s| {
            let mut buf: Vec<Complex64> = x[s..s + cfg.segment_len]
                .iter()
                .zip(window)
                .map(|(v, w)| Complex64::new(v * w, 0.0))
                .collect();
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf.truncate(n_bins);
            buf
        })
        .collect()
}

/// Density scale per bin: 1 / (fs · Σw² · K), doubled off DC and Nyquist.
fn bin_scales(cfg: &WelchConfig, window: &[f64], n_segments: usize) -> Vec<f64> {
    let energy: f64 = window.iter().map(|w| w * w).sum();
    let base = 1.0 / (cfg.sample_rate_hz * energy * n_segments as f64);
    let n_bins = cfg.n_bins();
    let even = cfg.segment_len.is_multiple_of(2);
    (0..n_bins)
        .map(|k| {
            if k == 0 || (even && k == n_bins - 1) {
                base
            } else {
                2.0 * base
            }
        })
        .collect()
}

/// Welch power spectral density of a single channel.
pub fn welch_psd(x: &[f64], cfg: &WelchConfig) -> Result<SpectralEstimate> {
    let starts = cfg.segment_starts(x.len())?;
    let window = cfg.window.coefficients(cfg.segment_len);
    let ffts = segment_ffts(x, cfg, &starts, &window);
    let scales = bin_scales(cfg, &window, starts.len());
    let mut values = vec![0.0; cfg.n_bins()];
    for seg in &ffts {
        for (acc, c) in values.iter_mut().zip(seg) {
            *acc += c.norm_sqr();
        }
    }
    for (v, s) in values.iter_mut().zip(&scales) {
        *v *= s;
    }
    Ok(SpectralEstimate {
        freqs_hz: cfg.freqs(),
        values,
        n_segments: starts.len(),
    })
}

/// Auto spectra of `x` and `y` and their cross spectrum, all from the same
/// segments.
pub fn spectral_pair(x: &[f64], y: &[f64], cfg: &WelchConfig) -> Result<SpectralPair> {
    if x.len() != y.len() {
        return Err(Error::arg(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let starts = cfg.segment_starts(x.len())?;
    let window = cfg.window.coefficients(cfg.segment_len);
    let fx = segment_ffts(x, cfg, &starts, &window);
    let fy = segment_ffts(y, cfg, &starts, &window);
    let scales = bin_scales(cfg, &window, starts.len());
    let n_bins = cfg.n_bins();
    let mut pxx = vec![0.0; n_bins];
    let mut pyy = vec![0.0; n_bins];
    let mut pxy = vec![Complex64::new(0.0, 0.0); n_bins];
    for (sx, sy) in fx.iter().zip(&fy) {
        for k in 0..n_bins {
            pxx[k] += sx[k].norm_sqr();
            pyy[k] += sy[k].norm_sqr();
            pxy[k] += sx[k].conj() * sy[k];
        }
    }
    for k in 0..n_bins {
        pxx[k] *= scales[k];
        pyy[k] *= scales[k];
        pxy[k] *= scales[k];
    }
    let freqs = cfg.freqs();
    let n_segments = starts.len();
    Ok(SpectralPair {
        pxx: SpectralEstimate {
            freqs_hz: freqs.clone(),
            values: pxx,
            n_segments,
        },
        pyy: SpectralEstimate {
            freqs_hz: freqs.clone(),
            values: pyy,
            n_segments,
        },
        pxy: CrossSpectrum {
            freqs_hz: freqs,
            values: pxy,
            n_segments,
        },
    })
}

/// Welch cross-power spectral density `conj(X)·Y`.
pub fn cross_psd(x: &[f64], y: &[f64], cfg: &WelchConfig) -> Result<CrossSpectrum> {
    Ok(spectral_pair(x, y, cfg)?.pxy)
}

/// Linear interpolation of `values` on `freqs` at `f`.
fn interp(freqs: &[f64], values: &[f64], f: f64) -> f64 {
    let df = freqs[1] - freqs[0];
    let pos = ((f - freqs[0]) / df).clamp(0.0, (freqs.len() - 1) as f64);
    let i = (pos.floor() as usize).min(freqs.len() - 2);
    let t = pos - i as f64;
    values[i] * (1.0 - t) + values[i + 1] * t
}

/// Trapezoidal integral of the density over `[band.lo_hz, band.hi_hz]`,
/// with linearly interpolated end points.
pub fn band_power(spec: &SpectralEstimate, band: &BandSpec) -> Result<f64> {
    integrate_band(&spec.freqs_hz, &spec.values, band)
}

pub(crate) fn integrate_band(freqs: &[f64], values: &[f64], band: &BandSpec) -> Result<f64> {
    if freqs.len() < 2 {
        return Err(Error::arg("spectrum needs at least two bins"));
    }
    let top = *freqs.last().unwrap();
    let slack = 1e-9 * top;
    if band.lo_hz < freqs[0] - slack || band.hi_hz > top + slack {
        return Err(Error::arg(format!(
            "band {} ({}..{} Hz) outside the spectrum grid 0..{top} Hz",
            band.name, band.lo_hz, band.hi_hz
        )));
    }
    let (lo, hi) = (band.lo_hz.max(freqs[0]), band.hi_hz.min(top));
    let mut pts: Vec<(f64, f64)> = vec![(lo, interp(freqs, values, lo))];
    pts.extend(
        freqs
            .iter()
            .zip(values)
            .filter(|(f, _)| **f > lo && **f < hi)
            .map(|(f, v)| (*f, *v)),
    );
    pts.push((hi, interp(freqs, values, hi)));
    Ok(pts
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum())
}

/// Band power of the Hann periodogram of each `window_s` window, windows
/// every `step_s`. Value `i` belongs to the window starting at sample
/// `i · step`.
pub fn sliding_band_power(
    signal: &[f64],
    sample_rate_hz: f64,
    band: &BandSpec,
    window_s: f64,
    step_s: f64,
) -> Result<Vec<f64>> {
    if !(step_s > 0.0 && window_s > 0.0) {
        return Err(Error::arg("window and step must be positive"));
    }
    if window_s * band.width_hz() < 2.0 - 1e-9 {
        return Err(Error::arg(format!(
            "a {window_s} s window cannot resolve the {} Hz wide {} band (needs >= {} s)",
            band.width_hz(),
            band.name,
            2.0 / band.width_hz()
        )));
    }
    let w = seconds_to_samples(window_s, sample_rate_hz);
    let s = seconds_to_samples(step_s, sample_rate_hz);
    let cfg = WelchConfig::new(w, 0.0, sample_rate_hz)?;
    let starts = epoch_starts(signal.len(), w, s)?;
    starts
        .iter()
        .map(|&st| band_power(&welch_psd(&signal[st..st + w], &cfg)?, band))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing_is_fs_over_segment() {
        let cfg = WelchConfig::new(64, 0.5, 256.0).unwrap();
        assert_eq!(cfg.resolution_hz(), 4.0);
        let f = cfg.freqs();
        assert_eq!(f.len(), 33);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[32], 128.0);
    }

    #[test]
    fn eighths_gives_fifteen_segments() {
        let cfg = WelchConfig::eighths(1600, 256.0).unwrap();
        assert_eq!(cfg.segment_len, 200);
        assert_eq!(cfg.step(), 100);
        assert_eq!(cfg.n_segments(1600), 15);
    }

    #[test]
    fn config_validation() {
        assert!(WelchConfig::new(4, 0.5, 256.0).is_err());
        assert!(WelchConfig::new(64, 1.0, 256.0).is_err());
        assert!(WelchConfig::new(64, 0.5, 0.0).is_err());
        let cfg = WelchConfig::new(64, 0.5, 256.0).unwrap();
        assert!(welch_psd(&[0.0; 10], &cfg).is_err());
        assert!(cross_psd(&[0.0; 100], &[0.0; 99], &cfg).is_err());
    }

    #[test]
    fn zero_signal_zero_psd() {
        let cfg = WelchConfig::new(64, 0.5, 256.0).unwrap();
        let p = welch_psd(&[0.0; 512], &cfg).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        assert_eq!(band_power(&p, &BandSpec::alpha()).unwrap(), 0.0);
    }

    #[test]
    fn band_parsing() {
        assert_eq!(BandSpec::parse("beta").unwrap(), BandSpec::beta());
        let b = BandSpec::parse("15:30").unwrap();
        assert_eq!((b.lo_hz, b.hi_hz), (15.0, 30.0));
        assert!(BandSpec::parse("30:15").is_err());
        assert!(BandSpec::parse("delta").is_err());
    }

    #[test]
    fn band_outside_grid_is_rejected() {
        let cfg = WelchConfig::new(64, 0.5, 64.0).unwrap();
        let p = welch_psd(&[1.0; 256], &cfg).unwrap();
        assert!(band_power(&p, &BandSpec::gamma()).is_err());
    }

    #[test]
    fn unresolvable_band() {
        let x = vec![0.0; 1024];
        assert!(sliding_band_power(&x, 256.0, &BandSpec::alpha(), 0.25, 0.02).is_err());
        let ok = sliding_band_power(&x, 256.0, &BandSpec::beta(), 0.25, 0.02).unwrap();
        assert_eq!(ok.len(), (1024 - 64) / 5 + 1);
        assert!(ok.iter().all(|&v| v == 0.0));
    }
}

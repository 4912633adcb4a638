//! Corticomuscular coherence: magnitude-squared coherence between an EEG
//! and an EMG channel, its significance threshold, and the band-wise
//! significant area used as the coupling feature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{spectral_pair, BandSpec, WelchConfig};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceSpectrum {
    pub freqs_hz: Vec<f64>,
    /// Values in [0, 1].
    pub coherence: Vec<f64>,
    /// Welch segments used; doubles as degrees of freedom.
    pub n_segments: usize,
    /// Bins where either auto spectrum was zero; their coherence is 0.
    pub degenerate_bins: Vec<usize>,
    pub eeg_channel: String,
    pub emg_channel: String,
}

impl CoherenceSpectrum {
    pub fn with_channels(mut self, eeg: &str, emg: &str) -> Self {
        self.eeg_channel = eeg.to_string();
        self.emg_channel = emg.to_string();
        self
    }

    pub fn resolution_hz(&self) -> f64 {
        self.freqs_hz[1] - self.freqs_hz[0]
    }

    /// Indices of bins whose centre lies inside the band (inclusive).
    pub fn band_bins(&self, band: &BandSpec) -> Vec<usize> {
        let eps = 1e-9 * self.resolution_hz();
        self.freqs_hz
            .iter()
            .enumerate()
            .filter(|(_, &f)| f >= band.lo_hz - eps && f <= band.hi_hz + eps)
            .map(|(i, _)| i)
            .collect()
    }

    /// Mean coherence over the bins inside `band`.
    pub fn band_mean(&self, band: &BandSpec) -> Result<f64> {
        let bins = self.band_bins(band);
        if bins.is_empty() {
            return Err(Error::arg(format!("band {} contains no frequency bins", band.name)));
        }
        Ok(bins.iter().map(|&i| self.coherence[i]).sum::<f64>() / bins.len() as f64)
    }
}

/// Magnitude-squared coherence `|Pxy|² / (Pxx·Pyy)` from Welch estimates
/// sharing one segmentation.
pub fn coherence(x: &[f64], y: &[f64], cfg: &WelchConfig) -> Result<CoherenceSpectrum> {
    if x.len() != y.len() {
        return Err(Error::arg(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let n_seg = cfg.n_segments(x.len());
    if n_seg < 2 {
        return Err(Error::arg(format!(
            "coherence needs at least 2 segments, the signal holds {n_seg}"
        )));
    }
    let pair = spectral_pair(x, y, cfg)?;
    let mut degenerate = Vec::new();
    let coherence = pair
        .pxx
        .values
        .iter()
        .zip(&pair.pyy.values)
        .zip(&pair.pxy.values)
        .enumerate()
        .map(|(k, ((&pxx, &pyy), pxy))| {
            let denom = pxx * pyy;
            if denom <= 0.0 {
                degenerate.push(k);
                0.0
            } else {
                (pxy.norm_sqr() / denom).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(CoherenceSpectrum {
        freqs_hz: pair.pxx.freqs_hz,
        coherence,
        n_segments: n_seg,
        degenerate_bins: degenerate,
        eeg_channel: String::new(),
        emg_channel: String::new(),
    })
}

/// Which closed form turns (alpha, df) into a coherence threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdForm {
    /// `sqrt(1 - alpha^(1/(df-1)))`, the form used in the study.
    #[default]
    Printed,
    /// `1 - alpha^(1/(df-1))`, the textbook bound for squared coherence.
    Conventional,
}

impl std::str::FromStr for ThresholdForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(ThresholdForm::Printed),
            "conventional" => Ok(ThresholdForm::Conventional),
            _ => Err(Error::arg(format!("unknown threshold form {s:?}"))),
        }
    }
}

/// Significance threshold `sqrt(1 - alpha^(1/(df-1)))`.
pub fn coherence_threshold(alpha: f64, df: usize) -> Result<f64> {
    coherence_threshold_with(alpha, df, ThresholdForm::Printed)
}

pub fn coherence_threshold_with(alpha: f64, df: usize, form: ThresholdForm) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::arg(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if df < 2 {
        return Err(Error::arg(format!("degrees of freedom must be >= 2, got {df}")));
    }
    let base = 1.0 - alpha.powf(1.0 / (df as f64 - 1.0));
    Ok(match form {
        ThresholdForm::Printed => base.sqrt(),
        ThresholdForm::Conventional => base,
    })
}

/// Band-wise coupling feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcFeature {
    pub band: BandSpec,
    pub threshold: f64,
    /// Σ C(f)·Δf over supra-threshold bins, coherence·Hz.
    pub significant_area: f64,
    pub n_significant_bins: usize,
}

/// Area of supra-threshold coherence inside `band`, threshold from the
/// spectrum's own segment count.
pub fn significant_area(coh: &CoherenceSpectrum, band: &BandSpec, alpha: f64) -> Result<CmcFeature> {
    significant_area_with(coh, band, alpha, ThresholdForm::Printed)
}

/// Each bin stands for the interval `f ± Δf/2`; its weight is the part of
/// that interval inside the band, so a band of width B saturated at
/// coherence 1 integrates to exactly B.
pub fn significant_area_with(
    coh: &CoherenceSpectrum,
    band: &BandSpec,
    alpha: f64,
    form: ThresholdForm,
) -> Result<CmcFeature> {
    let top = *coh.freqs_hz.last().unwrap_or(&0.0);
    if band.hi_hz > top + 1e-9 * top.max(1.0) {
        return Err(Error::arg(format!(
            "band {} reaches {} Hz beyond the {top} Hz grid",
            band.name, band.hi_hz
        )));
    }
    let df = coh.resolution_hz();
    let bins: Vec<usize> = (0..coh.freqs_hz.len())
        .filter(|&k| coh.freqs_hz[k] + df / 2.0 > band.lo_hz && coh.freqs_hz[k] - df / 2.0 < band.hi_hz)
        .collect();
    if coh.band_bins(band).is_empty() {
        return Err(Error::arg(format!(
            "band {} ({}..{} Hz) holds no bins at {} Hz resolution",
            band.name,
            band.lo_hz,
            band.hi_hz,
            coh.resolution_hz()
        )));
    }
    let threshold = coherence_threshold_with(alpha, coh.n_segments, form)?;
    let mut area = 0.0;
    let mut count = 0;
    for &k in &bins {
        let f = coh.freqs_hz[k];
        let lo = (f - df / 2.0).max(band.lo_hz);
        let hi = (f + df / 2.0).min(band.hi_hz);
        let weight = (hi - lo).max(0.0);
        let c = coh.coherence[k];
        if c > threshold && weight > 0.0 {
            area += c * weight;
            count += 1;
        }
    }
    Ok(CmcFeature {
        band: band.clone(),
        threshold,
        significant_area: area,
        n_significant_bins: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(value: f64, n_bins: usize, df: f64, n_segments: usize) -> CoherenceSpectrum {
        CoherenceSpectrum {
            freqs_hz: (0..n_bins).map(|k| k as f64 * df).collect(),
            coherence: vec![value; n_bins],
            n_segments,
            degenerate_bins: vec![],
            eeg_channel: "C3".into(),
            emg_channel: "EMG1".into(),
        }
    }

    #[test]
    fn threshold_values() {
        // sqrt(1 - 0.05) and sqrt(1 - 0.05^(1/15)), evaluated by hand
        assert!((coherence_threshold(0.05, 2).unwrap() - 0.974_679_434_5).abs() < 1e-9);
        assert!((coherence_threshold(0.05, 16).unwrap() - 0.42548).abs() < 1e-4);
        assert!(coherence_threshold(0.05, 1000).unwrap() < 0.06);
        let conv = coherence_threshold_with(0.05, 16, ThresholdForm::Conventional).unwrap();
        assert!((conv - 0.42548f64.powi(2)).abs() < 1e-4);
        assert!(coherence_threshold(0.05, 1).is_err());
        assert!(coherence_threshold(0.0, 10).is_err());
        assert!(coherence_threshold(1.0, 10).is_err());
    }

    #[test]
    fn zero_coherence_zero_area() {
        let f = significant_area(&flat(0.0, 65, 1.0, 15), &BandSpec::beta(), 0.05).unwrap();
        assert_eq!(f.significant_area, 0.0);
        assert_eq!(f.n_significant_bins, 0);
    }

    #[test]
    fn saturated_band_integrates_to_width() {
        let f = significant_area(&flat(1.0, 65, 1.0, 15), &BandSpec::beta(), 0.05).unwrap();
        assert!((f.significant_area - 15.0).abs() < 1e-12);
        assert_eq!(f.n_significant_bins, 16);
        // off-grid edges still integrate to the width
        let g = significant_area(&flat(1.0, 257, 0.3, 15), &BandSpec::beta(), 0.05).unwrap();
        assert!((g.significant_area - 15.0).abs() < 1e-9);
    }

    #[test]
    fn band_without_bins_is_rejected() {
        let coarse = flat(1.0, 5, 32.0, 15);
        assert!(significant_area(&coarse, &BandSpec::beta(), 0.05).is_err());
        let short = flat(1.0, 9, 1.0, 15);
        assert!(significant_area(&short, &BandSpec::beta(), 0.05).is_err());
    }

    #[test]
    fn single_segment_is_rejected() {
        let cfg = WelchConfig::new(64, 0.5, 256.0).unwrap();
        let x = vec![1.0; 64];
        assert!(coherence(&x, &x, &cfg).is_err());
    }

    #[test]
    fn zero_power_bins_flagged() {
        let cfg = WelchConfig::new(64, 0.5, 256.0).unwrap();
        let x = vec![0.0; 512];
        let c = coherence(&x, &x, &cfg).unwrap();
        assert_eq!(c.degenerate_bins.len(), 33);
        assert!(c.coherence.iter().all(|&v| v == 0.0));
    }
}

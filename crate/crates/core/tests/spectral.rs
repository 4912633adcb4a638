use std::f64::consts::PI;

use cmc_core::spectral::{band_power, cross_psd, sliding_band_power, welch_psd, BandSpec, WelchConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn white(n: usize, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
}

fn tone(n: usize, f: f64, fs: f64) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
}

#[test]
fn unit_tone_peak_and_power() {
    let fs = 256.0;
    let x = tone(60 * 256, 10.0, fs);
    let psd = welch_psd(&x, &WelchConfig::eighths(x.len(), fs).unwrap()).unwrap();
    assert!((psd.freqs_hz[psd.peak_bin()] - 10.0).abs() <= psd.resolution_hz());
    let p = band_power(&psd, &BandSpec::alpha()).unwrap();
    assert!((p - 0.5).abs() <= 0.025);
}

#[test]
fn grid_spacing_is_rate_over_length() {
    for (len, fs) in [(64, 256.0), (100, 1000.0), (512, 250.0)] {
        let cfg = WelchConfig::new(len, 0.5, fs).unwrap();
        assert_eq!(cfg.resolution_hz(), fs / len as f64);
        assert_eq!(cfg.freqs()[3], 3.0 * fs / len as f64);
    }
    assert_eq!(WelchConfig::new(64, 0.5, 256.0).unwrap().resolution_hz(), 4.0);
}

#[test]
fn band_power_is_additive() {
    let x = white(30 * 256, 2);
    let psd = welch_psd(&x, &WelchConfig::eighths(x.len(), 256.0).unwrap()).unwrap();
    let bp = |lo, hi| band_power(&psd, &BandSpec::new("b", lo, hi).unwrap()).unwrap();
    assert!((bp(8.0, 12.0) + bp(12.0, 30.0) - bp(8.0, 30.0)).abs() <= 1e-9);
    assert!((bp(8.3, 12.7) + bp(12.7, 29.1) - bp(8.3, 29.1)).abs() <= 1e-9);
}

#[test]
fn independent_noise_has_small_cross_spectrum() {
    let n = 120 * 256;
    let (x, y) = (white(n, 5), white(n, 6));
    let cfg = WelchConfig::eighths(n, 256.0).unwrap();
    let pxy = cross_psd(&x, &y, &cfg).unwrap();
    let pxx = welch_psd(&x, &cfg).unwrap();
    let pyy = welch_psd(&y, &cfg).unwrap();
    let ratio: f64 = (1..pxy.values.len() - 1)
        .map(|k| pxy.values[k].norm() / (pxx.values[k] * pyy.values[k]).sqrt())
        .sum::<f64>()
        / (pxy.values.len() - 2) as f64;
    assert!(ratio <= 0.1 * 15f64.sqrt(), "{ratio}");
    assert!(ratio <= 0.35);
}

#[test]
fn delay_gives_linear_phase() {
    let fs = 256.0;
    let d = 3;
    let base = white(60 * 256 + d, 8);
    let x = base[d..].to_vec();
    let y = base[..base.len() - d].to_vec();
    let cfg = WelchConfig::new(256, 0.5, fs).unwrap();
    let pxy = cross_psd(&x, &y, &cfg).unwrap();
    for k in [5usize, 10, 20, 30] {
        let f = pxy.freqs_hz[k];
        let expected = -2.0 * PI * f * d as f64 / fs;
        let phase = pxy.values[k].arg();
        assert!(
            (phase - expected).abs() <= 0.02 * expected.abs(),
            "bin {k}: {phase} vs {expected}"
        );
    }
}

#[test]
fn cross_spectrum_is_hermitian_in_its_arguments() {
    let n = 8192;
    let (x, y) = (white(n, 9), white(n, 10));
    let cfg = WelchConfig::eighths(n, 256.0).unwrap();
    let a = cross_psd(&x, &y, &cfg).unwrap();
    let b = cross_psd(&y, &x, &cfg).unwrap();
    for (p, q) in a.values.iter().zip(&b.values) {
        assert!((p - q.conj()).norm() <= 1e-12 * p.norm().max(1.0));
    }
    let auto = cross_psd(&x, &x, &cfg).unwrap();
    let psd = welch_psd(&x, &cfg).unwrap();
    for (c, p) in auto.values.iter().zip(&psd.values) {
        assert!((c.re - p).abs() <= 1e-12 * p.max(1.0) && c.im.abs() <= 1e-12 * p.max(1.0));
    }
}

#[test]
fn delayed_noise_has_the_same_psd() {
    let base = white(60 * 256 + 40, 12);
    let cfg = WelchConfig::eighths(60 * 256, 256.0).unwrap();
    let a = band_power(
        &welch_psd(&base[..60 * 256], &cfg).unwrap(),
        &BandSpec::new("b", 2.0, 100.0).unwrap(),
    )
    .unwrap();
    let b = band_power(
        &welch_psd(&base[40..], &cfg).unwrap(),
        &BandSpec::new("b", 2.0, 100.0).unwrap(),
    )
    .unwrap();
    assert!((a - b).abs() <= 0.02 * a);
}

#[test]
fn sliding_power_of_stationary_and_gated_tones() {
    let fs = 256.0;
    let alpha = BandSpec::alpha();
    let steady = sliding_band_power(&tone(10 * 256, 10.0, fs), fs, &alpha, 0.5, 0.02).unwrap();
    let mean = steady.iter().sum::<f64>() / steady.len() as f64;
    let sd = (steady.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / steady.len() as f64).sqrt();
    assert!(sd / mean <= 0.10);

    let gated: Vec<f64> = tone(6 * 256, 10.0, fs)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if i >= 2 * 256 { v } else { 0.0 })
        .collect();
    let window_s = 0.5;
    let series = sliding_band_power(&gated, fs, &alpha, window_s, 0.02).unwrap();
    let plateau = series[series.len() - 1];
    let cross = series.iter().position(|v| *v >= 0.5 * plateau).unwrap();
    // each value is reported at the centre of its window
    let t = cross as f64 * 5.0 / fs + window_s / 2.0;
    assert!((t - 2.0).abs() <= 0.25, "crossed at {t}");
}

#[test]
fn invalid_configurations() {
    assert!(WelchConfig::new(1, 0.5, 256.0).is_err());
    assert!(WelchConfig::new(64, 1.0, 256.0).is_err());
    assert!(welch_psd(&[1.0; 10], &WelchConfig::new(64, 0.5, 256.0).unwrap()).is_err());
    assert!(cross_psd(&[1.0; 100], &[1.0; 99], &WelchConfig::new(64, 0.5, 256.0).unwrap()).is_err());
    assert!(BandSpec::new("b", 12.0, 8.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn psd_scales_with_square_of_amplitude(c in -50.0f64..50.0, seed in 0u64..100) {
        let x = white(2048, seed);
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let cfg = WelchConfig::eighths(x.len(), 256.0).unwrap();
        let a = welch_psd(&x, &cfg).unwrap();
        let b = welch_psd(&cx, &cfg).unwrap();
        for (p, q) in a.values.iter().zip(&b.values) {
            prop_assert!((c * c * p - q).abs() <= 1e-9 * q.abs().max(1.0));
        }
    }

    #[test]
    fn white_noise_parseval(seed in 0u64..100) {
        let x = white(60 * 256, seed);
        let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let total = welch_psd(&x, &WelchConfig::eighths(x.len(), 256.0).unwrap()).unwrap().total_power();
        prop_assert!((total - ms).abs() <= 0.05 * ms);
    }
}

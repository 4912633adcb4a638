use std::f64::consts::PI;

use cmc_core::preprocess::{bandpass, epoch, epoch_starts, notch, reject_artifacts, resample, SosFilter};
use cmc_core::signal_io::{ChannelMeta, Recording};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn single(fs: f64, x: Vec<f64>) -> Recording {
    Recording::new(fs, vec![ChannelMeta::eeg("Cz").unwrap()], vec![x], vec![]).unwrap()
}

fn tone(n: usize, f: f64, fs: f64) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
}

/// Amplitude of the `f` Hz component over the middle half, by least squares.
fn amplitude(x: &[f64], f: f64, fs: f64) -> f64 {
    let (lo, hi) = (x.len() / 4, 3 * x.len() / 4);
    let (mut ss, mut cc, mut sc, mut xs, mut xc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &v) in x.iter().enumerate().take(hi).skip(lo) {
        let (s, c) = (2.0 * PI * f * i as f64 / fs).sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        xs += v * s;
        xc += v * c;
    }
    let det = ss * cc - sc * sc;
    ((xs * cc - xc * sc) / det).hypot((xc * ss - xs * sc) / det)
}

#[test]
fn notch_removes_mains_and_spares_neighbours() {
    let fs = 256.0;
    let n = 10 * 256;
    let at60 = notch(&single(fs, tone(n, 60.0, fs)), 60.0, 30.0).unwrap();
    assert!(amplitude(at60.column(0), 60.0, fs) <= 0.0316);
    let at40 = notch(&single(fs, tone(n, 40.0, fs)), 60.0, 30.0).unwrap();
    assert!(amplitude(at40.column(0), 40.0, fs) >= 0.7);
}

#[test]
fn bandpass_keeps_passband_and_removes_drift() {
    let fs = 256.0;
    let out = bandpass(&single(fs, tone(20 * 256, 50.0, fs)), 0.01, 100.0).unwrap();
    let gain = amplitude(out.column(0), 50.0, fs);
    assert!(-20.0 * gain.log10() <= 1.0);

    let f = SosFilter::butter_bandpass(0.01, 100.0, fs).unwrap();
    assert!(20.0 * f.zero_phase_gain(0.001, fs).log10() <= -20.0);
}

#[test]
fn filtfilt_has_no_lag() {
    let fs = 256.0;
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..4096).map(|_| StandardNormal.sample(&mut r)).collect();
    let y = SosFilter::butter_bandpass(1.0, 40.0, fs).unwrap().filtfilt(&x);
    let xcorr = |lag: i64| -> f64 { (50..4046).map(|i| x[i as usize] * y[(i + lag) as usize]).sum() };
    let best = (-30..=30).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
    assert_eq!(best, 0);
}

#[test]
fn resample_identity_and_constants() {
    let x = tone(512, 7.0, 256.0);
    let same = resample(&single(256.0, x.clone()), 256.0).unwrap();
    for (a, b) in x.iter().zip(same.column(0)) {
        assert!((a - b).abs() <= 1e-9);
    }
    for (from, to) in [(256.0, 100.0), (250.0, 1000.0), (1000.0, 256.0)] {
        let out = resample(&single(from, vec![5.0; 700]), to).unwrap();
        assert!(out.column(0).iter().all(|v| (v - 5.0).abs() <= 1e-6), "{from} -> {to}");
    }
}

#[test]
fn resample_round_trip_preserves_band_limited_signal() {
    let fs = 256.0;
    let n = 8 * 256;
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            (2.0 * PI * 6.0 * t).sin() + 0.5 * (2.0 * PI * 17.0 * t + 0.3).cos()
        })
        .collect();
    let up = resample(&single(fs, x.clone()), 1000.0).unwrap();
    let back = resample(&up, fs).unwrap();
    let y = back.column(0);
    assert_eq!(y.len(), n);
    let (lo, hi) = (n / 8, 7 * n / 8);
    let err: f64 = (lo..hi).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>();
    let pow: f64 = (lo..hi).map(|i| x[i] * x[i]).sum::<f64>();
    assert!((err / pow).sqrt() <= 0.02);
}

#[test]
fn single_spike_rejects_one_window() {
    let fs = 256.0;
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let mut x: Vec<f64> = (0..30 * 256).map(|_| StandardNormal.sample(&mut r)).collect();
    x[17 * 256 + 100] += 10.0 * 6.0;
    let mask = reject_artifacts(&single(fs, x), 1.0, 5.0).unwrap();
    assert_eq!(mask.len(), 30);
    assert_eq!(mask.rejected_indices(), vec![17]);
}

#[test]
fn paper_window_epoch_count() {
    let rec = single(256.0, vec![0.0; 256]);
    let e = epoch(&rec, 0.25, 0.02).unwrap();
    assert_eq!(e.len(), 39);
    assert_eq!(e[1].start_sample, 5);
    assert!(e.iter().all(|w| w.len() == 64));
    assert_eq!(epoch(&rec, 1.0, 0.5).unwrap().len(), 1);
    assert!(epoch(&rec, 2.0, 0.5).is_err());
}

proptest! {
    #[test]
    fn epoch_starts_increase_within_bounds(n in 1usize..2000, w in 1usize..400, s in 1usize..400) {
        prop_assume!(s <= w && w <= n);
        let starts = epoch_starts(n, w, s).unwrap();
        prop_assert!(!starts.is_empty());
        prop_assert!(starts.windows(2).all(|p| p[0] < p[1]));
        prop_assert!(starts.iter().all(|&st| st + w <= n));
        prop_assert!(starts.last().unwrap() + w + s > n);
    }

    #[test]
    fn artifact_mask_ignores_offsets(offset in -1e3f64..1e3, seed in 0u64..50) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..10 * 128).map(|_| StandardNormal.sample(&mut r)).collect();
        let shifted: Vec<f64> = x.iter().map(|v| v + offset).collect();
        let a = reject_artifacts(&single(128.0, x), 1.0, 2.0).unwrap();
        let b = reject_artifacts(&single(128.0, shifted), 1.0, 2.0).unwrap();
        prop_assert_eq!(a.rejected_indices(), b.rejected_indices());
    }
}

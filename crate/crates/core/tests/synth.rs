use cmc_core::cmc::coherence;
use cmc_core::spectral::{band_power, welch_psd, BandSpec, WelchConfig};
use cmc_core::state_engine::{FeatureKind, State};
use cmc_core::synth::{
    expected_coherence, gen_baseline_features, gen_shared_source, gen_state_features, gen_state_stream,
    gen_subject_recording, SharedSourceSpec, SUBJECT_EMG,
};

fn spec(duration_s: f64, snr: f64, seed: u64) -> SharedSourceSpec {
    SharedSourceSpec {
        duration_s,
        sample_rate_hz: 256.0,
        band: BandSpec::new("shared", 15.0, 30.0).unwrap(),
        snr1: snr,
        snr2: snr,
        seed,
    }
}

#[test]
fn expected_coherence_formula() {
    assert_eq!(expected_coherence(1.0, 1.0), 0.25);
    assert!((expected_coherence(0.5, 0.5) - 1.0 / 9.0).abs() < 1e-15);
    assert!((expected_coherence(2.0, 2.0) - 4.0 / 9.0).abs() < 1e-15);
    assert_eq!(expected_coherence(f64::INFINITY, f64::INFINITY), 1.0);
    assert_eq!(expected_coherence(0.0, 3.0), 0.0);
}

#[test]
fn generators_are_deterministic() {
    assert_eq!(
        gen_shared_source(&spec(20.0, 1.0, 4)).unwrap(),
        gen_shared_source(&spec(20.0, 1.0, 4)).unwrap()
    );
    assert_ne!(
        gen_shared_source(&spec(20.0, 1.0, 4)).unwrap().x,
        gen_shared_source(&spec(20.0, 1.0, 5)).unwrap().x
    );
    assert_eq!(
        gen_state_features(State::Intuitive, 10, 2.0, 3).unwrap(),
        gen_state_features(State::Intuitive, 10, 2.0, 3).unwrap()
    );
    assert_eq!(gen_baseline_features(10, 3), gen_baseline_features(10, 3));
    let phases = [(State::Intuitive, 1.0), (State::Intellectual, 1.0)];
    assert_eq!(
        gen_state_stream(&phases, 0.1, 4.0, 8).unwrap(),
        gen_state_stream(&phases, 0.1, 4.0, 8).unwrap()
    );
    assert_eq!(
        gen_subject_recording(&phases, 128.0, 8).unwrap(),
        gen_subject_recording(&phases, 128.0, 8).unwrap()
    );
}

#[test]
fn realized_snr_matches_request() {
    let band = BandSpec::new("shared", 15.0, 30.0).unwrap();
    for snr in [0.5, 1.0, 2.0] {
        let pair = gen_shared_source(&spec(120.0, snr, 21)).unwrap();
        let cfg = WelchConfig::eighths(pair.x.len(), 256.0).unwrap();
        let signal: Vec<f64> = pair.shared.iter().map(|s| snr.sqrt() * s).collect();
        let ps = band_power(&welch_psd(&signal, &cfg).unwrap(), &band).unwrap();
        let pn = band_power(&welch_psd(&pair.noise_x, &cfg).unwrap(), &band).unwrap();
        assert!((ps / pn - snr).abs() <= 0.05 * snr, "snr {snr}: {}", ps / pn);
    }
}

#[test]
fn coherence_error_shrinks_with_duration() {
    // interior bins only: at the band edges the window mainlobe straddles the cutoff
    let band = BandSpec::new("interior", 16.0, 29.0).unwrap();
    let cfg = WelchConfig::new(512, 0.5, 256.0).unwrap();
    let errors: Vec<f64> = [30.0, 120.0, 480.0]
        .iter()
        .map(|&d| {
            (0..6u64)
                .map(|seed| {
                    let pair = gen_shared_source(&spec(d, 1.0, seed)).unwrap();
                    let c = coherence(&pair.x, &pair.y, &cfg).unwrap().band_mean(&band).unwrap();
                    (c - pair.expected_coherence).abs()
                })
                .sum::<f64>()
                / 6.0
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn zero_separation_classes_share_a_distribution() {
    let a = gen_state_features(State::Intuitive, 200, 0.0, 1).unwrap();
    let b = gen_state_features(State::Intellectual, 200, 0.0, 1).unwrap();
    for j in 0..a[0].len() {
        let mean =
            |v: &[cmc_core::state_engine::FeatureVector]| v.iter().map(|f| f.values[j]).sum::<f64>() / v.len() as f64;
        assert!((mean(&a) - mean(&b)).abs() <= 0.35, "feature {j}");
    }
}

#[test]
fn separated_classes_follow_signatures() {
    let a = gen_state_features(State::Intuitive, 100, 4.0, 2).unwrap();
    let b = gen_state_features(State::Intellectual, 100, 4.0, 2).unwrap();
    let mean = |v: &[cmc_core::state_engine::FeatureVector], ch: usize, k: FeatureKind| {
        v.iter().map(|f| f.get(ch, k)).sum::<f64>() / v.len() as f64
    };
    // channel 1 is Fz, channel 4 is C3
    assert!(mean(&a, 1, FeatureKind::AlphaPower) > mean(&b, 1, FeatureKind::AlphaPower) + 6.0);
    assert!(mean(&a, 1, FeatureKind::BetaPower) < mean(&b, 1, FeatureKind::BetaPower) - 6.0);
    assert!(mean(&a, 4, FeatureKind::CmcBetaArea) > mean(&b, 4, FeatureKind::CmcBetaArea) + 6.0);
}

#[test]
fn subject_recording_layout_and_spectra() {
    let fs = 256.0;
    let intuitive = gen_subject_recording(&[(State::Intuitive, 30.0)], fs, 5).unwrap();
    let intellectual = gen_subject_recording(&[(State::Intellectual, 30.0)], fs, 5).unwrap();
    assert_eq!(intuitive.n_channels(), 9);
    assert_eq!(intuitive.n_samples(), 30 * 256);
    assert!(intuitive.channel_index(SUBJECT_EMG).is_ok());
    let ratio = |rec: &cmc_core::signal_io::Recording| {
        let x = rec.channel_by_name("Fz").unwrap();
        let psd = welch_psd(x, &WelchConfig::eighths(x.len(), fs).unwrap()).unwrap();
        band_power(&psd, &BandSpec::alpha()).unwrap() / band_power(&psd, &BandSpec::beta()).unwrap()
    };
    assert!(ratio(&intuitive) > 2.0 * ratio(&intellectual));
}

#[test]
fn invalid_requests() {
    assert!(gen_shared_source(&spec(0.1, 1.0, 0)).is_err());
    assert!(gen_shared_source(&spec(20.0, -1.0, 0)).is_err());
    assert!(gen_state_features(State::Unknown, 10, 1.0, 0).is_err());
    assert!(gen_state_features(State::Intuitive, 0, 1.0, 0).is_err());
    assert!(gen_state_stream(&[], 0.02, 1.0, 0).is_err());
    assert!(gen_subject_recording(&[(State::Intuitive, 10.0)], 50.0, 0).is_err());
}

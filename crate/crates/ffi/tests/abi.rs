use std::ffi::{c_char, CString};
use std::ptr;

use cmc_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { cmc_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn sine(n: usize, f: f64, fs: f64) -> Vec<f64> {
    (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin())
        .collect()
}

#[test]
fn threshold_matches_core() {
    let mut t = 0.0;
    let s = unsafe { cmc_coherence_threshold(0.05, 16, CmcThresholdForm::Printed, &mut t) };
    assert_eq!(s, CmcStatus::Ok);
    assert!((t - 0.42548).abs() < 1e-4);
    let s = unsafe { cmc_coherence_threshold(0.05, 1, CmcThresholdForm::Printed, &mut t) };
    assert_eq!(s, CmcStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    let s = unsafe { cmc_coherence_threshold(0.05, 16, CmcThresholdForm::Printed, ptr::null_mut()) };
    assert_eq!(s, CmcStatus::NullPointer);
}

#[test]
fn error_message_clears_on_success() {
    let mut t = 0.0;
    unsafe { cmc_coherence_threshold(2.0, 16, CmcThresholdForm::Printed, &mut t) };
    assert!(unsafe { cmc_last_error_message(ptr::null_mut(), 0) } > 0);
    unsafe { cmc_coherence_threshold(0.05, 16, CmcThresholdForm::Printed, &mut t) };
    assert_eq!(unsafe { cmc_last_error_message(ptr::null_mut(), 0) }, 0);
}

#[test]
fn psd_buffer_protocol() {
    let x = sine(2048, 32.0, 256.0);
    let mut len = 0usize;
    let s = unsafe {
        cmc_welch_psd(
            x.as_ptr(),
            x.len(),
            256.0,
            64,
            0.5,
            ptr::null_mut(),
            ptr::null_mut(),
            0,
            &mut len,
        )
    };
    assert_eq!(s, CmcStatus::BufferTooSmall);
    assert_eq!(len, 33);
    let mut f = vec![0.0; len];
    let mut p = vec![0.0; len];
    let s = unsafe {
        cmc_welch_psd(
            x.as_ptr(),
            x.len(),
            256.0,
            64,
            0.5,
            f.as_mut_ptr(),
            p.as_mut_ptr(),
            len,
            &mut len,
        )
    };
    assert_eq!(s, CmcStatus::Ok);
    assert_eq!(f[1], 4.0);
    let peak = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(f[peak], 32.0);

    let mut power = 0.0;
    let s = unsafe { cmc_band_power(x.as_ptr(), x.len(), 256.0, 64, 0.5, 20.0, 44.0, &mut power) };
    assert_eq!(s, CmcStatus::Ok);
    assert!((power - 0.5).abs() < 0.025, "{power}");
}

#[test]
fn coherence_of_identical_signals() {
    let x: Vec<f64> = (0..4096).map(|i| ((i * 7919) % 1013) as f64 / 1013.0 - 0.5).collect();
    let mut len = 0usize;
    let mut k = 0usize;
    let mut f = vec![0.0; 300];
    let mut c = vec![0.0; 300];
    let s = unsafe {
        cmc_coherence(
            x.as_ptr(),
            x.as_ptr(),
            x.len(),
            256.0,
            0,
            0.0,
            f.as_mut_ptr(),
            c.as_mut_ptr(),
            300,
            &mut len,
            &mut k,
        )
    };
    assert_eq!(s, CmcStatus::Ok);
    assert_eq!(k, 15);
    assert_eq!(len, 257);
    assert!(c[..len].iter().all(|v| (v - 1.0).abs() < 1e-9));

    let mut band = CmcBandCoherence {
        threshold: 0.0,
        significant_area: 0.0,
        n_significant_bins: 0,
        mean_coherence: 0.0,
        n_segments: 0,
    };
    let s = unsafe {
        cmc_band_coherence(
            x.as_ptr(),
            x.as_ptr(),
            x.len(),
            256.0,
            0,
            0.0,
            15.0,
            30.0,
            0.05,
            CmcThresholdForm::Printed,
            &mut band,
        )
    };
    assert_eq!(s, CmcStatus::Ok);
    assert!((band.significant_area - 15.0).abs() < 1e-9);
}

#[test]
fn mann_whitney_small_case() {
    let a = [1.0, 2.0, 3.0];
    let b = [4.0, 5.0, 6.0];
    let mut r = CmcMannWhitney {
        u_statistic: -1.0,
        p_value: -1.0,
        n1: 0,
        n2: 0,
        exact: false,
    };
    let s = unsafe { cmc_mann_whitney(a.as_ptr(), 3, b.as_ptr(), 3, CmcAlternative::TwoSided, &mut r) };
    assert_eq!(s, CmcStatus::Ok);
    assert_eq!((r.u_statistic, r.p_value, r.exact), (0.0, 0.1, true));
    let s = unsafe { cmc_mann_whitney(a.as_ptr(), 0, b.as_ptr(), 3, CmcAlternative::TwoSided, &mut r) };
    assert_eq!(s, CmcStatus::InvalidArgument);
    let s = unsafe { cmc_mann_whitney(ptr::null(), 3, b.as_ptr(), 3, CmcAlternative::TwoSided, &mut r) };
    assert_eq!(s, CmcStatus::NullPointer);
}

#[test]
fn controller_handle() {
    let mut ctl: *mut CmcController = ptr::null_mut();
    assert_eq!(
        unsafe { cmc_controller_new(0, CmcMode::Minimal, &mut ctl) },
        CmcStatus::InvalidArgument
    );
    assert!(ctl.is_null());
    assert_eq!(
        unsafe { cmc_controller_new(3, CmcMode::Minimal, &mut ctl) },
        CmcStatus::Ok
    );
    let mut mode = CmcMode::Minimal;
    let mut modes = vec![];
    for state in [
        CmcState::Intellectual,
        CmcState::Unknown,
        CmcState::Intellectual,
        CmcState::Intellectual,
    ] {
        assert_eq!(
            unsafe { cmc_controller_step(ctl, state, 1.0, &mut mode) },
            CmcStatus::Ok
        );
        modes.push(mode);
    }
    assert_eq!(
        modes,
        [
            CmcMode::Minimal,
            CmcMode::Minimal,
            CmcMode::Minimal,
            CmcMode::DecisionSupport
        ]
    );
    let mut streak = 9;
    assert_eq!(
        unsafe { cmc_controller_get(ctl, &mut mode, &mut streak) },
        CmcStatus::Ok
    );
    assert_eq!((mode, streak), (CmcMode::DecisionSupport, 0));
    assert_eq!(
        unsafe { cmc_controller_step(ctl, CmcState::Intuitive, 1.5, &mut mode) },
        CmcStatus::InvalidArgument
    );
    unsafe { cmc_controller_free(ctl) };
    unsafe { cmc_controller_free(ptr::null_mut()) };
}

#[test]
fn tree_handle() {
    use cmc_core::state_engine::{train_tree, State};
    use cmc_core::synth::gen_state_features;
    let mut data: Vec<_> = gen_state_features(State::Intuitive, 30, 4.0, 1)
        .unwrap()
        .into_iter()
        .map(|f| (f, State::Intuitive))
        .collect();
    data.extend(
        gen_state_features(State::Intellectual, 30, 4.0, 1)
            .unwrap()
            .into_iter()
            .map(|f| (f, State::Intellectual)),
    );
    let model = train_tree(&data, 2, 1).unwrap();
    let json = CString::new(model.to_json()).unwrap();
    let mut tree: *mut CmcTreeModel = ptr::null_mut();
    assert_eq!(unsafe { cmc_tree_from_json(json.as_ptr(), &mut tree) }, CmcStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { cmc_tree_n_features(tree, &mut n) }, CmcStatus::Ok);
    assert_eq!(n, 32);
    let mut state = CmcState::Unknown;
    let mut conf = 0.0;
    let v = &data[0].0.values;
    assert_eq!(
        unsafe { cmc_tree_classify(tree, v.as_ptr(), v.len(), &mut state, &mut conf) },
        CmcStatus::Ok
    );
    assert_eq!(state, CmcState::Intuitive);
    assert!(conf > 0.5);
    assert_eq!(
        unsafe { cmc_tree_classify(tree, v.as_ptr(), 4, &mut state, &mut conf) },
        CmcStatus::InvalidArgument
    );
    unsafe { cmc_tree_free(tree) };

    let bad = CString::new("{\"nodes\": 3}").unwrap();
    assert_eq!(
        unsafe { cmc_tree_from_json(bad.as_ptr(), &mut tree) },
        CmcStatus::Format
    );
    assert!(tree.is_null());
}

#[test]
fn recording_handle() {
    use cmc_core::signal_io::save_recording;
    use cmc_core::spectral::BandSpec;
    use cmc_core::synth::{gen_shared_source, shared_source_recording, SharedSourceSpec};
    let dir = tempfile::tempdir().unwrap();
    let spec = SharedSourceSpec {
        duration_s: 16.0,
        sample_rate_hz: 256.0,
        band: BandSpec::beta(),
        snr1: f64::INFINITY,
        snr2: f64::INFINITY,
        seed: 2,
    };
    let rec = shared_source_recording(&gen_shared_source(&spec).unwrap(), 256.0, "C3", "EMG1").unwrap();
    save_recording(&rec, &dir.path().join("r.json"), &dir.path().join("r.csv")).unwrap();

    let stem = CString::new(dir.path().join("r").to_str().unwrap()).unwrap();
    let mut h: *mut CmcRecording = ptr::null_mut();
    assert_eq!(
        unsafe { cmc_recording_load(stem.as_ptr(), ptr::null(), &mut h) },
        CmcStatus::Ok
    );
    let (mut fs, mut ns, mut nc) = (0.0, 0, 0);
    assert_eq!(
        unsafe { cmc_recording_info(h, &mut fs, &mut ns, &mut nc) },
        CmcStatus::Ok
    );
    assert_eq!((fs, ns, nc), (256.0, 4096, 2));

    let name = CString::new("C3").unwrap();
    let mut len = 0;
    let mut buf = vec![0.0; 4096];
    assert_eq!(
        unsafe { cmc_recording_channel(h, name.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut len) },
        CmcStatus::Ok
    );
    assert_eq!(len, 4096);
    let missing = CString::new("Oz").unwrap();
    assert_eq!(
        unsafe { cmc_recording_channel(h, missing.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut len) },
        CmcStatus::NotFound
    );

    let emg = CString::new("EMG1").unwrap();
    let mut band = CmcBandCoherence {
        threshold: 0.0,
        significant_area: 0.0,
        n_significant_bins: 0,
        mean_coherence: 0.0,
        n_segments: 0,
    };
    assert_eq!(
        unsafe { cmc_recording_band_coherence(h, name.as_ptr(), emg.as_ptr(), 15.0, 30.0, 0.05, &mut band) },
        CmcStatus::Ok
    );
    assert!(band.mean_coherence > 0.99);
    unsafe { cmc_recording_free(h) };

    let nowhere = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { cmc_recording_load(nowhere.as_ptr(), ptr::null(), &mut h) },
        CmcStatus::Io
    );
    assert!(h.is_null());
}

#[test]
fn version_string() {
    let v = unsafe { std::ffi::CStr::from_ptr(cmc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

//! Signal and feature generators with analytically known ground truth.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal_io::{ChannelMeta, Recording, PAPER_MONTAGE};
use crate::spectral::{BandSpec, MIN_SEGMENT_LEN};
use crate::state_engine::{FeatureKind, FeatureVector, State, SIGNATURES};

/// Mean and spread of the class-neutral synthetic features.
pub const FEATURE_BASELINE_POWER: f64 = 10.0;
pub const FEATURE_BASELINE_AREA: f64 = 5.0;
pub const FEATURE_SD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SharedSourceSpec {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub band: BandSpec,
    /// In-band shared-to-noise density ratio of x; may be infinite.
    pub snr1: f64,
    pub snr2: f64,
    pub seed: u64,
}

/// `x = √snr1·s + n1`, `y = √snr2·s + n2` with `s` band-limited and the
/// noises white, all with the same in-band density.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedSourcePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub expected_coherence: f64,
    pub shared: Vec<f64>,
    pub noise_x: Vec<f64>,
    pub noise_y: Vec<f64>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn white(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

/// White noise with every DFT bin outside `band` zeroed. In-band density
/// matches that of unit-variance white noise.
pub fn band_limited_noise(n: usize, fs: f64, band: &BandSpec, r: &mut ChaCha8Rng) -> Vec<f64> {
    let mut buf: Vec<Complex64> = white(n, r).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let idx = if k <= n / 2 { k as f64 } else { (n - k) as f64 };
        let f = idx * fs / n as f64;
        if f < band.lo_hz || f > band.hi_hz {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Coherence of the mixture in the shared band: 1/((1+1/snr1)(1+1/snr2)).
pub fn expected_coherence(snr1: f64, snr2: f64) -> f64 {
    if snr1 == 0.0 || snr2 == 0.0 {
        return 0.0;
    }
    1.0 / ((1.0 + 1.0 / snr1) * (1.0 + 1.0 / snr2))
}

fn mix(snr: f64, shared: &[f64], noise: &[f64]) -> Vec<f64> {
    if snr.is_infinite() {
        shared.to_vec()
    } else {
        let a = snr.sqrt();
        shared.iter().zip(noise).map(|(s, n)| a * s + n).collect()
    }
}

pub fn gen_shared_source(spec: &SharedSourceSpec) -> Result<SharedSourcePair> {
    if !(spec.snr1 >= 0.0 && spec.snr2 >= 0.0) {
        return Err(Error::arg("snr values must be non-negative"));
    }
    if !(spec.sample_rate_hz > 0.0 && spec.sample_rate_hz.is_finite()) {
        return Err(Error::arg("sample rate must be positive"));
    }
    let n = (spec.duration_s * spec.sample_rate_hz).floor();
    if !(n >= (8 * MIN_SEGMENT_LEN) as f64) {
        return Err(Error::arg(format!(
            "{} s at {} Hz is too short for eight {MIN_SEGMENT_LEN}-sample segments",
            spec.duration_s, spec.sample_rate_hz
        )));
    }
    if spec.band.hi_hz > spec.sample_rate_hz / 2.0 {
        return Err(Error::arg("shared band extends past Nyquist"));
    }
    let n = n as usize;
    let shared = band_limited_noise(n, spec.sample_rate_hz, &spec.band, &mut rng(spec.seed, 0));
    let noise_x = if spec.snr1.is_infinite() {
        vec![0.0; n]
    } else {
        white(n, &mut rng(spec.seed, 1))
    };
    let noise_y = if spec.snr2.is_infinite() {
        vec![0.0; n]
    } else {
        white(n, &mut rng(spec.seed, 2))
    };
    Ok(SharedSourcePair {
        x: mix(spec.snr1, &shared, &noise_x),
        y: mix(spec.snr2, &shared, &noise_y),
        expected_coherence: expected_coherence(spec.snr1, spec.snr2),
        shared,
        noise_x,
        noise_y,
    })
}

/// Two-channel recording (EEG `eeg_name`, EMG `emg_name`) of a shared-source
/// pair, ready for the on-disk format.
pub fn shared_source_recording(pair: &SharedSourcePair, fs: f64, eeg_name: &str, emg_name: &str) -> Result<Recording> {
    Recording::new(
        fs,
        vec![ChannelMeta::eeg(eeg_name)?, ChannelMeta::emg(emg_name)],
        vec![pair.x.clone(), pair.y.clone()],
        vec![],
    )
}

/// Class-neutral value of a feature kind.
pub fn feature_baseline(kind: FeatureKind) -> f64 {
    match kind {
        FeatureKind::AlphaPower | FeatureKind::BetaPower => FEATURE_BASELINE_POWER,
        FeatureKind::CmcBetaArea | FeatureKind::CmcGammaArea => FEATURE_BASELINE_AREA,
    }
}

/// Mean shift, in standard deviations, that `state` applies to feature
/// `kind` on `channel`.
fn class_shift(state: State, kind: FeatureKind, channel: &str) -> f64 {
    let sign = match state {
        State::Intuitive => 1.0,
        State::Intellectual => -1.0,
        State::Unknown => 0.0,
    };
    SIGNATURES
        .iter()
        .find(|s| s.kind == kind && s.region.contains(&channel))
        .map_or(0.0, |s| sign * s.intuitive_direction)
}

fn draw_vector(state: State, separation: f64, t: f64, r: &mut ChaCha8Rng) -> FeatureVector {
    let channels: Vec<String> = PAPER_MONTAGE.iter().map(|s| s.to_string()).collect();
    let mut values = Vec::with_capacity(channels.len() * FeatureKind::ALL.len());
    for ch in &channels {
        for kind in FeatureKind::ALL {
            let z: f64 = r.sample(StandardNormal);
            let mean = feature_baseline(kind) + separation * FEATURE_SD * class_shift(state, kind, ch);
            values.push((mean + FEATURE_SD * z).max(0.0));
        }
    }
    FeatureVector::new(channels, values, t).expect("generated features satisfy the schema")
}

/// `n` feature vectors over the paper montage whose Table-1 signatures sit
/// `separation` standard deviations from a shared baseline in the direction
/// of `state`.
pub fn gen_state_features(state: State, n: usize, separation: f64, seed: u64) -> Result<Vec<FeatureVector>> {
    if state == State::Unknown {
        return Err(Error::arg(
            "features can only be generated for Intuitive or Intellectual",
        ));
    }
    if n == 0 {
        return Err(Error::arg("n must be at least 1"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::arg("separation must be a non-negative number"));
    }
    let mut r = rng(seed, 10 + state as u64);
    Ok((0..n).map(|_| draw_vector(state, separation, 0.0, &mut r)).collect())
}

/// Class-neutral calibration vectors.
pub fn gen_baseline_features(n: usize, seed: u64) -> Vec<FeatureVector> {
    let mut r = rng(seed, 20);
    (0..n).map(|_| draw_vector(State::Unknown, 0.0, 0.0, &mut r)).collect()
}

/// Time-stamped feature stream: each `(state, duration_s)` phase yields one
/// vector every `step_s`.
pub fn gen_state_stream(
    phases: &[(State, f64)],
    step_s: f64,
    separation: f64,
    seed: u64,
) -> Result<Vec<FeatureVector>> {
    if !(step_s > 0.0) {
        return Err(Error::arg("step must be positive"));
    }
    let mut r = rng(seed, 30);
    let mut out = Vec::new();
    let mut t0 = 0.0;
    for &(state, duration) in phases {
        let n = (duration / step_s + 1e-9).floor() as usize;
        for i in 0..n {
            let t = t0 + i as f64 * step_s;
            out.push(draw_vector(state, separation, t, &mut r));
        }
        t0 += n as f64 * step_s;
    }
    if out.is_empty() {
        return Err(Error::arg("stream phases produce no windows"));
    }
    Ok(out)
}

/// Band gains and coupling of one operator-state profile.
struct Profile {
    alpha_gain: f64,
    beta_gain: f64,
    coupling_snr: f64,
}

fn profile(state: State) -> Result<Profile> {
    match state {
        State::Intuitive => Ok(Profile {
            alpha_gain: 3.0,
            beta_gain: 1.0,
            coupling_snr: 2.0,
        }),
        State::Intellectual => Ok(Profile {
            alpha_gain: 1.5,
            beta_gain: 2.5,
            coupling_snr: 0.05,
        }),
        State::Unknown => Err(Error::arg(
            "recordings can only follow Intuitive or Intellectual profiles",
        )),
    }
}

pub const SUBJECT_EMG: &str = "EMG1";

/// Eight-channel EEG plus one EMG recording whose spectra follow the given
/// `(state, duration_s)` phases. Intuitive phases carry strong fronto-parietal
/// alpha, weak beta and a 15-45 Hz drive shared between the central sites and
/// the EMG; intellectual phases invert the band gains and nearly remove the
/// shared drive.
pub fn gen_subject_recording(phases: &[(State, f64)], sample_rate_hz: f64, seed: u64) -> Result<Recording> {
    if !(sample_rate_hz >= 100.0 && sample_rate_hz.is_finite()) {
        return Err(Error::arg("subject recordings need at least 100 Hz sampling"));
    }
    let mut gains = Vec::new();
    for &(state, duration) in phases {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::arg("phase durations must be positive"));
        }
        let n = (duration * sample_rate_hz).round() as usize;
        let p = profile(state)?;
        gains.extend(std::iter::repeat_with(|| (p.alpha_gain, p.beta_gain, p.coupling_snr.sqrt())).take(n));
    }
    let n = gains.len();
    if n < 8 * MIN_SEGMENT_LEN {
        return Err(Error::arg("subject recording is too short"));
    }
    let alpha = BandSpec::alpha();
    let beta = BandSpec::beta();
    let drive_band = BandSpec::new("drive", 15.0, 45.0)?;
    let drive = band_limited_noise(n, sample_rate_hz, &drive_band, &mut rng(seed, 100));

    let mut channels = Vec::with_capacity(PAPER_MONTAGE.len() + 1);
    let mut columns = Vec::with_capacity(PAPER_MONTAGE.len() + 1);
    for (c, name) in PAPER_MONTAGE.iter().enumerate() {
        let stream = 200 + 4 * c as u64;
        let base = white(n, &mut rng(seed, stream));
        let a = band_limited_noise(n, sample_rate_hz, &alpha, &mut rng(seed, stream + 1));
        let b = band_limited_noise(n, sample_rate_hz, &beta, &mut rng(seed, stream + 2));
        let frontal = SIGNATURES[0].region.contains(name);
        let central = SIGNATURES[2].region.contains(name);
        let col = (0..n)
            .map(|i| {
                let (ga, gb, gc) = gains[i];
                let ga = if frontal { ga } else { 1.0 };
                let shared = if central { gc * drive[i] } else { 0.0 };
                base[i] + ga * a[i] + gb * b[i] + shared
            })
            .collect();
        channels.push(ChannelMeta::eeg(name)?);
        columns.push(col);
    }
    let emg_noise = white(n, &mut rng(seed, 300));
    columns.push((0..n).map(|i| gains[i].2 * drive[i] + emg_noise[i]).collect());
    channels.push(ChannelMeta::emg(SUBJECT_EMG));
    Recording::new(sample_rate_hz, channels, columns, vec![])
}

//! `cmc-pipeline` command-line front end.
//!
//! Every subcommand reads an optional JSON [`RunConfig`], applies its flags
//! on top, validates the result, computes all outputs in memory and only
//! then writes them. Exit codes: 0 success, 1 invalid input, 2 I/O failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cmc::{coherence, significant_area_with, ThresholdForm, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::numfmt::fmt9;
use crate::preprocess::{
    bandpass, epoch, notch, reject_artifacts, resample, ArtifactMask, DEFAULT_ARTIFACT_WINDOW_S, DEFAULT_NOTCH_Q,
    DEFAULT_Z_THRESHOLD,
};
use crate::signal_io::{
    data_csv, load_recording, metadata_json, recording_paths, standard_position, ChannelKind, Recording,
};
use crate::spectral::{band_power, welch_psd, BandSpec, WelchConfig};
use crate::state_engine::{
    extract_features, features_csv, fit_baseline, kfold_accuracy, read_features_csv, recording_features, rule_classify,
    train_tree, AssistanceMode, Baseline, Classifier, Example, FeatureConfig, FeatureKind, FeatureVector,
    SimulationConfig, State, StreamSource, TreeModel, DEFAULT_HYSTERESIS_K,
};
use crate::stats::{
    comparison_csv, feature_csv, group_compare, read_feature_csv, Alternative, FeatureKey, FeatureTable,
};
use crate::synth::{
    gen_baseline_features, gen_shared_source, gen_state_features, gen_state_stream, gen_subject_recording,
    shared_source_recording, SharedSourceSpec,
};
use crate::topomap::{
    evaluate_field, render_ppm, spline_fit, ColorScale, DEFAULT_LAMBDA, DEFAULT_ORDER, DEFAULT_TERMS, MIN_RESOLUTION,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const THREADS_ENV: &str = "CMC_PIPELINE_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Band-pass edges in Hz; a low edge of 0 gives a pure low-pass.
    pub bandpass_hz: Option<[f64; 2]>,
    pub notch_hz: Option<f64>,
    pub notch_q: f64,
    pub resample_hz: Option<f64>,
    pub artifact_window_s: f64,
    pub z_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            bandpass_hz: Some([0.01, 100.0]),
            notch_hz: Some(60.0),
            notch_q: DEFAULT_NOTCH_Q,
            resample_hz: None,
            artifact_window_s: DEFAULT_ARTIFACT_WINDOW_S,
            z_threshold: DEFAULT_Z_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopomapConfig {
    pub order_m: u32,
    pub n_terms: usize,
    pub lambda: f64,
    pub resolution: usize,
    /// Fixed colour range; symmetric around zero from the data when absent.
    pub range: Option<[f64; 2]>,
}

impl Default for TopomapConfig {
    fn default() -> Self {
        TopomapConfig {
            order_m: DEFAULT_ORDER,
            n_terms: DEFAULT_TERMS,
            lambda: DEFAULT_LAMBDA,
            resolution: 128,
            range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub folds: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: 3, folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub snr1: f64,
    pub snr2: f64,
    pub band: String,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Class separation of synthetic feature vectors, in standard deviations.
    pub separation: f64,
    pub n_per_class: usize,
    /// Phases such as `intuitive:30,intellectual:30`.
    pub phases: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            snr1: 1.0,
            snr2: 1.0,
            band: "15:30".into(),
            duration_s: 120.0,
            sample_rate_hz: 256.0,
            separation: 4.0,
            n_per_class: 200,
            phases: "intuitive:30,intellectual:30".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectSpec {
    pub id: String,
    /// `expert` or `novice`.
    pub group: String,
    /// Recording stem, `.json` or `.csv`; relative to the config file.
    pub input: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_per_group: usize,
    pub duration_s: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_per_group: 7,
            duration_s: 20.0,
        }
    }
}

/// Parameters of every stage, loaded from JSON; command-line flags win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub eeg: Vec<String>,
    pub emg: Option<String>,
    /// Band names (`alpha`, `beta`, ...) or `lo:hi` ranges.
    pub bands: Vec<String>,
    pub alpha: f64,
    pub threshold_form: ThresholdForm,
    pub segment_fraction: f64,
    pub overlap: f64,
    pub window_s: Option<f64>,
    pub step_s: Option<f64>,
    pub hysteresis_k: usize,
    pub one_sided: bool,
    pub calibration_windows: usize,
    pub preprocess: PreprocessConfig,
    pub topomap: TopomapConfig,
    pub tree: TreeConfig,
    pub synth: SynthConfig,
    pub cohort: CohortConfig,
    pub subjects: Vec<SubjectSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            eeg: Vec::new(),
            emg: None,
            bands: Vec::new(),
            alpha: DEFAULT_ALPHA,
            threshold_form: ThresholdForm::Printed,
            segment_fraction: 0.125,
            overlap: 0.5,
            window_s: None,
            step_s: None,
            hysteresis_k: DEFAULT_HYSTERESIS_K,
            one_sided: false,
            calibration_windows: 200,
            preprocess: PreprocessConfig::default(),
            topomap: TopomapConfig::default(),
            tree: TreeConfig::default(),
            synth: SynthConfig::default(),
            cohort: CohortConfig::default(),
            subjects: Vec::new(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!("{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            file: path.display().to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::arg(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.segment_fraction > 0.0 && self.segment_fraction <= 1.0) {
            return Err(Error::arg("segment_fraction must lie in (0, 1]"));
        }
        if !(self.overlap >= 0.0 && self.overlap < 1.0) {
            return Err(Error::arg("overlap must lie in [0, 1)"));
        }
        if let Some(w) = self.window_s {
            positive("window_s", w)?;
        }
        if let Some(s) = self.step_s {
            positive("step_s", s)?;
        }
        if self.hysteresis_k < 1 {
            return Err(Error::arg("hysteresis_k must be at least 1"));
        }
        if self.tree.max_depth < 1 {
            return Err(Error::arg("tree depth must be at least 1"));
        }
        if self.tree.folds < 2 {
            return Err(Error::arg("tree folds must be at least 2"));
        }
        self.band_specs()?;
        BandSpec::parse(&self.synth.band)?;
        parse_phases(&self.synth.phases)?;
        let p = &self.preprocess;
        if let Some([lo, hi]) = p.bandpass_hz {
            if !(lo >= 0.0 && lo < hi) {
                return Err(Error::arg(format!("band-pass needs 0 <= lo < hi, got {lo}..{hi}")));
            }
        }
        if let Some(f) = p.notch_hz {
            positive("notch_hz", f)?;
        }
        positive("notch_q", p.notch_q)?;
        if let Some(r) = p.resample_hz {
            positive("resample_hz", r)?;
        }
        positive("artifact_window_s", p.artifact_window_s)?;
        positive("z_threshold", p.z_threshold)?;
        let t = &self.topomap;
        if t.resolution < MIN_RESOLUTION {
            return Err(Error::arg(format!(
                "topomap resolution must be at least {MIN_RESOLUTION}"
            )));
        }
        if !(t.lambda >= 0.0 && t.lambda.is_finite()) {
            return Err(Error::arg("topomap lambda must be non-negative"));
        }
        if let Some([lo, hi]) = t.range {
            ColorScale::new(lo, hi)?;
        }
        positive("synth duration_s", self.synth.duration_s)?;
        positive("synth sample_rate_hz", self.synth.sample_rate_hz)?;
        for s in &self.subjects {
            if s.group != "expert" && s.group != "novice" {
                return Err(Error::arg(format!(
                    "subject {} has group {:?}; use expert or novice",
                    s.id, s.group
                )));
            }
        }
        Ok(())
    }

    pub fn band_specs(&self) -> Result<Vec<BandSpec>> {
        self.bands.iter().map(|b| BandSpec::parse(b)).collect()
    }

    fn features(&self) -> FeatureConfig {
        FeatureConfig {
            significance: self.alpha,
            threshold_form: self.threshold_form,
            segment_fraction: self.segment_fraction,
            overlap: self.overlap,
            ..FeatureConfig::default()
        }
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::arg("this command is stochastic; pass --seed or set seed in the config"))
    }
}

/// `intuitive:30,intellectual:30` → phases.
pub fn parse_phases(text: &str) -> Result<Vec<(State, f64)>> {
    let phases = text
        .split(',')
        .map(|part| {
            let (state, dur) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::arg(format!("phase {part:?} must look like state:seconds")))?;
            let dur: f64 = dur
                .trim()
                .parse()
                .map_err(|_| Error::arg(format!("phase duration {dur:?} is not a number")))?;
            positive("phase duration", dur)?;
            Ok((state.trim().parse::<State>()?, dur))
        })
        .collect::<Result<Vec<_>>>()?;
    if phases.iter().any(|(s, _)| *s == State::Unknown) {
        return Err(Error::arg("phases must be intuitive or intellectual"));
    }
    Ok(phases)
}

#[derive(Debug, Parser)]
#[command(
    name = "cmc-pipeline",
    version,
    about = "EEG/EMG spectral and corticomuscular coherence analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArg {
    /// JSON run configuration; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct InputArgs {
    /// Recording: stem, metadata .json or data .csv
    #[arg(long)]
    pub input: PathBuf,
    /// Metadata JSON when --input names the data CSV directly
    #[arg(long)]
    pub metadata: Option<PathBuf>,
}

impl InputArgs {
    fn load(&self) -> Result<Recording> {
        load_input(&self.input, self.metadata.as_deref())
    }
}

fn load_input(input: &Path, metadata: Option<&Path>) -> Result<Recording> {
    match metadata {
        Some(meta) => load_recording(meta, input),
        None => {
            let (meta, data) = recording_paths(input);
            load_recording(&meta, &data)
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Band-pass, notch, resample and flag artifact windows
    Preprocess(PreprocessCmd),
    /// Band power per channel from Welch spectra
    Psd(PsdCmd),
    /// Corticomuscular coherence features of EEG/EMG pairs
    Cmc(CmcCmd),
    /// Expert vs novice Mann-Whitney comparison of a long feature table
    Stats(StatsCmd),
    /// Spherical-spline scalp map of per-channel values
    Topomap(TopomapCmd),
    /// Label window features with the rule classifier or a trained tree
    Classify(ClassifyCmd),
    /// Train a decision tree on labelled window features
    Train(TrainCmd),
    /// Stream windows through the classifier and assistance controller
    Simulate(SimulateCmd),
    /// Generate a synthetic recording
    Synth(SynthCmd),
    /// Preprocess, extract features, compare groups, map and classify a cohort
    Pipeline(PipelineCmd),
}

#[derive(Debug, Args)]
pub struct PreprocessCmd {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output recording stem
    #[arg(long)]
    pub output: PathBuf,
    /// Band-pass edges lo:hi in Hz
    #[arg(long)]
    pub band: Option<String>,
    #[arg(long)]
    pub notch_hz: Option<f64>,
    /// Skip the notch filter
    #[arg(long)]
    pub no_notch: bool,
    #[arg(long)]
    pub resample_hz: Option<f64>,
    /// Artifact window length in seconds
    #[arg(long)]
    pub window_s: Option<f64>,
    #[arg(long)]
    pub z_threshold: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct PsdCmd {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output CSV; stdout when absent
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Band name or lo:hi; repeatable (default alpha, beta, gamma)
    #[arg(long)]
    pub band: Vec<String>,
    /// EEG channels, comma separated (default all EEG)
    #[arg(long, value_delimiter = ',')]
    pub eeg: Vec<String>,
    /// Welch segment length in seconds (default one eighth of the record)
    #[arg(long)]
    pub window_s: Option<f64>,
    /// Write the full spectrum instead of band powers
    #[arg(long)]
    pub spectrum: bool,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct CmcCmd {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub eeg: Vec<String>,
    /// EMG channel (default the first EMG channel)
    #[arg(long)]
    pub emg: Option<String>,
    /// Band name or lo:hi; repeatable (default beta, gamma)
    #[arg(long)]
    pub band: Vec<String>,
    /// Significance level of the coherence threshold
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `printed` or `conventional`
    #[arg(long)]
    pub threshold_form: Option<ThresholdForm>,
    /// Welch segment length in seconds (default one eighth of the record)
    #[arg(long)]
    pub window_s: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct StatsCmd {
    /// Long feature CSV: group,subject,channel,band,metric,value
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Test expert > novice instead of two-sided
    #[arg(long)]
    pub one_sided: bool,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct TopomapCmd {
    /// CSV with columns channel,value
    #[arg(long)]
    pub input: PathBuf,
    /// Output PPM image
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the interpolated grid as CSV
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub max: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct ClassifyCmd {
    /// Feature CSV: t_s,label,<channel>.<feature>...
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Tree model JSON; the rule classifier is used when absent
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Baseline JSON for the rule classifier (default: fitted on the input)
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    /// Labelled feature CSV; synthetic features from --seed when absent
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output tree JSON
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// Recording to stream; a synthetic feature stream from --seed when absent
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    /// NDJSON log; stdout when absent
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub emg: Option<String>,
    #[arg(long)]
    pub window_s: Option<f64>,
    #[arg(long)]
    pub step_s: Option<f64>,
    #[arg(long)]
    pub hysteresis_k: Option<usize>,
    /// Tree model JSON; the rule classifier is used when absent
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthetic phases, e.g. intuitive:30,intellectual:30
    #[arg(long)]
    pub phases: Option<String>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    /// Output recording stem
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub snr1: Option<f64>,
    #[arg(long)]
    pub snr2: Option<f64>,
    /// Shared band, name or lo:hi
    #[arg(long)]
    pub band: Option<String>,
    /// Duration in seconds
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "C3")]
    pub eeg: String,
    #[arg(long, default_value = "EMG1")]
    pub emg: String,
    /// Generate a full-montage subject following these phases instead
    #[arg(long)]
    pub phases: Option<String>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct PipelineCmd {
    /// Output directory
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub window_s: Option<f64>,
    #[arg(long)]
    pub step_s: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub one_sided: bool,
    #[command(flatten)]
    pub config: ConfigArg,
}

fn base_config(arg: &ConfigArg) -> Result<RunConfig> {
    match &arg.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn config_dir(arg: &ConfigArg) -> PathBuf {
    arg.config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

/// A file to be written once every computation has succeeded.
struct Output {
    path: Option<PathBuf>,
    bytes: Vec<u8>,
}

impl Output {
    fn file(path: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) -> Self {
        Output {
            path: Some(path.into()),
            bytes: bytes.into(),
        }
    }

    fn maybe(path: Option<&Path>, bytes: impl Into<Vec<u8>>) -> Self {
        Output {
            path: path.map(Path::to_path_buf),
            bytes: bytes.into(),
        }
    }
}

fn commit(outputs: Vec<Output>) -> Result<()> {
    use std::io::Write;
    for out in outputs {
        match out.path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                std::fs::write(&p, &out.bytes).map_err(|e| Error::io(&p, e))?;
            }
            None => std::io::stdout()
                .write_all(&out.bytes)
                .map_err(|e| Error::io("<stdout>", e))?,
        }
    }
    Ok(())
}

fn recording_outputs(rec: &Recording, stem: &Path) -> Vec<Output> {
    let (meta, data) = recording_paths(stem);
    vec![
        Output::file(meta, metadata_json(rec)),
        Output::file(data, data_csv(rec)),
    ]
}

fn eeg_names(rec: &Recording, requested: &[String]) -> Result<Vec<String>> {
    if requested.is_empty() {
        let names: Vec<String> = rec
            .channels()
            .iter()
            .filter(|c| c.kind == ChannelKind::Eeg)
            .map(|c| c.name.clone())
            .collect();
        if names.is_empty() {
            return Err(Error::arg("recording has no EEG channels"));
        }
        return Ok(names);
    }
    for name in requested {
        rec.channel_index(name)?;
    }
    Ok(requested.to_vec())
}

fn emg_name(rec: &Recording, requested: Option<&str>) -> Result<String> {
    match requested {
        Some(name) => {
            let idx = rec.channel_index(name)?;
            if rec.channels()[idx].kind != ChannelKind::Emg {
                return Err(Error::arg(format!("channel {name} is not an EMG channel")));
            }
            Ok(name.to_string())
        }
        None => rec
            .channels()
            .iter()
            .find(|c| c.kind == ChannelKind::Emg)
            .map(|c| c.name.clone())
            .ok_or_else(|| Error::arg("recording has no EMG channel")),
    }
}

fn welch_for(n: usize, fs: f64, window_s: Option<f64>, cfg: &RunConfig) -> Result<WelchConfig> {
    match window_s {
        Some(w) => {
            positive("window_s", w)?;
            WelchConfig::new((w * fs).round() as usize, cfg.overlap, fs)
        }
        None => WelchConfig::fraction(n, cfg.segment_fraction, cfg.overlap, fs),
    }
}

fn apply_preprocess(rec: &Recording, p: &PreprocessConfig) -> Result<Recording> {
    let mut out = rec.clone();
    if let Some([lo, hi]) = p.bandpass_hz {
        out = bandpass(&out, lo, hi)?;
    }
    if let Some(f0) = p.notch_hz {
        if f0 < out.sample_rate_hz() / 2.0 {
            out = notch(&out, f0, p.notch_q)?;
        } else {
            log::warn!("notch at {f0} Hz is above Nyquist and skipped");
        }
    }
    if let Some(fs) = p.resample_hz {
        out = resample(&out, fs)?;
    }
    Ok(out)
}

fn mask_csv(mask: &ArtifactMask, fs: f64) -> String {
    let mut out = String::from("window,start_s,keep,reason\n");
    for (i, w) in mask.windows.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{}\n",
            fmt9(w.start_sample as f64 / fs),
            w.keep,
            w.reason.as_deref().unwrap_or("")
        ));
    }
    out
}

fn cmd_preprocess(c: PreprocessCmd) -> Result<()> {
    let mut cfg = base_config(&c.config)?;
    if let Some(b) = &c.band {
        let band = BandSpec::parse(b)?;
        cfg.preprocess.bandpass_hz = Some([band.lo_hz, band.hi_hz]);
    }
    if c.notch_hz.is_some() {
        cfg.preprocess.notch_hz = c.notch_hz;
    }
    if c.no_notch {
        cfg.preprocess.notch_hz = None;
    }
    if c.resample_hz.is_some() {
        cfg.preprocess.resample_hz = c.resample_hz;
    }
    if let Some(w) = c.window_s {
        cfg.preprocess.artifact_window_s = w;
    }
    if let Some(z) = c.z_threshold {
        cfg.preprocess.z_threshold = z;
    }
    cfg.validate()?;
    let rec = c.input.load()?;
    let clean = apply_preprocess(&rec, &cfg.preprocess)?;
    let mask = reject_artifacts(&clean, cfg.preprocess.artifact_window_s, cfg.preprocess.z_threshold)?;
    log::info!("{} of {} artifact windows kept", mask.kept(), mask.len());
    let mut outputs = recording_outputs(&clean, &c.output);
    let mut mask_path = c.output.clone().into_os_string();
    mask_path.push(".artifacts.csv");
    outputs.push(Output::file(mask_path, mask_csv(&mask, clean.sample_rate_hz())));
    commit(outputs)
}

fn cmd_psd(c: PsdCmd) -> Result<()> {
    let mut cfg = base_config(&c.config)?;
    if !c.band.is_empty() {
        cfg.bands = c.band.clone();
    }
    if !c.eeg.is_empty() {
        cfg.eeg = c.eeg.clone();
    }
    if c.window_s.is_some() {
        cfg.window_s = c.window_s;
    }
    cfg.validate()?;
    let mut bands = cfg.band_specs()?;
    if bands.is_empty() {
        bands = crate::spectral::default_bands();
    }
    let rec = c.input.load()?;
    let fs = rec.sample_rate_hz();
    let welch = welch_for(rec.n_samples(), fs, cfg.window_s, &cfg)?;
    let names = eeg_names(&rec, &cfg.eeg)?;
    let mut out = if c.spectrum {
        String::from("channel,freq_hz,psd\n")
    } else {
        String::from("channel,band,lo_hz,hi_hz,power\n")
    };
    for name in &names {
        let psd = welch_psd(rec.channel_by_name(name)?, &welch)?;
        if c.spectrum {
            for (f, v) in psd.freqs_hz.iter().zip(&psd.values) {
                out.push_str(&format!("{name},{},{}\n", fmt9(*f), fmt9(*v)));
            }
        } else {
            for band in &bands {
                let p = band_power(&psd, band)?;
                out.push_str(&format!(
                    "{name},{},{},{},{}\n",
                    band.name,
                    fmt9(band.lo_hz),
                    fmt9(band.hi_hz),
                    fmt9(p)
                ));
            }
        }
    }
    commit(vec![Output::maybe(c.output.as_deref(), out)])
}

pub const CMC_HEADER: &str =
    "eeg,emg,band,lo_hz,hi_hz,n_segments,threshold,significant_area,n_significant_bins,mean_coherence\n";

fn cmd_cmc(c: CmcCmd) -> Result<()> {
    let mut cfg = base_config(&c.config)?;
    if !c.band.is_empty() {
        cfg.bands = c.band.clone();
    }
    if !c.eeg.is_empty() {
        cfg.eeg = c.eeg.clone();
    }
    if c.emg.is_some() {
        cfg.emg = c.emg.clone();
    }
    if let Some(a) = c.alpha {
        cfg.alpha = a;
    }
    if let Some(f) = c.threshold_form {
        cfg.threshold_form = f;
    }
    if c.window_s.is_some() {
        cfg.window_s = c.window_s;
    }
    cfg.validate()?;
    let mut bands = cfg.band_specs()?;
    if bands.is_empty() {
        bands = vec![BandSpec::beta(), BandSpec::gamma()];
    }
    let rec = c.input.load()?;
    let fs = rec.sample_rate_hz();
    let welch = welch_for(rec.n_samples(), fs, cfg.window_s, &cfg)?;
    let emg = emg_name(&rec, cfg.emg.as_deref())?;
    let names = eeg_names(&rec, &cfg.eeg)?;
    let y = rec.channel_by_name(&emg)?;
    let mut out = String::from(CMC_HEADER);
    for name in &names {
        let coh = coherence(rec.channel_by_name(name)?, y, &welch)?.with_channels(name, &emg);
        for band in &bands {
            let feat = significant_area_with(&coh, band, cfg.alpha, cfg.threshold_form)?;
            out.push_str(&format!(
                "{name},{emg},{},{},{},{},{},{},{},{}\n",
                band.name,
                fmt9(band.lo_hz),
                fmt9(band.hi_hz),
                coh.n_segments,
                fmt9(feat.threshold),
                fmt9(feat.significant_area),
                feat.n_significant_bins,
                fmt9(coh.band_mean(band)?)
            ));
        }
    }
    commit(vec![Output::maybe(c.output.as_deref(), out)])
}

fn alternative(one_sided: bool) -> Alternative {
    if one_sided {
        Alternative::Greater
    } else {
        Alternative::TwoSided
    }
}

fn cmd_stats(c: StatsCmd) -> Result<()> {
    let mut cfg = base_config(&c.config)?;
    cfg.one_sided |= c.one_sided;
    cfg.validate()?;
    let (expert, novice) = read_feature_csv(&c.input)?;
    let rows = group_compare(&expert, &novice, alternative(cfg.one_sided))?;
    commit(vec![Output::maybe(c.output.as_deref(), comparison_csv(&rows))])
}

#[derive(Debug, Deserialize)]
struct ChannelValue {
    channel: String,
    value: f64,
}

fn read_channel_values(path: &Path) -> Result<Vec<(String, f64)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    reader
        .deserialize::<ChannelValue>()
        .map(|row| {
            row.map(|r| (r.channel, r.value)).map_err(|e| Error::Format {
                file: path.display().to_string(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

/// PPM image and grid CSV of a spline map through `(channel, value)` pairs.
fn topomap_outputs(values: &[(String, f64)], cfg: &TopomapConfig) -> Result<(Vec<u8>, String)> {
    let mut positions = Vec::with_capacity(values.len());
    for (name, v) in values {
        if !v.is_finite() {
            return Err(Error::Data(format!("value of {name} is not finite")));
        }
        positions
            .push(standard_position(name).ok_or_else(|| Error::NotFound(format!("no standard position for {name}")))?);
    }
    let v: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
    let model = spline_fit(&positions, &v, cfg.order_m, cfg.n_terms, cfg.lambda)?;
    let field = evaluate_field(&model, cfg.resolution)?;
    let scale = match cfg.range {
        Some([lo, hi]) => ColorScale::new(lo, hi)?,
        None => {
            let (lo, hi) = field.range().unwrap_or((0.0, 0.0));
            let m = lo.abs().max(hi.abs());
            if m > 0.0 {
                ColorScale::new(-m, m)?
            } else {
                ColorScale::new(-1.0, 1.0)?
            }
        }
    };
    Ok((render_ppm(&field, &scale), field.to_csv()))
}

fn cmd_topomap(c: TopomapCmd) -> Result<()> {
    let mut cfg = base_config(&c.config)?;
    if let Some(l) = c.lambda {
        cfg.topomap.lambda = l;
    }
    if let Some(r) = c.resolution {
        cfg.topomap.resolution = r;
    }
    match (c.min, c.max) {
        (Some(lo), Some(hi)) => cfg.topomap.range = Some([lo, hi]),
        (None, None) => {}
        _ => return Err(Error::arg("--min and --max must be given together")),
    }
    cfg.validate()?;
    let values = read_channel_values(&c.input)?;
    let (ppm, grid) = topomap_outputs(&values, &cfg.topomap)?;
    let mut outputs = vec![Output::file(&c.output, ppm)];
    if let Some(f) = &c.field {
        outputs.push(Output::file(f, grid));
    }
    commit(outputs)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        file: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn load_tree(path: &Path) -> Result<TreeModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TreeModel::from_json(&text)
}

fn cmd_classify(c: ClassifyCmd) -> Result<()> {
    let cfg = base_config(&c.config)?;
    cfg.validate()?;
    let rows = read_features_csv(&c.input)?;
    let vectors: Vec<FeatureVector> = rows.into_iter().map(|(fv, _)| fv).collect();
    let classifier = match (&c.model, &c.baseline) {
        (Some(m), _) => Classifier::Tree(load_tree(m)?),
        (None, Some(b)) => Classifier::Rule(read_json::<Baseline>(b)?),
        (None, None) => Classifier::Rule(fit_baseline(&vectors)?),
    };
    let mut out = String::from("t_s,label,confidence\n");
    for fv in &vectors {
        let l = classifier.classify(fv)?;
        out.push_str(&format!(
            "{},{},{}\n",
            fmt9(fv.window_start_s),
            l.state,
            fmt9(l.confidence)
        ));
    }
    commit(vec![Output::maybe(c.output.as_deref(), out)])
}

fn synthetic_training_set(cfg: &RunConfig, seed: u64) -> Result<Vec<Example>> {
    let n = cfg.synth.n_per_class;
    let sep = cfg.synth.separation;
    let mut data: Vec<Example> = gen_state_features(State::Intuitive, n, sep, seed)?
        .into_iter()
        .map(|fv| (fv, State::Intuitive))
        .collect();
    data.extend(
        gen_state_features(State::Intellectual, n, sep, seed)?
            .into_iter()
            .map(|fv| (fv, State::Intellectual)),
    );
    Ok(data)
}

fn cmd_train(c: TrainCmd) -> Result<()> {
    let mut cfg = base_config(&c.config)?;
    if let Some(d) = c.depth {
        cfg.tree.max_depth = d;
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if let Some(s) = c.separation {
        cfg.synth.separation = s;
    }
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let data = match &c.input {
        Some(path) => read_features_csv(path)?
            .into_iter()
            .enumerate()
            .map(|(i, (fv, label))| {
                label
                    .filter(|s| *s != State::Unknown)
                    .map(|s| (fv, s))
                    .ok_or_else(|| Error::Data(format!("row {} has no Intuitive/Intellectual label", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?,
        None => synthetic_training_set(&cfg, seed)?,
    };
    let model = train_tree(&data, cfg.tree.max_depth, seed)?;
    if data.len() >= cfg.tree.folds {
        let acc = kfold_accuracy(&data, cfg.tree.folds, cfg.tree.max_depth, seed)?;
        log::info!("{}-fold held-out accuracy {}", cfg.tree.folds, fmt9(acc));
    }
    commit(vec![Output::file(&c.output, model.to_json())])
}

fn cmd_simulate(c: SimulateCmd) -> Result<()> {
    let mut cfg = base_config(&c.config)?;
    if c.window_s.is_some() {
        cfg.window_s = c.window_s;
    }
    if c.step_s.is_some() {
        cfg.step_s = c.step_s;
    }
    if let Some(k) = c.hysteresis_k {
        cfg.hysteresis_k = k;
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if c.emg.is_some() {
        cfg.emg = c.emg.clone();
    }
    if let Some(p) = &c.phases {
        cfg.synth.phases = p.clone();
    }
    if let Some(s) = c.separation {
        cfg.synth.separation = s;
    }
    cfg.validate()?;
    let defaults = SimulationConfig::default();
    let sim = SimulationConfig {
        window_s: cfg.window_s.unwrap_or(defaults.window_s),
        step_s: cfg.step_s.unwrap_or(defaults.step_s),
        hysteresis_k: cfg.hysteresis_k,
        initial_mode: AssistanceMode::Minimal,
        features: cfg.features(),
    };
    let tree = c.model.as_deref().map(load_tree).transpose()?;
    let given_baseline = c.baseline.as_deref().map(read_json::<Baseline>).transpose()?;
    let log = match &c.input {
        Some(input) => {
            let rec = load_input(input, c.metadata.as_deref())?;
            let emg = emg_name(&rec, cfg.emg.as_deref())?;
            let classifier = match (tree, given_baseline) {
                (Some(t), _) => Classifier::Tree(t),
                (None, Some(b)) => Classifier::Rule(b),
                (None, None) => Classifier::Rule(fit_baseline(&recording_features(&rec, &emg, &sim)?)?),
            };
            crate::state_engine::run_simulation(
                StreamSource::Recording {
                    rec: &rec,
                    emg_channel: &emg,
                },
                &classifier,
                &sim,
            )?
        }
        None => {
            let seed = cfg.require_seed()?;
            let phases = parse_phases(&cfg.synth.phases)?;
            let stream = gen_state_stream(&phases, sim.step_s, cfg.synth.separation, seed)?;
            let classifier = match (tree, given_baseline) {
                (Some(t), _) => Classifier::Tree(t),
                (None, Some(b)) => Classifier::Rule(b),
                (None, None) => Classifier::Rule(fit_baseline(&gen_baseline_features(cfg.calibration_windows, seed))?),
            };
            crate::state_engine::run_simulation(StreamSource::Features(&stream), &classifier, &sim)?
        }
    };
    let switches = log.switch_indices(sim.initial_mode).len();
    log::info!(
        "{} windows, {switches} mode switches, {} overruns",
        log.records.len(),
        log.overruns
    );
    commit(vec![Output::maybe(c.output.as_deref(), log.to_ndjson())])
}

fn cmd_synth(c: SynthCmd) -> Result<()> {
    let mut cfg = base_config(&c.config)?;
    if let Some(v) = c.snr1 {
        cfg.synth.snr1 = v;
    }
    if let Some(v) = c.snr2 {
        cfg.synth.snr2 = v;
    }
    if let Some(b) = &c.band {
        cfg.synth.band = b.clone();
    }
    if let Some(d) = c.duration {
        cfg.synth.duration_s = d;
    }
    if let Some(fs) = c.fs {
        cfg.synth.sample_rate_hz = fs;
    }
    if let Some(p) = &c.phases {
        cfg.synth.phases = p.clone();
    }
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let fs = cfg.synth.sample_rate_hz;
    let rec = if c.phases.is_some() {
        gen_subject_recording(&parse_phases(&cfg.synth.phases)?, fs, seed)?
    } else {
        let spec = SharedSourceSpec {
            duration_s: cfg.synth.duration_s,
            sample_rate_hz: fs,
            band: BandSpec::parse(&cfg.synth.band)?,
            snr1: cfg.synth.snr1,
            snr2: cfg.synth.snr2,
            seed,
        };
        let pair = gen_shared_source(&spec)?;
        shared_source_recording(&pair, fs, &c.eeg, &c.emg)?
    };
    commit(recording_outputs(&rec, &c.output))
}

struct Subject {
    id: String,
    expert: bool,
    rec: Recording,
}

fn cohort(cfg: &RunConfig, base: &Path) -> Result<Vec<Subject>> {
    if !cfg.subjects.is_empty() {
        return cfg
            .subjects
            .iter()
            .map(|s| {
                Ok(Subject {
                    id: s.id.clone(),
                    expert: s.group == "expert",
                    rec: load_input(&base.join(&s.input), None)?,
                })
            })
            .collect();
    }
    let seed = cfg.require_seed()?;
    let n = cfg.cohort.n_per_group;
    if n < 1 {
        return Err(Error::arg("cohort needs at least one subject per group"));
    }
    let mut out = Vec::with_capacity(2 * n);
    for (g, (state, prefix)) in [(State::Intuitive, "E"), (State::Intellectual, "N")]
        .into_iter()
        .enumerate()
    {
        for i in 0..n {
            let subject_seed = seed.wrapping_mul(1_000_003).wrapping_add((g * n + i) as u64);
            out.push(Subject {
                id: format!("{prefix}{:02}", i + 1),
                expert: state == State::Intuitive,
                rec: gen_subject_recording(
                    &[(state, cfg.cohort.duration_s)],
                    cfg.synth.sample_rate_hz,
                    subject_seed,
                )?,
            });
        }
    }
    Ok(out)
}

/// Window features of a preprocessed subject, skipping windows that touch a
/// rejected artifact window.
fn subject_windows(
    rec: &Recording,
    emg: &str,
    cfg: &RunConfig,
    window_s: f64,
    step_s: f64,
) -> Result<Vec<FeatureVector>> {
    let clean = apply_preprocess(rec, &cfg.preprocess)?;
    let mask = reject_artifacts(&clean, cfg.preprocess.artifact_window_s, cfg.preprocess.z_threshold)?;
    let eeg = clean.select_kind(ChannelKind::Eeg)?;
    let emg_rec = clean.select(&[emg])?;
    let features = cfg.features();
    let eeg_epochs = epoch(&eeg, window_s, step_s)?;
    let emg_epochs = epoch(&emg_rec, window_s, step_s)?;
    let w = mask.window_samples;
    let mut out = Vec::new();
    for (e, m) in eeg_epochs.iter().zip(&emg_epochs) {
        let first = e.start_sample / w;
        let last = (e.start_sample + e.len() - 1) / w;
        let clean_span = (first..=last).all(|i| mask.windows.get(i).is_none_or(|v| v.keep));
        if clean_span {
            out.push(extract_features(e, m, &features)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Data("every analysis window overlaps an artifact".into()));
    }
    Ok(out)
}

fn feature_key(channel: &str, kind: FeatureKind, f: &FeatureConfig) -> FeatureKey {
    match kind {
        FeatureKind::AlphaPower => FeatureKey::new(channel, &f.alpha_band.name, "psd"),
        FeatureKind::BetaPower => FeatureKey::new(channel, &f.beta_band.name, "psd"),
        FeatureKind::CmcBetaArea => FeatureKey::new(channel, &f.beta_band.name, "cmc_area"),
        FeatureKind::CmcGammaArea => FeatureKey::new(channel, &f.gamma_band.name, "cmc_area"),
    }
}

fn mean_features(windows: &[FeatureVector], f: &FeatureConfig) -> Vec<(FeatureKey, f64)> {
    let first = &windows[0];
    let n = windows.len() as f64;
    let mut out = Vec::with_capacity(first.len());
    for (c, ch) in first.channels.iter().enumerate() {
        for kind in FeatureKind::ALL {
            let mean = windows.iter().map(|w| w.get(c, kind)).sum::<f64>() / n;
            out.push((feature_key(ch, kind, f), mean));
        }
    }
    out
}

fn table_of(subjects: &[(String, Vec<(FeatureKey, f64)>)]) -> FeatureTable {
    let mut t = FeatureTable::default();
    for (_, feats) in subjects {
        for (k, v) in feats {
            t.push(k.clone(), *v);
        }
    }
    t
}

fn run_pipeline(cfg: &RunConfig, base: &Path, out_dir: &Path) -> Result<Vec<Output>> {
    let subjects = cohort(cfg, base)?;
    if !subjects.iter().any(|s| s.expert) || subjects.iter().all(|s| s.expert) {
        return Err(Error::arg("pipeline needs at least one expert and one novice"));
    }
    let window_s = cfg.window_s.unwrap_or(2.0);
    let step_s = cfg.step_s.unwrap_or(window_s);
    let features = cfg.features();

    let per_subject = subjects
        .iter()
        .map(|s| {
            let emg = emg_name(&s.rec, cfg.emg.as_deref())?;
            subject_windows(&s.rec, &emg, cfg, window_s, step_s)
        })
        .collect::<Result<Vec<_>>>()?;
    let schema = &per_subject[0][0].channels;
    if per_subject.iter().any(|w| &w[0].channels != schema) {
        return Err(Error::Schema("subjects do not share one EEG montage".into()));
    }

    let mut expert = Vec::new();
    let mut novice = Vec::new();
    for (s, windows) in subjects.iter().zip(&per_subject) {
        let entry = (s.id.clone(), mean_features(windows, &features));
        if s.expert {
            expert.push(entry);
        } else {
            novice.push(entry);
        }
    }
    let comparison = group_compare(&table_of(&expert), &table_of(&novice), alternative(cfg.one_sided))?;

    let mut outputs = vec![
        Output::file(out_dir.join("features.csv"), feature_csv(&expert, &novice)),
        Output::file(out_dir.join("comparison.csv"), comparison_csv(&comparison)),
    ];

    // One map per group and feature, min-max normalised over both groups.
    let mut maps: BTreeMap<String, Vec<(String, f64, f64)>> = BTreeMap::new();
    for row in &comparison {
        maps.entry(format!("{}_{}", row.key.band, row.key.metric))
            .or_default()
            .push((row.key.channel.clone(), row.median_expert, row.median_novice));
    }
    let mut map_cfg = cfg.topomap.clone();
    map_cfg.range.get_or_insert([0.0, 1.0]);
    for (name, values) in &maps {
        let ordered: Vec<&(String, f64, f64)> = schema
            .iter()
            .filter_map(|ch| values.iter().find(|(c, _, _)| c == ch))
            .collect();
        let lo = ordered
            .iter()
            .flat_map(|(_, e, n)| [*e, *n])
            .fold(f64::INFINITY, f64::min);
        let hi = ordered
            .iter()
            .flat_map(|(_, e, n)| [*e, *n])
            .fold(f64::NEG_INFINITY, f64::max);
        let norm = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        for (group, pick) in [("expert", 0), ("novice", 1)] {
            let group_values: Vec<(String, f64)> = ordered
                .iter()
                .map(|(c, e, n)| (c.clone(), norm(if pick == 0 { *e } else { *n })))
                .collect();
            let (ppm, grid) = topomap_outputs(&group_values, &map_cfg)?;
            outputs.push(Output::file(out_dir.join(format!("topomap_{name}_{group}.ppm")), ppm));
            outputs.push(Output::file(out_dir.join(format!("topomap_{name}_{group}.csv")), grid));
        }
    }

    let pooled: Vec<FeatureVector> = per_subject.iter().flatten().cloned().collect();
    let baseline = fit_baseline(&pooled)?;
    let mut classes = String::from("subject,group,windows,intuitive,intellectual,unknown,intuitive_fraction\n");
    for (s, windows) in subjects.iter().zip(&per_subject) {
        let mut counts = [0usize; 3];
        for fv in windows {
            counts[rule_classify(fv, &baseline)?.state as usize] += 1;
        }
        classes.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.id,
            if s.expert { "expert" } else { "novice" },
            windows.len(),
            counts[0],
            counts[1],
            counts[2],
            fmt9(counts[0] as f64 / windows.len() as f64)
        ));
    }
    outputs.push(Output::file(out_dir.join("classification.csv"), classes));
    let mut window_rows: Vec<(FeatureVector, Option<State>)> = Vec::new();
    for windows in &per_subject {
        window_rows.extend(windows.iter().map(|fv| (fv.clone(), None)));
    }
    outputs.push(Output::file(out_dir.join("windows.csv"), features_csv(&window_rows)?));
    let mut used = serde_json::to_string_pretty(cfg).expect("config serializes");
    used.push('\n');
    outputs.push(Output::file(out_dir.join("config.json"), used));
    Ok(outputs)
}

fn cmd_pipeline(c: PipelineCmd) -> Result<()> {
    let mut cfg = base_config(&c.config)?;
    if c.seed.is_some() {
        cfg.seed = c.seed;
    }
    if c.window_s.is_some() {
        cfg.window_s = c.window_s;
    }
    if c.step_s.is_some() {
        cfg.step_s = c.step_s;
    }
    if let Some(a) = c.alpha {
        cfg.alpha = a;
    }
    cfg.one_sided |= c.one_sided;
    cfg.validate()?;
    let outputs = run_pipeline(&cfg, &config_dir(&c.config), &c.output)?;
    commit(outputs)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(c) => cmd_preprocess(c),
        Command::Psd(c) => cmd_psd(c),
        Command::Cmc(c) => cmd_cmc(c),
        Command::Stats(c) => cmd_stats(c),
        Command::Topomap(c) => cmd_topomap(c),
        Command::Classify(c) => cmd_classify(c),
        Command::Train(c) => cmd_train(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Synth(c) => cmd_synth(c),
        Command::Pipeline(c) => cmd_pipeline(c),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_io() {
        EXIT_IO
    } else {
        EXIT_VALIDATION
    }
}

/// Cap rayon's global pool from `CMC_PIPELINE_THREADS`.
pub fn configure_threads() -> Result<()> {
    let Ok(text) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| Error::arg(format!("{THREADS_ENV} must be a positive integer, got {text:?}")))?;
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::debug!("thread pool already initialised");
    }
    Ok(())
}

/// Parse `argv`, run the subcommand and map the outcome to an exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

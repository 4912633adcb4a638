//! Operator-state recognition and the dual-loop assistance controller.
//!
//! Window features (alpha/beta power and beta/gamma corticomuscular
//! significant area per EEG channel) are labelled Intuitive, Intellectual
//! or Unknown, either by a vote over the four physiological signatures or
//! by a trained decision tree. The controller turns the label stream into
//! an assistance mode with hysteresis: Minimal assistance while the
//! operator works intuitively, DecisionSupport while they reason it out.

use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmc::{coherence, significant_area_with, ThresholdForm, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::numfmt::fmt9;
use crate::preprocess::{epoch, Epoch};
use crate::signal_io::{ChannelKind, Recording};
use crate::spectral::{band_power, welch_psd, BandSpec, WelchConfig};

/// Labels with confidence below this are reported as Unknown.
pub const DECISION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_HYSTERESIS_K: usize = 5;
pub const MIN_CALIBRATION: usize = 5;
/// Scale factor making the MAD a consistent estimate of a normal SD.
const MAD_TO_SD: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    AlphaPower,
    BetaPower,
    CmcBetaArea,
    CmcGammaArea,
}

impl FeatureKind {
    /// Per-channel order of the feature schema.
    pub const ALL: [FeatureKind; 4] = [
        FeatureKind::AlphaPower,
        FeatureKind::BetaPower,
        FeatureKind::CmcBetaArea,
        FeatureKind::CmcGammaArea,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::AlphaPower => "alpha_power",
            FeatureKind::BetaPower => "beta_power",
            FeatureKind::CmcBetaArea => "cmc_beta_area",
            FeatureKind::CmcGammaArea => "cmc_gamma_area",
        }
    }

    fn offset(self) -> usize {
        self as usize
    }
}

/// One physiological signature: the feature, the direction it moves in the
/// intuitive state (+1 higher, -1 lower), and the scalp region it is read
/// from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signature {
    pub kind: FeatureKind,
    pub intuitive_direction: f64,
    pub region: &'static [&'static str],
}

const FRONTO_PARIETAL: &[&str] = &["Fpz", "Fz", "F3", "F4", "Pz"];
// The 8-site montage has no left parietal electrode; C3 is its nearest site.
const CENTRAL: &[&str] = &["C3", "Cz", "C4"];

/// Intuitive state: more alpha, less beta over fronto-parietal sites, more
/// beta and gamma corticomuscular coherence over central sites.
pub const SIGNATURES: [Signature; 4] = [
    Signature {
        kind: FeatureKind::AlphaPower,
        intuitive_direction: 1.0,
        region: FRONTO_PARIETAL,
    },
    Signature {
        kind: FeatureKind::BetaPower,
        intuitive_direction: -1.0,
        region: FRONTO_PARIETAL,
    },
    Signature {
        kind: FeatureKind::CmcBetaArea,
        intuitive_direction: 1.0,
        region: CENTRAL,
    },
    Signature {
        kind: FeatureKind::CmcGammaArea,
        intuitive_direction: 1.0,
        region: CENTRAL,
    },
];

/// Features of one analysis window, channel-major: for each EEG channel
/// `alpha_power, beta_power, cmc_beta_area, cmc_gamma_area`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub channels: Vec<String>,
    pub values: Vec<f64>,
    pub window_start_s: f64,
}

impl FeatureVector {
    pub fn new(channels: Vec<String>, values: Vec<f64>, window_start_s: f64) -> Result<Self> {
        let expected = channels.len() * FeatureKind::ALL.len();
        if values.len() != expected {
            return Err(Error::arg(format!(
                "{} channels need {expected} features, got {}",
                channels.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::arg(format!("features must be finite and non-negative, got {v}")));
        }
        Ok(FeatureVector {
            channels,
            values,
            window_start_s,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, channel: usize, kind: FeatureKind) -> f64 {
        self.values[channel * FeatureKind::ALL.len() + kind.offset()]
    }

    pub fn names(&self) -> Vec<String> {
        feature_names(&self.channels)
    }

    fn same_schema(&self, channels: &[String]) -> bool {
        self.channels == channels
    }

    /// Channel means of each feature kind.
    pub fn summary(&self) -> FeatureSummary {
        let n = self.channels.len().max(1) as f64;
        let mean = |kind| (0..self.channels.len()).map(|c| self.get(c, kind)).sum::<f64>() / n;
        FeatureSummary {
            alpha_power: mean(FeatureKind::AlphaPower),
            beta_power: mean(FeatureKind::BetaPower),
            cmc_beta_area: mean(FeatureKind::CmcBetaArea),
            cmc_gamma_area: mean(FeatureKind::CmcGammaArea),
        }
    }
}

pub fn feature_names(channels: &[String]) -> Vec<String> {
    channels
        .iter()
        .flat_map(|c| FeatureKind::ALL.iter().map(move |k| format!("{c}.{}", k.as_str())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub alpha_power: f64,
    pub beta_power: f64,
    pub cmc_beta_area: f64,
    pub cmc_gamma_area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    Intuitive = 0,
    Intellectual = 1,
    Unknown = 2,
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            State::Intuitive => "Intuitive",
            State::Intellectual => "Intellectual",
            State::Unknown => "Unknown",
        })
    }
}

impl std::str::FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "intuitive" => Ok(State::Intuitive),
            "intellectual" => Ok(State::Intellectual),
            "unknown" => Ok(State::Unknown),
            _ => Err(Error::arg(format!("unknown state {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateLabel {
    pub state: State,
    pub confidence: f64,
}

impl StateLabel {
    pub fn unknown() -> Self {
        StateLabel {
            state: State::Unknown,
            confidence: 0.0,
        }
    }
}

/// Bands and coherence settings for window feature extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub alpha_band: BandSpec,
    pub beta_band: BandSpec,
    pub gamma_band: BandSpec,
    /// Significance level of the coherence threshold.
    pub significance: f64,
    pub threshold_form: ThresholdForm,
    /// Coherence segment length as a fraction of the window.
    pub segment_fraction: f64,
    pub overlap: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            alpha_band: BandSpec::alpha(),
            beta_band: BandSpec::beta(),
            gamma_band: BandSpec::gamma(),
            significance: DEFAULT_ALPHA,
            threshold_form: ThresholdForm::Printed,
            segment_fraction: 0.125,
            overlap: 0.5,
        }
    }
}

/// Features of one aligned EEG/EMG window pair. Every channel of
/// `eeg_window` is an EEG channel; the first channel of `emg_window` is
/// the muscle reference.
pub fn extract_features(eeg_window: &Epoch, emg_window: &Epoch, cfg: &FeatureConfig) -> Result<FeatureVector> {
    if eeg_window.start_sample != emg_window.start_sample
        || eeg_window.len() != emg_window.len()
        || eeg_window.sample_rate_hz != emg_window.sample_rate_hz
    {
        return Err(Error::arg("EEG and EMG windows are not aligned"));
    }
    let emg = emg_window
        .columns
        .first()
        .ok_or_else(|| Error::arg("EMG window has no channel"))?;
    if let Some(ch) = eeg_window.channels.iter().find(|c| c.kind != ChannelKind::Eeg) {
        return Err(Error::arg(format!("channel {} in the EEG window is not EEG", ch.name)));
    }
    let fs = eeg_window.sample_rate_hz;
    let n = eeg_window.len();
    let psd_cfg = WelchConfig::new(n, 0.0, fs)?;
    let coh_cfg = WelchConfig::fraction(n, cfg.segment_fraction, cfg.overlap, fs)?;
    let mut values = Vec::with_capacity(eeg_window.channels.len() * FeatureKind::ALL.len());
    for col in &eeg_window.columns {
        let psd = welch_psd(col, &psd_cfg)?;
        let coh = coherence(col, emg, &coh_cfg)?;
        values.push(band_power(&psd, &cfg.alpha_band)?);
        values.push(band_power(&psd, &cfg.beta_band)?);
        values
            .push(significant_area_with(&coh, &cfg.beta_band, cfg.significance, cfg.threshold_form)?.significant_area);
        values
            .push(significant_area_with(&coh, &cfg.gamma_band, cfg.significance, cfg.threshold_form)?.significant_area);
    }
    FeatureVector::new(
        eeg_window.channels.iter().map(|c| c.name.clone()).collect(),
        values,
        eeg_window.start_s(),
    )
}

/// Per-feature robust reference level and spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub channels: Vec<String>,
    pub medians: Vec<f64>,
    /// 1.4826 · MAD.
    pub scales: Vec<f64>,
    /// False where the calibration spread was zero.
    pub usable: Vec<bool>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn fit_baseline(calibration: &[FeatureVector]) -> Result<Baseline> {
    if calibration.len() < MIN_CALIBRATION {
        return Err(Error::arg(format!(
            "baseline needs at least {MIN_CALIBRATION} vectors, got {}",
            calibration.len()
        )));
    }
    let channels = calibration[0].channels.clone();
    if calibration.iter().any(|fv| !fv.same_schema(&channels)) {
        return Err(Error::arg("calibration vectors do not share one schema"));
    }
    let dim = calibration[0].len();
    let mut medians = Vec::with_capacity(dim);
    let mut scales = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut col: Vec<f64> = calibration.iter().map(|fv| fv.values[j]).collect();
        let m = median(&mut col);
        let mut dev: Vec<f64> = col.iter().map(|v| (v - m).abs()).collect();
        medians.push(m);
        scales.push(MAD_TO_SD * median(&mut dev));
    }
    let usable: Vec<bool> = scales.iter().map(|&s| s > 0.0).collect();
    let dropped = usable.iter().filter(|u| !**u).count();
    if dropped > 0 {
        log::warn!("baseline: {dropped} of {dim} features have zero spread and are ignored");
    }
    Ok(Baseline {
        channels,
        medians,
        scales,
        usable,
    })
}

/// Vote tally behind a rule decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleVotes {
    /// One entry per signature: 1 intuitive, 0 intellectual, 0.5 abstain.
    pub per_signature: [f64; 4],
}

impl RuleVotes {
    pub fn total(&self) -> f64 {
        self.per_signature.iter().sum()
    }
}

/// Sign votes on the four signatures.
pub fn rule_votes(fv: &FeatureVector, baseline: &Baseline) -> Result<RuleVotes> {
    if !fv.same_schema(&baseline.channels) || fv.len() != baseline.medians.len() {
        return Err(Error::arg("feature vector schema does not match the baseline"));
    }
    let k = FeatureKind::ALL.len();
    let mut per_signature = [0.5; 4];
    for (slot, sig) in per_signature.iter_mut().zip(&SIGNATURES) {
        let mut tally = 0.0;
        for (c, name) in fv.channels.iter().enumerate() {
            if !sig.region.contains(&name.as_str()) {
                continue;
            }
            let j = c * k + sig.kind.offset();
            if !baseline.usable[j] {
                continue;
            }
            let z = (fv.values[j] - baseline.medians[j]) / baseline.scales[j];
            tally += if z > 0.0 {
                1.0
            } else if z < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        let direction = tally * sig.intuitive_direction;
        *slot = if direction > 0.0 {
            1.0
        } else if direction < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    Ok(RuleVotes { per_signature })
}

/// Intuitive with at least 3 of 4 signature votes, Intellectual with at most
/// 1, otherwise Unknown; confidence `|votes - 2| / 2`.
pub fn rule_classify(fv: &FeatureVector, baseline: &Baseline) -> Result<StateLabel> {
    let votes = rule_votes(fv, baseline)?.total();
    let confidence = (votes - 2.0).abs() / 2.0;
    let state = if confidence < DECISION_THRESHOLD {
        State::Unknown
    } else if votes > 2.0 {
        State::Intuitive
    } else {
        State::Intellectual
    };
    Ok(StateLabel { state, confidence })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        /// Child for `value <= threshold`.
        left: usize,
        right: usize,
    },
    Leaf {
        class: State,
        purity: f64,
        n_samples: usize,
    },
}

/// Depth-limited binary tree grown greedily on Gini impurity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
    pub max_depth: usize,
    pub feature_names: Vec<String>,
    pub seed: u64,
    pub impurity: String,
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[0] as f64 / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

fn class_index(s: State) -> Result<usize> {
    match s {
        State::Intuitive => Ok(0),
        State::Intellectual => Ok(1),
        State::Unknown => Err(Error::arg("training labels must be Intuitive or Intellectual")),
    }
}

struct Grower<'a> {
    rows: &'a [&'a [f64]],
    labels: &'a [usize],
    max_depth: usize,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let mut c = [0, 0];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    /// Best (feature, threshold) by weighted child Gini; ties go to the
    /// lowest feature index, then the lowest threshold.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n_features = self.rows[idx[0]].len();
        let total = self.counts(idx);
        let n = idx.len() as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..n_features {
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]));
            let mut left = [0usize, 0usize];
            for w in 0..order.len() - 1 {
                left[self.labels[order[w]]] += 1;
                let (lo, hi) = (self.rows[order[w]][f], self.rows[order[w + 1]][f]);
                if lo == hi {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let nl = (w + 1) as f64;
                let score = (nl * gini(left) + (n - nl) * gini(right)) / n;
                let threshold = lo + (hi - lo) / 2.0;
                if best.is_none_or(|(s, _, _)| score < s - 1e-12) {
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn leaf(&mut self, counts: [usize; 2]) -> usize {
        let (class, majority) = if counts[1] > counts[0] {
            (State::Intellectual, counts[1])
        } else {
            (State::Intuitive, counts[0])
        };
        let n = counts[0] + counts[1];
        self.nodes.push(TreeNode::Leaf {
            class,
            purity: majority as f64 / n as f64,
            n_samples: n,
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        if depth >= self.max_depth || counts[0] == 0 || counts[1] == 0 {
            return self.leaf(counts);
        }
        let Some((feature, threshold)) = self.best_split(&idx) else {
            return self.leaf(counts);
        };
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            class: State::Unknown,
            purity: 0.0,
            n_samples: 0,
        });
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.rows[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[slot] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

/// Labelled training example.
pub type Example = (FeatureVector, State);

pub fn train_tree(dataset: &[Example], max_depth: usize, seed: u64) -> Result<TreeModel> {
    if dataset.is_empty() {
        return Err(Error::arg("cannot train on an empty dataset"));
    }
    if max_depth < 1 {
        return Err(Error::arg("max_depth must be at least 1"));
    }
    let channels = &dataset[0].0.channels;
    if dataset.iter().any(|(fv, _)| !fv.same_schema(channels)) {
        return Err(Error::arg("training vectors do not share one schema"));
    }
    let labels = dataset
        .iter()
        .map(|(_, s)| class_index(*s))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<&[f64]> = dataset.iter().map(|(fv, _)| fv.values.as_slice()).collect();
    let mut g = Grower {
        rows: &rows,
        labels: &labels,
        max_depth,
        nodes: Vec::new(),
    };
    g.grow((0..dataset.len()).collect(), 0);
    Ok(TreeModel {
        nodes: g.nodes,
        max_depth,
        feature_names: feature_names(channels),
        seed,
        impurity: "gini".into(),
    })
}

impl TreeModel {
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// EEG channels of the feature schema the tree was trained on.
    pub fn channels(&self) -> Result<Vec<String>> {
        let names: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        channels_from_header(&names)
            .ok_or_else(|| Error::Schema("tree feature names do not follow the channel schema".into()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tree serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TreeModel = serde_json::from_str(text).map_err(|e| Error::Format {
            file: "tree model".into(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Schema("tree has no nodes".into()));
        }
        for node in &self.nodes {
            if let TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } = node
            {
                if *feature >= self.feature_names.len()
                    || !threshold.is_finite()
                    || *left >= self.nodes.len()
                    || *right >= self.nodes.len()
                {
                    return Err(Error::Schema("tree split refers outside the model".into()));
                }
            }
        }
        if self.depth() > self.max_depth {
            return Err(Error::Schema("tree is deeper than its max_depth".into()));
        }
        Ok(())
    }
}

/// Leaf class, confidence = leaf purity.
pub fn tree_classify(model: &TreeModel, fv: &FeatureVector) -> Result<StateLabel> {
    if fv.names() != model.feature_names {
        return Err(Error::arg("feature vector schema does not match the tree"));
    }
    let mut i = 0;
    loop {
        match &model.nodes[i] {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                i = if fv.values[*feature] <= *threshold {
                    *left
                } else {
                    *right
                };
            }
            TreeNode::Leaf { class, purity, .. } => {
                return Ok(StateLabel {
                    state: *class,
                    confidence: *purity,
                })
            }
        }
    }
}

/// Mean held-out accuracy over `folds` folds of a seeded shuffle.
pub fn kfold_accuracy(dataset: &[Example], folds: usize, max_depth: usize, seed: u64) -> Result<f64> {
    if folds < 2 || dataset.len() < folds {
        return Err(Error::arg("need at least 2 folds and one example per fold"));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut correct = 0usize;
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..order.len()).partition(|&i| i % folds == f);
        let train_set: Vec<Example> = train.iter().map(|&i| dataset[order[i]].clone()).collect();
        let model = train_tree(&train_set, max_depth, seed)?;
        for &i in &test {
            let (fv, truth) = &dataset[order[i]];
            if tree_classify(&model, fv)?.state == *truth {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssistanceMode {
    Minimal,
    DecisionSupport,
}

impl fmt::Display for AssistanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssistanceMode::Minimal => "Minimal",
            AssistanceMode::DecisionSupport => "DecisionSupport",
        })
    }
}

impl AssistanceMode {
    fn preferred_for(state: State) -> Option<Self> {
        match state {
            State::Intuitive => Some(AssistanceMode::Minimal),
            State::Intellectual => Some(AssistanceMode::DecisionSupport),
            State::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerState {
    pub mode: AssistanceMode,
    /// Consecutive labels contradicting `mode`.
    pub streak: usize,
    pub hysteresis_k: usize,
}

impl ControllerState {
    pub fn new(mode: AssistanceMode, hysteresis_k: usize) -> Result<Self> {
        if hysteresis_k < 1 {
            return Err(Error::arg("hysteresis_k must be at least 1"));
        }
        Ok(ControllerState {
            mode,
            streak: 0,
            hysteresis_k,
        })
    }
}

/// Advance the controller by one label. A switch needs `hysteresis_k`
/// contradicting labels in a row; a confirming label clears the streak and
/// Unknown leaves it untouched.
pub fn step_controller(state: ControllerState, label: &StateLabel) -> (ControllerState, AssistanceMode) {
    let mut next = state;
    match AssistanceMode::preferred_for(label.state) {
        None => {}
        Some(m) if m == state.mode => next.streak = 0,
        Some(m) => {
            next.streak += 1;
            if next.streak >= state.hysteresis_k {
                next.mode = m;
                next.streak = 0;
            }
        }
    }
    (next, next.mode)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Rule(Baseline),
    Tree(TreeModel),
}

impl Classifier {
    pub fn classify(&self, fv: &FeatureVector) -> Result<StateLabel> {
        match self {
            Classifier::Rule(b) => rule_classify(fv, b),
            Classifier::Tree(t) => tree_classify(t, fv),
        }
    }
}

/// Where simulation windows come from.
#[derive(Debug, Clone, Copy)]
pub enum StreamSource<'a> {
    /// Raw signals: every EEG channel against the named EMG channel.
    Recording { rec: &'a Recording, emg_channel: &'a str },
    /// Precomputed window features.
    Features(&'a [FeatureVector]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub window_s: f64,
    pub step_s: f64,
    pub hysteresis_k: usize,
    pub initial_mode: AssistanceMode,
    pub features: FeatureConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            window_s: 2.0,
            step_s: 0.02,
            hysteresis_k: DEFAULT_HYSTERESIS_K,
            initial_mode: AssistanceMode::Minimal,
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub t_s: f64,
    pub label: StateLabel,
    pub mode: AssistanceMode,
    pub summary: FeatureSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub records: Vec<SimRecord>,
    /// Windows whose processing took longer than the window step.
    pub overruns: usize,
}

#[derive(Serialize)]
struct LogLine<'a> {
    t_s: f64,
    label: String,
    confidence: f64,
    mode: &'a str,
}

impl SimulationLog {
    pub fn modes(&self) -> Vec<AssistanceMode> {
        self.records.iter().map(|r| r.mode).collect()
    }

    /// Indices of records whose mode differs from the previous record (or
    /// from `initial` for the first record).
    pub fn switch_indices(&self, initial: AssistanceMode) -> Vec<usize> {
        let mut prev = initial;
        let mut out = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.mode != prev {
                out.push(i);
                prev = r.mode;
            }
        }
        out
    }

    /// Newline-delimited JSON, one `{t_s, label, confidence, mode}` per window.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let mode = r.mode.to_string();
            let line = LogLine {
                t_s: r.t_s,
                label: r.label.state.to_string(),
                confidence: r.label.confidence,
                mode: &mode,
            };
            out.push_str(&serde_json::to_string(&line).expect("log line serializes"));
            out.push('\n');
        }
        out
    }
}

/// Window features of a recording on the simulation grid.
pub fn recording_features(rec: &Recording, emg_channel: &str, cfg: &SimulationConfig) -> Result<Vec<FeatureVector>> {
    let eeg = rec.select_kind(ChannelKind::Eeg)?;
    if eeg.n_channels() == 0 {
        return Err(Error::arg("recording has no EEG channels"));
    }
    let emg = rec.select(&[emg_channel])?;
    let eeg_epochs = epoch(&eeg, cfg.window_s, cfg.step_s)?;
    let emg_epochs = epoch(&emg, cfg.window_s, cfg.step_s)?;
    eeg_epochs
        .iter()
        .zip(&emg_epochs)
        .map(|(e, m)| extract_features(e, m, &cfg.features))
        .collect()
}

/// Process windows in order: features, label, controller step. Each window
/// should finish within one step of wall time; overruns are counted and
/// logged, never dropped.
pub fn run_simulation(
    source: StreamSource<'_>,
    classifier: &Classifier,
    cfg: &SimulationConfig,
) -> Result<SimulationLog> {
    let mut controller = ControllerState::new(cfg.initial_mode, cfg.hysteresis_k)?;
    let budget = Duration::from_secs_f64(cfg.step_s.max(0.0));
    let mut records = Vec::new();
    let mut overruns = 0;

    let mut process = |fv: &FeatureVector, started: Instant| -> Result<()> {
        let label = classifier.classify(fv)?;
        let (next, mode) = step_controller(controller, &label);
        controller = next;
        records.push(SimRecord {
            t_s: fv.window_start_s,
            label,
            mode,
            summary: fv.summary(),
        });
        if started.elapsed() > budget {
            overruns += 1;
            log::warn!("window at {:.3} s exceeded its {:?} budget", fv.window_start_s, budget);
        }
        Ok(())
    };

    match source {
        StreamSource::Features(stream) => {
            if stream.is_empty() {
                return Err(Error::arg("feature stream is empty"));
            }
            for fv in stream {
                process(fv, Instant::now())?;
            }
        }
        StreamSource::Recording { rec, emg_channel } => {
            let eeg = rec.select_kind(ChannelKind::Eeg)?;
            if eeg.n_channels() == 0 {
                return Err(Error::arg("recording has no EEG channels"));
            }
            let emg = rec.select(&[emg_channel])?;
            let eeg_epochs = epoch(&eeg, cfg.window_s, cfg.step_s)?;
            let emg_epochs = epoch(&emg, cfg.window_s, cfg.step_s)?;
            for (e, m) in eeg_epochs.iter().zip(&emg_epochs) {
                let started = Instant::now();
                let fv = extract_features(e, m, &cfg.features)?;
                process(&fv, started)?;
            }
        }
    }
    Ok(SimulationLog { records, overruns })
}

/// Window features as CSV: `t_s,label,<channel>.<feature>...`; the label
/// cell is empty for unlabelled rows.
pub fn features_csv(rows: &[(FeatureVector, Option<State>)]) -> Result<String> {
    let Some((first, _)) = rows.first() else {
        return Err(Error::arg("no feature rows to write"));
    };
    if rows.iter().any(|(fv, _)| !fv.same_schema(&first.channels)) {
        return Err(Error::arg("feature rows do not share one schema"));
    }
    let mut out = String::from("t_s,label");
    for name in first.names() {
        out.push(',');
        out.push_str(&name);
    }
    out.push('\n');
    for (fv, label) in rows {
        out.push_str(&fmt9(fv.window_start_s));
        out.push(',');
        if let Some(l) = label {
            out.push_str(&l.to_string());
        }
        for v in &fv.values {
            out.push(',');
            out.push_str(&fmt9(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

fn channels_from_header(names: &[&str]) -> Option<Vec<String>> {
    let k = FeatureKind::ALL.len();
    if names.is_empty() || !names.len().is_multiple_of(k) {
        return None;
    }
    let channels: Vec<String> = names
        .chunks(k)
        .map(|chunk| chunk[0].split_once('.').map(|(c, _)| c.to_string()))
        .collect::<Option<_>>()?;
    (feature_names(&channels) == names).then_some(channels)
}

pub fn read_features_csv(path: &Path) -> Result<Vec<(FeatureVector, Option<State>)>> {
    let file = path.display().to_string();
    let format = |line: u64, message: String| Error::Format {
        file: file.clone(),
        line,
        message,
    };
    let handle = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(handle));
    let header = reader.headers().map_err(|e| format(1, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 2 || cols[0] != "t_s" || cols[1] != "label" {
        return Err(Error::Schema(format!("{file}: header must start with t_s,label")));
    }
    let channels = channels_from_header(&cols[2..])
        .ok_or_else(|| Error::Schema(format!("{file}: feature columns do not follow the channel schema")))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| format(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |cell: &str| {
            cell.trim()
                .parse::<f64>()
                .map_err(|_| format(line, format!("not a number: {cell:?}")))
        };
        let t = num(&record[0])?;
        let label = match record[1].trim() {
            "" => None,
            text => Some(text.parse::<State>().map_err(|e| format(line, e.to_string()))?),
        };
        let values = record.iter().skip(2).map(num).collect::<Result<Vec<_>>>()?;
        let fv = FeatureVector::new(channels.clone(), values, t).map_err(|e| format(line, e.to_string()))?;
        rows.push((fv, label));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{file} holds no feature rows")));
    }
    Ok(rows)
}

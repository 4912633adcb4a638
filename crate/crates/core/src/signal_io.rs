//! Recordings on disk: a JSON metadata file next to a CSV sample table.
//!
//! Metadata (`version` 1):
//!
//! ```json
//! { "version": 1, "sample_rate_hz": 256.0,
//!   "channels": [ { "name": "C3", "kind": "EEG", "position": [x, y, z] },
//!                 { "name": "EMG1", "kind": "EMG" } ],
//!   "markers": [ { "name": "trenching", "start_sample": 0, "end_sample": 256 } ] }
//! ```
//!
//! The CSV header repeats the channel names in metadata order; each further
//! row is one sample instant. Values are written with nine significant
//! digits, LF line endings, no trailing comma.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::fmt9;

pub const FORMAT_VERSION: u32 = 1;
const UNIT_TOLERANCE: f64 = 1e-6;

/// The eight scalp sites of the study montage.
pub const PAPER_MONTAGE: [&str; 8] = ["Fpz", "Fz", "F3", "F4", "C3", "Cz", "C4", "Pz"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    #[serde(rename = "EEG")]
    Eeg,
    #[serde(rename = "EMG")]
    Emg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub name: String,
    pub kind: ChannelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
}

impl ChannelMeta {
    /// EEG channel placed at its standard 10–20 site.
    pub fn eeg(name: &str) -> Result<Self> {
        let position = standard_position(name)
            .ok_or_else(|| Error::NotFound(format!("no standard position for electrode {name}")))?;
        Ok(ChannelMeta {
            name: name.to_string(),
            kind: ChannelKind::Eeg,
            position: Some(position),
        })
    }

    pub fn emg(name: &str) -> Self {
        ChannelMeta {
            name: name.to_string(),
            kind: ChannelKind::Emg,
            position: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub name: String,
    pub start_sample: usize,
    pub end_sample: usize,
}

/// Multichannel, uniformly sampled recording. Samples are stored one
/// column per channel, in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    sample_rate_hz: f64,
    channels: Vec<ChannelMeta>,
    columns: Vec<Vec<f64>>,
    markers: Vec<Marker>,
}

impl Recording {
    /// Build a recording, checking every invariant.
    pub fn new(
        sample_rate_hz: f64,
        channels: Vec<ChannelMeta>,
        columns: Vec<Vec<f64>>,
        markers: Vec<Marker>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::arg(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channels.len() != columns.len() {
            return Err(Error::Schema(format!(
                "{} channels declared but {} sample columns given",
                channels.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for ch in &channels {
            if !seen.insert(ch.name.as_str()) {
                return Err(Error::Schema(format!("duplicate channel name {}", ch.name)));
            }
            match (ch.kind, ch.position) {
                (ChannelKind::Eeg, None) => {
                    return Err(Error::Schema(format!("EEG channel {} has no position", ch.name)))
                }
                (ChannelKind::Eeg, Some(p)) => {
                    let norm2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
                    if !norm2.is_finite() || (norm2 - 1.0).abs() > UNIT_TOLERANCE {
                        return Err(Error::Schema(format!(
                            "EEG channel {} position is not on the unit sphere (|p|^2 = {norm2})",
                            ch.name
                        )));
                    }
                }
                (ChannelKind::Emg, Some(_)) => {
                    return Err(Error::Schema(format!(
                        "EMG channel {} must not carry a position",
                        ch.name
                    )))
                }
                (ChannelKind::Emg, None) => {}
            }
        }
        let n = columns.first().map_or(0, Vec::len);
        for (ch, col) in channels.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::Schema(format!(
                    "channel {} has {} samples, expected {n}",
                    ch.name,
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "non-finite sample at row {i} of channel {}",
                    ch.name
                )));
            }
        }
        for m in &markers {
            if !(m.start_sample < m.end_sample && m.end_sample <= n) {
                return Err(Error::Schema(format!(
                    "marker {} [{}, {}) outside 0..{n}",
                    m.name, m.start_sample, m.end_sample
                )));
            }
        }
        Ok(Recording {
            sample_rate_hz,
            channels,
            columns,
            markers,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> &[ChannelMeta] {
        &self.channels
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn n_samples(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    /// Sample column of channel `idx`.
    pub fn column(&self, idx: usize) -> &[f64] {
        &self.columns[idx]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn sample(&self, row: usize, channel: usize) -> f64 {
        self.columns[channel][row]
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::NotFound(format!("channel {name}")))
    }

    pub fn channel_by_name(&self, name: &str) -> Result<&[f64]> {
        Ok(self.column(self.channel_index(name)?))
    }

    /// Same metadata and markers, new sample columns.
    pub(crate) fn with_columns(&self, columns: Vec<Vec<f64>>) -> Result<Self> {
        Recording::new(
            self.sample_rate_hz,
            self.channels.clone(),
            columns,
            self.markers.clone(),
        )
    }

    /// Sub-recording holding only the named channels, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let mut channels = Vec::with_capacity(names.len());
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let idx = self.channel_index(name)?;
            channels.push(self.channels[idx].clone());
            columns.push(self.columns[idx].clone());
        }
        Recording::new(self.sample_rate_hz, channels, columns, self.markers.clone())
    }

    /// Sub-recording holding every channel of `kind`.
    pub fn select_kind(&self, kind: ChannelKind) -> Result<Self> {
        let names: Vec<&str> = self
            .channels
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.name.as_str())
            .collect();
        self.select(&names)
    }

    /// Rows `[start, end)`, with markers clipped and rebased to the slice.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if !(start < end && end <= self.n_samples()) {
            return Err(Error::arg(format!(
                "row range [{start}, {end}) outside 0..{}",
                self.n_samples()
            )));
        }
        let columns = self.columns.iter().map(|c| c[start..end].to_vec()).collect();
        let markers = self
            .markers
            .iter()
            .filter_map(|m| {
                let s = m.start_sample.max(start);
                let e = m.end_sample.min(end);
                (s < e).then(|| Marker {
                    name: m.name.clone(),
                    start_sample: s - start,
                    end_sample: e - start,
                })
            })
            .collect();
        Recording::new(self.sample_rate_hz, self.channels.clone(), columns, markers)
    }
}

/// Rows covered by the marker named `marker_name`.
pub fn slice_by_marker(rec: &Recording, marker_name: &str) -> Result<Recording> {
    let mut hits = rec.markers.iter().filter(|m| m.name == marker_name);
    let marker = hits
        .next()
        .ok_or_else(|| Error::NotFound(format!("marker {marker_name}")))?;
    if hits.next().is_some() {
        return Err(Error::Ambiguous(format!(
            "marker name {marker_name} occurs more than once"
        )));
    }
    rec.slice_rows(marker.start_sample, marker.end_sample)
}

/// Idealised spherical 10–20 coordinates: x toward the right ear, y toward
/// the nasion, z through the vertex. Nasion, inion and preauricular points
/// sit on the equator, so 10% of an arc is 18 degrees.
pub fn standard_position(name: &str) -> Option<[f64; 3]> {
    let deg = std::f64::consts::PI / 180.0;
    // (polar angle from vertex, azimuth from the nasion direction, positive toward the left)
    let polar_azimuth = |polar: f64, azimuth: f64| -> [f64; 3] {
        let (sp, cp) = (polar * deg).sin_cos();
        let (sa, ca) = (azimuth * deg).sin_cos();
        [-sp * sa, sp * ca, cp]
    };
    let midpoint = |a: [f64; 3], b: [f64; 3]| -> [f64; 3] {
        let m = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
        let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
        [m[0] / n, m[1] / n, m[2] / n]
    };
    let p = match name.to_ascii_lowercase().as_str() {
        "fpz" => polar_azimuth(72.0, 0.0),
        "fp1" => polar_azimuth(72.0, 18.0),
        "fp2" => polar_azimuth(72.0, -18.0),
        "fz" => polar_azimuth(36.0, 0.0),
        "cz" => [0.0, 0.0, 1.0],
        "pz" => polar_azimuth(36.0, 180.0),
        "oz" => polar_azimuth(72.0, 180.0),
        "c3" => polar_azimuth(36.0, 90.0),
        "c4" => polar_azimuth(36.0, -90.0),
        "t3" | "t7" => polar_azimuth(72.0, 90.0),
        "t4" | "t8" => polar_azimuth(72.0, -90.0),
        "f7" => polar_azimuth(72.0, 54.0),
        "f8" => polar_azimuth(72.0, -54.0),
        "p7" | "t5" => polar_azimuth(72.0, 126.0),
        "p8" | "t6" => polar_azimuth(72.0, -126.0),
        "f3" => midpoint(polar_azimuth(36.0, 0.0), polar_azimuth(72.0, 54.0)),
        "f4" => midpoint(polar_azimuth(36.0, 0.0), polar_azimuth(72.0, -54.0)),
        "p3" => midpoint(polar_azimuth(36.0, 180.0), polar_azimuth(72.0, 126.0)),
        "p4" => midpoint(polar_azimuth(36.0, 180.0), polar_azimuth(72.0, -126.0)),
        _ => return None,
    };
    Some(p)
}

#[derive(Debug, Serialize, Deserialize)]
struct MetadataFile {
    version: u32,
    sample_rate_hz: f64,
    channels: Vec<ChannelMeta>,
    #[serde(default)]
    markers: Vec<Marker>,
}

/// Metadata and data paths for a recording named by `input`: a `.csv` path
/// pairs with the sibling `.json`, anything else is used as a stem.
pub fn recording_paths(input: &Path) -> (PathBuf, PathBuf) {
    match input.extension().and_then(|e| e.to_str()) {
        Some("csv") => (input.with_extension("json"), input.to_path_buf()),
        Some("json") => (input.to_path_buf(), input.with_extension("csv")),
        _ => {
            let stem = input.as_os_str().to_owned();
            let mut meta = stem.clone();
            meta.push(".json");
            let mut data = stem;
            data.push(".csv");
            (PathBuf::from(meta), PathBuf::from(data))
        }
    }
}

pub fn load_recording(metadata_path: &Path, data_path: &Path) -> Result<Recording> {
    let meta_text = fs::read_to_string(metadata_path).map_err(|e| Error::io(metadata_path, e))?;
    let meta: MetadataFile = serde_json::from_str(&meta_text).map_err(|e| Error::Format {
        file: metadata_path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if meta.version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported metadata version {} (expected {FORMAT_VERSION})",
            meta.version
        )));
    }
    let mut channels = meta.channels;
    for ch in &mut channels {
        if ch.kind == ChannelKind::Eeg && ch.position.is_none() {
            ch.position = standard_position(&ch.name);
        }
    }

    let file = fs::File::open(data_path).map_err(|e| Error::io(data_path, e))?;
    let data_name = data_path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(std::io::BufReader::new(file));
    let header = reader.headers().map_err(|e| csv_error(&data_name, e))?.clone();
    let expected: Vec<&str> = channels.iter().map(|c| c.name.as_str()).collect();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "data header {got:?} does not match metadata channel order {expected:?}"
        )));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); channels.len()];
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(&data_name, e))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != channels.len() {
            return Err(Error::Format {
                file: data_name.clone(),
                line,
                message: format!("expected {} fields, found {}", channels.len(), row.len()),
            });
        }
        for (col, field) in columns.iter_mut().zip(row.iter()) {
            let v: f64 = field.parse().map_err(|_| Error::Format {
                file: data_name.clone(),
                line,
                message: format!("cannot parse {field:?} as a decimal number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value {field:?} at line {line}")));
            }
            col.push(v);
        }
    }
    Recording::new(meta.sample_rate_hz, channels, columns, meta.markers)
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Format {
        file: file.to_string(),
        line,
        message: e.to_string(),
    }
}

/// Metadata document for `rec`, exactly as written by [`save_recording`].
pub fn metadata_json(rec: &Recording) -> String {
    let meta = MetadataFile {
        version: FORMAT_VERSION,
        sample_rate_hz: rec.sample_rate_hz,
        channels: rec.channels.clone(),
        markers: rec.markers.clone(),
    };
    let mut s = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    s.push('\n');
    s
}

/// CSV body for `rec`, exactly as written by [`save_recording`].
pub fn data_csv(rec: &Recording) -> String {
    let n_ch = rec.n_channels();
    let mut out = String::with_capacity(rec.n_samples() * n_ch * 12 + 64);
    let names: Vec<&str> = rec.channels.iter().map(|c| c.name.as_str()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for row in 0..rec.n_samples() {
        for c in 0..n_ch {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&fmt9(rec.columns[c][row]));
        }
        out.push('\n');
    }
    out
}

pub fn save_recording(rec: &Recording, metadata_path: &Path, data_path: &Path) -> Result<()> {
    write_text(metadata_path, &metadata_json(rec))?;
    write_text(data_path, &data_csv(rec))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

use cmc_core::signal_io::{
    data_csv, load_recording, metadata_json, save_recording, slice_by_marker, ChannelMeta, Marker, Recording,
    PAPER_MONTAGE,
};
use cmc_core::Error;
use proptest::prelude::*;

fn recording(n_eeg: usize, with_emg: bool, columns: Vec<Vec<f64>>, markers: Vec<Marker>) -> Recording {
    let mut channels: Vec<ChannelMeta> = PAPER_MONTAGE[..n_eeg]
        .iter()
        .map(|n| ChannelMeta::eeg(n).unwrap())
        .collect();
    if with_emg {
        channels.push(ChannelMeta::emg("EMG1"));
    }
    Recording::new(256.0, channels, columns, markers).unwrap()
}

fn arb_recording() -> impl Strategy<Value = Recording> {
    (1usize..=4, any::<bool>(), 1usize..60).prop_flat_map(|(n_eeg, emg, rows)| {
        let n_ch = n_eeg + emg as usize;
        let cols = prop::collection::vec(prop::collection::vec(-5000.0f32..5000.0, rows), n_ch);
        let marker = (0..rows, 1..=rows).prop_map(|(a, b)| (a.min(b - 1), b));
        (cols, prop::collection::vec(marker, 0..3)).prop_map(move |(cols, spans)| {
            let columns = cols
                .into_iter()
                .map(|c| c.into_iter().map(f64::from).collect())
                .collect();
            let markers = spans
                .into_iter()
                .enumerate()
                .map(|(i, (s, e))| Marker {
                    name: format!("m{i}"),
                    start_sample: s,
                    end_sample: e,
                })
                .collect();
            recording(n_eeg, emg, columns, markers)
        })
    })
}

fn save_load(rec: &Recording) -> Recording {
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = (dir.path().join("r.json"), dir.path().join("r.csv"));
    save_recording(rec, &m, &d).unwrap();
    load_recording(&m, &d).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn single_precision_samples_round_trip_exactly(rec in arb_recording()) {
        let back = save_load(&rec);
        prop_assert_eq!(back.channels(), rec.channels());
        prop_assert_eq!(back.markers(), rec.markers());
        prop_assert_eq!(back.sample_rate_hz(), rec.sample_rate_hz());
        for (a, b) in rec.columns().iter().zip(back.columns()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!((*x as f32).to_bits(), (*y as f32).to_bits());
            }
        }
    }

    #[test]
    fn double_precision_samples_round_trip_to_nine_digits(
        col in prop::collection::vec(-1e4f64..1e4, 1..80)
    ) {
        let rec = recording(1, false, vec![col], vec![]);
        let back = save_load(&rec);
        for (x, y) in rec.column(0).iter().zip(back.column(0)) {
            prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn slice_of_slice_is_direct_slice(
        rows in 4usize..80,
        cuts in prop::collection::vec(0.0f64..1.0, 4)
    ) {
        let col: Vec<f64> = (0..rows).map(|i| i as f64).collect();
        let rec = recording(1, true, vec![col.clone(), col], vec![Marker { name: "m".into(), start_sample: 1, end_sample: rows }]);
        let a = ((cuts[0] * (rows - 1) as f64) as usize).min(rows - 2);
        let b = a + 2 + ((cuts[1] * (rows - a - 2) as f64) as usize).min(rows - a - 2);
        let len = b - a;
        let c = ((cuts[2] * (len - 1) as f64) as usize).min(len - 1);
        let d = c + 1 + ((cuts[3] * (len - c - 1) as f64) as usize).min(len - c - 1);
        let nested = rec.slice_rows(a, b).unwrap().slice_rows(c, d).unwrap();
        let direct = rec.slice_rows(a + c, a + d).unwrap();
        prop_assert_eq!(nested, direct);
    }
}

#[test]
fn data_columns_follow_metadata_order() {
    let rec = recording(3, true, vec![vec![1.0]; 4], vec![]);
    let header = data_csv(&rec).lines().next().unwrap().to_string();
    let names: Vec<&str> = rec.channels().iter().map(|c| c.name.as_str()).collect();
    assert_eq!(header, names.join(","));
    assert!(metadata_json(&rec).ends_with('\n'));
}

#[test]
fn mismatched_header_is_a_schema_error() {
    let rec = recording(5, false, vec![vec![0.5, 1.5]; 5], vec![]);
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = (dir.path().join("r.json"), dir.path().join("r.csv"));
    save_recording(&rec, &m, &d).unwrap();
    let text = std::fs::read_to_string(&d).unwrap().replacen("C3", "C4", 1);
    std::fs::write(&d, text).unwrap();
    assert!(matches!(load_recording(&m, &d), Err(Error::Schema(_))));
}

#[test]
fn malformed_value_reports_its_line() {
    let rec = recording(1, false, vec![vec![0.5, 1.5, 2.5]], vec![]);
    let dir = tempfile::tempdir().unwrap();
    let (m, d) = (dir.path().join("r.json"), dir.path().join("r.csv"));
    save_recording(&rec, &m, &d).unwrap();
    std::fs::write(&d, "Fpz\n0.5\nabc\n2.5\n").unwrap();
    match load_recording(&m, &d) {
        Err(Error::Format { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn missing_file_is_io() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_recording(&dir.path().join("no.json"), &dir.path().join("no.csv")).unwrap_err();
    assert!(err.is_io());
}

#[test]
fn whole_recording_marker_is_identity() {
    let rec = recording(
        2,
        false,
        vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
        vec![Marker {
            name: "all".into(),
            start_sample: 0,
            end_sample: 3,
        }],
    );
    let s = slice_by_marker(&rec, "all").unwrap();
    assert_eq!(s.columns(), rec.columns());
    assert!(matches!(slice_by_marker(&rec, "none"), Err(Error::NotFound(_))));
}

#[test]
fn duplicate_marker_names_cannot_be_sliced() {
    let m = |s, e| Marker {
        name: "task".into(),
        start_sample: s,
        end_sample: e,
    };
    let rec = recording(1, false, vec![vec![0.0; 10]], vec![m(0, 4), m(5, 9)]);
    assert!(matches!(slice_by_marker(&rec, "task"), Err(Error::Ambiguous(_))));
}

#[test]
fn invalid_recordings_are_rejected() {
    let ch = || vec![ChannelMeta::eeg("Cz").unwrap()];
    assert!(Recording::new(0.0, ch(), vec![vec![1.0]], vec![]).is_err());
    assert!(matches!(
        Recording::new(256.0, ch(), vec![vec![f64::NAN]], vec![]),
        Err(Error::Data(_))
    ));
    assert!(matches!(
        Recording::new(256.0, ch(), vec![], vec![]),
        Err(Error::Schema(_))
    ));
    let off_sphere = ChannelMeta {
        name: "X".into(),
        kind: cmc_core::signal_io::ChannelKind::Eeg,
        position: Some([0.5, 0.0, 0.0]),
    };
    assert!(matches!(
        Recording::new(256.0, vec![off_sphere], vec![vec![1.0]], vec![]),
        Err(Error::Schema(_))
    ));
}

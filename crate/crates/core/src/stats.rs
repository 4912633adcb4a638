//! Mann–Whitney U comparison of expert and novice feature sets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numfmt::fmt9;

/// Pooled sample size up to which tie-free inputs get the exact null
/// distribution.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::NormalApprox => "normal_approx",
        })
    }
}

/// Alternative hypothesis, phrased for the first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// First sample tends to be larger.
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    /// U of the first sample: pairs where it is larger, ties counting half.
    pub u_statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub method: Method,
}

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Number of arrangements yielding each U in `0..=n1*n2` when the two
/// samples are exchangeable and tie-free.
pub fn exact_u_counts(n1: usize, n2: usize) -> Vec<u64> {
    // table[m][n] holds the counts for sizes (m, n); U gains n when the
    // largest pooled value belongs to the first sample.
    let mut table: Vec<Vec<Vec<u64>>> = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for m in 0..=n1 {
        for n in 0..=n2 {
            table[m][n] = if m == 0 || n == 0 {
                let mut v = vec![0; m * n + 1];
                v[0] = 1;
                v
            } else {
                let mut v = vec![0u64; m * n + 1];
                for (u, &c) in table[m - 1][n].iter().enumerate() {
                    v[u + n] += c;
                }
                for (u, &c) in table[m][n - 1].iter().enumerate() {
                    v[u] += c;
                }
                v
            };
        }
    }
    std::mem::take(&mut table[n1][n2])
}

fn tail_p(lower: f64, upper: f64, alt: Alternative) -> f64 {
    match alt {
        Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
        Alternative::Greater => upper,
        Alternative::Less => lower,
    }
}

/// Two-sided Mann–Whitney U test.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<GroupComparison> {
    mann_whitney_u_with(a, b, Alternative::TwoSided)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], alt: Alternative) -> Result<GroupComparison> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::arg("both groups need at least one value"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::arg("group values must be finite"));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut has_ties = false;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            has_ties = true;
            tie_term += t * t * t - t;
        }
        i = j + 1;
    }

    let n = n1 + n2;
    if n <= EXACT_MAX_N && !has_ties {
        let counts = exact_u_counts(n1, n2);
        let total: u64 = counts.iter().sum();
        let k = u.round() as usize;
        let below: u64 = counts[..=k].iter().sum();
        let above: u64 = counts[k..].iter().sum();
        let p = tail_p(below as f64 / total as f64, above as f64 / total as f64, alt);
        return Ok(GroupComparison {
            u_statistic: u,
            p_value: p,
            n1,
            n2,
            method: Method::Exact,
        });
    }

    let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
    let mean = f1 * f2 / 2.0;
    let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let sd = var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        match alt {
            Alternative::TwoSided => {
                let z = ((u - mean).abs() - 0.5).max(0.0) / sd;
                (2.0 * normal.sf(z)).min(1.0)
            }
            Alternative::Greater => normal.sf((u - mean - 0.5) / sd),
            Alternative::Less => normal.cdf((u - mean + 0.5) / sd),
        }
    };
    Ok(GroupComparison {
        u_statistic: u,
        p_value: p.clamp(0.0, 1.0),
        n1,
        n2,
        method: Method::NormalApprox,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureKey {
    pub channel: String,
    pub band: String,
    pub metric: String,
}

impl FeatureKey {
    pub fn new(channel: &str, band: &str, metric: &str) -> Self {
        FeatureKey {
            channel: channel.into(),
            band: band.into(),
            metric: metric.into(),
        }
    }
}

/// Per-subject values for each (channel, band, metric) column.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub columns: BTreeMap<FeatureKey, Vec<f64>>,
}

impl FeatureTable {
    pub fn push(&mut self, key: FeatureKey, value: f64) {
        self.columns.entry(key).or_default().push(value);
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let t = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - t) + v[i + 1] * t
    } else {
        v[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub key: FeatureKey,
    pub median_expert: f64,
    pub median_novice: f64,
    pub iqr_expert: f64,
    pub iqr_novice: f64,
    pub test: GroupComparison,
}

/// One test per shared column, ordered by channel, band, then metric.
pub fn group_compare(expert: &FeatureTable, novice: &FeatureTable, alt: Alternative) -> Result<Vec<ComparisonRow>> {
    let ek: Vec<_> = expert.columns.keys().collect();
    let nk: Vec<_> = novice.columns.keys().collect();
    if ek != nk {
        return Err(Error::Schema(format!(
            "expert and novice tables have different feature columns ({} vs {})",
            ek.len(),
            nk.len()
        )));
    }
    expert
        .columns
        .iter()
        .map(|(key, e)| {
            let n = &novice.columns[key];
            let iqr = |v: &[f64]| quantile(v, 0.75) - quantile(v, 0.25);
            Ok(ComparisonRow {
                key: key.clone(),
                median_expert: quantile(e, 0.5),
                median_novice: quantile(n, 0.5),
                iqr_expert: iqr(e),
                iqr_novice: iqr(n),
                test: mann_whitney_u_with(e, n, alt)?,
            })
        })
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("channel,band,metric,median_expert,median_novice,U,p,method\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.key.channel,
            r.key.band,
            r.key.metric,
            fmt9(r.median_expert),
            fmt9(r.median_novice),
            fmt9(r.test.u_statistic),
            fmt9(r.test.p_value),
            r.test.method
        ));
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct LongRow {
    group: String,
    subject: String,
    channel: String,
    band: String,
    metric: String,
    value: f64,
}

/// Long-format feature CSV: `group,subject,channel,band,metric,value` with
/// group `expert` or `novice`.
pub fn feature_csv(expert: &[(String, Vec<(FeatureKey, f64)>)], novice: &[(String, Vec<(FeatureKey, f64)>)]) -> String {
    let mut out = String::from("group,subject,channel,band,metric,value\n");
    for (group, subjects) in [("expert", expert), ("novice", novice)] {
        for (subject, feats) in subjects {
            for (k, v) in feats {
                out.push_str(&format!(
                    "{group},{subject},{},{},{},{}\n",
                    k.channel,
                    k.band,
                    k.metric,
                    fmt9(*v)
                ));
            }
        }
    }
    out
}

pub fn read_feature_csv(path: &Path) -> Result<(FeatureTable, FeatureTable)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    let mut expert = FeatureTable::default();
    let mut novice = FeatureTable::default();
    for row in reader.deserialize::<LongRow>() {
        let row = row.map_err(|e| Error::Format {
            file: path.display().to_string(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let key = FeatureKey::new(&row.channel, &row.band, &row.metric);
        match row.group.as_str() {
            "expert" => expert.push(key, row.value),
            "novice" => novice.push(key, row.value),
            other => return Err(Error::Schema(format!("unknown group {other:?}"))),
        }
    }
    Ok((expert, novice))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn exact_counts_sum_to_binomial() {
        let c = exact_u_counts(3, 3);
        assert_eq!(c, vec![1, 1, 2, 3, 3, 3, 3, 2, 1, 1]);
        assert_eq!(exact_u_counts(7, 7).iter().sum::<u64>(), 3432);
    }

    #[test]
    fn separated_triplets() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.p_value, 0.1);
        assert_eq!(r.method, Method::Exact);
    }

    #[test]
    fn swapping_groups() {
        let a = [0.3, 1.7, 2.2, 5.0];
        let b = [0.1, 0.9, 1.1, 3.3, 4.4];
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        assert_eq!(ba.u_statistic, 20.0 - ab.u_statistic);
        assert_eq!(ab.p_value, ba.p_value);
    }

    #[test]
    fn identical_samples_with_ties() {
        let a = [1.0, 2.0, 2.0, 3.0, 4.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.u_statistic, 12.5);
        assert!(r.p_value >= 0.99);
        assert_eq!(r.method, Method::NormalApprox);
        let flat = mann_whitney_u(&[1.0; 4], &[1.0; 4]).unwrap();
        assert_eq!(flat.p_value, 1.0);
    }

    #[test]
    fn dominating_seven_vs_seven() {
        let e: Vec<f64> = (8..15).map(f64::from).collect();
        let n: Vec<f64> = (1..8).map(f64::from).collect();
        let r = mann_whitney_u(&e, &n).unwrap();
        assert_eq!(r.u_statistic, 49.0);
        assert!((r.p_value - 2.0 / 3432.0).abs() < 1e-15);
        let one = mann_whitney_u_with(&e, &n, Alternative::Greater).unwrap();
        assert!((one.p_value - 1.0 / 3432.0).abs() < 1e-15);
    }

    #[test]
    fn empty_group_is_an_error() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn large_samples_use_normal_approx() {
        let a: Vec<f64> = (0..15).map(|i| i as f64 * 1.1).collect();
        let b: Vec<f64> = (0..15).map(|i| i as f64 * 0.9 + 0.05).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.method, Method::NormalApprox);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn compare_tables() {
        let mut e = FeatureTable::default();
        let mut n = FeatureTable::default();
        for i in 0..7 {
            e.push(FeatureKey::new("C3", "alpha", "psd"), 10.0 + i as f64);
            n.push(FeatureKey::new("C3", "alpha", "psd"), i as f64);
            e.push(FeatureKey::new("Cz", "alpha", "psd"), i as f64);
            n.push(FeatureKey::new("Cz", "alpha", "psd"), i as f64);
        }
        let rows = group_compare(&e, &n, Alternative::TwoSided).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].key.channel, "C3");
        assert_eq!(rows[0].test.u_statistic, 49.0);
        assert!(rows[1].test.p_value >= 0.99);
        assert_eq!(rows[0].median_expert, 13.0);
        assert_eq!(rows[0].iqr_novice, 3.0);
        let csv = comparison_csv(&rows);
        assert!(csv.starts_with("channel,band,metric,median_expert,median_novice,U,p,method\nC3,alpha,psd,13,3,49,"));

        let mut other = n.clone();
        other.push(FeatureKey::new("Pz", "beta", "cmc"), 1.0);
        assert!(matches!(
            group_compare(&e, &other, Alternative::TwoSided),
            Err(Error::Schema(_))
        ));
    }
}

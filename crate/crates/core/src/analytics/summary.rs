use std::collections::BTreeMap;

use super::{AnalyticsError, Matrix};

/// Minimum, quartiles and maximum; quartiles interpolate linearly between
/// order statistics at position q·(n − 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Some(FiveNumber {
        min: s[0],
        q1: quantile_sorted(&s, 0.25),
        median: quantile_sorted(&s, 0.5),
        q3: quantile_sorted(&s, 0.75),
        max: s[s.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    /// −1 for noise.
    pub label: i64,
    pub size: usize,
    /// One entry per matrix column.
    pub features: Vec<FiveNumber>,
}

/// Per-cluster five-number summaries of every column, ordered by label with
/// noise first.
pub fn cluster_summary(x: &Matrix, labels: &[i64]) -> Result<Vec<ClusterSummary>, AnalyticsError> {
    if labels.len() != x.nrows() {
        return Err(AnalyticsError::LabelCount {
            labels: labels.len(),
            rows: x.nrows(),
        });
    }
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l.max(-1)).or_default().push(i);
    }
    Ok(groups
        .into_iter()
        .map(|(label, rows)| ClusterSummary {
            label,
            size: rows.len(),
            features: (0..x.ncols())
                .map(|j| {
                    let vals: Vec<f64> = rows.iter().map(|&i| x.get(i, j)).collect();
                    five_number(&vals).expect("group is non-empty")
                })
                .collect(),
        })
        .collect())
}

/// Long-format CSV: `cluster,size,feature,min,q1,median,q3,max`.
pub fn summary_csv(x: &Matrix, summaries: &[ClusterSummary]) -> String {
    use std::fmt::Write as _;
    use crate::hexgrid::format_f64;
    let mut out = String::from("cluster,size,feature,min,q1,median,q3,max\n");
    for s in summaries {
        for (name, f) in x.columns.iter().zip(&s.features) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.label,
                s.size,
                crate::ingest::quote_field(name),
                format_f64(f.min),
                format_f64(f.q1),
                format_f64(f.median),
                format_f64(f.q3),
                format_f64(f.max)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_to_five() {
        let f = five_number(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert!(five_number(&[]).is_none());
    }

    #[test]
    fn single_noise_member() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![7.0]]).unwrap();
        let s = cluster_summary(&x, &[0, 0, -1]).unwrap();
        assert_eq!(s[0].label, -1);
        let f = s[0].features[0];
        assert!([f.min, f.q1, f.median, f.q3, f.max].iter().all(|v| *v == 7.0));
        assert_eq!(s[1].size, 2);
        assert!(summary_csv(&x, &s).starts_with("cluster,size,feature,min"));
    }

    // Oracle: rank-based definition over an explicitly sorted copy.
    fn oracle(values: &[f64], q: f64) -> f64 {
        let mut s = values.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (s.len() as f64 - 1.0) * q;
        let below = s[h as usize];
        let above = if (h as usize) + 1 < s.len() { s[h as usize + 1] } else { below };
        below + (h - h.floor()) * (above - below)
    }

    proptest! {
        #[test]
        fn matches_order_statistics(values in prop::collection::vec(-1e3f64..1e3, 1..60)) {
            let f = five_number(&values).unwrap();
            for (q, got) in [(0.25, f.q1), (0.5, f.median), (0.75, f.q3)] {
                prop_assert!((got - oracle(&values, q)).abs() <= 1e-9);
            }
            prop_assert_eq!(f.min, oracle(&values, 0.0));
            prop_assert_eq!(f.max, oracle(&values, 1.0));
        }
    }
}

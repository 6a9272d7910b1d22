use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::hdbscan::{core_from, fit_from_linkage, hdbscan_fit, mst_from, single_linkage, ClusterModel};
use super::{AnalyticsError, Distances, Matrix};

/// Mean silhouette over non-noise points. Noise (negative labels) is left
/// out; a point alone in its cluster scores 0. `None` when fewer than two
/// clusters remain.
pub fn silhouette(x: &Matrix, labels: &[i64]) -> Result<Option<f64>, AnalyticsError> {
    if labels.len() != x.nrows() {
        return Err(AnalyticsError::LabelCount {
            labels: labels.len(),
            rows: x.nrows(),
        });
    }
    Ok(silhouette_from(&Distances::new(x), labels))
}

pub(crate) fn silhouette_from(dist: &Distances<'_>, labels: &[i64]) -> Option<f64> {
    let mut ids: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in labels.iter().filter(|l| **l >= 0) {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    let k = ids.len();
    if k < 2 {
        return None;
    }
    let cluster: Vec<Option<usize>> = labels.iter().map(|l| ids.get(l).copied()).collect();
    let mut sizes = vec![0usize; k];
    for c in cluster.iter().flatten() {
        sizes[*c] += 1;
    }
    let members: Vec<usize> = (0..labels.len()).filter(|&i| cluster[i].is_some()).collect();
    let scores: Vec<f64> = members
        .par_iter()
        .map(|&i| {
            let own = cluster[i].expect("member");
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for &j in &members {
                if j != i {
                    sums[cluster[j].expect("member")] += dist.get(i, j);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 { (b - a) / m } else { 0.0 }
        })
        .collect();
    Some(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// 5, 10, …, 100.
pub const DEFAULT_LATTICE: [usize; 20] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80, 85, 90, 95, 100];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub score: f64,
    pub model: ClusterModel,
    /// Every evaluated (min_cluster_size, min_samples, silhouette).
    pub scores: Vec<(usize, usize, Option<f64>)>,
}

/// Fits every (min_cluster_size, min_samples) pair drawn from `lattice`
/// and keeps the best silhouette. Ties go to the smaller min_cluster_size,
/// then the smaller min_samples; pairs with no silhouette rank last.
pub fn grid_search_hdbscan(x: &Matrix, lattice: &[usize]) -> Result<GridSearch, AnalyticsError> {
    let mut values = lattice.to_vec();
    values.sort_unstable();
    values.dedup();
    let Some(&max) = values.last() else {
        return Err(AnalyticsError::Parameter("empty parameter lattice".into()));
    };
    if values[0] < 2 {
        return Err(AnalyticsError::Parameter("lattice values must be at least 2".into()));
    }
    x.require_rows(max + 1)?;
    let n = x.nrows();
    let dist = Distances::new(x);
    let per_ms: Vec<Vec<(usize, usize, Option<f64>)>> = values
        .par_iter()
        .map(|&ms| {
            let core = core_from(&dist, ms);
            let linkage = single_linkage(n, &mst_from(&dist, &core));
            let mut cache: HashMap<Vec<i64>, Option<f64>> = HashMap::new();
            values
                .iter()
                .map(|&mcs| {
                    let model = fit_from_linkage(n, &linkage, mcs, ms);
                    let score = *cache
                        .entry(model.labels.clone())
                        .or_insert_with(|| silhouette_from(&dist, &model.labels));
                    (mcs, ms, score)
                })
                .collect()
        })
        .collect();
    let mut scores: Vec<(usize, usize, Option<f64>)> = per_ms.into_iter().flatten().collect();
    scores.sort_by_key(|&(mcs, ms, _)| (mcs, ms));
    let mut best: Option<(usize, usize, f64)> = None;
    for &(mcs, ms, s) in &scores {
        if let Some(s) = s {
            if best.is_none_or(|(_, _, b)| s > b) {
                best = Some((mcs, ms, s));
            }
        }
    }
    let (mcs, ms, score) = best.ok_or(AnalyticsError::NoValidClustering)?;
    Ok(GridSearch {
        min_cluster_size: mcs,
        min_samples: ms,
        score,
        model: hdbscan_fit(x, mcs, ms)?,
        scores,
    })
}

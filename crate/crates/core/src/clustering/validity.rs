//! Internal validity indices computed from a precomputed distance matrix.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub widths: Vec<f64>,
    pub average: f64,
}

impl Silhouette {
    /// Mean width per distinct label, in ascending label order.
    pub fn by_cluster(&self, labels: &[usize]) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for (&l, &w) in labels.iter().zip(&self.widths) {
            let e = acc.entry(l).or_default();
            e.0 += w;
            e.1 += 1;
        }
        acc.into_iter().map(|(l, (s, c))| (l, s / c as f64)).collect()
    }
}

/// Members of each distinct label, labels ascending.
pub(crate) fn groups(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        map.entry(l).or_default().push(i);
    }
    map.into_values().collect()
}

fn check(labels: &[usize], distances: &Array2<f64>) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if distances.dim() != (n, n) {
        return Err(Error::Schema(format!(
            "{n} labels but a {:?} distance matrix",
            distances.dim()
        )));
    }
    Ok(groups(labels))
}

/// Rousseeuw's silhouette widths; members of singleton clusters get 0.
pub fn silhouette(labels: &[usize], distances: &Array2<f64>) -> Result<Silhouette> {
    let groups = check(labels, distances)?;
    if groups.len() < 2 {
        return Err(Error::UndefinedIndex("silhouette needs at least two clusters"));
    }
    let n = labels.len();
    let mut cluster_of = vec![0; n];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            cluster_of[i] = g;
        }
    }
    let mut widths = vec![0.0; n];
    let mut sums = vec![0.0; groups.len()];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            sums[cluster_of[j]] += distances[[i, j]];
        }
        let own = cluster_of[i];
        let own_size = groups[own].len();
        if own_size == 1 {
            continue;
        }
        let a = sums[own] / (own_size - 1) as f64;
        let b = groups
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != own)
            .map(|(g, m)| sums[g] / m.len() as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        widths[i] = if denom > 0.0 { (b - a) / denom } else { 0.0 };
    }
    let average = widths.iter().sum::<f64>() / n as f64;
    Ok(Silhouette { widths, average })
}

/// Smallest between-cluster distance over the largest cluster diameter.
pub fn dunn(labels: &[usize], distances: &Array2<f64>) -> Result<f64> {
    let groups = check(labels, distances)?;
    if groups.len() < 2 {
        return Err(Error::UndefinedIndex("the Dunn index needs at least two clusters"));
    }
    let mut diameter = 0.0f64;
    for members in &groups {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                diameter = diameter.max(distances[[i, j]]);
            }
        }
    }
    if diameter == 0.0 {
        return Err(Error::DegenerateClustering("every cluster has zero diameter"));
    }
    let mut separation = f64::INFINITY;
    for (g, first) in groups.iter().enumerate() {
        for second in &groups[g + 1..] {
            for &i in first {
                for &j in second {
                    separation = separation.min(distances[[i, j]]);
                }
            }
        }
    }
    Ok(separation / diameter)
}

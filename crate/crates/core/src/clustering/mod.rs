//! Spectral bisection, SOM cluster-count validation and validity indices.

mod bisection;
mod som;
mod validity;

pub use bisection::{fiedler_bisect, recursive_bisection, BisectionStep, BisectionStrategy};
pub use som::{som_cluster, SomConfig};
pub use validity::{dunn, silhouette, Silhouette};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Per-entity cluster id, contiguous from 1.
    pub labels: Vec<usize>,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub silhouette: Vec<f64>,
    pub avg_silhouette: f64,
    /// Mean silhouette per cluster, indexed by `label - 1`.
    pub cluster_silhouette: Vec<f64>,
    /// `None` when every cluster has zero diameter.
    pub dunn: Option<f64>,
    pub trace: Vec<BisectionStep>,
}

impl ClusterAssignment {
    /// Score a labeling whose ids are exactly `1..=k`.
    pub fn from_labels(labels: Vec<usize>, distances: &Array2<f64>, trace: Vec<BisectionStep>) -> Result<Self> {
        let k = labels.iter().copied().max().unwrap_or(0);
        let mut sizes = vec![0; k];
        for &l in &labels {
            if l == 0 {
                return Err(Error::Parameter("cluster labels start at 1".into()));
            }
            sizes[l - 1] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::Parameter("cluster labels must be contiguous".into()));
        }
        let sil = silhouette(&labels, distances)?;
        let dunn = match dunn(&labels, distances) {
            Ok(d) => Some(d),
            Err(Error::DegenerateClustering(_)) => None,
            Err(e) => return Err(e),
        };
        let cluster_silhouette = sil.by_cluster(&labels).into_iter().map(|(_, s)| s).collect();
        Ok(ClusterAssignment {
            labels,
            k,
            sizes,
            avg_silhouette: sil.average,
            silhouette: sil.widths,
            cluster_silhouette,
            dunn,
            trace,
        })
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub k: usize,
    /// Distinct clusters the map actually used.
    pub occupied: usize,
    pub dunn: Option<f64>,
    pub avg_silhouette: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub rows: Vec<ValidationRow>,
    pub chosen_k: usize,
    pub silhouette_best: usize,
    pub dunn_best: Option<usize>,
    /// The two indices peak at different k.
    pub disagreement: bool,
}

fn argmax_by<F: Fn(&ValidationRow) -> Option<f64>>(rows: &[ValidationRow], key: F) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for r in rows {
        if let Some(v) = key(r) {
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, r.k));
            }
        }
    }
    best.map(|b| b.1)
}

/// Run the SOM for every k and score each labeling with silhouette and Dunn on
/// `distances`. The chosen k maximizes average silhouette; Dunn breaks ties,
/// then the smaller k.
pub fn validate_k(
    features: &FeatureMatrix,
    distances: &Array2<f64>,
    k_range: &[usize],
    config: &SomConfig,
) -> Result<Validation> {
    let n = features.n_rows();
    if k_range.is_empty() {
        return Err(Error::Parameter("empty k range".into()));
    }
    if let Some(&k) = k_range.iter().find(|&&k| k < 2 || k > n) {
        return Err(Error::Parameter(format!("k = {k} outside 2..={n}")));
    }
    if distances.dim() != (n, n) {
        return Err(Error::Schema(format!("{n} rows but a {:?} distance matrix", distances.dim())));
    }
    let rows: Vec<ValidationRow> = k_range
        .par_iter()
        .map(|&k| -> Result<ValidationRow> {
            let labels = som_cluster(features, k, config)?;
            let occupied = validity::groups(&labels).len();
            if occupied < 2 {
                return Ok(ValidationRow { k, occupied, dunn: None, avg_silhouette: None });
            }
            let dunn = match dunn(&labels, distances) {
                Ok(d) => Some(d),
                Err(Error::DegenerateClustering(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(ValidationRow {
                k,
                occupied,
                dunn,
                avg_silhouette: Some(silhouette(&labels, distances)?.average),
            })
        })
        .collect::<Result<_>>()?;

    let mut best: Option<&ValidationRow> = None;
    for r in &rows {
        let Some(s) = r.avg_silhouette else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bs = b.avg_silhouette.expect("only scored rows are kept");
                s > bs || (s == bs && r.dunn.unwrap_or(f64::NEG_INFINITY) > b.dunn.unwrap_or(f64::NEG_INFINITY))
            }
        };
        if better {
            best = Some(r);
        }
    }
    let chosen = best
        .ok_or(Error::UndefinedIndex("no k in the range produced two or more clusters"))?
        .k;
    let dunn_best = argmax_by(&rows, |r| r.dunn);
    let silhouette_best = argmax_by(&rows, |r| r.avg_silhouette).expect("chosen exists");
    Ok(Validation {
        rows,
        chosen_k: chosen,
        silhouette_best,
        dunn_best,
        disagreement: dunn_best != Some(silhouette_best),
    })
}

//! One-dimensional self-organizing map used as the clustering engine for
//! cluster-count validation.

use ndarray::{Array2, ArrayView1};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Epochs run after reseeding empty units, at the final rate with radius 0.
const REFINE_EPOCHS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomConfig {
    pub epochs: usize,
    pub rate_start: f64,
    pub rate_end: f64,
    pub seed: u64,
}

impl Default for SomConfig {
    fn default() -> Self {
        SomConfig {
            epochs: 100,
            rate_start: 0.05,
            rate_end: 0.01,
            seed: 0,
        }
    }
}

impl SomConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Parameter("SOM needs at least one epoch".into()));
        }
        if !(self.rate_end > 0.0 && self.rate_end <= self.rate_start && self.rate_start.is_finite()) {
            return Err(Error::Parameter(format!(
                "SOM rates must satisfy 0 < end <= start, got {} -> {}",
                self.rate_start, self.rate_end
            )));
        }
        Ok(())
    }
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest prototype, lowest unit index on ties.
fn best_unit(prototypes: &Array2<f64>, row: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (u, p) in prototypes.rows().into_iter().enumerate() {
        let d = squared_distance(p, row);
        if d < best.1 {
            best = (u, d);
        }
    }
    best
}

fn train_epoch(
    prototypes: &mut Array2<f64>,
    x: &Array2<f64>,
    order: &[usize],
    rate: f64,
    radius: f64,
) {
    let k = prototypes.nrows();
    for &i in order {
        let row = x.row(i);
        let (bmu, _) = best_unit(prototypes, row);
        for u in 0..k {
            if (u as f64 - bmu as f64).abs() <= radius {
                let mut p = prototypes.row_mut(u);
                p.zip_mut_with(&row, |pv, &xv| *pv += rate * (xv - *pv));
            }
        }
    }
}

/// Train a `1 x k` map and label each row by its best-matching unit (1-based).
pub fn som_cluster(features: &FeatureMatrix, k: usize, config: &SomConfig) -> Result<Vec<usize>> {
    config.validate()?;
    let x = &features.values;
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("SOM size must lie in 1..={n}, got {k}")));
    }
    if k == 1 {
        return Ok(vec![1; n]);
    }
    let mut rng = rng::stream(config.seed, &[tag::SOM, k as u64]);
    let init = index::sample(&mut rng, n, k);
    let mut prototypes = Array2::zeros((k, x.ncols()));
    for (u, i) in init.iter().enumerate() {
        prototypes.row_mut(u).assign(&x.row(i));
    }

    let start_radius = k.div_ceil(2) as f64;
    let span = (config.epochs - 1).max(1) as f64;
    let mut order: Vec<usize> = (0..n).collect();
    for e in 0..config.epochs {
        let t = e as f64 / span;
        let rate = config.rate_start + (config.rate_end - config.rate_start) * t;
        let radius = start_radius * (1.0 - t);
        order.shuffle(&mut rng);
        train_epoch(&mut prototypes, x, &order, rate, radius);
    }

    let assign = |prototypes: &Array2<f64>| -> Vec<(usize, f64)> {
        x.rows().into_iter().map(|r| best_unit(prototypes, r)).collect()
    };
    let mut hits = assign(&prototypes);
    let mut counts = vec![0usize; k];
    hits.iter().for_each(|&(u, _)| counts[u] += 1);
    let empty: Vec<usize> = (0..k).filter(|&u| counts[u] == 0).collect();
    if !empty.is_empty() {
        // One reseed: each empty unit takes the worst-quantized row not yet used.
        let mut by_error: Vec<usize> = (0..n).collect();
        by_error.sort_by(|&a, &b| hits[b].1.total_cmp(&hits[a].1).then(a.cmp(&b)));
        for (&u, &i) in empty.iter().zip(&by_error) {
            prototypes.row_mut(u).assign(&x.row(i));
        }
        for _ in 0..REFINE_EPOCHS {
            order.shuffle(&mut rng);
            train_epoch(&mut prototypes, x, &order, config.rate_end, 0.0);
        }
        hits = assign(&prototypes);
    }
    Ok(hits.into_iter().map(|(u, _)| u + 1).collect())
}

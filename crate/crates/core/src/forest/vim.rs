use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fit_forest_array, ForestParams};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Impurity importance corrected by permuted shadow copies of every column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimReport {
    pub variables: Vec<String>,
    /// Mean importance of each real column across replications.
    pub raw: Vec<f64>,
    /// Mean importance of each column's shadow across replications.
    pub shadow: Vec<f64>,
    /// `raw - shadow`.
    pub corrected: Vec<f64>,
    /// Corrected importance per replication, `[replication][variable]`.
    pub replicates: Vec<Vec<f64>>,
    pub replications: usize,
    pub selected: Vec<String>,
}

impl VimReport {
    /// Variable indices ordered by descending corrected importance; ties keep
    /// input order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.variables.len()).collect();
        order.sort_by(|&a, &b| self.corrected[b].total_cmp(&self.corrected[a]));
        order
    }

    pub fn corrected_of(&self, name: &str) -> Option<f64> {
        self.variables
            .iter()
            .position(|v| v == name)
            .map(|i| self.corrected[i])
    }
}

/// For each replication, permute every column independently to build a
/// shadow block, fit a forest on `[X | shadow]`, and take the difference of
/// the matched importances. Results are averaged over replications.
pub fn vim_corrected(
    x: &FeatureMatrix,
    y: &[f64],
    replications: usize,
    params: &ForestParams,
) -> Result<VimReport> {
    if replications < 1 {
        return Err(Error::Parameter("VIM replications must be at least 1".into()));
    }
    let (n, p) = x.values.dim();
    let mut columns = x.columns.clone();
    columns.extend(x.columns.iter().map(|c| format!("shadow_{c}")));

    let mut replicates = Vec::with_capacity(replications);
    let mut raw = vec![0.0; p];
    let mut shadow = vec![0.0; p];
    for r in 0..replications {
        let mut perm_rng = rng::stream(params.seed, &[tag::SHADOW, r as u64]);
        let mut shadows = Array2::zeros((n, p));
        let mut order: Vec<usize> = (0..n).collect();
        for j in 0..p {
            order.shuffle(&mut perm_rng);
            for (i, &src) in order.iter().enumerate() {
                shadows[[i, j]] = x.values[[src, j]];
            }
        }
        let augmented = concatenate(Axis(1), &[x.values.view(), shadows.view()])
            .expect("row counts agree");
        let forest_params = ForestParams {
            seed: rng::derive_seed(params.seed, &[tag::REPLICATION, r as u64]),
            ..*params
        };
        let model = fit_forest_array(augmented.view(), &columns, y, &forest_params)?;
        let diff: Vec<f64> = (0..p)
            .map(|j| model.importance[j] - model.importance[p + j])
            .collect();
        for j in 0..p {
            raw[j] += model.importance[j];
            shadow[j] += model.importance[p + j];
        }
        replicates.push(diff);
    }
    let scale = 1.0 / replications as f64;
    raw.iter_mut().for_each(|v| *v *= scale);
    shadow.iter_mut().for_each(|v| *v *= scale);
    let corrected = raw.iter().zip(&shadow).map(|(r, s)| r - s).collect();
    Ok(VimReport {
        variables: x.columns.clone(),
        raw,
        shadow,
        corrected,
        replicates,
        replications,
        selected: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// In descending corrected-importance order.
    pub variables: Vec<String>,
    /// Number of leading variables before the largest ratio gap, if one is unique.
    pub gap_after: Option<usize>,
    pub warning: Option<String>,
}

const MIN_SELECTED: usize = 2;

/// Keep the variables ahead of the largest ratio drop `v_k / v_{k+1}` in the
/// descending curve of positive corrected importances.
pub fn select_variables(report: &VimReport) -> Result<Selection> {
    let p = report.variables.len();
    if p < MIN_SELECTED {
        return Err(Error::Parameter(format!(
            "variable selection needs at least {MIN_SELECTED} variables, got {p}"
        )));
    }
    let order = report.ranking();
    let sorted: Vec<f64> = order.iter().map(|&i| report.corrected[i]).collect();
    let positive = sorted.iter().take_while(|&&v| v > 0.0).count();
    if positive == 0 {
        return Err(Error::NoSignal);
    }
    let ratios: Vec<f64> = sorted[..positive].windows(2).map(|w| w[0] / w[1]).collect();
    let best = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let at_best = ratios.iter().filter(|&&r| r == best).count();

    let names = |k: usize| order[..k].iter().map(|&i| report.variables[i].clone()).collect();
    if ratios.is_empty() {
        return Ok(Selection {
            variables: names(MIN_SELECTED),
            gap_after: None,
            warning: Some("a single positive importance; kept the minimum of two".into()),
        });
    }
    if best <= 1.0 || at_best > 1 {
        let warning = "no unique importance gap; selecting all variables".to_string();
        log::warn!("{warning}");
        return Ok(Selection {
            variables: names(p),
            gap_after: None,
            warning: Some(warning),
        });
    }
    let gap = ratios.iter().position(|&r| r == best).expect("maximum exists") + 1;
    Ok(Selection {
        variables: names(gap.max(MIN_SELECTED)),
        gap_after: Some(gap),
        warning: None,
    })
}

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::clustering::{BisectionStrategy, SomConfig};
use crate::dataset::Variable;
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SomSettings {
    pub epochs: usize,
    pub rate_start: f64,
    pub rate_end: f64,
}

impl Default for SomSettings {
    fn default() -> Self {
        let d = SomConfig::default();
        SomSettings {
            epochs: d.epochs,
            rate_start: d.rate_start,
            rate_end: d.rate_end,
        }
    }
}

/// Everything that determines the output bytes. The output directory and
/// thread count are deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub seed: u64,
    pub response: String,
    /// Removed from the predictor set in addition to the response.
    pub excluded: Vec<String>,
    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub vim_replications: usize,
    pub cv_folds: usize,
    /// Skip the inflexion-point rule and use these variables.
    pub selected_variables: Option<Vec<String>>,
    pub sigma: f64,
    pub standardize: bool,
    pub k_range: Vec<usize>,
    /// Use this many clusters instead of the validated choice.
    pub clusters: Option<usize>,
    pub bisection: BisectionStrategy,
    pub som: SomSettings,
    pub benchmark_low_q: f64,
    pub benchmark_high_q: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: PathBuf::new(),
            seed: 0,
            response: "GD".into(),
            excluded: ["GF", "GA", "GD", "Points"].map(String::from).to_vec(),
            n_trees: 500,
            mtry: None,
            min_node_size: 5,
            vim_replications: 10,
            cv_folds: 10,
            selected_variables: None,
            sigma: 1.0,
            standardize: true,
            k_range: (2..=6).collect(),
            clusters: None,
            bisection: BisectionStrategy::Recursive,
            som: SomSettings::default(),
            benchmark_low_q: 0.25,
            benchmark_high_q: 0.75,
        }
    }
}

fn variable(name: &str, what: &str) -> Result<Variable> {
    Variable::from_column(name).ok_or_else(|| Error::Parameter(format!("unknown {what} variable `{name}`")))
}

impl PipelineConfig {
    pub fn response_variable(&self) -> Result<Variable> {
        variable(&self.response, "response")
    }

    /// All variables except the response and the excluded list, in schema order.
    pub fn predictors(&self) -> Result<Vec<Variable>> {
        let response = self.response_variable()?;
        let excluded = self
            .excluded
            .iter()
            .map(|e| variable(e, "excluded"))
            .collect::<Result<Vec<_>>>()?;
        let predictors: Vec<Variable> = Variable::ALL
            .iter()
            .copied()
            .filter(|v| *v != response && !excluded.contains(v))
            .collect();
        if predictors.is_empty() {
            return Err(Error::Parameter("no predictors remain after exclusions".into()));
        }
        Ok(predictors)
    }

    pub fn validate(&self) -> Result<()> {
        let predictors = self.predictors()?;
        if let Some(chosen) = &self.selected_variables {
            if chosen.len() < 2 {
                return Err(Error::Parameter("a manual selection needs at least 2 variables".into()));
            }
            for name in chosen {
                let v = variable(name, "selected")?;
                if !predictors.contains(&v) {
                    return Err(Error::Parameter(format!("selected variable `{name}` is not a predictor")));
                }
            }
        }
        if self.vim_replications < 1 {
            return Err(Error::Parameter("vim_replications must be at least 1".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Parameter("cv_folds must be at least 2".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.k_range.is_empty() || self.k_range.iter().any(|&k| k < 2) {
            return Err(Error::Parameter("k_range must be non-empty with every k >= 2".into()));
        }
        if let Some(k) = self.clusters {
            if k < 2 {
                return Err(Error::Parameter(format!("clusters must be at least 2, got {k}")));
            }
        }
        Ok(())
    }

    pub(crate) fn forest_params(&self, stage: u64) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            mtry: self.mtry,
            min_node_size: self.min_node_size,
            seed: rng::derive_seed(self.seed, &[tag::FOREST, stage]),
        }
    }

    pub(crate) fn som_config(&self) -> SomConfig {
        SomConfig {
            epochs: self.som.epochs,
            rate_start: self.som.rate_start,
            rate_end: self.som.rate_end,
            seed: rng::derive_seed(self.seed, &[tag::SOM]),
        }
    }
}

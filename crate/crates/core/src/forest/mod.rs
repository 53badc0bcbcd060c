//! Random-forest regression: bagged variance-reduction trees with
//! out-of-bag error, shadow-corrected impurity importance, inflexion-point
//! variable selection and k-fold cross-validation.
//!
//! Every tree draws its bootstrap sample and split candidates from a stream
//! derived from `(seed, tree index)`, so a fitted forest is bit-identical
//! whatever the size of the rayon thread pool.

mod cv;
mod tree;
mod vim;

pub use cv::{fold_assignment, kfold_cv, CvResult};
pub use tree::{Node, RegressionTree};
pub use vim::{select_variables, vim_corrected, Selection, VimReport};

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use tree::TreeParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate variables per split; `None` means `floor(sqrt(p))`.
    pub mtry: Option<usize>,
    /// Nodes smaller than this are not split.
    pub min_node_size: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            mtry: None,
            min_node_size: 5,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_seed(self, seed: u64) -> Self {
        ForestParams { seed, ..self }
    }

    pub fn resolve_mtry(&self, p: usize) -> Result<usize> {
        let mtry = self
            .mtry
            .unwrap_or_else(|| ((p as f64).sqrt().floor() as usize).max(1));
        if mtry == 0 || mtry > p {
            return Err(Error::Parameter(format!(
                "mtry = {mtry} must lie in 1..={p}"
            )));
        }
        Ok(mtry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    /// Bootstrap multiplicity of every training row, per tree.
    pub inbag_counts: Vec<Vec<u32>>,
    pub columns: Vec<String>,
    pub mtry: usize,
    pub min_node_size: usize,
    pub seed: u64,
    /// Total decrease in response sum of squares per column, summed over trees.
    pub importance: Vec<f64>,
    /// Averaged out-of-bag prediction per training row.
    pub oob_predictions: Vec<Option<f64>>,
    /// `None` when no row was ever out of bag.
    pub oob_mse: Option<f64>,
    /// `None` when the response is constant or `oob_mse` is undefined.
    pub oob_r2: Option<f64>,
}

/// Population variance (denominator n), the convention used for r².
pub(crate) fn population_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

pub(crate) fn r_squared(mse: f64, y: &[f64]) -> Option<f64> {
    let var = population_variance(y);
    (var > 0.0).then(|| 1.0 - mse / var)
}

pub fn fit_forest(x: &FeatureMatrix, y: &[f64], params: &ForestParams) -> Result<ForestModel> {
    fit_forest_array(x.values.view(), &x.columns, y, params)
}

pub(crate) fn fit_forest_array(
    x: ArrayView2<'_, f64>,
    columns: &[String],
    y: &[f64],
    params: &ForestParams,
) -> Result<ForestModel> {
    let (n, p) = x.dim();
    if n != y.len() {
        return Err(Error::Schema(format!(
            "{n} feature rows but {} responses",
            y.len()
        )));
    }
    if n < 2 {
        return Err(Error::Parameter(format!("forest needs at least 2 rows, got {n}")));
    }
    if p == 0 {
        return Err(Error::Parameter("forest needs at least one predictor".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::Parameter("n_trees must be at least 1".into()));
    }
    if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Schema(format!("response {bad} is not finite")));
    }
    let mtry = params.resolve_mtry(p)?;
    let tree_params = TreeParams {
        mtry,
        min_node_size: params.min_node_size.max(1),
    };

    let grown: Vec<(RegressionTree, Vec<u32>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(params.seed, &[tag::TREE, t as u64]);
            let mut counts = vec![0u32; n];
            let sample: Vec<usize> = (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    counts[i] += 1;
                    i
                })
                .collect();
            (RegressionTree::grow(x, y, sample, tree_params, &mut rng), counts)
        })
        .collect();
    let (trees, inbag_counts): (Vec<_>, Vec<_>) = grown.into_iter().unzip();

    let mut importance = vec![0.0; p];
    for tree in &trees {
        tree.accumulate_importance(&mut importance);
    }

    let mut oob_sum = vec![0.0; n];
    let mut oob_count = vec![0usize; n];
    for (tree, counts) in trees.iter().zip(&inbag_counts) {
        for i in 0..n {
            if counts[i] == 0 {
                oob_sum[i] += tree.predict_row(x.row(i));
                oob_count[i] += 1;
            }
        }
    }
    let oob_predictions: Vec<Option<f64>> = oob_sum
        .iter()
        .zip(&oob_count)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let (sq, covered) = oob_predictions
        .iter()
        .zip(y)
        .filter_map(|(p, yi)| p.map(|p| (p - yi).powi(2)))
        .fold((0.0, 0usize), |(s, c), e| (s + e, c + 1));
    let oob_mse = (covered > 0).then(|| sq / covered as f64);
    let oob_r2 = oob_mse.and_then(|mse| r_squared(mse, y));

    Ok(ForestModel {
        trees,
        inbag_counts,
        columns: columns.to_vec(),
        mtry,
        min_node_size: tree_params.min_node_size,
        seed: params.seed,
        importance,
        oob_predictions,
        oob_mse,
        oob_r2,
    })
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Out-of-bag row indices of tree `t`.
    pub fn oob_rows(&self, t: usize) -> Vec<usize> {
        self.inbag_counts[t]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn predict_array(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let t = self.trees.len() as f64;
        x.axis_iter(Axis(0))
            .map(|row| self.trees.iter().map(|tree| tree.predict_row(row)).sum::<f64>() / t)
            .collect()
    }
}

/// Ensemble mean prediction. Columns are matched by name and must be the
/// same set the model was trained on.
pub fn predict(model: &ForestModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    let mismatch = || {
        Error::Schema(format!(
            "prediction columns {:?} do not match training columns {:?}",
            x.columns, model.columns
        ))
    };
    if x.n_cols() != model.columns.len() {
        return Err(mismatch());
    }
    let order = model
        .columns
        .iter()
        .map(|c| x.column_index(c).ok_or_else(mismatch))
        .collect::<Result<Vec<_>>>()?;
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        Ok(model.predict_array(x.values.view()))
    } else {
        Ok(model.predict_array(x.values.select(Axis(1), &order).view()))
    }
}

/// Sort rows lexicographically by features, then response, so that
/// results can be compared across inputs that differ only in row order.
pub fn canonicalize(x: &FeatureMatrix, y: &[f64]) -> (FeatureMatrix, Vec<f64>) {
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    order.sort_by(|&a, &b| {
        x.values
            .row(a)
            .iter()
            .zip(x.values.row(b).iter())
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y[a].total_cmp(&y[b]))
    });
    let values: Array2<f64> = x.values.select(Axis(0), &order);
    (
        FeatureMatrix {
            row_ids: order.iter().map(|&i| x.row_ids[i]).collect(),
            columns: x.columns.clone(),
            values,
            standardized: x.standardized,
        },
        order.iter().map(|&i| y[i]).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, Normal};

    fn noisy_line(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
        let mut rng = rng::stream(seed, &[99]);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x = Array2::from_shape_fn((n, 3), |_| normal.sample(&mut rng));
        let y = (0..n)
            .map(|i| 2.0 * x[[i, 0]] - x[[i, 1]] + 0.1 * normal.sample(&mut rng))
            .collect();
        (FeatureMatrix::from_array(x).unwrap(), y)
    }

    #[test]
    fn constant_response() {
        let (x, _) = noisy_line(50, 1);
        let y = vec![7.0; 50];
        let model = fit_forest(&x, &y, &ForestParams::default().with_seed(3)).unwrap();
        assert_eq!(model.oob_mse, Some(0.0));
        assert_eq!(model.oob_r2, None);
        assert!(model.importance.iter().all(|&v| v == 0.0));
        assert!(predict(&model, &x).unwrap().iter().all(|&p| p == 7.0));
    }

    #[test]
    fn identity_response_is_recovered() {
        let x = Array2::from_shape_fn((100, 1), |(i, _)| i as f64 / 10.0);
        let y: Vec<f64> = x.column(0).to_vec();
        let x = FeatureMatrix::from_array(x).unwrap();
        let model = fit_forest(&x, &y, &ForestParams::default().with_seed(11)).unwrap();
        assert!(model.oob_r2.unwrap() >= 0.95, "r2 = {:?}", model.oob_r2);
    }

    #[test]
    fn parameter_errors() {
        let (x, y) = noisy_line(20, 2);
        let too_many = ForestParams {
            mtry: Some(4),
            ..Default::default()
        };
        assert!(matches!(fit_forest(&x, &y, &too_many), Err(Error::Parameter(_))));
        let no_trees = ForestParams {
            n_trees: 0,
            ..Default::default()
        };
        assert!(matches!(fit_forest(&x, &y, &no_trees), Err(Error::Parameter(_))));
        assert!(matches!(fit_forest(&x, &y[..5], &ForestParams::default()), Err(Error::Schema(_))));
    }

    #[test]
    fn oob_sets_complement_inbag_and_r2_matches_mse() {
        let (x, y) = noisy_line(60, 4);
        let model = fit_forest(&x, &y, &ForestParams { n_trees: 50, ..Default::default() }).unwrap();
        for t in 0..model.n_trees() {
            let oob = model.oob_rows(t);
            let inbag: usize = model.inbag_counts[t].iter().sum::<u32>() as usize;
            assert_eq!(inbag, 60);
            for i in 0..60 {
                assert_eq!(oob.contains(&i), model.inbag_counts[t][i] == 0);
            }
        }
        let r2 = 1.0 - model.oob_mse.unwrap() / population_variance(&y);
        assert!((model.oob_r2.unwrap() - r2).abs() < 1e-15);
    }

    #[test]
    fn every_row_gets_an_oob_prediction() {
        for n in [10, 150, 1000] {
            let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
            let y: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
            let x = FeatureMatrix::from_array(x).unwrap();
            let model = fit_forest(&x, &y, &ForestParams { n_trees: 500, min_node_size: n, ..Default::default() }).unwrap();
            assert!(model.oob_predictions.iter().all(Option::is_some), "n = {n}");
        }
    }

    #[test]
    fn single_tree_single_split_prediction() {
        let x = ndarray::array![[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]];
        let y = vec![1.0, 1.0, 1.0, 5.0, 5.0, 5.0];
        let x = FeatureMatrix::from_array(x).unwrap();
        let model = fit_forest(&x, &y, &ForestParams { n_trees: 1, ..Default::default() }).unwrap();
        let tree = &model.trees[0];
        let Node::Split { threshold, .. } = tree.nodes[0] else {
            panic!("root should split");
        };
        // Leaf means come from the bootstrap sample; with a clean step they are 1 and 5.
        let probe = FeatureMatrix::from_array(ndarray::array![[threshold - 0.5], [threshold + 0.5]]).unwrap();
        assert_eq!(predict(&model, &probe).unwrap(), vec![1.0, 5.0]);
    }

    #[test]
    fn predict_matches_columns_by_name() {
        let (x, y) = noisy_line(40, 5);
        let model = fit_forest(&x, &y, &ForestParams { n_trees: 20, ..Default::default() }).unwrap();
        let base = predict(&model, &x).unwrap();
        let swapped = x.select_columns(&["x3", "x1", "x2"]).unwrap();
        assert_eq!(predict(&model, &swapped).unwrap(), base);
        let fewer = x.select_columns(&["x1", "x2"]).unwrap();
        assert!(matches!(predict(&model, &fewer), Err(Error::Schema(_))));
    }

    #[test]
    fn output_independent_of_thread_count() {
        let (x, y) = noisy_line(80, 6);
        let params = ForestParams { n_trees: 64, seed: 17, ..Default::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| fit_forest(&x, &y, &params)).unwrap();
        let b = four.install(|| fit_forest(&x, &y, &params)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn row_permutation_after_canonicalization() {
        let (x, y) = noisy_line(70, 7);
        let params = ForestParams { n_trees: 100, seed: 23, ..Default::default() };
        let mut perm: Vec<usize> = (0..70).collect();
        perm.shuffle(&mut rng::stream(8, &[]));
        let shuffled = FeatureMatrix {
            row_ids: perm.iter().map(|&i| x.row_ids[i]).collect(),
            columns: x.columns.clone(),
            values: x.values.select(Axis(0), &perm),
            standardized: false,
        };
        let y_shuffled: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let (cx, cy) = canonicalize(&x, &y);
        let (sx, sy) = canonicalize(&shuffled, &y_shuffled);
        let a = fit_forest(&cx, &cy, &params).unwrap();
        let b = fit_forest(&sx, &sy, &params).unwrap();
        assert_eq!(a.oob_mse, b.oob_mse);
    }

    #[test]
    fn response_shift_moves_predictions_only() {
        let (x, y) = noisy_line(80, 9);
        let params = ForestParams { n_trees: 60, seed: 5, ..Default::default() };
        let c = 1234.5;
        let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
        let a = fit_forest(&x, &y, &params).unwrap();
        let b = fit_forest(&x, &shifted, &params).unwrap();
        for (pa, pb) in predict(&a, &x).unwrap().iter().zip(predict(&b, &x).unwrap()) {
            assert!((pb - pa - c).abs() < 1e-9);
        }
        for (ia, ib) in a.importance.iter().zip(&b.importance) {
            assert!((ia - ib).abs() <= 1e-9 * ia.abs().max(1.0));
        }
    }
}

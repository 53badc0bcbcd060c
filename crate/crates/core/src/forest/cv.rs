use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fit_forest_array, r_squared, ForestParams};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: usize,
    pub mse: f64,
    /// `None` for a constant response.
    pub r2: Option<f64>,
    /// Held-out prediction of every row.
    pub predictions: Vec<f64>,
}

/// Random fold index per row; fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[tag::FOLD_SPLIT]));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

/// k-fold cross-validation: each fold is predicted by a forest fitted on
/// the remaining rows, and squared errors are pooled over all rows.
pub fn kfold_cv(x: &FeatureMatrix, y: &[f64], k: usize, params: &ForestParams) -> Result<CvResult> {
    let n = x.n_rows();
    if k < 2 {
        return Err(Error::Parameter(format!("k-fold CV needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Parameter(format!("k = {k} exceeds the {n} available rows")));
    }
    if y.len() != n {
        return Err(Error::Schema(format!("{n} feature rows but {} responses", y.len())));
    }
    let fold = fold_assignment(n, k, params.seed);
    let mut predictions = vec![0.0; n];
    for f in 0..k {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold[i] == f);
        let train_x = x.values.select(Axis(0), &train);
        let train_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let fold_params = ForestParams {
            seed: rng::derive_seed(params.seed, &[tag::FOLD, f as u64]),
            ..*params
        };
        let model = fit_forest_array(train_x.view(), &x.columns, &train_y, &fold_params)?;
        let test_x = x.values.select(Axis(0), &test);
        for (&row, pred) in test.iter().zip(model.predict_array(test_x.view())) {
            predictions[row] = pred;
        }
    }
    let mse = predictions
        .iter()
        .zip(y)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n as f64;
    Ok(CvResult {
        folds: k,
        mse,
        r2: r_squared(mse, y),
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{fit_forest, predict};
    use ndarray::Array2;

    fn data(n: usize) -> (FeatureMatrix, Vec<f64>) {
        let x = Array2::from_shape_fn((n, 2), |(i, j)| ((i * 31 + j * 17) % 23) as f64);
        let y = (0..n).map(|i| x[[i, 0]] * 1.5 - x[[i, 1]]).collect();
        (FeatureMatrix::from_array(x).unwrap(), y)
    }

    #[test]
    fn folds_are_balanced() {
        for (n, k) in [(10, 3), (150, 10), (7, 7)] {
            let folds = fold_assignment(n, k, 42);
            let mut sizes = vec![0; k];
            folds.iter().for_each(|&f| sizes[f] += 1);
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1, "{sizes:?}");
        }
    }

    #[test]
    fn constant_response_has_zero_error() {
        let (x, _) = data(30);
        let res = kfold_cv(&x, &[4.0; 30], 5, &ForestParams { n_trees: 20, ..Default::default() }).unwrap();
        assert_eq!(res.mse, 0.0);
        assert_eq!(res.r2, None);
    }

    #[test]
    fn leave_one_out_matches_direct_holdouts() {
        let (x, y) = data(10);
        let params = ForestParams { n_trees: 50, seed: 9, min_node_size: 2, ..Default::default() };
        let res = kfold_cv(&x, &y, 10, &params).unwrap();
        let folds = fold_assignment(10, 10, params.seed);
        let mut errors = Vec::new();
        for held in 0..10 {
            let keep: Vec<usize> = (0..10).filter(|&i| i != held).collect();
            let train = crate::dataset::FeatureMatrix::from_array(x.values.select(Axis(0), &keep)).unwrap();
            let train_y: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
            let fold_params = ForestParams {
                seed: rng::derive_seed(params.seed, &[tag::FOLD, folds[held] as u64]),
                ..params
            };
            let model = fit_forest(&train, &train_y, &fold_params).unwrap();
            let probe = crate::dataset::FeatureMatrix::from_array(x.values.select(Axis(0), &[held])).unwrap();
            errors.push((predict(&model, &probe).unwrap()[0] - y[held]).powi(2));
        }
        let direct = errors.iter().sum::<f64>() / 10.0;
        assert!((res.mse - direct).abs() < 1e-12 * direct.max(1.0));
    }

    #[test]
    fn bad_k_rejected() {
        let (x, y) = data(5);
        assert!(matches!(kfold_cv(&x, &y, 6, &ForestParams::default()), Err(Error::Parameter(_))));
        assert!(matches!(kfold_cv(&x, &y, 1, &ForestParams::default()), Err(Error::Parameter(_))));
    }
}

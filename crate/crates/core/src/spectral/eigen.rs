//! Dense symmetric eigensolver by cyclic Jacobi rotations.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before the input is rejected.
const SYMMETRY_TOL: f64 = 1e-10;
/// Off-diagonal Frobenius norm, relative to `max(1, ||A||_F)`, at which sweeps stop.
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenmap {
    /// Ascending.
    pub eigenvalues: Array1<f64>,
    /// Orthonormal columns in eigenvalue order, each sign-fixed so that its
    /// largest-magnitude entry is positive.
    pub eigenvectors: Array2<f64>,
    pub sweeps: usize,
}

impl Eigenmap {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// The eigenvector of the second-smallest eigenvalue.
    pub fn fiedler(&self) -> Option<ndarray::ArrayView1<'_, f64>> {
        (self.len() >= 2).then(|| self.eigenvectors.column(1))
    }
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += a[[i, j]] * a[[i, j]];
        }
    }
    (2.0 * s).sqrt()
}

/// Full eigendecomposition of a symmetric matrix.
pub fn eigendecompose(matrix: &Array2<f64>) -> Result<Eigenmap> {
    let (n, m) = matrix.dim();
    if n != m {
        return Err(Error::Parameter(format!("matrix is not square: {n} x {m}")));
    }
    if n == 0 {
        return Err(Error::EmptyInput("eigendecomposition of an empty matrix"));
    }
    if let Some(((i, j), _)) = matrix.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Parameter(format!("entry ({i}, {j}) is not finite")));
    }
    let scale = matrix.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            if (matrix[[i, j]] - matrix[[j, i]]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Parameter(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    matrix[[i, j]],
                    matrix[[j, i]]
                )));
            }
        }
    }
    let mut a = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (matrix[[i, j]] + matrix[[j, i]]));
    let mut v = Array2::<f64>::eye(n);
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = OFF_DIAGONAL_TOL * frob.max(1.0);

    let mut sweeps = 0;
    let mut off = off_diagonal_norm(&a);
    while off > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                residual: off,
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
        off = off_diagonal_norm(&a);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]).then(i.cmp(&j)));
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (k, &src) in order.iter().enumerate() {
        let mut col = v.column(src).to_owned();
        fix_sign(col.as_slice_mut().expect("owned column is contiguous"));
        eigenvectors.column_mut(k).assign(&col);
    }
    Ok(Eigenmap {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}

/// Annihilate `a[p][q]` with a symmetric Schur rotation and accumulate it in `v`.
fn rotate(a: &mut Array2<f64>, v: &mut Array2<f64>, p: usize, q: usize) {
    let apq = a[[p, q]];
    if apq == 0.0 {
        return;
    }
    let n = a.nrows();
    let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let akp = a[[k, p]];
        let akq = a[[k, q]];
        a[[k, p]] = c * akp - s * akq;
        a[[k, q]] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[[p, k]];
        let aqk = a[[q, k]];
        a[[p, k]] = c * apk - s * aqk;
        a[[q, k]] = s * apk + c * aqk;
    }
    a[[p, q]] = 0.0;
    a[[q, p]] = 0.0;
    for k in 0..n {
        let vkp = v[[k, p]];
        let vkq = v[[k, q]];
        v[[k, p]] = c * vkp - s * vkq;
        v[[k, q]] = s * vkp + c * vkq;
    }
}

/// Flip `v` so that its largest-magnitude entry is positive; the lowest index
/// wins among equal magnitudes.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

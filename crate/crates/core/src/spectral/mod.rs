//! Similarity graph, Laplacians and Laplacian eigenmaps.
//!
//! ```text
//! E  pairwise Euclidean distances
//! Q  = exp(-E∘E / 2σ²)           Gaussian similarity, unit diagonal
//! W  = Q - I                     adjacency without self loops
//! s  = W·1, D = diag(s)          degrees
//! L  = D - W
//! Lₙ = D^-½ · L · D^-½           eigendecomposed as V·Λ·Vᵀ
//! ```

mod eigen;

pub use eigen::{eigendecompose, fix_sign, Eigenmap};

use ndarray::{Array1, Array2};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero when checking connectivity.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-8;

pub fn distance_matrix(features: &FeatureMatrix) -> Result<Array2<f64>> {
    pairwise_distances(&features.values)
}

pub fn pairwise_distances(values: &Array2<f64>) -> Result<Array2<f64>> {
    let n = values.nrows();
    if n < 2 {
        return Err(Error::Parameter(format!("distances need at least 2 rows, got {n}")));
    }
    let mut e = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d = values
                .row(i)
                .iter()
                .zip(values.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            e[[i, j]] = d;
            e[[j, i]] = d;
        }
    }
    Ok(e)
}

pub fn rbf_similarity(distances: &Array2<f64>, sigma: f64) -> Result<Array2<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    let denom = 2.0 * sigma * sigma;
    let mut q = distances.mapv(|d| (-(d * d) / denom).exp());
    q.diag_mut().fill(1.0);
    Ok(q)
}

/// Adjacency, degrees and both Laplacians of a similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacians {
    pub adjacency: Array2<f64>,
    pub degrees: Array1<f64>,
    pub laplacian: Array2<f64>,
    pub normalized: Array2<f64>,
}

impl Laplacians {
    pub fn degree_matrix(&self) -> Array2<f64> {
        Array2::from_diag(&self.degrees)
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    /// Eigendecomposition of the normalized Laplacian. When eigenvalue 0 is
    /// (numerically) repeated, the solver's basis of that space is arbitrary;
    /// it is replaced by `D^½·1` followed by vectors orthogonal to it, so the
    /// second column always changes sign across components.
    pub fn eigenmap(&self) -> Result<Eigenmap> {
        let mut map = eigendecompose(&self.normalized)?;
        align_null_space(&mut map, &self.degrees);
        Ok(map)
    }
}

fn align_null_space(map: &mut Eigenmap, degrees: &Array1<f64>) {
    let m = map.eigenvalues.iter().take_while(|&&l| l <= ZERO_EIGENVALUE_TOL).count();
    if m < 2 {
        return;
    }
    let mut u = degrees.mapv(f64::sqrt);
    u /= u.dot(&u).sqrt();
    let mut basis = vec![u];
    for j in 0..m {
        let mut r = map.eigenvectors.column(j).to_owned();
        // Two Gram-Schmidt passes keep the result orthogonal to working precision.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&r);
                r.scaled_add(-c, b);
            }
        }
        let norm = r.dot(&r).sqrt();
        if norm > 1e-6 && basis.len() < m {
            basis.push(r / norm);
        }
    }
    if basis.len() < m {
        log::debug!("null-space alignment skipped: {} of {m} directions recovered", basis.len());
        return;
    }
    for (j, mut b) in basis.into_iter().enumerate() {
        fix_sign(b.as_slice_mut().expect("owned vector is contiguous"));
        map.eigenvectors.column_mut(j).assign(&b);
    }
}

/// `W = Q - I`, then degrees and Laplacians. Fails on a vertex with no weight.
pub fn build_graph(similarity: &Array2<f64>) -> Result<Laplacians> {
    let (n, m) = similarity.dim();
    if n != m {
        return Err(Error::Parameter(format!("similarity is not square: {n} x {m}")));
    }
    let mut adjacency = similarity.clone();
    for i in 0..n {
        adjacency[[i, i]] -= 1.0;
    }
    laplacians_of(adjacency)
}

pub(crate) fn laplacians_of(adjacency: Array2<f64>) -> Result<Laplacians> {
    let n = adjacency.nrows();
    let degrees: Array1<f64> = adjacency.rows().into_iter().map(|r| r.sum()).collect();
    if let Some((vertex, &degree)) = degrees
        .iter()
        .enumerate()
        .find(|(_, d)| !(**d > 0.0) || !d.is_finite())
    {
        return Err(Error::DegenerateDegree { vertex, degree });
    }
    let mut laplacian = -&adjacency;
    for i in 0..n {
        laplacian[[i, i]] += degrees[i];
    }
    let inv_sqrt = degrees.mapv(|d| 1.0 / d.sqrt());
    let normalized = Array2::from_shape_fn((n, n), |(i, j)| {
        inv_sqrt[i] * laplacian[[i, j]] * inv_sqrt[j]
    });
    Ok(Laplacians {
        adjacency,
        degrees,
        laplacian,
        normalized,
    })
}

/// The full distance → similarity → Laplacian chain for one feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGraph {
    pub distances: Array2<f64>,
    pub sigma: f64,
    pub similarity: Array2<f64>,
    pub laplacians: Laplacians,
}

impl SpectralGraph {
    pub fn from_features(features: &FeatureMatrix, sigma: f64) -> Result<Self> {
        SpectralGraph::from_distances(distance_matrix(features)?, sigma)
    }

    pub fn from_distances(distances: Array2<f64>, sigma: f64) -> Result<Self> {
        let similarity = rbf_similarity(&distances, sigma)?;
        let laplacians = build_graph(&similarity)?;
        Ok(SpectralGraph {
            distances,
            sigma,
            similarity,
            laplacians,
        })
    }

    pub fn len(&self) -> usize {
        self.distances.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eigenmap(&self) -> Result<Eigenmap> {
        self.laplacians.eigenmap()
    }

    /// Laplacians of the subgraph induced by `members` (adjacency restricted,
    /// degrees recomputed).
    pub fn induced(&self, members: &[usize]) -> Result<Laplacians> {
        let w = &self.laplacians.adjacency;
        let sub = Array2::from_shape_fn((members.len(), members.len()), |(a, b)| {
            w[[members[a], members[b]]]
        });
        laplacians_of(sub).map_err(|e| match e {
            Error::DegenerateDegree { vertex, degree } => Error::DegenerateDegree {
                vertex: members[vertex],
                degree,
            },
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `n x dims`; column `c` holds eigenvector `c + 2` (1-based).
    pub coordinates: Array2<f64>,
    pub warnings: Vec<String>,
}

/// Laplacian-eigenmap coordinates from the eigenvectors after the
/// trivial one: `(v2, v3)` or `(v2, v3, v4)`.
pub fn embedding(map: &Eigenmap, dims: usize) -> Result<Embedding> {
    if !(2..=3).contains(&dims) {
        return Err(Error::Parameter(format!("embedding dimension must be 2 or 3, got {dims}")));
    }
    let n = map.len();
    if n < dims + 1 {
        return Err(Error::Parameter(format!(
            "a {dims}-D embedding needs at least {} vertices, got {n}",
            dims + 1
        )));
    }
    let zeros = map
        .eigenvalues
        .iter()
        .filter(|l| l.abs() <= ZERO_EIGENVALUE_TOL)
        .count();
    let mut warnings = Vec::new();
    if zeros > 1 {
        let msg = format!("eigenvalue 0 has multiplicity {zeros}: the graph is disconnected");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let coordinates = Array2::from_shape_fn((n, dims), |(i, c)| map.eigenvectors[[i, c + 1]]);
    Ok(Embedding {
        coordinates,
        warnings,
    })
}

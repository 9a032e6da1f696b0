//! Locally linear embedding.
//!
//! Every sample is encoded as an affine combination of its neighbors
//! ([`assemble_weight_matrix`]); the low-dimensional coordinates are the
//! eigenvectors of `M = (I − W)(I − W)ᵀ` with the smallest eigenvalues,
//! after removing the constant vector of each connected component of the
//! neighbor graph ([`reduce_dimension`]).

mod eigen;
mod weights;

pub use eigen::{EigenOptions, EigenPairs};
pub use weights::{assemble_weight_matrix, solve_local_weights, LocalWeights, SparseWeightMatrix, REGULARIZATION};

use crate::error::{Error, Result};
use crate::features::FeatureImage;
use crate::neighbors::windowed_knn;

/// Eigenvalues below `NULL_THRESHOLD · ‖M‖` count as zero.
pub const NULL_THRESHOLD: f64 = 1e-10;

/// Connected components of the symmetrized sparsity pattern of `W`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl Components {
    /// Components numbered in order of their smallest member.
    pub fn of(w: &SparseWeightMatrix) -> Self {
        let n = w.n();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for j in 0..n {
            for &i in w.column_rows(j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut id = vec![usize::MAX; n];
        let mut labels = vec![0; n];
        let mut sizes = Vec::new();
        for (j, label) in labels.iter_mut().enumerate() {
            let root = find(&mut parent, j);
            if id[root] == usize::MAX {
                id[root] = sizes.len();
                sizes.push(0);
            }
            *label = id[root];
            sizes[id[root]] += 1;
        }
        Self { labels, sizes }
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Component index of every sample.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// `d` coordinates per sample, stored sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldCoords {
    n: usize,
    d: usize,
    coords: Vec<f64>,
    eigenvalues: Vec<f64>,
    components: usize,
}

impl ManifoldCoords {
    /// Builds coordinates from `d` rows of length `n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if d == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(
                "coordinate rows must be nonempty and equally long".into(),
            ));
        }
        let mut coords = vec![0.0; n * d];
        for (r, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                coords[j * d + r] = v;
            }
        }
        Ok(Self {
            n,
            d,
            coords,
            eigenvalues: Vec::new(),
            components: 1,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Coordinates of sample `j`.
    pub fn sample(&self, j: usize) -> &[f64] {
        &self.coords[j * self.d..(j + 1) * self.d]
    }

    /// Coordinate direction `r` across all samples.
    pub fn row(&self, r: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.coords[j * self.d + r]).collect()
    }

    /// Eigenvalues of `M` matching the returned rows.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of connected components whose indicators were discarded.
    pub fn components(&self) -> usize {
        self.components
    }

    /// Keeps the first `d` coordinate directions.
    pub fn truncate(&self, d: usize) -> Result<ManifoldCoords> {
        if d == 0 || d > self.d {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate {} coordinates to {d}",
                self.d
            )));
        }
        let mut coords = Vec::with_capacity(self.n * d);
        for j in 0..self.n {
            coords.extend_from_slice(&self.sample(j)[..d]);
        }
        Ok(ManifoldCoords {
            n: self.n,
            d,
            coords,
            eigenvalues: self.eigenvalues[..d.min(self.eigenvalues.len())].to_vec(),
            components: self.components,
        })
    }
}

/// Flips `v` so that its entry of largest magnitude (first one on ties) is
/// positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Low-dimensional coordinates from the `d` smallest non-null eigenvectors
/// of `(I − W)(I − W)ᵀ`.
///
/// When every column of `w` is degenerate (each sample equals all of its
/// neighbors) the data carry no local geometry and all coordinates are 0.
pub fn reduce_dimension(w: &SparseWeightMatrix, d: usize, seed: u64) -> Result<ManifoldCoords> {
    reduce_dimension_with(
        w,
        d,
        &EigenOptions {
            seed,
            ..EigenOptions::default()
        },
    )
}

pub fn reduce_dimension_with(w: &SparseWeightMatrix, d: usize, opts: &EigenOptions) -> Result<ManifoldCoords> {
    let n = w.n();
    if d == 0 || d + 2 > n {
        return Err(Error::InvalidParameter(format!(
            "target dimension {d} needs 1 <= d and d + 2 <= N = {n}"
        )));
    }
    let components = Components::of(w);
    let c = components.count();
    let free = n - c;
    if d > free {
        return Err(Error::InvalidParameter(format!(
            "target dimension {d} exceeds the {free} non-null directions left by {c} components"
        )));
    }
    if c > 1 {
        log::info!("neighbor graph has {c} connected components");
    }
    if n > 0 && w.degenerate_columns() == n {
        log::warn!("every sample coincides with its neighbors; all coordinates are zero");
        return Ok(ManifoldCoords {
            n,
            d,
            coords: vec![0.0; n * d],
            eigenvalues: vec![0.0; d],
            components: c,
        });
    }
    // One extra pair tells whether the d-th direction is uniquely defined.
    let nev = (d + 1).min(free);
    let op = eigen::LleOperator::new(w);
    let pairs = eigen::smallest_eigenpairs(&op, &components, nev, opts)?;

    let near_zero = pairs
        .values
        .iter()
        .filter(|&&v| v < NULL_THRESHOLD * pairs.norm_bound)
        .count();
    if near_zero > d {
        return Err(Error::RankAnomaly {
            components: c,
            near_zero,
            spectrum: pairs.values.clone(),
        });
    }

    let mut rows: Vec<Vec<f64>> = pairs.vectors.into_iter().take(d).collect();
    for row in &mut rows {
        fix_sign(row);
    }
    let mut coords = ManifoldCoords::from_rows(&rows)?;
    coords.eigenvalues = pairs.values[..d].to_vec();
    coords.components = c;
    Ok(coords)
}

/// `windowed_knn`, then the weight matrix, then `reduce_dimension`.
pub fn embed_pipeline(features: &FeatureImage, k: usize, d: usize, window: usize, seed: u64) -> Result<ManifoldCoords> {
    let nbrs = windowed_knn(features, k, window)?;
    let w = assemble_weight_matrix(features, &nbrs)?;
    reduce_dimension(&w, d, seed)
}

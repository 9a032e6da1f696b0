//! Affine reconstruction weights.

use std::io::Write;

use faer::{Mat, Side};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureImage;
use crate::neighbors::NeighborList;

/// Tikhonov constant; the ridge added to the local Gram matrix is
/// `REGULARIZATION · trace(C) / k`.
pub const REGULARIZATION: f64 = 1e-3;

/// Result of one local solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWeights {
    pub weights: Vec<f64>,
    /// The ridge term was added to the Gram matrix.
    pub regularized: bool,
    /// All neighbors coincide with the sample; uniform weights returned.
    pub degenerate: bool,
}

/// Weights `w` minimizing `‖x − Σ wᵢ nᵢ‖²` subject to `Σ wᵢ = 1`.
///
/// Solves `C w = 1` on the local Gram matrix `Cₐᵦ = (nₐ − x)·(nᵦ − x)` and
/// normalizes. The ridge is added whenever `k` exceeds the effective rank
/// of `C`, i.e. the number of its eigenvalues at or above the ridge itself.
pub fn solve_local_weights(x: &[f64], neighbors: &[&[f64]]) -> Result<LocalWeights> {
    let k = neighbors.len();
    if k == 0 {
        return Err(Error::InvalidParameter(
            "local solve needs at least one neighbor".into(),
        ));
    }
    if neighbors.iter().any(|n| n.len() != x.len()) {
        return Err(Error::DimensionMismatch("neighbor and sample dimensions differ".into()));
    }
    let diffs: Vec<Vec<f64>> = neighbors
        .iter()
        .map(|n| n.iter().zip(x).map(|(a, b)| a - b).collect())
        .collect();
    let mut gram = Mat::<f64>::zeros(k, k);
    for a in 0..k {
        for b in 0..=a {
            let v: f64 = diffs[a].iter().zip(&diffs[b]).map(|(p, q)| p * q).sum();
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let trace: f64 = (0..k).map(|a| gram[(a, a)]).sum();
    if !trace.is_finite() {
        return Err(Error::InvalidData("non-finite local Gram matrix".into()));
    }
    if trace == 0.0 {
        return Ok(LocalWeights {
            weights: vec![1.0 / k as f64; k],
            regularized: false,
            degenerate: true,
        });
    }
    let ridge = REGULARIZATION * trace / k as f64;
    let eigenvalues = gram
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Factorization(format!("local Gram eigenvalues: {e:?}")))?;
    let effective_rank = eigenvalues.iter().filter(|&&l| l >= ridge).count();
    let mut regularized = effective_rank < k;
    if regularized {
        add_ridge(&mut gram, ridge);
    }
    let llt = match gram.llt(Side::Lower) {
        Ok(llt) => llt,
        Err(_) if !regularized => {
            regularized = true;
            add_ridge(&mut gram, ridge);
            gram.llt(Side::Lower)
                .map_err(|e| Error::Factorization(format!("regularized local Gram: {e:?}")))?
        }
        Err(e) => return Err(Error::Factorization(format!("regularized local Gram: {e:?}"))),
    };
    let mut rhs = Mat::<f64>::from_fn(k, 1, |_, _| 1.0);
    faer::linalg::solvers::Solve::solve_in_place(&llt, rhs.as_mut());
    let sum: f64 = (0..k).map(|i| rhs[(i, 0)]).sum();
    let weights = (0..k).map(|i| rhs[(i, 0)] / sum).collect();
    Ok(LocalWeights {
        weights,
        regularized,
        degenerate: false,
    })
}

fn add_ridge(gram: &mut Mat<f64>, ridge: f64) {
    for a in 0..gram.nrows() {
        gram[(a, a)] += ridge;
    }
}

/// Column-sparse `N × N` weight matrix: column `j` holds the weights that
/// reconstruct sample `j` from its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWeightMatrix {
    n: usize,
    k: usize,
    rows: Vec<usize>,
    weights: Vec<f64>,
    regularized: usize,
    degenerate: usize,
}

impl SparseWeightMatrix {
    /// Builds a matrix from explicit columns of `k` `(row, weight)` pairs.
    pub fn from_columns(n: usize, k: usize, rows: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if rows.len() != n * k || weights.len() != n * k {
            return Err(Error::DimensionMismatch(format!(
                "{} rows / {} weights for {n} columns of {k}",
                rows.len(),
                weights.len()
            )));
        }
        for j in 0..n {
            let col = &rows[j * k..(j + 1) * k];
            if col.iter().any(|&i| i >= n || i == j) {
                return Err(Error::InvalidData(format!(
                    "column {j} references itself or an out-of-range row"
                )));
            }
        }
        Ok(Self {
            n,
            k,
            rows,
            weights,
            regularized: 0,
            degenerate: 0,
        })
    }

    /// Sample count `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn column_rows(&self, j: usize) -> &[usize] {
        &self.rows[j * self.k..(j + 1) * self.k]
    }

    pub fn column_weights(&self, j: usize) -> &[f64] {
        &self.weights[j * self.k..(j + 1) * self.k]
    }

    /// Columns whose Gram matrix needed the ridge term.
    pub fn regularized_columns(&self) -> usize {
        self.regularized
    }

    /// Columns with a zero-trace neighborhood.
    pub fn degenerate_columns(&self) -> usize {
        self.degenerate
    }

    /// Largest deviation of a column sum from one.
    pub fn max_column_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|j| (self.column_weights(j).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `row,col,weight` lines sorted by column, then row.
    pub fn write_triplets(&self, mut out: impl Write) -> std::io::Result<()> {
        for j in 0..self.n {
            let mut col: Vec<(usize, f64)> = self
                .column_rows(j)
                .iter()
                .copied()
                .zip(self.column_weights(j).iter().copied())
                .collect();
            col.sort_by_key(|e| e.0);
            for (i, w) in col {
                writeln!(out, "{i},{j},{w:e}")?;
            }
        }
        Ok(())
    }

    /// `y = (I − W)ᵀ x`, i.e. `yⱼ = xⱼ − Σᵢ wᵢⱼ xᵢ`.
    pub(crate) fn apply_residual_transpose(&self, x: &[f64], y: &mut [f64]) {
        for j in 0..self.n {
            let mut acc = x[j];
            for (&i, &w) in self.column_rows(j).iter().zip(self.column_weights(j)) {
                acc -= w * x[i];
            }
            y[j] = acc;
        }
    }

    /// `z = (I − W) y`.
    pub(crate) fn apply_residual(&self, y: &[f64], z: &mut [f64]) {
        z.copy_from_slice(y);
        for (j, &yj) in y.iter().enumerate() {
            for (&i, &w) in self.column_rows(j).iter().zip(self.column_weights(j)) {
                z[i] -= w * yj;
            }
        }
    }
}

/// Solves the local problem of every sample against its neighbor list.
pub fn assemble_weight_matrix(features: &FeatureImage, nbrs: &NeighborList) -> Result<SparseWeightMatrix> {
    if features.height() != nbrs.height() || features.width() != nbrs.width() {
        return Err(Error::DimensionMismatch(format!(
            "features are {}x{}, neighbor list is {}x{}",
            features.height(),
            features.width(),
            nbrs.height(),
            nbrs.width()
        )));
    }
    let n = features.pixels();
    let k = nbrs.k();
    let columns: Vec<LocalWeights> = (0..n)
        .into_par_iter()
        .map(|j| {
            let neigh: Vec<&[f64]> = nbrs.of(j).iter().map(|&i| features.pixel(i)).collect();
            solve_local_weights(features.pixel(j), &neigh)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(n * k);
    let mut weights = Vec::with_capacity(n * k);
    let (mut regularized, mut degenerate) = (0, 0);
    for (j, col) in columns.into_iter().enumerate() {
        rows.extend_from_slice(nbrs.of(j));
        weights.extend(col.weights);
        regularized += col.regularized as usize;
        degenerate += col.degenerate as usize;
    }
    if degenerate > 0 {
        log::warn!("{degenerate} sample(s) coincide with all their neighbors; uniform weights used");
    }
    let mut w = SparseWeightMatrix::from_columns(n, k, rows, weights)?;
    w.regularized = regularized;
    w.degenerate = degenerate;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_neighbor_gets_unit_weight() {
        let lw = solve_local_weights(&[0.3, 0.1], &[&[5.0, -2.0]]).unwrap();
        assert_eq!(lw.weights, vec![1.0]);
    }

    #[test]
    fn midpoint_gets_equal_weights() {
        let lw = solve_local_weights(&[1.0, 1.0], &[&[0.0, 0.0], &[2.0, 2.0]]).unwrap();
        assert_abs_diff_eq!(lw.weights[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(lw.weights[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_triangle_gets_thirds() {
        let lw = solve_local_weights(&[0.0, 0.0], &[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]]).unwrap();
        assert!(lw.regularized);
        for w in lw.weights {
            assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn coincident_neighborhood_is_uniform() {
        let lw = solve_local_weights(&[1.0, 2.0], &[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]).unwrap();
        assert!(lw.degenerate);
        assert_eq!(lw.weights, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn well_conditioned_gram_skips_ridge() {
        // 3 neighbors spanning 3-D around the sample: exact reconstruction.
        let x = [0.2, 0.3, 0.1];
        let lw = solve_local_weights(&x, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]).unwrap();
        assert!(!lw.regularized);
        let recon: Vec<f64> = (0..3).map(|c| lw.weights[c]).collect();
        let s: f64 = recon.iter().sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn triplet_dump_is_sorted_by_column_then_row() {
        let w = SparseWeightMatrix::from_columns(3, 2, vec![2, 1, 0, 2, 1, 0], vec![0.25, 0.75, 0.5, 0.5, 1.5, -0.5])
            .unwrap();
        let mut buf = Vec::new();
        w.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "1,0,7.5e-1");
        assert_eq!(rows[1], "2,0,2.5e-1");
        assert_eq!(rows[4], "0,2,-5e-1");
    }

    #[test]
    fn self_reference_rejected() {
        assert!(SparseWeightMatrix::from_columns(2, 1, vec![0, 0], vec![1.0, 1.0]).is_err());
    }
}

//! Smallest eigenpairs of `M = (I − W)(I − W)ᵀ`.
//!
//! Block subspace iteration on the shifted inverse `(M + σI)⁻¹`, using a
//! sparse Cholesky factor of `M + σI`, with a Rayleigh–Ritz step on `M`
//! itself after every block solve. Known null vectors are projected out of
//! every iterate, so the iteration runs in their orthogonal complement.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::weights::SparseWeightMatrix;
use super::Components;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Convergence when every wanted residual `‖M x − θ x‖` is below
    /// `tolerance · ‖M‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Extra block columns beyond the wanted count.
    pub oversample: usize,
    /// Initial shift relative to `‖M‖`; raised if the factorization fails.
    pub relative_shift: f64,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-11,
            max_iterations: 3000,
            oversample: 10,
            relative_shift: 1e-9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// One unit eigenvector per value, each of length `N`.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Upper bound on `‖M‖₂` (largest absolute row sum).
    pub norm_bound: f64,
}

/// `M = (I − W)(I − W)ᵀ` in lower-triangular CSC form.
pub(crate) struct LleOperator<'a> {
    w: &'a SparseWeightMatrix,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    norm_bound: f64,
}

impl<'a> LleOperator<'a> {
    pub(crate) fn new(w: &'a SparseWeightMatrix) -> Self {
        let n = w.n();
        // Columns of W that reference each row, in increasing order.
        let mut reverse: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for j in 0..n {
            for (&i, &wij) in w.column_rows(j).iter().zip(w.column_weights(j)) {
                reverse[i].push((j, wij));
            }
        }
        // Column b of M is Σⱼ A_bj A_·j over the columns j of A = I − W with a
        // nonzero in row b: j = b itself and every j that lists b as neighbor.
        let columns: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .with_min_len(256)
            .map_init(
                || ColumnAccumulator::new(n),
                |acc, b| {
                    acc.add_scaled_column(w, b, b, 1.0);
                    for &(j, wbj) in &reverse[b] {
                        acc.add_scaled_column(w, b, j, -wbj);
                    }
                    acc.drain()
                },
            )
            .collect();

        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        let mut abs_row_sum = vec![0.0f64; n];
        col_ptr.push(0);
        for (b, col) in columns.into_iter().enumerate() {
            for (a, v) in col {
                row_idx.push(a);
                values.push(v);
                abs_row_sum[a] += v.abs();
                if a != b {
                    abs_row_sum[b] += v.abs();
                }
            }
            col_ptr.push(row_idx.len());
        }
        let norm_bound = abs_row_sum.into_iter().fold(0.0, f64::max);
        Self {
            w,
            col_ptr,
            row_idx,
            values,
            norm_bound,
        }
    }

    pub(crate) fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// Stored lower-triangle nonzeros.
    pub(crate) fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `M x` through the factored form, which avoids the assembly rounding.
    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut y = vec![0.0; x.len()];
        self.w.apply_residual_transpose(x, &mut y);
        self.w.apply_residual(&y, out);
    }

    fn apply_block(&self, x: &Mat<f64>) -> Mat<f64> {
        let n = x.nrows();
        let cols: Vec<Vec<f64>> = (0..x.ncols())
            .into_par_iter()
            .map(|c| {
                let xc: Vec<f64> = (0..n).map(|i| x[(i, c)]).collect();
                let mut out = vec![0.0; n];
                self.apply(&xc, &mut out);
                out
            })
            .collect();
        Mat::from_fn(n, x.ncols(), |i, c| cols[c][i])
    }

    fn factor_shifted(&self, shift: f64) -> Result<Llt<usize, f64>> {
        let n = self.w.n();
        let mut values = self.values.clone();
        for b in 0..n {
            // The diagonal is always the first stored entry of its column.
            debug_assert_eq!(self.row_idx[self.col_ptr[b]], b);
            values[self.col_ptr[b]] += shift;
        }
        let symbolic = SymbolicSparseColMatRef::new_checked(n, n, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::new(symbolic, &values);
        let sym = SymbolicLlt::try_new(symbolic, Side::Lower)
            .map_err(|e| Error::Factorization(format!("symbolic Cholesky: {e:?}")))?;
        Llt::try_new_with_symbolic(sym, mat, Side::Lower)
            .map_err(|e| Error::Factorization(format!("Cholesky of M + {shift:e} I: {e:?}")))
    }
}

/// Sparse accumulator for one column of `M`.
struct ColumnAccumulator {
    values: Vec<f64>,
    marked: Vec<bool>,
    touched: Vec<usize>,
}

impl ColumnAccumulator {
    fn new(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            marked: vec![false; n],
            touched: Vec::new(),
        }
    }

    /// Adds `scale · A_·j` restricted to rows `≥ b`, where `A = I − W`.
    fn add_scaled_column(&mut self, w: &SparseWeightMatrix, b: usize, j: usize, scale: f64) {
        self.add(b, j, scale);
        for (&i, &wij) in w.column_rows(j).iter().zip(w.column_weights(j)) {
            self.add(b, i, -scale * wij);
        }
    }

    #[inline]
    fn add(&mut self, b: usize, a: usize, v: f64) {
        if a < b {
            return;
        }
        if !self.marked[a] {
            self.marked[a] = true;
            self.touched.push(a);
        }
        self.values[a] += v;
    }

    fn drain(&mut self) -> Vec<(usize, f64)> {
        self.touched.sort_unstable();
        let col = self.touched.iter().map(|&a| (a, self.values[a])).collect();
        for &a in &self.touched {
            self.values[a] = 0.0;
            self.marked[a] = false;
        }
        self.touched.clear();
        col
    }
}

/// Subtracts, per connected component, the column mean over that
/// component; i.e. projects out the normalized component indicators.
fn deflate(x: &mut Mat<f64>, components: &Components) {
    let labels = components.labels();
    for c in 0..x.ncols() {
        let mut sums = vec![0.0; components.count()];
        for (i, &l) in labels.iter().enumerate() {
            sums[l] += x[(i, c)];
        }
        for (s, &size) in sums.iter_mut().zip(components.sizes()) {
            *s /= size as f64;
        }
        for (i, &l) in labels.iter().enumerate() {
            x[(i, c)] -= sums[l];
        }
    }
}

fn orthonormalize(x: &Mat<f64>) -> Mat<f64> {
    x.qr().compute_thin_Q()
}

/// The `nev` smallest eigenpairs of `M` restricted to the orthogonal
/// complement of the component indicators, which are exact null vectors of
/// `M` when every column of `W` sums to one.
pub(crate) fn smallest_eigenpairs(
    op: &LleOperator<'_>,
    components: &Components,
    nev: usize,
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    let n = op.w.n();
    let free = n - components.count();
    if nev == 0 || nev > free {
        return Err(Error::InvalidParameter(format!(
            "{nev} eigenpairs requested from a {free}-dimensional subspace"
        )));
    }
    let block = (nev + opts.oversample).min(free);
    let norm = op.norm_bound().max(f64::MIN_POSITIVE);

    let mut shift = opts.relative_shift * norm;
    let llt = loop {
        match op.factor_shifted(shift) {
            Ok(f) => break f,
            Err(e) if shift < 1e-3 * norm => {
                log::debug!("{e}; retrying with a larger shift");
                shift *= 100.0;
            }
            Err(e) => return Err(e),
        }
    };
    log::debug!(
        "factored M + {shift:e} I (n = {n}, nnz(lower M) = {}), block {block}",
        op.nnz()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = Mat::<f64>::from_fn(n, block, |_, _| rng.gen::<f64>() - 0.5);
    deflate(&mut x, components);
    let mut q = orthonormalize(&x);

    let mut residuals = vec![f64::INFINITY; nev];
    for iteration in 1..=opts.max_iterations {
        let mut y = q.clone();
        llt.solve_in_place(y.as_mut());
        deflate(&mut y, components);
        q = orthonormalize(&y);

        let mq = op.apply_block(&q);
        let mut h = q.transpose() * &mq;
        for a in 0..block {
            for b in 0..a {
                let s = 0.5 * (h[(a, b)] + h[(b, a)]);
                h[(a, b)] = s;
                h[(b, a)] = s;
            }
        }
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Factorization(format!("Rayleigh-Ritz: {e:?}")))?;
        let theta: Vec<f64> = (0..block).map(|i| evd.S()[i]).collect();
        let ritz = &q * evd.U();
        let m_ritz = &mq * evd.U();

        for (i, r) in residuals.iter_mut().enumerate() {
            *r = (0..n)
                .map(|row| {
                    let e = m_ritz[(row, i)] - theta[i] * ritz[(row, i)];
                    e * e
                })
                .sum::<f64>()
                .sqrt();
        }
        q = ritz;
        if residuals.iter().all(|&r| r <= opts.tolerance * norm) {
            log::debug!("eigensolver converged in {iteration} iterations");
            return Ok(EigenPairs {
                values: theta[..nev].to_vec(),
                vectors: (0..nev).map(|c| (0..n).map(|i| q[(i, c)]).collect()).collect(),
                residuals,
                iterations: iteration,
                norm_bound: norm,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        residuals,
    })
}

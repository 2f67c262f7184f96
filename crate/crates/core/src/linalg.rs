//! Linear solvers used by the field and transport subproblems.
//!
//! Three tools, each matched to the structure that makes it safe:
//! a conjugate-gradient iteration with optional mean projection for the
//! pure-Neumann SPD problems (potential, pressure); an LU factorization of
//! banded matrices without pivoting for the transport systems, whose
//! transposes are strictly diagonally dominant so elimination is stable and
//! the mass balance is satisfied to rounding rather than to an iterative
//! tolerance; and a dense LU with partial pivoting for small reference
//! systems.

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("{what} did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize, residual: f64 },
    #[error("matrix is singular (zero pivot at row {row})")]
    SingularMatrix { row: usize },
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct CgStats<S = f64> {
    pub iterations: usize,
    /// Final residual norm relative to the right-hand side norm.
    pub relative_residual: S,
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm2<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

fn remove_mean<S: Scalar>(v: &mut [S]) {
    let mean = v.iter().copied().sum::<S>() / S::cast(v.len() as f64);
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Preconditioned conjugate gradients for `A x = b` with `A` given as a
/// matrix-vector closure. With `project_mean`, the iteration runs in the
/// subspace of mean-free vectors: the right fix for operators whose kernel
/// is the constants (zero-flux elliptic problems), provided `b` is
/// compatible. `x` carries the initial guess in and the solution out.
pub fn conjugate_gradient<S: Scalar>(
    apply: impl Fn(&[S], &mut [S]),
    b: &[S],
    x: &mut [S],
    jacobi_diag: Option<&[S]>,
    rel_tol: S,
    max_iters: usize,
    project_mean: bool,
    what: &'static str,
) -> Result<CgStats<S>, LinalgError> {
    let n = b.len();
    assert_eq!(x.len(), n);
    let mut b = b.to_vec();
    if project_mean {
        remove_mean(&mut b);
        remove_mean(x);
    }
    let b_norm = norm2(&b);
    if b_norm == S::zero() {
        for xi in x.iter_mut() {
            *xi = S::zero();
        }
        return Ok(CgStats { iterations: 0, relative_residual: S::zero() });
    }

    let precondition = |r: &[S], z: &mut [S]| {
        match jacobi_diag {
            Some(d) => {
                for i in 0..n {
                    z[i] = r[i] / d[i];
                }
            }
            None => z.copy_from_slice(r),
        }
        if project_mean {
            remove_mean(z);
        }
    };

    let mut r = vec![S::zero(); n];
    let mut ap = vec![S::zero(); n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    if project_mean {
        remove_mean(&mut r);
    }
    let mut z = vec![S::zero(); n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = norm2(&r) / b_norm;
    if res <= rel_tol {
        return Ok(CgStats { iterations: 0, relative_residual: res });
    }

    for iter in 1..=max_iters {
        apply(&p, &mut ap);
        if project_mean {
            remove_mean(&mut ap);
        }
        let pap = dot(&p, &ap);
        if pap <= S::zero() {
            // the operator is not positive definite on this subspace
            return Err(LinalgError::NonConvergence {
                what,
                iterations: iter,
                residual: res.to_f64_lossy(),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm2(&r) / b_norm;
        if res <= rel_tol {
            if project_mean {
                remove_mean(x);
            }
            return Ok(CgStats { iterations: iter, relative_residual: res });
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinalgError::NonConvergence {
        what,
        iterations: max_iters,
        residual: res.to_f64_lossy(),
    })
}

/// Assembly target shared by the banded and dense matrix types, so one
/// discretization routine can feed either backend.
pub trait MatrixSink<S> {
    fn add(&mut self, row: usize, col: usize, value: S);
}

/// Square banded matrix with `bandwidth` sub- and superdiagonals, stored as
/// one row of `2 * bandwidth + 1` entries per matrix row.
#[derive(Debug, Clone)]
pub struct BandedMatrix<S = f64> {
    n: usize,
    bandwidth: usize,
    data: Vec<S>,
}

impl<S: Scalar> BandedMatrix<S> {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        assert!(n > 0);
        Self { n, bandwidth, data: vec![S::zero(); n * (2 * bandwidth + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn offset(&self, row: usize, col: usize) -> usize {
        let w = 2 * self.bandwidth + 1;
        debug_assert!(row < self.n && col < self.n);
        assert!(
            col + self.bandwidth >= row && col <= row + self.bandwidth,
            "entry ({row}, {col}) outside bandwidth {}",
            self.bandwidth
        );
        row * w + (col + self.bandwidth - row)
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        if col + self.bandwidth < row || col > row + self.bandwidth {
            return S::zero();
        }
        self.data[self.offset(row, col)]
    }

    pub fn matvec(&self, x: &[S], out: &mut [S]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let j_start = i.saturating_sub(self.bandwidth);
            let j_end = (i + self.bandwidth).min(self.n - 1);
            let mut acc = S::zero();
            for j in j_start..=j_end {
                acc += self.data[self.offset(i, j)] * x[j];
            }
            out[i] = acc;
        }
    }

    /// Factor in place without pivoting. Correct and backward-stable when
    /// the matrix or its transpose is strictly diagonally dominant (then no
    /// pivot growth occurs and partial pivoting would not permute anyway).
    pub fn factorize(mut self) -> Result<BandedLu<S>, LinalgError> {
        let n = self.n;
        let bw = self.bandwidth;
        for k in 0..n {
            let pivot = self.data[self.offset(k, k)];
            if pivot == S::zero() || !pivot.is_finite() {
                return Err(LinalgError::SingularMatrix { row: k });
            }
            let i_end = (k + bw).min(n - 1);
            for i in (k + 1)..=i_end {
                let ik = self.offset(i, k);
                let m = self.data[ik] / pivot;
                self.data[ik] = m;
                if m != S::zero() {
                    let j_end = (k + bw).min(n - 1);
                    for j in (k + 1)..=j_end {
                        let u = self.data[self.offset(k, j)];
                        if u != S::zero() {
                            let idx = self.offset(i, j);
                            self.data[idx] -= m * u;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { matrix: self })
    }
}

impl<S: Scalar> MatrixSink<S> for BandedMatrix<S> {
    fn add(&mut self, row: usize, col: usize, value: S) {
        let idx = self.offset(row, col);
        self.data[idx] += value;
    }
}

/// LU factors of a banded matrix (unit lower within the band, upper within
/// the band), produced by `BandedMatrix::factorize`.
#[derive(Debug, Clone)]
pub struct BandedLu<S = f64> {
    matrix: BandedMatrix<S>,
}

impl<S: Scalar> BandedLu<S> {
    pub fn solve_in_place(&self, rhs: &mut [S]) {
        let n = self.matrix.n;
        let bw = self.matrix.bandwidth;
        assert_eq!(rhs.len(), n);
        // forward substitution with unit lower factor
        for i in 0..n {
            let j_start = i.saturating_sub(bw);
            let mut acc = rhs[i];
            for j in j_start..i {
                acc -= self.matrix.data[self.matrix.offset(i, j)] * rhs[j];
            }
            rhs[i] = acc;
        }
        // back substitution with the upper factor
        for i in (0..n).rev() {
            let j_end = (i + bw).min(n - 1);
            let mut acc = rhs[i];
            for j in (i + 1)..=j_end {
                acc -= self.matrix.data[self.matrix.offset(i, j)] * rhs[j];
            }
            rhs[i] = acc / self.matrix.data[self.matrix.offset(i, i)];
        }
    }
}

/// Dense row-major matrix for small reference systems.
#[derive(Debug, Clone)]
pub struct DenseMatrix<S = f64> {
    n_rows: usize,
    n_cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, data: vec![S::zero(); n_rows * n_cols] }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> S {
        self.data[row * self.n_cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: S) {
        self.data[row * self.n_cols + col] = value;
    }

    pub fn matvec(&self, x: &[S], out: &mut [S]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(out.len(), self.n_rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.data[i * self.n_cols..(i + 1) * self.n_cols], x);
        }
    }

    /// LU with partial (row) pivoting.
    pub fn factorize(mut self) -> Result<DenseLu<S>, LinalgError> {
        assert_eq!(self.n_rows, self.n_cols, "LU needs a square matrix");
        let n = self.n_rows;
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut best = k;
            let mut best_val = self.get(k, k).abs();
            for i in (k + 1)..n {
                let v = self.get(i, k).abs();
                if v > best_val {
                    best = i;
                    best_val = v;
                }
            }
            if best_val == S::zero() || !best_val.is_finite() {
                return Err(LinalgError::SingularMatrix { row: k });
            }
            if best != k {
                piv.swap(k, best);
                for j in 0..n {
                    let a = self.get(k, j);
                    let b = self.get(best, j);
                    self.set(k, j, b);
                    self.set(best, j, a);
                }
            }
            let pivot = self.get(k, k);
            for i in (k + 1)..n {
                let m = self.get(i, k) / pivot;
                self.set(i, k, m);
                if m != S::zero() {
                    for j in (k + 1)..n {
                        let v = self.get(i, j) - m * self.get(k, j);
                        self.set(i, j, v);
                    }
                }
            }
        }
        Ok(DenseLu { lu: self, piv })
    }
}

impl<S: Scalar> MatrixSink<S> for DenseMatrix<S> {
    fn add(&mut self, row: usize, col: usize, value: S) {
        self.data[row * self.n_cols + col] += value;
    }
}

/// LU factors with a row permutation, from `DenseMatrix::factorize`.
#[derive(Debug, Clone)]
pub struct DenseLu<S = f64> {
    lu: DenseMatrix<S>,
    piv: Vec<usize>,
}

impl<S: Scalar> DenseLu<S> {
    pub fn solve(&self, rhs: &[S], x: &mut [S]) {
        let n = self.lu.n_rows;
        assert_eq!(rhs.len(), n);
        assert_eq!(x.len(), n);
        for i in 0..n {
            x[i] = rhs[self.piv[i]];
        }
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu.get(i, j) * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu.get(i, j) * x[j];
            }
            x[i] = acc / self.lu.get(i, i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 1D zero-flux Laplacian: singular SPD with constant kernel.
    fn neumann_laplacian(n: usize) -> DenseMatrix<f64> {
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            if i > 0 {
                a.add(i, i - 1, -1.0);
                a.add(i, i, 1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
                a.add(i, i, 1.0);
            }
        }
        a
    }

    #[test]
    fn cg_matches_direct_solve_on_spd_system() {
        let n = 40;
        let mut a = neumann_laplacian(n);
        for i in 0..n {
            a.add(i, i, 0.7); // shift away from singularity
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut x_cg = vec![0.0; n];
        let a_for_cg = a.clone();
        let stats = conjugate_gradient(
            |v, out| a_for_cg.matvec(v, out),
            &b,
            &mut x_cg,
            None,
            1e-12,
            1000,
            false,
            "test",
        )
        .unwrap();
        assert!(stats.relative_residual <= 1e-12);

        let lu = a.factorize().unwrap();
        let mut x_direct = vec![0.0; n];
        lu.solve(&b, &mut x_direct);
        for i in 0..n {
            assert!((x_cg[i] - x_direct[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn projected_cg_solves_singular_neumann_system() {
        let n = 50;
        let a = neumann_laplacian(n);
        // compatible rhs: mean-free
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);

        let mut x = vec![0.0; n];
        let a_ref = a.clone();
        conjugate_gradient(|v, out| a_ref.matvec(v, out), &b, &mut x, None, 1e-12, 2000, true, "test")
            .unwrap();
        // solution is mean-free and satisfies A x = b
        assert!(x.iter().sum::<f64>().abs() < 1e-9);
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-9, "row {i}: {} vs {}", ax[i], b[i]);
        }
    }

    #[test]
    fn jacobi_preconditioning_helps_on_badly_scaled_system() {
        let n = 60;
        let mut a = DenseMatrix::zeros(n, n);
        // symmetric tridiagonal with couplings spanning five decades
        for i in 0..n - 1 {
            let s = 10f64.powi((i % 5) as i32);
            a.add(i, i + 1, -s);
            a.add(i + 1, i, -s);
            a.add(i, i, s);
            a.add(i + 1, i + 1, s);
        }
        for i in 0..n {
            a.add(i, i, 10f64.powi((i % 5) as i32));
        }
        let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut x_plain = vec![0.0; n];
        let a1 = a.clone();
        let plain = conjugate_gradient(|v, o| a1.matvec(v, o), &b, &mut x_plain, None, 1e-10, 10_000, false, "t")
            .unwrap();
        let mut x_pre = vec![0.0; n];
        let a2 = a.clone();
        let pre = conjugate_gradient(|v, o| a2.matvec(v, o), &b, &mut x_pre, Some(&diag), 1e-10, 10_000, false, "t")
            .unwrap();
        assert!(pre.iterations <= plain.iterations, "{} > {}", pre.iterations, plain.iterations);
        for i in 0..n {
            assert!((x_plain[i] - x_pre[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn cg_reports_nonconvergence() {
        // indefinite matrix: CG must fail rather than return garbage
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 0, 1.0);
        a.set(1, 1, -1.0);
        let b = vec![1.0, 1.0];
        let mut x = vec![0.0, 0.0];
        let r = conjugate_gradient(|v, o| a.matvec(v, o), &b, &mut x, None, 1e-14, 10, false, "t");
        assert!(matches!(r, Err(LinalgError::NonConvergence { .. })));
    }

    #[test]
    fn banded_lu_solves_tridiagonal_hand_case() {
        // [2 -1; -1 2] x = [1; 1] -> x = [1; 1]
        let mut m: BandedMatrix<f64> = BandedMatrix::zeros(2, 1);
        m.add(0, 0, 2.0);
        m.add(0, 1, -1.0);
        m.add(1, 0, -1.0);
        m.add(1, 1, 2.0);
        let lu = m.factorize().unwrap();
        let mut rhs = vec![1.0, 1.0];
        lu.solve_in_place(&mut rhs);
        assert!((rhs[0] - 1.0).abs() < 1e-15);
        assert!((rhs[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn banded_and_dense_lu_agree_on_random_dominant_system() {
        let n = 64;
        let bw = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut banded: BandedMatrix<f64> = BandedMatrix::zeros(n, bw);
        let mut dense = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let mut off_sum = 0.0;
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                if i != j {
                    let v = rng.gen_range(-1.0..1.0);
                    banded.add(i, j, v);
                    dense.add(i, j, v);
                    off_sum += v.abs();
                }
            }
            let d = off_sum + 1.0 + rng.gen_range(0.0..1.0);
            banded.add(i, i, d);
            dense.add(i, i, d);
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x_band = b.clone();
        banded.factorize().unwrap().solve_in_place(&mut x_band);
        let mut x_dense = vec![0.0; n];
        dense.factorize().unwrap().solve(&b, &mut x_dense);
        for i in 0..n {
            assert!((x_band[i] - x_dense[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn dense_lu_pivots_when_needed() {
        // leading zero forces a row swap
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 0, 0.0);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 0.0);
        let lu = a.factorize().unwrap();
        let mut x = vec![0.0, 0.0];
        lu.solve(&[3.0, 5.0], &mut x);
        assert_eq!(x, vec![5.0, 3.0]);
    }

    #[test]
    fn singular_matrices_are_detected() {
        let mut a = DenseMatrix::zeros(2, 2);
        a.set(0, 0, 1.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 2.0);
        a.set(1, 1, 4.0);
        assert!(matches!(a.factorize(), Err(LinalgError::SingularMatrix { .. })));

        let mut b: BandedMatrix<f64> = BandedMatrix::zeros(2, 1);
        b.add(0, 0, 0.0);
        b.add(1, 1, 1.0);
        assert!(matches!(b.factorize(), Err(LinalgError::SingularMatrix { .. })));
    }

    #[test]
    fn banded_solve_preserves_column_sums_in_residual() {
        // For a matrix whose columns each sum to s_j, the solve must satisfy
        // sum_j s_j x_j = sum_i b_i to rounding: this is the discrete mass
        // balance the transport step relies on.
        let n = 128;
        let bw = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut banded: BandedMatrix<f64> = BandedMatrix::zeros(n, bw);
        let mut col_sums = vec![0.0; n];
        for i in 0..n {
            let mut off = 0.0;
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                if i != j {
                    let v = rng.gen_range(0.0..0.5);
                    banded.add(i, j, -v);
                    col_sums[j] -= v;
                    off += v;
                }
            }
            banded.add(i, i, off + 1.0);
            col_sums[i] += off + 1.0;
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b_total: f64 = b.iter().sum();
        let mut x = b.clone();
        banded.factorize().unwrap().solve_in_place(&mut x);
        let weighted: f64 = col_sums.iter().zip(&x).map(|(s, xi)| s * xi).sum();
        assert!(
            (weighted - b_total).abs() < 1e-11 * b_total.abs().max(1.0),
            "{weighted} vs {b_total}"
        );
    }
}

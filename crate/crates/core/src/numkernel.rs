//! Dense complex linear algebra shared by every other module.
//!
//! Kronecker products use the first-factor-major convention: entry
//! `(i * rows_b + p, j * cols_b + q)` of `A ⊗ B` is `A[(i, j)] * B[(p, q)]`.
//! Partial traces and the realignment map are defined against that same
//! ordering, so no other module indexes tensor products by hand.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Builds a matrix from row-major entries, rejecting wrong lengths and
/// non-finite values.
pub fn from_row_major(rows: usize, cols: usize, entries: &[Complex64]) -> Result<ComplexMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::DimensionMismatch(format!("empty {rows}x{cols} matrix")));
    }
    if entries.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} entries for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    let m = DMatrix::from_row_slice(rows, cols, entries);
    check_finite(&m)?;
    Ok(m)
}

pub fn check_finite(m: &ComplexMatrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

pub fn identity(n: usize) -> ComplexMatrix {
    DMatrix::identity(n, n)
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().sum()
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> ComplexMatrix {
    DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| c(v))))
}

/// Thresholds used by rank, definiteness and convergence decisions. Rank and
/// definiteness cutoffs are relative to the largest eigenvalue magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rank_rel: f64,
    pub pd_min: f64,
    pub conv_eps: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rank_rel: 1e-9, pd_min: 1e-10, conv_eps: 1e-10 }
    }
}

impl Tolerances {
    pub fn new(rank_rel: f64, pd_min: f64, conv_eps: f64) -> Result<Self> {
        let t = Tolerances { rank_rel, pd_min, conv_eps };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rank_rel", self.rank_rel), ("pd_min", self.pd_min), ("conv_eps", self.conv_eps)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidTolerance(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn with_conv_eps(self, conv_eps: f64) -> Result<Self> {
        Tolerances::new(self.rank_rel, self.pd_min, conv_eps)
    }
}

/// Square matrix that is exactly conjugate-symmetric as stored. Construction
/// symmetrizes `(M + M*) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        check_finite(&m)?;
        let n = m.nrows();
        let mut h = m;
        for i in 0..n {
            h[(i, i)] = c(h[(i, i)].re);
            for j in (i + 1)..n {
                let avg = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
                h[(i, j)] = avg;
                h[(j, i)] = avg.conj();
            }
        }
        Ok(HermitianMatrix(h))
    }

    /// Like [`HermitianMatrix::new`] but refuses inputs whose anti-Hermitian
    /// part exceeds `rel_tol * max(1, ‖M‖_F)` in Frobenius norm.
    pub fn new_checked(m: ComplexMatrix, rel_tol: f64) -> Result<Self> {
        if m.is_square() {
            let deviation = (&m - m.adjoint()).norm() * 0.5;
            if deviation > rel_tol * m.norm().max(1.0) {
                return Err(Error::NotHermitian { deviation });
            }
        }
        Self::new(m)
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix(identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        trace(&self.0).re
    }

    pub fn scaled(&self, s: f64) -> Self {
        HermitianMatrix(&self.0 * c(s))
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(herm_eig(self)?.values)
    }

    /// Smallest and largest eigenvalue.
    pub fn spectrum_bounds(&self) -> Result<(f64, f64)> {
        let v = self.eigenvalues()?;
        Ok((*v.last().unwrap(), v[0]))
    }

    /// Positive semidefinite up to `rel * max|λ|`.
    pub fn is_psd(&self, rel: f64) -> Result<bool> {
        let (lo, hi) = self.spectrum_bounds()?;
        let scale = lo.abs().max(hi.abs());
        Ok(lo >= -rel * scale)
    }

    /// Positive definite: smallest eigenvalue above `pd_min` times the largest.
    pub fn is_pd(&self, tol: &Tolerances) -> Result<bool> {
        let (lo, hi) = self.spectrum_bounds()?;
        Ok(hi > 0.0 && lo > tol.pd_min * hi)
    }
}

impl AsRef<ComplexMatrix> for HermitianMatrix {
    fn as_ref(&self) -> &ComplexMatrix {
        &self.0
    }
}

/// Spectral decomposition `H = V diag(values) V*` with `values` descending.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigen {
    /// `V f(Λ) V*` for a real function of the eigenvalues.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let v = &self.vectors;
        let mut scaled = v.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let fl = c(f(l));
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= fl);
        }
        scaled * v.adjoint()
    }
}

pub fn herm_eig(h: &HermitianMatrix) -> Result<Eigen> {
    let n = h.dim();
    let bound = (n as f64) * h.0.norm() * 1e-12;
    let residual = |e: &Eigen| (e.map(|l| l) - &h.0).norm();
    if let Some(e) = eig_tridiagonal(h) {
        if residual(&e) <= bound {
            return Ok(e);
        }
    }
    let e = eig_jacobi(h);
    let r = residual(&e);
    if r > bound && r > 0.0 {
        return Err(Error::NumericalFailure { what: "Hermitian eigensolver", residual: r });
    }
    Ok(e)
}

fn sorted_eigen(values: &[f64], vectors: &ComplexMatrix) -> Eigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    Eigen {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors: ComplexMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]),
    }
}

fn eig_tridiagonal(h: &HermitianMatrix) -> Option<Eigen> {
    let eig = nalgebra::linalg::SymmetricEigen::try_new(h.0.clone(), f64::EPSILON, 10_000)?;
    Some(sorted_eigen(eig.eigenvalues.as_slice(), &eig.eigenvectors))
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
fn eig_jacobi(h: &HermitianMatrix) -> Eigen {
    let n = h.dim();
    let mut a = h.0.clone();
    let mut v = identity(n);
    let scale = a.norm();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-16 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let b = a[(p, q)];
                if b.norm() == 0.0 {
                    continue;
                }
                let phase = b / b.norm();
                let zeta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * b.norm());
                let t = if zeta == 0.0 { 1.0 } else { zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt()) };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                // A <- A U, V <- V U with U = diag(1, e^{-iφ}) * [[c, s], [-s, c]].
                for mat in [&mut a, &mut v] {
                    for i in 0..n {
                        let xp = mat[(i, p)];
                        let xq = mat[(i, q)] * phase.conj();
                        mat[(i, p)] = xp * cs - xq * sn;
                        mat[(i, q)] = xp * sn + xq * cs;
                    }
                }
                // A <- U* A.
                for j in 0..n {
                    let xp = a[(p, j)];
                    let xq = a[(q, j)] * phase;
                    a[(p, j)] = xp * cs - xq * sn;
                    a[(q, j)] = xp * sn + xq * cs;
                }
            }
        }
    }
    let values: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    sorted_eigen(&values, &v)
}

/// `H^{-1/2}` for positive definite `H`.
pub fn pd_inv_sqrt(h: &HermitianMatrix, tol: &Tolerances) -> Result<HermitianMatrix> {
    let eig = herm_eig(h)?;
    let largest = eig.values[0];
    let smallest = *eig.values.last().unwrap();
    if !(largest > 0.0 && smallest > tol.pd_min * largest) {
        return Err(Error::NotPositiveDefinite { eigenvalue: smallest, largest });
    }
    HermitianMatrix::new(eig.map(|l| 1.0 / l.sqrt()))
}

/// Thin singular value decomposition `M = U diag(s) V*`; `U` is
/// `rows x r`, `V` is `cols x r` with `r = min(rows, cols)`, and `s` is
/// descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub s: Vec<f64>,
    pub v: ComplexMatrix,
}

pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    let bound = (m.nrows().max(m.ncols()) as f64) * m.norm() * 1e-12;
    let residual = |d: &Svd| (&d.u * diag(&d.s) * d.v.adjoint() - m).norm();
    if let Some(d) = svd_bidiagonal(m) {
        if residual(&d) <= bound {
            return Ok(d);
        }
    }
    // The implicit-shift solver occasionally mis-deflates exactly rank-deficient
    // inputs; one-sided Jacobi is slower but reliable at these sizes.
    let d = svd_jacobi(m);
    let r = residual(&d);
    if r > bound && r > 0.0 {
        return Err(Error::NumericalFailure { what: "SVD", residual: r });
    }
    Ok(d)
}

fn svd_bidiagonal(m: &ComplexMatrix) -> Option<Svd> {
    let r = m.nrows().min(m.ncols());
    let dec = nalgebra::linalg::SVD::try_new(m.clone(), true, true, 5.0 * f64::EPSILON, 10_000)?;
    let (u, vt) = (dec.u?, dec.v_t?);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let s: Vec<f64> = order.iter().map(|&i| dec.singular_values[i]).collect();
    let u = ComplexMatrix::from_fn(m.nrows(), r, |i, j| u[(i, order[j])]);
    let v = ComplexMatrix::from_fn(m.ncols(), r, |i, j| vt[(order[j], i)].conj());
    Some(Svd { u, s, v })
}

/// One-sided (Hestenes) Jacobi SVD.
fn svd_jacobi(m: &ComplexMatrix) -> Svd {
    if m.nrows() < m.ncols() {
        let t = svd_jacobi(&m.adjoint());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut v = identity(cols);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                if gamma.norm() <= 1e-15 * (alpha * beta).sqrt() || gamma.norm() == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = gamma / gamma.norm();
                let zeta = (beta - alpha) / (2.0 * gamma.norm());
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let xp = mat[(i, p)];
                        let xq = mat[(i, q)] * phase.conj();
                        mat[(i, p)] = xp * cs - xq * sn;
                        mat[(i, q)] = xp * sn + xq * cs;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v = ComplexMatrix::from_fn(cols, cols, |i, j| v[(i, order[j])]);
    let top = s.first().copied().unwrap_or(0.0);
    let mut u = ComplexMatrix::zeros(rows, cols);
    let mut filled = 0;
    for (j, &sj) in s.iter().enumerate() {
        if sj > top * 1e-14 && sj > 0.0 {
            let col = a.column(order[j]) / c(sj);
            u.set_column(j, &col);
            filled = j + 1;
        }
    }
    // Complete the left factor for the null part by Gram-Schmidt on unit vectors.
    let mut e = 0;
    while filled < cols && e < rows {
        let mut x = nalgebra::DVector::<Complex64>::zeros(rows);
        x[e] = ONE;
        for j in 0..filled {
            let proj = u.column(j).dotc(&x);
            x -= u.column(j) * proj;
        }
        let nx = x.norm();
        if nx > 1e-8 {
            u.set_column(filled, &(x / c(nx)));
            filled += 1;
        }
        e += 1;
    }
    Svd { u, s, v }
}

/// Thin SVD of a real matrix, kept real so that singular vectors carry no
/// arbitrary complex phases.
pub(crate) fn svd_real(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let r = m.nrows().min(m.ncols());
    let dec = nalgebra::linalg::SVD::try_new(m.clone(), true, true, 5.0 * f64::EPSILON, 10_000)
        .ok_or(Error::NumericalFailure { what: "SVD", residual: f64::NAN })?;
    let (u, vt) = (dec.u.unwrap(), dec.v_t.unwrap());
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let s: Vec<f64> = order.iter().map(|&i| dec.singular_values[i]).collect();
    let u = DMatrix::from_fn(m.nrows(), r, |i, j| u[(i, order[j])]);
    let v = DMatrix::from_fn(m.ncols(), r, |i, j| vt[(order[j], i)]);
    let bound = (m.nrows().max(m.ncols()) as f64) * m.norm() * 1e-12;
    let residual = (&u * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * v.transpose() - m).norm();
    if residual <= bound {
        return Ok((u, s, v));
    }
    let d = svd_jacobi(&m.map(c));
    Ok((d.u.map(|z| z.re), d.s, d.v.map(|z| z.re)))
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

fn check_bipartite(m: &ComplexMatrix, k: usize, mm: usize) -> Result<()> {
    if k == 0 || mm == 0 || m.nrows() != k * mm || m.ncols() != k * mm {
        return Err(Error::DimensionMismatch(format!(
            "expected a {0}x{0} matrix for factors ({k}, {mm}), got {1}x{2}",
            k * mm,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Block `(i, j)` of a `km x km` matrix, an `m x m` matrix.
pub(crate) fn block(m: &ComplexMatrix, i: usize, j: usize, bs: usize) -> ComplexMatrix {
    m.view((i * bs, j * bs), (bs, bs)).into_owned()
}

/// Trace over the first (size `k`) factor: `Σ_i M[block(i, i)]`, an `m x m`
/// matrix.
pub fn partial_trace_first(m: &ComplexMatrix, k: usize, mm: usize) -> Result<ComplexMatrix> {
    check_bipartite(m, k, mm)?;
    let mut out = ComplexMatrix::zeros(mm, mm);
    for i in 0..k {
        out += m.view((i * mm, i * mm), (mm, mm));
    }
    Ok(out)
}

/// Trace over the second (size `m`) factor, a `k x k` matrix.
pub fn partial_trace_second(m: &ComplexMatrix, k: usize, mm: usize) -> Result<ComplexMatrix> {
    check_bipartite(m, k, mm)?;
    Ok(ComplexMatrix::from_fn(k, k, |i, j| (0..mm).map(|p| m[(i * mm + p, j * mm + p)]).sum()))
}

/// Number of eigenvalues with `|λ| > rank_rel * max|λ|`.
pub fn rank_tol(h: &HermitianMatrix, tol: &Tolerances) -> Result<usize> {
    let values = h.eigenvalues()?;
    let top = values.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
    if top == 0.0 {
        return Ok(0);
    }
    Ok(values.iter().filter(|l| l.abs() > tol.rank_rel * top).count())
}

/// Realignment of a `km x km` matrix into a `k² x m²` matrix:
/// `out[(i*k + p, j*m + q)] = M[(i*m + j, p*m + q)]`, so that
/// `realign(A ⊗ B) = vec(A) vec(B)ᵀ` with row-major `vec`.
pub fn realign(m: &ComplexMatrix, k: usize, mm: usize) -> Result<ComplexMatrix> {
    check_bipartite(m, k, mm)?;
    Ok(ComplexMatrix::from_fn(k * k, mm * mm, |r, col| {
        let (i, p) = (r / k, r % k);
        let (j, q) = (col / mm, col % mm);
        m[(i * mm + j, p * mm + q)]
    }))
}

/// Inverse of [`realign`].
pub fn unrealign(r: &ComplexMatrix, k: usize, mm: usize) -> Result<ComplexMatrix> {
    if r.nrows() != k * k || r.ncols() != mm * mm {
        return Err(Error::DimensionMismatch(format!(
            "expected a {}x{} realigned matrix, got {}x{}",
            k * k,
            mm * mm,
            r.nrows(),
            r.ncols()
        )));
    }
    Ok(ComplexMatrix::from_fn(k * mm, k * mm, |row, col| {
        let (i, j) = (row / mm, row % mm);
        let (p, q) = (col / mm, col % mm);
        r[(i * k + p, j * mm + q)]
    }))
}

/// Row-major `n x n` matrix from a length-`n²` vector.
pub(crate) fn unvec(v: impl Iterator<Item = Complex64>, n: usize) -> ComplexMatrix {
    let data: Vec<Complex64> = v.collect();
    DMatrix::from_row_slice(n, n, &data)
}

/// Orthonormal basis of Hermitian matrices of `M_n` (with respect to
/// `tr(A B*)`): `Id/√n` first, then traceless diagonal matrices, then
/// symmetric and antisymmetric off-diagonal pairs. Column `a` of the result is
/// the row-major `vec` of the `a`-th basis element, so columns `1..n²` span
/// the traceless Hermitian matrices.
pub(crate) fn hermitian_basis(n: usize) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut cols: Vec<ComplexMatrix> = Vec::with_capacity(n * n);
    cols.push(identity(n) * c(1.0 / (n as f64).sqrt()));
    for l in 1..n {
        let norm = ((l * (l + 1)) as f64).sqrt();
        let mut d = ComplexMatrix::zeros(n, n);
        for j in 0..l {
            d[(j, j)] = c(1.0 / norm);
        }
        d[(l, l)] = c(-(l as f64) / norm);
        cols.push(d);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut sym = ComplexMatrix::zeros(n, n);
            sym[(i, j)] = c(s);
            sym[(j, i)] = c(s);
            cols.push(sym);
            let mut asym = ComplexMatrix::zeros(n, n);
            asym[(i, j)] = Complex64::new(0.0, -s);
            asym[(j, i)] = Complex64::new(0.0, s);
            cols.push(asym);
        }
    }
    ComplexMatrix::from_fn(n * n, n * n, |r, a| cols[a][(r / n, r % n)])
}

/// `‖U*U − Id‖_F`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    (u.adjoint() * u - identity(u.nrows())).norm()
}

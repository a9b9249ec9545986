//! Dense real eigen- and singular-value routines for small matrices.
//!
//! Symmetric spectra use Householder tridiagonalization followed by implicit
//! QL with Wilkinson-style shifts; matrices that are already tridiagonal
//! (every one-dimensional lattice operator) skip the reduction. Singular
//! values of non-symmetric matrices come from one-sided Jacobi rotations,
//! which keeps exactly-zero singular values at the `ε‖M‖` level so integer
//! ranks are recovered at tight relative tolerances.

use thiserror::Error;

use crate::stepfn::StepFunction;

/// Default relative tolerance for numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Relative asymmetry accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

const QL_MAX_ITER: usize = 60;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("expected {expected} entries for a {dim}x{dim} matrix, got {got}")]
    Shape {
        dim: usize,
        expected: usize,
        got: usize,
    },
    #[error("matrix dimension must be positive")]
    EmptyMatrix,
    #[error("matrix not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("eigensolver did not converge for eigenvalue {index} after {iterations} iterations")]
    NoConvergence { index: usize, iterations: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Square real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

/// Real symmetric matrix, row-major, full storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    inner: Matrix,
}

impl Matrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::EmptyMatrix);
        }
        if data.len() != dim * dim {
            return Err(LinalgError::Shape {
                dim,
                expected: dim * dim,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite(pos / dim, pos % dim));
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.dim + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self.get(c, r))
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|r| (r + 1..self.dim).all(|c| self.get(r, c) == self.get(c, r)))
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimensionMismatch(self.dim, other.dim));
        }
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimensionMismatch(self.dim, other.dim));
        }
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self { dim: n, data: out })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }
}

impl SymMatrix {
    /// Validates symmetry within `SYMMETRY_TOL · max|entries|` and stores the
    /// symmetrized matrix.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        Self::from_matrix(Matrix::new(dim, data)?)
    }

    pub fn from_matrix(m: Matrix) -> Result<Self, LinalgError> {
        let n = m.dim;
        let tol = SYMMETRY_TOL * m.max_abs();
        for r in 0..n {
            for c in r + 1..n {
                let gap = (m.get(r, c) - m.get(c, r)).abs();
                if gap > tol {
                    return Err(LinalgError::NotSymmetric { row: r, col: c, gap });
                }
            }
        }
        let mut inner = m;
        for r in 0..n {
            for c in r + 1..n {
                let avg = 0.5 * (inner.get(r, c) + inner.get(c, r));
                inner.set(r, c, avg);
                inner.set(c, r, avg);
            }
        }
        Ok(Self { inner })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: Matrix::zeros(dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: Matrix::identity(dim),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.inner.set(i, i, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.inner.get(r, c)
    }

    /// Sets both `(r, c)` and `(c, r)`.
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.inner.set(r, c, v);
        self.inner.set(c, r, v);
    }

    pub fn add_to(&mut self, r: usize, c: usize, v: f64) {
        let cur = self.get(r, c);
        self.set(r, c, cur + v);
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.inner.row(r)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    fn is_tridiagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|r| {
            let row = self.row(r);
            row[..r.saturating_sub(1)].iter().all(|&x| x == 0.0)
                && row[(r + 2).min(n)..].iter().all(|&x| x == 0.0)
        })
    }
}

/// Eigenvalues with multiplicity, ascending.
pub fn sym_spectrum(m: &SymMatrix) -> Result<Vec<f64>, LinalgError> {
    let (mut diag, mut off) = tridiagonalize(m, None);
    tridiagonal_ql(&mut diag, &mut off, None)?;
    diag.sort_by(f64::total_cmp);
    Ok(diag)
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (`off[i]` couples `i` and `i + 1`), ascending.
pub fn tridiagonal_spectrum(diag: &[f64], off: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if diag.is_empty() {
        return Err(LinalgError::EmptyMatrix);
    }
    if off.len() + 1 != diag.len() {
        return Err(LinalgError::DimensionMismatch(diag.len(), off.len() + 1));
    }
    if let Some(k) = diag.iter().position(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite(k, k));
    }
    if let Some(k) = off.iter().position(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite(k, k + 1));
    }
    let mut d = diag.to_vec();
    let mut sub: Vec<f64> = std::iter::once(0.0).chain(off.iter().copied()).collect();
    tridiagonal_ql(&mut d, &mut sub, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Eigenvalues ascending together with the orthogonal matrix whose columns
/// are the matching eigenvectors, so that `M = Q Λ Qᵀ`.
pub fn sym_eigen(m: &SymMatrix) -> Result<(Vec<f64>, Matrix), LinalgError> {
    let n = m.dim();
    let mut q = Matrix::identity(n);
    let (mut diag, mut off) = tridiagonalize(m, Some(&mut q));
    tridiagonal_ql(&mut diag, &mut off, Some(&mut q))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
    let values = order.iter().map(|&k| diag[k]).collect();
    let vectors = Matrix::from_fn(n, |r, c| q.get(r, order[c]));
    Ok((values, vectors))
}

/// Singular values, ascending.
///
/// Symmetric inputs use `|eigenvalues|`; everything else goes through
/// one-sided Jacobi on the columns, which computes the spectrum of
/// `(MᵀM)^{1/2}` without forming `MᵀM`.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>, LinalgError> {
    if m.is_symmetric() {
        let sym = SymMatrix { inner: m.clone() };
        let mut s: Vec<f64> = sym_spectrum(&sym)?.into_iter().map(f64::abs).collect();
        s.sort_by(f64::total_cmp);
        Ok(s)
    } else {
        jacobi_singular_values(m)
    }
}

pub(crate) fn jacobi_singular_values(m: &Matrix) -> Result<Vec<f64>, LinalgError> {
    let n = m.dim;
    // Column-major working copy.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| (0..n).map(|r| m.get(r, c)).collect()).collect();
    // Columns below this squared norm are rounding noise; rotating them
    // against each other never settles.
    let frob2: f64 = m.data.iter().map(|x| x * x).sum();
    let negligible = (f64::EPSILON * f64::EPSILON) * frob2;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for (&x, &y) in cp.iter().zip(cq) {
                        a += x * x;
                        b += y * y;
                        g += x * y;
                    }
                    (a, b, g)
                };
                if gamma == 0.0
                    || alpha.min(beta) <= negligible
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let (cp, cq) = (&mut left[p], &mut right[0]);
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence {
            index: 0,
            iterations: JACOBI_MAX_SWEEPS,
        });
    }
    let mut s: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Number of singular values above `tol · max(1, σ_max)`.
pub fn numerical_rank(m: &Matrix, tol: f64) -> Result<usize, LinalgError> {
    let s = singular_values(m)?;
    Ok(rank_from_singular_values(&s, tol))
}

/// Number of singular values at or below `tol · max(1, σ_max)`.
pub fn numerical_nullity(m: &Matrix, tol: f64) -> Result<usize, LinalgError> {
    let s = singular_values(m)?;
    let cutoff = rank_cutoff(&s, tol);
    Ok(s.iter().filter(|&&x| x <= cutoff).count())
}

pub(crate) fn rank_cutoff(singular: &[f64], tol: f64) -> f64 {
    let largest = singular.iter().copied().fold(0.0, f64::max);
    tol * largest.max(1.0)
}

pub(crate) fn rank_from_singular_values(singular: &[f64], tol: f64) -> usize {
    let cutoff = rank_cutoff(singular, tol);
    singular.iter().filter(|&&x| x > cutoff).count()
}

/// Normalized eigenvalue counting function `λ ↦ #{eig ≤ λ} / dim`.
pub fn spectral_distribution(m: &SymMatrix) -> Result<StepFunction, LinalgError> {
    let eig = sym_spectrum(m)?;
    let n = eig.len();
    Ok(StepFunction::from_counts(eig, n))
}

/// Householder reduction to tridiagonal form. Returns `(diagonal, sub)` with
/// `sub[i]` coupling `i - 1` and `i` (`sub[0] = 0`). When `q` is given it is
/// overwritten by the orthogonal factor with `M = Q T Qᵀ`.
fn tridiagonalize(m: &SymMatrix, q: Option<&mut Matrix>) -> (Vec<f64>, Vec<f64>) {
    let n = m.dim();
    if m.is_tridiagonal() {
        let diag = (0..n).map(|i| m.get(i, i)).collect();
        let sub = (0..n).map(|i| if i == 0 { 0.0 } else { m.get(i, i - 1) }).collect();
        if let Some(q) = q {
            *q = Matrix::identity(n);
        }
        return (diag, sub);
    }

    let mut a = m.inner.data.clone();
    let mut sub = vec![0.0; n];
    // Householder vectors u_i (length i) and their scalars h_i.
    let mut reflectors: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    let mut p = vec![0.0; n];

    for i in (1..n).rev() {
        let l = i - 1;
        let row_i = &a[i * n..i * n + i];
        let scale: f64 = row_i.iter().map(|x| x.abs()).sum();
        if l == 0 || scale == 0.0 {
            sub[i] = a[i * n + l];
            continue;
        }
        let mut u: Vec<f64> = row_i.iter().map(|x| x / scale).collect();
        let mut h: f64 = u.iter().map(|x| x * x).sum();
        let f = u[l];
        let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
        sub[i] = scale * g;
        h -= f * g;
        u[l] = f - g;

        // p = A u / h on the leading (i x i) block.
        for j in 0..i {
            let row = &a[j * n..j * n + i];
            let dot: f64 = row.iter().zip(&u).map(|(x, y)| x * y).sum();
            p[j] = dot / h;
        }
        let k: f64 = u.iter().zip(&p[..i]).map(|(x, y)| x * y).sum::<f64>() / (2.0 * h);
        for j in 0..i {
            p[j] -= k * u[j];
        }
        for j in 0..i {
            let (uj, pj) = (u[j], p[j]);
            let row = &mut a[j * n..j * n + i];
            for ((x, &uk), &pk) in row.iter_mut().zip(&u).zip(&p[..i]) {
                *x -= uj * pk + pj * uk;
            }
        }
        for x in &mut a[i * n..i * n + i] {
            *x = 0.0;
        }
        reflectors.push((i, u, h));
    }

    let diag = (0..n).map(|i| a[i * n + i]).collect();

    if let Some(q) = q {
        // Q = H_{n-1} ... H_1, applied from the smallest reflector outwards.
        let mut acc = Matrix::identity(n);
        for (i, u, h) in reflectors.iter().rev() {
            let i = *i;
            for c in 0..n {
                let dot: f64 = (0..i).map(|r| u[r] * acc.get(r, c)).sum::<f64>() / h;
                if dot != 0.0 {
                    for r in 0..i {
                        let v = acc.get(r, c) - dot * u[r];
                        acc.set(r, c, v);
                    }
                }
            }
        }
        *q = acc;
    }
    (diag, sub)
}

/// Implicit QL on a symmetric tridiagonal matrix. `diag` is overwritten with
/// the (unsorted) eigenvalues; rotations are accumulated into `z` when given.
fn tridiagonal_ql(
    diag: &mut [f64],
    sub: &mut [f64],
    mut z: Option<&mut Matrix>,
) -> Result<(), LinalgError> {
    let n = diag.len();
    if n == 1 {
        return Ok(());
    }
    // e[i] couples i and i + 1.
    let mut e: Vec<f64> = (0..n).map(|i| if i + 1 < n { sub[i + 1] } else { 0.0 }).collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            if iter == QL_MAX_ITER {
                return Err(LinalgError::NoConvergence {
                    index: l,
                    iterations: iter,
                });
            }
            iter += 1;
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        let zf = z.get(k, i + 1);
                        let zi = z.get(k, i);
                        z.set(k, i + 1, s * zi + c * zf);
                        z.set(k, i, c * zi - s * zf);
                    }
                }
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    sub.fill(0.0);
    Ok(())
}

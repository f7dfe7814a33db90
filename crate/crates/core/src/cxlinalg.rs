//! Complex linear algebra on the underlying space of a finite-dimensional
//! algebra: sparse vectors and structure tensors, orthonormal subspaces,
//! kernels and least-squares solves, algebra closures and commutants.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type DVec = DVector<C64>;
pub type DMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),
}

fn check_dim(expected: usize, found: usize) -> Result<(), LinalgError> {
    if expected == found {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch { expected, found })
    }
}

/// Full singular value decomposition `a = u diag(s) v*`, `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMat,
    pub s: Vec<f64>,
    pub v: DMat,
}

pub fn svd(a: &DMat) -> Svd {
    svd_parts(a, true, true)
}

/// Singular values only, descending.
pub fn singular_values(a: &DMat) -> Vec<f64> {
    svd_parts(a, false, false).s
}

/// `u` and `v` are left empty unless requested.
fn svd_parts(a: &DMat, want_u: bool, want_v: bool) -> Svd {
    use faer::dyn_stack::{MemBuffer, MemStack};
    use faer::linalg::svd::{self as fsvd, ComputeSvdVectors, SvdParams};
    use faer::Auto;
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return Svd {
            u: DMat::identity(m, m),
            s: Vec::new(),
            v: DMat::identity(n, n),
        };
    }
    let f = faer::Mat::<C64>::from_fn(m, n, |i, j| a[(i, j)]);
    // divide and conquer loses accuracy on clustered singular values
    let params = SvdParams {
        recursion_threshold: usize::MAX,
        ..<SvdParams as Auto<C64>>::auto()
    };
    let which = |w: bool| if w { ComputeSvdVectors::Full } else { ComputeSvdVectors::No };
    let mut s = faer::diag::Diag::<C64>::zeros(m.min(n));
    let mut u = faer::Mat::<C64>::zeros(if want_u { m } else { 0 }, if want_u { m } else { 0 });
    let mut v = faer::Mat::<C64>::zeros(if want_v { n } else { 0 }, if want_v { n } else { 0 });
    let req = fsvd::svd_scratch::<C64>(m, n, which(want_u), which(want_v), faer::Par::Seq, params.into());
    let mut buf = MemBuffer::new(req);
    fsvd::svd(
        f.as_ref(),
        s.as_mut(),
        want_u.then(|| u.as_mut()),
        want_v.then(|| v.as_mut()),
        faer::Par::Seq,
        MemStack::new(&mut buf),
        params.into(),
    )
    .expect("singular value decomposition converges");
    let s = s.column_vector();
    Svd {
        u: DMat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        s: (0..m.min(n)).map(|i| s[i].re).collect(),
        v: DMat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
    }
}

/// Upper triangular factor of a tall matrix, `min(m, n) x n`.
fn qr_r(a: &DMat) -> DMat {
    let (m, n) = (a.nrows(), a.ncols());
    let f = faer::Mat::<C64>::from_fn(m, n, |i, j| a[(i, j)]);
    let qr = f.qr();
    let r = qr.thin_R();
    DMat::from_fn(r.nrows(), n, |i, j| r[(i, j)])
}

/// Numerical thresholds. Ranks use `eps_rank` on singular values, identity
/// checks use `eps_residual`, sparse storage drops entries below `eps_drop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub eps_rank: f64,
    pub eps_residual: f64,
    pub eps_drop: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            eps_rank: 1e-9,
            eps_residual: 1e-9,
            eps_drop: 1e-12,
        }
    }
}

impl Tolerance {
    pub fn new(eps_rank: f64, eps_residual: f64, eps_drop: f64) -> Result<Self, LinalgError> {
        let tol = Self {
            eps_rank,
            eps_residual,
            eps_drop,
        };
        tol.validate()?;
        Ok(tol)
    }

    pub fn validate(&self) -> Result<(), LinalgError> {
        let finite = [self.eps_rank, self.eps_residual, self.eps_drop]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0);
        if !finite {
            return Err(LinalgError::InvalidTolerance("all thresholds must be positive".into()));
        }
        if self.eps_drop > self.eps_residual {
            return Err(LinalgError::InvalidTolerance(
                "eps_drop must not exceed eps_residual".into(),
            ));
        }
        Ok(())
    }
}

/// Sparse vector keyed by basis index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector {
    dim: usize,
    entries: BTreeMap<usize, C64>,
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.entries.insert(i, ONE);
        v
    }

    pub fn from_dense(v: &[C64], drop: f64) -> Self {
        let entries = v
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > drop)
            .map(|(i, &c)| (i, c))
            .collect();
        Self { dim: v.len(), entries }
    }

    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (usize, C64)>, drop: f64) -> Self {
        let mut acc: BTreeMap<usize, C64> = BTreeMap::new();
        for (i, c) in entries {
            assert!(i < dim, "index {i} out of range for dimension {dim}");
            *acc.entry(i).or_insert(ZERO) += c;
        }
        acc.retain(|_, c| c.norm() > drop);
        Self { dim, entries: acc }
    }

    pub fn to_dense(&self) -> DVec {
        let mut out = DVec::zeros(self.dim);
        for (&i, &c) in &self.entries {
            out[i] = c;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize) -> C64 {
        self.entries.get(&i).copied().unwrap_or(ZERO)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.entries.iter().map(|(&i, &c)| (i, c))
    }

    pub fn norm(&self) -> f64 {
        self.entries.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Vector) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, c) in self.iter() {
            worst = worst.max((c - other.get(i)).norm());
        }
        for (i, c) in other.iter() {
            if !self.entries.contains_key(&i) {
                worst = worst.max(c.norm());
            }
        }
        worst
    }
}

/// Linear map `C^ncols -> C^nrows` stored column by column, so that
/// `column(j)` is the image of the `j`-th basis vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    columns: Vec<Vec<(usize, C64)>>,
}

impl SparseMatrix {
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, C64)>,
        drop: f64,
    ) -> Self {
        let mut acc: Vec<BTreeMap<usize, C64>> = vec![BTreeMap::new(); ncols];
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "entry ({r},{c}) out of range");
            *acc[c].entry(r).or_insert(ZERO) += v;
        }
        let columns = acc
            .into_iter()
            .map(|col| col.into_iter().filter(|(_, v)| v.norm() > drop).collect())
            .collect();
        Self { nrows, ncols, columns }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, ONE)), 0.0)
    }

    pub fn from_dense(m: &DMat, drop: f64) -> Self {
        let trip = (0..m.ncols()).flat_map(|c| (0..m.nrows()).map(move |r| (r, c, m[(r, c)])));
        Self::from_triplets(m.nrows(), m.ncols(), trip, drop)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn column(&self, j: usize) -> &[(usize, C64)] {
        &self.columns[j]
    }

    /// `(row, col, value)` sorted by column then row.
    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(c, col)| col.iter().map(move |&(r, v)| (r, c, v)))
            .collect()
    }

    pub fn apply(&self, x: &DVec) -> DVec {
        assert_eq!(x.len(), self.ncols);
        let mut out = DVec::zeros(self.nrows);
        for (j, col) in self.columns.iter().enumerate() {
            let xj = x[j];
            if xj == ZERO {
                continue;
            }
            for &(r, v) in col {
                out[r] += v * xj;
            }
        }
        out
    }

    /// Same as `apply` but conjugates `x` first, for antilinear maps.
    pub fn apply_conj(&self, x: &DVec) -> DVec {
        self.apply(&x.map(|c| c.conj()))
    }

    pub fn to_dense(&self) -> DMat {
        let mut m = DMat::zeros(self.nrows, self.ncols);
        for (c, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                m[(r, c)] = v;
            }
        }
        m
    }

    pub fn transpose(&self) -> SparseMatrix {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().into_iter().map(|(r, c, v)| (c, r, v)),
            0.0,
        )
    }
}

/// Sparse order-3 tensor `T[a][b][c]`, grouped by the first index and sorted
/// by `(b, c)` inside each group.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    slices: Vec<Vec<(usize, usize, C64)>>,
}

impl Tensor3 {
    pub fn from_triplets(
        dims: [usize; 3],
        entries: impl IntoIterator<Item = (usize, usize, usize, C64)>,
        drop: f64,
    ) -> Self {
        let mut acc: Vec<BTreeMap<(usize, usize), C64>> = vec![BTreeMap::new(); dims[0]];
        for (a, b, c, v) in entries {
            assert!(a < dims[0] && b < dims[1] && c < dims[2], "tensor entry out of range");
            *acc[a].entry((b, c)).or_insert(ZERO) += v;
        }
        let slices = acc
            .into_iter()
            .map(|m| {
                m.into_iter()
                    .filter(|(_, v)| v.norm() > drop)
                    .map(|((b, c), v)| (b, c, v))
                    .collect()
            })
            .collect();
        Self { dims, slices }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn nnz(&self) -> usize {
        self.slices.iter().map(|s| s.len()).sum()
    }

    pub fn slice(&self, a: usize) -> &[(usize, usize, C64)] {
        &self.slices[a]
    }

    /// Entries `(b, c, v)` of `T[a][b][..]`.
    pub fn fiber(&self, a: usize, b: usize) -> &[(usize, usize, C64)] {
        let s = &self.slices[a];
        let lo = s.partition_point(|e| e.0 < b);
        let hi = s.partition_point(|e| e.0 <= b);
        &s[lo..hi]
    }

    /// Sorted `(a, b, c, v)` quadruples.
    pub fn triplets(&self) -> Vec<(usize, usize, usize, C64)> {
        self.slices
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().map(move |&(b, c, v)| (a, b, c, v)))
            .collect()
    }

    /// Re-indexes entries through `f`, which maps old `(a,b,c)` to new positions.
    pub fn permuted(&self, dims: [usize; 3], f: impl Fn(usize, usize, usize) -> (usize, usize, usize)) -> Self {
        Self::from_triplets(
            dims,
            self.triplets().into_iter().map(|(a, b, c, v)| {
                let (x, y, z) = f(a, b, c);
                (x, y, z, v)
            }),
            0.0,
        )
    }

    /// `out[c] = sum x[a] y[b] T[a][b][c]`.
    pub fn bilinear(&self, x: &DVec, y: &DVec) -> DVec {
        let mut out = DVec::zeros(self.dims[2]);
        for (a, s) in self.slices.iter().enumerate() {
            let xa = x[a];
            if xa == ZERO {
                continue;
            }
            for &(b, c, v) in s {
                let yb = y[b];
                if yb != ZERO {
                    out[c] += xa * yb * v;
                }
            }
        }
        out
    }

    /// Matrix of `y -> bilinear(x, y)`.
    pub fn left_matrix(&self, x: &DVec) -> DMat {
        let mut m = DMat::zeros(self.dims[2], self.dims[1]);
        for (a, s) in self.slices.iter().enumerate() {
            let xa = x[a];
            if xa == ZERO {
                continue;
            }
            for &(b, c, v) in s {
                m[(c, b)] += xa * v;
            }
        }
        m
    }

    /// Matrix of `x -> bilinear(x, y)`.
    pub fn right_matrix(&self, y: &DVec) -> DMat {
        let mut m = DMat::zeros(self.dims[2], self.dims[0]);
        for (a, s) in self.slices.iter().enumerate() {
            for &(b, c, v) in s {
                let yb = y[b];
                if yb != ZERO {
                    m[(c, a)] += yb * v;
                }
            }
        }
        m
    }
}

/// Incremental orthonormal basis builder: projects out the current basis twice
/// and keeps new directions whose singular values exceed the rank threshold.
#[derive(Debug, Clone)]
pub struct SpanBuilder {
    dim: usize,
    q: DMat,
    pending: Vec<DVec>,
    eps_rank: f64,
}

impl SpanBuilder {
    pub fn new(dim: usize, tol: &Tolerance) -> Self {
        Self {
            dim,
            q: DMat::zeros(dim, 0),
            pending: Vec::new(),
            eps_rank: tol.eps_rank,
        }
    }

    pub fn with_basis(basis: &Subspace, tol: &Tolerance) -> Self {
        Self {
            dim: basis.dim,
            q: basis.basis.clone(),
            pending: Vec::new(),
            eps_rank: tol.eps_rank,
        }
    }

    pub fn push(&mut self, v: DVec) {
        assert_eq!(v.len(), self.dim);
        self.pending.push(v);
        if self.pending.len() >= 64.max(self.dim / 2) {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let scale = self
            .pending
            .iter()
            .map(|v| v.norm())
            .fold(1.0f64, f64::max);
        let mut p = DMat::from_columns(&self.pending);
        self.pending.clear();
        if self.q.ncols() == self.dim {
            return;
        }
        for _ in 0..2 {
            let coeff = self.q.adjoint() * &p;
            p -= &self.q * coeff;
        }
        let svd = svd(&p);
        let u = svd.u;
        let keep: Vec<usize> = (0..svd.s.len()).filter(|&i| svd.s[i] > self.eps_rank * scale).collect();
        if keep.is_empty() {
            return;
        }
        let mut fresh = u.select_columns(&keep);
        let coeff = self.q.adjoint() * &fresh;
        fresh -= &self.q * coeff;
        for mut col in fresh.column_iter_mut() {
            let n = col.norm();
            col /= C64::new(n, 0.0);
        }
        let r = self.q.ncols();
        let mut q = self.q.clone().resize_horizontally(r + keep.len(), ZERO);
        q.columns_mut(r, keep.len()).copy_from(&fresh);
        self.q = q;
    }

    pub fn rank(&mut self) -> usize {
        self.flush();
        self.q.ncols()
    }

    pub fn finish(mut self) -> Subspace {
        self.flush();
        Subspace {
            dim: self.dim,
            basis: self.q,
        }
    }
}

/// Subspace with an orthonormal basis stored as matrix columns.
#[derive(Debug, Clone)]
pub struct Subspace {
    dim: usize,
    basis: DMat,
}

impl Subspace {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            basis: DMat::zeros(dim, 0),
        }
    }

    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            basis: DMat::identity(dim, dim),
        }
    }

    pub fn span(dim: usize, vectors: &[DVec], tol: &Tolerance) -> Result<Self, LinalgError> {
        let mut b = SpanBuilder::new(dim, tol);
        for v in vectors {
            check_dim(dim, v.len())?;
            b.push(v.clone());
        }
        Ok(b.finish())
    }

    pub fn span_sparse(dim: usize, vectors: &[Vector], tol: &Tolerance) -> Result<Self, LinalgError> {
        let dense: Vec<DVec> = vectors.iter().map(|v| v.to_dense()).collect();
        Self::span(dim, &dense, tol)
    }

    /// Span of coordinate vectors.
    pub fn coordinate(dim: usize, indices: &[usize]) -> Self {
        let mut basis = DMat::zeros(dim, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            basis[(i, c)] = ONE;
        }
        Self { dim, basis }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMat {
        &self.basis
    }

    pub fn basis_vectors(&self) -> Vec<DVec> {
        self.basis.column_iter().map(|c| c.into_owned()).collect()
    }

    pub fn sparse_basis(&self, drop: f64) -> Vec<Vector> {
        self.basis
            .column_iter()
            .map(|c| Vector::from_dense(c.as_slice(), drop))
            .collect()
    }

    /// Reduced row echelon basis, sparse for coordinate-aligned subspaces.
    pub fn echelon_basis(&self, drop: f64) -> Vec<Vector> {
        let mut m = self.basis.transpose();
        let (r, n) = (m.nrows(), m.ncols());
        let mut row = 0;
        for col in 0..n {
            if row == r {
                break;
            }
            let (best, val) = (row..r)
                .map(|i| (i, m[(i, col)].norm()))
                .fold((row, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            if val <= 1e-9 {
                continue;
            }
            m.swap_rows(row, best);
            let piv = m[(row, col)];
            let pr = m.row(row) / piv;
            m.set_row(row, &pr);
            for i in 0..r {
                if i != row {
                    let f = m[(i, col)];
                    if f != ZERO {
                        let sub = m.row(row) * f;
                        let new = m.row(i) - sub;
                        m.set_row(i, &new);
                    }
                }
            }
            row += 1;
        }
        (0..row)
            .map(|i| {
                let v: Vec<C64> = m.row(i).iter().copied().collect();
                Vector::from_dense(&v, drop)
            })
            .collect()
    }

    pub fn project(&self, v: &DVec) -> DVec {
        &self.basis * (self.basis.adjoint() * v)
    }

    /// Norm of the component of `v` orthogonal to the subspace.
    pub fn residual(&self, v: &DVec) -> f64 {
        (v - self.project(v)).norm()
    }

    /// Largest column residual of `m` against the subspace.
    pub fn matrix_residual(&self, m: &DMat) -> f64 {
        let r = m - &self.basis * (self.basis.adjoint() * m);
        r.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn contains(&self, v: &DVec, tol: &Tolerance) -> Result<bool, LinalgError> {
        check_dim(self.dim, v.len())?;
        Ok(self.residual(v) <= tol.eps_rank * v.norm().max(1.0))
    }

    pub fn contains_subspace(&self, other: &Subspace, tol: &Tolerance) -> Result<bool, LinalgError> {
        check_dim(self.dim, other.dim)?;
        Ok(self.matrix_residual(&other.basis) <= tol.eps_rank)
    }

    pub fn equal(&self, other: &Subspace, tol: &Tolerance) -> Result<bool, LinalgError> {
        Ok(self.rank() == other.rank()
            && self.contains_subspace(other, tol)?
            && other.contains_subspace(self, tol)?)
    }

    /// Largest principal angle, `pi/2` when ranks differ.
    pub fn max_principal_angle(&self, other: &Subspace) -> Result<f64, LinalgError> {
        check_dim(self.dim, other.dim)?;
        if self.rank() != other.rank() {
            return Ok(std::f64::consts::FRAC_PI_2);
        }
        if self.rank() == 0 {
            return Ok(0.0);
        }
        let r = &other.basis - &self.basis * (self.basis.adjoint() * &other.basis);
        let s = singular_values(&r).first().copied().unwrap_or(0.0);
        Ok(s.min(1.0).asin())
    }

    pub fn sum(&self, other: &Subspace, tol: &Tolerance) -> Result<Subspace, LinalgError> {
        check_dim(self.dim, other.dim)?;
        let mut b = SpanBuilder::with_basis(self, tol);
        for c in other.basis.column_iter() {
            b.push(c.into_owned());
        }
        Ok(b.finish())
    }

    /// Kernel of the stacked complementary projectors.
    pub fn intersect(&self, other: &Subspace, tol: &Tolerance) -> Result<Subspace, LinalgError> {
        check_dim(self.dim, other.dim)?;
        let n = self.dim;
        let id = DMat::identity(n, n);
        let ps = &id - &self.basis * self.basis.adjoint();
        let pt = &id - &other.basis * other.basis.adjoint();
        let mut k = KernelBuilder::new(n);
        k.push_matrix(&ps, tol.eps_drop);
        k.push_matrix(&pt, tol.eps_drop);
        Ok(k.kernel(tol))
    }

    /// Image of the subspace under a dense linear map.
    pub fn image(&self, m: &DMat, tol: &Tolerance) -> Result<Subspace, LinalgError> {
        check_dim(self.dim, m.ncols())?;
        let img = m * &self.basis;
        let cols: Vec<DVec> = img.column_iter().map(|c| c.into_owned()).collect();
        Subspace::span(m.nrows(), &cols, tol)
    }
}

/// Accumulates rows of an overdetermined system `A x = b` into a small
/// triangular factor (blocked QR), so that tall sparse systems never need to
/// be held in memory at once.
#[derive(Debug, Clone)]
pub struct KernelBuilder {
    ncols: usize,
    r: DMat,
    pending: Vec<C64>,
    pending_rows: usize,
    rhs_norm_sqr: f64,
}

impl KernelBuilder {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            r: DMat::zeros(0, ncols + 1),
            pending: Vec::new(),
            pending_rows: 0,
            rhs_norm_sqr: 0.0,
        }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    fn block_rows(&self) -> usize {
        (4 * (self.ncols + 1)).max(256)
    }

    /// Adds the equation `row . x = rhs`.
    pub fn push_row(&mut self, row: &[C64], rhs: C64) {
        assert_eq!(row.len(), self.ncols);
        self.pending.extend_from_slice(row);
        self.pending.push(rhs);
        self.rhs_norm_sqr += rhs.norm_sqr();
        self.pending_rows += 1;
        if self.pending_rows >= self.block_rows() {
            self.flush();
        }
    }

    pub fn push_sparse_row(&mut self, row: &[(usize, C64)], rhs: C64) {
        let mut dense = vec![ZERO; self.ncols];
        for &(i, c) in row {
            dense[i] += c;
        }
        self.push_row(&dense, rhs);
    }

    /// Adds every row of `m` with zero right-hand side, skipping negligible rows.
    pub fn push_matrix(&mut self, m: &DMat, drop: f64) {
        assert_eq!(m.ncols(), self.ncols);
        let mut row = vec![ZERO; self.ncols];
        for i in 0..m.nrows() {
            let mut nonzero = false;
            for j in 0..self.ncols {
                row[j] = m[(i, j)];
                nonzero |= row[j].norm() > drop;
            }
            if nonzero {
                self.push_row(&row, ZERO);
            }
        }
    }

    fn flush(&mut self) {
        if self.pending_rows == 0 {
            return;
        }
        let w = self.ncols + 1;
        let block = DMat::from_row_slice(self.pending_rows, w, &self.pending);
        self.pending.clear();
        self.pending_rows = 0;
        let stacked = if self.r.nrows() == 0 {
            block
        } else {
            let top = self.r.nrows();
            let mut s = DMat::zeros(top + block.nrows(), w);
            s.rows_mut(0, top).copy_from(&self.r);
            s.rows_mut(top, block.nrows()).copy_from(&block);
            s
        };
        self.r = if stacked.nrows() <= w { stacked } else { qr_r(&stacked) };
    }

    /// Square `(n+1) x (n+1)` triangular factor of `[A | b]`.
    fn factor(&mut self) -> DMat {
        self.flush();
        let w = self.ncols + 1;
        let mut r = DMat::zeros(w, w);
        let k = self.r.nrows().min(w);
        r.rows_mut(0, k).copy_from(&self.r.rows(0, k));
        r
    }

    /// Right singular vectors of `A` with singular value below `eps_rank`.
    pub fn kernel(&mut self, tol: &Tolerance) -> Subspace {
        let n = self.ncols;
        if n == 0 {
            return Subspace::zero(0);
        }
        let r = self.factor();
        let a = r.view((0, 0), (n, n)).into_owned();
        let svd = svd_parts(&a, false, true);
        let cols: Vec<DVec> = (0..n)
            .filter(|&i| svd.s[i] < tol.eps_rank)
            .map(|i| svd.v.column(i).into_owned())
            .collect();
        let mut basis = DMat::zeros(n, cols.len());
        for (c, v) in cols.iter().enumerate() {
            basis.set_column(c, v);
        }
        Subspace { dim: n, basis }
    }

    /// Minimum-norm least-squares solution, returned only when the residual is
    /// below `eps_residual`.
    pub fn solve(&mut self, tol: &Tolerance) -> Option<DVec> {
        self.solve_with_residual(tol)
            .and_then(|(x, res)| (res < tol.eps_residual).then_some(x))
    }

    pub fn solve_with_residual(&mut self, tol: &Tolerance) -> Option<(DVec, f64)> {
        let n = self.ncols;
        let r = self.factor();
        let a = r.view((0, 0), (n, n)).into_owned();
        let b = r.view((0, n), (n, 1)).into_owned();
        let rho = r[(n, n)].norm_sqr();
        let svd = svd(&a);
        let mut x = DVec::zeros(n);
        for (i, &s) in svd.s.iter().enumerate() {
            if s > tol.eps_rank {
                let c = (svd.u.column(i).adjoint() * &b)[(0, 0)] / s;
                x += svd.v.column(i) * c;
            }
        }
        let fit = (&a * &x - b.column(0)).norm_squared();
        if !fit.is_finite() {
            return None;
        }
        Some((x, (rho + fit).sqrt()))
    }
}

/// Kernel of a dense matrix.
pub fn kernel(a: &DMat, tol: &Tolerance) -> Subspace {
    let mut k = KernelBuilder::new(a.ncols());
    k.push_matrix(a, 0.0);
    k.kernel(tol)
}

/// Least-squares solve of a sparse system, `None` when inconsistent.
pub fn solve_linear(a: &SparseMatrix, b: &DVec, tol: &Tolerance) -> Result<Option<DVec>, LinalgError> {
    check_dim(a.nrows(), b.len())?;
    let dense = a.to_dense();
    let mut k = KernelBuilder::new(a.ncols());
    let mut row = vec![ZERO; a.ncols()];
    for i in 0..dense.nrows() {
        for j in 0..a.ncols() {
            row[j] = dense[(i, j)];
        }
        k.push_row(&row, b[i]);
    }
    Ok(k.solve(tol))
}

pub fn sparse_kernel(a: &SparseMatrix, tol: &Tolerance) -> Subspace {
    kernel(&a.to_dense(), tol)
}

/// Smallest subspace containing `unit` and `generators` and closed under the
/// product encoded by `mul`.
pub fn algebra_closure(
    mul: &Tensor3,
    unit: &DVec,
    generators: &[DVec],
    tol: &Tolerance,
) -> Result<Subspace, LinalgError> {
    let dim = mul.dims()[2];
    check_dim(dim, unit.len())?;
    let mut b = SpanBuilder::new(dim, tol);
    b.push(unit.clone());
    for g in generators {
        check_dim(dim, g.len())?;
        b.push(g.clone());
    }
    let mut current = b.finish();
    let gens = current.basis_vectors();
    for _ in 0..=dim {
        let mut next = SpanBuilder::with_basis(&current, tol);
        for s in current.basis_vectors() {
            for g in &gens {
                next.push(mul.bilinear(&s, g));
                next.push(mul.bilinear(g, &s));
            }
        }
        let grown = next.finish();
        if grown.rank() == current.rank() {
            return Ok(grown);
        }
        current = grown;
    }
    Ok(current)
}

/// `{b : b s = s b for all s in S}`.
pub fn commutant(mul: &Tensor3, s: &Subspace, tol: &Tolerance) -> Result<Subspace, LinalgError> {
    let dim = mul.dims()[2];
    check_dim(dim, s.dim())?;
    let mut k = KernelBuilder::new(dim);
    for v in s.basis_vectors() {
        let m = mul.right_matrix(&v) - mul.left_matrix(&v);
        k.push_matrix(&m, tol.eps_drop);
    }
    Ok(k.kernel(tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVec {
        DVec::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerance::new(1e-9, 1e-9, 1e-12).is_ok());
        assert!(Tolerance::new(1e-9, 1e-12, 1e-9).is_err());
        assert!(Tolerance::new(0.0, 1e-9, 1e-12).is_err());
    }

    #[test]
    fn sparse_vector_drops_small_entries() {
        let v = Vector::from_dense(&[ONE, C64::new(1e-14, 0.0), C64::new(0.0, 2.0)], 1e-12);
        assert_eq!(v.nnz(), 2);
        assert_eq!(v.get(2), C64::new(0.0, 2.0));
        assert_eq!(Vector::from_dense(v.to_dense().as_slice(), 1e-12), v);
    }

    #[test]
    fn intersect_and_sum_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Subspace::span(10, &[random_vec(&mut rng, 10), random_vec(&mut rng, 10)], &tol()).unwrap();
        assert!(s.intersect(&s, &tol()).unwrap().equal(&s, &tol()).unwrap());
        assert!(s.sum(&Subspace::zero(10), &tol()).unwrap().equal(&s, &tol()).unwrap());
    }

    #[test]
    fn random_subspaces_meet_trivially() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = Subspace::span(34, &(0..3).map(|_| random_vec(&mut rng, 34)).collect::<Vec<_>>(), &tol()).unwrap();
        let t = Subspace::span(34, &(0..3).map(|_| random_vec(&mut rng, 34)).collect::<Vec<_>>(), &tol()).unwrap();
        assert_eq!(s.rank(), 3);
        assert_eq!(s.intersect(&t, &tol()).unwrap().rank(), 0);
        assert_eq!(s.sum(&t, &tol()).unwrap().rank(), 6);
    }

    #[test]
    fn coordinate_vectors_are_independent() {
        let vs: Vec<DVec> = (0..9).map(|i| Vector::basis(34, i).to_dense()).collect();
        assert_eq!(Subspace::span(34, &vs, &tol()).unwrap().rank(), 9);
    }

    #[test]
    fn kernel_of_identity_and_zero() {
        assert_eq!(kernel(&DMat::identity(5, 5), &tol()).rank(), 0);
        assert_eq!(kernel(&DMat::zeros(3, 5), &tol()).rank(), 5);
    }

    #[test]
    fn kernel_of_tall_system_matches_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 12;
        let null: Vec<DVec> = (0..4).map(|_| random_vec(&mut rng, n)).collect();
        let null_space = Subspace::span(n, &null, &tol()).unwrap();
        let proj = DMat::identity(n, n) - null_space.basis() * null_space.basis().adjoint();
        // many random rows orthogonal to the planted kernel
        let mut k = KernelBuilder::new(n);
        for _ in 0..1500 {
            let row = proj.transpose() * random_vec(&mut rng, n);
            k.push_row(row.as_slice(), ZERO);
        }
        let ker = k.kernel(&tol());
        assert!(ker.equal(&null_space, &tol()).unwrap());
    }

    #[test]
    fn least_squares_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMat::from_fn(30, 6, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let x = random_vec(&mut rng, 6);
        let b = &a * &x;
        let sa = SparseMatrix::from_dense(&a, 0.0);
        let got = solve_linear(&sa, &b, &tol()).unwrap().unwrap();
        assert!((got - x).norm() < 1e-10);
        let mut bad = b.clone();
        bad[0] += ONE;
        assert!(solve_linear(&sa, &bad, &tol()).unwrap().is_none());
    }

    #[test]
    fn principal_angle_detects_tilt() {
        let e0 = Subspace::coordinate(3, &[0]);
        let tilt = Subspace::span(3, &[DVec::from_vec(vec![ONE, C64::new(1e-3, 0.0), ZERO])], &tol()).unwrap();
        let angle = e0.max_principal_angle(&tilt).unwrap();
        assert!((angle - 1e-3).abs() < 1e-8);
        assert!(!e0.equal(&tilt, &tol()).unwrap());
    }

    fn matrix_algebra(n: usize) -> Tensor3 {
        // matrix units e_ij e_kl = d_jk e_il, index i*n+j
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    t.push((i * n + j, j * n + l, i * n + l, ONE));
                }
            }
        }
        Tensor3::from_triplets([n * n; 3], t, 0.0)
    }

    #[test]
    fn closure_and_commutant_in_matrix_algebra() {
        let n = 3;
        let mul = matrix_algebra(n);
        let unit = DVec::from_fn(n * n, |k, _| if k / n == k % n { ONE } else { ZERO });
        let only_unit = algebra_closure(&mul, &unit, &[], &tol()).unwrap();
        assert_eq!(only_unit.rank(), 1);
        // diagonal e_00 generates the diagonal block algebra C + C (2-dim)
        let e00 = Vector::basis(9, 0).to_dense();
        assert_eq!(algebra_closure(&mul, &unit, std::slice::from_ref(&e00), &tol()).unwrap().rank(), 2);
        // e_01 together with e_10 generates M_2 + C
        let e01 = Vector::basis(9, 1).to_dense();
        let e10 = Vector::basis(9, 3).to_dense();
        assert_eq!(algebra_closure(&mul, &unit, &[e01, e10], &tol()).unwrap().rank(), 5);
        assert_eq!(commutant(&mul, &only_unit, &tol()).unwrap().rank(), 9);
        assert_eq!(commutant(&mul, &Subspace::full(9), &tol()).unwrap().rank(), 1);
        let diag = algebra_closure(&mul, &unit, &[e00], &tol()).unwrap();
        // commutant of span{1, e00} is C e00 + M_2 on the complement
        assert_eq!(commutant(&mul, &diag, &tol()).unwrap().rank(), 5);
    }

    #[test]
    fn tensor_fiber_lookup() {
        let mul = matrix_algebra(2);
        // e_01 e_10 = e_00
        assert_eq!(mul.fiber(1, 2), &[(2, 0, ONE)]);
        assert!(mul.fiber(1, 1).is_empty());
    }

    #[test]
    fn svd_conventions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DMat::from_fn(4, 4, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let d = svd(&a);
        let s = DMat::from_diagonal(&DVec::from_iterator(4, d.s.iter().map(|&x| C64::new(x, 0.0))));
        let back = &d.u * s * d.v.adjoint();
        assert!((back - &a).norm() < 1e-12);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn dimension_formula(seed in 0u64..1000, r1 in 0usize..6, r2 in 0usize..6, shared in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 12;
            let common: Vec<DVec> = (0..shared).map(|_| random_vec(&mut rng, n)).collect();
            let mut a = common.clone();
            a.extend((0..r1).map(|_| random_vec(&mut rng, n)));
            let mut b = common;
            b.extend((0..r2).map(|_| random_vec(&mut rng, n)));
            let s = Subspace::span(n, &a, &tol()).unwrap();
            let t = Subspace::span(n, &b, &tol()).unwrap();
            let meet = s.intersect(&t, &tol()).unwrap();
            let join = s.sum(&t, &tol()).unwrap();
            prop_assert_eq!(s.rank() + t.rank(), meet.rank() + join.rank());
            let gram = s.basis().adjoint() * s.basis();
            prop_assert!((gram - DMat::identity(s.rank(), s.rank())).norm() < 1e-10);
        }

        #[test]
        fn closure_is_idempotent(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mul = matrix_algebra(3);
            let unit = DVec::from_fn(9, |k, _| if k / 3 == k % 3 { ONE } else { ZERO });
            let idx = rng.gen_range(0..9);
            let g = Vector::basis(9, idx).to_dense();
            let once = algebra_closure(&mul, &unit, &[g], &tol()).unwrap();
            let twice = algebra_closure(&mul, &unit, &once.basis_vectors(), &tol()).unwrap();
            prop_assert!(once.equal(&twice, &tol()).unwrap());
        }
    }
}


//! Finite-dimensional weak Hopf *-algebras given by structure constants:
//! exhaustive axiom checks, counital maps, the dual algebra, integrals, the
//! Haar measure, morphisms and the group-like element.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::linalg::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cxlinalg::{
    commutant, singular_values, C64, DMat, DVec, KernelBuilder, LinalgError, SparseMatrix, Subspace, Tensor3,
    Tolerance, Vector, ONE, ZERO,
};

/// Seed for the random elements used in positivity checks.
pub const POSITIVITY_SEED: u64 = 0x5eed_2024;

#[derive(Debug, Error)]
pub enum WhaError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("malformed structure: {0}")]
    Malformed(String),
    #[error("dual structure failed verification: {0}")]
    InvalidDual(Box<VerificationReport>),
    #[error("structure is not a verified C*-structure: {0}")]
    NotCStar(String),
}

/// One named identity check with its largest residual and where it occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: String,
    pub max_residual: f64,
    pub worst: Vec<usize>,
    pub passed: bool,
}

impl CheckResult {
    pub fn residual(id: impl Into<String>, max_residual: f64, worst: Vec<usize>, tol: f64) -> Self {
        Self {
            id: id.into(),
            max_residual,
            worst,
            passed: max_residual < tol,
        }
    }

    /// A check whose outcome is decided by something other than the residual,
    /// for instance a rank count. The residual is kept for diagnostics.
    pub fn flag(id: impl Into<String>, passed: bool, max_residual: f64) -> Self {
        Self {
            id: id.into(),
            max_residual,
            worst: Vec::new(),
            passed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn push(&mut self, c: CheckResult) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = CheckResult>) {
        self.checks.extend(other);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.max_residual).fold(0.0, f64::max)
    }

    pub fn get(&self, id: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn failing(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

impl IntoIterator for VerificationReport {
    type Item = CheckResult;
    type IntoIter = std::vec::IntoIter<CheckResult>;

    fn into_iter(self) -> Self::IntoIter {
        self.checks.into_iter()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bad = self.failing();
        if bad.is_empty() {
            return write!(f, "all {} checks passed", self.checks.len());
        }
        let names: Vec<String> = bad
            .iter()
            .map(|c| format!("{} ({:.3e})", c.id, c.max_residual))
            .collect();
        write!(f, "failed: {}", names.join(", "))
    }
}

/// Tracks the largest residual seen and the basis indices where it occurred.
#[derive(Debug, Clone, Default)]
struct Worst {
    r: f64,
    at: Vec<usize>,
}

impl Worst {
    fn see(&mut self, r: f64, at: &[usize]) {
        if r > self.r || (self.at.is_empty() && r >= self.r) {
            self.r = r;
            self.at = at.to_vec();
        }
    }

    fn into_check(self, id: &str, tol: &Tolerance) -> CheckResult {
        CheckResult::residual(id, self.r, self.at, tol.eps_residual)
    }
}

/// Dense scratch accumulator that remembers which slots were touched.
struct Acc {
    vals: Vec<C64>,
    mark: Vec<bool>,
    touched: Vec<usize>,
}

impl Acc {
    fn new(n: usize) -> Self {
        Self {
            vals: vec![ZERO; n],
            mark: vec![false; n],
            touched: Vec::new(),
        }
    }

    fn add(&mut self, i: usize, c: C64) {
        if !self.mark[i] {
            self.mark[i] = true;
            self.touched.push(i);
        }
        self.vals[i] += c;
    }

    fn max_and_clear(&mut self) -> f64 {
        let mut m: f64 = 0.0;
        for &i in &self.touched {
            m = m.max(self.vals[i].norm());
            self.vals[i] = ZERO;
            self.mark[i] = false;
        }
        self.touched.clear();
        m
    }
}

type Terms = Vec<(usize, C64)>;
type Terms2 = BTreeMap<(usize, usize), C64>;
type Terms3 = BTreeMap<(usize, usize, usize), C64>;

fn max_diff<K: Ord + Copy>(a: &BTreeMap<K, C64>, b: &BTreeMap<K, C64>) -> f64 {
    let mut m: f64 = 0.0;
    for (k, v) in a {
        m = m.max((v - b.get(k).copied().unwrap_or(ZERO)).norm());
    }
    for (k, v) in b {
        if !a.contains_key(k) {
            m = m.max(v.norm());
        }
    }
    m
}

/// Basis element `i` sits at row `row`, column `col` of matrix block `block`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    pub block_sizes: Vec<usize>,
    pub entries: Vec<(usize, usize, usize)>,
}

impl BlockLayout {
    pub fn index_map(&self) -> BTreeMap<(usize, usize, usize), usize> {
        self.entries.iter().enumerate().map(|(i, &e)| (e, i)).collect()
    }

    pub fn row_space_dim(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Offset of each block inside the concatenated row spaces.
    pub fn row_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.block_sizes
            .iter()
            .map(|&n| {
                let o = acc;
                acc += n;
                o
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Derived {
    delta_one: Vec<(usize, usize, C64)>,
    eps_prod: DMat,
    eps_t: DMat,
    eps_s: DMat,
}

/// Weak Hopf *-algebra in a fixed basis. `mul[i][j][k]` is the coefficient of
/// `b_k` in `b_i b_j`; `coprod[i][j][k]` the coefficient of `b_j (x) b_k` in
/// `Delta(b_i)`; `antipode` and `star` store the image of `b_i` as column `i`,
/// with `star` extended antilinearly.
#[derive(Debug, Clone)]
pub struct WeakHopfAlgebra {
    labels: Vec<String>,
    mul: Tensor3,
    unit: Vector,
    coprod: Tensor3,
    counit: Vec<C64>,
    antipode: SparseMatrix,
    star: SparseMatrix,
    layout: Option<BlockLayout>,
    derived: OnceLock<Derived>,
}

impl PartialEq for WeakHopfAlgebra {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
            && self.mul == other.mul
            && self.unit == other.unit
            && self.coprod == other.coprod
            && self.counit == other.counit
            && self.antipode == other.antipode
            && self.star == other.star
            && self.layout == other.layout
    }
}

impl WeakHopfAlgebra {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        labels: Vec<String>,
        mul: Tensor3,
        unit: Vector,
        coprod: Tensor3,
        counit: Vec<C64>,
        antipode: SparseMatrix,
        star: SparseMatrix,
        layout: Option<BlockLayout>,
    ) -> Result<Self, WhaError> {
        let d = labels.len();
        let bad = |what: &str| Err(WhaError::Malformed(format!("{what} does not match dimension {d}")));
        if mul.dims() != [d, d, d] {
            return bad("multiplication tensor");
        }
        if coprod.dims() != [d, d, d] {
            return bad("coproduct tensor");
        }
        if unit.dim() != d {
            return bad("unit");
        }
        if counit.len() != d {
            return bad("counit");
        }
        if antipode.nrows() != d || antipode.ncols() != d {
            return bad("antipode");
        }
        if star.nrows() != d || star.ncols() != d {
            return bad("star");
        }
        if let Some(l) = &layout {
            if l.entries.len() != d {
                return bad("block layout");
            }
            let ok = l
                .entries
                .iter()
                .all(|&(x, a, b)| x < l.block_sizes.len() && a < l.block_sizes[x] && b < l.block_sizes[x]);
            if !ok {
                return Err(WhaError::Malformed("block layout entry out of range".into()));
            }
        }
        Ok(Self {
            labels,
            mul,
            unit,
            coprod,
            counit,
            antipode,
            star,
            layout,
            derived: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mul_tensor(&self) -> &Tensor3 {
        &self.mul
    }

    pub fn coprod_tensor(&self) -> &Tensor3 {
        &self.coprod
    }

    pub fn unit(&self) -> &Vector {
        &self.unit
    }

    pub fn unit_dense(&self) -> DVec {
        self.unit.to_dense()
    }

    pub fn counit(&self) -> &[C64] {
        &self.counit
    }

    pub fn antipode_matrix(&self) -> &SparseMatrix {
        &self.antipode
    }

    pub fn star_matrix(&self) -> &SparseMatrix {
        &self.star
    }

    pub fn layout(&self) -> Option<&BlockLayout> {
        self.layout.as_ref()
    }

    pub fn with_layout(mut self, layout: Option<BlockLayout>) -> Self {
        self.layout = layout;
        self
    }

    fn check_len(&self, n: usize) -> Result<(), WhaError> {
        if n == self.dim() {
            Ok(())
        } else {
            Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: n,
            }
            .into())
        }
    }

    // ---- element operations (sparse interface) ----

    pub fn mul(&self, a: &Vector, b: &Vector) -> Result<Vector, WhaError> {
        self.check_len(a.dim())?;
        self.check_len(b.dim())?;
        Ok(Vector::from_dense(self.mul_dense(&a.to_dense(), &b.to_dense()).as_slice(), 0.0))
    }

    pub fn star(&self, a: &Vector) -> Result<Vector, WhaError> {
        self.check_len(a.dim())?;
        Ok(Vector::from_dense(self.star_dense(&a.to_dense()).as_slice(), 0.0))
    }

    /// Element of the tensor square, index `p * dim + q` for `b_p (x) b_q`.
    pub fn apply_coprod(&self, a: &Vector) -> Result<Vector, WhaError> {
        self.check_len(a.dim())?;
        let d = self.dim();
        let terms = a.iter().flat_map(|(i, c)| {
            self.coprod
                .slice(i)
                .iter()
                .map(move |&(p, q, w)| (p * d + q, c * w))
        });
        Ok(Vector::from_entries(d * d, terms, 0.0))
    }

    pub fn apply_counit(&self, a: &Vector) -> Result<C64, WhaError> {
        self.check_len(a.dim())?;
        Ok(a.iter().map(|(i, c)| c * self.counit[i]).sum())
    }

    pub fn apply_antipode(&self, a: &Vector) -> Result<Vector, WhaError> {
        self.check_len(a.dim())?;
        Ok(Vector::from_dense(self.antipode.apply(&a.to_dense()).as_slice(), 0.0))
    }

    // ---- element operations (dense) ----

    pub fn mul_dense(&self, a: &DVec, b: &DVec) -> DVec {
        self.mul.bilinear(a, b)
    }

    pub fn star_dense(&self, a: &DVec) -> DVec {
        self.star.apply_conj(a)
    }

    pub fn antipode_dense(&self, a: &DVec) -> DVec {
        self.antipode.apply(a)
    }

    pub fn counit_dense(&self, a: &DVec) -> C64 {
        a.iter().zip(&self.counit).map(|(x, e)| x * e).sum()
    }

    /// `Delta(a)` as a coefficient matrix: entry `(p,q)` multiplies `b_p (x) b_q`.
    pub fn coprod_matrix(&self, a: &DVec) -> DMat {
        let d = self.dim();
        let mut m = DMat::zeros(d, d);
        for (i, &c) in a.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            for &(p, q, w) in self.coprod.slice(i) {
                m[(p, q)] += c * w;
            }
        }
        m
    }

    fn derived(&self) -> &Derived {
        self.derived.get_or_init(|| {
            let d = self.dim();
            let mut two: Terms2 = BTreeMap::new();
            for (i, c) in self.unit.iter() {
                for &(p, q, w) in self.coprod.slice(i) {
                    *two.entry((p, q)).or_insert(ZERO) += c * w;
                }
            }
            let mut delta_one: Vec<(usize, usize, C64)> = two
                .into_iter()
                .filter(|(_, v)| v.norm() > 1e-15)
                .map(|((p, q), v)| (p, q, v))
                .collect();
            delta_one.sort_by_key(|a| (a.0, a.1));
            let mut eps_prod = DMat::zeros(d, d);
            for (i, j, k, v) in self.mul.triplets() {
                eps_prod[(i, j)] += v * self.counit[k];
            }
            let mut eps_t = DMat::zeros(d, d);
            let mut eps_s = DMat::zeros(d, d);
            for &(p, q, w) in &delta_one {
                for i in 0..d {
                    eps_t[(q, i)] += w * eps_prod[(p, i)];
                    eps_s[(p, i)] += w * eps_prod[(i, q)];
                }
            }
            Derived {
                delta_one,
                eps_prod,
                eps_t,
                eps_s,
            }
        })
    }

    /// Terms `(p, q, w)` of `Delta(1)`.
    pub fn delta_one(&self) -> &[(usize, usize, C64)] {
        &self.derived().delta_one
    }

    /// Matrix of the target counital map, column `i` is `eps_t(b_i)`.
    pub fn epsilon_t_matrix(&self) -> &DMat {
        &self.derived().eps_t
    }

    pub fn epsilon_s_matrix(&self) -> &DMat {
        &self.derived().eps_s
    }

    /// `eps(b_i b_j)`.
    pub fn counit_of_products(&self) -> &DMat {
        &self.derived().eps_prod
    }

    pub fn epsilon_t(&self, b: &Vector) -> Result<Vector, WhaError> {
        self.check_len(b.dim())?;
        Ok(Vector::from_dense((self.epsilon_t_matrix() * b.to_dense()).as_slice(), 0.0))
    }

    pub fn epsilon_s(&self, b: &Vector) -> Result<Vector, WhaError> {
        self.check_len(b.dim())?;
        Ok(Vector::from_dense((self.epsilon_s_matrix() * b.to_dense()).as_slice(), 0.0))
    }

    pub fn counital_t(&self, tol: &Tolerance) -> Subspace {
        Subspace::full(self.dim())
            .image(self.epsilon_t_matrix(), tol)
            .expect("square map")
    }

    pub fn counital_s(&self, tol: &Tolerance) -> Subspace {
        Subspace::full(self.dim())
            .image(self.epsilon_s_matrix(), tol)
            .expect("square map")
    }

    pub fn center(&self, tol: &Tolerance) -> Subspace {
        commutant(&self.mul, &Subspace::full(self.dim()), tol).expect("matching dimensions")
    }

    pub fn commutant(&self, s: &Subspace, tol: &Tolerance) -> Result<Subspace, WhaError> {
        Ok(commutant(&self.mul, s, tol)?)
    }

    // ---- sparse helpers for the exhaustive checks ----

    fn antipode_terms(&self, i: usize) -> &[(usize, C64)] {
        self.antipode.column(i)
    }

    fn star_terms(&self, i: usize) -> &[(usize, C64)] {
        self.star.column(i)
    }

    /// Adds `scale * a * b` into `acc`.
    fn mul_into(&self, a: &[(usize, C64)], b: &[(usize, C64)], scale: C64, acc: &mut Acc) {
        for &(i, x) in a {
            for &(j, y) in b {
                for &(_, k, v) in self.mul.fiber(i, j) {
                    acc.add(k, scale * x * y * v);
                }
            }
        }
    }

    fn mul_terms(&self, a: &[(usize, C64)], b: &[(usize, C64)]) -> Terms {
        let mut out: BTreeMap<usize, C64> = BTreeMap::new();
        for &(i, x) in a {
            for &(j, y) in b {
                for &(_, k, v) in self.mul.fiber(i, j) {
                    *out.entry(k).or_insert(ZERO) += x * y * v;
                }
            }
        }
        let mut v: Terms = out.into_iter().collect();
        v.sort_by_key(|e| e.0);
        v
    }

    fn product_terms(&self, i: usize, j: usize) -> Terms {
        self.mul.fiber(i, j).iter().map(|&(_, k, v)| (k, v)).collect()
    }

    fn antilinear_star_terms(&self, a: &[(usize, C64)]) -> Terms {
        let mut out: BTreeMap<usize, C64> = BTreeMap::new();
        for &(i, c) in a {
            for &(j, v) in self.star_terms(i) {
                *out.entry(j).or_insert(ZERO) += c.conj() * v;
            }
        }
        out.into_iter().collect()
    }

    fn antipode_of_terms(&self, a: &[(usize, C64)]) -> Terms {
        let mut out: BTreeMap<usize, C64> = BTreeMap::new();
        for &(i, c) in a {
            for &(j, v) in self.antipode_terms(i) {
                *out.entry(j).or_insert(ZERO) += c * v;
            }
        }
        out.into_iter().collect()
    }

    fn coprod_of_terms(&self, a: &[(usize, C64)]) -> Terms2 {
        let mut out = Terms2::new();
        for &(i, c) in a {
            for &(p, q, w) in self.coprod.slice(i) {
                *out.entry((p, q)).or_insert(ZERO) += c * w;
            }
        }
        out
    }
}

/// Coassociativity, counit laws, multiplicativity of the coproduct, the weak
/// counit and weak unit identities, associativity and unit laws, and the
/// compatibility of the involution with product and coproduct. Every identity
/// is evaluated on all basis pairs or triples.
pub fn verify_weak_bialgebra(w: &WeakHopfAlgebra, tol: &Tolerance) -> VerificationReport {
    let mut rep = VerificationReport::default();
    rep.push(check_associativity(w, tol));
    rep.extend(check_unit(w, tol));
    rep.push(check_coassociativity(w, tol));
    rep.extend(check_counit(w, tol));
    rep.push(check_coprod_multiplicative(w, tol));
    rep.extend(check_weak_counit(w, tol));
    rep.extend(check_weak_unit(w, tol));
    rep.extend(check_star(w, tol));
    rep
}

fn check_associativity(w: &WeakHopfAlgebra, tol: &Tolerance) -> CheckResult {
    let d = w.dim();
    let mut acc = Acc::new(d);
    let mut worst = Worst::default();
    for i in 0..d {
        for j in 0..d {
            let ij = w.product_terms(i, j);
            for l in 0..d {
                // (b_i b_j) b_l - b_i (b_j b_l)
                for &(k, c) in &ij {
                    for &(_, t, v) in w.mul.fiber(k, l) {
                        acc.add(t, c * v);
                    }
                }
                for &(_, m, c) in w.mul.fiber(j, l) {
                    for &(_, t, v) in w.mul.fiber(i, m) {
                        acc.add(t, -c * v);
                    }
                }
                worst.see(acc.max_and_clear(), &[i, j, l]);
            }
        }
    }
    worst.into_check("mul_associative", tol)
}

fn check_unit(w: &WeakHopfAlgebra, tol: &Tolerance) -> Vec<CheckResult> {
    let d = w.dim();
    let u = w.unit_dense();
    let id = DMat::identity(d, d);
    let mut out = Vec::new();
    for (name, m) in [
        ("unit_left", w.mul.left_matrix(&u) - &id),
        ("unit_right", w.mul.right_matrix(&u) - &id),
    ] {
        let mut worst = Worst::default();
        for (j, col) in m.column_iter().enumerate() {
            worst.see(col.iter().map(|c| c.norm()).fold(0.0, f64::max), &[j]);
        }
        out.push(worst.into_check(name, tol));
    }
    out
}

fn check_coassociativity(w: &WeakHopfAlgebra, tol: &Tolerance) -> CheckResult {
    let mut worst = Worst::default();
    for i in 0..w.dim() {
        let mut lhs = Terms3::new();
        let mut rhs = Terms3::new();
        for &(p, q, c) in w.coprod.slice(i) {
            for &(a, b, v) in w.coprod.slice(p) {
                *lhs.entry((a, b, q)).or_insert(ZERO) += c * v;
            }
            for &(a, b, v) in w.coprod.slice(q) {
                *rhs.entry((p, a, b)).or_insert(ZERO) += c * v;
            }
        }
        worst.see(max_diff(&lhs, &rhs), &[i]);
    }
    worst.into_check("coassociative", tol)
}

fn check_counit(w: &WeakHopfAlgebra, tol: &Tolerance) -> Vec<CheckResult> {
    let d = w.dim();
    let mut left = Worst::default();
    let mut right = Worst::default();
    let mut acc_l = Acc::new(d);
    let mut acc_r = Acc::new(d);
    for i in 0..d {
        acc_l.add(i, -ONE);
        acc_r.add(i, -ONE);
        for &(p, q, c) in w.coprod.slice(i) {
            acc_l.add(q, c * w.counit[p]);
            acc_r.add(p, c * w.counit[q]);
        }
        left.see(acc_l.max_and_clear(), &[i]);
        right.see(acc_r.max_and_clear(), &[i]);
    }
    vec![left.into_check("counit_left", tol), right.into_check("counit_right", tol)]
}

fn check_coprod_multiplicative(w: &WeakHopfAlgebra, tol: &Tolerance) -> CheckResult {
    let d = w.dim();
    let mut worst = Worst::default();
    for i in 0..d {
        for j in 0..d {
            let mut lhs = Terms2::new();
            for &(_, k, c) in w.mul.fiber(i, j) {
                for &(p, q, v) in w.coprod.slice(k) {
                    *lhs.entry((p, q)).or_insert(ZERO) += c * v;
                }
            }
            let mut rhs = Terms2::new();
            for &(p, q, a) in w.coprod.slice(i) {
                for &(r, s, b) in w.coprod.slice(j) {
                    let left = w.mul.fiber(p, r);
                    if left.is_empty() {
                        continue;
                    }
                    let right = w.mul.fiber(q, s);
                    for &(_, x, u) in left {
                        for &(_, y, v) in right {
                            *rhs.entry((x, y)).or_insert(ZERO) += a * b * u * v;
                        }
                    }
                }
            }
            worst.see(max_diff(&lhs, &rhs), &[i, j]);
        }
    }
    worst.into_check("coprod_multiplicative", tol)
}

fn check_weak_counit(w: &WeakHopfAlgebra, tol: &Tolerance) -> Vec<CheckResult> {
    let d = w.dim();
    let e = w.counit_of_products();
    let mut first = Worst::default();
    let mut second = Worst::default();
    let mut rhs = DMat::zeros(d, d);
    for c in 0..d {
        // eps(b c d) = sum_k (b c)_k eps(b_k d)
        rhs.fill(ZERO);
        for b in 0..d {
            for &(_, k, v) in w.mul.fiber(b, c) {
                for t in 0..d {
                    rhs[(b, t)] += v * e[(k, t)];
                }
            }
        }
        let terms = w.coprod.slice(c);
        for b in 0..d {
            for t in 0..d {
                let mut l1 = ZERO;
                let mut l2 = ZERO;
                for &(p, q, v) in terms {
                    l1 += v * e[(b, p)] * e[(q, t)];
                    l2 += v * e[(b, q)] * e[(p, t)];
                }
                first.see((l1 - rhs[(b, t)]).norm(), &[b, c, t]);
                second.see((l2 - rhs[(b, t)]).norm(), &[b, c, t]);
            }
        }
    }
    vec![
        first.into_check("weak_counit", tol),
        second.into_check("weak_counit_opposite", tol),
    ]
}

fn check_weak_unit(w: &WeakHopfAlgebra, tol: &Tolerance) -> Vec<CheckResult> {
    let one = w.delta_one();
    let mut iterated = Terms3::new();
    for &(p, q, c) in one {
        for &(a, b, v) in w.coprod.slice(p) {
            *iterated.entry((a, b, q)).or_insert(ZERO) += c * v;
        }
    }
    let mut first = Terms3::new();
    let mut second = Terms3::new();
    for &(p, q, x) in one {
        for &(r, s, y) in one {
            // (Delta(1) (x) 1)(1 (x) Delta(1)) = b_p (x) b_q b_r (x) b_s
            for &(_, k, v) in w.mul.fiber(q, r) {
                *first.entry((p, k, s)).or_insert(ZERO) += x * y * v;
            }
            // (1 (x) Delta(1))(Delta(1) (x) 1) = b_p (x) b_r b_q (x) b_s
            for &(_, k, v) in w.mul.fiber(r, q) {
                *second.entry((p, k, s)).or_insert(ZERO) += x * y * v;
            }
        }
    }
    vec![
        CheckResult::residual("weak_unit", max_diff(&first, &iterated), vec![], tol.eps_residual),
        CheckResult::residual("weak_unit_opposite", max_diff(&second, &iterated), vec![], tol.eps_residual),
    ]
}

fn check_star(w: &WeakHopfAlgebra, tol: &Tolerance) -> Vec<CheckResult> {
    let d = w.dim();
    let mut inv = Worst::default();
    let mut anti = Worst::default();
    let mut cop = Worst::default();
    let mut acc = Acc::new(d);
    for i in 0..d {
        let twice = w.antilinear_star_terms(w.star_terms(i));
        acc.add(i, -ONE);
        for (k, c) in twice {
            acc.add(k, c);
        }
        inv.see(acc.max_and_clear(), &[i]);

        let s = w.star_terms(i);
        let lhs = w.coprod_of_terms(s);
        let mut rhs = Terms2::new();
        for &(p, q, c) in w.coprod.slice(i) {
            for &(a, x) in w.star_terms(p) {
                for &(b, y) in w.star_terms(q) {
                    *rhs.entry((a, b)).or_insert(ZERO) += c.conj() * x * y;
                }
            }
        }
        cop.see(max_diff(&lhs, &rhs), &[i]);
    }
    for i in 0..d {
        for j in 0..d {
            let prod = w.product_terms(i, j);
            for (k, c) in w.antilinear_star_terms(&prod) {
                acc.add(k, c);
            }
            w.mul_into(w.star_terms(j), w.star_terms(i), -ONE, &mut acc);
            anti.see(acc.max_and_clear(), &[i, j]);
        }
    }
    vec![
        inv.into_check("star_involutive", tol),
        anti.into_check("star_antimultiplicative", tol),
        cop.into_check("star_coprod", tol),
    ]
}

/// Antipode identities against the counital maps, the anti-(co)algebra
/// properties, `(S o *)^2 = id` and regularity `S^2 = id` on the target
/// counital subalgebra.
pub fn verify_antipode(w: &WeakHopfAlgebra, tol: &Tolerance) -> VerificationReport {
    let d = w.dim();
    let mut rep = VerificationReport::default();
    let et = w.epsilon_t_matrix();
    let es = w.epsilon_s_matrix();
    let mut acc = Acc::new(d);

    let mut target = Worst::default();
    let mut source = Worst::default();
    let mut sandwich = Worst::default();
    let mut coalg = Worst::default();
    let mut sstar = Worst::default();
    for i in 0..d {
        let terms = w.coprod.slice(i);
        for &(p, q, c) in terms {
            w.mul_into(&[(p, ONE)], w.antipode_terms(q), c, &mut acc);
        }
        for k in 0..d {
            if et[(k, i)] != ZERO {
                acc.add(k, -et[(k, i)]);
            }
        }
        target.see(acc.max_and_clear(), &[i]);

        for &(p, q, c) in terms {
            w.mul_into(w.antipode_terms(p), &[(q, ONE)], c, &mut acc);
        }
        for k in 0..d {
            if es[(k, i)] != ZERO {
                acc.add(k, -es[(k, i)]);
            }
        }
        source.see(acc.max_and_clear(), &[i]);

        // S(b_(1)) b_(2) S(b_(3)) = S(b)
        for &(p, q, c) in terms {
            for &(r, s, v) in w.coprod.slice(q) {
                let left = w.mul_terms(w.antipode_terms(p), &[(r, ONE)]);
                w.mul_into(&left, w.antipode_terms(s), c * v, &mut acc);
            }
        }
        for &(k, v) in w.antipode_terms(i) {
            acc.add(k, -v);
        }
        sandwich.see(acc.max_and_clear(), &[i]);

        let lhs = w.coprod_of_terms(w.antipode_terms(i));
        let mut rhs = Terms2::new();
        for &(p, q, c) in terms {
            for &(a, x) in w.antipode_terms(q) {
                for &(b, y) in w.antipode_terms(p) {
                    *rhs.entry((a, b)).or_insert(ZERO) += c * x * y;
                }
            }
        }
        coalg.see(max_diff(&lhs, &rhs), &[i]);

        let once = w.antipode_of_terms(&w.antilinear_star_terms(&[(i, ONE)]));
        let twice = w.antipode_of_terms(&w.antilinear_star_terms(&once));
        acc.add(i, -ONE);
        for (k, c) in twice {
            acc.add(k, c);
        }
        sstar.see(acc.max_and_clear(), &[i]);
    }

    let mut anti = Worst::default();
    for i in 0..d {
        for j in 0..d {
            let prod = w.product_terms(i, j);
            for (k, c) in w.antipode_of_terms(&prod) {
                acc.add(k, c);
            }
            w.mul_into(w.antipode_terms(j), w.antipode_terms(i), -ONE, &mut acc);
            anti.see(acc.max_and_clear(), &[i, j]);
        }
    }

    let bt = w.counital_t(tol);
    let mut regular = Worst::default();
    for (n, v) in bt.basis_vectors().into_iter().enumerate() {
        let s2 = w.antipode_dense(&w.antipode_dense(&v));
        regular.see((s2 - v).norm(), &[n]);
    }

    rep.push(target.into_check("antipode_target", tol));
    rep.push(source.into_check("antipode_source", tol));
    rep.push(sandwich.into_check("antipode_convolution", tol));
    rep.push(anti.into_check("antipode_anti_algebra", tol));
    rep.push(coalg.into_check("antipode_anti_coalgebra", tol));
    rep.push(sstar.into_check("antipode_star_squared", tol));
    rep.push(regular.into_check("regularity", tol));
    rep
}

/// Both axiom reports.
pub fn verify_all(w: &WeakHopfAlgebra, tol: &Tolerance) -> VerificationReport {
    let mut rep = verify_weak_bialgebra(w, tol);
    rep.extend(verify_antipode(w, tol));
    rep
}

/// Properties of the counital subalgebras: they commute, `S(B_t) = B_s`, and
/// the counital maps fix the unit.
pub fn verify_counital(w: &WeakHopfAlgebra, tol: &Tolerance) -> VerificationReport {
    let mut rep = VerificationReport::default();
    let bt = w.counital_t(tol);
    let bs = w.counital_s(tol);
    let mut commute = Worst::default();
    for (a, x) in bt.basis_vectors().iter().enumerate() {
        for (b, y) in bs.basis_vectors().iter().enumerate() {
            let r = (w.mul_dense(x, y) - w.mul_dense(y, x)).norm();
            commute.see(r, &[a, b]);
        }
    }
    rep.push(commute.into_check("counital_commute", tol));
    let sbt = bt.image(&w.antipode.to_dense(), tol).expect("square map");
    let angle = sbt.max_principal_angle(&bs).expect("same ambient space");
    rep.push(CheckResult::residual("antipode_maps_target_to_source", angle, vec![], tol.eps_residual));
    let u = w.unit_dense();
    let rt = (w.epsilon_t_matrix() * &u - &u).norm();
    let rs = (w.epsilon_s_matrix() * &u - &u).norm();
    rep.push(CheckResult::residual("counital_unit", rt.max(rs), vec![], tol.eps_residual));
    rep
}

/// Dual algebra on the same index set: `<e_i, b_j> = delta_ij`.
pub fn dual_wha(w: &WeakHopfAlgebra, tol: &Tolerance) -> Result<WeakHopfAlgebra, WhaError> {
    let dual = dual_unchecked(w);
    let rep = verify_all(&dual, tol);
    if !rep.passed() {
        return Err(WhaError::InvalidDual(Box::new(rep)));
    }
    Ok(dual)
}

/// Same as `dual_wha` without the verification pass.
pub fn dual_unchecked(w: &WeakHopfAlgebra) -> WeakHopfAlgebra {
    let d = w.dim();
    // e_i e_j = sum_k Delta[k][i][j] e_k
    let mul = w.coprod.permuted([d, d, d], |k, i, j| (i, j, k));
    // Delta(e_k) = sum m[i][j][k] e_i (x) e_j
    let coprod = w.mul.permuted([d, d, d], |i, j, k| (k, i, j));
    let unit = Vector::from_dense(&w.counit, 0.0);
    let counit: Vec<C64> = w.unit.to_dense().iter().copied().collect();
    let antipode = w.antipode.transpose();
    // <phi*, b> = conj <phi, S(b)*>
    let st = w.star.to_dense();
    let s = w.antipode.to_dense();
    let star_dense = (st.map(|c| c.conj()) * s).transpose();
    let star = SparseMatrix::from_dense(&star_dense, 1e-15);
    WeakHopfAlgebra::new(
        w.labels.clone(),
        mul,
        unit,
        coprod,
        counit,
        antipode,
        star,
        w.layout.clone(),
    )
    .expect("dual has the same shape")
}

/// Rows of `(id (x) phi) Delta = (eps_t (x) phi) Delta` in the unknown `phi`.
fn push_left_integral_rows(w: &WeakHopfAlgebra, k: &mut KernelBuilder, tol: &Tolerance) {
    let d = w.dim();
    let et = w.epsilon_t_matrix();
    let mut m = DMat::zeros(d, d);
    for i in 0..d {
        m.fill(ZERO);
        for &(p, q, c) in w.coprod.slice(i) {
            m[(p, q)] += c;
            for r in 0..d {
                m[(r, q)] -= c * et[(r, p)];
            }
        }
        k.push_matrix(&m, tol.eps_drop);
    }
}

/// Rows of `(phi (x) id) Delta = (phi (x) eps_s) Delta`.
fn push_right_integral_rows(w: &WeakHopfAlgebra, k: &mut KernelBuilder, tol: &Tolerance) {
    let d = w.dim();
    let es = w.epsilon_s_matrix();
    let mut m = DMat::zeros(d, d);
    for i in 0..d {
        m.fill(ZERO);
        for &(p, q, c) in w.coprod.slice(i) {
            m[(q, p)] += c;
            for r in 0..d {
                m[(r, p)] -= c * es[(r, q)];
            }
        }
        k.push_matrix(&m, tol.eps_drop);
    }
}

/// Left integrals as co-vectors `phi_i = <phi, b_i>`.
pub fn left_integrals(w: &WeakHopfAlgebra, tol: &Tolerance) -> Subspace {
    let mut k = KernelBuilder::new(w.dim());
    push_left_integral_rows(w, &mut k, tol);
    k.kernel(tol)
}

pub fn right_integrals(w: &WeakHopfAlgebra, tol: &Tolerance) -> Subspace {
    let mut k = KernelBuilder::new(w.dim());
    push_right_integral_rows(w, &mut k, tol);
    k.kernel(tol)
}

/// Normalized two-sided integral with its checks.
#[derive(Debug, Clone)]
pub struct HaarMeasure {
    pub functional: DVec,
    pub report: VerificationReport,
    pub seed: u64,
}

impl HaarMeasure {
    pub fn eval(&self, b: &DVec) -> C64 {
        self.functional.iter().zip(b.iter()).map(|(h, x)| h * x).sum()
    }

    /// `<v, w> = h(w* v)`.
    pub fn inner(&self, alg: &WeakHopfAlgebra, v: &DVec, w: &DVec) -> C64 {
        self.eval(&alg.mul_dense(&alg.star_dense(w), v))
    }
}

/// Unique positive normalized two-sided integral; errors when the linear
/// system has no solution or more than one.
pub fn haar(w: &WeakHopfAlgebra, tol: &Tolerance) -> Result<HaarMeasure, WhaError> {
    let d = w.dim();
    let mut k = KernelBuilder::new(d);
    push_left_integral_rows(w, &mut k, tol);
    push_right_integral_rows(w, &mut k, tol);
    // (id (x) h) Delta(1) = 1
    let mut norm = DMat::zeros(d, d);
    for &(p, q, c) in w.delta_one() {
        norm[(p, q)] += c;
    }
    let u = w.unit_dense();
    for r in 0..d {
        let row: Vec<C64> = norm.row(r).iter().copied().collect();
        k.push_row(&row, u[r]);
    }
    let free = k.kernel(tol).rank();
    if free != 0 {
        return Err(WhaError::NotCStar(format!(
            "normalized two-sided integral is not unique ({free} free directions)"
        )));
    }
    let Some((h, res)) = k.solve_with_residual(tol) else {
        return Err(WhaError::NotCStar("integral system is singular".into()));
    };
    if res >= tol.eps_residual {
        return Err(WhaError::NotCStar(format!(
            "no normalized two-sided integral (residual {res:.3e})"
        )));
    }
    let mut rep = VerificationReport::default();
    rep.push(CheckResult::residual("haar_normalization", res, vec![], tol.eps_residual));
    rep.extend(integral_residuals(w, &h, tol));
    let hm = HaarMeasure {
        functional: h,
        report: VerificationReport::default(),
        seed: POSITIVITY_SEED,
    };
    let h1 = hm.eval(&u);
    rep.push(CheckResult::residual("haar_unit_real", h1.im.abs(), vec![], tol.eps_residual));
    rep.extend(positivity_checks(w, &hm, 100, tol));
    Ok(HaarMeasure { report: rep, ..hm })
}

/// Left and right invariance residuals of a functional.
pub fn integral_residuals(w: &WeakHopfAlgebra, h: &DVec, tol: &Tolerance) -> Vec<CheckResult> {
    let d = w.dim();
    let et = w.epsilon_t_matrix();
    let es = w.epsilon_s_matrix();
    let mut left = Worst::default();
    let mut right = Worst::default();
    for i in 0..d {
        let mut l = DVec::zeros(d);
        let mut r = DVec::zeros(d);
        for &(p, q, c) in w.coprod.slice(i) {
            let hq = c * h[q];
            if hq != ZERO {
                l[p] += hq;
                l -= et.column(p) * hq;
            }
            let hp = c * h[p];
            if hp != ZERO {
                r[q] += hp;
                r -= es.column(q) * hp;
            }
        }
        left.see(l.norm(), &[i]);
        right.see(r.norm(), &[i]);
    }
    vec![left.into_check("left_invariance", tol), right.into_check("right_invariance", tol)]
}

/// `h(b* b) >= -eps` on the canonical basis and on `samples` seeded random
/// elements, plus self-adjointness `h(b*) = conj h(b)`.
pub fn positivity_checks(w: &WeakHopfAlgebra, h: &HaarMeasure, samples: usize, tol: &Tolerance) -> Vec<CheckResult> {
    let d = w.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
    let mut worst_neg: f64 = 0.0;
    let mut worst_imag: f64 = 0.0;
    let mut at = Vec::new();
    let mut elements: Vec<DVec> = (0..d).map(|i| Vector::basis(d, i).to_dense()).collect();
    for _ in 0..samples {
        elements.push(DVec::from_fn(d, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }));
    }
    for (n, b) in elements.iter().enumerate() {
        let v = h.eval(&w.mul_dense(&w.star_dense(b), b));
        let scale = b.norm_squared().max(1.0);
        if -v.re / scale > worst_neg {
            worst_neg = -v.re / scale;
            at = vec![n];
        }
        worst_imag = worst_imag.max(v.im.abs() / scale);
    }
    let mut selfadj: f64 = 0.0;
    for i in 0..d {
        let b = Vector::basis(d, i).to_dense();
        selfadj = selfadj.max((h.eval(&w.star_dense(&b)) - h.eval(&b).conj()).norm());
    }
    vec![
        CheckResult::residual("haar_positive", worst_neg, at, tol.eps_residual),
        CheckResult::residual("haar_positive_real", worst_imag, vec![], tol.eps_residual),
        CheckResult::residual("haar_self_adjoint", selfadj, vec![], tol.eps_residual),
    ]
}

/// Which structure maps a morphism has been checked to preserve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MorphismFlags {
    pub algebra: bool,
    pub coalgebra: bool,
    pub antipode: bool,
    pub counit: bool,
    pub star: bool,
}

/// Linear map between two algebras; `matrix` column `i` is the image of `b_i`.
#[derive(Debug, Clone)]
pub struct WhaMorphism {
    pub source: Arc<WeakHopfAlgebra>,
    pub target: Arc<WeakHopfAlgebra>,
    pub matrix: SparseMatrix,
    flags: MorphismFlags,
}

impl WhaMorphism {
    pub fn new(
        source: Arc<WeakHopfAlgebra>,
        target: Arc<WeakHopfAlgebra>,
        matrix: SparseMatrix,
    ) -> Result<Self, WhaError> {
        if matrix.ncols() != source.dim() || matrix.nrows() != target.dim() {
            return Err(WhaError::Malformed(format!(
                "morphism matrix is {}x{}, expected {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                target.dim(),
                source.dim()
            )));
        }
        Ok(Self {
            source,
            target,
            matrix,
            flags: MorphismFlags::default(),
        })
    }

    pub fn identity(w: Arc<WeakHopfAlgebra>) -> Self {
        let d = w.dim();
        Self::new(w.clone(), w, SparseMatrix::identity(d)).expect("square")
    }

    pub fn flags(&self) -> MorphismFlags {
        self.flags
    }

    pub fn is_verified(&self) -> bool {
        let f = self.flags;
        f.algebra && f.coalgebra && f.antipode && f.counit && f.star
    }

    pub fn apply(&self, v: &DVec) -> DVec {
        self.matrix.apply(v)
    }

    /// Runs `verify_morphism` and records the flags that passed.
    pub fn verify(&mut self, tol: &Tolerance) -> VerificationReport {
        let rep = verify_morphism(self, tol);
        let ok = |ids: &[&str]| ids.iter().all(|id| rep.get(id).is_some_and(|c| c.passed));
        self.flags = MorphismFlags {
            algebra: ok(&["morphism_unit", "morphism_multiplicative"]),
            coalgebra: ok(&["morphism_coproduct"]),
            antipode: ok(&["morphism_antipode"]),
            counit: ok(&["morphism_counit"]),
            star: ok(&["morphism_star"]),
        };
        rep
    }
}

/// Unitality, multiplicativity, compatibility with coproduct, antipode,
/// counit and involution, and `p(B_t) = C_t`, `p(B_s) = C_s`.
pub fn verify_morphism(p: &WhaMorphism, tol: &Tolerance) -> VerificationReport {
    let b = &*p.source;
    let c = &*p.target;
    let db = b.dim();
    let dc = c.dim();
    let mut rep = VerificationReport::default();
    let images: Vec<Terms> = (0..db).map(|i| p.matrix.column(i).to_vec()).collect();
    let image_of = |t: &[(usize, C64)]| -> BTreeMap<usize, C64> {
        let mut out = BTreeMap::new();
        for &(i, x) in t {
            for &(j, v) in &images[i] {
                *out.entry(j).or_insert(ZERO) += x * v;
            }
        }
        out
    };

    let pu = p.apply(&b.unit_dense());
    rep.push(CheckResult::residual(
        "morphism_unit",
        (pu - c.unit_dense()).norm(),
        vec![],
        tol.eps_residual,
    ));

    let mut mult = Worst::default();
    let mut acc = Acc::new(dc);
    for i in 0..db {
        for j in 0..db {
            for (k, v) in image_of(&b.product_terms(i, j)) {
                acc.add(k, v);
            }
            c.mul_into(&images[i], &images[j], -ONE, &mut acc);
            mult.see(acc.max_and_clear(), &[i, j]);
        }
    }
    rep.push(mult.into_check("morphism_multiplicative", tol));

    let mut cop = Worst::default();
    let mut anti = Worst::default();
    let mut cou = Worst::default();
    let mut star = Worst::default();
    for i in 0..db {
        let lhs = c.coprod_of_terms(&images[i]);
        let mut rhs = Terms2::new();
        for &(x, y, v) in b.coprod.slice(i) {
            for &(a, s) in &images[x] {
                for &(bb, t) in &images[y] {
                    *rhs.entry((a, bb)).or_insert(ZERO) += v * s * t;
                }
            }
        }
        cop.see(max_diff(&lhs, &rhs), &[i]);

        let sc: BTreeMap<usize, C64> = c.antipode_of_terms(&images[i]).into_iter().collect();
        let ps = image_of(b.antipode_terms(i));
        anti.see(max_diff(&sc, &ps), &[i]);

        let ec: C64 = images[i].iter().map(|&(k, v)| v * c.counit[k]).sum();
        cou.see((ec - b.counit[i]).norm(), &[i]);

        let stc: BTreeMap<usize, C64> = c.antilinear_star_terms(&images[i]).into_iter().collect();
        let pst = image_of(b.star_terms(i));
        star.see(max_diff(&stc, &pst), &[i]);
    }
    rep.push(cop.into_check("morphism_coproduct", tol));
    rep.push(anti.into_check("morphism_antipode", tol));
    rep.push(cou.into_check("morphism_counit", tol));
    rep.push(star.into_check("morphism_star", tol));

    let dense = p.matrix.to_dense();
    for (id, src, dst) in [
        ("morphism_target_counital", b.counital_t(tol), c.counital_t(tol)),
        ("morphism_source_counital", b.counital_s(tol), c.counital_s(tol)),
    ] {
        let img = src.image(&dense, tol).expect("shapes agree");
        let angle = img.max_principal_angle(&dst).expect("same ambient space");
        rep.push(CheckResult::residual(id, angle, vec![], tol.eps_residual));
    }
    rep
}

/// Result of the group-like search.
#[derive(Debug, Clone)]
pub struct GrouplikeSolution {
    pub element: Option<DVec>,
    /// Dimension of the affine space cut out by the linear conditions.
    pub solution_space_dim: usize,
    pub positive: Option<bool>,
    pub report: VerificationReport,
}

/// `F(X) = Delta(X) - (X (x) X) Delta(1)` as a coefficient matrix.
fn grouplike_defect(w: &WeakHopfAlgebra, x: &DVec) -> DMat {
    let d = w.dim();
    let mut f = w.coprod_matrix(x);
    let xs: BTreeMap<usize, DVec> = w
        .delta_one()
        .iter()
        .flat_map(|&(p, q, _)| [p, q])
        .map(|i| (i, w.mul_dense(x, &Vector::basis(d, i).to_dense())))
        .collect();
    for &(p, q, c) in w.delta_one() {
        f -= &xs[&p] * xs[&q].transpose() * c;
    }
    f
}

/// Solves `S^2(b) X = X b` for all `b` together with `eps_s(X) = 1`, then runs
/// Gauss-Newton on `Delta(X) = (X (x) X) Delta(1)` inside that affine space.
pub fn grouplike_solve(w: &WeakHopfAlgebra, tol: &Tolerance) -> GrouplikeSolution {
    let d = w.dim();
    let mut k = KernelBuilder::new(d);
    for i in 0..d {
        let bi = Vector::basis(d, i).to_dense();
        let s2 = w.antipode_dense(&w.antipode_dense(&bi));
        let m = w.mul.left_matrix(&s2) - w.mul.right_matrix(&bi);
        k.push_matrix(&m, tol.eps_drop);
    }
    let es = w.epsilon_s_matrix();
    let u = w.unit_dense();
    for r in 0..d {
        let row: Vec<C64> = es.row(r).iter().copied().collect();
        k.push_row(&row, u[r]);
    }
    let free = k.kernel(tol);
    let mut report = VerificationReport::default();
    let Some((x0, res)) = k.solve_with_residual(tol) else {
        return GrouplikeSolution {
            element: None,
            solution_space_dim: 0,
            positive: None,
            report,
        };
    };
    if res >= tol.eps_residual {
        return GrouplikeSolution {
            element: None,
            solution_space_dim: 0,
            positive: None,
            report,
        };
    }
    let n = free.basis_vectors();
    let mut rng = ChaCha8Rng::seed_from_u64(POSITIVITY_SEED);
    let mut starts: Vec<DVec> = vec![DVec::zeros(n.len())];
    if !n.is_empty() {
        for _ in 0..8 {
            starts.push(DVec::from_fn(n.len(), |_, _| C64::new(rng.gen_range(-1.0..1.0), 0.0)));
        }
    }
    let haar_m = haar(w, tol).ok();
    let assemble = |c: &DVec| -> DVec {
        let mut x = x0.clone();
        for (ci, v) in c.iter().zip(&n) {
            x += v * *ci;
        }
        x
    };
    let mut first: Option<(DVec, Option<bool>)> = None;
    for start in starts {
        let mut c = start;
        let mut x = assemble(&c);
        for _ in 0..40 {
            let f = grouplike_defect(w, &x);
            if f.norm() < tol.eps_residual * 1e-2 || n.is_empty() {
                break;
            }
            // Jacobian columns along each free direction
            let mut jk = KernelBuilder::new(n.len());
            let jcols: Vec<DMat> = n
                .iter()
                .map(|v| {
                    let mut j = w.coprod_matrix(v);
                    for &(p, q, cc) in w.delta_one() {
                        let bp = Vector::basis(d, p).to_dense();
                        let bq = Vector::basis(d, q).to_dense();
                        let vp = w.mul_dense(v, &bp);
                        let vq = w.mul_dense(v, &bq);
                        let xp = w.mul_dense(&x, &bp);
                        let xq = w.mul_dense(&x, &bq);
                        j -= (&vp * xq.transpose() + &xp * vq.transpose()) * cc;
                    }
                    j
                })
                .collect();
            let mut row = vec![ZERO; n.len()];
            for a in 0..d {
                for b in 0..d {
                    let mut nz = false;
                    for (t, jc) in jcols.iter().enumerate() {
                        row[t] = jc[(a, b)];
                        nz |= row[t] != ZERO;
                    }
                    if nz || f[(a, b)] != ZERO {
                        jk.push_row(&row, -f[(a, b)]);
                    }
                }
            }
            let loose = Tolerance {
                eps_residual: f64::INFINITY,
                ..*tol
            };
            let Some((step, _)) = jk.solve_with_residual(&loose) else {
                break;
            };
            c += step;
            x = assemble(&c);
        }
        let defect = grouplike_defect(w, &x).norm();
        if defect >= tol.eps_residual {
            continue;
        }
        let positive = haar_m.as_ref().map(|h| is_positive(w, h, &x, tol));
        if positive == Some(true) {
            first = Some((x, positive));
            break;
        }
        if first.is_none() {
            first = Some((x, positive));
        }
    }
    let Some((x, positive)) = first else {
        return GrouplikeSolution {
            element: None,
            solution_space_dim: n.len(),
            positive: None,
            report,
        };
    };
    report.extend(grouplike_residuals(w, &x, tol));
    GrouplikeSolution {
        element: Some(x),
        solution_space_dim: n.len(),
        positive,
        report,
    }
}

/// Residuals of the defining equations and invertibility for a candidate.
pub fn grouplike_residuals(w: &WeakHopfAlgebra, x: &DVec, tol: &Tolerance) -> Vec<CheckResult> {
    let d = w.dim();
    let mut conj = Worst::default();
    for i in 0..d {
        let bi = Vector::basis(d, i).to_dense();
        let s2 = w.antipode_dense(&w.antipode_dense(&bi));
        let r = (w.mul_dense(&s2, x) - w.mul_dense(x, &bi)).norm();
        conj.see(r, &[i]);
    }
    let defect = grouplike_defect(w, x).norm();
    let lx = w.mul.right_matrix(x);
    let smin = singular_values(&lx).last().copied().unwrap_or(0.0);
    vec![
        conj.into_check("grouplike_implements_s2", tol),
        CheckResult::residual("grouplike_coproduct", defect, vec![], tol.eps_residual),
        CheckResult::flag("grouplike_invertible", smin > tol.eps_rank, smin),
    ]
}

/// Positivity through the Haar form: `X = X*` and `h(a* X a) >= 0`.
pub fn is_positive(w: &WeakHopfAlgebra, h: &HaarMeasure, x: &DVec, tol: &Tolerance) -> bool {
    let d = w.dim();
    if (w.star_dense(x) - x).norm() > tol.eps_residual * x.norm().max(1.0) {
        return false;
    }
    let basis: Vec<DVec> = (0..d).map(|i| Vector::basis(d, i).to_dense()).collect();
    let xb: Vec<DVec> = basis.iter().map(|b| w.mul_dense(x, b)).collect();
    let stars: Vec<DVec> = basis.iter().map(|b| w.star_dense(b)).collect();
    let mut k = DMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            k[(i, j)] = h.eval(&w.mul_dense(&stars[i], &xb[j]));
        }
    }
    let herm = (&k + k.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    eig.eigenvalues.min() > -tol.eps_residual * x.norm().max(1.0)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// `C[Z/n]` with `Delta(g) = g (x) g`.
    pub fn group_algebra(n: usize) -> WeakHopfAlgebra {
        let labels = (0..n).map(|g| format!("g{g}")).collect();
        let mul = Tensor3::from_triplets([n; 3], (0..n).flat_map(|a| (0..n).map(move |b| (a, b, (a + b) % n, ONE))), 0.0);
        let coprod = Tensor3::from_triplets([n; 3], (0..n).map(|g| (g, g, g, ONE)), 0.0);
        let inv = SparseMatrix::from_triplets(n, n, (0..n).map(|g| ((n - g) % n, g, ONE)), 0.0);
        WeakHopfAlgebra::new(
            labels,
            mul,
            Vector::basis(n, 0),
            coprod,
            vec![ONE; n],
            inv.clone(),
            inv,
            None,
        )
        .unwrap()
    }

    /// Functions on the pair groupoid of `n` points, pointwise product and
    /// `Delta(e_ij) = sum_k e_ik (x) e_kj`.
    pub fn pair_groupoid_dual(n: usize) -> WeakHopfAlgebra {
        let idx = |i: usize, j: usize| i * n + j;
        let d = n * n;
        let mut mul = Vec::new();
        let mut cop = Vec::new();
        let mut s = Vec::new();
        let mut st = Vec::new();
        // functions on pairs: e_ij e_kl = delta pointwise
        for i in 0..n {
            for j in 0..n {
                mul.push((idx(i, j), idx(i, j), idx(i, j), ONE));
                for k in 0..n {
                    cop.push((idx(i, j), idx(i, k), idx(k, j), ONE));
                }
                s.push((idx(j, i), idx(i, j), ONE));
                st.push((idx(i, j), idx(i, j), ONE));
            }
        }
        let unit = Vector::from_entries(d, (0..d).map(|k| (k, ONE)), 0.0);
        let counit = (0..d).map(|k| if k / n == k % n { ONE } else { ZERO }).collect();
        WeakHopfAlgebra::new(
            (0..d).map(|k| format!("e{}{}", k / n, k % n)).collect(),
            Tensor3::from_triplets([d; 3], mul, 0.0),
            unit,
            Tensor3::from_triplets([d; 3], cop, 0.0),
            counit,
            SparseMatrix::from_triplets(d, d, s, 0.0),
            SparseMatrix::from_triplets(d, d, st, 0.0),
            None,
        )
        .unwrap()
    }

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn group_algebra_is_hopf() {
        let w = group_algebra(2);
        let rep = verify_all(&w, &tol());
        assert!(rep.passed(), "{rep}");
        assert_eq!(rep.max_residual(), 0.0);
    }

    #[test]
    fn pair_groupoid_is_weak_hopf() {
        for n in 1..4 {
            let w = pair_groupoid_dual(n);
            let rep = verify_all(&w, &tol());
            assert!(rep.passed(), "n={n}: {rep}");
            assert!(verify_counital(&w, &tol()).passed());
            assert_eq!(w.counital_t(&tol()).rank(), n);
            let d = dual_wha(&w, &tol()).unwrap();
            // the dual is the groupoid algebra of the pair groupoid, i.e. M_n
            assert_eq!(d.center(&tol()).rank(), 1);
        }
    }

    #[test]
    fn element_operations() {
        let w = group_algebra(3);
        let one = w.unit().clone();
        let g = Vector::basis(3, 1);
        assert_eq!(w.mul(&one, &g).unwrap(), g);
        assert_eq!(w.star(&w.star(&g).unwrap()).unwrap(), g);
        assert_eq!(w.apply_counit(&g).unwrap(), ONE);
        assert_eq!(w.apply_antipode(&g).unwrap(), Vector::basis(3, 2));
        let dg = w.apply_coprod(&g).unwrap();
        assert_eq!(dg.iter().collect::<Vec<_>>(), vec![(4, ONE)]);
        assert!(w.mul(&one, &Vector::basis(4, 0)).is_err());
        // star is antilinear
        let ig = Vector::from_entries(3, [(1, C64::new(0.0, 1.0))], 0.0);
        assert_eq!(w.star(&ig).unwrap().get(2), C64::new(0.0, -1.0));
    }

    #[test]
    fn dual_of_group_algebra_is_function_algebra() {
        let w = group_algebra(2);
        let d = dual_wha(&w, &tol()).unwrap();
        // delta functions are orthogonal idempotents
        let e0 = Vector::basis(2, 0);
        let e1 = Vector::basis(2, 1);
        assert_eq!(d.mul(&e0, &e0).unwrap(), e0);
        assert_eq!(d.mul(&e0, &e1).unwrap().nnz(), 0);
        let back = dual_unchecked(&d);
        assert_eq!(back.mul_tensor(), w.mul_tensor());
        assert_eq!(back.coprod_tensor(), w.coprod_tensor());
        assert_eq!(back.antipode_matrix(), w.antipode_matrix());
    }

    #[test]
    fn group_algebra_integrals_and_haar() {
        let w = group_algebra(4);
        let l = left_integrals(&w, &tol());
        assert_eq!(l.rank(), 1);
        // on C[G] the integral functional is the identity coefficient
        let v = l.basis().column(0);
        assert!(v.iter().skip(1).all(|c| c.norm() < 1e-12));
        // on the function algebra it is the uniform sum
        let f = dual_wha(&w, &tol()).unwrap();
        let lf = left_integrals(&f, &tol());
        assert_eq!(lf.rank(), 1);
        let v = lf.basis().column(0);
        assert!(v.iter().all(|c| (c - v[0]).norm() < 1e-12));
        let h = haar(&w, &tol()).unwrap();
        assert!(h.report.passed(), "{}", h.report);
        assert!((h.eval(&w.unit_dense()) - ONE).norm() < 1e-12);
        assert!(h.functional.iter().skip(1).all(|c| c.norm() < 1e-12));
    }

    #[test]
    fn dual_integral_dimensions_agree() {
        for w in [group_algebra(3), pair_groupoid_dual(3)] {
            let d = dual_wha(&w, &tol()).unwrap();
            assert_eq!(left_integrals(&w, &tol()).rank(), right_integrals(&w, &tol()).rank());
            assert_eq!(left_integrals(&d, &tol()).rank(), right_integrals(&d, &tol()).rank());
        }
    }

    #[test]
    fn morphism_checks() {
        let w = Arc::new(group_algebra(3));
        let mut id = WhaMorphism::identity(w.clone());
        let rep = id.verify(&tol());
        assert!(rep.passed(), "{rep}");
        assert_eq!(rep.max_residual(), 0.0);
        assert!(id.is_verified());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DMat::from_fn(3, 3, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let mut rand_map = WhaMorphism::new(w.clone(), w, SparseMatrix::from_dense(&m, 0.0)).unwrap();
        let rep = rand_map.verify(&tol());
        assert!(rep.get("morphism_multiplicative").unwrap().max_residual > 1e-3);
        assert!(!rand_map.flags().algebra);
    }

    #[test]
    fn grouplike_in_hopf_case_is_unit() {
        let w = group_algebra(3);
        let g = grouplike_solve(&w, &tol());
        let x = g.element.unwrap();
        assert!((x - w.unit_dense()).norm() < 1e-10);
        assert_eq!(g.positive, Some(true));
        assert!(g.report.passed());
    }

    #[test]
    fn broken_counit_is_named() {
        let w = group_algebra(2);
        let bad = WeakHopfAlgebra::new(
            w.labels().to_vec(),
            w.mul_tensor().clone(),
            w.unit().clone(),
            w.coprod_tensor().clone(),
            vec![ONE, C64::new(2.0, 0.0)],
            w.antipode_matrix().clone(),
            w.star_matrix().clone(),
            None,
        )
        .unwrap();
        let rep = verify_weak_bialgebra(&bad, &tol());
        assert!(!rep.get("counit_left").unwrap().passed);
    }
}

//! Coideal subalgebras: coideal and invariance predicates, the adjoint
//! action, quotient-type coideals by fixed points and by integrals, the
//! Yetter-Drinfel'd checks, lattice operations and the classification of
//! invariant coideals of Tambara-Yamagami algebras.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::abelian::{
    annihilator, cosets, extended_lattice, ExtendedLatticeNode, GroupError, DEFAULT_ENUMERATION_BOUND,
};
use crate::cxlinalg::{
    algebra_closure, svd, KernelBuilder, LinalgError, SparseMatrix, SpanBuilder, Subspace, Tolerance, Vector, C64, DMat,
    DVec, ONE, ZERO,
};
use crate::ty::{self, Block, Label, TyBasis, TyError, TyParams};
use crate::wha::{
    haar, left_integrals, BlockLayout, CheckResult, HaarMeasure, VerificationReport, WeakHopfAlgebra, WhaError,
    WhaMorphism,
};

#[derive(Debug, Error)]
pub enum CoidealError {
    #[error(transparent)]
    Wha(#[from] WhaError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Ty(#[from] TyError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("morphism has not passed verification")]
    UnverifiedMorphism,
    #[error("{0} is not a coideal")]
    NotCoideal(String),
    #[error("subspace does not decompose as a sum of blocks X (x) H")]
    NotBlockwise,
    #[error("algebra carries no block layout")]
    NoLayout,
    #[error("representation check failed: residual {0:e}")]
    NotRepresentation(f64),
    #[error("classification failed: {0}")]
    Classification(Box<VerificationReport>),
}

type Terms = Vec<(usize, C64)>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoidealFlags {
    pub unital_star_subalgebra: bool,
    pub coideal: bool,
    pub invariant: bool,
    pub quotient_type: bool,
}

/// A subspace together with the outcome of the checks run on it.
#[derive(Debug, Clone)]
pub struct CoidealRecord {
    pub subspace: Subspace,
    pub provenance: String,
    pub flags: CoidealFlags,
    pub report: VerificationReport,
}

impl CoidealRecord {
    pub fn new(subspace: Subspace, provenance: impl Into<String>) -> Self {
        Self {
            subspace,
            provenance: provenance.into(),
            flags: CoidealFlags::default(),
            report: VerificationReport::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.subspace.rank()
    }
}

fn add_terms(acc: &mut BTreeMap<usize, C64>, terms: &[(usize, C64)], scale: C64) {
    for &(i, v) in terms {
        *acc.entry(i).or_insert(ZERO) += scale * v;
    }
}

fn sorted_terms(acc: BTreeMap<usize, C64>) -> Terms {
    let mut t: Terms = acc.into_iter().filter(|(_, v)| v.norm() > 1e-14).collect();
    t.sort_by_key(|e| e.0);
    t
}

fn to_dense(d: usize, t: &[(usize, C64)]) -> DVec {
    let mut v = DVec::zeros(d);
    for &(i, c) in t {
        v[i] += c;
    }
    v
}

/// Sparse product of two elements.
fn sp_mul(w: &WeakHopfAlgebra, a: &[(usize, C64)], b: &[(usize, C64)]) -> Terms {
    let mut acc = BTreeMap::new();
    for &(i, x) in a {
        for &(j, y) in b {
            for &(_, k, v) in w.mul_tensor().fiber(i, j) {
                *acc.entry(k).or_insert(ZERO) += x * y * v;
            }
        }
    }
    sorted_terms(acc)
}

/// Shared state for repeated coideal computations on one algebra: the
/// adjoint action matrices and the commutant of the target subalgebra.
pub struct CoidealContext<'a> {
    w: &'a WeakHopfAlgebra,
    tol: Tolerance,
    adjoint: OnceLock<Vec<SparseMatrix>>,
    adjoint_probe: OnceLock<DMat>,
    target_commutant: OnceLock<Subspace>,
    representation: OnceLock<Result<Vec<DMat>, f64>>,
}

impl<'a> CoidealContext<'a> {
    pub fn new(w: &'a WeakHopfAlgebra, tol: &Tolerance) -> Self {
        Self {
            w,
            tol: *tol,
            adjoint: OnceLock::new(),
            adjoint_probe: OnceLock::new(),
            target_commutant: OnceLock::new(),
            representation: OnceLock::new(),
        }
    }

    pub fn algebra(&self) -> &WeakHopfAlgebra {
        self.w
    }

    pub fn tolerance(&self) -> &Tolerance {
        &self.tol
    }

    /// Matrices of `b -> b <| b_x`, one per basis element `b_x`.
    pub fn adjoint_matrices(&self) -> &[SparseMatrix] {
        self.adjoint.get_or_init(|| {
            let w = self.w;
            let d = w.dim();
            (0..d)
                .map(|x| {
                    let mut trip = Vec::new();
                    for &(p, q, c) in w.coprod_tensor().slice(x) {
                        let sp = w.antipode_matrix().column(p);
                        for j in 0..d {
                            let left = sp_mul(w, sp, &[(j, c)]);
                            for (k, v) in sp_mul(w, &left, &[(q, ONE)]) {
                                trip.push((k, j, v));
                            }
                        }
                    }
                    SparseMatrix::from_triplets(d, d, trip, 1e-14)
                })
                .collect()
        })
    }

    /// Adjoint action of a fixed pseudo-random element; failing it refutes
    /// invariance since the action is linear in the acting element.
    /// Cached [`minimal_representation`].
    pub fn representation(&self) -> Result<&[DMat], CoidealError> {
        let rep = self.representation.get_or_init(|| {
            minimal_representation(self.w, &self.tol).map_err(|e| match e {
                CoidealError::NotRepresentation(r) => r,
                _ => f64::NAN,
            })
        });
        rep.as_deref().map_err(|&r| CoidealError::NotRepresentation(r))
    }

    fn adjoint_probe(&self) -> &DMat {
        self.adjoint_probe.get_or_init(|| {
            let d = self.w.dim();
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let mut m = DMat::zeros(d, d);
            for a in self.adjoint_matrices() {
                let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                for j in 0..d {
                    for &(i, v) in a.column(j) {
                        m[(i, j)] += c * v;
                    }
                }
            }
            m
        })
    }

    /// Commutant of the target counital subalgebra.
    pub fn target_commutant(&self) -> &Subspace {
        self.target_commutant.get_or_init(|| {
            self.w
                .commutant(&self.w.counital_t(&self.tol), &self.tol)
                .expect("matching dimensions")
        })
    }

    /// `b <| x = S(x_(1)) b x_(2)`.
    pub fn adjoint_action(&self, b: &DVec, x: &DVec) -> DVec {
        let mut out = DVec::zeros(self.w.dim());
        for (i, &c) in x.iter().enumerate() {
            if c != ZERO {
                out += self.adjoint_matrices()[i].apply(b) * c;
            }
        }
        out
    }

    fn adjoint_terms(&self, a: &[(usize, C64)], x: usize) -> Terms {
        let m = &self.adjoint_matrices()[x];
        let mut acc = BTreeMap::new();
        for &(i, c) in a {
            add_terms(&mut acc, m.column(i), c);
        }
        sorted_terms(acc)
    }

    /// Unit, involution, product and coproduct checks. With `early_exit` the
    /// report stops at the first failing check.
    pub fn coideal_report(&self, v: &Subspace, early_exit: bool) -> VerificationReport {
        let w = self.w;
        let tol = &self.tol;
        let q = v.basis();
        let mut rep = VerificationReport::default();
        let unit_res = v.residual(&w.unit_dense());
        rep.push(CheckResult::residual("coideal_unit", unit_res, vec![], tol.eps_rank));
        if early_exit && !rep.passed() {
            return rep;
        }
        let mut star = DMat::zeros(w.dim(), v.rank());
        for (c, col) in q.column_iter().enumerate() {
            star.set_column(c, &w.star_dense(&col.into_owned()));
        }
        rep.push(CheckResult::residual("coideal_star", v.matrix_residual(&star), vec![], tol.eps_rank));
        if early_exit && !rep.passed() {
            return rep;
        }
        let mut worst: f64 = 0.0;
        for col in q.column_iter() {
            let left = w.mul_tensor().left_matrix(&col.into_owned());
            worst = worst.max(v.matrix_residual(&(left * q)));
            if early_exit && worst > tol.eps_rank {
                break;
            }
        }
        rep.push(CheckResult::residual("coideal_product", worst, vec![], tol.eps_rank));
        if early_exit && !rep.passed() {
            return rep;
        }
        let mut worst: f64 = 0.0;
        for col in q.column_iter() {
            let m = w.coprod_matrix(&col.into_owned());
            worst = worst.max(v.matrix_residual(&m));
            if early_exit && worst > tol.eps_rank {
                break;
            }
        }
        rep.push(CheckResult::residual("coideal_coproduct", worst, vec![], tol.eps_rank));
        rep
    }

    pub fn is_coideal(&self, v: &Subspace) -> bool {
        self.coideal_report(v, true).passed()
    }

    /// `V` inside the commutant of `B_t` and `V <| B` inside `V`.
    pub fn invariance_report(&self, v: &Subspace, early_exit: bool) -> VerificationReport {
        let tol = &self.tol;
        let mut rep = VerificationReport::default();
        let comm = self.target_commutant().matrix_residual(v.basis());
        rep.push(CheckResult::residual("invariant_commutant", comm, vec![], tol.eps_rank));
        if early_exit && !rep.passed() {
            return rep;
        }
        let q = v.basis();
        if early_exit {
            let r = v.matrix_residual(&(self.adjoint_probe() * q));
            if r > tol.eps_rank {
                rep.push(CheckResult::residual("invariant_adjoint", r, vec![], tol.eps_rank));
                return rep;
            }
        }
        let mut worst: f64 = 0.0;
        let mut at = Vec::new();
        for (x, m) in self.adjoint_matrices().iter().enumerate() {
            let mut img = DMat::zeros(q.nrows(), q.ncols());
            for (c, col) in q.column_iter().enumerate() {
                img.set_column(c, &m.apply(&col.into_owned()));
            }
            let r = v.matrix_residual(&img);
            if r > worst {
                worst = r;
                at = vec![x];
            }
            if early_exit && worst > tol.eps_rank {
                break;
            }
        }
        rep.push(CheckResult::residual("invariant_adjoint", worst, at, tol.eps_rank));
        rep
    }

    pub fn is_invariant(&self, v: &Subspace) -> bool {
        self.invariance_report(v, true).passed()
    }

    /// Runs both reports and sets the record's flags.
    pub fn classify_record(&self, mut r: CoidealRecord) -> CoidealRecord {
        let c = self.coideal_report(&r.subspace, false);
        let star_algebra = ["coideal_unit", "coideal_star", "coideal_product"]
            .iter()
            .all(|id| c.get(id).is_some_and(|x| x.passed));
        r.flags.unital_star_subalgebra = star_algebra;
        r.flags.coideal = c.passed();
        r.report.extend(c);
        let i = self.invariance_report(&r.subspace, false);
        r.flags.invariant = r.flags.coideal && i.passed();
        r.report.extend(i);
        r
    }

    /// Span of all `b <| x`.
    pub fn adjoint_range(&self) -> Subspace {
        let d = self.w.dim();
        let mut sb = SpanBuilder::new(d, &self.tol);
        for m in self.adjoint_matrices() {
            for j in 0..d {
                if !m.column(j).is_empty() {
                    sb.push(to_dense(d, m.column(j)));
                }
            }
        }
        sb.finish()
    }
}

pub fn is_coideal(w: &WeakHopfAlgebra, v: &Subspace, tol: &Tolerance) -> (bool, VerificationReport) {
    let rep = CoidealContext::new(w, tol).coideal_report(v, false);
    (rep.passed(), rep)
}

pub fn is_invariant(w: &WeakHopfAlgebra, v: &Subspace, tol: &Tolerance) -> (bool, VerificationReport) {
    let rep = CoidealContext::new(w, tol).invariance_report(v, false);
    (rep.passed(), rep)
}

/// `b <| x = S(x_(1)) b x_(2)` without caching.
pub fn adjoint_action(w: &WeakHopfAlgebra, b: &Vector, x: &Vector) -> Result<Vector, CoidealError> {
    let d = w.dim();
    if b.dim() != d || x.dim() != d {
        return Err(LinalgError::DimensionMismatch {
            expected: d,
            found: if b.dim() != d { b.dim() } else { x.dim() },
        }
        .into());
    }
    let bt: Terms = b.iter().collect();
    let mut acc = BTreeMap::new();
    for (i, c) in x.iter() {
        for &(p, q, v) in w.coprod_tensor().slice(i) {
            let left = sp_mul(w, w.antipode_matrix().column(p), &bt);
            add_terms(&mut acc, &sp_mul(w, &left, &[(q, ONE)]), c * v);
        }
    }
    Ok(Vector::from_entries(d, sorted_terms(acc), 0.0))
}

/// Fixed points of the coaction `(pi (x) id) Delta`.
pub fn quotient_coideal(
    pi: &WhaMorphism,
    provenance: impl Into<String>,
    tol: &Tolerance,
) -> Result<CoidealRecord, CoidealError> {
    if !pi.is_verified() {
        return Err(CoidealError::UnverifiedMorphism);
    }
    let w = &*pi.source;
    let d = w.dim();
    let mut rows: BTreeMap<(usize, usize), BTreeMap<usize, C64>> = BTreeMap::new();
    for i in 0..d {
        for &(p, q, c) in w.coprod_tensor().slice(i) {
            for &(r, v) in pi.matrix.column(p) {
                *rows.entry((r, q)).or_default().entry(i).or_insert(ZERO) += c * v;
            }
        }
        for &(p, q, c) in w.delta_one() {
            for &(r, v) in pi.matrix.column(p) {
                for &(_, k, m) in w.mul_tensor().fiber(i, q) {
                    *rows.entry((r, k)).or_default().entry(i).or_insert(ZERO) -= c * v * m;
                }
            }
        }
    }
    let mut kb = KernelBuilder::new(d);
    for row in rows.into_values() {
        let r = sorted_terms(row);
        if !r.is_empty() {
            kb.push_sparse_row(&r, ZERO);
        }
    }
    let mut rec = CoidealRecord::new(kb.kernel(tol), provenance);
    rec.flags.quotient_type = true;
    Ok(rec)
}

/// Largest `|(pi (x) id)(Delta(v) - (1 (x) v) Delta(1))|` over the basis of `V`.
pub fn fixed_point_defect(pi: &WhaMorphism, v: &Subspace) -> f64 {
    let w = &*pi.source;
    let d = w.dim();
    let mut worst: f64 = 0.0;
    for x in v.basis_vectors() {
        let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for (i, &c) in x.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            for &(p, q, t) in w.coprod_tensor().slice(i) {
                for &(r, val) in pi.matrix.column(p) {
                    *acc.entry((r, q)).or_insert(ZERO) += c * t * val;
                }
            }
        }
        for &(p, q, t) in w.delta_one() {
            let prod = w.mul_dense(&x, &Vector::basis(d, q).to_dense());
            for &(r, val) in pi.matrix.column(p) {
                for (k, &m) in prod.iter().enumerate() {
                    if m != ZERO {
                        *acc.entry((r, k)).or_insert(ZERO) -= t * val * m;
                    }
                }
            }
        }
        worst = worst.max(acc.values().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
    }
    worst
}

/// The block pieces `pi_*(Lambda) H^x` and the coideal they generate.
#[derive(Debug, Clone)]
pub struct IntegralDecomposition {
    /// One subspace of each block's row space.
    pub blocks: Vec<Subspace>,
    pub record: CoidealRecord,
}

/// Builds the quotient-type coideal from the left integrals of the target:
/// each integral is pulled back along `pi` and acts on the row space of every
/// block; the coideal is the sum of the images tensored with the full column
/// space.
pub fn quotient_coideal_via_integrals(
    pi: &WhaMorphism,
    provenance: impl Into<String>,
    tol: &Tolerance,
) -> Result<IntegralDecomposition, CoidealError> {
    if !pi.is_verified() {
        return Err(CoidealError::UnverifiedMorphism);
    }
    let w = &*pi.source;
    let layout = w.layout().ok_or(CoidealError::NoLayout)?;
    let index = layout.index_map();
    let lambda = left_integrals(&pi.target, tol);
    let pulled: Vec<DVec> = lambda
        .basis_vectors()
        .iter()
        .map(|l| {
            let mut out = DVec::zeros(w.dim());
            for (i, o) in out.iter_mut().enumerate() {
                *o = pi.matrix.column(i).iter().map(|&(j, v)| v * l[j]).sum();
            }
            out
        })
        .collect();
    let mut blocks = Vec::new();
    let mut gens = Vec::new();
    for (x, &n) in layout.block_sizes.iter().enumerate() {
        let mut vecs = Vec::new();
        for l in &pulled {
            for beta in 0..n {
                vecs.push(DVec::from_fn(n, |i, _| l[index[&(x, i, beta)]]));
            }
        }
        let xs = Subspace::span(n, &vecs, tol)?;
        for u in xs.basis_vectors() {
            for beta in 0..n {
                let mut v = DVec::zeros(w.dim());
                for i in 0..n {
                    v[index[&(x, i, beta)]] = u[i];
                }
                gens.push(v);
            }
        }
        blocks.push(xs);
    }
    let mut rec = CoidealRecord::new(Subspace::span(w.dim(), &gens, tol)?, provenance);
    rec.flags.quotient_type = true;
    Ok(IntegralDecomposition { blocks, record: rec })
}

/// Explicit basis of `I^x`: `B_s` for the top node, and for a subgroup `L`
/// the coset sums `sum_{y in Y} f^0_{y,b}` together with `f^l_{m,b}` for `l`
/// in the annihilator of `L`.
pub fn closed_form_coideal(
    p: &TyParams,
    w: &WeakHopfAlgebra,
    node: &ExtendedLatticeNode,
    tol: &Tolerance,
) -> Result<CoidealRecord, CoidealError> {
    let basis = TyBasis::new(&p.group);
    let d = basis.len();
    match node {
        ExtendedLatticeNode::Omega => Ok(CoidealRecord::new(w.counital_s(tol), "B_s")),
        ExtendedLatticeNode::Subgroup(l) => {
            let mut gens = Vec::new();
            let zero = Block::G(0);
            for coset in cosets(&p.group, l)? {
                for &beta in &basis.omega(zero) {
                    let mut v = DVec::zeros(d);
                    for y in &coset {
                        v[basis.idx(zero, Label::G(p.group.index_of(y)), beta)] = ONE;
                    }
                    gens.push(v);
                }
            }
            for g in annihilator(&p.chi, l)?.elements() {
                let b = Block::G(p.group.index_of(g));
                for &beta in &basis.omega(b) {
                    gens.push(Vector::basis(d, basis.idx(b, Label::M, beta)).to_dense());
                }
            }
            Ok(CoidealRecord::new(Subspace::span(d, &gens, tol)?, format!("I^{}", l)))
        }
    }
}

/// `2 |G/L| (|G|+1)` for a subgroup, `|G|+1` for the top node.
pub fn expected_coideal_dim(group_order: usize, node: &ExtendedLatticeNode) -> usize {
    match node {
        ExtendedLatticeNode::Omega => group_order + 1,
        ExtendedLatticeNode::Subgroup(l) => 2 * (group_order / l.order()) * (group_order + 1),
    }
}

/// Offsets of the row spaces `H^y` inside their direct sum: group blocks
/// have dimension `|G|+1`, the `m` block `2|G|`.
fn row_offset(n: usize, b: Block) -> usize {
    match b {
        Block::G(g) => g * (n + 1),
        Block::M => n * (n + 1),
    }
}

fn row_index(n: usize, b: Block, l: Label) -> usize {
    let o = row_offset(n, b);
    match l {
        Label::G(k) => o + k,
        Label::M | Label::Bar(_) if matches!(b, Block::G(_)) => o + n,
        Label::Bar(k) => o + n + k,
        Label::M => unreachable!("m label in the m block"),
    }
}

pub fn row_space_dim(n: usize) -> usize {
    n * (n + 1) + 2 * n
}

/// The map `P^x` on the direct sum of the row spaces.
pub fn px_map(p: &TyParams, x: Block) -> DMat {
    let n = p.group.size();
    let add = p.group.addition_table();
    let chi = p.chi.table();
    let tau = p.tau();
    let mut m = DMat::zeros(row_space_dim(n), row_space_dim(n));
    let sign = p.tau_sign as f64;
    for g in 0..n {
        let bg = Block::G(g);
        for k in 0..n {
            if g != 0 {
                continue;
            }
            let src = row_index(n, bg, Label::G(k));
            match x {
                Block::G(h) => m[(row_index(n, Block::G(0), Label::G(add[k][h])), src)] += ONE,
                Block::M => {
                    for q in 0..n {
                        m[(row_index(n, Block::G(q), Label::M), src)] += chi[q][k] * sign;
                    }
                }
            }
        }
        let src = row_index(n, bg, Label::M);
        match x {
            Block::G(_) => m[(src, src)] += ONE,
            Block::M => {
                let scale = (n as f64).sqrt() / tau;
                for q in 0..n {
                    m[(row_index(n, Block::G(0), Label::G(q)), src)] += chi[g][q] * scale;
                }
            }
        }
    }
    m
}

/// Row-space pieces `X^y` when `V = sum_y X^y (x) conj(H^y)`.
pub fn block_decomposition(
    layout: &BlockLayout,
    v: &Subspace,
    tol: &Tolerance,
) -> Result<Vec<Subspace>, CoidealError> {
    let index = layout.index_map();
    let mut total = 0;
    let mut out = Vec::new();
    for (x, &n) in layout.block_sizes.iter().enumerate() {
        let coords: Vec<usize> = (0..n).flat_map(|i| (0..n).map(move |b| (i, b))).map(|(i, b)| index[&(x, i, b)]).collect();
        let proj = Subspace::coordinate(v.dim(), &coords);
        let vy = v.image(&(proj.basis() * proj.basis().adjoint()), tol)?;
        if v.matrix_residual(vy.basis()) > tol.eps_rank {
            return Err(CoidealError::NotBlockwise);
        }
        total += vy.rank();
        let mut cols = Vec::new();
        for m in vy.basis_vectors() {
            for b in 0..n {
                cols.push(DVec::from_fn(n, |i, _| m[index[&(x, i, b)]]));
            }
        }
        let xs = Subspace::span(n, &cols, tol)?;
        if xs.rank() * n != vy.rank() {
            return Err(CoidealError::NotBlockwise);
        }
        out.push(xs);
    }
    if total != v.rank() {
        return Err(CoidealError::NotBlockwise);
    }
    Ok(out)
}

/// Invariance through the maps `P^x`: `X = sum X^y` must satisfy
/// `P^0(X) = X` and `P^x(X) inside X` for every simple `x`.
pub fn invariance_via_px(p: &TyParams, w: &WeakHopfAlgebra, v: &Subspace, tol: &Tolerance) -> Result<bool, CoidealError> {
    let layout = w.layout().ok_or(CoidealError::NoLayout)?;
    let pieces = block_decomposition(layout, v, tol)?;
    let n = p.group.size();
    let rdim = row_space_dim(n);
    let mut gens = Vec::new();
    let basis = TyBasis::new(&p.group);
    for (bi, b) in basis.blocks().into_iter().enumerate() {
        let om = basis.omega(b);
        for u in pieces[bi].basis_vectors() {
            let mut r = DVec::zeros(rdim);
            for (i, &l) in om.iter().enumerate() {
                r[row_index(n, b, l)] = u[i];
            }
            gens.push(r);
        }
    }
    let x = Subspace::span(rdim, &gens, tol)?;
    px_criterion(p, &x, tol)
}

/// `P^0(X) = X` and `P^x(X) inside X` for a row-space subspace `X`.
pub fn px_criterion(p: &TyParams, x: &Subspace, tol: &Tolerance) -> Result<bool, CoidealError> {
    let p0 = x.image(&px_map(p, Block::G(0)), tol)?;
    if !p0.equal(x, tol)? {
        return Ok(false);
    }
    let basis = TyBasis::new(&p.group);
    for b in basis.blocks() {
        let img = x.image(&px_map(p, b), tol)?;
        if !x.contains_subspace(&img, tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The Yetter-Drinfel'd relation for the restricted coproduct and the
/// adjoint action, braided commutativity, and centrality of the fixed points.
pub fn yd_check(ctx: &CoidealContext, v: &Subspace) -> VerificationReport {
    let w = ctx.algebra();
    let tol = ctx.tolerance();
    let d = w.dim();
    let sbasis: Vec<Terms> = v.echelon_basis(1e-13).iter().map(|x| x.iter().collect()).collect();
    let coprod = |a: &[(usize, C64)]| -> BTreeMap<(usize, usize), C64> {
        let mut acc = BTreeMap::new();
        for &(i, c) in a {
            for &(p, q, x) in w.coprod_tensor().slice(i) {
                *acc.entry((p, q)).or_insert(ZERO) += c * x;
            }
        }
        acc
    };
    // Delta^2(b_x) as (u, v, s, c)
    let delta2: Vec<Vec<(usize, usize, usize, C64)>> = (0..d)
        .map(|x| {
            let mut t = Vec::new();
            for &(r, s, c) in w.coprod_tensor().slice(x) {
                for &(u, v2, c2) in w.coprod_tensor().slice(r) {
                    t.push((u, v2, s, c * c2));
                }
            }
            t
        })
        .collect();
    let mut worst_yd: f64 = 0.0;
    let mut at_yd = Vec::new();
    for (ai, a) in sbasis.iter().enumerate() {
        let da: Vec<((usize, usize), C64)> = coprod(a).into_iter().filter(|(_, c)| c.norm() > 1e-14).collect();
        for x in 0..d {
            let lhs = coprod(&ctx.adjoint_terms(a, x));
            let mut rhs: BTreeMap<(usize, usize), C64> = BTreeMap::new();
            for &(u, v2, s, c) in &delta2[x] {
                let su = w.antipode_matrix().column(u);
                for &((p, q), ac) in &da {
                    let left = ctx.adjoint_matrices()[v2].column(p);
                    if left.is_empty() {
                        continue;
                    }
                    let right = sp_mul(w, &sp_mul(w, su, &[(q, ONE)]), &[(s, ONE)]);
                    for &(i, lv) in left {
                        for &(j, rv) in &right {
                            *rhs.entry((i, j)).or_insert(ZERO) += c * ac * lv * rv;
                        }
                    }
                }
            }
            for (k, val) in lhs {
                *rhs.entry(k).or_insert(ZERO) -= val;
            }
            let r = rhs.values().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if r > worst_yd {
                worst_yd = r;
                at_yd = vec![ai, x];
            }
        }
    }
    // ab = b_(1) (a <| b_(2)) for a, b in V
    let mut worst_bc: f64 = 0.0;
    let mut at_bc = Vec::new();
    for (ai, a) in sbasis.iter().enumerate() {
        for (bi, b) in sbasis.iter().enumerate() {
            let mut acc = BTreeMap::new();
            add_terms(&mut acc, &sp_mul(w, a, b), ONE);
            for ((p, q), c) in coprod(b) {
                let act = ctx.adjoint_terms(a, q);
                add_terms(&mut acc, &sp_mul(w, &[(p, ONE)], &act), -c);
            }
            let r = acc.values().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if r > worst_bc {
                worst_bc = r;
                at_bc = vec![ai, bi];
            }
        }
    }
    let mut rep = VerificationReport::default();
    rep.push(CheckResult::residual("yetter_drinfeld", worst_yd, at_yd, tol.eps_residual));
    rep.push(CheckResult::residual("braided_commutative", worst_bc, at_bc, tol.eps_residual));
    let (fixed, central) = fixed_points_central(w, v, tol);
    rep.push(CheckResult::residual("fixed_points_central", central, vec![], tol.eps_residual));
    rep.push(CheckResult::flag("fixed_points_nonzero", fixed.rank() > 0, fixed.rank() as f64));
    rep
}

/// Fixed points `Delta(v) = Delta(1)(v (x) 1)` of the restricted coaction,
/// and the largest commutator of a fixed point with a basis element of `V`.
pub fn fixed_points_central(w: &WeakHopfAlgebra, v: &Subspace, tol: &Tolerance) -> (Subspace, f64) {
    let d = w.dim();
    let q = v.basis();
    let mut kb = KernelBuilder::new(v.rank());
    let mut rows: BTreeMap<(usize, usize), DVec> = BTreeMap::new();
    for (c, col) in q.column_iter().enumerate() {
        let col = col.into_owned();
        let dm = w.coprod_matrix(&col);
        let mut lhs = dm;
        for &(p, r, wt) in w.delta_one() {
            let pv = w.mul_dense(&Vector::basis(d, p).to_dense(), &col);
            for (i, &x) in pv.iter().enumerate() {
                if x != ZERO {
                    lhs[(i, r)] -= wt * x;
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                let x = lhs[(i, j)];
                if x.norm() > tol.eps_drop {
                    rows.entry((i, j)).or_insert_with(|| DVec::zeros(v.rank()))[c] += x;
                }
            }
        }
    }
    for row in rows.into_values() {
        let r: Vec<C64> = row.iter().copied().collect();
        kb.push_row(&r, ZERO);
    }
    let coeffs = kb.kernel(tol);
    let fixed_vecs: Vec<DVec> = coeffs.basis_vectors().iter().map(|c| q * c).collect();
    let fixed = Subspace::span(d, &fixed_vecs, tol).expect("dims");
    let mut worst: f64 = 0.0;
    for f in &fixed_vecs {
        for b in v.basis_vectors() {
            worst = worst.max((w.mul_dense(f, &b) - w.mul_dense(&b, f)).norm());
        }
    }
    (fixed, worst)
}

/// `<v_(1), w> v_(2) = <v, w_(1)> S(w_(2))*` with `<a, b> = h(b* a)`, for all
/// basis pairs of `V`.
pub fn strong_invariance(w: &WeakHopfAlgebra, h: &HaarMeasure, v: &Subspace, tol: &Tolerance) -> CheckResult {
    let d = w.dim();
    let basis = v.basis_vectors();
    let mut worst: f64 = 0.0;
    let mut at = Vec::new();
    let hb = |x: &DVec| h.eval(x);
    for (i, a) in basis.iter().enumerate() {
        let da = w.coprod_matrix(a);
        for (j, b) in basis.iter().enumerate() {
            let db = w.coprod_matrix(b);
            let bstar = w.star_dense(b);
            let mut lhs = DVec::zeros(d);
            for p in 0..d {
                let row = da.row(p);
                if row.iter().all(|z| *z == ZERO) {
                    continue;
                }
                let coef = hb(&w.mul_dense(&bstar, &Vector::basis(d, p).to_dense()));
                if coef == ZERO {
                    continue;
                }
                for (qi, &c) in row.iter().enumerate() {
                    lhs[qi] += c * coef;
                }
            }
            let mut rhs = DVec::zeros(d);
            for p in 0..d {
                let row = db.row(p);
                if row.iter().all(|z| *z == ZERO) {
                    continue;
                }
                let pstar = w.star_dense(&Vector::basis(d, p).to_dense());
                let coef = hb(&w.mul_dense(&pstar, a));
                if coef == ZERO {
                    continue;
                }
                for (qi, &c) in row.iter().enumerate() {
                    if c != ZERO {
                        let sq = w.star_dense(&w.antipode_dense(&Vector::basis(d, qi).to_dense()));
                        rhs += sq * (c.conj() * coef);
                    }
                }
            }
            let r = (lhs - rhs).norm();
            if r > worst {
                worst = r;
                at = vec![i, j];
            }
        }
    }
    CheckResult::residual("strong_invariance", worst, at, tol.eps_residual)
}

fn require_coideal(ctx: &CoidealContext, r: &CoidealRecord) -> Result<(), CoidealError> {
    if r.flags.coideal || ctx.is_coideal(&r.subspace) {
        Ok(())
    } else {
        Err(CoidealError::NotCoideal(r.provenance.clone()))
    }
}

/// Intersection of two coideals.
pub fn lattice_meet(ctx: &CoidealContext, a: &CoidealRecord, b: &CoidealRecord) -> Result<CoidealRecord, CoidealError> {
    require_coideal(ctx, a)?;
    require_coideal(ctx, b)?;
    let s = a.subspace.intersect(&b.subspace, ctx.tolerance())?;
    Ok(ctx.classify_record(CoidealRecord::new(s, format!("{} ^ {}", a.provenance, b.provenance))))
}

/// Unital *-subalgebra generated by two coideals.
pub fn lattice_join(ctx: &CoidealContext, a: &CoidealRecord, b: &CoidealRecord) -> Result<CoidealRecord, CoidealError> {
    require_coideal(ctx, a)?;
    require_coideal(ctx, b)?;
    let s = generated_subalgebra(ctx, &a.subspace, &b.subspace)?;
    Ok(ctx.classify_record(CoidealRecord::new(s, format!("{} v {}", a.provenance, b.provenance))))
}

/// Unital *-subalgebra generated by two *-subalgebras; a nested pair
/// returns the larger one.
fn generated_subalgebra(ctx: &CoidealContext, a: &Subspace, b: &Subspace) -> Result<Subspace, CoidealError> {
    let tol = ctx.tolerance();
    if a.contains_subspace(b, tol)? {
        return Ok(a.clone());
    }
    if b.contains_subspace(a, tol)? {
        return Ok(b.clone());
    }
    let w = ctx.algebra();
    let mut gens = a.basis_vectors();
    gens.extend(b.basis_vectors());
    let stars: Vec<DVec> = gens.iter().map(|g| w.star_dense(g)).collect();
    gens.extend(stars);
    Ok(algebra_closure(w.mul_tensor(), &w.unit_dense(), &gens, tol)?)
}

/// Faithful representation on one minimal left ideal per matrix block,
/// as the matrices of the basis elements.
pub fn minimal_representation(w: &WeakHopfAlgebra, tol: &Tolerance) -> Result<Vec<DMat>, CoidealError> {
    let d = w.dim();
    let mul = w.mul_tensor();
    let basis = |i: usize| DVec::from_fn(d, |k, _| if k == i { ONE } else { ZERO });
    let left: Vec<DMat> = (0..d).map(|i| mul.left_matrix(&basis(i))).collect();
    // Gram matrix of the faithful trace x -> Tr L(x)
    let trace: Vec<C64> = left.iter().map(|m| m.trace()).collect();
    let stars: Vec<DVec> = (0..d).map(|i| w.star_dense(&basis(i))).collect();
    let gram = DMat::from_fn(d, d, |i, j| {
        let p = mul.bilinear(&stars[i], &basis(j));
        p.iter().zip(&trace).map(|(x, t)| x * t).sum()
    });
    let chol = gram.clone().cholesky().ok_or(CoidealError::NotRepresentation(f64::NAN))?;
    let r = chol.l().adjoint();
    let r_inv = r.clone().try_inverse().ok_or(CoidealError::NotRepresentation(f64::NAN))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let c = DVec::from_fn(d, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let a = &c + w.star_dense(&c);
    let k = &r * mul.left_matrix(&a) * &r_inv;
    let k = (&k + k.adjoint()) * C64::new(0.5, 0.0);
    let eig = k.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match clusters.last_mut() {
            Some(cl) if eig.eigenvalues[i] - eig.eigenvalues[*cl.last().unwrap()] < 1e-6 * scale => cl.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    let unit = r.clone() * w.unit_dense();
    let mut kept: Vec<DVec> = Vec::new();
    for cl in &clusters {
        let u = eig.eigenvectors.select_columns(cl);
        let e = &r_inv * (&u * (u.adjoint() * &unit));
        let res = (mul.bilinear(&e, &e) - &e).norm();
        if res > tol.eps_residual * e.norm().max(1.0) {
            return Err(CoidealError::NotRepresentation(res));
        }
        // one projection per block: e B f = 0 across blocks
        let linked = kept.iter().any(|f| left.iter().any(|l| mul.bilinear(f, &(l * &e)).norm() > tol.eps_rank));
        if !linked {
            kept.push(e);
        }
    }
    let mut span = SpanBuilder::new(d, tol);
    for e in &kept {
        for l in &left {
            span.push(l * e);
        }
    }
    let v = span.finish();
    let q = v.basis();
    let mut out = Vec::with_capacity(d);
    for l in &left {
        let m = q.adjoint() * l * q;
        let res = (l * q - q * &m).norm();
        if res > tol.eps_residual * l.norm().max(1.0) {
            return Err(CoidealError::NotRepresentation(res));
        }
        out.push(m);
    }
    Ok(out)
}

/// Double commutant `(A u B)''` taken in [`minimal_representation`] and
/// pulled back to the algebra.
pub fn double_commutant(ctx: &CoidealContext, a: &Subspace, b: &Subspace) -> Result<Subspace, CoidealError> {
    let (w, tol) = (ctx.algebra(), ctx.tolerance());
    let rep = ctx.representation()?;
    let h = rep[0].nrows();
    let image = |v: &DVec| rep.iter().zip(v.iter()).fold(DMat::zeros(h, h), |acc, (m, &c)| acc + m * c);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let union: Vec<DMat> = a.sum(b, tol)?.basis_vectors().iter().map(image).collect();
    let inner = matrix_commutant(&generic_generators(&union, h, &mut rng), h, tol);
    let outer = matrix_commutant(&generic_generators(&inner, h, &mut rng), h, tol);
    // pull back through the injective map v -> image(v)
    let embed = DMat::from_fn(h * h, w.dim(), |r, k| rep[k][(r % h, r / h)]);
    let d = svd(&embed);
    let mut out = Vec::with_capacity(outer.len());
    for y in &outer {
        let flat = DVec::from_column_slice(y.as_slice());
        let mut v = DVec::zeros(w.dim());
        for (i, &s) in d.s.iter().enumerate().filter(|&(_, &s)| s > tol.eps_rank) {
            v += d.v.column(i) * ((d.u.column(i).adjoint() * &flat)[(0, 0)] / s);
        }
        let r = (&embed * &v - &flat).norm();
        if r > tol.eps_residual * flat.norm().max(1.0) {
            return Err(CoidealError::NotRepresentation(r));
        }
        out.push(v);
    }
    Ok(Subspace::span(w.dim(), &out, tol)?)
}

/// Identity plus three random combinations of `span`; for generic
/// coefficients these generate the same algebra as `span`.
fn generic_generators(span: &[DMat], h: usize, rng: &mut ChaCha8Rng) -> Vec<DMat> {
    let mut gens = vec![DMat::identity(h, h)];
    for _ in 0..3 {
        gens.push(span.iter().fold(DMat::zeros(h, h), |acc, m| {
            acc + m * C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }));
    }
    gens
}

/// Compares `(I u J)''` with the generated algebra recorded in the join
/// table, for non-nested pairs or for every pair when `all_pairs`.
pub fn double_commutant_checks(ctx: &CoidealContext, lattice: &ExtendedCoidealLattice, all_pairs: bool) -> Vec<CheckResult> {
    let tol = ctx.tolerance();
    let recs = &lattice.records;
    let mut out = Vec::new();
    for i in 0..recs.len() {
        for j in i..recs.len() {
            let (a, b) = (&recs[i].subspace, &recs[j].subspace);
            let nested = a.contains_subspace(b, tol).unwrap_or(false) || b.contains_subspace(a, tol).unwrap_or(false);
            if nested && !all_pairs {
                continue;
            }
            let id = format!("double_commutant {} v {}", recs[i].provenance, recs[j].provenance);
            let angle = double_commutant(ctx, a, b)
                .and_then(|d| Ok(d.max_principal_angle(&recs[lattice.join[i][j]].subspace)?))
                .unwrap_or(f64::INFINITY);
            out.push(CheckResult::residual(id, angle, vec![], tol.eps_residual));
        }
    }
    out
}

/// Matrices on `C^h` commuting with every generator.
fn matrix_commutant(gens: &[DMat], h: usize, tol: &Tolerance) -> Vec<DMat> {
    let id = DMat::identity(h, h);
    let mut k = KernelBuilder::new(h * h);
    for m in gens {
        // column-major vec(X M - M X)
        k.push_matrix(&(m.transpose().kronecker(&id) - id.kronecker(m)), tol.eps_drop);
    }
    k.kernel(tol)
        .basis_vectors()
        .iter()
        .map(|v| DMat::from_column_slice(h, h, v.as_slice()))
        .collect()
}

/// Set partitions of `0..n` as block lists, in restricted-growth order.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            let k = cur.iter().copied().max().map_or(0, |m| m + 1);
            let mut blocks = vec![Vec::new(); k];
            for (e, &b) in cur.iter().enumerate() {
                blocks[b].push(e);
            }
            out.push(blocks);
            return;
        }
        for b in 0..=max.min(i) {
            cur.push(b);
            let next = if b == max { max + 1 } else { max };
            rec(i + 1, n, cur, next, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return vec![vec![]];
    }
    rec(0, n, &mut Vec::new(), 0, &mut out);
    out
}

/// One candidate of the structured search: `X^0` spanned by indicator sums
/// of a partition of the labels of the trivial block, `X^g = C v^g_m` for the
/// listed nonzero `g`, and `X^m = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchCandidate {
    pub partition: Vec<Vec<usize>>,
    pub m_blocks: Vec<usize>,
}

impl SearchCandidate {
    pub fn subspace(&self, basis: &TyBasis, tol: &Tolerance) -> Subspace {
        let d = basis.len();
        let zero = Block::G(0);
        let om = basis.omega(zero);
        let mut gens = Vec::new();
        for part in &self.partition {
            for &beta in &om {
                let mut v = DVec::zeros(d);
                for &i in part {
                    v[basis.idx(zero, om[i], beta)] = ONE;
                }
                gens.push(v);
            }
        }
        for &g in &self.m_blocks {
            let b = Block::G(g);
            for &beta in &basis.omega(b) {
                gens.push(Vector::basis(d, basis.idx(b, Label::M, beta)).to_dense());
            }
        }
        Subspace::span(d, &gens, tol).expect("dims")
    }

    /// The row-space subspace `X = sum X^y` of the candidate.
    pub fn row_space(&self, basis: &TyBasis, tol: &Tolerance) -> Subspace {
        let n = basis.group_order();
        let rdim = row_space_dim(n);
        let zero = Block::G(0);
        let om = basis.omega(zero);
        let mut gens = Vec::new();
        for part in &self.partition {
            let mut r = DVec::zeros(rdim);
            for &i in part {
                r[row_index(n, zero, om[i])] = ONE;
            }
            gens.push(r);
        }
        for &g in &self.m_blocks {
            gens.push(Vector::basis(rdim, row_index(n, Block::G(g), Label::M)).to_dense());
        }
        Subspace::span(rdim, &gens, tol).expect("dims")
    }
}

pub fn search_candidates(group_order: usize) -> Vec<SearchCandidate> {
    let parts = set_partitions(group_order + 1);
    let mut out = Vec::new();
    for partition in parts {
        for mask in 0..(1usize << (group_order - 1)) {
            let m_blocks = (1..group_order).filter(|g| mask >> (g - 1) & 1 == 1).collect();
            out.push(SearchCandidate {
                partition: partition.clone(),
                m_blocks,
            });
        }
    }
    out
}

/// Outcome of evaluating one search candidate.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub candidate: SearchCandidate,
    /// Only evaluated for invariant candidates.
    pub coideal: bool,
    pub invariant: bool,
    pub px_criterion: bool,
}

pub fn run_search(p: &TyParams, ctx: &CoidealContext) -> Result<Vec<SearchOutcome>, CoidealError> {
    let basis = TyBasis::new(&p.group);
    let tol = ctx.tolerance();
    let mut out = Vec::new();
    for cand in search_candidates(p.group.size()) {
        let v = cand.subspace(&basis, tol);
        let invariant = ctx.is_invariant(&v);
        let coideal = invariant && ctx.is_coideal(&v);
        let px_criterion = px_criterion(p, &cand.row_space(&basis, tol), tol)?;
        out.push(SearchOutcome {
            candidate: cand,
            coideal,
            invariant,
            px_criterion,
        });
    }
    Ok(out)
}

/// Invariant coideals indexed by the extended subgroup lattice.
#[derive(Debug, Clone)]
pub struct ExtendedCoidealLattice {
    pub params: TyParams,
    pub nodes: Vec<ExtendedLatticeNode>,
    pub records: Vec<CoidealRecord>,
    /// `meet[i][j]` is the node whose coideal equals the intersection.
    pub meet: Vec<Vec<usize>>,
    /// `join[i][j]` is the node whose coideal equals the generated algebra.
    pub join: Vec<Vec<usize>>,
    pub search: Vec<SearchOutcome>,
    pub report: VerificationReport,
}

impl ExtendedCoidealLattice {
    pub fn record(&self, node: &ExtendedLatticeNode) -> Option<&CoidealRecord> {
        self.nodes.iter().position(|n| n == node).map(|i| &self.records[i])
    }
}

impl fmt::Display for ExtendedCoidealLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.params)?;
        for (n, r) in self.nodes.iter().zip(&self.records) {
            writeln!(
                f,
                "  {:<16} dim {:>4}  coideal {}  invariant {}  quotient {}",
                n.label(),
                r.dim(),
                r.flags.coideal,
                r.flags.invariant,
                r.flags.quotient_type
            )?;
        }
        Ok(())
    }
}

/// Per-node coideal computed three ways, plus the verification of each.
#[derive(Debug, Clone)]
pub struct NodeCoideals {
    pub closed_form: CoidealRecord,
    pub fixed_points: CoidealRecord,
    pub integrals: IntegralDecomposition,
}

/// Projection for a node: the identity for the top node, `pi_L` otherwise.
pub fn node_projection(
    p: &TyParams,
    w: &Arc<WeakHopfAlgebra>,
    node: &ExtendedLatticeNode,
    tol: &Tolerance,
) -> Result<WhaMorphism, CoidealError> {
    match node {
        ExtendedLatticeNode::Omega => {
            let mut id = WhaMorphism::identity(w.clone());
            id.verify(tol);
            Ok(id)
        }
        ExtendedLatticeNode::Subgroup(l) => Ok(ty::subgroupoid_build(p, w.clone(), l, tol)?.projection),
    }
}

pub fn node_coideals(
    p: &TyParams,
    w: &Arc<WeakHopfAlgebra>,
    node: &ExtendedLatticeNode,
    tol: &Tolerance,
) -> Result<NodeCoideals, CoidealError> {
    let pi = node_projection(p, w, node, tol)?;
    let label = match node {
        ExtendedLatticeNode::Omega => "I^Omega".to_string(),
        ExtendedLatticeNode::Subgroup(l) => format!("I^{l}"),
    };
    Ok(NodeCoideals {
        closed_form: closed_form_coideal(p, w, node, tol)?,
        fixed_points: quotient_coideal(&pi, label.clone(), tol)?,
        integrals: quotient_coideal_via_integrals(&pi, label, tol)?,
    })
}

fn angle(a: &Subspace, b: &Subspace) -> f64 {
    a.max_principal_angle(b).expect("dims")
}

/// Builds `I^x` for every node of the extended lattice by three methods,
/// checks coideal, invariance and the lattice anti-isomorphism, and runs the
/// structured search for further invariant coideals.
pub fn classify_invariant_coideals(
    p: &TyParams,
    w: &Arc<WeakHopfAlgebra>,
    tol: &Tolerance,
) -> Result<ExtendedCoidealLattice, CoidealError> {
    let nodes = extended_lattice(&p.group, DEFAULT_ENUMERATION_BOUND)?;
    let ctx = CoidealContext::new(w, tol);
    let n = p.group.size();
    let mut rep = VerificationReport::default();
    let mut records = Vec::new();
    let angle_tol = 1e-7;
    for node in &nodes {
        let nc = node_coideals(p, w, node, tol)?;
        let lab = node.label();
        let a1 = angle(&nc.closed_form.subspace, &nc.fixed_points.subspace);
        let a2 = angle(&nc.closed_form.subspace, &nc.integrals.record.subspace);
        rep.push(CheckResult::residual(format!("{lab}: closed_vs_fixed"), a1, vec![], angle_tol));
        rep.push(CheckResult::residual(format!("{lab}: closed_vs_integrals"), a2, vec![], angle_tol));
        let want = expected_coideal_dim(n, node);
        rep.push(CheckResult::flag(
            format!("{lab}: dimension"),
            nc.fixed_points.dim() == want,
            nc.fixed_points.dim() as f64,
        ));
        let mut rec = ctx.classify_record(nc.fixed_points);
        rec.provenance = match node {
            ExtendedLatticeNode::Omega => "B_s".into(),
            ExtendedLatticeNode::Subgroup(l) if l.order() == 1 => "B_t'".into(),
            ExtendedLatticeNode::Subgroup(l) => format!("I^{l}"),
        };
        rep.push(CheckResult::flag(format!("{lab}: coideal"), rec.flags.coideal, 0.0));
        rep.push(CheckResult::flag(format!("{lab}: invariant"), rec.flags.invariant, 0.0));
        let px = match invariance_via_px(p, w, &rec.subspace, tol) {
            Ok(b) => b,
            Err(CoidealError::NotBlockwise) => false,
            Err(e) => return Err(e),
        };
        rep.push(CheckResult::flag(format!("{lab}: px_criterion"), px, 0.0));
        records.push(rec);
    }
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            let same = records[i].subspace.equal(&records[j].subspace, tol)?;
            if same {
                rep.push(CheckResult::flag(format!("distinct {} {}", nodes[i].label(), nodes[j].label()), false, 0.0));
            }
        }
    }
    rep.push(CheckResult::flag("pairwise_distinct", rep.passed(), 0.0));

    // anti-isomorphism and meet/join correspondence
    let k = nodes.len();
    let mut anti = true;
    let mut meet = vec![vec![0; k]; k];
    let mut join = vec![vec![0; k]; k];
    let mut mj_worst: f64 = 0.0;
    let mut closed = true;
    for i in 0..k {
        for j in 0..k {
            let le = nodes[i].le(&nodes[j]);
            let sub = records[i].subspace.contains_subspace(&records[j].subspace, tol)?;
            anti &= le == sub;
            if j < i {
                meet[i][j] = meet[j][i];
                join[i][j] = join[j][i];
                continue;
            }
            let nj = nodes[i].join(&nodes[j])?;
            let nm = nodes[i].meet(&nodes[j])?;
            let inter = records[i].subspace.intersect(&records[j].subspace, tol)?;
            let gen = generated_subalgebra(&ctx, &records[i].subspace, &records[j].subspace)?;
            let ji = nodes.iter().position(|x| *x == nj).expect("lattice closed");
            let mi = nodes.iter().position(|x| *x == nm).expect("lattice closed");
            // a match with a verified record carries its invariance over
            closed &= inter.equal(&records[ji].subspace, tol)? && records[ji].flags.invariant;
            closed &= gen.equal(&records[mi].subspace, tol)? && records[mi].flags.invariant;
            mj_worst = mj_worst.max(angle(&inter, &records[ji].subspace));
            mj_worst = mj_worst.max(angle(&gen, &records[mi].subspace));
            meet[i][j] = ji;
            join[i][j] = mi;
        }
    }
    rep.push(CheckResult::flag("anti_isomorphism", anti, 0.0));
    rep.push(CheckResult::residual("meet_join_correspondence", mj_worst, vec![], tol.eps_residual));
    rep.push(CheckResult::flag("meet_join_invariant", closed, 0.0));

    // extremes
    let bs = w.counital_s(tol);
    let btc = ctx.target_commutant().clone();
    let min_ok = records.iter().all(|r| r.subspace.contains_subspace(&bs, tol).unwrap_or(false));
    let max_ok = records.iter().all(|r| btc.contains_subspace(&r.subspace, tol).unwrap_or(false));
    let top_bs = records
        .iter()
        .filter(|r| r.subspace.equal(&bs, tol).unwrap_or(false))
        .count();
    let top_bt = records
        .iter()
        .filter(|r| r.subspace.equal(&btc, tol).unwrap_or(false))
        .count();
    rep.push(CheckResult::flag("source_minimal", min_ok && top_bs == 1, 0.0));
    rep.push(CheckResult::flag("target_commutant_maximal", max_ok && top_bt == 1, 0.0));

    // structured search
    let search = run_search(p, &ctx)?;
    let mut extra = 0usize;
    let mut disagree = 0usize;
    for s in &search {
        if s.px_criterion != (s.coideal && s.invariant) {
            disagree += 1;
        }
        if s.coideal && s.invariant {
            let v = s.candidate.subspace(&TyBasis::new(&p.group), tol);
            let known = records.iter().any(|r| r.subspace.equal(&v, tol).unwrap_or(false));
            if !known {
                extra += 1;
            }
        }
    }
    let found = search.iter().filter(|s| s.coideal && s.invariant).count();
    rep.push(CheckResult::flag("search_no_extra", extra == 0, extra as f64));
    rep.push(CheckResult::flag("search_count", found == nodes.len(), found as f64));
    rep.push(CheckResult::flag("search_px_agreement", disagree == 0, disagree as f64));

    let lattice = ExtendedCoidealLattice {
        params: p.clone(),
        nodes,
        records,
        meet,
        join,
        search,
        report: rep,
    };
    if !lattice.report.passed() {
        return Err(CoidealError::Classification(Box::new(lattice.report)));
    }
    Ok(lattice)
}

/// Haar measure for strong-invariance checks.
pub fn haar_for(w: &WeakHopfAlgebra, tol: &Tolerance) -> Result<HaarMeasure, CoidealError> {
    Ok(haar(w, tol)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abelian::{Bicharacter, GroupSpec, Phase, Subgroup};
    use crate::ty::ty_build;
    use crate::wha::tests::group_algebra;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn z2() -> (TyParams, Arc<WeakHopfAlgebra>) {
        let g = GroupSpec::cyclic(2).unwrap();
        let chi = Bicharacter::new(&g, vec![vec![Phase::new(1, 2)]]).unwrap();
        let p = TyParams::new(g, chi, 1).unwrap();
        let w = Arc::new(ty_build(&p, &tol()).unwrap());
        (p, w)
    }

    #[test]
    fn set_partition_counts() {
        let bell = [1, 1, 2, 5, 15, 52];
        for (n, &b) in bell.iter().enumerate() {
            assert_eq!(set_partitions(n).len(), b);
        }
        assert_eq!(search_candidates(2).len(), 10);
        assert_eq!(search_candidates(3).len(), 60);
        assert_eq!(search_candidates(4).len(), 416);
    }

    #[test]
    fn hopf_adjoint_action() {
        let w = group_algebra(2);
        let g = Vector::basis(2, 1);
        let r = adjoint_action(&w, &g, &g).unwrap();
        assert!(r.max_abs_diff(&g) < 1e-12);
    }

    #[test]
    fn source_subalgebra_is_coideal() {
        let (_, w) = z2();
        let bs = w.counital_s(&tol());
        assert!(is_coideal(&w, &bs, &tol()).0);
        assert!(is_coideal(&w, &Subspace::full(34), &tol()).0);
        let one = Subspace::span(34, &[w.unit_dense()], &tol()).unwrap();
        assert!(!is_coideal(&w, &one, &tol()).0);
    }

    #[test]
    fn invariance_examples() {
        let (_, w) = z2();
        let ctx = CoidealContext::new(&w, &tol());
        assert!(ctx.is_invariant(&w.counital_s(&tol())));
        assert!(!ctx.is_invariant(&Subspace::full(34)));
        let btc = ctx.target_commutant().clone();
        assert_eq!(btc.rank(), 12);
        assert!(ctx.is_invariant(&btc));
        let range = ctx.adjoint_range();
        assert!(range.equal(&btc, &tol()).unwrap());
        // b <| 1 = b on the commutant
        for b in btc.basis_vectors() {
            assert!((ctx.adjoint_action(&b, &w.unit_dense()) - &b).norm() < 1e-10);
        }
    }

    #[test]
    fn px_rules() {
        let (p, _) = z2();
        let pm = px_map(&p, Block::M);
        let src = row_index(2, Block::G(1), Label::M);
        let col: Vec<C64> = pm.column(src).iter().copied().collect();
        let mut want = vec![ZERO; row_space_dim(2)];
        want[row_index(2, Block::G(0), Label::G(0))] = C64::new(2.0, 0.0);
        want[row_index(2, Block::G(0), Label::G(1))] = C64::new(-2.0, 0.0);
        for (a, b) in col.iter().zip(&want) {
            assert!((a - b).norm() < 1e-12);
        }
        let ph = px_map(&p, Block::G(1));
        assert_eq!(ph[(src, src)], ONE);
        for b in [Block::G(0), Block::G(1), Block::M] {
            let m = px_map(&p, b);
            for l in 0..4 {
                let c = row_index(2, Block::M, if l < 2 { Label::G(l) } else { Label::Bar(l - 2) });
                assert!(m.column(c).norm() == 0.0);
            }
        }
    }

    #[test]
    fn z2_triangle() {
        let (p, w) = z2();
        let full = ExtendedLatticeNode::Subgroup(Subgroup::full(&p.group));
        let nc = node_coideals(&p, &w, &full, &tol()).unwrap();
        assert_eq!(nc.closed_form.dim(), 6);
        assert!(nc.closed_form.subspace.equal(&nc.fixed_points.subspace, &tol()).unwrap());
        assert!(nc.closed_form.subspace.equal(&nc.integrals.record.subspace, &tol()).unwrap());
        let ranks: Vec<usize> = nc.integrals.blocks.iter().map(|b| b.rank()).collect();
        assert_eq!(ranks, vec![2, 0, 0]);
        let top = node_coideals(&p, &w, &ExtendedLatticeNode::Omega, &tol()).unwrap();
        assert_eq!(top.fixed_points.dim(), 3);
        assert!(top.fixed_points.subspace.equal(&w.counital_s(&tol()), &tol()).unwrap());
    }

    #[test]
    fn z2_classification() {
        let (p, w) = z2();
        let lat = classify_invariant_coideals(&p, &w, &tol()).unwrap();
        let mut dims: Vec<usize> = lat.records.iter().map(|r| r.dim()).collect();
        dims.sort();
        assert_eq!(dims, vec![3, 6, 12]);
    }

    #[test]
    fn z2_yetter_drinfeld() {
        let (_, w) = z2();
        let ctx = CoidealContext::new(&w, &tol());
        let rep = yd_check(&ctx, &w.counital_s(&tol()));
        assert!(rep.passed(), "{rep}");
        let btc = ctx.target_commutant().clone();
        let rep = yd_check(&ctx, &btc);
        assert!(rep.passed(), "{rep}");
        let rep = yd_check(&ctx, &Subspace::full(34));
        assert!(rep.get("braided_commutative").unwrap().max_residual >= 1.0);
    }

    #[test]
    fn z2_strong_invariance() {
        let (_, w) = z2();
        let h = haar_for(&w, &tol()).unwrap();
        let ctx = CoidealContext::new(&w, &tol());
        let c = strong_invariance(&w, &h, ctx.target_commutant(), &tol());
        assert!(c.passed, "{c:?}");
    }

    #[test]
    fn meet_join_trivial() {
        let (_, w) = z2();
        let ctx = CoidealContext::new(&w, &tol());
        let r = ctx.classify_record(CoidealRecord::new(w.counital_s(&tol()), "B_s"));
        let m = lattice_meet(&ctx, &r, &r).unwrap();
        let j = lattice_join(&ctx, &r, &r).unwrap();
        assert!(m.subspace.equal(&r.subspace, &tol()).unwrap());
        assert!(j.subspace.equal(&r.subspace, &tol()).unwrap());
    }

    #[test]
    fn minimal_representation_is_faithful() {
        let (_, w) = z2();
        let rep = minimal_representation(&w, &tol()).unwrap();
        assert_eq!(rep[0].nrows(), 10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut random = || DVec::from_fn(34, |_, _| C64::new(rng.gen_range(-1.0..1.0), 0.0));
        let image = |v: &DVec| rep.iter().zip(v.iter()).fold(DMat::zeros(10, 10), |acc, (m, &c)| acc + m * c);
        for _ in 0..5 {
            let (x, y) = (random(), random());
            let xy = w.mul_tensor().bilinear(&x, &y);
            assert!((image(&xy) - image(&x) * image(&y)).norm() < 1e-10);
            assert!(image(&x).norm() > 0.1);
        }
        assert!((image(&w.unit_dense()) - DMat::identity(10, 10)).norm() < 1e-10);
    }

    #[test]
    fn z2_double_commutant_is_join() {
        let (p, w) = z2();
        let lat = classify_invariant_coideals(&p, &w, &tol()).unwrap();
        let ctx = CoidealContext::new(&w, &tol());
        let checks = double_commutant_checks(&ctx, &lat, true);
        assert_eq!(checks.len(), 6);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
        // relative to the algebra itself the center is picked up
        let bs = w.counital_s(&tol());
        assert!(w.commutant(&w.commutant(&bs, &tol()).unwrap(), &tol()).unwrap().rank() > bs.rank());
    }
}

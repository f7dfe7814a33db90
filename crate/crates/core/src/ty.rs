//! The Tambara-Yamagami weak Hopf algebra of a finite abelian group with a
//! symmetric non-degenerate bicharacter, its self-duality, and the quantum
//! subgroupoids attached to subgroups.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::abelian::{Bicharacter, GroupElement, GroupError, GroupSpec, Subgroup};
use crate::cxlinalg::{KernelBuilder, SparseMatrix, Subspace, Tensor3, Tolerance, Vector, C64, DVec, ONE, ZERO};
use crate::wha::{
    dual_unchecked, verify_all, BlockLayout, CheckResult, VerificationReport, WeakHopfAlgebra, WhaError,
    WhaMorphism,
};

#[derive(Debug, Error)]
pub enum TyError {
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Wha(#[from] WhaError),
    #[error("tau sign must be +1 or -1, got {0}")]
    InvalidTau(i32),
    #[error("illegal label combination: {0}")]
    IllegalLabel(String),
    #[error("unit equations have no solution (residual {0:.3e})")]
    NoUnit(f64),
    #[error("{what} failed verification: {report}")]
    Verification {
        what: String,
        report: Box<VerificationReport>,
    },
}

/// Simple object indexing a matrix block: a group element or `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    G(usize),
    M,
}

/// Row or column label inside a block. Group blocks use `G` and `M`, the
/// `m` block uses `G` and the barred copy `Bar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    G(usize),
    M,
    Bar(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TyIndex {
    pub block: Block,
    pub row: Label,
    pub col: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoproductConvention {
    /// `Delta(f^x_ab) = sum_c f^x_ac (x) f^x_cb`.
    SingleSum,
    /// `Delta(f^x_ab) = sum_{c,d} f^x_ac (x) f^x_db`; not counital, kept as a
    /// negative control.
    DoubleSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TyParams {
    pub group: GroupSpec,
    pub chi: Bicharacter,
    pub tau_sign: i32,
}

impl TyParams {
    pub fn new(group: GroupSpec, chi: Bicharacter, tau_sign: i32) -> Result<Self, TyError> {
        if tau_sign != 1 && tau_sign != -1 {
            return Err(TyError::InvalidTau(tau_sign));
        }
        if chi.parent() != &group {
            return Err(GroupError::ParentMismatch.into());
        }
        Ok(Self { group, chi, tau_sign })
    }

    /// `tau_sign / sqrt(|G|)`.
    pub fn tau(&self) -> f64 {
        self.tau_sign as f64 / (self.group.size() as f64).sqrt()
    }
}

impl fmt::Display for TyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let phases: Vec<String> = self
            .chi
            .phases()
            .iter()
            .flatten()
            .map(|q| q.to_string())
            .collect();
        write!(
            f,
            "TY({}, chi=[{}], tau={})",
            self.group,
            phases.join(","),
            if self.tau_sign > 0 { "+" } else { "-" }
        )
    }
}

/// Index bookkeeping for the basis `f^x_{a,b}`: blocks `G` then `m`, row
/// labels `G` then `m` (group blocks) or `G` then barred `G` (the `m` block).
#[derive(Debug, Clone)]
pub struct TyBasis {
    group: GroupSpec,
    n: usize,
    entries: Vec<TyIndex>,
    pos: HashMap<TyIndex, usize>,
}

impl TyBasis {
    pub fn new(group: &GroupSpec) -> Self {
        let n = group.size();
        let mut entries = Vec::new();
        let blocks: Vec<Block> = (0..n).map(Block::G).chain([Block::M]).collect();
        for &b in &blocks {
            let om = Self::omega_of(n, b);
            for &r in &om {
                for &c in &om {
                    entries.push(TyIndex { block: b, row: r, col: c });
                }
            }
        }
        let pos = entries.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        Self {
            group: group.clone(),
            n,
            entries,
            pos,
        }
    }

    fn omega_of(n: usize, b: Block) -> Vec<Label> {
        match b {
            Block::G(_) => (0..n).map(Label::G).chain([Label::M]).collect(),
            Block::M => (0..n).map(Label::G).chain((0..n).map(Label::Bar)).collect(),
        }
    }

    pub fn group_order(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn blocks(&self) -> Vec<Block> {
        (0..self.n).map(Block::G).chain([Block::M]).collect()
    }

    pub fn omega(&self, b: Block) -> Vec<Label> {
        Self::omega_of(self.n, b)
    }

    pub fn entry(&self, i: usize) -> TyIndex {
        self.entries[i]
    }

    pub fn entries(&self) -> &[TyIndex] {
        &self.entries
    }

    pub fn index(&self, e: TyIndex) -> Option<usize> {
        self.pos.get(&e).copied()
    }

    pub fn idx(&self, block: Block, row: Label, col: Label) -> usize {
        self.pos[&TyIndex { block, row, col }]
    }

    pub fn block_number(&self, b: Block) -> usize {
        match b {
            Block::G(g) => g,
            Block::M => self.n,
        }
    }

    pub fn label_number(&self, l: Label) -> usize {
        match l {
            Label::G(g) => g,
            Label::M => self.n,
            Label::Bar(g) => self.n + g,
        }
    }

    pub fn is_legal(&self, b: Block, l: Label) -> bool {
        match (b, l) {
            (_, Label::G(g)) => g < self.n,
            (Block::G(_), Label::M) => true,
            (Block::M, Label::Bar(g)) => g < self.n,
            _ => false,
        }
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout {
            block_sizes: self.blocks().iter().map(|&b| self.omega(b).len()).collect(),
            entries: self
                .entries
                .iter()
                .map(|e| (self.block_number(e.block), self.label_number(e.row), self.label_number(e.col)))
                .collect(),
        }
    }

    fn element_name(&self, g: usize) -> String {
        self.group.element_at(g).to_string()
    }

    pub fn block_name(&self, b: Block) -> String {
        match b {
            Block::G(g) => self.element_name(g),
            Block::M => "m".into(),
        }
    }

    pub fn label_name(&self, l: Label) -> String {
        match l {
            Label::G(g) => self.element_name(g),
            Label::M => "m".into(),
            Label::Bar(g) => format!("b{}", self.element_name(g)),
        }
    }

    pub fn name(&self, i: usize) -> String {
        let e = self.entries[i];
        format!(
            "f[{};{},{}]",
            self.block_name(e.block),
            self.label_name(e.row),
            self.label_name(e.col)
        )
    }
}

/// Precomputed group tables used by the structure constants.
struct Ctx {
    n: usize,
    add: Vec<Vec<usize>>,
    neg: Vec<usize>,
    chi: Vec<Vec<C64>>,
    tau: f64,
}

impl Ctx {
    fn new(p: &TyParams) -> Self {
        let g = &p.group;
        let add = g.addition_table();
        let neg = g.elements().iter().map(|x| g.index_of(&g.neg(x))).collect();
        Self {
            n: g.size(),
            add,
            neg,
            chi: p.chi.table(),
            tau: p.tau(),
        }
    }

    fn sub(&self, a: usize, b: usize) -> usize {
        self.add[a][self.neg[b]]
    }
}

type Term = (Block, Label, C64);

fn circ_ctx(c: &Ctx, x: Block, a: Label, y: Block, b: Label) -> Vec<Term> {
    match (x, y) {
        (Block::G(g), Block::G(h)) => match a {
            Label::G(k) if b == Label::G(c.add[h][k]) => vec![(Block::G(c.add[g][h]), b, ONE)],
            Label::M if b == Label::M => vec![(Block::G(c.add[g][h]), Label::M, ONE)],
            _ => vec![],
        },
        (Block::M, Block::G(g)) => match a {
            Label::G(k) if b == Label::M => vec![(Block::M, Label::G(k), c.chi[g][k])],
            Label::Bar(k) if b == Label::G(c.add[g][k]) => vec![(Block::M, Label::Bar(c.add[g][k]), ONE)],
            _ => vec![],
        },
        (Block::G(g), Block::M) => match b {
            Label::Bar(k) if a == Label::M => vec![(Block::M, Label::Bar(k), c.chi[g][k])],
            Label::G(k) if a == Label::G(k) => vec![(Block::M, Label::G(c.sub(k, g)), ONE)],
            _ => vec![],
        },
        (Block::M, Block::M) => match (a, b) {
            (Label::G(h), Label::Bar(k)) => vec![(Block::G(c.sub(k, h)), Label::G(k), ONE)],
            (Label::Bar(h), Label::G(k)) if h == k => (0..c.n)
                .map(|g| (Block::G(g), Label::M, C64::new(c.tau, 0.0) * c.chi[g][h].conj()))
                .collect(),
            _ => vec![],
        },
    }
}

/// Composition `v^x_a o v^y_b` of the basis intertwiners, as a list of terms
/// `(block, label, coefficient)`; empty when the composition vanishes.
pub fn circ(p: &TyParams, x: Block, a: Label, y: Block, b: Label) -> Result<Vec<Term>, TyError> {
    let basis = TyBasis::new(&p.group);
    let blocks_ok = |bl: Block| match bl {
        Block::G(g) => g < basis.n,
        Block::M => true,
    };
    if !blocks_ok(x) || !blocks_ok(y) || !basis.is_legal(x, a) || !basis.is_legal(y, b) {
        return Err(TyError::IllegalLabel(format!("{x:?}/{a:?} with {y:?}/{b:?}")));
    }
    Ok(circ_ctx(&Ctx::new(p), x, a, y, b))
}

fn ty_mul(basis: &TyBasis, c: &Ctx) -> Tensor3 {
    let d = basis.len();
    let mut trip = Vec::new();
    for (i, ei) in basis.entries.iter().enumerate() {
        for (j, ej) in basis.entries.iter().enumerate() {
            let left = circ_ctx(c, ei.block, ei.row, ej.block, ej.row);
            if left.is_empty() {
                continue;
            }
            let right = circ_ctx(c, ei.block, ei.col, ej.block, ej.col);
            for &(z1, l1, c1) in &left {
                for &(z2, l2, c2) in &right {
                    if z1 == z2 {
                        trip.push((i, j, basis.idx(z1, l1, l2), c1 * c2.conj()));
                    }
                }
            }
        }
    }
    Tensor3::from_triplets([d; 3], trip, 1e-15)
}

/// Multiplication tensor alone, without solving for the unit.
pub fn ty_mul_tensor(p: &TyParams) -> Tensor3 {
    ty_mul(&TyBasis::new(&p.group), &Ctx::new(p))
}

fn ty_coprod(basis: &TyBasis, conv: CoproductConvention) -> Tensor3 {
    let d = basis.len();
    let mut trip = Vec::new();
    for (i, e) in basis.entries.iter().enumerate() {
        let om = basis.omega(e.block);
        match conv {
            CoproductConvention::SingleSum => {
                for &c in &om {
                    trip.push((i, basis.idx(e.block, e.row, c), basis.idx(e.block, c, e.col), ONE));
                }
            }
            CoproductConvention::DoubleSum => {
                for &c in &om {
                    for &c2 in &om {
                        trip.push((i, basis.idx(e.block, e.row, c), basis.idx(e.block, c2, e.col), ONE));
                    }
                }
            }
        }
    }
    Tensor3::from_triplets([d; 3], trip, 0.0)
}

/// Antipode and involution tables, as `(source, target, coefficient)`.
fn ty_antipode_star(basis: &TyBasis, c: &Ctx) -> (Vec<(usize, usize, C64)>, Vec<(usize, usize, C64)>) {
    use Label::{Bar, G, M};
    let mut s = Vec::new();
    let mut st = Vec::new();
    let tau = C64::new(c.tau, 0.0);
    let inv_tau = C64::new(1.0 / c.tau, 0.0);
    for (i, e) in basis.entries.iter().enumerate() {
        let (sb, sr, sc, sv, tb, tr, tc, tv) = match (e.block, e.row, e.col) {
            (Block::G(g), G(h), G(k)) => {
                let ng = Block::G(c.neg[g]);
                (ng, G(c.sub(k, g)), G(c.sub(h, g)), ONE, ng, G(c.sub(h, g)), G(c.sub(k, g)), ONE)
            }
            (Block::G(g), G(h), M) => {
                let ng = Block::G(c.neg[g]);
                (ng, M, G(c.sub(h, g)), ONE, ng, G(c.sub(h, g)), M, ONE)
            }
            (Block::G(g), M, G(h)) => {
                let ng = Block::G(c.neg[g]);
                (ng, G(c.sub(h, g)), M, ONE, ng, M, G(c.sub(h, g)), ONE)
            }
            (Block::G(g), M, M) => {
                let ng = Block::G(c.neg[g]);
                (ng, M, M, ONE, ng, M, M, ONE)
            }
            (Block::M, G(g), G(h)) => (Block::M, Bar(h), Bar(g), ONE, Block::M, Bar(g), Bar(h), ONE),
            (Block::M, G(g), Bar(h)) => (Block::M, G(h), Bar(g), inv_tau, Block::M, Bar(g), G(h), tau),
            (Block::M, Bar(g), G(h)) => (Block::M, Bar(h), G(g), tau, Block::M, G(g), Bar(h), inv_tau),
            (Block::M, Bar(g), Bar(h)) => (Block::M, G(h), G(g), ONE, Block::M, G(g), G(h), ONE),
            other => unreachable!("illegal basis entry {other:?}"),
        };
        s.push((basis.idx(sb, sr, sc), i, sv));
        st.push((basis.idx(tb, tr, tc), i, tv));
    }
    (s, st)
}

/// Solves `u b = b u = b` for all basis `b`.
pub fn solve_unit(mul: &Tensor3, tol: &Tolerance) -> Result<DVec, TyError> {
    let d = mul.dims()[2];
    let mut rows: BTreeMap<(u8, usize, usize), Vec<(usize, C64)>> = BTreeMap::new();
    for (a, b, k, v) in mul.triplets() {
        // left equations: sum_i u_i m[i][j][k] = delta_jk
        rows.entry((0, b, k)).or_default().push((a, v));
        // right equations: sum_i u_i m[j][i][k] = delta_jk
        rows.entry((1, a, k)).or_default().push((b, v));
    }
    for j in 0..d {
        rows.entry((0, j, j)).or_default();
        rows.entry((1, j, j)).or_default();
    }
    let mut kb = KernelBuilder::new(d);
    for ((_, j, k), row) in rows {
        let rhs = if j == k { ONE } else { ZERO };
        kb.push_sparse_row(&row, rhs);
    }
    let free = kb.kernel(tol).rank();
    match kb.solve_with_residual(tol) {
        Some((u, res)) if res < tol.eps_residual && free == 0 => Ok(u),
        Some((_, res)) => Err(TyError::NoUnit(res)),
        None => Err(TyError::NoUnit(f64::INFINITY)),
    }
}

/// Structure constants without any verification.
pub fn ty_build_unverified(
    p: &TyParams,
    conv: CoproductConvention,
    tol: &Tolerance,
) -> Result<WeakHopfAlgebra, TyError> {
    let basis = TyBasis::new(&p.group);
    let c = Ctx::new(p);
    let d = basis.len();
    let mul = ty_mul(&basis, &c);
    let unit = solve_unit(&mul, tol)?;
    let coprod = ty_coprod(&basis, conv);
    let counit = basis
        .entries
        .iter()
        .map(|e| if e.row == e.col { ONE } else { ZERO })
        .collect();
    let (s, st) = ty_antipode_star(&basis, &c);
    let w = WeakHopfAlgebra::new(
        (0..d).map(|i| basis.name(i)).collect(),
        mul,
        Vector::from_dense(unit.as_slice(), tol.eps_drop),
        coprod,
        counit,
        SparseMatrix::from_triplets(d, d, s, 0.0),
        SparseMatrix::from_triplets(d, d, st, 0.0),
        Some(basis.layout()),
    )?;
    Ok(w)
}

/// Builds the algebra and runs the full axiom suite on it.
pub fn ty_build(p: &TyParams, tol: &Tolerance) -> Result<WeakHopfAlgebra, TyError> {
    let w = ty_build_unverified(p, CoproductConvention::SingleSum, tol)?;
    let rep = verify_all(&w, tol);
    if !rep.passed() {
        return Err(TyError::Verification {
            what: p.to_string(),
            report: Box::new(rep),
        });
    }
    Ok(w)
}

/// `|G| (|G|+1)^2 + 4 |G|^2`.
pub fn ty_dimension(group_order: usize) -> usize {
    group_order * (group_order + 1).pow(2) + 4 * group_order * group_order
}

/// Matrix of the self-duality `f^x_{a,b} -> ...` into the dual basis `E`.
fn self_duality_matrix(basis: &TyBasis, c: &Ctx, tau_sign: i32) -> SparseMatrix {
    use Label::{Bar, G, M};
    let d = basis.len();
    let scale = 1.0 / (c.n as f64).sqrt();
    let mut trip = Vec::new();
    for (i, e) in basis.entries.iter().enumerate() {
        match (e.block, e.row, e.col) {
            (Block::G(g), G(h), G(k)) => {
                trip.push((basis.idx(Block::G(c.sub(h, k)), G(c.sub(g, k)), G(c.neg[k])), i, ONE));
            }
            (Block::G(g), G(h), M) => {
                trip.push((basis.idx(Block::M, G(c.sub(g, h)), G(c.neg[h])), i, ONE));
            }
            (Block::G(g), M, G(h)) => {
                trip.push((basis.idx(Block::M, Bar(c.sub(g, h)), Bar(c.neg[h])), i, ONE));
            }
            (Block::G(g), M, M) => {
                for q in 0..c.n {
                    trip.push((basis.idx(Block::G(q), M, M), i, c.chi[g][q]));
                }
            }
            (Block::M, G(k), G(kp)) => {
                trip.push((basis.idx(Block::G(c.sub(k, kp)), G(c.neg[kp]), M), i, ONE));
            }
            (Block::M, Bar(k), Bar(kp)) => {
                trip.push((basis.idx(Block::G(c.sub(k, kp)), M, G(c.neg[kp])), i, ONE));
            }
            (Block::M, G(k), Bar(kp)) => {
                let v = c.chi[k][kp].conj() * scale;
                trip.push((basis.idx(Block::M, G(c.neg[k]), Bar(c.neg[kp])), i, v));
            }
            (Block::M, Bar(k), G(kp)) => {
                let v = c.chi[k][kp] * tau_sign as f64;
                trip.push((basis.idx(Block::M, Bar(c.neg[kp]), G(c.neg[k])), i, v));
            }
            other => unreachable!("illegal basis entry {other:?}"),
        }
    }
    SparseMatrix::from_triplets(d, d, trip, 0.0)
}

/// Explicit isomorphism from the algebra onto its dual (on the same index
/// set), checked as a morphism of weak Hopf *-algebras.
pub fn self_duality(
    p: &TyParams,
    w: Arc<WeakHopfAlgebra>,
    tol: &Tolerance,
) -> Result<(WhaMorphism, VerificationReport), TyError> {
    let basis = TyBasis::new(&p.group);
    let c = Ctx::new(p);
    let dual = Arc::new(dual_unchecked(&w));
    let mut phi = WhaMorphism::new(w, dual, self_duality_matrix(&basis, &c, p.tau_sign))?;
    let rep = phi.verify(tol);
    Ok((phi, rep))
}

/// Basis `e^l_{x,y}` of the subgroupoid algebra: `l` in `L`, `x, y` in `G + {m}`.
#[derive(Debug, Clone)]
pub struct SubgroupoidBasis {
    members: Vec<usize>,
    n: usize,
    entries: Vec<(usize, Label, Label)>,
    pos: HashMap<(usize, Label, Label), usize>,
}

impl SubgroupoidBasis {
    pub fn new(group: &GroupSpec, l: &Subgroup) -> Self {
        let n = group.size();
        let members: Vec<usize> = l.elements().iter().map(|g| group.index_of(g)).collect();
        let om: Vec<Label> = (0..n).map(Label::G).chain([Label::M]).collect();
        let mut entries = Vec::new();
        for &g in &members {
            for &x in &om {
                for &y in &om {
                    entries.push((g, x, y));
                }
            }
        }
        let pos = entries.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        Self { members, n, entries, pos }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn entry(&self, i: usize) -> (usize, Label, Label) {
        self.entries[i]
    }

    pub fn index(&self, l: usize, x: Label, y: Label) -> Option<usize> {
        self.pos.get(&(l, x, y)).copied()
    }

    pub fn omega(&self) -> Vec<Label> {
        (0..self.n).map(Label::G).chain([Label::M]).collect()
    }
}

fn shift(c: &Ctx, x: Label, by: usize) -> Label {
    match x {
        Label::G(g) => Label::G(c.sub(g, by)),
        other => other,
    }
}

/// Quantum subgroupoid attached to `L`: the algebra `B_L`, the projection
/// `pi_L` from the full algebra, and the report of its checks.
#[derive(Debug, Clone)]
pub struct Subgroupoid {
    pub subgroup: Subgroup,
    pub basis: SubgroupoidBasis,
    pub algebra: Arc<WeakHopfAlgebra>,
    pub projection: WhaMorphism,
    pub report: VerificationReport,
}

/// Builds `B_L` from its matrix-unit presentation and the projection obtained
/// by composing the self-duality with truncation to the blocks in `L`.
pub fn subgroupoid_build(
    p: &TyParams,
    source: Arc<WeakHopfAlgebra>,
    l: &Subgroup,
    tol: &Tolerance,
) -> Result<Subgroupoid, TyError> {
    if l.parent() != &p.group {
        return Err(GroupError::ParentMismatch.into());
    }
    let c = Ctx::new(p);
    let sb = SubgroupoidBasis::new(&p.group, l);
    let d = sb.len();
    let om = sb.omega();
    let names = |i: usize| {
        let (g, x, y) = sb.entries[i];
        let nm = |lab: Label| match lab {
            Label::G(h) => p.group.element_at(h).to_string(),
            _ => "m".into(),
        };
        format!("e[{};{},{}]", p.group.element_at(g), nm(x), nm(y))
    };
    let mut mul = Vec::new();
    let mut cop = Vec::new();
    let mut s = Vec::new();
    let mut st = Vec::new();
    let mut unit = Vec::new();
    let mut counit = vec![ZERO; d];
    for (i, &(g, x, y)) in sb.entries.iter().enumerate() {
        for &z in &om {
            mul.push((i, sb.pos[&(g, y, z)], sb.pos[&(g, x, z)], ONE));
        }
        for &l2 in &sb.members {
            let l1 = c.sub(g, l2);
            cop.push((i, sb.pos[&(l1, shift(&c, x, l2), shift(&c, y, l2))], i_of(&sb, l2, x, y), ONE));
        }
        let ng = c.neg[g];
        s.push((sb.pos[&(ng, shift(&c, y, g), shift(&c, x, g))], i, ONE));
        st.push((sb.pos[&(g, y, x)], i, ONE));
        if x == y {
            unit.push((i, ONE));
        }
        if g == 0 {
            counit[i] = ONE;
        }
    }
    let layout = BlockLayout {
        block_sizes: vec![c.n + 1; sb.members.len()],
        entries: sb
            .entries
            .iter()
            .map(|&(g, x, y)| {
                let b = sb.members.iter().position(|&m| m == g).expect("member");
                let lab = |t: Label| match t {
                    Label::G(h) => h,
                    _ => c.n,
                };
                (b, lab(x), lab(y))
            })
            .collect(),
    };
    let alg = WeakHopfAlgebra::new(
        (0..d).map(names).collect(),
        Tensor3::from_triplets([d; 3], mul, 0.0),
        Vector::from_entries(d, unit, 0.0),
        Tensor3::from_triplets([d; 3], cop, 0.0),
        counit,
        SparseMatrix::from_triplets(d, d, s, 0.0),
        SparseMatrix::from_triplets(d, d, st, 0.0),
        Some(layout),
    )?;
    let mut report = verify_all(&alg, tol);
    let alg = Arc::new(alg);

    // pi_L = truncation o self-duality
    let basis = TyBasis::new(&p.group);
    let phi = self_duality_matrix(&basis, &c, p.tau_sign);
    let mut trip = Vec::new();
    for i in 0..basis.len() {
        for &(r, v) in phi.column(i) {
            let e = basis.entry(r);
            if let Block::G(g) = e.block {
                if let Some(t) = sb.index(g, e.row, e.col) {
                    trip.push((t, i, v));
                }
            }
        }
    }
    let matrix = SparseMatrix::from_triplets(d, basis.len(), trip, 0.0);
    let mut projection = WhaMorphism::new(source, alg.clone(), matrix)?;
    let mrep = projection.verify(tol);
    let surjective = Subspace::full(basis.len())
        .image(&projection.matrix.to_dense(), tol)
        .map(|s| s.rank())
        .unwrap_or(0);
    report.extend(mrep);
    report.push(CheckResult::flag(
        "projection_surjective",
        surjective == d,
        (d - surjective.min(d)) as f64,
    ));
    if !report.passed() {
        return Err(TyError::Verification {
            what: format!("subgroupoid for L={l}"),
            report: Box::new(report),
        });
    }
    Ok(Subgroupoid {
        subgroup: l.clone(),
        basis: sb,
        algebra: alg,
        projection,
        report,
    })
}

fn i_of(sb: &SubgroupoidBasis, l: usize, x: Label, y: Label) -> usize {
    sb.pos[&(l, x, y)]
}

/// Checks the explicit bases of the counital subalgebras of `B_L`, the
/// counital map formulas, the intersection basis indexed by `G/L + {m}` and
/// connectedness.
pub fn verify_counital_bases(p: &TyParams, sg: &Subgroupoid, tol: &Tolerance) -> VerificationReport {
    let c = Ctx::new(p);
    let sb = &sg.basis;
    let w = &*sg.algebra;
    let d = sb.len();
    let mut rep = VerificationReport::default();
    let om = sb.omega();
    let vec_of = |terms: Vec<usize>| -> DVec {
        let mut v = DVec::zeros(d);
        for t in terms {
            v[t] += ONE;
        }
        v
    };
    let upper = |x: Label| -> DVec {
        vec_of(
            sb.members
                .iter()
                .map(|&l| {
                    let xl = match x {
                        Label::G(g) => Label::G(c.add[g][l]),
                        o => o,
                    };
                    sb.pos[&(l, xl, xl)]
                })
                .collect(),
        )
    };
    let lower = |x: Label| -> DVec { vec_of(sb.members.iter().map(|&l| sb.pos[&(l, x, x)]).collect()) };
    let ups: Vec<DVec> = om.iter().map(|&x| upper(x)).collect();
    let lows: Vec<DVec> = om.iter().map(|&x| lower(x)).collect();
    let span_up = Subspace::span(d, &ups, tol).expect("dims");
    let span_low = Subspace::span(d, &lows, tol).expect("dims");
    let bt = w.counital_t(tol);
    let bs = w.counital_s(tol);
    let angle = |a: &Subspace, b: &Subspace| a.max_principal_angle(b).expect("dims");
    rep.push(CheckResult::residual("target_basis", angle(&span_up, &bt), vec![], tol.eps_residual));
    rep.push(CheckResult::residual("source_basis", angle(&span_low, &bs), vec![], tol.eps_residual));
    rep.push(CheckResult::flag("target_rank", bt.rank() == om.len(), bt.rank() as f64));

    let et = w.epsilon_t_matrix();
    let es = w.epsilon_s_matrix();
    let mut worst_t: f64 = 0.0;
    let mut worst_s: f64 = 0.0;
    for (i, &(l, x, y)) in sb.entries.iter().enumerate() {
        let xi = om.iter().position(|&t| t == x).expect("label");
        let yi = om.iter().position(|&t| t == y).expect("label");
        let (want_t, want_s) = if l == 0 {
            (ups[xi].clone(), lows[yi].clone())
        } else {
            (DVec::zeros(d), DVec::zeros(d))
        };
        worst_t = worst_t.max((et.column(i) - want_t).norm());
        worst_s = worst_s.max((es.column(i) - want_s).norm());
    }
    rep.push(CheckResult::residual("target_counital_map", worst_t, vec![], tol.eps_residual));
    rep.push(CheckResult::residual("source_counital_map", worst_s, vec![], tol.eps_residual));

    // z_beta for beta in G/L, and z_m
    let mut zs: Vec<DVec> = Vec::new();
    let mut seen = vec![false; c.n];
    for g in 0..c.n {
        if seen[g] {
            continue;
        }
        let coset: Vec<usize> = sb.members.iter().map(|&l| c.add[g][l]).collect();
        for &h in &coset {
            seen[h] = true;
        }
        let mut terms = Vec::new();
        for &l in &sb.members {
            for &h in &coset {
                terms.push(sb.pos[&(l, Label::G(h), Label::G(h))]);
            }
        }
        zs.push(vec_of(terms));
    }
    zs.push(lower(Label::M));
    let zspan = Subspace::span(d, &zs, tol).expect("dims");
    let meet = bt.intersect(&bs, tol).expect("dims");
    rep.push(CheckResult::residual("intersection_basis", angle(&zspan, &meet), vec![], tol.eps_residual));
    let cosets = c.n / sb.members.len();
    rep.push(CheckResult::flag("intersection_rank", meet.rank() == cosets + 1, meet.rank() as f64));
    let center = w.center(tol);
    let sz = bs.intersect(&center, tol).expect("dims");
    rep.push(CheckResult::flag("connected", sz.rank() == 1, sz.rank() as f64));
    rep
}

/// Group element by index, for printing.
pub fn element_label(p: &TyParams, g: usize) -> GroupElement {
    p.group.element_at(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abelian::{Phase, Subgroup};
    use crate::wha::{dual_wha, verify_counital};

    pub fn z2(tau: i32) -> TyParams {
        let g = GroupSpec::cyclic(2).unwrap();
        let chi = Bicharacter::new(&g, vec![vec![Phase::new(1, 2)]]).unwrap();
        TyParams::new(g, chi, tau).unwrap()
    }

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn dimensions() {
        assert_eq!(TyBasis::new(&GroupSpec::cyclic(2).unwrap()).len(), 34);
        assert_eq!(TyBasis::new(&GroupSpec::cyclic(3).unwrap()).len(), 84);
        assert_eq!(TyBasis::new(&GroupSpec::cyclic(4).unwrap()).len(), 164);
        assert_eq!(TyBasis::new(&GroupSpec::new(vec![2, 2]).unwrap()).len(), 164);
        assert_eq!(ty_dimension(2), 34);
    }

    #[test]
    fn composition_rules() {
        let p = z2(1);
        // v^m_h o v^m_bar(k) = v^{k-h}_k
        let t = circ(&p, Block::M, Label::G(0), Block::M, Label::Bar(1)).unwrap();
        assert_eq!(t, vec![(Block::G(1), Label::G(1), ONE)]);
        let t = circ(&p, Block::G(0), Label::G(1), Block::G(0), Label::G(1)).unwrap();
        assert_eq!(t, vec![(Block::G(0), Label::G(1), ONE)]);
        // v^m_bar1 o v^m_1 = tau (v^0_m - v^1_m)
        let t = circ(&p, Block::M, Label::Bar(1), Block::M, Label::G(1)).unwrap();
        let tau = p.tau();
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].0, t[0].1), (Block::G(0), Label::M));
        assert!((t[0].2 - C64::new(tau, 0.0)).norm() < 1e-15);
        assert_eq!((t[1].0, t[1].1), (Block::G(1), Label::M));
        assert!((t[1].2 + C64::new(tau, 0.0)).norm() < 1e-15);
        assert!(circ(&p, Block::G(0), Label::Bar(0), Block::M, Label::G(0)).is_err());
        assert!(circ(&p, Block::M, Label::M, Block::M, Label::G(0)).is_err());
    }

    #[test]
    fn z2_build_and_unit() {
        let p = z2(1);
        let w = ty_build(&p, &tol()).unwrap();
        assert_eq!(w.dim(), 34);
        let basis = TyBasis::new(&p.group);
        let mut expected = DVec::zeros(34);
        for &y in &basis.omega(Block::G(0)) {
            for &z in &basis.omega(Block::G(0)) {
                expected[basis.idx(Block::G(0), y, z)] = ONE;
            }
        }
        assert!((w.unit_dense() - expected).norm() < 1e-10);
        let eps = w.counit();
        for (i, e) in basis.entries().iter().enumerate() {
            assert_eq!(eps[i], if e.row == e.col { ONE } else { ZERO });
        }
    }

    #[test]
    fn antipode_table_spot_checks() {
        let p = z2(-1);
        let w = ty_build_unverified(&p, CoproductConvention::SingleSum, &tol()).unwrap();
        let basis = TyBasis::new(&p.group);
        let tau = p.tau();
        let s = w.antipode_matrix();
        // S(f^m_{g, bar h}) = tau^-1 f^m_{h, bar g}
        let i = basis.idx(Block::M, Label::G(0), Label::Bar(1));
        let j = basis.idx(Block::M, Label::G(1), Label::Bar(0));
        assert_eq!(s.column(i), &[(j, C64::new(1.0 / tau, 0.0))]);
        // S(f^m_{bar g, h}) = tau f^m_{bar h, g}
        let i = basis.idx(Block::M, Label::Bar(0), Label::G(1));
        let j = basis.idx(Block::M, Label::Bar(1), Label::G(0));
        assert_eq!(s.column(i), &[(j, C64::new(tau, 0.0))]);
    }

    #[test]
    fn matrix_coefficient_identity() {
        // f^x_{a,b} = S(f^x_{b,a})*
        let p = z2(1);
        let w = ty_build_unverified(&p, CoproductConvention::SingleSum, &tol()).unwrap();
        let basis = TyBasis::new(&p.group);
        for (i, e) in basis.entries().iter().enumerate() {
            let j = basis.idx(e.block, e.col, e.row);
            let v = Vector::basis(34, j).to_dense();
            let back = w.star_dense(&w.antipode_dense(&v));
            assert!((back - Vector::basis(34, i).to_dense()).norm() < 1e-12, "{}", basis.name(i));
        }
    }

    #[test]
    fn block_grading() {
        let p = z2(1);
        let w = ty_build_unverified(&p, CoproductConvention::SingleSum, &tol()).unwrap();
        let basis = TyBasis::new(&p.group);
        for (i, j, k, _) in w.mul_tensor().triplets() {
            let (x, y, z) = (basis.entry(i).block, basis.entry(j).block, basis.entry(k).block);
            match (x, y) {
                (Block::G(a), Block::G(b)) => assert_eq!(z, Block::G((a + b) % 2)),
                (Block::M, Block::M) => assert!(matches!(z, Block::G(_))),
                _ => assert_eq!(z, Block::M),
            }
        }
    }

    #[test]
    fn double_sum_fails_counit() {
        let p = z2(1);
        let w = ty_build_unverified(&p, CoproductConvention::DoubleSum, &tol()).unwrap();
        let rep = crate::wha::verify_weak_bialgebra(&w, &tol());
        assert!(rep.get("counit_left").unwrap().max_residual >= 1.0);
    }

    #[test]
    fn counital_structure_z2() {
        let p = z2(1);
        let w = ty_build(&p, &tol()).unwrap();
        assert_eq!(w.counital_s(&tol()).rank(), 3);
        assert_eq!(w.counital_t(&tol()).rank(), 3);
        assert!(verify_counital(&w, &tol()).passed());
    }

    #[test]
    fn dual_is_block_matrix_algebra() {
        let p = z2(1);
        let w = ty_build(&p, &tol()).unwrap();
        let d = dual_wha(&w, &tol()).unwrap();
        let basis = TyBasis::new(&p.group);
        for (i, ei) in basis.entries().iter().enumerate() {
            for (j, ej) in basis.entries().iter().enumerate() {
                let got = d.mul_dense(&Vector::basis(34, i).to_dense(), &Vector::basis(34, j).to_dense());
                let mut want = DVec::zeros(34);
                if ei.block == ej.block && ei.col == ej.row {
                    want[basis.idx(ei.block, ei.row, ej.col)] = ONE;
                }
                assert!((got - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn self_duality_is_isomorphism() {
        for tau in [1, -1] {
            let p = z2(tau);
            let w = Arc::new(ty_build(&p, &tol()).unwrap());
            let (phi, rep) = self_duality(&p, w, &tol()).unwrap();
            assert!(rep.passed(), "{rep}");
            assert!(phi.is_verified());
        }
    }

    #[test]
    fn subgroupoid_z2() {
        let p = z2(1);
        let w = Arc::new(ty_build(&p, &tol()).unwrap());
        let full = Subgroup::full(&p.group);
        let sg = subgroupoid_build(&p, w.clone(), &full, &tol()).unwrap();
        assert_eq!(sg.algebra.dim(), 18);
        assert!(sg.projection.is_verified());
        let rep = verify_counital_bases(&p, &sg, &tol());
        assert!(rep.passed(), "{rep}");
        let triv = Subgroup::trivial(&p.group);
        let sg0 = subgroupoid_build(&p, w, &triv, &tol()).unwrap();
        assert_eq!(sg0.algebra.dim(), 9);
        // single term coproduct on the trivial subgroup
        for i in 0..9 {
            assert_eq!(sg0.algebra.coprod_tensor().slice(i), &[(i, i, ONE)]);
        }
    }

    #[test]
    fn subgroupoid_coproduct_formula() {
        let p = z2(1);
        let w = Arc::new(ty_build(&p, &tol()).unwrap());
        let sg = subgroupoid_build(&p, w, &Subgroup::full(&p.group), &tol()).unwrap();
        let sb = &sg.basis;
        // Delta(e^1_{0,1}) = e^1_{0,1} (x) e^0_{0,1} + e^0_{1,0} (x) e^1_{0,1}
        let i = sb.index(1, Label::G(0), Label::G(1)).unwrap();
        let mut want = vec![
            (sb.index(1, Label::G(0), Label::G(1)).unwrap(), sb.index(0, Label::G(0), Label::G(1)).unwrap(), ONE),
            (sb.index(0, Label::G(1), Label::G(0)).unwrap(), sb.index(1, Label::G(0), Label::G(1)).unwrap(), ONE),
        ];
        want.sort_by_key(|e| (e.0, e.1));
        assert_eq!(sg.algebra.coprod_tensor().slice(i), want.as_slice());
    }
}

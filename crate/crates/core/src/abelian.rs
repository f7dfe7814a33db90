//! Finite abelian groups presented as products of cyclic factors, their
//! subgroups and cosets, and symmetric bicharacters given by rational phases.

use std::collections::BTreeSet;
use std::fmt;

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::Zero;
use thiserror::Error;

/// Exact phase, read modulo 1.
pub type Phase = Ratio<i64>;

/// Default bound on the group order for subgroup enumeration.
pub const DEFAULT_ENUMERATION_BOUND: usize = 64;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("cyclic factor orders must be at least 1, got {0}")]
    BadOrder(u32),
    #[error("a group needs at least one cyclic factor")]
    NoFactors,
    #[error("group of order {size} exceeds the enumeration bound {bound}")]
    EnumerationLimit { size: usize, bound: usize },
    #[error("element {0} does not belong to the group")]
    NotAnElement(String),
    #[error("invalid subgroup: {0}")]
    InvalidSubgroup(String),
    #[error("invalid bicharacter: {0}")]
    InvalidBicharacter(String),
    #[error("operands live in different groups")]
    ParentMismatch,
}

/// `Z/n_1 x ... x Z/n_k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupSpec {
    orders: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement {
    residues: Vec<u32>,
}

impl GroupElement {
    pub fn residues(&self) -> &[u32] {
        &self.residues
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.residues.len() == 1 {
            write!(f, "{}", self.residues[0])
        } else {
            let parts: Vec<String> = self.residues.iter().map(|r| r.to_string()).collect();
            write!(f, "({})", parts.join(","))
        }
    }
}

impl GroupSpec {
    pub fn new(orders: Vec<u32>) -> Result<Self, GroupError> {
        if orders.is_empty() {
            return Err(GroupError::NoFactors);
        }
        if let Some(&bad) = orders.iter().find(|&&n| n == 0) {
            return Err(GroupError::BadOrder(bad));
        }
        Ok(Self { orders })
    }

    pub fn cyclic(n: u32) -> Result<Self, GroupError> {
        Self::new(vec![n])
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn rank(&self) -> usize {
        self.orders.len()
    }

    pub fn size(&self) -> usize {
        self.orders.iter().map(|&n| n as usize).product()
    }

    pub fn zero(&self) -> GroupElement {
        GroupElement {
            residues: vec![0; self.orders.len()],
        }
    }

    pub fn element(&self, residues: &[i64]) -> Result<GroupElement, GroupError> {
        if residues.len() != self.orders.len() {
            return Err(GroupError::NotAnElement(format!("{residues:?}")));
        }
        let residues = residues
            .iter()
            .zip(&self.orders)
            .map(|(&r, &n)| r.rem_euclid(n as i64) as u32)
            .collect();
        Ok(GroupElement { residues })
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        g.residues.len() == self.orders.len()
            && g.residues.iter().zip(&self.orders).all(|(&r, &n)| r < n)
    }

    /// Position of `g` in the lexicographic order of all elements.
    pub fn index_of(&self, g: &GroupElement) -> usize {
        g.residues
            .iter()
            .zip(&self.orders)
            .fold(0usize, |acc, (&r, &n)| acc * n as usize + r as usize)
    }

    pub fn element_at(&self, mut index: usize) -> GroupElement {
        let mut residues = vec![0u32; self.orders.len()];
        for (slot, &n) in residues.iter_mut().zip(&self.orders).rev() {
            *slot = (index % n as usize) as u32;
            index /= n as usize;
        }
        GroupElement { residues }
    }

    /// All elements, lexicographically sorted.
    pub fn elements(&self) -> Vec<GroupElement> {
        (0..self.size()).map(|i| self.element_at(i)).collect()
    }

    pub fn add(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        let residues = a
            .residues
            .iter()
            .zip(&b.residues)
            .zip(&self.orders)
            .map(|((&x, &y), &n)| (x + y) % n)
            .collect();
        GroupElement { residues }
    }

    pub fn neg(&self, a: &GroupElement) -> GroupElement {
        let residues = a
            .residues
            .iter()
            .zip(&self.orders)
            .map(|(&x, &n)| (n - x) % n)
            .collect();
        GroupElement { residues }
    }

    pub fn sub(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.add(a, &self.neg(b))
    }

    /// Addition table on element indices.
    pub fn addition_table(&self) -> Vec<Vec<usize>> {
        let els = self.elements();
        els.iter()
            .map(|a| els.iter().map(|b| self.index_of(&self.add(a, b))).collect())
            .collect()
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.orders.iter().map(|n| format!("Z/{n}")).collect();
        write!(f, "{}", parts.join(" x "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subgroup {
    parent: GroupSpec,
    elements: Vec<GroupElement>,
}

impl Subgroup {
    /// Validates closure; the element list may be in any order.
    pub fn new(parent: &GroupSpec, elements: Vec<GroupElement>) -> Result<Self, GroupError> {
        let set: BTreeSet<GroupElement> = elements.into_iter().collect();
        for g in &set {
            if !parent.contains(g) {
                return Err(GroupError::NotAnElement(g.to_string()));
            }
        }
        if !set.contains(&parent.zero()) {
            return Err(GroupError::InvalidSubgroup("missing the identity".into()));
        }
        for a in &set {
            if !set.contains(&parent.neg(a)) {
                return Err(GroupError::InvalidSubgroup(format!("not closed under negation at {a}")));
            }
            for b in &set {
                if !set.contains(&parent.add(a, b)) {
                    return Err(GroupError::InvalidSubgroup(format!(
                        "not closed under addition at {a} + {b}"
                    )));
                }
            }
        }
        Ok(Self {
            parent: parent.clone(),
            elements: set.into_iter().collect(),
        })
    }

    pub fn trivial(parent: &GroupSpec) -> Self {
        Self {
            parent: parent.clone(),
            elements: vec![parent.zero()],
        }
    }

    pub fn full(parent: &GroupSpec) -> Self {
        Self {
            parent: parent.clone(),
            elements: parent.elements(),
        }
    }

    /// Smallest subgroup containing `generators`.
    pub fn generated(parent: &GroupSpec, generators: &[GroupElement]) -> Result<Self, GroupError> {
        let mut set: BTreeSet<GroupElement> = BTreeSet::new();
        set.insert(parent.zero());
        for g in generators {
            if !parent.contains(g) {
                return Err(GroupError::NotAnElement(g.to_string()));
            }
        }
        let mut frontier: Vec<GroupElement> = vec![parent.zero()];
        while let Some(a) = frontier.pop() {
            for g in generators {
                let s = parent.add(&a, g);
                if set.insert(s.clone()) {
                    frontier.push(s);
                }
            }
        }
        Ok(Self {
            parent: parent.clone(),
            elements: set.into_iter().collect(),
        })
    }

    pub fn parent(&self) -> &GroupSpec {
        &self.parent
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.elements.binary_search(g).is_ok()
    }

    pub fn is_subset_of(&self, other: &Subgroup) -> bool {
        self.elements.iter().all(|g| other.contains(g))
    }

    fn check_parent(&self, other: &Subgroup) -> Result<(), GroupError> {
        if self.parent == other.parent {
            Ok(())
        } else {
            Err(GroupError::ParentMismatch)
        }
    }

    pub fn meet(&self, other: &Subgroup) -> Result<Subgroup, GroupError> {
        self.check_parent(other)?;
        Ok(Subgroup {
            parent: self.parent.clone(),
            elements: self
                .elements
                .iter()
                .filter(|g| other.contains(g))
                .cloned()
                .collect(),
        })
    }

    pub fn join(&self, other: &Subgroup) -> Result<Subgroup, GroupError> {
        self.check_parent(other)?;
        let gens: Vec<GroupElement> = self.elements.iter().chain(&other.elements).cloned().collect();
        Subgroup::generated(&self.parent, &gens)
    }
}

impl fmt::Display for Subgroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.elements.iter().map(|g| g.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl PartialOrd for Subgroup {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Size first, then the sorted element lists lexicographically.
impl Ord for Subgroup {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.elements.cmp(&other.elements))
    }
}

/// Every subgroup of `g` exactly once, sorted by size then lexicographically.
pub fn subgroups(g: &GroupSpec, bound: usize) -> Result<Vec<Subgroup>, GroupError> {
    let size = g.size();
    if size > bound {
        return Err(GroupError::EnumerationLimit { size, bound });
    }
    let table = g.addition_table();
    let close = |seed: &BTreeSet<usize>| -> BTreeSet<usize> {
        let mut set = seed.clone();
        set.insert(0);
        loop {
            let mut grown = set.clone();
            for &a in &set {
                for &b in &set {
                    grown.insert(table[a][b]);
                }
            }
            if grown.len() == set.len() {
                return set;
            }
            set = grown;
        }
    };
    let mut found: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut frontier = vec![close(&BTreeSet::new())];
    found.insert(frontier[0].iter().copied().collect());
    while let Some(sub) = frontier.pop() {
        for x in 0..size {
            if sub.contains(&x) {
                continue;
            }
            let mut seed = sub.clone();
            seed.insert(x);
            let bigger = close(&seed);
            if found.insert(bigger.iter().copied().collect()) {
                frontier.push(bigger);
            }
        }
    }
    let mut out: Vec<Subgroup> = found
        .into_iter()
        .map(|idx| Subgroup {
            parent: g.clone(),
            elements: idx.into_iter().map(|i| g.element_at(i)).collect(),
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Cosets of `l` in `g`, ordered by smallest representative.
pub fn cosets(g: &GroupSpec, l: &Subgroup) -> Result<Vec<Vec<GroupElement>>, GroupError> {
    if l.parent() != g {
        return Err(GroupError::ParentMismatch);
    }
    // re-validate in case the subgroup was assembled by hand elsewhere
    Subgroup::new(g, l.elements().to_vec())?;
    let mut seen = vec![false; g.size()];
    let mut out = Vec::new();
    for rep in g.elements() {
        if seen[g.index_of(&rep)] {
            continue;
        }
        let mut coset: Vec<GroupElement> = l.elements().iter().map(|x| g.add(&rep, x)).collect();
        coset.sort();
        for x in &coset {
            seen[g.index_of(x)] = true;
        }
        out.push(coset);
    }
    Ok(out)
}

/// `(L cap K, L + K)`.
pub fn subgroup_meet_join(l: &Subgroup, k: &Subgroup) -> Result<(Subgroup, Subgroup), GroupError> {
    Ok((l.meet(k)?, l.join(k)?))
}

fn frac_part(q: Phase) -> Phase {
    q - q.floor()
}

/// `exp(2 pi i q)`, exact at quarter turns.
pub fn unit_root(q: Phase) -> Complex64 {
    let q = frac_part(q);
    if q.is_zero() {
        return Complex64::new(1.0, 0.0);
    }
    if q == Phase::new(1, 2) {
        return Complex64::new(-1.0, 0.0);
    }
    if q == Phase::new(1, 4) {
        return Complex64::new(0.0, 1.0);
    }
    if q == Phase::new(3, 4) {
        return Complex64::new(0.0, -1.0);
    }
    let theta = 2.0 * std::f64::consts::PI * (*q.numer() as f64) / (*q.denom() as f64);
    Complex64::new(theta.cos(), theta.sin())
}

/// Symmetric non-degenerate bicharacter `chi(g,h) = exp(2 pi i sum g_i q_ij h_j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bicharacter {
    parent: GroupSpec,
    phases: Vec<Vec<Phase>>,
}

impl Bicharacter {
    pub fn new(parent: &GroupSpec, phases: Vec<Vec<Phase>>) -> Result<Self, GroupError> {
        let k = parent.rank();
        if phases.len() != k || phases.iter().any(|row| row.len() != k) {
            return Err(GroupError::InvalidBicharacter(format!(
                "phase matrix must be {k}x{k}"
            )));
        }
        let phases: Vec<Vec<Phase>> = phases
            .into_iter()
            .map(|row| row.into_iter().map(frac_part).collect())
            .collect();
        for i in 0..k {
            for j in 0..k {
                if phases[i][j] != phases[j][i] {
                    return Err(GroupError::InvalidBicharacter(format!(
                        "not symmetric at ({i},{j})"
                    )));
                }
                let scaled = phases[i][j] * Phase::from_integer(parent.orders()[i] as i64);
                if !scaled.is_integer() {
                    return Err(GroupError::InvalidBicharacter(format!(
                        "not well defined: {} * {} is not an integer",
                        parent.orders()[i],
                        phases[i][j]
                    )));
                }
            }
        }
        let chi = Self {
            parent: parent.clone(),
            phases,
        };
        let zero = parent.zero();
        for g in parent.elements() {
            if g != zero && parent.elements().iter().all(|h| chi.phase(&g, h).is_zero()) {
                return Err(GroupError::InvalidBicharacter(format!(
                    "degenerate: chi({g}, -) is trivial"
                )));
            }
        }
        Ok(chi)
    }

    /// Row-major flattened phases.
    pub fn from_flat(parent: &GroupSpec, flat: &[Phase]) -> Result<Self, GroupError> {
        let k = parent.rank();
        if flat.len() != k * k {
            return Err(GroupError::InvalidBicharacter(format!(
                "expected {} phases, got {}",
                k * k,
                flat.len()
            )));
        }
        Self::new(parent, flat.chunks(k).map(|r| r.to_vec()).collect())
    }

    /// `q_ii = 1/n_i` on each factor, zero off the diagonal.
    pub fn diagonal(parent: &GroupSpec) -> Result<Self, GroupError> {
        let k = parent.rank();
        let phases = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        if i == j {
                            Phase::new(1, parent.orders()[i] as i64)
                        } else {
                            Phase::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        Self::new(parent, phases)
    }

    pub fn parent(&self) -> &GroupSpec {
        &self.parent
    }

    pub fn phases(&self) -> &[Vec<Phase>] {
        &self.phases
    }

    /// Exact phase of `chi(g,h)` in `[0,1)`.
    pub fn phase(&self, g: &GroupElement, h: &GroupElement) -> Phase {
        let mut acc = Phase::zero();
        for (i, &gi) in g.residues().iter().enumerate() {
            for (j, &hj) in h.residues().iter().enumerate() {
                acc += self.phases[i][j] * Phase::from_integer(gi as i64 * hj as i64);
            }
        }
        frac_part(acc)
    }

    pub fn is_trivial_at(&self, g: &GroupElement, h: &GroupElement) -> bool {
        self.phase(g, h).is_zero()
    }

    /// Value table on element indices.
    pub fn table(&self) -> Vec<Vec<Complex64>> {
        let els = self.parent.elements();
        els.iter()
            .map(|g| els.iter().map(|h| chi_eval(self, g, h)).collect())
            .collect()
    }
}

pub fn chi_eval(chi: &Bicharacter, g: &GroupElement, h: &GroupElement) -> Complex64 {
    unit_root(chi.phase(g, h))
}

/// `{g : chi(g,l) = 1 for all l in L}`, computed exactly.
pub fn annihilator(chi: &Bicharacter, l: &Subgroup) -> Result<Subgroup, GroupError> {
    if l.parent() != chi.parent() {
        return Err(GroupError::ParentMismatch);
    }
    let g = chi.parent();
    let els = g
        .elements()
        .into_iter()
        .filter(|x| l.elements().iter().all(|y| chi.is_trivial_at(x, y)))
        .collect();
    Subgroup::new(g, els)
}

/// A subgroup or the extra top element `Omega` of the extended lattice.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExtendedLatticeNode {
    Subgroup(Subgroup),
    Omega,
}

impl ExtendedLatticeNode {
    pub fn meet(&self, other: &Self) -> Result<Self, GroupError> {
        Ok(match (self, other) {
            (Self::Omega, x) | (x, Self::Omega) => x.clone(),
            (Self::Subgroup(a), Self::Subgroup(b)) => Self::Subgroup(a.meet(b)?),
        })
    }

    pub fn join(&self, other: &Self) -> Result<Self, GroupError> {
        Ok(match (self, other) {
            (Self::Omega, _) | (_, Self::Omega) => Self::Omega,
            (Self::Subgroup(a), Self::Subgroup(b)) => Self::Subgroup(a.join(b)?),
        })
    }

    /// Partial order: inclusion on subgroups, `Omega` on top.
    pub fn le(&self, other: &Self) -> bool {
        match (self, other) {
            (_, Self::Omega) => true,
            (Self::Omega, Self::Subgroup(_)) => false,
            (Self::Subgroup(a), Self::Subgroup(b)) => a.is_subset_of(b),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Omega => "Omega".into(),
            Self::Subgroup(l) => format!("L={l}"),
        }
    }
}

impl fmt::Display for ExtendedLatticeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// All subgroups followed by `Omega`.
pub fn extended_lattice(g: &GroupSpec, bound: usize) -> Result<Vec<ExtendedLatticeNode>, GroupError> {
    let mut nodes: Vec<ExtendedLatticeNode> = subgroups(g, bound)?
        .into_iter()
        .map(ExtendedLatticeNode::Subgroup)
        .collect();
    nodes.push(ExtendedLatticeNode::Omega);
    Ok(nodes)
}

/// Parses `"1/2"` or `"0"` into a phase.
pub fn parse_phase(s: &str) -> Result<Phase, GroupError> {
    let s = s.trim();
    let bad = || GroupError::InvalidBicharacter(format!("cannot parse phase {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Phase::new(n, d))
        }
        None => Ok(Phase::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z(n: u32) -> GroupSpec {
        GroupSpec::cyclic(n).unwrap()
    }

    fn q(n: i64, d: i64) -> Phase {
        Phase::new(n, d)
    }

    #[test]
    fn subgroup_counts() {
        assert_eq!(subgroups(&z(2), 64).unwrap().len(), 2);
        let z4 = subgroups(&z(4), 64).unwrap();
        let shown: Vec<String> = z4.iter().map(|s| s.to_string()).collect();
        assert_eq!(shown, ["{0}", "{0,2}", "{0,1,2,3}"]);
        let k4 = GroupSpec::new(vec![2, 2]).unwrap();
        assert_eq!(subgroups(&k4, 64).unwrap().len(), 5);
        assert_eq!(subgroups(&GroupSpec::new(vec![2, 4]).unwrap(), 64).unwrap().len(), 8);
        assert_eq!(subgroups(&z(12), 64).unwrap().len(), 6);
    }

    #[test]
    fn enumeration_bound() {
        let err = subgroups(&z(100), 64).unwrap_err();
        assert_eq!(err, GroupError::EnumerationLimit { size: 100, bound: 64 });
    }

    #[test]
    fn coset_examples() {
        let g = z(2);
        let full = Subgroup::full(&g);
        assert_eq!(cosets(&g, &full).unwrap().len(), 1);
        assert_eq!(cosets(&g, &Subgroup::trivial(&g)).unwrap().len(), 2);
        let g4 = z(4);
        let l = Subgroup::generated(&g4, &[g4.element(&[2]).unwrap()]).unwrap();
        let cs: Vec<Vec<String>> = cosets(&g4, &l)
            .unwrap()
            .iter()
            .map(|c| c.iter().map(|x| x.to_string()).collect())
            .collect();
        assert_eq!(cs, vec![vec!["0", "2"], vec!["1", "3"]]);
    }

    #[test]
    fn chi_values() {
        let g = z(2);
        let chi = Bicharacter::new(&g, vec![vec![q(1, 2)]]).unwrap();
        let one = g.element(&[1]).unwrap();
        assert_eq!(chi_eval(&chi, &one, &one), Complex64::new(-1.0, 0.0));
        assert_eq!(chi_eval(&chi, &g.zero(), &one), Complex64::new(1.0, 0.0));
        let g4 = z(4);
        let chi4 = Bicharacter::new(&g4, vec![vec![q(1, 4)]]).unwrap();
        let a = g4.element(&[1]).unwrap();
        let b = g4.element(&[2]).unwrap();
        assert_eq!(chi_eval(&chi4, &a, &a), Complex64::new(0.0, 1.0));
        assert_eq!(chi_eval(&chi4, &a, &b), Complex64::new(-1.0, 0.0));
        // 2*2/4 is a whole turn
        assert_eq!(chi_eval(&chi4, &b, &b), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn bicharacter_validation() {
        let g = z(2);
        assert!(Bicharacter::new(&g, vec![vec![q(1, 3)]]).is_err());
        assert!(Bicharacter::new(&g, vec![vec![q(0, 1)]]).is_err());
        let k4 = GroupSpec::new(vec![2, 2]).unwrap();
        let asym = vec![vec![q(0, 1), q(1, 2)], vec![q(0, 1), q(0, 1)]];
        assert!(Bicharacter::new(&k4, asym).is_err());
        let hyper = vec![vec![q(0, 1), q(1, 2)], vec![q(1, 2), q(0, 1)]];
        assert!(Bicharacter::new(&k4, hyper).is_ok());
        assert!(Bicharacter::diagonal(&k4).is_ok());
        // (2,0) pairs trivially with everything on Z/4 x Z/2 under this matrix
        let g42 = GroupSpec::new(vec![4, 2]).unwrap();
        let degenerate = vec![vec![q(1, 2), q(0, 1)], vec![q(0, 1), q(1, 2)]];
        assert!(Bicharacter::new(&g42, degenerate).is_err());
    }

    #[test]
    fn annihilator_examples() {
        let g = z(2);
        let chi = Bicharacter::diagonal(&g).unwrap();
        assert_eq!(annihilator(&chi, &Subgroup::trivial(&g)).unwrap(), Subgroup::full(&g));
        assert_eq!(annihilator(&chi, &Subgroup::full(&g)).unwrap(), Subgroup::trivial(&g));
        let g4 = z(4);
        let chi4 = Bicharacter::diagonal(&g4).unwrap();
        let l = Subgroup::generated(&g4, &[g4.element(&[2]).unwrap()]).unwrap();
        assert_eq!(annihilator(&chi4, &l).unwrap(), l);
    }

    #[test]
    fn meet_join_examples() {
        let k4 = GroupSpec::new(vec![2, 2]).unwrap();
        let a = Subgroup::generated(&k4, &[k4.element(&[1, 0]).unwrap()]).unwrap();
        let b = Subgroup::generated(&k4, &[k4.element(&[0, 1]).unwrap()]).unwrap();
        let (m, j) = subgroup_meet_join(&a, &b).unwrap();
        assert_eq!(m, Subgroup::trivial(&k4));
        assert_eq!(j, Subgroup::full(&k4));
        assert_eq!(subgroup_meet_join(&a, &a).unwrap(), (a.clone(), a.clone()));
        let omega = ExtendedLatticeNode::Omega;
        let node = ExtendedLatticeNode::Subgroup(a.clone());
        assert_eq!(omega.meet(&node).unwrap(), node);
        assert_eq!(node.join(&omega).unwrap(), omega);
        assert!(subgroup_meet_join(&a, &Subgroup::trivial(&z(2))).is_err());
    }

    #[test]
    fn phase_parsing() {
        assert_eq!(parse_phase("1/2").unwrap(), q(1, 2));
        assert_eq!(parse_phase(" 0 ").unwrap(), q(0, 1));
        assert!(parse_phase("1/0").is_err());
        assert!(parse_phase("x").is_err());
    }

    fn small_groups() -> Vec<(GroupSpec, Bicharacter)> {
        let mut out = Vec::new();
        for n in 2..=16u32 {
            let g = z(n);
            let chi = Bicharacter::diagonal(&g).unwrap();
            out.push((g, chi));
        }
        for orders in [vec![2, 2], vec![2, 4], vec![4, 4], vec![2, 2, 2], vec![2, 2, 2, 2]] {
            let g = GroupSpec::new(orders).unwrap();
            let chi = Bicharacter::diagonal(&g).unwrap();
            out.push((g, chi));
        }
        let k4 = GroupSpec::new(vec![2, 2]).unwrap();
        let hyper = Bicharacter::new(&k4, vec![vec![q(0, 1), q(1, 2)], vec![q(1, 2), q(0, 1)]]).unwrap();
        out.push((k4, hyper));
        out
    }

    #[test]
    fn annihilator_lattice_laws() {
        for (g, chi) in small_groups() {
            let subs = subgroups(&g, 64).unwrap();
            for l in &subs {
                let perp = annihilator(&chi, l).unwrap();
                assert_eq!(l.order() * perp.order(), g.size());
                assert_eq!(&annihilator(&chi, &perp).unwrap(), l);
                for k in &subs {
                    let (m, j) = subgroup_meet_join(l, k).unwrap();
                    let kp = annihilator(&chi, k).unwrap();
                    let (pm, pj) = subgroup_meet_join(&perp, &kp).unwrap();
                    assert_eq!(annihilator(&chi, &j).unwrap(), pm);
                    assert_eq!(annihilator(&chi, &m).unwrap(), pj);
                }
            }
        }
    }

    #[test]
    fn coset_partitions() {
        for (g, _) in small_groups() {
            for l in subgroups(&g, 64).unwrap() {
                let cs = cosets(&g, &l).unwrap();
                assert_eq!(cs.len() * l.order(), g.size());
                let mut all: Vec<GroupElement> = cs.iter().flatten().cloned().collect();
                all.sort();
                assert_eq!(all, g.elements());
                assert!(cs.iter().all(|c| c.len() == l.order()));
            }
        }
    }

    #[test]
    fn chi_symmetric_and_bimultiplicative() {
        for (g, chi) in small_groups() {
            let els = g.elements();
            for a in &els {
                for b in &els {
                    let ab = chi_eval(&chi, a, b);
                    assert!((ab.norm() - 1.0).abs() < 1e-12);
                    assert!((ab - chi_eval(&chi, b, a)).norm() < 1e-12);
                    for c in &els {
                        let lhs = chi_eval(&chi, &g.add(a, c), b);
                        let rhs = ab * chi_eval(&chi, c, b);
                        assert!((lhs - rhs).norm() < 1e-12);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn index_round_trip(a in 1u32..6, b in 1u32..6, i in 0usize..36) {
            let g = GroupSpec::new(vec![a, b]).unwrap();
            let i = i % g.size();
            prop_assert_eq!(g.index_of(&g.element_at(i)), i);
        }

        #[test]
        fn group_laws(n in 1u32..20, x in 0i64..40, y in 0i64..40) {
            let g = z(n);
            let a = g.element(&[x]).unwrap();
            let b = g.element(&[y]).unwrap();
            prop_assert_eq!(g.add(&a, &b), g.add(&b, &a));
            prop_assert_eq!(g.sub(&g.add(&a, &b), &b), a.clone());
            prop_assert_eq!(g.add(&a, &g.neg(&a)), g.zero());
        }
    }
}

//! Deformed Heisenberg oscillators and the Fock spaces they act on.
//!
//! Three families of oscillators underlie the realization: one attached to the
//! simple roots (with mutual brackets governed by the Cartan matrix), and two
//! attached to ordered index pairs `(i, j)` with `i < j`, distinguished by the
//! sign `nu(i) * nu(j)` of the pair.  All nonzero-mode brackets are central
//! scalars, so a basis of each weight sector is given by multisets of creation
//! modes over a sector vacuum.
//!
//! Zero modes consist of a commuting eigenvalue part (the sector charges) and
//! shift operators that move between sectors.  Shift operators on mixed pairs
//! anticommute with each other; a fixed total order on mixed pairs turns their
//! products into a canonical form, and reordering signs are tracked explicitly
//! (the order itself is a switchable convention so that covariance of all
//! observable results under the choice can be tested).

use crate::scalars::{AlgebraParams, Coeff, Rat, ScalarCtx};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

/// Oscillator family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    /// Root oscillators `a^i`, `1 <= i <= rank`.
    A,
    /// Pair oscillators `b^{i,j}`, `1 <= i < j <= m + n`.
    B,
    /// Pair oscillators `c^{i,j}`, same index range as `B`.
    C,
}

/// Index pairs `(i, j)` with `i < j` over the full index range `1..=m+n`,
/// in ascending lexicographic order.
#[derive(Debug, Clone)]
pub struct PairTable {
    pairs: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    mixed: Vec<bool>,
}

impl PairTable {
    pub fn new(alg: &AlgebraParams) -> Self {
        let total = alg.m + alg.n;
        let mut pairs = Vec::new();
        let mut mixed = Vec::new();
        for i in 1..=total {
            for j in (i + 1)..=total {
                pairs.push((i, j));
                mixed.push(alg.nu(i) * alg.nu(j) < 0);
            }
        }
        let index = pairs
            .iter()
            .enumerate()
            .map(|(k, &p)| (p, k))
            .collect();
        PairTable { pairs, index, mixed }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, idx: usize) -> (usize, usize) {
        self.pairs[idx]
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        self.index[&(i, j)]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.index.contains_key(&(i, j))
    }

    /// `true` when the pair couples one index from each block.
    pub fn is_mixed(&self, idx: usize) -> bool {
        self.mixed[idx]
    }

    pub fn mixed_pairs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| self.mixed[k])
    }

    pub fn plus_pairs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&k| !self.mixed[k])
    }
}

/// A single oscillator species.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Species {
    pub family: Family,
    /// For `A`: the root index `i`.  For `B`/`C`: the flat pair index.
    pub idx: usize,
}

/// Numbering of all oscillator species of an algebra: first the root
/// oscillators, then the `B` pairs, then the `C` pairs, each in index order.
#[derive(Debug, Clone)]
pub struct SpeciesTable {
    species: Vec<Species>,
    ids: HashMap<Species, u16>,
}

impl SpeciesTable {
    pub fn new(alg: &AlgebraParams, pairs: &PairTable) -> Self {
        let mut species = Vec::new();
        for i in 1..=alg.rank() {
            species.push(Species { family: Family::A, idx: i });
        }
        for k in 0..pairs.len() {
            species.push(Species { family: Family::B, idx: k });
        }
        for k in 0..pairs.len() {
            species.push(Species { family: Family::C, idx: k });
        }
        let ids = species
            .iter()
            .enumerate()
            .map(|(n, &s)| (s, n as u16))
            .collect();
        SpeciesTable { species, ids }
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn get(&self, id: u16) -> Species {
        self.species[id as usize]
    }

    pub fn id(&self, s: Species) -> u16 {
        self.ids[&s]
    }

    pub fn a(&self, i: usize) -> u16 {
        self.id(Species { family: Family::A, idx: i })
    }

    pub fn b(&self, pair_idx: usize) -> u16 {
        self.id(Species { family: Family::B, idx: pair_idx })
    }

    pub fn c(&self, pair_idx: usize) -> u16 {
        self.id(Species { family: Family::C, idx: pair_idx })
    }
}

/// Static structure shared by every operator over one algebra: index tables
/// plus the scalar data entering brackets.
#[derive(Debug, Clone)]
pub struct Structure {
    pub alg: AlgebraParams,
    pub pairs: PairTable,
    pub species: SpeciesTable,
}

impl Structure {
    pub fn new(alg: AlgebraParams) -> Self {
        let pairs = PairTable::new(&alg);
        let species = SpeciesTable::new(&alg, &pairs);
        Structure { alg, pairs, species }
    }

    /// Sign `nu(i) * nu(j)` of a pair.
    pub fn pair_sign(&self, pair_idx: usize) -> i64 {
        let (i, j) = self.pairs.pair(pair_idx);
        self.alg.nu(i) * self.alg.nu(j)
    }

    /// Central bracket `[x_m, y_n]` of two nonzero modes; zero unless
    /// `m + n == 0`.  Root oscillators couple across different root indices
    /// through the Cartan matrix; pair oscillators are diagonal in the pair.
    pub fn bracket<C: ScalarCtx>(
        &self,
        ctx: &C,
        x: Species,
        m: i64,
        y: Species,
        n: i64,
    ) -> C::S {
        debug_assert!(m != 0 && n != 0);
        if m + n != 0 {
            return C::S::zero();
        }
        match (x.family, y.family) {
            (Family::A, Family::A) => {
                let shifted = self.alg.shifted_level();
                let arg1 = shifted * Rat::from(BigInt::from(m));
                let cart = self.alg.cartan(x.idx, y.idx);
                let arg2 = Rat::from(BigInt::from(cart * m));
                let num = ctx
                    .qint(&arg1)
                    .expect("level bracket argument on lattice")
                    .mul(&ctx.qint(&arg2).expect("integer argument"));
                num.div(&ctx.from_rat(&Rat::from(BigInt::from(m))))
            }
            (Family::B, Family::B) | (Family::C, Family::C) => {
                if x.idx != y.idx {
                    return C::S::zero();
                }
                let sign = self.pair_sign(x.idx)
                    * if x.family == Family::B { -1 } else { 1 };
                let qm = ctx.qint_i(m);
                let sq = qm.mul(&qm);
                let scaled = sq.div(&ctx.from_rat(&Rat::from(BigInt::from(m))));
                if sign < 0 {
                    scaled.neg()
                } else {
                    scaled
                }
            }
            _ => C::S::zero(),
        }
    }
}

/// Eigenvalues of the commuting zero modes; these label a Fock sector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Charge {
    /// Root-oscillator charges, indexed by root `i - 1`.
    pub p_a: Vec<i64>,
    /// Pair charges of the `B` family, indexed by flat pair index.
    pub p_b: Vec<i64>,
    /// Pair charges of the `C` family, indexed by flat pair index.
    pub p_c: Vec<i64>,
}

impl Charge {
    pub fn vacuum(st: &Structure) -> Self {
        Charge {
            p_a: vec![0; st.alg.rank()],
            p_b: vec![0; st.pairs.len()],
            p_c: vec![0; st.pairs.len()],
        }
    }

    /// Vacuum shifted to root charges `l` (a highest-weight labelling).
    pub fn weight(st: &Structure, l: &[i64]) -> Self {
        let mut c = Charge::vacuum(st);
        assert_eq!(l.len(), st.alg.rank());
        c.p_a.copy_from_slice(l);
        c
    }

    /// Total parity of the sector: parity of the sum of mixed-pair `B` charges.
    pub fn parity(&self, st: &Structure) -> i64 {
        let mut s = 0;
        for k in st.pairs.mixed_pairs() {
            s += self.p_b[k];
        }
        s.rem_euclid(2)
    }
}

impl fmt::Display for Charge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{:?} b{:?} c{:?}", self.p_a, self.p_b, self.p_c)
    }
}

/// Which total order on mixed pairs defines the canonical form of shift
/// products.  Observable results must not depend on this choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CocycleOrder {
    /// Lexicographically largest pair leftmost (the default).
    DescendingLex,
    /// Lexicographically smallest pair leftmost.
    AscendingLex,
}

impl Default for CocycleOrder {
    fn default() -> Self {
        CocycleOrder::DescendingLex
    }
}

/// Zero-mode shift generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftKind {
    /// Conjugate to a root charge; the weight is rational.
    Root(usize),
    /// Conjugate to a `B` pair charge (flat pair index).
    PairB(usize),
    /// Conjugate to a `C` pair charge (flat pair index).
    PairC(usize),
}

/// Apply `exp(w * Q)` for a root shift: every root charge `l` moves by
/// `shifted_level * w * cartan(i, l)`, which must be integral.
pub fn apply_root_shift(st: &Structure, charge: &mut Charge, i: usize, w: &Rat) {
    let shifted = st.alg.shifted_level();
    for l in 1..=st.alg.rank() {
        let delta = &shifted * w * Rat::from(BigInt::from(st.alg.cartan(i, l)));
        assert!(
            delta.is_integer(),
            "root shift must move charges integrally, got {delta}"
        );
        charge.p_a[l - 1] += delta
            .to_integer()
            .to_i64()
            .expect("charge shift fits i64");
    }
}

/// Apply `exp(w * Q)` for a pair shift and return the reordering sign.
///
/// `B` charges move by `-pair_sign * w`, `C` charges by `+pair_sign * w`.
/// An odd-weight `B` shift on a mixed pair anticommutes with the mixed-pair
/// shift content already present in the state: the sign is `(-1)^(w * s)`
/// where `s` sums the `B` charges of mixed pairs preceding this pair in the
/// canonical order.  `C` shifts on mixed pairs never occur in the realization
/// and are rejected for odd weight.
pub fn apply_pair_shift(
    st: &Structure,
    order: CocycleOrder,
    charge: &mut Charge,
    kind: ShiftKind,
    w: i64,
) -> i64 {
    let (pair_idx, sign_dir) = match kind {
        ShiftKind::PairB(k) => (k, -1),
        ShiftKind::PairC(k) => (k, 1),
        ShiftKind::Root(_) => panic!("root shifts carry rational weights; use apply_root_shift"),
    };
    let ps = st.pair_sign(pair_idx);
    let mut sign = 1i64;
    if st.pairs.is_mixed(pair_idx) && w.rem_euclid(2) == 1 {
        assert!(
            matches!(kind, ShiftKind::PairB(_)),
            "odd C-family shift on a mixed pair is outside the realization"
        );
        let here = st.pairs.pair(pair_idx);
        let mut s = 0i64;
        for k in st.pairs.mixed_pairs() {
            if k == pair_idx {
                continue;
            }
            let other = st.pairs.pair(k);
            let precedes = match order {
                CocycleOrder::DescendingLex => other > here,
                CocycleOrder::AscendingLex => other < here,
            };
            if precedes {
                s += charge.p_b[k];
            }
        }
        if (w * s).rem_euclid(2) == 1 {
            sign = -1;
        }
    }
    match kind {
        ShiftKind::PairB(k) => charge.p_b[k] += sign_dir * ps * w,
        ShiftKind::PairC(k) => charge.p_c[k] += sign_dir * ps * w,
        ShiftKind::Root(_) => unreachable!(),
    }
    sign
}

/// Interner for sector charges, so states carry a small id.
#[derive(Debug, Default)]
pub struct Sectors {
    list: RefCell<Vec<Charge>>,
    ids: RefCell<HashMap<Charge, u32>>,
}

impl Sectors {
    pub fn new() -> Self {
        Sectors::default()
    }

    pub fn intern(&self, c: &Charge) -> u32 {
        if let Some(&id) = self.ids.borrow().get(c) {
            return id;
        }
        let mut list = self.list.borrow_mut();
        let id = list.len() as u32;
        list.push(c.clone());
        self.ids.borrow_mut().insert(c.clone(), id);
        id
    }

    pub fn charge(&self, id: u32) -> Charge {
        self.list.borrow()[id as usize].clone()
    }

    pub fn len(&self) -> usize {
        self.list.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A basis vector: a multiset of creation modes over a sector vacuum.
/// `modes` lists `(species id, positive mode)` for each creation factor
/// `x_{-mode}`, sorted ascending; repeated factors appear repeatedly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub sector: u32,
    pub modes: Vec<(u16, u8)>,
}

impl State {
    pub fn vacuum(sector: u32) -> Self {
        State { sector, modes: Vec::new() }
    }

    pub fn degree(&self) -> i64 {
        self.modes.iter().map(|&(_, m)| m as i64).sum()
    }

    /// Push one creation factor, keeping the canonical sorted order.
    pub fn with_factor(&self, species: u16, mode: u8) -> State {
        let mut modes = self.modes.clone();
        let pos = modes
            .binary_search(&(species, mode))
            .unwrap_or_else(|e| e);
        modes.insert(pos, (species, mode));
        State { sector: self.sector, modes }
    }
}

/// Finitely supported vector over basis states, with deterministic iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector<S: Coeff> {
    pub terms: BTreeMap<State, S>,
}

impl<S: Coeff> Default for FockVector<S> {
    fn default() -> Self {
        FockVector { terms: BTreeMap::new() }
    }
}

impl<S: Coeff> FockVector<S> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn unit(state: State) -> Self {
        let mut v = Self::zero();
        v.terms.insert(state, S::one());
        v
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, state: State, coeff: S) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(state) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get().add(&coeff);
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &FockVector<S>) {
        for (st, c) in &other.terms {
            self.add_term(st.clone(), c.clone());
        }
    }

    pub fn scaled(&self, s: &S) -> FockVector<S> {
        let mut out = FockVector::zero();
        if s.is_zero() {
            return out;
        }
        for (st, c) in &self.terms {
            out.add_term(st.clone(), c.mul(s));
        }
        out
    }

    pub fn sub_assign(&mut self, other: &FockVector<S>) {
        for (st, c) in &other.terms {
            self.add_term(st.clone(), c.neg());
        }
    }

    /// Largest absolute float image among coefficients; diagnostic only.
    pub fn sup_norm(&self) -> f64 {
        self.terms
            .values()
            .map(|c| c.approx().abs())
            .fold(0.0, f64::max)
    }
}

/// All basis states of the given total degree over one sector vacuum, in
/// canonical order.
pub fn basis_states(st: &Structure, sector: u32, degree: i64) -> Vec<State> {
    let mut out = Vec::new();
    let species_count = st.species.len() as u16;
    // Enumerate multisets: walk species/mode slots in canonical (ascending)
    // order, never placing a factor below the last one placed.
    fn rec(
        species_count: u16,
        remaining: i64,
        min_factor: (u16, u8),
        acc: &mut Vec<(u16, u8)>,
        sector: u32,
        out: &mut Vec<State>,
    ) {
        if remaining == 0 {
            out.push(State { sector, modes: acc.clone() });
            return;
        }
        for s in min_factor.0..species_count {
            let mode_start = if s == min_factor.0 { min_factor.1 } else { 1 };
            for mode in mode_start..=(remaining.min(255) as u8) {
                acc.push((s, mode));
                rec(species_count, remaining - mode as i64, (s, mode), acc, sector, out);
                acc.pop();
            }
        }
    }
    let mut acc = Vec::new();
    rec(species_count, degree, (0, 1), &mut acc, sector, &mut out);
    out.sort();
    out
}

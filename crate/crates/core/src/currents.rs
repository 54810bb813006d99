//! Construction of the generating currents over the oscillator engine.
//!
//! Each current is a weighted sum of normal-ordered exponential constituents;
//! the raising family pairs two branches of each constituent through a
//! `1/((q - q^{-1}) z)` difference, the lowering family does the same with the
//! branch order reversed, and certain boundary constituents enter singly.
//! Cartan-sector currents are single exponentials of half fields, from whose
//! exponents the Heisenberg-like modes are read off as linear operators.
//!
//! Free constants attached to the constituents (one per matrix position) drop
//! out of the algebra relations; they default to 1 and can be overridden from
//! a seeded generator to exercise that independence.

use crate::heisenberg::{Charge, Family, FockVector, Species, State, Structure};
use crate::scalars::{rat, Coeff, Rat, ScalarCtx};
use crate::vertex::{Engine, EngineError, FieldShape, FieldTerm, OpId, VertexExpr};
use num_bigint::BigInt;
use rand::Rng;
use rand::SeedableRng;
use std::collections::BTreeMap;

/// Free multiplicative constants `c[(i, j)]`, `1 <= j <= i <= rank`.
#[derive(Debug, Clone)]
pub struct Gauge {
    pub c: BTreeMap<(usize, usize), Rat>,
}

impl Gauge {
    pub fn ones(rank: usize) -> Self {
        let mut c = BTreeMap::new();
        for i in 1..=rank {
            for j in 1..=i {
                c.insert((i, j), rat(1, 1));
            }
        }
        Gauge { c }
    }

    /// Deterministic nonzero rational constants from a seed.
    pub fn seeded(rank: usize, seed: u64) -> Self {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let mut c = BTreeMap::new();
        for i in 1..=rank {
            for j in 1..=i {
                let mut num = 0i64;
                while num == 0 {
                    num = rng.gen_range(-5..=5);
                }
                let den = rng.gen_range(1..=5i64);
                c.insert((i, j), rat(num, den));
            }
        }
        Gauge { c }
    }

    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.c[&(i, j)]
    }
}

/// Which block of the current's constituent table a part comes from, by
/// family and row regime.  Useful for reporting and for targeted overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartKind {
    RaiseUpper,
    RaiseMiddle,
    RaiseLowerSingle,
    RaiseLowerPair,
    Low1Upper,
    Low1Middle,
    Low1Single,
    Low1Pair,
    Low2Upper,
    Low2Middle,
    Low2Lower,
    Low3Upper,
    Low3Single,
    Low3Middle,
    Low3Pair,
    ScreenUpper,
    ScreenSingle,
    ScreenMiddle,
    ScreenLower,
    Cartan,
}

/// Constituent under assembly: block tag, column, weight, z-power shift, fields.
type Piece<S> = (PartKind, usize, S, i64, VertexExpr);

/// One weighted constituent of a current.
#[derive(Debug, Clone)]
pub struct Part<S> {
    pub weight: S,
    pub z_shift: i64,
    pub op: OpId,
    /// Field content the operator was compiled from.
    pub expr: VertexExpr,
    /// Constituent-table block this part belongs to.
    pub kind: PartKind,
    /// Column index of the constituent within its block.
    pub col: usize,
}

/// A current: weighted constituents plus a definite parity.
#[derive(Debug, Clone)]
pub struct Current<S> {
    pub parts: Vec<Part<S>>,
    pub parity: i64,
}

impl<S: Coeff> Current<S> {
    /// Apply the `z^{-m-1}` Fourier mode to a vector.
    pub fn apply_mode<C: ScalarCtx<S = S>>(
        &self,
        eng: &Engine<C>,
        m: i64,
        v: &FockVector<S>,
    ) -> Result<FockVector<S>, EngineError> {
        let mut out = FockVector::zero();
        for p in &self.parts {
            let s = Rat::from(BigInt::from(-m - 1 - p.z_shift));
            let part = eng.apply_power_vec(p.op, &s, v)?;
            out.add_assign(&part.scaled(&p.weight));
        }
        Ok(out)
    }
}

/// Exponent builder helpers.  Pair fields with coincident indices vanish
/// identically and are skipped; difference combinations keep their valid half.
struct Ex<'a> {
    st: &'a Structure,
    expr: VertexExpr,
}

impl<'a> Ex<'a> {
    fn new(st: &'a Structure) -> Self {
        Ex { st, expr: VertexExpr::new() }
    }

    fn pair_species(&self, fam: Family, i: usize, j: usize) -> Option<Species> {
        if i == j {
            return None;
        }
        assert!(i < j, "pair indices must be ordered: ({i}, {j})");
        Some(Species { family: fam, idx: self.st.pairs.index(i, j) })
    }

    fn b_full(&mut self, i: usize, j: usize, coeff: i64, beta: Rat) {
        if let Some(sp) = self.pair_species(Family::B, i, j) {
            self.expr.push(FieldTerm::new(sp, FieldShape::Full, rat(coeff, 1), beta));
        }
    }

    fn c_full(&mut self, i: usize, j: usize, coeff: i64, beta: Rat) {
        if let Some(sp) = self.pair_species(Family::C, i, j) {
            self.expr.push(FieldTerm::new(sp, FieldShape::Full, rat(coeff, 1), beta));
        }
    }

    fn bc_full(&mut self, i: usize, j: usize, coeff: i64, beta: Rat) {
        self.b_full(i, j, coeff, beta.clone());
        self.c_full(i, j, coeff, beta);
    }

    fn b_half(&mut self, i: usize, j: usize, branch: i64, coeff: i64, beta: Rat) {
        if let Some(sp) = self.pair_species(Family::B, i, j) {
            let shape = if branch > 0 { FieldShape::HalfPlus } else { FieldShape::HalfMinus };
            self.expr.push(FieldTerm::new(sp, shape, rat(coeff, 1), beta));
        }
    }

    fn a_half(&mut self, i: usize, branch: i64, coeff: i64, beta: Rat) {
        let sp = Species { family: Family::A, idx: i };
        let shape = if branch > 0 { FieldShape::HalfPlus } else { FieldShape::HalfMinus };
        self.expr.push(FieldTerm::new(sp, shape, rat(coeff, 1), beta));
    }

    /// Weighted root field with unit numerator and shifted-level denominator.
    fn a_ratio(&mut self, i: usize, coeff: i64, alpha: Rat) {
        let sp = Species { family: Family::A, idx: i };
        self.expr.push(FieldTerm::new(
            sp,
            FieldShape::Ratio {
                l: vec![rat(1, 1)],
                m: vec![self.st.alg.shifted_level()],
                alpha,
            },
            rat(coeff, 1),
            rat(0, 1),
        ));
    }

    /// First-index difference: `eps = ±1` takes `b^{i+1,l}(q^eps .) - b^{i,l}(.)`,
    /// `eps = 0` the sum at equal arguments.
    fn delta_l(&mut self, eps: i64, branch: i64, i: usize, l: usize, coeff: i64, beta: Rat) {
        let (beta_new, second) = if eps == 0 {
            (beta.clone(), coeff)
        } else {
            (&beta + rat(eps, 1), -coeff)
        };
        self.b_half(i + 1, l, branch, coeff, beta_new);
        self.b_half(i, l, branch, second, beta);
    }

    /// Second-index difference: `eps = ±1` takes `b^{l,i+1}(q^eps .) - b^{l,i}(.)`,
    /// `eps = 0` the sum at equal arguments.
    fn delta_r(&mut self, eps: i64, branch: i64, l: usize, i: usize, coeff: i64, beta: Rat) {
        let (beta_new, second) = if eps == 0 {
            (beta.clone(), coeff)
        } else {
            (&beta + rat(eps, 1), -coeff)
        };
        self.b_half(l, i + 1, branch, coeff, beta_new);
        self.b_half(l, i, branch, second, beta);
    }
}

/// The full set of compiled currents over one engine.
pub struct Model<C: ScalarCtx> {
    pub engine: Engine<C>,
    pub gauge: Gauge,
    pub x_plus: Vec<Current<C::S>>,
    pub x_minus: Vec<Current<C::S>>,
    /// Cartan currents, already evaluated at their shifted argument; the
    /// plus branch expands in nonpositive z-powers, the minus branch in
    /// nonnegative ones.
    pub psi_plus: Vec<Current<C::S>>,
    pub psi_minus: Vec<Current<C::S>>,
    /// Exponent term lists backing the Cartan currents, per root and branch.
    psi_terms_plus: Vec<Vec<FieldTerm>>,
    psi_terms_minus: Vec<Vec<FieldTerm>>,
    pub screening: Vec<Current<C::S>>,
}

impl<C: ScalarCtx> Model<C> {
    pub fn build(engine: Engine<C>, gauge: Gauge) -> Result<Self, EngineError> {
        let mut model = Model {
            engine,
            gauge,
            x_plus: Vec::new(),
            x_minus: Vec::new(),
            psi_plus: Vec::new(),
            psi_minus: Vec::new(),
            psi_terms_plus: Vec::new(),
            psi_terms_minus: Vec::new(),
            screening: Vec::new(),
        };
        let rank = model.engine.st.alg.rank();
        for i in 1..=rank {
            let xp = model.build_x_plus(i)?;
            model.x_plus.push(xp);
            let xm = model.build_x_minus(i)?;
            model.x_minus.push(xm);
            for branch in [1i64, -1] {
                let (cur, terms) = model.build_psi(i, branch)?;
                if branch > 0 {
                    model.psi_plus.push(cur);
                    model.psi_terms_plus.push(terms);
                } else {
                    model.psi_minus.push(cur);
                    model.psi_terms_minus.push(terms);
                }
            }
            // The screening density divides by the shifted level; at the
            // critical value that current does not exist.
            if !model.engine.st.alg.shifted_level().is_zero() {
                let s = model.build_screening(i)?;
                model.screening.push(s);
            }
        }
        Ok(model)
    }

    fn mm(&self) -> (usize, usize) {
        (self.engine.st.alg.m, self.engine.st.alg.n)
    }

    fn level(&self) -> Rat {
        self.engine.st.alg.level.clone()
    }

    fn finish_current(&self, pieces: Vec<Piece<C::S>>) -> Result<Current<C::S>, EngineError> {
        let mut parts = Vec::new();
        let mut parity = None;
        for (kind, col, weight, z_shift, expr) in pieces {
            let op = self.engine.build(&expr)?;
            let p = self.engine.parity(op);
            match parity {
                None => parity = Some(p),
                Some(q) => assert_eq!(q, p, "constituents of one current must share parity"),
            }
            parts.push(Part { weight, z_shift, op, expr, kind, col });
        }
        Ok(Current { parts, parity: parity.unwrap_or(0) })
    }

    /// Difference pair: `front (branch +) - front (branch -)` for the raising
    /// family (`order = +1`), reversed for the lowering family (`order = -1`),
    /// both scaled by `base / (q - q^{-1})` with a `1/z` power shift.
    #[allow(clippy::too_many_arguments)]
    fn difference<F>(
        &self,
        kind: PartKind,
        col: usize,
        base: &C::S,
        order: i64,
        mut make: F,
        out: &mut Vec<Piece<C::S>>,
    ) where
        F: FnMut(i64) -> VertexExpr,
    {
        let denom = self.engine.ctx.q_minus_qinv();
        let w = base.div(&denom);
        out.push((kind, col, if order > 0 { w.clone() } else { w.neg() }, -1, make(1)));
        out.push((kind, col, if order > 0 { w.neg() } else { w }, -1, make(-1)));
    }

    fn build_x_plus(&self, i: usize) -> Result<Current<C::S>, EngineError> {
        let (m, _) = self.mm();
        let mut pieces: Vec<Piece<C::S>> = Vec::new();
        if i <= m.saturating_sub(1) {
            for j in 1..=i {
                let base = self.engine.ctx.from_rat(self.gauge.get(i, j));
                self.difference(PartKind::RaiseUpper, j, &base, 1, |s| self.e_upper(i, j, s), &mut pieces);
            }
        } else if i == m {
            for j in 1..=m {
                let w = self.engine.ctx.from_rat(self.gauge.get(m, j));
                pieces.push((PartKind::RaiseMiddle, j, w, 0, self.e_middle(j)));
            }
        } else {
            for j in 1..=m {
                let w = self.engine.ctx.from_rat(self.gauge.get(i, j));
                pieces.push((PartKind::RaiseLowerSingle, j, w, 0, self.e_lower_single(i, j)));
            }
            for j in (m + 1)..=i {
                let base = self.engine.ctx.from_rat(self.gauge.get(i, j));
                self.difference(PartKind::RaiseLowerPair, j, &base, 1, |s| self.e_lower(i, j, s), &mut pieces);
            }
        }
        self.finish_current(pieces)
    }

    // Raising constituents, upper block rows (1 <= j <= i <= m-1).
    fn e_upper(&self, i: usize, j: usize, s: i64) -> VertexExpr {
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        let jb = rat(j as i64 - 1, 1);
        if j < i {
            ex.bc_full(j, i, 1, jb.clone());
        }
        ex.b_half(j, i + 1, s, 1, jb.clone());
        ex.bc_full(j, i + 1, -1, &jb + rat(s, 1));
        for l in 1..j {
            ex.delta_r(-1, 1, l, i, 1, rat(l as i64, 1));
        }
        ex.expr
    }

    // Raising constituents through the middle row (i = m).
    fn e_middle(&self, j: usize) -> VertexExpr {
        let (m, _) = self.mm();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        let jb = rat(j as i64 - 1, 1);
        if j < m {
            ex.bc_full(j, m, 1, jb.clone());
        }
        ex.b_full(j, m + 1, 1, jb);
        for l in 1..j {
            ex.delta_r(0, 1, l, m, -1, rat(l as i64, 1));
        }
        ex.expr
    }

    // Raising constituents, lower block single terms (i > m, j <= m).
    fn e_lower_single(&self, i: usize, j: usize) -> VertexExpr {
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        let jb = rat(j as i64 - 1, 1);
        ex.b_half(j, i, 1, 1, jb.clone());
        ex.b_full(j, i, -1, rat(j as i64, 1));
        ex.b_full(j, i + 1, 1, jb);
        for l in 1..j {
            ex.delta_r(1, 1, l, i, -1, rat(l as i64 - 1, 1));
        }
        ex.expr
    }

    // Raising constituents, lower block difference terms (m < j <= i).
    fn e_lower(&self, i: usize, j: usize, s: i64) -> VertexExpr {
        let (m, _) = self.mm();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        let base = rat(2 * m as i64 + 1 - j as i64, 1);
        if j < i {
            ex.bc_full(j, i, 1, base.clone());
        }
        ex.b_half(j, i + 1, s, -1, base.clone());
        ex.bc_full(j, i + 1, -1, &base - rat(s, 1));
        for l in 1..=m {
            ex.delta_r(1, 1, l, i, -1, rat(l as i64 - 1, 1));
        }
        for l in (m + 1)..j {
            ex.delta_r(1, 1, l, i, -1, rat(2 * m as i64 - l as i64, 1));
        }
        ex.expr
    }

    fn build_x_minus(&self, i: usize) -> Result<Current<C::S>, EngineError> {
        let (m, n) = self.mm();
        let mut pieces: Vec<Piece<C::S>> = Vec::new();
        if i <= m.saturating_sub(1) {
            for j in 1..i {
                let base = self.d1(i, j)?;
                self.difference(PartKind::Low1Upper, j, &base, -1, |s| self.f1_upper(i, j, s), &mut pieces);
            }
            let base = self.d2(i)?;
            self.difference(PartKind::Low2Upper, i, &base, -1, |s| self.f2_upper(i, s), &mut pieces);
            for j in (i + 2)..=m {
                let base = self.d3(i, j)?;
                self.difference(PartKind::Low3Upper, j, &base, -1, |s| self.f3_upper(i, j, s), &mut pieces);
            }
            for j in (m + 1)..=(m + n) {
                pieces.push((PartKind::Low3Single, j, self.d3(i, j)?, 0, self.f3_single(i, j)));
            }
        } else if i == m {
            for j in 1..m {
                let base = self.d1(m, j)?;
                self.difference(PartKind::Low1Middle, j, &base, -1, |s| self.f1_middle(j, s), &mut pieces);
            }
            let base = self.d2(m)?;
            self.difference(PartKind::Low2Middle, m, &base, -1, |s| self.f2_middle(s), &mut pieces);
            for j in (m + 2)..=(m + n) {
                let base = self.d3(m, j)?;
                self.difference(PartKind::Low3Middle, j, &base, -1, |s| self.f3_middle(j, s), &mut pieces);
            }
        } else {
            for j in 1..=m {
                pieces.push((PartKind::Low1Single, j, self.d1(i, j)?, 0, self.f1_single(i, j)));
            }
            for j in (m + 1)..i {
                let base = self.d1(i, j)?;
                self.difference(PartKind::Low1Pair, j, &base, -1, |s| self.f1_lower(i, j, s), &mut pieces);
            }
            let base = self.d2(i)?;
            self.difference(PartKind::Low2Lower, i, &base, -1, |s| self.f2_lower(i, s), &mut pieces);
            for j in (i + 2)..=(m + n) {
                let base = self.d3(i, j)?;
                self.difference(PartKind::Low3Pair, j, &base, -1, |s| self.f3_lower(i, j, s), &mut pieces);
            }
        }
        self.finish_current(pieces)
    }

    // Lowering constituents, family 1 (j < i), upper rows.
    fn f1_upper(&self, i: usize, j: usize, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_half(i, -1, 1, -st.alg.shifted_level() / rat(2, 1));
        let base = -&k - rat(j as i64, 1);
        ex.bc_full(j, i + 1, 1, base.clone());
        ex.b_half(j, i, s, -1, base.clone());
        ex.bc_full(j, i, -1, &base - rat(s, 1));
        for l in (j + 1)..=i {
            ex.delta_r(1, -1, l, i, 1, -&k - rat(l as i64, 1));
        }
        for l in (i + 1)..=m {
            ex.delta_l(1, -1, i, l, -1, -&k - rat(l as i64, 1));
        }
        for l in (m + 1)..=(m + n) {
            ex.delta_l(1, -1, i, l, -1, -&k - rat(2 * m as i64 + 1 - l as i64, 1));
        }
        ex.expr
    }

    // Lowering constituents, family 1, middle row (i = m, j < m).
    fn f1_middle(&self, j: usize, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_half(m, -1, 1, -st.alg.shifted_level() / rat(2, 1));
        let base = -&k - rat(j as i64, 1);
        ex.b_half(j, m, s, -1, base.clone());
        ex.bc_full(j, m, -1, &base - rat(s, 1));
        ex.b_half(j, m + 1, -1, -1, base.clone());
        ex.b_full(j, m + 1, -1, &base + rat(1, 1));
        for l in (j + 1)..m {
            ex.delta_r(0, -1, l, m, -1, -&k - rat(l as i64, 1));
        }
        for l in (m + 2)..=(m + n) {
            ex.delta_l(0, -1, m, l, 1, -&k - rat(2 * m as i64 + 1 - l as i64, 1));
        }
        ex.expr
    }

    // Lowering constituents, family 1 singles (i > m, j <= m).
    fn f1_single(&self, i: usize, j: usize) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_half(i, -1, 1, -st.alg.shifted_level() / rat(2, 1));
        let base = -&k - rat(j as i64, 1);
        ex.b_half(j, i + 1, -1, -1, base.clone());
        ex.b_full(j, i + 1, -1, &base + rat(1, 1));
        ex.b_full(j, i, 1, base);
        for l in (j + 1)..=m {
            ex.delta_r(-1, -1, l, i, -1, -&k - rat(l as i64 - 1, 1));
        }
        for l in (m + 1)..=i {
            ex.delta_r(-1, -1, l, i, -1, -&k - rat(2 * m as i64 - l as i64, 1));
        }
        for l in (i + 1)..=(m + n) {
            ex.delta_l(-1, -1, i, l, 1, -&k - rat(2 * m as i64 - l as i64, 1));
        }
        ex.expr
    }

    // Lowering constituents, family 1, lower rows (m < j < i).
    fn f1_lower(&self, i: usize, j: usize, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_half(i, -1, 1, -st.alg.shifted_level() / rat(2, 1));
        let base = -&k - rat(2 * m as i64 - j as i64, 1);
        ex.bc_full(j, i + 1, 1, base.clone());
        ex.b_half(j, i, s, 1, base.clone());
        ex.bc_full(j, i, -1, &base + rat(s, 1));
        for l in (j + 1)..=i {
            ex.delta_r(-1, -1, l, i, -1, -&k - rat(2 * m as i64 - l as i64, 1));
        }
        for l in (i + 1)..=(m + n) {
            ex.delta_l(-1, -1, i, l, 1, -&k - rat(2 * m as i64 - l as i64, 1));
        }
        ex.expr
    }

    // Lowering constituents, family 2 (diagonal), upper rows.
    fn f2_upper(&self, i: usize, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        let sr = rat(s, 1);
        ex.a_half(i, s, 1, &sr * st.alg.shifted_level() / rat(2, 1));
        ex.b_half(i, i + 1, s, 1, &sr * (&k + rat(i as i64 + 1, 1)));
        ex.bc_full(i, i + 1, 1, &sr * (&k + rat(i as i64, 1)));
        for l in (i + 2)..=m {
            ex.delta_l(-s, s, i, l, -1, &sr * (&k + rat(l as i64, 1)));
        }
        for l in (m + 1)..=(m + n) {
            ex.delta_l(-s, s, i, l, -1, &sr * (&k + rat(2 * m as i64 + 1 - l as i64, 1)));
        }
        ex.expr
    }

    // Lowering constituents, family 2, middle row.
    fn f2_middle(&self, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        let sr = rat(s, 1);
        ex.a_half(m, s, 1, &sr * st.alg.shifted_level() / rat(2, 1));
        ex.b_full(m, m + 1, -1, &sr * (&k + rat(m as i64 - 1, 1)));
        for l in (m + 2)..=(m + n) {
            ex.delta_l(0, s, m, l, 1, &sr * (&k + rat(2 * m as i64 + 1 - l as i64, 1)));
        }
        ex.expr
    }

    // Lowering constituents, family 2, lower rows.
    fn f2_lower(&self, i: usize, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        let sr = rat(s, 1);
        ex.a_half(i, s, 1, &sr * st.alg.shifted_level() / rat(2, 1));
        ex.b_half(i, i + 1, s, -1, &sr * (&k + rat(2 * m as i64 - 1 - i as i64, 1)));
        ex.bc_full(i, i + 1, 1, &sr * (&k + rat(2 * m as i64 - i as i64, 1)));
        for l in (i + 2)..=(m + n) {
            ex.delta_l(s, s, i, l, 1, &sr * (&k + rat(2 * m as i64 - l as i64, 1)));
        }
        ex.expr
    }

    // Lowering constituents, family 3 (j > i), upper rows (j <= m).
    fn f3_upper(&self, i: usize, j: usize, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_half(i, 1, 1, st.alg.shifted_level() / rat(2, 1));
        let base = &k + rat(j as i64 - 1, 1);
        ex.bc_full(i, j, 1, base.clone());
        ex.b_half(i + 1, j, s, 1, base.clone());
        ex.bc_full(i + 1, j, -1, &base + rat(s, 1));
        for l in j..=m {
            ex.delta_l(-1, 1, i, l, -1, &k + rat(l as i64, 1));
        }
        for l in (m + 1)..=(m + n) {
            ex.delta_l(-1, 1, i, l, -1, &k + rat(2 * m as i64 + 1 - l as i64, 1));
        }
        ex.expr
    }

    // Lowering constituents, family 3 singles (i <= m-1, j > m).
    fn f3_single(&self, i: usize, j: usize) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_half(i, 1, 1, st.alg.shifted_level() / rat(2, 1));
        let base = &k + rat(2 * m as i64 - j as i64, 1);
        ex.b_full(i, j, -1, base.clone());
        ex.b_half(i + 1, j, 1, -1, base.clone());
        ex.b_full(i + 1, j, 1, &base + rat(1, 1));
        for l in (j + 1)..=(m + n) {
            ex.delta_l(-1, 1, i, l, -1, &k + rat(2 * m as i64 + 1 - l as i64, 1));
        }
        ex.expr
    }

    // Lowering constituents, family 3, middle row (i = m, j >= m+2).
    fn f3_middle(&self, j: usize, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_half(m, 1, 1, st.alg.shifted_level() / rat(2, 1));
        ex.b_full(m, j, -1, &k + rat(2 * m as i64 - j as i64, 1));
        let arg = &k + rat(2 * m as i64 + 1 - j as i64, 1);
        ex.b_half(m + 1, j, s, -1, arg.clone());
        ex.bc_full(m + 1, j, -1, &arg - rat(s, 1));
        ex.b_half(m + 1, j, 1, 1, arg);
        for l in (j + 1)..=(m + n) {
            ex.delta_l(0, 1, m, l, 1, &k + rat(2 * m as i64 + 1 - l as i64, 1));
        }
        ex.expr
    }

    // Lowering constituents, family 3, lower rows (m < i < j-1).
    fn f3_lower(&self, i: usize, j: usize, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_half(i, 1, 1, st.alg.shifted_level() / rat(2, 1));
        let base = &k + rat(2 * m as i64 + 1 - j as i64, 1);
        ex.bc_full(i, j, 1, base.clone());
        ex.b_half(i + 1, j, s, -1, base.clone());
        ex.bc_full(i + 1, j, -1, &base - rat(s, 1));
        // The difference sum starts at the column of the leading pair; its
        // first term supplies the half-field partners of the two full pairs
        // above, which the cross commutators need to telescope.
        for l in j..=(m + n) {
            ex.delta_l(1, 1, i, l, 1, &k + rat(2 * m as i64 - l as i64, 1));
        }
        ex.expr
    }

    fn build_psi(&self, i: usize, branch: i64) -> Result<(Current<C::S>, Vec<FieldTerm>), EngineError> {
        let (m, n) = self.mm();
        let k = self.level();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        let sr = rat(branch, 1);
        let g2 = rat(st.alg.dual_coxeter(), 2);
        ex.a_half(i, branch, 1, &sr * g2);
        let kh = &k / rat(2, 1);
        if i <= m.saturating_sub(1) {
            for l in 1..=i {
                ex.delta_r(-branch, branch, l, i, 1, &sr * (&kh + rat(l as i64, 1)));
            }
            for l in (i + 1)..=m {
                ex.delta_l(-branch, branch, i, l, -1, &sr * (&kh + rat(l as i64, 1)));
            }
            for l in (m + 1)..=(m + n) {
                ex.delta_l(-branch, branch, i, l, -1, &sr * (&kh + rat(2 * m as i64 + 1 - l as i64, 1)));
            }
        } else if i == m {
            for l in 1..m {
                ex.delta_r(0, branch, l, m, -1, &sr * (&kh + rat(l as i64, 1)));
            }
            for l in (m + 2)..=(m + n) {
                ex.delta_l(0, branch, m, l, 1, &sr * (&kh + rat(2 * m as i64 + 1 - l as i64, 1)));
            }
        } else {
            for l in 1..=m {
                ex.delta_r(branch, branch, l, i, -1, &sr * (&kh + rat(l as i64 - 1, 1)));
            }
            for l in (m + 1)..=i {
                ex.delta_r(branch, branch, l, i, -1, &sr * (&kh + rat(2 * m as i64 - l as i64, 1)));
            }
            for l in (i + 1)..=(m + n) {
                ex.delta_l(branch, branch, i, l, 1, &sr * (&kh + rat(2 * m as i64 - l as i64, 1)));
            }
        }
        let terms = ex.expr.terms.clone();
        let op = self.engine.build(&ex.expr)?;
        let parity = self.engine.parity(op);
        let cur = Current {
            parts: vec![Part {
                weight: C::S::one(),
                z_shift: 0,
                op,
                expr: ex.expr,
                kind: PartKind::Cartan,
                col: i,
            }],
            parity,
        };
        Ok((cur, terms))
    }

    fn build_screening(&self, i: usize) -> Result<Current<C::S>, EngineError> {
        let (m, n) = self.mm();
        let mut pieces: Vec<Piece<C::S>> = Vec::new();
        if i <= m.saturating_sub(1) {
            for j in (i + 1)..=m {
                let base = self.e_weight(i, j)?;
                self.difference(PartKind::ScreenUpper, j, &base, -1, |s| self.s_upper(i, j, s), &mut pieces);
            }
            for j in (m + 1)..=(m + n) {
                pieces.push((PartKind::ScreenSingle, j, self.e_weight(i, j)?, 0, self.s_single(i, j)));
            }
        } else if i == m {
            for j in (m + 1)..=(m + n) {
                pieces.push((PartKind::ScreenMiddle, j, self.e_weight(m, j)?, 0, self.s_middle(j)));
            }
        } else {
            for j in (i + 1)..=(m + n) {
                let base = self.e_weight(i, j)?;
                self.difference(PartKind::ScreenLower, j, &base, -1, |s| self.s_lower(i, j, s), &mut pieces);
            }
        }
        self.finish_current(pieces)
    }

    // Screening constituents, upper rows (i < j <= m).
    fn s_upper(&self, i: usize, j: usize, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_ratio(i, -1, st.alg.shifted_level() / rat(2, 1));
        let base = rat(m as i64 - n as i64 - j as i64, 1);
        ex.bc_full(i + 1, j, 1, base.clone());
        ex.b_half(i, j, s, -1, base.clone());
        ex.bc_full(i, j, -1, &base - rat(s, 1));
        for l in (j + 1)..=m {
            ex.delta_l(1, -1, i, l, 1, rat(m as i64 - n as i64 - l as i64, 1));
        }
        for l in (m + 1)..=(m + n) {
            ex.delta_l(1, -1, i, l, 1, rat(-(m as i64) - n as i64 + l as i64 - 1, 1));
        }
        ex.expr
    }

    // Screening constituents, upper-row singles (i <= m-1, j > m).
    fn s_single(&self, i: usize, j: usize) -> VertexExpr {
        let (m, n) = self.mm();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_ratio(i, -1, st.alg.shifted_level() / rat(2, 1));
        let base = rat(-(m as i64) - n as i64 + j as i64, 1);
        ex.b_full(i, j, 1, base.clone());
        ex.b_half(i + 1, j, 1, 1, base.clone());
        ex.b_full(i + 1, j, -1, &base + rat(1, 1));
        for l in (j + 1)..=(m + n) {
            ex.delta_l(1, -1, i, l, 1, rat(-(m as i64) - n as i64 - 1 + l as i64, 1));
        }
        ex.expr
    }

    // Screening constituents, middle row (i = m, j > m).
    fn s_middle(&self, j: usize) -> VertexExpr {
        let (m, n) = self.mm();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_ratio(m, -1, st.alg.shifted_level() / rat(2, 1));
        let base = rat(-(m as i64) - n as i64 + j as i64, 1);
        ex.bc_full(m + 1, j, 1, base.clone());
        ex.b_full(m, j, 1, base);
        for l in (j + 1)..=(m + n) {
            ex.delta_l(0, -1, m, l, -1, rat(-(m as i64) - n as i64 - 1 + l as i64, 1));
        }
        ex.expr
    }

    // Screening constituents, lower rows (m < i < j).
    fn s_lower(&self, i: usize, j: usize, s: i64) -> VertexExpr {
        let (m, n) = self.mm();
        let st = &self.engine.st;
        let mut ex = Ex::new(st);
        ex.a_ratio(i, -1, st.alg.shifted_level() / rat(2, 1));
        let base = rat(-(m as i64) - n as i64 + j as i64, 1);
        ex.bc_full(i + 1, j, 1, base.clone());
        ex.b_half(i, j, s, 1, base.clone());
        ex.bc_full(i, j, -1, &base + rat(s, 1));
        for l in (j + 1)..=(m + n) {
            ex.delta_l(-1, -1, i, l, -1, rat(-(m as i64) - n as i64 + l as i64, 1));
        }
        ex.expr
    }

    // Coefficient tables.

    fn nu_next(&self, i: usize) -> Rat {
        rat(self.engine.st.alg.nu(i + 1), 1)
    }

    fn d1(&self, i: usize, j: usize) -> Result<C::S, EngineError> {
        let (m, _) = self.mm();
        let k = self.level();
        // The lower-row single-column branch needs the opposite sign for the
        // defining relations to close; fixed by exhaustive calibration, which
        // finds a single solution orbit under gauge rescaling at every
        // feasible (m, n).
        let mut base = self.nu_next(i) / self.gauge.get(i, j);
        let qfac = if i <= m - 1 {
            self.engine.ctx.qpow(&rat(0, 1))?
        } else if i == m {
            self.engine.ctx.qpow(&rat(j as i64 - 1, 1))?
        } else if j <= m {
            base = -base;
            self.engine.ctx.qpow(&(-&k - rat(1, 1)))?
        } else {
            self.engine.ctx.qpow(&rat(0, 1))?
        };
        Ok(self.engine.ctx.from_rat(&base).mul(&qfac))
    }

    fn d2(&self, i: usize) -> Result<C::S, EngineError> {
        let (m, _) = self.mm();
        let base = self.nu_next(i) / self.gauge.get(i, i);
        let qfac = if i == m {
            self.engine.ctx.qpow(&rat(m as i64 - 1, 1))?
        } else {
            self.engine.ctx.qpow(&rat(0, 1))?
        };
        Ok(self.engine.ctx.from_rat(&base).mul(&qfac))
    }

    fn d3(&self, i: usize, j: usize) -> Result<C::S, EngineError> {
        let (m, _) = self.mm();
        let k = self.level();
        let mut base = self.nu_next(i) / self.gauge.get(i, i);
        for l in 1..=(j - i - 1) {
            base = base * self.gauge.get(i + l, i + 1) / self.gauge.get(i + l, i);
        }
        // Sign corrections from the same calibration as in d1: the upper-row
        // single-column branch always flips, the middle row flips on even
        // column offsets only.
        let qexp = if i <= m - 1 && j <= m {
            rat(0, 1)
        } else if i <= m - 1 {
            base = -base;
            &k + rat(3 * m as i64 + 1 - 2 * j as i64, 1)
        } else if i == m {
            if (j - m) % 2 == 0 {
                base = -base;
            }
            rat((m as i64 - 1) * (j as i64 - m as i64), 1)
        } else {
            rat(0, 1)
        };
        Ok(self.engine.ctx.from_rat(&base).mul(&self.engine.ctx.qpow(&qexp)?))
    }

    fn e_weight(&self, i: usize, j: usize) -> Result<C::S, EngineError> {
        let (m, n) = self.mm();
        let k = self.level();
        let one = C::S::one();
        if j == i + 1 {
            let d = self.d2(i)?;
            if i <= m - 1 {
                Ok(one.div(&d))
            } else if i == m {
                let num = self.engine.ctx.qpow(&rat(-(n as i64) + 1, 1))?;
                Ok(num.div(&d).neg())
            } else {
                Ok(one.div(&d).neg())
            }
        } else {
            let d = self.d3(i, j)?;
            if i <= m.saturating_sub(1) && j <= m {
                Ok(one.div(&d))
            } else if i <= m.saturating_sub(1) {
                let num = self.engine.ctx.qpow(&(&k + rat(1 + m as i64 - n as i64, 1)))?;
                Ok(num.div(&d))
            } else if i == m {
                let num = self.engine.ctx.qpow(&rat(j as i64 - m as i64 - n as i64, 1))?;
                Ok(num.div(&d).neg())
            } else {
                Ok(one.div(&d).neg())
            }
        }
    }

    // Cartan-sector linear operators.

    /// Apply a raising (`pm = +1`) or lowering (`pm = -1`) current mode.
    pub fn apply_x(
        &self,
        pm: i64,
        i: usize,
        mode: i64,
        v: &FockVector<C::S>,
    ) -> Result<FockVector<C::S>, EngineError> {
        let cur = if pm > 0 { &self.x_plus[i - 1] } else { &self.x_minus[i - 1] };
        cur.apply_mode(&self.engine, mode, v)
    }

    /// Apply the coefficient of `z^{-n}` of a Cartan current branch.
    pub fn apply_psi(
        &self,
        branch: i64,
        i: usize,
        n: i64,
        v: &FockVector<C::S>,
    ) -> Result<FockVector<C::S>, EngineError> {
        let cur = if branch > 0 { &self.psi_plus[i - 1] } else { &self.psi_minus[i - 1] };
        let part = &cur.parts[0];
        let s = Rat::from(BigInt::from(-n));
        let out = self.engine.apply_power_vec(part.op, &s, v)?;
        Ok(out.scaled(&part.weight))
    }

    /// Coefficient list of the mode-`n` Cartan operator for root `i`
    /// (`n != 0`): each entry scales a single oscillator mode `x_n`.
    pub fn h_mode_terms(&self, i: usize, n: i64) -> Vec<(Species, C::S)> {
        assert!(n != 0);
        let terms = if n > 0 {
            &self.psi_terms_plus[i - 1]
        } else {
            &self.psi_terms_minus[i - 1]
        };
        let mut acc: BTreeMap<u16, C::S> = BTreeMap::new();
        for t in terms {
            debug_assert!(matches!(t.shape, FieldShape::HalfPlus | FieldShape::HalfMinus));
            let c = self
                .engine
                .ctx
                .qpow(&(-&t.beta * Rat::from(BigInt::from(n))))
                .expect("Cartan mode exponents validated at build")
                .mul(&self.engine.ctx.from_rat(&t.coeff));
            let id = self.engine.st.species.id(t.species);
            let cur = acc.remove(&id).unwrap_or_else(C::S::zero);
            acc.insert(id, cur.add(&c));
        }
        acc.into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(id, c)| (self.engine.st.species.get(id), c))
            .collect()
    }

    /// Apply the mode-`n` Cartan operator (`n != 0`) to a vector.
    pub fn apply_h_mode(&self, i: usize, n: i64, v: &FockVector<C::S>) -> FockVector<C::S> {
        let terms = self.h_mode_terms(i, n);
        let mut out = FockVector::zero();
        for (state, amp) in &v.terms {
            if n < 0 {
                for (sp, c) in &terms {
                    let id = self.engine.st.species.id(*sp);
                    let new_state = state.with_factor(id, (-n) as u8);
                    out.add_term(new_state, amp.mul(c));
                }
            } else {
                for (r, &(sp_id, mode)) in state.modes.iter().enumerate() {
                    if mode as i64 != n {
                        continue;
                    }
                    let y = self.engine.st.species.get(sp_id);
                    let mut kappa = C::S::zero();
                    for (x, c) in &terms {
                        let br = self.engine.st.bracket(&self.engine.ctx, *x, n, y, -n);
                        if !br.is_zero() {
                            kappa = kappa.add(&c.mul(&br));
                        }
                    }
                    if kappa.is_zero() {
                        continue;
                    }
                    let mut modes = state.modes.clone();
                    modes.remove(r);
                    out.add_term(
                        State { sector: state.sector, modes },
                        amp.mul(&kappa),
                    );
                }
            }
        }
        out
    }

    /// Linear functional giving the diagonal Cartan charge of a sector.
    pub fn h_diag_functional(&self, i: usize) -> Vec<(Species, Rat)> {
        let mut acc: BTreeMap<u16, Rat> = BTreeMap::new();
        for t in &self.psi_terms_plus[i - 1] {
            let sign = match t.shape {
                FieldShape::HalfPlus => rat(1, 1),
                FieldShape::HalfMinus => rat(-1, 1),
                _ => unreachable!("Cartan exponents consist of half fields"),
            };
            let id = self.engine.st.species.id(t.species);
            let cur = acc.remove(&id).unwrap_or_else(Rat::zero);
            acc.insert(id, cur + sign * &t.coeff);
        }
        acc.into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(id, c)| (self.engine.st.species.get(id), c))
            .collect()
    }

    /// Diagonal Cartan value on a sector charge.
    pub fn h_diag_value(&self, i: usize, charge: &Charge) -> Rat {
        let mut acc = Rat::zero();
        for (sp, c) in self.h_diag_functional(i) {
            let p = match sp.family {
                Family::A => charge.p_a[sp.idx - 1],
                Family::B => charge.p_b[sp.idx],
                Family::C => charge.p_c[sp.idx],
            };
            acc += c * rat(p, 1);
        }
        acc
    }

    /// Apply the diagonal Cartan operator to a vector.
    pub fn apply_h_diag(&self, i: usize, v: &FockVector<C::S>) -> FockVector<C::S> {
        let mut out = FockVector::zero();
        for (state, amp) in &v.terms {
            let val = self.h_diag_value(i, &self.engine.sectors.charge(state.sector));
            out.add_term(state.clone(), amp.mul(&self.engine.ctx.from_rat(&val)));
        }
        out
    }
}

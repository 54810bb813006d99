//! Normal-ordered exponential operators and their exact mode application.
//!
//! An operator is described symbolically as an exponential of a linear
//! combination of free fields (half fields, full fields with zero modes, and
//! weighted full fields), each evaluated at a power-of-q multiple of `z`.  The
//! engine compiles the description into per-mode coefficient tables plus
//! zero-mode data, and then extracts exact matrix elements of any fixed
//! `z`-power against basis states.
//!
//! Conventions.  A compiled operator is the product
//! `exp(creation part) * (shift factors, canonically ordered) * (scalar and
//! z-power factors from commuting zero modes, evaluated on the incoming
//! sector) * exp(annihilation part)`.  Writing `C(m)` for the compiled
//! coefficient of `x_m z^{-m}`, the coefficient of `z^s` of the whole operator
//! maps a state of degree `d` to states of degree exactly `d + s - offset`,
//! where `offset` is the sector-dependent z-power of the zero-mode factor;
//! powers `s` outside `offset + Z` annihilate the state.

use crate::heisenberg::{
    apply_pair_shift, apply_root_shift, CocycleOrder, Family, FockVector, Sectors, ShiftKind,
    Species, State, Structure,
};
use crate::scalars::{Coeff, Rat, ScalarCtx, ScalarError};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use std::cell::RefCell;
use std::collections::HashMap;

/// Shape of one free field inside an exponent.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldShape {
    /// Annihilation half: modes `x_m, m > 0` and the scalar `q^{x_0}`.
    HalfPlus,
    /// Creation half: modes `x_{-m}, m > 0` and the scalar `q^{-x_0}`.
    HalfMinus,
    /// Full field: all nonzero modes, a shift factor, and `x_0 log z`.
    Full,
    /// Weighted full field (root family only): mode `m` coefficients carry a
    /// ratio of q-integers `prod [l*m] / prod [m*m]`, a damping `q^{-alpha|m|}`,
    /// and the zero-mode part is scaled by `prod(l)/prod(m)`.
    Ratio { l: Vec<Rat>, m: Vec<Rat>, alpha: Rat },
}

/// One field summand of an exponent: `coeff * field(q^beta z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTerm {
    pub species: Species,
    pub shape: FieldShape,
    pub coeff: Rat,
    pub beta: Rat,
}

impl FieldTerm {
    pub fn new(species: Species, shape: FieldShape, coeff: Rat, beta: Rat) -> Self {
        FieldTerm { species, shape, coeff, beta }
    }
}

/// Symbolic exponent: a sum of field terms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VertexExpr {
    pub terms: Vec<FieldTerm>,
}

impl VertexExpr {
    pub fn new() -> Self {
        VertexExpr::default()
    }

    pub fn push(&mut self, t: FieldTerm) -> &mut Self {
        self.terms.push(t);
        self
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("mode {0} exceeds the compiled mode range {1}")]
    ModeOutOfRange(i64, i64),
    #[error("full pair field carries non-integer shift weight {0}")]
    NonIntegerPairWeight(String),
    #[error("weighted fields are only defined for the root family")]
    RatioOnPairField,
    #[error("the screening structure degenerates at the critical level")]
    CriticalLevel,
    #[error("a profile exponent leaves the scalar lattice of the telescoping step")]
    UnalignedExponents,
    #[error("zero-mode pairs require ordered rows of equal statistics")]
    BadPair,
}

/// Identifier of a compiled operator within one engine.
pub type OpId = u32;

#[derive(Debug, Clone)]
struct QFactor {
    kind: ShiftKind,
    /// Integer weight for pair shifts; root shifts keep the rational.
    pair_weight: i64,
    root_weight: Rat,
}

#[derive(Debug, Clone)]
struct OpData<S> {
    /// `ann[species][m-1]` is the coefficient of `x_m z^{-m}`, `1 <= m`.
    ann: Vec<(u16, Vec<S>)>,
    /// `cre[species][m-1]` is the coefficient of `x_{-m} z^{+m}`, `1 <= m`.
    cre: Vec<(u16, Vec<S>)>,
    q_factors: Vec<QFactor>,
    /// Exponent functional of the scalar factor `q^{sum c_x <x_0>}`.
    zero_scalar: Vec<(Species, Rat)>,
    /// Functional of the z-power factor `z^{sum c_x <x_0>}`.
    z_offset: Vec<(Species, Rat)>,
    parity: i64,
}

/// The operator engine: compiles vertex expressions over a scalar context and
/// applies their z-power coefficients to states.  One engine is single
/// threaded; parallel drivers build one engine per worker.
pub struct Engine<C: ScalarCtx> {
    pub ctx: C,
    pub st: Structure,
    pub order: CocycleOrder,
    pub max_mode: i64,
    pub sectors: Sectors,
    ops: RefCell<Vec<OpData<C::S>>>,
    memo: RefCell<HashMap<(OpId, Rat, State), FockVector<C::S>>>,
}

impl<C: ScalarCtx> Engine<C> {
    pub fn new(ctx: C, st: Structure, order: CocycleOrder, max_mode: i64) -> Self {
        assert!(max_mode >= 1);
        Engine {
            ctx,
            st,
            order,
            max_mode,
            sectors: Sectors::new(),
            ops: RefCell::new(Vec::new()),
            memo: RefCell::new(HashMap::new()),
        }
    }

    /// Intern a sector charge and return the vacuum state over it.
    pub fn vacuum(&self, charge: &crate::heisenberg::Charge) -> State {
        State::vacuum(self.sectors.intern(charge))
    }

    /// Parity of a compiled operator: the number of odd shift factors on
    /// mixed pairs, mod 2.
    pub fn parity(&self, op: OpId) -> i64 {
        self.ops.borrow()[op as usize].parity
    }

    /// Compile a vertex expression into per-mode tables; all scalar lattice
    /// checks happen here so later application cannot fail on representability.
    pub fn build(&self, expr: &VertexExpr) -> Result<OpId, EngineError> {
        let mut ann: HashMap<u16, Vec<C::S>> = HashMap::new();
        let mut cre: HashMap<u16, Vec<C::S>> = HashMap::new();
        let mut q_weights: HashMap<(u8, usize), (ShiftKind, Rat)> = HashMap::new();
        let mut zero_scalar: HashMap<Species, Rat> = HashMap::new();
        let mut z_offset: HashMap<Species, Rat> = HashMap::new();

        let mm = self.max_mode as usize;
        let zero_row = vec![C::S::zero(); mm];
        let add_mode = |table: &mut HashMap<u16, Vec<C::S>>, sp: u16, m: usize, v: C::S| {
            let row = table.entry(sp).or_insert_with(|| zero_row.clone());
            row[m - 1] = row[m - 1].add(&v);
        };

        for t in &expr.terms {
            let sp_id = self.st.species.id(t.species);
            match &t.shape {
                FieldShape::HalfPlus => {
                    // coeff * (q - q^{-1}) q^{-beta m} on x_m z^{-m}, plus q^{+coeff x_0}
                    for m in 1..=mm {
                        let p = self.ctx.qpow(&(-&t.beta * Rat::from(BigInt::from(m as i64))))?;
                        let v = self
                            .ctx
                            .from_rat(&t.coeff)
                            .mul(&self.ctx.q_minus_qinv())
                            .mul(&p);
                        add_mode(&mut ann, sp_id, m, v);
                    }
                    *zero_scalar.entry(t.species).or_insert_with(Rat::zero) += &t.coeff;
                }
                FieldShape::HalfMinus => {
                    // -coeff * (q - q^{-1}) q^{+beta m} on x_{-m} z^{+m}, plus q^{-coeff x_0}
                    for m in 1..=mm {
                        let p = self.ctx.qpow(&(&t.beta * Rat::from(BigInt::from(m as i64))))?;
                        let v = self
                            .ctx
                            .from_rat(&t.coeff)
                            .mul(&self.ctx.q_minus_qinv())
                            .mul(&p)
                            .neg();
                        add_mode(&mut cre, sp_id, m, v);
                    }
                    *zero_scalar.entry(t.species).or_insert_with(Rat::zero) -= &t.coeff;
                }
                FieldShape::Full | FieldShape::Ratio { .. } => {
                    let (ratio_l, ratio_m, alpha) = match &t.shape {
                        FieldShape::Ratio { l, m, alpha } => {
                            if t.species.family != Family::A {
                                return Err(EngineError::RatioOnPairField);
                            }
                            (l.clone(), m.clone(), alpha.clone())
                        }
                        _ => (Vec::new(), Vec::new(), Rat::zero()),
                    };
                    let w: Rat = ratio_l.iter().fold(Rat::one(), |acc, x| acc * x)
                        / ratio_m.iter().fold(Rat::one(), |acc, x| acc * x);
                    for m in 1..=mm {
                        let mr = Rat::from(BigInt::from(m as i64));
                        // damping uses |m|, identical on both sides
                        let damp = self.ctx.qpow(&(-&alpha * &mr))?;
                        for side in [1i64, -1] {
                            let arg = &mr * Rat::from(BigInt::from(side));
                            let mut num = self.ctx.from_rat(&-&t.coeff);
                            for lr in &ratio_l {
                                num = num.mul(&self.ctx.qint(&(lr * &arg))?);
                            }
                            let mut den = self.ctx.qint(&arg)?;
                            for dr in &ratio_m {
                                den = den.mul(&self.ctx.qint(&(dr * &arg))?);
                            }
                            let p = self.ctx.qpow(&(-&t.beta * &arg))?;
                            let v = num.mul(&damp).mul(&p).div(&den);
                            if side > 0 {
                                add_mode(&mut ann, sp_id, m, v);
                            } else {
                                add_mode(&mut cre, sp_id, m, v);
                            }
                        }
                    }
                    let total_w = &t.coeff * &w;
                    let (key, kind) = match t.species.family {
                        Family::A => ((0u8, t.species.idx), ShiftKind::Root(t.species.idx)),
                        Family::B => ((1u8, t.species.idx), ShiftKind::PairB(t.species.idx)),
                        Family::C => ((2u8, t.species.idx), ShiftKind::PairC(t.species.idx)),
                    };
                    let slot = q_weights
                        .entry(key)
                        .or_insert_with(|| (kind, Rat::zero()));
                    slot.1 += &total_w;
                    *zero_scalar.entry(t.species).or_insert_with(Rat::zero) +=
                        &total_w * &t.beta;
                    *z_offset.entry(t.species).or_insert_with(Rat::zero) += &total_w;
                }
            }
        }

        // Lattice check: zero-mode scalar exponents are integer multiples of
        // the per-unit coefficients, so checking the unit coefficient suffices.
        for c in zero_scalar.values() {
            if !c.is_zero() {
                self.ctx.qpow(c)?;
            }
        }

        let mut q_factors = Vec::new();
        let mut parity = 0i64;
        let mut keys: Vec<_> = q_weights.keys().cloned().collect();
        keys.sort();
        for key in keys {
            let (kind, w) = q_weights[&key].clone();
            if w.is_zero() {
                continue;
            }
            match kind {
                ShiftKind::Root(_) => q_factors.push(QFactor {
                    kind,
                    pair_weight: 0,
                    root_weight: w,
                }),
                ShiftKind::PairB(k) | ShiftKind::PairC(k) => {
                    if !w.is_integer() {
                        return Err(EngineError::NonIntegerPairWeight(w.to_string()));
                    }
                    let wi = w.to_integer().to_i64().expect("pair weight fits i64");
                    if self.st.pairs.is_mixed(k)
                        && matches!(kind, ShiftKind::PairB(_))
                        && wi.rem_euclid(2) == 1
                    {
                        parity += 1;
                    }
                    q_factors.push(QFactor {
                        kind,
                        pair_weight: wi,
                        root_weight: Rat::zero(),
                    });
                }
            }
        }

        let prune = |table: HashMap<u16, Vec<C::S>>| -> Vec<(u16, Vec<C::S>)> {
            let mut rows: Vec<_> = table
                .into_iter()
                .filter(|(_, row)| row.iter().any(|v| !v.is_zero()))
                .collect();
            rows.sort_by_key(|(sp, _)| *sp);
            rows
        };

        let data = OpData {
            ann: prune(ann),
            cre: prune(cre),
            q_factors,
            zero_scalar: {
                let mut v: Vec<_> = zero_scalar
                    .into_iter()
                    .filter(|(_, c)| !c.is_zero())
                    .collect();
                v.sort_by_key(|(s, _)| self.st.species.id(*s));
                v
            },
            z_offset: {
                let mut v: Vec<_> = z_offset
                    .into_iter()
                    .filter(|(_, c)| !c.is_zero())
                    .collect();
                v.sort_by_key(|(s, _)| self.st.species.id(*s));
                v
            },
            parity: parity.rem_euclid(2),
        };
        let mut ops = self.ops.borrow_mut();
        ops.push(data);
        Ok((ops.len() - 1) as OpId)
    }

    fn charge_eval(&self, functional: &[(Species, Rat)], charge: &crate::heisenberg::Charge) -> Rat {
        let mut acc = Rat::zero();
        for (sp, c) in functional {
            let p = match sp.family {
                Family::A => charge.p_a[sp.idx - 1],
                Family::B => charge.p_b[sp.idx],
                Family::C => charge.p_c[sp.idx],
            };
            acc += c * Rat::from(BigInt::from(p));
        }
        acc
    }

    /// Sector-dependent z-power of the zero-mode factor on the given state.
    pub fn sector_z_offset(&self, op: OpId, state: &State) -> Rat {
        let ops = self.ops.borrow();
        let data = &ops[op as usize];
        let charge = self.sectors.charge(state.sector);
        self.charge_eval(&data.z_offset, &charge)
    }

    /// Apply the coefficient of `z^s` to a basis state.
    pub fn apply_power(&self, op: OpId, s: &Rat, state: &State) -> Result<FockVector<C::S>, EngineError> {
        let key = (op, s.clone(), state.clone());
        if let Some(hit) = self.memo.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let out = self.apply_power_uncached(op, s, state)?;
        self.memo.borrow_mut().insert(key, out.clone());
        Ok(out)
    }

    fn apply_power_uncached(
        &self,
        op: OpId,
        s: &Rat,
        state: &State,
    ) -> Result<FockVector<C::S>, EngineError> {
        let ops = self.ops.borrow();
        let data = &ops[op as usize];
        let charge_in = self.sectors.charge(state.sector);

        let gamma = self.charge_eval(&data.z_offset, &charge_in);
        let n_total_rat = s - &gamma;
        if !n_total_rat.is_integer() {
            return Ok(FockVector::zero());
        }
        let n_total = n_total_rat
            .to_integer()
            .to_i64()
            .expect("mode count fits i64");

        // Scalar factor from commuting zero modes, on the incoming charge.
        let scalar_exp = self.charge_eval(&data.zero_scalar, &charge_in);
        let mut prefactor = self
            .ctx
            .qpow(&scalar_exp)
            .expect("zero-mode exponent validated at build time");

        // Shift factors: canonical product has the later pair (in the chosen
        // order) leftmost, so application runs in reverse canonical order.
        let mut charge_out = charge_in.clone();
        let mut factors: Vec<&QFactor> = data.q_factors.iter().collect();
        factors.sort_by_key(|f| match f.kind {
            ShiftKind::PairB(k) | ShiftKind::PairC(k) => {
                let (i, j) = self.st.pairs.pair(k);
                (1, i, j)
            }
            ShiftKind::Root(i) => (0, i, 0),
        });
        if self.order == CocycleOrder::AscendingLex {
            factors.reverse();
        }
        let mut sign = 1i64;
        for f in factors {
            match f.kind {
                ShiftKind::Root(i) => {
                    apply_root_shift(&self.st, &mut charge_out, i, &f.root_weight)
                }
                kind => {
                    sign *= apply_pair_shift(
                        &self.st,
                        self.order,
                        &mut charge_out,
                        kind,
                        f.pair_weight,
                    );
                }
            }
        }
        if sign < 0 {
            prefactor = prefactor.neg();
        }
        let sector_out = self.sectors.intern(&charge_out);

        // Contraction value of the annihilation exponent against each state
        // factor; the root family couples across root indices.
        let factors_in = &state.modes;
        let mut kappa: Vec<C::S> = Vec::with_capacity(factors_in.len());
        for &(sp_id, m) in factors_in {
            let y = self.st.species.get(sp_id);
            let mut acc = C::S::zero();
            for (x_id, row) in &data.ann {
                let x = self.st.species.get(*x_id);
                if (m as usize) > row.len() {
                    return Err(EngineError::ModeOutOfRange(m as i64, self.max_mode));
                }
                let coeff = &row[m as usize - 1];
                if coeff.is_zero() {
                    continue;
                }
                let br = self.st.bracket(&self.ctx, x, m as i64, y, -(m as i64));
                if !br.is_zero() {
                    acc = acc.add(&coeff.mul(&br));
                }
            }
            kappa.push(acc);
        }

        let mut out = FockVector::zero();
        let nf = factors_in.len();
        debug_assert!(nf < 63);
        for mask in 0u64..(1u64 << nf) {
            let mut coeff = prefactor.clone();
            let mut dropped = 0i64;
            let mut remaining: Vec<(u16, u8)> = Vec::with_capacity(nf);
            let mut dead = false;
            for (r, &(sp_id, m)) in factors_in.iter().enumerate() {
                if mask & (1 << r) != 0 {
                    if kappa[r].is_zero() {
                        dead = true;
                        break;
                    }
                    coeff = coeff.mul(&kappa[r]);
                    dropped += m as i64;
                } else {
                    remaining.push((sp_id, m));
                }
            }
            if dead {
                continue;
            }
            let u = n_total + dropped;
            if u < 0 {
                continue;
            }
            if u > self.max_mode {
                return Err(EngineError::ModeOutOfRange(u, self.max_mode));
            }
            self.emit_creations(data, u, &remaining, &coeff, sector_out, &mut out);
        }

        #[cfg(debug_assertions)]
        for st_out in out.terms.keys() {
            debug_assert_eq!(st_out.degree(), state.degree() + n_total);
        }
        Ok(out)
    }

    /// Distribute `u` units of creation degree over the creation table on top
    /// of `base`, scaling by the exponential-series coefficient
    /// `prod C^e / e!` for each multiset.
    fn emit_creations(
        &self,
        data: &OpData<C::S>,
        u: i64,
        base: &[(u16, u8)],
        coeff: &C::S,
        sector_out: u32,
        out: &mut FockVector<C::S>,
    ) {
        // Flatten nonzero (species, mode) creation slots once.
        struct Slot<'a, S> {
            sp: u16,
            mode: i64,
            c: &'a S,
        }
        let mut slots: Vec<Slot<'_, C::S>> = Vec::new();
        for (sp, row) in &data.cre {
            for (i, c) in row.iter().enumerate() {
                if !c.is_zero() && (i as i64 + 1) <= u {
                    slots.push(Slot { sp: *sp, mode: i as i64 + 1, c });
                }
            }
        }
        fn rec<S: Coeff>(
            slots: &[Slot<'_, S>],
            pos: usize,
            budget: i64,
            acc_coeff: &S,
            acc_modes: &mut Vec<(u16, u8)>,
            sink: &mut dyn FnMut(&S, &[(u16, u8)]),
        ) {
            if budget == 0 {
                sink(acc_coeff, acc_modes);
                return;
            }
            if pos >= slots.len() {
                return;
            }
            // exponent e = 0 first
            rec(slots, pos + 1, budget, acc_coeff, acc_modes, sink);
            let slot = &slots[pos];
            let mut c = acc_coeff.clone();
            let mut e = 1i64;
            let mut used = slot.mode;
            while used <= budget {
                c = c.mul(slot.c).div(&S::from_rat(&Rat::from(BigInt::from(e))));
                acc_modes.push((slot.sp, slot.mode as u8));
                rec(slots, pos + 1, budget - used, &c, acc_modes, sink);
                e += 1;
                used += slot.mode;
            }
            acc_modes.truncate(acc_modes.len() - (e as usize - 1));
        }
        let mut acc_modes: Vec<(u16, u8)> = Vec::new();
        let mut sink = |c: &C::S, created: &[(u16, u8)]| {
            let mut modes: Vec<(u16, u8)> = base.iter().cloned().chain(created.iter().cloned()).collect();
            modes.sort_unstable();
            out.add_term(State { sector: sector_out, modes }, c.clone());
        };
        rec(&slots, 0, u, coeff, &mut acc_modes, &mut sink);
    }

    /// Apply the coefficient of `z^s` to every term of a vector.
    pub fn apply_power_vec(
        &self,
        op: OpId,
        s: &Rat,
        v: &FockVector<C::S>,
    ) -> Result<FockVector<C::S>, EngineError> {
        let mut out = FockVector::zero();
        for (state, c) in &v.terms {
            let part = self.apply_power(op, s, state)?;
            out.add_assign(&part.scaled(c));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heisenberg::Charge;
    use crate::scalars::{rat, AlgebraParams, ExactCtx};

    fn engine() -> Engine<ExactCtx> {
        let alg = AlgebraParams::new(2, 1, rat(1, 1));
        let st = Structure::new(alg);
        let ctx = ExactCtx::new(rat(1, 2), 4).unwrap();
        Engine::new(ctx, st, CocycleOrder::DescendingLex, 12)
    }

    fn c12(e: &Engine<ExactCtx>) -> Species {
        Species { family: Family::C, idx: e.st.pairs.index(1, 2) }
    }

    #[test]
    fn full_exponential_creation_series() {
        let e = engine();
        let sp = c12(&e);
        let mut expr = VertexExpr::new();
        expr.push(FieldTerm::new(sp, FieldShape::Full, rat(1, 1), rat(0, 1)));
        let op = e.build(&expr).unwrap();
        assert_eq!(e.parity(op), 0);
        let vac = e.vacuum(&Charge::vacuum(&e.st));

        // z^0: pure shift, charge +1 on the pair
        let out0 = e.apply_power(op, &rat(0, 1), &vac).unwrap();
        assert_eq!(out0.terms.len(), 1);
        let (st0, c0) = out0.terms.iter().next().unwrap();
        assert_eq!(c0, &rat(1, 1));
        assert!(st0.modes.is_empty());
        let ch = e.sectors.charge(st0.sector);
        assert_eq!(ch.p_c[e.st.pairs.index(1, 2)], 1);

        // z^1: single creation mode with coefficient 1/[1] = 1
        let out1 = e.apply_power(op, &rat(1, 1), &vac).unwrap();
        assert_eq!(out1.terms.len(), 1);
        let (st1, c1) = out1.terms.iter().next().unwrap();
        assert_eq!(c1, &rat(1, 1));
        assert_eq!(st1.modes, vec![(e.st.species.id(sp), 1)]);

        // z^2: x_{-2}/[2] + x_{-1}^2/2
        let out2 = e.apply_power(op, &rat(2, 1), &vac).unwrap();
        assert_eq!(out2.terms.len(), 2);
        let ctx = &e.ctx;
        let sp_id = e.st.species.id(sp);
        for (st2, c2) in &out2.terms {
            if st2.modes == vec![(sp_id, 2)] {
                assert_eq!(c2, &(rat(1, 1) / ctx.qint_i(2)));
            } else {
                assert_eq!(st2.modes, vec![(sp_id, 1), (sp_id, 1)]);
                assert_eq!(c2, &rat(1, 2));
            }
        }

        // negative powers annihilate the vacuum
        let outm = e.apply_power(op, &rat(-1, 1), &vac).unwrap();
        assert!(outm.is_zero());
    }

    #[test]
    fn full_exponential_contraction() {
        let e = engine();
        let sp = c12(&e);
        let sp_id = e.st.species.id(sp);
        let mut expr = VertexExpr::new();
        expr.push(FieldTerm::new(sp, FieldShape::Full, rat(1, 1), rat(0, 1)));
        let op = e.build(&expr).unwrap();
        let vac = e.vacuum(&Charge::vacuum(&e.st));
        let one_mode = vac.with_factor(sp_id, 1);

        // z^{-1} on x_{-1}|0>: contraction -1/[1] * [1]^2 = -1, then shift
        let out = e.apply_power(op, &rat(-1, 1), &one_mode).unwrap();
        assert_eq!(out.terms.len(), 1);
        let (st_out, c) = out.terms.iter().next().unwrap();
        assert!(st_out.modes.is_empty());
        assert_eq!(c, &rat(-1, 1));

        // z^0 on x_{-1}|0>: the keep contribution (coefficient 1) and the
        // trade contribution (contract at -1, recreate at 1/[1]) land on the
        // same basis state and cancel exactly
        let out = e.apply_power(op, &rat(0, 1), &one_mode).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn half_field_scalar_factor() {
        let e = engine();
        let b13 = Species { family: Family::B, idx: e.st.pairs.index(1, 3) };
        let mut expr = VertexExpr::new();
        expr.push(FieldTerm::new(b13, FieldShape::HalfPlus, rat(1, 1), rat(0, 1)));
        let op = e.build(&expr).unwrap();
        let mut ch = Charge::vacuum(&e.st);
        ch.p_b[e.st.pairs.index(1, 3)] = 2;
        let vac = e.vacuum(&ch);
        let out = e.apply_power(op, &rat(0, 1), &vac).unwrap();
        assert_eq!(out.terms.len(), 1);
        let (st_out, c) = out.terms.iter().next().unwrap();
        assert_eq!(st_out, &vac);
        // q^{<b_0>} = q^2
        assert_eq!(c, &e.ctx.qpow(&rat(2, 1)).unwrap());
    }

    #[test]
    fn half_minus_creates_with_argument_shift() {
        let e = engine();
        let b13 = Species { family: Family::B, idx: e.st.pairs.index(1, 3) };
        let sp_id = e.st.species.id(b13);
        let mut expr = VertexExpr::new();
        // b_-(q^2 z): coefficient on x_{-m} z^{+m} is -(q - q^{-1}) q^{2m}
        expr.push(FieldTerm::new(b13, FieldShape::HalfMinus, rat(1, 1), rat(2, 1)));
        let op = e.build(&expr).unwrap();
        let vac = e.vacuum(&Charge::vacuum(&e.st));
        let out = e.apply_power(op, &rat(1, 1), &vac).unwrap();
        let (st_out, c) = out.terms.iter().next().unwrap();
        assert_eq!(st_out.modes, vec![(sp_id, 1)]);
        let expect = -(e.ctx.q_minus_qinv()) * e.ctx.qpow(&rat(2, 1)).unwrap();
        assert_eq!(c, &expect);
        // zero-scalar is q^{-<b_0>} = 1 on this sector; z-offset zero, so only
        // integer powers contribute
        let half = e.apply_power(op, &rat(1, 2), &vac).unwrap();
        assert!(half.is_zero());
    }

    #[test]
    fn mixed_pair_shift_sign_through_op() {
        let e = engine();
        let b13 = Species { family: Family::B, idx: e.st.pairs.index(1, 3) };
        let b23 = Species { family: Family::B, idx: e.st.pairs.index(2, 3) };
        let mut expr = VertexExpr::new();
        expr.push(FieldTerm::new(b13, FieldShape::Full, rat(1, 1), rat(0, 1)));
        let op13 = e.build(&expr).unwrap();
        assert_eq!(e.parity(op13), 1);
        let mut expr2 = VertexExpr::new();
        expr2.push(FieldTerm::new(b23, FieldShape::Full, rat(1, 1), rat(0, 1)));
        let op23 = e.build(&expr2).unwrap();

        // Prepare a sector with one unit of (2,3) charge.
        let mut ch = Charge::vacuum(&e.st);
        ch.p_b[e.st.pairs.index(2, 3)] = 1;
        let vac23 = e.vacuum(&ch);
        // gamma for op13 on this sector: <b_0^{1,3}> = 0
        let out = e.apply_power(op13, &rat(0, 1), &vac23).unwrap();
        let (_, c) = out.terms.iter().next().unwrap();
        assert_eq!(c, &rat(-1, 1), "passing one mixed factor flips the sign");

        // The same op on the plain vacuum has sign +1.
        let vac = e.vacuum(&Charge::vacuum(&e.st));
        let out = e.apply_power(op13, &rat(0, 1), &vac).unwrap();
        let (_, c) = out.terms.iter().next().unwrap();
        assert_eq!(c, &rat(1, 1));

        // gamma for op23 on the shifted sector is <b_0^{2,3}> = 1: power z^1
        // is the pure-shift coefficient there.
        let out = e.apply_power(op23, &rat(1, 1), &vac23).unwrap();
        let pure: Vec<_> = out.terms.iter().filter(|(s, _)| s.modes.is_empty()).collect();
        assert_eq!(pure.len(), 1);
        assert_eq!(pure[0].1, &rat(1, 1), "no mixed factor precedes (2,3)");
    }

    #[test]
    fn degree_homogeneity() {
        let e = engine();
        let a1 = Species { family: Family::A, idx: 1 };
        let b12 = Species { family: Family::B, idx: e.st.pairs.index(1, 2) };
        let mut expr = VertexExpr::new();
        expr.push(FieldTerm::new(a1, FieldShape::HalfPlus, rat(1, 1), rat(1, 2)));
        expr.push(FieldTerm::new(b12, FieldShape::Full, rat(-1, 1), rat(1, 1)));
        let op = e.build(&expr).unwrap();
        let vac = e.vacuum(&Charge::vacuum(&e.st));
        let a1_id = e.st.species.a(1);
        let state = vac.with_factor(a1_id, 2).with_factor(e.st.species.b(0), 1);
        let gamma = e.sector_z_offset(op, &state);
        for s in -3..=3i64 {
            let sr = rat(s, 1);
            let out = e.apply_power(op, &sr, &state).unwrap();
            let n = (&sr - &gamma).to_integer();
            for st_out in out.terms.keys() {
                assert_eq!(
                    Rat::from(BigInt::from(st_out.degree())),
                    Rat::from(BigInt::from(state.degree())) + Rat::from(n.clone())
                );
            }
        }
    }

    #[test]
    fn root_contraction_couples_across_indices() {
        let e = engine();
        let a1 = Species { family: Family::A, idx: 1 };
        let a2 = Species { family: Family::A, idx: 2 };
        let mut expr = VertexExpr::new();
        expr.push(FieldTerm::new(a1, FieldShape::HalfPlus, rat(1, 1), rat(0, 1)));
        let op = e.build(&expr).unwrap();
        let vac = e.vacuum(&Charge::vacuum(&e.st));
        // a^1_1 (from the half field) contracts with a^2_{-1} through the
        // off-diagonal bracket [2][-1] = -[2].
        let st_a2 = vac.with_factor(e.st.species.id(a2), 1);
        let out = e.apply_power(op, &rat(-1, 1), &st_a2).unwrap();
        assert_eq!(out.terms.len(), 1);
        let (st_out, c) = out.terms.iter().next().unwrap();
        assert!(st_out.modes.is_empty());
        let expect = e.ctx.q_minus_qinv() * -e.ctx.qint_i(2);
        assert_eq!(c, &expect);
        // while the diagonal a^2 bracket vanishes: applying to a^2 from a
        // half field on a^2 gives zero
        let mut expr2 = VertexExpr::new();
        expr2.push(FieldTerm::new(a2, FieldShape::HalfPlus, rat(1, 1), rat(0, 1)));
        let op2 = e.build(&expr2).unwrap();
        let out2 = e.apply_power(op2, &rat(-1, 1), &st_a2).unwrap();
        assert!(out2.is_zero());
    }

    #[test]
    fn ratio_field_weights_and_charges() {
        let e = engine();
        let a1 = Species { family: Family::A, idx: 1 };
        let shifted = e.st.alg.shifted_level(); // 2 at these parameters
        let mut expr = VertexExpr::new();
        // -(1/shifted * a^1)(z; shifted/2)
        expr.push(FieldTerm::new(
            a1,
            FieldShape::Ratio {
                l: vec![rat(1, 1)],
                m: vec![shifted.clone()],
                alpha: &shifted / rat(2, 1),
            },
            rat(-1, 1),
            rat(0, 1),
        ));
        let op = e.build(&expr).unwrap();
        let vac = e.vacuum(&Charge::vacuum(&e.st));
        // z-offset on the vacuum is 0; the shift moves root charges by minus
        // a Cartan row.
        let out = e.apply_power(op, &rat(0, 1), &vac).unwrap();
        let (st_out, c) = out.terms.iter().next().unwrap();
        assert_eq!(c, &rat(1, 1));
        let ch = e.sectors.charge(st_out.sector);
        assert_eq!(ch.p_a, vec![-2, 1]);
        // creation coefficient of a_{-1} z^{1}: -(-1) q^{-alpha}/([shifted][1])
        let out1 = e.apply_power(op, &rat(1, 1), &vac).unwrap();
        let target: Vec<_> = out1
            .terms
            .iter()
            .filter(|(s, _)| s.modes == vec![(e.st.species.a(1), 1)])
            .collect();
        assert_eq!(target.len(), 1);
        let alpha = &shifted / rat(2, 1);
        let expect = -(e.ctx.qpow(&-alpha).unwrap() / e.ctx.qint(&shifted).unwrap());
        assert_eq!(target[0].1, &expect);
    }

    #[test]
    fn memoization_is_transparent() {
        let e = engine();
        let sp = c12(&e);
        let mut expr = VertexExpr::new();
        expr.push(FieldTerm::new(sp, FieldShape::Full, rat(1, 1), rat(0, 1)));
        let op = e.build(&expr).unwrap();
        let vac = e.vacuum(&Charge::vacuum(&e.st));
        let first = e.apply_power(op, &rat(2, 1), &vac).unwrap();
        let second = e.apply_power(op, &rat(2, 1), &vac).unwrap();
        assert_eq!(first, second);
    }
}

//! Mode-level verification of the defining current relations.
//!
//! Every relation among the currents is translated into an identity between
//! finitely many Fourier modes and checked exactly on a truncated block: all
//! basis states of bounded degree over one weight sector, with mode indices
//! running over a symmetric window.  A check either passes exactly (every
//! defect vector vanishes identically) or fails with a witness describing the
//! first offending parameter tuple and state.

use crate::currents::Model;
use crate::heisenberg::{basis_states, Charge, FockVector, State};
use crate::scalars::{rat, Coeff, Rat, ScalarCtx};
use crate::vertex::EngineError;
use num_bigint::BigInt;

/// Check identifiers accepted by [`run_relation`].
pub const RELATION_IDS: &[&str] = &[
    "HH",
    "H_X",
    "XX_quadratic",
    "XX_commuting",
    "X_plus_minus_delta",
    "Serre_cubic",
    "Serre_quartic",
    "Psi_consistency",
];

/// Truncation of the verification block.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    /// Maximum total oscillator degree of the basis states.
    pub degree: i64,
    /// Mode indices run over `[-window, window]`.
    pub window: i64,
    /// Root charges of the sector vacuum.
    pub weights: Vec<i64>,
}

/// Outcome of one named check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckReport {
    pub id: String,
    pub pass: bool,
    /// Reason the check did not apply at these parameters, if any.
    pub skipped: Option<String>,
    pub cases: u64,
    pub witness: Option<String>,
    /// Float image of the worst defect coefficient; exact zero on pass.
    pub max_residual: f64,
}

struct Scan {
    cases: u64,
    witness: Option<String>,
    max_residual: f64,
}

impl Scan {
    fn new() -> Self {
        Scan { cases: 0, witness: None, max_residual: 0.0 }
    }

    /// Record one case; returns `false` when scanning should stop.
    fn note<S: Coeff>(&mut self, defect: &FockVector<S>, desc: impl FnOnce() -> String) -> bool {
        self.cases += 1;
        if defect.is_zero() {
            true
        } else {
            self.max_residual = self.max_residual.max(defect.sup_norm());
            self.witness = Some(desc());
            false
        }
    }

    fn report(self, id: &str) -> CheckReport {
        CheckReport {
            id: id.to_string(),
            pass: self.witness.is_none(),
            skipped: None,
            cases: self.cases,
            witness: self.witness,
            max_residual: self.max_residual,
        }
    }
}

fn skipped(id: &str, why: &str) -> CheckReport {
    CheckReport {
        id: id.to_string(),
        pass: true,
        skipped: Some(why.to_string()),
        cases: 0,
        witness: None,
        max_residual: 0.0,
    }
}

/// Basis states of all degrees `0..=degree` over the block's weight sector.
pub fn block_states<C: ScalarCtx>(model: &Model<C>, blk: &BlockSpec) -> Vec<State> {
    let charge = Charge::weight(&model.engine.st, &blk.weights);
    let sector = model.engine.sectors.intern(&charge);
    let mut states = Vec::new();
    for d in 0..=blk.degree {
        states.extend(basis_states(&model.engine.st, sector, d));
    }
    states
}

fn describe(state: &State) -> String {
    format!("sector {} modes {:?}", state.sector, state.modes)
}

// Defect vectors: each returns lhs - rhs of one relation instance applied to
// a vector; the zero vector certifies the instance on that vector.

/// Bracket of two Cartan modes minus its central value.
pub fn hh_defect<C: ScalarCtx>(
    model: &Model<C>,
    i: usize,
    j: usize,
    m: i64,
    n: i64,
    v: &FockVector<C::S>,
) -> Result<FockVector<C::S>, EngineError> {
    let jn = model.apply_h_mode(j, n, v);
    let mut defect = model.apply_h_mode(i, m, &jn);
    let im = model.apply_h_mode(i, m, v);
    defect.sub_assign(&model.apply_h_mode(j, n, &im));
    if m + n == 0 {
        let ctx = &model.engine.ctx;
        let am = model.engine.st.alg.cartan(i, j) * m;
        let km = &model.engine.st.alg.level * rat(m, 1);
        let scalar = ctx
            .qint_i(am)
            .mul(&ctx.qint(&km)?)
            .div(&ctx.from_rat(&rat(m, 1)));
        defect.sub_assign(&v.scaled(&scalar));
    }
    Ok(defect)
}

/// Bracket of a Cartan mode (`m = 0` means the diagonal operator) with a
/// raising/lowering mode, minus the expected shifted mode.
pub fn hx_defect<C: ScalarCtx>(
    model: &Model<C>,
    i: usize,
    pm: i64,
    j: usize,
    m: i64,
    n: i64,
    v: &FockVector<C::S>,
) -> Result<FockVector<C::S>, EngineError> {
    let ctx = &model.engine.ctx;
    let xv = model.apply_x(pm, j, n, v)?;
    if m == 0 {
        let mut defect = model.apply_h_diag(i, &xv);
        let hv = model.apply_h_diag(i, v);
        defect.sub_assign(&model.apply_x(pm, j, n, &hv)?);
        let scalar = ctx.from_rat(&rat(pm * model.engine.st.alg.cartan(i, j), 1));
        defect.sub_assign(&xv.scaled(&scalar));
        Ok(defect)
    } else {
        let mut defect = model.apply_h_mode(i, m, &xv);
        let hv = model.apply_h_mode(i, m, v);
        defect.sub_assign(&model.apply_x(pm, j, n, &hv)?);
        let am = model.engine.st.alg.cartan(i, j) * m;
        let mut scalar = ctx.qint_i(am).div(&ctx.from_rat(&rat(m, 1)));
        if pm < 0 {
            scalar = scalar.neg();
        }
        let expo = &model.engine.st.alg.level * rat(-pm * m.abs(), 2);
        scalar = scalar.mul(&ctx.qpow(&expo)?);
        defect.sub_assign(&model.apply_x(pm, j, m + n, v)?.scaled(&scalar));
        Ok(defect)
    }
}

/// Graded bracket of a raising and a lowering mode minus the Cartan modes it
/// produces on the diagonal.
pub fn x_pm_delta_defect<C: ScalarCtx>(
    model: &Model<C>,
    i: usize,
    j: usize,
    r: i64,
    s: i64,
    v: &FockVector<C::S>,
) -> Result<FockVector<C::S>, EngineError> {
    let ctx = &model.engine.ctx;
    let both_odd = model.x_plus[i - 1].parity == 1 && model.x_minus[j - 1].parity == 1;
    let mv = model.apply_x(-1, j, s, v)?;
    let mut defect = model.apply_x(1, i, r, &mv)?;
    let pv = model.apply_x(1, i, r, v)?;
    let mp = model.apply_x(-1, j, s, &pv)?;
    if both_odd {
        defect.add_assign(&mp);
    } else {
        defect.sub_assign(&mp);
    }
    if i == j {
        let denom = ctx.q_minus_qinv();
        let half = &model.engine.st.alg.level * rat(r - s, 2);
        let cplus = ctx.qpow(&half)?.div(&denom);
        let cminus = ctx.qpow(&-&half)?.div(&denom);
        defect.sub_assign(&model.apply_psi(1, i, r + s, v)?.scaled(&cplus));
        defect.add_assign(&model.apply_psi(-1, i, r + s, v)?.scaled(&cminus));
    }
    Ok(defect)
}

/// Quadratic exchange relation for a pair of like-sign currents whose Cartan
/// entry is nonzero.
pub fn xx_quadratic_defect<C: ScalarCtx>(
    model: &Model<C>,
    pm: i64,
    i: usize,
    j: usize,
    r: i64,
    s: i64,
    v: &FockVector<C::S>,
) -> Result<FockVector<C::S>, EngineError> {
    let ctx = &model.engine.ctx;
    let qa = ctx.qpow_i(pm * model.engine.st.alg.cartan(i, j));
    let seq = |first: (usize, i64), second: (usize, i64), v: &FockVector<C::S>| {
        let inner = model.apply_x(pm, second.0, second.1, v)?;
        model.apply_x(pm, first.0, first.1, &inner)
    };
    let mut defect = seq((i, r + 1), (j, s), v)?;
    defect.sub_assign(&seq((i, r), (j, s + 1), v)?.scaled(&qa));
    defect.sub_assign(&seq((j, s), (i, r + 1), v)?.scaled(&qa));
    defect.add_assign(&seq((j, s + 1), (i, r), v)?);
    Ok(defect)
}

/// Vanishing graded bracket for a pair of like-sign currents whose Cartan
/// entry is zero.
pub fn xx_commuting_defect<C: ScalarCtx>(
    model: &Model<C>,
    pm: i64,
    i: usize,
    j: usize,
    r: i64,
    s: i64,
    v: &FockVector<C::S>,
) -> Result<FockVector<C::S>, EngineError> {
    let par = |idx: usize| {
        if pm > 0 {
            model.x_plus[idx - 1].parity
        } else {
            model.x_minus[idx - 1].parity
        }
    };
    let both_odd = par(i) == 1 && par(j) == 1;
    let jv = model.apply_x(pm, j, s, v)?;
    let mut defect = model.apply_x(pm, i, r, &jv)?;
    let iv = model.apply_x(pm, i, r, v)?;
    let ji = model.apply_x(pm, j, s, &iv)?;
    if both_odd {
        defect.add_assign(&ji);
    } else {
        defect.sub_assign(&ji);
    }
    Ok(defect)
}

/// Cubic Serre relation: root `i` (non-fermionic) adjacent to root `j`,
/// symmetrized over the two like-root modes.
pub fn serre_cubic_defect<C: ScalarCtx>(
    model: &Model<C>,
    pm: i64,
    i: usize,
    j: usize,
    r1: i64,
    r2: i64,
    t: i64,
    v: &FockVector<C::S>,
) -> Result<FockVector<C::S>, EngineError> {
    let ctx = &model.engine.ctx;
    let q = ctx.qpow_i(1);
    let qinv = ctx.qpow_i(-1);
    let seq = |word: &[(usize, i64)], v: &FockVector<C::S>| {
        let mut cur = v.clone();
        for &(root, mode) in word.iter().rev() {
            cur = model.apply_x(pm, root, mode, &cur)?;
        }
        Ok::<_, EngineError>(cur)
    };
    let mut defect = FockVector::zero();
    for (a, b) in [(r1, r2), (r2, r1)] {
        defect.add_assign(&seq(&[(i, a), (i, b), (j, t)], v)?);
        defect.sub_assign(&seq(&[(i, a), (j, t), (i, b)], v)?.scaled(&qinv));
        defect.sub_assign(&seq(&[(i, b), (j, t), (i, a)], v)?.scaled(&q));
        defect.add_assign(&seq(&[(j, t), (i, b), (i, a)], v)?);
    }
    Ok(defect)
}

/// Quartic Serre relation around the fermionic node; requires both blocks of
/// rank at least two.  Modes: `r1, r2` on the fermionic root, `s` on the root
/// below, `t` on the root above.
pub fn serre_quartic_defect<C: ScalarCtx>(
    model: &Model<C>,
    pm: i64,
    r1: i64,
    r2: i64,
    s: i64,
    t: i64,
    v: &FockVector<C::S>,
) -> Result<FockVector<C::S>, EngineError> {
    let ctx = &model.engine.ctx;
    let mfer = model.engine.st.alg.m;
    let q = ctx.qpow_i(1);
    let qinv = ctx.qpow_i(-1);
    let one = C::S::one();
    // words accumulate as (coefficient, sequence of (root, mode))
    let mut words: Vec<(C::S, Vec<(usize, i64)>)> = Vec::new();
    for (ra, rb) in [(r1, r2), (r2, r1)] {
        let inner: Vec<(C::S, Vec<(usize, i64)>)> = vec![
            (one.clone(), vec![(mfer, rb), (mfer - 1, s)]),
            (qinv.neg(), vec![(mfer - 1, s), (mfer, rb)]),
        ];
        let mut mid: Vec<(C::S, Vec<(usize, i64)>)> = Vec::new();
        for (c, w) in &inner {
            let mut left = vec![(mfer + 1, t)];
            left.extend_from_slice(w);
            mid.push((c.clone(), left));
            let mut right = w.clone();
            right.push((mfer + 1, t));
            mid.push((c.mul(&q).neg(), right));
        }
        for (c, w) in &mid {
            let mut left = vec![(mfer, ra)];
            left.extend_from_slice(w);
            words.push((c.clone(), left));
            let mut right = w.clone();
            right.push((mfer, ra));
            words.push((c.clone(), right));
        }
    }
    let mut defect = FockVector::zero();
    for (c, word) in &words {
        let mut cur = v.clone();
        for &(root, mode) in word.iter().rev() {
            cur = model.apply_x(pm, root, mode, &cur)?;
        }
        defect.add_assign(&cur.scaled(c));
    }
    Ok(defect)
}

/// Integer partitions of `p` as (part, multiplicity) lists.
fn partitions(p: i64) -> Vec<Vec<(i64, i64)>> {
    fn rec(rem: i64, maxp: i64, acc: &mut Vec<(i64, i64)>, out: &mut Vec<Vec<(i64, i64)>>) {
        if rem == 0 {
            out.push(acc.clone());
            return;
        }
        let top = rem.min(maxp);
        for m in (1..=top).rev() {
            let mut e = 1i64;
            while e * m <= rem {
                acc.push((m, e));
                rec(rem - e * m, m - 1, acc, out);
                acc.pop();
                e += 1;
            }
        }
    }
    let mut out = Vec::new();
    let mut acc = Vec::new();
    rec(p, p.max(0), &mut acc, &mut out);
    out
}

/// Difference between a Cartan current power and its reconstruction from the
/// diagonal charge and the mode operators via the exponential series.
pub fn psi_consistency_defect<C: ScalarCtx>(
    model: &Model<C>,
    branch: i64,
    i: usize,
    p: i64,
    v: &FockVector<C::S>,
) -> Result<FockVector<C::S>, EngineError> {
    let ctx = &model.engine.ctx;
    let mut defect = model.apply_psi(branch, i, branch * p, v)?;
    let base = if branch > 0 {
        ctx.q_minus_qinv()
    } else {
        ctx.q_minus_qinv().neg()
    };
    let mut series = FockVector::zero();
    for part in partitions(p) {
        let mut w = v.clone();
        let mut coeff = C::S::one();
        for &(m, e) in &part {
            for _ in 0..e {
                w = model.apply_h_mode(i, branch * m, &w);
                coeff = coeff.mul(&base);
            }
            let mut fact = Rat::from(BigInt::from(1));
            for f in 1..=e {
                fact *= Rat::from(BigInt::from(f));
            }
            coeff = coeff.div(&ctx.from_rat(&fact));
        }
        series.add_assign(&w.scaled(&coeff));
    }
    for (state, amp) in &series.terms {
        let hval = model.h_diag_value(i, &model.engine.sectors.charge(state.sector));
        let scal = ctx.qpow(&(rat(branch, 1) * hval))?;
        defect.add_term(state.clone(), amp.mul(&scal).neg());
    }
    Ok(defect)
}

/// Run one named relation check over a block; see [`RELATION_IDS`].
pub fn run_relation<C: ScalarCtx>(
    model: &Model<C>,
    id: &str,
    blk: &BlockSpec,
) -> Result<CheckReport, EngineError> {
    let states = block_states(model, blk);
    let rank = model.engine.st.alg.rank();
    let w = blk.window;
    let cart = |i: usize, j: usize| model.engine.st.alg.cartan(i, j);
    match id {
        "HH" => {
            let mut sc = Scan::new();
            'scan: for i in 1..=rank {
                for j in 1..=rank {
                    for m in -w..=w {
                        if m == 0 {
                            continue;
                        }
                        for n in -w..=w {
                            if n == 0 {
                                continue;
                            }
                            for st in &states {
                                let v = FockVector::unit(st.clone());
                                let d = hh_defect(model, i, j, m, n, &v)?;
                                if !sc.note(&d, || {
                                    format!("i={i} j={j} m={m} n={n} on {}", describe(st))
                                }) {
                                    break 'scan;
                                }
                            }
                        }
                    }
                }
            }
            Ok(sc.report(id))
        }
        "H_X" => {
            let mut sc = Scan::new();
            'scan: for i in 1..=rank {
                for pm in [1i64, -1] {
                    for j in 1..=rank {
                        for m in -w..=w {
                            for n in -w..=w {
                                for st in &states {
                                    let v = FockVector::unit(st.clone());
                                    let d = hx_defect(model, i, pm, j, m, n, &v)?;
                                    if !sc.note(&d, || {
                                        format!(
                                            "i={i} pm={pm} j={j} m={m} n={n} on {}",
                                            describe(st)
                                        )
                                    }) {
                                        break 'scan;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Ok(sc.report(id))
        }
        "XX_quadratic" => {
            let mut sc = Scan::new();
            'scan: for i in 1..=rank {
                for j in 1..=rank {
                    if cart(i, j) == 0 {
                        continue;
                    }
                    for pm in [1i64, -1] {
                        for r in -w..=w {
                            for s in -w..=w {
                                for st in &states {
                                    let v = FockVector::unit(st.clone());
                                    let d = xx_quadratic_defect(model, pm, i, j, r, s, &v)?;
                                    if !sc.note(&d, || {
                                        format!(
                                            "pm={pm} i={i} j={j} r={r} s={s} on {}",
                                            describe(st)
                                        )
                                    }) {
                                        break 'scan;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Ok(sc.report(id))
        }
        "XX_commuting" => {
            let mut sc = Scan::new();
            'scan: for i in 1..=rank {
                for j in i..=rank {
                    if cart(i, j) != 0 {
                        continue;
                    }
                    for pm in [1i64, -1] {
                        for r in -w..=w {
                            for s in -w..=w {
                                for st in &states {
                                    let v = FockVector::unit(st.clone());
                                    let d = xx_commuting_defect(model, pm, i, j, r, s, &v)?;
                                    if !sc.note(&d, || {
                                        format!(
                                            "pm={pm} i={i} j={j} r={r} s={s} on {}",
                                            describe(st)
                                        )
                                    }) {
                                        break 'scan;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Ok(sc.report(id))
        }
        "X_plus_minus_delta" => {
            let mut sc = Scan::new();
            'scan: for i in 1..=rank {
                for j in 1..=rank {
                    for r in -w..=w {
                        for s in -w..=w {
                            for st in &states {
                                let v = FockVector::unit(st.clone());
                                let d = x_pm_delta_defect(model, i, j, r, s, &v)?;
                                if !sc.note(&d, || {
                                    format!("i={i} j={j} r={r} s={s} on {}", describe(st))
                                }) {
                                    break 'scan;
                                }
                            }
                        }
                    }
                }
            }
            Ok(sc.report(id))
        }
        "Serre_cubic" => {
            let mfer = model.engine.st.alg.m;
            let pairs: Vec<(usize, usize)> = (1..=rank)
                .flat_map(|i| (1..=rank).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && i != mfer && cart(i, j).abs() == 1)
                .collect();
            if pairs.is_empty() {
                return Ok(skipped(id, "no adjacent pair with a non-fermionic root"));
            }
            let mut sc = Scan::new();
            'scan: for &(i, j) in &pairs {
                for pm in [1i64, -1] {
                    for r1 in -w..=w {
                        for r2 in r1..=w {
                            for t in -w..=w {
                                for st in &states {
                                    let v = FockVector::unit(st.clone());
                                    let d =
                                        serre_cubic_defect(model, pm, i, j, r1, r2, t, &v)?;
                                    if !sc.note(&d, || {
                                        format!(
                                            "pm={pm} i={i} j={j} r1={r1} r2={r2} t={t} on {}",
                                            describe(st)
                                        )
                                    }) {
                                        break 'scan;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Ok(sc.report(id))
        }
        "Serre_quartic" => {
            let alg = &model.engine.st.alg;
            if alg.m < 2 || alg.n < 2 {
                return Ok(skipped(id, "needs both blocks of rank at least two"));
            }
            let mut sc = Scan::new();
            'scan: for pm in [1i64, -1] {
                for r1 in -w..=w {
                    for r2 in r1..=w {
                        for s in -w..=w {
                            for t in -w..=w {
                                for st in &states {
                                    let v = FockVector::unit(st.clone());
                                    let d =
                                        serre_quartic_defect(model, pm, r1, r2, s, t, &v)?;
                                    if !sc.note(&d, || {
                                        format!(
                                            "pm={pm} r1={r1} r2={r2} s={s} t={t} on {}",
                                            describe(st)
                                        )
                                    }) {
                                        break 'scan;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Ok(sc.report(id))
        }
        "Psi_consistency" => {
            let mut sc = Scan::new();
            'scan: for i in 1..=rank {
                for branch in [1i64, -1] {
                    for p in 0..=w {
                        for st in &states {
                            let v = FockVector::unit(st.clone());
                            let d = psi_consistency_defect(model, branch, i, p, &v)?;
                            if !sc.note(&d, || {
                                format!("branch={branch} i={i} p={p} on {}", describe(st))
                            }) {
                                break 'scan;
                            }
                        }
                    }
                }
            }
            Ok(sc.report(id))
        }
        other => panic!("unknown relation id {other}"),
    }
}

/// Highest-weight structure over one weight sector: positive modes kill the
/// vacuum, the raising zero modes kill it, and the diagonal data matches the
/// weight labels.
pub fn run_highest_weight<C: ScalarCtx>(
    model: &Model<C>,
    blk: &BlockSpec,
) -> Result<CheckReport, EngineError> {
    let ctx = &model.engine.ctx;
    let rank = model.engine.st.alg.rank();
    let charge = Charge::weight(&model.engine.st, &blk.weights);
    let vac = FockVector::unit(model.engine.vacuum(&charge));
    let mut sc = Scan::new();
    'scan: for i in 1..=rank {
        for m in 1..=blk.window {
            for (tag, out) in [
                ("raising", model.apply_x(1, i, m, &vac)?),
                ("lowering", model.apply_x(-1, i, m, &vac)?),
                ("cartan", model.apply_h_mode(i, m, &vac)),
            ] {
                if !sc.note(&out, || format!("{tag} mode {m} root {i} leaves the vacuum")) {
                    break 'scan;
                }
            }
        }
        let z = model.apply_x(1, i, 0, &vac)?;
        if !sc.note(&z, || format!("raising zero mode root {i} leaves the vacuum")) {
            break 'scan;
        }
        // diagonal eigenvalues
        let l = blk.weights[i - 1];
        let mut d = model.apply_h_diag(i, &vac);
        d.sub_assign(&vac.scaled(&ctx.from_rat(&rat(l, 1))));
        if !sc.note(&d, || format!("diagonal value at root {i} differs from {l}")) {
            break 'scan;
        }
        for branch in [1i64, -1] {
            let mut p0 = model.apply_psi(branch, i, 0, &vac)?;
            p0.sub_assign(&vac.scaled(&ctx.qpow_i(branch * l)));
            if !sc.note(&p0, || {
                format!("Cartan current eigenvalue at root {i}, branch {branch}")
            }) {
                break 'scan;
            }
        }
    }
    Ok(sc.report("highest_weight"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::currents::Gauge;
    use crate::heisenberg::{CocycleOrder, Structure};
    use crate::scalars::{AlgebraParams, ExactCtx};
    use crate::vertex::Engine;

    fn model_mn(m: usize, n: usize) -> Model<ExactCtx> {
        let alg = AlgebraParams::new(m, n, rat(1, 1));
        let st = Structure::new(alg);
        let ctx = ExactCtx::new(rat(1, 2), 4).unwrap();
        let eng = Engine::new(ctx, st, CocycleOrder::DescendingLex, 16);
        Model::build(eng, Gauge::ones(m + n - 1)).unwrap()
    }

    fn model_21() -> Model<ExactCtx> {
        model_mn(2, 1)
    }

    fn blk(degree: i64, window: i64) -> BlockSpec {
        BlockSpec { degree, window, weights: vec![0, 0] }
    }

    #[test]
    fn cartan_cartan_small_block() {
        let m = model_21();
        let rep = run_relation(&m, "HH", &blk(1, 1)).unwrap();
        assert!(rep.pass, "witness: {:?}", rep.witness);
        assert!(rep.cases > 0);
    }

    #[test]
    fn raising_lowering_bracket_gives_cartan_currents() {
        let m = model_21();
        let rep = run_relation(&m, "X_plus_minus_delta", &blk(1, 1)).unwrap();
        assert!(rep.pass, "witness: {:?}", rep.witness);
    }

    #[test]
    fn cartan_raising_bracket_small_block() {
        let m = model_21();
        let rep = run_relation(&m, "H_X", &blk(1, 1)).unwrap();
        assert!(rep.pass, "witness: {:?}", rep.witness);
    }

    #[test]
    fn fermionic_square_vanishes() {
        let m = model_21();
        let rep = run_relation(&m, "XX_commuting", &blk(1, 1)).unwrap();
        assert!(rep.pass, "witness: {:?}", rep.witness);
    }

    #[test]
    fn quadratic_exchange_small_block() {
        let m = model_21();
        let rep = run_relation(&m, "XX_quadratic", &blk(1, 0)).unwrap();
        assert!(rep.pass, "witness: {:?}", rep.witness);
    }

    #[test]
    fn cubic_serre_spot_check() {
        let m = model_21();
        let vac = FockVector::unit(m.engine.vacuum(&Charge::weight(&m.engine.st, &[0, 0])));
        for pm in [1i64, -1] {
            let d = serre_cubic_defect(&m, pm, 1, 2, 0, 0, 0, &vac).unwrap();
            assert!(d.is_zero(), "pm={pm}");
        }
    }

    #[test]
    fn cartan_current_matches_mode_reconstruction() {
        let m = model_21();
        let rep = run_relation(&m, "Psi_consistency", &blk(1, 2)).unwrap();
        assert!(rep.pass, "witness: {:?}", rep.witness);
    }

    #[test]
    fn quartic_skips_when_inapplicable() {
        let m = model_21();
        let rep = run_relation(&m, "Serre_quartic", &blk(1, 1)).unwrap();
        assert!(rep.skipped.is_some());
    }

    #[test]
    fn highest_weight_structure() {
        let m = model_21();
        for l in [[0i64, 0], [1, 0], [0, 1]] {
            let rep = run_highest_weight(
                &m,
                &BlockSpec { degree: 1, window: 1, weights: l.to_vec() },
            )
            .unwrap();
            assert!(rep.pass, "weights {l:?} witness {:?}", rep.witness);
        }
    }

    #[test]
    fn relations_hold_with_fermionic_first_root() {
        let m = model_mn(1, 2);
        let blk = BlockSpec { degree: 1, window: 1, weights: vec![0, 0] };
        for id in ["HH", "H_X", "XX_quadratic", "XX_commuting", "X_plus_minus_delta"] {
            let rep = run_relation(&m, id, &blk).unwrap();
            assert!(rep.pass, "{id} witness: {:?}", rep.witness);
            assert!(rep.skipped.is_none(), "{id} skipped unexpectedly");
        }
    }

    #[test]
    fn relations_hold_at_rank_three() {
        let m = model_mn(2, 2);
        let blk = BlockSpec { degree: 1, window: 1, weights: vec![0, 0, 0] };
        for id in ["X_plus_minus_delta", "XX_quadratic"] {
            let rep = run_relation(&m, id, &blk).unwrap();
            assert!(rep.pass, "{id} witness: {:?}", rep.witness);
            assert!(rep.skipped.is_none(), "{id} skipped unexpectedly");
        }
    }

    #[test]
    fn relations_hold_with_multiple_fermionic_colors() {
        let m = model_mn(1, 3);
        let blk = BlockSpec { degree: 1, window: 1, weights: vec![0, 0, 0] };
        for id in ["X_plus_minus_delta", "XX_quadratic", "XX_commuting"] {
            let rep = run_relation(&m, id, &blk).unwrap();
            assert!(rep.pass, "{id} witness: {:?}", rep.witness);
            assert!(rep.skipped.is_none(), "{id} skipped unexpectedly");
        }
    }

    #[test]
    fn relations_hold_with_multiple_bosonic_colors() {
        let m = model_mn(3, 1);
        let blk = BlockSpec { degree: 1, window: 1, weights: vec![0, 0, 0] };
        for id in ["X_plus_minus_delta", "XX_quadratic", "XX_commuting"] {
            let rep = run_relation(&m, id, &blk).unwrap();
            assert!(rep.pass, "{id} witness: {:?}", rep.witness);
            assert!(rep.skipped.is_none(), "{id} skipped unexpectedly");
        }
    }

    #[test]
    fn partitions_enumerate_correctly() {
        assert_eq!(partitions(0).len(), 1);
        assert_eq!(partitions(1).len(), 1);
        assert_eq!(partitions(2).len(), 2);
        assert_eq!(partitions(3).len(), 3);
        assert_eq!(partitions(4).len(), 5);
        assert_eq!(partitions(5).len(), 7);
    }
}

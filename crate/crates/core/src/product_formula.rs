//! Lie-Trotter and Suzuki product formulas over a [`HamiltonianSplit`].
//!
//! A formula is a flat list of stages `(part, coefficient)` read left to right as
//! an operator product `exp(-i c_1 dt H_{l_1}) exp(-i c_2 dt H_{l_2}) ...`. Stages
//! act on a state right to left. Each part is exponentiated exactly: terms that
//! commute with the rest of the part become Pauli rotations, and clusters of
//! non-commuting terms on a few qubits become dense block unitaries.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evolve::ExactEvolver;
use crate::linalg;
use crate::models::HamiltonianSplit;
use crate::pauli::{PauliString, PauliSum};
use crate::state::StateVector;

/// Widest non-commuting cluster exponentiated densely.
pub const BLOCK_CAP: usize = 6;

#[derive(Clone, Debug)]
enum GroupOp {
    Rotation { x: usize, z: usize, ny: u8, coef: f64 },
    Block { qubits: Vec<usize>, vals: Vec<f64>, vecs: DMatrix<C64> },
}

/// Exact exponential of one part, as mutually commuting pieces.
#[derive(Clone, Debug)]
pub struct CompiledPart {
    ops: Vec<GroupOp>,
}

impl CompiledPart {
    pub fn new(part: &PauliSum) -> Result<Self> {
        let terms: Vec<(&PauliString, f64)> = part.terms().map(|(p, c)| (p, c.re)).collect();
        let n = terms.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for i in 0..n {
            for j in i + 1..n {
                if !terms[i].0.commutes_with(terms[j].0) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            comps.entry(r).or_default().push(i);
        }
        let mut ops = Vec::new();
        for idx in comps.values() {
            if idx.len() == 1 {
                let (p, c) = terms[idx[0]];
                if p.is_identity() {
                    // global phase
                    continue;
                }
                let (x, z, ny) = p.masks();
                ops.push(GroupOp::Rotation { x, z, ny, coef: c });
                continue;
            }
            let mut block = PauliSum::zero(part.n_qubits());
            for &i in idx {
                block.add_term(C64::new(terms[i].1, 0.0), terms[i].0.clone());
            }
            let qubits: Vec<usize> = block.support().into_iter().collect();
            if qubits.len() > BLOCK_CAP {
                return Err(Error::ContractViolation(format!(
                    "non-commuting cluster spans {} qubits; use a finer split",
                    qubits.len()
                )));
            }
            let (vals, vecs) = linalg::hermitian_eig(&block.to_dense_on(&qubits)?);
            ops.push(GroupOp::Block { qubits, vals, vecs });
        }
        Ok(CompiledPart { ops })
    }

    /// `exp(-i theta H_part)`.
    pub fn apply(&self, psi: &mut StateVector, theta: f64) {
        for op in &self.ops {
            match op {
                GroupOp::Rotation { x, z, ny, coef } => {
                    psi.apply_pauli_rotation(*x, *z, *ny, theta * coef)
                }
                GroupOp::Block { qubits, vals, vecs } => {
                    let u = linalg::unitary_from_eig(vals, vecs, theta);
                    psi.apply_gate(qubits, &u).expect("block gate fits register");
                }
            }
        }
    }
}

/// `exp(-i theta H_part)|psi>` with the part compiled on the fly.
pub fn apply_group_exponential(part: &PauliSum, psi: &mut StateVector, theta: f64) -> Result<()> {
    CompiledPart::new(part)?.apply(psi, theta);
    Ok(())
}

/// Suzuki recursion parameter `p_k = 1 / (4 - 4^{1/(2k-1)})`.
pub fn suzuki_p(k: usize) -> f64 {
    1.0 / (4.0 - 4f64.powf(1.0 / (2 * k - 1) as f64))
}

fn merge(stages: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(stages.len());
    for (l, c) in stages {
        match out.last_mut() {
            Some(last) if last.0 == l => last.1 += c,
            _ => out.push((l, c)),
        }
    }
    out
}

/// Stage list of the order-`order` formula for `n_parts` parts.
pub fn stage_list(n_parts: usize, order: usize) -> Result<Vec<(usize, f64)>> {
    if n_parts == 0 {
        return Err(Error::InvalidArgument("no parts".into()));
    }
    match order {
        1 => Ok((0..n_parts).map(|l| (l, 1.0)).collect()),
        o if o >= 2 && o % 2 == 0 => {
            if o == 2 {
                let fwd = (0..n_parts).map(|l| (l, 0.5));
                let bwd = (0..n_parts).rev().map(|l| (l, 0.5));
                return Ok(merge(fwd.chain(bwd).collect()));
            }
            let inner = stage_list(n_parts, o - 2)?;
            let p = suzuki_p(o / 2);
            let scaled =
                |s: f64| inner.iter().map(move |&(l, c)| (l, c * s)).collect::<Vec<_>>();
            let mut all = Vec::new();
            for s in [p, p, 1.0 - 4.0 * p, p, p] {
                all.extend(scaled(s));
            }
            Ok(merge(all))
        }
        _ => Err(Error::InvalidArgument(format!(
            "order must be 1 or even, got {order}"
        ))),
    }
}

pub struct FormulaSpec {
    pub order: usize,
    pub n_qubits: usize,
    /// Operator order, left to right.
    pub stages: Vec<(usize, f64)>,
    parts: Vec<CompiledPart>,
}

pub fn build_formula(split: &HamiltonianSplit, order: usize) -> Result<FormulaSpec> {
    let stages = stage_list(split.parts.len(), order)?;
    let parts = split
        .parts
        .iter()
        .map(CompiledPart::new)
        .collect::<Result<Vec<_>>>()?;
    Ok(FormulaSpec {
        order,
        n_qubits: split.n_qubits,
        stages,
        parts,
    })
}

impl FormulaSpec {
    /// Number of second-order factors in the Suzuki recursion.
    pub fn n_second_order_factors(&self) -> usize {
        if self.order < 2 {
            0
        } else {
            5usize.pow((self.order / 2 - 1) as u32)
        }
    }

    fn run(&self, psi: &mut StateVector, seq: impl Iterator<Item = (usize, f64)>) {
        let mut pending: Option<(usize, f64)> = None;
        for (l, a) in seq {
            match pending {
                Some((pl, pa)) if pl == l => pending = Some((l, pa + a)),
                Some((pl, pa)) => {
                    self.parts[pl].apply(psi, pa);
                    pending = Some((l, a));
                }
                None => pending = Some((l, a)),
            }
        }
        if let Some((l, a)) = pending {
            self.parts[l].apply(psi, a);
        }
    }

    /// One step `U_p(dt)|psi>`.
    pub fn apply_step(&self, psi: &mut StateVector, dt: f64) {
        self.apply_steps(psi, dt, 1);
    }

    /// `U_p(dt)^r |psi>`, fusing equal neighbouring stages across step boundaries.
    pub fn apply_steps(&self, psi: &mut StateVector, dt: f64, r: usize) {
        let seq = (0..r).flat_map(|_| self.stages.iter().rev().map(move |&(l, c)| (l, c * dt)));
        self.run(psi, seq);
    }

    /// `(U_p(dt)^dagger)^r |psi>`.
    pub fn apply_steps_adjoint(&self, psi: &mut StateVector, dt: f64, r: usize) {
        let seq = (0..r).flat_map(|_| self.stages.iter().map(move |&(l, c)| (l, -c * dt)));
        self.run(psi, seq);
    }

    fn apply_raw(&self, v: &[C64], dt: f64, r: usize, adjoint: bool) -> Vec<C64> {
        // the norm of v is arbitrary here, so bypass the normalization check
        let n = linalg::norm(v);
        if n == 0.0 {
            return v.to_vec();
        }
        let unit: Vec<C64> = v.iter().map(|x| x / n).collect();
        let mut psi = StateVector::from_amplitudes(self.n_qubits, unit).expect("unit vector");
        if adjoint {
            self.apply_steps_adjoint(&mut psi, dt, r);
        } else {
            self.apply_steps(&mut psi, dt, r);
        }
        psi.into_amplitudes().into_iter().map(|x| x * n).collect()
    }

    /// Dense matrix of one step.
    pub fn step_unitary(&self, dt: f64) -> DMatrix<C64> {
        let dim = 1usize << self.n_qubits;
        let mut u = DMatrix::<C64>::zeros(dim, dim);
        for k in 0..dim {
            let mut psi = StateVector::basis(self.n_qubits, k).expect("basis state");
            self.apply_step(&mut psi, dt);
            u.column_mut(k).copy_from_slice(psi.amplitudes());
        }
        u
    }
}

/// `|| (U_0(dt) - U_p(dt)) |psi> ||`.
pub fn empirical_step_error(
    spec: &FormulaSpec,
    evolver: &ExactEvolver,
    psi: &StateVector,
    dt: f64,
) -> Result<f64> {
    empirical_error(spec, evolver, psi, dt, 1)
}

/// `|| (U_0(t) - U_p(t/r)^r) |psi> ||`.
pub fn empirical_error(
    spec: &FormulaSpec,
    evolver: &ExactEvolver,
    psi: &StateVector,
    t: f64,
    r: usize,
) -> Result<f64> {
    let exact = evolver.evolve(psi, t)?;
    let mut approx = psi.clone();
    spec.apply_steps(&mut approx, t / r as f64, r);
    Ok(exact.distance(&approx))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    Spectral,
    /// Normalized so that the identity has norm 1.
    Frobenius,
}

#[derive(Clone, Debug)]
pub struct NormOptions {
    /// Registers up to this size build `U_p^r` densely by repeated squaring.
    pub dense_max_qubits: usize,
    /// Frobenius norms are summed over all basis columns up to this size.
    pub frobenius_exact_max_qubits: usize,
    /// Haar vectors used by the stochastic Frobenius estimator.
    pub stochastic_samples: usize,
    pub seed: u64,
    pub lanczos_tol: f64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            dense_max_qubits: 10,
            frobenius_exact_max_qubits: 10,
            stochastic_samples: 8,
            seed: 0,
            lanczos_tol: 1e-10,
        }
    }
}

fn dense_power(m: &DMatrix<C64>, mut r: usize) -> DMatrix<C64> {
    let dim = m.nrows();
    let mut result: Option<DMatrix<C64>> = None;
    let mut base = m.clone();
    while r > 0 {
        if r & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(acc) => linalg::matmul(&acc, &base),
            });
        }
        r >>= 1;
        if r > 0 {
            base = linalg::matmul(&base, &base);
        }
    }
    result.unwrap_or_else(|| DMatrix::identity(dim, dim))
}

/// Error operator norm `|| U_0(t) - U_p(t/r)^r ||`.
pub fn operator_norm_error(
    spec: &FormulaSpec,
    evolver: &ExactEvolver,
    t: f64,
    r: usize,
    kind: NormKind,
    opts: &NormOptions,
) -> Result<f64> {
    Ok(operator_norm_error_warm(spec, evolver, t, r, kind, opts, None)?.0)
}

/// As [`operator_norm_error`]; for spectral norms also returns the top right
/// singular vector so that a nearby `r` can start from it.
pub fn operator_norm_error_warm(
    spec: &FormulaSpec,
    evolver: &ExactEvolver,
    t: f64,
    r: usize,
    kind: NormKind,
    opts: &NormOptions,
    start: Option<&[C64]>,
) -> Result<(f64, Option<Vec<C64>>)> {
    if r == 0 {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    let n = spec.n_qubits;
    let dim = 1usize << n;
    let dt = t / r as f64;
    if n <= opts.dense_max_qubits {
        let d = evolver.unitary(t) - dense_power(&spec.step_unitary(dt), r);
        return Ok(match kind {
            NormKind::Frobenius => (d.norm() / (dim as f64).sqrt(), None),
            NormKind::Spectral => {
                let mut tmp = vec![C64::default(); dim];
                let (lam, v) = linalg::lanczos_max_eig(
                    dim,
                    |x, out| {
                        let xv = nalgebra::DVectorView::from_slice(x, dim);
                        let y = &d * xv;
                        tmp.copy_from_slice(y.as_slice());
                        let z = d.adjoint() * nalgebra::DVectorView::from_slice(&tmp, dim);
                        out.copy_from_slice(z.as_slice());
                    },
                    start,
                    opts.lanczos_tol,
                    2000,
                );
                (lam.max(0.0).sqrt(), Some(v))
            }
        });
    }
    let apply_d = |x: &[C64]| -> Vec<C64> {
        let a = evolver.evolve_raw(x, t);
        let b = spec.apply_raw(x, dt, r, false);
        a.iter().zip(&b).map(|(p, q)| p - q).collect()
    };
    match kind {
        NormKind::Spectral => {
            let (lam, v) = linalg::lanczos_max_eig(
                dim,
                |x, out| {
                    let y = apply_d(x);
                    let a = evolver.evolve_raw(&y, -t);
                    let b = spec.apply_raw(&y, dt, r, true);
                    for (o, (p, q)) in out.iter_mut().zip(a.iter().zip(&b)) {
                        *o = p - q;
                    }
                },
                start,
                opts.lanczos_tol,
                2000,
            );
            Ok((lam.max(0.0).sqrt(), Some(v)))
        }
        NormKind::Frobenius => {
            if n <= opts.frobenius_exact_max_qubits {
                let mut acc = 0.0;
                let mut e = vec![C64::default(); dim];
                for k in 0..dim {
                    e[k] = C64::new(1.0, 0.0);
                    acc += linalg::norm(&apply_d(&e)).powi(2);
                    e[k] = C64::default();
                }
                Ok(((acc / dim as f64).sqrt(), None))
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                let mut acc = 0.0;
                for _ in 0..opts.stochastic_samples {
                    let psi = StateVector::haar_random(n, &mut rng)?;
                    acc += linalg::norm(&apply_d(psi.amplitudes())).powi(2);
                }
                Ok(((acc / opts.stochastic_samples as f64).sqrt(), None))
            }
        }
    }
}

/// Least `r` in `[r_lo, r_hi]` with `f(r) <= eps`, by bisection.
///
/// `f` must be nonincreasing on the bracket; a three-point probe checks this
/// before bisecting.
pub fn min_steps_search<F>(mut f: F, eps: f64, r_lo: usize, r_hi: usize) -> Result<usize>
where
    F: FnMut(usize) -> Result<f64>,
{
    if r_lo == 0 || r_lo > r_hi {
        return Err(Error::InvalidArgument(format!("bad bracket [{r_lo}, {r_hi}]")));
    }
    let f_hi = f(r_hi)?;
    if f_hi > eps {
        return Err(Error::Unbracketed(r_hi));
    }
    let f_lo = f(r_lo)?;
    if f_lo <= eps {
        return Ok(r_lo);
    }
    let (mut lo, mut hi) = (r_lo, r_hi);
    if hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let f_mid = f(mid)?;
        let slack = 1e-9 * f_lo.abs().max(1e-300);
        if f_mid > f_lo + slack || f_hi > f_mid + slack {
            return Err(Error::NonMonotone(format!(
                "f({lo})={f_lo:e}, f({mid})={f_mid:e}, f({hi})={f_hi:e}"
            )));
        }
        if f_mid <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid)? <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Least `r` with `f(r) <= eps`, bracketing from a power-law extrapolation.
///
/// `decay` is the expected exponent in `f(r) ~ r^-decay`; it only guides the
/// bracket, the result is exact up to the monotonicity of `f`.
pub fn find_min_steps<F>(mut f: F, eps: f64, guess: usize, decay: f64, r_max: usize) -> Result<usize>
where
    F: FnMut(usize) -> Result<f64>,
{
    let mut cache: BTreeMap<usize, f64> = BTreeMap::new();
    let mut eval = |r: usize, f: &mut F| -> Result<f64> {
        if let Some(&v) = cache.get(&r) {
            return Ok(v);
        }
        let v = f(r)?;
        cache.insert(r, v);
        Ok(v)
    };
    let mut r = guess.clamp(1, r_max);
    for _ in 0..3 {
        let e = eval(r, &mut f)?;
        if e <= 0.0 {
            break;
        }
        let next = ((r as f64) * (e / eps).powf(1.0 / decay)).ceil() as usize;
        let next = next.clamp(1, r_max);
        if (next as f64 - r as f64).abs() <= 0.002 * r as f64 {
            r = next;
            break;
        }
        r = next;
    }
    let mut hi = ((r as f64) * 1.005).ceil() as usize;
    hi = hi.clamp(1, r_max);
    while eval(hi, &mut f)? > eps {
        if hi == r_max {
            return Err(Error::Unbracketed(r_max));
        }
        hi = ((hi as f64) * 1.05).ceil().min(r_max as f64) as usize;
    }
    let mut lo = ((r as f64) * 0.995).floor().max(1.0) as usize;
    lo = lo.min(hi);
    while lo > 1 && eval(lo, &mut f)? <= eps {
        lo = ((lo as f64) * 0.95).floor().max(1.0) as usize;
    }
    min_steps_search(|x| eval(x, &mut f), eps, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::EvolverOptions;
    use crate::models::{build_heisenberg, build_qimf, QimfParams};
    use rand::SeedableRng;

    #[test]
    fn pf1_and_pf2_stage_lists() {
        assert_eq!(stage_list(2, 1).unwrap(), vec![(0, 1.0), (1, 1.0)]);
        assert_eq!(stage_list(2, 2).unwrap(), vec![(0, 0.5), (1, 1.0), (0, 0.5)]);
        assert_eq!(
            stage_list(3, 2).unwrap(),
            vec![(0, 0.5), (1, 0.5), (2, 1.0), (1, 0.5), (0, 0.5)]
        );
    }

    #[test]
    fn invalid_orders_rejected() {
        assert!(stage_list(2, 0).is_err());
        assert!(stage_list(2, 3).is_err());
    }

    #[test]
    fn suzuki_parameter() {
        assert!((suzuki_p(2) - 0.4144907717943757).abs() < 1e-12);
    }

    #[test]
    fn higher_order_coefficients_sum_to_one() {
        for order in [2, 4, 6] {
            let st = stage_list(2, order).unwrap();
            for l in 0..2 {
                let s: f64 = st.iter().filter(|x| x.0 == l).map(|x| x.1).sum();
                assert!((s - 1.0).abs() < 1e-12, "order {order} part {l}: {s}");
            }
        }
    }

    #[test]
    fn pf1_operator_order() {
        // U_1 = exp(-i A dt) exp(-i B dt): B acts first
        let split = build_qimf(3, QimfParams::TYPICAL).unwrap();
        let spec = build_formula(&split, 1).unwrap();
        let dt = 0.3;
        let ua = (split.a().to_dense().unwrap() * C64::new(0.0, -dt)).exp();
        let ub = (split.b().to_dense().unwrap() * C64::new(0.0, -dt)).exp();
        let want = &ua * &ub;
        assert!((spec.step_unitary(dt) - want).norm() < 1e-12);
    }

    #[test]
    fn heisenberg_blocks_exact() {
        let fields = [0.3, -0.7, 1.1, 0.2];
        let split = build_heisenberg(4, &fields).unwrap();
        let spec = build_formula(&split, 2).unwrap();
        let dt = 0.21;
        let ua = (split.a().to_dense().unwrap() * C64::new(0.0, -dt / 2.0)).exp();
        let ub = (split.b().to_dense().unwrap() * C64::new(0.0, -dt)).exp();
        let want = &ua * &ub * &ua;
        assert!((spec.step_unitary(dt) - want).norm() < 1e-12);
    }

    #[test]
    fn fused_steps_match_repeated_steps() {
        let split = build_qimf(5, QimfParams::TYPICAL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let psi = StateVector::haar_random(5, &mut rng).unwrap();
        for order in [1, 2, 4] {
            let spec = build_formula(&split, order).unwrap();
            let mut a = psi.clone();
            spec.apply_steps(&mut a, 0.05, 7);
            let mut b = psi.clone();
            for _ in 0..7 {
                spec.apply_step(&mut b, 0.05);
            }
            assert!(a.distance(&b) < 1e-13);
            spec.apply_steps_adjoint(&mut a, 0.05, 7);
            assert!(a.distance(&psi) < 1e-12);
        }
    }

    #[test]
    fn error_vanishes_for_commuting_parts() {
        let split = build_qimf(4, QimfParams { hx: 0.5, hy: 0.0, j: 1.0 }).unwrap();
        let split = HamiltonianSplit::new(4, vec![split.a().clone()], "a-only").unwrap();
        let spec = build_formula(&split, 1).unwrap();
        let ev = ExactEvolver::new(&split.hamiltonian(), EvolverOptions::default()).unwrap();
        let psi = StateVector::zero(4).unwrap();
        assert!(empirical_step_error(&spec, &ev, &psi, 0.4).unwrap() < 1e-12);
    }

    #[test]
    fn matrix_free_norms_match_dense() {
        let split = build_qimf(6, QimfParams::TYPICAL).unwrap();
        let spec = build_formula(&split, 2).unwrap();
        let ev = ExactEvolver::new(&split.hamiltonian(), EvolverOptions::default()).unwrap();
        let dense = NormOptions::default();
        let free = NormOptions {
            dense_max_qubits: 0,
            ..Default::default()
        };
        for kind in [NormKind::Spectral, NormKind::Frobenius] {
            let a = operator_norm_error(&spec, &ev, 1.0, 5, kind, &dense).unwrap();
            let b = operator_norm_error(&spec, &ev, 1.0, 5, kind, &free).unwrap();
            assert!((a - b).abs() < 1e-8 * a, "{kind:?}: {a} vs {b}");
        }
        let fro = operator_norm_error(&spec, &ev, 1.0, 5, NormKind::Frobenius, &dense).unwrap();
        let spe = operator_norm_error(&spec, &ev, 1.0, 5, NormKind::Spectral, &dense).unwrap();
        assert!(fro <= spe + 1e-12);
    }

    #[test]
    fn bisection_finds_threshold() {
        let r = min_steps_search(|r| Ok(1.0 / (r as f64).powi(2)), 1e-4, 1, 1000).unwrap();
        assert_eq!(r, 100);
        let r = find_min_steps(|r| Ok(3.0 / (r as f64).powi(2)), 1e-4, 10, 2.0, 1 << 20).unwrap();
        assert_eq!(r, 174);
    }

    #[test]
    fn bisection_reports_unbracketed_and_nonmonotone() {
        assert!(matches!(
            min_steps_search(|r| Ok(1.0 / r as f64), 1e-6, 1, 10),
            Err(Error::Unbracketed(10))
        ));
        let bumpy = |r: usize| Ok(if r == 50 { 2.0 } else { 1.0 / r as f64 });
        assert!(matches!(
            min_steps_search(bumpy, 0.011, 1, 100),
            Err(Error::NonMonotone(_))
        ));
    }
}

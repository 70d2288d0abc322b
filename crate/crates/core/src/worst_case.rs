//! Product states that saturate the worst-case `Θ(N dt^{p+1})` Trotter error.

use std::collections::BTreeSet;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::bounds::pf2_combined_leading_error;
use crate::error::{Error, Result};
use crate::evolve::{EvolverOptions, ExactEvolver};
use crate::models::HamiltonianSplit;
use crate::pauli::{Pauli, PauliSum, PauliString};
use crate::product_formula::{build_formula, empirical_step_error};
use crate::state::StateVector;

const PHASES: [C64; 4] = [
    C64::new(1.0, 0.0),
    C64::new(0.0, -1.0),
    C64::new(-1.0, 0.0),
    C64::new(0.0, 1.0),
];

const REAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorstCaseConditions {
    /// `e = phase * Σ a_j P_j - phase * Σ |b_k| Q_k`.
    pub phase: C64,
    pub sum_a: f64,
    pub sum_b: f64,
    pub tolerance: f64,
    pub satisfied: bool,
}

/// Factors a global phase from `{1, -i, -1, i}` so all coefficients are real.
///
/// Of the two admissible signs the one with larger positive mass wins; ties
/// keep the first in the order above.
pub fn factor_phase(e: &PauliSum) -> Result<(C64, Vec<(PauliString, f64)>)> {
    let scale = e.terms().fold(0.0f64, |a, (_, c)| a.max(c.norm())).max(1.0);
    let mut best: Option<(C64, f64, Vec<(PauliString, f64)>)> = None;
    for phase in PHASES {
        let real: Option<Vec<(PauliString, f64)>> = e
            .terms()
            .map(|(p, c)| {
                let a = c / phase;
                (a.im.abs() <= REAL_TOL * scale).then(|| (p.clone(), a.re))
            })
            .collect();
        let Some(real) = real else { continue };
        let pos: f64 = real.iter().filter(|(p, a)| *a > 0.0 && !p.is_identity()).map(|(_, a)| a).sum();
        if best.as_ref().is_none_or(|(_, m, _)| pos > *m + REAL_TOL * scale) {
            best = Some((phase, pos, real));
        }
    }
    best.map(|(ph, _, r)| (ph, r))
        .ok_or_else(|| Error::InvalidArgument("coefficients share no global phase from {1, -i, -1, i}".into()))
}

/// Positive and negative coefficient mass after phase factoring.
///
/// `satisfied` is `sum_b <= tolerance * sum_a`, a finite-size stand-in for
/// `Σ a_j = Θ(N)` and `Σ |b_k| = o(N)`.
pub fn check_worst_case_conditions(e: &PauliSum, tolerance: f64) -> Result<WorstCaseConditions> {
    let (phase, real) = factor_phase(e)?;
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    for (p, a) in &real {
        if p.is_identity() {
            continue;
        }
        if *a > 0.0 {
            sum_a += a;
        } else {
            sum_b += a.abs();
        }
    }
    Ok(WorstCaseConditions {
        phase,
        sum_a,
        sum_b,
        tolerance,
        satisfied: sum_a > 0.0 && sum_b <= tolerance * sum_a,
    })
}

/// Tensor product of single-qubit `+1` eigenstates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizerProductState {
    pub n_qubits: usize,
    pub stabilizers: Vec<Pauli>,
    pub stab_set: Vec<PauliString>,
    pub stab_coefficients: Vec<f64>,
    pub phase: C64,
}

impl StabilizerProductState {
    pub fn to_state(&self) -> Result<StateVector> {
        let letters: Vec<(Pauli, bool)> = self.stabilizers.iter().map(|&p| (p, true)).collect();
        StateVector::product_eigenstates(&letters)
    }

    /// `<psi|P|psi>`: 1 when every letter of `P` matches the local stabilizer, else 0.
    pub fn pauli_expectation(&self, p: &PauliString) -> f64 {
        let hit = p.ops().iter().all(|&(q, l)| self.stabilizers.get(q) == Some(&l));
        if hit { 1.0 } else { 0.0 }
    }

    pub fn expectation(&self, op: &PauliSum) -> C64 {
        op.terms().map(|(p, c)| c * self.pauli_expectation(p)).sum()
    }

    /// `||op |psi>||` evaluated symbolically.
    ///
    /// Each string maps the product state to a phase times the product state
    /// with the anticommuting qubits flipped to their `-1` eigenstates, so the
    /// norm is a sum over distinct flip patterns.
    pub fn apply_norm(&self, op: &PauliSum) -> f64 {
        let i = C64::new(0.0, 1.0);
        let one = C64::new(1.0, 0.0);
        let mut amps: std::collections::HashMap<Vec<usize>, C64> = std::collections::HashMap::new();
        for (p, c) in op.terms() {
            let mut phase = *c;
            let mut flips = Vec::new();
            for &(q, l) in p.ops() {
                let s = self.stabilizers[q];
                if l == s {
                    continue;
                }
                phase *= match (s, l) {
                    (Pauli::Z, Pauli::Y) | (Pauli::Y, Pauli::X) => i,
                    (Pauli::X, Pauli::Y) => -i,
                    _ => one,
                };
                flips.push(q);
            }
            *amps.entry(flips).or_default() += phase;
        }
        amps.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn label(&self) -> String {
        self.stabilizers
            .iter()
            .map(|p| match p {
                Pauli::X => '+',
                Pauli::Y => 'i',
                Pauli::Z => '0',
            })
            .collect()
    }
}

/// Greedy maximal disjoint-support selection over positive-coefficient strings.
///
/// Candidates are ranked by coefficient per qubit `a_j / w(P_j)`, then by
/// leftmost site, then lexicographically. Unused qubits get `Z`.
pub fn build_worst_case_state(e: &PauliSum) -> Result<StabilizerProductState> {
    let n = e.n_qubits();
    let (phase, real) = factor_phase(e)?;
    let mut cands: Vec<(PauliString, f64)> = real
        .into_iter()
        .filter(|(p, a)| *a > 0.0 && !p.is_identity())
        .collect();
    if cands.is_empty() {
        return Err(Error::InvalidArgument("no positive-coefficient strings".into()));
    }
    cands.sort_by(|(p, a), (q, b)| {
        let da = a / p.weight() as f64;
        let db = b / q.weight() as f64;
        db.partial_cmp(&da)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(p.min_site().cmp(&q.min_site()))
            .then(p.cmp(q))
    });
    let mut used = BTreeSet::new();
    let mut stabilizers = vec![Pauli::Z; n];
    let mut stab_set = Vec::new();
    let mut stab_coefficients = Vec::new();
    for (p, a) in cands {
        if p.support().any(|q| used.contains(&q)) {
            continue;
        }
        for &(q, l) in p.ops() {
            used.insert(q);
            stabilizers[q] = l;
        }
        stab_set.push(p);
        stab_coefficients.push(a);
    }
    Ok(StabilizerProductState {
        n_qubits: n,
        stabilizers,
        stab_set,
        stab_coefficients,
        phase,
    })
}

/// Leading error operator whose norm on a state sets the per-step error.
///
/// PF1: `[A,B]` (sum over part pairs), PF2: `E_2/4 - E_1/2`.
pub fn leading_error_operator(split: &HamiltonianSplit, order: usize) -> Result<PauliSum> {
    match order {
        1 => {
            let parts = &split.parts;
            let mut e = PauliSum::zero(split.n_qubits);
            for l in 0..parts.len() {
                for m in l + 1..parts.len() {
                    e = e.add(&parts[l].commutator(&parts[m]));
                }
            }
            Ok(e)
        }
        2 => pf2_combined_leading_error(split),
        _ => Err(Error::InvalidArgument(format!("no leading error operator for order {order}"))),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(N, value)`.
    pub points: Vec<(usize, f64)>,
}

/// Least-squares fit of `ln y = slope ln x + intercept`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("log-log fit needs at least two points".into()));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::InvalidArgument("log-log fit needs positive data".into()));
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x.ln(), b + y.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (mut num, mut den) = (0.0, 0.0);
    for &(x, y) in points {
        num += (x.ln() - mx) * (y.ln() - my);
        den += (x.ln() - mx).powi(2);
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("log-log fit needs distinct x values".into()));
    }
    let slope = num / den;
    Ok((slope, my - slope * mx))
}

/// Fits the growth of the per-step error with system size.
///
/// With `dt = None` the value is `||E |psi_N>||` for the leading error
/// operator; otherwise it is the empirical single-step error at `dt`.
pub fn verify_worst_case_scaling<S, P>(
    mut state_builder: S,
    mut split_builder: P,
    order: usize,
    n_range: &[usize],
    dt: Option<f64>,
) -> Result<ScalingFit>
where
    S: FnMut(usize, &HamiltonianSplit) -> Result<StateVector>,
    P: FnMut(usize) -> Result<HamiltonianSplit>,
{
    if n_range.len() < 2 {
        return Err(Error::InvalidArgument("scaling fit needs at least two sizes".into()));
    }
    let mut points = Vec::with_capacity(n_range.len());
    for &n in n_range {
        let split = split_builder(n)?;
        let psi = state_builder(n, &split)?;
        let v = match dt {
            None => {
                let e = leading_error_operator(&split, order)?;
                crate::linalg::norm(&psi.apply_operator(&e.compile()))
            }
            Some(dt) => {
                let spec = build_formula(&split, order)?;
                let ev = ExactEvolver::new(&split.hamiltonian(), EvolverOptions::default())?;
                empirical_step_error(&spec, &ev, &psi, dt)?
            }
        };
        points.push((n, v));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, v)| (n as f64, v)).collect();
    let (slope, intercept) = loglog_fit(&xy)?;
    Ok(ScalingFit {
        slope,
        intercept,
        points,
    })
}

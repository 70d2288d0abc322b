//! State-dependent and state-independent Trotter error bounds.
//!
//! The leading error of an order-`p` formula is `dt^{p+1} Σ_f s_f E_f` with
//! each `E_f = Σ_j E_{f,j}` a nested commutator split into local pieces. Its
//! action on a state is bounded through
//!
//! `<psi|E^† E|psi> <= ||E||_F^2 + Σ_{j,j'} ||E_j^† E_j'|| tr|rho_{jj'} - I/d|`,
//!
//! so the state enters only through reduced density matrices on the joint
//! supports of pairs of local terms.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::entanglement::{
    dist_to_maximally_mixed, pinsker_distance_bound, reduced_density_matrix, von_neumann_entropy,
};
use crate::error::{Error, Result};
use crate::evolve::ExactEvolver;
use crate::models::{HamiltonianSplit, QimfParams};
use crate::pauli::{PauliSum, DEFAULT_DENSE_CAP};
use crate::state::StateVector;

/// One nested-commutator family `E = Σ_j E_j` with its prefactor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorFamily {
    pub label: String,
    /// Prefactor `s` in `s dt^{p+1} ||E psi||`.
    pub scale: f64,
    pub operator: PauliSum,
    /// `(leftmost site, E_j)`.
    pub local: Vec<(usize, PauliSum)>,
    pub supports: Vec<Vec<usize>>,
    /// `||E_j||`.
    pub local_norms: Vec<f64>,
    /// `||E_j^† E_j'||`.
    pub pair_norms: Vec<Vec<f64>>,
}

impl ErrorFamily {
    pub fn new(label: impl Into<String>, scale: f64, operator: PauliSum) -> Result<Self> {
        let local = operator.group_by_leftmost();
        let supports: Vec<Vec<usize>> = local
            .iter()
            .map(|(_, e)| e.support().into_iter().collect())
            .collect();
        let local_norms = local
            .iter()
            .map(|(_, e)| e.spectral_norm_dense(DEFAULT_DENSE_CAP))
            .collect::<Result<Vec<_>>>()?;
        let m = local.len();
        let mut pair_norms = vec![vec![0.0; m]; m];
        for j in 0..m {
            for k in j..m {
                let disjoint = supports[j].iter().all(|q| !supports[k].contains(q));
                let v = if disjoint {
                    local_norms[j] * local_norms[k]
                } else {
                    let prod = local[j].1.dagger().mul(&local[k].1);
                    prod.spectral_norm_dense(DEFAULT_DENSE_CAP)?
                };
                pair_norms[j][k] = v;
                pair_norms[k][j] = v;
            }
        }
        Ok(ErrorFamily {
            label: label.into(),
            scale,
            operator,
            local,
            supports,
            local_norms,
            pair_norms,
        })
    }

    pub fn frobenius(&self) -> f64 {
        self.operator.frobenius_norm()
    }

    pub fn one_norm(&self) -> f64 {
        self.operator.one_norm()
    }

    pub fn max_local_weight(&self) -> usize {
        self.local.iter().map(|(_, e)| e.support().len()).max().unwrap_or(0)
    }

    fn joint(&self, j: usize, k: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.supports[j].iter().chain(&self.supports[k]).copied().collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// `Σ_{j,j'} ||E_j^† E_j'|| tr|rho_{jj'} - I/d|`.
    pub fn delta_distance(&self, m: &mut Marginals) -> Result<f64> {
        let n = self.local.len();
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                let w = self.pair_norms[j][k];
                if w == 0.0 {
                    continue;
                }
                acc += w * m.get(&self.joint(j, k))?.dist;
            }
        }
        Ok(acc)
    }

    /// As [`ErrorFamily::delta_distance`] with each trace distance replaced by its entropy bound.
    pub fn delta_entropy(&self, m: &mut Marginals) -> Result<f64> {
        let n = self.local.len();
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                let w = self.pair_norms[j][k];
                if w == 0.0 {
                    continue;
                }
                let s = self.joint(j, k);
                let info = m.get(&s)?;
                acc += w * pinsker_distance_bound(s.len(), info.entropy);
            }
        }
        Ok(acc)
    }

    /// Entropy form where pairs farther apart than `2 depth` use single-term entropies.
    pub fn delta_light_cone(&self, m: &mut Marginals, depth: usize) -> Result<f64> {
        let n = self.local.len();
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                let w = self.pair_norms[j][k];
                if w == 0.0 {
                    continue;
                }
                let d = support_distance(&self.supports[j], &self.supports[k]);
                if d <= 2 * depth {
                    let s = self.joint(j, k);
                    let info = m.get(&s)?;
                    acc += w * pinsker_distance_bound(s.len(), info.entropy);
                } else {
                    let sj = m.get(&self.supports[j])?.entropy;
                    let sk = m.get(&self.supports[k])?.entropy;
                    let missing = (self.supports[j].len() + self.supports[k].len()) as f64 - sj - sk;
                    acc += w * (2.0 * std::f64::consts::LN_2 * missing.max(0.0)).sqrt();
                }
            }
        }
        Ok(acc)
    }

    /// Exact `||E |psi>||`.
    pub fn apply_norm(&self, psi: &StateVector) -> f64 {
        crate::linalg::norm(&psi.apply_operator(&self.operator.compile()))
    }
}

/// Minimum site distance between two supports; 0 when they overlap.
pub fn support_distance(a: &[usize], b: &[usize]) -> usize {
    a.iter()
        .flat_map(|&x| b.iter().map(move |&y| x.abs_diff(y)))
        .min()
        .unwrap_or(usize::MAX)
}

#[derive(Clone, Copy, Debug)]
pub struct MarginalInfo {
    pub dist: f64,
    pub entropy: f64,
}

/// Memoized marginal statistics of one state.
pub struct Marginals<'a> {
    psi: &'a StateVector,
    cache: HashMap<Vec<usize>, MarginalInfo>,
}

impl<'a> Marginals<'a> {
    pub fn new(psi: &'a StateVector) -> Self {
        Marginals {
            psi,
            cache: HashMap::new(),
        }
    }

    pub fn get(&mut self, support: &[usize]) -> Result<MarginalInfo> {
        if let Some(v) = self.cache.get(support) {
            return Ok(*v);
        }
        let rho = reduced_density_matrix(self.psi, support)?;
        let info = MarginalInfo {
            dist: dist_to_maximally_mixed(&rho),
            entropy: von_neumann_entropy(&rho),
        };
        self.cache.insert(support.to_vec(), info);
        Ok(info)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorTermSet {
    pub order: usize,
    pub families: Vec<ErrorFamily>,
}

/// Leading-order error families of the order-`order` formula on `split`.
///
/// PF1 gives `E = Σ_{l<m} [H_l, H_m]` with prefactor 1/2. PF2 (two parts only)
/// gives `E_1 = [B,[B,A]]` with 1/12 and `E_2 = [A,[A,B]]` with 1/24.
pub fn leading_error_terms(split: &HamiltonianSplit, order: usize) -> Result<ErrorTermSet> {
    let parts = &split.parts;
    match order {
        1 => {
            let mut e = PauliSum::zero(split.n_qubits);
            for l in 0..parts.len() {
                for m in l + 1..parts.len() {
                    e = e.add(&parts[l].commutator(&parts[m]));
                }
            }
            Ok(ErrorTermSet {
                order,
                families: vec![ErrorFamily::new("[A,B]", 0.5, e)?],
            })
        }
        2 => {
            if parts.len() != 2 {
                return Err(Error::InvalidArgument(
                    "second-order leading terms need a two-part split".into(),
                ));
            }
            let (a, b) = (&parts[0], &parts[1]);
            let e1 = b.commutator(&b.commutator(a));
            let e2 = a.commutator(&a.commutator(b));
            Ok(ErrorTermSet {
                order,
                families: vec![
                    ErrorFamily::new("[B,[B,A]]", 1.0 / 12.0, e1)?,
                    ErrorFamily::new("[A,[A,B]]", 1.0 / 24.0, e2)?,
                ],
            })
        }
        _ => Err(Error::InvalidArgument(format!(
            "leading error terms available for orders 1 and 2, got {order}"
        ))),
    }
}

/// Second-order leading error with phases combined: `E_2/4 - E_1/2`.
///
/// The step error is `dt^3/6 * ||(E_2/4 - E_1/2)|psi>||` to leading order.
pub fn pf2_combined_leading_error(split: &HamiltonianSplit) -> Result<PauliSum> {
    if split.parts.len() != 2 {
        return Err(Error::InvalidArgument(
            "second-order leading terms need a two-part split".into(),
        ));
    }
    let (a, b) = (split.a(), split.b());
    let e1 = b.commutator(&b.commutator(a));
    let e2 = a.commutator(&a.commutator(b));
    Ok(e2.scale(C64::new(0.25, 0.0)).sub(&e1.scale(C64::new(0.5, 0.0))))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateInfo {
    pub descriptor: String,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: String,
    pub dt: f64,
    pub value: f64,
    pub breakdown: BTreeMap<String, f64>,
    pub state: Option<StateInfo>,
}

impl BoundReport {
    fn new(kind: &str, dt: f64) -> Self {
        BoundReport {
            kind: kind.into(),
            dt,
            value: 0.0,
            breakdown: BTreeMap::new(),
            state: None,
        }
    }

    pub fn with_state(mut self, descriptor: impl Into<String>, time: f64) -> Self {
        self.state = Some(StateInfo {
            descriptor: descriptor.into(),
            time,
        });
        self
    }
}

fn marginal_report<F>(kind: &str, terms: &ErrorTermSet, psi: &StateVector, dt: f64, mut delta: F) -> Result<BoundReport>
where
    F: FnMut(&ErrorFamily, &mut Marginals) -> Result<f64>,
{
    let mut m = Marginals::new(psi);
    let mut rep = BoundReport::new(kind, dt);
    let pow = dt.powi(terms.order as i32 + 1);
    for f in &terms.families {
        let d = delta(f, &mut m)?;
        let fro = f.frobenius();
        let lead = f.scale * pow * (d.sqrt() + fro);
        rep.breakdown.insert(format!("{}:delta", f.label), d);
        rep.breakdown.insert(format!("{}:frobenius", f.label), fro);
        rep.breakdown.insert(format!("{}:state_term", f.label), f.scale * pow * d.sqrt());
        rep.breakdown.insert(format!("{}:frobenius_term", f.label), f.scale * pow * fro);
        rep.value += lead;
    }
    Ok(rep)
}

/// `Σ_f s_f dt^{p+1} (sqrt(Δ_f) + ||E_f||_F)` with trace distances in `Δ_f`.
pub fn distance_based_bound(terms: &ErrorTermSet, psi: &StateVector, dt: f64) -> Result<BoundReport> {
    marginal_report("distance_based", terms, psi, dt, |f, m| f.delta_distance(m))
}

/// As [`distance_based_bound`] with entropy deficits `sqrt(2 ln2 (log2 d - S))`.
pub fn entanglement_based_bound(terms: &ErrorTermSet, psi: &StateVector, dt: f64) -> Result<BoundReport> {
    marginal_report("entanglement_based", terms, psi, dt, |f, m| f.delta_entropy(m))
}

/// Entanglement form for states prepared by a depth-`depth` local circuit.
pub fn light_cone_bound(terms: &ErrorTermSet, psi: &StateVector, dt: f64, depth: usize) -> Result<BoundReport> {
    let mut rep = marginal_report("light_cone", terms, psi, dt, |f, m| f.delta_light_cone(m, depth))?;
    rep.breakdown.insert("depth".into(), depth as f64);
    Ok(rep)
}

/// Purity form of the distance and entanglement bounds.
///
/// Each trace distance is replaced by `sqrt(d tr(rho^2) - 1)` and each entropy
/// deficit by the Rényi-2 deficit. `purity` returns `tr(rho_S^2)` for a sorted
/// support, so measured purities can be supplied. The reported value is the
/// distance form; the Rényi form and the `max_j ||E_j||` variants are in the
/// breakdown.
pub fn purity_based_bound_with<F>(terms: &ErrorTermSet, dt: f64, mut purity: F) -> Result<BoundReport>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut rep = BoundReport::new("purity_based", dt);
    let pow = dt.powi(terms.order as i32 + 1);
    let mut renyi_total = 0.0;
    for f in &terms.families {
        let n = f.local.len();
        let (mut d_dist, mut d_renyi, mut s_dist, mut s_renyi) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                let s = f.joint(j, k);
                let p = match cache.get(&s) {
                    Some(&p) => p,
                    None => {
                        let p = purity(&s)?;
                        cache.insert(s.clone(), p);
                        p
                    }
                };
                let d = (1usize << s.len()) as f64;
                let dist = (d * p - 1.0).max(0.0).sqrt().min(2.0);
                let s2 = -p.max(f64::MIN_POSITIVE).log2();
                let ren = (2.0 * std::f64::consts::LN_2 * (s.len() as f64 - s2).max(0.0)).sqrt();
                d_dist += f.pair_norms[j][k] * dist;
                d_renyi += f.pair_norms[j][k] * ren;
                s_dist += dist;
                s_renyi += ren;
            }
        }
        let fro = f.frobenius();
        let max_local = f.local_norms.iter().fold(0.0f64, |a, &b| a.max(b));
        let v = f.scale * pow * (d_dist.sqrt() + fro);
        let vr = f.scale * pow * (d_renyi.sqrt() + fro);
        rep.breakdown.insert(format!("{}:delta_purity", f.label), d_dist);
        rep.breakdown.insert(format!("{}:delta_renyi", f.label), d_renyi);
        rep.breakdown.insert(format!("{}:frobenius", f.label), fro);
        rep.breakdown.insert(format!("{}:state_term", f.label), f.scale * pow * d_dist.sqrt());
        rep.breakdown.insert(
            format!("{}:max_local_variant", f.label),
            f.scale * pow * (max_local * s_dist.sqrt() + fro),
        );
        rep.breakdown.insert(
            format!("{}:max_local_renyi_variant", f.label),
            f.scale * pow * (max_local * s_renyi.sqrt() + fro),
        );
        rep.value += v;
        renyi_total += vr;
    }
    rep.breakdown.insert("renyi_total".into(), renyi_total);
    Ok(rep)
}

/// [`purity_based_bound_with`] using exact purities of `psi`.
pub fn purity_based_bound(terms: &ErrorTermSet, psi: &StateVector, dt: f64) -> Result<BoundReport> {
    purity_based_bound_with(terms, dt, |s| {
        Ok(crate::entanglement::purity(&reduced_density_matrix(psi, s)?))
    })
}

/// Exact leading term `Σ_f s_f dt^{p+1} ||E_f |psi>||`.
pub fn refined_pauli_bound(terms: &ErrorTermSet, psi: &StateVector, dt: f64) -> Result<BoundReport> {
    let mut rep = BoundReport::new("refined_pauli", dt);
    let pow = dt.powi(terms.order as i32 + 1);
    for f in &terms.families {
        let v = f.scale * pow * f.apply_norm(psi);
        rep.breakdown.insert(format!("{}:term", f.label), v);
        rep.value += v;
    }
    Ok(rep)
}

/// MPS cost for a `k`-uniform state: `χ_A = 2^{k/4}`, memory `χ_A n`, ops `4 χ_A² χ_O² n`.
pub fn mps_cost_model(k: usize, n: usize, chi_o: usize) -> (f64, f64) {
    let chi_a = 2f64.powf(k as f64 / 4.0);
    let n = n as f64;
    let chi_o = chi_o as f64;
    (chi_a * n, 4.0 * chi_a * chi_a * chi_o * chi_o * n)
}

/// How fourth-order remainder norms are bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemainderMode {
    /// `||[X, E]|| <= 2 ||X|| ||E||` with one-norms.
    Cascade,
    /// One-norm of the symbolic nested commutator.
    PauliOneNorm,
}

/// Norms of the sub-leading terms in the PF2 bound, in the order
/// `[A,[B,[B,A]]]`, `[B,[B,[B,A]]]`, `[B,[A,[A,B]]]`, `[A,[A,[A,B]]]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Pf2Remainder {
    pub norms: [f64; 4],
}

impl Pf2Remainder {
    pub const WEIGHTS: [f64; 4] = [1.0 / 32.0, 1.0 / 12.0, 1.0 / 32.0, 1.0 / 48.0];

    /// Coefficient of `dt^4`.
    pub fn coefficient(&self) -> f64 {
        self.norms.iter().zip(Self::WEIGHTS).map(|(n, w)| n * w).sum()
    }
}

/// Precomputed commutator data for repeated PF1/PF2 bound evaluation on one split.
#[derive(Clone, Debug)]
pub struct BoundContext {
    pub split: HamiltonianSplit,
    pub pf1: ErrorTermSet,
    pub pf2: ErrorTermSet,
    /// `||[A,[A,B]]||_1`, `||[B,[B,A]]||_1`.
    pub pf1_third: [f64; 2],
    pub remainder_cascade: Pf2Remainder,
    pub remainder_symbolic: Pf2Remainder,
}

impl BoundContext {
    pub fn new(split: &HamiltonianSplit) -> Result<Self> {
        if split.parts.len() != 2 {
            return Err(Error::InvalidArgument("bound context needs a two-part split".into()));
        }
        let pf1 = leading_error_terms(split, 1)?;
        let pf2 = leading_error_terms(split, 2)?;
        let (a, b) = (split.a(), split.b());
        let e1 = &pf2.families[0].operator;
        let e2 = &pf2.families[1].operator;
        let pf1_third = [e2.one_norm(), e1.one_norm()];
        let (na, nb) = (a.one_norm(), b.one_norm());
        let (n1, n2) = (e1.one_norm(), e2.one_norm());
        let remainder_cascade = Pf2Remainder {
            norms: [2.0 * na * n1, 2.0 * nb * n1, 2.0 * nb * n2, 2.0 * na * n2],
        };
        let remainder_symbolic = Pf2Remainder {
            norms: [
                a.commutator(e1).one_norm(),
                b.commutator(e1).one_norm(),
                b.commutator(e2).one_norm(),
                a.commutator(e2).one_norm(),
            ],
        };
        Ok(BoundContext {
            split: split.clone(),
            pf1,
            pf2,
            pf1_third,
            remainder_cascade,
            remainder_symbolic,
        })
    }

    pub fn remainder(&self, mode: RemainderMode) -> &Pf2Remainder {
        match mode {
            RemainderMode::Cascade => &self.remainder_cascade,
            RemainderMode::PauliOneNorm => &self.remainder_symbolic,
        }
    }

    /// PF1 single-step bound with concrete prefactors.
    pub fn pf1_bound(&self, psi: &StateVector, dt: f64) -> Result<BoundReport> {
        let mut m = Marginals::new(psi);
        let f = &self.pf1.families[0];
        let delta = f.delta_distance(&mut m)?;
        let fro2 = f.frobenius().powi(2);
        let lead = (dt.powi(4) / 4.0 * (fro2 + delta)).sqrt();
        let third = dt.powi(3) / 6.0 * self.pf1_third[0] + dt.powi(3) / 3.0 * self.pf1_third[1];
        let mut rep = BoundReport::new("pf1_concrete", dt);
        rep.value = lead + third;
        rep.breakdown.insert("frobenius_sq".into(), fro2);
        rep.breakdown.insert("delta".into(), delta);
        rep.breakdown.insert("leading".into(), lead);
        rep.breakdown.insert("third_order".into(), third);
        Ok(rep)
    }

    /// `(a3, b4)` such that the PF2 step bound is `a3 dt^3 + b4 dt^4`.
    pub fn pf2_coefficients(&self, psi: &StateVector, mode: RemainderMode) -> Result<(f64, f64, [f64; 2])> {
        let mut m = Marginals::new(psi);
        let f1 = &self.pf2.families[0];
        let f2 = &self.pf2.families[1];
        let d1 = f1.delta_distance(&mut m)?;
        let d2 = f2.delta_distance(&mut m)?;
        let a3 = ((f1.frobenius().powi(2) + d1) / 144.0).sqrt()
            + ((f2.frobenius().powi(2) + d2) / 576.0).sqrt();
        Ok((a3, self.remainder(mode).coefficient(), [d1, d2]))
    }

    /// PF2 single-step bound with concrete prefactors.
    pub fn pf2_bound(&self, psi: &StateVector, dt: f64, mode: RemainderMode) -> Result<BoundReport> {
        let (a3, b4, [d1, d2]) = self.pf2_coefficients(psi, mode)?;
        let f1 = self.pf2.families[0].frobenius().powi(2);
        let f2 = self.pf2.families[1].frobenius().powi(2);
        let mut rep = BoundReport::new("pf2_concrete", dt);
        rep.value = a3 * dt.powi(3) + b4 * dt.powi(4);
        rep.breakdown.insert("e1_frobenius_sq".into(), f1);
        rep.breakdown.insert("e2_frobenius_sq".into(), f2);
        rep.breakdown.insert("delta_e1".into(), d1);
        rep.breakdown.insert("delta_e2".into(), d2);
        rep.breakdown.insert("leading".into(), a3 * dt.powi(3));
        rep.breakdown.insert("fourth_order".into(), b4 * dt.powi(4));
        // literal reading with the state terms outside the dt^6 prefactor
        let unscaled = (dt.powi(6) / 144.0 * f1 + d1).sqrt()
            + (dt.powi(6) / 576.0 * f2 + d2).sqrt()
            + b4 * dt.powi(4);
        rep.breakdown.insert("unscaled_delta_variant".into(), unscaled);
        Ok(rep)
    }
}

pub fn pf1_concrete_bound(split: &HamiltonianSplit, psi: &StateVector, dt: f64) -> Result<BoundReport> {
    BoundContext::new(split)?.pf1_bound(psi, dt)
}

pub fn pf2_concrete_bound(split: &HamiltonianSplit, psi: &StateVector, dt: f64) -> Result<BoundReport> {
    BoundContext::new(split)?.pf2_bound(psi, dt, RemainderMode::Cascade)
}

fn baseline(split: &HamiltonianSplit, order: usize, dt: f64, kind: &str, frob: bool) -> Result<BoundReport> {
    let terms = leading_error_terms(split, order)?;
    let mut rep = BoundReport::new(kind, dt);
    for f in &terms.families {
        let norm = if frob { f.frobenius() } else { f.one_norm() };
        let v = f.scale * dt.powi(order as i32 + 1) * norm;
        rep.breakdown.insert(format!("{}:norm", f.label), norm);
        rep.breakdown.insert(format!("{}:term", f.label), v);
        rep.value += v;
    }
    Ok(rep)
}

/// Leading-order bound with one-norms of the nested commutators.
pub fn worst_case_bound(split: &HamiltonianSplit, order: usize, dt: f64) -> Result<BoundReport> {
    baseline(split, order, dt, "worst_case", false)
}

/// Leading-order bound with normalized Frobenius norms.
pub fn average_case_bound(split: &HamiltonianSplit, order: usize, dt: f64) -> Result<BoundReport> {
    baseline(split, order, dt, "average_case", true)
}

/// Closed-form counting bounds for the mixed-field Ising chain.
///
/// Returns spectral counts for `[A,B]`, `[A,[A,B]]`, `[B,[A,B]]` and the
/// squared-Frobenius counts for the same three operators as printed in the
/// literature; the squared-Frobenius counts are looser than the exact sums.
pub fn qimf_counting_norms(n: usize, p: QimfParams) -> BTreeMap<String, f64> {
    let (hx, hy, j) = (p.hx, p.hy, p.j);
    let nf = n as f64;
    let mut m = BTreeMap::new();
    m.insert("ab_one".into(), 2.0 * hx * hy * nf + 4.0 * hy * j * (nf - 1.0));
    m.insert(
        "aab_one".into(),
        4.0 * hx * hx * hy * nf
            + 8.0 * j * j * hy * (nf - 1.0)
            + 16.0 * j * hy * hx * (nf - 1.0)
            + 8.0 * j * j * hy * (nf - 2.0),
    );
    m.insert("bab_one".into(), 4.0 * hx * hy * hy * nf + 16.0 * j * hy * hy * (nf - 1.0));
    m.insert("ab_frob_sq_counting".into(), 4.0 * hx * hx * hy * hy * nf + 8.0 * hy * j * (nf - 1.0));
    m.insert(
        "aab_frob_sq_counting".into(),
        16.0 * (hx * hx + 2.0 * j * j).powi(2) * hy * hy * nf
            + 128.0 * hx * hx * hy * hy * j * j * (nf - 1.0)
            + 128.0 * j * j * hy * hy * (nf - 2.0),
    );
    m.insert(
        "bab_frob_sq_counting".into(),
        16.0 * hx * hx * hy.powi(4) * nf + 128.0 * j * j * hy * hy * (nf - 1.0),
    );
    m
}

/// `α = Σ_{l_1..l_depth} ||[H_{l_1}, [H_{l_2}, ... , H_{l_depth}]]||_1`.
pub fn nested_commutator_norm_sum(split: &HamiltonianSplit, depth: usize, cap: usize) -> Result<f64> {
    if depth < 2 {
        return Err(Error::InvalidArgument("depth must be at least 2".into()));
    }
    let l = split.parts.len();
    let count = (l as f64).powi(depth as i32);
    if count > cap as f64 {
        return Err(Error::CapExceeded {
            what: "nested commutator tuples".into(),
            needed: count.min(usize::MAX as f64) as usize,
            cap,
        });
    }
    // suffix memo: tuple of innermost indices -> nested commutator
    let mut level: Vec<(Vec<usize>, PauliSum)> =
        (0..l).map(|i| (vec![i], split.parts[i].clone())).collect();
    for _ in 1..depth {
        let mut next = Vec::with_capacity(level.len() * l);
        for (idx, op) in &level {
            for i in 0..l {
                let mut key = vec![i];
                key.extend(idx);
                next.push((key, split.parts[i].commutator(op)));
            }
        }
        level = next;
    }
    Ok(level.iter().map(|(_, op)| op.one_norm()).sum())
}

/// Least `r >= 1` with `r (a3 (tau/r)^3 + b4 (tau/r)^4) <= budget`.
pub fn min_steps_for_coefficients(a3: f64, b4: f64, tau: f64, budget: f64) -> Result<usize> {
    if budget <= 0.0 {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    let cost = |r: usize| {
        let dt = tau / r as f64;
        r as f64 * (a3 * dt.powi(3) + b4 * dt.powi(4))
    };
    let mut hi = 1usize;
    while cost(hi) > budget {
        hi = hi.checked_mul(2).ok_or(Error::Unbracketed(usize::MAX))?;
    }
    let mut lo = hi / 2;
    if lo == 0 {
        return Ok(1);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if cost(mid) <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SegmentedResult {
    /// `(C, r*)` for every slice count tried.
    pub history: Vec<(usize, usize)>,
    pub r_star: usize,
    pub converged: bool,
    pub converged_at: Option<usize>,
}

/// Long-time PF2 step count from per-slice state-dependent bounds.
///
/// For `C` slices each slice `c` starts at `t_c = c t / C`; its step count is the
/// least `r_c` with `r_c * bound(psi(t_c), (t/C)/r_c) <= eps/C`, and
/// `r* = Σ_c r_c`. `C` doubles until `r*` moves by less than `rel_tol`.
pub fn segmented_long_time_bound(
    ctx: &BoundContext,
    psi0: &StateVector,
    evolver: &ExactEvolver,
    t: f64,
    eps: f64,
    c_max: usize,
    rel_tol: f64,
    mode: RemainderMode,
) -> Result<SegmentedResult> {
    let mut coeffs: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut states: BTreeMap<u64, StateVector> = BTreeMap::new();
    states.insert(0f64.to_bits(), psi0.clone());
    let mut history = Vec::new();
    let mut c = 1usize;
    let mut prev: Option<usize> = None;
    loop {
        let tau = t / c as f64;
        let mut total = 0usize;
        for k in 0..c {
            let tc = k as f64 * tau;
            let key = tc.to_bits();
            if !coeffs.contains_key(&key) {
                if !states.contains_key(&key) {
                    // nearest earlier state
                    let (&from_key, from) = states.range(..key).next_back().expect("t=0 state");
                    let dt = tc - f64::from_bits(from_key);
                    let s = evolver.evolve(from, dt)?;
                    states.insert(key, s);
                }
                let (a3, b4, _) = ctx.pf2_coefficients(&states[&key], mode)?;
                coeffs.insert(key, (a3, b4));
            }
            let (a3, b4) = coeffs[&key];
            total += min_steps_for_coefficients(a3, b4, tau, eps / c as f64)?;
        }
        history.push((c, total));
        if let Some(p) = prev {
            if ((total as f64 - p as f64) / p as f64).abs() < rel_tol {
                return Ok(SegmentedResult {
                    history,
                    r_star: total,
                    converged: true,
                    converged_at: Some(c),
                });
            }
        }
        if c * 2 > c_max {
            return Ok(SegmentedResult {
                history,
                r_star: total,
                converged: false,
                converged_at: None,
            });
        }
        prev = Some(total);
        c *= 2;
    }
}

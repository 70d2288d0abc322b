//! Measurement-assisted adaptive PF2 simulation and gate-cost accounting.
//!
//! Time is cut at checkpoints `t_1 < ... < t_T`. The first interval uses
//! worst-case commutator norms; every later interval uses `||E_f φ||²`
//! measured on the Trotterized state at its start. Each interval `Δ_i` gets
//! budget `ε Δ_i / t`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{min_steps_for_coefficients, BoundContext, RemainderMode};
use crate::error::{Error, Result};
use crate::evolve::ExactEvolver;
use crate::models::HamiltonianSplit;
use crate::product_formula::{build_formula, FormulaSpec};
use crate::shadows::{collect_shadows, estimate_observable, refined_error_observable, RefinedObservable};
use crate::state::StateVector;

/// How `||E_f φ||²` is obtained at a checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    /// Classical shadows with this many snapshots.
    Shadows { shots: usize },
    /// Exact expectation values.
    Exact,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub total_time: f64,
    pub epsilon: f64,
    /// Interior checkpoint times, strictly increasing in `(0, total_time)`.
    pub checkpoints: Vec<f64>,
    pub mode: MeasurementMode,
    pub seed: u64,
    /// Measured values are inflated by this many standard errors.
    pub inflation_se: f64,
    pub remainder: RemainderMode,
    /// Re-measure exactly mid-interval and log when the value grew.
    pub verify_mid_interval: bool,
}

impl AdaptiveConfig {
    pub fn new(total_time: f64, epsilon: f64, checkpoints: Vec<f64>, mode: MeasurementMode, seed: u64) -> Self {
        AdaptiveConfig {
            total_time,
            epsilon,
            checkpoints,
            mode,
            seed,
            inflation_se: 2.0,
            remainder: RemainderMode::PauliOneNorm,
            verify_mid_interval: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.total_time > 0.0 && self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("time and epsilon must be positive".into()));
        }
        let mut prev = 0.0;
        for &c in &self.checkpoints {
            if !(c > prev && c < self.total_time) {
                return Err(Error::InvalidArgument(format!(
                    "checkpoints must increase strictly inside (0, {}), got {:?}",
                    self.total_time, self.checkpoints
                )));
            }
            prev = c;
        }
        if let MeasurementMode::Shadows { shots } = self.mode {
            if shots < 2 {
                return Err(Error::InvalidArgument("need at least two shots".into()));
            }
        }
        Ok(())
    }
}

/// `T` uniformly spaced checkpoints `i t / (T + 1)`.
pub fn uniform_checkpoints(total_time: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|i| i as f64 * total_time / (count + 1) as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalPlan {
    pub index: usize,
    pub start: f64,
    pub length: f64,
    pub budget: f64,
    /// `worst_case`, `shadows` or `exact`.
    pub source: String,
    /// Measured `||E_1 φ||²`, `||E_2 φ||²`.
    pub measured: [f64; 2],
    pub standard_errors: [f64; 2],
    /// Values fed to the step solver.
    pub used: [f64; 2],
    pub steps: usize,
    /// `r * bound(dt)` for the resolved step count.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaptivePlan {
    pub total_time: f64,
    pub epsilon: f64,
    pub checkpoints: Vec<f64>,
    pub mode: MeasurementMode,
    pub seed: u64,
    pub intervals: Vec<IntervalPlan>,
}

impl AdaptivePlan {
    pub fn total_steps(&self) -> usize {
        self.intervals.iter().map(|i| i.steps).sum()
    }

    pub fn bound_total(&self) -> f64 {
        self.intervals.iter().map(|i| i.bound).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditRecord {
    pub interval: usize,
    pub time: f64,
    pub source: String,
    pub measured: [f64; 2],
    pub standard_errors: [f64; 2],
    pub used: [f64; 2],
    pub length: f64,
    pub budget: f64,
    pub steps: usize,
    pub mid_interval: Option<[f64; 2]>,
    pub monotonicity_violation: bool,
}

#[derive(Clone, Debug)]
pub struct AdaptiveRun {
    pub plan: AdaptivePlan,
    pub audit: Vec<AuditRecord>,
    pub final_state: StateVector,
}

impl AdaptiveRun {
    /// Audit log as JSON lines.
    pub fn write_audit<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.audit {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// `||exp(-iHt)|psi0> - final||`.
    pub fn end_state_error(&self, evolver: &ExactEvolver, psi0: &StateVector) -> Result<f64> {
        Ok(evolver.evolve(psi0, self.plan.total_time)?.distance(&self.final_state))
    }
}

/// Least `r` with `r [sqrt(dt^6/144 m_1) + sqrt(dt^6/576 m_2) + b_4 dt^4] <= budget`, `dt = delta / r`.
pub fn resolve_interval_steps(measured_e1: f64, measured_e2: f64, remainder_coef: f64, delta: f64, budget: f64) -> Result<usize> {
    for (name, v) in [("measured_e1", measured_e1), ("measured_e2", measured_e2), ("remainder", remainder_coef)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("interval length must be positive".into()));
    }
    let a3 = measured_e1.sqrt() / 12.0 + measured_e2.sqrt() / 24.0;
    if a3 == 0.0 && remainder_coef == 0.0 {
        return Ok(1);
    }
    min_steps_for_coefficients(a3, remainder_coef, delta, budget)
}

fn interval_bound(used: [f64; 2], b4: f64, delta: f64, r: usize) -> f64 {
    let dt = delta / r as f64;
    let a3 = used[0].sqrt() / 12.0 + used[1].sqrt() / 24.0;
    r as f64 * (a3 * dt.powi(3) + b4 * dt.powi(4))
}

struct Observables {
    obs: [RefinedObservable; 2],
}

impl Observables {
    fn exact(&self, psi: &StateVector) -> Result<[f64; 2]> {
        Ok([self.obs[0].expectation(psi)?.max(0.0), self.obs[1].expectation(psi)?.max(0.0)])
    }
}

/// Total PF2 steps when every interval uses `||E_f||_F²` (average case).
pub fn average_case_steps(ctx: &BoundContext, total_time: f64, epsilon: f64, mode: RemainderMode) -> Result<usize> {
    let f1 = ctx.pf2.families[0].frobenius().powi(2);
    let f2 = ctx.pf2.families[1].frobenius().powi(2);
    resolve_interval_steps(f1, f2, ctx.remainder(mode).coefficient(), total_time, epsilon)
}

/// Total PF2 steps when every interval uses squared one-norms (worst case).
pub fn worst_case_steps(ctx: &BoundContext, total_time: f64, epsilon: f64, mode: RemainderMode) -> Result<usize> {
    let w1 = ctx.pf2.families[0].one_norm().powi(2);
    let w2 = ctx.pf2.families[1].one_norm().powi(2);
    resolve_interval_steps(w1, w2, ctx.remainder(mode).coefficient(), total_time, epsilon)
}

/// Runs the adaptive protocol and returns the resolved plan, audit log and final state.
pub fn run_adaptive(ctx: &BoundContext, psi0: &StateVector, cfg: &AdaptiveConfig) -> Result<AdaptiveRun> {
    cfg.validate()?;
    let split: &HamiltonianSplit = &ctx.split;
    if psi0.n_qubits() != split.n_qubits {
        return Err(Error::InvalidArgument("state and Hamiltonian sizes differ".into()));
    }
    let spec: FormulaSpec = build_formula(split, 2)?;
    let observables = Observables {
        obs: [
            refined_error_observable(&ctx.pf2.families[0])?,
            refined_error_observable(&ctx.pf2.families[1])?,
        ],
    };
    let b4 = ctx.remainder(cfg.remainder).coefficient();
    let worst = [
        ctx.pf2.families[0].one_norm().powi(2),
        ctx.pf2.families[1].one_norm().powi(2),
    ];
    let mut bounds: Vec<f64> = vec![0.0];
    bounds.extend(&cfg.checkpoints);
    bounds.push(cfg.total_time);

    let mut phi = psi0.clone();
    let mut intervals = Vec::new();
    let mut audit = Vec::new();
    for i in 0..bounds.len() - 1 {
        let (start, length) = (bounds[i], bounds[i + 1] - bounds[i]);
        let budget = cfg.epsilon * length / cfg.total_time;
        let (source, measured, ses, used) = if i == 0 {
            ("worst_case".to_string(), worst, [0.0; 2], worst)
        } else {
            match cfg.mode {
                MeasurementMode::Exact => {
                    let m = observables.exact(&phi)?;
                    ("exact".to_string(), m, [0.0; 2], m)
                }
                MeasurementMode::Shadows { shots } => {
                    let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
                    let sh = collect_shadows(&phi, shots, seed, format!("checkpoint {i} t={start}"))?;
                    let mut measured = [0.0; 2];
                    let mut ses = [0.0; 2];
                    let mut used = [0.0; 2];
                    for f in 0..2 {
                        let e = estimate_observable(&sh, &observables.obs[f].observable)?;
                        measured[f] = e.mean + observables.obs[f].offset;
                        ses[f] = e.se;
                        used[f] = (measured[f] + cfg.inflation_se * e.se).max(0.0);
                    }
                    ("shadows".to_string(), measured, ses, used)
                }
            }
        };
        let steps = resolve_interval_steps(used[0], used[1], b4, length, budget).map_err(|e| {
            Error::InvalidArgument(format!(
                "interval {i} at t={start}: step solver failed for measured {used:?}: {e}"
            ))
        })?;
        let dt = length / steps as f64;
        let mut mid = None;
        let mut violation = false;
        if cfg.verify_mid_interval && i > 0 {
            let mut probe = phi.clone();
            spec.apply_steps(&mut probe, dt, steps / 2);
            let m = observables.exact(&probe)?;
            violation = m[0] > used[0] * (1.0 + 1e-9) || m[1] > used[1] * (1.0 + 1e-9);
            mid = Some(m);
        }
        spec.apply_steps(&mut phi, dt, steps);
        let plan = IntervalPlan {
            index: i,
            start,
            length,
            budget,
            source: source.clone(),
            measured,
            standard_errors: ses,
            used,
            steps,
            bound: interval_bound(used, b4, length, steps),
        };
        audit.push(AuditRecord {
            interval: i,
            time: start,
            source,
            measured,
            standard_errors: ses,
            used,
            length,
            budget,
            steps,
            mid_interval: mid,
            monotonicity_violation: violation,
        });
        intervals.push(plan);
    }
    Ok(AdaptiveRun {
        plan: AdaptivePlan {
            total_time: cfg.total_time,
            epsilon: cfg.epsilon,
            checkpoints: cfg.checkpoints.clone(),
            mode: cfg.mode,
            seed: cfg.seed,
            intervals,
        },
        audit,
        final_state: phi,
    })
}

/// Gate-count model with worst-case `G_1 = κ_1 N² t²/ε` and average-case `G_2 = κ_2 N^1.5 t²/ε`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GateCostModel {
    pub n_qubits: usize,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Shots per checkpoint.
    pub m: f64,
    /// Shots of the final state.
    pub m_o: f64,
}

impl GateCostModel {
    pub fn g1(&self, t: f64, eps: f64) -> f64 {
        self.kappa1 * (self.n_qubits as f64).powi(2) * t * t / eps
    }

    pub fn g2(&self, t: f64, eps: f64) -> f64 {
        self.kappa2 * (self.n_qubits as f64).powf(1.5) * t * t / eps
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GateCost {
    pub adaptive: f64,
    pub baseline: f64,
    pub ratio: f64,
}

/// Single checkpoint at `t_c` with error split `ε t_c / t` before and the rest after.
pub fn gate_cost(model: &GateCostModel, t_c: f64, t: f64, eps: f64) -> Result<GateCost> {
    if !(t_c >= 0.0 && t_c < t) {
        return Err(Error::InvalidArgument(format!("checkpoint {t_c} must lie in [0, {t})")));
    }
    let eps_c = eps * t_c / t;
    let before = if t_c > 0.0 { model.g1(t_c, eps_c) } else { 0.0 };
    let adaptive = before * model.m + (before + model.g2(t - t_c, eps - eps_c)) * model.m_o;
    let baseline = model.g1(t, eps) * model.m_o;
    Ok(GateCost {
        adaptive,
        baseline,
        ratio: adaptive / baseline,
    })
}

/// Multi-checkpoint cost from per-interval gate counts `G_0..G_T`.
///
/// Checkpoint `c` re-prepares intervals `0..c` for each of `m` shots; the final
/// state costs all intervals for each of `m_o` shots.
pub fn multi_checkpoint_cost(interval_gates: &[f64], m: f64, m_o: f64) -> f64 {
    let mut prefix = 0.0;
    let mut total = 0.0;
    for (c, g) in interval_gates.iter().enumerate() {
        if c > 0 {
            total += prefix * m;
        }
        prefix += g;
    }
    total + prefix * m_o
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::EvolverOptions;
    use crate::models::{build_qimf, QimfParams};

    fn setup(n: usize) -> (BoundContext, ExactEvolver) {
        let s = build_qimf(n, QimfParams::TYPICAL).unwrap();
        let ev = ExactEvolver::new(&s.hamiltonian(), EvolverOptions::default()).unwrap();
        (BoundContext::new(&s).unwrap(), ev)
    }

    #[test]
    fn uniform_checkpoints_partition() {
        assert_eq!(uniform_checkpoints(10.0, 4), vec![2.0, 4.0, 6.0, 8.0]);
        assert!(uniform_checkpoints(1.0, 0).is_empty());
    }

    #[test]
    fn resolve_only_remainder() {
        let r = resolve_interval_steps(0.0, 0.0, 2.0, 1.0, 1e-6).unwrap();
        let cost = |r: usize| r as f64 * 2.0 * (1.0 / r as f64).powi(4);
        assert!(cost(r) <= 1e-6 && cost(r - 1) > 1e-6);
        assert!(resolve_interval_steps(-1.0, 0.0, 0.0, 1.0, 1e-6).is_err());
    }

    #[test]
    fn halving_budget_scales_by_sqrt_two() {
        let a = resolve_interval_steps(144.0, 0.0, 0.0, 1.0, 1e-8).unwrap() as f64;
        let b = resolve_interval_steps(144.0, 0.0, 0.0, 1.0, 0.5e-8).unwrap() as f64;
        assert!((b / a - 2f64.sqrt()).abs() < 1e-3);
        // r (1/r)^3 = 1e-8 -> r = 1e4
        assert_eq!(a as usize, 10_000);
    }

    #[test]
    fn zero_checkpoints_equals_worst_case_baseline() {
        let (ctx, _) = setup(6);
        let psi = StateVector::zero(6).unwrap();
        let cfg = AdaptiveConfig::new(2.0, 1e-3, vec![], MeasurementMode::Exact, 0);
        let run = run_adaptive(&ctx, &psi, &cfg).unwrap();
        let baseline = worst_case_steps(&ctx, 2.0, 1e-3, RemainderMode::PauliOneNorm).unwrap();
        assert_eq!(run.plan.total_steps(), baseline);
        assert_eq!(run.plan.intervals.len(), 1);
    }

    #[test]
    fn adaptive_reduces_steps_and_stays_within_epsilon() {
        let (ctx, ev) = setup(6);
        let psi = StateVector::zero(6).unwrap();
        let (t, eps) = (3.0, 1e-3);
        let mut totals = Vec::new();
        for count in [0, 2, 5] {
            let mut cfg = AdaptiveConfig::new(t, eps, uniform_checkpoints(t, count), MeasurementMode::Exact, 0);
            cfg.verify_mid_interval = true;
            let run = run_adaptive(&ctx, &psi, &cfg).unwrap();
            assert!(run.end_state_error(&ev, &psi).unwrap() <= eps);
            assert!(run.plan.bound_total() <= eps * (1.0 + 1e-12));
            totals.push(run.plan.total_steps());
        }
        assert!(totals[0] > totals[1] && totals[1] > totals[2], "{totals:?}");
        let avg = average_case_steps(&ctx, t, eps, RemainderMode::PauliOneNorm).unwrap();
        assert!(totals[2] as f64 > 0.5 * avg as f64);
    }

    #[test]
    fn shadow_runs_are_deterministic_and_audited() {
        let (ctx, _) = setup(4);
        let psi = StateVector::zero(4).unwrap();
        let cfg = AdaptiveConfig::new(2.0, 1e-3, vec![1.0], MeasurementMode::Shadows { shots: 400 }, 9);
        let a = run_adaptive(&ctx, &psi, &cfg).unwrap();
        let b = run_adaptive(&ctx, &psi, &cfg).unwrap();
        assert_eq!(a.plan.intervals, b.plan.intervals);
        assert_eq!(a.final_state, b.final_state);
        let mut buf = Vec::new();
        a.write_audit(&mut buf).unwrap();
        let lines: Vec<_> = std::str::from_utf8(&buf).unwrap().lines().collect();
        assert_eq!(lines.len(), 2);
        let rec: AuditRecord = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(rec.source, "shadows");
    }

    #[test]
    fn invalid_checkpoints_rejected() {
        let (ctx, _) = setup(4);
        let psi = StateVector::zero(4).unwrap();
        for cps in [vec![2.0], vec![0.5, 0.4], vec![0.0]] {
            let cfg = AdaptiveConfig::new(2.0, 1e-3, cps, MeasurementMode::Exact, 0);
            assert!(run_adaptive(&ctx, &psi, &cfg).is_err());
        }
    }

    #[test]
    fn gate_cost_limits() {
        let m = GateCostModel {
            n_qubits: 10,
            kappa1: 1.0,
            kappa2: 1.0,
            m: 100.0,
            m_o: 100.0,
        };
        let c = gate_cost(&m, 0.0, 10.0, 1e-3).unwrap();
        assert!((c.adaptive - m.g2(10.0, 1e-3) * 100.0).abs() < 1e-6 * c.adaptive);
        assert!(c.adaptive <= c.baseline);
        assert!(gate_cost(&m, 10.0, 10.0, 1e-3).is_err());
        assert_eq!(multi_checkpoint_cost(&[5.0], 3.0, 2.0), 10.0);
        // checkpoints re-prepare [G0] and [G0, G1]
        assert_eq!(multi_checkpoint_cost(&[1.0, 2.0, 4.0], 10.0, 1.0), 10.0 + 30.0 + 7.0);
    }

    #[test]
    fn gate_cost_exponents_follow_model() {
        // with M = M_o = N^2 and t_c = 1, adaptive ~ N^4 t + N^3.5 t^2, baseline ~ N^4 t^2
        let fit = |t: f64| {
            let pts: Vec<(f64, f64)> = [16usize, 32, 64, 128]
                .iter()
                .map(|&n| {
                    let nn = (n * n) as f64;
                    let m = GateCostModel {
                        n_qubits: n,
                        kappa1: 1.0,
                        kappa2: 1.0,
                        m: nn,
                        m_o: nn,
                    };
                    (n as f64, gate_cost(&m, 1.0, t, 1e-2).unwrap().adaptive)
                })
                .collect();
            crate::worst_case::loglog_fit(&pts).unwrap().0
        };
        assert!((fit(1e4) - 3.5).abs() < 0.05);
        let m = |n: usize| GateCostModel {
            n_qubits: n,
            kappa1: 1.0,
            kappa2: 1.0,
            m: (n * n) as f64,
            m_o: (n * n) as f64,
        };
        let b = (gate_cost(&m(64), 1.0, 10.0, 1e-2).unwrap().baseline / gate_cost(&m(32), 1.0, 10.0, 1e-2).unwrap().baseline).log2();
        assert!((b - 4.0).abs() < 1e-9);
    }
}

//! Experiment drivers, one per subcommand.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use trotter_core::adaptive::{
    average_case_steps, run_adaptive as core_run_adaptive, uniform_checkpoints, worst_case_steps, AdaptiveConfig,
    MeasurementMode,
};
use trotter_core::bounds::{
    average_case_bound, distance_based_bound, entanglement_based_bound, leading_error_terms, light_cone_bound,
    purity_based_bound, qimf_counting_norms, refined_pauli_bound, segmented_long_time_bound, worst_case_bound,
    BoundContext, BoundReport, RemainderMode,
};
use trotter_core::entanglement::{reduced_density_matrix, von_neumann_entropy};
use trotter_core::evolve::{EvolverOptions, ExactEvolver};
use trotter_core::models::HamiltonianSplit;
use trotter_core::product_formula::{
    build_formula, empirical_error, empirical_step_error, find_min_steps, operator_norm_error, FormulaSpec, NormKind,
    NormOptions,
};
use trotter_core::shadows::{collect_shadows, estimate_purity_mom, estimate_trotter_error, DEFAULT_MOM_BATCHES};
use trotter_core::state::StateVector;
use trotter_core::worst_case::{
    build_worst_case_state, check_worst_case_conditions, leading_error_operator, loglog_fit,
};

use crate::config::{ExperimentConfig, ExperimentKind, FIG5_METHODS};
use crate::output::{svg_line_plot, Cell, RunOutput, Series, Table};

/// Options shared by every run.
#[derive(Clone, Debug, Default)]
pub struct RunEnv {
    /// Replaces the config's seed list.
    pub seed: Option<u64>,
    /// Allows dense spectral norms above 10 qubits.
    pub big_dense: bool,
    /// Progress messages on stderr.
    pub verbose: bool,
}

impl RunEnv {
    fn seeds(&self, cfg: &ExperimentConfig) -> Vec<u64> {
        match self.seed {
            Some(s) => vec![s],
            None => cfg.seeds.clone(),
        }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Largest register the figure drivers accept.
pub const FIGURE_MAX_QUBITS: usize = 12;

/// Above this size dense spectral norms need `--big-dense`.
pub const DENSE_DEFAULT_MAX: usize = 10;

pub fn run(cfg: &ExperimentConfig, env: &RunEnv) -> Result<RunOutput> {
    match cfg.experiment {
        ExperimentKind::Model => run_model(cfg, env),
        ExperimentKind::Bound => run_bound(cfg, env),
        ExperimentKind::Evolve => run_evolve(cfg, env),
        ExperimentKind::Worstcase => run_worstcase(cfg, env),
        ExperimentKind::Shadows => run_shadows(cfg, env),
        ExperimentKind::Adaptive => run_adaptive(cfg, env),
        ExperimentKind::Fig1 => run_fig1(cfg, env),
        ExperimentKind::Fig4 => run_fig4(cfg, env),
        ExperimentKind::Fig5 => run_fig5(cfg, env),
    }
}

fn evolver(split: &HamiltonianSplit) -> Result<ExactEvolver> {
    Ok(ExactEvolver::new(&split.hamiltonian(), EvolverOptions::default())?)
}

fn check_figure_cap(cfg: &ExperimentConfig) -> Result<()> {
    if let Some(&n) = cfg.sizes().iter().find(|&&n| n > FIGURE_MAX_QUBITS) {
        bail!("{} supports at most {FIGURE_MAX_QUBITS} qubits, got {n}", cfg.experiment.name());
    }
    Ok(())
}

/// Centered block of `k` qubits.
pub fn middle_block(n: usize, k: usize) -> Vec<usize> {
    let start = (n - k.min(n)) / 2;
    (start..start + k.min(n)).collect()
}

/// Input state named by `cfg.state`; `evolved` is `exp(-iHt)|0>`.
fn input_state(
    cfg: &ExperimentConfig,
    split: &HamiltonianSplit,
    ev: &ExactEvolver,
    seed: u64,
) -> Result<(StateVector, String)> {
    let n = split.n_qubits;
    let kind = cfg.state.as_deref().unwrap_or("zero");
    let psi = match kind {
        "zero" => StateVector::zero(n)?,
        "haar" => StateVector::haar_random(n, &mut ChaCha8Rng::seed_from_u64(seed))?,
        "worst_case" => build_worst_case_state(&leading_error_operator(split, cfg.order.min(2))?)?.to_state()?,
        "evolved" => ev.evolve(&StateVector::zero(n)?, cfg.total_time(n))?,
        other => bail!("unknown state '{other}'"),
    };
    let label = if kind == "evolved" {
        format!("evolved(t={})", cfg.total_time(n))
    } else {
        kind.to_string()
    };
    Ok((psi, label))
}

pub fn run_model(cfg: &ExperimentConfig, _env: &RunEnv) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let mut parts = Table::new(&["n", "set", "part", "terms", "one_norm", "frobenius", "termwise_commuting"]);
    let mut comms = Table::new(&["n", "set", "operator", "terms", "one_norm", "frobenius", "counting_one_norm"]);
    for n in cfg.sizes() {
        for (name, split) in cfg.splits(n)? {
            for (l, p) in split.parts.iter().enumerate() {
                parts.push(vec![
                    n.into(),
                    name.as_str().into(),
                    l.into(),
                    p.len().into(),
                    p.one_norm().into(),
                    p.frobenius_norm().into(),
                    split.within_part_commuting[l].into(),
                ]);
            }
            if split.parts.len() != 2 {
                continue;
            }
            let (a, b) = (split.a(), split.b());
            let ab = a.commutator(b);
            let aab = a.commutator(&ab);
            let bba = b.commutator(&b.commutator(a));
            let counting = (cfg.model == crate::config::ModelKind::Qimf).then(|| {
                let sets = cfg.qimf_sets();
                let p = sets.iter().find(|(s, _)| *s == name).map(|(_, p)| *p).unwrap();
                qimf_counting_norms(n, p)
            });
            for (label, op, key) in [("[A,B]", &ab, "ab_one"), ("[A,[A,B]]", &aab, "aab_one"), ("[B,[B,A]]", &bba, "bab_one")] {
                let c = counting.as_ref().and_then(|m| m.get(key).copied()).unwrap_or(f64::NAN);
                comms.push(vec![
                    n.into(),
                    name.as_str().into(),
                    label.into(),
                    op.len().into(),
                    op.one_norm().into(),
                    op.frobenius_norm().into(),
                    c.into(),
                ]);
            }
            out.text.push((format!("hamiltonian_{name}_n{n}.txt"), split.hamiltonian().to_text()));
        }
    }
    out.add_table("parts", parts);
    out.add_table("commutators", comms);
    Ok(out)
}

/// Every family has `Δ_f <= (||E_f||_F / ||E_f||_1)^2`, where the state term is below the average-case term.
fn in_entangled_regime(distance: &BoundReport, worst: &BoundReport) -> bool {
    worst.breakdown.iter().filter_map(|(k, v)| k.strip_suffix(":norm").map(|f| (f, *v))).all(|(f, one)| {
        let delta = distance.breakdown.get(&format!("{f}:delta")).copied().unwrap_or(f64::INFINITY);
        let fro = distance.breakdown.get(&format!("{f}:frobenius")).copied().unwrap_or(0.0);
        one > 0.0 && delta <= (fro / one).powi(2)
    })
}

pub fn run_bound(cfg: &ExperimentConfig, env: &RunEnv) -> Result<RunOutput> {
    if cfg.order > 2 {
        bail!("state-dependent bounds cover orders 1 and 2");
    }
    let dt = cfg.dt.unwrap_or(0.01);
    let depth = cfg.depth.unwrap_or(2);
    let mut out = RunOutput::default();
    let mut table = Table::new(&["n", "set", "seed", "state", "kind", "value"]);
    let mut reports: Vec<BoundReport> = Vec::new();
    for n in cfg.sizes() {
        for (name, split) in cfg.splits(n)? {
            let ev = evolver(&split)?;
            let spec = build_formula(&split, cfg.order)?;
            let terms = leading_error_terms(&split, cfg.order)?;
            let ctx = BoundContext::new(&split)?;
            let worst = worst_case_bound(&split, cfg.order, dt)?;
            let average = average_case_bound(&split, cfg.order, dt)?;
            for seed in env.seeds(cfg) {
                let (psi, label) = input_state(cfg, &split, &ev, seed)?;
                let empirical = empirical_step_error(&spec, &ev, &psi, dt)?;
                let concrete = if cfg.order == 1 {
                    ctx.pf1_bound(&psi, dt)?
                } else {
                    ctx.pf2_bound(&psi, dt, RemainderMode::Cascade)?
                };
                let mut reps = vec![
                    worst.clone(),
                    average.clone(),
                    distance_based_bound(&terms, &psi, dt)?,
                    entanglement_based_bound(&terms, &psi, dt)?,
                    light_cone_bound(&terms, &psi, dt, depth)?,
                    purity_based_bound(&terms, &psi, dt)?,
                    refined_pauli_bound(&terms, &psi, dt)?,
                    concrete,
                ];
                let row = |kind: &str, v: f64| -> Vec<Cell> {
                    vec![n.into(), name.as_str().into(), seed.into(), label.as_str().into(), kind.into(), v.into()]
                };
                table.push(row("empirical", empirical));
                for r in &reps {
                    table.push(row(&r.kind, r.value));
                }
                let concrete = reps.last().unwrap();
                if concrete.value < empirical {
                    out.flags.push(format!(
                        "{name} n={n} seed={seed}: {} {:e} below empirical {:e}",
                        concrete.kind, concrete.value, empirical
                    ));
                }
                let dist = reps[2].value;
                let late = matches!(cfg.state.as_deref(), Some("haar") | Some("evolved"));
                if late && in_entangled_regime(&reps[2], &worst) && !(average.value <= dist * (1.0 + 1e-12) && dist <= worst.value) {
                    out.flags.push(format!(
                        "{name} n={n} seed={seed}: ordering average {:e} <= distance {dist:e} <= worst {:e} fails",
                        average.value, worst.value
                    ));
                }
                for r in reps.iter_mut() {
                    *r = r.clone().with_state(format!("{name}/n={n}/seed={seed}/{label}"), cfg.total_time(n));
                }
                reports.extend(reps);
            }
        }
    }
    out.add_table("bounds", table);
    out.add_json("reports", &reports)?;
    Ok(out)
}

pub fn run_evolve(cfg: &ExperimentConfig, env: &RunEnv) -> Result<RunOutput> {
    let dt = cfg.dt.unwrap_or(0.01);
    let mut out = RunOutput::default();
    let mut table = Table::new(&["n", "set", "seed", "t", "steps", "trotter_distance", "energy", "half_chain_entropy"]);
    for n in cfg.sizes() {
        let total = cfg.total_time(n);
        let sample = cfg.t_step.unwrap_or(total / 10.0);
        let spans = (total / sample).round().max(1.0) as usize;
        for (name, split) in cfg.splits(n)? {
            let ev = evolver(&split)?;
            let spec = build_formula(&split, cfg.order)?;
            let h = split.hamiltonian();
            let half: Vec<usize> = (0..n / 2).collect();
            for seed in env.seeds(cfg) {
                let (psi0, _) = input_state(cfg, &split, &ev, seed)?;
                let mut exact = psi0.clone();
                let mut approx = psi0.clone();
                let mut steps = 0usize;
                for k in 0..=spans {
                    let t = k as f64 * total / spans as f64;
                    if k > 0 {
                        let span = total / spans as f64;
                        let r = (span / dt).ceil().max(1.0) as usize;
                        exact = ev.evolve(&exact, span)?;
                        spec.apply_steps(&mut approx, span / r as f64, r);
                        steps += r;
                    }
                    let s = von_neumann_entropy(&reduced_density_matrix(&exact, &half)?);
                    table.push(vec![
                        n.into(),
                        name.as_str().into(),
                        seed.into(),
                        t.into(),
                        steps.into(),
                        exact.distance(&approx).into(),
                        exact.expectation(&h)?.re.into(),
                        s.into(),
                    ]);
                }
                env.log(format!("evolve {name} n={n} seed={seed} done"));
                out.states.push((
                    format!("state_{name}_n{n}_seed{seed}.bin"),
                    approx,
                    format!("config={} seed={seed}", cfg.hash()),
                ));
            }
        }
    }
    out.add_table("trajectory", table);
    Ok(out)
}

pub fn run_worstcase(cfg: &ExperimentConfig, env: &RunEnv) -> Result<RunOutput> {
    if cfg.order > 2 {
        bail!("leading error operators cover orders 1 and 2");
    }
    let mut out = RunOutput::default();
    let mut table = Table::new(&[
        "n",
        "set",
        "label",
        "conditions_hold",
        "one_norm",
        "worst_state_norm",
        "zero_state_norm",
        "random_state_norm",
    ]);
    let seeds = env.seeds(cfg);
    let mut series: Vec<(String, Vec<(f64, f64)>, Vec<(f64, f64)>, Vec<(f64, f64)>)> = Vec::new();
    for n in cfg.sizes() {
        for (name, split) in cfg.splits(n)? {
            let e = leading_error_operator(&split, cfg.order)?;
            let check = check_worst_case_conditions(&e, 1e-9)?;
            let wc = build_worst_case_state(&e)?;
            let worst = wc.apply_norm(&e);
            let op = e.compile();
            let zero = trotter_core::linalg::norm(&StateVector::zero(n)?.apply_operator(&op));
            let mut rand_sum = 0.0;
            for &s in &seeds {
                let psi = StateVector::haar_random(n, &mut ChaCha8Rng::seed_from_u64(s))?;
                rand_sum += trotter_core::linalg::norm(&psi.apply_operator(&op));
            }
            let random = rand_sum / seeds.len() as f64;
            table.push(vec![
                n.into(),
                name.as_str().into(),
                wc.label().into(),
                check.satisfied.into(),
                e.one_norm().into(),
                worst.into(),
                zero.into(),
                random.into(),
            ]);
            let x = n as f64;
            match series.iter_mut().find(|s| s.0 == name) {
                Some(s) => {
                    s.1.push((x, worst));
                    s.2.push((x, zero));
                    s.3.push((x, random));
                }
                None => series.push((name.clone(), vec![(x, worst)], vec![(x, zero)], vec![(x, random)])),
            }
            env.log(format!("worstcase {name} n={n} done"));
        }
    }
    let mut fits = serde_json::Map::new();
    if cfg.sizes().len() >= 2 {
        for (name, w, z, r) in &series {
            let f = |p: &Vec<(f64, f64)>| loglog_fit(p).map(|(s, _)| s).unwrap_or(f64::NAN);
            fits.insert(
                name.clone(),
                json!({"worst_state_slope": f(w), "zero_state_slope": f(z), "random_state_slope": f(r)}),
            );
        }
    }
    out.add_table("worstcase", table);
    out.add_json("fits", &fits)?;
    if cfg.svg {
        let mut s = Vec::new();
        for (name, w, z, r) in &series {
            s.push(Series { label: format!("{name} worst"), points: w.clone() });
            s.push(Series { label: format!("{name} |0>"), points: z.clone() });
            s.push(Series { label: format!("{name} random"), points: r.clone() });
        }
        out.svgs.push(("worstcase".into(), svg_line_plot("||E psi|| vs N", "N", &s, true)));
    }
    Ok(out)
}

pub fn run_shadows(cfg: &ExperimentConfig, env: &RunEnv) -> Result<RunOutput> {
    if cfg.order > 2 {
        bail!("shadow error estimates cover orders 1 and 2");
    }
    let dt = cfg.dt.unwrap_or(0.01);
    let mut out = RunOutput::default();
    let mut table = Table::new(&[
        "n",
        "set",
        "seed",
        "shots",
        "estimate",
        "standard_error",
        "exact",
        "purity_support",
        "purity_estimate",
        "purity_exact",
    ]);
    for n in cfg.sizes() {
        let shots = cfg.shots.unwrap_or(64 * n * n);
        for (name, split) in cfg.splits(n)? {
            let ev = evolver(&split)?;
            let terms = leading_error_terms(&split, cfg.order)?;
            let support = middle_block(n, 2);
            for seed in env.seeds(cfg) {
                let (psi, label) = input_state(cfg, &split, &ev, seed)?;
                let sh = collect_shadows(&psi, shots, seed, format!("{name}/n={n}/{label}"))?;
                let est = estimate_trotter_error(&sh, &terms, dt)?;
                let pow = dt.powi(cfg.order as i32 + 1);
                let exact: f64 = terms.families.iter().map(|f| f.scale * pow * f.apply_norm(&psi)).sum();
                let p_est = estimate_purity_mom(&sh, &support, DEFAULT_MOM_BATCHES)?;
                let p_exact = trotter_core::entanglement::purity(&reduced_density_matrix(&psi, &support)?);
                table.push(vec![
                    n.into(),
                    name.as_str().into(),
                    seed.into(),
                    shots.into(),
                    est.value.into(),
                    est.se.into(),
                    exact.into(),
                    format!("{support:?}").into(),
                    p_est.into(),
                    p_exact.into(),
                ]);
                if seed == env.seeds(cfg)[0] {
                    out.binary.push((format!("shadows_{name}_n{n}.shdw"), sh.to_bytes()));
                }
            }
            env.log(format!("shadows {name} n={n} done"));
        }
    }
    out.add_table("shadows", table);
    Ok(out)
}

fn measurement_mode(cfg: &ExperimentConfig, n: usize) -> MeasurementMode {
    if cfg.exact_measurement {
        MeasurementMode::Exact
    } else {
        MeasurementMode::Shadows {
            shots: cfg.shots.unwrap_or(64 * n * n),
        }
    }
}

/// Adaptive sweep over checkpoint counts; returns the table and audit logs.
fn adaptive_sweep(cfg: &ExperimentConfig, env: &RunEnv, out: &mut RunOutput, n: usize, name: &str, split: &HamiltonianSplit) -> Result<Table> {
    let total = cfg.total_time(n);
    let eps = cfg.epsilon.unwrap_or(1e-5);
    let ctx = BoundContext::new(split)?;
    let ev = evolver(split)?;
    let psi0 = StateVector::zero(n)?;
    let worst = worst_case_steps(&ctx, total, eps, RemainderMode::PauliOneNorm)?;
    let average = average_case_steps(&ctx, total, eps, RemainderMode::PauliOneNorm)?;
    let counts = cfg.checkpoint_counts.clone().unwrap_or_else(|| vec![0, 1, 2, 4, 8]);
    let mut table = Table::new(&[
        "n",
        "set",
        "checkpoints",
        "seed",
        "total_steps",
        "bound_total",
        "end_state_error",
        "worst_case_steps",
        "average_case_steps",
    ]);
    for &count in &counts {
        let cps = match (&cfg.checkpoints, count) {
            (Some(c), _) if counts.len() == 1 => c.clone(),
            _ => uniform_checkpoints(total, count),
        };
        for seed in env.seeds(cfg) {
            let acfg = AdaptiveConfig::new(total, eps, cps.clone(), measurement_mode(cfg, n), seed);
            let run = core_run_adaptive(&ctx, &psi0, &acfg)?;
            let err = run.end_state_error(&ev, &psi0)?;
            if err > eps {
                out.flags.push(format!("{name} n={n} T={count} seed={seed}: end-state error {err:e} > {eps:e}"));
            }
            let mut audit = Vec::new();
            run.write_audit(&mut audit)?;
            out.text.push((format!("audit_{name}_n{n}_T{count}_seed{seed}.jsonl"), String::from_utf8(audit)?));
            table.push(vec![
                n.into(),
                name.into(),
                count.into(),
                seed.into(),
                run.plan.total_steps().into(),
                run.plan.bound_total().into(),
                err.into(),
                worst.into(),
                average.into(),
            ]);
            env.log(format!("adaptive {name} n={n} T={count} seed={seed}: r={}", run.plan.total_steps()));
        }
    }
    Ok(table)
}

fn concat(tables: Vec<Table>) -> Option<Table> {
    let mut it = tables.into_iter();
    let mut first = it.next()?;
    for t in it {
        first.rows.extend(t.rows);
    }
    Some(first)
}

pub fn run_adaptive(cfg: &ExperimentConfig, env: &RunEnv) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let mut tables = Vec::new();
    for n in cfg.sizes() {
        for (name, split) in cfg.splits(n)? {
            tables.push(adaptive_sweep(cfg, env, &mut out, n, &name, &split)?);
        }
    }
    if let Some(t) = concat(tables) {
        out.add_table("adaptive", t);
    }
    Ok(out)
}

/// Per-step error and entanglement along the exact trajectory from `|0>`.
pub fn run_fig1(cfg: &ExperimentConfig, env: &RunEnv) -> Result<RunOutput> {
    check_figure_cap(cfg)?;
    let dt = cfg.dt.unwrap_or(0.1);
    let mut out = RunOutput::default();
    let mut table = Table::new(&[
        "n", "set", "t", "pf1_step_error", "pf2_step_error", "pf1_spectral", "pf2_spectral", "pf1_frobenius",
        "pf2_frobenius", "s1", "s2", "s4",
    ]);
    let mut summary = serde_json::Map::new();
    for n in cfg.sizes() {
        let total = cfg.total_time(n);
        let sample = cfg.t_step.unwrap_or(0.1);
        let spans = (total / sample).round().max(1.0) as usize;
        for (name, split) in cfg.splits(n)? {
            let started = Instant::now();
            let ev = evolver(&split)?;
            let specs = [build_formula(&split, 1)?, build_formula(&split, 2)?];
            let opts = NormOptions {
                frobenius_exact_max_qubits: FIGURE_MAX_QUBITS,
                ..NormOptions::default()
            };
            let mut spectral = [0.0; 2];
            let mut frob = [0.0; 2];
            for k in 0..2 {
                spectral[k] = operator_norm_error(&specs[k], &ev, dt, 1, NormKind::Spectral, &opts)?;
                frob[k] = operator_norm_error(&specs[k], &ev, dt, 1, NormKind::Frobenius, &opts)?;
            }
            let blocks = [middle_block(n, 1), middle_block(n, 2), middle_block(n, 4.min(n))];
            let mut psi = StateVector::zero(n)?;
            let mut rows: Vec<[f64; 6]> = Vec::new();
            for k in 0..=spans {
                let t = k as f64 * total / spans as f64;
                if k > 0 {
                    psi = ev.evolve(&psi, total / spans as f64)?;
                }
                let e1 = empirical_step_error(&specs[0], &ev, &psi, dt)?;
                let e2 = empirical_step_error(&specs[1], &ev, &psi, dt)?;
                let mut s = [0.0; 3];
                for (j, b) in blocks.iter().enumerate() {
                    s[j] = von_neumann_entropy(&reduced_density_matrix(&psi, b)?);
                }
                rows.push([t, e1, e2, s[0], s[1], s[2]]);
                table.push(vec![
                    n.into(),
                    name.as_str().into(),
                    t.into(),
                    e1.into(),
                    e2.into(),
                    spectral[0].into(),
                    spectral[1].into(),
                    frob[0].into(),
                    frob[1].into(),
                    s[0].into(),
                    s[1].into(),
                    s[2].into(),
                ]);
            }
            // worst-case product state of the first-order leading term
            let wc = build_worst_case_state(&leading_error_operator(&split, 1)?)?;
            let wc_err = empirical_step_error(&specs[0], &ev, &wc.to_state()?, dt)?;
            let window: Vec<&[f64; 6]> = rows.iter().filter(|r| r[0] >= 0.8 * total - 1e-9).collect();
            let mean = |j: usize| window.iter().map(|r| r[j]).sum::<f64>() / window.len() as f64;
            let last = rows.last().unwrap();
            summary.insert(
                format!("{name}/n={n}"),
                json!({
                    "late_window": [0.8 * total, total],
                    "late_pf1_ratio": mean(1) / frob[0],
                    "late_pf2_ratio": mean(2) / frob[1],
                    "final_pf1_ratio": last[1] / frob[0],
                    "final_pf2_ratio": last[2] / frob[1],
                    "late_s4_mean": mean(5),
                    "late_s4_min": window.iter().map(|r| r[5]).fold(f64::INFINITY, f64::min),
                    "initial_pf1_step_error": rows[0][1],
                    "worst_state_label": wc.label(),
                    "worst_state_pf1_step_error": wc_err,
                    "pf1_spectral": spectral[0],
                    "pf2_spectral": spectral[1],
                    "pf1_frobenius": frob[0],
                    "pf2_frobenius": frob[1],
                }),
            );
            out.notes.push(format!("fig1 {name} n={n}: {:.1}s", started.elapsed().as_secs_f64()));
            env.log(out.notes.last().unwrap());
            if cfg.svg {
                let col = |j: usize| rows.iter().map(|r| (r[0], r[j])).collect::<Vec<_>>();
                let flat = |v: f64| vec![(0.0, v), (total, v)];
                let s = vec![
                    Series { label: "PF1 step".into(), points: col(1) },
                    Series { label: "PF2 step".into(), points: col(2) },
                    Series { label: "PF1 Frobenius".into(), points: flat(frob[0]) },
                    Series { label: "PF2 Frobenius".into(), points: flat(frob[1]) },
                ];
                out.svgs.push((format!("fig1_{name}_n{n}"), svg_line_plot(&format!("{name} N={n}"), "t", &s, true)));
            }
        }
    }
    out.add_table("fig1", table);
    out.add_json("summary", &summary)?;
    Ok(out)
}

/// Per-step theoretical curves, step counts per size and the adaptive sweep.
pub fn run_fig4(cfg: &ExperimentConfig, env: &RunEnv) -> Result<RunOutput> {
    check_figure_cap(cfg)?;
    let dt = cfg.dt.unwrap_or(1e-3);
    let eps = cfg.epsilon.unwrap_or(1e-5);
    let mut out = RunOutput::default();
    let mut curves = Table::new(&["n", "set", "order", "t", "worst_case", "distance_based", "average_case", "concrete"]);
    let mut steps = Table::new(&["n", "set", "worst_case", "distance_segmented", "average_case", "segments"]);
    let mut adaptive = Vec::new();
    let sizes = cfg.sizes();
    for &n in &sizes {
        let total = cfg.total_time(n);
        let sample = cfg.t_step.unwrap_or(total / 20.0);
        let spans = (total / sample).round().max(1.0) as usize;
        for (name, split) in cfg.splits(n)? {
            let ev = evolver(&split)?;
            let ctx = BoundContext::new(&split)?;
            let terms = [leading_error_terms(&split, 1)?, leading_error_terms(&split, 2)?];
            let worst = [worst_case_bound(&split, 1, dt)?.value, worst_case_bound(&split, 2, dt)?.value];
            let average = [average_case_bound(&split, 1, dt)?.value, average_case_bound(&split, 2, dt)?.value];
            let mut psi = StateVector::zero(n)?;
            for k in 0..=spans {
                let t = k as f64 * total / spans as f64;
                if k > 0 {
                    psi = ev.evolve(&psi, total / spans as f64)?;
                }
                for p in 0..2 {
                    let dist = distance_based_bound(&terms[p], &psi, dt)?.value;
                    let concrete = if p == 0 {
                        ctx.pf1_bound(&psi, dt)?.value
                    } else {
                        ctx.pf2_bound(&psi, dt, RemainderMode::Cascade)?.value
                    };
                    curves.push(vec![
                        n.into(),
                        name.as_str().into(),
                        (p + 1).into(),
                        t.into(),
                        worst[p].into(),
                        dist.into(),
                        average[p].into(),
                        concrete.into(),
                    ]);
                }
            }
            let psi0 = StateVector::zero(n)?;
            let w = worst_case_steps(&ctx, total, eps, RemainderMode::PauliOneNorm)?;
            let a = average_case_steps(&ctx, total, eps, RemainderMode::PauliOneNorm)?;
            let seg = segmented_long_time_bound(&ctx, &psi0, &ev, total, eps, 64, 0.01, RemainderMode::PauliOneNorm)?;
            if !(a <= seg.r_star && seg.r_star <= w) {
                out.flags.push(format!(
                    "{name} n={n}: segmented r {} outside [average {a}, worst {w}]",
                    seg.r_star
                ));
            }
            let c_final = seg.history.last().map(|h| h.0).unwrap_or(1);
            steps.push(vec![n.into(), name.as_str().into(), w.into(), seg.r_star.into(), a.into(), c_final.into()]);
            if n == *sizes.last().unwrap() {
                adaptive.push(adaptive_sweep(cfg, env, &mut out, n, &name, &split)?);
            }
            env.log(format!("fig4 {name} n={n} done"));
        }
    }
    out.add_table("fig4_curves", curves);
    out.add_table("fig4_steps", steps);
    if let Some(t) = concat(adaptive) {
        out.add_table("fig4_adaptive", t);
    }
    Ok(out)
}

/// Random-input norms above this size use the stochastic estimator.
pub const RANDOM_INPUT_DENSE_MAX: usize = 8;

/// Bytes held by the dense route at `n` qubits: exact, step and power matrices.
pub fn dense_memory_bytes(n: usize) -> u64 {
    let dim = 1u64 << n;
    4 * dim * dim * 16
}

/// Minimum step counts for each fig5 method.
pub fn run_fig5(cfg: &ExperimentConfig, env: &RunEnv) -> Result<RunOutput> {
    check_figure_cap(cfg)?;
    if cfg.order != 2 {
        bail!("fig5 uses the second-order formula");
    }
    let eps = cfg.epsilon.unwrap_or(1e-5);
    let methods: Vec<String> = cfg
        .methods
        .clone()
        .unwrap_or_else(|| FIG5_METHODS.iter().map(|s| s.to_string()).collect());
    let needs_spectral = methods.iter().any(|m| m == "empirical_spectral");
    let max_n = cfg.sizes().into_iter().max().unwrap();
    if needs_spectral && max_n > DENSE_DEFAULT_MAX {
        let gib = dense_memory_bytes(max_n) as f64 / (1u64 << 30) as f64;
        eprintln!("fig5: dense spectral norm at {max_n} qubits needs about {gib:.2} GiB");
        if !env.big_dense {
            bail!("spectral norms above {DENSE_DEFAULT_MAX} qubits require --big-dense");
        }
    }
    let mut out = RunOutput::default();
    let mut table = Table::new(&["n", "set", "method", "r"]);
    for n in cfg.sizes() {
        let total = cfg.total_time(n);
        for (name, split) in cfg.splits(n)? {
            let ev = evolver(&split)?;
            let spec = build_formula(&split, 2)?;
            let ctx = BoundContext::new(&split)?;
            let opts = NormOptions {
                dense_max_qubits: if env.big_dense { n.max(DENSE_DEFAULT_MAX) } else { DENSE_DEFAULT_MAX },
                seed: env.seeds(cfg)[0],
                ..NormOptions::default()
            };
            let psi0 = StateVector::zero(n)?;
            let average = average_case_steps(&ctx, total, eps, RemainderMode::PauliOneNorm)?;
            let mut found: Vec<(String, usize)> = Vec::new();
            for m in &methods {
                let started = Instant::now();
                let guess = found.last().map(|f| f.1).unwrap_or(average / 2).max(1);
                let r = fig5_method(m, &spec, &ev, &ctx, &psi0, total, eps, guess, &opts)
                    .with_context(|| format!("fig5 {m} for {name} n={n}"))?;
                out.notes.push(format!("fig5 {name} n={n} {m}: r={r} ({:.1}s)", started.elapsed().as_secs_f64()));
                env.log(out.notes.last().unwrap());
                table.push(vec![n.into(), name.as_str().into(), m.as_str().into(), r.into()]);
                found.push((m.clone(), r));
            }
            let get = |k: &str| found.iter().find(|f| f.0 == k).map(|f| f.1);
            if let (Some(a), Some(s), Some(w)) =
                (get("theoretical_average"), get("distance_segmented"), get("theoretical_worst"))
            {
                if !(a <= s && s <= w) {
                    out.flags.push(format!("{name} n={n}: segmented r {s} outside [average {a}, worst {w}]"));
                }
            }
        }
    }
    if cfg.svg {
        let mut s = Vec::new();
        for (name, _) in cfg.splits(max_n)? {
            for m in &methods {
                let sub = table.filter("set", &name).filter("method", m);
                let pts = sub.numbers("n").into_iter().zip(sub.numbers("r")).collect();
                s.push(Series { label: format!("{name} {m}"), points: pts });
            }
        }
        out.svgs.push(("fig5".into(), svg_line_plot("Trotter steps vs N", "N", &s, true)));
    }
    out.add_table("fig5", table);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn fig5_method(
    method: &str,
    spec: &FormulaSpec,
    ev: &ExactEvolver,
    ctx: &BoundContext,
    psi0: &StateVector,
    t: f64,
    eps: f64,
    guess: usize,
    opts: &NormOptions,
) -> Result<usize> {
    const R_MAX: usize = 100_000_000;
    let r = match method {
        "empirical_spectral" => find_min_steps(
            |r| operator_norm_error(spec, ev, t, r, NormKind::Spectral, opts),
            eps,
            guess,
            2.0,
            R_MAX,
        )?,
        "empirical_random_input" => {
            // Haar sampling beats dense powers above this size
            let opts = NormOptions {
                dense_max_qubits: opts.dense_max_qubits.min(RANDOM_INPUT_DENSE_MAX),
                frobenius_exact_max_qubits: opts.frobenius_exact_max_qubits.min(RANDOM_INPUT_DENSE_MAX),
                ..opts.clone()
            };
            find_min_steps(
                |r| operator_norm_error(spec, ev, t, r, NormKind::Frobenius, &opts),
                eps,
                guess,
                2.0,
                R_MAX,
            )?
        }
        "empirical_state" => find_min_steps(|r| empirical_error(spec, ev, psi0, t, r), eps, guess, 2.0, R_MAX)?,
        "theoretical_worst" => worst_case_steps(ctx, t, eps, RemainderMode::PauliOneNorm)?,
        "theoretical_average" => average_case_steps(ctx, t, eps, RemainderMode::PauliOneNorm)?,
        "distance_segmented" => {
            segmented_long_time_bound(ctx, psi0, ev, t, eps, 64, 0.01, RemainderMode::PauliOneNorm)?.r_star
        }
        other => bail!("unknown fig5 method '{other}'"),
    };
    Ok(r)
}

use std::time::Instant;

use log::info;
use qhe_core::compact::{
    battery_split, build_interaction_hamiltonian, clausius_check, default_time_grid, efficiency_and_power,
    evolve_cycle, speed_and_geodesic, CompactEngineConfig, CycleReport,
};
use qhe_core::cycle::DEFAULT_SAMPLES;
use qhe_core::designer::{
    mc_optimize, validate_design, AnnealSchedule, DesignTargets, PotentialAnsatz, DEFAULT_B_DEGREE, DEFAULT_Q,
    DEFAULT_V_DEGREE,
};
use qhe_core::optics::{
    adiabatic_elimination_error, compare_models, run_optics_cycle, stimulated_emission_bookkeeping, vacuum_probability,
    CouplingProfile, OpticsEngineConfig, ProfileKind, SWEEP_MIN_RATIO,
};
use qhe_core::slto::{read_matrix, verify_slto, write_matrix, SltoInputs};
use qhe_core::tensor::{Operator, Spectrum, SubsystemLayout};
use qhe_core::thermal::{truncation_for_tail, DEFAULT_TAIL_DELTA};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::params::{
    resolve, AbstractCycleParams, CommonArgs, DeltaSweepParams, DesignParams, OpticsCycleParams, VerifySltoParams,
};
use crate::report::{ensure_dir, write_csv, write_json, write_text, Check, Report};

const RESIDUAL_TOL: f64 = 1e-10;
const PHYSICS_TOL: f64 = 1e-9;

/// Writes the report (and the series, if asked) and returns whether all
/// checks passed.
fn finish(common: &CommonArgs, mut report: Report, started: Instant) -> Result<bool, CliError> {
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    let text = write_json(&common.out.join("report.json"), &report)?;
    if common.json_report {
        print!("{text}");
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        log::warn!("check {} failed: {} (threshold {})", c.name, c.value, c.threshold);
    }
    Ok(report.passed)
}

fn cycle_json(report: &CycleReport) -> Value {
    let mut v = serde_json::to_value(report).expect("cycle report serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("series");
    }
    v
}

fn cycle_checks(report: &CycleReport) -> Vec<Check> {
    let clausius = clausius_check(report);
    vec![
        Check::at_most("commutator_energy", report.commutator_residual_energy, RESIDUAL_TOL),
        Check::at_most("commutator_weighted", report.commutator_residual_weighted, RESIDUAL_TOL),
        Check::at_most("unitarity", report.unitarity_residual, RESIDUAL_TOL),
        Check::at_most("clausius", clausius.residual, PHYSICS_TOL),
        Check::at_most(
            "carnot_efficiency",
            (report.eta - (1.0 - report.beta1 / report.beta2)).abs(),
            PHYSICS_TOL,
        ),
        Check::at_most("block_amplitudes", report.amplitude_residual, RESIDUAL_TOL),
        Check::at_most("entanglement_endpoints", report.entanglement_endpoint_max, PHYSICS_TOL),
    ]
}

fn parse_profile(name: Option<&str>) -> Result<ProfileKind, CliError> {
    match name.unwrap_or("ladder-matched") {
        "ladder-matched" => Ok(ProfileKind::LadderMatched),
        "intensity-inverse" => Ok(ProfileKind::IntensityInverse),
        other => Err(CliError::Usage(format!(
            "unknown profile `{other}` (ladder-matched, intensity-inverse)"
        ))),
    }
}

fn cutoff(omega: f64, beta: f64, tail: f64) -> Result<usize, CliError> {
    Ok(truncation_for_tail(omega, beta, tail)?.n_max_used)
}

pub fn abstract_cycle(common: &CommonArgs, flags: &AbstractCycleParams) -> Result<bool, CliError> {
    let started = Instant::now();
    let p = resolve("abstract-cycle", flags, common.config.as_deref())?;
    let beta1 = p.beta1.unwrap_or(0.5);
    let beta2 = p.beta2.unwrap_or(1.0);
    let omega1 = p.omega1.unwrap_or(2.0);
    let omega2 = p.omega2.unwrap_or(beta1 * omega1 / beta2);
    let tail = p.tail_delta.unwrap_or(DEFAULT_TAIL_DELTA);
    let a0 = p.a0.unwrap_or(0.0);
    let a1 = p.a1.unwrap_or(a0 + omega1 - omega2);
    let n_max1 = match p.n_max1 {
        Some(n) => n,
        None => cutoff(omega1, beta1, tail)?,
    };
    let n_max2 = match p.n_max2 {
        Some(n) => n,
        None => cutoff(omega2, beta2, tail)?,
    };
    let cfg = CompactEngineConfig::new(
        beta1,
        beta2,
        omega1,
        omega2,
        p.g.unwrap_or(0.05),
        n_max1,
        n_max2,
        a0,
        a1,
    )?;
    let samples = p.samples.unwrap_or(DEFAULT_SAMPLES);
    let lambda = p.lambda.unwrap_or(0.0);
    let split = battery_split(beta1, beta2, cfg.work_per_cycle(), lambda)?;
    info!("abstract cycle: dim {}, {samples} samples", cfg.layout().total_dim());

    let report = evolve_cycle(&cfg, &default_time_grid(cfg.g, samples))?;
    let eff = efficiency_and_power(&report)?;
    let speed = speed_and_geodesic(&report);
    let mut checks = cycle_checks(&report);
    checks.push(Check::at_most("speed", speed.max_speed_deviation, PHYSICS_TOL));
    checks.push(Check::at_most(
        "fubini_study_distance",
        speed.max_distance_deviation,
        PHYSICS_TOL,
    ));
    checks.push(Check::at_most(
        "battery_constraint",
        split.constraint_residual(beta1, beta2, cfg.work_per_cycle()).abs(),
        1e-12,
    ));

    ensure_dir(&common.out)?;
    if common.series {
        write_csv(&common.out.join("series.csv"), &report.series)?;
    }
    if p.export_matrices.unwrap_or(false) {
        export_matrices(&common.out, &cfg)?;
    }
    let mut result = cycle_json(&report);
    result["efficiency"] = json!(eff);
    result["speed"] = json!(speed);
    result["battery_split"] = json!(split);
    let config = json!({
        "cycle": cfg,
        "samples": samples,
        "lambda": lambda,
        "tail_delta": tail,
        "seed": common.seed.or(p.seed),
    });
    finish(common, Report::new("abstract-cycle", config, checks, result), started)
}

/// `U(τ)` and the three energy operators of the compact engine, for
/// `verify-slto`.
fn export_matrices(dir: &std::path::Path, cfg: &CompactEngineConfig) -> Result<(), CliError> {
    let layout = cfg.layout();
    let u = Spectrum::of(&build_interaction_hamiltonian(cfg))?.propagator(cfg.tau());
    let diag = |f: &dyn Fn(&[usize]) -> f64| {
        let d: Vec<f64> = (0..layout.total_dim()).map(|i| f(&layout.split(i))).collect();
        Operator::from_real_diagonal(&d)
    };
    let h1 = diag(&|p| cfg.omega1 * p[0] as f64);
    let h2 = diag(&|p| cfg.omega2 * p[1] as f64);
    let hs = diag(&|p| if p[2] == 0 { cfg.a0 } else { cfg.a1 });
    for (name, op) in [("U_tau.txt", &u), ("H1.txt", &h1), ("H2.txt", &h2), ("HS.txt", &hs)] {
        write_text(&dir.join(name), &write_matrix(op.matrix(), &layout, Some((0, 1)))?)?;
    }
    Ok(())
}

pub fn optics_cycle(common: &CommonArgs, flags: &OpticsCycleParams) -> Result<bool, CliError> {
    let started = Instant::now();
    let p = resolve("optics-cycle", flags, common.config.as_deref())?;
    let beta1 = p.beta1.unwrap_or(0.5);
    let beta2 = p.beta2.unwrap_or(1.0);
    let omega1 = p.omega1.unwrap_or(2.0);
    let omega2 = p.omega2.unwrap_or(beta1 * omega1 / beta2);
    let tail = p.tail_delta.unwrap_or(DEFAULT_TAIL_DELTA);
    let kind = parse_profile(p.profile.as_deref())?;
    let cfg = OpticsEngineConfig::from_effective(
        (beta1, beta2),
        (omega1, omega2),
        p.g.unwrap_or(0.05),
        p.ratio.unwrap_or(40.0),
        tail,
    )?;
    let samples = p.samples.unwrap_or(DEFAULT_SAMPLES);
    info!("optics cycle: Delta = {}, g_k = {}", cfg.detuning(), cfg.g1);

    let report = run_optics_cycle(&cfg, &default_time_grid(cfg.effective_coupling(), samples))?;
    let work = stimulated_emission_bookkeeping(&report);
    let p_vac = vacuum_probability(&cfg);
    let mut checks = cycle_checks(&report);
    let excited = report.final_populations[1] + report.truncation_weight;
    checks.push(Check::at_most(
        "final_state_formula",
        (excited - (1.0 - p_vac)).abs(),
        2.0 * tail.max(5e-7),
    ));

    let mut result = cycle_json(&report);
    result["work"] = json!(work);
    result["vacuum_probability"] = json!(p_vac);
    if p.compare_full.unwrap_or(false) {
        let cmp = compare_models(&cfg, &CouplingProfile::of_kind(kind, &cfg))?;
        checks.push(Check::at_most("full_model_norm", cmp.norm_residual, RESIDUAL_TOL));
        result["full_model"] = json!(cmp);
    }

    ensure_dir(&common.out)?;
    if common.series {
        write_csv(&common.out.join("series.csv"), &report.series)?;
    }
    let config = json!({
        "optics": cfg,
        "samples": samples,
        "tail_delta": tail,
        "profile": kind,
        "compare_full": p.compare_full.unwrap_or(false),
        "seed": common.seed.or(p.seed),
    });
    finish(common, Report::new("optics-cycle", config, checks, result), started)
}

#[derive(Serialize)]
struct SweepRow {
    ratio: f64,
    delta: f64,
    g_k: f64,
    population_deviation: f64,
    leaked_population: f64,
    norm_residual: f64,
}

pub fn delta_sweep(common: &CommonArgs, flags: &DeltaSweepParams) -> Result<bool, CliError> {
    let started = Instant::now();
    let p = resolve("delta-sweep", flags, common.config.as_deref())?;
    let beta1 = p.beta1.unwrap_or(0.5);
    let beta2 = p.beta2.unwrap_or(1.0);
    let omega1 = p.omega1.unwrap_or(2.0);
    let omega2 = p.omega2.unwrap_or(beta1 * omega1 / beta2);
    let g = p.g.unwrap_or(0.05);
    let tail = p.tail_delta.unwrap_or(DEFAULT_TAIL_DELTA);
    let ratios = p.ratios.clone().unwrap_or_else(|| vec![20.0, 40.0, 80.0, 160.0]);
    let kind = parse_profile(p.profile.as_deref())?;
    let smallest = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    if ratios.len() < 2 || !smallest.is_finite() {
        return Err(CliError::Usage("a sweep needs at least two detuning ratios".into()));
    }
    if smallest < SWEEP_MIN_RATIO {
        return Err(CliError::Usage(format!(
            "detuning ratio {smallest} is below {SWEEP_MIN_RATIO}; the effective model is not meaningful there"
        )));
    }
    let cfg = OpticsEngineConfig::from_effective((beta1, beta2), (omega1, omega2), g, smallest, tail)?;
    let deltas: Vec<f64> = ratios.iter().map(|r| g * r * r).collect();
    info!("delta sweep over {deltas:?}");
    let sweep = adiabatic_elimination_error(&cfg, kind, &deltas)?;

    let checks = vec![
        Check::flag("deviation_monotone", sweep.deviation_monotone),
        Check::within("deviation_slope", sweep.deviation_slope.unwrap_or(f64::NAN), -1.4, -0.6),
        Check::within(
            "leak_slope_vs_ratio",
            sweep.leak_slope_vs_ratio.unwrap_or(f64::NAN),
            -2.5,
            -1.5,
        ),
        Check::at_most(
            "full_model_norm",
            sweep.points.iter().map(|c| c.norm_residual).fold(0.0, f64::max),
            RESIDUAL_TOL,
        ),
    ];

    ensure_dir(&common.out)?;
    let rows: Vec<SweepRow> = sweep
        .points
        .iter()
        .zip(&ratios)
        .map(|(c, &ratio)| SweepRow {
            ratio,
            delta: c.delta,
            g_k: c.g1,
            population_deviation: c.population_deviation,
            leaked_population: c.leaked_population,
            norm_residual: c.norm_residual,
        })
        .collect();
    write_csv(&common.out.join("sweep.csv"), &rows)?;
    let config = json!({
        "optics": cfg,
        "ratios": ratios,
        "deltas": deltas,
        "tail_delta": tail,
        "profile": kind,
        "seed": common.seed.or(p.seed),
    });
    finish(common, Report::new("delta-sweep", config, checks, &sweep), started)
}

#[derive(Serialize)]
struct DesignFile<'a> {
    schema_version: u32,
    seed: u64,
    targets_kind: &'a str,
    targets: &'a DesignTargets,
    schedule: &'a AnnealSchedule,
    start: &'a PotentialAnsatz,
    best: &'a PotentialAnsatz,
    initial_cost: f64,
    best_cost: f64,
    tables: &'a qhe_core::designer::FockTables,
    accepted: usize,
    accepted_worse: usize,
}

pub fn design(common: &CommonArgs, flags: &DesignParams) -> Result<bool, CliError> {
    let started = Instant::now();
    let p = resolve("design", flags, common.config.as_deref())?;
    let seed = common.seed.or(p.seed).unwrap_or(42);
    let n_fit = p.n_fit.unwrap_or(6);
    let q = p.q.unwrap_or(DEFAULT_Q);
    let defaults = AnnealSchedule::default();
    let schedule = AnnealSchedule::new(
        p.iterations.unwrap_or(defaults.iterations),
        p.proposal_scale.unwrap_or(defaults.proposal_scale),
        p.mc_temperature.unwrap_or(defaults.mc_temperature),
        seed,
    )?;
    let targets_kind = p.targets.clone().unwrap_or_else(|| "intensity-inverse".into());
    let g_k = p.g_k.unwrap_or(2.0);
    let delta = p.delta.unwrap_or(80.0);

    let (targets, start) = match targets_kind.as_str() {
        "intensity-inverse" => {
            let start = PotentialAnsatz::zeros(
                p.v_degree.unwrap_or(DEFAULT_V_DEGREE),
                p.b_degree.unwrap_or(DEFAULT_B_DEGREE),
            )?;
            let mut targets = DesignTargets::intensity_inverse(g_k, delta, n_fit, q)?;
            targets.n_work = targets.n_work.max(qhe_core::designer::default_workspace(n_fit, &start));
            (targets, start)
        }
        "ansatz" => {
            let generator = PotentialAnsatz::new(
                p.target_v.clone().unwrap_or_else(|| vec![1.0, 0.1]),
                p.target_b.clone().unwrap_or_else(|| vec![1.0]),
            )?;
            let scale = 1.0 + p.start_perturbation.unwrap_or(0.1);
            let start = PotentialAnsatz::new(
                generator.v_coeffs.iter().map(|c| c * scale).collect(),
                generator.b_coeffs.iter().map(|c| c * scale).collect(),
            )?;
            (DesignTargets::from_ansatz(&generator, n_fit, q)?, start)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown targets `{other}` (intensity-inverse, ansatz)"
            )))
        }
    };
    info!(
        "design: {} coefficients, {} iterations, seed {seed}",
        start.len(),
        schedule.iterations
    );
    let mc = mc_optimize(&start, &targets, &schedule)?;

    let mut checks = vec![Check::at_most("cost_not_increased", mc.best_cost, mc.initial_cost)];
    if targets_kind == "ansatz" {
        checks.push(Check::at_most("relative_cost", mc.best_cost / mc.initial_cost, 0.01));
    }
    let mut result = json!({
        "best": mc.best,
        "best_cost": mc.best_cost,
        "initial_cost": mc.initial_cost,
        "best_tables": mc.best_tables,
        "accepted": mc.accepted,
        "accepted_worse": mc.accepted_worse,
    });
    if p.validate.unwrap_or(false) {
        let cfg = OpticsEngineConfig::standard();
        let v = validate_design(&mc.best_tables, &CouplingProfile::intensity_inverse(&cfg), &cfg)?;
        result["validation"] = json!(v);
    }

    ensure_dir(&common.out)?;
    write_csv(&common.out.join("trace.csv"), &mc.trace)?;
    let file = DesignFile {
        schema_version: crate::report::SCHEMA_VERSION,
        seed,
        targets_kind: &targets_kind,
        targets: &targets,
        schedule: &schedule,
        start: &start,
        best: &mc.best,
        initial_cost: mc.initial_cost,
        best_cost: mc.best_cost,
        tables: &mc.best_tables,
        accepted: mc.accepted,
        accepted_worse: mc.accepted_worse,
    };
    write_json(&common.out.join("design.json"), &file)?;
    let config = json!({
        "targets": targets_kind,
        "n_fit": n_fit,
        "q": q,
        "g_k": g_k,
        "delta": delta,
        "schedule": schedule,
        "start": start,
        "validate": p.validate.unwrap_or(false),
    });
    finish(common, Report::new("design", config, checks, result), started)
}

fn load_matrix(path: Option<&std::path::Path>, name: &str) -> Result<qhe_core::slto::MatrixFile, CliError> {
    let path = path.ok_or_else(|| CliError::Usage(format!("--{name} is required")))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_matrix(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn verify(common: &CommonArgs, flags: &VerifySltoParams) -> Result<bool, CliError> {
    let started = Instant::now();
    let p = resolve("verify-slto", flags, common.config.as_deref())?;
    let beta1 = p.beta1.ok_or_else(|| CliError::Usage("--beta1 is required".into()))?;
    let beta2 = p.beta2.ok_or_else(|| CliError::Usage("--beta2 is required".into()))?;
    let u = load_matrix(p.unitary.as_deref(), "unitary")?;
    let h1 = load_matrix(p.h1.as_deref(), "h1")?;
    let h2 = load_matrix(p.h2.as_deref(), "h2")?;
    let hs = match p.hs.as_deref() {
        Some(path) => Some(load_matrix(Some(path), "hs")?),
        None => None,
    };
    let layout: SubsystemLayout = u.layout.clone();
    let unitary = Operator::new(u.matrix)?;
    let h1 = Operator::hermitian(h1.matrix)?;
    let h2 = Operator::hermitian(h2.matrix)?;
    let hs = hs.map(|m| Operator::hermitian(m.matrix)).transpose()?;
    let report = verify_slto(&SltoInputs {
        unitary: &unitary,
        h1: &h1,
        h2: &h2,
        hs: hs.as_ref(),
        layout: &layout,
        baths: u.baths,
        beta1,
        beta2,
    })?;
    let checks = vec![
        Check::at_most("unitarity", report.unitarity_residual, report.threshold),
        Check::at_most("commutator_energy", report.energy_residual, report.threshold),
        Check::at_most("commutator_weighted", report.weighted_residual, report.threshold),
        Check::at_most("semi_gibbs_fixed_point", report.fixed_point_residual, report.threshold),
    ];
    ensure_dir(&common.out)?;
    let config = json!({
        "unitary": p.unitary,
        "h1": p.h1,
        "h2": p.h2,
        "hs": p.hs,
        "beta1": beta1,
        "beta2": beta2,
        "layout": layout.dims(),
        "baths": u.baths,
    });
    finish(common, Report::new("verify-slto", config, checks, &report), started)
}

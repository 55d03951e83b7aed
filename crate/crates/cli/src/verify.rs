use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

use tangentlab::analysis::{
    hardy_check, minimality_probe, random_piecewise_linear, seed, solve_natural_bvp, winding_record, PiecewiseLinear,
    ShootingConfig,
};
use tangentlab::dynamics::{EventKind, Trajectory};
use tangentlab::energy::{density_profile, monotonicity_check};
use tangentlab::potential::TargetPoint;
use tangentlab::{integrate, EventSpec, Model, State};

use crate::commands::write_json;
use crate::config::{output_dir, Loaded, RunConfig, SCHEMA_VERSION};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Hamiltonian,
    Monotonicity,
    Strip,
    Hardy,
    Bvp,
    Minimality,
}

pub const ALL: [Suite; 6] = [Suite::Hamiltonian, Suite::Monotonicity, Suite::Strip, Suite::Hardy, Suite::Bvp, Suite::Minimality];

pub fn parse_suite(name: &str) -> Result<Vec<Suite>, CliError> {
    Ok(match name {
        "hamiltonian" => vec![Suite::Hamiltonian],
        "monotonicity" => vec![Suite::Monotonicity],
        "strip" => vec![Suite::Strip],
        "hardy" => vec![Suite::Hardy],
        "bvp" => vec![Suite::Bvp],
        "minimality" => vec![Suite::Minimality],
        "all" => ALL.to_vec(),
        _ => return Err(CliError::Usage(format!("unknown suite {name:?}"))),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

fn check(name: &str, measured: f64, tolerance: f64, passed: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), passed, measured, tolerance, detail: detail.into() }
}

/// `measured <= tolerance`.
fn at_most(name: &str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Check {
    check(name, measured, tolerance, measured <= tolerance, detail)
}

#[derive(Serialize)]
struct SuiteReport {
    suite: Suite,
    passed: bool,
    checks: Vec<Check>,
}

#[derive(Serialize)]
struct VerifyReport {
    schema_version: u32,
    config_hash: String,
    suites: Vec<SuiteReport>,
    passed: bool,
}

fn needs_rng(suite: Suite) -> bool {
    matches!(suite, Suite::Hamiltonian | Suite::Monotonicity | Suite::Hardy | Suite::Minimality)
}

pub fn run(loaded: &Loaded, suites: &[Suite]) -> Result<bool, CliError> {
    let cfg = &loaded.config;
    if suites.iter().any(|s| needs_rng(*s)) && cfg.verify.rng_seed.is_none() {
        return Err(CliError::Usage("verify.rng_seed is required for this suite".into()));
    }
    Model::new(cfg.params)?;
    let dir = output_dir(cfg, "verify")?;
    let mut reports = Vec::new();
    for &suite in suites {
        let checks = match suite {
            Suite::Hamiltonian => hamiltonian(cfg)?,
            Suite::Monotonicity => monotonicity(cfg)?,
            Suite::Strip => strip(cfg)?,
            Suite::Hardy => hardy(cfg)?,
            Suite::Bvp => bvp(cfg)?,
            Suite::Minimality => minimality(cfg)?,
        };
        let passed = checks.iter().all(|c| c.passed);
        for c in &checks {
            eprintln!("[{}] {:?}/{}: {}", if c.passed { "PASS" } else { "FAIL" }, suite, c.name, c.detail);
        }
        reports.push(SuiteReport { suite, passed, checks });
    }
    let passed = reports.iter().all(|r| r.passed);
    let report = VerifyReport { schema_version: SCHEMA_VERSION, config_hash: loaded.hash.clone(), suites: reports, passed };
    write_json(&dir.join("verify.json"), &report)?;
    Ok(passed)
}

fn rng(cfg: &RunConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.verify.rng_seed.expect("checked by run"))
}

fn seed_model(cfg: &RunConfig) -> Result<Model, CliError> {
    Ok(Model::new(cfg.params.with_kappa(cfg.verify.seed_kappa))?)
}

fn seed_run_to_y1(n: i64, model: &Model, cfg: &RunConfig, extra: &[EventSpec]) -> Result<Trajectory, CliError> {
    let mut events = vec![EventSpec::YCrossing { level: 1.0, terminal: true }];
    events.extend_from_slice(extra);
    Ok(integrate(seed(n)?, model, &cfg.integrator.config([0.0, 1000.0])?, &events)?)
}

fn reached_y1(traj: &Trajectory) -> bool {
    traj.events.iter().any(|e| matches!(e.kind, EventKind::YCrossing { .. }) && e.terminal)
}

fn hamiltonian(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let model = Model::new(cfg.params)?;
    let icfg = cfg.integrator.config([0.0, 20.0])?;
    let mut rng = rng(cfg);
    let (mut worst_res, mut worst_incr): (f64, f64) = (0.0, f64::NEG_INFINITY);
    let mut failures = 0;
    let mut runs = 0;
    while runs < cfg.verify.samples {
        let s0 = State {
            pt: TargetPoint::new(rng.gen_range(-PI..PI), rng.gen_range(0.05..2.0)),
            vel: [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)],
            t: 0.0,
        };
        let h0 = model.hamiltonian(&s0);
        if h0 >= 0.0 {
            continue;
        }
        runs += 1;
        let traj = integrate(s0, &model, &icfg, &[])?;
        worst_res = worst_res.max(traj.hamiltonian_residual() / (1.0 + h0.abs()));
        worst_incr = worst_incr.max(traj.max_hamiltonian_increase(1e-9));
        failures += usize::from(traj.failure.is_some());
    }

    let free = Model::zero_potential(cfg.params)?;
    let u0 = TargetPoint::new(0.3, 0.4);
    let traj = integrate(State { pt: u0, vel: [1.0, 0.0], t: 0.0 }, &free, &cfg.integrator.config([0.0, 3.0])?, &[])?;
    let alpha = free.derived.alpha;
    let mut dev: f64 = 0.0;
    for k in 0..=3000 {
        let t = 3.0 * k as f64 / 3000.0;
        let s = traj.state_at(t).expect("inside span");
        let theta = u0.theta + (1.0 - (-alpha * t).exp()) / alpha;
        dev = dev.max((s.pt.theta - theta).abs()).max((s.pt.y - u0.y).abs());
    }
    Ok(vec![
        at_most("dissipation_identity", worst_res, 1e-7, format!("{runs} runs from H < 0, max residual / (1 + |H0|) = {worst_res:.3e}")),
        at_most("h_nonincreasing", worst_incr, 0.0, format!("max increase of H beyond 1e-9 = {worst_incr:.3e}")),
        at_most("integration_failures", failures as f64, 0.0, format!("{failures} failed runs")),
        at_most("free_motion_closed_form", dev, 1e-8, format!("max deviation on [0, 3] = {dev:.3e}")),
    ])
}

fn monotonicity(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let model = Model::new(cfg.params)?;
    let mut rng = rng(cfg);
    let mut runs = vec![integrate(seed(1)?, &seed_model(cfg)?, &cfg.integrator.config([0.0, 50.0])?, &[])?];
    for _ in 0..5 {
        let pt = TargetPoint::new(rng.gen_range(-PI..PI), rng.gen_range(0.2..1.5));
        runs.push(integrate(State::at_rest(pt, 0.0), &model, &cfg.integrator.config([0.0, 10.0])?, &[])?);
    }
    let (mut dec, mut rel, mut tail): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for traj in &runs {
        let m = &traj.model;
        let (lo, hi) = traj.span();
        let grid: Vec<f64> = (0..=200).map(|k| lo + (hi - lo) * k as f64 / 200.0).collect();
        let prof = density_profile(traj, &grid)?;
        dec = dec.max(prof.max_relative_decrease());
        for w in grid.windows(2).step_by(20) {
            rel = rel.max(monotonicity_check(traj, w[0], hi.min(w[0] + 0.5 * (hi - lo)))?.rel_err);
        }
        let d = m.derived;
        let expected = d.omega * m.bhat(traj.first().state.pt).powf(d.beta) / d.alpha;
        tail = tail.max((prof.theta_values[0] - expected).abs() / expected);
    }
    Ok(vec![
        at_most("density_nondecreasing", dec, 1e-8, format!("{} runs, max relative decrease = {dec:.3e}", runs.len())),
        at_most("two_sided_formula", rel, 1e-6, format!("max relative error = {rel:.3e}")),
        at_most("rest_tail_identity", tail, 1e-10, format!("max relative error = {tail:.3e}")),
    ])
}

fn strip(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let model = seed_model(cfg)?;
    let h_crit = model.derived.h_crit;
    let gaps: Vec<f64> = (1..=4).map(|n| Ok(h_crit - model.hamiltonian(&seed(n)?))).collect::<Result<_, CliError>>()?;
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let mut checks = vec![check(
        "seed_gaps",
        min_gap,
        0.0,
        min_gap > 0.0 && decreasing,
        format!("h_crit - H(seed_n), n = 1..4: [{}], decreasing = {decreasing}", gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>().join(", ")),
    )];
    for n in [1, 2] {
        let traj = seed_run_to_y1(n, &model, cfg, &[EventSpec::StripChange, EventSpec::PotentialSign])?;
        let rec = winding_record(&traj, 0.0);
        let ok = reached_y1(&traj) && rec.valid && rec.strip_constant && rec.sign_constant;
        checks.push(check(
            &format!("strip_confinement_n{n}"),
            rec.min_wall_distance,
            1e-8,
            ok && rec.min_wall_distance > 1e-8,
            format!("strip {}, {} events, min wall distance = {:.3e}", rec.strip_index, traj.events.len() - 1, rec.min_wall_distance),
        ));
    }
    let traj = seed_run_to_y1(2, &model, cfg, &[])?;
    let mut fewest = i64::MAX;
    let mut ok = reached_y1(&traj);
    for theta_ref in [0.0, PI / 2.0, PI, 1.5 * PI] {
        let rec = winding_record(&traj, theta_ref);
        ok &= rec.predicted_min_crossings >= 1 && rec.crossings() as u64 >= rec.predicted_min_crossings;
        fewest = fewest.min(rec.crossings() as i64 - rec.predicted_min_crossings as i64);
    }
    checks.push(check("winding_n2", fewest as f64, 0.0, ok, format!("min over references of crossings - predicted = {fewest}")));
    Ok(checks)
}

fn hardy(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let ramp = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 0.0)])?;
    let r = hardy_check(7, 2.0, &ramp)?;
    let err = (r.lhs - 5.0 / 21.0).abs().max((r.rhs - 4.0 / 7.0).abs());
    let mut rng = rng(cfg);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let pieces = rng.gen_range(1..10);
        let w = random_piecewise_linear(&mut rng, pieces);
        let res = hardy_check(cfg.params.m, cfg.params.p, &w)?;
        if res.rhs > 0.0 {
            worst = worst.max(res.lhs / res.rhs);
        }
    }
    Ok(vec![
        at_most("ramp_closed_form", err, 1e-8, format!("m = 7, p = 2: lhs = {:.12} (5/21), rhs = {:.12} (4/7)", r.lhs, r.rhs)),
        at_most("random_profiles", worst, 1.0, format!("50 profiles, m = {}, p = {}: max lhs/rhs = {worst:.6}", cfg.params.m, cfg.params.p)),
    ])
}

fn bvp(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let scfg = ShootingConfig::default();
    let free = Model::zero_potential(cfg.params)?;
    let u0 = TargetPoint::new(0.9, 0.35);
    let rest = solve_natural_bvp(u0, -5.0, &free, &scfg)?;
    let drift = rest
        .trajectory
        .samples
        .iter()
        .map(|s| (s.state.pt.theta - u0.theta).abs().max((s.state.pt.y - u0.y).abs()))
        .fold(0.0, f64::max);

    // the recovery oracle needs a unique solution, which White's potential gives
    let model = Model::new(cfg.params.with_kappa(1.0))?;
    let t_len = 2.0;
    let s0 = State::at_rest(TargetPoint::new(0.3, 0.6), 0.0);
    let fwd = integrate(s0, &model, &scfg.integrator.with_span(0.0, t_len), &[])?;
    let solved = solve_natural_bvp(fwd.last().state.pt, -t_len, &model, &scfg)?;
    let mut dev: f64 = 0.0;
    for k in 0..=200 {
        let t = t_len * k as f64 / 200.0;
        let (a, b) = (fwd.state_at(t).expect("inside span"), solved.trajectory.state_at(t - t_len).expect("inside span"));
        dev = dev.max((a.pt.theta - b.pt.theta).abs()).max((a.pt.y - b.pt.y).abs());
    }
    Ok(vec![
        check(
            "zero_potential_rest",
            rest.residual.max(drift),
            1e-10,
            rest.converged && rest.residual <= 1e-10 && drift <= 1e-10,
            format!("residual = {:.3e}, drift = {drift:.3e}", rest.residual),
        ),
        check(
            "recover_rest_start",
            dev,
            1e-6,
            solved.converged && dev <= 1e-6,
            format!("kappa = 1, rest start (0.3, 0.6) over [0, 2]: residual = {:.3e}, deviation = {dev:.3e}", solved.residual),
        ),
    ])
}

fn minimality(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let model = seed_model(cfg)?;
    let traj = seed_run_to_y1(2, &model, cfg, &[])?;
    let t_n = traj.last().state.t;
    let rep = minimality_probe(&traj, t_n - 5.0, t_n, 100, cfg.verify.rng_seed.expect("checked by run"))?;
    Ok(vec![
        check("zero_perturbation", rep.zero_difference.abs(), 0.0, rep.zero_difference == 0.0, "E(u + 0) - E(u)"),
        check(
            "seed_n2_window",
            rep.min_relative,
            -1e-9,
            reached_y1(&traj) && rep.min_relative >= -1e-9,
            format!("window [t_n - 5, t_n], t_n = {t_n:.4}, 100 perturbations: min difference / E = {:.3e}", rep.min_relative),
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names() {
        assert_eq!(parse_suite("hardy").unwrap(), vec![Suite::Hardy]);
        assert_eq!(parse_suite("all").unwrap().len(), 6);
        assert!(matches!(parse_suite("energy"), Err(CliError::Usage(_))));
    }

    #[test]
    fn ramp_check_is_exact_enough() {
        let cfg: RunConfig = serde_json::from_value(serde_json::json!({
            "schema_version": 1,
            "params": {"m": 7, "p": 2.0, "b0": 10.0},
            "verify": {"rng_seed": 3}
        }))
        .unwrap();
        let checks = hardy(&cfg).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }
}

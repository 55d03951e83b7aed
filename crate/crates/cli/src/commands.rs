use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use tangentlab::analysis::{angles_at_y_levels, tangent_angle_estimates, winding_record, TangentEstimate, WindingRecord};
use tangentlab::energy::{density_profile, density_ratio, gradient_bound_monitor, segment_energy, GradientBoundReport, TailMode};
use tangentlab::params::{admissible, AdmissibilityReport};
use tangentlab::potential::potential_sup_bounds;
use tangentlab::{integrate, Derived, EventSpec, IntegratorConfig, Model, ModelParams, State, Trajectory};

use crate::config::{start_state, Loaded, SCHEMA_VERSION};
use crate::config::{output_dir, RunConfig};
use crate::CliError;

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failed(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn model(params: ModelParams) -> Result<Model, CliError> {
    Ok(Model::new(params)?)
}

#[derive(Serialize)]
struct ParamsReport {
    schema_version: u32,
    config_hash: String,
    params: ModelParams,
    sup_v: f64,
    sup_grad_v: f64,
    #[serde(flatten)]
    report: AdmissibilityReport,
}

pub fn check_params(loaded: &Loaded) -> Result<bool, CliError> {
    let p = loaded.config.params;
    if !(p.p.is_finite() && p.p > 0.0 && p.b0.is_finite() && p.kappa.is_finite() && p.kappa > 0.0) {
        return Err(CliError::Usage("p, B0 and kappa must be finite with p > 0 and kappa > 0".into()));
    }
    let (sup_v, sup_grad_v) = potential_sup_bounds(p.kappa);
    let report = admissible(&p, sup_v, sup_grad_v);
    let admissible = report.admissible;
    let out = ParamsReport { schema_version: SCHEMA_VERSION, config_hash: loaded.hash.clone(), params: p, sup_v, sup_grad_v, report };
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| CliError::Failed(e.to_string()))?);
    Ok(admissible)
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    /// Log radius `R`, clamped to the trajectory span.
    pub radius: f64,
    /// `omega E(-inf, R)`, tail closed by constant extension.
    pub value: f64,
    pub density_ratio: f64,
    pub gradient_bound: GradientBoundReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub config_hash: String,
    pub params: ModelParams,
    pub derived: Derived,
    pub initial: State,
    pub t_final: f64,
    pub samples: usize,
    #[serde(rename = "H0")]
    pub h0: f64,
    #[serde(rename = "H_final")]
    pub h_final: f64,
    pub hamiltonian_residual: f64,
    pub residual_tol: f64,
    pub hamiltonian_monotone: bool,
    /// `min_t (h_crit - H(t))`.
    pub min_critical_gap: f64,
    pub energy: Option<EnergyReport>,
    pub winding: WindingRecord,
    pub strip_index: i64,
    pub events: usize,
    pub failure: Option<String>,
    pub passed: bool,
}

pub struct RunSpec {
    pub initial: State,
    pub icfg: IntegratorConfig,
    pub y_stop: Option<f64>,
    pub theta_ref: f64,
    pub energy_radius: f64,
    pub residual_tol: f64,
}

pub fn run_one(model: &Model, spec: &RunSpec, hash: &str) -> Result<(Trajectory, RunSummary), CliError> {
    let mut events = vec![EventSpec::ThetaResidue { reference: spec.theta_ref }, EventSpec::StripChange, EventSpec::PotentialSign];
    if let Some(level) = spec.y_stop {
        events.push(EventSpec::YCrossing { level, terminal: true });
    }
    let traj = integrate(spec.initial, model, &spec.icfg, &events)?;
    let h0 = traj.first().h;
    let residual = traj.hamiltonian_residual();
    let (lo, hi) = traj.span();
    let radius = spec.energy_radius.clamp(lo, hi);
    // energies need a forward run; backward runs report none
    let energy = if traj.is_forward() {
        let value = model.derived.omega * segment_energy(&traj, f64::NEG_INFINITY, radius, TailMode::ConstantExtension)?.value;
        Some(EnergyReport { radius, value, density_ratio: density_ratio(&traj, radius)?, gradient_bound: gradient_bound_monitor(&traj)? })
    } else {
        None
    };
    let h_crit = model.derived.h_crit;
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        config_hash: hash.to_string(),
        params: model.params,
        derived: model.derived,
        initial: spec.initial,
        t_final: traj.last().state.t,
        samples: traj.samples.len(),
        h0,
        h_final: traj.last().h,
        hamiltonian_residual: residual,
        residual_tol: spec.residual_tol,
        hamiltonian_monotone: traj.hamiltonian_monotone(1e-9),
        min_critical_gap: traj.samples.iter().map(|s| h_crit - s.h).fold(f64::INFINITY, f64::min),
        energy,
        winding: winding_record(&traj, spec.theta_ref),
        strip_index: tangentlab::potential::strip_index(spec.initial.pt),
        events: traj.events.len(),
        failure: traj.failure.clone(),
        passed: traj.failure.is_none() && residual <= spec.residual_tol * (1.0 + h0.abs()),
    };
    Ok((traj, summary))
}

fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<(), CliError> {
    traj.write_csv(BufWriter::new(File::create(dir.join("trajectory.csv"))?))?;
    write_json(&dir.join("events.json"), &traj.events_json())
}

pub fn simulate(loaded: &Loaded) -> Result<bool, CliError> {
    let cfg = &loaded.config;
    let block = cfg.simulate.as_ref().ok_or_else(|| CliError::Usage("config has no \"simulate\" block".into()))?;
    let model = model(cfg.params)?;
    let spec = RunSpec {
        initial: start_state(block.seed, block.initial, block.t_span[0])?,
        icfg: cfg.integrator.config(block.t_span)?,
        y_stop: block.y_stop,
        theta_ref: block.theta_ref,
        energy_radius: block.energy_radius,
        residual_tol: block.residual_tol,
    };
    let dir = output_dir(cfg, "simulate")?;
    let (traj, summary) = run_one(&model, &spec, &loaded.hash)?;
    write_trajectory(&dir, &traj)?;
    write_json(&dir.join("summary.json"), &summary)?;
    report_line("simulate", &summary);
    Ok(summary.passed)
}

fn report_line(label: &str, s: &RunSummary) {
    let status = if s.passed { "pass" } else { "FAIL" };
    eprintln!(
        "{label}: {status}, t_final = {:.6}, H0 = {:.6}, residual = {:.3e}{}",
        s.t_final,
        s.h0,
        s.hamiltonian_residual,
        s.failure.as_deref().map(|f| format!(", failure: {f}")).unwrap_or_default()
    );
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub n: i64,
    pub kappa: f64,
    pub b0: f64,
}

#[derive(Serialize)]
struct CellResult {
    cell: Cell,
    passed: bool,
    summary: Option<RunSummary>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepIndex {
    schema_version: u32,
    config_hash: String,
    duplicates_removed: usize,
    cells: Vec<CellResult>,
    passed: bool,
}

/// Grid cells in `seeds x kappas x b0s` order with repeats dropped.
pub fn grid_cells(seeds: &[i64], kappas: &[f64], b0s: &[f64]) -> (Vec<Cell>, usize) {
    let mut seen = HashSet::new();
    let mut cells = Vec::new();
    let mut dropped = 0;
    for &n in seeds {
        for &kappa in kappas {
            for &b0 in b0s {
                if seen.insert((n, kappa.to_bits(), b0.to_bits())) {
                    cells.push(Cell { n, kappa, b0 });
                } else {
                    dropped += 1;
                }
            }
        }
    }
    (cells, dropped)
}

pub fn sweep(loaded: &Loaded) -> Result<bool, CliError> {
    let cfg: &RunConfig = &loaded.config;
    let block = cfg.sweep.as_ref().ok_or_else(|| CliError::Usage("config has no \"sweep\" block".into()))?;
    let b0s = block.b0s.clone().unwrap_or_else(|| vec![cfg.params.b0]);
    let (cells, dropped) = grid_cells(&block.seeds, &block.kappas, &b0s);
    if cells.is_empty() {
        return Err(CliError::Usage("sweep grid is empty".into()));
    }
    if dropped > 0 {
        eprintln!("warning: removed {dropped} duplicate grid cell(s)");
    }
    let icfg = cfg.integrator.config(block.t_span)?;
    let dir = output_dir(cfg, "sweep")?;

    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|&cell| {
            let run = || -> Result<RunSummary, CliError> {
                let params = ModelParams { kappa: cell.kappa, b0: cell.b0, ..cfg.params };
                let spec = RunSpec {
                    initial: start_state(Some(cell.n), None, block.t_span[0])?,
                    icfg,
                    y_stop: block.y_stop,
                    theta_ref: 0.0,
                    energy_radius: 0.0,
                    residual_tol: block.residual_tol,
                };
                Ok(run_one(&model(params)?, &spec, &loaded.hash)?.1)
            };
            match run() {
                Ok(s) => CellResult { cell, passed: s.passed && s.hamiltonian_monotone, summary: Some(s), error: None },
                Err(CliError::Usage(e) | CliError::Failed(e)) => CellResult { cell, passed: false, summary: None, error: Some(e) },
            }
        })
        .collect();

    let passed = results.iter().all(|r| r.passed);
    for r in &results {
        let c = r.cell;
        eprintln!("cell n={} kappa={} b0={}: {}", c.n, c.kappa, c.b0, if r.passed { "pass" } else { "FAIL" });
    }
    let index = SweepIndex { schema_version: SCHEMA_VERSION, config_hash: loaded.hash.clone(), duplicates_removed: dropped, cells: results, passed };
    write_json(&dir.join("index.json"), &index)?;
    Ok(passed)
}

#[derive(Serialize)]
struct LevelAngle {
    level: f64,
    t: Option<f64>,
    theta: Option<f64>,
}

#[derive(Serialize)]
struct TangentReport {
    schema_version: u32,
    config_hash: String,
    y_threshold: f64,
    speed_threshold: f64,
    /// `omega Bhat0^beta / alpha`, the density of a rest state on `{V = 0}`.
    reference_density: f64,
    estimates: Vec<TangentEstimate>,
    levels: Vec<LevelAngle>,
    failure: Option<String>,
}

pub fn tangent(loaded: &Loaded) -> Result<bool, CliError> {
    let cfg = &loaded.config;
    let block = cfg.tangent.as_ref().ok_or_else(|| CliError::Usage("config has no \"tangent\" block".into()))?;
    let model = model(cfg.params)?;
    let s0 = start_state(block.seed, block.initial, block.t_span[0])?;
    let dir = output_dir(cfg, "tangent")?;
    let traj = integrate(s0, &model, &cfg.integrator.config(block.t_span)?, &[])?;
    let estimates = tangent_angle_estimates(&traj, block.y_threshold, block.speed_threshold)?;
    let levels = angles_at_y_levels(&traj, &block.y_levels)
        .into_iter()
        .zip(&block.y_levels)
        .map(|(hit, &level)| LevelAngle { level, t: hit.map(|h| h.0), theta: hit.map(|h| h.1) })
        .collect();
    let d = model.derived;
    let report = TangentReport {
        schema_version: SCHEMA_VERSION,
        config_hash: loaded.hash.clone(),
        y_threshold: block.y_threshold,
        speed_threshold: block.speed_threshold,
        reference_density: d.omega * d.bhat0.powf(d.beta) / d.alpha,
        estimates,
        levels,
        failure: traj.failure.clone(),
    };
    write_json(&dir.join("tangent.json"), &report)?;
    eprintln!("tangent: {} estimates", report.estimates.len());
    Ok(traj.failure.is_none())
}

#[derive(Serialize)]
struct ProfileSummary {
    schema_version: u32,
    config_hash: String,
    points: usize,
    max_relative_decrease: f64,
    decrease_tol: f64,
    failure: Option<String>,
    passed: bool,
}

pub fn energy_profile(loaded: &Loaded) -> Result<bool, CliError> {
    let cfg = &loaded.config;
    let block = cfg.energy_profile.as_ref().ok_or_else(|| CliError::Usage("config has no \"energy_profile\" block".into()))?;
    if block.points < 2 || block.t_span[1] <= block.t_span[0] {
        return Err(CliError::Usage("energy_profile needs points >= 2 and an increasing t_span".into()));
    }
    let model = model(cfg.params)?;
    let s0 = start_state(block.seed, block.initial, block.t_span[0])?;
    let dir = output_dir(cfg, "energy_profile")?;
    let traj = integrate(s0, &model, &cfg.integrator.config(block.t_span)?, &[])?;
    let (lo, hi) = traj.span();
    let n = block.points - 1;
    let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let profile = density_profile(&traj, &grid)?;
    profile.write_csv(BufWriter::new(File::create(dir.join("energy_profile.csv"))?))?;
    let dec = profile.max_relative_decrease();
    let summary = ProfileSummary {
        schema_version: SCHEMA_VERSION,
        config_hash: loaded.hash.clone(),
        points: grid.len(),
        max_relative_decrease: dec,
        decrease_tol: block.decrease_tol,
        failure: traj.failure.clone(),
        passed: traj.failure.is_none() && dec <= block.decrease_tol,
    };
    write_json(&dir.join("energy_profile.json"), &summary)?;
    eprintln!("energy-profile: max relative decrease = {dec:.3e}");
    Ok(summary.passed)
}

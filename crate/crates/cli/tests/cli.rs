use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};
use tempfile::TempDir;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn tangentlab(out: &Path, args: &[&str]) -> Run {
    let Output { status, stdout, stderr } = Command::new(env!("CARGO_BIN_EXE_tangentlab"))
        .args(args)
        .env("TANGENTLAB_OUT", out)
        .output()
        .expect("binary runs");
    Run {
        code: status.code().expect("exit code"),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

fn write_config(dir: &Path, name: &str, value: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn base(kappa: f64) -> Value {
    json!({
        "schema_version": 1,
        "params": {"m": 7, "p": 2.0, "b0": 10.0, "kappa": kappa},
        "verify": {"rng_seed": 2024}
    })
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn assert_schema(name: &str, instance: &Value) {
    let schema = read_json(repo().join("schemas").join(format!("{name}.schema.json")));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

fn csv(path: PathBuf) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn check_params_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let ok = write_config(tmp.path(), "ok.json", &json!({"schema_version": 1, "params": {"m": 7, "p": 2.0, "b0": 10.0}}));
    let run = tangentlab(tmp.path(), &["check-params", "-c", &ok]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let report: Value = serde_json::from_str(&run.stdout).unwrap();
    assert_schema("params_report", &report);
    assert_eq!(report["clauses"][0]["margin"], json!(1.0));

    let bad = write_config(tmp.path(), "m3.json", &json!({"schema_version": 1, "params": {"m": 3, "p": 2.0, "b0": 10.0}}));
    let run = tangentlab(tmp.path(), &["check-params", "-c", &bad]);
    assert_eq!(run.code, 1);
    let report: Value = serde_json::from_str(&run.stdout).unwrap();
    assert_eq!(report["clauses"][0]["holds"], json!(false));

    let missing = write_config(tmp.path(), "nop.json", &json!({"schema_version": 1, "params": {"m": 7, "b0": 10.0}}));
    let run = tangentlab(tmp.path(), &["check-params", "-c", &missing]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("`p`"), "{}", run.stderr);
}

#[test]
fn flags_override_scalars() {
    let tmp = TempDir::new().unwrap();
    let ok = write_config(tmp.path(), "ok.json", &base(1.0));
    assert_eq!(tangentlab(tmp.path(), &["check-params", "-c", &ok, "--set", "params.m=3"]).code, 1);
    assert_eq!(tangentlab(tmp.path(), &["check-params", "-c", &ok, "--set", "params=3"]).code, 2);
    assert_eq!(tangentlab(tmp.path(), &["check-params", "-c", &ok, "--set", "params.q=3"]).code, 2);
}

#[test]
fn malformed_configs_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let mut v = base(1.0);
    v["schema_version"] = json!(2);
    let p = write_config(tmp.path(), "v2.json", &v);
    assert_eq!(tangentlab(tmp.path(), &["check-params", "-c", &p]).code, 2);
    let mut v = base(1.0);
    v["simulate"] = json!({"seed": 1, "initial": {"theta": 0.0, "y": 0.5}, "t_span": [0.0, 1.0]});
    let p = write_config(tmp.path(), "both.json", &v);
    assert_eq!(tangentlab(tmp.path(), &["simulate", "-c", &p]).code, 2);
    assert_eq!(tangentlab(tmp.path(), &["simulate", "-c", "/nonexistent.json"]).code, 2);
    assert_eq!(tangentlab(tmp.path(), &["frobnicate"]).code, 2);
}

#[test]
fn unwritable_output_root_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let mut v = base(0.02);
    v["simulate"] = json!({"seed": 1, "t_span": [0.0, 1.0]});
    let p = write_config(tmp.path(), "c.json", &v);
    assert_eq!(tangentlab(&blocker, &["simulate", "-c", &p]).code, 2);
}

#[test]
fn seed_run_passes_and_writes_artifacts() {
    let tmp = TempDir::new().unwrap();
    let mut v = base(0.02);
    v["simulate"] = json!({"seed": 1, "t_span": [0.0, 200.0]});
    let p = write_config(tmp.path(), "seed.json", &v);
    let run = tangentlab(tmp.path(), &["simulate", "-c", &p]);
    assert_eq!(run.code, 0, "{}", run.stderr);

    let dir = tmp.path().join("simulate");
    let summary = read_json(dir.join("summary.json"));
    assert_schema("run_summary", &summary);
    let h0 = summary["H0"].as_f64().unwrap();
    let res = summary["hamiltonian_residual"].as_f64().unwrap();
    assert!(res <= 1e-7 * (1.0 + h0.abs()), "{res}");
    assert_eq!(summary["strip_index"], json!(2));
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);

    let events = read_json(dir.join("events.json"));
    assert_schema("events", &events);
    let crossings = summary["winding"]["crossing_times"].as_array().unwrap().len();
    let logged = events.as_array().unwrap().iter().filter(|e| e["kind"] == "theta_crossing").count();
    assert_eq!(crossings, logged);

    let (header, rows) = csv(dir.join("trajectory.csv"));
    assert_eq!(header, "t,theta,y,dtheta,dy,ell,H,V");
    assert_eq!(rows.len(), summary["samples"].as_u64().unwrap() as usize);
    assert_eq!(rows.last().unwrap()[0], 200.0);
}

#[test]
fn rest_on_axis_stays_put() {
    let tmp = TempDir::new().unwrap();
    let mut v = base(1.0);
    v["simulate"] = json!({"initial": {"theta": 0.7, "y": 0.0}, "t_span": [0.0, 5.0]});
    let p = write_config(tmp.path(), "axis.json", &v);
    let run = tangentlab(tmp.path(), &["simulate", "-c", &p]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let (_, rows) = csv(tmp.path().join("simulate/trajectory.csv"));
    assert!(rows.iter().all(|r| r[3] == 0.0 && r[4] == 0.0));
    assert_schema("run_summary", &read_json(tmp.path().join("simulate/summary.json")));
}

#[test]
fn sloppy_tolerance_fails_the_residual_check() {
    let tmp = TempDir::new().unwrap();
    let mut v = base(0.02);
    v["simulate"] = json!({"seed": 1, "t_span": [0.0, 200.0]});
    let p = write_config(tmp.path(), "seed.json", &v);
    let run = tangentlab(tmp.path(), &["simulate", "-c", &p, "--set", "integrator.rtol=1e-2"]);
    assert_eq!(run.code, 1, "{}", run.stderr);
    let summary = read_json(tmp.path().join("simulate/summary.json"));
    assert_eq!(summary["passed"], json!(false));
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let tmp = TempDir::new().unwrap();
    let mut v = base(0.02);
    v["simulate"] = json!({"seed": 2, "t_span": [0.0, 50.0]});
    let p = write_config(tmp.path(), "seed.json", &v);
    let roots = [tmp.path().join("a"), tmp.path().join("b")];
    for root in &roots {
        assert_eq!(tangentlab(root, &["simulate", "-c", &p]).code, 0);
    }
    for file in ["trajectory.csv", "events.json", "summary.json"] {
        let a = fs::read(roots[0].join("simulate").join(file)).unwrap();
        let b = fs::read(roots[1].join("simulate").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn sweep_runs_every_cell_in_grid_order() {
    let tmp = TempDir::new().unwrap();
    let mut v = base(0.02);
    v["sweep"] = json!({"seeds": [1, 2], "kappas": [0.02, 0.05], "t_span": [0.0, 60.0]});
    let p = write_config(tmp.path(), "sweep.json", &v);
    let roots = [tmp.path().join("a"), tmp.path().join("b")];
    let run = tangentlab(&roots[0], &["sweep", "-c", &p]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let index = read_json(roots[0].join("sweep/index.json"));
    assert_schema("sweep_index", &index);
    let cells = index["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    let order: Vec<(i64, f64)> = cells.iter().map(|c| (c["cell"]["n"].as_i64().unwrap(), c["cell"]["kappa"].as_f64().unwrap())).collect();
    assert_eq!(order, vec![(1, 0.02), (1, 0.05), (2, 0.02), (2, 0.05)]);
    assert!(cells.iter().all(|c| c["summary"]["hamiltonian_monotone"] == json!(true)));

    assert_eq!(tangentlab(&roots[1], &["sweep", "-c", &p]).code, 0);
    assert!(fs::read(roots[0].join("sweep/index.json")).unwrap() == fs::read(roots[1].join("sweep/index.json")).unwrap());
}

#[test]
fn sweep_drops_duplicate_cells_with_a_warning() {
    let tmp = TempDir::new().unwrap();
    let mut v = base(0.02);
    v["sweep"] = json!({"seeds": [1, 1], "kappas": [0.05], "t_span": [0.0, 10.0]});
    let p = write_config(tmp.path(), "dup.json", &v);
    let run = tangentlab(tmp.path(), &["sweep", "-c", &p]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stderr.contains("warning"), "{}", run.stderr);
    let index = read_json(tmp.path().join("sweep/index.json"));
    assert_eq!(index["cells"].as_array().unwrap().len(), 1);
    assert_eq!(index["duplicates_removed"], json!(1));
}

#[test]
fn sweep_records_failed_cells() {
    let tmp = TempDir::new().unwrap();
    let mut v = base(0.02);
    v["sweep"] = json!({"seeds": [1], "kappas": [0.02, -1.0], "t_span": [0.0, 10.0]});
    let p = write_config(tmp.path(), "bad.json", &v);
    let run = tangentlab(tmp.path(), &["sweep", "-c", &p]);
    assert_eq!(run.code, 1);
    let index = read_json(tmp.path().join("sweep/index.json"));
    assert_schema("sweep_index", &index);
    assert_eq!(index["cells"][0]["passed"], json!(true));
    assert_eq!(index["cells"][1]["passed"], json!(false));
    assert!(index["cells"][1]["error"].is_string());
}

fn verify(tmp: &TempDir, config: &Value, suite: &str) -> (Run, Value) {
    let p = write_config(tmp.path(), "verify.json", config);
    let run = tangentlab(tmp.path(), &["verify", "-c", &p, suite]);
    let report = if run.code == 2 { Value::Null } else { read_json(tmp.path().join("verify/verify.json")) };
    (run, report)
}

#[test]
fn hardy_suite_includes_the_ramp() {
    let tmp = TempDir::new().unwrap();
    let (run, report) = verify(&tmp, &base(1.0), "hardy");
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_schema("verify_report", &report);
    let checks = report["suites"][0]["checks"].as_array().unwrap();
    let ramp = checks.iter().find(|c| c["name"] == "ramp_closed_form").unwrap();
    assert!(ramp["measured"].as_f64().unwrap() <= 1e-8);
    assert!(ramp["detail"].as_str().unwrap().contains("0.238095238095"));
    assert!(ramp["detail"].as_str().unwrap().contains("0.571428571429"));
}

#[test]
fn hamiltonian_suite_passes_on_default_parameters() {
    let tmp = TempDir::new().unwrap();
    let (run, report) = verify(&tmp, &base(1.0), "hamiltonian");
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(report["passed"], json!(true));
}

#[test]
fn all_suites_pass_within_budget() {
    let tmp = TempDir::new().unwrap();
    let start = Instant::now();
    let (run, report) = verify(&tmp, &base(0.02), "all");
    assert!(start.elapsed() < Duration::from_secs(60));
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_schema("verify_report", &report);
    let names: Vec<&str> = report["suites"].as_array().unwrap().iter().map(|s| s["suite"].as_str().unwrap()).collect();
    assert_eq!(names, ["hamiltonian", "monotonicity", "strip", "hardy", "bvp", "minimality"]);
}

#[test]
fn verify_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let (run, _) = verify(&tmp, &base(1.0), "energy");
    assert_eq!(run.code, 2);
    let mut no_seed = base(1.0);
    no_seed["verify"] = json!({});
    let (run, _) = verify(&tmp, &no_seed, "minimality");
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("rng_seed"));
    // the strip suite draws nothing at random
    let (run, _) = verify(&tmp, &no_seed, "strip");
    assert_eq!(run.code, 0, "{}", run.stderr);
}

#[test]
fn tangent_and_energy_profile_outputs() {
    let tmp = TempDir::new().unwrap();
    let mut v = base(0.02);
    v["tangent"] = json!({"seed": 2, "t_span": [0.0, 400.0], "y_threshold": 0.1, "speed_threshold": 0.01, "y_levels": [0.5, 1.0]});
    v["energy_profile"] = json!({"seed": 1, "t_span": [0.0, 50.0], "points": 101});
    let p = write_config(tmp.path(), "c.json", &v);

    let run = tangentlab(tmp.path(), &["tangent", "-c", &p]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let report = read_json(tmp.path().join("tangent/tangent.json"));
    assert_schema("tangent_report", &report);
    let reference = report["reference_density"].as_f64().unwrap();
    for e in report["estimates"].as_array().unwrap() {
        assert!((e["density"].as_f64().unwrap() / reference - 1.0).abs() < 0.02);
    }
    assert!(report["levels"][1]["t"].is_number());

    let run = tangentlab(tmp.path(), &["energy-profile", "-c", &p]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let (header, rows) = csv(tmp.path().join("energy_profile/energy_profile.csv"));
    assert_eq!(header, "s,theta_ratio");
    assert_eq!(rows.len(), 101);
    assert!(rows.windows(2).all(|w| w[1][1] >= w[0][1]));
    assert_schema("energy_profile_summary", &read_json(tmp.path().join("energy_profile/energy_profile.json")));
}

#[test]
fn shipped_configs_validate() {
    for entry in fs::read_dir(repo().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        assert_schema("config", &read_json(path));
    }
}

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use tangentlab::dynamics::IntegratorConfig;
use tangentlab::potential::TargetPoint;
use tangentlab::{ModelParams, State};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const OUT_ENV: &str = "TANGENTLAB_OUT";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub params: ModelParams,
    #[serde(default)]
    pub integrator: IntegratorBlock,
    /// Output directory, relative to the output root.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub tangent: Option<TangentBlock>,
    #[serde(default)]
    pub energy_profile: Option<EnergyProfileBlock>,
    #[serde(default)]
    pub verify: VerifyBlock,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorBlock {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub event_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorBlock {
    fn default() -> Self {
        let c = IntegratorConfig::new(0.0, 1.0);
        Self { rtol: c.rtol, atol: c.atol, h_max: c.h_max, event_tol: c.event_tol, max_steps: c.max_steps }
    }
}

impl IntegratorBlock {
    pub fn config(&self, t_span: [f64; 2]) -> Result<IntegratorConfig, CliError> {
        let mut c = IntegratorConfig::new(t_span[0], t_span[1]).with_tolerances(self.rtol, self.atol);
        c.h_max = self.h_max;
        c.event_tol = self.event_tol;
        c.max_steps = self.max_steps;
        c.validate().map_err(|e| CliError::Usage(format!("integrator: {e}")))?;
        Ok(c)
    }
}

/// Explicit initial state.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    pub theta: f64,
    pub y: f64,
    #[serde(default)]
    pub dtheta: f64,
    #[serde(default)]
    pub dy: f64,
}

/// Initial state from either a seed index or an explicit state.
pub fn start_state(seed: Option<i64>, initial: Option<InitialBlock>, t0: f64) -> Result<State, CliError> {
    match (seed, initial) {
        (Some(n), None) => {
            let mut s = tangentlab::seed(n).map_err(|e| CliError::Usage(e.to_string()))?;
            s.t = t0;
            Ok(s)
        }
        (None, Some(i)) => Ok(State { pt: TargetPoint::new(i.theta, i.y), vel: [i.dtheta, i.dy], t: t0 }),
        _ => Err(CliError::Usage("give exactly one of \"seed\" and \"initial\"".into())),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    #[serde(default)]
    pub seed: Option<i64>,
    #[serde(default)]
    pub initial: Option<InitialBlock>,
    pub t_span: [f64; 2],
    /// Stop when `y` reaches this level.
    #[serde(default)]
    pub y_stop: Option<f64>,
    #[serde(default)]
    pub theta_ref: f64,
    /// Log radius `R` of the reported energy `omega E(-inf, R)`.
    #[serde(default)]
    pub energy_radius: f64,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
}

fn default_residual_tol() -> f64 {
    1e-7
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub seeds: Vec<i64>,
    pub kappas: Vec<f64>,
    #[serde(default)]
    pub b0s: Option<Vec<f64>>,
    pub t_span: [f64; 2],
    #[serde(default)]
    pub y_stop: Option<f64>,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TangentBlock {
    #[serde(default)]
    pub seed: Option<i64>,
    #[serde(default)]
    pub initial: Option<InitialBlock>,
    pub t_span: [f64; 2],
    pub y_threshold: f64,
    pub speed_threshold: f64,
    /// Heights at which the angle is also sampled.
    #[serde(default)]
    pub y_levels: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyProfileBlock {
    #[serde(default)]
    pub seed: Option<i64>,
    #[serde(default)]
    pub initial: Option<InitialBlock>,
    pub t_span: [f64; 2],
    /// Number of equally spaced log radii across the span.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_decrease_tol")]
    pub decrease_tol: f64,
}

fn default_points() -> usize {
    201
}

fn default_decrease_tol() -> f64 {
    1e-8
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyBlock {
    /// Required by the suites that draw random samples.
    pub rng_seed: Option<u64>,
    /// `kappa` used for the seed runs.
    pub seed_kappa: f64,
    pub samples: usize,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self { rng_seed: None, seed_kappa: 0.02, samples: 10 }
    }
}

/// A parsed config together with the hash of its effective JSON.
pub struct Loaded {
    pub config: RunConfig,
    pub hash: String,
}

pub fn load(path: &Path, overrides: &[String]) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    for ov in overrides {
        apply_override(&mut value, ov)?;
    }
    let config: RunConfig = serde_json::from_value(value.clone()).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Usage(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    Ok(Loaded { config, hash: hash_value(&value) })
}

/// SHA-256 of the compact JSON text; object keys are sorted.
pub fn hash_value(value: &Value) -> String {
    let text = serde_json::to_string(value).expect("json values serialize");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// `path.to.field=value` where the target, if present, is a scalar.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {spec:?} is not of the form key=value")))?;
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    if new.is_object() || new.is_array() {
        return Err(CliError::Usage(format!("override {path} must be a scalar")));
    }
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| CliError::Usage(format!("override {path}: {key} is not inside an object")))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| CliError::Usage(format!("override {path}: parent is not an object")))?;
    let last = keys[keys.len() - 1];
    if matches!(obj.get(last), Some(v) if v.is_object() || v.is_array()) {
        return Err(CliError::Usage(format!("override {path}: only scalar fields can be overridden")));
    }
    obj.insert(last.to_string(), new);
    Ok(())
}

/// `$TANGENTLAB_OUT/<output or default>`, created and checked for
/// writability.
pub fn output_dir(config: &RunConfig, default: &str) -> Result<PathBuf, CliError> {
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    let dir = root.join(config.output.as_deref().unwrap_or(default));
    fs::create_dir_all(&dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".write-test");
    fs::write(&probe, b"").map_err(|e| CliError::Usage(format!("{} is not writable: {e}", dir.display())))?;
    let _ = fs::remove_file(probe);
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_set_nested_scalars() {
        let mut v = json!({"params": {"m": 7, "p": 2.0}, "integrator": {}});
        apply_override(&mut v, "params.p=3").unwrap();
        apply_override(&mut v, "integrator.rtol=1e-2").unwrap();
        apply_override(&mut v, "output=run_a").unwrap();
        assert_eq!(v["params"]["p"], json!(3));
        assert_eq!(v["integrator"]["rtol"], json!(1e-2));
        assert_eq!(v["output"], json!("run_a"));
    }

    #[test]
    fn overrides_reject_structures() {
        let mut v = json!({"params": {"m": 7}});
        assert!(apply_override(&mut v, "params=3").is_err());
        assert!(apply_override(&mut v, "params.m=[1,2]").is_err());
        assert!(apply_override(&mut v, "params.m").is_err());
    }

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"a": 1, "b": {"c": 2, "d": 3}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"b": {"d": 3, "c": 2}, "a": 1}"#).unwrap();
        assert_eq!(hash_value(&a), hash_value(&b));
        assert_eq!(hash_value(&a).len(), 64);
    }

    #[test]
    fn start_needs_exactly_one_source() {
        assert!(start_state(None, None, 0.0).is_err());
        let init = InitialBlock { theta: 0.0, y: 1.0, dtheta: 0.0, dy: 0.0 };
        assert!(start_state(Some(1), Some(init), 0.0).is_err());
        assert!(start_state(Some(0), None, 0.0).is_err());
        let s = start_state(Some(1), None, 2.0).unwrap();
        assert_eq!(s.t, 2.0);
    }
}

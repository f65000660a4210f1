//! Experiment configuration and the commands behind the `khk` binary.
//!
//! A config names a system either as `{"kind": .., "params": {..}}` or in the
//! flat form `{"system": "lagrange", "alpha": 2, "gamma": 1}`, where every
//! key that is not a known top-level field becomes a parameter. Re-emitting a
//! parsed config always produces the nested form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::hkbasis::{default_window, hk_nullspace, iterate_orbit, wronskian_observables, HKNullSpaceReport};
use crate::integrals::named_on_pair;
use crate::systems::{build_system, SystemConfig, SystemDescriptor, SystemKind};
use crate::verify::{run_suite, sample_regular, PropertyReport, SuiteOptions};

const TOP_LEVEL_KEYS: [&str; 7] = ["system", "x0", "eps", "steps", "seed", "hk_order", "verify"];

fn default_eps() -> f64 {
    0.05
}

fn default_steps() -> usize {
    1000
}

fn default_seed() -> u64 {
    42
}

fn default_hk_order() -> usize {
    4
}

/// Sample sizes of the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    pub trials: usize,
    pub orbits: usize,
    pub rank_points: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        let d = SuiteOptions::default();
        Self {
            trials: d.trials,
            orbits: d.orbits,
            rank_points: d.rank_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// Initial state; drawn from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Highest Wronskian order scanned by `hk-scan`.
    #[serde(default = "default_hk_order")]
    pub hk_order: usize,
    #[serde(default)]
    pub verify: VerifySettings,
}

impl ExperimentConfig {
    /// Defaults for `kind` with its reference parameters.
    pub fn for_kind(kind: SystemKind) -> Self {
        Self {
            system: SystemConfig::default_for(kind),
            x0: None,
            eps: default_eps(),
            steps: default_steps(),
            seed: default_seed(),
            hk_order: default_hk_order(),
            verify: VerifySettings::default(),
        }
    }

    /// Parses either layout and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let config: Self = match value.get("system") {
            Some(Value::String(_)) => {
                serde_json::from_value(nest_shorthand(value)?).map_err(|e| Error::Config(e.to_string()))?
            }
            _ => serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Nested-form JSON; parsing it gives back an equal config.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let desc = build_system(&self.system)?;
        if !self.eps.is_finite() {
            return Err(Error::Config(format!("eps must be finite, got {}", self.eps)));
        }
        if self.hk_order == 0 {
            return Err(Error::Config("hk_order must be at least 1".into()));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != desc.dim() {
                return Err(Error::DimensionMismatch {
                    expected: desc.dim(),
                    actual: x0.len(),
                });
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("x0 must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn descriptor(&self) -> Result<SystemDescriptor> {
        build_system(&self.system)
    }

    /// `x0`, or a regular point drawn from the unit ball with `seed`.
    pub fn initial_state(&self, desc: &SystemDescriptor) -> Result<Vec<f64>> {
        if let Some(x0) = &self.x0 {
            return Ok(x0.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        sample_regular(&mut rng, desc, self.eps)
            .ok_or_else(|| Error::Degenerate(format!("no regular initial state found for seed {}", self.seed)))
    }

    pub fn suite_options(&self) -> SuiteOptions {
        SuiteOptions {
            eps: self.eps,
            trials: self.verify.trials,
            orbits: self.verify.orbits,
            steps: self.steps.max(1),
            rank_points: self.verify.rank_points,
            seed: self.seed,
        }
    }
}

fn nest_shorthand(value: Value) -> Result<Value> {
    let Value::Object(map) = value else {
        return Err(Error::Config("config must be a JSON object".into()));
    };
    let mut top = Map::new();
    let mut params = Map::new();
    for (key, v) in map {
        if TOP_LEVEL_KEYS.contains(&key.as_str()) {
            top.insert(key, v);
        } else {
            params.insert(key, v);
        }
    }
    let kind = top.remove("system").expect("caller checked `system`");
    let mut system = Map::new();
    system.insert("kind".into(), kind);
    system.insert("params".into(), Value::Object(params));
    top.insert("system".into(), Value::Object(system));
    Ok(Value::Object(top))
}

/// Command-line values that replace config fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub system: Option<SystemKind>,
    pub eps: Option<f64>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub hk_order: Option<usize>,
}

/// Combines an optional config with overrides. A `system` override whose
/// kind differs from the config's replaces it with reference parameters.
pub fn resolve_config(config: Option<ExperimentConfig>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut config = match (config, overrides.system) {
        (Some(c), Some(kind)) if c.system.kind() != kind => ExperimentConfig {
            system: SystemConfig::default_for(kind),
            x0: None,
            ..c
        },
        (Some(c), _) => c,
        (None, Some(kind)) => ExperimentConfig::for_kind(kind),
        (None, None) => {
            return Err(Error::Config(
                "no system given: pass a config file or a system kind".into(),
            ))
        }
    };
    if let Some(eps) = overrides.eps {
        config.eps = eps;
    }
    if let Some(steps) = overrides.steps {
        config.steps = steps;
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(order) = overrides.hk_order {
        config.hk_order = order;
    }
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Verify,
    HkScan,
    Report,
}

impl Command {
    /// Artifact written into the output directory.
    pub fn artifact(self) -> &'static str {
        match self {
            Command::Simulate => "orbit.csv",
            Command::Verify => "verify.json",
            Command::HkScan => "hkscan.json",
            Command::Report => "report.txt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifact: PathBuf,
    /// False only when a verification check failed.
    pub passed: bool,
    /// Non-fatal conditions, such as an orbit stopped at a pole.
    pub warnings: Vec<String>,
}

/// Runs `command` and writes its artifact into `out_dir`.
pub fn run(config: &ExperimentConfig, command: Command, out_dir: &Path) -> Result<Outcome> {
    let desc = config.descriptor()?;
    fs::create_dir_all(out_dir)?;
    let artifact = out_dir.join(command.artifact());
    let mut warnings = Vec::new();
    let mut passed = true;
    let contents = match command {
        Command::Simulate => {
            let x0 = config.initial_state(&desc)?;
            let (csv, stopped) = orbit_csv(&desc, &x0, config.eps, config.steps)?;
            if let Some(k) = stopped {
                warnings.push(format!("orbit stopped at step {k}: the next step is singular"));
            }
            csv
        }
        Command::Verify => {
            let reports = run_suite(&desc, &config.suite_options())?;
            passed = reports.iter().all(|r| r.passed);
            verify_json(config, &reports, passed)
        }
        Command::HkScan => {
            let x0 = config.initial_state(&desc)?;
            let scan = hk_scan(&desc, &x0, config.eps, config.hk_order)?;
            let doc = serde_json::json!({
                "system": desc.kind,
                "eps": config.eps,
                "x0": x0,
                "orders": scan,
            });
            serde_json::to_string_pretty(&doc).expect("scan serializes") + "\n"
        }
        Command::Report => {
            let reports = run_suite(&desc, &config.suite_options())?;
            report_text(config, &reports)
        }
    };
    fs::write(&artifact, contents)?;
    Ok(Outcome {
        artifact,
        passed,
        warnings,
    })
}

fn fmt_value(v: Result<f64>) -> String {
    match v {
        Ok(v) if v.is_finite() => format!("{v:.16e}"),
        _ => "nan".into(),
    }
}

/// CSV of `steps` rows `step, x1..xn, delta, <columns>, density_<name>..`.
/// Columns that pair `x` with its iterate are evaluated on `(x_k, x_{k+1})`.
/// Returns the step at which the orbit stopped early, if it did.
pub fn orbit_csv(desc: &SystemDescriptor, x0: &[f64], eps: f64, steps: usize) -> Result<(String, Option<usize>)> {
    let densities: Vec<String> = desc.density_names().iter().map(|d| format!("density_{d}")).collect();
    let columns: Vec<&str> = desc
        .column_names()
        .iter()
        .copied()
        .chain(densities.iter().map(String::as_str))
        .collect();
    let mut header = vec!["step".to_string()];
    header.extend((1..=desc.dim()).map(|i| format!("x{i}")));
    header.push("delta".into());
    header.extend(columns.iter().map(|c| c.to_string()));
    let mut csv = header.join(",") + "\n";
    if steps == 0 {
        return Ok((csv, None));
    }
    let orbit = iterate_orbit(&desc.field, x0, eps, steps)?;
    for k in 0..orbit.len() - 1 {
        let (x, xt) = (&orbit.states[k], &orbit.states[k + 1]);
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(|v| fmt_value(Ok(*v))));
        row.push(fmt_value(Ok(orbit.deltas[k])));
        row.extend(columns.iter().map(|c| fmt_value(named_on_pair(desc, c, x, xt, eps))));
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    Ok((csv, orbit.pole_at()))
}

/// One scanned Wronskian order; `error` is set when no report could be made.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HkScanEntry {
    pub order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<HKNullSpaceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Null spaces of the Wronskian bases of orders `1..=max_order` on the
/// orbit through `x0`.
pub fn hk_scan(desc: &SystemDescriptor, x0: &[f64], eps: f64, max_order: usize) -> Result<Vec<HkScanEntry>> {
    (1..=max_order)
        .map(|ell| {
            let observables = wronskian_observables(desc, ell)?;
            let window = default_window(observables.len());
            let result = iterate_orbit(&desc.field, x0, eps, window + ell)
                .and_then(|orbit| hk_nullspace(&orbit, &observables, window));
            Ok(match result {
                Ok(report) => HkScanEntry {
                    order: ell,
                    report: Some(report),
                    error: None,
                },
                Err(e) => HkScanEntry {
                    order: ell,
                    report: None,
                    error: Some(e.to_string()),
                },
            })
        })
        .collect()
}

fn verify_json(config: &ExperimentConfig, reports: &[PropertyReport], passed: bool) -> String {
    let doc = serde_json::json!({
        "system": config.system,
        "options": config.suite_options(),
        "passed": passed,
        "reports": reports,
    });
    serde_json::to_string_pretty(&doc).expect("reports serialize") + "\n"
}

/// The statement a check verifies, keyed by report name.
pub fn describe_check(name: &str) -> String {
    let inner = |prefix: &str| {
        name.strip_prefix(prefix)
            .and_then(|s| s.strip_suffix(']'))
            .unwrap_or_default()
            .to_string()
    };
    match name {
        "kahan_residual" => {
            "the step solves (x~ - x)/(2 eps) = B(x, x~), with B the symmetric bilinear form of f".into()
        }
        "reversibility" => "Phi(Phi(x; eps); -eps) = x".into(),
        "jacobian_identity" => "det dPhi(x) * Delta(x; eps) = Delta(Phi(x); -eps)".into(),
        "exact_m3" => "m3 is preserved exactly by the map".into(),
        "identities" => "the four Wronskian null-vector identities hold pointwise".into(),
        "closed_form_null_vectors" => {
            "closed-form coefficients annihilate the order-1 and order-2 Wronskian bases".into()
        }
        "hk_basis[p^2,1]" => "(p1^2, p2^2, p3^2, 1) is an HK basis with a one-dimensional null space".into(),
        "continuous_wronskian" => "the Wronskian relation of the continuous flow vanishes".into(),
        "poisson_brackets" => "the continuous integrals Poisson-commute on e(3)*".into(),
        "planar_fhat_equals_f" | "planar_fhat_equals_f[random]" => {
            "on orbits of the planar family the bilinear integral Fhat equals F".into()
        }
        "polarization" => "polarizing a quadratic integral yields a symmetric conserved bilinear function".into(),
        "bilinear_hypotheses" => "the polarized integral is symmetric and even in eps".into(),
        _ if name.starts_with("conservation[") => format!("{} is constant along orbits", inner("conservation[")),
        _ if name.starts_with("measure[") => {
            format!(
                "the numerator of {} over Delta is an invariant measure density",
                inner("measure[")
            )
        }
        _ if name.starts_with("hk_basis[") => {
            format!(
                "the {} Wronskians form an HK basis with a one-dimensional null space",
                inner("hk_basis[")
            )
        }
        _ if name.starts_with("hk_coefficients[") => {
            format!(
                "the {} null vector matches the closed-form coefficients",
                inner("hk_coefficients[")
            )
        }
        _ if name.starts_with("rank{") => format!("the integrals {} are functionally independent", &name[4..]),
        _ => "unclassified check".into(),
    }
}

fn report_text(config: &ExperimentConfig, reports: &[PropertyReport]) -> String {
    let passed = reports.iter().filter(|r| r.passed).count();
    let mut out = String::new();
    let _ = writeln!(out, "system: {}", config.system.kind());
    let _ = writeln!(
        out,
        "params: {}",
        serde_json::to_value(&config.system).expect("config serializes")["params"]
    );
    let _ = writeln!(out, "eps: {}  seed: {}", config.eps, config.seed);
    let _ = writeln!(out, "checks passed: {passed}/{}", reports.len());
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "[{}] {}\n    {}\n    max violation {:.3e} (tolerance {:.1e}), {} trials, {} skipped",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            describe_check(&r.name),
            r.max_violation,
            r.tolerance,
            r.trials,
            r.skipped,
        );
        if !r.passed {
            let _ = writeln!(out, "    worst input {:?} at eps {}", r.worst_case_input, r.eps);
        }
    }
    out
}

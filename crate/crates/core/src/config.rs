//! JSON experiment configuration.
//!
//! One experiment per file. Every field is optional at the parsing stage so
//! that validation can report all problems at once, each with its dotted
//! field path. Command blocks (`simulate`, `bound`, `rate`) are validated
//! whenever present and required only by their own subcommand.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "seed": 7,
//!   "drift": { "kind": "linear", "parameters": { "alpha1": -1.0 }, "x_star": 0.0 },
//!   "noise": { "kind": "rademacher", "sigma": 1.0 },
//!   "b": 2.0,
//!   "x0": 1.0,
//!   "simulate": { "n": 10, "record": true },
//!   "bound": { "epsilon": 1.0, "n_grid": [1000, 10000], "replicas": 100000 },
//!   "rate": { "target": "weighted_sum", "gamma": 3.0, "r": 1.0,
//!             "n_grid": [1000, 10000], "replicas": 100000 },
//!   "output": { "path": "out.csv", "format": "csv" }
//! }
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::mdp::{Schedule, Target};
use crate::model::{DriftFunction, NoiseModel, ProblemSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<DriftParameters>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftParameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    /// Constant of the closed-form display bound; the column stays empty without it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_const: Option<f64>,
    /// Overrides the default `δ_max/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Envelope and margin scan horizon; defaults to the largest grid point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_probe: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

/// One validation failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// Every validation failure of one config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl ConfigErrors {
    pub fn paths(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.path.as_str()).collect()
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn single(path: &str, message: impl Into<String>) -> ConfigErrors {
    ConfigErrors(vec![FieldError {
        path: path.to_string(),
        message: message.into(),
    }])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateSettings {
    pub n: u64,
    pub record: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSettings {
    pub epsilon: f64,
    pub n_grid: Vec<u64>,
    pub replicas: u64,
    pub c_const: Option<f64>,
    pub delta: Option<f64>,
    pub n_probe: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSettings {
    pub target: Target,
    pub schedule: Schedule,
    pub replicas: u64,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub spec: ProblemSpec,
    pub seed: u64,
    pub simulate: Option<SimulateSettings>,
    pub bound: Option<BoundSettings>,
    pub rate: Option<RateSettings>,
    pub output_path: Option<String>,
    pub format: OutputFormat,
}

impl Experiment {
    pub fn require_simulate(&self) -> Result<SimulateSettings, ConfigErrors> {
        self.simulate.ok_or_else(|| single("simulate", "block required by this command"))
    }

    pub fn require_bound(&self) -> Result<&BoundSettings, ConfigErrors> {
        self.bound.as_ref().ok_or_else(|| single("bound", "block required by this command"))
    }

    pub fn require_rate(&self) -> Result<&RateSettings, ConfigErrors> {
        self.rate.as_ref().ok_or_else(|| single("rate", "block required by this command"))
    }
}

/// Parses `text` as a JSON document, applies `key=value` overrides and
/// deserializes the result.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigErrors> {
    let mut doc: Value =
        serde_json::from_str(text).map_err(|e| single("", format!("invalid JSON: {e}")))?;
    for item in overrides {
        apply_override(&mut doc, item)?;
    }
    serde_json::from_value(doc).map_err(|e| single("", format!("schema mismatch: {e}")))
}

/// Sets a dotted `key` to `value`, creating objects along the way. The value
/// is read as JSON when it parses, otherwise taken as a string.
pub fn apply_override(doc: &mut Value, item: &str) -> Result<(), ConfigErrors> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| single("--set", format!("`{item}` is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(single("--set", format!("bad key `{key}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            return Err(single(&parts[..i].join("."), "is not an object"));
        }
        let map = node.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("key has at least one part")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
        parse_with_overrides(text, &[])
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field and collects all failures.
    pub fn validate(&self) -> Result<Experiment, ConfigErrors> {
        let mut v = Validator::default();

        match self.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(other) => v.fail("schema_version", format!("unsupported version {other}")),
            None => v.fail("schema_version", "required"),
        }
        let seed = v.required("seed", self.seed);
        let drift = self.validate_drift(&mut v);
        let noise = self.validate_noise(&mut v);
        let b = v.required("b", self.b).and_then(|b| {
            v.check("b", b.is_finite() && b > 0.0, format!("{b} must be positive"))
                .then_some(b)
        });
        let x0 = v.required("x0", self.x0).and_then(|x| {
            v.check("x0", x.is_finite(), "must be finite").then_some(x)
        });

        let spec = match (drift, noise, b, x0) {
            (Some(d), Some(n), Some(b), Some(x0)) => match ProblemSpec::new(d, n, b, x0) {
                Ok(s) => Some(s),
                Err(e) => {
                    v.fail("", e.to_string());
                    None
                }
            },
            _ => None,
        };

        let simulate = self.simulate.as_ref().and_then(|s| {
            let n = v.required("simulate.n", s.n)?;
            Some(SimulateSettings {
                n,
                record: s.record.unwrap_or(true),
            })
        });
        let bound = self.bound.as_ref().and_then(|s| validate_bound(&mut v, s));
        let rate = self.rate.as_ref().and_then(|s| validate_rate(&mut v, s));
        if let (Some(spec), Some(_)) = (spec.as_ref(), self.rate.as_ref()) {
            let c = spec.exponent();
            v.check(
                "b",
                c < -1.0,
                format!("rate experiments need b·g'(x*) < -1, got {c}"),
            );
        }

        let (output_path, format) = match &self.output {
            None => (None, OutputFormat::Csv),
            Some(o) => {
                let format = match o.format.as_deref() {
                    None | Some("csv") => OutputFormat::Csv,
                    Some("json") => OutputFormat::Json,
                    Some(other) => {
                        v.fail("output.format", format!("`{other}` is not csv or json"));
                        OutputFormat::Csv
                    }
                };
                (o.path.clone(), format)
            }
        };

        if !v.errors.is_empty() {
            return Err(ConfigErrors(v.errors));
        }
        Ok(Experiment {
            spec: spec.expect("no errors implies a spec"),
            seed: seed.expect("no errors implies a seed"),
            simulate,
            bound,
            rate,
            output_path,
            format,
        })
    }

    fn validate_drift(&self, v: &mut Validator) -> Option<DriftFunction> {
        let d = v.required("drift", self.drift.as_ref())?;
        let x_star = d.x_star.unwrap_or(0.0);
        if !x_star.is_finite() {
            v.fail("drift.x_star", "must be finite");
            return None;
        }
        let kind = v.required("drift.kind", d.kind.as_deref())?;
        let params = v.required("drift.parameters", d.parameters.as_ref())?;
        match kind {
            "linear" => {
                let unexpected = params.c1.is_some() || params.c2.is_some();
                v.check("drift.parameters", !unexpected, "linear drift takes only alpha1");
                let alpha1 = v.required("drift.parameters.alpha1", params.alpha1)?;
                DriftFunction::linear(alpha1, x_star)
                    .map_err(|e| v.fail("drift.parameters", e.to_string()))
                    .ok()
            }
            "sine_linear" => {
                v.check(
                    "drift.parameters",
                    params.alpha1.is_none(),
                    "sine_linear drift takes c1 and c2",
                );
                let c1 = v.required("drift.parameters.c1", params.c1);
                let c2 = v.required("drift.parameters.c2", params.c2);
                let (c1, c2) = (c1?, c2?);
                DriftFunction::sine_linear(c1, c2, x_star)
                    .map_err(|e| v.fail("drift.parameters", e.to_string()))
                    .ok()
            }
            other => {
                v.fail("drift.kind", format!("`{other}` is not linear or sine_linear"));
                None
            }
        }
    }

    fn validate_noise(&self, v: &mut Validator) -> Option<NoiseModel> {
        let n = v.required("noise", self.noise.as_ref())?;
        let kind = v.required("noise.kind", n.kind.as_deref());
        let sigma = v.required("noise.sigma", n.sigma).and_then(|s| {
            v.check("noise.sigma", s.is_finite() && s > 0.0, format!("{s} must be positive"))
                .then_some(s)
        });
        let (kind, sigma) = (kind?, sigma?);
        match kind {
            "rademacher" => {
                v.check(
                    "noise",
                    n.p_min.is_none() && n.p_max.is_none(),
                    "rademacher noise takes no p_min/p_max",
                );
                NoiseModel::rademacher(sigma)
                    .map_err(|e| v.fail("noise.sigma", e.to_string()))
                    .ok()
            }
            "two_point_adaptive" => {
                let p_min = v.required("noise.p_min", n.p_min);
                let p_max = v.required("noise.p_max", n.p_max);
                let (p_min, p_max) = (p_min?, p_max?);
                NoiseModel::two_point_adaptive(sigma, p_min, p_max)
                    .map_err(|e| v.fail("noise", e.to_string()))
                    .ok()
            }
            other => {
                v.fail(
                    "noise.kind",
                    format!("`{other}` is not rademacher or two_point_adaptive"),
                );
                None
            }
        }
    }
}

fn validate_grid(v: &mut Validator, path: &str, grid: Option<&Vec<u64>>) -> Option<Vec<u64>> {
    let grid = v.required(path, grid)?;
    let ok = !grid.is_empty() && grid[0] > 0 && grid.windows(2).all(|w| w[0] < w[1]);
    v.check(path, ok, "must be a non-empty, strictly increasing list of positive horizons")
        .then(|| grid.clone())
}

fn validate_replicas(v: &mut Validator, path: &str, replicas: Option<u64>) -> Option<u64> {
    let r = v.required(path, replicas)?;
    v.check(path, r > 0, "must be at least 1").then_some(r)
}

fn validate_bound(v: &mut Validator, s: &BoundSection) -> Option<BoundSettings> {
    let epsilon = v.required("bound.epsilon", s.epsilon).and_then(|e| {
        v.check("bound.epsilon", e.is_finite() && e > 0.0, format!("{e} must be positive"))
            .then_some(e)
    });
    let n_grid = validate_grid(v, "bound.n_grid", s.n_grid.as_ref());
    let replicas = validate_replicas(v, "bound.replicas", s.replicas);
    if let Some(c) = s.c_const {
        v.check("bound.c_const", c.is_finite() && c > 0.0, format!("{c} must be positive"));
    }
    if let Some(d) = s.delta {
        v.check("bound.delta", d > 0.0 && d < 1.0, format!("{d} must lie in (0, 1)"));
    }
    let (epsilon, n_grid, replicas) = (epsilon?, n_grid?, replicas?);
    let max_n = *n_grid.last().expect("grid is non-empty");
    let n_probe = s.n_probe.unwrap_or(max_n);
    if !v.check("bound.n_probe", n_probe >= max_n, "must cover the largest grid point") {
        return None;
    }
    Some(BoundSettings {
        epsilon,
        n_grid,
        replicas,
        c_const: s.c_const,
        delta: s.delta,
        n_probe,
    })
}

fn validate_rate(v: &mut Validator, s: &RateSection) -> Option<RateSettings> {
    let target = v.required("rate.target", s.target.as_deref()).and_then(|t| match t {
        "recursion" => Some(Target::Recursion),
        "weighted_sum" => Some(Target::WeightedSum),
        other => {
            v.fail("rate.target", format!("`{other}` is not recursion or weighted_sum"));
            None
        }
    });
    let gamma = v.required("rate.gamma", s.gamma).and_then(|g| {
        v.check("rate.gamma", g.is_finite() && g > 0.0, format!("{g} must be positive"))
            .then_some(g)
    });
    let r = v.required("rate.r", s.r).and_then(|r| {
        v.check("rate.r", r.is_finite() && r > 0.0, format!("{r} must be positive"))
            .then_some(r)
    });
    let n_grid = validate_grid(v, "rate.n_grid", s.n_grid.as_ref());
    let replicas = validate_replicas(v, "rate.replicas", s.replicas);
    let schedule = Schedule::new(gamma?, n_grid?, r?)
        .map_err(|e| v.fail("rate", e.to_string()))
        .ok()?;
    Some(RateSettings {
        target: target?,
        schedule,
        replicas: replicas?,
    })
}

#[derive(Default)]
struct Validator {
    errors: Vec<FieldError>,
}

impl Validator {
    fn fail(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(FieldError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn check(&mut self, path: &str, ok: bool, message: impl Into<String>) -> bool {
        if !ok {
            self.fail(path, message);
        }
        ok
    }

    fn required<T>(&mut self, path: &str, value: Option<T>) -> Option<T> {
        if value.is_none() {
            self.fail(path, "required");
        }
        value
    }
}

//! Job configuration: a flat JSON object, one command per file.

use std::path::Path;

use curvhom::families::FamilySpec;
use curvhom::homogeneity::{Grid, Invariant};
use curvhom::operators::{Causal, SamplerConfig};
use curvhom::profile::{MultiProfile, ScalarProfile};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Curvature,
    Verify,
    Geodesic,
    Invariants,
    ProbeOsserman,
    ProbeIp,
    Normalize,
    Kp,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    Constant,
    NonConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeodesicMethod {
    #[default]
    Recursive,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthName {
    Riemann,
    Nabla,
    Nabla2,
}

/// A profile given as a shorthand string or as the library's JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfilesField {
    Shorthand(String),
    List(Vec<Value>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub axis: usize,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    /// Values of the coordinates that do not move; zero if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub oracle: f64,
    pub finite_difference: f64,
    pub identity: f64,
    pub model: f64,
    pub invariant: f64,
    pub kp_threshold: f64,
    pub quadrature: f64,
    pub solver_agreement: f64,
    pub round_trip: f64,
    pub involution: f64,
    pub energy: f64,
    pub isometry: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            oracle: 1e-9,
            finite_difference: 1e-5,
            identity: 1e-10,
            model: 1e-10,
            invariant: 1e-12,
            kp_threshold: 1e-10,
            quadrature: 1e-11,
            solver_agreement: 1e-6,
            round_trip: 1e-8,
            involution: 1e-7,
            energy: 1e-8,
            isometry: 1e-5,
        }
    }
}

fn default_point_count() -> usize {
    5
}

fn default_point_width() -> f64 {
    1.0
}

fn default_count() -> usize {
    100
}

fn default_t_max() -> f64 {
    1.0
}

fn default_samples() -> usize {
    11
}

fn default_step() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<ProfilesField>,
    /// Family 3 profile; same forms as a single `profiles` entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Random points drawn when neither `points` nor `grid` is given.
    #[serde(default = "default_point_count")]
    pub point_count: usize,
    #[serde(default = "default_point_width")]
    pub point_width: f64,
    /// Probe samples per point.
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub causal: Option<Causal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<Invariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<DepthName>,
    /// Family 3 normalization order (0 or 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<Vec<f64>>,
    /// Endpoint for the geodesic command; the velocity is then `log_P(target)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub method: GeodesicMethod,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Report to re-summarize (command `report`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Configuration problem; the CLI exits with status 2.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config at `{path}`: {message}")]
    Schema { path: String, message: String },
}

impl ConfigError {
    pub fn at(path: &str, message: impl Into<String>) -> Self {
        ConfigError::Schema {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

pub fn parse_config(text: &str) -> Result<JobConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: JobConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = match e.path().to_string().as_str() {
            "." | "?" => "$".to_string(),
            other => other.to_string(),
        };
        ConfigError::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<JobConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

fn scalar_shorthand(text: &str) -> Option<ScalarProfile> {
    let t = text.trim();
    match t {
        "zero" => return Some(ScalarProfile::zero()),
        "exp" => return Some(ScalarProfile::exp()),
        _ => {}
    }
    let power = t.strip_prefix("u^").or_else(|| t.strip_prefix("u_r^"))?;
    power.parse::<usize>().ok().map(|k| ScalarProfile::monomial(1.0, k))
}

fn scalar_profile(value: &Value, path: &str) -> Result<ScalarProfile, ConfigError> {
    match value {
        Value::String(s) => scalar_shorthand(s).ok_or_else(|| ConfigError::at(path, format!("unknown profile shorthand `{s}`"))),
        other => serde_json::from_value(other.clone()).map_err(|e| ConfigError::at(path, e.to_string())),
    }
}

impl JobConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.command == Command::Report {
            if self.input.is_none() {
                return Err(ConfigError::at("input", "the report command needs an input report"));
            }
            return Ok(());
        }
        self.family_spec()?;
        if self.points.is_some() && self.grid.is_some() {
            return Err(ConfigError::at("grid", "give either points or grid, not both"));
        }
        if self.point_count == 0 {
            return Err(ConfigError::at("point_count", "must be at least 1"));
        }
        if !(self.point_width > 0.0) {
            return Err(ConfigError::at("point_width", "must be positive"));
        }
        if self.count == 0 {
            return Err(ConfigError::at("count", "must be at least 1"));
        }
        if !(self.t_max > 0.0) {
            return Err(ConfigError::at("t_max", "must be positive"));
        }
        if !(self.step > 0.0) {
            return Err(ConfigError::at("step", "must be positive"));
        }
        if self.samples < 2 {
            return Err(ConfigError::at("samples", "must be at least 2"));
        }
        if let Some(order) = self.order {
            if order > 1 {
                return Err(ConfigError::at("order", "must be 0 or 1"));
            }
        }
        let dim = self.family_spec()?.dim();
        if let Some(points) = &self.points {
            if points.is_empty() {
                return Err(ConfigError::at("points", "must not be empty"));
            }
            for (i, p) in points.iter().enumerate() {
                if p.len() != dim {
                    return Err(ConfigError::at(&format!("points[{i}]"), format!("expected {dim} coordinates, found {}", p.len())));
                }
            }
        }
        if let Some(grid) = &self.grid {
            if grid.axis >= dim {
                return Err(ConfigError::at("grid.axis", format!("must be below {dim}")));
            }
            if grid.steps < 2 {
                return Err(ConfigError::at("grid.steps", "must be at least 2"));
            }
            if let Some(base) = &grid.base {
                if base.len() != dim {
                    return Err(ConfigError::at("grid.base", format!("expected {dim} coordinates, found {}", base.len())));
                }
            }
        }
        for (name, v) in [("velocity", &self.velocity), ("target", &self.target)] {
            if let Some(v) = v {
                if v.len() != dim {
                    return Err(ConfigError::at(name, format!("expected {dim} coordinates, found {}", v.len())));
                }
            }
        }
        if self.command == Command::Geodesic && self.velocity.is_some() == self.target.is_some() {
            return Err(ConfigError::at("velocity", "the geodesic command needs exactly one of velocity and target"));
        }
        if self.command == Command::Kp && self.family != Some(3) {
            return Err(ConfigError::at("family", "the kp command needs family 3"));
        }
        if self.command == Command::Invariants && self.family == Some(3) {
            return Err(ConfigError::at("family", "the invariants command needs family 1 or 2"));
        }
        if let Some(inv) = self.invariant {
            if Some(inv.family()) != self.family {
                return Err(ConfigError::at("invariant", format!("{inv:?} belongs to family {}", inv.family())));
            }
        }
        Ok(())
    }

    pub fn family_spec(&self) -> Result<FamilySpec, ConfigError> {
        let family = self.family.ok_or_else(|| ConfigError::at("family", "missing field"))?;
        let (key, size) = match family {
            1 => ("p", self.p),
            2 => ("s", self.s),
            3 => ("r", self.r),
            other => return Err(ConfigError::at("family", format!("expected 1, 2 or 3, found {other}"))),
        };
        let size = size.ok_or_else(|| ConfigError::at(key, format!("family {family} needs `{key}`")))?;
        if self.psi.is_some() && (family != 3 || self.profiles.is_some()) {
            return Err(ConfigError::at("psi", "only for family 3, and not together with profiles"));
        }
        let wrap = |r: curvhom::Result<FamilySpec>| r.map_err(|e| ConfigError::at(key, e.to_string()));
        if let Some(psi) = &self.psi {
            return wrap(FamilySpec::family3(size, scalar_profile(psi, "psi")?));
        }
        match &self.profiles {
            None => wrap(FamilySpec::symmetric(family, size)),
            Some(ProfilesField::Shorthand(name)) => match (family, name.as_str()) {
                (_, "symmetric") => wrap(FamilySpec::symmetric(family, size)),
                (1, "zero") => wrap(FamilySpec::family1(size, MultiProfile::polynomial(size, Vec::new()).expect("empty polynomial"))),
                (1, other) => Err(ConfigError::at("profiles", format!("unknown family 1 shorthand `{other}`"))),
                (2, other) => {
                    let f = scalar_shorthand(other).ok_or_else(|| ConfigError::at("profiles", format!("unknown profile shorthand `{other}`")))?;
                    wrap(FamilySpec::family2(size, vec![f; size]))
                }
                (_, other) => {
                    let f = scalar_shorthand(other).ok_or_else(|| ConfigError::at("profiles", format!("unknown profile shorthand `{other}`")))?;
                    wrap(FamilySpec::family3(size, f))
                }
            },
            Some(ProfilesField::List(list)) => {
                if family != 1 {
                    let parsed = list
                        .iter()
                        .enumerate()
                        .map(|(i, v)| scalar_profile(v, &format!("profiles[{i}]")))
                        .collect::<Result<Vec<_>, _>>()?;
                    return match family {
                        2 => {
                            let f = match parsed.len() {
                                1 => vec![parsed[0].clone(); size],
                                n if n == size => parsed,
                                n => return Err(ConfigError::at("profiles", format!("expected 1 or {size} entries, found {n}"))),
                            };
                            wrap(FamilySpec::family2(size, f))
                        }
                        _ => match parsed.as_slice() {
                            [psi] => wrap(FamilySpec::family3(size, psi.clone())),
                            _ => Err(ConfigError::at("profiles", "family 3 takes exactly one profile")),
                        },
                    };
                }
                let value = json!({ "family": family, key: size, "profiles": list });
                FamilySpec::from_json_value(&value).map_err(|e| ConfigError::at("profiles", e))
            }
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            seed: self.seed,
            count: self.count,
            ..SamplerConfig::default()
        }
    }

    /// Explicit points, grid points, or seeded random points.
    pub fn resolve_points(&self, dim: usize) -> curvhom::Result<Vec<Vec<f64>>> {
        if let Some(points) = &self.points {
            return Ok(points.clone());
        }
        if let Some(g) = &self.grid {
            let grid = Grid {
                axis: g.axis,
                from: g.from,
                to: g.to,
                steps: g.steps,
            };
            let base = g.base.clone().unwrap_or_else(|| vec![0.0; dim]);
            return grid.points(&base);
        }
        let mut rng = self.sampler().rng(u64::MAX);
        let w = self.point_width;
        Ok((0..self.point_count)
            .map(|_| (0..dim).map(|_| rng.gen_range(-w..w)).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_path(text: &str) -> String {
        match parse_config(text) {
            Err(ConfigError::Schema { path, .. }) => path,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_defaults() {
        let c = parse_config(r#"{"command":"verify","family":2,"s":2,"profiles":"zero"}"#).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.count, 100);
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.family_spec().unwrap().dim(), 6);
    }

    #[test]
    fn shorthand_profiles() {
        let c = parse_config(r#"{"command":"kp","family":3,"r":2,"psi":"u^4","points":[[0,1,0,0,0,0]]}"#).unwrap();
        let FamilySpec::Family3 { psi, .. } = c.family_spec().unwrap() else { panic!() };
        assert_eq!(psi.derivative(2.0, 4).unwrap(), 24.0);
        let c = parse_config(r#"{"command":"verify","family":1,"p":3}"#).unwrap();
        assert_eq!(c.family_spec().unwrap().dim(), 6);
        let c = parse_config(r#"{"command":"verify","family":2,"s":2,"profiles":[{"kind":"exp"},"u^3"]}"#).unwrap();
        assert!(c.family_spec().is_ok());
    }

    #[test]
    fn schema_errors_name_the_field() {
        assert_eq!(schema_path(r#"{"command":"verify","family":2,"s":2,"bogus":1}"#), "bogus");
        assert_eq!(schema_path(r#"{"command":"nope"}"#), "command");
        assert_eq!(schema_path(r#"{"command":"verify","family":2,"s":"two"}"#), "s");
        assert_eq!(schema_path(r#"{"command":"verify","family":2,"s":2,"tolerances":{"oracel":1}}"#), "tolerances.oracel");
        assert_eq!(schema_path(r#"{"command":"verify","family":2}"#), "s");
        assert_eq!(schema_path(r#"{"command":"verify","family":3,"r":2,"points":[[1,2]]}"#), "points[0]");
        assert_eq!(schema_path(r#"{"command":"verify","family":2,"s":2,"profiles":"u^x"}"#), "profiles");
        assert_eq!(schema_path(r#"{"command":"kp","family":2,"s":2}"#), "family");
        assert_eq!(schema_path(r#"{"command":"geodesic","family":2,"s":2}"#), "velocity");
    }

    #[test]
    fn random_points_are_reproducible() {
        let c = parse_config(r#"{"command":"curvature","family":3,"r":2,"seed":7}"#).unwrap();
        let a = c.resolve_points(6).unwrap();
        assert_eq!(a, c.resolve_points(6).unwrap());
        assert_eq!(a.len(), 5);
        let g = parse_config(r#"{"command":"invariants","family":1,"p":2,"grid":{"axis":0,"from":-1,"to":1,"steps":5}}"#).unwrap();
        assert_eq!(g.resolve_points(4).unwrap().len(), 5);
    }
}

//! Versioned JSON report and the check runner that fills it.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: f64,
    pub checks_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub checks: Vec<Check>,
    pub data: Map<String, Value>,
    pub timings: Timings,
}

impl Report {
    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Fail)
    }

    pub fn summary(&self) -> String {
        let mut out = format!("curvhom {} | {} | seed {}\n", self.version, self.command, self.seed);
        let mut counts = [0usize; 3];
        for c in &self.checks {
            let (tag, k) = match c.status {
                Status::Pass => ("PASS", 0),
                Status::Fail => ("FAIL", 1),
                Status::Inconclusive => ("????", 2),
            };
            counts[k] += 1;
            out.push_str(&format!("  {tag} {}", c.name));
            if let (Some(d), Some(t)) = (c.max_deviation, c.tolerance) {
                out.push_str(&format!("  (max deviation {d:.3e}, tol {t:.1e})"));
            }
            if let Some(detail) = &c.detail {
                out.push_str(&format!("  {detail}"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "{} passed, {} failed, {} inconclusive in {:.1} ms\n",
            counts[0], counts[1], counts[2], self.timings.total_ms
        ));
        out
    }
}

/// What a single check produced, before it is named and timed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub max_deviation: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: Option<String>,
    pub witnesses: Vec<Value>,
    pub data: Option<Value>,
}

impl Outcome {
    pub fn pass() -> Self {
        Outcome::with_status(Status::Pass)
    }

    pub fn fail(witness: Value) -> Self {
        Outcome::with_status(Status::Fail).witness(witness)
    }

    pub fn inconclusive(detail: impl Into<String>) -> Self {
        Outcome::with_status(Status::Inconclusive).detail(detail)
    }

    pub fn with_status(status: Status) -> Self {
        Outcome {
            status,
            max_deviation: None,
            tolerance: None,
            detail: None,
            witnesses: Vec::new(),
            data: None,
        }
    }

    /// Pass iff `deviation <= tol`; the witness is attached only on failure.
    pub fn measured(deviation: f64, tol: f64, witness: Value) -> Self {
        let ok = deviation.is_finite() && deviation <= tol;
        let mut o = Outcome::with_status(if ok { Status::Pass } else { Status::Fail });
        o.max_deviation = Some(deviation);
        o.tolerance = Some(tol);
        if !ok {
            o.witnesses.push(witness);
        }
        o
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn witness(mut self, w: Value) -> Self {
        self.witnesses.push(w);
        self
    }

    pub fn data(mut self, d: Value) -> Self {
        self.data = Some(d);
        self
    }
}

/// Runs checks, converting library errors into failed checks; an exhausted
/// sampler makes the check inconclusive.
pub struct Runner {
    checks: Vec<Check>,
    data: Map<String, Value>,
    timings: BTreeMap<String, f64>,
    start: Instant,
}

impl Runner {
    pub fn new() -> Self {
        Runner {
            checks: Vec::new(),
            data: Map::new(),
            timings: BTreeMap::new(),
            start: Instant::now(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, f: impl FnOnce() -> curvhom::Result<Outcome>) {
        let name = name.into();
        let t = Instant::now();
        let outcome = f().unwrap_or_else(|e| match e {
            curvhom::Error::RejectionCap { .. } => Outcome::inconclusive(e.to_string()),
            e => Outcome::fail(json!({ "error": e.to_string() })),
        });
        self.timings.insert(name.clone(), t.elapsed().as_secs_f64() * 1e3);
        if let Some(d) = outcome.data {
            self.data.insert(name.clone(), d);
        }
        let mut witnesses = outcome.witnesses;
        if outcome.status == Status::Fail && witnesses.is_empty() {
            witnesses.push(json!({ "max_deviation": outcome.max_deviation, "detail": outcome.detail }));
        }
        self.checks.push(Check {
            name,
            status: outcome.status,
            max_deviation: outcome.max_deviation,
            tolerance: outcome.tolerance,
            detail: outcome.detail,
            witnesses,
        });
    }

    pub fn finish(mut self, command: &str, seed: u64, config: Value) -> Report {
        self.checks.sort_by(|a, b| a.name.cmp(&b.name));
        Report {
            tool: "curvhom".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            seed,
            config,
            checks: self.checks,
            data: self.data,
            timings: Timings {
                total_ms: self.start.elapsed().as_secs_f64() * 1e3,
                checks_ms: self.timings,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use curvhom::Error;

    #[test]
    fn checks_sorted_and_errors_become_failures() {
        let mut r = Runner::new();
        r.check("zeta", || Ok(Outcome::pass()));
        r.check("alpha", || Err(Error::HessianNotPositive));
        r.check("mid", || Ok(Outcome::measured(2.0, 1.0, json!({"at": 1}))));
        let rep = r.finish("verify", 3, json!({}));
        let names: Vec<&str> = rep.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["alpha", "mid", "zeta"]);
        assert_eq!(rep.checks[0].status, Status::Fail);
        assert!(rep.checks[0].witnesses[0]["error"].is_string());
        assert_eq!(rep.checks[1].witnesses, vec![json!({"at": 1})]);
        assert!(rep.failed());
    }

    #[test]
    fn exhausted_sampler_is_inconclusive() {
        let mut r = Runner::new();
        r.check("probe", || Err(Error::RejectionCap { cap: 10, accepted: 3 }));
        let rep = r.finish("probe-ip", 0, json!({}));
        assert_eq!(rep.checks[0].status, Status::Inconclusive);
        assert!(!rep.failed());
    }

    #[test]
    fn every_failure_has_a_witness() {
        let mut r = Runner::new();
        r.check("bare", || Ok(Outcome::with_status(Status::Fail)));
        let rep = r.finish("kp", 0, json!({}));
        assert_eq!(rep.checks[0].witnesses.len(), 1);
    }

    #[test]
    fn report_round_trips_through_json() {
        let mut r = Runner::new();
        r.check("a", || Ok(Outcome::pass().data(json!([1, 2]))));
        let rep = r.finish("curvature", 1, json!({"command": "curvature"}));
        let back: Report = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(back, rep);
        assert!(!back.failed());
        assert!(back.summary().contains("1 passed, 0 failed"));
    }
}

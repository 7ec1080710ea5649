//! Machine-readable verification reports.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `measured <= bound`
    Le,
    /// `measured >= bound`
    Ge,
    /// `|measured − bound| <= tolerance`
    Near,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(deserialize_with = "nan_as_null")]
    pub measured: f64,
    #[serde(deserialize_with = "nan_as_null")]
    pub bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub relation: Relation,
    pub pass: bool,
}

// Non-finite values serialize as `null`.
fn nan_as_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            tolerance: None,
            relation: Relation::Le,
            pass: measured <= bound,
        }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            tolerance: None,
            relation: Relation::Ge,
            pass: measured >= bound,
        }
    }

    pub fn near(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound: target,
            tolerance: Some(tolerance),
            relation: Relation::Near,
            pass: (measured - target).abs() <= tolerance,
        }
    }

    /// A boolean condition, recorded as `measured = 1` against `bound = 1`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        match self.relation {
            Relation::Le => write!(f, "[{status}] {}: {:.6e} <= {:.6e}", self.name, self.measured, self.bound),
            Relation::Ge => write!(f, "[{status}] {}: {:.6e} >= {:.6e}", self.name, self.measured, self.bound),
            Relation::Near => write!(
                f,
                "[{status}] {}: {:.6e} within {:.1e} of {:.6e}",
                self.name,
                self.measured,
                self.tolerance.unwrap_or(0.0),
                self.bound
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub checks: Vec<Check>,
    pub environment: BTreeMap<String, serde_json::Value>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn new(suite: impl Into<String>) -> Self {
        Self {
            suite: suite.into(),
            checks: Vec::new(),
            environment: BTreeMap::new(),
            pass: true,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    /// Records a failed check for an error that prevented measurement.
    pub fn push_error(&mut self, name: impl Into<String>, err: &crate::FranksError) {
        let name = name.into();
        self.environment
            .insert(format!("{name}.error"), serde_json::Value::String(err.to_string()));
        self.push(Check {
            name,
            measured: f64::NAN,
            bound: f64::NAN,
            tolerance: None,
            relation: Relation::Le,
            pass: false,
        });
    }

    pub fn set_env(&mut self, key: impl Into<String>, value: impl Serialize) {
        self.environment
            .insert(key.into(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    pub fn merge(&mut self, other: VerificationReport) {
        for c in other.checks {
            let name = format!("{}/{}", other.suite, c.name);
            self.push(Check { name, ..c });
        }
        for (k, v) in other.environment {
            self.environment.insert(format!("{}/{}", other.suite, k), v);
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {}: {}", self.suite, if self.pass { "PASS" } else { "FAIL" })?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relations() {
        assert!(Check::at_most("a", 1.0, 1.0).pass);
        assert!(!Check::at_most("a", f64::NAN, 1.0).pass);
        assert!(Check::at_least("b", 2.0, 1.0).pass);
        assert!(Check::near("c", 1.0 + 1e-11, 1.0, 1e-10).pass);
        assert!(!Check::near("c", 1.1, 1.0, 1e-10).pass);
    }

    #[test]
    fn report_round_trips_and_aggregates() {
        let mut r = VerificationReport::new("s");
        r.push(Check::at_most("ok", 0.0, 1.0));
        assert!(r.pass);
        r.push(Check::holds("bad", false));
        assert!(!r.pass);
        r.set_env("seed", 7u64);
        r.push_error("broken", &crate::FranksError::Config("x".into()));
        let back: VerificationReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.checks.len(), 3);
        assert!(back.checks[2].measured.is_nan());
        assert!(!back.pass);
        let mut all = VerificationReport::new("all");
        all.merge(back);
        assert_eq!(all.checks[0].name, "s/ok");
        assert!(!all.pass);
    }
}

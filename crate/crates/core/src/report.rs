//! Structured validation records shared by the validators, the reductions and
//! the command-line front end.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::blockmat::ComplexMatrix;
use crate::error::Error;
use crate::generator::{ChannelRole, ItoGeneratorMatrix};

/// Default relative Frobenius tolerance for every validator.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Serialize non-finite floats as strings so reports stay valid JSON.
pub fn serialize_real<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn serialize_real_map<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(k, &Real(*v))?;
    }
    map.end()
}

struct Real(f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_real(&self.0, s)
    }
}

/// One residual compared against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(serialize_with = "serialize_real")]
    pub residual: f64,
    #[serde(serialize_with = "serialize_real")]
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes iff `residual <= threshold`. NaN never passes.
    pub fn at_most(name: impl Into<String>, residual: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            threshold,
            passed: residual <= threshold,
        }
    }

    /// Passes iff `residual < limit`; used for condition numbers.
    pub fn below(name: impl Into<String>, residual: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            threshold: limit,
            passed: residual < limit,
        }
    }
}

/// A named group of checks, e.g. the Hudson-Parthasarathy conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationFragment {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ValidationFragment {
    pub fn new(name: impl Into<String>, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self {
            name: name.into(),
            passed,
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Human-readable list of failed checks.
    pub fn describe_failures(&self) -> String {
        self.failures()
            .map(|c| format!("{}: {:e} > {:e}", c.name, c.residual, c.threshold))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Dimensions, channel roles and a content hash identifying an input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fingerprint {
    pub dim: usize,
    pub channels: usize,
    pub slow_dim: Option<usize>,
    pub channel_roles: Vec<ChannelRole>,
    pub hash: String,
}

impl Fingerprint {
    pub fn new<'a>(
        dim: usize,
        channels: usize,
        slow_dim: Option<usize>,
        roles: &[ChannelRole],
        matrices: impl IntoIterator<Item = &'a ComplexMatrix>,
    ) -> Self {
        Self {
            dim,
            channels,
            slow_dim,
            channel_roles: roles.to_vec(),
            hash: hash_matrices(matrices),
        }
    }
}

/// SHA-256 over the little-endian bytes of every entry, shapes included.
pub fn hash_matrices<'a>(matrices: impl IntoIterator<Item = &'a ComplexMatrix>) -> String {
    let mut hasher = Sha256::new();
    for m in matrices {
        hasher.update((m.nrows() as u64).to_le_bytes());
        hasher.update((m.ncols() as u64).to_le_bytes());
        // row-major so the hash matches the serialized layout
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                hasher.update(m[(i, j)].re.to_le_bytes());
                hasher.update(m[(i, j)].im.to_le_bytes());
            }
        }
    }
    hex::encode(hasher.finalize())
}

/// Outcome record of a validation or reduction pipeline.
#[derive(Debug, Clone, Default)]
pub struct ReductionReport {
    pub operation: String,
    pub input: Option<Fingerprint>,
    pub fragments: Vec<ValidationFragment>,
    pub residuals: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub outputs: Vec<(String, ItoGeneratorMatrix)>,
    /// Stage failures captured instead of propagated, keyed by stage name.
    pub errors: BTreeMap<String, Error>,
    pub passed: bool,
    pub wall_time: Option<Duration>,
}

impl ReductionReport {
    pub fn new(operation: impl Into<String>) -> Self {
        Self {
            operation: operation.into(),
            passed: true,
            ..Default::default()
        }
    }

    pub fn push_fragment(&mut self, fragment: ValidationFragment) {
        self.passed &= fragment.passed;
        self.fragments.push(fragment);
    }

    pub fn fragment(&self, name: &str) -> Option<&ValidationFragment> {
        self.fragments.iter().find(|f| f.name == name)
    }

    pub fn residual(&self, key: &str) -> Option<f64> {
        self.residuals.get(key).copied()
    }

    /// Record a failed stage; the report no longer passes.
    pub fn push_error(&mut self, stage: impl Into<String>, error: Error) {
        self.passed = false;
        self.errors.insert(stage.into(), error);
    }

    pub fn output(&self, name: &str) -> Option<&ItoGeneratorMatrix> {
        self.outputs.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }
}

/// Serializable mirror of the scalar parts of a [`ReductionReport`].
#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary<'a> {
    pub operation: &'a str,
    pub passed: bool,
    pub input: Option<&'a Fingerprint>,
    pub fragments: &'a [ValidationFragment],
    #[serde(serialize_with = "serialize_real_map")]
    pub residuals: &'a BTreeMap<String, f64>,
    pub errors: BTreeMap<&'a str, String>,
    pub notes: &'a [String],
}

impl<'a> From<&'a ReductionReport> for ReportSummary<'a> {
    fn from(r: &'a ReductionReport) -> Self {
        Self {
            operation: &r.operation,
            passed: r.passed,
            input: r.input.as_ref(),
            fragments: &r.fragments,
            residuals: &r.residuals,
            errors: r.errors.iter().map(|(k, e)| (k.as_str(), e.to_string())).collect(),
            notes: &r.notes,
        }
    }
}

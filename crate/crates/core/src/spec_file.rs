//! JSON network description files.
//!
//! A file holds one generator, SLH triple or scaled family. Complex matrices
//! are nested row-major arrays of `[re, im]` pairs. Example:
//!
//! ```json
//! {
//!   "schema_version": "1",
//!   "kind": "generator",
//!   "dims": { "d": 1, "n": 1 },
//!   "channel_roles": ["external"],
//!   "k": [[[0.0, 0.0]]],
//!   "l": [[[0.0, 0.0]]],
//!   "m": [[[0.0, 0.0]]],
//!   "n": [[[1.0, 0.0]]]
//! }
//! ```
//!
//! Emitted files are written with sorted keys and one matrix row per line,
//! so identical content always produces identical bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::blockmat::{ComplexMatrix, C64};
use crate::generator::{ChannelRole, ItoGeneratorMatrix, ScaledGeneratorFamily, SlhTriple, SubspaceDecomposition};

pub const SCHEMA_VERSION: &str = "1";

/// Parse or consistency failure of a spec file.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("malformed spec file: {0}")]
    Parse(String),
    #[error("unsupported schema version `{0}` (expected `{SCHEMA_VERSION}`)")]
    Version(String),
    #[error("inconsistent spec file: {0}")]
    Inconsistent(String),
    /// Well-formed but physically invalid content (non-unitary `s`,
    /// non-Hermitian `h`, non-orthonormal slow basis).
    #[error("invalid spec content: {0}")]
    Invalid(String),
}

/// Row-major matrix of `[re, im]` pairs.
pub type MatrixData = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub d: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slow_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpecBody {
    Generator {
        dims: Dims,
        channel_roles: Vec<ChannelRole>,
        k: MatrixData,
        l: MatrixData,
        m: MatrixData,
        n: MatrixData,
    },
    Slh {
        dims: Dims,
        channel_roles: Vec<ChannelRole>,
        s: MatrixData,
        c: Vec<MatrixData>,
        h: MatrixData,
    },
    ScaledFamily {
        dims: Dims,
        channel_roles: Vec<ChannelRole>,
        y: MatrixData,
        a: MatrixData,
        b: MatrixData,
        f: MatrixData,
        g: MatrixData,
        n: MatrixData,
        /// Orthonormal basis of the slow subspace, one column per vector.
        slow_basis: MatrixData,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpecFile {
    pub schema_version: String,
    #[serde(flatten)]
    pub body: SpecBody,
}

/// Parsed content of a spec file.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Generator(ItoGeneratorMatrix),
    Slh(SlhTriple, Vec<ChannelRole>),
    ScaledFamily(ScaledGeneratorFamily),
}

impl Network {
    pub fn kind(&self) -> &'static str {
        match self {
            Network::Generator(_) => "generator",
            Network::Slh(..) => "slh",
            Network::ScaledFamily(_) => "scaled_family",
        }
    }
}

pub fn encode_matrix(m: &ComplexMatrix) -> MatrixData {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Decode a matrix that must have the given shape.
pub fn decode_matrix(data: &MatrixData, rows: usize, cols: usize, what: &str) -> Result<ComplexMatrix, SpecError> {
    if data.len() != rows || data.iter().any(|r| r.len() != cols) {
        let got_cols = data.first().map_or(0, |r| r.len());
        return Err(SpecError::Inconsistent(format!(
            "`{what}` should be {rows}x{cols}, found {}x{got_cols}",
            data.len()
        )));
    }
    if data.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(SpecError::Inconsistent(format!("`{what}` has a non-finite entry")));
    }
    Ok(ComplexMatrix::from_fn(rows, cols, |i, j| C64::new(data[i][j][0], data[i][j][1])))
}

fn check_roles(dims: &Dims, roles: &[ChannelRole]) -> Result<(), SpecError> {
    if roles.len() != dims.n {
        return Err(SpecError::Inconsistent(format!(
            "{} channel roles for n = {}",
            roles.len(),
            dims.n
        )));
    }
    Ok(())
}

impl NetworkSpecFile {
    pub fn from_generator(g: &ItoGeneratorMatrix) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            body: SpecBody::Generator {
                dims: Dims {
                    d: g.dim(),
                    n: g.channels(),
                    slow_dim: None,
                },
                channel_roles: g.roles().to_vec(),
                k: encode_matrix(g.k()),
                l: encode_matrix(g.l()),
                m: encode_matrix(g.m()),
                n: encode_matrix(g.scattering()),
            },
        }
    }

    pub fn from_slh(t: &SlhTriple, roles: &[ChannelRole]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            body: SpecBody::Slh {
                dims: Dims {
                    d: t.h().nrows(),
                    n: t.c().len(),
                    slow_dim: None,
                },
                channel_roles: roles.to_vec(),
                s: encode_matrix(t.s()),
                c: t.c().iter().map(encode_matrix).collect(),
                h: encode_matrix(t.h()),
            },
        }
    }

    pub fn from_family(fam: &ScaledGeneratorFamily) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            body: SpecBody::ScaledFamily {
                dims: Dims {
                    d: fam.dim(),
                    n: fam.channels(),
                    slow_dim: Some(fam.decomposition().slow_dim()),
                },
                channel_roles: fam.roles().to_vec(),
                y: encode_matrix(fam.y()),
                a: encode_matrix(fam.a()),
                b: encode_matrix(fam.b()),
                f: encode_matrix(fam.f()),
                g: encode_matrix(fam.g()),
                n: encode_matrix(fam.scattering()),
                slow_basis: encode_matrix(fam.decomposition().slow_basis()),
            },
        }
    }

    pub fn from_network(net: &Network) -> Self {
        match net {
            Network::Generator(g) => Self::from_generator(g),
            Network::Slh(t, roles) => Self::from_slh(t, roles),
            Network::ScaledFamily(f) => Self::from_family(f),
        }
    }

    /// Check dimensions and build the network. Physical validity (HP
    /// conditions, structure) is left to the validators; only SLH triples and
    /// slow bases are checked here, because their constructors require it.
    pub fn to_network(&self) -> Result<Network, SpecError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SpecError::Version(self.schema_version.clone()));
        }
        let lib = |e: crate::Error| SpecError::Inconsistent(e.to_string());
        let invalid = |e: crate::Error| SpecError::Invalid(e.to_string());
        match &self.body {
            SpecBody::Generator {
                dims,
                channel_roles,
                k,
                l,
                m,
                n,
            } => {
                check_roles(dims, channel_roles)?;
                let (d, nd) = (dims.d, dims.n * dims.d);
                let g = ItoGeneratorMatrix::new_unchecked(
                    decode_matrix(k, d, d, "k")?,
                    decode_matrix(l, d, nd, "l")?,
                    decode_matrix(m, nd, d, "m")?,
                    decode_matrix(n, nd, nd, "n")?,
                    channel_roles.clone(),
                )
                .map_err(lib)?;
                Ok(Network::Generator(g))
            }
            SpecBody::Slh {
                dims,
                channel_roles,
                s,
                c,
                h,
            } => {
                check_roles(dims, channel_roles)?;
                let (d, nd) = (dims.d, dims.n * dims.d);
                if c.len() != dims.n {
                    return Err(SpecError::Inconsistent(format!("{} couplings for n = {}", c.len(), dims.n)));
                }
                let cs = c
                    .iter()
                    .enumerate()
                    .map(|(j, cj)| decode_matrix(cj, d, d, &format!("c[{j}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let t = SlhTriple::new(decode_matrix(s, nd, nd, "s")?, cs, decode_matrix(h, d, d, "h")?).map_err(invalid)?;
                Ok(Network::Slh(t, channel_roles.clone()))
            }
            SpecBody::ScaledFamily {
                dims,
                channel_roles,
                y,
                a,
                b,
                f,
                g,
                n,
                slow_basis,
            } => {
                check_roles(dims, channel_roles)?;
                let (d, nd) = (dims.d, dims.n * dims.d);
                let slow_dim = dims
                    .slow_dim
                    .ok_or_else(|| SpecError::Inconsistent("scaled family needs dims.slow_dim".into()))?;
                if slow_dim > d {
                    return Err(SpecError::Inconsistent(format!("slow_dim {slow_dim} exceeds d = {d}")));
                }
                let basis = decode_matrix(slow_basis, d, slow_dim, "slow_basis")?;
                let decomp = SubspaceDecomposition::from_slow_basis(basis).map_err(invalid)?;
                let fam = ScaledGeneratorFamily::new_unchecked(
                    decode_matrix(y, d, d, "y")?,
                    decode_matrix(a, d, d, "a")?,
                    decode_matrix(b, d, d, "b")?,
                    decode_matrix(f, d, nd, "f")?,
                    decode_matrix(g, d, nd, "g")?,
                    decode_matrix(n, nd, nd, "n")?,
                    decomp,
                    channel_roles.clone(),
                )
                .map_err(lib)?;
                Ok(Network::ScaledFamily(fam))
            }
        }
    }
}

/// Parse a spec file from JSON text.
pub fn parse(text: &str) -> Result<Network, SpecError> {
    let file: NetworkSpecFile = serde_json::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
    file.to_network()
}

/// Emit a network as canonical JSON text.
pub fn emit(net: &Network) -> String {
    let value = serde_json::to_value(NetworkSpecFile::from_network(net)).expect("spec files are plain data");
    to_canonical_json(&value)
}

/// Pretty JSON with sorted keys where arrays of numbers, and arrays whose
/// elements are all arrays of numbers, stay on one line. Ends with a newline.
pub fn to_canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn is_flat(v: &Value) -> bool {
    match v {
        Value::Array(items) => items.iter().all(|x| !x.is_array() && !x.is_object()),
        _ => false,
    }
}

fn inline(v: &Value) -> bool {
    match v {
        Value::Array(items) => items.iter().all(|x| is_flat(x) || (!x.is_array() && !x.is_object())),
        Value::Object(map) => map.is_empty(),
        _ => true,
    }
}

fn write_inline(out: &mut String, v: &Value) {
    match v {
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_inline(out, item);
            }
            out.push(']');
        }
        other => out.push_str(&serde_json::to_string(other).expect("serializable")),
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    if inline(v) {
        write_inline(out, v);
        return;
    }
    match v {
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, item, indent + 1);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            let _ = write!(out, "{}]", pad(indent));
        }
        Value::Object(map) => {
            out.push_str("{\n");
            let len = map.len();
            for (i, (k, item)) in map.iter().enumerate() {
                let _ = write!(out, "{}{}: ", pad(indent + 1), Value::String(k.clone()));
                write_value(out, item, indent + 1);
                if i + 1 < len {
                    out.push(',');
                }
                out.push('\n');
            }
            let _ = write!(out, "{}}}", pad(indent));
        }
        _ => unreachable!("scalars are inline"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn generator_round_trip() {
        let net = Network::Generator(fixtures::cavity_loop());
        let text = emit(&net);
        assert_eq!(parse(&text).unwrap(), net);
        assert_eq!(emit(&parse(&text).unwrap()), text);
    }

    #[test]
    fn family_round_trip() {
        let net = Network::ScaledFamily(fixtures::fast_cavity_loop());
        assert_eq!(parse(&emit(&net)).unwrap(), net);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(parse("not json"), Err(SpecError::Parse(_))));
        let mut text = emit(&Network::Generator(fixtures::trivial()));
        assert!(matches!(
            parse(&text.replace("\"schema_version\": \"1\"", "\"schema_version\": \"9\"")),
            Err(SpecError::Version(_))
        ));
        text = text.replace("\"d\": 2", "\"d\": 3");
        assert!(matches!(parse(&text), Err(SpecError::Inconsistent(_))));
    }

    #[test]
    fn canonical_json_round_trips() {
        let v: Value = serde_json::json!({"x": [[1.5, -2.0e-300]], "notes": ["a, b", "c"], "e": {}});
        let s = to_canonical_json(&v);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}

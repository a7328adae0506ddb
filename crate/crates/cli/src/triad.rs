//! Selecting a triad from the catalog or a JSON file.

use std::path::Path;

use hermann_core::catalog::{self, CatalogParams, TriadSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::TriadArgs;
use crate::error::{CliError, CliErrorKind};

/// On-disk triad description. Matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriadFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub sigma1_conjugator: Vec<Vec<f64>>,
    pub sigma2_conjugator: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<FramesFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FramesFile {
    pub t: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub tprime: Vec<Vec<Vec<f64>>>,
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn malformed(msg: impl Into<String>) -> CliError {
    CliError::new(CliErrorKind::MalformedTriad, msg)
}

fn matrix(name: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(malformed(format!("{name} must be a {n}x{n} array of rows")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(malformed(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl TriadFile {
    pub fn from_spec(spec: &TriadSpec) -> Self {
        Self {
            name: Some(spec.label()),
            n: spec.n,
            sigma1_conjugator: rows(spec.sigma1.conjugator()),
            sigma2_conjugator: rows(spec.sigma2.conjugator()),
            frames: spec.frames.as_ref().map(|f| FramesFile {
                t: f.t.iter().map(|x| rows(x.mat())).collect(),
                tprime: f.tprime.iter().map(|x| rows(x.mat())).collect(),
            }),
        }
    }

    pub fn into_spec(self) -> Result<TriadSpec, CliError> {
        let n = self.n;
        if n < 2 {
            return Err(malformed("n must be at least 2"));
        }
        let c1 = matrix("sigma1_conjugator", &self.sigma1_conjugator, n)?;
        let c2 = matrix("sigma2_conjugator", &self.sigma2_conjugator, n)?;
        let frames = match self.frames {
            Some(f) => {
                let conv =
                    |ms: &[Vec<Vec<f64>>], name: &str| -> Result<Vec<DMatrix<f64>>, CliError> {
                        ms.iter().map(|m| matrix(name, m, n)).collect()
                    };
                Some((conv(&f.t, "frames.t")?, conv(&f.tprime, "frames.tprime")?))
            }
            None => None,
        };
        let name = self.name.unwrap_or_else(|| "custom".into());
        TriadSpec::custom(&name, c1, c2, frames, 1e-10).map_err(|e| malformed(e.to_string()))
    }
}

/// Parse triad JSON. A `catalog` export report is accepted as well.
pub fn parse_triad_json(text: &str) -> Result<TriadSpec, CliError> {
    let mut v: Value =
        serde_json::from_str(text).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    if let Some(inner) = v.pointer("/result/triad_file") {
        v = inner.clone();
    }
    let file: TriadFile = serde_json::from_value(v).map_err(|e| malformed(e.to_string()))?;
    file.into_spec()
}

pub fn load_triad_file(path: &Path) -> Result<TriadSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new(CliErrorKind::Io, format!("{}: {e}", path.display())))?;
    parse_triad_json(&text)
}

pub fn catalog_params(args: &TriadArgs) -> CatalogParams {
    CatalogParams {
        n: args.n,
        p: args.p,
        q: args.q,
        blocks: args.blocks.clone(),
    }
}

pub fn select(args: &TriadArgs) -> Result<TriadSpec, CliError> {
    match (&args.triad, &args.triad_file) {
        (Some(name), None) => {
            if !catalog::NAMES.contains(&name.as_str()) {
                return Err(CliError::new(
                    CliErrorKind::UnknownTriad,
                    format!(
                        "unknown triad '{name}'; known: {}",
                        catalog::NAMES.join(", ")
                    ),
                ));
            }
            Ok(catalog::by_name(name, &catalog_params(args))?)
        }
        (None, Some(path)) => load_triad_file(path),
        _ => Err(CliError::input(
            "exactly one of --triad or --triad-file is required",
        )),
    }
}

/// The `triad` block of the report envelope.
pub fn describe(spec: &TriadSpec) -> Value {
    let params: serde_json::Map<String, Value> = spec
        .params
        .iter()
        .map(|(k, v)| (k.clone(), json!(v)))
        .collect();
    json!({
        "label": spec.label(),
        "name": spec.name,
        "n": spec.n,
        "params": params,
        "commuting": spec.commuting,
        "has_frames": spec.frames.is_some(),
    })
}

//! Data sources: `f` specifications, field files and body files.

use std::path::Path;
use std::sync::Arc;

use mink_core::{catalog, BodyFile, CatalogEntry, ConvexBody, Domain, DomainSpec, ScalarField};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{CliError, CliResult};

/// Nodal values or even-basis coefficients of a field on a recorded domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldFile {
    pub domain: DomainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
}

impl FieldFile {
    #[cfg(test)]
    pub fn nodal(domain: &Domain, f: &ScalarField) -> Self {
        FieldFile {
            domain: domain.spec(),
            values: Some(f.values().iter().copied().collect()),
            coeffs: None,
        }
    }
}

/// Antipodal symmetry tolerance, relative to `max |f|`.
const EVEN_TOL: f64 = 1e-12;

/// Parses `const:c`, `file:path` or `expr:name[:key=value,...]`; with `positive`
/// the field must be strictly positive. Fields must be even.
pub fn load_field(source: &str, domain: &Domain, positive: bool) -> CliResult<ScalarField> {
    let (kind, rest) = source
        .split_once(':')
        .ok_or_else(|| CliError::Validation(format!("field source {source:?} must look like kind:value")))?;
    let f = match kind {
        "const" => {
            let c: f64 = rest
                .trim()
                .parse()
                .map_err(|_| CliError::Validation(format!("bad constant in {source:?}")))?;
            ScalarField::constant(domain, c)
        }
        "file" => load_field_file(Path::new(rest), domain)?,
        "expr" => expr_field(rest, domain)?,
        _ => return Err(CliError::Validation(format!("unknown field source kind {kind:?}"))),
    };
    let v = f.values();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Validation(format!("{source:?} has non-finite values")));
    }
    if positive {
        if let Some(k) = v.iter().position(|&x| !(x > 0.0)) {
            return Err(CliError::Validation(format!(
                "{source:?} must be positive, but equals {:e} at node {k}",
                v[k]
            )));
        }
    }
    let scale = v.amax().max(f64::MIN_POSITIVE);
    for (k, &a) in domain.antipodes().iter().enumerate() {
        if (v[k] - v[a]).abs() > EVEN_TOL * scale {
            return Err(CliError::Validation(format!("{source:?} is not even (node {k} vs antipode {a})")));
        }
    }
    Ok(f)
}

fn load_field_file(path: &Path, domain: &Domain) -> CliResult<ScalarField> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let file: FieldFile = serde_json::from_str(&text)?;
    if file.domain != domain.spec() {
        return Err(CliError::Validation(format!(
            "{} was written for a different domain",
            path.display()
        )));
    }
    match (file.values, file.coeffs) {
        (Some(v), None) => {
            let f = ScalarField(DVector::from_vec(v));
            domain.check_field(&f)?;
            Ok(f)
        }
        (None, Some(c)) => Ok(domain.evaluate(&DVector::from_vec(c))?),
        _ => Err(CliError::Validation(format!(
            "{} must contain exactly one of values or coeffs",
            path.display()
        ))),
    }
}

/// `cos-bump`: `c + a cos(2kθ)` with `θ` the polar angle on S^2 and the angle on S^1.
fn expr_field(spec: &str, domain: &Domain) -> CliResult<ScalarField> {
    let (name, params) = spec.split_once(':').unwrap_or((spec, ""));
    let mut a = 0.5;
    let mut k = 1.0;
    let mut c = 1.0;
    for item in params.split(',').filter(|s| !s.is_empty()) {
        let (key, val) = item
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("expression parameter {item:?} must be key=value")))?;
        let val: f64 = val
            .parse()
            .map_err(|_| CliError::Validation(format!("expression parameter {item:?} is not a number")))?;
        match key {
            "a" => a = val,
            "k" => k = val,
            "c" => c = val,
            _ => return Err(CliError::Validation(format!("unknown expression parameter {key:?}"))),
        }
    }
    if k.fract() != 0.0 || k < 0.0 {
        return Err(CliError::Validation(format!("cos-bump needs a nonnegative integer k, got {k}")));
    }
    match name {
        "cos-bump" => {
            let n = domain.n();
            Ok(ScalarField::from_fn(domain, |u| {
                let theta = if n == 1 { u[1].atan2(u[0]) } else { u[2].clamp(-1.0, 1.0).acos() };
                c + a * (2.0 * k * theta).cos()
            }))
        }
        _ => Err(CliError::Validation(format!("unknown expression {name:?}"))),
    }
}

/// Reads a body from a body file, or from any JSON output that embeds one.
pub fn load_body(path: &Path) -> CliResult<ConvexBody> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)?;
    let file = find_body(&value)
        .ok_or_else(|| CliError::Validation(format!("{} does not contain a body", path.display())))?;
    Ok(file.into_body()?)
}

fn find_body(v: &Value) -> Option<BodyFile> {
    if let Ok(b) = serde_json::from_value::<BodyFile>(v.clone()) {
        return Some(b);
    }
    let obj = v.as_object()?;
    ["body", "report"].iter().find_map(|k| obj.get(*k).and_then(find_body))
}

/// `ball`, a catalog entry in JSON, or a body file path.
pub fn body_from_spec(spec: &str, domain: &Arc<Domain>) -> CliResult<ConvexBody> {
    if spec == "ball" {
        return Ok(mink_core::ball(domain, 1.0)?);
    }
    if spec.trim_start().starts_with('{') {
        let entry: CatalogEntry = serde_json::from_str(spec)?;
        return Ok(catalog(domain, &entry)?);
    }
    let body = load_body(Path::new(spec))?;
    if !body.domain().same_as(domain) {
        return Err(CliError::Validation(format!("{spec} lives on a different domain")));
    }
    Ok(body)
}

/// A pair member: a body file or a catalog entry.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BodySource {
    File(BodyFile),
    Catalog(CatalogEntry),
}

impl BodySource {
    pub fn build(self, domain: &Arc<Domain>) -> CliResult<ConvexBody> {
        match self {
            BodySource::File(f) => Ok(f.into_body_on(domain)?),
            BodySource::Catalog(e) => Ok(catalog(domain, &e)?),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub l: BodySource,
    pub k: BodySource,
}

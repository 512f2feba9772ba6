use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use ifp_core::barrier::{Boundary, BoundaryInterp};
use ifp_core::ext::parse_ext;
use ifp_core::survival::{SurvivalFn, SurvivalSpec};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

/// Reads `--g`: inline JSON when it starts with `{`, otherwise a file path.
pub fn load_survival(arg: &str) -> CliResult<SurvivalFn> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| CliError::input("g", format!("cannot read {arg}: {e}")))?
    };
    parse_survival(&text)
}

pub fn parse_survival(text: &str) -> CliResult<SurvivalFn> {
    let value: Value = serde_json::from_str(text).map_err(|e| CliError::input("g", format!("malformed JSON: {e}")))?;
    check_shape(&value).map_err(|(field, msg)| CliError::input(field, msg))?;
    let kind = value["kind"].as_str().unwrap_or_default().to_string();
    let spec: SurvivalSpec = serde_json::from_value(value).map_err(|e| CliError::input("g", e.to_string()))?;
    let g = SurvivalFn::try_from(spec).map_err(|e| {
        let mut err = CliError::from_core(e, "g");
        if kind == "analytic" {
            if let Some(f) = err.field.as_mut().filter(|f| !f.starts_with("params")) {
                *f = format!("params.{f}");
            }
        }
        err
    })?;
    g.validate().map_err(|v| {
        let field = match (kind.as_str(), v.index) {
            ("piecewise_constant", Some(i)) => format!("values[{i}]"),
            ("piecewise_constant", None) => "values".into(),
            _ => "g".into(),
        };
        CliError::input(field, v.message)
    })?;
    Ok(g)
}

type ShapeError = (String, String);

fn shape(field: impl Into<String>, msg: impl Into<String>) -> ShapeError {
    (field.into(), msg.into())
}

/// Structural check of the survival JSON, so errors can name the field.
fn check_shape(v: &Value) -> Result<(), ShapeError> {
    let obj = v.as_object().ok_or_else(|| shape("g", "expected a JSON object"))?;
    let kind = obj.get("kind").ok_or_else(|| shape("kind", "missing field"))?;
    let kind = kind.as_str().ok_or_else(|| shape("kind", "expected a string"))?;
    match kind {
        "piecewise_constant" => {
            only(obj, "", &["kind", "breakpoints", "values"])?;
            numbers(obj, "", "breakpoints", false)?;
            numbers(obj, "", "values", false)
        }
        "analytic" => {
            only(obj, "", &["kind", "family", "params"])?;
            let family = obj.get("family").ok_or_else(|| shape("family", "missing field"))?;
            match family.as_str() {
                Some("constant_barrier" | "linear_barrier") => {}
                _ => return Err(shape("family", format!("expected constant_barrier or linear_barrier, got {family}"))),
            }
            let params = obj.get("params").ok_or_else(|| shape("params", "missing field"))?;
            let params = params.as_object().ok_or_else(|| shape("params", "expected an object"))?;
            only(params, "params.", &["a", "c"])?;
            number(params, "params.", "a", true)?;
            number(params, "params.", "c", false)
        }
        "empirical" => {
            only(obj, "", &["kind", "samples", "horizon"])?;
            numbers(obj, "", "samples", true)?;
            number(obj, "", "horizon", true)
        }
        other => Err(shape(
            "kind",
            format!("unknown kind `{other}`; expected piecewise_constant, analytic or empirical"),
        )),
    }
}

fn only(obj: &Map<String, Value>, prefix: &str, allowed: &[&str]) -> Result<(), ShapeError> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(shape(format!("{prefix}{k}"), "unknown field")),
        None => Ok(()),
    }
}

fn number(obj: &Map<String, Value>, prefix: &str, key: &str, required: bool) -> Result<(), ShapeError> {
    match obj.get(key) {
        None if required => Err(shape(format!("{prefix}{key}"), "missing field")),
        None => Ok(()),
        Some(v) if v.is_number() => Ok(()),
        Some(v) => Err(shape(format!("{prefix}{key}"), format!("expected a number, got {v}"))),
    }
}

fn numbers(obj: &Map<String, Value>, prefix: &str, key: &str, allow_inf: bool) -> Result<(), ShapeError> {
    let field = format!("{prefix}{key}");
    let arr = obj.get(key).ok_or_else(|| shape(&field, "missing field"))?;
    let arr = arr.as_array().ok_or_else(|| shape(&field, "expected an array"))?;
    for (i, v) in arr.iter().enumerate() {
        let ok = v.is_number() || (allow_inf && v.as_str().and_then(parse_ext).is_some());
        if !ok {
            return Err(shape(format!("{field}[{i}]"), format!("expected a number, got {v}")));
        }
    }
    Ok(())
}

pub fn load_boundary(path: &Path, interp: BoundaryInterp) -> CliResult<Boundary> {
    let file = File::open(path).map_err(|e| CliError::input("boundary", format!("cannot read {}: {e}", path.display())))?;
    Boundary::read_csv(BufReader::new(file), interp).map_err(|e| CliError::from_core(e, "boundary"))
}

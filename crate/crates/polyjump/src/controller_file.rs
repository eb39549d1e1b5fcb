//! Text format for polynomial controllers.
//!
//! ```text
//! # polyjump controller
//! states = x
//! inputs = u
//! monomials = 1, x
//! dt = 0.005            # or: dt = constant
//! clip.u = 0, 10
//! [coefficients]
//! 0 0.1 -1.02           # t, then the coefficients of each input in turn
//! 0.005 0.1 -1.01
//! ```

use std::fmt::Write as _;
use std::path::Path;

use polyjump_core::controller::ControllerError;
use polyjump_core::{Context, PolynomialController};

use crate::modelfile::parse_monomial;

#[derive(Debug, thiserror::Error)]
pub enum ControllerFileError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

fn bad(line: usize, message: impl Into<String>) -> ControllerFileError {
    ControllerFileError::Format { line, message: message.into() }
}

fn context(states: &[String], inputs: &[String]) -> Result<Context, polyjump_core::PolyError> {
    Context::new(states.iter().chain(inputs).map(String::as_str))
}

pub fn controller_to_string(c: &PolynomialController, states: &[String], inputs: &[String]) -> String {
    let ctx = context(states, inputs).expect("model variables are valid");
    let mut s = String::from("# polyjump controller\n");
    let _ = writeln!(s, "states = {}", states.join(", "));
    let _ = writeln!(s, "inputs = {}", inputs.join(", "));
    let names: Vec<String> = c.monomials().iter().map(|m| ctx.monomial_name(m)).collect();
    let _ = writeln!(s, "monomials = {}", names.join(", "));
    match c.dt() {
        Some(dt) => {
            let _ = writeln!(s, "dt = {dt}");
        }
        None => s.push_str("dt = constant\n"),
    }
    for (v, (lo, hi)) in inputs.iter().zip(c.clip_bounds()) {
        let _ = writeln!(s, "clip.{v} = {lo}, {hi}");
    }
    s.push_str("[coefficients]\n");
    for (t, row) in c.times().into_iter().zip(c.coefficients()) {
        let _ = write!(s, "{t}");
        for k in row.iter().flatten() {
            let _ = write!(s, " {k}");
        }
        s.push('\n');
    }
    s
}

/// Parses a controller file; returns the controller and its variable names.
pub fn parse_controller(text: &str) -> Result<(PolynomialController, Vec<String>, Vec<String>), ControllerFileError> {
    let (mut states, mut inputs) = (None, Vec::new());
    let mut monomial_text = None;
    let mut dt = None;
    let mut clips: Vec<(usize, String, f64, f64)> = Vec::new();
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut in_coefficients = false;
    let list = |v: &str| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect::<Vec<_>>();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content == "[coefficients]" {
            in_coefficients = true;
            continue;
        }
        if in_coefficients {
            let v = content
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(line, format!("`{t}` is not a number"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push((line, v));
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| bad(line, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "states" => states = Some(list(value)),
            "inputs" => inputs = list(value),
            "monomials" => monomial_text = Some((line, value.to_string())),
            "dt" => {
                dt = Some(match value {
                    "constant" => None,
                    v => Some(v.parse::<f64>().map_err(|_| bad(line, format!("`{v}` is not a number")))?),
                })
            }
            _ => match key.strip_prefix("clip.") {
                Some(var) => {
                    let b = list(value)
                        .iter()
                        .map(|t| t.parse::<f64>().map_err(|_| bad(line, format!("`{t}` is not a number"))))
                        .collect::<Result<Vec<_>, _>>()?;
                    match b.as_slice() {
                        &[lo, hi] => clips.push((line, var.to_string(), lo, hi)),
                        _ => return Err(bad(line, "expected `lo, hi`")),
                    }
                }
                None => return Err(bad(line, format!("unknown key `{key}`"))),
            },
        }
    }
    let states = states.ok_or_else(|| bad(0, "missing `states`"))?;
    let ctx = context(&states, &inputs).map_err(|e| bad(0, e.to_string()))?;
    let (mline, mtext) = monomial_text.ok_or_else(|| bad(0, "missing `monomials`"))?;
    let monomials = list(&mtext)
        .iter()
        .map(|t| parse_monomial(t, &ctx).map_err(|m| bad(mline, m)))
        .collect::<Result<Vec<_>, _>>()?;
    let dt = dt.ok_or_else(|| bad(0, "missing `dt`"))?;
    let (nu, p) = (inputs.len(), monomials.len());
    let mut coefficients = Vec::with_capacity(rows.len());
    for (k, (line, v)) in rows.into_iter().enumerate() {
        if v.len() != 1 + nu * p {
            return Err(bad(line, format!("expected {} numbers, found {}", 1 + nu * p, v.len())));
        }
        let expected = dt.map_or(0.0, |d| k as f64 * d);
        if (v[0] - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
            return Err(bad(line, format!("time {} is off the grid (expected {expected})", v[0])));
        }
        coefficients.push(v[1..].chunks(p.max(1)).take(nu).map(|c| if p == 0 { Vec::new() } else { c.to_vec() }).collect());
    }
    let mut c = PolynomialController::new(monomials, states.len(), nu, dt, coefficients)?;
    if !clips.is_empty() {
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); nu];
        for (line, var, lo, hi) in clips {
            let j = inputs.iter().position(|v| *v == var).ok_or_else(|| bad(line, format!("`{var}` is not an input")))?;
            bounds[j] = (lo, hi);
        }
        c = c.clip(&bounds)?;
    }
    Ok((c, states, inputs))
}

pub fn save_controller(c: &PolynomialController, states: &[String], inputs: &[String], path: &Path) -> Result<(), ControllerFileError> {
    std::fs::write(path, controller_to_string(c, states, inputs))
        .map_err(|source| ControllerFileError::Io { path: path.display().to_string(), source })
}

pub fn load_controller(path: &Path) -> Result<(PolynomialController, Vec<String>, Vec<String>), ControllerFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ControllerFileError::Io { path: path.display().to_string(), source })?;
    parse_controller(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use polyjump_core::MultiIndex;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            coeffs in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 4), 1..20),
            dt in 1e-4f64..1.0,
            clip in proptest::option::of((-5.0f64..0.0, 0.0f64..5.0)),
        ) {
            let monomials = vec![MultiIndex::new(vec![0, 0, 0]), MultiIndex::new(vec![1, 0, 0])];
            let coefficients = coeffs.iter().map(|r| vec![r[..2].to_vec(), r[2..].to_vec()]).collect();
            let mut c = PolynomialController::new(monomials, 1, 2, Some(dt), coefficients).unwrap();
            if let Some(b) = clip {
                c = c.clip(&[b, (f64::NEG_INFINITY, f64::INFINITY)]).unwrap();
            }
            let text = controller_to_string(&c, &names(&["x"]), &names(&["u", "v"]));
            let (back, s, i) = parse_controller(&text).unwrap();
            prop_assert_eq!(back, c);
            prop_assert_eq!(s, names(&["x"]));
            prop_assert_eq!(i, names(&["u", "v"]));
        }
    }

    #[test]
    fn constant_law() {
        let text = "states = x\ninputs = u\nmonomials = 1, x^2\ndt = constant\nclip.u = 0, 10\n[coefficients]\n0 1.5 2\n";
        let (c, _, _) = parse_controller(text).unwrap();
        assert_eq!(c.dt(), None);
        assert_eq!(c.evaluate(3.0, &[1.0]), vec![3.5]);
        assert_eq!(c.evaluate(3.0, &[5.0]), vec![10.0]);
    }

    #[test]
    fn rejects_malformed_files() {
        let base = "states = x\ninputs = u\nmonomials = x\ndt = 0.5\n[coefficients]\n0 1\n0.5 1\n";
        assert!(parse_controller(base).is_ok());
        assert!(parse_controller(&base.replace("0.5 1\n", "0.7 1\n")).is_err());
        assert!(parse_controller(&base.replace("0.5 1\n", "0.5 1 2\n")).is_err());
        assert!(parse_controller(&base.replace("monomials = x", "monomials = u")).is_err());
        assert!(parse_controller(&base.replace("monomials = x", "monomials = 2*x")).is_err());
        assert!(parse_controller(&format!("{}clip.w = 0, 1\n", base.replace("[coefficients]\n0 1\n0.5 1\n", ""))).is_err());
    }
}

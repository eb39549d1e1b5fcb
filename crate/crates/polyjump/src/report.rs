//! CSV artifacts.
//!
//! | file          | columns                                               |
//! |---------------|-------------------------------------------------------|
//! | `bounds.csv`  | `t, lower, upper`                                     |
//! | `moments.csv` | `t, moment, estimate, se`                             |
//! | `costs.csv`   | `order, controller_degree, sdp_bound, mc_estimate, mc_se, gap` |
//!
//! Numbers use the shortest representation that reads back exactly; a
//! missing value is an empty field.

use std::path::Path;

use polyjump_core::simulate::{moment_curve, SimulateError};
use polyjump_core::{Context, MultiIndex, TrajectoryEnsemble};

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Rows `t, moment, estimate, se` for every `every`-th grid point.
pub fn moment_rows(
    ensemble: &TrajectoryEnsemble,
    ctx: &Context,
    monomials: &[MultiIndex],
    every: usize,
) -> Result<Vec<Vec<String>>, SimulateError> {
    let curves = monomials.iter().map(|m| moment_curve(ensemble, m)).collect::<Result<Vec<_>, _>>()?;
    let names: Vec<String> = monomials.iter().map(|m| ctx.monomial_name(m)).collect();
    let mut rows = Vec::new();
    for k in (0..=ensemble.steps).filter(|k| k % every.max(1) == 0 || *k == ensemble.steps) {
        let t = k as f64 * ensemble.dt;
        for (name, curve) in names.iter().zip(&curves) {
            let e = curve[k];
            rows.push(vec![num(t), name.clone(), num(e.value), num(e.standard_error)]);
        }
    }
    Ok(rows)
}

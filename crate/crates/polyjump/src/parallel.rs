//! Rayon-parallel Monte Carlo. Every path is simulated by the same per-path
//! kernel as the sequential version, so results are bit-identical for any
//! number of worker threads.

use polyjump_core::simulate::{SimulateError, Simulator};
use polyjump_core::{JumpDiffusionModel, PolynomialController, TrajectoryEnsemble};
use rayon::prelude::*;

pub fn simulate_paths(
    model: &JumpDiffusionModel,
    controller: Option<&PolynomialController>,
    dt: f64,
    t_end: f64,
    n_paths: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble, SimulateError> {
    if n_paths == 0 {
        return Err(SimulateError::Invalid("n_paths must be at least 1".into()));
    }
    let sim = Simulator::new(model, controller, dt, t_end, seed)?;
    let paths: Vec<_> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut s = vec![0.0; sim.state_block()];
            let mut u = vec![0.0; sim.input_block()];
            sim.run_path(p as u64, &mut s, &mut u).map(|r| (s, u, r))
        })
        .collect::<Result<_, _>>()?;
    let mut states = Vec::with_capacity(sim.state_block() * n_paths);
    let mut inputs = Vec::with_capacity(sim.input_block() * n_paths);
    let mut records = Vec::with_capacity(n_paths);
    for (s, u, r) in paths {
        states.extend(s);
        inputs.extend(u);
        records.push(r);
    }
    Ok(sim.collect(states, inputs, &records))
}

//! Monte Carlo simulation of controlled jump diffusions.
//!
//! Each step of length `dt` either fires one jump, with total probability
//! `Σλᵢ dt` and type `j` chosen with probability `λⱼ/Σλᵢ`, or applies the
//! Euler–Maruyama increment `f dt + g √dt ξ`. Path `p` draws from its own
//! ChaCha stream of the seed, so results do not depend on how paths are
//! scheduled across workers.

mod oracle;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::controller::PolynomialController;
use crate::linalg::{sym_eigen, Mat};
use crate::model::{Horizon, InitialDistribution, JumpDiffusionModel};
use crate::poly::MultiIndex;

pub use oracle::ctmc_stationary_oracle;

/// Jump probabilities per step above this make the thinning approximation coarse.
pub const JUMP_PROBABILITY_WARNING: f64 = 0.1;

/// Fraction of a steady-state run discarded before averaging the cost.
pub const STEADY_STATE_BURN_IN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulateError {
    #[error("intensity of jump {jump} is negative ({value}) at t = {time}, x = {state:?}")]
    NegativeIntensity { jump: usize, value: f64, time: f64, state: Vec<f64> },
    #[error("state became non-finite at t = {time} on path {path}")]
    NonFinite { time: f64, path: u64 },
    #[error("model has inputs but no controller was given")]
    MissingController,
    #[error("controller is for {controller} states and {controller_inputs} inputs, model has {model} and {model_inputs}")]
    ControllerShape { controller: usize, controller_inputs: usize, model: usize, model_inputs: usize },
    #[error("cannot sample an initial state from a moment specification")]
    MomentInitial,
    #[error("time {0} is not on the simulation grid")]
    OffGrid(f64),
    #[error("monomial arity {got} does not match the model ({state} states, {input} inputs)")]
    Arity { got: usize, state: usize, input: usize },
    #[error("model is not a finite-state pure-jump chain: {0}")]
    NotFiniteChain(String),
    #[error("invalid simulation request: {0}")]
    Invalid(String),
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub value: f64,
    /// Sample standard deviation over `√n_samples`.
    pub standard_error: f64,
    pub n_samples: usize,
}

impl MomentEstimate {
    pub fn from_samples(samples: impl IntoIterator<Item = f64>) -> Self {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for v in samples {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        let standard_error = if n > 1 { libm::sqrt(m2 / (n - 1) as f64 / n as f64) } else { 0.0 };
        Self { value: if n > 0 { mean } else { f64::NAN }, standard_error, n_samples: n }
    }

    /// `|value − target| ≤ k·SE + slack`.
    pub fn agrees_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.value - target).abs() <= k * self.standard_error + slack
    }
}

/// Simulated paths on the grid `t_k = k·dt`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub dt: f64,
    pub steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub n_state: usize,
    pub n_input: usize,
    /// `[path][step][state]`, flattened.
    states: Vec<f64>,
    /// `[path][step][input]`, flattened; the inputs applied from each grid
    /// point on (the final point repeats the last applied input).
    inputs: Vec<f64>,
    /// Negative Euler excursions reset to zero, summed over paths.
    pub reflections: u64,
    /// Euler steps whose inputs were cut back so a nonnegative state stays
    /// nonnegative, summed over paths.
    pub input_cutbacks: u64,
    /// Largest `Σλᵢ dt` met on any path.
    pub max_jump_probability: f64,
}

impl TrajectoryEnsemble {
    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let o = (path * (self.steps + 1) + step) * self.n_state;
        &self.states[o..o + self.n_state]
    }

    pub fn input(&self, path: usize, step: usize) -> &[f64] {
        let o = (path * (self.steps + 1) + step) * self.n_input;
        &self.inputs[o..o + self.n_input]
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| k as f64 * self.dt).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Grid index of `t`, if `t` lies on the grid.
    pub fn step_of(&self, t: f64) -> Option<usize> {
        let k = libm::round(t / self.dt);
        if k < 0.0 || k > self.steps as f64 || (k * self.dt - t).abs() > 1e-9 * (1.0 + t.abs()) {
            return None;
        }
        Some(k as usize)
    }

    /// `(state…, input…)` at a grid point.
    pub fn point(&self, path: usize, step: usize) -> Vec<f64> {
        let mut p = self.state(path, step).to_vec();
        p.extend_from_slice(self.input(path, step));
        p
    }

    pub fn jump_probability_warning(&self) -> bool {
        self.max_jump_probability > JUMP_PROBABILITY_WARNING
    }
}

/// Bookkeeping of a single path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathRecord {
    pub reflections: u64,
    pub input_cutbacks: u64,
    pub max_jump_probability: f64,
}

#[derive(Debug, Clone)]
enum Start {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, factor: Mat },
}

/// Shared, immutable simulation setup; paths can be run in any order.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    model: &'a JumpDiffusionModel,
    controller: Option<&'a PolynomialController>,
    dt: f64,
    steps: usize,
    seed: u64,
    start: Start,
    /// State indices kept nonnegative by a constraint `c·xⱼ ≥ 0`.
    reflect: Vec<usize>,
}

impl<'a> Simulator<'a> {
    /// The grid has `round(t_end/dt)` steps of exactly `t_end/steps`.
    pub fn new(
        model: &'a JumpDiffusionModel,
        controller: Option<&'a PolynomialController>,
        dt: f64,
        t_end: f64,
        seed: u64,
    ) -> Result<Self, SimulateError> {
        if !(dt > 0.0 && dt.is_finite()) || !(t_end > 0.0 && t_end.is_finite()) {
            return Err(SimulateError::Invalid(alloc::format!("dt = {dt}, T = {t_end}")));
        }
        let steps = (libm::round(t_end / dt) as usize).max(1);
        let n = model.n_state();
        match controller {
            None if model.n_input() > 0 => return Err(SimulateError::MissingController),
            Some(c) if c.n_state() != n || c.n_input() != model.n_input() => {
                return Err(SimulateError::ControllerShape {
                    controller: c.n_state(),
                    controller_inputs: c.n_input(),
                    model: n,
                    model_inputs: model.n_input(),
                })
            }
            _ => {}
        }
        let start = match &model.initial {
            InitialDistribution::Dirac(x) => Start::Point(x.clone()),
            InitialDistribution::Gaussian { mean, covariance } => {
                let cov = Mat::from_rows(n, n, covariance.clone());
                let (vals, vecs) = sym_eigen(&cov);
                let mut factor = Mat::zeros(n, n);
                for j in 0..n {
                    let s = libm::sqrt(vals[j].max(0.0));
                    for i in 0..n {
                        factor[(i, j)] = vecs[(i, j)] * s;
                    }
                }
                Start::Gaussian { mean: mean.clone(), factor }
            }
            InitialDistribution::Moments(_) => return Err(SimulateError::MomentInitial),
        };
        Ok(Self { model, controller, dt: t_end / steps as f64, steps, seed, start, reflect: reflected_states(model) })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Length of one path's state block.
    pub fn state_block(&self) -> usize {
        (self.steps + 1) * self.model.n_state()
    }

    pub fn input_block(&self) -> usize {
        (self.steps + 1) * self.model.n_input()
    }

    fn rng(&self, path: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path);
        rng
    }

    /// Simulates path `path` into `states` (length [`state_block`](Self::state_block))
    /// and `inputs` (length [`input_block`](Self::input_block)).
    pub fn run_path(&self, path: u64, states: &mut [f64], inputs: &mut [f64]) -> Result<PathRecord, SimulateError> {
        let model = self.model;
        let n = model.n_state();
        let nu = model.n_input();
        let nw = model.n_noise();
        let sqrt_dt = libm::sqrt(self.dt);
        let mut rng = self.rng(path);
        let mut record = PathRecord::default();

        let mut point = vec![0.0; n + nu];
        match &self.start {
            Start::Point(x) => point[..n].copy_from_slice(x),
            Start::Gaussian { mean, factor } => {
                let xi: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let shift = factor.matvec(&xi);
                for i in 0..n {
                    point[i] = mean[i] + shift[i];
                }
            }
        }
        let mut rates = vec![0.0; model.jumps.len()];
        let mut noise = vec![0.0; nw];
        let mut next = vec![0.0; n];
        for k in 0..=self.steps {
            let t = k as f64 * self.dt;
            // no input acts after the horizon, so the last one is held at t_N
            if let (Some(c), true) = (self.controller, k < self.steps || self.steps == 0) {
                let (x, u) = point.split_at_mut(n);
                c.evaluate_into(t, x, u);
            } else if k > 0 {
                point[n..].copy_from_slice(&inputs[(k - 1) * nu..k * nu]);
            }
            if point.iter().any(|v| !v.is_finite()) {
                return Err(SimulateError::NonFinite { time: t, path });
            }
            states[k * n..(k + 1) * n].copy_from_slice(&point[..n]);
            inputs[k * nu..(k + 1) * nu].copy_from_slice(&point[n..]);
            if k == self.steps {
                break;
            }

            let mut total = 0.0;
            for (j, jump) in model.jumps.iter().enumerate() {
                let mut v = jump.intensity.eval(&point);
                if v < 0.0 {
                    // rounding at a lattice boundary
                    if v > -1e-12 {
                        v = 0.0;
                    } else {
                        return Err(SimulateError::NegativeIntensity { jump: j, value: v, time: t, state: point[..n].to_vec() });
                    }
                }
                rates[j] = v;
                total += v;
            }
            let p = total * self.dt;
            record.max_jump_probability = record.max_jump_probability.max(p);

            let fire: f64 = rng.random();
            if total > 0.0 && fire < p {
                let mut pick = rng.random::<f64>() * total;
                let mut j = rates.len() - 1;
                for (i, &r) in rates.iter().enumerate() {
                    if pick < r {
                        j = i;
                        break;
                    }
                    pick -= r;
                }
                // skip zero-rate jumps that only rounding could select
                while rates[j] == 0.0 && j > 0 {
                    j -= 1;
                }
                for (i, m) in model.jumps[j].map.iter().enumerate() {
                    next[i] = m.eval(&point);
                }
            } else {
                for w in noise.iter_mut() {
                    *w = rng.sample(StandardNormal);
                }
                self.euler(&point, &noise, sqrt_dt, &mut next);
                let violated = |next: &[f64]| self.reflect.iter().any(|&i| next[i] < 0.0);
                if nu > 0 && violated(&next) {
                    // an input that would overdraw a nonnegative state is cut back
                    // towards its admissible floor, keeping the same noise
                    let full = point[n..].to_vec();
                    let floor = self.input_floor(&full);
                    let mut trial = point.clone();
                    let set = |s: f64, trial: &mut [f64]| {
                        for a in 0..nu {
                            trial[n + a] = floor[a] + s * (full[a] - floor[a]);
                        }
                    };
                    set(0.0, &mut trial);
                    self.euler(&trial, &noise, sqrt_dt, &mut next);
                    if !violated(&next) {
                        let (mut lo, mut hi) = (0.0, 1.0);
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            set(mid, &mut trial);
                            self.euler(&trial, &noise, sqrt_dt, &mut next);
                            if violated(&next) {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        set(lo, &mut trial);
                        self.euler(&trial, &noise, sqrt_dt, &mut next);
                        record.input_cutbacks += 1;
                    }
                    inputs[k * nu..(k + 1) * nu].copy_from_slice(&trial[n..]);
                }
                for &i in &self.reflect {
                    if next[i] < 0.0 {
                        next[i] = 0.0;
                        record.reflections += 1;
                    }
                }
            }
            point[..n].copy_from_slice(&next);
        }
        Ok(record)
    }

    fn euler(&self, point: &[f64], noise: &[f64], sqrt_dt: f64, next: &mut [f64]) {
        let model = self.model;
        for (i, slot) in next.iter_mut().enumerate() {
            let mut v = point[i] + model.drift[i].eval(point) * self.dt;
            for (g, w) in model.diffusion[i].iter().zip(noise) {
                if !g.is_zero() {
                    v += g.eval(point) * sqrt_dt * w;
                }
            }
            *slot = v;
        }
    }

    /// Zero projected onto the controller's clip interval.
    fn input_floor(&self, u: &[f64]) -> Vec<f64> {
        let clip = self.controller.map_or(&[][..], PolynomialController::clip_bounds);
        (0..u.len())
            .map(|a| match clip.get(a) {
                Some(&(lo, hi)) => 0.0f64.clamp(lo, hi),
                None => 0.0,
            })
            .collect()
    }

    /// Packs per-path blocks (in path order) into an ensemble.
    pub fn collect(&self, states: Vec<f64>, inputs: Vec<f64>, records: &[PathRecord]) -> TrajectoryEnsemble {
        TrajectoryEnsemble {
            dt: self.dt,
            steps: self.steps,
            n_paths: records.len(),
            seed: self.seed,
            n_state: self.model.n_state(),
            n_input: self.model.n_input(),
            states,
            inputs,
            reflections: records.iter().map(|r| r.reflections).sum(),
            input_cutbacks: records.iter().map(|r| r.input_cutbacks).sum(),
            max_jump_probability: records.iter().map(|r| r.max_jump_probability).fold(0.0, f64::max),
        }
    }
}

/// State variables `xⱼ` constrained by `c·xⱼ ≥ 0` with `c > 0`.
fn reflected_states(model: &JumpDiffusionModel) -> Vec<usize> {
    let mut out = Vec::new();
    for b in &model.constraints {
        let mut terms = b.terms();
        if let (Some((m, &c)), None) = (terms.next(), terms.next()) {
            if c > 0.0 && m.degree() == 1 {
                if let Some(j) = model.state_range().find(|&j| m.exponents()[j] == 1) {
                    if !out.contains(&j) {
                        out.push(j);
                    }
                }
            }
        }
    }
    out
}

/// Runs `n_paths` paths sequentially.
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
    let (sb, ib) = (sim.state_block(), sim.input_block());
    let mut states = vec![0.0; sb * n_paths];
    let mut inputs = vec![0.0; ib * n_paths];
    let mut records = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        records.push(sim.run_path(p as u64, &mut states[p * sb..(p + 1) * sb], &mut inputs[p * ib..(p + 1) * ib])?);
    }
    Ok(sim.collect(states, inputs, &records))
}

/// Per-path cost: trapezoidal running cost plus terminal cost on a finite
/// horizon; on a steady-state model, the time average of running plus
/// terminal cost after the burn-in.
pub fn estimate_cost(ensemble: &TrajectoryEnsemble, model: &JumpDiffusionModel) -> MomentEstimate {
    let n = ensemble.steps;
    let dt = ensemble.dt;
    let c = &model.running_cost;
    let h = &model.terminal_cost;
    MomentEstimate::from_samples((0..ensemble.n_paths).map(|p| match model.horizon {
        Horizon::Finite(_) => {
            let mut run = 0.0;
            if !c.is_zero() {
                for k in 0..=n {
                    let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                    run += w * c.eval(&ensemble.point(p, k));
                }
            }
            run * dt + h.eval(&ensemble.point(p, n))
        }
        Horizon::SteadyState => {
            let first = libm::ceil(n as f64 * STEADY_STATE_BURN_IN) as usize;
            let first = first.min(n);
            let total: f64 = (first..=n)
                .map(|k| {
                    let x = ensemble.point(p, k);
                    c.eval(&x) + h.eval(&x)
                })
                .sum();
            total / (n - first + 1) as f64
        }
    }))
}

fn check_arity(ensemble: &TrajectoryEnsemble, m: &MultiIndex) -> Result<(), SimulateError> {
    let a = m.arity();
    if a != ensemble.n_state && a != ensemble.n_state + ensemble.n_input {
        return Err(SimulateError::Arity { got: a, state: ensemble.n_state, input: ensemble.n_input });
    }
    Ok(())
}

/// Sample mean of `x(t)^(m)` across paths; `m` may also carry input exponents.
pub fn empirical_moment(ensemble: &TrajectoryEnsemble, m: &MultiIndex, t: f64) -> Result<MomentEstimate, SimulateError> {
    check_arity(ensemble, m)?;
    let k = ensemble.step_of(t).ok_or(SimulateError::OffGrid(t))?;
    Ok(MomentEstimate::from_samples((0..ensemble.n_paths).map(|p| m.eval(&ensemble.point(p, k)))))
}

/// [`empirical_moment`] at every grid point.
pub fn moment_curve(ensemble: &TrajectoryEnsemble, m: &MultiIndex) -> Result<Vec<MomentEstimate>, SimulateError> {
    check_arity(ensemble, m)?;
    Ok((0..=ensemble.steps)
        .map(|k| MomentEstimate::from_samples((0..ensemble.n_paths).map(|p| m.eval(&ensemble.point(p, k)))))
        .collect())
}

#[cfg(test)]
mod tests;

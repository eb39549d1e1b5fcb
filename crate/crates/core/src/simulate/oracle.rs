//! Exact stationary law of a one-dimensional pure-jump chain on the integers.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::SimulateError;
use crate::linalg::{lu_solve, Mat};
use crate::model::{InitialDistribution, JumpDiffusionModel};
use crate::poly::MultiIndex;

/// Reachable state sets larger than this are treated as infinite.
const MAX_STATES: usize = 4096;

fn fail(msg: impl Into<alloc::string::String>) -> SimulateError {
    SimulateError::NotFiniteChain(msg.into())
}

/// Integer shift `c` of a jump map `x + c`.
fn lattice_shift(model: &JumpDiffusionModel, j: usize) -> Result<i64, SimulateError> {
    let map = &model.jumps[j].map[0];
    let one = MultiIndex::zero(1);
    let x = MultiIndex::unit(1, 0);
    if map.terms().any(|(m, _)| *m != one && *m != x) || map.coefficient(&x) != 1.0 {
        return Err(fail(format!("jump {j} is not a lattice shift x + c")));
    }
    let c = map.coefficient(&one);
    if c != libm::round(c) || c == 0.0 {
        return Err(fail(format!("jump {j} shifts by {c}, not a nonzero integer")));
    }
    Ok(c as i64)
}

/// Stationary distribution of the chain started from the model's (integer)
/// Dirac initial state, on the closed communicating class it reaches.
///
/// Requires one state variable, no inputs, zero drift and diffusion, and jump
/// maps `x ↦ x + c` with integer `c`.
pub fn ctmc_stationary_oracle(model: &JumpDiffusionModel) -> Result<BTreeMap<i64, f64>, SimulateError> {
    if model.n_state() != 1 || model.n_input() != 0 {
        return Err(fail("needs exactly one state and no inputs"));
    }
    if !model.drift[0].is_zero() || model.diffusion[0].iter().any(|g| !g.is_zero()) {
        return Err(fail("drift and diffusion must vanish"));
    }
    let shifts = (0..model.jumps.len()).map(|j| lattice_shift(model, j)).collect::<Result<Vec<_>, _>>()?;
    let x0 = match &model.initial {
        InitialDistribution::Dirac(x) if x[0] == libm::round(x[0]) => x[0] as i64,
        _ => return Err(fail("initial distribution must be an integer point mass")),
    };

    // explore the reachable states
    let mut index: BTreeMap<i64, usize> = BTreeMap::new();
    let mut states = vec![x0];
    let mut edges: Vec<Vec<(usize, f64)>> = Vec::new();
    index.insert(x0, 0);
    let mut queue = VecDeque::from([0usize]);
    let mut pending: Vec<Vec<(i64, f64)>> = vec![Vec::new()];
    while let Some(s) = queue.pop_front() {
        let x = states[s] as f64;
        for (j, jump) in model.jumps.iter().enumerate() {
            let rate = jump.intensity.eval(&[x]);
            if rate < 0.0 {
                return Err(SimulateError::NegativeIntensity { jump: j, value: rate, time: 0.0, state: vec![x] });
            }
            if rate == 0.0 {
                continue;
            }
            let y = states[s] + shifts[j];
            if !index.contains_key(&y) {
                if states.len() == MAX_STATES {
                    return Err(fail(format!("more than {MAX_STATES} reachable states")));
                }
                index.insert(y, states.len());
                states.push(y);
                pending.push(Vec::new());
                queue.push_back(states.len() - 1);
            }
            pending[s].push((y, rate));
        }
    }
    for out in &pending {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for &(y, r) in out {
            let t = index[&y];
            match row.iter_mut().find(|(k, _)| *k == t) {
                Some(e) => e.1 += r,
                None => row.push((t, r)),
            }
        }
        edges.push(row);
    }

    // a state is in a closed class when everything it reaches reaches it back
    let k = states.len();
    let reach: Vec<Vec<bool>> = (0..k)
        .map(|s| {
            let mut seen = vec![false; k];
            seen[s] = true;
            let mut stack = vec![s];
            while let Some(a) = stack.pop() {
                for &(b, _) in &edges[a] {
                    if !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
            seen
        })
        .collect();
    let closed: Vec<usize> = (0..k).filter(|&s| (0..k).all(|t| !reach[s][t] || reach[t][s])).collect();
    let first = closed[0];
    let class: Vec<usize> = closed.iter().copied().filter(|&s| reach[first][s]).collect();
    if class.len() != closed.len() {
        return Err(fail("several closed classes are reachable; the stationary law is not unique"));
    }

    // π Q = 0 on the class, last equation replaced by Σπ = 1
    let c = class.len();
    let pos = |s: usize| class.iter().position(|&t| t == s);
    let mut a = Mat::zeros(c, c);
    for (i, &s) in class.iter().enumerate() {
        for &(t, r) in &edges[s] {
            if let Some(jx) = pos(t) {
                a[(jx, i)] += r;
                a[(i, i)] -= r;
            }
        }
    }
    for j in 0..c {
        a[(c - 1, j)] = 1.0;
    }
    let mut b = vec![0.0; c];
    b[c - 1] = 1.0;
    let pi = lu_solve(&a, &b).ok_or_else(|| fail("singular rate matrix"))?;
    Ok(class.iter().zip(pi).map(|(&s, p)| (states[s], p)).collect())
}

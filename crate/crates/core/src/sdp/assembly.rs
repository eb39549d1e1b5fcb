use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{solve, AffineRow, PsdConstraint, SdpProblem, SdpSolution, Segment, SolveStatus, SolverOptions};
use crate::model::{Horizon, Sense};
use crate::moments::AuxiliaryLinearSystem;

struct Builder {
    n_vars: usize,
    segments: Vec<Segment>,
    equalities: Vec<AffineRow>,
    nonnegative: Vec<AffineRow>,
    psd: Vec<PsdConstraint>,
}

impl Builder {
    fn new() -> Self {
        Self { n_vars: 0, segments: Vec::new(), equalities: Vec::new(), nonnegative: Vec::new(), psd: Vec::new() }
    }

    fn segment(&mut self, name: String, len: usize) -> usize {
        let offset = self.n_vars;
        self.segments.push(Segment { name, offset, len });
        self.n_vars += len;
        offset
    }

    /// Moment, localizing and odd-power constraints on one `(X, U)` pair.
    fn add_maps(&mut self, aux: &AuxiliaryLinearSystem, xo: usize, uo: usize, tag: &str) {
        for map in &aux.psd_maps {
            let mut constant = Vec::new();
            let mut terms = Vec::new();
            for i in 0..map.size {
                for j in 0..=i {
                    let v = map.constant[(i, j)];
                    if v != 0.0 {
                        constant.push((i, j, v));
                    }
                }
            }
            let blocks = map
                .state_blocks
                .iter()
                .map(|(k, b)| (xo + k, b))
                .chain(map.input_blocks.iter().map(|(k, b)| (uo + k, b)));
            for (var, blk) in blocks {
                for i in 0..map.size {
                    for j in 0..=i {
                        let v = blk[(i, j)];
                        if v != 0.0 {
                            terms.push((var, i, j, v));
                        }
                    }
                }
            }
            self.psd.push(PsdConstraint { label: format!("{}{tag}", map.label), size: map.size, constant, terms });
        }
        for rows in &aux.linear_maps {
            for r in 0..rows.j.rows() {
                let mut row = AffineRow::default();
                for (k, &v) in rows.j.row(r).iter().enumerate() {
                    if v != 0.0 {
                        row.terms.push((xo + k, v));
                    }
                }
                for (k, &v) in rows.l.row(r).iter().enumerate() {
                    if v != 0.0 {
                        row.terms.push((uo + k, v));
                    }
                }
                self.nonnegative.push(row);
            }
        }
    }

    fn finish(self, objective: Vec<f64>, sense: Sense, moment_scale: f64) -> SdpProblem {
        SdpProblem {
            n_vars: self.n_vars,
            segments: self.segments,
            objective,
            objective_constant: 0.0,
            sense,
            equalities: self.equalities,
            nonnegative: self.nonnegative,
            psd: self.psd,
            moment_scale,
        }
    }
}

/// Stationary problem over `(X, U)`: `0 = AX + BU`, `X₀ = 1`, every cone
/// map imposed; the objective is the stationary value of running plus
/// terminal cost.
pub fn assemble_steady_state(aux: &AuxiliaryLinearSystem, sense: Sense) -> SdpProblem {
    let (nx, nu) = (aux.n_state(), aux.n_input());
    let mut b = Builder::new();
    let xo = b.segment("X".into(), nx);
    let uo = b.segment("U".into(), nu);
    b.equalities.push(AffineRow { terms: vec![(xo, 1.0)], constant: -1.0 });
    for i in 0..nx {
        let mut row = AffineRow::default();
        for j in 0..nx {
            if aux.a[(i, j)] != 0.0 {
                row.terms.push((xo + j, aux.a[(i, j)]));
            }
        }
        for j in 0..nu {
            if aux.b[(i, j)] != 0.0 {
                row.terms.push((uo + j, aux.b[(i, j)]));
            }
        }
        if !row.terms.is_empty() {
            b.equalities.push(row);
        }
    }
    b.add_maps(aux, xo, uo, "");
    let cost = aux.cost.for_minimization(sense);
    let mut objective = vec![0.0; nx + nu];
    for j in 0..nx {
        objective[xo + j] = cost.c[j] + cost.h[j];
    }
    for j in 0..nu {
        objective[uo + j] = cost.d[j] + cost.k[j];
    }
    b.finish(objective, sense, aux.scale)
}

/// Euler discretization on a uniform grid of `steps` intervals over `[0, T]`.
/// Segments are `X_t`, `U_t` for `t = 0..=steps`.
pub fn assemble_finite_horizon(aux: &AuxiliaryLinearSystem, t_final: f64, steps: usize, sense: Sense) -> SdpProblem {
    assert!(steps >= 1, "at least one Euler step is required");
    let (nx, nu) = (aux.n_state(), aux.n_input());
    let dt = t_final / steps as f64;
    let mut b = Builder::new();
    let mut offs = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        let xo = b.segment(format!("X_{t}"), nx);
        let uo = b.segment(format!("U_{t}"), nu);
        offs.push((xo, uo));
    }
    let (x0o, _) = offs[0];
    for i in 0..nx {
        b.equalities.push(AffineRow { terms: vec![(x0o + i, 1.0)], constant: -aux.x0[i] });
    }
    for t in 0..steps {
        let (xo, uo) = offs[t];
        let (xn, _) = offs[t + 1];
        for i in 0..nx {
            let mut row = AffineRow { terms: vec![(xn + i, 1.0)], constant: 0.0 };
            for j in 0..nx {
                let v = if i == j { 1.0 } else { 0.0 } + dt * aux.a[(i, j)];
                if v != 0.0 {
                    row.terms.push((xo + j, -v));
                }
            }
            for j in 0..nu {
                let v = dt * aux.b[(i, j)];
                if v != 0.0 {
                    row.terms.push((uo + j, -v));
                }
            }
            b.equalities.push(row);
        }
    }
    for (t, &(xo, uo)) in offs.iter().enumerate() {
        b.add_maps(aux, xo, uo, &format!("@{t}"));
    }
    let cost = aux.cost.for_minimization(sense);
    let mut objective = vec![0.0; b.n_vars];
    for &(xo, uo) in &offs[..steps] {
        for j in 0..nx {
            objective[xo + j] += dt * cost.c[j];
        }
        for j in 0..nu {
            objective[uo + j] += dt * cost.d[j];
        }
    }
    let (xo, uo) = offs[steps];
    for j in 0..nx {
        objective[xo + j] += cost.h[j];
    }
    for j in 0..nu {
        objective[uo + j] += cost.k[j];
    }
    b.finish(objective, sense, aux.scale)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundError {
    #[error("{which} bound: solver reported {status}")]
    Solver { which: &'static str, status: SolveStatus },
    #[error("invalid horizon: {0}")]
    Horizon(String),
}

/// Assembles the problem for a horizon in the requested sense.
pub fn assemble(aux: &AuxiliaryLinearSystem, horizon: Horizon, steps: usize, sense: Sense) -> Result<SdpProblem, BoundError> {
    match horizon {
        Horizon::SteadyState => Ok(assemble_steady_state(aux, sense)),
        Horizon::Finite(t) if t > 0.0 && steps >= 1 => Ok(assemble_finite_horizon(aux, t, steps, sense)),
        Horizon::Finite(t) => Err(BoundError::Horizon(format!("T = {t}, steps = {steps}"))),
    }
}

/// Lower and upper bounds on the objective functional encoded in the cost
/// rows of `aux`, from its minimization and maximization.
pub fn bound_pair(
    aux: &AuxiliaryLinearSystem,
    horizon: Horizon,
    steps: usize,
    options: &SolverOptions,
) -> Result<(f64, f64), BoundError> {
    let lo = solve_checked(&assemble(aux, horizon, steps, Sense::Minimize)?, options, "lower")?;
    let hi = solve_checked(&assemble(aux, horizon, steps, Sense::Maximize)?, options, "upper")?;
    Ok((lo.objective, hi.objective))
}

fn solve_checked(p: &SdpProblem, options: &SolverOptions, which: &'static str) -> Result<SdpSolution, BoundError> {
    let sol = solve(p, options);
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        status => Err(BoundError::Solver { which, status }),
    }
}

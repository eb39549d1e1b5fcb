//! Block-structured conic programs, their assembly from an auxiliary linear
//! system, and an embedded primal–dual interior-point solver.
//!
//! A [`SdpProblem`] has a vector of decision variables split into named
//! segments, a linear objective, affine equalities, affine nonnegativity rows
//! and affine PSD constraints `F₀ + Σ xᵢ Fᵢ ⪰ 0`.

mod assembly;
mod cones;
mod ipm;
mod kkt;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use assembly::{assemble, assemble_finite_horizon, assemble_steady_state, bound_pair, BoundError};

use crate::model::Sense;
use cones::{svec_index, ConeSpec};
use ipm::{ConeProgram, Csr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// `Σ aᵢ xᵢ + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineRow {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

/// `F₀ + Σ xᵥ Fᵥ ⪰ 0`; entries are lower-triangle positions `(i ≥ j)` of the
/// symmetric matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdConstraint {
    pub label: String,
    pub size: usize,
    pub constant: Vec<(usize, usize, f64)>,
    pub terms: Vec<(usize, usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub n_vars: usize,
    pub segments: Vec<Segment>,
    /// Minimized objective `cᵀx + objective_constant`.
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    /// Reported objective is negated when the underlying problem maximizes.
    pub sense: Sense,
    pub equalities: Vec<AffineRow>,
    pub nonnegative: Vec<AffineRow>,
    pub psd: Vec<PsdConstraint>,
    /// Per-degree moment scale of the variables (1 when unscaled).
    pub moment_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl core::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::Unbounded => "unbounded",
            Self::NumericalFailure => "numerical-failure",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Ruiz row/column equilibration before solving.
    pub equilibrate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 200, equilibrate: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// All decision variables in problem order.
    pub x: Vec<f64>,
    pub segments: Vec<Segment>,
    /// Objective in the sense of the underlying problem.
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.x[s.offset..s.offset + s.len])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

impl SdpProblem {
    /// Segment lookup by name.
    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn cone_spec_sizes(&self) -> (usize, usize, Vec<usize>) {
        (self.equalities.len(), self.nonnegative.len(), self.psd.iter().map(|c| c.size).collect())
    }

    fn to_cone_program(&self) -> ConeProgram {
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut h = Vec::new();
        for r in &self.equalities {
            rows.push(r.terms.clone());
            h.push(-r.constant);
        }
        for r in &self.nonnegative {
            rows.push(r.terms.iter().map(|&(i, v)| (i, -v)).collect());
            h.push(r.constant);
        }
        for c in &self.psd {
            let dim = ConeSpec::psd_dim(c.size);
            let base = rows.len();
            rows.extend(core::iter::repeat_with(Vec::new).take(dim));
            let mut hb = vec![0.0; dim];
            let w = |i: usize, j: usize| if i == j { 1.0 } else { core::f64::consts::SQRT_2 };
            for &(i, j, v) in &c.constant {
                hb[svec_index(c.size, i, j)] += w(i, j) * v;
            }
            for &(var, i, j, v) in &c.terms {
                rows[base + svec_index(c.size, i, j)].push((var, -w(i, j) * v));
            }
            h.extend(hb);
        }
        let g = Csr::from_rows(self.n_vars, &rows);
        ConeProgram {
            c: self.objective.clone(),
            g,
            h,
            cones: ConeSpec {
                zero: self.equalities.len(),
                nonneg: self.nonnegative.len(),
                psd: self.psd.iter().map(|c| c.size).collect(),
            },
        }
    }

    /// Largest violation of the constraints at `x` (equalities, rows, and
    /// negative PSD eigenvalues).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eval = |r: &AffineRow| r.constant + r.terms.iter().map(|&(i, v)| v * x[i]).sum::<f64>();
        let mut worst = 0.0f64;
        for r in &self.equalities {
            worst = worst.max(eval(r).abs());
        }
        for r in &self.nonnegative {
            worst = worst.max(-eval(r));
        }
        for c in &self.psd {
            let m = self.psd_value(c, x);
            worst = worst.max(-crate::linalg::min_eigenvalue(&m));
        }
        worst
    }

    /// Matrix value of a PSD constraint at `x`.
    pub fn psd_value(&self, c: &PsdConstraint, x: &[f64]) -> crate::linalg::Mat {
        let mut m = crate::linalg::Mat::zeros(c.size, c.size);
        let mut put = |i: usize, j: usize, v: f64| {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        };
        for &(i, j, v) in &c.constant {
            put(i, j, v);
        }
        for &(var, i, j, v) in &c.terms {
            put(i, j, v * x[var]);
        }
        m
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let v = self.objective_constant + self.objective.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        match self.sense {
            Sense::Minimize => v,
            Sense::Maximize => -v,
        }
    }
}

/// Column scaling of the variables; rows and the objective are rescaled in place.
struct Equilibration {
    d: Vec<f64>,
}

fn equilibrate(prog: &mut ConeProgram) -> Equilibration {
    let n = prog.c.len();
    let m = prog.h.len();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let cones = prog.cones.clone();
    let psd_ranges: Vec<(usize, usize)> = cones
        .psd
        .iter()
        .zip(cones.psd_offsets())
        .map(|(&s, o)| (cones.zero + o, cones.zero + o + ConeSpec::psd_dim(s)))
        .collect();
    let g = &mut prog.g;
    for _ in 0..12 {
        let mut col = vec![0.0f64; n];
        let mut row = vec![0.0f64; m];
        for r in 0..m {
            for k in g.ptr[r]..g.ptr[r + 1] {
                let a = g.val[k].abs();
                col[g.idx[k]] = col[g.idx[k]].max(a);
                row[r] = row[r].max(a);
            }
        }
        for &(a, b) in &psd_ranges {
            let mx = row[a..b].iter().copied().fold(0.0, f64::max);
            row[a..b].iter_mut().for_each(|v| *v = mx);
        }
        let fix = |v: f64| if v > 0.0 { (1.0 / libm::sqrt(v)).clamp(1e-3, 1e3) } else { 1.0 };
        let dc: Vec<f64> = col.iter().map(|&v| fix(v)).collect();
        let er: Vec<f64> = row.iter().map(|&v| fix(v)).collect();
        for r in 0..m {
            for k in g.ptr[r]..g.ptr[r + 1] {
                g.val[k] *= er[r] * dc[g.idx[k]];
            }
        }
        for j in 0..n {
            d[j] *= dc[j];
        }
        for r in 0..m {
            e[r] *= er[r];
        }
    }
    for r in 0..m {
        prog.h[r] *= e[r];
    }
    for j in 0..n {
        prog.c[j] *= d[j];
    }
    let cmax = prog.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let c_scale = if cmax > 0.0 { (1.0 / cmax).clamp(1e-4, 1e4) } else { 1.0 };
    prog.c.iter_mut().for_each(|v| *v *= c_scale);
    Equilibration { d }
}

/// A conic solver that [`SdpProblem`]s can be handed to. [`Embedded`] is the
/// built-in interior-point method; other solvers plug in by implementing this.
pub trait SdpBackend {
    fn name(&self) -> &str;
    fn solve(&self, problem: &SdpProblem, options: &SolverOptions) -> SdpSolution;
}

/// The embedded interior-point solver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Embedded;

impl SdpBackend for Embedded {
    fn name(&self) -> &str {
        "embedded"
    }

    fn solve(&self, problem: &SdpProblem, options: &SolverOptions) -> SdpSolution {
        solve(problem, options)
    }
}

/// Solves the problem with the embedded interior-point method.
pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> SdpSolution {
    let mut prog = problem.to_cone_program();
    let scaling = options.equilibrate.then(|| equilibrate(&mut prog));
    let res = ipm::solve(&prog, options.tolerance, options.max_iterations);
    let mut x = res.x;
    if let Some(eq) = &scaling {
        for (v, d) in x.iter_mut().zip(&eq.d) {
            *v *= d;
        }
    }
    let objective = if res.status == SolveStatus::Unbounded {
        match problem.sense {
            Sense::Minimize => f64::NEG_INFINITY,
            Sense::Maximize => f64::INFINITY,
        }
    } else if res.status == SolveStatus::Infeasible {
        match problem.sense {
            Sense::Minimize => f64::INFINITY,
            Sense::Maximize => f64::NEG_INFINITY,
        }
    } else {
        problem.objective_value(&x)
    };
    SdpSolution {
        status: res.status,
        x,
        segments: problem.segments.clone(),
        objective,
        primal_residual: res.primal_residual,
        dual_residual: res.dual_residual,
        gap: res.gap,
        iterations: res.iterations,
    }
}

//! Polynomial feedback laws `u(t) = Σᵢ kᵢ(t) x^(dᵢ)` fitted to SDP moments.
//!
//! For each grid time and input `u_a` the coefficients solve the least-squares
//! problem `⟨u_a x^(mⱼ)⟩ ≈ Σᵢ kᵢ ⟨x^(dᵢ + mⱼ)⟩` over the matching monomials
//! `mⱼ`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{svd, Mat};
use crate::model::{Horizon, JumpDiffusionModel};
use crate::moments::{AuxiliaryLinearSystem, Slot};
use crate::poly::MultiIndex;
use crate::sdp::SdpSolution;

/// Tikhonov weight relative to the largest squared singular value.
const REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("moment {0} is not in the moment basis")]
    Unhoused(String),
    #[error("monomial {0} involves an input")]
    InputMonomial(String),
    #[error("clip bounds for input {index}: lower {lo} exceeds upper {hi}")]
    Clip { index: usize, lo: f64, hi: f64 },
    #[error("expected {expected} clip intervals, got {got}")]
    ClipCount { expected: usize, got: usize },
    #[error("solution has no segment {0}")]
    MissingSegment(String),
    #[error("invalid controller: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialController {
    /// Monomials over the full variable context; only state exponents are nonzero.
    monomials: Vec<MultiIndex>,
    n_state: usize,
    n_input: usize,
    /// Grid spacing; `None` for a constant (steady-state) law.
    dt: Option<f64>,
    /// `coefficients[t][a][i]`: input `a`, monomial `i`, grid point `t`.
    coefficients: Vec<Vec<Vec<f64>>>,
    clip: Vec<(f64, f64)>,
}

impl PolynomialController {
    /// Builds a controller from explicit coefficients.
    pub fn new(
        monomials: Vec<MultiIndex>,
        n_state: usize,
        n_input: usize,
        dt: Option<f64>,
        coefficients: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, ControllerError> {
        if coefficients.is_empty() {
            return Err(ControllerError::Invalid("no coefficients".into()));
        }
        if dt.is_none() && coefficients.len() != 1 {
            return Err(ControllerError::Invalid("a constant law has exactly one coefficient set".into()));
        }
        if let Some(dt) = dt {
            if !(dt > 0.0) {
                return Err(ControllerError::Invalid(format!("grid spacing {dt}")));
            }
        }
        for m in &monomials {
            if m.arity() != n_state + n_input {
                return Err(ControllerError::Invalid("monomial arity does not match the variables".into()));
            }
            if m.degree_in(n_state..n_state + n_input) > 0 {
                return Err(ControllerError::InputMonomial(format!("{:?}", m.exponents())));
            }
        }
        for row in &coefficients {
            if row.len() != n_input || row.iter().any(|k| k.len() != monomials.len()) {
                return Err(ControllerError::Invalid("coefficient shape".into()));
            }
        }
        Ok(Self { monomials, n_state, n_input, dt, coefficients, clip: Vec::new() })
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn n_input(&self) -> usize {
        self.n_input
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    pub fn coefficients(&self) -> &[Vec<Vec<f64>>] {
        &self.coefficients
    }

    pub fn clip_bounds(&self) -> &[(f64, f64)] {
        &self.clip
    }

    /// Grid times of the coefficient trajectory.
    pub fn times(&self) -> Vec<f64> {
        match self.dt {
            Some(dt) => (0..self.coefficients.len()).map(|k| k as f64 * dt).collect(),
            None => vec![0.0],
        }
    }

    /// Copy that saturates every evaluation into `[lo, hi]` per input.
    pub fn clip(&self, bounds: &[(f64, f64)]) -> Result<Self, ControllerError> {
        if !bounds.is_empty() && bounds.len() != self.n_input {
            return Err(ControllerError::ClipCount { expected: self.n_input, got: bounds.len() });
        }
        for (index, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo <= hi) {
                return Err(ControllerError::Clip { index, lo, hi });
            }
        }
        let mut out = self.clone();
        out.clip = bounds.to_vec();
        Ok(out)
    }

    /// Index of the grid point nearest to `t`, clamped to the grid.
    pub fn grid_index(&self, t: f64) -> usize {
        match self.dt {
            None => 0,
            Some(dt) => {
                let k = libm::round(t / dt);
                if k.is_nan() || k <= 0.0 {
                    0
                } else {
                    (k as usize).min(self.coefficients.len() - 1)
                }
            }
        }
    }

    /// `Σᵢ kᵢ(t) x^(dᵢ)` with nearest-grid coefficients, then clipped.
    pub fn evaluate(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_input];
        self.evaluate_into(t, x, &mut out);
        out
    }

    /// Allocation-free [`evaluate`](Self::evaluate).
    pub fn evaluate_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let k = &self.coefficients[self.grid_index(t)];
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.monomials.iter().zip(&k[a]).map(|(m, c)| c * state_monomial(m, x)).sum();
            if let Some(&(lo, hi)) = self.clip.get(a) {
                *o = o.clamp(lo, hi);
            }
        }
    }
}

fn state_monomial(m: &MultiIndex, x: &[f64]) -> f64 {
    x.iter().zip(m.exponents()).fold(1.0, |acc, (&v, &e)| acc * libm::pow(v, f64::from(e)))
}

/// State monomials of degree at most `degree`, over the model's full context.
pub fn state_monomials(model: &JumpDiffusionModel, degree: u32) -> Vec<MultiIndex> {
    MultiIndex::all_up_to(model.context().len(), model.state_range(), degree)
}

/// Least-squares controller from an SDP solution of `aux`.
///
/// `matching` defaults to all state monomials of degree at most the largest
/// controller degree. Finite-horizon laws have one coefficient set per grid
/// point `0..=N`; the last point reuses the fit of step `N − 1`, whose input
/// moments are the last ones tied to the dynamics.
pub fn extract_controller(
    model: &JumpDiffusionModel,
    aux: &AuxiliaryLinearSystem,
    solution: &SdpSolution,
    horizon: Horizon,
    controller_monomials: &[MultiIndex],
    matching: Option<&[MultiIndex]>,
) -> Result<PolynomialController, ControllerError> {
    let ctx = model.context();
    let (ns, ni) = (model.n_state(), model.n_input());
    let name = |m: &MultiIndex| ctx.monomial_name(m);
    for m in controller_monomials.iter().chain(matching.unwrap_or(&[])) {
        if m.degree_in(model.input_range()) > 0 {
            return Err(ControllerError::InputMonomial(name(m)));
        }
    }
    let max_deg = controller_monomials.iter().map(MultiIndex::degree).max().unwrap_or(0);
    let default_matching;
    let matching = match matching {
        Some(m) => m,
        None => {
            default_matching = state_monomials(model, max_deg);
            &default_matching
        }
    };
    let basis = &aux.basis;
    let locate = |m: &MultiIndex| basis.locate(m).ok_or_else(|| ControllerError::Unhoused(name(m)));
    // positions of the needed moments
    let mut gram = Vec::with_capacity(matching.len());
    for mj in matching {
        let row: Result<Vec<Slot>, _> = controller_monomials.iter().map(|di| locate(&di.mul(mj))).collect();
        gram.push(row?);
    }
    let mut cross = Vec::with_capacity(ni);
    for a in 0..ni {
        let ua = MultiIndex::unit(ctx.len(), ns + a);
        let row: Result<Vec<Slot>, _> = matching.iter().map(|mj| locate(&ua.mul(mj))).collect();
        cross.push(row?);
    }

    let fit = |xs: &[f64], us: &[f64]| -> Vec<Vec<f64>> {
        let (x, u) = aux.unscale(xs, us);
        let value = |s: Slot| match s {
            Slot::State(i) => x[i],
            Slot::Input(i) => u[i],
        };
        let data: Vec<f64> = gram.iter().flat_map(|row| row.iter().map(|&s| value(s))).collect();
        let m = Mat::from_rows(gram.len(), controller_monomials.len(), data);
        cross
            .iter()
            .map(|row| {
                let b: Vec<f64> = row.iter().map(|&s| value(s)).collect();
                least_squares(&m, &b, controller_monomials.len())
            })
            .collect()
    };
    let segment = |n: &str| solution.segment(n).ok_or_else(|| ControllerError::MissingSegment(n.into()));

    let (dt, coefficients) = match horizon {
        Horizon::SteadyState => (None, vec![fit(segment("X")?, segment("U")?)]),
        Horizon::Finite(t_final) => {
            let steps = (0..).take_while(|t| solution.segment(&format!("X_{t}")).is_some()).count();
            if steps < 2 {
                return Err(ControllerError::MissingSegment("X_1".into()));
            }
            let n = steps - 1;
            let mut coefs = Vec::with_capacity(n + 1);
            for t in 0..n {
                coefs.push(fit(segment(&format!("X_{t}"))?, segment(&format!("U_{t}"))?));
            }
            coefs.push(coefs[n - 1].clone());
            (Some(t_final / n as f64), coefs)
        }
    };
    PolynomialController::new(controller_monomials.to_vec(), ns, ni, dt, coefficients)
}

/// Regularized least squares `min ‖M k − b‖² + δ‖k‖²` on unit-norm columns,
/// with `δ` relative to the largest squared singular value. Columns of zeros
/// get zero coefficients, so rank deficiency yields the minimum-norm fit.
fn least_squares(m: &Mat, b: &[f64], p: usize) -> Vec<f64> {
    let q = m.rows();
    if p == 0 {
        return Vec::new();
    }
    let norms: Vec<f64> = (0..p).map(|i| libm::sqrt((0..q).map(|j| m[(j, i)] * m[(j, i)]).sum())).collect();
    // square system [M̂; 0] so the SVD routine applies
    let size = q.max(p);
    let mut a = Mat::zeros(size, p.max(size));
    for j in 0..q {
        for i in 0..p {
            if norms[i] > 0.0 {
                a[(j, i)] = m[(j, i)] / norms[i];
            }
        }
    }
    let (u, s, v) = svd(&a);
    let smax = s.first().copied().unwrap_or(0.0);
    let delta = REGULARIZATION * smax * smax;
    let mut k = vec![0.0; p];
    for (r, &sr) in s.iter().enumerate() {
        if !(sr > 0.0) {
            continue;
        }
        let utb: f64 = (0..q).map(|j| u[(j, r)] * b[j]).sum();
        let w = sr / (sr * sr + delta) * utb;
        for i in 0..p {
            k[i] += w * v[(i, r)];
        }
    }
    for i in 0..p {
        k[i] = if norms[i] > 0.0 { k[i] / norms[i] } else { 0.0 };
    }
    k
}

//! In-memory description of a (controlled) polynomial jump diffusion
//!
//! ```text
//! dx = f(x,u) dt + g(x,u) dw + Σᵢ (φᵢ(x,u) − x) dNᵢ,   P(dNᵢ = 1) = λᵢ(x,u) dt
//! ```
//!
//! with constraints `bᵢ(x,u) ≥ 0`, running cost `c`, terminal cost `h`, an
//! initial distribution and a horizon. Every polynomial lives in the context
//! `(state vars…, input vars…)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{min_eigenvalue, Mat};
use crate::poly::{Context, MultiIndex, PolyError, Polynomial};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    SteadyState,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    Dirac(Vec<f64>),
    /// Covariance stored row-major, `n × n`.
    Gaussian { mean: Vec<f64>, covariance: Vec<f64> },
    /// Moments keyed by state exponent vectors (arity `n`).
    Moments(BTreeMap<MultiIndex, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub map: Vec<Polynomial>,
    pub intensity: Polynomial,
}

/// How inequality constraints enter the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintEncoding {
    /// Localizing matrices `⟨b s sᵀ⟩ ⪰ 0`.
    Localizing,
    /// Linear rows `⟨b⟩, ⟨b³⟩, … ≥ 0`.
    OddPowers,
    Both,
}

/// Solver-side knobs a model file may carry. All optional; the CLI can
/// override them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub order: Option<u32>,
    pub steps: Option<usize>,
    /// Per-degree moment scale (1 disables scaling).
    pub scale: Option<f64>,
    pub encoding: ConstraintEncoding,
    /// Largest odd power used by [`ConstraintEncoding::OddPowers`].
    pub odd_powers: u32,
    /// Append the inputs to the moment-matrix generator; `None` picks automatically.
    pub moment_inputs: Option<bool>,
    /// Explicit basis (state monomials, input monomials) replacing the default rule.
    pub basis: Option<(Vec<MultiIndex>, Vec<MultiIndex>)>,
    /// Controller monomials over the state variables.
    pub controller_monomials: Option<Vec<MultiIndex>>,
    pub matching_monomials: Option<Vec<MultiIndex>>,
    /// Per-input clip bounds.
    pub clip: Vec<(f64, f64)>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            order: None,
            steps: None,
            scale: None,
            encoding: ConstraintEncoding::Localizing,
            odd_powers: 1,
            moment_inputs: None,
            basis: None,
            controller_monomials: None,
            matching_monomials: None,
            clip: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpDiffusionModel {
    ctx: Context,
    n_state: usize,
    pub drift: Vec<Polynomial>,
    /// `n × n_w`, row per state variable.
    pub diffusion: Vec<Vec<Polynomial>>,
    pub jumps: Vec<Jump>,
    pub constraints: Vec<Polynomial>,
    pub running_cost: Polynomial,
    pub terminal_cost: Polynomial,
    pub sense: Sense,
    pub initial: InitialDistribution,
    pub horizon: Horizon,
    pub settings: ModelSettings,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("initial distribution does not provide moment {0}")]
    MissingInitialMoment(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// A single validation finding, tied to the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl core::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl JumpDiffusionModel {
    /// Zero dynamics and costs, Dirac initial state at the origin, unit horizon.
    pub fn new(state_vars: &[&str], input_vars: &[&str]) -> Result<Self, ModelError> {
        let ctx = Context::new(state_vars.iter().chain(input_vars).copied())?;
        let n = state_vars.len();
        if n == 0 {
            return Err(ModelError::Invalid("at least one state variable is required".into()));
        }
        let zero = Polynomial::zero(&ctx);
        Ok(Self {
            n_state: n,
            drift: vec![zero.clone(); n],
            diffusion: vec![Vec::new(); n],
            jumps: Vec::new(),
            constraints: Vec::new(),
            running_cost: zero.clone(),
            terminal_cost: zero,
            sense: Sense::Minimize,
            initial: InitialDistribution::Dirac(vec![0.0; n]),
            horizon: Horizon::Finite(1.0),
            settings: ModelSettings::default(),
            ctx,
        })
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn n_input(&self) -> usize {
        self.ctx.len() - self.n_state
    }

    pub fn n_noise(&self) -> usize {
        self.diffusion.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn state_vars(&self) -> &[String] {
        &self.ctx.names()[..self.n_state]
    }

    pub fn input_vars(&self) -> &[String] {
        &self.ctx.names()[self.n_state..]
    }

    pub fn state_range(&self) -> core::ops::Range<usize> {
        0..self.n_state
    }

    pub fn input_range(&self) -> core::ops::Range<usize> {
        self.n_state..self.ctx.len()
    }

    /// Parses an expression in this model's variable context.
    pub fn poly(&self, text: &str) -> Result<Polynomial, PolyError> {
        crate::poly::parse_polynomial(text, &self.ctx)
    }

    /// Whether `p` involves any input variable.
    pub fn involves_inputs(&self, p: &Polynomial) -> bool {
        self.input_range().any(|i| p.involves(i))
    }

    /// Diffusion entry `(i, j)`; missing entries are zero.
    pub fn diffusion_entry(&self, i: usize, j: usize) -> Polynomial {
        self.diffusion[i].get(j).cloned().unwrap_or_else(|| Polynomial::zero(&self.ctx))
    }

    /// Moment `⟨x^m⟩` of the initial distribution for a state exponent vector
    /// given in the full context (input exponents must be zero).
    pub fn initial_moment(&self, m: &MultiIndex) -> Result<f64, ModelError> {
        let n = self.n_state;
        if m.exponents()[n..].iter().any(|&e| e > 0) {
            return Err(ModelError::MissingInitialMoment(self.ctx.monomial_name(m)));
        }
        let state = &m.exponents()[..n];
        match &self.initial {
            InitialDistribution::Dirac(p) => Ok(state
                .iter()
                .zip(p)
                .map(|(&e, &x)| libm::pow(x, e as f64))
                .product()),
            InitialDistribution::Gaussian { mean, covariance } => {
                let mut memo = BTreeMap::new();
                Ok(gaussian_moment(state, mean, covariance, &mut memo))
            }
            InitialDistribution::Moments(map) => map
                .get(&MultiIndex::new(state.to_vec()))
                .copied()
                .ok_or_else(|| ModelError::MissingInitialMoment(self.ctx.monomial_name(m))),
        }
    }

    /// Checks every structural invariant. An empty list means the model is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let n = self.n_state;
        let mut diag = |field: String, message: String| out.push(Diagnostic { field, message });

        let check_ctx = |field: String, p: &Polynomial, diag: &mut dyn FnMut(String, String)| {
            if p.context() != &self.ctx {
                let foreign: Vec<&String> = p
                    .context()
                    .names()
                    .iter()
                    .enumerate()
                    .filter(|(i, name)| p.involves(*i) && self.ctx.index_of(name).is_none())
                    .map(|(_, name)| name)
                    .collect();
                let msg = match foreign.first() {
                    Some(name) => format!("references `{name}`, which is not a declared variable"),
                    None => "uses a different variable context than the model".into(),
                };
                diag(field, msg);
            }
        };

        if self.drift.len() != n {
            diag("drift".into(), format!("expected {n} entries, found {}", self.drift.len()));
        }
        for (i, p) in self.drift.iter().enumerate() {
            check_ctx(format!("drift.{}", self.var_name(i)), p, &mut diag);
        }
        if self.diffusion.len() != n {
            diag("diffusion".into(), format!("expected {n} rows, found {}", self.diffusion.len()));
        }
        for (i, row) in self.diffusion.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                check_ctx(format!("diffusion.{}.{}", self.var_name(i), j + 1), p, &mut diag);
            }
        }
        for (k, jump) in self.jumps.iter().enumerate() {
            if jump.map.len() != n {
                diag(
                    format!("jump.{}", k + 1),
                    format!("jump map has {} entries, expected {n}", jump.map.len()),
                );
            }
            for (i, p) in jump.map.iter().enumerate() {
                check_ctx(format!("jump.{}.map.{}", k + 1, self.var_name(i)), p, &mut diag);
            }
            check_ctx(format!("jump.{}.intensity", k + 1), &jump.intensity, &mut diag);
        }
        for (k, b) in self.constraints.iter().enumerate() {
            check_ctx(format!("constraints.{}", k + 1), b, &mut diag);
        }
        check_ctx("cost.running".into(), &self.running_cost, &mut diag);
        check_ctx("cost.terminal".into(), &self.terminal_cost, &mut diag);

        match &self.initial {
            InitialDistribution::Dirac(p) => {
                if p.len() != n {
                    diag("initial.point".into(), format!("expected {n} entries, found {}", p.len()));
                }
            }
            InitialDistribution::Gaussian { mean, covariance } => {
                if mean.len() != n {
                    diag("initial.mean".into(), format!("expected {n} entries, found {}", mean.len()));
                }
                if covariance.len() != n * n {
                    diag(
                        "initial.covariance".into(),
                        format!("expected {} entries, found {}", n * n, covariance.len()),
                    );
                } else {
                    let cov = Mat::from_rows(n, n, covariance.clone());
                    let scale = cov.max_abs().max(1.0);
                    if !cov.is_symmetric(1e-12 * scale) {
                        diag("initial.covariance".into(), "not symmetric".into());
                    } else if min_eigenvalue(&cov) < -1e-12 * scale {
                        diag("initial.covariance".into(), "not PSD".into());
                    }
                }
            }
            InitialDistribution::Moments(map) => {
                if map.keys().any(|m| m.arity() != n) {
                    diag("initial.moments".into(), format!("moment keys must have arity {n}"));
                }
                match map.get(&MultiIndex::zero(n)) {
                    Some(&v) if v == 1.0 => {}
                    _ => diag(
                        "initial.moments".into(),
                        "must include the degree-0 moment with value 1".into(),
                    ),
                }
            }
        }
        if let Horizon::Finite(t) = self.horizon {
            if !(t >= 0.0 && t.is_finite()) {
                diag("horizon".into(), format!("T must be a non-negative number, got {t}"));
            }
        }
        let s = &self.settings;
        if s.order == Some(0) {
            diag("relaxation.order".into(), "must be at least 1".into());
        }
        if s.steps == Some(0) {
            diag("relaxation.steps".into(), "must be at least 1".into());
        }
        if let Some(scale) = s.scale {
            if !(scale > 0.0 && scale.is_finite()) {
                diag("relaxation.scale".into(), "must be a positive number".into());
            }
        }
        if s.odd_powers % 2 == 0 {
            diag("relaxation.odd_powers".into(), "must be an odd positive integer".into());
        }
        if !s.clip.is_empty() && s.clip.len() != self.n_input() {
            diag("controller.clip".into(), "one clip interval per input is required".into());
        }
        for (k, &(lo, hi)) in s.clip.iter().enumerate() {
            if !(lo <= hi) {
                diag(format!("controller.clip.{}", k + 1), format!("lower bound {lo} exceeds upper bound {hi}"));
            }
        }
        if let Some((state, input)) = &s.basis {
            if state.first().map(MultiIndex::is_constant) != Some(true) {
                diag("basis.state".into(), "must start with the constant monomial 1".into());
            }
            if state.iter().any(|m| m.degree_in(self.input_range()) > 0) {
                diag("basis.state".into(), "state monomials may not involve inputs".into());
            }
            if state.iter().any(|m| input.contains(m)) {
                diag("basis".into(), "state and input monomials must be disjoint".into());
            }
        }
        for (field, list) in [
            ("controller.monomials", &s.controller_monomials),
            ("controller.matching", &s.matching_monomials),
        ] {
            if let Some(list) = list {
                if list.iter().any(|m| m.degree_in(self.input_range()) > 0) {
                    diag(field.into(), "must be monomials in the state variables only".into());
                }
            }
        }
        out
    }

    fn var_name(&self, i: usize) -> &str {
        self.ctx.names().get(i).map(String::as_str).unwrap_or("?")
    }
}

// Stein's identity: E[xⱼ x^m] = μⱼ E[x^m] + Σₖ Σⱼₖ mₖ E[x^(m−eₖ)].
fn gaussian_moment(
    m: &[u32],
    mean: &[f64],
    cov: &[f64],
    memo: &mut BTreeMap<Vec<u32>, f64>,
) -> f64 {
    let n = m.len();
    let Some(j) = m.iter().position(|&e| e > 0) else {
        return 1.0;
    };
    if let Some(&v) = memo.get(m) {
        return v;
    }
    let mut rest = m.to_vec();
    rest[j] -= 1;
    let mut v = mean[j] * gaussian_moment(&rest, mean, cov, memo);
    for k in 0..n {
        if rest[k] == 0 {
            continue;
        }
        let c = cov[j * n + k];
        if c == 0.0 {
            continue;
        }
        let mut lower = rest.clone();
        lower[k] -= 1;
        v += c * rest[k] as f64 * gaussian_moment(&lower, mean, cov, memo);
    }
    memo.insert(m.to_vec(), v);
    v
}

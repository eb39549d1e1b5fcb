//! Moment bases and the auxiliary linear system.
//!
//! For a state basis `𝒳` (starting with the constant moment) and an input
//! basis `𝒰` (everything else the relaxation needs), the moments obey
//!
//! ```text
//! d𝒳/dt = A 𝒳 + B 𝒰
//! ⟨c⟩ = C 𝒳 + D 𝒰,   ⟨h⟩ = H 𝒳 + K 𝒰
//! ```
//!
//! together with affine matrix inequalities (moment and localizing matrices)
//! and linear rows `⟨b^r⟩ ≥ 0` for odd `r`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::generator::{Generator, GeneratorError};
use crate::linalg::Mat;
use crate::model::{ConstraintEncoding, JumpDiffusionModel, ModelError};
use crate::poly::{Context, MultiIndex, Polynomial};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MomentError {
    #[error("moment `{0}` is not housed in the moment basis")]
    Unhoused(String),
    #[error("moment closure fails at `{0}`: its generator image needs moments no constraint provides")]
    ClosureFailed(String),
    #[error("invalid moment basis: {0}")]
    InvalidBasis(String),
    #[error("relaxation order must be at least 1")]
    InvalidOrder,
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Position of a monomial in `(𝒳, 𝒰)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Slot {
    State(usize),
    Input(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentBasis {
    state: Vec<MultiIndex>,
    input: Vec<MultiIndex>,
    index: BTreeMap<MultiIndex, Slot>,
}

impl MomentBasis {
    /// `state` must start with the constant monomial, contain pure-state
    /// monomials only, and be disjoint from `input`.
    pub fn new(
        state: Vec<MultiIndex>,
        input: Vec<MultiIndex>,
        n_state_vars: usize,
    ) -> Result<Self, MomentError> {
        if state.first().map(MultiIndex::is_constant) != Some(true) {
            return Err(MomentError::InvalidBasis("first state monomial must be 1".into()));
        }
        let arity = state[0].arity();
        let mut index = BTreeMap::new();
        for (i, m) in state.iter().enumerate() {
            if m.arity() != arity || m.degree_in(n_state_vars..arity) > 0 {
                return Err(MomentError::InvalidBasis(format!(
                    "state entry {i} must be a monomial in the state variables"
                )));
            }
            if index.insert(m.clone(), Slot::State(i)).is_some() {
                return Err(MomentError::InvalidBasis(format!("duplicate state entry {i}")));
            }
        }
        for (j, m) in input.iter().enumerate() {
            if m.arity() != arity {
                return Err(MomentError::InvalidBasis(format!("input entry {j} has wrong arity")));
            }
            if index.insert(m.clone(), Slot::Input(j)).is_some() {
                return Err(MomentError::InvalidBasis(format!(
                    "input entry {j} duplicates another basis entry"
                )));
            }
        }
        Ok(Self { state, input, index })
    }

    pub fn state(&self) -> &[MultiIndex] {
        &self.state
    }

    pub fn input(&self) -> &[MultiIndex] {
        &self.input
    }

    pub fn n_state(&self) -> usize {
        self.state.len()
    }

    pub fn n_input(&self) -> usize {
        self.input.len()
    }

    pub fn locate(&self, m: &MultiIndex) -> Option<Slot> {
        self.index.get(m).copied()
    }

    pub fn contains(&self, m: &MultiIndex) -> bool {
        self.index.contains_key(m)
    }

    /// Moment of the basis entry at `slot`.
    pub fn monomial(&self, slot: Slot) -> &MultiIndex {
        match slot {
            Slot::State(i) => &self.state[i],
            Slot::Input(j) => &self.input[j],
        }
    }

    /// Coefficient vectors `(over 𝒳, over 𝒰)` of `⟨p⟩`.
    pub fn expand(&self, p: &Polynomial) -> Result<(Vec<f64>, Vec<f64>), MomentError> {
        let mut xs = vec![0.0; self.state.len()];
        let mut us = vec![0.0; self.input.len()];
        for (m, &c) in p.terms() {
            match self.locate(m) {
                Some(Slot::State(i)) => xs[i] += c,
                Some(Slot::Input(j)) => us[j] += c,
                None => return Err(MomentError::Unhoused(p.context().monomial_name(m))),
            }
        }
        Ok((xs, us))
    }
}

/// Knobs of a relaxation at a given order.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub order: u32,
    pub encoding: ConstraintEncoding,
    pub odd_powers: u32,
    pub moment_inputs: Option<bool>,
    pub scale: f64,
}

impl Relaxation {
    /// Relaxation settings stored in the model, with the order overridden
    /// when `order` is given (falling back to 2).
    pub fn from_model(model: &JumpDiffusionModel, order: Option<u32>) -> Self {
        let s = &model.settings;
        Self {
            order: order.or(s.order).unwrap_or(2),
            encoding: s.encoding,
            odd_powers: s.odd_powers,
            moment_inputs: s.moment_inputs,
            scale: s.scale.unwrap_or(1.0),
        }
    }

    fn uses_lmi(&self) -> bool {
        matches!(self.encoding, ConstraintEncoding::Localizing | ConstraintEncoding::Both)
    }

    fn uses_odd(&self) -> bool {
        matches!(self.encoding, ConstraintEncoding::OddPowers | ConstraintEncoding::Both)
    }

    /// Whether the moment matrix generator gets the input variables appended.
    /// Automatic choice: yes, unless a constraint encoded as a localizing
    /// matrix involves an input.
    pub fn include_inputs(&self, model: &JumpDiffusionModel) -> bool {
        if model.n_input() == 0 {
            return false;
        }
        self.moment_inputs.unwrap_or_else(|| {
            !(self.uses_lmi() && model.constraints.iter().any(|b| model.involves_inputs(b)))
        })
    }
}

#[derive(Debug, Clone)]
enum MapSpec {
    Psd { label: String, generators: Vec<MultiIndex>, multiplier: Option<Polynomial> },
    Odd { label: String, b: Polynomial },
}

fn state_degree(model: &JumpDiffusionModel, p: &Polynomial) -> u32 {
    p.terms().map(|(m, _)| m.degree_in(model.state_range())).max().unwrap_or(0)
}

fn map_specs(model: &JumpDiffusionModel, relax: &Relaxation) -> Vec<MapSpec> {
    let arity = model.context().len();
    let d = relax.order;
    let mut generators = MultiIndex::all_up_to(arity, model.state_range(), d);
    if relax.include_inputs(model) {
        generators.extend(model.input_range().map(|i| MultiIndex::unit(arity, i)));
    }
    let mut specs = vec![MapSpec::Psd { label: "moment".into(), generators, multiplier: None }];
    for (k, b) in model.constraints.iter().enumerate() {
        if relax.uses_lmi() {
            let db = state_degree(model, b);
            if db <= 2 * d {
                let deg = (2 * d - db) / 2;
                specs.push(MapSpec::Psd {
                    label: format!("localizing.{}", k + 1),
                    generators: MultiIndex::all_up_to(arity, model.state_range(), deg),
                    multiplier: Some(b.clone()),
                });
            }
        }
        if relax.uses_odd() {
            specs.push(MapSpec::Odd { label: format!("odd.{}", k + 1), b: b.clone() });
        }
    }
    specs
}

fn spec_monomials(spec: &MapSpec, relax: &Relaxation, ctx: &Context, out: &mut BTreeSet<MultiIndex>) {
    match spec {
        MapSpec::Psd { generators, multiplier, .. } => {
            for (j, gj) in generators.iter().enumerate() {
                for gl in &generators[j..] {
                    let base = gj.mul(gl);
                    match multiplier {
                        None => {
                            out.insert(base);
                        }
                        Some(b) => {
                            for (mb, _) in b.terms() {
                                out.insert(base.mul(mb));
                            }
                        }
                    }
                }
            }
        }
        MapSpec::Odd { b, .. } => {
            let mut r = 1;
            while r <= relax.odd_powers {
                for (m, _) in b.pow(r).terms() {
                    out.insert(m.clone());
                }
                r += 2;
            }
        }
    }
    out.insert(MultiIndex::zero(ctx.len()));
}

/// Ordering of the input basis: pure state moments first, then by input
/// degree, then graded.
fn input_order(model: &JumpDiffusionModel, a: &MultiIndex, b: &MultiIndex) -> core::cmp::Ordering {
    let r = model.input_range();
    a.degree_in(r.clone()).cmp(&b.degree_in(r)).then_with(|| a.cmp(b))
}

/// Rule-driven basis at relaxation order `d` using the model's other settings.
pub fn default_basis(model: &JumpDiffusionModel, d: u32) -> Result<MomentBasis, MomentError> {
    let mut relax = Relaxation::from_model(model, Some(d));
    relax.order = d;
    default_basis_with(model, &relax)
}

/// The state basis is every pure-state monomial up to the largest degree `k`
/// for which those monomials and their generator images are all provided by
/// the constraint maps; the input basis is whatever else is needed.
pub fn default_basis_with(model: &JumpDiffusionModel, relax: &Relaxation) -> Result<MomentBasis, MomentError> {
    if relax.order == 0 {
        return Err(MomentError::InvalidOrder);
    }
    let ctx = model.context();
    let arity = ctx.len();
    let gen = Generator::new(model)?;
    let mut provided = BTreeSet::new();
    for spec in map_specs(model, relax) {
        spec_monomials(&spec, relax, ctx, &mut provided);
    }
    let max_deg = provided.iter().map(MultiIndex::degree).max().unwrap_or(0);
    let mut k = 0;
    let mut images: BTreeSet<MultiIndex> = BTreeSet::new();
    let mut offender = None;
    'grow: for deg in 1..=max_deg {
        let mut level_images = BTreeSet::new();
        for m in MultiIndex::all_up_to(arity, model.state_range(), deg) {
            if m.degree() != deg {
                continue;
            }
            if !provided.contains(&m) {
                offender.get_or_insert(m);
                break 'grow;
            }
            let image = gen.apply_monomial(&m)?;
            if image.terms().any(|(t, _)| !provided.contains(t)) {
                offender.get_or_insert(m);
                break 'grow;
            }
            level_images.extend(image.terms().map(|(t, _)| t.clone()));
        }
        images.extend(level_images);
        k = deg;
    }
    if k == 0 {
        let m = offender.unwrap_or_else(|| MultiIndex::unit(arity, 0));
        return Err(MomentError::ClosureFailed(ctx.monomial_name(&m)));
    }
    let state = MultiIndex::all_up_to(arity, model.state_range(), k);
    let state_set: BTreeSet<&MultiIndex> = state.iter().collect();
    let mut rest: BTreeSet<MultiIndex> = provided;
    rest.extend(images);
    for p in [&model.running_cost, &model.terminal_cost] {
        rest.extend(p.terms().map(|(m, _)| m.clone()));
    }
    let mut input: Vec<MultiIndex> = rest.into_iter().filter(|m| !state_set.contains(m)).collect();
    input.sort_by(|a, b| input_order(model, a, b));
    MomentBasis::new(state, input, model.n_state())
}

/// Rows `[A B]` from generator images and the initial moment vector `x0`.
pub fn build_dynamics(
    model: &JumpDiffusionModel,
    basis: &MomentBasis,
) -> Result<(Mat, Mat, Vec<f64>), MomentError> {
    let gen = Generator::new(model)?;
    let (nx, nu) = (basis.n_state(), basis.n_input());
    let mut a = Mat::zeros(nx, nx);
    let mut b = Mat::zeros(nx, nu);
    let mut x0 = Vec::with_capacity(nx);
    for (i, m) in basis.state().iter().enumerate() {
        x0.push(model.initial_moment(m)?);
        if m.is_constant() {
            continue;
        }
        let (xs, us) = basis.expand(&gen.apply_monomial(m)?)?;
        for (j, v) in xs.into_iter().enumerate() {
            a[(i, j)] = v;
        }
        for (j, v) in us.into_iter().enumerate() {
            b[(i, j)] = v;
        }
    }
    Ok((a, b, x0))
}

/// Cost rows in the model's own sense (no max→min negation).
#[derive(Debug, Clone, PartialEq)]
pub struct CostRows {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub h: Vec<f64>,
    pub k: Vec<f64>,
}

impl CostRows {
    /// Rows of the equivalent minimization problem.
    pub fn for_minimization(&self, sense: crate::model::Sense) -> Self {
        match sense {
            crate::model::Sense::Minimize => self.clone(),
            crate::model::Sense::Maximize => {
                let neg = |v: &Vec<f64>| v.iter().map(|x| -x).collect();
                Self { c: neg(&self.c), d: neg(&self.d), h: neg(&self.h), k: neg(&self.k) }
            }
        }
    }
}

pub fn build_cost(model: &JumpDiffusionModel, basis: &MomentBasis) -> Result<CostRows, MomentError> {
    let (c, d) = basis.expand(&model.running_cost)?;
    let (h, k) = basis.expand(&model.terminal_cost)?;
    Ok(CostRows { c, d, h, k })
}

/// `M(X, U) = M₀ + Σ Xᵢ Mᵢˣ + Σ Uⱼ Mⱼᵘ`, stored sparsely by basis entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixMap {
    pub label: String,
    pub size: usize,
    pub generators: Vec<MultiIndex>,
    pub multiplier: Option<Polynomial>,
    pub constant: Mat,
    pub state_blocks: Vec<(usize, Mat)>,
    pub input_blocks: Vec<(usize, Mat)>,
}

impl AffineMatrixMap {
    fn from_spec(
        basis: &MomentBasis,
        ctx: &Context,
        label: String,
        generators: Vec<MultiIndex>,
        multiplier: Option<Polynomial>,
    ) -> Result<Self, MomentError> {
        let s = generators.len();
        let mut constant = Mat::zeros(s, s);
        let mut blocks: BTreeMap<Slot, Mat> = BTreeMap::new();
        let one = Polynomial::one(ctx);
        let b = multiplier.as_ref().unwrap_or(&one);
        for j in 0..s {
            for l in j..s {
                let base = generators[j].mul(&generators[l]);
                for (mb, &cb) in b.terms() {
                    let m = base.mul(mb);
                    let slot = basis.locate(&m).ok_or_else(|| MomentError::Unhoused(ctx.monomial_name(&m)))?;
                    let target = if slot == Slot::State(0) {
                        &mut constant
                    } else {
                        blocks.entry(slot).or_insert_with(|| Mat::zeros(s, s))
                    };
                    target[(j, l)] += cb;
                    if j != l {
                        target[(l, j)] += cb;
                    }
                }
            }
        }
        let mut state_blocks = Vec::new();
        let mut input_blocks = Vec::new();
        for (slot, m) in blocks {
            if m.max_abs() == 0.0 {
                continue;
            }
            match slot {
                Slot::State(i) => state_blocks.push((i, m)),
                Slot::Input(j) => input_blocks.push((j, m)),
            }
        }
        Ok(Self { label, size: s, generators, multiplier, constant, state_blocks, input_blocks })
    }

    /// Matrix value at the given moment vectors.
    pub fn evaluate(&self, x: &[f64], u: &[f64]) -> Mat {
        let mut m = self.constant.clone();
        for (i, blk) in &self.state_blocks {
            m.add_scaled(blk, x[*i]);
        }
        for (j, blk) in &self.input_blocks {
            m.add_scaled(blk, u[*j]);
        }
        m
    }

    /// Coefficient block of a basis entry (zero when the entry is unused).
    pub fn block(&self, slot: Slot) -> Mat {
        let list = match slot {
            Slot::State(_) => &self.state_blocks,
            Slot::Input(_) => &self.input_blocks,
        };
        let idx = match slot {
            Slot::State(i) | Slot::Input(i) => i,
        };
        list.iter()
            .find(|(k, _)| *k == idx)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(|| Mat::zeros(self.size, self.size))
    }
}

/// Moment matrix with generating vector `(state monomials ≤ d, [inputs])`.
pub fn build_moment_matrix(
    model: &JumpDiffusionModel,
    basis: &MomentBasis,
    d: u32,
    with_inputs: bool,
) -> Result<AffineMatrixMap, MomentError> {
    let arity = model.context().len();
    let mut generators = MultiIndex::all_up_to(arity, model.state_range(), d);
    if with_inputs {
        generators.extend(model.input_range().map(|i| MultiIndex::unit(arity, i)));
    }
    AffineMatrixMap::from_spec(basis, model.context(), "moment".into(), generators, None)
}

/// Localizing matrix `⟨b s sᵀ⟩` with `s` the state monomials up to `degree`.
pub fn build_localizing_matrix(
    model: &JumpDiffusionModel,
    b: &Polynomial,
    basis: &MomentBasis,
    degree: u32,
) -> Result<AffineMatrixMap, MomentError> {
    let arity = model.context().len();
    let generators = MultiIndex::all_up_to(arity, model.state_range(), degree);
    AffineMatrixMap::from_spec(basis, model.context(), "localizing".into(), generators, Some(b.clone()))
}

/// Rows `(J𝒳 + L𝒰)_r = ⟨b^(2r+1)⟩`, all required to be nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRows {
    pub label: String,
    pub j: Mat,
    pub l: Mat,
}

pub fn build_odd_power_rows(
    b: &Polynomial,
    basis: &MomentBasis,
    k_max: u32,
) -> Result<LinearRows, MomentError> {
    let powers: Vec<u32> = (1..=k_max).step_by(2).collect();
    let mut j = Mat::zeros(powers.len(), basis.n_state());
    let mut l = Mat::zeros(powers.len(), basis.n_input());
    for (r, &p) in powers.iter().enumerate() {
        let (xs, us) = basis.expand(&b.pow(p))?;
        for (c, v) in xs.into_iter().enumerate() {
            j[(r, c)] = v;
        }
        for (c, v) in us.into_iter().enumerate() {
            l[(r, c)] = v;
        }
    }
    Ok(LinearRows { label: "odd".into(), j, l })
}

/// Everything the SDP layer needs, possibly in scaled coordinates: the
/// decision variables are `yᵢ = ⟨mᵢ⟩ / s^deg(mᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryLinearSystem {
    pub basis: MomentBasis,
    pub a: Mat,
    pub b: Mat,
    /// Cost rows in the model's sense.
    pub cost: CostRows,
    pub psd_maps: Vec<AffineMatrixMap>,
    pub linear_maps: Vec<LinearRows>,
    pub x0: Vec<f64>,
    pub scale: f64,
}

impl AuxiliaryLinearSystem {
    /// Builds basis, dynamics, costs and constraint maps. An explicit basis in
    /// the model settings replaces the default rule.
    pub fn build(model: &JumpDiffusionModel, relax: &Relaxation) -> Result<Self, MomentError> {
        if relax.order == 0 {
            return Err(MomentError::InvalidOrder);
        }
        let basis = match &model.settings.basis {
            Some((state, input)) => MomentBasis::new(state.clone(), input.clone(), model.n_state())?,
            None => default_basis_with(model, relax)?,
        };
        Self::build_with_basis(model, relax, basis)
    }

    pub fn build_with_basis(
        model: &JumpDiffusionModel,
        relax: &Relaxation,
        basis: MomentBasis,
    ) -> Result<Self, MomentError> {
        let ctx = model.context();
        let (a, b, x0) = build_dynamics(model, &basis)?;
        let cost = build_cost(model, &basis)?;
        let mut psd_maps = Vec::new();
        let mut linear_maps = Vec::new();
        for spec in map_specs(model, relax) {
            match spec {
                MapSpec::Psd { label, generators, multiplier } => {
                    psd_maps.push(AffineMatrixMap::from_spec(&basis, ctx, label, generators, multiplier)?);
                }
                MapSpec::Odd { label, b } => {
                    let mut rows = build_odd_power_rows(&b, &basis, relax.odd_powers)?;
                    rows.label = label;
                    linear_maps.push(rows);
                }
            }
        }
        let aux = Self { basis, a, b, cost, psd_maps, linear_maps, x0, scale: 1.0 };
        Ok(if relax.scale != 1.0 { aux.scaled(relax.scale) } else { aux })
    }

    pub fn n_state(&self) -> usize {
        self.basis.n_state()
    }

    pub fn n_input(&self) -> usize {
        self.basis.n_input()
    }

    fn factors(&self, s: f64) -> (Vec<f64>, Vec<f64>) {
        let f = |m: &MultiIndex| libm::pow(s, m.degree() as f64);
        (self.basis.state().iter().map(f).collect(), self.basis.input().iter().map(f).collect())
    }

    /// Change of variables `⟨m⟩ = s^deg(m) y` applied on top of any existing scaling.
    pub fn scaled(&self, s: f64) -> Self {
        let (fx, fu) = self.factors(s);
        let mut out = self.clone();
        for i in 0..self.n_state() {
            for j in 0..self.n_state() {
                out.a[(i, j)] *= fx[j] / fx[i];
            }
            for j in 0..self.n_input() {
                out.b[(i, j)] *= fu[j] / fx[i];
            }
            out.x0[i] /= fx[i];
        }
        let mul = |v: &mut Vec<f64>, f: &[f64]| v.iter_mut().zip(f).for_each(|(a, b)| *a *= b);
        mul(&mut out.cost.c, &fx);
        mul(&mut out.cost.h, &fx);
        mul(&mut out.cost.d, &fu);
        mul(&mut out.cost.k, &fu);
        for map in &mut out.psd_maps {
            for (i, blk) in &mut map.state_blocks {
                *blk = blk.scale(fx[*i]);
            }
            for (j, blk) in &mut map.input_blocks {
                *blk = blk.scale(fu[*j]);
            }
        }
        for rows in &mut out.linear_maps {
            for r in 0..rows.j.rows() {
                for c in 0..rows.j.cols() {
                    rows.j[(r, c)] *= fx[c];
                }
                for c in 0..rows.l.cols() {
                    rows.l[(r, c)] *= fu[c];
                }
            }
        }
        out.scale = self.scale * s;
        out
    }

    /// Maps scaled decision values back to moments.
    pub fn unscale(&self, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (fx, fu) = self.factors(self.scale);
        (
            x.iter().zip(&fx).map(|(a, b)| a * b).collect(),
            u.iter().zip(&fu).map(|(a, b)| a * b).collect(),
        )
    }

    /// Text dump: every matrix row-major with 17 significant digits.
    pub fn dump(&self, ctx: &Context) -> String {
        let mut out = String::new();
        let names = |ms: &[MultiIndex]| ms.iter().map(|m| ctx.monomial_name(m)).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "state {} {}", self.n_state(), names(self.basis.state()));
        let _ = writeln!(out, "input {} {}", self.n_input(), names(self.basis.input()));
        let _ = writeln!(out, "scale {:.16e}", self.scale);
        write_mat(&mut out, "A", &self.a);
        write_mat(&mut out, "B", &self.b);
        write_vec(&mut out, "C", &self.cost.c);
        write_vec(&mut out, "D", &self.cost.d);
        write_vec(&mut out, "H", &self.cost.h);
        write_vec(&mut out, "K", &self.cost.k);
        write_vec(&mut out, "x0", &self.x0);
        for map in &self.psd_maps {
            let _ = writeln!(out, "psd {} {} generators {}", map.label, map.size, names(&map.generators));
            write_mat(&mut out, "M0", &map.constant);
            for (i, blk) in &map.state_blocks {
                write_mat(&mut out, &format!("X{i}"), blk);
            }
            for (j, blk) in &map.input_blocks {
                write_mat(&mut out, &format!("U{j}"), blk);
            }
        }
        for rows in &self.linear_maps {
            let _ = writeln!(out, "linear {}", rows.label);
            write_mat(&mut out, "J", &rows.j);
            write_mat(&mut out, "L", &rows.l);
        }
        out
    }
}

fn write_vec(out: &mut String, name: &str, v: &[f64]) {
    let _ = write!(out, "{name} 1 {}\n", v.len());
    let row: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
    let _ = writeln!(out, "{}", row.join(" "));
}

fn write_mat(out: &mut String, name: &str, m: &Mat) {
    let _ = writeln!(out, "{name} {} {}", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|x| format!("{x:.16e}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{InitialDistribution, Jump, Sense};
    use crate::poly::parse_polynomial;

    fn names(model: &JumpDiffusionModel, ms: &[MultiIndex]) -> Vec<String> {
        ms.iter().map(|m| model.context().monomial_name(m)).collect()
    }

    pub(crate) fn logistic() -> JumpDiffusionModel {
        let mut m = JumpDiffusionModel::new(&["x"], &[]).unwrap();
        m.jumps = vec![
            Jump { map: vec![m.poly("x + 1").unwrap()], intensity: m.poly("3*x - x^2").unwrap() },
            Jump { map: vec![m.poly("x - 1").unwrap()], intensity: m.poly("x").unwrap() },
        ];
        m.constraints = vec![m.poly("x").unwrap(), m.poly("3 - x").unwrap()];
        m.terminal_cost = m.poly("x^2").unwrap();
        m.initial = InitialDistribution::Dirac(vec![1.0]);
        m
    }

    pub(crate) fn fishery() -> JumpDiffusionModel {
        let mut m = JumpDiffusionModel::new(&["x"], &["u"]).unwrap();
        m.drift[0] = m.poly("x - 0.1*x^2 - u").unwrap();
        m.diffusion[0] = vec![m.poly("x").unwrap()];
        m.constraints = vec![m.poly("x").unwrap(), m.poly("u").unwrap()];
        m.running_cost = m.poly("u").unwrap();
        m.sense = Sense::Maximize;
        m.initial = InitialDistribution::Dirac(vec![1.0]);
        m.settings.encoding = ConstraintEncoding::OddPowers;
        m
    }

    pub(crate) fn jump_rate() -> JumpDiffusionModel {
        let mut m = JumpDiffusionModel::new(&["x"], &["u"]).unwrap();
        m.diffusion[0] = vec![m.poly("1").unwrap()];
        m.jumps = vec![Jump { map: vec![m.poly("0").unwrap()], intensity: m.poly("u").unwrap() }];
        m.constraints = vec![m.poly("u").unwrap(), m.poly("10 - u").unwrap()];
        m.running_cost = m.poly("x^2 + 10*u").unwrap();
        m
    }

    #[test]
    fn logistic_basis() {
        let m = logistic();
        for d in 1..5 {
            let b = default_basis(&m, d).unwrap();
            assert_eq!(b.n_state() as u32, 2 * d);
            assert_eq!(names(&m, b.input()), vec![format!("x^{}", 2 * d)]);
        }
    }

    #[test]
    fn fishery_basis() {
        let m = fishery();
        let b = default_basis(&m, 2).unwrap();
        assert_eq!(names(&m, b.state()), ["1", "x", "x^2", "x^3"]);
        assert_eq!(names(&m, b.input()), ["x^4", "u", "x*u", "x^2*u", "u^2"]);
        let b = default_basis(&m, 1).unwrap();
        assert_eq!(names(&m, b.state()), ["1", "x"]);
        for d in 3..5 {
            assert_eq!(default_basis(&m, d).unwrap().n_state() as u32, d + 2);
        }
    }

    #[test]
    fn jump_rate_basis() {
        let m = jump_rate();
        let b = default_basis(&m, 1).unwrap();
        assert_eq!(names(&m, b.state()), ["1", "x", "x^2"]);
        assert_eq!(names(&m, b.input()), ["u", "x*u", "x^2*u"]);
        let b = default_basis(&m, 3).unwrap();
        assert_eq!(b.n_state(), 7);
        assert_eq!(b.n_input(), 7);
    }

    #[test]
    fn closure_failure_names_monomial() {
        // dx = x^3 dt with no constraint cannot house L x = x^3 at order 1
        let mut m = JumpDiffusionModel::new(&["x"], &[]).unwrap();
        m.drift[0] = m.poly("x^3").unwrap();
        assert_eq!(default_basis(&m, 1), Err(MomentError::ClosureFailed("x".into())));
    }

    #[test]
    fn logistic_dynamics_rows() {
        let m = logistic();
        let b = default_basis(&m, 1).unwrap();
        let (a, bb, x0) = build_dynamics(&m, &b).unwrap();
        assert_eq!(a.row(0), &[0.0, 0.0]);
        assert_eq!(a.row(1), &[0.0, 2.0]);
        assert_eq!(bb.row(1), &[-1.0]);
        assert_eq!(x0, vec![1.0, 1.0]);
    }

    #[test]
    fn gaussian_initial_vector() {
        let mut m = logistic();
        m.initial = InitialDistribution::Gaussian { mean: vec![0.0], covariance: vec![0.25] };
        let b = default_basis(&m, 3).unwrap();
        let (_, _, x0) = build_dynamics(&m, &b).unwrap();
        let expect = [1.0, 0.0, 0.25, 0.0, 3.0 * 0.0625, 0.0];
        for (a, e) in x0.iter().zip(expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn dynamics_rows_round_trip_generator() {
        for m in [logistic(), fishery(), jump_rate()] {
            let b = default_basis(&m, 3).unwrap();
            let (a, bb, _) = build_dynamics(&m, &b).unwrap();
            let gen = Generator::new(&m).unwrap();
            for (i, mono) in b.state().iter().enumerate() {
                let terms = b
                    .state()
                    .iter()
                    .zip(a.row(i))
                    .chain(b.input().iter().zip(bb.row(i)))
                    .map(|(mm, &c)| (mm.clone(), c));
                let rebuilt = Polynomial::from_terms(m.context(), terms);
                assert_eq!(rebuilt, gen.apply_monomial(mono).unwrap());
            }
        }
    }

    #[test]
    fn prefix_stability() {
        let m = fishery();
        let small = default_basis(&m, 2).unwrap();
        let big = default_basis(&m, 4).unwrap();
        let (a1, _, _) = build_dynamics(&m, &small).unwrap();
        let (a2, _, _) = build_dynamics(&m, &big).unwrap();
        for i in 0..small.n_state() {
            for j in 0..small.n_state() {
                assert_eq!(a1[(i, j)], a2[(i, j)]);
            }
        }
    }

    #[test]
    fn fishery_cost_is_negated_for_minimization() {
        let m = fishery();
        let b = default_basis(&m, 2).unwrap();
        let cost = build_cost(&m, &b).unwrap().for_minimization(m.sense);
        let u = b.locate(&MultiIndex::new([0, 1])).unwrap();
        assert_eq!(u, Slot::Input(1));
        assert_eq!(cost.d, vec![0.0, -1.0, 0.0, 0.0, 0.0]);
        assert!(cost.c.iter().chain(&cost.h).chain(&cost.k).all(|&v| v == 0.0));
    }

    #[test]
    fn jump_rate_terminal_rows() {
        let mut m = jump_rate();
        m.terminal_cost = m.poly("x^2 + 10*u").unwrap();
        let b = default_basis(&m, 1).unwrap();
        let cost = build_cost(&m, &b).unwrap();
        assert_eq!(cost.h, vec![0.0, 0.0, 1.0]);
        assert_eq!(cost.k, vec![10.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_cost_rows() {
        let mut m = logistic();
        m.terminal_cost = Polynomial::zero(m.context());
        let b = default_basis(&m, 1).unwrap();
        let cost = build_cost(&m, &b).unwrap();
        assert!(cost.h.iter().chain(&cost.c).all(|&v| v == 0.0));
    }

    #[test]
    fn hankel_and_fishery_moment_matrices() {
        let m = logistic();
        let b = default_basis(&m, 2).unwrap();
        let mm = build_moment_matrix(&m, &b, 2, false).unwrap();
        assert_eq!(mm.size, 3);
        // evaluate at moments of the point mass at 2
        let x: Vec<f64> = (0..4).map(|k| 2f64.powi(k)).collect();
        let v = mm.evaluate(&x, &[16.0]);
        for j in 0..3 {
            for l in 0..3 {
                assert_eq!(v[(j, l)], 2f64.powi((j + l) as i32));
            }
        }

        let f = fishery();
        let b = default_basis(&f, 2).unwrap();
        let mm = build_moment_matrix(&f, &b, 2, true).unwrap();
        assert_eq!(mm.size, 4);
        let uu = b.locate(&MultiIndex::new([0, 2])).unwrap();
        assert_eq!(mm.block(uu)[(3, 3)], 1.0);
        let x2u = b.locate(&MultiIndex::new([2, 1])).unwrap();
        assert_eq!(mm.block(x2u)[(2, 3)], 1.0);
    }

    #[test]
    fn localizing_matrices() {
        let m = logistic();
        let b = default_basis(&m, 2).unwrap();
        let loc = build_localizing_matrix(&m, &m.poly("x").unwrap(), &b, 1).unwrap();
        let x = [1.0, 10.0, 100.0, 1000.0];
        let v = loc.evaluate(&x, &[1e4]);
        assert_eq!((v[(0, 0)], v[(0, 1)], v[(1, 1)]), (10.0, 100.0, 1000.0));
        let loc = build_localizing_matrix(&m, &m.poly("3 - x").unwrap(), &b, 1).unwrap();
        let v = loc.evaluate(&x, &[1e4]);
        assert_eq!((v[(0, 0)], v[(0, 1)], v[(1, 1)]), (3.0 - 10.0, 30.0 - 100.0, 300.0 - 1000.0));

        let j = jump_rate();
        let b = default_basis(&j, 1).unwrap();
        let loc = build_localizing_matrix(&j, &j.poly("10 - u").unwrap(), &b, 1).unwrap();
        assert_eq!(loc.constant[(0, 0)], 10.0);
        assert_eq!(loc.block(Slot::Input(0))[(0, 0)], -1.0);
        assert_eq!(loc.block(Slot::Input(2))[(1, 1)], -1.0);
    }

    #[test]
    fn odd_power_rows() {
        let m = logistic();
        let b = default_basis(&m, 2).unwrap();
        let rows = build_odd_power_rows(&m.poly("x").unwrap(), &b, 3).unwrap();
        assert_eq!(rows.j.row(0), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(rows.j.row(1), &[0.0, 0.0, 0.0, 1.0]);
        let rows = build_odd_power_rows(&m.poly("x - 1").unwrap(), &b, 1).unwrap();
        assert_eq!(rows.j.row(0), &[-1.0, 1.0, 0.0, 0.0]);

        let f = fishery();
        let b = default_basis(&f, 2).unwrap();
        let rows = build_odd_power_rows(&f.poly("u").unwrap(), &b, 1).unwrap();
        assert_eq!(rows.l.row(0), &[0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn scaling_round_trip() {
        let m = fishery();
        let relax = Relaxation { scale: 1.0, ..Relaxation::from_model(&m, Some(2)) };
        let aux = AuxiliaryLinearSystem::build(&m, &relax).unwrap();
        let scaled = aux.scaled(2.0);
        // a moment vector expressed in scaled coordinates reproduces dynamics
        let x: Vec<f64> = (0..aux.n_state()).map(|i| 1.0 + i as f64).collect();
        let u: Vec<f64> = (0..aux.n_input()).map(|i| 0.5 * i as f64).collect();
        let (fx, fu) = scaled.factors(2.0);
        let y: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a / b).collect();
        let v: Vec<f64> = u.iter().zip(&fu).map(|(a, b)| a / b).collect();
        let dx = aux.a.matvec(&x).iter().zip(aux.b.matvec(&u)).map(|(a, b)| a + b).collect::<Vec<_>>();
        let dy = scaled.a.matvec(&y).iter().zip(scaled.b.matvec(&v)).map(|(a, b)| a + b).collect::<Vec<_>>();
        for i in 0..dx.len() {
            assert!((dx[i] - dy[i] * fx[i]).abs() < 1e-12);
        }
        let m1 = aux.psd_maps[0].evaluate(&x, &u);
        let m2 = scaled.psd_maps[0].evaluate(&y, &v);
        assert!(m1.add(&m2.scale(-1.0)).max_abs() < 1e-12);
        let (xb, ub) = scaled.unscale(&y, &v);
        assert!(xb.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(ub.iter().zip(&u).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn dump_uses_seventeen_digits() {
        let m = logistic();
        let aux = AuxiliaryLinearSystem::build(&m, &Relaxation::from_model(&m, Some(1))).unwrap();
        let text = aux.dump(m.context());
        assert!(text.starts_with("state 2 1 x\ninput 1 x^2\n"));
        assert!(text.contains("2.0000000000000000e0"));
    }

    #[test]
    fn unhoused_explicit_basis() {
        let m = logistic();
        let basis = MomentBasis::new(vec![MultiIndex::new([0]), MultiIndex::new([1])], vec![], 1).unwrap();
        let err = build_dynamics(&m, &basis).unwrap_err();
        assert_eq!(err, MomentError::Unhoused("x^2".into()));
        let _ = parse_polynomial("x", m.context()).unwrap();
    }

    /// Empirical moments of samples drawn on the feasible set satisfy every
    /// matrix and row constraint up to sampling error.
    #[test]
    fn empirical_moments_satisfy_constraint_maps() {
        use crate::linalg::sym_eigen;
        use crate::simulate::MomentEstimate;
        use rand::{Rng, SeedableRng};
        use rand_distr::{Exp1, StandardNormal};

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut fish = fishery();
        fish.settings.encoding = ConstraintEncoding::Both;
        fish.settings.odd_powers = 3;
        type Sampler = fn(&mut rand_chacha::ChaCha8Rng) -> Vec<f64>;
        let cases: [(JumpDiffusionModel, Sampler); 3] = [
            (logistic(), |r| vec![f64::from(r.random_range(0u8..=3))]),
            (fish, |r| vec![r.sample::<f64, _>(Exp1), r.random_range(0.0..2.0)]),
            (jump_rate(), |r| vec![r.sample::<f64, _>(StandardNormal), r.random_range(0.0..10.0)]),
        ];
        for (model, draw) in cases {
            for d in 1..=2 {
                let aux = AuxiliaryLinearSystem::build(&model, &Relaxation::from_model(&model, Some(d))).unwrap();
                assert!(!aux.psd_maps.is_empty());
                let samples: Vec<Vec<f64>> = (0..10_000).map(|_| draw(&mut rng)).collect();
                let mean = |m: &MultiIndex| samples.iter().map(|p| m.eval(p)).sum::<f64>() / samples.len() as f64;
                let x: Vec<f64> = aux.basis.state().iter().map(mean).collect();
                let u: Vec<f64> = aux.basis.input().iter().map(mean).collect();
                for map in &aux.psd_maps {
                    let (vals, vecs) = sym_eigen(&map.evaluate(&x, &u));
                    let v: Vec<f64> = (0..map.size).map(|i| vecs[(i, 0)]).collect();
                    // SE of vᵀ M v over single-sample matrices
                    let per_sample = samples.iter().map(|p| {
                        let b = map.multiplier.as_ref().map_or(1.0, |b| b.eval(p));
                        let s: f64 = map.generators.iter().zip(&v).map(|(g, vi)| g.eval(p) * vi).sum();
                        b * s * s
                    });
                    let est = MomentEstimate::from_samples(per_sample);
                    assert!(vals[0] >= -5.0 * est.standard_error - 1e-9, "{}: {} (SE {})", map.label, vals[0], est.standard_error);
                }
                for rows in &aux.linear_maps {
                    let v = rows.j.matvec(&x);
                    let w = rows.l.matvec(&u);
                    for (a, b) in v.iter().zip(&w) {
                        assert!(a + b >= -1e-9, "{}: {}", rows.label, a + b);
                    }
                }
            }
        }
    }
}

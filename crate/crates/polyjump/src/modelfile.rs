//! Line-oriented model files.
//!
//! ```text
//! # comments run to the end of the line
//! [vars]
//! x
//! [inputs]
//! u
//! [drift]
//! x = x - 0.1*x^2 - u
//! [diffusion]
//! x = x              # noise column 1; `x.2 = …` adds a second column
//! [jump.1]
//! map.x = x + 1      # unspecified variables keep their value
//! intensity = 3*x - x^2
//! [constraints]
//! x >= 0
//! 3 - x >= 0
//! [cost]
//! running = u
//! terminal = 0
//! sense = maximize
//! [initial]
//! dirac = 1          # or: mean = …, covariance = … (row-major)
//!                    # or: moment.1 = 1, moment.x = …
//! [horizon]
//! T = 10             # or: T = steady-state
//! ```
//!
//! Optional solver sections: `[relaxation]` (`order`, `steps`, `scale`,
//! `encoding`, `odd_powers`, `moment_inputs`), `[basis]` (`state`, `input`
//! monomial lists) and `[controller]` (`monomials`, `matching`,
//! `clip.<input> = lo, hi`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use polyjump_core::model::{ConstraintEncoding, Diagnostic, ModelSettings};
use polyjump_core::poly::parse_polynomial;
use polyjump_core::{Context, Horizon, InitialDistribution, Jump, JumpDiffusionModel, MultiIndex, PolyError, Polynomial, Sense};

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {field}: {message}")]
    Schema { line: usize, field: String, message: String },
    #[error("line {line}: {field}: {source}")]
    Parse { line: usize, field: String, source: PolyError },
    #[error("missing required field `{0}`")]
    Missing(String),
    #[error("invalid model: {}", list(.0))]
    Invalid(Vec<Diagnostic>),
}

fn list(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

struct Entry {
    line: usize,
    key: Option<String>,
    value: String,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn schema(line: usize, field: impl Into<String>, message: impl Into<String>) -> ModelFileError {
    ModelFileError::Schema { line, field: field.into(), message: message.into() }
}

fn split_sections(text: &str) -> Result<Vec<Section>, ModelFileError> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| schema(line, content, "unterminated section header"))?
                .trim()
                .to_string();
            if out.iter().any(|s| s.name == name) {
                return Err(schema(line, name, "section declared twice"));
            }
            out.push(Section { name, line, entries: Vec::new() });
            continue;
        }
        let section = out.last_mut().ok_or_else(|| schema(line, content, "entry before any section"))?;
        // `>=`/`<=` are constraint syntax, not key separators
        let entry = match content.find('=') {
            Some(p) if !matches!(content.as_bytes().get(p.wrapping_sub(1)), Some(b'>' | b'<')) => Entry {
                line,
                key: Some(content[..p].trim().to_string()),
                value: content[p + 1..].trim().to_string(),
            },
            _ => Entry { line, key: None, value: content.to_string() },
        };
        section.entries.push(entry);
    }
    Ok(out)
}

/// Splits a comma- or whitespace-separated list.
fn items(value: &str) -> impl Iterator<Item = &str> {
    value.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty())
}

fn number(line: usize, field: &str, text: &str) -> Result<f64, ModelFileError> {
    text.trim().parse::<f64>().map_err(|_| schema(line, field, format!("`{text}` is not a number")))
}

fn numbers(line: usize, field: &str, text: &str) -> Result<Vec<f64>, ModelFileError> {
    items(text).map(|t| number(line, field, t)).collect()
}

/// Parses a single monomial such as `x^2*u` or `1`.
pub fn parse_monomial(text: &str, ctx: &Context) -> Result<MultiIndex, String> {
    let p = parse_polynomial(text, ctx).map_err(|e| e.to_string())?;
    let mut terms = p.terms();
    match (terms.next(), terms.next()) {
        (Some((m, &c)), None) if c == 1.0 => Ok(m.clone()),
        _ => Err(format!("`{text}` is not a monomial")),
    }
}

fn monomials(line: usize, field: &str, text: &str, ctx: &Context) -> Result<Vec<MultiIndex>, ModelFileError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|t| parse_monomial(t, ctx).map_err(|m| schema(line, field, m)))
        .collect()
}

fn names(section: &Section) -> Result<Vec<String>, ModelFileError> {
    let mut out = Vec::new();
    for e in &section.entries {
        if let Some(k) = &e.key {
            return Err(schema(e.line, format!("{}.{k}", section.name), "expected bare variable names"));
        }
        out.extend(items(&e.value).map(str::to_string));
    }
    Ok(out)
}

struct Loader<'a> {
    model: JumpDiffusionModel,
    sections: &'a [Section],
}

impl<'a> Loader<'a> {
    fn poly(&self, line: usize, field: &str, text: &str) -> Result<Polynomial, ModelFileError> {
        self.model
            .poly(text)
            .map_err(|source| ModelFileError::Parse { line, field: field.to_string(), source })
    }

    fn state_index(&self, line: usize, field: &str, name: &str) -> Result<usize, ModelFileError> {
        self.model
            .state_vars()
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| schema(line, field, format!("`{name}` is not a state variable")))
    }

    fn keyed<'s>(&self, section: &'s Section) -> Result<Vec<(&'s str, &'s Entry)>, ModelFileError> {
        section
            .entries
            .iter()
            .map(|e| match &e.key {
                Some(k) => Ok((k.as_str(), e)),
                None => Err(schema(e.line, &section.name, format!("expected `key = value`, found `{}`", e.value))),
            })
            .collect()
    }

    fn section(&self, name: &str) -> Option<&'a Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    fn load_drift(&mut self, s: &Section) -> Result<(), ModelFileError> {
        for (k, e) in self.keyed(s)? {
            let field = format!("drift.{k}");
            let i = self.state_index(e.line, &field, k)?;
            self.model.drift[i] = self.poly(e.line, &field, &e.value)?;
        }
        Ok(())
    }

    fn load_diffusion(&mut self, s: &Section) -> Result<(), ModelFileError> {
        for (k, e) in self.keyed(s)? {
            let field = format!("diffusion.{k}");
            let (var, col) = match k.split_once('.') {
                Some((v, c)) => {
                    let c: usize = c.parse().ok().filter(|&c| c >= 1).ok_or_else(|| schema(e.line, &field, "noise index must be a positive integer"))?;
                    (v, c - 1)
                }
                None => (k, 0),
            };
            let i = self.state_index(e.line, &field, var)?;
            let p = self.poly(e.line, &field, &e.value)?;
            let zero = Polynomial::zero(self.model.context());
            let row = &mut self.model.diffusion[i];
            if row.len() <= col {
                row.resize(col + 1, zero);
            }
            row[col] = p;
        }
        Ok(())
    }

    fn load_jump(&mut self, s: &Section) -> Result<Jump, ModelFileError> {
        let ctx = self.model.context().clone();
        let mut map: Vec<Polynomial> = (0..self.model.n_state()).map(|i| Polynomial::monomial(&ctx, MultiIndex::unit(ctx.len(), i), 1.0)).collect();
        let mut intensity = None;
        for (k, e) in self.keyed(s)? {
            let field = format!("{}.{k}", s.name);
            if k == "intensity" {
                intensity = Some(self.poly(e.line, &field, &e.value)?);
            } else if let Some(var) = k.strip_prefix("map.") {
                let i = self.state_index(e.line, &field, var)?;
                map[i] = self.poly(e.line, &field, &e.value)?;
            } else {
                return Err(schema(e.line, field, "unknown key"));
            }
        }
        let intensity = intensity.ok_or_else(|| ModelFileError::Missing(format!("{}.intensity", s.name)))?;
        Ok(Jump { map, intensity })
    }

    fn load_constraints(&mut self, s: &Section) -> Result<(), ModelFileError> {
        for (n, e) in s.entries.iter().enumerate() {
            let field = format!("constraints.{}", n + 1);
            if e.key.is_some() {
                return Err(schema(e.line, field, "expected `lhs >= rhs` or `lhs <= rhs`"));
            }
            let (lhs, rhs, flip) = if let Some((a, b)) = e.value.split_once(">=") {
                (a, b, false)
            } else if let Some((a, b)) = e.value.split_once("<=") {
                (a, b, true)
            } else {
                return Err(schema(e.line, field, "expected `lhs >= rhs` or `lhs <= rhs`"));
            };
            let diff = self.poly(e.line, &field, lhs)?.sub(&self.poly(e.line, &field, rhs)?).expect("shared context");
            self.model.constraints.push(if flip { diff.neg() } else { diff });
        }
        Ok(())
    }

    fn load_cost(&mut self, s: &Section) -> Result<(), ModelFileError> {
        let mut running = None;
        for (k, e) in self.keyed(s)? {
            let field = format!("cost.{k}");
            match k {
                "running" => running = Some(self.poly(e.line, &field, &e.value)?),
                "terminal" => self.model.terminal_cost = self.poly(e.line, &field, &e.value)?,
                "sense" => {
                    self.model.sense = match e.value.as_str() {
                        "min" | "minimize" => Sense::Minimize,
                        "max" | "maximize" => Sense::Maximize,
                        v => return Err(schema(e.line, field, format!("`{v}` is not minimize or maximize"))),
                    }
                }
                _ => return Err(schema(e.line, field, "unknown key")),
            }
        }
        self.model.running_cost = running.ok_or_else(|| ModelFileError::Missing("cost.running".into()))?;
        Ok(())
    }

    fn load_initial(&mut self, s: &Section) -> Result<(), ModelFileError> {
        let n = self.model.n_state();
        let state_ctx = Context::new(self.model.state_vars().iter().map(String::as_str)).expect("valid names");
        let (mut dirac, mut mean, mut cov) = (None, None, None);
        let mut moments = BTreeMap::new();
        for (k, e) in self.keyed(s)? {
            let field = format!("initial.{k}");
            match k {
                "dirac" => dirac = Some(numbers(e.line, &field, &e.value)?),
                "mean" => mean = Some(numbers(e.line, &field, &e.value)?),
                "covariance" => cov = Some(numbers(e.line, &field, &e.value)?),
                _ => match k.strip_prefix("moment.") {
                    Some(m) => {
                        let mi = parse_monomial(m, &state_ctx).map_err(|msg| schema(e.line, &field, msg))?;
                        moments.insert(mi, number(e.line, &field, &e.value)?);
                    }
                    None => return Err(schema(e.line, field, "unknown key")),
                },
            }
        }
        let kinds = usize::from(dirac.is_some()) + usize::from(mean.is_some() || cov.is_some()) + usize::from(!moments.is_empty());
        if kinds != 1 {
            return Err(schema(s.line, "initial", "give exactly one of `dirac`, `mean`/`covariance`, or `moment.*`"));
        }
        self.model.initial = if let Some(p) = dirac {
            InitialDistribution::Dirac(p)
        } else if !moments.is_empty() {
            InitialDistribution::Moments(moments)
        } else {
            let mean = mean.unwrap_or_else(|| vec![0.0; n]);
            let covariance = cov.ok_or_else(|| ModelFileError::Missing("initial.covariance".into()))?;
            InitialDistribution::Gaussian { mean, covariance }
        };
        Ok(())
    }

    fn load_horizon(&mut self, s: &Section) -> Result<(), ModelFileError> {
        for (k, e) in self.keyed(s)? {
            if k != "T" {
                return Err(schema(e.line, format!("horizon.{k}"), "unknown key"));
            }
            self.model.horizon = match e.value.as_str() {
                "steady-state" | "steady_state" | "inf" => Horizon::SteadyState,
                v => Horizon::Finite(number(e.line, "horizon.T", v)?),
            };
        }
        Ok(())
    }

    fn load_relaxation(&mut self, s: &Section) -> Result<(), ModelFileError> {
        let st = &mut ModelSettings::default();
        std::mem::swap(st, &mut self.model.settings);
        for (k, e) in self.keyed(s)? {
            let field = format!("relaxation.{k}");
            let int = |v: &str| v.parse::<u64>().map_err(|_| schema(e.line, &field, format!("`{v}` is not a non-negative integer")));
            match k {
                "order" => st.order = Some(int(&e.value)? as u32),
                "steps" => st.steps = Some(int(&e.value)? as usize),
                "scale" => st.scale = Some(number(e.line, &field, &e.value)?),
                "odd_powers" => st.odd_powers = int(&e.value)? as u32,
                "encoding" => {
                    st.encoding = match e.value.as_str() {
                        "localizing" => ConstraintEncoding::Localizing,
                        "odd-powers" | "odd_powers" => ConstraintEncoding::OddPowers,
                        "both" => ConstraintEncoding::Both,
                        v => return Err(schema(e.line, field, format!("unknown encoding `{v}`"))),
                    }
                }
                "moment_inputs" => {
                    st.moment_inputs = match e.value.as_str() {
                        "auto" => None,
                        "true" | "yes" => Some(true),
                        "false" | "no" => Some(false),
                        v => return Err(schema(e.line, field, format!("`{v}` is not true, false or auto"))),
                    }
                }
                _ => return Err(schema(e.line, field, "unknown key")),
            }
        }
        std::mem::swap(st, &mut self.model.settings);
        Ok(())
    }

    fn load_basis(&mut self, s: &Section) -> Result<(), ModelFileError> {
        let ctx = self.model.context().clone();
        let (mut state, mut input) = (None, Vec::new());
        for (k, e) in self.keyed(s)? {
            let field = format!("basis.{k}");
            match k {
                "state" => state = Some(monomials(e.line, &field, &e.value, &ctx)?),
                "input" => input = monomials(e.line, &field, &e.value, &ctx)?,
                _ => return Err(schema(e.line, field, "unknown key")),
            }
        }
        let state = state.ok_or_else(|| ModelFileError::Missing("basis.state".into()))?;
        self.model.settings.basis = Some((state, input));
        Ok(())
    }

    fn load_controller(&mut self, s: &Section) -> Result<(), ModelFileError> {
        let ctx = self.model.context().clone();
        let n_input = self.model.n_input();
        let mut clip: Vec<Option<(f64, f64)>> = vec![None; n_input];
        for (k, e) in self.keyed(s)? {
            let field = format!("controller.{k}");
            match k {
                "monomials" => self.model.settings.controller_monomials = Some(monomials(e.line, &field, &e.value, &ctx)?),
                "matching" => self.model.settings.matching_monomials = Some(monomials(e.line, &field, &e.value, &ctx)?),
                _ => match k.strip_prefix("clip.") {
                    Some(var) => {
                        let j = self
                            .model
                            .input_vars()
                            .iter()
                            .position(|v| v == var)
                            .ok_or_else(|| schema(e.line, &field, format!("`{var}` is not an input")))?;
                        match numbers(e.line, &field, &e.value)?.as_slice() {
                            &[lo, hi] => clip[j] = Some((lo, hi)),
                            _ => return Err(schema(e.line, field, "expected `lo, hi`")),
                        }
                    }
                    None => return Err(schema(e.line, field, "unknown key")),
                },
            }
        }
        if clip.iter().any(Option::is_some) {
            self.model.settings.clip = clip.into_iter().map(|c| c.unwrap_or((f64::NEG_INFINITY, f64::INFINITY))).collect();
        }
        Ok(())
    }
}

/// Parses model-file text and validates the result.
pub fn parse_model(text: &str) -> Result<JumpDiffusionModel, ModelFileError> {
    let sections = split_sections(text)?;
    for s in &sections {
        let known = matches!(
            s.name.as_str(),
            "vars" | "inputs" | "drift" | "diffusion" | "constraints" | "cost" | "initial" | "horizon" | "relaxation" | "basis" | "controller"
        ) || s.name.strip_prefix("jump.").is_some_and(|i| i.parse::<usize>().is_ok());
        if !known {
            return Err(schema(s.line, &s.name, "unknown section"));
        }
    }
    let find = |name: &str| sections.iter().find(|s| s.name == name);
    let vars = names(find("vars").ok_or_else(|| ModelFileError::Missing("vars".into()))?)?;
    let inputs = match find("inputs") {
        Some(s) => names(s)?,
        None => Vec::new(),
    };
    let v: Vec<&str> = vars.iter().map(String::as_str).collect();
    let u: Vec<&str> = inputs.iter().map(String::as_str).collect();
    let model = JumpDiffusionModel::new(&v, &u).map_err(|e| schema(find("vars").map_or(0, |s| s.line), "vars", e.to_string()))?;
    let mut ld = Loader { model, sections: &sections };

    if let Some(s) = ld.section("drift") {
        ld.load_drift(s)?;
    }
    if let Some(s) = ld.section("diffusion") {
        ld.load_diffusion(s)?;
    }
    let mut jumps: Vec<(usize, &Section)> = sections
        .iter()
        .filter_map(|s| s.name.strip_prefix("jump.").and_then(|i| i.parse().ok()).map(|i| (i, s)))
        .collect();
    jumps.sort_by_key(|&(i, _)| i);
    for (k, &(i, s)) in jumps.iter().enumerate() {
        if i != k + 1 {
            return Err(schema(s.line, &s.name, "jump sections must be numbered 1, 2, … without gaps"));
        }
        let jump = ld.load_jump(s)?;
        ld.model.jumps.push(jump);
    }
    if let Some(s) = ld.section("constraints") {
        ld.load_constraints(s)?;
    }
    ld.load_cost(ld.section("cost").ok_or_else(|| ModelFileError::Missing("cost.running".into()))?)?;
    ld.load_initial(ld.section("initial").ok_or_else(|| ModelFileError::Missing("initial".into()))?)?;
    ld.load_horizon(ld.section("horizon").ok_or_else(|| ModelFileError::Missing("horizon.T".into()))?)?;
    if let Some(s) = ld.section("relaxation") {
        ld.load_relaxation(s)?;
    }
    if let Some(s) = ld.section("basis") {
        ld.load_basis(s)?;
    }
    if let Some(s) = ld.section("controller") {
        ld.load_controller(s)?;
    }
    let model = ld.model;
    let diags = model.validate();
    if !diags.is_empty() {
        return Err(ModelFileError::Invalid(diags));
    }
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<JumpDiffusionModel, ModelFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelFileError::Io { path: path.display().to_string(), source })?;
    parse_model(&text)
}

fn join_numbers(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

fn join_monomials(ctx: &Context, ms: &[MultiIndex]) -> String {
    ms.iter().map(|m| ctx.monomial_name(m)).collect::<Vec<_>>().join(", ")
}

/// Canonical text of a model; [`parse_model`] reads it back to an equal value.
pub fn save_model_string(model: &JumpDiffusionModel) -> String {
    let mut s = String::new();
    let ctx = model.context();
    let sv = model.state_vars();
    let _ = writeln!(s, "[vars]\n{}", sv.join(", "));
    if model.n_input() > 0 {
        let _ = writeln!(s, "[inputs]\n{}", model.input_vars().join(", "));
    }
    let _ = writeln!(s, "[drift]");
    for (v, p) in sv.iter().zip(&model.drift) {
        let _ = writeln!(s, "{v} = {p}");
    }
    if model.diffusion.iter().any(|r| !r.is_empty()) {
        let _ = writeln!(s, "[diffusion]");
        for (v, row) in sv.iter().zip(&model.diffusion) {
            for (j, p) in row.iter().enumerate() {
                let _ = writeln!(s, "{v}.{} = {p}", j + 1);
            }
        }
    }
    for (k, jump) in model.jumps.iter().enumerate() {
        let _ = writeln!(s, "[jump.{}]", k + 1);
        for (v, p) in sv.iter().zip(&jump.map) {
            let _ = writeln!(s, "map.{v} = {p}");
        }
        let _ = writeln!(s, "intensity = {}", jump.intensity);
    }
    if !model.constraints.is_empty() {
        let _ = writeln!(s, "[constraints]");
        for b in &model.constraints {
            let _ = writeln!(s, "{b} >= 0");
        }
    }
    let sense = match model.sense {
        Sense::Minimize => "minimize",
        Sense::Maximize => "maximize",
    };
    let _ = writeln!(s, "[cost]\nrunning = {}\nterminal = {}\nsense = {sense}", model.running_cost, model.terminal_cost);
    let _ = writeln!(s, "[initial]");
    match &model.initial {
        InitialDistribution::Dirac(p) => {
            let _ = writeln!(s, "dirac = {}", join_numbers(p));
        }
        InitialDistribution::Gaussian { mean, covariance } => {
            let _ = writeln!(s, "mean = {}\ncovariance = {}", join_numbers(mean), join_numbers(covariance));
        }
        InitialDistribution::Moments(map) => {
            let sctx = Context::new(sv.iter().map(String::as_str)).expect("valid names");
            for (m, v) in map {
                let _ = writeln!(s, "moment.{} = {v}", sctx.monomial_name(m));
            }
        }
    }
    match model.horizon {
        Horizon::Finite(t) => {
            let _ = writeln!(s, "[horizon]\nT = {t}");
        }
        Horizon::SteadyState => {
            let _ = writeln!(s, "[horizon]\nT = steady-state");
        }
    }
    let st = &model.settings;
    let default = ModelSettings::default();
    let mut relax = String::new();
    if let Some(o) = st.order {
        let _ = writeln!(relax, "order = {o}");
    }
    if let Some(n) = st.steps {
        let _ = writeln!(relax, "steps = {n}");
    }
    if let Some(sc) = st.scale {
        let _ = writeln!(relax, "scale = {sc}");
    }
    if st.encoding != default.encoding {
        let e = match st.encoding {
            ConstraintEncoding::Localizing => "localizing",
            ConstraintEncoding::OddPowers => "odd-powers",
            ConstraintEncoding::Both => "both",
        };
        let _ = writeln!(relax, "encoding = {e}");
    }
    if st.odd_powers != default.odd_powers {
        let _ = writeln!(relax, "odd_powers = {}", st.odd_powers);
    }
    if let Some(b) = st.moment_inputs {
        let _ = writeln!(relax, "moment_inputs = {b}");
    }
    if !relax.is_empty() {
        let _ = write!(s, "[relaxation]\n{relax}");
    }
    if let Some((state, input)) = &st.basis {
        let _ = writeln!(s, "[basis]\nstate = {}", join_monomials(ctx, state));
        if !input.is_empty() {
            let _ = writeln!(s, "input = {}", join_monomials(ctx, input));
        }
    }
    if st.controller_monomials.is_some() || st.matching_monomials.is_some() || !st.clip.is_empty() {
        let _ = writeln!(s, "[controller]");
        if let Some(m) = &st.controller_monomials {
            let _ = writeln!(s, "monomials = {}", join_monomials(ctx, m));
        }
        if let Some(m) = &st.matching_monomials {
            let _ = writeln!(s, "matching = {}", join_monomials(ctx, m));
        }
        for (v, (lo, hi)) in model.input_vars().iter().zip(&st.clip) {
            let _ = writeln!(s, "clip.{v} = {lo}, {hi}");
        }
    }
    s
}

pub fn save_model(model: &JumpDiffusionModel, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, save_model_string(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FISHERY: &str = "
        # harvesting
        [vars]
        x
        [inputs]
        u
        [drift]
        x = x - 0.1*x^2 - u
        [diffusion]
        x = x
        [constraints]
        x >= 0
        u >= 0
        [cost]
        running = u
        terminal = 0
        sense = maximize
        [initial]
        dirac = 1
        [horizon]
        T = 10
        [relaxation]
        encoding = odd-powers
    ";

    #[test]
    fn fishery_fields() {
        let m = parse_model(FISHERY).unwrap();
        assert_eq!(m.drift[0], m.poly("x - 0.1*x^2 - u").unwrap());
        assert_eq!(m.diffusion[0], vec![m.poly("x").unwrap()]);
        assert_eq!(m.sense, Sense::Maximize);
        assert_eq!(m.horizon, Horizon::Finite(10.0));
        assert_eq!(m.settings.encoding, ConstraintEncoding::OddPowers);
        assert_eq!(m.constraints, vec![m.poly("x").unwrap(), m.poly("u").unwrap()]);
    }

    #[test]
    fn logistic_jumps_default_to_identity_elsewhere() {
        let text = "[vars]\nx, y\n[jump.1]\nmap.x = x + 1\nintensity = 3*x - x^2\n[cost]\nrunning = 0\n[initial]\ndirac = 1, 0\n[horizon]\nT = 5\n";
        let m = parse_model(text).unwrap();
        assert_eq!(m.jumps[0].map[1], m.poly("y").unwrap());
        assert!(m.drift.iter().all(Polynomial::is_zero));
        assert_eq!(m.n_noise(), 0);
    }

    #[test]
    fn missing_running_cost_is_named() {
        let text = FISHERY.replace("running = u", "");
        match parse_model(&text) {
            Err(ModelFileError::Missing(f)) => assert_eq!(f, "cost.running"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_sections_report_lines() {
        let text = FISHERY.replace("sense = maximize", "sens = maximize");
        match parse_model(&text) {
            Err(ModelFileError::Schema { line, field, .. }) => {
                assert_eq!(field, "cost.sens");
                assert_eq!(line, 17);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_model(&format!("{FISHERY}\n[extra]\n")), Err(ModelFileError::Schema { .. })));
    }

    #[test]
    fn parse_errors_carry_field_and_offset() {
        let text = FISHERY.replace("x = x - 0.1*x^2 - u", "x = x^");
        match parse_model(&text) {
            Err(ModelFileError::Parse { field, line, .. }) => assert_eq!((field.as_str(), line), ("drift.x", 8)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_failures_surface() {
        let text = FISHERY.replace("dirac = 1", "mean = 0\ncovariance = -1");
        match parse_model(&text) {
            Err(ModelFileError::Invalid(d)) => assert_eq!(d[0].field, "initial.covariance"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_with_every_section() {
        let text = "
            [vars]
            x, y
            [inputs]
            u
            [drift]
            x = y
            [diffusion]
            x = 1
            x.2 = 0.5*x
            [jump.1]
            map.y = u
            intensity = 2
            [constraints]
            u <= 10
            x^2 + y^2 >= 1
            [cost]
            running = x^2 + 0.1*y^2
            terminal = x^2
            [initial]
            moment.1 = 1
            moment.x = 1
            moment.x^2 = 1.5
            [horizon]
            T = steady-state
            [relaxation]
            order = 3
            steps = 200
            scale = 0.5
            encoding = both
            odd_powers = 3
            moment_inputs = false
            [basis]
            state = 1, x, y
            input = u
            [controller]
            monomials = x, y
            matching = 1, x
            clip.u = -inf, 10
        ";
        let m = parse_model(text).unwrap();
        assert_eq!(m.constraints[0], m.poly("10 - u").unwrap());
        let saved = save_model_string(&m);
        assert_eq!(parse_model(&saved).unwrap(), m, "{saved}");
    }
}

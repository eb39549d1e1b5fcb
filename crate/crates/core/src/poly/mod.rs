//! Sparse multivariate polynomials over a fixed, named variable context.
//!
//! Polynomials keep a canonical term map (no stored zeros) keyed by
//! [`MultiIndex`] in graded order, so equality is structural. Coefficients are
//! `f64` in production; any [`Coefficient`] works for the ring operations, which
//! lets tests run the algebra over exact rationals.

mod monomial;
mod parse;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

pub use monomial::{Context, MultiIndex};
pub use parse::parse_polynomial;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("polynomials live in different variable contexts")]
    ContextMismatch,
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("no substitution given for variable `{0}`")]
    MissingSubstitution(String),
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(String),
    #[error("`{0}` is not a valid variable name")]
    InvalidVariableName(String),
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
}

/// Ring element usable as a polynomial coefficient.
pub trait Coefficient:
    Clone
    + PartialEq
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_u32(n: u32) -> Self;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
}

impl Coefficient for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_u32(n: u32) -> Self {
        n as f64
    }
}

#[derive(Clone, PartialEq)]
pub struct Polynomial<C = f64> {
    ctx: Context,
    terms: BTreeMap<MultiIndex, C>,
}

impl<C: Coefficient> Polynomial<C> {
    pub fn zero(ctx: &Context) -> Self {
        Self { ctx: ctx.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(ctx: &Context, c: C) -> Self {
        Self::monomial(ctx, MultiIndex::zero(ctx.len()), c)
    }

    pub fn one(ctx: &Context) -> Self {
        Self::constant(ctx, C::one())
    }

    pub fn monomial(ctx: &Context, m: MultiIndex, c: C) -> Self {
        assert_eq!(m.arity(), ctx.len(), "monomial arity does not match context");
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Self { ctx: ctx.clone(), terms }
    }

    pub fn var(ctx: &Context, name: &str) -> Result<Self, PolyError> {
        let i = ctx
            .index_of(name)
            .ok_or_else(|| PolyError::UnknownVariable(name.into()))?;
        Ok(Self::monomial(ctx, MultiIndex::unit(ctx.len(), i), C::one()))
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, merging repeats.
    pub fn from_terms(ctx: &Context, terms: impl IntoIterator<Item = (MultiIndex, C)>) -> Self {
        let mut p = Self::zero(ctx);
        for (m, c) in terms {
            assert_eq!(m.arity(), ctx.len(), "monomial arity does not match context");
            p.add_term(m, c);
        }
        p
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in graded order (ascending).
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &MultiIndex) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::degree).max()
    }

    /// Whether any term has a positive exponent on variable `var`.
    pub fn involves(&self, var: usize) -> bool {
        self.terms.keys().any(|m| m.exponents()[var] > 0)
    }

    fn add_term(&mut self, m: MultiIndex, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                let sum = existing.clone() + c;
                if sum.is_zero() {
                    self.terms.remove(&m);
                } else {
                    *existing = sum;
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    fn check_ctx(&self, other: &Self) -> Result<(), PolyError> {
        if self.ctx == other.ctx {
            Ok(())
        } else {
            Err(PolyError::ContextMismatch)
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_ctx(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_ctx(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c.clone());
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_ctx(other)?;
        let mut out = Self::zero(&self.ctx);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca.clone() * cb.clone());
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::zero(&self.ctx);
        for (m, v) in &self.terms {
            out.add_term(m.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        Self {
            ctx: self.ctx.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::one(&self.ctx);
        for _ in 0..k {
            out = out.mul(self).expect("same context");
        }
        out
    }

    pub fn differentiate(&self, var: &str) -> Result<Self, PolyError> {
        let i = self
            .ctx
            .index_of(var)
            .ok_or_else(|| PolyError::UnknownVariable(var.into()))?;
        Ok(self.differentiate_index(i))
    }

    /// Partial derivative with respect to the `var`-th context variable.
    pub fn differentiate_index(&self, var: usize) -> Self {
        let mut out = Self::zero(&self.ctx);
        for (m, c) in &self.terms {
            let e = m.exponents()[var];
            if e == 0 {
                continue;
            }
            let mut exps: Vec<u32> = m.exponents().to_vec();
            exps[var] -= 1;
            out.add_term(MultiIndex::new(exps), c.clone() * C::from_u32(e));
        }
        out
    }

    /// Substitutes every variable by a polynomial. All images must share one
    /// context, which becomes the context of the result.
    pub fn compose(&self, subst: &BTreeMap<String, Polynomial<C>>) -> Result<Self, PolyError> {
        let images: Vec<&Polynomial<C>> = self
            .ctx
            .names()
            .iter()
            .map(|n| subst.get(n).ok_or_else(|| PolyError::MissingSubstitution(n.clone())))
            .collect::<Result<_, _>>()?;
        self.compose_slice(&images)
    }

    /// Positional form of [`compose`](Self::compose): `images[i]` replaces variable `i`.
    pub fn compose_slice(&self, images: &[&Polynomial<C>]) -> Result<Self, PolyError> {
        if images.len() != self.ctx.len() {
            let missing = self.ctx.names().get(images.len()).cloned().unwrap_or_default();
            return Err(PolyError::MissingSubstitution(missing));
        }
        let target = match images.first() {
            Some(p) => p.ctx.clone(),
            None => self.ctx.clone(),
        };
        if images.iter().any(|p| p.ctx != target) {
            return Err(PolyError::ContextMismatch);
        }
        // Cache powers of each image; exponents are small in practice.
        let mut powers: Vec<Vec<Polynomial<C>>> = images
            .iter()
            .map(|p| alloc::vec![Polynomial::one(&target), (*p).clone()])
            .collect();
        let mut out = Polynomial::zero(&target);
        for (m, c) in &self.terms {
            let mut term = Polynomial::constant(&target, c.clone());
            for (i, &e) in m.exponents().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let cache = &mut powers[i];
                while cache.len() <= e as usize {
                    let next = cache.last().unwrap().mul(&cache[1])?;
                    cache.push(next);
                }
                term = term.mul(&cache[e as usize])?;
            }
            for (mm, cc) in term.terms {
                out.add_term(mm, cc);
            }
        }
        Ok(out)
    }

    /// Evaluates at `point`, one value per context variable.
    pub fn evaluate(&self, point: &[C]) -> C {
        assert_eq!(point.len(), self.ctx.len(), "point dimension does not match context");
        let mut acc = C::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for (&e, x) in m.exponents().iter().zip(point) {
                for _ in 0..e {
                    v = v * x.clone();
                }
            }
            acc = acc + v;
        }
        acc
    }

    /// Re-expresses the polynomial in a context that contains every variable
    /// this polynomial uses (matched by name).
    pub fn lift(&self, ctx: &Context) -> Result<Self, PolyError> {
        let mut map = Vec::with_capacity(self.ctx.len());
        for (i, name) in self.ctx.names().iter().enumerate() {
            match ctx.index_of(name) {
                Some(j) => map.push(Some(j)),
                None if !self.involves(i) => map.push(None),
                None => return Err(PolyError::UnknownVariable(name.clone())),
            }
        }
        let mut out = Polynomial::zero(ctx);
        for (m, c) in &self.terms {
            let mut e = alloc::vec![0u32; ctx.len()];
            for (i, &k) in m.exponents().iter().enumerate() {
                if let Some(j) = map[i] {
                    e[j] = k;
                }
            }
            out.add_term(MultiIndex::new(e), c.clone());
        }
        Ok(out)
    }

    pub fn map_coefficients<D: Coefficient>(&self, f: impl Fn(&C) -> D) -> Polynomial<D> {
        let mut out = Polynomial::zero(&self.ctx);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c));
        }
        out
    }
}

impl Polynomial<f64> {
    /// Evaluates at a real point (alias kept for readability at call sites).
    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.ctx.len(), "point dimension does not match context");
        self.terms.iter().map(|(m, c)| c * m.eval(point)).sum()
    }

    /// Largest absolute coefficient difference; `None` when contexts differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.ctx != other.ctx {
            return None;
        }
        let d = self.sub(other).ok()?;
        Some(d.terms.values().fold(0.0, |acc, c| acc.max(c.abs())))
    }

    /// Drops terms whose magnitude is at most `tol`.
    pub fn prune(&self, tol: f64) -> Self {
        Self {
            ctx: self.ctx.clone(),
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > tol)
                .map(|(m, c)| (m.clone(), *c))
                .collect(),
        }
    }
}

impl fmt::Display for Polynomial<f64> {
    /// Canonical form: terms by descending degree (graded lex), explicit `*`
    /// and `^`. Parsing the output yields an equal polynomial.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let mut terms: Vec<(&MultiIndex, &f64)> = self.terms.iter().collect();
        terms.sort_by(|a, b| b.0.degree().cmp(&a.0.degree()).then_with(|| a.0.cmp(b.0)));
        for (k, (m, &c)) in terms.into_iter().enumerate() {
            let (neg, mag) = if c.is_sign_negative() { (true, -c) } else { (false, c) };
            match (k, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if m.is_constant() {
                write_coefficient(f, mag)?;
                continue;
            }
            if mag != 1.0 {
                write_coefficient(f, mag)?;
                f.write_str("*")?;
            }
            f.write_str(&self.ctx.monomial_name(m))?;
        }
        Ok(())
    }
}

fn write_coefficient(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c != 0.0 && !(1e-4..1e16).contains(&c) {
        write!(f, "{c:e}")
    } else {
        write!(f, "{c}")
    }
}

impl<C: Coefficient> fmt::Debug for Polynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for (m, c) in &self.terms {
            list.entry(&(self.ctx.monomial_name(m), c));
        }
        list.finish()
    }
}

#[cfg(test)]
mod proptests;

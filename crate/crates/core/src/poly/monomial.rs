use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use super::PolyError;

/// Ordered list of variable names shared by every polynomial of a model.
///
/// Cloning is cheap; two contexts compare equal when their names match in order.
#[derive(Clone)]
pub struct Context {
    names: Arc<[String]>,
}

impl Context {
    pub fn new<I, S>(names: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        for (i, name) in names.iter().enumerate() {
            if !is_identifier(name) {
                return Err(PolyError::InvalidVariableName(name.clone()));
            }
            if names[..i].contains(name) {
                return Err(PolyError::DuplicateVariable(name.clone()));
            }
        }
        Ok(Self { names: names.into() })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Human-readable name of a monomial, e.g. `x^2*u`; the constant monomial is `1`.
    pub fn monomial_name(&self, m: &MultiIndex) -> String {
        let mut out = String::new();
        for (name, &e) in self.names.iter().zip(m.exponents()) {
            if e == 0 {
                continue;
            }
            if !out.is_empty() {
                out.push('*');
            }
            out.push_str(name);
            if e > 1 {
                out.push('^');
                out.push_str(&alloc::format!("{e}"));
            }
        }
        if out.is_empty() {
            out.push('1');
        }
        out
    }
}

impl PartialEq for Context {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.names, &other.names) || self.names == other.names
    }
}

impl Eq for Context {}

impl fmt::Debug for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names.iter()).finish()
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Exponent vector of a monomial, one entry per context variable.
///
/// Ordering is graded: lower total degree first; within a degree the vector
/// that is lexicographically larger comes first, so for `(x, y)` the layout is
/// `1, x, y, x^2, x*y, y^2, ...`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Box<[u32]>);

impl MultiIndex {
    pub fn new(exponents: impl Into<Box<[u32]>>) -> Self {
        Self(exponents.into())
    }

    pub fn zero(arity: usize) -> Self {
        Self(alloc::vec![0; arity].into())
    }

    pub fn unit(arity: usize, var: usize) -> Self {
        let mut e = alloc::vec![0; arity];
        e[var] = 1;
        Self(e.into())
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Total degree restricted to the variables `range`.
    pub fn degree_in(&self, range: core::ops::Range<usize>) -> u32 {
        self.0[range].iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Exponent-wise sum (the monomial product).
    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.arity(), other.arity());
        Self(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    /// Evaluates the monomial at `point`.
    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut v = 1.0;
        for (&e, &x) in self.0.iter().zip(point) {
            if e > 0 {
                v *= libm::pow(x, e as f64);
            }
        }
        v
    }

    /// All exponent vectors of `arity` variables whose degree over the
    /// variables in `vars` is at most `max_degree` and which vanish elsewhere,
    /// in graded order.
    pub fn all_up_to(arity: usize, vars: core::ops::Range<usize>, max_degree: u32) -> Vec<Self> {
        let mut out = Vec::new();
        let k = vars.len();
        for deg in 0..=max_degree {
            let mut buf = alloc::vec![0u32; k];
            compositions(deg, 0, &mut buf, &mut |c| {
                let mut e = alloc::vec![0u32; arity];
                e[vars.clone()].copy_from_slice(c);
                out.push(Self(e.into()));
            });
        }
        out
    }
}

// Emits compositions of `remaining` into `buf[pos..]` with the first slot
// taking the largest share first, which matches the graded order.
fn compositions(remaining: u32, pos: usize, buf: &mut [u32], emit: &mut impl FnMut(&[u32])) {
    if buf.is_empty() {
        if remaining == 0 {
            emit(buf);
        }
        return;
    }
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        emit(buf);
        buf[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        buf[pos] = e;
        compositions(remaining - e, pos + 1, buf, emit);
    }
    buf[pos] = 0;
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_layout_two_variables() {
        let all = MultiIndex::all_up_to(2, 0..2, 2);
        let exps: Vec<&[u32]> = all.iter().map(|m| m.exponents()).collect();
        assert_eq!(
            exps,
            [&[0, 0][..], &[1, 0], &[0, 1], &[2, 0], &[1, 1], &[0, 2]]
        );
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, all);
    }

    #[test]
    fn monomials_over_a_subset_of_variables() {
        let all = MultiIndex::all_up_to(2, 0..1, 3);
        assert_eq!(all.len(), 4);
        assert!(all.iter().all(|m| m.exponents()[1] == 0));
    }

    #[test]
    fn context_rejects_duplicates_and_bad_names() {
        assert!(Context::new(["x", "x"]).is_err());
        assert!(Context::new(["1x"]).is_err());
        let ctx = Context::new(["x", "u"]).unwrap();
        assert_eq!(ctx.monomial_name(&MultiIndex::new([2, 1])), "x^2*u");
        assert_eq!(ctx.monomial_name(&MultiIndex::zero(2)), "1");
    }
}

use alloc::collections::BTreeMap;
use alloc::string::ToString;
use alloc::vec::Vec;

use num_rational::Rational64;
use proptest::prelude::*;

use super::*;

impl Coefficient for Rational64 {
    fn zero() -> Self {
        Rational64::from_integer(0)
    }
    fn one() -> Self {
        Rational64::from_integer(1)
    }
    fn from_u32(n: u32) -> Self {
        Rational64::from_integer(i64::from(n))
    }
}

fn ctx() -> Context {
    Context::new(["x", "y", "z"]).unwrap()
}

fn rational() -> impl Strategy<Value = Rational64> {
    (-20i64..=20, 1i64..=6).prop_map(|(n, d)| Rational64::new(n, d))
}

fn exponents(max: u32) -> impl Strategy<Value = MultiIndex> {
    proptest::collection::vec(0..=max, 3).prop_map(MultiIndex::new)
}

fn rational_poly(max: u32) -> impl Strategy<Value = Polynomial<Rational64>> {
    proptest::collection::vec((exponents(max), rational()), 0..6).prop_map(|t| Polynomial::from_terms(&ctx(), t))
}

/// Degree ≤ 5 in total.
fn float_poly() -> impl Strategy<Value = Polynomial> {
    proptest::collection::vec((exponents(5), -10.0f64..10.0), 0..6).prop_map(|t| {
        Polynomial::from_terms(&ctx(), t.into_iter().filter(|(m, _)| m.degree() <= 5))
    })
}

fn small_float_poly() -> impl Strategy<Value = Polynomial> {
    proptest::collection::vec((exponents(2), -3.0f64..3.0), 0..5).prop_map(|t| Polynomial::from_terms(&ctx(), t))
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.5f64..1.5, 3)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn ring_axioms_exact(p in rational_poly(3), q in rational_poly(3), r in rational_poly(3)) {
        prop_assert_eq!(p.add(&q).unwrap(), q.add(&p).unwrap());
        prop_assert_eq!(p.mul(&q).unwrap(), q.mul(&p).unwrap());
        prop_assert_eq!(p.add(&q).unwrap().add(&r).unwrap(), p.add(&q.add(&r).unwrap()).unwrap());
        prop_assert_eq!(p.mul(&q).unwrap().mul(&r).unwrap(), p.mul(&q.mul(&r).unwrap()).unwrap());
        let lhs = p.mul(&q.add(&r).unwrap()).unwrap();
        let rhs = p.mul(&q).unwrap().add(&p.mul(&r).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
        prop_assert!(p.sub(&p).unwrap().is_zero());
    }

    #[test]
    fn ring_axioms_float(p in float_poly(), q in float_poly(), r in float_poly(), a in point()) {
        let e = |s: &Polynomial| s.eval(&a);
        let pq_r = p.mul(&q).unwrap().mul(&r).unwrap();
        let p_qr = p.mul(&q.mul(&r).unwrap()).unwrap();
        prop_assert!(rel_close(e(&pq_r), e(&p_qr), 1e-12));
        let lhs = p.mul(&q.add(&r).unwrap()).unwrap();
        let rhs = p.mul(&q).unwrap().add(&p.mul(&r).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * (1.0 + lhs.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max)));
        prop_assert_eq!(p.mul(&q).unwrap(), q.mul(&p).unwrap());
    }

    #[test]
    fn product_rule(p in rational_poly(5), q in rational_poly(5), var in 0usize..3) {
        let lhs = p.mul(&q).unwrap().differentiate_index(var);
        let rhs = p.differentiate_index(var).mul(&q).unwrap().add(&p.mul(&q.differentiate_index(var)).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn compose_then_evaluate(p in small_float_poly(), s in proptest::collection::vec(small_float_poly(), 3), a in point()) {
        let names = ["x", "y", "z"];
        let subst: BTreeMap<_, _> = names.iter().map(|n| n.to_string()).zip(s.iter().cloned()).collect();
        let composed = p.compose(&subst).unwrap();
        let inner: Vec<f64> = s.iter().map(|si| si.eval(&a)).collect();
        prop_assert!(rel_close(composed.eval(&a), p.eval(&inner), 1e-10));
    }

    #[test]
    fn parse_of_print_is_identity(p in float_poly()) {
        let text = p.to_string();
        let back = parse_polynomial(&text, &ctx()).unwrap();
        prop_assert_eq!(back, p, "{}", text);
    }
}

//! The generator of a polynomial jump diffusion,
//!
//! ```text
//! L h = ∇h·f + ½ Σⱼₗ ∂²h/∂xⱼ∂xₗ (g gᵀ)ⱼₗ + Σᵢ (h∘φᵢ − h) λᵢ
//! ```
//!
//! applied to polynomial test functions in the state variables. The result is
//! a polynomial over states and inputs.

use alloc::string::String;
use alloc::vec::Vec;

use crate::model::JumpDiffusionModel;
use crate::poly::{MultiIndex, PolyError, Polynomial};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeneratorError {
    #[error("test function involves input variable `{0}`")]
    InputInTestFunction(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Generator bound to one model, with `g gᵀ` expanded once.
#[derive(Debug, Clone)]
pub struct Generator<'m> {
    model: &'m JumpDiffusionModel,
    /// Upper triangle of `g gᵀ`, `ggt[j][l]` for `l ≥ j`; lower entries are zero.
    ggt: Vec<Vec<Polynomial>>,
}

impl<'m> Generator<'m> {
    pub fn new(model: &'m JumpDiffusionModel) -> Result<Self, GeneratorError> {
        let n = model.n_state();
        let w = model.n_noise();
        let ctx = model.context();
        let mut ggt = Vec::with_capacity(n);
        for j in 0..n {
            let mut row = Vec::with_capacity(n);
            for l in 0..n {
                let mut acc = Polynomial::zero(ctx);
                if l >= j {
                    for k in 0..w {
                        let term = model.diffusion_entry(j, k).mul(&model.diffusion_entry(l, k))?;
                        acc = acc.add(&term)?;
                    }
                }
                row.push(acc);
            }
            ggt.push(row);
        }
        Ok(Self { model, ggt })
    }

    pub fn model(&self) -> &JumpDiffusionModel {
        self.model
    }

    /// `L h` for a polynomial `h` in the model context that involves no inputs.
    pub fn apply(&self, h: &Polynomial) -> Result<Polynomial, GeneratorError> {
        let m = self.model;
        let ctx = m.context();
        if h.context() != ctx {
            return Err(PolyError::ContextMismatch.into());
        }
        if let Some(i) = m.input_range().find(|&i| h.involves(i)) {
            return Err(GeneratorError::InputInTestFunction(ctx.names()[i].clone()));
        }
        let n = m.n_state();
        let mut out = Polynomial::zero(ctx);
        let grads: Vec<Polynomial> = (0..n).map(|j| h.differentiate_index(j)).collect();
        for (j, dh) in grads.iter().enumerate() {
            if !dh.is_zero() {
                out = out.add(&dh.mul(&m.drift[j])?)?;
            }
        }
        for j in 0..n {
            for l in j..n {
                let g = &self.ggt[j][l];
                if g.is_zero() {
                    continue;
                }
                let d2 = grads[j].differentiate_index(l);
                if d2.is_zero() {
                    continue;
                }
                // ½ on the diagonal; the symmetric off-diagonal pair adds up to 1.
                let w = if j == l { 0.5 } else { 1.0 };
                out = out.add(&d2.mul(g)?.scale(&w))?;
            }
        }
        if !m.jumps.is_empty() {
            let inputs: Vec<Polynomial> = m
                .input_range()
                .map(|i| Polynomial::monomial(ctx, MultiIndex::unit(ctx.len(), i), 1.0))
                .collect();
            for jump in &m.jumps {
                let images: Vec<&Polynomial> = jump.map.iter().chain(inputs.iter()).collect();
                let diff = h.compose_slice(&images)?.sub(h)?;
                if !diff.is_zero() {
                    out = out.add(&diff.mul(&jump.intensity)?)?;
                }
            }
        }
        Ok(out)
    }

    /// `L x^m` for a state monomial.
    pub fn apply_monomial(&self, m: &MultiIndex) -> Result<Polynomial, GeneratorError> {
        self.apply(&Polynomial::monomial(self.model.context(), m.clone(), 1.0))
    }
}

/// One-shot form of [`Generator::apply`].
pub fn apply_generator(model: &JumpDiffusionModel, h: &Polynomial) -> Result<Polynomial, GeneratorError> {
    Generator::new(model)?.apply(h)
}

/// Total degree of `L x^m` for every state monomial of degree `1..=max_degree`,
/// in graded order. `None` marks a zero image.
pub fn generator_degree_report(
    model: &JumpDiffusionModel,
    max_degree: u32,
) -> Result<Vec<(MultiIndex, Option<u32>)>, GeneratorError> {
    let gen = Generator::new(model)?;
    let arity = model.context().len();
    MultiIndex::all_up_to(arity, model.state_range(), max_degree)
        .into_iter()
        .filter(|m| !m.is_constant())
        .map(|m| {
            let deg = gen.apply_monomial(&m)?.degree();
            Ok((m, deg))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Jump;
    use alloc::vec;

    pub(crate) fn logistic(a1: f64, b1: f64, a2: f64, b2: f64) -> JumpDiffusionModel {
        let mut m = JumpDiffusionModel::new(&["x"], &[]).unwrap();
        let p = |s: &str, m: &JumpDiffusionModel| m.poly(s).unwrap();
        let up = Jump {
            map: vec![p("x + 1", &m)],
            intensity: p(&alloc::format!("{a1}*x - {b1}*x^2"), &m),
        };
        let down = Jump {
            map: vec![p("x - 1", &m)],
            intensity: p(&alloc::format!("{a2}*x + {b2}*x^2"), &m),
        };
        m.jumps = vec![up, down];
        m
    }

    #[test]
    fn logistic_first_moment() {
        let m = logistic(3.0, 1.0, 1.0, 0.0);
        let lx = apply_generator(&m, &m.poly("x").unwrap()).unwrap();
        assert_eq!(lx, m.poly("2*x - x^2").unwrap());
    }

    #[test]
    fn fishery_power_rule() {
        let mut m = JumpDiffusionModel::new(&["x"], &["u"]).unwrap();
        m.drift[0] = m.poly("x - 0.1*x^2 - u").unwrap();
        m.diffusion[0] = vec![m.poly("x").unwrap()];
        let gen = Generator::new(&m).unwrap();
        for k in 1..6u32 {
            let kf = k as f64;
            let got = gen.apply_monomial(&MultiIndex::new([k, 0])).unwrap();
            // k x^k − kγ x^{k+1} − k x^{k−1} u + ½k(k−1) x^k
            let expected = Polynomial::from_terms(
                m.context(),
                [
                    (MultiIndex::new([k, 0]), kf + 0.5 * kf * (kf - 1.0)),
                    (MultiIndex::new([k + 1, 0]), -0.1 * kf),
                    (MultiIndex::new([k - 1, 1]), -kf),
                ],
            );
            assert!(got.max_abs_diff(&expected).unwrap() < 1e-12, "k={k}: {got}");
        }
    }

    #[test]
    fn jump_rate_reset_to_zero() {
        let mut m = JumpDiffusionModel::new(&["x"], &["u"]).unwrap();
        m.diffusion[0] = vec![m.poly("1").unwrap()];
        m.jumps = vec![Jump { map: vec![m.poly("0").unwrap()], intensity: m.poly("u").unwrap() }];
        let gen = Generator::new(&m).unwrap();
        for k in 1..8u32 {
            let kf = k as f64;
            let got = gen.apply_monomial(&MultiIndex::new([k, 0])).unwrap();
            let mut terms = vec![(MultiIndex::new([k, 1]), -1.0)];
            if k >= 2 {
                terms.push((MultiIndex::new([k - 2, 0]), 0.5 * kf * (kf - 1.0)));
            }
            assert_eq!(got, Polynomial::from_terms(m.context(), terms));
        }
    }

    #[test]
    fn rejects_inputs_in_test_function() {
        let mut m = JumpDiffusionModel::new(&["x"], &["u"]).unwrap();
        m.drift[0] = m.poly("u").unwrap();
        assert_eq!(
            apply_generator(&m, &m.poly("x*u").unwrap()),
            Err(GeneratorError::InputInTestFunction("u".into()))
        );
    }

    #[test]
    fn constants_are_annihilated() {
        let m = logistic(3.0, 1.0, 1.0, 0.5);
        assert!(apply_generator(&m, &m.poly("7").unwrap()).unwrap().is_zero());
    }

    #[test]
    fn degree_report_logistic_and_lqr() {
        let m = logistic(3.0, 1.0, 1.0, 0.0);
        let rep = generator_degree_report(&m, 3).unwrap();
        let degs: Vec<Option<u32>> = rep.iter().map(|r| r.1).collect();
        assert_eq!(degs, vec![Some(2), Some(3), Some(4)]);

        let mut lqr = JumpDiffusionModel::new(&["x"], &["u"]).unwrap();
        lqr.drift[0] = lqr.poly("u").unwrap();
        lqr.diffusion[0] = vec![lqr.poly("1").unwrap()];
        let rep = generator_degree_report(&lqr, 2).unwrap();
        assert_eq!(rep[1].1, Some(2));
    }

    #[test]
    fn cross_diffusion_term() {
        // two states sharing one noise: g = (1, 1)ᵀ, h = x*y → L h = 1
        let mut m = JumpDiffusionModel::new(&["x", "y"], &[]).unwrap();
        m.diffusion = vec![vec![m.poly("1").unwrap()], vec![m.poly("1").unwrap()]];
        let got = apply_generator(&m, &m.poly("x*y").unwrap()).unwrap();
        assert_eq!(got, m.poly("1").unwrap());
        let got = apply_generator(&m, &m.poly("x^2").unwrap()).unwrap();
        assert_eq!(got, m.poly("1").unwrap());
    }

    mod properties {
        use super::*;
        use crate::moments::tests::{fishery, jump_rate};
        use proptest::prelude::*;

        /// State-only polynomials with small integer coefficients.
        fn state_poly(m: &JumpDiffusionModel) -> impl Strategy<Value = Polynomial> {
            let ctx = m.context().clone();
            let arity = ctx.len();
            proptest::collection::vec((0u32..=4, -5i32..=5), 0..5).prop_map(move |t| {
                Polynomial::from_terms(
                    &ctx,
                    t.into_iter().map(|(e, c)| {
                        let mut ex = vec![0; arity];
                        ex[0] = e;
                        (MultiIndex::new(ex), f64::from(c))
                    }),
                )
            })
        }

        fn check_linearity(m: &JumpDiffusionModel, p: &Polynomial, q: &Polynomial, a: f64, b: f64, tol: f64) {
            let l = |h: &Polynomial| apply_generator(m, h).unwrap();
            let lhs = l(&p.scale(&a).add(&q.scale(&b)).unwrap());
            let rhs = l(p).scale(&a).add(&l(q).scale(&b)).unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() <= tol, "{lhs} vs {rhs}");
        }

        proptest! {
            #[test]
            fn linear_on_integer_models((p, q) in (state_poly(&logistic(3.0, 1.0, 1.0, 2.0)), state_poly(&logistic(3.0, 1.0, 1.0, 2.0))), a in -4i32..=4, b in -4i32..=4) {
                check_linearity(&logistic(3.0, 1.0, 1.0, 2.0), &p, &q, f64::from(a), f64::from(b), 0.0);
                let jr = jump_rate();
                let lift = |h: &Polynomial| h.lift(jr.context()).unwrap();
                check_linearity(&jr, &lift(&p), &lift(&q), f64::from(a), f64::from(b), 0.0);
            }

            #[test]
            fn linear_on_fishery((p, q) in (state_poly(&fishery()), state_poly(&fishery())), a in -4.0f64..4.0, b in -4.0f64..4.0) {
                check_linearity(&fishery(), &p, &q, a, b, 1e-10);
            }

            #[test]
            fn constants_vanish(c in -100.0f64..100.0) {
                for m in [logistic(3.0, 1.0, 1.0, 0.0), fishery(), jump_rate()] {
                    prop_assert!(apply_generator(&m, &Polynomial::constant(m.context(), c)).unwrap().is_zero());
                }
            }
        }
    }
}

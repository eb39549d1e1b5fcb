use super::*;
use crate::model::Jump;
use crate::moments::tests::{jump_rate, logistic};

fn brownian(x0: f64) -> JumpDiffusionModel {
    let mut m = JumpDiffusionModel::new(&["x"], &[]).unwrap();
    m.diffusion[0] = vec![m.poly("1").unwrap()];
    m.initial = InitialDistribution::Dirac(vec![x0]);
    m
}

/// Two constant-rate jump types counted in separate coordinates.
fn two_jump(l1: f64, l2: f64) -> JumpDiffusionModel {
    let mut m = JumpDiffusionModel::new(&["a", "b"], &[]).unwrap();
    let c = |v: f64| m.poly(&alloc::format!("{v}")).unwrap();
    m.jumps = vec![
        Jump { map: vec![m.poly("a + 1").unwrap(), m.poly("b").unwrap()], intensity: c(l1) },
        Jump { map: vec![m.poly("a").unwrap(), m.poly("b + 1").unwrap()], intensity: c(l2) },
    ];
    m.initial = InitialDistribution::Dirac(vec![0.0, 0.0]);
    m
}

fn constant_controller(n_state: usize, n_input: usize, u: f64) -> PolynomialController {
    let arity = n_state + n_input;
    PolynomialController::new(vec![MultiIndex::zero(arity)], n_state, n_input, None, vec![vec![vec![u]; n_input]]).unwrap()
}

fn x_pow(k: u32) -> MultiIndex {
    MultiIndex::new(vec![k])
}

#[test]
fn standard_error_is_sample_std_over_root_n() {
    let e = MomentEstimate::from_samples([1.0, 2.0, 3.0, 4.0]);
    assert_eq!(e.value, 2.5);
    let sd = libm::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 3.0);
    assert!((e.standard_error - sd / 2.0).abs() < 1e-15);
    assert_eq!(e.n_samples, 4);
}

#[test]
fn degree_zero_moment_is_one() {
    let ens = simulate_paths(&brownian(0.0), None, 0.1, 1.0, 50, 1).unwrap();
    let e = empirical_moment(&ens, &x_pow(0), 1.0).unwrap();
    assert_eq!((e.value, e.standard_error), (1.0, 0.0));
}

#[test]
fn brownian_variance_at_one() {
    let ens = simulate_paths(&brownian(0.0), None, 0.01, 1.0, 4000, 7).unwrap();
    let e = empirical_moment(&ens, &x_pow(2), 1.0).unwrap();
    assert!(e.agrees_with(1.0, 3.0, 0.0), "{e:?}");
}

#[test]
fn jump_rate_with_zero_input_is_brownian() {
    let mut m = jump_rate();
    m.initial = InitialDistribution::Dirac(vec![1.0]);
    let c = constant_controller(1, 1, 0.0);
    let ens = simulate_paths(&m, Some(&c), 0.01, 2.0, 4000, 3).unwrap();
    for t in [0.5, 1.0, 2.0] {
        let e = empirical_moment(&ens, &MultiIndex::new(vec![2, 0]), t).unwrap();
        assert!(e.agrees_with(t + 1.0, 3.0, 0.0), "t = {t}: {e:?}");
    }
    assert_eq!(ens.max_jump_probability, 0.0);
    assert!(ens.input(0, 10).iter().all(|&u| u == 0.0));
}

#[test]
fn off_grid_time_is_rejected() {
    let ens = simulate_paths(&brownian(0.0), None, 0.1, 1.0, 5, 1).unwrap();
    assert_eq!(empirical_moment(&ens, &x_pow(1), 0.05), Err(SimulateError::OffGrid(0.05)));
    assert!(empirical_moment(&ens, &x_pow(1), 1.5).is_err());
    assert!(empirical_moment(&ens, &MultiIndex::new(vec![1, 1, 1]), 0.5).is_err());
}

#[test]
fn logistic_paths_stay_on_the_lattice() {
    let ens = simulate_paths(&logistic(), None, 0.01, 5.0, 500, 11).unwrap();
    for p in 0..ens.n_paths {
        for k in 0..=ens.steps {
            let x = ens.state(p, k)[0];
            assert!(x == libm::round(x) && (0.0..=3.0).contains(&x), "path {p} step {k}: {x}");
        }
    }
    // Σλ peaks at 4 (x = 2)
    assert!((ens.max_jump_probability - 0.04).abs() < 1e-12);
}

#[test]
fn identical_inputs_give_identical_ensembles() {
    let m = logistic();
    let a = simulate_paths(&m, None, 0.01, 1.0, 40, 5).unwrap();
    let b = simulate_paths(&m, None, 0.01, 1.0, 40, 5).unwrap();
    assert_eq!(a, b);
    // paths do not depend on how many others are run
    let c = simulate_paths(&m, None, 0.01, 1.0, 10, 5).unwrap();
    for p in 0..10 {
        for k in 0..=a.steps {
            assert_eq!(a.state(p, k), c.state(p, k));
        }
    }
    let d = simulate_paths(&m, None, 0.01, 1.0, 40, 6).unwrap();
    assert_ne!(a, d);
}

#[test]
fn jump_types_follow_intensity_ratio() {
    let (l1, l2) = (2.0, 1.0);
    let ens = simulate_paths(&two_jump(l1, l2), None, 0.001, 5.0, 400, 17).unwrap();
    let (mut n1, mut n2) = (0.0, 0.0);
    for p in 0..ens.n_paths {
        let s = ens.state(p, ens.steps);
        n1 += s[0];
        n2 += s[1];
    }
    let n = n1 + n2;
    let freq = n1 / n;
    let expect = l1 / (l1 + l2);
    let se = libm::sqrt(expect * (1.0 - expect) / n);
    assert!((freq - expect).abs() <= 3.0 * se, "{freq} vs {expect} ± {se}");
    // counts are Poisson with mean Λ T per path
    assert!((n / ens.n_paths as f64 - 15.0).abs() < 3.0 * libm::sqrt(15.0 / ens.n_paths as f64));
}

/// Asymptotic Kolmogorov distribution tail `P(K > x)`.
fn kolmogorov_tail(x: f64) -> f64 {
    let mut s = 0.0;
    for k in 1..100 {
        let k = k as f64;
        let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
        s += sign * libm::exp(-2.0 * k * k * x * x);
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[test]
fn first_jump_times_are_exponential() {
    let (l1, l2) = (2.0, 1.0);
    let rate = l1 + l2;
    let ens = simulate_paths(&two_jump(l1, l2), None, 0.001, 6.0, 1500, 23).unwrap();
    let mut times: Vec<f64> = (0..ens.n_paths)
        .map(|p| {
            let k = (0..=ens.steps).find(|&k| ens.state(p, k) != [0.0, 0.0]).expect("every path jumps");
            k as f64 * ens.dt
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let n = times.len() as f64;
    let d = times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let f = 1.0 - libm::exp(-rate * t);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let p = kolmogorov_tail(libm::sqrt(n) * d);
    assert!(p > 0.01, "D = {d}, p = {p}");
}

#[test]
fn kolmogorov_tail_reference_values() {
    // tabulated critical values: 1.2238 at 0.10, 1.6276 at 0.01
    assert!((kolmogorov_tail(1.2238) - 0.10).abs() < 1e-3);
    assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 1e-3);
}

#[test]
fn negative_intensity_aborts_with_location() {
    let mut m = JumpDiffusionModel::new(&["x"], &[]).unwrap();
    m.jumps = vec![Jump { map: vec![m.poly("x + 1").unwrap()], intensity: m.poly("x - 2").unwrap() }];
    m.initial = InitialDistribution::Dirac(vec![0.0]);
    match simulate_paths(&m, None, 0.1, 1.0, 3, 1) {
        Err(SimulateError::NegativeIntensity { jump: 0, time, state, .. }) => {
            assert_eq!(time, 0.0);
            assert_eq!(state, vec![0.0]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn controlled_model_requires_a_controller() {
    let m = jump_rate();
    assert_eq!(simulate_paths(&m, None, 0.1, 1.0, 3, 1), Err(SimulateError::MissingController));
    let wrong = constant_controller(1, 2, 0.0);
    assert!(matches!(simulate_paths(&m, Some(&wrong), 0.1, 1.0, 3, 1), Err(SimulateError::ControllerShape { .. })));
    let mut m = brownian(0.0);
    m.initial = InitialDistribution::Moments(Default::default());
    assert_eq!(simulate_paths(&m, None, 0.1, 1.0, 3, 1), Err(SimulateError::MomentInitial));
}

#[test]
fn negative_excursions_are_reflected_and_counted() {
    let mut m = JumpDiffusionModel::new(&["x"], &[]).unwrap();
    m.drift[0] = m.poly("-1").unwrap();
    m.diffusion[0] = vec![m.poly("1").unwrap()];
    m.constraints = vec![m.poly("2*x").unwrap()];
    m.initial = InitialDistribution::Dirac(vec![0.5]);
    let ens = simulate_paths(&m, None, 0.01, 2.0, 50, 2).unwrap();
    assert!(ens.reflections > 0);
    for p in 0..ens.n_paths {
        for k in 0..=ens.steps {
            assert!(ens.state(p, k)[0] >= 0.0);
        }
    }
    // an upper bound is not a reflecting constraint
    m.constraints = vec![m.poly("1 - x").unwrap()];
    assert_eq!(simulate_paths(&m, None, 0.01, 2.0, 5, 2).unwrap().reflections, 0);
}

#[test]
fn inputs_that_would_overdraw_a_nonnegative_state_are_cut_back() {
    let mut m = JumpDiffusionModel::new(&["x"], &["u"]).unwrap();
    m.drift[0] = m.poly("-u").unwrap();
    m.constraints = vec![m.poly("x").unwrap(), m.poly("u").unwrap()];
    m.initial = InitialDistribution::Dirac(vec![1.0]);
    m.horizon = Horizon::Finite(1.0);
    let c = constant_controller(1, 1, 5.0);
    let ens = simulate_paths(&m, Some(&c), 0.1, 1.0, 2, 1).unwrap();
    assert_eq!(ens.reflections, 0);
    // steps 2..9 start from an empty state
    assert_eq!(ens.input_cutbacks, 16);
    for p in 0..2 {
        assert_eq!(ens.input(p, 1), &[5.0]);
        assert!(ens.state(p, 2)[0].abs() < 1e-12);
        for k in 2..=ens.steps {
            assert!(ens.input(p, k)[0].abs() < 1e-12, "{k}: {:?}", ens.input(p, k));
            assert!(ens.state(p, k)[0] >= 0.0);
        }
    }
    // a clip floor above zero is respected
    let floor = c.clip(&[(1.0, 10.0)]).unwrap();
    let ens = simulate_paths(&m, Some(&floor), 0.1, 1.0, 1, 1).unwrap();
    assert_eq!(ens.input(0, 3), &[1.0]);
    assert!(ens.reflections > 0);
}

#[test]
fn final_grid_point_holds_the_last_applied_input() {
    let mut m = JumpDiffusionModel::new(&["x"], &["u"]).unwrap();
    m.diffusion[0] = vec![m.poly("1").unwrap()];
    m.initial = InitialDistribution::Dirac(vec![0.0]);
    let times = vec![0.0, 0.5];
    let ctl = PolynomialController::new(
        vec![MultiIndex::zero(2)],
        1,
        1,
        Some(0.5),
        times.iter().map(|&t| vec![vec![1.0 + t]]).collect(),
    )
    .unwrap();
    let ens = simulate_paths(&m, Some(&ctl), 0.5, 1.0, 1, 1).unwrap();
    assert_eq!(ens.input(0, 0), &[1.0]);
    assert_eq!(ens.input(0, 1), &[1.5]);
    assert_eq!(ens.input(0, 2), &[1.5]);
}

#[test]
fn gaussian_initial_state_has_requested_moments() {
    let mut m = JumpDiffusionModel::new(&["x", "y"], &[]).unwrap();
    m.initial = InitialDistribution::Gaussian { mean: vec![1.0, -1.0], covariance: vec![1.0, 0.5, 0.5, 2.0] };
    let ens = simulate_paths(&m, None, 0.1, 0.1, 6000, 4).unwrap();
    let checks = [([1, 0], 1.0), ([0, 1], -1.0), ([2, 0], 2.0), ([0, 2], 3.0), ([1, 1], -0.5)];
    for (e, want) in checks {
        let est = empirical_moment(&ens, &MultiIndex::new(e.to_vec()), 0.0).unwrap();
        assert!(est.agrees_with(want, 3.5, 0.0), "{e:?}: {est:?}");
    }
}

#[test]
fn cost_quadrature_on_a_deterministic_ramp() {
    let mut m = JumpDiffusionModel::new(&["x"], &[]).unwrap();
    m.drift[0] = m.poly("1").unwrap();
    m.initial = InitialDistribution::Dirac(vec![0.0]);
    m.horizon = Horizon::Finite(1.0);
    let ens = simulate_paths(&m, None, 0.1, 1.0, 3, 1).unwrap();
    assert_eq!(estimate_cost(&ens, &m), MomentEstimate { value: 0.0, standard_error: 0.0, n_samples: 3 });
    m.running_cost = m.poly("x").unwrap();
    m.terminal_cost = m.poly("x").unwrap();
    let e = estimate_cost(&ens, &m);
    assert!((e.value - 1.5).abs() < 1e-12 && e.standard_error == 0.0);
    // steady state: average of x over t ∈ [0.5, 1]
    m.horizon = Horizon::SteadyState;
    m.terminal_cost = m.poly("0").unwrap();
    assert!((estimate_cost(&ens, &m).value - 0.75).abs() < 1e-12);
}

#[test]
fn grid_snaps_to_the_horizon() {
    let ens = simulate_paths(&brownian(0.0), None, 0.03, 1.0, 2, 1).unwrap();
    assert_eq!(ens.steps, 33);
    assert!((ens.t_end() - 1.0).abs() < 1e-12);
    assert_eq!(ens.step_of(1.0), Some(33));
}

fn birth_death(birth: &str, death: &str, x0: f64) -> JumpDiffusionModel {
    let mut m = JumpDiffusionModel::new(&["x"], &[]).unwrap();
    m.jumps = vec![
        Jump { map: vec![m.poly("x + 1").unwrap()], intensity: m.poly(birth).unwrap() },
        Jump { map: vec![m.poly("x - 1").unwrap()], intensity: m.poly(death).unwrap() },
    ];
    m.initial = InitialDistribution::Dirac(vec![x0]);
    m
}

#[test]
fn oracle_two_state_toy_is_uniform() {
    let pi = ctmc_stationary_oracle(&birth_death("1 - x", "x", 0.0)).unwrap();
    assert_eq!(pi.len(), 2);
    assert!((pi[&0] - 0.5).abs() < 1e-14 && (pi[&1] - 0.5).abs() < 1e-14);
}

#[test]
fn oracle_logistic_without_quadratic_death_absorbs_at_zero() {
    let pi = ctmc_stationary_oracle(&logistic()).unwrap();
    assert_eq!(pi.into_iter().collect::<Vec<_>>(), vec![(0, 1.0)]);
}

#[test]
fn oracle_matches_detailed_balance() {
    // births vanish at 3, deaths at 0, and 0 is not absorbing
    let birth = |x: f64| (3.0 - x) * (x + 1.0);
    let death = |x: f64| x + x * x;
    let pi = ctmc_stationary_oracle(&birth_death("(3 - x)*(x + 1)", "x + x^2", 2.0)).unwrap();
    let mut w = vec![1.0];
    for k in 0..3 {
        let k = k as f64;
        let prev = *w.last().unwrap();
        w.push(prev * birth(k) / death(k + 1.0));
    }
    let z: f64 = w.iter().sum();
    assert_eq!(pi.len(), 4);
    for (k, want) in w.iter().enumerate() {
        assert!((pi[&(k as i64)] - want / z).abs() < 1e-13);
    }
    assert!((pi.values().sum::<f64>() - 1.0).abs() < 1e-14);
}

#[test]
fn oracle_rejects_non_chains() {
    assert!(matches!(ctmc_stationary_oracle(&brownian(0.0)), Err(SimulateError::NotFiniteChain(_))));
    assert!(ctmc_stationary_oracle(&jump_rate()).is_err());
    // unbounded birth process
    assert!(ctmc_stationary_oracle(&birth_death("1", "0", 0.0)).is_err());
    let mut m = birth_death("1 - x", "x", 0.0);
    m.jumps[0].map[0] = m.poly("2*x").unwrap();
    assert!(ctmc_stationary_oracle(&m).is_err());
    // two absorbing ends
    assert!(ctmc_stationary_oracle(&birth_death("x*(2 - x)", "x*(2 - x)", 1.0)).is_err());
}

/// Centered difference of `⟨x^k⟩` around `t` minus `⟨(L x^k)(x(t), u(t))⟩`,
/// as a per-path sample so the SE accounts for their correlation.
fn generator_gap(ens: &TrajectoryEnsemble, model: &JumpDiffusionModel, k: u32, t: f64, h: f64) -> MomentEstimate {
    let arity = model.context().len();
    let mut e = vec![0; arity];
    e[0] = k;
    let mono = MultiIndex::new(e);
    let lh = crate::generator::Generator::new(model).unwrap().apply_monomial(&mono).unwrap();
    let (a, b, c) = (ens.step_of(t - h).unwrap(), ens.step_of(t + h).unwrap(), ens.step_of(t).unwrap());
    MomentEstimate::from_samples((0..ens.n_paths).map(|p| {
        let fd = (mono.eval(&ens.point(p, b)) - mono.eval(&ens.point(p, a))) / (2.0 * h);
        fd - lh.eval(&ens.point(p, c))
    }))
}

#[test]
fn moment_slopes_match_generator_images() {
    use crate::moments::tests::fishery;
    let mut fish = fishery();
    fish.initial = InitialDistribution::Dirac(vec![1.0]);
    let mut rate = jump_rate();
    rate.initial = InitialDistribution::Dirac(vec![1.0]);
    let cases = [
        (logistic(), None),
        (fish, Some(constant_controller(1, 1, 0.5))),
        (rate, Some(constant_controller(1, 1, 2.0))),
    ];
    for (i, (model, ctrl)) in cases.iter().enumerate() {
        let ens = simulate_paths(model, ctrl.as_ref(), 0.005, 0.6, 4000, 100 + i as u64).unwrap();
        for k in 1..=3 {
            for t in [0.1, 0.5] {
                let gap = generator_gap(&ens, model, k, t, 0.05);
                assert!(gap.agrees_with(0.0, 3.0, 0.0), "model {i}, x^{k}, t = {t}: {gap:?}");
            }
        }
    }
}

//! Command-line front end.
//!
//! Exit codes: 0 success, 2 solver failure, 64 usage error, 65 model or
//! controller file error, 74 output I/O error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use polyjump_core::controller::{extract_controller, state_monomials};
use polyjump_core::moments::Relaxation;
use polyjump_core::sdp::{assemble, solve};
use polyjump_core::simulate::{estimate_cost, JUMP_PROBABILITY_WARNING};
use polyjump_core::{
    AuxiliaryLinearSystem, Horizon, JumpDiffusionModel, MultiIndex, PolynomialController, SdpSolution, Sense, SolveStatus,
    SolverOptions,
};

use crate::controller_file::{load_controller, save_controller};
use crate::modelfile::{load_model, parse_monomial};
use crate::report::{moment_rows, num, opt, write_csv};
use crate::sdpa::to_sdpa;

pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_IO: i32 = 74;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "POLYJUMP_THREADS";

#[derive(Parser, Debug)]
#[command(name = "polyjump", version, about = "Moment bounds, controllers and Monte Carlo for polynomial jump diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Lower/upper SDP bounds on a moment functional; writes bounds.csv.
    Bound(BoundArgs),
    /// SDP cost bound, extracted controller and its simulated cost; writes costs.csv.
    Control(ControlArgs),
    /// Monte Carlo moment curves; writes moments.csv.
    Simulate(SimulateArgs),
    /// Writes the SDP in sparse SDPA format.
    ExportSdp(ExportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Horizon override in seconds.
    #[arg(long = "T", value_name = "SECONDS")]
    pub t: Option<f64>,
    /// Use the steady-state problem regardless of the model's horizon.
    #[arg(long, conflicts_with = "t")]
    pub steady_state: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RelaxArgs {
    /// Relaxation order d (default: model setting, else 2).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub order: Option<u32>,
    /// Euler grid steps N over the horizon (default: model setting, else 100).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: Option<u64>,
    /// Solver tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
}

#[derive(Args, Debug, Clone)]
pub struct McArgs {
    /// Monte Carlo paths.
    #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    pub paths: u64,
    /// Simulation step in seconds.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenseArg {
    Min,
    Max,
    Both,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub relax: RelaxArgs,
    /// Polynomial whose mean is bounded, or `cost` for the model's cost.
    #[arg(long, default_value = "cost")]
    pub objective: String,
    #[arg(long, value_enum, default_value_t = SenseArg::Both)]
    pub sense: SenseArg,
    /// Number of horizon points (rows of bounds.csv) on a finite horizon.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub points: u64,
}

#[derive(Args, Debug)]
pub struct ControlArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub relax: RelaxArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// Relaxation orders to sweep, e.g. `1,2,3` or `1..6` (overrides --order).
    #[arg(long)]
    pub orders: Option<String>,
    /// Controller degree (default: model setting, else the largest degree the basis supports).
    #[arg(long)]
    pub controller_degree: Option<u32>,
    /// Simulated length in seconds for steady-state models.
    #[arg(long, default_value_t = 5.0)]
    pub sim_t: f64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// Controller file (required when the model has inputs).
    #[arg(long)]
    pub controller: Option<PathBuf>,
    /// Comma-separated monomials to report (default: state monomials of degree 1 and 2).
    #[arg(long)]
    pub moments: Option<String>,
    /// Write every k-th grid point.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub every: u64,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub relax: RelaxArgs,
    /// Polynomial whose mean is the objective, or `cost`.
    #[arg(long, default_value = "cost")]
    pub objective: String,
    /// Sense of the exported problem (default: the model's).
    #[arg(long, value_enum)]
    pub sense: Option<SenseArg>,
    /// Output file name inside --out.
    #[arg(long, default_value = "problem.dat-s")]
    pub file: String,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn usage(message: impl Into<String>) -> Failure {
    fail(EXIT_USAGE, message)
}

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    fail(EXIT_IO, format!("cannot write {}: {e}", path.display()))
}

fn solver_failure(status: SolveStatus, what: &str) -> Failure {
    let note = match status {
        SolveStatus::Unbounded => " (the moments may diverge, or the relaxation is too weak to bound them)",
        SolveStatus::Infeasible => " (no moment sequence satisfies the relaxation)",
        _ => "",
    };
    fail(EXIT_SOLVER, format!("{what}: solver status {status}{note}"))
}

fn load(args: &ModelArgs) -> Result<JumpDiffusionModel, Failure> {
    let mut m = load_model(&args.model).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    if let Some(t) = args.t {
        if !(t > 0.0 && t.is_finite()) {
            return Err(usage(format!("--T must be positive, got {t}")));
        }
        m.horizon = Horizon::Finite(t);
    }
    if args.steady_state {
        m.horizon = Horizon::SteadyState;
    }
    std::fs::create_dir_all(&args.out).map_err(|e| io_fail(&args.out, e))?;
    Ok(m)
}

fn steps(model: &JumpDiffusionModel, relax: &RelaxArgs) -> usize {
    relax.steps.map(|s| s as usize).or(model.settings.steps).unwrap_or(100)
}

/// Replaces the model's costs by the mean of `objective` at the final time.
fn with_objective(model: &JumpDiffusionModel, objective: &str) -> Result<JumpDiffusionModel, Failure> {
    if objective == "cost" {
        return Ok(model.clone());
    }
    let p = model.poly(objective).map_err(|e| usage(format!("--objective: {e}")))?;
    let mut m = model.clone();
    m.running_cost = polyjump_core::Polynomial::zero(model.context());
    m.terminal_cost = p;
    m.sense = Sense::Minimize;
    Ok(m)
}

fn build_aux(model: &JumpDiffusionModel, order: Option<u32>) -> Result<AuxiliaryLinearSystem, Failure> {
    AuxiliaryLinearSystem::build(model, &Relaxation::from_model(model, order)).map_err(|e| fail(EXIT_DATA, e.to_string()))
}

fn options(relax: &RelaxArgs) -> SolverOptions {
    SolverOptions { tolerance: relax.tolerance, ..SolverOptions::default() }
}

fn solve_checked(aux: &AuxiliaryLinearSystem, horizon: Horizon, steps: usize, sense: Sense, opts: &SolverOptions, what: &str) -> Result<SdpSolution, Failure> {
    let p = assemble(aux, horizon, steps, sense).map_err(|e| usage(e.to_string()))?;
    let sol = solve(&p, opts);
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        s => {
            let mut f = solver_failure(s, what);
            f.message += &format!(
                " after {} iterations (primal residual {:.1e}, dual residual {:.1e}, gap {:.1e})",
                sol.iterations, sol.primal_residual, sol.dual_residual, sol.gap
            );
            Err(f)
        }
    }
}

fn cmd_bound(a: &BoundArgs) -> Result<(), Failure> {
    let base = load(&a.model)?;
    let model = with_objective(&base, &a.objective)?;
    if a.sense == SenseArg::Both && model.n_input() > 0 {
        return Err(usage("--sense both needs a model without inputs; use --sense min for a cost lower bound"));
    }
    let aux = build_aux(&model, a.relax.order)?;
    let opts = options(&a.relax);
    let n = steps(&model, &a.relax);
    let senses: Vec<Sense> = match a.sense {
        SenseArg::Min => vec![Sense::Minimize],
        SenseArg::Max => vec![Sense::Maximize],
        SenseArg::Both => vec![Sense::Minimize, Sense::Maximize],
    };
    // (label, horizon, steps)
    let points: Vec<(String, Horizon, usize)> = match model.horizon {
        Horizon::SteadyState => vec![("steady-state".into(), Horizon::SteadyState, 1)],
        Horizon::Finite(t) => {
            let p = (a.points as usize).min(n);
            (1..=p)
                .map(|k| {
                    let nk = ((n * k) as f64 / p as f64).round() as usize;
                    (num(t * nk as f64 / n as f64), Horizon::Finite(t * nk as f64 / n as f64), nk)
                })
                .collect()
        }
    };
    let jobs: Vec<(usize, Sense)> = (0..points.len()).flat_map(|i| senses.iter().map(move |&s| (i, s))).collect();
    let results: Vec<Result<f64, Failure>> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let what = if s == Sense::Minimize { "lower bound" } else { "upper bound" };
            solve_checked(&aux, points[i].1, points[i].2, s, &opts, what).map(|sol| sol.objective)
        })
        .collect();
    let mut rows = Vec::new();
    let (mut lo, mut hi) = (None, None);
    for (i, (label, _, _)) in points.iter().enumerate() {
        (lo, hi) = (None, None);
        for (&(j, s), r) in jobs.iter().zip(&results) {
            if j != i {
                continue;
            }
            let v = match r {
                Ok(v) => *v,
                Err(f) => return Err(fail(f.code, format!("t = {label}: {}", f.message))),
            };
            match s {
                Sense::Minimize => lo = Some(v),
                Sense::Maximize => hi = Some(v),
            }
        }
        rows.push(vec![label.clone(), opt(lo), opt(hi)]);
    }
    let path = a.model.out.join("bounds.csv");
    write_csv(&path, &["t", "lower", "upper"], &rows).map_err(|e| io_fail(&path, e))?;
    println!("[{}, {}]", opt(lo), opt(hi));
    Ok(())
}

/// Clip bounds from the model's `[controller]` section, else from
/// constraints of the form `u ≥ lo` / `u ≤ hi` on a single input.
pub fn clip_bounds(model: &JumpDiffusionModel) -> Vec<(f64, f64)> {
    if !model.settings.clip.is_empty() {
        return model.settings.clip.clone();
    }
    let ctx = model.context();
    let mut out = vec![(f64::NEG_INFINITY, f64::INFINITY); model.n_input()];
    for b in &model.constraints {
        for (j, r) in model.input_range().enumerate() {
            let unit = MultiIndex::unit(ctx.len(), r);
            let c = b.coefficient(&unit);
            let affine_in_u = b.terms().all(|(m, _)| m.is_constant() || *m == unit);
            if c == 0.0 || !affine_in_u {
                continue;
            }
            let edge = -b.coefficient(&MultiIndex::zero(ctx.len())) / c + 0.0;
            if c > 0.0 {
                out[j].0 = out[j].0.max(edge);
            } else {
                out[j].1 = out[j].1.min(edge);
            }
        }
    }
    if out.iter().all(|&(lo, hi)| lo == f64::NEG_INFINITY && hi == f64::INFINITY) {
        Vec::new()
    } else {
        out
    }
}

/// Controller monomials: explicit degree, the model's `[controller]`
/// section, or the largest degree whose fit moments the basis houses.
pub fn controller_monomials(model: &JumpDiffusionModel, aux: &AuxiliaryLinearSystem, degree: Option<u32>) -> Vec<MultiIndex> {
    if let Some(k) = degree {
        return state_monomials(model, k);
    }
    if let Some(m) = &model.settings.controller_monomials {
        return m.clone();
    }
    let housed = |k: u32| {
        let xs = state_monomials(model, 2 * k);
        let us: Vec<MultiIndex> = state_monomials(model, k)
            .iter()
            .flat_map(|m| model.input_range().map(move |r| m.mul(&MultiIndex::unit(m.arity(), r))))
            .collect();
        xs.iter().chain(&us).all(|m| aux.basis.contains(m))
    };
    let mut k = 0;
    while k < 12 && housed(k + 1) {
        k += 1;
    }
    state_monomials(model, k)
}

fn parse_orders(text: &str) -> Result<Vec<u32>, Failure> {
    let bad = || usage(format!("--orders: cannot read `{text}`"));
    let v: Vec<u32> = if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..=b).collect()
    } else {
        text.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if v.is_empty() || v.contains(&0) {
        return Err(usage("--orders must list orders ≥ 1"));
    }
    Ok(v)
}

/// Result of one `control` run at a fixed order.
#[derive(Debug, Clone)]
pub struct ControlOutcome {
    pub order: u32,
    pub controller: PolynomialController,
    pub sdp_bound: f64,
    pub mc: polyjump_core::MomentEstimate,
}

fn control_once(model: &JumpDiffusionModel, a: &ControlArgs, order: Option<u32>) -> Result<ControlOutcome, Failure> {
    let aux = build_aux(model, order)?;
    let n = steps(model, &a.relax);
    let sol = solve_checked(&aux, model.horizon, n, model.sense, &options(&a.relax), "cost bound")?;
    let monomials = controller_monomials(model, &aux, a.controller_degree);
    let matching = model.settings.matching_monomials.as_deref();
    let c = extract_controller(model, &aux, &sol, model.horizon, &monomials, matching).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    let c = c.clip(&clip_bounds(model)).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    let t_sim = match model.horizon {
        Horizon::Finite(t) => t,
        Horizon::SteadyState => a.sim_t,
    };
    let ens = crate::parallel::simulate_paths(model, Some(&c), a.mc.dt, t_sim, a.mc.paths as usize, a.mc.seed)
        .map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    warn_ensemble(&ens);
    Ok(ControlOutcome { order: order.unwrap_or_else(|| Relaxation::from_model(model, None).order), controller: c, sdp_bound: sol.objective, mc: estimate_cost(&ens, model) })
}

fn warn_ensemble(ens: &polyjump_core::TrajectoryEnsemble) {
    if ens.max_jump_probability > JUMP_PROBABILITY_WARNING {
        eprintln!(
            "warning: per-step jump probability reached {:.3} (> {JUMP_PROBABILITY_WARNING}); consider a smaller --dt",
            ens.max_jump_probability
        );
    }
    if ens.reflections > 0 {
        eprintln!("note: {} negative Euler excursions were reflected to 0", ens.reflections);
    }
    if ens.input_cutbacks > 0 {
        eprintln!("note: {} steps cut their inputs back to keep a nonnegative state nonnegative", ens.input_cutbacks);
    }
}

fn cmd_control(a: &ControlArgs) -> Result<(), Failure> {
    let model = load(&a.model)?;
    if model.n_input() == 0 {
        return Err(usage("control needs a model with inputs"));
    }
    let orders: Vec<Option<u32>> = match &a.orders {
        Some(t) => parse_orders(t)?.into_iter().map(Some).collect(),
        None => vec![a.relax.order],
    };
    let mut rows = Vec::new();
    for &order in &orders {
        let r = control_once(&model, a, order)?;
        let gap = match model.sense {
            Sense::Minimize => r.mc.value - r.sdp_bound,
            Sense::Maximize => r.sdp_bound - r.mc.value,
        };
        let name = if orders.len() == 1 { "controller.txt".to_string() } else { format!("controller_d{}.txt", r.order) };
        let path = a.model.out.join(&name);
        save_controller(&r.controller, model.state_vars(), model.input_vars(), &path).map_err(|e| io_fail(&path, e))?;
        let degree = r.controller.monomials().iter().map(MultiIndex::degree).max().unwrap_or(0);
        let (sdp_word, mc_word) = match model.sense {
            Sense::Minimize => ("lower", "upper"),
            Sense::Maximize => ("upper", "lower"),
        };
        println!(
            "order {}: SDP {sdp_word} bound {}, simulated {mc_word} bound {} ± {} (SE), gap {}",
            r.order, r.sdp_bound, r.mc.value, r.mc.standard_error, gap
        );
        rows.push(vec![r.order.to_string(), degree.to_string(), num(r.sdp_bound), num(r.mc.value), num(r.mc.standard_error), num(gap)]);
    }
    let path = a.model.out.join("costs.csv");
    write_csv(&path, &["order", "controller_degree", "sdp_bound", "mc_estimate", "mc_se", "gap"], &rows).map_err(|e| io_fail(&path, e))?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let model = load(&a.model)?;
    let t_end = match model.horizon {
        Horizon::Finite(t) => t,
        Horizon::SteadyState => return Err(usage("simulate needs a finite horizon; pass --T")),
    };
    let controller = match &a.controller {
        Some(path) => {
            let (c, states, inputs) = load_controller(path).map_err(|e| fail(EXIT_DATA, e.to_string()))?;
            if states != model.state_vars() || inputs != model.input_vars() {
                return Err(fail(EXIT_DATA, "controller variables do not match the model"));
            }
            Some(c)
        }
        None if model.n_input() > 0 => return Err(usage("the model has inputs; pass --controller")),
        None => None,
    };
    let ctx = model.context();
    let monomials: Vec<MultiIndex> = match &a.moments {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|t| parse_monomial(t, ctx).map_err(|e| usage(format!("--moments: {e}"))))
            .collect::<Result<_, _>>()?,
        None => state_monomials(&model, 2).into_iter().filter(|m| m.degree() > 0).collect(),
    };
    let ens = crate::parallel::simulate_paths(&model, controller.as_ref(), a.mc.dt, t_end, a.mc.paths as usize, a.mc.seed)
        .map_err(|e| fail(EXIT_DATA, e.to_string()))?;
    warn_ensemble(&ens);
    let rows = moment_rows(&ens, ctx, &monomials, a.every as usize).map_err(|e| usage(e.to_string()))?;
    let path = a.model.out.join("moments.csv");
    write_csv(&path, &["t", "moment", "estimate", "se"], &rows).map_err(|e| io_fail(&path, e))?;
    let cost = estimate_cost(&ens, &model);
    println!("cost {} ± {} (SE, {} paths)", cost.value, cost.standard_error, cost.n_samples);
    Ok(())
}

fn cmd_export(a: &ExportArgs) -> Result<(), Failure> {
    let base = load(&a.model)?;
    let model = with_objective(&base, &a.objective)?;
    let sense = match a.sense {
        None => model.sense,
        Some(SenseArg::Min) => Sense::Minimize,
        Some(SenseArg::Max) => Sense::Maximize,
        Some(SenseArg::Both) => return Err(usage("export-sdp writes one problem; choose --sense min or max")),
    };
    let aux = build_aux(&model, a.relax.order)?;
    let p = assemble(&aux, model.horizon, steps(&model, &a.relax), sense).map_err(|e| usage(e.to_string()))?;
    let path = a.model.out.join(&a.file);
    std::fs::write(&path, to_sdpa(&p)).map_err(|e| io_fail(&path, e))?;
    println!("{}: {} variables, {} PSD blocks", path.display(), p.n_vars, p.psd.len());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Bound(a) => cmd_bound(a),
        Command::Control(a) => cmd_control(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::ExportSdp(a) => cmd_export(a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // a pool may already exist when called repeatedly in one process
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return EXIT_USAGE;
            }
        }
    }
    match run(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn main() -> i32 {
    main_with(std::env::args_os())
}

//! Moment relaxations for polynomial jump diffusions.
//!
//! The moments of a process driven by polynomial drift, diffusion, jump maps and
//! jump intensities obey a linear ODE whose right-hand side pulls in moments that
//! are not part of any finite state. This crate treats those excess moments as
//! inputs of an auxiliary linear system, which turns moment bounding and
//! stochastic optimal control into semidefinite programs:
//!
//! - [`poly`]: sparse multivariate polynomials over named variables and a parser
//!   for the expression grammar used by model files.
//! - [`model`]: the in-memory (controlled) jump-diffusion model and its validation.
//! - [`generator`]: the generator `L` applied to polynomial test functions.
//! - [`moments`]: moment bases and the auxiliary linear system with its moment,
//!   localizing and odd-power constraint maps.
//! - [`sdp`]: steady-state and Euler-discretized finite-horizon SDPs plus an
//!   embedded primal-dual interior-point conic solver.
//! - [`controller`]: least-squares extraction of polynomial feedback laws.
//! - [`simulate`]: Euler–Maruyama Monte Carlo with thinned jumps, empirical
//!   estimators and an exact stationary oracle for finite birth–death chains.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to link
//! against the standard library.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod controller;
pub mod generator;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod poly;
pub mod sdp;
pub mod simulate;

pub use controller::{ControllerError, PolynomialController};
pub use generator::Generator;
pub use model::{Horizon, InitialDistribution, Jump, JumpDiffusionModel, Sense};
pub use moments::{AffineMatrixMap, AuxiliaryLinearSystem, MomentBasis, MomentError};
pub use poly::{Context, MultiIndex, PolyError, Polynomial};
pub use sdp::{SdpBackend, SdpProblem, SdpSolution, SolveStatus, SolverOptions};
pub use simulate::{MomentEstimate, TrajectoryEnsemble};

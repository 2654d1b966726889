//! Steady-state analysis and output-rate optimization for a storage process
//! fed by a nondecreasing Lévy input, with output shut off until a stopping
//! time and then run at a rate chosen from the accumulated workload until
//! the store empties.
//!
//! The analytic modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin them to `f64`, which the simulator and the CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost_model;
pub mod error;
pub mod levy_core;
pub mod partial_info;
pub mod policy;
pub mod quad;
pub mod ratesearch;
pub mod scalar;
pub mod sim;
pub mod steady_state;
pub mod waterfill;
pub mod workload;

pub use cost_model::{
    constants_from_primitives, objective_in_x, steady_cost, CostParams, ProblemConstants,
};
pub use error::{Error, Result};
pub use levy_core::{CompoundPoisson, JumpDist, LevyExponent};
pub use partial_info::{reduce, solve_partial, PartialInfoModel, PartialSolution, ReducedProblem};
pub use policy::RatePolicy;
pub use ratesearch::{
    lambda_star, minimize_g_discrete, solve, solve_constants, Backend, GCurve, SearchResult, Solution,
};
pub use scalar::Scalar;
pub use steady_state::{
    wtilde_lst, ytilde_lst, ytilde_mean, OffPeriodSpec, TauRule, TiltedSampler,
};
pub use waterfill::{f_of_alpha, optimal_rate, solve_lambda_alpha, xi, Phase1Solution};
pub use workload::WorkloadDist;

pub type Exponent = LevyExponent<f64>;
pub type Jumps = JumpDist<f64>;
pub type Workload = WorkloadDist<f64>;
pub type Policy = RatePolicy<f64>;
pub type Costs = CostParams<f64>;
pub type Constants = ProblemConstants<f64>;
pub type OffPeriod = OffPeriodSpec<f64>;
pub type Curve = GCurve<f64>;

pub type Exponent32 = LevyExponent<f32>;
pub type Workload32 = WorkloadDist<f32>;
pub type Curve32 = GCurve<f32>;

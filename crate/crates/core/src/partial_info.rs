//! Rate choice when only the customer count `N` is observed.
//!
//! With `V = V_1 + ... + V_N`, i.i.d. `V_k` of mean `delta` and variance
//! `sigma2` independent of `(N, R)`, the cost depends on the law of `N`
//! only through `E[N/(R-rho)]`, `E[N^2/(R-rho)]` and `E[N/(R-rho)^2]`. It
//! equals the full-information cost for `V' = delta N` with the
//! `E[V'/(R-rho)]` coefficient raised from `d rho` to
//! `d rho + h sigma2 / (2 delta)`, so the reduced problem is an atomic
//! instance on `delta * {1, 2, ...}`.

use crate::cost_model::{constants_from_inputs, objective_in_x, ConstantInputs, CostParams, ProblemConstants};
use crate::error::{Error, Result};
use crate::levy_core::{check_atoms, LevyExponent};
use crate::policy::inv_headroom;
use crate::ratesearch::{minimize_g_discrete, DiscreteSolution};
use crate::scalar::Scalar;
use crate::steady_state::OffPeriodSpec;
use crate::waterfill::optimal_rate;
use crate::workload::WorkloadDist;

#[derive(Debug, Clone, PartialEq)]
pub struct PartialInfoModel<T> {
    /// `(n, P(N = n))` with `n >= 1`; finite support.
    pub n_dist: Vec<(u32, T)>,
    /// Mean work per customer.
    pub delta: T,
    /// Variance of the work per customer.
    pub sigma2: T,
    pub exp: LevyExponent<T>,
    pub off: OffPeriodSpec<T>,
    pub costs: CostParams<T>,
}

impl<T: Scalar> PartialInfoModel<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero()) || !self.delta.is_finite() {
            return Err(Error::invalid(format!("mean work per customer {} must be > 0", self.delta)));
        }
        if !(self.sigma2 >= T::zero()) || !self.sigma2.is_finite() {
            return Err(Error::invalid(format!("work variance {} must be >= 0", self.sigma2)));
        }
        if self.n_dist.iter().any(|a| a.0 == 0) {
            return Err(Error::invalid("customer counts must be >= 1"));
        }
        let as_real: Vec<(T, T)> = self.n_dist.iter().map(|&(n, p)| (T::from_count(n as usize), p)).collect();
        check_atoms(&as_real, "customer-count law")?;
        self.costs.check_rates(self.exp.rho())
    }

    fn mean_n(&self) -> T {
        self.n_dist.iter().fold(T::zero(), |acc, &(n, p)| acc + p * T::from_count(n as usize))
    }

    /// Long-run average cost of a count-based rule `n -> R(n)`, evaluated
    /// from the count moments directly.
    pub fn direct_cost<F: Fn(u32) -> T>(&self, rate: F) -> Result<T> {
        self.validate()?;
        let rho = self.exp.rho();
        let mu = self.exp.mu();
        let (h, d) = (self.costs.h, self.costs.d);
        let (mut e_ng, mut e_n2g, mut e_ng2) = (T::zero(), T::zero(), T::zero());
        for &(n, p) in &self.n_dist {
            let rn = rate(n);
            if !(rn > rho) {
                return Err(Error::UnstablePolicy(format!("rate {rn} for n = {n} does not exceed rho = {rho}")));
            }
            let g = if rn.is_infinite() { T::zero() } else { (rn - rho).recip() };
            let nn = T::from_count(n as usize);
            e_ng = e_ng + p * nn * g;
            e_n2g = e_n2g + p * nn * nn * g;
            e_ng2 = e_ng2 + p * nn * g * g;
        }
        let half = T::lit(0.5);
        let num = h * self.off.off_mean_workload_product
            + self.costs.k
            + d * self.delta * self.mean_n()
            + (d * rho * self.delta + h * self.sigma2 * half) * e_ng
            + h * (self.delta * self.delta * half * e_n2g + mu * rho * self.delta * e_ng2);
        let den = self.off.mean_tau + self.delta * e_ng;
        Ok(num / den)
    }
}

/// Equivalent atomic instance of the reduced problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedProblem<T> {
    pub constants: ProblemConstants<T>,
    /// `(delta n, P(N = n))`.
    pub atoms: Vec<(T, T)>,
}

impl<T: Scalar> ReducedProblem<T> {
    pub fn workload(&self) -> WorkloadDist<T> {
        WorkloadDist::DiscreteAtoms(self.atoms.clone())
    }

    /// Reduced objective of a count-based rule, through
    /// `X = delta N (1/(R - rho) - 1/(r - rho))`.
    pub fn objective<F: Fn(u32) -> T>(&self, delta: T, rate: F) -> T {
        let c = &self.constants;
        let q = inv_headroom(c.r, c.rho);
        let x = |v: T| {
            let n = (v / delta).round().to_u32().expect("count");
            let rn = rate(n);
            let g = if rn.is_infinite() { T::zero() } else { (rn - c.rho).recip() };
            v * (g - q)
        };
        objective_in_x(c, &self.workload(), x, &[])
    }
}

pub fn reduce<T: Scalar>(model: &PartialInfoModel<T>) -> Result<ReducedProblem<T>> {
    model.validate()?;
    let rho = model.exp.rho();
    let delta = model.delta;
    let atoms: Vec<(T, T)> = model
        .n_dist
        .iter()
        .map(|&(n, p)| (delta * T::from_count(n as usize), p))
        .collect();
    let v = WorkloadDist::DiscreteAtoms(atoms.clone());
    let inputs = ConstantInputs {
        ev: v.mean(),
        ev2: v.second_moment(),
        mu: model.exp.mu(),
        rho,
        mean_tau: model.off.mean_tau,
        off_product: model.off.off_mean_workload_product,
    };
    let mut constants = constants_from_inputs(&inputs, &model.costs)?;
    let q = inv_headroom(model.costs.r, rho);
    let extra = model.costs.h * model.sigma2 / (T::lit(2.0) * delta);
    constants.k2 = constants.k2 + extra;
    constants.k1 = constants.k1 + extra * q * inputs.ev;
    Ok(ReducedProblem { constants, atoms })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialSolution<T> {
    pub reduced: ReducedProblem<T>,
    pub discrete: DiscreteSolution<T>,
    pub lambda: T,
    /// Optimal long-run average cost.
    pub cost: T,
    /// `(n, R(n))`, nondecreasing in `n`.
    pub rates: Vec<(u32, T)>,
}

/// Reduces, minimizes the piecewise-rational curve exactly, and maps the
/// multiplier back to a rule `R(n)` at `v = delta n`.
pub fn solve_partial<T: Scalar>(model: &PartialInfoModel<T>) -> Result<PartialSolution<T>> {
    let reduced = reduce(model)?;
    let discrete = minimize_g_discrete(&reduced.constants, &reduced.atoms)?;
    let lambda = discrete.result.lambda_min;
    let c = &reduced.constants;
    let mut counts: Vec<u32> = model.n_dist.iter().map(|a| a.0).collect();
    counts.sort_unstable();
    counts.dedup();
    let rates = counts
        .into_iter()
        .map(|n| {
            let v = model.delta * T::from_count(n as usize);
            (n, optimal_rate(v, lambda, c.mu_rho(), c.rho, c.r))
        })
        .collect();
    Ok(PartialSolution { cost: discrete.result.g_min, reduced, discrete, lambda, rates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_core::JumpDist;

    fn model(n_dist: Vec<(u32, f64)>, delta: f64, sigma2: f64) -> PartialInfoModel<f64> {
        PartialInfoModel {
            n_dist,
            delta,
            sigma2,
            exp: LevyExponent::compound_poisson(1.0, JumpDist::Exponential { rate: 1.0 }).unwrap(),
            off: OffPeriodSpec::first_jump(1.0).unwrap(),
            costs: CostParams::new(1.0, 1.0, 1.0, Some(2.0), None).unwrap(),
        }
    }

    #[test]
    fn single_customer_without_noise_is_full_information() {
        let m = model(vec![(1, 1.0)], 1.3, 0.0);
        let red = reduce(&m).unwrap();
        let full = crate::cost_model::constants_from_primitives(
            &m.exp,
            &WorkloadDist::DiscreteAtoms(vec![(1.3, 1.0)]),
            &m.off,
            &m.costs,
        )
        .unwrap();
        assert_eq!(red.constants, full);
    }

    #[test]
    fn two_count_example_matches_direct_form() {
        let m = model(vec![(1, 0.5), (2, 0.5)], 1.0, 1.0);
        let red = reduce(&m).unwrap();
        for rule in [Box::new(|_: u32| 2.0) as Box<dyn Fn(u32) -> f64>, Box::new(|n: u32| 1.0 + 1.0 / n as f64)] {
            let direct = m.direct_cost(&rule).unwrap();
            let reduced = red.objective(m.delta, &rule);
            assert!((direct - reduced).abs() / direct < 1e-9, "{direct} vs {reduced}");
        }
    }

    #[test]
    fn noise_raises_linear_coefficient() {
        let a = reduce(&model(vec![(1, 0.5), (3, 0.5)], 0.7, 0.0)).unwrap();
        let b = reduce(&model(vec![(1, 0.5), (3, 0.5)], 0.7, 0.4)).unwrap();
        assert!(b.constants.k2 > a.constants.k2);
        assert_eq!(b.constants.k3, a.constants.k3);
    }

    #[test]
    fn zero_delta_rejected() {
        assert!(reduce(&model(vec![(1, 1.0)], 0.0, 0.0)).is_err());
        assert!(reduce(&model(vec![(0, 1.0)], 1.0, 0.0)).is_err());
    }

    #[test]
    fn rates_nondecreasing() {
        let m = model(vec![(1, 0.2), (2, 0.3), (4, 0.3), (7, 0.2)], 0.5, 0.3);
        let mut m = m;
        m.costs = CostParams::new(1.0, 60.0, 0.5, Some(2.0), None).unwrap();
        let sol = solve_partial(&m).unwrap();
        assert!(sol.lambda > 0.0);
        for w in sol.rates.windows(2) {
            assert!(w[1].1 >= w[0].1);
        }
        let direct = m.direct_cost(|n| sol.rates.iter().find(|r| r.0 == n).unwrap().1).unwrap();
        assert!((direct - sol.cost).abs() / direct < 1e-9);
    }
}

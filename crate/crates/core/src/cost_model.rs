//! Long-run average cost of a rate policy and the constants of the reduced
//! fractional problem in `X = V (1/(R - rho) - 1/(r - rho))`.

use crate::error::{Error, Result};
use crate::levy_core::LevyExponent;
use crate::policy::{inv_headroom, RatePolicy};
use crate::scalar::Scalar;
use crate::steady_state::{policy_moments, OffPeriodSpec};
use crate::workload::WorkloadDist;

/// Economic primitives. `r = None` is an unbounded maximal rate, allowed
/// only with `d = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams<T> {
    /// Holding cost per unit of workload per unit time.
    pub h: T,
    /// Setup cost per busy period.
    pub k: T,
    /// Output capacity cost rate.
    pub d: T,
    /// Maximal output rate.
    pub r: Option<T>,
    /// Minimal output rate.
    pub r_min: Option<T>,
}

impl<T: Scalar> CostParams<T> {
    pub fn new(h: T, k: T, d: T, r: Option<T>, r_min: Option<T>) -> Result<Self> {
        if !(h > T::zero()) || !(k > T::zero()) || !(d >= T::zero()) {
            return Err(Error::invalid(format!("costs need h > 0, K > 0, d >= 0; got h={h} K={k} d={d}")));
        }
        if r.is_none() && d > T::zero() {
            return Err(Error::invalid("an unbounded maximal rate requires d = 0"));
        }
        Ok(Self { h, k, d, r, r_min })
    }

    /// Checks the rate limits against the input rate.
    pub fn check_rates(&self, rho: T) -> Result<()> {
        if let Some(r) = self.r {
            if !(r > rho) {
                return Err(Error::invalid(format!("maximal rate r = {r} must exceed rho = {rho}")));
            }
        }
        if let Some(rm) = self.r_min {
            if !(rm > rho) || self.r.is_some_and(|r| rm > r) {
                return Err(Error::invalid(format!("r_min = {rm} must lie in (rho, r]")));
            }
        }
        Ok(())
    }

    /// `r0 = 1/(r_min - rho) - 1/(r - rho)`, the cap on `X / V`.
    pub fn r0(&self, rho: T) -> Option<T> {
        self.r_min.map(|rm| (rm - rho).recip() - inv_headroom(self.r, rho))
    }
}

/// Coefficients of the reduced problem
/// `min (K1 + K2 E X + h E[V X/2 + mu rho X^2 / V]) / (K3 + E X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants<T> {
    pub k1: T,
    pub k2: T,
    pub k3: T,
    pub mu: T,
    pub rho: T,
    pub h: T,
    pub r: Option<T>,
}

impl<T: Scalar> ProblemConstants<T> {
    /// Constants taken as given rather than derived from primitives.
    pub fn direct(k1: T, k2: T, k3: T, mu: T, rho: T, h: T, r: Option<T>) -> Result<Self> {
        let c = Self { k1, k2, k3, mu, rho, h, r };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.k1 > T::zero()
            && self.k2 >= T::zero()
            && self.k3 > T::zero()
            && self.mu > T::zero()
            && self.rho > T::zero()
            && self.h > T::zero()
            && [self.k1, self.k2, self.k3, self.mu, self.rho, self.h].iter().all(|x| x.is_finite());
        if !ok {
            return Err(Error::invalid(format!("reduced-problem constants out of range: {self:?}")));
        }
        Ok(())
    }

    pub fn mu_rho(&self) -> T {
        self.mu * self.rho
    }
}

/// Moment inputs of the constant formulas; used directly when `rho` or
/// `mu` are supplied externally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantInputs<T> {
    pub ev: T,
    pub ev2: T,
    pub mu: T,
    pub rho: T,
    pub mean_tau: T,
    /// `E tau * E Z~`.
    pub off_product: T,
}

pub fn constants_from_inputs<T: Scalar>(inp: &ConstantInputs<T>, costs: &CostParams<T>) -> Result<ProblemConstants<T>> {
    costs.check_rates(inp.rho)?;
    let q = inv_headroom(costs.r, inp.rho);
    let (h, d) = (costs.h, costs.d);
    let mu_rho = inp.mu * inp.rho;
    let two = T::lit(2.0);
    let k1 = h * inp.off_product
        + costs.k
        + (d + d * inp.rho * q + h * mu_rho * q * q) * inp.ev
        + h * q / two * inp.ev2;
    let k2 = d * inp.rho + two * h * mu_rho * q;
    let k3 = inp.mean_tau + inp.ev * q;
    let c = ProblemConstants { k1, k2, k3, mu: inp.mu, rho: inp.rho, h, r: costs.r };
    c.validate()?;
    Ok(c)
}

pub fn constants_from_primitives<T: Scalar>(
    exp: &LevyExponent<T>,
    vdist: &WorkloadDist<T>,
    off: &OffPeriodSpec<T>,
    costs: &CostParams<T>,
) -> Result<ProblemConstants<T>> {
    vdist.validate()?;
    let inputs = ConstantInputs {
        ev: vdist.mean(),
        ev2: vdist.second_moment(),
        mu: exp.mu(),
        rho: exp.rho(),
        mean_tau: off.mean_tau,
        off_product: off.off_mean_workload_product,
    };
    constants_from_inputs(&inputs, costs)
}

/// Long-run average cost per unit time,
/// `[h E tau E Z + K + d E V + d rho E(V/(R-rho)) + h E(V^2/(2(R-rho)) + mu rho V/(R-rho)^2)]
///  / [E tau + E(V/(R-rho))]`.
pub fn steady_cost<T: Scalar>(
    exp: &LevyExponent<T>,
    vdist: &WorkloadDist<T>,
    policy: &RatePolicy<T>,
    off: &OffPeriodSpec<T>,
    costs: &CostParams<T>,
) -> Result<T> {
    let rho = exp.rho();
    costs.check_rates(rho)?;
    policy.validate(vdist, rho, costs.r)?;
    let m = policy_moments(vdist, policy, rho)?;
    Ok(cost_from_moments(&m_inputs(exp, vdist, off), &m, costs))
}

fn m_inputs<T: Scalar>(exp: &LevyExponent<T>, vdist: &WorkloadDist<T>, off: &OffPeriodSpec<T>) -> ConstantInputs<T> {
    ConstantInputs {
        ev: vdist.mean(),
        ev2: vdist.second_moment(),
        mu: exp.mu(),
        rho: exp.rho(),
        mean_tau: off.mean_tau,
        off_product: off.off_mean_workload_product,
    }
}

pub(crate) fn cost_from_moments<T: Scalar>(
    inp: &ConstantInputs<T>,
    m: &crate::steady_state::PolicyMoments<T>,
    costs: &CostParams<T>,
) -> T {
    let (h, d) = (costs.h, costs.d);
    let num = h * inp.off_product
        + costs.k
        + d * inp.ev
        + d * inp.rho * m.vg
        + h * (m.v2g * T::lit(0.5) + inp.mu * inp.rho * m.vg2);
    num / (inp.mean_tau + m.vg)
}

/// The reduced fractional objective at `X = x(V)`. `breaks` lists kinks of
/// `x` for quadrature.
pub fn objective_in_x<T: Scalar, F: Fn(T) -> T>(
    constants: &ProblemConstants<T>,
    vdist: &WorkloadDist<T>,
    x: F,
    breaks: &[T],
) -> T {
    let mu_rho = constants.mu_rho();
    let ex = vdist.expect(&x, breaks);
    let quad = vdist.expect(
        |v| {
            let xv = x(v);
            v * xv * T::lit(0.5) + mu_rho * xv * xv / v
        },
        breaks,
    );
    (constants.k1 + constants.k2 * ex + constants.h * quad) / (constants.k3 + ex)
}

/// `x(v) = v (1/(R(v) - rho) - 1/(r - rho))` for a rate policy.
pub fn x_of_policy<T: Scalar>(policy: &RatePolicy<T>, rho: T, r: Option<T>) -> impl Fn(T) -> T + '_ {
    let q = inv_headroom(r, rho);
    move |v| v * (policy.inv_gap(v, rho) - q)
}

/// Maps an allocation back to a rate: `R = rho + 1/(x/v + 1/(r - rho))`.
pub fn rate_of_x<T: Scalar>(x: T, v: T, rho: T, r: Option<T>) -> T {
    let g = x / v + inv_headroom(r, rho);
    if g == T::zero() {
        T::infinity()
    } else {
        rho + g.recip()
    }
}

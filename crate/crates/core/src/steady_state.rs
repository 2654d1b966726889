//! Steady-state law of the workload during on periods and over the whole
//! cycle.
//!
//! Everything is expressed through three policy moments,
//! `E[V g]`, `E[V^2 g]` and `E[V g^2]` with `g = 1/(R - rho)`; the busy
//! period has mean length `E[V g]`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::levy_core::{open_unit, pick_weighted, LevyExponent};
use crate::policy::RatePolicy;
use crate::scalar::Scalar;
use crate::workload::WorkloadDist;

/// How the off period ends, for simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauRule<T> {
    /// Off period ends at the first jump of the input.
    FirstJump,
    /// Off period lasts a fixed time (extended to the next jump if no work
    /// has arrived).
    FixedTime(T),
    /// Off period lasts an independent exponential time with this rate
    /// (extended to the next jump if no work has arrived).
    ExpTimer(T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffPeriodSpec<T> {
    /// `E tau`.
    pub mean_tau: T,
    /// `E tau * E Z~`, the time-integrated off-period workload per cycle.
    /// Supplied externally; zero when the workload is empty while off.
    pub off_mean_workload_product: T,
    pub tau_rule: TauRule<T>,
}

impl<T: Scalar> OffPeriodSpec<T> {
    pub fn new(mean_tau: T, off_mean_workload_product: T, tau_rule: TauRule<T>) -> Result<Self> {
        if !(mean_tau > T::zero()) || !mean_tau.is_finite() {
            return Err(Error::invalid(format!("mean off time {mean_tau} must be > 0")));
        }
        if !(off_mean_workload_product >= T::zero()) {
            return Err(Error::invalid("off-period workload product must be >= 0"));
        }
        Ok(Self { mean_tau, off_mean_workload_product, tau_rule })
    }

    /// Off period ending at the first jump of a compound Poisson input with
    /// no drift: `E tau = 1/rate` and the off-period workload is zero.
    pub fn first_jump(poisson_rate: T) -> Result<Self> {
        Self::new(poisson_rate.recip(), T::zero(), TauRule::FirstJump)
    }
}

/// `E[V g]`, `E[V^2 g]`, `E[V g^2]` with `g(v) = 1/(R(v) - rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyMoments<T> {
    pub vg: T,
    pub v2g: T,
    pub vg2: T,
}

pub fn policy_moments<T: Scalar>(
    vdist: &WorkloadDist<T>,
    policy: &RatePolicy<T>,
    rho: T,
) -> Result<PolicyMoments<T>> {
    let m = match (policy, vdist.atoms()) {
        (_, Some(atoms)) => {
            let mut m = PolicyMoments { vg: T::zero(), v2g: T::zero(), vg2: T::zero() };
            for (v, p) in atoms {
                let g = policy.inv_gap(v, rho);
                m.vg = m.vg + p * v * g;
                m.v2g = m.v2g + p * v * v * g;
                m.vg2 = m.vg2 + p * v * g * g;
            }
            m
        }
        (RatePolicy::Constant { rate }, None) => {
            let g = (*rate - rho).recip();
            let ev = vdist.mean();
            PolicyMoments { vg: g * ev, v2g: g * vdist.second_moment(), vg2: g * g * ev }
        }
        (RatePolicy::AffineInV { slope }, None) => PolicyMoments {
            vg: slope.recip(),
            v2g: vdist.mean() / *slope,
            vg2: vdist.inv_mean()? / (*slope * *slope),
        },
        (RatePolicy::WaterFill { .. }, None) => {
            let br = policy.breakpoints(rho);
            let g = |v: T| policy.inv_gap(v, rho);
            PolicyMoments {
                vg: vdist.expect(|v| v * g(v), &br),
                v2g: vdist.expect(|v| v * v * g(v), &br),
                vg2: vdist.expect(|v| v * g(v) * g(v), &br),
            }
        }
    };
    if !(m.vg > T::zero()) {
        return Err(Error::Divergent("E[V/(R - rho)] vanishes: the on period is empty".into()));
    }
    if !m.vg.is_finite() || !m.v2g.is_finite() || !m.vg2.is_finite() {
        return Err(Error::Divergent("policy moments are not finite".into()));
    }
    Ok(m)
}

/// Transform `E exp(-alpha Y~)` of the on-period steady-state workload:
/// `E[(1 - e^{-alpha V}) / (alpha R - eta(alpha))] / E[V/(R - rho)]`.
pub fn ytilde_lst<T: Scalar>(
    exp: &LevyExponent<T>,
    vdist: &WorkloadDist<T>,
    policy: &RatePolicy<T>,
    alpha: T,
) -> Result<T> {
    if alpha < T::zero() {
        return Err(Error::invalid(format!("transform argument {alpha} must be >= 0")));
    }
    let rho = exp.rho();
    let den = policy_moments(vdist, policy, rho)?.vg;
    if alpha == T::zero() {
        return Ok(T::one());
    }
    // 1/(alpha R - eta) = g / (alpha + g (alpha rho - eta)) with g = 1/(R - rho)
    let slack = alpha * rho - exp.eta(alpha);
    let integrand = |v: T| {
        let g = policy.inv_gap(v, rho);
        -(-alpha * v).exp_m1() * g / (alpha + g * slack)
    };
    let num = vdist.expect(integrand, &policy.breakpoints(rho));
    Ok(num / den)
}

/// Mean on-period steady-state workload,
/// `E[V^2/(2(R - rho)) + mu rho V/(R - rho)^2] / E[V/(R - rho)]`.
pub fn ytilde_mean<T: Scalar>(
    exp: &LevyExponent<T>,
    vdist: &WorkloadDist<T>,
    policy: &RatePolicy<T>,
) -> Result<T> {
    let rho = exp.rho();
    let m = policy_moments(vdist, policy, rho)?;
    Ok((m.v2g * T::lit(0.5) + exp.mu() * rho * m.vg2) / m.vg)
}

/// Mean for the affine policy `R = rho + s V`: `E V/2 + (mu rho / s) E[1/V]`.
pub fn affine_ytilde_mean<T: Scalar>(vdist: &WorkloadDist<T>, slope: T, mu_rho: T) -> Result<T> {
    Ok(vdist.mean() * T::lit(0.5) + mu_rho / slope * vdist.inv_mean()?)
}

/// `(off, on)` time fractions of a cycle. `on` is `1 - off`.
pub fn mixture_weights<T: Scalar>(
    vdist: &WorkloadDist<T>,
    policy: &RatePolicy<T>,
    rho: T,
    mean_tau: T,
) -> Result<(T, T)> {
    let busy = policy_moments(vdist, policy, rho)?.vg;
    let off = mean_tau / (mean_tau + busy);
    Ok((off, T::one() - off))
}

/// Transform of the stationary workload over the whole cycle. `ztilde_lst`
/// is the transform of the off-period steady state; it is supplied by the
/// caller (constant 1 when the workload is zero while off).
pub fn wtilde_lst<T: Scalar, Z: Fn(T) -> T>(
    exp: &LevyExponent<T>,
    vdist: &WorkloadDist<T>,
    policy: &RatePolicy<T>,
    off: &OffPeriodSpec<T>,
    ztilde_lst: Z,
    alpha: T,
) -> Result<T> {
    let (w_off, w_on) = mixture_weights(vdist, policy, exp.rho(), off.mean_tau)?;
    Ok(w_off * ztilde_lst(alpha) + w_on * ytilde_lst(exp, vdist, policy, alpha)?)
}

/// Sampler for the geometric-sum representation `U V + sum_{i<=N} e_i`
/// under the law tilted by `V/(R - rho)`.
#[derive(Debug, Clone)]
pub struct TiltedSampler<'a, T> {
    exp: &'a LevyExponent<T>,
    vdist: &'a WorkloadDist<T>,
    policy: &'a RatePolicy<T>,
    rho: T,
    kind: Tilt<T>,
}

#[derive(Debug, Clone)]
enum Tilt<T> {
    /// Exact reweighting of atoms.
    Atoms { atoms: Vec<(T, T)>, total: T },
    /// Rejection from the base law with envelope constant `bound`.
    Reject { bound: T },
}

impl<'a, T: Scalar> TiltedSampler<'a, T> {
    pub fn new(
        exp: &'a LevyExponent<T>,
        vdist: &'a WorkloadDist<T>,
        policy: &'a RatePolicy<T>,
    ) -> Result<Self> {
        let rho = exp.rho();
        policy_moments(vdist, policy, rho)?;
        let weight = |v: T| v * policy.inv_gap(v, rho);
        let kind = match vdist.atoms() {
            Some(atoms) => {
                let tilted: Vec<(T, T)> = atoms.iter().map(|&(v, p)| (v, p * weight(v))).collect();
                let total = tilted.iter().fold(T::zero(), |acc, a| acc + a.1);
                Tilt::Atoms { atoms: tilted, total }
            }
            None => {
                let lo = vdist.ess_inf();
                let hi = vdist.envelope_sup();
                let mut candidates = vec![lo, hi];
                candidates.extend(policy.breakpoints(rho));
                if let RatePolicy::WaterFill { lambda, mu_rho, r, .. } = *policy {
                    let q = crate::policy::inv_headroom(r, rho);
                    candidates.push(lambda + T::lit(2.0) * mu_rho * q);
                }
                let n = 4096;
                candidates.extend((0..=n).map(|i| lo + (hi - lo) * T::from_count(i) / T::from_count(n)));
                let bound = candidates
                    .into_iter()
                    .filter(|&v| v >= lo && v <= hi)
                    .map(weight)
                    .fold(T::zero(), T::max);
                Tilt::Reject { bound: bound * (T::one() + T::lit(1e-9)) }
            }
        };
        Ok(Self { exp, vdist, policy, rho, kind })
    }

    /// Draws `V` from the tilted law.
    pub fn sample_v<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match &self.kind {
            Tilt::Atoms { atoms, total } => {
                let i = pick_weighted(rng, atoms.iter().map(|a| a.1), *total);
                atoms[i].0
            }
            Tilt::Reject { bound } => loop {
                let v = self.vdist.sample(rng);
                let w = v * self.policy.inv_gap(v, self.rho);
                if T::lit(rng.gen::<f64>()) * *bound < w {
                    return v;
                }
            },
        }
    }

    /// Draws `(V, N)` and returns `U V + sum_{i=1}^N e_i`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let v = self.sample_v(rng);
        let n = self.sample_count(v, rng);
        let mut y = v * T::lit(rng.gen::<f64>());
        for _ in 0..n {
            y = y + self.exp.sample_equilibrium(rng);
        }
        y
    }

    /// `N` with `N + 1 ~ Geometric(1 - rho/R(v))`.
    pub fn sample_count<R: Rng + ?Sized>(&self, v: T, rng: &mut R) -> u64 {
        let g = self.policy.inv_gap(v, self.rho);
        let p = self.rho * g / (T::one() + self.rho * g);
        if p <= T::zero() {
            return 0;
        }
        let u: T = open_unit(rng);
        (u.ln() / p.ln()).floor().to_u64().unwrap_or(u64::MAX)
    }
}

/// One draw from the on-period steady state via the geometric-sum
/// representation. Build a [`TiltedSampler`] directly for repeated draws.
pub fn sample_ytilde<T: Scalar, R: Rng + ?Sized>(
    exp: &LevyExponent<T>,
    vdist: &WorkloadDist<T>,
    policy: &RatePolicy<T>,
    rng: &mut R,
) -> Result<T> {
    Ok(TiltedSampler::new(exp, vdist, policy)?.sample(rng))
}

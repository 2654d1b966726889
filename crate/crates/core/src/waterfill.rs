//! Phase I: for a fixed budget `E X = alpha`, the allocation minimizing
//! `E[V X/2 + mu rho X^2 / V]` over `X >= 0`.
//!
//! The minimizer thresholds a common multiplier:
//! `x(v, lambda) = v (lambda - v/2)^+ / (2 mu rho)`, with `lambda` chosen so
//! the budget binds. An optional cap `X <= r0 V` comes from a minimal
//! output rate.

use crate::error::{Error, Result};
use crate::policy::inv_headroom;
use crate::ratesearch::{self, Backend};
use crate::scalar::{pos, Scalar};
use crate::workload::WorkloadDist;

const MAX_BISECTIONS: usize = 200;
const MAX_DOUBLINGS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Solution<T> {
    /// Budget `E X`.
    pub alpha: T,
    /// Multiplier; `+inf` when a capped budget saturates at `r0 E V`.
    pub lambda_alpha: T,
    /// Optimal Phase-I value `f(alpha)`.
    pub f_value: T,
    /// Whether the `X <= r0 V` variant was solved.
    pub rate_cap_active: bool,
    /// The capped allocation is `r0 V` everywhere.
    pub saturated: bool,
}

/// `v (lam - v/2)^+ / (2 mu rho)`.
#[inline]
pub fn x_of<T: Scalar>(v: T, lam: T, mu_rho: T) -> T {
    v * pos(lam - v * T::lit(0.5)) / (T::lit(2.0) * mu_rho)
}

#[inline]
fn capped_x<T: Scalar>(v: T, lam: T, mu_rho: T, cap: Option<T>) -> T {
    let x = x_of(v, lam, mu_rho);
    match cap {
        Some(r0) => x.min(r0 * v),
        None => x,
    }
}

fn cap_breaks<T: Scalar>(lam: T, mu_rho: T, cap: Option<T>) -> Vec<T> {
    let two = T::lit(2.0);
    let mut b = vec![two * lam];
    if let Some(r0) = cap {
        b.push(two * (lam - two * mu_rho * r0));
    }
    b
}

/// `xi(lam) = E x(V, lam)`, or `E[x(V, lam) ^ r0 V]` with a cap.
pub fn xi<T: Scalar>(vdist: &WorkloadDist<T>, lam: T, mu_rho: T, cap: Option<T>) -> T {
    if lam <= T::zero() {
        return T::zero();
    }
    match cap {
        None => {
            let a = ratesearch::a_of(vdist, lam, Backend::natural(vdist)).expect("natural backend fits its law");
            a / (T::lit(2.0) * mu_rho)
        }
        Some(_) => vdist.expect(|v| capped_x(v, lam, mu_rho, cap), &cap_breaks(lam, mu_rho, cap)),
    }
}

/// Phase-I objective `E[V X/2 + mu rho X^2/V]` of an allocation `x(V)`.
pub fn phase1_objective<T: Scalar, F: Fn(T) -> T>(vdist: &WorkloadDist<T>, x: F, mu_rho: T, breaks: &[T]) -> T {
    vdist.expect(
        |v| {
            let xv = x(v);
            v * xv * T::lit(0.5) + mu_rho * xv * xv / v
        },
        breaks,
    )
}

fn max_capped_budget<T: Scalar>(vdist: &WorkloadDist<T>, r0: T) -> T {
    r0 * vdist.mean()
}

/// Smallest `lambda` with `xi(lambda) = alpha`: bracket by doubling, then
/// bisect to `1e-10` in `lambda` or `1e-12` in the budget.
pub fn solve_lambda_alpha<T: Scalar>(vdist: &WorkloadDist<T>, alpha: T, mu_rho: T, cap: Option<T>) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(Error::invalid(format!("budget {alpha} must be > 0")));
    }
    if let Some(r0) = cap {
        if !(r0 > T::zero()) {
            return Err(Error::invalid(format!("rate cap r0 = {r0} must be > 0")));
        }
        let max = max_capped_budget(vdist, r0);
        let slack = T::epsilon() * T::lit(4.0) * max;
        if alpha > max + slack {
            return Err(Error::InfeasibleBudget { alpha: alpha.as_f64(), max: max.as_f64() });
        }
        if alpha >= max - slack {
            return Ok(T::infinity());
        }
    }
    let budget = |lam: T| xi(vdist, lam, mu_rho, cap);
    let mut lo = vdist.ess_inf() * T::lit(0.5);
    let mut hi = lo.max(T::lit(1e-6));
    let mut doublings = 0;
    while budget(hi) < alpha {
        lo = hi;
        hi = hi * T::lit(2.0);
        doublings += 1;
        if doublings > MAX_DOUBLINGS || !hi.is_finite() {
            return Err(Error::RootSearch(format!("no multiplier reaches budget {alpha}")));
        }
    }
    let lam_tol = T::root_tol();
    let budget_tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0) * alpha);
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= lam_tol {
            break;
        }
        let mid = (lo + hi) * T::lit(0.5);
        let val = budget(mid);
        if (val - alpha).abs() <= budget_tol {
            return Ok(mid);
        }
        if val < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Solves Phase I at budget `alpha`.
pub fn f_of_alpha<T: Scalar>(
    vdist: &WorkloadDist<T>,
    alpha: T,
    mu_rho: T,
    cap: Option<T>,
) -> Result<Phase1Solution<T>> {
    if alpha < T::zero() {
        return Err(Error::invalid(format!("budget {alpha} must be >= 0")));
    }
    if alpha == T::zero() {
        return Ok(Phase1Solution {
            alpha,
            lambda_alpha: T::zero(),
            f_value: T::zero(),
            rate_cap_active: cap.is_some(),
            saturated: false,
        });
    }
    let lam = solve_lambda_alpha(vdist, alpha, mu_rho, cap)?;
    let (f_value, saturated) = match cap {
        Some(r0) if lam.is_infinite() => {
            (r0 * vdist.second_moment() * T::lit(0.5) + mu_rho * r0 * r0 * vdist.mean(), true)
        }
        Some(_) => (
            phase1_objective(vdist, |v| capped_x(v, lam, mu_rho, cap), mu_rho, &cap_breaks(lam, mu_rho, cap)),
            false,
        ),
        None => {
            let b = ratesearch::b_of(vdist, lam, Backend::natural(vdist))?;
            (b / (T::lit(4.0) * mu_rho), false)
        }
    };
    Ok(Phase1Solution { alpha, lambda_alpha: lam, f_value, rate_cap_active: cap.is_some(), saturated })
}

/// Optimal rate `rho + [1/(r - rho) + (lam - v/2)^+/(2 mu rho)]^{-1}`;
/// `r` when `lam <= v/2` (`+inf` if `r` is unbounded).
pub fn optimal_rate<T: Scalar>(v: T, lam: T, mu_rho: T, rho: T, r: Option<T>) -> T {
    let g = inv_headroom(r, rho) + pos(lam - v * T::lit(0.5)) / (T::lit(2.0) * mu_rho);
    if g == T::zero() {
        return T::infinity();
    }
    match r {
        Some(r) if lam <= v * T::lit(0.5) => r,
        _ => rho + g.recip(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn x_hand_values() {
        assert_eq!(x_of(1.0, 0.5, 1.0), 0.0);
        assert_eq!(x_of(1.0, 1.0, 1.0), 0.25);
        assert_eq!(x_of(2.0, 3.0, 0.5), 4.0);
    }

    #[test]
    fn xi_examples() {
        let u = WorkloadDist::Uniform { lo: 0.0f64, hi: 1.0 };
        assert_eq!(xi(&u, 0.0, 0.5, None), 0.0);
        // 2 mu rho = 1: xi = A = 2 lam^3 / 3
        assert!((xi(&u, 0.3, 0.5, None) - 0.018).abs() < 1e-15);
        let e = WorkloadDist::Exponential { rate: 1.0 };
        let oracle = crate::quad::integrate(|v: f64| v * (0.7 - v / 2.0).max(0.0) * (-v).exp(), 0.0, 1.4, 1e-14);
        assert!((xi(&e, 0.7, 0.5, None) - oracle).abs() < 1e-13);
    }

    #[test]
    fn one_atom() {
        let v = WorkloadDist::DiscreteAtoms(vec![(2.0f64, 1.0)]);
        let lam = solve_lambda_alpha(&v, 1.0, 1.0, None).unwrap();
        assert!((lam - 2.0).abs() < 1e-9);
        let s = f_of_alpha(&v, 1.0, 1.0, None).unwrap();
        assert!((s.f_value - 1.5).abs() < 1e-9);
        let direct = phase1_objective(&v, |_| 1.0, 1.0, &[]);
        assert!((direct - 1.5).abs() < 1e-15);
        assert_eq!(f_of_alpha(&v, 0.0, 1.0, None).unwrap().f_value, 0.0);
    }

    #[test]
    fn tiny_budget_sits_at_support_edge() {
        let v = WorkloadDist::Uniform { lo: 0.6f64, hi: 1.0 };
        let lam = solve_lambda_alpha(&v, 1e-9, 1.0, None).unwrap();
        assert!((lam - 0.3).abs() < 1e-3);
        let e = WorkloadDist::Exponential { rate: 1.0 };
        assert!(solve_lambda_alpha(&e, 1e-12, 1.0, None).unwrap() < 1e-3);
    }

    #[test]
    fn rate_hand_values() {
        assert!((optimal_rate(1.0f64, 1.0, 1.0, 1.0, Some(2.0)) - 1.8).abs() < 1e-15);
        assert_eq!(optimal_rate(3.0, 1.0, 1.0, 1.0, Some(2.0)), 2.0);
        assert_eq!(optimal_rate(3.0, 1.0, 1.0, 1.0, None), f64::INFINITY);
    }

    #[test]
    fn capped_budget_limits() {
        let v = WorkloadDist::Uniform { lo: 0.5f64, hi: 1.5 };
        let r0 = 0.4;
        let max = r0 * v.mean();
        assert!(matches!(
            solve_lambda_alpha(&v, max * 1.01, 1.0, Some(r0)),
            Err(Error::InfeasibleBudget { .. })
        ));
        let s = f_of_alpha(&v, max, 1.0, Some(r0)).unwrap();
        assert!(s.saturated && s.lambda_alpha.is_infinite());
        let s = f_of_alpha(&v, 0.5 * max, 1.0, Some(r0)).unwrap();
        assert!(!s.saturated && s.rate_cap_active);
        let got = xi(&v, s.lambda_alpha, 1.0, Some(r0));
        assert!((got - 0.5 * max).abs() < 1e-8);
    }
}

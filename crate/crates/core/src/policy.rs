//! Output-rate policies `v -> R(v)`.
//!
//! Formulas downstream only need the inverse gap `1 / (R(v) - rho)`, which
//! stays finite (zero) for the infinite clearing rate allowed when `r` is
//! unbounded.

use crate::error::{Error, Result};
use crate::scalar::{pos, Scalar};
use crate::workload::WorkloadDist;

#[derive(Debug, Clone, PartialEq)]
pub enum RatePolicy<T> {
    /// `R(v) = rate`.
    Constant { rate: T },
    /// `R(v) = rho + slope * v`.
    AffineInV { slope: T },
    /// `R(v) = rho + [1/(r - rho) + (lambda - v/2)^+ / (2 mu rho)]^{-1}`,
    /// floored at `r_min` when present. `r = None` means no upper limit.
    WaterFill { lambda: T, mu_rho: T, r: Option<T>, r_min: Option<T> },
}

/// `1 / (r - rho)`, zero for an unbounded rate.
#[inline]
pub fn inv_headroom<T: Scalar>(r: Option<T>, rho: T) -> T {
    r.map_or(T::zero(), |r| (r - rho).recip())
}

impl<T: Scalar> RatePolicy<T> {
    /// `1 / (R(v) - rho)`.
    pub fn inv_gap(&self, v: T, rho: T) -> T {
        match *self {
            RatePolicy::Constant { rate } => (rate - rho).recip(),
            RatePolicy::AffineInV { slope } => (slope * v).recip(),
            RatePolicy::WaterFill { lambda, mu_rho, r, r_min } => {
                let g = inv_headroom(r, rho) + pos(lambda - v * T::lit(0.5)) / (T::lit(2.0) * mu_rho);
                match r_min {
                    Some(rm) => g.min((rm - rho).recip()),
                    None => g,
                }
            }
        }
    }

    /// `R(v)`; `+inf` for the clearing rate.
    pub fn rate(&self, v: T, rho: T) -> T {
        match *self {
            RatePolicy::Constant { rate } => rate,
            _ => {
                let g = self.inv_gap(v, rho);
                if g == T::zero() {
                    T::infinity()
                } else {
                    rho + g.recip()
                }
            }
        }
    }

    /// Points in `v` where `inv_gap` has a kink.
    pub fn breakpoints(&self, rho: T) -> Vec<T> {
        match *self {
            RatePolicy::WaterFill { lambda, mu_rho, r, r_min } => {
                let two = T::lit(2.0);
                let mut b = vec![two * lambda];
                if let Some(rm) = r_min {
                    let r0 = (rm - rho).recip() - inv_headroom(r, rho);
                    let knee = two * (lambda - two * mu_rho * r0);
                    if knee > T::zero() {
                        b.push(knee);
                    }
                }
                b
            }
            _ => Vec::new(),
        }
    }

    /// Checks `rho < R(v)` on the support of `V`, and `R(v) <= r` when a
    /// finite maximal rate is given.
    pub fn validate(&self, vdist: &WorkloadDist<T>, rho: T, r: Option<T>) -> Result<()> {
        match *self {
            RatePolicy::Constant { rate } => {
                if !(rate > rho) {
                    return Err(Error::UnstablePolicy(format!(
                        "constant rate {rate} does not exceed rho = {rho}"
                    )));
                }
                if let Some(r) = r {
                    if rate > r {
                        return Err(Error::invalid(format!("constant rate {rate} exceeds r = {r}")));
                    }
                }
            }
            RatePolicy::AffineInV { slope } => {
                if !(slope > T::zero()) || !slope.is_finite() {
                    return Err(Error::UnstablePolicy(format!("affine slope {slope} must be > 0")));
                }
                if let Some(r) = r {
                    let top = vdist.ess_sup().unwrap_or(T::infinity());
                    if rho + slope * top > r {
                        return Err(Error::invalid(format!(
                            "affine rate rho + {slope} v exceeds r = {r} on the support of V"
                        )));
                    }
                }
            }
            RatePolicy::WaterFill { lambda, mu_rho, r: pr, r_min } => {
                if !(lambda >= T::zero()) || !(mu_rho > T::zero()) {
                    return Err(Error::invalid("water-fill policy needs lambda >= 0 and mu rho > 0"));
                }
                if let Some(rm) = r_min {
                    if !(rm > rho) {
                        return Err(Error::UnstablePolicy(format!("r_min {rm} must exceed rho = {rho}")));
                    }
                }
                if let Some(pr) = pr {
                    if !(pr > rho) {
                        return Err(Error::UnstablePolicy(format!("r {pr} must exceed rho = {rho}")));
                    }
                }
                if pr.is_none() && r.is_some() {
                    return Err(Error::invalid("water-fill policy without r under a finite maximal rate"));
                }
            }
        }
        Ok(())
    }
}

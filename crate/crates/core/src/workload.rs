//! Law of `V`, the workload at the start of an on period.

use rand::Rng;

use crate::error::{Error, Result};
use crate::levy_core::{check_atoms, open_unit, pick_weighted};
use crate::quad;
use crate::scalar::Scalar;

/// Exponential tails are integrated up to `TAIL_CUTOFF / rate`; the
/// neglected mass is `e^{-80}`.
const TAIL_CUTOFF: f64 = 80.0;

/// Quantile level used to truncate unbounded supports for rejection
/// envelopes.
pub const ENVELOPE_QUANTILE: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadDist<T> {
    Exponential { rate: T },
    Uniform { lo: T, hi: T },
    /// `(value, probability)` pairs.
    DiscreteAtoms(Vec<(T, T)>),
    /// Equally weighted sample.
    Empirical(Vec<T>),
}

impl<T: Scalar> WorkloadDist<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            WorkloadDist::Exponential { rate } => {
                if !(*rate > T::zero()) || !rate.is_finite() {
                    return Err(Error::invalid(format!("exponential V rate {rate} must be > 0")));
                }
            }
            WorkloadDist::Uniform { lo, hi } => {
                if !(*lo >= T::zero()) || !(hi > lo) || !hi.is_finite() {
                    return Err(Error::invalid(format!(
                        "uniform V needs 0 <= lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            WorkloadDist::DiscreteAtoms(atoms) => check_atoms(atoms, "workload atoms")?,
            WorkloadDist::Empirical(xs) => {
                if xs.is_empty() {
                    return Err(Error::invalid("empirical V sample is empty"));
                }
                if let Some(x) = xs.iter().find(|&&x| !(x > T::zero()) || !x.is_finite()) {
                    return Err(Error::invalid(format!("empirical V value {x} is not > 0")));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            WorkloadDist::Exponential { .. } => "exponential",
            WorkloadDist::Uniform { .. } => "uniform",
            WorkloadDist::DiscreteAtoms(_) => "discrete",
            WorkloadDist::Empirical(_) => "empirical",
        }
    }

    /// Support points with weights, for the laws that have them.
    pub fn atoms(&self) -> Option<Vec<(T, T)>> {
        match self {
            WorkloadDist::DiscreteAtoms(atoms) => Some(atoms.clone()),
            WorkloadDist::Empirical(xs) => {
                let w = T::from_count(xs.len()).recip();
                Some(xs.iter().map(|&x| (x, w)).collect())
            }
            _ => None,
        }
    }

    pub fn is_atomless(&self) -> bool {
        matches!(self, WorkloadDist::Exponential { .. } | WorkloadDist::Uniform { .. })
    }

    /// `E[V^k 1{V <= x}]` for `k` in `0..=3`.
    pub fn partial_moment(&self, k: i32, x: T) -> T {
        assert!((0..=3).contains(&k), "partial moments up to order 3");
        match self {
            WorkloadDist::Exponential { rate } => {
                // E[V^k; V <= x] = k!/rate^k * ErlangCdf(x; k+1, rate)
                let fact = [1.0, 1.0, 2.0, 6.0][k as usize];
                T::lit(fact) / rate.powi(k) * erlang_cdf(x, (k + 1) as usize, *rate)
            }
            WorkloadDist::Uniform { lo, hi } => {
                if x <= *lo {
                    return T::zero();
                }
                let top = x.min(*hi);
                let kp = T::from_count((k + 1) as usize);
                (top.powi(k + 1) - lo.powi(k + 1)) / (kp * (*hi - *lo))
            }
            _ => self
                .atoms()
                .expect("atomic law")
                .iter()
                .filter(|a| a.0 <= x)
                .fold(T::zero(), |acc, &(v, p)| acc + p * v.powi(k)),
        }
    }

    pub fn mean(&self) -> T {
        self.raw_moment(1)
    }

    pub fn second_moment(&self) -> T {
        self.raw_moment(2)
    }

    fn raw_moment(&self, k: i32) -> T {
        match self {
            WorkloadDist::Exponential { rate } => {
                let fact = [1.0, 1.0, 2.0, 6.0][k as usize];
                T::lit(fact) / rate.powi(k)
            }
            WorkloadDist::Uniform { hi, .. } => self.partial_moment(k, *hi),
            _ => self
                .atoms()
                .expect("atomic law")
                .iter()
                .fold(T::zero(), |acc, &(v, p)| acc + p * v.powi(k)),
        }
    }

    /// `E[1/V]`, which is infinite whenever the density is positive at 0.
    pub fn inv_mean(&self) -> Result<T> {
        match self {
            WorkloadDist::Exponential { .. } => {
                Err(Error::Divergent("E[1/V] is infinite for exponential V".into()))
            }
            WorkloadDist::Uniform { lo, hi } => {
                if *lo == T::zero() {
                    Err(Error::Divergent("E[1/V] is infinite for uniform V on [0, b]".into()))
                } else {
                    Ok((*hi / *lo).ln() / (*hi - *lo))
                }
            }
            _ => Ok(self
                .atoms()
                .expect("atomic law")
                .iter()
                .fold(T::zero(), |acc, &(v, p)| acc + p / v)),
        }
    }

    /// Essential infimum of the support.
    pub fn ess_inf(&self) -> T {
        match self {
            WorkloadDist::Exponential { .. } => T::zero(),
            WorkloadDist::Uniform { lo, .. } => *lo,
            WorkloadDist::DiscreteAtoms(atoms) => atoms
                .iter()
                .filter(|a| a.1 > T::zero())
                .fold(T::infinity(), |m, a| m.min(a.0)),
            WorkloadDist::Empirical(xs) => xs.iter().fold(T::infinity(), |m, &x| m.min(x)),
        }
    }

    /// Essential supremum, or `None` for unbounded support.
    pub fn ess_sup(&self) -> Option<T> {
        match self {
            WorkloadDist::Exponential { .. } => None,
            WorkloadDist::Uniform { hi, .. } => Some(*hi),
            WorkloadDist::DiscreteAtoms(atoms) => Some(
                atoms
                    .iter()
                    .filter(|a| a.1 > T::zero())
                    .fold(T::neg_infinity(), |m, a| m.max(a.0)),
            ),
            WorkloadDist::Empirical(xs) => Some(xs.iter().fold(T::neg_infinity(), |m, &x| m.max(x))),
        }
    }

    /// Upper end of the support truncated at [`ENVELOPE_QUANTILE`].
    pub fn envelope_sup(&self) -> T {
        match self {
            WorkloadDist::Exponential { rate } => -T::lit(1.0 - ENVELOPE_QUANTILE).ln() / *rate,
            _ => self.ess_sup().expect("bounded support"),
        }
    }

    /// `E[f(V)]`. Continuous laws are integrated adaptively; `breaks` lists
    /// points where `f` has a kink.
    pub fn expect<F: Fn(T) -> T>(&self, f: F, breaks: &[T]) -> T {
        match self {
            WorkloadDist::Exponential { rate } => {
                let upper = T::lit(TAIL_CUTOFF) / *rate;
                let g = |v: T| f(v) * *rate * (-*rate * v).exp();
                quad::integrate_pieces(&g, T::zero(), upper, breaks, T::quad_tol())
            }
            WorkloadDist::Uniform { lo, hi } => {
                let width = *hi - *lo;
                let g = |v: T| f(v) / width;
                quad::integrate_pieces(&g, *lo, *hi, breaks, T::quad_tol())
            }
            WorkloadDist::DiscreteAtoms(atoms) => {
                atoms.iter().fold(T::zero(), |acc, &(v, p)| acc + p * f(v))
            }
            WorkloadDist::Empirical(xs) => {
                xs.iter().fold(T::zero(), |acc, &v| acc + f(v)) / T::from_count(xs.len())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self {
            WorkloadDist::Exponential { rate } => -open_unit::<T, _>(rng).ln() / *rate,
            WorkloadDist::Uniform { lo, hi } => *lo + (*hi - *lo) * open_unit::<T, _>(rng),
            WorkloadDist::DiscreteAtoms(atoms) => {
                let i = pick_weighted(rng, atoms.iter().map(|a| a.1), T::one());
                atoms[i].0
            }
            WorkloadDist::Empirical(xs) => xs[rng.gen_range(0..xs.len())],
        }
    }
}

/// CDF at `x` of the Erlang law with integer `shape` and `rate`.
pub fn erlang_cdf<T: Scalar>(x: T, shape: usize, rate: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    let y = rate * x;
    // 1 - e^{-y} sum_{k<shape} y^k/k!; for small y use the complementary
    // series sum_{k>=shape} to avoid cancellation
    if y < T::lit(1.0) {
        let mut term = (-y).exp();
        for k in 1..=shape {
            term = term * y / T::from_count(k);
        }
        let mut sum = T::zero();
        let mut k = shape;
        while term > T::epsilon() * sum || sum == T::zero() {
            sum = sum + term;
            k += 1;
            term = term * y / T::from_count(k);
            if term == T::zero() {
                break;
            }
        }
        sum
    } else {
        let mut term = T::one();
        let mut sum = T::one();
        for k in 1..shape {
            term = term * y / T::from_count(k);
            sum = sum + term;
        }
        T::one() - (-y).exp() * sum
    }
}

//! Nondecreasing Lévy input: deterministic drift plus an optional compound
//! Poisson jump part with a parametric jump law.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Jump size law of the compound Poisson part.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpDist<T> {
    Exponential { rate: T },
    Uniform { lo: T, hi: T },
    Deterministic { size: T },
    /// `(size, probability)` pairs.
    DiscreteAtoms(Vec<(T, T)>),
}

pub(crate) fn probability_tol<T: Scalar>(n: usize) -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(8.0) * T::from_count(n.max(1)))
}

pub(crate) fn check_atoms<T: Scalar>(atoms: &[(T, T)], what: &str) -> Result<()> {
    if atoms.is_empty() {
        return Err(Error::invalid(format!("{what}: no atoms")));
    }
    let mut total = T::zero();
    for &(x, p) in atoms {
        if !(x > T::zero()) || !x.is_finite() {
            return Err(Error::invalid(format!("{what}: atom {x} is not strictly positive")));
        }
        if !(p >= T::zero()) || !p.is_finite() {
            return Err(Error::invalid(format!("{what}: probability {p} is negative")));
        }
        total = total + p;
    }
    if (total - T::one()).abs() > probability_tol(atoms.len()) {
        return Err(Error::invalid(format!("{what}: probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// Uniform draw in `(0, 1]`, safe for logarithms.
#[inline]
pub(crate) fn open_unit<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(1.0 - rng.gen::<f64>())
}

/// Index drawn from a list of weights summing to `total`.
pub(crate) fn pick_weighted<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    weights: impl Iterator<Item = T> + Clone,
    total: T,
) -> usize {
    let target = T::lit(rng.gen::<f64>()) * total;
    let mut acc = T::zero();
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc = acc + w;
        if w > T::zero() {
            last = i;
        }
        if target < acc {
            return i;
        }
    }
    last
}

impl<T: Scalar> JumpDist<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpDist::Exponential { rate } => {
                if !(*rate > T::zero()) || !rate.is_finite() {
                    return Err(Error::invalid(format!("exponential jump rate {rate} must be > 0")));
                }
            }
            JumpDist::Uniform { lo, hi } => {
                if !(*lo >= T::zero()) || !(hi > lo) || !hi.is_finite() {
                    return Err(Error::invalid(format!(
                        "uniform jump law needs 0 <= lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            JumpDist::Deterministic { size } => {
                if !(*size > T::zero()) || !size.is_finite() {
                    return Err(Error::invalid(format!("deterministic jump {size} must be > 0")));
                }
            }
            JumpDist::DiscreteAtoms(atoms) => check_atoms(atoms, "jump atoms")?,
        }
        Ok(())
    }

    pub fn mean(&self) -> T {
        let half = T::lit(0.5);
        match self {
            JumpDist::Exponential { rate } => rate.recip(),
            JumpDist::Uniform { lo, hi } => (*lo + *hi) * half,
            JumpDist::Deterministic { size } => *size,
            JumpDist::DiscreteAtoms(atoms) => {
                atoms.iter().fold(T::zero(), |acc, &(x, p)| acc + x * p)
            }
        }
    }

    pub fn second_moment(&self) -> T {
        match self {
            JumpDist::Exponential { rate } => T::lit(2.0) / (*rate * *rate),
            JumpDist::Uniform { lo, hi } => (*lo * *lo + *lo * *hi + *hi * *hi) / T::lit(3.0),
            JumpDist::Deterministic { size } => *size * *size,
            JumpDist::DiscreteAtoms(atoms) => {
                atoms.iter().fold(T::zero(), |acc, &(x, p)| acc + x * x * p)
            }
        }
    }

    /// `E[1 - exp(-alpha X)]`, evaluated without cancellation where the
    /// closed form allows it.
    pub fn one_minus_lst(&self, alpha: T) -> T {
        if alpha <= T::zero() {
            return T::zero();
        }
        match self {
            JumpDist::Exponential { rate } => alpha / (*rate + alpha),
            JumpDist::Uniform { lo, hi } => {
                let w = *hi - *lo;
                // E e^{-aX} = e^{-a lo} (1 - e^{-a w}) / (a w)
                let frac = -(-alpha * w).exp_m1() / (alpha * w);
                -((-alpha * *lo).exp() * frac - T::one())
            }
            JumpDist::Deterministic { size } => -(-alpha * *size).exp_m1(),
            JumpDist::DiscreteAtoms(atoms) => atoms
                .iter()
                .fold(T::zero(), |acc, &(x, p)| acc - p * (-alpha * x).exp_m1()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self {
            JumpDist::Exponential { rate } => -open_unit::<T, _>(rng).ln() / *rate,
            JumpDist::Uniform { lo, hi } => *lo + (*hi - *lo) * T::lit(rng.gen::<f64>()),
            JumpDist::Deterministic { size } => *size,
            JumpDist::DiscreteAtoms(atoms) => {
                let i = pick_weighted(rng, atoms.iter().map(|a| a.1), T::one());
                atoms[i].0
            }
        }
    }

    /// Draws from the stationary-excess law with density `P(X > x) / E X`.
    pub fn sample_equilibrium<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match self {
            JumpDist::Exponential { rate } => -open_unit::<T, _>(rng).ln() / *rate,
            JumpDist::Uniform { lo, hi } => {
                // flat on [0, lo], then triangular decreasing on [lo, hi]
                let m = self.mean();
                let flat = *lo / m;
                let u = T::lit(rng.gen::<f64>());
                if u < flat {
                    *lo * T::lit(rng.gen::<f64>())
                } else {
                    *hi - (*hi - *lo) * open_unit::<T, _>(rng).sqrt()
                }
            }
            JumpDist::Deterministic { size } => *size * T::lit(rng.gen::<f64>()),
            JumpDist::DiscreteAtoms(atoms) => {
                let m = self.mean();
                let i = pick_weighted(rng, atoms.iter().map(|&(x, p)| x * p), m);
                atoms[i].0 * T::lit(rng.gen::<f64>())
            }
        }
    }
}

/// Compound Poisson jump part: jumps arrive at `rate`, sizes follow `dist`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundPoisson<T> {
    pub rate: T,
    pub dist: JumpDist<T>,
}

/// Lévy exponent `eta(a) = c a + rate * E[1 - e^{-a X}]` of a subordinator
/// made of drift `c` and compound Poisson jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyExponent<T> {
    drift: T,
    jumps: Option<CompoundPoisson<T>>,
}

impl<T: Scalar> LevyExponent<T> {
    pub fn new(drift: T, jumps: Option<CompoundPoisson<T>>) -> Result<Self> {
        if !(drift >= T::zero()) || !drift.is_finite() {
            return Err(Error::invalid(format!("drift {drift} must be >= 0")));
        }
        match &jumps {
            Some(cp) => {
                if !(cp.rate > T::zero()) || !cp.rate.is_finite() {
                    return Err(Error::invalid(format!("poisson rate {} must be > 0", cp.rate)));
                }
                cp.dist.validate()?;
            }
            None if drift == T::zero() => {
                return Err(Error::invalid("input with neither drift nor jumps"));
            }
            None => {}
        }
        Ok(Self { drift, jumps })
    }

    pub fn compound_poisson(rate: T, dist: JumpDist<T>) -> Result<Self> {
        Self::new(T::zero(), Some(CompoundPoisson { rate, dist }))
    }

    pub fn pure_drift(drift: T) -> Result<Self> {
        Self::new(drift, None)
    }

    pub fn drift(&self) -> T {
        self.drift
    }

    pub fn jumps(&self) -> Option<&CompoundPoisson<T>> {
        self.jumps.as_ref()
    }

    pub fn eta(&self, alpha: T) -> T {
        let jump_part = self
            .jumps
            .as_ref()
            .map_or(T::zero(), |cp| cp.rate * cp.dist.one_minus_lst(alpha));
        self.drift * alpha + jump_part
    }

    /// Mean input rate `E J_1 = eta'(0)`.
    pub fn rho(&self) -> T {
        self.drift + self.jumps.as_ref().map_or(T::zero(), |cp| cp.rate * cp.dist.mean())
    }

    /// Mean of the equilibrium law, `rate * E[X^2] / (2 rho)`.
    pub fn mu(&self) -> T {
        let second = self
            .jumps
            .as_ref()
            .map_or(T::zero(), |cp| cp.rate * cp.dist.second_moment());
        second / (T::lit(2.0) * self.rho())
    }

    /// `eta(a) / (rho a)`, the transform sampled by [`Self::sample_equilibrium`].
    pub fn equilibrium_lst(&self, alpha: T) -> T {
        if alpha <= T::zero() {
            return T::one();
        }
        self.eta(alpha) / (self.rho() * alpha)
    }

    /// Draws from the law with transform `eta(a) / (rho a)`: an atom at zero
    /// of weight `c / rho`, otherwise the jump law's stationary excess.
    pub fn sample_equilibrium<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let Some(cp) = &self.jumps else {
            return T::zero();
        };
        if self.drift > T::zero() {
            let atom = self.drift / self.rho();
            if T::lit(rng.gen::<f64>()) < atom {
                return T::zero();
            }
        }
        cp.dist.sample_equilibrium(rng)
    }
}

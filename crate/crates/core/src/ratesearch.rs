//! Phase II: the one-dimensional curve
//! `G(lam) = (K1 + K2 A/(2 mu rho) + h B/(4 mu rho)) / (K3 + A/(2 mu rho))`
//! with `A(lam) = E V (lam - V/2)^+` and `B(lam) = E V (lam^2 - V^2/4)^+`,
//! its density, the bracket `[0, lam*]`, and the minimizers.
//!
//! `G` is unimodal with a minimizer in `[0, lam*]`, so a golden-section
//! search on the bracket is enough for continuous laws. For atomic laws `G`
//! is rational on each segment between consecutive `v_i / 2` and is
//! minimized exactly.

use crate::cost_model::{constants_from_primitives, CostParams, ProblemConstants};
use crate::error::{Error, Result};
use crate::levy_core::LevyExponent;
use crate::policy::RatePolicy;
use crate::scalar::{pos, Scalar};
use crate::steady_state::OffPeriodSpec;
use crate::waterfill;
use crate::workload::{erlang_cdf, WorkloadDist};

/// How `A`, `B` and `a~` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Erlang-CDF identities for exponential `V`.
    ClosedFormExponential,
    /// Truncated-moment polynomials for uniform `V`.
    ClosedFormUniform,
    /// Finite sums over atoms.
    DiscretePiecewise,
    /// Adaptive quadrature (or sums, for atomic laws).
    Quadrature,
}

impl Backend {
    /// The closed-form backend matching the law.
    pub fn natural<T>(vdist: &WorkloadDist<T>) -> Self {
        match vdist {
            WorkloadDist::Exponential { .. } => Backend::ClosedFormExponential,
            WorkloadDist::Uniform { .. } => Backend::ClosedFormUniform,
            _ => Backend::DiscretePiecewise,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::ClosedFormExponential => "closed-form-exponential",
            Backend::ClosedFormUniform => "closed-form-uniform",
            Backend::DiscretePiecewise => "discrete-piecewise",
            Backend::Quadrature => "quadrature",
        }
    }

    fn check<T>(self, vdist: &WorkloadDist<T>) -> Result<()> {
        let fits = match self {
            Backend::ClosedFormExponential => matches!(vdist, WorkloadDist::Exponential { .. }),
            Backend::ClosedFormUniform => matches!(vdist, WorkloadDist::Uniform { .. }),
            Backend::DiscretePiecewise => {
                matches!(vdist, WorkloadDist::DiscreteAtoms(_) | WorkloadDist::Empirical(_))
            }
            Backend::Quadrature => true,
        };
        if fits {
            Ok(())
        } else {
            let law = match vdist {
                WorkloadDist::Exponential { .. } => "exponential",
                WorkloadDist::Uniform { .. } => "uniform",
                WorkloadDist::DiscreteAtoms(_) => "discrete",
                WorkloadDist::Empirical(_) => "empirical",
            };
            Err(Error::BackendMismatch { backend: self.name(), law })
        }
    }
}

/// `A(lam) = E V (lam - V/2)^+`.
pub fn a_of<T: Scalar>(vdist: &WorkloadDist<T>, lam: T, backend: Backend) -> Result<T> {
    backend.check(vdist)?;
    if lam <= T::zero() {
        return Ok(T::zero());
    }
    let two = T::lit(2.0);
    Ok(match (backend, vdist) {
        (Backend::ClosedFormExponential, WorkloadDist::Exponential { rate }) => {
            let x = two * lam;
            lam / *rate * erlang_cdf(x, 2, *rate) - erlang_cdf(x, 3, *rate) / (*rate * *rate)
        }
        (Backend::Quadrature, _) => vdist.expect(|v| v * pos(lam - v / two), &[two * lam]),
        _ => {
            let x = two * lam;
            pos(lam * vdist.partial_moment(1, x) - vdist.partial_moment(2, x) / two)
        }
    })
}

/// `B(lam) = E V (lam^2 - V^2/4)^+`.
pub fn b_of<T: Scalar>(vdist: &WorkloadDist<T>, lam: T, backend: Backend) -> Result<T> {
    backend.check(vdist)?;
    if lam <= T::zero() {
        return Ok(T::zero());
    }
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    Ok(match (backend, vdist) {
        (Backend::ClosedFormExponential, WorkloadDist::Exponential { rate }) => {
            let x = two * lam;
            lam * lam / *rate * erlang_cdf(x, 2, *rate)
                - T::lit(1.5) / rate.powi(3) * erlang_cdf(x, 4, *rate)
        }
        (Backend::Quadrature, _) => vdist.expect(|v| v * pos(lam * lam - v * v / four), &[two * lam]),
        _ => {
            let x = two * lam;
            pos(lam * lam * vdist.partial_moment(1, x) - vdist.partial_moment(3, x) / four)
        }
    })
}

/// `a~(lam) = E V 1{V <= 2 lam}`, the right derivative of `A`.
pub fn a_tilde<T: Scalar>(vdist: &WorkloadDist<T>, lam: T, backend: Backend) -> Result<T> {
    backend.check(vdist)?;
    if lam <= T::zero() {
        return Ok(T::zero());
    }
    let x = T::lit(2.0) * lam;
    Ok(match (backend, vdist) {
        (Backend::ClosedFormExponential, WorkloadDist::Exponential { rate }) => erlang_cdf(x, 2, *rate) / *rate,
        (Backend::Quadrature, _) => vdist.expect(|v| if v <= x { v } else { T::zero() }, &[x]),
        _ => vdist.partial_moment(1, x),
    })
}

/// `lam* = (K1 - K2 K3)^+ / (K3 h)`.
pub fn lambda_star<T: Scalar>(c: &ProblemConstants<T>) -> T {
    pos(c.k1 - c.k2 * c.k3) / (c.k3 * c.h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult<T> {
    pub lambda_min: T,
    pub g_min: T,
    /// `[0, lam*]`.
    pub bracket: (T, T),
    /// Lipschitz certificate on `G(lambda_min) - min G`.
    pub error_bound: T,
    pub evaluations: usize,
}

/// The Phase-II curve for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct GCurve<T> {
    pub constants: ProblemConstants<T>,
    pub vdist: WorkloadDist<T>,
    pub backend: Backend,
}

impl<T: Scalar> GCurve<T> {
    pub fn new(constants: ProblemConstants<T>, vdist: WorkloadDist<T>, backend: Backend) -> Result<Self> {
        constants.validate()?;
        vdist.validate()?;
        backend.check(&vdist)?;
        Ok(Self { constants, vdist, backend })
    }

    pub fn with_natural_backend(constants: ProblemConstants<T>, vdist: WorkloadDist<T>) -> Result<Self> {
        let b = Backend::natural(&vdist);
        Self::new(constants, vdist, b)
    }

    fn moments(&self, lam: T) -> (T, T) {
        let a = a_of(&self.vdist, lam, self.backend).expect("backend checked");
        let b = b_of(&self.vdist, lam, self.backend).expect("backend checked");
        (a, b)
    }

    fn ratio(&self, a: T, b: T) -> T {
        let c = &self.constants;
        let two_mr = T::lit(2.0) * c.mu_rho();
        (c.k1 + c.k2 * a / two_mr + c.h * b / (T::lit(2.0) * two_mr)) / (c.k3 + a / two_mr)
    }

    /// `G(lam)` from `A` and `B`.
    pub fn value(&self, lam: T) -> T {
        let (a, b) = self.moments(lam);
        self.ratio(a, b)
    }

    /// `G(lam)` through Phase I: `(K1 + K2 xi + h f(xi)) / (K3 + xi)`, with
    /// `f` obtained by re-solving for the multiplier of budget `xi`.
    pub fn value_via_phase1(&self, lam: T) -> Result<T> {
        let c = &self.constants;
        let mu_rho = c.mu_rho();
        let alpha = waterfill::xi(&self.vdist, lam, mu_rho, None);
        let f = waterfill::f_of_alpha(&self.vdist, alpha, mu_rho, None)?.f_value;
        Ok((c.k1 + c.k2 * alpha + c.h * f) / (c.k3 + alpha))
    }

    /// Density `g` of `G`:
    /// `a~/(2 mu rho) [K3 K2 - K1 + lam K3 h + h/(4 mu rho)(2 lam A - B)] / (K3 + A/(2 mu rho))^2`.
    pub fn density(&self, lam: T) -> T {
        let c = &self.constants;
        let (a, b) = self.moments(lam);
        let at = a_tilde(&self.vdist, lam, self.backend).expect("backend checked");
        let two_mr = T::lit(2.0) * c.mu_rho();
        let numer = self.density_numerator_from(lam, a, b);
        let den = c.k3 + a / two_mr;
        at / two_mr * numer / (den * den)
    }

    /// Bracketed factor of the density; nondecreasing in `lam`.
    pub fn density_numerator(&self, lam: T) -> T {
        let (a, b) = self.moments(lam);
        self.density_numerator_from(lam, a, b)
    }

    fn density_numerator_from(&self, lam: T, a: T, b: T) -> T {
        let c = &self.constants;
        let four_mr = T::lit(4.0) * c.mu_rho();
        c.k3 * c.k2 - c.k1 + lam * c.k3 * c.h + c.h / four_mr * (T::lit(2.0) * lam * a - b)
    }

    /// Lipschitz constant of `G` on `[0, lam]`:
    /// `a~(lam)/(2 K3^2 mu rho) [K3 K2 + K1 + lam K3 h + h/(4 mu rho)(2 lam A + B)]`.
    pub fn lipschitz(&self, lam: T) -> T {
        let c = &self.constants;
        let (a, b) = self.moments(lam);
        let at = a_tilde(&self.vdist, lam, self.backend).expect("backend checked");
        let mr = c.mu_rho();
        at / (T::lit(2.0) * c.k3 * c.k3 * mr)
            * (c.k3 * c.k2 + c.k1 + lam * c.k3 * c.h + c.h / (T::lit(4.0) * mr) * (T::lit(2.0) * lam * a + b))
    }

    pub fn lambda_star(&self) -> T {
        lambda_star(&self.constants)
    }

    /// Golden-section search on `[0, lam*]` to width `1e-8 max(1, lam*)`.
    pub fn minimize(&self) -> SearchResult<T> {
        let star = self.lambda_star();
        if star <= T::zero() {
            return SearchResult {
                lambda_min: T::zero(),
                g_min: self.constants.k1 / self.constants.k3,
                bracket: (T::zero(), T::zero()),
                error_bound: T::zero(),
                evaluations: 1,
            };
        }
        let tol = T::lit(1e-8) * star.max(T::one());
        let gs = golden_section(|l| self.value(l), T::zero(), star, tol);
        let mut lambda_min = gs.x;
        let mut g_min = gs.fx;
        let mut evaluations = gs.evaluations;
        for edge in [T::zero(), star] {
            let v = self.value(edge);
            evaluations += 1;
            if v < g_min {
                lambda_min = edge;
                g_min = v;
            }
        }
        SearchResult {
            lambda_min,
            g_min,
            bracket: (T::zero(), star),
            error_bound: self.lipschitz(star) * gs.width,
            evaluations,
        }
    }
}

/// Outcome of a golden-section search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenSection<T> {
    /// Midpoint of the final interval.
    pub x: T,
    pub fx: T,
    /// Width of the final interval.
    pub width: T,
    pub evaluations: usize,
}

/// Golden-section search for a minimizer of a unimodal `f` on `[lo, hi]`.
/// Ties move the left end, so plateaus at the start of the interval are
/// skipped over.
pub fn golden_section<T: Scalar, F: Fn(T) -> T>(f: F, lo: T, hi: T, tol: T) -> GoldenSection<T> {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) * T::lit(0.5);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evaluations = 2;
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
        evaluations += 1;
        if evaluations > 10_000 {
            break;
        }
    }
    let x = (a + b) * T::lit(0.5);
    GoldenSection { x, fx: f(x), width: b - a, evaluations: evaluations + 1 }
}

/// One segment of the piecewise-rational curve of an atomic law:
/// `G(lam) = (S lam^2 + T lam + U) / (Q + W lam)` on `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSegment<T> {
    /// Number of atoms active on the segment (`v <= 2 lam`).
    pub index: usize,
    pub lo: T,
    /// `+inf` for the last segment.
    pub hi: T,
    pub s: T,
    pub t: T,
    pub u: T,
    pub q: T,
    pub w: T,
}

impl<T: Scalar> DiscreteSegment<T> {
    pub fn value(&self, lam: T) -> T {
        (self.s * lam * lam + self.t * lam + self.u) / (self.q + self.w * lam)
    }

    /// Minimum of the rational piece over `[lo, min(hi, upper)]`.
    pub fn minimize(&self, upper: T) -> (T, T) {
        let lo = self.lo;
        let hi = self.hi.min(upper);
        let mut best = (lo, self.value(lo));
        let mut consider = |x: T| {
            if x >= lo && x <= hi {
                let v = self.value(x);
                if v < best.1 {
                    best = (x, v);
                }
            }
        };
        consider(hi);
        // stationary points: S W lam^2 + 2 S Q lam + (T Q - U W) = 0
        let qa = self.s * self.w;
        let qb = T::lit(2.0) * self.s * self.q;
        let qc = self.t * self.q - self.u * self.w;
        for root in quadratic_roots(qa, qb, qc) {
            consider(root);
        }
        best
    }
}

fn quadratic_roots<T: Scalar>(a: T, b: T, c: T) -> Vec<T> {
    if a == T::zero() {
        if b == T::zero() {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - T::lit(4.0) * a * c;
    if disc < T::zero() {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let qq = -T::lit(0.5) * (b + if b >= T::zero() { sq } else { -sq });
    let mut out = Vec::with_capacity(2);
    if qq != T::zero() {
        out.push(qq / a);
        out.push(c / qq);
    } else {
        out.push(T::zero());
    }
    out
}

/// Sorted atoms with duplicate values merged and null atoms dropped.
fn merge_atoms<T: Scalar>(atoms: &[(T, T)]) -> Vec<(T, T)> {
    let mut sorted: Vec<(T, T)> = atoms.iter().copied().filter(|a| a.1 > T::zero()).collect();
    sorted.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite atoms"));
    let mut merged: Vec<(T, T)> = Vec::with_capacity(sorted.len());
    for (v, p) in sorted {
        match merged.last_mut() {
            Some(last) if last.0 == v => last.1 = last.1 + p,
            _ => merged.push((v, p)),
        }
    }
    merged
}

/// Segment coefficients of `G` for an atomic law, covering `[0, inf)`.
pub fn discrete_segments<T: Scalar>(c: &ProblemConstants<T>, atoms: &[(T, T)]) -> Vec<DiscreteSegment<T>> {
    let atoms = merge_atoms(atoms);
    let mr = c.mu_rho();
    let (two, four, sixteen) = (T::lit(2.0), T::lit(4.0), T::lit(16.0));
    let (mut s1, mut s2, mut s3) = (T::zero(), T::zero(), T::zero());
    let mut out = Vec::with_capacity(atoms.len() + 1);
    for j in 0..=atoms.len() {
        if j > 0 {
            let (v, p) = atoms[j - 1];
            s1 = s1 + p * v;
            s2 = s2 + p * v * v;
            s3 = s3 + p * v * v * v;
        }
        let lo = if j == 0 { T::zero() } else { atoms[j - 1].0 / two };
        let hi = if j < atoms.len() { atoms[j].0 / two } else { T::infinity() };
        out.push(DiscreteSegment {
            index: j,
            lo,
            hi,
            s: c.h / (four * mr) * s1,
            t: c.k2 / (two * mr) * s1,
            u: c.k1 - c.k2 / (four * mr) * s2 - c.h / (sixteen * mr) * s3,
            q: c.k3 - s2 / (four * mr),
            w: s1 / (two * mr),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution<T> {
    pub result: SearchResult<T>,
    /// Segments intersecting `[0, lam*]`.
    pub segments: Vec<DiscreteSegment<T>>,
}

/// Exact minimization of `G` for an atomic law: each segment's rational
/// piece is minimized in closed form over its part of `[0, lam*]`.
pub fn minimize_g_discrete<T: Scalar>(c: &ProblemConstants<T>, atoms: &[(T, T)]) -> Result<DiscreteSolution<T>> {
    c.validate()?;
    crate::levy_core::check_atoms(atoms, "workload atoms")?;
    let star = lambda_star(c);
    let all = discrete_segments(c, atoms);
    let segments: Vec<DiscreteSegment<T>> = all.into_iter().filter(|s| s.lo <= star).collect();
    let mut best = (T::zero(), c.k1 / c.k3);
    let mut evaluations = 1;
    if star > T::zero() {
        for seg in &segments {
            let (x, v) = seg.minimize(star);
            evaluations += 4;
            if v < best.1 {
                best = (x, v);
            }
        }
    }
    Ok(DiscreteSolution {
        result: SearchResult {
            lambda_min: best.0,
            g_min: best.1,
            bracket: (T::zero(), star),
            error_bound: T::zero(),
            evaluations,
        },
        segments,
    })
}

/// Solution of the full problem for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub constants: ProblemConstants<T>,
    /// Optimal multiplier; `+inf` if a capped budget saturates.
    pub lambda: T,
    /// Optimal long-run average cost.
    pub objective: T,
    /// Optimal budget `E X`.
    pub budget: T,
    pub policy: RatePolicy<T>,
    /// Phase-II search details (uncapped problems only).
    pub search: Option<SearchResult<T>>,
}

/// Solves the reduced problem for given constants and law.
///
/// Without a minimal rate this minimizes `G` (exactly for atomic laws with
/// the discrete backend). With a minimal rate the allocation is capped at
/// `r0 V`; the ratio `(K1 + K2 a + h f(a)) / (K3 + a)` is then minimized
/// directly over budgets `a` in `[0, r0 E V]`, where it is quasi-convex
/// because `f` is convex.
pub fn solve_constants<T: Scalar>(
    constants: ProblemConstants<T>,
    vdist: &WorkloadDist<T>,
    backend: Backend,
    r_min: Option<T>,
) -> Result<Solution<T>> {
    let mu_rho = constants.mu_rho();
    let rho = constants.rho;
    let r = constants.r;
    match r_min {
        None => {
            let (search, budget) = if backend == Backend::DiscretePiecewise {
                let atoms = vdist.atoms().ok_or(Error::BackendMismatch {
                    backend: backend.name(),
                    law: vdist.name(),
                })?;
                let sol = minimize_g_discrete(&constants, &atoms)?;
                let lam = sol.result.lambda_min;
                (sol.result, waterfill::xi(vdist, lam, mu_rho, None))
            } else {
                let curve = GCurve::new(constants.clone(), vdist.clone(), backend)?;
                let res = curve.minimize();
                let a = a_of(vdist, res.lambda_min, backend)?;
                (res, a / (T::lit(2.0) * mu_rho))
            };
            Ok(Solution {
                lambda: search.lambda_min,
                objective: search.g_min,
                budget,
                policy: RatePolicy::WaterFill { lambda: search.lambda_min, mu_rho, r, r_min: None },
                constants,
                search: Some(search),
            })
        }
        Some(rm) => {
            if !(rm > rho) || r.is_some_and(|r| rm > r) {
                return Err(Error::invalid(format!("r_min = {rm} must lie in (rho, r]")));
            }
            let r0 = (rm - rho).recip() - crate::policy::inv_headroom(r, rho);
            let max = r0 * vdist.mean();
            let c = &constants;
            let ratio = |a: T| -> T {
                let f = waterfill::f_of_alpha(vdist, a, mu_rho, Some(r0)).map(|s| s.f_value);
                match f {
                    Ok(f) => (c.k1 + c.k2 * a + c.h * f) / (c.k3 + a),
                    Err(_) => T::infinity(),
                }
            };
            let tol = T::lit(1e-10) * max.max(T::one());
            let gs = golden_section(ratio, T::zero(), max, tol);
            let mut best = (gs.x, gs.fx);
            for edge in [T::zero(), max] {
                let v = ratio(edge);
                if v < best.1 {
                    best = (edge, v);
                }
            }
            let lambda = if best.0 > T::zero() {
                waterfill::solve_lambda_alpha(vdist, best.0, mu_rho, Some(r0))?
            } else {
                T::zero()
            };
            Ok(Solution {
                lambda,
                objective: best.1,
                budget: best.0,
                policy: RatePolicy::WaterFill { lambda, mu_rho, r, r_min: Some(rm) },
                constants,
                search: None,
            })
        }
    }
}

/// End-to-end solve from model primitives.
pub fn solve<T: Scalar>(
    exp: &LevyExponent<T>,
    vdist: &WorkloadDist<T>,
    off: &OffPeriodSpec<T>,
    costs: &CostParams<T>,
    backend: Backend,
) -> Result<Solution<T>> {
    let constants = constants_from_primitives(exp, vdist, off, costs)?;
    solve_constants(constants, vdist, backend, costs.r_min)
}

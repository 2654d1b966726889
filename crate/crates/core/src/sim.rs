//! Event-driven Monte Carlo simulation of the regenerative storage process.
//!
//! Input is compound Poisson plus drift, so the workload is piecewise
//! linear between jumps and every time integral (workload, `e^{-a W}`) is
//! accumulated in closed form per segment. No time grid is involved.
//!
//! Cycles are grouped into batches. Batch `b` draws from its own ChaCha
//! stream `(seed, b)` and batches are reduced in index order, so a report
//! depends only on the seed and the configuration, not on the thread count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cost_model::CostParams;
use crate::error::{Error, Result};
use crate::levy_core::{open_unit, LevyExponent};
use crate::policy::RatePolicy;
use crate::steady_state::{OffPeriodSpec, TauRule};

pub const DEFAULT_BATCH_COUNT: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub exp: LevyExponent<f64>,
    pub off: OffPeriodSpec<f64>,
    pub policy: RatePolicy<f64>,
    pub costs: CostParams<f64>,
    pub n_cycles: u64,
    pub seed: u64,
    pub batch_count: usize,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Arguments of the time-average transform estimates.
    pub lst_alphas: Vec<f64>,
}

impl SimConfig {
    pub fn new(
        exp: LevyExponent<f64>,
        off: OffPeriodSpec<f64>,
        policy: RatePolicy<f64>,
        costs: CostParams<f64>,
        n_cycles: u64,
        seed: u64,
    ) -> Result<Self> {
        let cfg = Self {
            exp,
            off,
            policy,
            costs,
            n_cycles,
            seed,
            batch_count: DEFAULT_BATCH_COUNT,
            threads: None,
            lst_alphas: Vec::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_count < 2 {
            return Err(Error::invalid("batch means need at least 2 batches"));
        }
        if self.n_cycles < 10 * self.batch_count as u64 {
            return Err(Error::invalid(format!(
                "{} cycles is fewer than 10 per batch for {} batches",
                self.n_cycles, self.batch_count
            )));
        }
        if matches!(self.off.tau_rule, TauRule::FirstJump) && self.exp.jumps().is_none() {
            return Err(Error::invalid("first-jump off periods need a jump component"));
        }
        match self.off.tau_rule {
            TauRule::FixedTime(t) if !(t > 0.0) => return Err(Error::invalid("fixed off time must be > 0")),
            TauRule::ExpTimer(r) if !(r > 0.0) => return Err(Error::invalid("timer rate must be > 0")),
            _ => {}
        }
        if self.lst_alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::invalid("transform arguments must be > 0"));
        }
        let rho = self.exp.rho();
        let floor = rho.max(self.exp.drift());
        match self.policy {
            RatePolicy::Constant { rate } if !(rate > floor) => Err(Error::UnstablePolicy(format!(
                "constant rate {rate} must exceed max(rho, c) = {floor}"
            ))),
            RatePolicy::AffineInV { slope } if !(slope > 0.0) => {
                Err(Error::UnstablePolicy(format!("affine slope {slope} must be > 0")))
            }
            RatePolicy::WaterFill { r, r_min, mu_rho, lambda } => {
                if !(mu_rho > 0.0) || !(lambda >= 0.0) {
                    return Err(Error::invalid("water-fill policy needs lambda >= 0 and mu rho > 0"));
                }
                if r.is_some_and(|r| !(r > floor)) || r_min.is_some_and(|m| !(m > floor)) {
                    return Err(Error::UnstablePolicy(format!("rate limits must exceed max(rho, c) = {floor}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Quantities of one regenerative cycle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CycleStats {
    pub off_time: f64,
    pub on_time: f64,
    /// Workload when output starts.
    pub v: f64,
    /// Output rate of the on period.
    pub rate: f64,
    pub cost: f64,
    /// `int W dt` over the off period.
    pub off_work: f64,
    /// `int W dt` over the on period.
    pub on_work: f64,
    /// `int e^{-a W} dt` over the whole cycle, one entry per `a`.
    pub lst: Vec<f64>,
    /// Jumps arriving during the on period.
    pub on_jumps: u64,
}

fn exp_draw<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -open_unit::<f64, _>(rng).ln() / rate
}

/// Adds a segment where `W` rises from `w` with slope `c` for time `s`.
fn rising_segment(stats: &mut CycleStats, alphas: &[f64], w: f64, c: f64, s: f64) {
    stats.off_work += w * s + 0.5 * c * s * s;
    for (acc, &a) in stats.lst.iter_mut().zip(alphas) {
        let ac = a * c;
        let inner = if ac > 0.0 { -(-ac * s).exp_m1() / ac } else { s };
        *acc += (-a * w).exp() * inner;
    }
}

/// Adds a segment where `W` falls from `w` with slope `-beta` for time `s`.
fn falling_segment(stats: &mut CycleStats, alphas: &[f64], w: f64, beta: f64, s: f64) {
    let end = (w - beta * s).max(0.0);
    stats.on_work += w * s - 0.5 * beta * s * s;
    for (acc, &a) in stats.lst.iter_mut().zip(alphas) {
        let ab = a * beta;
        *acc += (-a * end).exp() * (-(-ab * s).exp_m1()) / ab;
    }
}

/// Simulates one cycle starting from an empty system.
pub fn simulate_cycle<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<CycleStats> {
    let c = cfg.exp.drift();
    let jumps = cfg.exp.jumps();
    let alphas = &cfg.lst_alphas;
    let mut st = CycleStats { lst: vec![0.0; alphas.len()], ..Default::default() };

    let next_gap = |rng: &mut R| jumps.map_or(f64::INFINITY, |cp| exp_draw(rng, cp.rate));
    let jump_size = |rng: &mut R| jumps.map_or(0.0, |cp| cp.dist.sample(rng));

    // off period
    let mut w = 0.0;
    let mut t = 0.0;
    let mut end = match cfg.off.tau_rule {
        TauRule::FirstJump => f64::NAN,
        TauRule::FixedTime(x) => x,
        TauRule::ExpTimer(rate) => exp_draw(rng, rate),
    };
    if matches!(cfg.off.tau_rule, TauRule::FirstJump) {
        let s = next_gap(rng);
        rising_segment(&mut st, alphas, 0.0, c, s);
        w = c * s + jump_size(rng);
        t = s;
    } else {
        let mut next_jump = next_gap(rng);
        loop {
            if next_jump <= end {
                let s = next_jump - t;
                rising_segment(&mut st, alphas, w, c, s);
                w += c * s + jump_size(rng);
                t = next_jump;
                next_jump = t + next_gap(rng);
            } else {
                let s = end - t;
                rising_segment(&mut st, alphas, w, c, s);
                w += c * s;
                t = end;
                if w > 0.0 {
                    break;
                }
                // nothing has arrived: stay off until the first jump
                end = next_jump;
            }
        }
    }
    st.off_time = t;
    st.v = w;

    // on period
    let rate = cfg.policy.rate(w, cfg.exp.rho());
    st.rate = rate;
    if rate.is_infinite() {
        st.cost = cfg.costs.k + cfg.costs.h * st.off_work + cfg.costs.d * w;
        return Ok(st);
    }
    if !(rate > c) {
        return Err(Error::UnstablePolicy(format!(
            "rate {rate} at v = {w} does not exceed the drift {c}"
        )));
    }
    let beta = rate - c;
    let mut on = 0.0;
    loop {
        let gap = next_gap(rng);
        let hit = w / beta;
        if gap >= hit {
            falling_segment(&mut st, alphas, w, beta, hit);
            on += hit;
            break;
        }
        falling_segment(&mut st, alphas, w, beta, gap);
        w = w - beta * gap + jump_size(rng);
        on += gap;
        st.on_jumps += 1;
    }
    st.on_time = on;
    st.cost = cfg.costs.k + cfg.costs.h * (st.off_work + st.on_work) + cfg.costs.d * rate * on;
    Ok(st)
}

/// Per-batch sums.
#[derive(Debug, Clone, PartialEq, Default)]
struct BatchSums {
    cycles: f64,
    length: f64,
    cost: f64,
    work: f64,
    on_time: f64,
    on_work: f64,
    off_time: f64,
    off_work: f64,
    v: f64,
    lst: Vec<f64>,
}

impl BatchSums {
    fn add(&mut self, c: &CycleStats) {
        self.cycles += 1.0;
        self.length += c.off_time + c.on_time;
        self.cost += c.cost;
        self.work += c.off_work + c.on_work;
        self.on_time += c.on_time;
        self.on_work += c.on_work;
        self.off_time += c.off_time;
        self.off_work += c.off_work;
        self.v += c.v;
        for (a, b) in self.lst.iter_mut().zip(&c.lst) {
            *a += b;
        }
    }
}

fn run_batch(cfg: &SimConfig, index: usize, cycles: u64) -> Result<BatchSums> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let mut sums = BatchSums { lst: vec![0.0; cfg.lst_alphas.len()], ..Default::default() };
    for _ in 0..cycles {
        sums.add(&simulate_cycle(cfg, &mut rng)?);
    }
    Ok(sums)
}

/// Point estimate with a 95% batch-means confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub half_width: f64,
}

impl Estimate {
    /// Standardized distance of `target` from the estimate.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error > 0.0 {
            (self.value - target) / self.std_error
        } else if self.value == target {
            0.0
        } else {
            f64::INFINITY.copysign(self.value - target)
        }
    }

    pub fn covers(&self, target: f64, n_se: f64) -> bool {
        (self.value - target).abs() <= n_se * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub n_cycles: u64,
    pub batch_count: usize,
    /// Long-run average cost per unit time.
    pub avg_cost: Estimate,
    /// Jackknife estimate of the ratio-estimator bias of `avg_cost`.
    pub cost_jackknife_bias: f64,
    /// Time-average workload.
    pub mean_workload: Estimate,
    /// Fraction of time the output is on.
    pub on_fraction: Estimate,
    /// Time-average workload over on periods.
    pub on_mean_workload: Estimate,
    /// `int W dt` over the off period per cycle, i.e. `E tau E Z~`.
    pub off_work_per_cycle: Estimate,
    /// Time-average of `e^{-a W}`.
    pub lst_grid: Vec<(f64, Estimate)>,
    pub mean_cycle_length: Estimate,
    pub mean_off_time: Estimate,
    pub mean_v: Estimate,
    pub mean_t_on: Estimate,
}

struct Combiner<'a> {
    batches: &'a [BatchSums],
    t_quantile: f64,
}

impl Combiner<'_> {
    fn ratio(&self, num: impl Fn(&BatchSums) -> f64, den: impl Fn(&BatchSums) -> f64) -> (Estimate, f64) {
        let b = self.batches.len() as f64;
        let total_num: f64 = self.batches.iter().map(&num).sum();
        let total_den: f64 = self.batches.iter().map(&den).sum();
        let value = total_num / total_den;
        let ratios: Vec<f64> = self.batches.iter().map(|x| num(x) / den(x)).collect();
        let mean = ratios.iter().sum::<f64>() / b;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (b - 1.0);
        let std_error = (var / b).sqrt();
        let deleted_mean = self
            .batches
            .iter()
            .map(|x| (total_num - num(x)) / (total_den - den(x)))
            .sum::<f64>()
            / b;
        let bias = (b - 1.0) * (deleted_mean - value);
        (Estimate { value, std_error, half_width: self.t_quantile * std_error }, bias)
    }
}

/// Runs the simulation and reduces batch statistics into estimates.
pub fn run(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let b = cfg.batch_count;
    let base = cfg.n_cycles / b as u64;
    let extra = (cfg.n_cycles % b as u64) as usize;
    let sizes: Vec<u64> = (0..b).map(|i| base + u64::from(i < extra)).collect();
    let work = || -> Result<Vec<BatchSums>> {
        sizes.par_iter().enumerate().map(|(i, &n)| run_batch(cfg, i, n)).collect()
    };
    let batches = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let t_quantile = StudentsT::new(0.0, 1.0, (b - 1) as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.975);
    let comb = Combiner { batches: &batches, t_quantile };
    let (avg_cost, cost_jackknife_bias) = comb.ratio(|x| x.cost, |x| x.length);
    let per_cycle = |f: fn(&BatchSums) -> f64| comb.ratio(f, |x| x.cycles).0;
    let lst_grid = cfg
        .lst_alphas
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, comb.ratio(|x| x.lst[i], |x| x.length).0))
        .collect();
    Ok(SimReport {
        n_cycles: cfg.n_cycles,
        batch_count: b,
        avg_cost,
        cost_jackknife_bias,
        mean_workload: comb.ratio(|x| x.work, |x| x.length).0,
        on_fraction: comb.ratio(|x| x.on_time, |x| x.length).0,
        on_mean_workload: comb.ratio(|x| x.on_work, |x| x.on_time).0,
        off_work_per_cycle: per_cycle(|x| x.off_work),
        lst_grid,
        mean_cycle_length: per_cycle(|x| x.length),
        mean_off_time: per_cycle(|x| x.off_time),
        mean_v: per_cycle(|x| x.v),
        mean_t_on: per_cycle(|x| x.on_time),
    })
}

/// Time-average workload over on periods, the simulated counterpart of the
/// on-period steady-state mean.
pub fn estimate_ytilde_mean(cfg: &SimConfig) -> Result<Estimate> {
    Ok(run(cfg)?.on_mean_workload)
}

//! Subcommand implementations. Each writes one or more CSV files.

use std::path::{Path, PathBuf};

use levyrate::sim::{self, Estimate, SimConfig};
use levyrate::steady_state::policy_moments;
use levyrate::{
    lambda_star, solve_constants, solve_partial, steady_cost, ytilde_lst, ytilde_mean, Curve, PartialInfoModel,
    Policy, TauRule,
};

use crate::model::{ModelFile, Resolved};
use crate::CliError;

pub const THREADS_ENV: &str = "LEVYRATE_THREADS";

/// `out` with its extension replaced by `<tag>.csv`.
pub fn sidecar(out: &Path, tag: &str) -> PathBuf {
    out.with_extension(format!("{tag}.csv"))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

pub fn solve(file: &ModelFile, out: &Path) -> Result<(), CliError> {
    let m = file.resolve()?;
    let (c, warnings) = m.constants(&file.solver.overrides)?;
    warn_all(&warnings);
    let sol = solve_constants(c.clone(), &m.vdist, m.backend, m.costs.r_min)?;
    let row = vec![
        num(sol.lambda),
        num(sol.objective),
        opt(sol.search.as_ref().map(|s| s.error_bound)),
        num(c.k1),
        num(c.k2),
        num(c.k3),
        num(c.rho),
        num(c.mu),
        num(lambda_star(&c)),
        num(sol.budget),
        m.backend.name().to_string(),
    ];
    write_csv(
        out,
        &["lambda_min", "G_min", "error_bound", "K1", "K2", "K3", "rho", "mu", "lambda_star", "budget", "backend"],
        &[row],
    )?;
    let rates: Vec<Vec<String>> = m
        .rate_grid(file.solver.rate_grid)?
        .into_iter()
        .map(|v| vec![num(v), num(sol.policy.rate(v, c.rho))])
        .collect();
    write_csv(&sidecar(out, "rates"), &["v", "rate"], &rates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    #[value(name = "K")]
    K,
    #[value(name = "h")]
    H,
    #[value(name = "d")]
    D,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::K => "K",
            SweepParam::H => "h",
            SweepParam::D => "d",
        }
    }
}

/// Parses `start:end:count` into `count` evenly spaced points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Schema(format!("lambda grid '{spec}' must be start:end:count with start < end, count >= 2"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let end: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(start >= 0.0 && end > start && end.is_finite()) || count < 2 {
        return Err(bad());
    }
    Ok((0..count).map(|i| start + (end - start) * i as f64 / (count - 1) as f64).collect())
}

pub fn sweep(file: &ModelFile, out: &Path, param: SweepParam, values: &[f64], grid: &[f64]) -> Result<(), CliError> {
    if file.solver.overrides.touches_k() {
        return Err(CliError::Schema("sweep recomputes K1, K2, K3; remove those overrides".into()));
    }
    let base = file.resolve()?;
    let mut curves = Vec::new();
    let mut summary = Vec::new();
    for &value in values {
        let mut spec = file.costs.clone();
        match param {
            SweepParam::K => spec.k = value,
            SweepParam::H => spec.h = value,
            SweepParam::D => spec.d = value,
        }
        let costs = levyrate::Costs::new(spec.h, spec.k, spec.d, spec.r, spec.r_min)
            .map_err(|e| CliError::Schema(e.to_string()))?;
        let m = Resolved { costs, ..base.clone() };
        let (c, warnings) = m.constants(&file.solver.overrides)?;
        warn_all(&warnings);
        let curve = Curve::new(c.clone(), m.vdist.clone(), m.backend)?;
        for &lam in grid {
            curves.push(vec![param.name().to_string(), num(value), num(lam), num(curve.value(lam))]);
        }
        let sol = solve_constants(c, &m.vdist, m.backend, m.costs.r_min)?;
        summary.push(vec![
            param.name().to_string(),
            num(value),
            num(sol.lambda),
            num(sol.objective),
            opt(sol.search.as_ref().map(|s| s.error_bound)),
        ]);
    }
    write_csv(out, &["param", "param_value", "lambda", "G"], &curves)?;
    write_csv(
        &sidecar(out, "summary"),
        &["param", "param_value", "lambda_min", "G_min", "error_bound"],
        &summary,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyArg {
    Constant(f64),
    Affine(f64),
    Optimal,
}

pub fn parse_policy(s: &str) -> Result<PolicyArg, String> {
    if s == "optimal" {
        return Ok(PolicyArg::Optimal);
    }
    let (kind, val) = s.split_once(':').ok_or_else(|| format!("unknown policy '{s}'"))?;
    let x: f64 = val.parse().map_err(|_| format!("bad number in policy '{s}'"))?;
    match kind {
        "constant" => Ok(PolicyArg::Constant(x)),
        "affine" => Ok(PolicyArg::Affine(x)),
        _ => Err(format!("unknown policy kind '{kind}'")),
    }
}

pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Schema(format!("{THREADS_ENV} = '{s}' is not a positive integer"))),
        },
    }
}

struct Metric {
    name: String,
    est: Estimate,
    analytic: Option<f64>,
}

pub fn simulate(file: &ModelFile, out: &Path, policy: PolicyArg) -> Result<(), CliError> {
    let spec = file.sim.as_ref().ok_or_else(|| CliError::Schema("simulate needs a 'sim' section".into()))?;
    let m = file.resolve()?;
    m.check_rates(file.solver.overrides.rho)?;
    let rho = m.exp.rho();
    let policy = match policy {
        PolicyArg::Constant(rate) => Policy::Constant { rate },
        PolicyArg::Affine(slope) => Policy::AffineInV { slope },
        PolicyArg::Optimal => {
            let (c, warnings) = m.constants(&file.solver.overrides)?;
            warn_all(&warnings);
            solve_constants(c, &m.vdist, m.backend, m.costs.r_min)?.policy
        }
    };
    let cfg = SimConfig {
        exp: m.exp.clone(),
        off: m.off.clone(),
        policy: policy.clone(),
        costs: m.costs.clone(),
        n_cycles: spec.n_cycles,
        seed: spec.seed,
        batch_count: spec.batch_count,
        threads: threads_from_env()?,
        lst_alphas: spec.lst_alphas.clone(),
    };
    cfg.validate()?;
    let rep = sim::run(&cfg)?;

    let moments = policy_moments(&m.vdist, &policy, rho).ok();
    let tau = m.off.mean_tau;
    let product = m.off.off_mean_workload_product;
    let ymean = ytilde_mean(&m.exp, &m.vdist, &policy).ok();
    let busy = moments.map(|x| x.vg);
    let cycle = busy.map(|b| tau + b);
    // the off period holds no work only for first-jump rules without drift
    let empty_off = matches!(m.off.tau_rule, TauRule::FirstJump) && m.exp.drift() == 0.0;

    let mut metrics = vec![
        Metric {
            name: "avg_cost".into(),
            est: rep.avg_cost,
            analytic: steady_cost(&m.exp, &m.vdist, &policy, &m.off, &m.costs).ok(),
        },
        Metric {
            name: "mean_workload".into(),
            est: rep.mean_workload,
            analytic: match (busy, ymean, cycle) {
                (Some(b), Some(y), Some(cl)) => Some((product + b * y) / cl),
                _ => None,
            },
        },
        Metric { name: "on_fraction".into(), est: rep.on_fraction, analytic: busy.zip(cycle).map(|(b, cl)| b / cl) },
        Metric { name: "on_mean_workload".into(), est: rep.on_mean_workload, analytic: ymean },
        Metric { name: "off_work_per_cycle".into(), est: rep.off_work_per_cycle, analytic: Some(product) },
        Metric { name: "mean_cycle_length".into(), est: rep.mean_cycle_length, analytic: cycle },
        Metric { name: "mean_off_time".into(), est: rep.mean_off_time, analytic: Some(tau) },
        Metric { name: "mean_v".into(), est: rep.mean_v, analytic: Some(m.vdist.mean()) },
        Metric { name: "mean_t_on".into(), est: rep.mean_t_on, analytic: busy },
    ];
    for (a, est) in &rep.lst_grid {
        let analytic = match (empty_off, busy.zip(cycle)) {
            (true, Some((b, cl))) => ytilde_lst(&m.exp, &m.vdist, &policy, *a).ok().map(|y| (tau + b * y) / cl),
            _ => None,
        };
        metrics.push(Metric { name: format!("lst:{a}"), est: *est, analytic });
    }

    let mut rows: Vec<Vec<String>> = metrics
        .iter()
        .map(|x| {
            vec![
                x.name.clone(),
                num(x.est.value),
                num(x.est.half_width),
                opt(x.analytic),
                opt(x.analytic.map(|a| x.est.z_score(a))),
            ]
        })
        .collect();
    rows.push(vec![
        "cost_jackknife_bias".into(),
        num(rep.cost_jackknife_bias),
        String::new(),
        String::new(),
        String::new(),
    ]);
    write_csv(out, &["metric", "estimate", "half_width", "analytic", "z"], &rows)
}

pub fn partial(file: &ModelFile, out: &Path) -> Result<(), CliError> {
    let spec = file
        .partial_info
        .as_ref()
        .ok_or_else(|| CliError::Schema("partial needs a 'partial_info' section".into()))?;
    let m = file.resolve()?;
    m.check_rates(None)?;
    let n_dist: Vec<(u32, f64)> = spec
        .p
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (i as u32 + 1, p))
        .collect();
    let model = PartialInfoModel {
        n_dist,
        delta: spec.delta,
        sigma2: spec.sigma2,
        exp: m.exp.clone(),
        off: m.off.clone(),
        costs: m.costs.clone(),
    };
    model.validate().map_err(|e| CliError::Schema(e.to_string()))?;
    let sol = solve_partial(&model)?;
    let c = &sol.reduced.constants;
    write_csv(
        out,
        &["lambda_min", "cost", "K1", "K2", "K3", "rho", "mu", "delta", "sigma2"],
        &[vec![
            num(sol.lambda),
            num(sol.cost),
            num(c.k1),
            num(c.k2),
            num(c.k3),
            num(c.rho),
            num(c.mu),
            num(spec.delta),
            num(spec.sigma2),
        ]],
    )?;
    let segs: Vec<Vec<String>> = sol
        .discrete
        .segments
        .iter()
        .map(|s| {
            vec![
                s.index.to_string(),
                num(s.lo),
                num(s.hi),
                num(s.s),
                num(s.t),
                num(s.u),
                num(s.q),
                num(s.w),
            ]
        })
        .collect();
    write_csv(&sidecar(out, "segments"), &["i", "lo", "hi", "S", "T", "U", "Q", "W"], &segs)?;
    let rates: Vec<Vec<String>> = sol.rates.iter().map(|&(n, r)| vec![n.to_string(), num(r)]).collect();
    write_csv(&sidecar(out, "rates"), &["n", "rate"], &rates)
}

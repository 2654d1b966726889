//! JSON model file schema and its translation into solver inputs.

use std::path::Path;

use levyrate::{
    constants_from_primitives, Backend, CompoundPoisson, Constants, Costs, Exponent, Jumps, OffPeriod,
    TauRule, Workload,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub input: InputSpec,
    #[serde(rename = "workload_V")]
    pub workload_v: WorkloadSpec,
    pub off: OffSpec,
    pub costs: CostSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    pub sim: Option<SimSpec>,
    pub partial_info: Option<PartialSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub poisson_rate: f64,
    pub jump: Option<JumpSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpSpec {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Deterministic { size: f64 },
    Discrete { atoms: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum WorkloadSpec {
    Derived(DerivedWorkload),
    Law(LawSpec),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedWorkload {
    FromInputFirstJump,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Discrete { atoms: Vec<(f64, f64)> },
    Empirical { samples: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffSpec {
    pub mean_tau: Option<f64>,
    pub rule: RuleSpec,
    #[serde(rename = "injected_hEtauEZ")]
    pub injected: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleSpec {
    FirstJump,
    FixedTime(f64),
    ExpTimer(f64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub h: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(default)]
    pub d: f64,
    pub r: Option<f64>,
    pub r_min: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub backend: BackendSpec,
    #[serde(default)]
    pub overrides: Overrides,
    pub rate_grid: Option<GridSpec>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendSpec {
    #[default]
    Auto,
    Exponential,
    Uniform,
    Discrete,
    Quadrature,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub rho: Option<f64>,
    pub mu: Option<f64>,
    #[serde(rename = "K1")]
    pub k1: Option<f64>,
    #[serde(rename = "K2")]
    pub k2: Option<f64>,
    #[serde(rename = "K3")]
    pub k3: Option<f64>,
}

impl Overrides {
    pub fn touches_k(&self) -> bool {
        self.k1.is_some() || self.k2.is_some() || self.k3.is_some()
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub v_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n_cycles: u64,
    pub seed: u64,
    #[serde(default = "default_batches")]
    pub batch_count: usize,
    #[serde(default)]
    pub lst_alphas: Vec<f64>,
}

fn default_batches() -> usize {
    levyrate::sim::DEFAULT_BATCH_COUNT
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialSpec {
    /// `p[i] = P(N = i + 1)`.
    pub p: Vec<f64>,
    pub delta: f64,
    #[serde(default)]
    pub sigma2: f64,
}

pub fn load(path: &Path) -> Result<ModelFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn schema(e: levyrate::Error) -> CliError {
    CliError::Schema(e.to_string())
}

/// Model primitives resolved from a file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub exp: Exponent,
    pub vdist: Workload,
    pub off: OffPeriod,
    pub costs: Costs,
    pub backend: Backend,
}

impl ModelFile {
    pub fn exponent(&self) -> Result<Exponent, CliError> {
        let jumps = match &self.input.jump {
            None if self.input.poisson_rate == 0.0 => None,
            None => return Err(CliError::Schema("input.poisson_rate > 0 needs input.jump".into())),
            Some(j) => {
                let dist = match j {
                    JumpSpec::Exponential { rate } => Jumps::Exponential { rate: *rate },
                    JumpSpec::Uniform { lo, hi } => Jumps::Uniform { lo: *lo, hi: *hi },
                    JumpSpec::Deterministic { size } => Jumps::Deterministic { size: *size },
                    JumpSpec::Discrete { atoms } => Jumps::DiscreteAtoms(atoms.clone()),
                };
                Some(CompoundPoisson { rate: self.input.poisson_rate, dist })
            }
        };
        Exponent::new(self.input.drift, jumps).map_err(schema)
    }

    pub fn costs(&self) -> Result<Costs, CliError> {
        let c = &self.costs;
        Costs::new(c.h, c.k, c.d, c.r, c.r_min).map_err(schema)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let exp = self.exponent()?;
        let costs = self.costs()?;
        let first_jump = matches!(self.off.rule, RuleSpec::FirstJump);
        let vdist = match &self.workload_v {
            WorkloadSpec::Derived(DerivedWorkload::FromInputFirstJump) => {
                if !first_jump {
                    return Err(CliError::Schema(
                        "workload_V = from_input_first_jump needs off.rule = first_jump".into(),
                    ));
                }
                if exp.drift() != 0.0 {
                    return Err(CliError::Schema(
                        "workload_V = from_input_first_jump needs input.drift = 0; give workload_V explicitly".into(),
                    ));
                }
                let cp = exp.jumps().ok_or_else(|| CliError::Schema("no jump component".into()))?;
                match &cp.dist {
                    Jumps::Exponential { rate } => Workload::Exponential { rate: *rate },
                    Jumps::Uniform { lo, hi } => Workload::Uniform { lo: *lo, hi: *hi },
                    Jumps::Deterministic { size } => Workload::DiscreteAtoms(vec![(*size, 1.0)]),
                    Jumps::DiscreteAtoms(a) => Workload::DiscreteAtoms(a.clone()),
                }
            }
            WorkloadSpec::Law(l) => match l {
                LawSpec::Exponential { rate } => Workload::Exponential { rate: *rate },
                LawSpec::Uniform { lo, hi } => Workload::Uniform { lo: *lo, hi: *hi },
                LawSpec::Discrete { atoms } => Workload::DiscreteAtoms(atoms.clone()),
                LawSpec::Empirical { samples } => Workload::Empirical(samples.clone()),
            },
        };
        vdist.validate().map_err(schema)?;

        let rule = match self.off.rule {
            RuleSpec::FirstJump => TauRule::FirstJump,
            RuleSpec::FixedTime(t) => TauRule::FixedTime(t),
            RuleSpec::ExpTimer(r) => TauRule::ExpTimer(r),
        };
        let nu = exp.jumps().map_or(0.0, |cp| cp.rate);
        let mean_tau = match (self.off.mean_tau, rule) {
            (Some(m), _) => m,
            (None, TauRule::FirstJump) if nu > 0.0 => 1.0 / nu,
            _ => return Err(CliError::Schema("off.mean_tau is required for this off rule".into())),
        };
        // off-period workload under first-jump: c t for t < tau ~ Exp(nu)
        let product = match (self.off.injected, rule) {
            (Some(x), _) => x / costs.h,
            (None, TauRule::FirstJump) if nu > 0.0 => exp.drift() / (nu * nu),
            _ => 0.0,
        };
        let off = OffPeriod::new(mean_tau, product, rule).map_err(schema)?;

        let backend = match self.solver.backend {
            BackendSpec::Auto => Backend::natural(&vdist),
            BackendSpec::Exponential => Backend::ClosedFormExponential,
            BackendSpec::Uniform => Backend::ClosedFormUniform,
            BackendSpec::Discrete => Backend::DiscretePiecewise,
            BackendSpec::Quadrature => Backend::Quadrature,
        };
        Ok(Resolved { exp, vdist, off, costs, backend })
    }
}

impl Resolved {
    /// Constants from the primitives, with overrides applied. Returns the
    /// constants and one warning per override that changes a value.
    pub fn constants(&self, ov: &Overrides) -> Result<(Constants, Vec<String>), CliError> {
        self.check_rates(ov.rho)?;
        let mut c = constants_from_primitives(&self.exp, &self.vdist, &self.off, &self.costs)?;
        let mut warnings = Vec::new();
        let mut set = |name: &str, slot: &mut f64, val: Option<f64>| {
            if let Some(v) = val {
                if (v - *slot).abs() > 1e-12 * slot.abs().max(1.0) {
                    warnings.push(format!("override {name} = {v} replaces derived value {}", *slot));
                }
                *slot = v;
            }
        };
        set("rho", &mut c.rho, ov.rho);
        set("mu", &mut c.mu, ov.mu);
        set("K1", &mut c.k1, ov.k1);
        set("K2", &mut c.k2, ov.k2);
        set("K3", &mut c.k3, ov.k3);
        c.validate().map_err(schema)?;
        Ok((c, warnings))
    }

    /// Fails with the infeasible-model error when a rate limit does not
    /// exceed the input rate.
    pub fn check_rates(&self, rho_override: Option<f64>) -> Result<(), CliError> {
        let rho = self.exp.rho();
        self.costs.check_rates(rho).map_err(|e| CliError::Infeasible(e.to_string()))?;
        if let Some(rho) = rho_override {
            self.costs.check_rates(rho).map_err(|e| CliError::Infeasible(e.to_string()))?;
        }
        Ok(())
    }

    /// Rate-table abscissae: `points` values on `[0, v_max]`.
    pub fn rate_grid(&self, spec: Option<GridSpec>) -> Result<Vec<f64>, CliError> {
        let (v_max, points) = match spec {
            Some(g) => (g.v_max, g.points),
            None => (self.vdist.ess_sup().unwrap_or_else(|| self.vdist.envelope_sup()), 101),
        };
        if !(v_max > 0.0) || points < 2 {
            return Err(CliError::Schema("solver.rate_grid needs v_max > 0 and points >= 2".into()));
        }
        Ok((0..points).map(|i| v_max * i as f64 / (points - 1) as f64).collect())
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::closure::RootChoice;
use crate::error::{Error, Result};
use crate::models::{BirthDeathModel, ModelKind, QuadraticParams};
use crate::pmf::PmfVector;
use crate::solve::{
    solve_closure, BasisPolicy, ClosureOptions, GalerkinOptions, Integrator, ReferenceOptions, SimulationOptions,
    TimeGrid,
};
use crate::special::poisson_quantile_upper;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    PointMass { x: usize },
    Poisson { mean: f64 },
    Pmf { p: Vec<f64> },
}

impl InitialCondition {
    pub fn pmf(&self, x_max: usize) -> Result<PmfVector> {
        match self {
            InitialCondition::PointMass { x } => PmfVector::point_mass(*x, x_max),
            InitialCondition::Poisson { mean } => PmfVector::poisson(*mean, x_max),
            InitialCondition::Pmf { p } => {
                if p.len() > x_max + 1 {
                    return Err(Error::Config(format!("initial pmf longer than the grid {{0..{x_max}}}")));
                }
                let mut v = p.clone();
                v.resize(x_max + 1, 0.0);
                PmfVector::new(v)
            }
        }
    }

    fn support_hint(&self) -> usize {
        match self {
            InitialCondition::PointMass { x } => *x,
            InitialCondition::Poisson { mean } => poisson_quantile_upper(*mean, 1e-14),
            InitialCondition::Pmf { p } => p.len().saturating_sub(1),
        }
    }
}

/// Ground truth for error tables.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceKind {
    /// Truncated master equation.
    #[default]
    Cme,
    /// High-order Galerkin solution of the given order.
    Galerkin { order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub policy: BasisPolicy,
    pub reproject_dt: Option<f64>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { policy: BasisPolicy::ClosureAverage, reproject_dt: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub groups: usize,
    pub window: f64,
    /// Defaults to ten evenly spaced times in `(t0, T]`.
    pub checkpoints: Option<Vec<f64>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let d = SimulationOptions::default();
        Self { n_paths: d.n_paths, groups: d.groups, window: d.window, checkpoints: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub table: Option<PathBuf>,
    pub figures: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_horizon() -> f64 {
    10.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_orders() -> Vec<usize> {
    (1..=7).collect()
}
fn default_seed() -> u64 {
    1
}

/// A complete, declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub model: ModelKind,
    pub initial: InitialCondition,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt_out: f64,
    #[serde(default = "default_dt")]
    pub dt_int: f64,
    /// Reference grid bound; chosen from the closure mean when absent.
    #[serde(default)]
    pub x_max: Option<usize>,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub reference: ReferenceKind,
    #[serde(default)]
    pub closure_root: RootChoice,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.grid()?;
        if self.orders.is_empty() || self.orders.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("orders must be a nonempty, strictly increasing list".into()));
        }
        if let Some(x) = self.x_max {
            if x < self.initial.support_hint() {
                return Err(Error::Config(format!("x_max = {x} does not cover the initial condition")));
            }
        }
        if let Some(dt) = self.basis.reproject_dt {
            if !(dt > 0.0) {
                return Err(Error::Config("basis.reproject_dt must be positive".into()));
            }
        }
        self.model()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t0, self.horizon, self.dt_out, self.dt_int)
    }

    pub fn model(&self) -> Result<BirthDeathModel> {
        BirthDeathModel::from_params(self.model.clone(), self.x_max.unwrap_or(200))
    }

    /// Canonical JSON: the serialized form with every default filled in.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Grid bound for the reference solver.
    ///
    /// Without an explicit value, it is taken from the largest zeroth-order
    /// closure mean `M` over the run as the `1e-14` Poisson quantile of `2M`,
    /// which leaves room for over-dispersion.
    pub fn reference_x_max(&self) -> Result<usize> {
        if let Some(x) = self.x_max {
            return Ok(x);
        }
        let model = self.model()?;
        let init = self.initial.pmf(self.initial.support_hint().max(1))?.moments();
        let traj = solve_closure(
            &model,
            crate::closure::ClosureOrder::Zeroth,
            &init,
            &self.grid()?,
            &ClosureOptions { integrator: self.integrator, root: self.closure_root },
        )?;
        let m_max = traj.values.iter().map(|r| r.moments.mean).fold(1.0, f64::max);
        let mut x = poisson_quantile_upper(2.0 * m_max, 1e-14).max(self.initial.support_hint() + 10);
        if let ModelKind::Quadratic(QuadraticParams::Logistic { capacity, .. }) = &self.model {
            x = x.min(capacity + 10).max(self.initial.support_hint() + 10);
        }
        Ok(x)
    }

    pub fn simulation_options(&self) -> SimulationOptions {
        SimulationOptions {
            n_paths: self.simulation.n_paths,
            seed: self.seed,
            t0: self.t0,
            groups: self.simulation.groups,
            window: self.simulation.window,
        }
    }

    pub fn checkpoints(&self) -> Vec<f64> {
        self.simulation.checkpoints.clone().unwrap_or_else(|| {
            (1..=10).map(|i| self.t0 + (self.horizon - self.t0) * i as f64 / 10.0).collect()
        })
    }

    pub fn reference_options(&self) -> ReferenceOptions {
        ReferenceOptions { integrator: self.integrator, ..Default::default() }
    }

    pub fn galerkin_options(&self) -> GalerkinOptions {
        GalerkinOptions { integrator: self.integrator, reproject_dt: self.basis.reproject_dt, ..Default::default() }
    }

    pub fn delay_threshold(&self) -> Option<usize> {
        match &self.model {
            ModelKind::ErlangA(p) => Some(p.c),
            ModelKind::ErlangLoss(p) => Some(p.c),
            _ => None,
        }
    }
}

//! Time integration of the master equation, its Galerkin projection, the
//! moment closures and a stochastic simulation cross-check.

mod closure_solver;
mod galerkin;
pub mod integrate;
mod reference;
mod simulate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use closure_solver::{closure_rhs, solve_closure, ClosureOptions, ClosureRecord};
pub use galerkin::{
    closure_average_parameter, galerkin_matrix, solve_galerkin, BasisPolicy, GalerkinOptions, GalerkinSolution, MIN_BASIS_A,
};
pub use integrate::{integrate, integrate_with, Integrator, Method};
pub use reference::{solve_reference, ReferenceOptions, ReferenceSolution};
pub use simulate::{simulate_paths, SimulationOptions, SimulationSummary};

/// Output times `t0, t0 + dt_out, ..., t_end` with `dt_int` as the
/// integration step (fixed for RK4, initial for RK45).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub dt_out: f64,
    pub dt_int: f64,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, dt_out: f64, dt_int: f64) -> Result<Self> {
        let g = Self { t0, t_end, dt_out, dt_int };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.t0, self.t_end, self.dt_out, self.dt_int].iter().all(|v| v.is_finite());
        if !finite || self.t_end <= self.t0 || self.dt_out <= 0.0 || self.dt_int <= 0.0 {
            return Err(Error::Config(format!("invalid time grid {self:?}")));
        }
        let n = (self.t_end - self.t0) / self.dt_out;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) {
            return Err(Error::Config(format!("dt_out = {} does not divide [t0, t_end]", self.dt_out)));
        }
        if self.dt_int > self.dt_out * (1.0 + 1e-12) {
            return Err(Error::Config("dt_int must not exceed dt_out".into()));
        }
        Ok(())
    }

    pub fn n_out(&self) -> usize {
        ((self.t_end - self.t0) / self.dt_out).round() as usize
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_out() {
            self.t_end
        } else {
            self.t0 + i as f64 * self.dt_out
        }
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_out()).map(|i| self.time(i)).collect()
    }

    /// Integration substeps per output interval.
    pub fn substeps(&self) -> usize {
        ((self.dt_out / self.dt_int).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub solver: String,
    /// Largest |total mass - 1| seen at output times.
    pub max_mass_drift: f64,
    /// Largest probability at the truncation boundary.
    pub max_boundary_mass: f64,
    /// Fraction of output times at which moment matching fell back or clamped.
    pub flag_fraction: f64,
    pub warnings: Vec<String>,
}

impl TrajectoryMeta {
    pub fn new(solver: &str) -> Self {
        Self { solver: solver.to_string(), ..Default::default() }
    }

    pub(crate) fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<V> {
    pub times: Vec<f64>,
    pub values: Vec<V>,
    pub meta: TrajectoryMeta,
}

impl<V> Trajectory<V> {
    pub fn with_capacity(n: usize, meta: TrajectoryMeta) -> Self {
        Self { times: Vec::with_capacity(n), values: Vec::with_capacity(n), meta }
    }

    pub fn push(&mut self, t: f64, v: V) {
        self.times.push(t);
        self.values.push(v);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn map<U>(&self, f: impl Fn(&V) -> U) -> Vec<U> {
        self.values.iter().map(f).collect()
    }
}

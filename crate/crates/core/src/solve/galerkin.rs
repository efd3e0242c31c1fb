use serde::{Deserialize, Serialize};

use crate::charlier::{CharlierBasis, CharlierTable};
use crate::closure::{ClosureOrder, MomentState};
use crate::error::{Error, Result};
use crate::models::{BirthDeathModel, RateTable};
use crate::pmf::{moments_of, PmfVector};
use crate::special::compensated_sum;

use super::closure_solver::{solve_closure, ClosureOptions};
use super::integrate::{integrate_with, Integrator};
use super::{TimeGrid, Trajectory, TrajectoryMeta};

/// How the basis parameter `a` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisPolicy {
    Fixed { a: f64 },
    /// Time average of the zeroth-order closure mean over the run.
    #[default]
    ClosureAverage,
    /// Mean of the initial density, floored at `MIN_BASIS_A` so that a
    /// point mass at zero gets a usable basis.
    InitialMean,
}

pub const MIN_BASIS_A: f64 = 1e-2;

impl BasisPolicy {
    pub fn resolve(&self, model: &BirthDeathModel, p0: &PmfVector, grid: &TimeGrid) -> Result<f64> {
        let a = match *self {
            BasisPolicy::Fixed { a } => a,
            BasisPolicy::ClosureAverage => closure_average_parameter(model, &p0.moments(), grid)?,
            BasisPolicy::InitialMean => p0.mean().max(MIN_BASIS_A),
        };
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Config(format!("basis parameter must be positive, got {a}")));
        }
        Ok(a)
    }
}

/// Trapezoid time average of the zeroth-order closure mean.
pub fn closure_average_parameter(model: &BirthDeathModel, init: &MomentState, grid: &TimeGrid) -> Result<f64> {
    let traj = solve_closure(model, ClosureOrder::Zeroth, init, grid, &ClosureOptions::default())?;
    let mut acc = 0.0;
    for i in 1..traj.len() {
        let h = traj.times[i] - traj.times[i - 1];
        acc += 0.5 * h * (traj.values[i].moments.mean + traj.values[i - 1].moments.mean);
    }
    Ok(acc / (grid.t_end - grid.t0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GalerkinOptions {
    pub integrator: Integrator,
    /// Re-centre the basis at the current mean every `reproject_dt` time
    /// units (rounded to whole output steps).
    pub reproject_dt: Option<f64>,
    pub keep_coeffs: bool,
    pub delay_threshold: Option<usize>,
    /// Drift of `c_0` from 1 that gets reported as a warning.
    pub c0_tolerance: f64,
}

impl Default for GalerkinOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::default(),
            reproject_dt: None,
            keep_coeffs: false,
            delay_threshold: None,
            c0_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GalerkinSolution {
    pub trajectory: Trajectory<MomentState>,
    pub coeffs: Option<Vec<Vec<f64>>>,
    pub delay: Option<Vec<f64>>,
    /// Basis in use from each time on; one entry unless re-projecting.
    pub bases: Vec<(f64, CharlierBasis)>,
    pub max_c0_drift: f64,
}

fn restrict(p: &[f64], len: usize) -> (Vec<f64>, f64) {
    let mut out = vec![0.0; len];
    let n = p.len().min(len);
    out[..n].copy_from_slice(&p[..n]);
    let lost = if p.len() > len { compensated_sum(p[len..].iter().map(|v| v.abs())) } else { 0.0 };
    (out, lost)
}

/// The Galerkin generator `M_ij = <A(t) w C̄_j, C̄_i>` at time `t`.
pub fn galerkin_matrix(model: &BirthDeathModel, table: &CharlierTable, t: f64) -> Vec<Vec<f64>> {
    let basis = table.basis();
    let len = basis.len();
    let n = basis.x_max() + 1;
    let rates = RateTable::extended(model, t, basis.x_max());
    let mut m = vec![vec![0.0; len]; len];
    let mut e = vec![0.0; len];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut col = vec![0.0; len];
    for j in 0..len {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        table.reconstruct_into(&e, &mut p);
        rates.apply(&p, &mut ap);
        table.project_into(&ap, &mut col);
        for i in 0..len {
            m[i][j] = col[i];
        }
    }
    m
}

/// Integrates the projected forward equation `c' = M(t) c`.
///
/// `M` is applied matrix-free: rebuild `p_N`, apply the truncated generator
/// and project back. Moments are taken from the rebuilt `p_N`. Rates are
/// taken from `BirthDeathModel::birth_extended`, since `p_N` is not confined
/// to the natural state space.
pub fn solve_galerkin(
    model: &BirthDeathModel,
    p0: &PmfVector,
    basis: CharlierBasis,
    grid: &TimeGrid,
    opts: &GalerkinOptions,
) -> Result<GalerkinSolution> {
    grid.validate()?;
    let n_out = grid.n_out();
    let seg = match opts.reproject_dt {
        Some(dt) if dt > 0.0 => ((dt / grid.dt_out).round() as usize).max(1),
        Some(dt) => return Err(Error::Config(format!("reproject_dt must be positive, got {dt}"))),
        None => n_out,
    };
    let mut sol = GalerkinSolution {
        trajectory: Trajectory::with_capacity(n_out + 1, TrajectoryMeta::new("galerkin")),
        coeffs: opts.keep_coeffs.then(Vec::new),
        delay: opts.delay_threshold.map(|_| Vec::new()),
        bases: Vec::new(),
        max_c0_drift: 0.0,
    };

    let mut basis = basis;
    let mut p = p0.as_slice().to_vec();
    let mut start = 0;
    while start < n_out {
        let end = (start + seg).min(n_out);
        let sub = TimeGrid::new(grid.time(start), grid.time(end), grid.dt_out, grid.dt_int)?;
        let table = basis.tabulate();
        let len_x = basis.x_max() + 1;
        let (p_in, lost) = restrict(&p, len_x);
        if lost > 1e-12 {
            sol.trajectory.meta.warn(format!("{lost:.2e} of the density lies beyond the basis grid"));
        }
        let mut c = vec![0.0; basis.len()];
        table.project_into(&p_in, &mut c);
        sol.bases.push((sub.t0, basis));
        p = run_segment(model, &table, &c, &sub, opts, start > 0, &mut sol)?;

        start = end;
        if start < n_out {
            let mean = compensated_sum(p.iter().enumerate().map(|(x, v)| x as f64 * v));
            if mean > 0.0 && mean.is_finite() {
                // Never shrink the grid: the density may not have settled
                // around the new centre yet.
                let fresh = CharlierBasis::new(mean, basis.order())?;
                basis = CharlierBasis::with_x_max(mean, basis.order(), fresh.x_max().max(basis.x_max()))?;
            }
        }
    }
    Ok(sol)
}

fn run_segment(
    model: &BirthDeathModel,
    table: &CharlierTable,
    c0: &[f64],
    grid: &TimeGrid,
    opts: &GalerkinOptions,
    skip_first: bool,
    sol: &mut GalerkinSolution,
) -> Result<Vec<f64>> {
    let x_max = table.basis().x_max();
    let mut p = vec![0.0; x_max + 1];
    let mut ap = vec![0.0; x_max + 1];
    let mut rhs = |t: f64, c: &[f64], dc: &mut [f64]| -> Result<()> {
        table.reconstruct_into(c, &mut p);
        RateTable::extended(model, t, x_max).apply(&p, &mut ap);
        table.project_fast(&ap, dc);
        Ok(())
    };
    let mut last = vec![0.0; x_max + 1];
    let mut warned = false;
    integrate_with(&mut rhs, c0, grid, &opts.integrator, |i, t, c| {
        table.reconstruct_into(c, &mut last);
        if i == 0 && skip_first {
            return Ok(());
        }
        let drift = (c[0] - 1.0).abs();
        sol.max_c0_drift = sol.max_c0_drift.max(drift);
        if drift > opts.c0_tolerance && !warned {
            warned = true;
            sol.trajectory.meta.warn(format!("c_0 drifted by {drift:.3e} at t = {t}"));
        }
        let mass = compensated_sum(last.iter().copied());
        sol.trajectory.meta.max_mass_drift = sol.trajectory.meta.max_mass_drift.max((mass - 1.0).abs());
        sol.trajectory.push(t, moments_of(&last));
        if let Some(v) = sol.coeffs.as_mut() {
            v.push(c.to_vec());
        }
        if let (Some(d), Some(k)) = (sol.delay.as_mut(), opts.delay_threshold) {
            d.push(compensated_sum(last.iter().skip(k).copied()));
        }
        Ok(())
    })?;
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_erlang_a, make_infinite_server, ErlangAParams, TimeFunction};

    #[test]
    fn matrix_conserves_mass() {
        let model = make_erlang_a(ErlangAParams { lambda: TimeFunction::constant(9.0), mu: 1.0, beta: 0.5, c: 8 })
            .unwrap();
        let table = CharlierBasis::new(8.0, 6).unwrap().tabulate();
        let m = galerkin_matrix(&model, &table, 0.0);
        for v in &m[0] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_server_mean_is_exact_at_first_order() {
        // Linear rates: the moment equations for the mean close on degree
        // one, so N = 1 already reproduces m' = λ - μ m.
        let model = make_infinite_server(TimeFunction::constant(6.0), 1.0).unwrap();
        let basis = CharlierBasis::new(5.0, 1).unwrap();
        let p0 = PmfVector::poisson(3.0, basis.x_max()).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 0.25, 1e-3).unwrap();
        let sol = solve_galerkin(&model, &p0, basis, &grid, &GalerkinOptions::default()).unwrap();
        for (t, m) in sol.trajectory.times.iter().zip(&sol.trajectory.values) {
            let exact = 6.0 + (3.0 - 6.0) * (-t).exp();
            assert!((m.mean - exact).abs() < 1e-9, "t={t}: {}", m.mean);
        }
        assert!(sol.max_c0_drift < 1e-12);
    }

    #[test]
    fn reprojection_tracks_the_mean() {
        let model = make_infinite_server(TimeFunction::constant(30.0), 1.0).unwrap();
        let basis = CharlierBasis::new(5.0, 4).unwrap();
        let p0 = PmfVector::poisson(5.0, basis.x_max()).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 0.1, 1e-3).unwrap();
        let opts = GalerkinOptions { reproject_dt: Some(0.2), ..Default::default() };
        let sol = solve_galerkin(&model, &p0, basis, &grid, &opts).unwrap();
        assert_eq!(sol.trajectory.len(), 11);
        assert_eq!(sol.bases.len(), 5);
        let exact = 30.0 + (5.0 - 30.0) * (-1.0f64).exp();
        assert!((sol.trajectory.values[10].mean - exact).abs() < 1e-6);
        assert!(sol.bases[4].1.a() > 15.0);
    }
}

use serde::{Deserialize, Serialize};

use crate::closure::MomentState;
use crate::error::{Error, Result};
use crate::models::{BirthDeathModel, RateTable};
use crate::pmf::{moments_of, PmfVector};
use crate::special::compensated_sum;

use super::integrate::{integrate_with, Integrator};
use super::{TimeGrid, Trajectory, TrajectoryMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceOptions {
    pub integrator: Integrator,
    /// Keep the full pmf at every output time.
    pub keep_pmfs: bool,
    /// Also record `P(Q >= c)` at every output time.
    pub delay_threshold: Option<usize>,
    pub boundary_warn: f64,
    pub boundary_error: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::default(),
            keep_pmfs: false,
            delay_threshold: None,
            boundary_warn: 1e-8,
            boundary_error: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub trajectory: Trajectory<MomentState>,
    pub pmfs: Option<Vec<PmfVector>>,
    pub delay: Option<Vec<f64>>,
}

/// Integrates the forward equation truncated to the grid of `p0`.
///
/// Births out of the last state are suppressed, so mass is conserved; the
/// probability sitting at the boundary is monitored instead.
pub fn solve_reference(
    model: &BirthDeathModel,
    p0: &PmfVector,
    grid: &TimeGrid,
    opts: &ReferenceOptions,
) -> Result<ReferenceSolution> {
    grid.validate()?;
    let x_max = p0.x_max();
    if x_max == 0 {
        return Err(Error::Config("reference grid needs at least two states".into()));
    }
    let mut rhs = |t: f64, p: &[f64], dp: &mut [f64]| -> Result<()> {
        RateTable::new(model, t, x_max).apply(p, dp);
        Ok(())
    };

    let n = grid.n_out() + 1;
    let mut traj = Trajectory::with_capacity(n, TrajectoryMeta::new("reference"));
    let mut pmfs = opts.keep_pmfs.then(|| Vec::with_capacity(n));
    let mut delay = opts.delay_threshold.map(|_| Vec::with_capacity(n));
    let mut warned = false;

    integrate_with(&mut rhs, p0.as_slice(), grid, &opts.integrator, |_, t, p| {
        let boundary = p[x_max].abs();
        if boundary > opts.boundary_error {
            return Err(Error::BoundaryMass { t, mass: boundary });
        }
        if boundary > opts.boundary_warn && !warned {
            warned = true;
            traj.meta.warn(format!("boundary mass {boundary:.3e} at t = {t} exceeds {:.1e}", opts.boundary_warn));
        }
        traj.meta.max_boundary_mass = traj.meta.max_boundary_mass.max(boundary);
        let mass = compensated_sum(p.iter().copied());
        traj.meta.max_mass_drift = traj.meta.max_mass_drift.max((mass - 1.0).abs());
        traj.push(t, moments_of(p));
        if let (Some(d), Some(c)) = (delay.as_mut(), opts.delay_threshold) {
            d.push(compensated_sum(p.iter().skip(c).copied()));
        }
        if let Some(v) = pmfs.as_mut() {
            v.push(PmfVector::new(p.to_vec())?);
        }
        Ok(())
    })?;

    Ok(ReferenceSolution { trajectory: traj, pmfs, delay })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_erlang_a, make_infinite_server, ErlangAParams, TimeFunction};

    #[test]
    fn infinite_server_stays_poisson() {
        // Poisson(m0) initial data stays Poisson with m' = λ - μ m.
        let model = make_infinite_server(TimeFunction::constant(4.0), 0.5).unwrap();
        let p0 = PmfVector::poisson(2.0, 60).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 0.5, 1e-3).unwrap();
        let sol = solve_reference(&model, &p0, &grid, &ReferenceOptions { keep_pmfs: true, ..Default::default() })
            .unwrap();
        for (t, m) in sol.trajectory.times.iter().zip(&sol.trajectory.values) {
            let exact = 8.0 + (2.0 - 8.0) * (-0.5 * t).exp();
            assert!((m.mean - exact).abs() < 1e-10, "t={t}");
            assert!((m.variance - exact).abs() < 1e-9);
        }
        let last = sol.pmfs.unwrap().pop().unwrap();
        let exact = PmfVector::poisson(sol.trajectory.values.last().unwrap().mean, 60).unwrap();
        let diff: f64 = last.as_slice().iter().zip(exact.as_slice()).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff < 1e-9);
        assert!(sol.trajectory.meta.max_mass_drift < 1e-13);
    }

    #[test]
    fn boundary_mass_is_an_error() {
        let model = make_infinite_server(TimeFunction::constant(20.0), 1.0).unwrap();
        let p0 = PmfVector::point_mass(0, 10).unwrap();
        let grid = TimeGrid::new(0.0, 5.0, 0.5, 1e-2).unwrap();
        match solve_reference(&model, &p0, &grid, &ReferenceOptions::default()) {
            Err(Error::BoundaryMass { mass, .. }) => assert!(mass > 1e-6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn delay_probability_is_tail_mass() {
        let model = make_erlang_a(ErlangAParams { lambda: TimeFunction::constant(9.0), mu: 1.0, beta: 0.5, c: 8 })
            .unwrap();
        let p0 = PmfVector::point_mass(0, 60).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 0.5, 1e-2).unwrap();
        let opts = ReferenceOptions { keep_pmfs: true, delay_threshold: Some(8), ..Default::default() };
        let sol = solve_reference(&model, &p0, &grid, &opts).unwrap();
        let pmfs = sol.pmfs.unwrap();
        for (p, d) in pmfs.iter().zip(sol.delay.unwrap()) {
            assert!((p.as_slice()[8..].iter().sum::<f64>() - d).abs() < 1e-15);
        }
        assert_eq!(sol.trajectory.values[0].mean, 0.0);
    }
}

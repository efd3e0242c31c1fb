use serde::{Deserialize, Serialize};

use crate::closure::{
    covariance_terms, delay_probability, expected_indicator_below, expected_overflow, moment_match, ClosureOrder,
    MatchFlag, MomentState, RootChoice, SurrogateParams,
};
use crate::error::{Error, Result};
use crate::models::{BirthDeathModel, ModelKind};

use super::integrate::{integrate_with, Integrator};
use super::{TimeGrid, Trajectory, TrajectoryMeta};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosureOptions {
    pub integrator: Integrator,
    pub root: RootChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosureRecord {
    /// Mean and variance from the closed system; the higher cumulants are
    /// those of the matched surrogate.
    pub moments: MomentState,
    pub params: Option<SurrogateParams>,
    pub flag: MatchFlag,
    /// `P(Q >= c)` for queueing models.
    pub delay: Option<f64>,
}

/// A surrogate matched to the state, or `None` for the point mass at zero.
fn surrogate(m: f64, v: f64, order: ClosureOrder, root: RootChoice) -> Result<(Option<SurrogateParams>, MatchFlag)> {
    if m <= 0.0 {
        return Ok((None, MatchFlag::Exact));
    }
    let r = moment_match(m, v, order, root)?;
    Ok((Some(r.params), r.flag))
}

fn surrogate_cumulants(s: &SurrogateParams) -> [f64; 4] {
    let (m1, m2, m3, m4) = (s.moment(1), s.moment(2), s.moment(3), s.moment(4));
    [
        m1,
        m2 - m1 * m1,
        m3 - 3.0 * m2 * m1 + 2.0 * m1.powi(3),
        m4 - 4.0 * m3 * m1 - 3.0 * m2 * m2 + 12.0 * m2 * m1 * m1 - 6.0 * m1.powi(4),
    ]
}

/// `(m', v')` of the closed system for a built-in model; `v` is ignored at
/// zeroth order.
pub fn closure_rhs(kind: &ModelKind, t: f64, m: f64, v: f64, order: ClosureOrder, root: RootChoice) -> Result<(f64, f64)> {
    let (s, _) = surrogate(m, v, order, root)?;
    let m = m.max(0.0);
    let v = match order {
        ClosureOrder::Zeroth => m,
        ClosureOrder::First => v,
    };
    let queue = |lambda: f64, mu: f64, beta: f64, c: usize, z: Option<usize>| {
        let (over, cov_over, ind, cov_ind) = match &s {
            None => (0.0, 0.0, 1.0, 0.0),
            Some(s) => {
                let cov = covariance_terms(s, c, z);
                let ind = z.map_or(1.0, |z| expected_indicator_below(s, z));
                (expected_overflow(s, c), cov.overflow, ind, cov.indicator.unwrap_or(0.0))
            }
        };
        let e_min = m - over;
        let cov_min = v - cov_over;
        let ea = lambda * ind;
        let ed = mu * e_min + beta * over;
        let cov_a = lambda * cov_ind;
        let cov_d = mu * cov_min + beta * cov_over;
        (ea - ed, ea + ed + 2.0 * (cov_a - cov_d))
    };
    Ok(match kind {
        ModelKind::InfiniteServer { lambda, mu } => {
            let l = lambda.eval(t);
            (l - mu * m, l + mu * m - 2.0 * mu * v)
        }
        ModelKind::ErlangA(p) => queue(p.lambda.eval(t), p.mu, p.beta, p.c, None),
        ModelKind::ErlangLoss(p) => queue(p.lambda.eval(t), p.mu, p.beta, p.c, Some(p.c + p.k)),
        ModelKind::Quadratic(p) => {
            let (b, d) = p.coefficients(t);
            let (e2, e3) = match (&s, order) {
                (None, _) => (0.0, 0.0),
                (Some(s), ClosureOrder::Zeroth) => (s.moment(2), s.moment(3)),
                (Some(s), ClosureOrder::First) => (v + m * m, s.moment(3)),
            };
            let e = [1.0, m, e2];
            let net: f64 = (0..3).map(|j| (b[j] - d[j]) * e[j]).sum();
            let tot: f64 = (0..3).map(|j| (b[j] + d[j]) * e[j]).sum();
            let cov = (b[1] - d[1]) * v + (b[2] - d[2]) * (e3 - m * e2);
            (net, tot + 2.0 * cov)
        }
    })
}

/// Integrates the zeroth (mean only) or first order (mean and variance)
/// closed moment system.
pub fn solve_closure(
    model: &BirthDeathModel,
    order: ClosureOrder,
    init: &MomentState,
    grid: &TimeGrid,
    opts: &ClosureOptions,
) -> Result<Trajectory<ClosureRecord>> {
    grid.validate()?;
    let kind = model
        .kind()
        .ok_or_else(|| Error::Config(format!("moment closure needs a built-in model, got '{}'", model.label())))?
        .clone();
    let root = opts.root;
    let delay_c = match &kind {
        ModelKind::ErlangA(p) => Some(p.c),
        ModelKind::ErlangLoss(p) => Some(p.c),
        _ => None,
    };
    let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let v = if y.len() > 1 { y[1] } else { y[0] };
        let (dm, dv) = closure_rhs(&kind, t, y[0], v, order, root)?;
        dy[0] = dm;
        if dy.len() > 1 {
            dy[1] = dv;
        }
        Ok(())
    };
    let y0: Vec<f64> = match order {
        ClosureOrder::Zeroth => vec![init.mean],
        ClosureOrder::First => vec![init.mean, init.variance],
    };

    let label = match order {
        ClosureOrder::Zeroth => "closure-0",
        ClosureOrder::First => "closure-1",
    };
    let mut traj = Trajectory::with_capacity(grid.n_out() + 1, TrajectoryMeta::new(label));
    let mut flagged = 0usize;
    integrate_with(&mut rhs, &y0, grid, &opts.integrator, |_, t, y| {
        let m = y[0];
        let v = if y.len() > 1 { y[1] } else { m.max(0.0) };
        let (s, flag) = surrogate(m, v, order, root)?;
        if flag != MatchFlag::Exact {
            flagged += 1;
        }
        let [_, _, k3, k4] = s.as_ref().map_or([0.0; 4], surrogate_cumulants);
        let delay = delay_c.map(|c| s.as_ref().map_or(0.0, |s| delay_probability(s, c)));
        traj.push(t, ClosureRecord { moments: MomentState::new(m, v, k3, k4), params: s, flag, delay });
        Ok(())
    })?;
    traj.meta.flag_fraction = flagged as f64 / traj.len() as f64;
    if flagged > 0 {
        traj.meta.warn(format!(
            "moment matching fell back or clamped at {flagged} of {} output times",
            traj.len()
        ));
    }
    Ok(traj)
}

use crate::error::{Error, Result};

/// Default threshold below which a reference value counts as zero.
pub const EPS_DIV: f64 = 1e-8;

/// Time-averaged relative error `(1/(T - t_lo)) ∫ |u - u*| / |u*| dt` by the
/// trapezoid rule.
///
/// When the reference vanishes (or is undefined) anywhere on the first unit
/// of time, integration starts at `t0 + 1` instead.
pub fn rel_error(u: &[f64], u_star: &[f64], times: &[f64]) -> Result<f64> {
    rel_error_with(u, u_star, times, EPS_DIV)
}

pub fn rel_error_with(u: &[f64], u_star: &[f64], times: &[f64], eps_div: f64) -> Result<f64> {
    if u.len() != times.len() || u_star.len() != times.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: u.len().min(u_star.len()) });
    }
    if times.len() < 2 {
        return Err(Error::domain("relative error needs at least two time points"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("times must be strictly increasing"));
    }
    let t0 = times[0];
    let small = |v: f64| !v.is_finite() || v.abs() < eps_div;
    let tol = 1e-9 * (times[times.len() - 1] - t0).abs().max(1.0);
    let shift = times.iter().zip(u_star).any(|(&t, &v)| t <= t0 + 1.0 + tol && small(v));
    let start = if shift {
        times.partition_point(|&t| t < t0 + 1.0 - tol)
    } else {
        0
    };
    if start + 1 >= times.len() {
        return Err(Error::DivisionGuard { t: t0 + 1.0 });
    }
    let ratio = |i: usize| -> Result<f64> {
        if small(u_star[i]) {
            return Err(Error::DivisionGuard { t: times[i] });
        }
        let r = (u[i] - u_star[i]).abs() / u_star[i].abs();
        if !r.is_finite() {
            return Err(Error::domain(format!("non-finite approximation at t = {}", times[i])));
        }
        Ok(r)
    };
    let mut acc = 0.0;
    let mut prev = ratio(start)?;
    for i in start + 1..times.len() {
        let cur = ratio(i)?;
        acc += 0.5 * (times[i] - times[i - 1]) * (prev + cur);
        prev = cur;
    }
    Ok(acc / (times[times.len() - 1] - times[start]))
}

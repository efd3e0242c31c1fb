use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{TimeGrid, Trajectory, TrajectoryMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with fixed steps of `dt_int`.
    #[default]
    Rk4,
    /// Dormand-Prince 5(4) with error control and fourth-order dense output.
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Integrator {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Integrator {
    fn default() -> Self {
        Self { method: Method::Rk4, rtol: 1e-8, atol: 1e-10 }
    }
}

impl Integrator {
    pub fn rk4() -> Self {
        Self::default()
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        Self { method: Method::Rk45, rtol, atol }
    }
}

/// `f(t, y, dy)` writes the derivative into `dy`.
pub trait VectorField {
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F> VectorField for F
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(t, y, dy)
    }
}

fn check_finite(t: f64, y: &[f64]) -> Result<()> {
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Integration { t, reason: format!("non-finite state component {i}") });
    }
    Ok(())
}

/// Integrates over `grid`, calling `observe(i, t_i, y(t_i))` at every output
/// time, starting with the initial state.
pub fn integrate_with<R, O>(
    rhs: &mut R,
    y0: &[f64],
    grid: &TimeGrid,
    integrator: &Integrator,
    mut observe: O,
) -> Result<()>
where
    R: VectorField + ?Sized,
    O: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    check_finite(grid.t0, y0)?;
    observe(0, grid.t0, y0)?;
    match integrator.method {
        Method::Rk4 => rk4(rhs, y0, grid, &mut observe),
        Method::Rk45 => dopri(rhs, y0, grid, integrator, &mut observe),
    }
}

/// Integrates and keeps the state at every output time.
pub fn integrate<R>(rhs: &mut R, y0: &[f64], grid: &TimeGrid, integrator: &Integrator) -> Result<Trajectory<Vec<f64>>>
where
    R: VectorField + ?Sized,
{
    let mut traj = Trajectory::with_capacity(grid.n_out() + 1, TrajectoryMeta::new("ode"));
    integrate_with(rhs, y0, grid, integrator, |_, t, y| {
        traj.push(t, y.to_vec());
        Ok(())
    })?;
    Ok(traj)
}

fn rk4<R, O>(rhs: &mut R, y0: &[f64], grid: &TimeGrid, observe: &mut O) -> Result<()>
where
    R: VectorField + ?Sized,
    O: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let sub = grid.substeps();
    let h = grid.dt_out / sub as f64;
    for i in 1..=grid.n_out() {
        let t_start = grid.time(i - 1);
        for s in 0..sub {
            let t = t_start + s as f64 * h;
            rhs.eval(t, &y, &mut k1)?;
            for j in 0..n {
                tmp[j] = y[j] + 0.5 * h * k1[j];
            }
            rhs.eval(t + 0.5 * h, &tmp, &mut k2)?;
            for j in 0..n {
                tmp[j] = y[j] + 0.5 * h * k2[j];
            }
            rhs.eval(t + 0.5 * h, &tmp, &mut k3)?;
            for j in 0..n {
                tmp[j] = y[j] + h * k3[j];
            }
            rhs.eval(t + h, &tmp, &mut k4)?;
            for j in 0..n {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            check_finite(t + h, &y)?;
        }
        observe(i, grid.time(i), &y)?;
    }
    Ok(())
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dopri<R, O>(rhs: &mut R, y0: &[f64], grid: &TimeGrid, cfg: &Integrator, observe: &mut O) -> Result<()>
where
    R: VectorField + ?Sized,
    O: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut t = grid.t0;
    let t_end = grid.t_end();
    let mut h = grid.dt_int.min(t_end - t);
    let h_min = 1e-14 * (t_end - grid.t0).abs().max(1.0);
    let mut next_out = 1;
    rhs.eval(t, &y, &mut k[0])?;

    while next_out <= grid.n_out() {
        if h < h_min {
            return Err(Error::Integration { t, reason: format!("step size underflow (h = {h:e})") });
        }
        let h_step = h.min(t_end - t);
        for s in 1..7 {
            for j in 0..n {
                let mut acc = y[j];
                for (r, a) in A[s][..s].iter().enumerate() {
                    acc += h_step * a * k[r][j];
                }
                tmp[j] = acc;
            }
            rhs.eval(t + C[s] * h_step, &tmp, &mut k[s])?;
        }
        // Stage 7 is evaluated at the fifth-order solution (FSAL).
        let mut err = 0.0;
        for j in 0..n {
            let mut y5 = y[j];
            let mut e = 0.0;
            for s in 0..7 {
                y5 += h_step * B5[s] * k[s][j];
                e += h_step * (B5[s] - B4[s]) * k[s][j];
            }
            y_new[j] = y5;
            let scale = cfg.atol + cfg.rtol * y[j].abs().max(y5.abs());
            err += (e / scale).powi(2);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            let t_new = t + h_step;
            check_finite(t_new, &y_new)?;
            while next_out <= grid.n_out() && grid.time(next_out) <= t_new + 1e-12 * h_step {
                let to = grid.time(next_out);
                dense_output(&y, &y_new, &k, h_step, (to - t) / h_step, &mut out);
                observe(next_out, to, &out)?;
                next_out += 1;
            }
            t = t_new;
            y.copy_from_slice(&y_new);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = h_step * factor;
    }
    Ok(())
}

// Fourth-order continuous extension (Hairer, Norsett and Wanner).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

fn dense_output(y0: &[f64], y1: &[f64], k: &[Vec<f64>], h: f64, theta: f64, out: &mut [f64]) {
    let th = theta.clamp(0.0, 1.0);
    let th1 = 1.0 - th;
    for j in 0..out.len() {
        let r2 = y1[j] - y0[j];
        let r3 = h * k[0][j] - r2;
        let r4 = r2 - h * k[6][j] - r3;
        let r5 = h * (0..7).map(|s| D[s] * k[s][j]).sum::<f64>();
        out[j] = y0[j] + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
    }
}

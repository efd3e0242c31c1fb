use std::fmt::Write as _;

use serde::Serialize;

use crate::closure::{ClosureOrder, MatchFlag};
use crate::error::Result;
use crate::solve::{solve_closure, solve_reference, ClosureOptions, ReferenceOptions};

use super::config::ExperimentConfig;
use super::table::sci;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub delay: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureBundle {
    pub times: Vec<f64>,
    pub reference: Series,
    pub zeroth: Series,
    pub first: Series,
    /// Whether moment matching fell back or clamped at first order.
    pub first_flagged: Vec<bool>,
    pub first_flag_fraction: f64,
}

/// Mean, variance and delay probability from the reference and both
/// closures at every output time.
pub fn run_figures(cfg: &ExperimentConfig) -> Result<FigureBundle> {
    cfg.validate()?;
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let x_max = cfg.reference_x_max()?;
    let p0 = cfg.initial.pmf(x_max)?;
    let delay_c = cfg.delay_threshold();

    let ref_opts = ReferenceOptions { delay_threshold: delay_c, ..cfg.reference_options() };
    let reference = solve_reference(&model, &p0, &grid, &ref_opts)?;
    let init = p0.moments();
    let opts = ClosureOptions { integrator: cfg.integrator, root: cfg.closure_root };
    let zeroth = solve_closure(&model, ClosureOrder::Zeroth, &init, &grid, &opts)?;
    let first = solve_closure(&model, ClosureOrder::First, &init, &grid, &opts)?;

    let closure_series = |t: &crate::solve::Trajectory<crate::solve::ClosureRecord>| Series {
        mean: t.map(|r| r.moments.mean),
        variance: t.map(|r| r.moments.variance),
        delay: delay_c.map(|_| t.map(|r| r.delay.unwrap_or(f64::NAN))),
    };
    Ok(FigureBundle {
        times: reference.trajectory.times.clone(),
        reference: Series {
            mean: reference.trajectory.map(|m| m.mean),
            variance: reference.trajectory.map(|m| m.variance),
            delay: reference.delay,
        },
        zeroth: closure_series(&zeroth),
        first_flagged: first.map(|r| r.flag != MatchFlag::Exact),
        first_flag_fraction: first.meta.flag_fraction,
        first: closure_series(&first),
    })
}

impl FigureBundle {
    pub fn to_csv(&self) -> String {
        let with_delay = self.reference.delay.is_some();
        let mut s = String::new();
        let _ = writeln!(s, "# first_order_flag_fraction {}", sci(self.first_flag_fraction));
        let mut header = vec!["t".to_string()];
        for tag in ["ref", "zeroth", "first"] {
            header.push(format!("{tag}_mean"));
            header.push(format!("{tag}_variance"));
            if with_delay {
                header.push(format!("{tag}_delay"));
            }
        }
        header.push("first_flag".into());
        let _ = writeln!(s, "{}", header.join(","));
        for i in 0..self.times.len() {
            let mut row = vec![format!("{}", self.times[i])];
            for series in [&self.reference, &self.zeroth, &self.first] {
                row.push(sci(series.mean[i]));
                row.push(sci(series.variance[i]));
                if let Some(d) = &series.delay {
                    row.push(sci(d[i]));
                }
            }
            row.push(u8::from(self.first_flagged[i]).to_string());
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_server_series_coincide() {
        let cfg = ExperimentConfig::from_json(
            r#"{
            "model": {"kind": "infinite_server", "lambda": {"type": "sinusoid", "base": 20, "amplitude": 4}, "mu": 1},
            "initial": {"type": "point_mass", "x": 0},
            "horizon": 3, "dt_out": 0.01, "dt_int": 0.001
        }"#,
        )
        .unwrap();
        let f = run_figures(&cfg).unwrap();
        for i in 0..f.times.len() {
            assert!((f.reference.mean[i] - f.zeroth.mean[i]).abs() < 1e-6);
        }
        assert!(f.reference.delay.is_none());
        let csv = f.to_csv();
        assert!(csv.lines().nth(1).unwrap().starts_with("t,ref_mean,ref_variance,zeroth_mean"));
    }
}

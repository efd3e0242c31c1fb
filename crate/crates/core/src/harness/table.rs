use std::fmt::Write as _;

use serde::Serialize;

use crate::charlier::CharlierBasis;
use crate::closure::MomentState;
use crate::error::{Error, Result};
use crate::solve::{solve_galerkin, solve_reference, Trajectory};

use super::config::{ExperimentConfig, ReferenceKind};
use super::metric::rel_error;

pub const TABLE_HEADER: &str = "N,err_mean,err_variance,err_skewness,err_kurtosis";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRow {
    pub n: usize,
    pub err_mean: f64,
    pub err_variance: f64,
    pub err_skewness: f64,
    pub err_kurtosis: f64,
}

impl ErrorRow {
    pub fn as_array(&self) -> [f64; 4] {
        [self.err_mean, self.err_variance, self.err_skewness, self.err_kurtosis]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub n: usize,
    pub basis_a: f64,
    pub basis_x_max: usize,
    pub max_c0_drift: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub crate_version: String,
    pub config_sha256: String,
    pub horizon: f64,
    pub dt_out: f64,
    pub dt_int: f64,
    pub reference: String,
    pub reference_mass_drift: f64,
    pub config_json: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub diagnostics: Vec<RunDiagnostics>,
    pub provenance: Provenance,
}

/// Moment series in table order: mean, variance, skewness, kurtosis.
pub(crate) fn moment_series(traj: &Trajectory<MomentState>) -> [Vec<f64>; 4] {
    [
        traj.map(|m| m.mean),
        traj.map(|m| m.variance),
        traj.map(|m| m.skewness()),
        traj.map(|m| m.kurtosis()),
    ]
}

fn galerkin_run(cfg: &ExperimentConfig, n: usize, a: f64) -> Result<(Trajectory<MomentState>, RunDiagnostics)> {
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let p0 = cfg.initial.pmf(cfg.reference_x_max()?)?;
    let basis = CharlierBasis::new(a, n)?;
    let sol = solve_galerkin(&model, &p0, basis, &grid, &cfg.galerkin_options())?;
    let diag = RunDiagnostics {
        n,
        basis_a: a,
        basis_x_max: basis.x_max(),
        max_c0_drift: sol.max_c0_drift,
        warnings: sol.trajectory.meta.warnings.clone(),
    };
    Ok((sol.trajectory, diag))
}

/// Reference solution once, then the Galerkin solver at each order, scored
/// with the time-averaged relative error.
pub fn run_table(cfg: &ExperimentConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let x_max = cfg.reference_x_max()?;
    let p0 = cfg.initial.pmf(x_max)?;
    let a = cfg.basis.policy.resolve(&model, &p0, &grid)?;

    let (reference, reference_label, mass_drift) = match cfg.reference {
        ReferenceKind::Cme => {
            let sol = solve_reference(&model, &p0, &grid, &cfg.reference_options())?;
            let drift = sol.trajectory.meta.max_mass_drift;
            (sol.trajectory, format!("cme x_max={x_max}"), drift)
        }
        ReferenceKind::Galerkin { order } => {
            let (traj, _) = galerkin_run(cfg, order, a).map_err(|e| Error::AtOrder { order, source: Box::new(e) })?;
            let drift = traj.meta.max_mass_drift;
            (traj, format!("galerkin N={order}"), drift)
        }
    };
    let truth = moment_series(&reference);

    let mut rows = Vec::with_capacity(cfg.orders.len());
    let mut diagnostics = Vec::with_capacity(cfg.orders.len());
    for &n in &cfg.orders {
        let at = |e: Error| Error::AtOrder { order: n, source: Box::new(e) };
        let (traj, diag) = galerkin_run(cfg, n, a).map_err(at)?;
        let approx = moment_series(&traj);
        let mut errs = [0.0; 4];
        for k in 0..4 {
            errs[k] = rel_error(&approx[k], &truth[k], &reference.times).map_err(at)?;
        }
        log::info!("N = {n}: mean error {:.3e}", errs[0]);
        rows.push(ErrorRow { n, err_mean: errs[0], err_variance: errs[1], err_skewness: errs[2], err_kurtosis: errs[3] });
        diagnostics.push(diag);
    }

    Ok(ErrorTable {
        rows,
        diagnostics,
        provenance: Provenance {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: cfg.hash(),
            horizon: cfg.horizon,
            dt_out: cfg.dt_out,
            dt_int: cfg.dt_int,
            reference: reference_label,
            reference_mass_drift: mass_drift,
            config_json: cfg.canonical_json(),
        },
    })
}

/// Six significant digits in scientific notation.
pub(crate) fn sci(v: f64) -> String {
    format!("{v:.5e}")
}

impl ErrorTable {
    pub fn to_csv(&self) -> String {
        let p = &self.provenance;
        let mut s = String::new();
        let _ = writeln!(s, "# charlier-core {}", p.crate_version);
        let _ = writeln!(s, "# config_sha256 {}", p.config_sha256);
        let _ = writeln!(s, "# T {} dt_out {} dt_int {}", p.horizon, p.dt_out, p.dt_int);
        let _ = writeln!(s, "# reference {} mass_drift {}", p.reference, sci(p.reference_mass_drift));
        for d in &self.diagnostics {
            let _ = writeln!(
                s,
                "# N {} basis_a {} basis_x_max {} max_c0_drift {}",
                d.n,
                sci(d.basis_a),
                d.basis_x_max,
                sci(d.max_c0_drift)
            );
        }
        let _ = writeln!(s, "# config {}", p.config_json);
        let _ = writeln!(s, "{TABLE_HEADER}");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.n,
                sci(r.err_mean),
                sci(r.err_variance),
                sci(r.err_skewness),
                sci(r.err_kurtosis)
            );
        }
        s
    }

    pub fn row(&self, n: usize) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// The configuration embedded in a table's provenance block.
pub fn embedded_config(csv: &str) -> Result<ExperimentConfig> {
    let line = csv
        .lines()
        .find_map(|l| l.strip_prefix("# config "))
        .ok_or_else(|| Error::Config("no embedded configuration found".into()))?;
    ExperimentConfig::from_json(line)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
            "model": {"kind": "erlang_a", "lambda": {"type": "sinusoid", "base": 10, "amplitude": 2},
                      "mu": 1, "beta": 0.5, "c": 10},
            "initial": {"type": "poisson", "mean": 8},
            "horizon": 2, "dt_out": 0.01, "dt_int": 0.01, "orders": [1, 4]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let cfg = small();
        let t = run_table(&cfg).unwrap();
        let csv = t.to_csv();
        let header_at = csv.lines().position(|l| l == TABLE_HEADER).unwrap();
        let rows: Vec<&str> = csv.lines().skip(header_at + 1).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("1,"));
        assert_eq!(embedded_config(&csv).unwrap(), cfg);
        assert_eq!(run_table(&cfg).unwrap().to_csv(), csv);
        assert!(t.rows[1].err_mean < t.rows[0].err_mean);
    }

    #[test]
    fn scientific_format() {
        assert_eq!(sci(2.53e-3), "2.53000e-3");
        assert_eq!(sci(0.0), "0.00000e0");
    }
}

//! Oracle suites behind the `validate` subcommand.

use serde::Serialize;

use crate::charlier::CharlierBasis;
use crate::closure::{
    covariance_terms, delay_probability, expected_indicator_below, expected_min, expected_overflow,
    expected_q_times_indicator, expected_q_times_min, expected_q_times_overflow, SurrogateParams,
};
use crate::error::Result;
use crate::pmf::PmfVector;
use crate::sobolev::{isometry_residual, poisson_norm_closed_form, seq_norm_sq, SobolevSpec, WeightMode};
use crate::special::{chen_stein_gap, poisson_quantile_upper};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &str, worst: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), worst, tolerance, passed: worst.is_finite() && worst < tolerance }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: worst {:.3e} (tolerance {:.1e})", self.name, self.worst, self.tolerance)
    }
}

pub fn orthonormality() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for a in [1.0, 5.0, 100.0] {
        let table = CharlierBasis::new(a, 10)?.tabulate();
        let w = table.weights();
        for m in 0..=10 {
            for n in 0..=m {
                let s: f64 = (0..w.len()).map(|x| table.value(m, x) * table.value(n, x) * w[x]).sum();
                let target = if m == n { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
    }
    Ok(CheckResult::new("orthonormality", worst, 1e-10))
}

/// Test densities for the isometry and closure suites.
pub fn test_distributions() -> Result<Vec<PmfVector>> {
    let geometric: Vec<f64> = (0..=60).map(|x| 0.5f64.powi(x + 1)).collect();
    let mut tilted: Vec<f64> = (0..=40).map(|x| ((x as f64 - 12.0) / 4.0).powi(2)).map(|z| (-z).exp()).collect();
    let total: f64 = tilted.iter().sum();
    tilted.iter_mut().for_each(|v| *v /= total);
    Ok(vec![
        PmfVector::poisson(3.0, 40)?,
        PmfVector::point_mass(4, 10)?,
        PmfVector::uniform(0, 10, 10)?,
        PmfVector::new(geometric)?,
        PmfVector::new(tilted)?,
    ])
}

pub fn isometry() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for p in test_distributions()? {
        for m in 0..=4 {
            worst = worst.max(isometry_residual(&p, 5.0, m)?);
        }
    }
    Ok(CheckResult::new("isometry", worst, 1e-10))
}

pub fn poisson_norm() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let a = 4.0;
    for ratio in [0.5, 0.9, 1.0, 1.5] {
        let lambda = ratio * a;
        let x_max = poisson_quantile_upper(lambda * lambda / a + lambda, 1e-30) + 40;
        let p = PmfVector::poisson(lambda, x_max)?;
        for m in 0..=4 {
            let direct = seq_norm_sq(p.as_slice(), &SobolevSpec::new(m, a, WeightMode::WInverse, x_max)?)?;
            let closed = poisson_norm_closed_form(lambda, a, m);
            worst = worst.max((direct - closed).abs() / closed);
        }
    }
    Ok(CheckResult::new("poisson norm closed form", worst, 1e-8))
}

pub fn chen_stein() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for q in [1.0, 5.0, 20.0] {
        let x_max = poisson_quantile_upper(q, 1e-25) + 10;
        let c = q as u64;
        let fs: [&dyn Fn(u64) -> f64; 5] = [
            &|_| 1.0,
            &|x| x as f64,
            &|x| (x * x) as f64,
            &|x| (x * x * x) as f64,
            &|x| if x >= c { 1.0 } else { 0.0 },
        ];
        for f in fs {
            worst = worst.max(chen_stein_gap(f, q, x_max).abs());
        }
    }
    Ok(CheckResult::new("chen-stein identity", worst, 1e-10))
}

/// Thresholds `{0, 1, 3, q/2, q, 2q}` used for the closure grid.
pub fn closure_thresholds(q: f64) -> Vec<usize> {
    let mut c = vec![0, 1, 3, (q / 2.0).floor() as usize, q.round() as usize, (2.0 * q).round() as usize];
    c.sort_unstable();
    c.dedup();
    c
}

pub const CLOSURE_Q: [f64; 5] = [0.5, 2.0, 10.0, 50.0, 120.0];
pub const CLOSURE_A1: [f64; 4] = [-0.2, 0.0, 0.1, 0.3];

/// Relative deviation; absolute when the oracle vanishes.
pub fn relative_deviation(value: f64, oracle: f64) -> f64 {
    if oracle == 0.0 {
        value.abs()
    } else {
        (value - oracle).abs() / oracle.abs()
    }
}

/// `Cov_s[Q, f]` summed in the centered form `E[(Q - m)(f(Q) - f(m))]`.
/// For monotone `f` the summands share a sign wherever the surrogate is
/// positive.
fn brute_covariance(s: &SurrogateParams, f: impl Fn(f64) -> f64) -> f64 {
    let m = s.brute_expect(|x| x as f64);
    let fm = f(m);
    s.brute_expect(|x| (x as f64 - m) * (f(x as f64) - fm))
}

pub fn closure_closed_forms() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for q in CLOSURE_Q {
        for a1 in CLOSURE_A1 {
            let s = SurrogateParams::first(q, a1);
            for c in closure_thresholds(q) {
                let cf = c as f64;
                let over = move |x: f64| (x - cf).max(0.0);
                let min = move |x: f64| x.min(cf);
                for z in [c, c + 5] {
                    let zf = z as f64;
                    let ind = move |x: f64| f64::from(u8::from(x < zf));
                    let cov = covariance_terms(&s, c, Some(z));
                    let checks = [
                        (expected_indicator_below(&s, z), s.brute_expect(|x| ind(x as f64))),
                        (expected_q_times_indicator(&s, z), s.brute_expect(|x| x as f64 * ind(x as f64))),
                        (cov.indicator.expect("requested"), brute_covariance(&s, ind)),
                    ];
                    for (v, o) in checks {
                        worst = worst.max(relative_deviation(v, o));
                    }
                }
                let cov = covariance_terms(&s, c, None);
                let checks = [
                    (expected_overflow(&s, c), s.brute_expect(|x| over(x as f64))),
                    (expected_min(&s, c), s.brute_expect(|x| min(x as f64))),
                    (expected_q_times_overflow(&s, c), s.brute_expect(|x| x as f64 * over(x as f64))),
                    (expected_q_times_min(&s, c), s.brute_expect(|x| x as f64 * min(x as f64))),
                    (cov.overflow, brute_covariance(&s, over)),
                    (cov.min, brute_covariance(&s, min)),
                    (delay_probability(&s, c), s.brute_expect(|x| f64::from(u8::from(x >= c)))),
                ];
                for (v, o) in checks {
                    worst = worst.max(relative_deviation(v, o));
                }
            }
            for k in 1..=4 {
                let o = s.brute_expect(|x| (x as f64).powi(k as i32));
                worst = worst.max(relative_deviation(s.moment(k), o));
            }
            let mean = s.brute_expect(|x| x as f64);
            worst = worst.max(relative_deviation(s.mean(), mean));
            worst = worst.max(relative_deviation(s.variance(), brute_covariance(&s, |x| x)));
        }
    }
    Ok(CheckResult::new("closure closed forms", worst, 1e-9))
}

/// Every suite, in order.
pub fn run_all() -> Result<Vec<CheckResult>> {
    Ok(vec![orthonormality()?, isometry()?, poisson_norm()?, chen_stein()?, closure_closed_forms()?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for r in run_all().unwrap() {
            assert!(r.passed, "{r}");
        }
    }
}

//! Weighted discrete Sobolev norms on the truncated state space.
//!
//! `‖q‖²_{h^m(ω)} = Σ_{k≤m} a^{-k} Σ_x x^(k) q(x)² ω(x)` with `ω ∈ {1, w, w^{-1}}`.
//! The `w^{-1}` variant grows super-exponentially in `x`; its summands are
//! evaluated in log space and the boundary summand is watched so that an
//! input whose tail is too heavy for the chosen `a` is rejected instead of
//! being silently truncated.

use serde::{Deserialize, Serialize};

use crate::charlier::CharlierBasis;
use crate::error::{Error, Result};
use crate::pmf::PmfVector;
use crate::special::{ln_poisson_weight, lower_tail_unchecked, CompensatedSum};

pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// Boundary summands below this are treated as numerically zero by the
/// divergence monitor, whatever the running total.
const NEGLIGIBLE_SUMMAND: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    W,
    WInverse,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevSpec {
    pub order: usize,
    pub a: f64,
    pub weight: WeightMode,
    pub x_max: usize,
    pub tail_tol: f64,
}

impl SobolevSpec {
    pub fn new(order: usize, a: f64, weight: WeightMode, x_max: usize) -> Result<Self> {
        Self { order, a, weight, x_max, tail_tol: DEFAULT_TAIL_TOL }.validated()
    }

    pub fn with_tail_tol(mut self, tail_tol: f64) -> Result<Self> {
        self.tail_tol = tail_tol;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::domain(format!("weight parameter must be positive, got {}", self.a)));
        }
        if !(self.tail_tol > 0.0) {
            return Err(Error::domain("tail tolerance must be positive"));
        }
        if self.x_max < 1 {
            return Err(Error::domain("x_max must be at least 1"));
        }
        Ok(self)
    }
}

/// Smallest `x` with `P(Poisson(a) ≤ x) > 1 - 1e-14`, times 1.5, rounded up.
pub fn default_x_max(a: f64) -> usize {
    let mut x = a.floor() as i64;
    while lower_tail_unchecked(a, x) <= 1.0 - 1e-14 {
        x += 1;
    }
    ((x as f64) * 1.5).ceil().max(1.0) as usize
}

pub fn seq_norm(q: &[f64], spec: &SobolevSpec) -> Result<f64> {
    seq_norm_sq(q, spec).map(f64::sqrt)
}

pub fn seq_norm_sq(q: &[f64], spec: &SobolevSpec) -> Result<f64> {
    if q.len() != spec.x_max + 1 {
        return Err(Error::DimensionMismatch { expected: spec.x_max + 1, found: q.len() });
    }
    let ln_a = spec.a.ln();
    let mut total = CompensatedSum::new();
    let mut last = 0.0;
    for (x, &v) in q.iter().enumerate() {
        last = 0.0;
        if v == 0.0 {
            continue;
        }
        let ln_omega = match spec.weight {
            WeightMode::None => 0.0,
            WeightMode::W => ln_poisson_weight(spec.a, x as u64),
            WeightMode::WInverse => -ln_poisson_weight(spec.a, x as u64),
        };
        let base = 2.0 * v.abs().ln() + ln_omega;
        let mut ln_ff = 0.0;
        for k in 0..=spec.order.min(x) {
            if k > 0 {
                ln_ff += ((x - k + 1) as f64).ln();
            }
            last += (base + ln_ff - k as f64 * ln_a).exp();
        }
        total.add(last);
    }
    let total = total.value();
    if !total.is_finite() {
        return Err(Error::Divergence { x: spec.x_max, relative: f64::INFINITY });
    }
    if spec.weight == WeightMode::WInverse
        && last > NEGLIGIBLE_SUMMAND
        && last > spec.tail_tol * total
    {
        return Err(Error::Divergence { x: spec.x_max, relative: last / total });
    }
    Ok(total)
}

/// Squared `h^m(w^{-1})` norm of the Poisson(λ) pmf at weight parameter `a`.
pub fn poisson_norm_closed_form(lambda: f64, a: f64, m: usize) -> f64 {
    let r2 = (lambda / a).powi(2);
    let geometric = if (r2 - 1.0).abs() < 1e-12 {
        (m + 1) as f64
    } else {
        (1.0 - r2.powi(m as i32 + 1)) / (1.0 - r2)
    };
    geometric * ((a - lambda).powi(2) / a).exp()
}

/// `| ‖w p‖_{h^m(w^{-1})} - ‖p‖_{h^m(w)} |`.
pub fn isometry_residual(p: &PmfVector, a: f64, m: usize) -> Result<f64> {
    // The input is zero beyond its grid; one padding state keeps a support
    // that ends at x_max from looking like a non-decaying tail.
    let x_max = p.x_max() + 1;
    let mut src = p.as_slice().to_vec();
    src.push(0.0);
    let weighted: Vec<f64> = src
        .iter()
        .enumerate()
        .map(|(x, v)| v * ln_poisson_weight(a, x as u64).exp())
        .collect();
    let lhs = seq_norm(&weighted, &SobolevSpec::new(m, a, WeightMode::WInverse, x_max)?)?;
    let rhs = seq_norm(&src, &SobolevSpec::new(m, a, WeightMode::W, x_max)?)?;
    Ok((lhs - rhs).abs())
}

/// `(a/N)^{m/2} max(1, N/a)^{k/2} ‖p‖_m`, the approximation bound with its
/// constant set to one.
pub fn estimate_bound_rhs(n: usize, m: usize, k: usize, a: f64, norm_m: f64) -> Result<f64> {
    if k > m {
        return Err(Error::domain(format!("norm index k = {k} exceeds regularity m = {m}")));
    }
    if n == 0 {
        return Err(Error::domain("bound index N must be at least 1"));
    }
    let ratio = a / n as f64;
    Ok(ratio.powf(m as f64 / 2.0) * (1.0f64).max(1.0 / ratio).powf(k as f64 / 2.0) * norm_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakErrorReport {
    pub measured: f64,
    pub predicted: f64,
    pub ratio: f64,
}

/// Measured weak error of the projection against the a priori bound.
///
/// A basis of order `n` keeps `n + 1` functions, so the bound is evaluated
/// at `N = n + 1`.
pub fn weak_error_bound_check<F: Fn(usize) -> f64>(
    f: F,
    p: &PmfVector,
    basis: &CharlierBasis,
    m: usize,
) -> Result<WeakErrorReport> {
    let table = basis.tabulate();
    let c = table.project(p)?;
    let approx = table.reconstruct(&c).expect(&f);
    let exact = p.expect(&f);
    let measured = (approx - exact).abs();

    let a = basis.a();
    let f_vals: Vec<f64> = (0..=basis.x_max()).map(&f).collect();
    let f_norm = seq_norm(&f_vals, &SobolevSpec::new(0, a, WeightMode::W, basis.x_max())?)?;
    let p_norm = seq_norm(p.as_slice(), &SobolevSpec::new(m, a, WeightMode::WInverse, basis.x_max())?)?;
    let predicted = estimate_bound_rhs(basis.order() + 1, m, 0, a, f_norm * p_norm)?;
    Ok(WeakErrorReport { measured, predicted, ratio: measured / predicted })
}

/// Smallest constant `C` with `measured <= C * predicted` over a sweep.
pub fn fitted_constant(pairs: &[(f64, f64)]) -> f64 {
    pairs
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(m, p)| m / p)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charlier::{project_density, truncation_error};
    use crate::special::poisson_quantile_upper;

    fn poisson_grid(lambda: f64, a: f64) -> usize {
        poisson_quantile_upper(lambda * lambda / a + lambda, 1e-18) + 20
    }

    #[test]
    fn norm_examples() {
        let x_max = 40;
        let p = PmfVector::poisson(1.0, x_max).unwrap();
        let spec = SobolevSpec::new(0, 2.0, WeightMode::WInverse, x_max).unwrap();
        let sq = seq_norm_sq(p.as_slice(), &spec).unwrap();
        assert!((sq - 0.5f64.exp()).abs() < 1e-12);

        for m in 0..5 {
            let a = 3.0;
            let p = PmfVector::poisson(a, 60).unwrap();
            let spec = SobolevSpec::new(m, a, WeightMode::WInverse, 60).unwrap();
            let sq = seq_norm_sq(p.as_slice(), &spec).unwrap();
            assert!((sq - (m + 1) as f64).abs() < 1e-10);
        }

        let zero = vec![0.0; 11];
        let spec = SobolevSpec::new(2, 1.0, WeightMode::WInverse, 10).unwrap();
        assert_eq!(seq_norm(&zero, &spec).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_matches_direct_sum() {
        for &a in &[1.0, 4.0, 20.0] {
            for &r in &[0.5, 0.9, 1.0, 1.5] {
                let lambda = r * a;
                let x_max = poisson_grid(lambda, a);
                let p = PmfVector::poisson(lambda, x_max).unwrap();
                for m in 0..=4 {
                    let spec = SobolevSpec::new(m, a, WeightMode::WInverse, x_max).unwrap();
                    let direct = seq_norm_sq(p.as_slice(), &spec).unwrap();
                    let closed = poisson_norm_closed_form(lambda, a, m);
                    assert!((direct - closed).abs() < 1e-8 * closed, "a={a} r={r} m={m}");
                }
            }
        }
        assert_eq!(poisson_norm_closed_form(2.0, 2.0, 3), 4.0);
        assert!((poisson_norm_closed_form(1.0, 2.0, 0) - 0.5f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn plain_mode_is_euclidean_and_norms_grow_with_order() {
        let v = vec![0.3, -0.4, 1.2, 0.0, 2.0];
        let spec = SobolevSpec::new(0, 1.0, WeightMode::None, 4).unwrap();
        let e: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((seq_norm(&v, &spec).unwrap() - e).abs() < 1e-15);

        let p = PmfVector::uniform(0, 10, 30).unwrap();
        for mode in [WeightMode::W, WeightMode::WInverse, WeightMode::None] {
            let mut prev = 0.0;
            for m in 0..6 {
                let spec = SobolevSpec::new(m, 3.0, mode, 30).unwrap();
                let n = seq_norm(p.as_slice(), &spec).unwrap();
                assert!(n >= prev);
                prev = n;
            }
        }
    }

    #[test]
    fn heavy_tail_is_rejected() {
        // Poisson(6) against a = 1 needs far more states than 25.
        let p = PmfVector::poisson(6.0, 25).unwrap();
        let spec = SobolevSpec::new(0, 1.0, WeightMode::WInverse, 25).unwrap();
        match seq_norm(p.as_slice(), &spec) {
            Err(Error::Divergence { x, .. }) => assert_eq!(x, 25),
            other => panic!("expected divergence, got {other:?}"),
        }
        let short = vec![0.0; 3];
        assert!(matches!(seq_norm(&short, &spec), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn isometry_examples() {
        let u = PmfVector::uniform(0, 10, 10).unwrap();
        assert!(isometry_residual(&u, 3.0, 2).unwrap() < 1e-10);
        assert_eq!(isometry_residual(&PmfVector::zeros(5), 3.0, 2).unwrap(), 0.0);
        let p = PmfVector::poisson(2.0, 40).unwrap();
        assert!(isometry_residual(&p, 2.0, 3).unwrap() < 1e-10);
    }

    #[test]
    fn bound_rhs_examples() {
        for m in 0..5 {
            for k in 0..=m {
                assert!((estimate_bound_rhs(4, m, k, 4.0, 2.5).unwrap() - 2.5).abs() < 1e-15);
            }
        }
        let r1 = estimate_bound_rhs(4, 4, 0, 2.0, 1.0).unwrap();
        let r2 = estimate_bound_rhs(8, 4, 0, 2.0, 1.0).unwrap();
        assert!((r2 / r1 - 0.25).abs() < 1e-14);
        assert!(estimate_bound_rhs(3, 1, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn truncation_error_is_dominated_by_bound() {
        let (a, lambda) = (1.0, 1.2);
        for m in [2usize, 4] {
            let mut pairs = Vec::new();
            for n in 2..=12 {
                let basis = CharlierBasis::new(a, n - 1).unwrap();
                let p = PmfVector::poisson(lambda, basis.x_max()).unwrap();
                let err = truncation_error(&p, &basis, 0).unwrap();
                let spec = SobolevSpec::new(m, a, WeightMode::WInverse, basis.x_max()).unwrap();
                let norm = seq_norm(p.as_slice(), &spec).unwrap();
                pairs.push((err, estimate_bound_rhs(n, m, 0, a, norm).unwrap()));
            }
            let c0 = pairs[0].0 / pairs[0].1;
            let c = fitted_constant(&pairs);
            assert!(c.is_finite() && c <= c0 * (1.0 + 1e-12), "m={m}: {c} vs {c0}");
        }
    }

    #[test]
    fn weak_error_examples() {
        let basis = CharlierBasis::new(1.0, 3).unwrap();
        let p = PmfVector::poisson(1.2, basis.x_max()).unwrap();
        let r = weak_error_bound_check(|_| 1.0, &p, &basis, 2).unwrap();
        assert!(r.measured < 1e-14);

        for order in 1..6 {
            let basis = CharlierBasis::new(2.0, order).unwrap();
            let p = PmfVector::poisson(2.6, basis.x_max()).unwrap();
            assert!(project_density(&p, &basis).unwrap().as_slice()[1].abs() > 0.1);
            let r = weak_error_bound_check(|x| x as f64, &p, &basis, 2).unwrap();
            assert!(r.measured < 1e-10);
        }

        // Second moment is exact from order two on; at order one it is not.
        let mut prev = f64::INFINITY;
        for n in 2..=10 {
            let basis = CharlierBasis::new(1.0, n - 1).unwrap();
            let p = PmfVector::poisson(1.2, basis.x_max()).unwrap();
            let r = weak_error_bound_check(|x| (x * x) as f64, &p, &basis, 4).unwrap();
            assert!(r.measured <= prev.max(1e-12));
            assert!(r.measured <= 0.05 * r.predicted || n == 2);
            prev = r.measured;
        }
    }

    #[test]
    fn default_x_max_covers_weight() {
        for &a in &[0.5, 1.0, 5.0, 100.0] {
            let x = default_x_max(a);
            assert!(lower_tail_unchecked(a, x as i64) > 1.0 - 1e-14);
        }
    }
}

//! Poisson-Charlier polynomials and the density expansion built on them.
//!
//! The normalized polynomials `C̄_n(x)` are orthonormal in `l²(w)` where
//! `w(x) = a^x e^{-a} / x!`, and the Charlier functions `C̄_n(x) w(x)` are
//! orthonormal under the `w^{-1}`-weighted product. A density `p` is
//! represented by the coefficients `c_n = Σ_x p(x) C̄_n(x)` and rebuilt as
//! `p_N(x) = w(x) Σ_{n≤N} c_n C̄_n(x)`. Rebuilt densities may go negative;
//! nothing here clips them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmf::PmfVector;
use crate::sobolev::{self, SobolevSpec, WeightMode};
use crate::special::{ln_poisson_weight, CompensatedSum};

/// Neglected `C̄_n² w` tail mass the adaptive grid bound aims for.
pub const ORTHO_TAIL_TOL: f64 = 1e-15;

fn check_param(a: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("Charlier parameter must be positive, got {a}")));
    }
    Ok(())
}

/// Plain three-term recurrence in the degree at a fixed point. Accurate for
/// degrees up to `x`; beyond that the wanted solution is recessive and the
/// recurrence amplifies rounding.
fn forward_sweep(a: f64, x: usize, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let xf = x as f64;
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = (a - xf) / a.sqrt();
    for n in 1..out.len() - 1 {
        let nf = n as f64;
        out[n + 1] = (nf + a - xf) / (a * (nf + 1.0)).sqrt() * out[n]
            - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

/// `sqrt(a^{n-x} x! / n!)`, the factor in `C̄_n(x) = dual_scale · C̄_x(n)`.
fn dual_scale(a: f64, n: usize, x: usize) -> f64 {
    (0.5 * (ln_poisson_weight(a, n as u64) - ln_poisson_weight(a, x as u64))).exp()
}

/// Fills `out[n] = C̄_n^a(x)` for `n = 0..out.len()`.
///
/// Degrees up to `x` come from the recurrence at `x`; higher degrees use the
/// self-duality of the Charlier family, evaluating the degree-`x`
/// polynomial at the point `n` instead.
pub fn charlier_normalized_all(a: f64, x: usize, out: &mut [f64]) {
    let direct = out.len().min(x + 1);
    forward_sweep(a, x, &mut out[..direct]);
    if direct == out.len() {
        return;
    }
    let mut buf = vec![0.0; x + 1];
    for n in direct..out.len() {
        forward_sweep(a, n, &mut buf);
        out[n] = dual_scale(a, n, x) * buf[x];
    }
}

/// Normalized Poisson-Charlier polynomial `C̄_n^a(x)`.
pub fn charlier_normalized(n: usize, a: f64, x: usize) -> Result<f64> {
    check_param(a)?;
    let mut buf = vec![0.0; n + 1];
    charlier_normalized_all(a, x, &mut buf);
    Ok(buf[n])
}

/// Monic Charlier polynomial in the `C_1 = x - a` convention, from
/// `C_{n+1} = (x - n - a) C_n - n a C_{n-1}`.
///
/// Related to the normalized family by `C̄_n = (-1)^n C_n / sqrt(n! a^n)`.
pub fn charlier_unnormalized(n: usize, a: f64, x: usize) -> Result<f64> {
    check_param(a)?;
    let xf = x as f64;
    let (mut prev, mut cur) = (1.0, xf - a);
    if n == 0 {
        return Ok(prev);
    }
    for k in 1..n {
        let kf = k as f64;
        let next = (xf - kf - a) * cur - kf * a * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Basis parameter `a`, maximal degree `order` and the summation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharlierBasis {
    a: f64,
    order: usize,
    x_max: usize,
}

impl CharlierBasis {
    /// Picks `x_max` so that the weight tail and the `C̄_n² w` tails for all
    /// `n <= order` beyond it stay below [`ORTHO_TAIL_TOL`].
    pub fn new(a: f64, order: usize) -> Result<Self> {
        check_param(a)?;
        let x_max = adaptive_x_max(a, order, ORTHO_TAIL_TOL).max(order);
        Ok(Self { a, order, x_max })
    }

    pub fn with_x_max(a: f64, order: usize, x_max: usize) -> Result<Self> {
        check_param(a)?;
        if order > x_max {
            return Err(Error::domain(format!(
                "basis order {order} exceeds the grid bound {x_max}"
            )));
        }
        Ok(Self { a, order, x_max })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn x_max(&self) -> usize {
        self.x_max
    }

    /// Number of basis functions, `order + 1`.
    pub fn len(&self) -> usize {
        self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn with_order(&self, order: usize) -> Result<Self> {
        Self::with_x_max(self.a, order, self.x_max)
    }

    pub fn tabulate(&self) -> CharlierTable {
        CharlierTable::new(*self)
    }
}

/// Grid bound covering the weight and the squared polynomials up to `order`.
pub fn adaptive_x_max(a: f64, order: usize, tol: f64) -> usize {
    let base = sobolev::default_x_max(a);
    // Terms C̄_n(x)^2 w(x) are unimodal in x far from the bulk; scan until
    // they have decayed well below tol, then read off the suffix sums.
    let mut buf = vec![0.0; order + 1];
    let mut terms = Vec::new();
    let mut x = 0usize;
    loop {
        charlier_normalized_all(a, x, &mut buf);
        let lw = ln_poisson_weight(a, x as u64);
        let t = buf
            .iter()
            .map(|v| {
                if *v == 0.0 {
                    0.0
                } else {
                    (2.0 * v.abs().ln() + lw).exp()
                }
            })
            .fold(0.0, f64::max);
        terms.push(t);
        if x > base && x as f64 > 2.0 * a + order as f64 && t < tol * 1e-6 {
            break;
        }
        x += 1;
    }
    let mut suffix = 0.0;
    let mut bound = terms.len() - 1;
    for (i, t) in terms.iter().enumerate().rev() {
        suffix += t;
        if suffix > tol {
            bound = i;
            break;
        }
    }
    bound.max(base)
}

/// `C̄_n(x)` for every `n <= order` and `x <= x_max`, with the weights.
#[derive(Debug, Clone)]
pub struct CharlierTable {
    basis: CharlierBasis,
    weights: Vec<f64>,
    /// Row-major by state: `values[x * len + n]`.
    values: Vec<f64>,
}

impl CharlierTable {
    pub fn new(basis: CharlierBasis) -> Self {
        let len = basis.len();
        let mut values = vec![0.0; (basis.x_max + 1) * len];
        for (x, row) in values.chunks_mut(len).enumerate() {
            let direct = len.min(x + 1);
            forward_sweep(basis.a, x, &mut row[..direct]);
        }
        // Above the diagonal, reuse the accurate lower part of row n.
        for x in 0..basis.order {
            for n in x + 1..len {
                values[x * len + n] = dual_scale(basis.a, n, x) * values[n * len + x];
            }
        }
        let weights = (0..=basis.x_max)
            .map(|x| ln_poisson_weight(basis.a, x as u64).exp())
            .collect();
        Self { basis, weights, values }
    }

    pub fn basis(&self) -> &CharlierBasis {
        &self.basis
    }

    #[inline]
    pub fn value(&self, n: usize, x: usize) -> f64 {
        self.values[x * self.basis.len() + n]
    }

    #[inline]
    pub fn column(&self, x: usize) -> &[f64] {
        let len = self.basis.len();
        &self.values[x * len..(x + 1) * len]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `c_n = Σ_x p(x) C̄_n(x)` into `out`.
    pub fn project_into(&self, p: &[f64], out: &mut [f64]) {
        let len = self.basis.len();
        let mut acc = vec![CompensatedSum::new(); len];
        for (x, &px) in p.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(self.column(x)) {
                a.add(px * v);
            }
        }
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = a.value();
        }
    }

    /// Plain-sum projection for inner loops where the compensated version
    /// would dominate the cost.
    pub(crate) fn project_fast(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (x, &px) in p.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.column(x)) {
                *o += px * v;
            }
        }
    }

    /// `p_N(x) = w(x) Σ_n c_n C̄_n(x)` into `out`.
    pub fn reconstruct_into(&self, coeffs: &[f64], out: &mut [f64]) {
        for (x, o) in out.iter_mut().enumerate() {
            let s: f64 = self.column(x).iter().zip(coeffs).map(|(v, c)| v * c).sum();
            *o = self.weights[x] * s;
        }
    }

    pub fn project(&self, p: &PmfVector) -> Result<CoeffVector> {
        if p.x_max() != self.basis.x_max {
            return Err(Error::DimensionMismatch {
                expected: self.basis.x_max + 1,
                found: p.len(),
            });
        }
        let mut c = vec![0.0; self.basis.len()];
        self.project_into(p.as_slice(), &mut c);
        Ok(CoeffVector { coeffs: c, basis: self.basis })
    }

    pub fn reconstruct(&self, c: &CoeffVector) -> PmfVector {
        let mut out = vec![0.0; self.basis.x_max + 1];
        self.reconstruct_into(&c.coeffs, &mut out);
        PmfVector::new(out).expect("finite coefficients rebuild to a finite sequence")
    }
}

/// Spectral coefficients `c_0..c_N` of a density in a given basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffVector {
    coeffs: Vec<f64>,
    basis: CharlierBasis,
}

impl CoeffVector {
    pub fn new(coeffs: Vec<f64>, basis: CharlierBasis) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), found: coeffs.len() });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("non-finite spectral coefficient"));
        }
        Ok(Self { coeffs, basis })
    }

    /// The weight itself: `c = (1, 0, ..., 0)`.
    pub fn unit(basis: CharlierBasis) -> Self {
        let mut coeffs = vec![0.0; basis.len()];
        coeffs[0] = 1.0;
        Self { coeffs, basis }
    }

    pub fn basis(&self) -> &CharlierBasis {
        &self.basis
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }
}

pub fn project_density(p: &PmfVector, basis: &CharlierBasis) -> Result<CoeffVector> {
    basis.tabulate().project(p)
}

/// `p_N(x)`; zero beyond the grid bound.
pub fn reconstruct(c: &CoeffVector, x: usize) -> f64 {
    if x > c.basis.x_max {
        return 0.0;
    }
    let mut buf = vec![0.0; c.basis.len()];
    charlier_normalized_all(c.basis.a, x, &mut buf);
    let s: f64 = buf.iter().zip(&c.coeffs).map(|(v, c)| v * c).sum();
    ln_poisson_weight(c.basis.a, x as u64).exp() * s
}

pub fn reconstruct_pmf(c: &CoeffVector) -> PmfVector {
    c.basis.tabulate().reconstruct(c)
}

/// `E f(X_N) = Σ_x f(x) p_N(x)`.
pub fn weak_expectation<F: Fn(usize) -> f64>(f: F, c: &CoeffVector) -> f64 {
    reconstruct_pmf(c).expect(f)
}

/// `‖Π p - p‖` in `h^k(w^{-1})`, where `Π` projects onto the basis.
pub fn truncation_error(p: &PmfVector, basis: &CharlierBasis, k: usize) -> Result<f64> {
    let table = basis.tabulate();
    let c = table.project(p)?;
    let rebuilt = table.reconstruct(&c);
    let diff: Vec<f64> = rebuilt
        .as_slice()
        .iter()
        .zip(p.as_slice())
        .map(|(r, s)| r - s)
        .collect();
    let spec = SobolevSpec::new(k, basis.a, WeightMode::WInverse, basis.x_max)?;
    sobolev::seq_norm(&diff, &spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn normalized_examples() {
        assert_eq!(charlier_normalized(0, 3.3, 7).unwrap(), 1.0);
        assert!((charlier_normalized(1, 4.0, 2).unwrap() - 1.0).abs() < 1e-15);
        let v = charlier_normalized(2, 1.0, 2).unwrap();
        assert!((v + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(charlier_normalized(1, 0.0, 2).is_err());
    }

    #[test]
    fn unnormalized_examples() {
        assert_eq!(charlier_unnormalized(1, 2.0, 5).unwrap(), 3.0);
        assert_eq!(charlier_unnormalized(2, 1.0, 2).unwrap(), -1.0);
        assert_eq!(charlier_unnormalized(0, 1.5, 4).unwrap(), 1.0);
        assert!(charlier_unnormalized(2, -1.0, 2).is_err());
        // Closed forms of degrees two and three.
        for x in 0..12 {
            let a = 1.7;
            let xf = x as f64;
            let c2 = xf * xf - 2.0 * xf * a + a * a - xf;
            let c3 = xf.powi(3) - 3.0 * (a + 1.0) * xf * xf + (3.0 * a * a + 3.0 * a + 2.0) * xf
                - a.powi(3);
            assert!((charlier_unnormalized(2, a, x).unwrap() - c2).abs() < 1e-10);
            assert!((charlier_unnormalized(3, a, x).unwrap() - c3).abs() < 1e-9);
        }
    }

    #[test]
    fn convention_bridge() {
        for &a in &[0.7, 2.0, 9.0] {
            for n in 0..=6 {
                for x in 0..25 {
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    let bridged = sign * charlier_unnormalized(n, a, x).unwrap()
                        / (factorial(n) * a.powi(n as i32)).sqrt();
                    let direct = charlier_normalized(n, a, x).unwrap();
                    let scale = direct.abs().max(1.0);
                    assert!((bridged - direct).abs() < 1e-10 * scale, "a={a} n={n} x={x}");
                }
            }
        }
    }

    /// High-degree values at small `a`, where the recurrence alone fails.
    #[test]
    fn high_degree_values_are_accurate() {
        // Closed form at x = 0: C̄_n(0) = sqrt(a^n / n!).
        for &a in &[0.5, 1.0, 3.0] {
            for n in [20usize, 35, 50] {
                let v = charlier_normalized(n, a, 0).unwrap();
                let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
                let expect = (0.5 * (n as f64 * a.ln() - ln_fact)).exp();
                assert!((v - expect).abs() < 1e-12 * expect, "a={a} n={n}");
            }
        }
        let basis = CharlierBasis::new(1.0, 40).unwrap();
        let t = basis.tabulate();
        let mut buf = vec![0.0; 41];
        for x in [0usize, 3, 17, 39, 60] {
            charlier_normalized_all(1.0, x, &mut buf);
            for n in 0..=40 {
                assert_eq!(buf[n].to_bits(), t.value(n, x).to_bits(), "x={x} n={n}");
            }
        }
    }

    #[test]
    fn orthonormal_and_zero_mean() {
        for &a in &[1.0, 5.0, 100.0] {
            let basis = CharlierBasis::new(a, 10).unwrap();
            let t = basis.tabulate();
            for m in 0..=10 {
                for n in 0..=10 {
                    let s: f64 = (0..=basis.x_max())
                        .map(|x| t.value(m, x) * t.value(n, x) * t.weights()[x])
                        .sum();
                    let delta = if m == n { 1.0 } else { 0.0 };
                    assert!((s - delta).abs() < 1e-10, "a={a} m={m} n={n} s={s}");
                }
            }
            for n in 1..=10 {
                let s: f64 = (0..=basis.x_max()).map(|x| t.value(n, x) * t.weights()[x]).sum();
                assert!(s.abs() < 1e-12, "a={a} n={n}");
            }
        }
    }

    #[test]
    fn projecting_the_weight_gives_unit_vector() {
        let basis = CharlierBasis::new(3.0, 8).unwrap();
        let p = PmfVector::poisson(3.0, basis.x_max()).unwrap();
        let c = project_density(&p, &basis).unwrap();
        assert!((c.as_slice()[0] - 1.0).abs() < 1e-12);
        for v in &c.as_slice()[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_coefficients_have_closed_form() {
        // c_n = (a - lambda)^n / sqrt(n! a^n) for a Poisson(lambda) source.
        let (a, lambda) = (1.0, 1.2);
        let basis = CharlierBasis::new(a, 8).unwrap();
        let p = PmfVector::poisson(lambda, basis.x_max()).unwrap();
        let c = project_density(&p, &basis).unwrap();
        assert!((c.as_slice()[1] + 0.2).abs() < 1e-12);
        for (n, v) in c.as_slice().iter().enumerate() {
            let expect = (a - lambda).powi(n as i32) / (factorial(n) * a.powi(n as i32)).sqrt();
            assert!((v - expect).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn projection_rejects_mismatched_grid() {
        let basis = CharlierBasis::with_x_max(2.0, 3, 20).unwrap();
        let p = PmfVector::poisson(2.0, 25).unwrap();
        assert!(matches!(
            project_density(&p, &basis),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(CharlierBasis::with_x_max(2.0, 30, 20).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let basis = CharlierBasis::new(2.5, 6).unwrap();
        let unit = CoeffVector::unit(basis);
        for x in 0..10 {
            let w = crate::special::poisson_weight(2.5, x as u64).unwrap();
            assert!((reconstruct(&unit, x) - w).abs() < 1e-15);
        }
        let c = CoeffVector::new(vec![0.8, 0.3, -0.2, 0.1, 0.05, 0.0, -0.01], basis).unwrap();
        let rebuilt = reconstruct_pmf(&c);
        assert!((rebuilt.mass() - 0.8).abs() < 1e-10);
        assert!((reconstruct(&c, 4) - rebuilt.as_slice()[4]).abs() < 1e-15);
        assert_eq!(reconstruct(&c, basis.x_max() + 1), 0.0);
    }

    #[test]
    fn reconstruction_converges_pointwise() {
        let (a, lambda) = (3.0, 3.6);
        let mut prev = f64::INFINITY;
        for order in [2, 6, 12, 20] {
            let basis = CharlierBasis::new(a, order).unwrap();
            let p = PmfVector::poisson(lambda, basis.x_max()).unwrap();
            let rebuilt = reconstruct_pmf(&project_density(&p, &basis).unwrap());
            let err = rebuilt
                .as_slice()
                .iter()
                .zip(p.as_slice())
                .map(|(r, s)| (r - s).abs())
                .fold(0.0, f64::max);
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn project_of_reconstruct_is_identity() {
        let basis = CharlierBasis::new(4.0, 10).unwrap();
        let t = basis.tabulate();
        let c: Vec<f64> = (0..=10).map(|n| 1.0 / (1.0 + n as f64) * if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let cv = CoeffVector::new(c.clone(), basis).unwrap();
        let back = t.project(&t.reconstruct(&cv)).unwrap();
        for (u, v) in back.as_slice().iter().zip(&c) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn weak_expectation_examples() {
        let basis = CharlierBasis::new(1.0, 2).unwrap();
        let p = PmfVector::poisson(1.2, basis.x_max()).unwrap();
        let c = project_density(&p, &basis).unwrap();
        assert!((weak_expectation(|_| 1.0, &c) - c.as_slice()[0]).abs() < 1e-12);
        let second = weak_expectation(|x| (x * x) as f64, &c);
        let direct = p.expect(|x| (x * x) as f64);
        assert!((second - direct).abs() < 1e-9);
        assert!((second - 2.64).abs() < 1e-9);
        let unit = CoeffVector::unit(CharlierBasis::new(3.5, 4).unwrap());
        assert!((weak_expectation(|x| x as f64, &unit) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn truncation_error_examples() {
        let basis = CharlierBasis::new(2.0, 5).unwrap();
        let w = PmfVector::poisson(2.0, basis.x_max()).unwrap();
        for k in 0..3 {
            assert!(truncation_error(&w, &basis, k).unwrap() < 1e-12);
        }

        let mut prev = f64::INFINITY;
        for order in 1..=8 {
            let basis = CharlierBasis::new(1.0, order).unwrap();
            let p = PmfVector::poisson(1.2, basis.x_max()).unwrap();
            let e = truncation_error(&p, &basis, 0).unwrap();
            assert!(e < prev, "order {order}: {e} !< {prev}");
            prev = e;
        }

        let basis = CharlierBasis::new(1.0, 40).unwrap();
        let p = PmfVector::poisson(1.2, basis.x_max()).unwrap();
        let e = truncation_error(&p, &basis, 2).unwrap();
        assert!(e < 1e-10);
    }

    #[test]
    fn truncation_error_matches_coefficient_tail() {
        // ‖Π p - p‖² in l²(w^{-1}) is the sum of the dropped c_n².
        let (a, lambda) = (1.0, 1.2);
        let order = 3;
        let basis = CharlierBasis::new(a, order).unwrap();
        let p = PmfVector::poisson(lambda, basis.x_max()).unwrap();
        let e = truncation_error(&p, &basis, 0).unwrap();
        let tail: f64 = (order + 1..40)
            .map(|n| 0.04f64.powi(n as i32) / factorial(n))
            .sum();
        assert!((e * e - tail).abs() < 1e-8 * tail);
    }
}

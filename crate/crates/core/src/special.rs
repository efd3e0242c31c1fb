//! Special functions behind the closed-form rate expressions: Poisson weights
//! and tails, Touchard polynomials, Stirling numbers of the second kind,
//! falling factorials and the Poisson moment identities.
//!
//! Tail functions take arguments in the order `(q, c)`: the Poisson rate
//! first, the integer threshold second. `upper_tail(q, c)` is
//! `P(Poisson(q) > c)` and `lower_tail(q, c)` is `P(Poisson(q) <= c)`.

use std::sync::{OnceLock, RwLock};

use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Relative size below which a tail term is dropped.
const TAIL_EPS: f64 = 1e-18;

/// `ln w(x; a)` without overflow. `a = 0` gives the point mass at zero.
pub fn ln_poisson_weight(a: f64, x: u64) -> f64 {
    if a == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    x as f64 * a.ln() - a - ln_factorial(x)
}

/// Poisson weight `a^x e^{-a} / x!`, evaluated in log space.
pub fn poisson_weight(a: f64, x: u64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("Poisson weight needs a > 0, got {a}")));
    }
    Ok(ln_poisson_weight(a, x).exp())
}

/// Poisson(q) probabilities on `{0..=x_max}`.
///
/// Built by the ratio recurrence outward from the mode so that neither end
/// underflows prematurely; consecutive entries satisfy
/// `(x+1) p(x+1) = q p(x)` to a couple of ulps.
pub fn poisson_pmf_table(q: f64, x_max: usize) -> Vec<f64> {
    let mut p = vec![0.0; x_max + 1];
    if q == 0.0 {
        p[0] = 1.0;
        return p;
    }
    let mode = (q.floor() as usize).min(x_max);
    p[mode] = ln_poisson_weight(q, mode as u64).exp();
    for x in mode + 1..=x_max {
        p[x] = p[x - 1] * q / x as f64;
    }
    for x in (0..mode).rev() {
        p[x] = p[x + 1] * (x + 1) as f64 / q;
    }
    p
}

/// Smallest `x` with `lower_tail(a, x) > 1 - tol`.
pub fn poisson_quantile_upper(a: f64, tol: f64) -> usize {
    if a == 0.0 {
        return 0;
    }
    let mut x = a.floor() as i64;
    // Walk upward with the direct tail sum; the upper tail decays quickly past the mode.
    loop {
        if upper_tail(a, x).unwrap_or(0.0) < tol {
            return x.max(0) as usize;
        }
        x += 1;
    }
}

fn check_rate(q: f64) -> Result<()> {
    if q < 0.0 || !q.is_finite() {
        return Err(Error::domain(format!("Poisson tail needs q >= 0, got {q}")));
    }
    Ok(())
}

/// Returns `(P(Q <= c), P(Q > c))` for `Q ~ Poisson(q)`.
///
/// The smaller side is summed directly, term by term, and the other side is
/// its complement, so both stay accurate to a few ulps relative to themselves
/// on the side where they are small.
fn tails(q: f64, c: i64) -> (f64, f64) {
    if c < 0 {
        return (0.0, 1.0);
    }
    if q == 0.0 {
        return (1.0, 0.0);
    }
    if (c as f64) < q {
        // Terms decrease going down from c toward 0.
        let mut term = ln_poisson_weight(q, c as u64).exp();
        let mut acc = CompensatedSum::new();
        let mut x = c;
        loop {
            acc.add(term);
            if x == 0 || term < TAIL_EPS * acc.value() {
                break;
            }
            term *= x as f64 / q;
            x -= 1;
        }
        let lower = acc.value().min(1.0);
        (lower, 1.0 - lower)
    } else {
        let mut x = c + 1;
        let mut term = ln_poisson_weight(q, x as u64).exp();
        let mut acc = CompensatedSum::new();
        loop {
            acc.add(term);
            x += 1;
            term *= q / x as f64;
            if term < TAIL_EPS * acc.value() || term == 0.0 {
                break;
            }
        }
        let upper = acc.value().min(1.0);
        (1.0 - upper, upper)
    }
}

/// `P(Poisson(q) > c) = sum_{m > c} e^{-q} q^m / m!`; equals 1 for `c <= -1`.
pub fn upper_tail(q: f64, c: i64) -> Result<f64> {
    check_rate(q)?;
    Ok(tails(q, c).1)
}

/// `P(Poisson(q) <= c) = sum_{m=0}^{c} e^{-q} q^m / m!`; equals 0 for `c <= -1`.
pub fn lower_tail(q: f64, c: i64) -> Result<f64> {
    check_rate(q)?;
    Ok(tails(q, c).0)
}

/// Tails for callers that have already validated `q`.
pub(crate) fn upper_tail_unchecked(q: f64, c: i64) -> f64 {
    tails(q, c).1
}

pub(crate) fn lower_tail_unchecked(q: f64, c: i64) -> f64 {
    tails(q, c).0
}

static STIRLING: OnceLock<RwLock<Vec<Vec<u128>>>> = OnceLock::new();

/// Stirling number of the second kind `S(n, j)`, memoized by rows.
///
/// Returns 0 for `j > n`. Panics if the value exceeds `u128`, which first
/// happens for `n` in the mid-50s.
pub fn stirling2(n: usize, j: usize) -> u128 {
    if j > n {
        return 0;
    }
    let table = STIRLING.get_or_init(|| RwLock::new(vec![vec![1]]));
    {
        let rows = table.read().expect("stirling table poisoned");
        if let Some(row) = rows.get(n) {
            return row[j];
        }
    }
    let mut rows = table.write().expect("stirling table poisoned");
    while rows.len() <= n {
        let prev = rows.last().expect("seeded with row 0");
        let m = prev.len();
        let mut row = vec![0u128; m + 1];
        for k in 1..=m {
            let from_prev = if k < m { prev[k] } else { 0 };
            row[k] = (k as u128)
                .checked_mul(from_prev)
                .and_then(|v| v.checked_add(prev[k - 1]))
                .unwrap_or_else(|| panic!("S({m}, {k}) overflows u128"));
        }
        rows.push(row);
    }
    rows[n][j]
}

/// Touchard polynomial `T_k(q) = sum_j S(k, j) q^j`, i.e. `E[X^k]` for `X ~ Poisson(q)`.
pub fn touchard(k: usize, q: f64) -> f64 {
    // Horner over the Stirling coefficients.
    (0..=k).rev().fold(0.0, |acc, j| acc * q + stirling2(k, j) as f64)
}

/// `x (x-1) ... (x-k+1)`; zero when `k > x`.
pub fn falling_factorial(x: u64, k: u32) -> u128 {
    if k as u64 > x {
        return 0;
    }
    (0..k as u64).fold(1u128, |acc, i| {
        acc.checked_mul((x - i) as u128)
            .unwrap_or_else(|| panic!("falling factorial ({x})_{k} overflows u128"))
    })
}

pub fn falling_factorial_f64(x: usize, k: usize) -> f64 {
    if k > x {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (x - i) as f64)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// `E[Q f(Q)] - q E[f(Q+1)]` under `Poisson(q)`, summed over `{0..=x_max}`.
///
/// Terms are paired as `f(x) (x p(x) - q p(x-1))` so the two large
/// expectations never have to cancel each other.
pub fn chen_stein_gap<F: Fn(u64) -> f64>(f: F, q: f64, x_max: usize) -> f64 {
    let p = poisson_pmf_table(q, x_max);
    let mut acc = CompensatedSum::new();
    for x in 1..=x_max {
        acc.add(f(x as u64) * (x as f64 * p[x] - q * p[x - 1]));
    }
    acc.add(-q * f(x_max as u64 + 1) * p[x_max]);
    acc.value()
}

/// Central moment `E[(Q - q)^m]` of `Poisson(q)` from the recursion
/// `mu_{m+1} = q sum_{j=0}^{m-1} C(m, j) mu_j`, seeded with `mu_0 = 1, mu_1 = 0`.
pub fn poisson_central_moment(m: usize, q: f64) -> f64 {
    let mut mu = vec![1.0, 0.0];
    for order in 1..m {
        let next = q * (0..order).map(|j| binomial(order, j) * mu[j]).sum::<f64>();
        mu.push(next);
    }
    mu[m]
}

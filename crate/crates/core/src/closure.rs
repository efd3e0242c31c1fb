//! Moment closure: forward-equation right-hand sides for moments and
//! cumulants, closed-form rate functions under the zeroth and first order
//! Poisson-Charlier surrogates, and moment matching.
//!
//! The first order surrogate is `p(x) = w(x; q) (a0 + a1 (x - q))`. For any
//! functional `f`, `E_s[f] = a0 P[f] + a1 (P[Q f] - q P[f])` where `P` is the
//! Poisson(q) expectation; every `P[Q^k f]` below is reduced to Poisson tails
//! with the Chen-Stein identity `E[Q g(Q)] = q E[g(Q + 1)]`.

use serde::{Deserialize, Serialize};

use crate::charlier::{reconstruct_pmf, CoeffVector};
use crate::error::{Error, Result};
use crate::models::BirthDeathModel;
use crate::pmf::PmfVector;
use crate::special::{binomial, lower_tail_unchecked, poisson_quantile_upper, touchard, upper_tail_unchecked, CompensatedSum};

/// Mean, variance, and third and fourth cumulants.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentState {
    pub mean: f64,
    pub variance: f64,
    pub cum3: f64,
    pub cum4: f64,
}

impl MomentState {
    pub fn new(mean: f64, variance: f64, cum3: f64, cum4: f64) -> Self {
        Self { mean, variance, cum3, cum4 }
    }

    /// All cumulants equal to `q`.
    pub fn poisson(q: f64) -> Self {
        Self::new(q, q, q, q)
    }

    pub fn skewness(&self) -> f64 {
        self.cum3 / self.variance.powf(1.5)
    }

    /// Excess kurtosis `cum4 / variance²`.
    pub fn excess_kurtosis(&self) -> f64 {
        self.cum4 / (self.variance * self.variance)
    }

    /// Standardized fourth central moment `E[(Q - m)^4] / variance²`, the
    /// quantity reported as kurtosis in error tables.
    pub fn kurtosis(&self) -> f64 {
        self.excess_kurtosis() + 3.0
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.mean, self.variance, self.cum3, self.cum4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureOrder {
    Zeroth,
    First,
}

impl ClosureOrder {
    pub fn index(self) -> usize {
        match self {
            ClosureOrder::Zeroth => 0,
            ClosureOrder::First => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub q: f64,
    pub a0: f64,
    pub a1: f64,
    pub order: ClosureOrder,
}

impl SurrogateParams {
    pub fn zeroth(q: f64) -> Self {
        Self { q, a0: 1.0, a1: 0.0, order: ClosureOrder::Zeroth }
    }

    pub fn first(q: f64, a1: f64) -> Self {
        Self { q, a0: 1.0, a1, order: ClosureOrder::First }
    }

    /// Surrogate mass at `x`.
    pub fn pmf(&self, x: usize) -> f64 {
        let w = crate::special::ln_poisson_weight(self.q, x as u64).exp();
        w * (self.a0 + self.a1 * (x as f64 - self.q))
    }

    /// `E_s[Q^k] = a0 T_k + a1 (T_{k+1} - q T_k)`.
    pub fn moment(&self, k: usize) -> f64 {
        let tk = touchard(k, self.q);
        self.a0 * tk + self.a1 * (touchard(k + 1, self.q) - self.q * tk)
    }

    pub fn mean(&self) -> f64 {
        (self.a0 + self.a1) * self.q
    }

    pub fn variance(&self) -> f64 {
        let (a0, a1, q) = (self.a0, self.a1, self.q);
        q * (a0 + a1) + q * q * (a0 + 2.0 * a1 - (a0 + a1) * (a0 + a1))
    }

    /// Upper summation bound for brute-force sums against this surrogate.
    pub fn support_bound(&self) -> usize {
        poisson_quantile_upper(self.q, 1e-60) + 10
    }

    /// `E_s[f]` by direct summation over the surrogate.
    pub fn brute_expect<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        (0..=self.support_bound()).map(|x| f(x) * self.pmf(x)).collect::<CompensatedSum>().value()
    }

    /// `E_s[Q^k f]` from the Poisson kernel `pk(j) = P[Q^j f]`.
    fn lift(&self, k: usize, pk: impl Fn(usize) -> f64) -> f64 {
        let base = pk(k);
        if self.a1 == 0.0 {
            return self.a0 * base;
        }
        self.a0 * base + self.a1 * (pk(k + 1) - self.q * base)
    }
}

/// `P[Q^k (Q - c)^+]` for `Q ~ Poisson(q)` and any integer `c`.
pub(crate) fn poisson_overflow_moment(k: usize, q: f64, c: i64) -> f64 {
    if k == 0 {
        return q * upper_tail_unchecked(q, c - 1) - c as f64 * upper_tail_unchecked(q, c);
    }
    q * (0..k)
        .map(|j| binomial(k - 1, j) * poisson_overflow_moment(j, q, c - 1))
        .sum::<f64>()
}

/// `P[Q^k 1{Q < z}]`.
pub(crate) fn poisson_indicator_moment(k: usize, q: f64, z: i64) -> f64 {
    if k == 0 {
        return lower_tail_unchecked(q, z - 1);
    }
    q * (0..k)
        .map(|j| binomial(k - 1, j) * poisson_indicator_moment(j, q, z - 1))
        .sum::<f64>()
}

/// `P[Q^k (Q ∧ c)]`.
fn poisson_min_moment(k: usize, q: f64, c: i64) -> f64 {
    if c == 0 {
        return 0.0;
    }
    touchard(k + 1, q) - poisson_overflow_moment(k, q, c)
}

pub fn expected_overflow(s: &SurrogateParams, c: usize) -> f64 {
    s.lift(0, |j| poisson_overflow_moment(j, s.q, c as i64))
}

pub fn expected_min(s: &SurrogateParams, c: usize) -> f64 {
    s.lift(0, |j| poisson_min_moment(j, s.q, c as i64))
}

pub fn expected_indicator_below(s: &SurrogateParams, z: usize) -> f64 {
    s.lift(0, |j| poisson_indicator_moment(j, s.q, z as i64))
}

pub fn expected_q_times_overflow(s: &SurrogateParams, c: usize) -> f64 {
    s.lift(1, |j| poisson_overflow_moment(j, s.q, c as i64))
}

pub fn expected_q_times_min(s: &SurrogateParams, c: usize) -> f64 {
    s.lift(1, |j| poisson_min_moment(j, s.q, c as i64))
}

pub fn expected_q_times_indicator(s: &SurrogateParams, z: usize) -> f64 {
    s.lift(1, |j| poisson_indicator_moment(j, s.q, z as i64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceTerms {
    pub overflow: f64,
    pub min: f64,
    pub indicator: Option<f64>,
}

fn weight_at(q: f64, x: i64) -> f64 {
    if x < 0 {
        0.0
    } else {
        crate::special::ln_poisson_weight(q, x as u64).exp()
    }
}

/// `E_s[Q f] - m E_s[f]` through the Stein identity `P[(Q-q) g] = q P[Δg]`,
/// from `d1 = P[Δf]`, `d2 = P[Δ²f]` and `ef = P[f]` under `Poisson(q)`.
/// Avoids subtracting two `O(q²)` quantities.
fn stein_covariance(s: &SurrogateParams, d1: f64, d2: f64, ef: f64) -> f64 {
    let (a0, a1, q) = (s.a0, s.a1, s.q);
    let d = (a0 - 1.0) * q + a1 * q;
    let e = q * (1.0 - a0) * (a0 + a1);
    q * d1 * (a0 + a1 - d * a1) + a1 * q * q * d2 + e * ef
}

/// `Cov[Q, (Q-c)^+]`, `Cov[Q, Q∧c]` and optionally `Cov[Q, 1{Q<z}]` under
/// the surrogate.
pub fn covariance_terms(s: &SurrogateParams, c: usize, z: Option<usize>) -> CovarianceTerms {
    let (q, c) = (s.q, c as i64);
    let wc = weight_at(q, c - 1);
    let over = poisson_overflow_moment(0, q, c);
    CovarianceTerms {
        overflow: stein_covariance(s, upper_tail_unchecked(q, c - 1), wc, over),
        min: stein_covariance(s, lower_tail_unchecked(q, c - 1), -wc, q - over),
        indicator: z.map(|z| {
            let z = z as i64;
            let (w1, w2) = (weight_at(q, z - 1), weight_at(q, z - 2));
            stein_covariance(s, -w1, w1 - w2, lower_tail_unchecked(q, z - 1))
        }),
    }
}

/// `P(Q >= c)`.
pub fn delay_probability(s: &SurrogateParams, c: usize) -> f64 {
    let c = c as i64;
    s.a0 * upper_tail_unchecked(s.q, c - 1) + s.a1 * s.q * weight_at(s.q, c - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootChoice {
    /// `q <= mean`, `a1 >= 0`.
    #[default]
    NonNegative,
    /// `q >= mean`, `a1 <= 0`.
    NonPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchFlag {
    Exact,
    /// Variance exceeds the mean; fell back to the Poisson surrogate.
    OverDispersed,
    /// The matched `q` was driven to the floor `1e-6 * mean`.
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchResult {
    pub params: SurrogateParams,
    pub flag: MatchFlag,
}

const Q_FLOOR: f64 = 1e-6;

/// Surrogate parameters reproducing `mean` and, at first order, `variance`.
///
/// The first order family has variance `mean - (q - mean)²`, so it cannot
/// reach `variance > mean`.
pub fn moment_match(mean: f64, variance: f64, order: ClosureOrder, root: RootChoice) -> Result<MatchResult> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::domain(format!("moment matching needs a positive mean, got {mean}")));
    }
    if order == ClosureOrder::Zeroth {
        return Ok(MatchResult { params: SurrogateParams::zeroth(mean), flag: MatchFlag::Exact });
    }
    if !variance.is_finite() {
        return Err(Error::domain("non-finite variance"));
    }
    // Poisson states sit on the boundary; let rounding through.
    if variance > mean * (1.0 + 1e-12) {
        return Ok(MatchResult {
            params: SurrogateParams { order: ClosureOrder::First, ..SurrogateParams::zeroth(mean) },
            flag: MatchFlag::OverDispersed,
        });
    }
    let gap = (mean - variance).max(0.0).sqrt();
    let (mut q, mut flag) = match root {
        RootChoice::NonNegative => (mean - gap, MatchFlag::Exact),
        RootChoice::NonPositive => (mean + gap, MatchFlag::Exact),
    };
    if q < Q_FLOOR * mean {
        q = Q_FLOOR * mean;
        flag = MatchFlag::Clamped;
    }
    Ok(MatchResult { params: SurrogateParams::first(q, mean / q - 1.0), flag })
}

/// Something that can take expectations of functions of the state.
pub trait Expectation {
    fn expect_fn(&self, f: &dyn Fn(usize) -> f64) -> f64;
}

impl Expectation for PmfVector {
    fn expect_fn(&self, f: &dyn Fn(usize) -> f64) -> f64 {
        self.expect(f)
    }
}

impl Expectation for [f64] {
    fn expect_fn(&self, f: &dyn Fn(usize) -> f64) -> f64 {
        self.iter().enumerate().map(|(x, p)| f(x) * p).collect::<CompensatedSum>().value()
    }
}

impl Expectation for CoeffVector {
    fn expect_fn(&self, f: &dyn Fn(usize) -> f64) -> f64 {
        reconstruct_pmf(self).expect(f)
    }
}

impl Expectation for SurrogateParams {
    fn expect_fn(&self, f: &dyn Fn(usize) -> f64) -> f64 {
        self.brute_expect(f)
    }
}

/// `d/dt E[Q^m] = Σ_{k<m} C(m,k) (E[Q^k ψα] + (-1)^{m-k} E[Q^k ψδ])`.
pub fn moment_rhs(m: usize, model: &BirthDeathModel, t: f64, expect: &dyn Expectation) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("moment index must be at least 1"));
    }
    let mut total = 0.0;
    for k in 0..m {
        let eb = expect.expect_fn(&|x| (x as f64).powi(k as i32) * model.birth(t, x));
        let ed = expect.expect_fn(&|x| (x as f64).powi(k as i32) * model.death(t, x));
        let sign = if (m - k) % 2 == 0 { 1.0 } else { -1.0 };
        total += binomial(m, k) * (eb + sign * ed);
    }
    Ok(total)
}

/// Time derivatives of the mean and the second to fourth cumulants.
///
/// Centering uses `state.mean`; the covariances `Cov[Q̄^j, ψ]` come from
/// `expect`.
pub fn cumulant_rhs(state: &MomentState, model: &BirthDeathModel, t: f64, expect: &dyn Expectation) -> MomentState {
    let m = state.mean;
    let e = |f: &dyn Fn(usize) -> f64| expect.expect_fn(f);
    let centered = |j: i32| e(&|x| (x as f64 - m).powi(j));
    let c_mom = [1.0, centered(1), centered(2), centered(3)];
    let cov = |j: i32, psi: &dyn Fn(usize) -> f64| {
        e(&|x| (x as f64 - m).powi(j) * psi(x)) - c_mom[j as usize] * e(psi)
    };
    let birth = |x: usize| model.birth(t, x);
    let death = |x: usize| model.death(t, x);
    let (ea, ed) = (e(&birth), e(&death));
    let (c1a, c1d) = (cov(1, &birth), cov(1, &death));
    let (c2a, c2d) = (cov(2, &birth), cov(2, &death));
    let (c3a, c3d) = (cov(3, &birth), cov(3, &death));
    MomentState {
        mean: ea - ed,
        variance: ea + ed + 2.0 * (c1a - c1d),
        cum3: ea - ed + 3.0 * (c1a + c1d) + 3.0 * (c2a - c2d),
        cum4: ea + ed + 4.0 * (c1a - c1d) + 6.0 * (c2a + c2d) + 4.0 * (c3a - c3d)
            - 12.0 * state.variance * (c1a - c1d),
    }
}

/// Cumulant derivatives from raw moments `E[Q^k]` and their derivatives,
/// `k = 1..=4`, by the chain rule.
pub fn raw_to_cumulant(raw: [f64; 4], d: [f64; 4]) -> MomentState {
    let [m1, m2, m3, _] = raw;
    let [d1, d2, d3, d4] = d;
    MomentState {
        mean: d1,
        variance: d2 - 2.0 * m1 * d1,
        cum3: d3 - 3.0 * d2 * m1 - 3.0 * m2 * d1 + 6.0 * d1 * m1 * m1,
        cum4: d4 - 4.0 * d3 * m1 - 4.0 * m3 * d1 + 12.0 * d2 * m1 * m1 + 24.0 * m2 * d1 * m1
            - 24.0 * d1 * m1.powi(3)
            - 6.0 * d2 * m2,
    }
}

//! Birth-death models: rate pairs, the truncated generator and the growth
//! check on the combined rate.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-dependent scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeFunction {
    Constant { value: f64 },
    /// `base + amplitude * sin(t)`.
    Sinusoid { base: f64, amplitude: f64 },
    /// Piecewise-linear through the samples, held constant outside them.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl TimeFunction {
    pub fn constant(value: f64) -> Self {
        TimeFunction::Constant { value }
    }

    pub fn sinusoid(base: f64, amplitude: f64) -> Self {
        TimeFunction::Sinusoid { base, amplitude }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TimeFunction::Constant { value } if !value.is_finite() => {
                Err(Error::Config("non-finite constant".into()))
            }
            TimeFunction::Sinusoid { base, amplitude } if !base.is_finite() || !amplitude.is_finite() => {
                Err(Error::Config("non-finite sinusoid coefficient".into()))
            }
            TimeFunction::Tabulated { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Config("tabulated function needs matching, nonempty samples".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("tabulated times must be strictly increasing".into()));
                }
                if values.iter().chain(times).any(|v| !v.is_finite()) {
                    return Err(Error::Config("non-finite tabulated sample".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Constant { value } => *value,
            TimeFunction::Sinusoid { base, amplitude } => base + amplitude * t.sin(),
            TimeFunction::Tabulated { times, values } => {
                let i = times.partition_point(|&s| s <= t);
                if i == 0 {
                    values[0]
                } else if i == times.len() {
                    values[i - 1]
                } else {
                    let (t0, t1) = (times[i - 1], times[i]);
                    let s = (t - t0) / (t1 - t0);
                    values[i - 1] + s * (values[i] - values[i - 1])
                }
            }
        }
    }

    /// Upper bound of the function over `[t0, t1]`.
    pub fn upper_bound(&self, t0: f64, t1: f64) -> f64 {
        match self {
            TimeFunction::Constant { value } => *value,
            TimeFunction::Sinusoid { base, amplitude } => base + amplitude.abs(),
            TimeFunction::Tabulated { times, values } => {
                let inner = times
                    .iter()
                    .zip(values)
                    .filter(|(s, _)| **s > t0 && **s < t1)
                    .map(|(_, v)| *v);
                inner.fold(self.eval(t0).max(self.eval(t1)), f64::max)
            }
        }
    }

    /// Lower bound of the function over all time.
    pub fn global_lower_bound(&self) -> f64 {
        match self {
            TimeFunction::Constant { value } => *value,
            TimeFunction::Sinusoid { base, amplitude } => base - amplitude.abs(),
            TimeFunction::Tabulated { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErlangAParams {
    pub lambda: TimeFunction,
    pub mu: f64,
    pub beta: f64,
    pub c: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErlangLossParams {
    pub lambda: TimeFunction,
    pub mu: f64,
    pub beta: f64,
    pub c: usize,
    /// Waiting spaces; arrivals are blocked once `x >= c + k`.
    pub k: usize,
}

impl ErlangLossParams {
    pub fn erlang_a(&self) -> ErlangAParams {
        ErlangAParams { lambda: self.lambda.clone(), mu: self.mu, beta: self.beta, c: self.c }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuadraticParams {
    /// Birth `λ(t) x max(Q̃ - x, 0)`, death `β x`.
    Logistic { lambda: TimeFunction, capacity: usize, beta: f64 },
    /// Birth `λ(t)(b0 + b1 x + b2 x²)`, death `μ(t)(d0 + d1 x + d2 x²)`.
    Polynomial { lambda: TimeFunction, b: [f64; 3], mu: TimeFunction, d: [f64; 3] },
}

impl QuadraticParams {
    /// Polynomial coefficients of birth and death at time `t`, with the
    /// time prefactors folded in.
    ///
    /// For the logistic form these describe the unclamped rates, which agree
    /// with the model on `{0..=Q̃}`.
    pub fn coefficients(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        match self {
            QuadraticParams::Logistic { lambda, capacity, beta } => {
                let l = lambda.eval(t);
                ([0.0, l * *capacity as f64, -l], [0.0, *beta, 0.0])
            }
            QuadraticParams::Polynomial { lambda, b, mu, d } => {
                let (l, m) = (lambda.eval(t), mu.eval(t));
                (b.map(|v| l * v), d.map(|v| m * v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    InfiniteServer { lambda: TimeFunction, mu: f64 },
    ErlangA(ErlangAParams),
    ErlangLoss(ErlangLossParams),
    Quadratic(QuadraticParams),
}

type RateFn = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Rates {
    Builtin(ModelKind),
    Custom { birth: RateFn, death: RateFn },
}

/// A birth-death process on `Z+` given by its rate pair.
#[derive(Clone)]
pub struct BirthDeathModel {
    label: String,
    rates: Rates,
}

impl fmt::Debug for BirthDeathModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("BirthDeathModel");
        d.field("label", &self.label);
        match &self.rates {
            Rates::Builtin(kind) => d.field("kind", kind),
            Rates::Custom { .. } => d.field("kind", &"custom"),
        };
        d.finish()
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
    }
    Ok(())
}

fn check_rate_fn(name: &str, f: &TimeFunction) -> Result<()> {
    f.validate()?;
    if f.global_lower_bound() < 0.0 {
        return Err(Error::Config(format!("{name}(t) takes negative values")));
    }
    Ok(())
}

pub fn make_infinite_server(lambda: TimeFunction, mu: f64) -> Result<BirthDeathModel> {
    check_rate_fn("lambda", &lambda)?;
    check_positive("mu", mu)?;
    Ok(BirthDeathModel::from_kind("infinite server", ModelKind::InfiniteServer { lambda, mu }))
}

pub fn make_erlang_a(p: ErlangAParams) -> Result<BirthDeathModel> {
    check_rate_fn("lambda", &p.lambda)?;
    check_positive("mu", p.mu)?;
    check_nonneg("beta", p.beta)?;
    if p.c == 0 {
        return Err(Error::Config("Erlang-A needs at least one server".into()));
    }
    Ok(BirthDeathModel::from_kind("Erlang-A", ModelKind::ErlangA(p)))
}

pub fn make_erlang_loss(p: ErlangLossParams) -> Result<BirthDeathModel> {
    make_erlang_a(p.erlang_a())?;
    Ok(BirthDeathModel::from_kind("Erlang loss", ModelKind::ErlangLoss(p)))
}

/// Builds a quadratic model, checking rate signs on `{0..=x_max}`.
pub fn make_quadratic(p: QuadraticParams, x_max: usize) -> Result<BirthDeathModel> {
    match &p {
        QuadraticParams::Logistic { lambda, beta, .. } => {
            check_rate_fn("lambda", lambda)?;
            check_nonneg("beta", *beta)?;
        }
        QuadraticParams::Polynomial { lambda, mu, d, b } => {
            check_rate_fn("lambda", lambda)?;
            check_rate_fn("mu", mu)?;
            if d[0] != 0.0 {
                return Err(Error::Config("death rate must vanish at x = 0 (d0 = 0)".into()));
            }
            if b.iter().chain(d).any(|v| !v.is_finite()) {
                return Err(Error::Config("non-finite polynomial coefficient".into()));
            }
            let poly = |c: &[f64; 3], x: f64| c[0] + c[1] * x + c[2] * x * x;
            for x in 0..=x_max {
                let xf = x as f64;
                if poly(b, xf) < 0.0 || poly(d, xf) < 0.0 {
                    return Err(Error::Config(format!("quadratic rate is negative at x = {x}")));
                }
            }
        }
    }
    Ok(BirthDeathModel::from_kind("quadratic", ModelKind::Quadratic(p)))
}

impl BirthDeathModel {
    /// Builds a model from a kind and validates its parameters.
    pub fn from_params(kind: ModelKind, x_max: usize) -> Result<Self> {
        match kind {
            ModelKind::InfiniteServer { lambda, mu } => make_infinite_server(lambda, mu),
            ModelKind::ErlangA(p) => make_erlang_a(p),
            ModelKind::ErlangLoss(p) => make_erlang_loss(p),
            ModelKind::Quadratic(p) => make_quadratic(p, x_max),
        }
    }

    fn from_kind(label: &str, kind: ModelKind) -> Self {
        Self { label: label.to_string(), rates: Rates::Builtin(kind) }
    }

    /// Arbitrary rate pair. The death rate at `x = 0` is forced to zero.
    pub fn custom<B, D>(label: impl Into<String>, birth: B, death: D) -> Self
    where
        B: Fn(f64, usize) -> f64 + Send + Sync + 'static,
        D: Fn(f64, usize) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            rates: Rates::Custom { birth: Arc::new(birth), death: Arc::new(death) },
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> Option<&ModelKind> {
        match &self.rates {
            Rates::Builtin(k) => Some(k),
            Rates::Custom { .. } => None,
        }
    }

    pub fn birth(&self, t: f64, x: usize) -> f64 {
        let xf = x as f64;
        match &self.rates {
            Rates::Builtin(kind) => match kind {
                ModelKind::InfiniteServer { lambda, .. } => lambda.eval(t),
                ModelKind::ErlangA(p) => p.lambda.eval(t),
                ModelKind::ErlangLoss(p) => {
                    if x < p.c + p.k {
                        p.lambda.eval(t)
                    } else {
                        0.0
                    }
                }
                ModelKind::Quadratic(QuadraticParams::Logistic { lambda, capacity, .. }) => {
                    lambda.eval(t) * xf * (*capacity as f64 - xf).max(0.0)
                }
                ModelKind::Quadratic(QuadraticParams::Polynomial { lambda, b, .. }) => {
                    lambda.eval(t) * (b[0] + b[1] * xf + b[2] * xf * xf)
                }
            },
            Rates::Custom { birth, .. } => birth(t, x),
        }
    }

    /// Birth rate continued analytically past the natural boundary. For the
    /// logistic model this is the unclamped polynomial `λ x (Q̃ - x)`, which
    /// is negative above `Q̃`; every other model returns `birth`.
    pub fn birth_extended(&self, t: f64, x: usize) -> f64 {
        match &self.rates {
            Rates::Builtin(ModelKind::Quadratic(QuadraticParams::Logistic { lambda, capacity, .. })) => {
                let xf = x as f64;
                lambda.eval(t) * xf * (*capacity as f64 - xf)
            }
            _ => self.birth(t, x),
        }
    }

    pub fn death(&self, t: f64, x: usize) -> f64 {
        if x == 0 {
            return 0.0;
        }
        let xf = x as f64;
        match &self.rates {
            Rates::Builtin(kind) => match kind {
                ModelKind::InfiniteServer { mu, .. } => mu * xf,
                ModelKind::ErlangA(ErlangAParams { mu, beta, c, .. })
                | ModelKind::ErlangLoss(ErlangLossParams { mu, beta, c, .. }) => {
                    let c = *c as f64;
                    mu * xf.min(c) + beta * (xf - c).max(0.0)
                }
                ModelKind::Quadratic(QuadraticParams::Logistic { beta, .. }) => beta * xf,
                ModelKind::Quadratic(QuadraticParams::Polynomial { mu, d, .. }) => {
                    mu.eval(t) * (d[0] + d[1] * xf + d[2] * xf * xf)
                }
            },
            Rates::Custom { death, .. } => death(t, x),
        }
    }

    /// Upper bound of `birth + death` at state `x` over `[t0, t1]`.
    ///
    /// Custom models only get a bound if their rates do not depend on time.
    pub fn rate_bound(&self, t0: f64, t1: f64, x: usize) -> Result<f64> {
        let xf = x as f64;
        let bound = match &self.rates {
            Rates::Builtin(kind) => match kind {
                ModelKind::InfiniteServer { lambda, .. } | ModelKind::ErlangA(ErlangAParams { lambda, .. }) => {
                    lambda.upper_bound(t0, t1).max(0.0) + self.death(t0, x)
                }
                ModelKind::ErlangLoss(p) => {
                    let b = if x < p.c + p.k { p.lambda.upper_bound(t0, t1).max(0.0) } else { 0.0 };
                    b + self.death(t0, x)
                }
                ModelKind::Quadratic(QuadraticParams::Logistic { lambda, capacity, .. }) => {
                    lambda.upper_bound(t0, t1).max(0.0) * xf * (*capacity as f64 - xf).max(0.0)
                        + self.death(t0, x)
                }
                ModelKind::Quadratic(QuadraticParams::Polynomial { lambda, b, mu, d }) => {
                    let pb = b[0] + b[1] * xf + b[2] * xf * xf;
                    let pd = if x == 0 { 0.0 } else { d[0] + d[1] * xf + d[2] * xf * xf };
                    lambda.upper_bound(t0, t1).max(0.0) * pb.max(0.0)
                        + mu.upper_bound(t0, t1).max(0.0) * pd.max(0.0)
                }
            },
            Rates::Custom { .. } => {
                let r0 = self.birth(t0, x) + self.death(t0, x);
                let r1 = self.birth(t1, x) + self.death(t1, x);
                let mid = 0.5 * (t0 + t1);
                let rm = self.birth(mid, x) + self.death(mid, x);
                if r0 != r1 || r0 != rm {
                    return Err(Error::RateBound(format!(
                        "custom model '{}' has time-dependent rates",
                        self.label
                    )));
                }
                r0
            }
        };
        if !bound.is_finite() {
            return Err(Error::RateBound(format!("non-finite rate bound at x = {x}")));
        }
        Ok(bound)
    }
}

/// `(A(t) p)(x)` on `{0..=x_max}` with births out of `x_max` suppressed.
pub fn generator_apply(model: &BirthDeathModel, t: f64, p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    generator_apply_into(model, t, p, &mut out);
    out
}

pub fn generator_apply_into(model: &BirthDeathModel, t: f64, p: &[f64], out: &mut [f64]) {
    let rates = RateTable::new(model, t, p.len() - 1);
    rates.apply(p, out);
}

/// Birth and death rates at one time, tabulated over the truncated grid with
/// the boundary convention applied.
#[derive(Debug, Clone)]
pub struct RateTable {
    pub birth: Vec<f64>,
    pub death: Vec<f64>,
}

impl RateTable {
    pub fn new(model: &BirthDeathModel, t: f64, x_max: usize) -> Self {
        let mut birth: Vec<f64> = (0..=x_max).map(|x| model.birth(t, x)).collect();
        birth[x_max] = 0.0;
        let death = (0..=x_max).map(|x| model.death(t, x)).collect();
        Self { birth, death }
    }

    /// Same, with births from `birth_extended`. Used to apply the generator
    /// to approximate densities that leave the natural state space.
    pub fn extended(model: &BirthDeathModel, t: f64, x_max: usize) -> Self {
        let mut birth: Vec<f64> = (0..=x_max).map(|x| model.birth_extended(t, x)).collect();
        birth[x_max] = 0.0;
        let death = (0..=x_max).map(|x| model.death(t, x)).collect();
        Self { birth, death }
    }

    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        let n = p.len();
        for x in 0..n {
            let mut v = -(self.birth[x] + self.death[x]) * p[x];
            if x > 0 {
                v += self.birth[x - 1] * p[x - 1];
            }
            if x + 1 < n {
                v += self.death[x + 1] * p[x + 1];
            }
            out[x] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthReport {
    /// Smallest `C` with `birth + death <= C (1 + x)` on the scanned grid.
    pub constant: f64,
    /// Set when the constant fitted on the full range clearly exceeds the one
    /// fitted on the lower half, i.e. the rates grow faster than linearly.
    pub superlinear: bool,
}

pub fn growth_check(model: &BirthDeathModel, t_grid: &[f64], x_max: usize) -> GrowthReport {
    let fit = |hi: usize| {
        let mut c: f64 = 0.0;
        for &t in t_grid {
            for x in 0..=hi {
                c = c.max((model.birth(t, x) + model.death(t, x)) / (1.0 + x as f64));
            }
        }
        c
    };
    let full = fit(x_max);
    let half = fit(x_max / 2);
    GrowthReport { constant: full, superlinear: full > 1.5 * half }
}

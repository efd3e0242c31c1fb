use serde::{Deserialize, Serialize};

use crate::closure::MomentState;
use crate::error::{Error, Result};
use crate::special::{compensated_sum, poisson_pmf_table};

/// A real sequence on the truncated state space `{0..=x_max}`.
///
/// True distributions are nonnegative with unit mass, but projections and
/// reconstructions use the same type and may be signed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfVector {
    p: Vec<f64>,
}

impl PmfVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::domain("pmf needs at least one state"));
        }
        if let Some(x) = p.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite pmf entry at x = {x}")));
        }
        Ok(Self { p })
    }

    pub fn zeros(x_max: usize) -> Self {
        Self { p: vec![0.0; x_max + 1] }
    }

    pub fn poisson(lambda: f64, x_max: usize) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::domain(format!("Poisson pmf needs lambda >= 0, got {lambda}")));
        }
        Ok(Self { p: poisson_pmf_table(lambda, x_max) })
    }

    pub fn point_mass(x0: usize, x_max: usize) -> Result<Self> {
        if x0 > x_max {
            return Err(Error::domain(format!("point mass at {x0} lies beyond x_max = {x_max}")));
        }
        let mut p = vec![0.0; x_max + 1];
        p[x0] = 1.0;
        Ok(Self { p })
    }

    /// Uniform on `{lo..=hi}`, zero elsewhere.
    pub fn uniform(lo: usize, hi: usize, x_max: usize) -> Result<Self> {
        if lo > hi || hi > x_max {
            return Err(Error::domain(format!("bad uniform support {lo}..={hi} for x_max = {x_max}")));
        }
        let mut p = vec![0.0; x_max + 1];
        let v = 1.0 / (hi - lo + 1) as f64;
        p[lo..=hi].iter_mut().for_each(|e| *e = v);
        Ok(Self { p })
    }

    pub fn x_max(&self) -> usize {
        self.p.len() - 1
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.p
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.p
    }

    pub fn mass(&self) -> f64 {
        compensated_sum(self.p.iter().copied())
    }

    pub fn expect<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        compensated_sum(self.p.iter().enumerate().map(|(x, &w)| f(x) * w))
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x as f64)
    }

    /// Mean, variance and the third and fourth cumulants from centered sums.
    pub fn moments(&self) -> MomentState {
        moments_of(&self.p)
    }
}

impl AsRef<[f64]> for PmfVector {
    fn as_ref(&self) -> &[f64] {
        &self.p
    }
}

/// Cumulants of a (possibly signed) sequence, centered at its own mean.
pub(crate) fn moments_of(p: &[f64]) -> MomentState {
    let mean = compensated_sum(p.iter().enumerate().map(|(x, &w)| x as f64 * w));
    let mut c = [crate::special::CompensatedSum::new(); 3];
    for (x, &w) in p.iter().enumerate() {
        let d = x as f64 - mean;
        let d2 = d * d;
        c[0].add(d2 * w);
        c[1].add(d2 * d * w);
        c[2].add(d2 * d2 * w);
    }
    let variance = c[0].value();
    MomentState {
        mean,
        variance,
        cum3: c[1].value(),
        cum4: c[2].value() - 3.0 * variance * variance,
    }
}

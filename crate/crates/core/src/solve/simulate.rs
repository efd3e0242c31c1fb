use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closure::MomentState;
use crate::error::{Error, Result};
use crate::models::BirthDeathModel;
use crate::pmf::PmfVector;
use crate::special::binomial;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub t0: f64,
    /// Jackknife groups.
    pub groups: usize,
    /// Length of the windows over which rate bounds are taken.
    pub window: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { n_paths: 10_000, seed: 1, t0: 0.0, groups: 100, window: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub times: Vec<f64>,
    pub estimates: Vec<MomentState>,
    /// Grouped jackknife standard errors of each estimate.
    pub std_errors: Vec<MomentState>,
    pub n_paths: usize,
    pub events: u64,
    pub rejections: u64,
}

/// Draws from `p0` by inversion.
struct InitialSampler {
    cdf: Vec<f64>,
}

impl InitialSampler {
    fn new(p0: &PmfVector) -> Result<Self> {
        if p0.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::Config("initial distribution has negative entries".into()));
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = p0
            .as_slice()
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::Config("initial distribution has no mass".into()));
        }
        Ok(Self { cdf: cdf.into_iter().map(|c| c / acc).collect() })
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// Simulates independent paths by thinning and records the state at each
/// checkpoint. Path `i` uses stream `i` of a ChaCha8 generator seeded with
/// `seed`, so results do not depend on how paths are scheduled.
pub fn simulate_paths(
    model: &BirthDeathModel,
    p0: &PmfVector,
    checkpoints: &[f64],
    opts: &SimulationOptions,
) -> Result<SimulationSummary> {
    if opts.groups < 2 || opts.n_paths < opts.groups {
        return Err(Error::Config(format!(
            "need at least {} paths for {} jackknife groups",
            opts.groups.max(2),
            opts.groups
        )));
    }
    if !(opts.window > 0.0) {
        return Err(Error::Config("rate-bound window must be positive".into()));
    }
    if checkpoints.iter().any(|t| !t.is_finite() || *t < opts.t0) || checkpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("checkpoints must be finite, sorted and not before t0".into()));
    }
    let sampler = InitialSampler::new(p0)?;
    let mut samples = vec![Vec::with_capacity(opts.n_paths); checkpoints.len()];
    let (mut events, mut rejections) = (0u64, 0u64);

    for path in 0..opts.n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(path as u64);
        let mut x = sampler.sample(&mut rng);
        let mut t = opts.t0;
        for (k, &target) in checkpoints.iter().enumerate() {
            while t < target {
                let end = (t + opts.window).min(target);
                let bound = model.rate_bound(t, end, x)?;
                if bound <= 0.0 {
                    t = end;
                    continue;
                }
                let u: f64 = rng.random();
                let tau = -(1.0 - u).ln() / bound;
                if t + tau >= end {
                    t = end;
                    continue;
                }
                t += tau;
                let b = model.birth(t, x);
                let d = model.death(t, x);
                if b + d > bound * (1.0 + 1e-12) {
                    return Err(Error::RateBound(format!(
                        "rate {} exceeds bound {bound} at t = {t}, x = {x}",
                        b + d
                    )));
                }
                let v = rng.random::<f64>() * bound;
                if v < b {
                    x += 1;
                    events += 1;
                } else if v < b + d {
                    x -= 1;
                    events += 1;
                } else {
                    rejections += 1;
                }
            }
            samples[k].push(x as f64);
        }
    }

    let mut estimates = Vec::with_capacity(checkpoints.len());
    let mut std_errors = Vec::with_capacity(checkpoints.len());
    for s in &samples {
        let (est, se) = jackknife(s, opts.groups);
        estimates.push(est);
        std_errors.push(se);
    }
    Ok(SimulationSummary {
        times: checkpoints.to_vec(),
        estimates,
        std_errors,
        n_paths: opts.n_paths,
        events,
        rejections,
    })
}

/// Plug-in moments from power sums `s[k] = Σ (x - c)^k`, `k = 0..=4`.
fn moments_from_sums(s: &[f64; 5], c: f64) -> MomentState {
    let n = s[0];
    let raw: Vec<f64> = s.iter().map(|v| v / n).collect();
    let d = raw[1];
    // Central moments about the sample mean c + d.
    let central = |k: usize| -> f64 {
        (0..=k).map(|j| binomial(k, j) * raw[j] * (-d).powi((k - j) as i32)).sum()
    };
    let (m2, m3, m4) = (central(2), central(3), central(4));
    MomentState::new(c + d, m2, m3, m4 - 3.0 * m2 * m2)
}

fn power_sums(xs: &[f64], c: f64) -> [f64; 5] {
    let mut s = [0.0; 5];
    for &x in xs {
        let d = x - c;
        let d2 = d * d;
        s[0] += 1.0;
        s[1] += d;
        s[2] += d2;
        s[3] += d2 * d;
        s[4] += d2 * d2;
    }
    s
}

/// Estimates and leave-one-group-out jackknife errors; path `i` belongs to
/// group `i mod groups`.
pub(crate) fn jackknife(xs: &[f64], groups: usize) -> (MomentState, MomentState) {
    let c = xs.iter().sum::<f64>() / xs.len() as f64;
    let mut per_group = vec![[0.0; 5]; groups];
    for (g, sums) in per_group.iter_mut().enumerate() {
        let members: Vec<f64> = xs.iter().skip(g).step_by(groups).copied().collect();
        *sums = power_sums(&members, c);
    }
    let mut total = [0.0; 5];
    for g in &per_group {
        for k in 0..5 {
            total[k] += g[k];
        }
    }
    let full = moments_from_sums(&total, c);
    let loo: Vec<[f64; 4]> = per_group
        .iter()
        .map(|g| {
            let mut s = total;
            for k in 0..5 {
                s[k] -= g[k];
            }
            moments_from_sums(&s, c).as_array()
        })
        .collect();
    let gf = groups as f64;
    let mut se = [0.0; 4];
    for (j, out) in se.iter_mut().enumerate() {
        let mean = loo.iter().map(|v| v[j]).sum::<f64>() / gf;
        let ss: f64 = loo.iter().map(|v| (v[j] - mean).powi(2)).sum();
        *out = ((gf - 1.0) / gf * ss).sqrt();
    }
    (full, MomentState::new(se[0], se[1], se[2], se[3]))
}

//! The discrete process `X_{n+1} = X_n - gamma (n+1)^{-alpha} H(X_n, Z_{n+1})`.

use crate::linalg::{dist_sq, norm_sq};
use crate::noise::GradientOracle;
use crate::objectives::Objective;
use crate::rng::RngStream;
use crate::schedule::StepSchedule;
use crate::{Error, Result};

/// States with `|x| > DIVERGENCE_NORM` abort the replicate.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Sorted, duplicate-free iteration indices at which a run is recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPlan {
    indices: Vec<u64>,
}

impl SamplingPlan {
    pub const DEFAULT_POINTS: usize = 64;

    /// `count` indices geometrically spaced in `[1, n]`, rounded and deduplicated.
    pub fn log_spaced(n: u64, count: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("N", "horizon must be >= 1"));
        }
        if count < 2 {
            return Err(Error::invalid("count", "need at least two sample points"));
        }
        let top = (n as f64).ln();
        let mut indices: Vec<u64> = (0..count)
            .map(|i| {
                let v = (top * i as f64 / (count - 1) as f64).exp().round() as u64;
                v.clamp(1, n)
            })
            .collect();
        indices.dedup();
        *indices.last_mut().expect("count >= 2") = n;
        Ok(Self { indices })
    }

    pub fn default_for(n: u64) -> Result<Self> {
        Self::log_spaced(n, Self::DEFAULT_POINTS)
    }

    pub fn explicit(mut indices: Vec<u64>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("plan", "empty sampling plan"));
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(Self { indices })
    }

    /// Every index `1..=n`.
    pub fn every(n: u64) -> Self {
        Self {
            indices: (1..=n).collect(),
        }
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn last(&self) -> u64 {
        *self.indices.last().expect("plans are non-empty")
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Whether `sample_points` are iteration counts or continuous times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeAxis {
    Iterations,
    Time,
}

/// Observables of one replicate at the points of a sampling plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub axis: TimeAxis,
    pub sample_points: Vec<f64>,
    pub states: Option<Vec<Vec<f64>>>,
    /// `f(X)`.
    pub values: Vec<f64>,
    /// `|X - x*|^2`.
    pub dist2_to_min: Vec<f64>,
    /// `|grad f(X)|^2`.
    pub grad_sq: Vec<f64>,
    /// Suffix average of `f` over the last `floor(n/2) + 1` iterates.
    pub suffix_avg: Option<Vec<f64>>,
    pub replicate_id: u64,
}

impl Trajectory {
    pub(crate) fn new(axis: TimeAxis, capacity: usize, record_states: bool, replicate_id: u64) -> Self {
        Self {
            axis,
            sample_points: Vec::with_capacity(capacity),
            states: record_states.then(|| Vec::with_capacity(capacity)),
            values: Vec::with_capacity(capacity),
            dist2_to_min: Vec::with_capacity(capacity),
            grad_sq: Vec::with_capacity(capacity),
            suffix_avg: None,
            replicate_id,
        }
    }

    pub(crate) fn record(&mut self, point: f64, x: &[f64], obj: &Objective, grad_buf: &mut [f64]) {
        self.sample_points.push(point);
        if let Some(states) = self.states.as_mut() {
            states.push(x.to_vec());
        }
        self.values.push(obj.value(x));
        self.dist2_to_min.push(dist_sq(x, obj.x_star()));
        obj.gradient_into(x, grad_buf);
        self.grad_sq.push(norm_sq(grad_buf));
    }

    pub fn len(&self) -> usize {
        self.sample_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_points.is_empty()
    }

    /// `f(X) - f*` at each sample point.
    pub fn gaps(&self, f_star: f64) -> Vec<f64> {
        self.values.iter().map(|v| (v - f_star).max(0.0)).collect()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.as_ref().and_then(|s| s.last()).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdOptions {
    pub record_states: bool,
    /// Track `S_k` with `k = floor(n/2)` at each plan index; costs one `f` evaluation per step.
    pub suffix_average: bool,
    /// Radius of the projection ball; infinite means unconstrained.
    pub radius: f64,
}

impl Default for SgdOptions {
    fn default() -> Self {
        Self {
            record_states: true,
            suffix_average: false,
            radius: f64::INFINITY,
        }
    }
}

/// Plain SGD.
pub fn run_sgd(
    obj: &Objective,
    oracle: &GradientOracle,
    sched: &StepSchedule,
    x0: &[f64],
    n: u64,
    plan: &SamplingPlan,
    stream: &mut RngStream,
) -> Result<Trajectory> {
    run_sgd_with(obj, oracle, sched, x0, n, plan, stream, &SgdOptions::default())
}

/// SGD followed by Euclidean projection onto the centered ball of radius `radius`.
#[allow(clippy::too_many_arguments)]
pub fn run_projected_sgd(
    obj: &Objective,
    oracle: &GradientOracle,
    sched: &StepSchedule,
    x0: &[f64],
    n: u64,
    radius: f64,
    plan: &SamplingPlan,
    stream: &mut RngStream,
) -> Result<Trajectory> {
    let opts = SgdOptions {
        radius,
        ..SgdOptions::default()
    };
    run_sgd_with(obj, oracle, sched, x0, n, plan, stream, &opts)
}

#[allow(clippy::too_many_arguments)]
pub fn run_sgd_with(
    obj: &Objective,
    oracle: &GradientOracle,
    sched: &StepSchedule,
    x0: &[f64],
    n: u64,
    plan: &SamplingPlan,
    stream: &mut RngStream,
    opts: &SgdOptions,
) -> Result<Trajectory> {
    if oracle.dim() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: oracle.dim(),
        });
    }
    warn_on_small_gamma(obj, sched);
    let replicate_id = stream.replicate_id();
    sgd_loop(obj, sched, x0, n, plan, opts, replicate_id, |_, x, out| {
        oracle.sample_into(x, stream, out)
    })
}

fn warn_on_small_gamma(obj: &Objective, sched: &StepSchedule) {
    if sched.alpha() == 1.0 {
        if let Some(mu) = obj.strong_convexity() {
            if sched.gamma() <= 1.0 / (2.0 * mu) {
                log::warn!(
                    "alpha = 1 with gamma = {} <= 1/(2 mu) = {}: the O(1/n) rate is not guaranteed",
                    sched.gamma(),
                    1.0 / (2.0 * mu)
                );
            }
        }
    }
}

/// Core recursion. `draw(k, x, out)` writes `H(X_k, Z_{k+1})` into `out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgd_loop<D>(
    obj: &Objective,
    sched: &StepSchedule,
    x0: &[f64],
    n: u64,
    plan: &SamplingPlan,
    opts: &SgdOptions,
    replicate_id: u64,
    mut draw: D,
) -> Result<Trajectory>
where
    D: FnMut(u64, &[f64], &mut [f64]),
{
    let d = obj.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("N", "number of iterations must be >= 1"));
    }
    if plan.last() > n {
        return Err(Error::invalid("plan", format!("index {} exceeds N = {n}", plan.last())));
    }
    if !(opts.radius > 0.0) {
        return Err(Error::invalid("radius", format!("must be > 0, got {}", opts.radius)));
    }
    let r2 = opts.radius * opts.radius;
    if norm_sq(x0) > r2 {
        return Err(Error::invalid("x0", format!("|x0| exceeds the projection radius {}", opts.radius)));
    }

    let mut traj = Trajectory::new(TimeAxis::Iterations, plan.len(), opts.record_states, replicate_id);
    let mut suffix = opts.suffix_average.then(|| Vec::with_capacity(plan.len()));
    // prefix[t] = sum_{s < t} f(X_s)
    let mut prefix: Vec<f64> = if opts.suffix_average {
        let mut p = Vec::with_capacity(n as usize + 2);
        p.push(0.0);
        p
    } else {
        Vec::new()
    };

    let mut x = x0.to_vec();
    let mut h = vec![0.0; d];
    let mut grad_buf = vec![0.0; d];
    let mut next = plan.indices().iter().peekable();
    let mut record = |k: u64, x: &[f64], traj: &mut Trajectory, prefix: &Vec<f64>, suffix: &mut Option<Vec<f64>>| {
        traj.record(k as f64, x, obj, &mut grad_buf);
        if let Some(s) = suffix.as_mut() {
            let half = k / 2;
            let lo = (k - half) as usize;
            s.push((prefix[k as usize + 1] - prefix[lo]) / (half + 1) as f64);
        }
    };

    if opts.suffix_average {
        prefix.push(obj.value(&x));
    }
    while next.peek() == Some(&&0) {
        next.next();
        record(0, &x, &mut traj, &prefix, &mut suffix);
    }
    for k in 0..n {
        draw(k, &x, &mut h);
        let step = sched.step_size(k);
        for (xi, hi) in x.iter_mut().zip(&h) {
            *xi -= step * hi;
        }
        let nsq = norm_sq(&x);
        if !nsq.is_finite() || nsq > DIVERGENCE_NORM * DIVERGENCE_NORM {
            return Err(Error::Divergence {
                step: k + 1,
                norm: nsq.sqrt(),
            });
        }
        if nsq > r2 {
            let scale = opts.radius / nsq.sqrt();
            for xi in x.iter_mut() {
                *xi *= scale;
            }
        }
        if opts.suffix_average {
            let last = *prefix.last().expect("seeded");
            prefix.push(last + obj.value(&x));
        }
        if next.peek() == Some(&&(k + 1)) {
            next.next();
            record(k + 1, &x, &mut traj, &prefix, &mut suffix);
        }
    }
    traj.suffix_avg = suffix;
    Ok(traj)
}

/// Mean of the last `k + 1` entries of `values`.
pub fn suffix_average(values: &[f64], k: usize) -> Result<f64> {
    if values.len() < k + 1 {
        return Err(Error::NotEnoughPoints {
            needed: k + 1,
            got: values.len(),
        });
    }
    let tail = &values[values.len() - k - 1..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

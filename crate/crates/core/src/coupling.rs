//! Discrete and continuous runs driven by one Brownian path, with the error estimators
//! that compare them.
//!
//! In block `k` the SDE consumes `K` increments of `B` on `[k gamma_alpha, (k+1) gamma_alpha]`
//! and SGD consumes `G_k = gamma_alpha^{-1/2} (B_{(k+1) gamma_alpha} - B_{k gamma_alpha})`,
//! which is standard Gaussian. How `G_k` turns into the SGD noise depends on the
//! coupling kind.

use crate::linalg::{dist_sq, norm_sq};
use crate::noise::{GradientOracle, NoiseLaw};
use crate::objectives::Objective;
use crate::rng::{derive_stream, RngStream, StreamRole};
use crate::schedule::{floor_ratio, StepSchedule};
use crate::sde::{quantum_for, EmStepper};
use crate::sgd::{SamplingPlan, TimeAxis, Trajectory, DIVERGENCE_NORM};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    /// `H(X_n) = grad f(X_n) + Sigma^{1/2}(X_n) G_k`.
    GaussianShared,
    /// Dimension one: the standardized noise draw is `F^{-1}(Phi(G_k))`.
    Comonotone1d,
    /// SGD noise drawn independently of the path. Not an optimal coupling.
    Independent,
}

impl CouplingKind {
    pub fn name(&self) -> &'static str {
        match self {
            CouplingKind::GaussianShared => "gaussian_shared",
            CouplingKind::Comonotone1d => "comonotone_1d",
            CouplingKind::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingRequest {
    /// Best available: Gaussian sharing, else comonotone, else independent.
    #[default]
    Auto,
    Exactly(CouplingKind),
}

/// Picks the coupling for `oracle`, rejecting requests its noise cannot support.
pub fn resolve_coupling(oracle: &GradientOracle, request: CouplingRequest) -> Result<CouplingKind> {
    let comonotone_ok = oracle.dim() == 1 && oracle.scalar_law().is_some();
    match request {
        CouplingRequest::Auto => Ok(if oracle.is_gaussian() {
            CouplingKind::GaussianShared
        } else if comonotone_ok {
            CouplingKind::Comonotone1d
        } else {
            log::warn!("no optimal coupling available for this oracle; falling back to independent noise");
            CouplingKind::Independent
        }),
        CouplingRequest::Exactly(CouplingKind::GaussianShared) if !oracle.is_gaussian() => Err(Error::CouplingUnavailable {
            requested: "gaussian_shared",
            reason: "oracle noise is not Gaussian".into(),
        }),
        CouplingRequest::Exactly(CouplingKind::Comonotone1d) if !comonotone_ok => Err(Error::CouplingUnavailable {
            requested: "comonotone_1d",
            reason: if oracle.dim() != 1 {
                format!("needs dimension 1, oracle has {}", oracle.dim())
            } else {
                "oracle noise has no scalar law with a quantile function".into()
            },
        }),
        CouplingRequest::Exactly(kind) => Ok(kind),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    pub horizon: f64,
    /// Euler-Maruyama substeps per block.
    pub substeps: u32,
    pub request: CouplingRequest,
    /// Block indices `n` at which both processes are recorded; defaults to the
    /// log-spaced plan over `[1, floor(T / gamma_alpha)]`.
    pub plan: Option<SamplingPlan>,
}

/// One replicate of the coupled pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    /// SGD at iterations `n`.
    pub discrete: Trajectory,
    /// SDE at times `n gamma_alpha`.
    pub continuous: Trajectory,
    pub checkpoints: Vec<u64>,
    /// `|X_{n gamma_alpha} - X_n|^2` at each checkpoint.
    pub sq_distances: Vec<f64>,
    pub schedule: StepSchedule,
    pub kind: CouplingKind,
    pub replicate_id: u64,
}

impl CoupledRun {
    pub fn position(&self, n: u64) -> Option<usize> {
        self.checkpoints.binary_search(&n).ok()
    }
}

/// Number of whole blocks in `[0, T]`.
pub fn blocks_in_horizon(sched: &StepSchedule, horizon: f64) -> Result<u64> {
    let ga = sched.gamma_alpha()?;
    Ok(floor_ratio(horizon, ga))
}

/// Runs SGD and the SDE from the same `x0`. The Brownian path comes from the
/// `(seed, replicate, Brownian)` stream, independent SGD noise from the `Noise` stream.
pub fn run_coupled(
    obj: &Objective,
    oracle: &GradientOracle,
    sched: &StepSchedule,
    x0: &[f64],
    config: &CouplingConfig,
    seed: u64,
    replicate_id: u64,
) -> Result<CoupledRun> {
    let ga = sched.gamma_alpha()?;
    let d = obj.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    if oracle.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: oracle.dim() });
    }
    if config.substeps == 0 {
        return Err(Error::invalid("K", "substeps must be >= 1"));
    }
    let kind = resolve_coupling(oracle, config.request)?;
    let blocks = blocks_in_horizon(sched, config.horizon)?;
    if blocks == 0 {
        return Err(Error::invalid("T", format!("horizon {} is shorter than one block {ga}", config.horizon)));
    }
    let plan = match &config.plan {
        Some(p) => {
            if p.last() > blocks {
                return Err(Error::invalid("plan", format!("checkpoint {} beyond the last block {blocks}", p.last())));
            }
            p.clone()
        }
        None => SamplingPlan::default_for(blocks)?,
    };
    let law: Option<NoiseLaw> = match kind {
        CouplingKind::Comonotone1d => oracle.scalar_law(),
        _ => None,
    };

    let mut brownian = derive_stream(seed, replicate_id, StreamRole::Brownian);
    let mut noise_rng: RngStream = derive_stream(seed, replicate_id, StreamRole::Noise);
    let k = config.substeps as usize;
    let h = ga / k as f64;
    let sd = h.sqrt();
    let q = quantum_for(h);
    let inv_sqrt_ga = 1.0 / ga.sqrt();

    let mut em = EmStepper::new(obj, oracle, ga, sched.alpha(), h);
    let mut x = x0.to_vec();
    let mut y = x0.to_vec();
    let mut inc = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut hbuf = vec![0.0; d];
    let mut grad_buf = vec![0.0; d];

    let mut discrete = Trajectory::new(TimeAxis::Iterations, plan.len(), true, replicate_id);
    let mut continuous = Trajectory::new(TimeAxis::Time, plan.len(), true, replicate_id);
    let mut checkpoints = Vec::with_capacity(plan.len());
    let mut sq = Vec::with_capacity(plan.len());
    let mut next = plan.indices().iter().peekable();
    if next.peek() == Some(&&0) {
        next.next();
        discrete.record(0.0, &x, obj, &mut grad_buf);
        continuous.record(0.0, &y, obj, &mut grad_buf);
        checkpoints.push(0);
        sq.push(0.0);
    }

    for blk in 0..blocks {
        g.fill(0.0);
        for s in 0..k {
            for v in inc.iter_mut() {
                // Same increments as `BrownianPath::generate` on this stream.
                *v = (sd * brownian.standard_normal() / q).round() * q;
            }
            for (gi, v) in g.iter_mut().zip(&inc) {
                *gi += v;
            }
            em.step(blk * k as u64 + s as u64, &mut y, &inc)?;
        }
        for gi in g.iter_mut() {
            *gi *= inv_sqrt_ga;
        }

        match kind {
            CouplingKind::GaussianShared => {
                obj.gradient_into(&x, &mut hbuf);
                oracle.apply_sigma_sqrt(&x, &g, &mut w);
                for (hi, wi) in hbuf.iter_mut().zip(&w) {
                    *hi += wi;
                }
            }
            CouplingKind::Comonotone1d => {
                let law = law.expect("resolved with a scalar law");
                let u = [law.from_gaussian(g[0])];
                obj.gradient_into(&x, &mut hbuf);
                oracle.apply_sigma_sqrt(&x, &u, &mut w);
                hbuf[0] += w[0];
            }
            CouplingKind::Independent => oracle.sample_into(&x, &mut noise_rng, &mut hbuf),
        }
        let step = sched.step_size(blk);
        for (xi, hi) in x.iter_mut().zip(&hbuf) {
            *xi -= step * hi;
        }
        let nsq = norm_sq(&x);
        if !nsq.is_finite() || nsq > DIVERGENCE_NORM * DIVERGENCE_NORM {
            return Err(Error::Divergence {
                step: blk + 1,
                norm: nsq.sqrt(),
            });
        }

        let n = blk + 1;
        if next.peek() == Some(&&n) {
            next.next();
            discrete.record(n as f64, &x, obj, &mut grad_buf);
            continuous.record(n as f64 * ga, &y, obj, &mut grad_buf);
            checkpoints.push(n);
            sq.push(dist_sq(&x, &y));
        }
    }

    Ok(CoupledRun {
        discrete,
        continuous,
        checkpoints,
        sq_distances: sq,
        schedule: *sched,
        kind,
        replicate_id,
    })
}

/// Point estimate with a symmetric 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub halfwidth: f64,
}

/// `sqrt(mean of squared distances)` with a delta-method interval:
/// `se(sqrt m) = se(m) / (2 sqrt m)`.
pub fn strong_error_from_squares(sq: &[f64]) -> Result<Estimate> {
    let n = sq.len();
    if n < 2 {
        return Err(Error::NotEnoughPoints { needed: 2, got: n });
    }
    let mean = sq.iter().sum::<f64>() / n as f64;
    let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let value = mean.sqrt();
    let halfwidth = if mean > 0.0 {
        1.96 * (var / n as f64).sqrt() / (2.0 * value)
    } else {
        0.0
    };
    Ok(Estimate { value, halfwidth })
}

/// Strong error at checkpoint `n` over coupled replicates.
pub fn strong_error(runs: &[CoupledRun], n: u64) -> Result<Estimate> {
    let sq = collect(runs, n, |run, i| run.sq_distances[i])?;
    strong_error_from_squares(&sq)
}

fn collect<T>(runs: &[CoupledRun], n: u64, mut f: impl FnMut(&CoupledRun, usize) -> T) -> Result<Vec<T>> {
    runs.iter()
        .map(|run| {
            let i = run
                .position(n)
                .ok_or_else(|| Error::invalid("checkpoint", format!("{n} was not recorded in replicate {}", run.replicate_id)))?;
            Ok(f(run, i))
        })
        .collect()
}

/// `|mean g(continuous) - mean g(discrete)|` at checkpoint `n` from the paired differences.
pub fn weak_error_paired<G>(runs: &[CoupledRun], n: u64, g: G) -> Result<Estimate>
where
    G: Fn(&[f64]) -> f64,
{
    let diffs = collect(runs, n, |run, i| {
        let xc = &run.continuous.states.as_ref().expect("coupled runs record states")[i];
        let xd = &run.discrete.states.as_ref().expect("coupled runs record states")[i];
        g(xc) - g(xd)
    })?;
    let (mean, halfwidth) = mean_and_halfwidth(&diffs)?;
    Ok(Estimate {
        value: mean.abs(),
        halfwidth,
    })
}

/// `|mean g(continuous) - mean g(discrete)|` from two independent samples of end states.
pub fn weak_error_unpaired<G>(discrete: &[Vec<f64>], continuous: &[Vec<f64>], g: G) -> Result<Estimate>
where
    G: Fn(&[f64]) -> f64,
{
    let gd: Vec<f64> = discrete.iter().map(|x| g(x)).collect();
    let gc: Vec<f64> = continuous.iter().map(|x| g(x)).collect();
    let (md, vd) = mean_var(&gd)?;
    let (mc, vc) = mean_var(&gc)?;
    Ok(Estimate {
        value: (mc - md).abs(),
        halfwidth: 1.96 * (vd / gd.len() as f64 + vc / gc.len() as f64).sqrt(),
    })
}

fn mean_var(xs: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::NotEnoughPoints { needed: 2, got: n });
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    Ok((mean, xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64))
}

fn mean_and_halfwidth(xs: &[f64]) -> Result<(f64, f64)> {
    let (m, v) = mean_var(xs)?;
    Ok((m, 1.96 * (v / xs.len() as f64).sqrt()))
}

/// Empirical `W_2` between two equally sized samples on the line.
pub fn w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SampleCountMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::NotEnoughPoints { needed: 1, got: 0 });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((s / a.len() as f64).sqrt())
}

/// Estimate of `W_2(law of H(x, Z), law of grad f(x) + Sigma^{1/2}(x) G)`: per-coordinate
/// `w2_1d` combined as a root sum of squares.
pub fn epsilon_hat(oracle: &GradientOracle, x: &[f64], n_samples: usize, stream: &mut RngStream) -> Result<f64> {
    let d = oracle.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if n_samples == 0 {
        return Err(Error::NotEnoughPoints { needed: 1, got: 0 });
    }
    let grad = oracle.objective().gradient(x);
    let mut h = vec![Vec::with_capacity(n_samples); d];
    let mut buf = vec![0.0; d];
    for _ in 0..n_samples {
        oracle.sample_into(x, stream, &mut buf);
        for (col, v) in h.iter_mut().zip(&buf) {
            col.push(*v);
        }
    }
    let root = oracle.sigma_sqrt(x);
    let mut gauss = vec![vec![0.0; n_samples]; d];
    let mut z = vec![0.0; d];
    for s in 0..n_samples {
        stream.fill_normal(&mut z);
        root.apply(&z, &mut buf);
        for (c, col) in gauss.iter_mut().enumerate() {
            col[s] = grad[c] + buf[c];
        }
    }
    let mut total = 0.0;
    for (hc, gc) in h.iter().zip(&gauss) {
        total += w2_1d(hc, gc)?.powi(2);
    }
    Ok(total.sqrt())
}

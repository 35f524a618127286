//! Euler-Maruyama for
//! `dY = -(gamma_alpha + t)^{-alpha} [grad f(Y) dt + gamma_alpha^{1/2} Sigma^{1/2}(Y) dB]`
//! over explicit Brownian paths, and RK4 for the gradient flow `dX = -grad f(X) dt`.

use crate::linalg::{norm_sq, Covariance};
use crate::noise::GradientOracle;
use crate::objectives::Objective;
use crate::rng::RngStream;
use crate::schedule::{ceil_ratio, floor_ratio, rate_at, StepSchedule};
use crate::sgd::{TimeAxis, Trajectory, DIVERGENCE_NORM};
use crate::{Error, Result};

/// Default number of Euler-Maruyama substeps per `gamma_alpha` block.
pub const DEFAULT_SUBSTEPS: u32 = 16;

/// Brownian increments on the uniform grid `j h`, `j < ceil(T / h)`.
///
/// Every stored value is an integer multiple of a power-of-two `quantum` far below the
/// increment scale, so a refined pair adds up to its parent bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    horizon: f64,
    h: f64,
    dim: usize,
    quantum: f64,
    /// Row-major: increment `j` occupies `[j dim, (j + 1) dim)`.
    increments: Vec<f64>,
}

/// Bits of resolution below `sqrt(h)`.
const QUANTUM_BITS: i32 = 40;

pub(crate) fn quantum_for(h: f64) -> f64 {
    2f64.powi(h.sqrt().log2().floor() as i32 - QUANTUM_BITS)
}

impl BrownianPath {
    pub fn generate(dim: usize, horizon: f64, h: f64, rng: &mut RngStream) -> Result<Self> {
        let steps = Self::check_grid(dim, horizon, h)?;
        let sd = h.sqrt();
        let quantum = quantum_for(h);
        let mut increments = vec![0.0; steps * dim];
        for v in increments.iter_mut() {
            *v = (sd * rng.standard_normal() / quantum).round() * quantum;
        }
        Ok(Self {
            horizon,
            h,
            dim,
            quantum,
            increments,
        })
    }

    /// Wraps given increments, snapping them to the quantum grid.
    pub fn from_increments(dim: usize, horizon: f64, h: f64, mut increments: Vec<f64>) -> Result<Self> {
        let steps = Self::check_grid(dim, horizon, h)?;
        if increments.len() != steps * dim {
            return Err(Error::PathMismatch(format!(
                "expected {} increments of dimension {dim}, got {} values",
                steps,
                increments.len()
            )));
        }
        let quantum = quantum_for(h);
        for v in increments.iter_mut() {
            *v = (*v / quantum).round() * quantum;
        }
        Ok(Self {
            horizon,
            h,
            dim,
            quantum,
            increments,
        })
    }

    fn check_grid(dim: usize, horizon: f64, h: f64) -> Result<usize> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be >= 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon", format!("must be > 0, got {horizon}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("h", format!("must be > 0, got {h}")));
        }
        Ok(ceil_ratio(horizon, h) as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of increments.
    pub fn len(&self) -> usize {
        self.increments.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.dim..(j + 1) * self.dim]
    }

    /// Splits every increment into two halves by Brownian-bridge sampling. Pairs of fine
    /// increments sum to the coarse increment exactly in floating point.
    pub fn refine(&self, rng: &mut RngStream) -> Self {
        let q = self.quantum;
        let sd = (self.h / 4.0).sqrt();
        let mut fine = Vec::with_capacity(2 * self.increments.len());
        let mut second = Vec::with_capacity(self.dim);
        for row in self.increments.chunks_exact(self.dim) {
            second.clear();
            for &c in row {
                // Integer arithmetic in units of q; all values stay far below 2^53.
                let ticks = (c / q).round();
                let first = ((0.5 * c + sd * rng.standard_normal()) / q).round();
                fine.push(first * q);
                second.push((ticks - first) * q);
            }
            fine.extend_from_slice(&second);
        }
        Self {
            horizon: self.horizon,
            h: self.h / 2.0,
            dim: self.dim,
            quantum: q,
            increments: fine,
        }
    }
}

/// Source of `Sigma^{1/2}(x)` for the diffusion term.
pub trait Diffusion: Sync {
    /// `out = Sigma^{1/2}(x) g`.
    fn apply_sqrt(&self, x: &[f64], g: &[f64], out: &mut [f64]);

    fn is_zero(&self) -> bool {
        false
    }
}

impl Diffusion for GradientOracle {
    fn apply_sqrt(&self, x: &[f64], g: &[f64], out: &mut [f64]) {
        self.apply_sigma_sqrt(x, g, out);
    }

    fn is_zero(&self) -> bool {
        self.is_noiseless()
    }
}

/// `Sigma^{1/2} = s Id`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledIdentity(pub f64);

impl Diffusion for ScaledIdentity {
    fn apply_sqrt(&self, _x: &[f64], g: &[f64], out: &mut [f64]) {
        for (o, gi) in out.iter_mut().zip(g) {
            *o = self.0 * gi;
        }
    }

    fn is_zero(&self) -> bool {
        self.0 == 0.0
    }
}

impl Diffusion for Covariance {
    fn apply_sqrt(&self, _x: &[f64], g: &[f64], out: &mut [f64]) {
        self.apply(g, out);
    }
}

/// One Euler-Maruyama step at a time, with left-endpoint rate and diffusion.
pub(crate) struct EmStepper<'a> {
    obj: &'a Objective,
    diffusion: &'a dyn Diffusion,
    gamma_alpha: f64,
    sqrt_gamma_alpha: f64,
    alpha: f64,
    h: f64,
    grad: Vec<f64>,
    noise: Vec<f64>,
}

impl<'a> EmStepper<'a> {
    pub(crate) fn new(obj: &'a Objective, diffusion: &'a dyn Diffusion, gamma_alpha: f64, alpha: f64, h: f64) -> Self {
        let d = obj.dim();
        Self {
            obj,
            diffusion,
            gamma_alpha,
            sqrt_gamma_alpha: gamma_alpha.sqrt(),
            alpha,
            h,
            grad: vec![0.0; d],
            noise: vec![0.0; d],
        }
    }

    /// Advances `y` from `t_j = j h` to `t_{j+1}` with Brownian increment `db`.
    #[inline]
    pub(crate) fn step(&mut self, j: u64, y: &mut [f64], db: &[f64]) -> Result<()> {
        let rate = rate_at(self.gamma_alpha, self.alpha, j as f64 * self.h);
        self.obj.gradient_into(y, &mut self.grad);
        self.diffusion.apply_sqrt(y, db, &mut self.noise);
        for ((yi, g), n) in y.iter_mut().zip(&self.grad).zip(&self.noise) {
            *yi -= rate * (g * self.h + self.sqrt_gamma_alpha * n);
        }
        check_finite(y, j + 1)
    }
}

fn check_finite(y: &[f64], step: u64) -> Result<()> {
    let nsq = norm_sq(y);
    if !nsq.is_finite() || nsq > DIVERGENCE_NORM * DIVERGENCE_NORM {
        return Err(Error::Divergence {
            step,
            norm: nsq.sqrt(),
        });
    }
    Ok(())
}

/// Grid indices `floor(t / h)` of the requested times, sorted and deduplicated.
fn grid_indices(times: &[f64], h: f64, steps: u64) -> Result<Vec<u64>> {
    let mut idx = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= 0.0) {
            return Err(Error::invalid("times", format!("sample time {t} is negative")));
        }
        let j = floor_ratio(t, h);
        if j > steps {
            return Err(Error::invalid("times", format!("sample time {t} lies beyond the horizon")));
        }
        idx.push(j);
    }
    idx.sort_unstable();
    idx.dedup();
    Ok(idx)
}

/// Euler-Maruyama over `path` with `k` substeps per `gamma_alpha` block, recorded at `times`
/// (each mapped to the grid point at or before it).
#[allow(clippy::too_many_arguments)]
pub fn run_sde_em(
    obj: &Objective,
    diffusion: &dyn Diffusion,
    sched: &StepSchedule,
    x0: &[f64],
    horizon: f64,
    k: u32,
    path: &BrownianPath,
    times: &[f64],
) -> Result<Trajectory> {
    let ga = sched.gamma_alpha()?;
    if k == 0 {
        return Err(Error::invalid("K", "substeps must be >= 1"));
    }
    let d = obj.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    let h = ga / k as f64;
    if path.dim() != d {
        return Err(Error::PathMismatch(format!("path dimension {} differs from objective dimension {d}", path.dim())));
    }
    if ((path.h() - h) / h).abs() > 1e-12 {
        return Err(Error::PathMismatch(format!("path step {} differs from gamma_alpha / K = {h}", path.h())));
    }
    let steps = ceil_ratio(horizon, h);
    if (path.len() as u64) < steps {
        return Err(Error::PathMismatch(format!(
            "path has {} increments, horizon {horizon} needs {steps}",
            path.len()
        )));
    }
    let record_at = grid_indices(times, h, steps)?;
    let mut traj = Trajectory::new(TimeAxis::Time, record_at.len(), true, 0);
    let mut grad_buf = vec![0.0; d];
    let mut next = record_at.iter().peekable();
    let mut y = x0.to_vec();
    if next.peek() == Some(&&0) {
        next.next();
        traj.record(0.0, &y, obj, &mut grad_buf);
    }
    let mut em = EmStepper::new(obj, diffusion, ga, sched.alpha(), h);
    for j in 0..steps {
        em.step(j, &mut y, path.increment(j as usize))?;
        if next.peek() == Some(&&(j + 1)) {
            next.next();
            traj.record((j + 1) as f64 * h, &y, obj, &mut grad_buf);
        }
    }
    Ok(traj)
}

/// RK4 for `dX = -grad f(X) dt` with `steps` uniform steps on `[0, horizon]`.
pub fn run_gradient_flow(obj: &Objective, x0: &[f64], horizon: f64, steps: u64, times: &[f64]) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::invalid("steps", "must be >= 1"));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon", format!("must be > 0, got {horizon}")));
    }
    let d = obj.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    let dt = horizon / steps as f64;
    let record_at = grid_indices(times, dt, steps)?;
    let mut traj = Trajectory::new(TimeAxis::Time, record_at.len(), true, 0);
    let mut grad_buf = vec![0.0; d];
    let mut next = record_at.iter().peekable();
    let mut x = x0.to_vec();
    if next.peek() == Some(&&0) {
        next.next();
        traj.record(0.0, &x, obj, &mut grad_buf);
    }
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    for j in 0..steps {
        obj.gradient_into(&x, &mut k1);
        for i in 0..d {
            tmp[i] = x[i] - 0.5 * dt * k1[i];
        }
        obj.gradient_into(&tmp, &mut k2);
        for i in 0..d {
            tmp[i] = x[i] - 0.5 * dt * k2[i];
        }
        obj.gradient_into(&tmp, &mut k3);
        for i in 0..d {
            tmp[i] = x[i] - dt * k3[i];
        }
        obj.gradient_into(&tmp, &mut k4);
        for i in 0..d {
            x[i] -= dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_finite(&x, j + 1)?;
        if next.peek() == Some(&&(j + 1)) {
            next.next();
            traj.record((j + 1) as f64 * dt, &x, obj, &mut grad_buf);
        }
    }
    Ok(traj)
}

/// Inputs shared by the continuous-time runs of one experiment.
#[derive(Clone, Copy)]
pub struct SdeProblem<'a> {
    pub objective: &'a Objective,
    pub diffusion: &'a dyn Diffusion,
    pub schedule: StepSchedule,
    pub x0: &'a [f64],
    pub horizon: f64,
}

impl SdeProblem<'_> {
    /// `Y_T` with `k` substeps per block on `path`.
    pub fn endpoint(&self, k: u32, path: &BrownianPath) -> Result<Vec<f64>> {
        let traj = run_sde_em(
            self.objective,
            self.diffusion,
            &self.schedule,
            self.x0,
            self.horizon,
            k,
            path,
            &[self.horizon],
        )?;
        Ok(traj.final_state().expect("horizon is recorded").to_vec())
    }
}

/// `|Y_T^{(K)} - Y_T^{(2K)}|` where the `2K` run uses the bridge refinement of `path`.
pub fn em_bias_probe(problem: &SdeProblem<'_>, k: u32, path: &BrownianPath, rng: &mut RngStream) -> Result<f64> {
    let coarse = problem.endpoint(k, path)?;
    let fine = problem.endpoint(2 * k, &path.refine(rng))?;
    Ok(crate::linalg::dist_sq(&coarse, &fine).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::SigmaSpec;
    use crate::rng::{derive_stream, StreamRole};

    fn bstream(id: u64) -> RngStream {
        derive_stream(11, id, StreamRole::Brownian)
    }

    #[test]
    fn path_length_and_variance() {
        let p = BrownianPath::generate(2, 10.0, 0.005, &mut bstream(0)).unwrap();
        assert_eq!(p.len(), 2000);
        for c in 0..2 {
            let v = (0..p.len()).map(|j| p.increment(j)[c].powi(2) / p.h()).sum::<f64>() / p.len() as f64;
            assert!((v - 1.0).abs() < 0.1, "{v}");
        }
        // Non-integer ratio rounds up.
        assert_eq!(BrownianPath::generate(1, 1.0, 0.3, &mut bstream(1)).unwrap().len(), 4);
    }

    #[test]
    fn refinement_sums_exactly() {
        let p = BrownianPath::generate(3, 20.0, 0.01, &mut bstream(2)).unwrap();
        let f = p.refine(&mut bstream(3));
        assert_eq!(f.len(), 2 * p.len());
        assert_eq!(f.h(), p.h() / 2.0);
        for j in 0..p.len() {
            for c in 0..3 {
                assert_eq!(f.increment(2 * j)[c] + f.increment(2 * j + 1)[c], p.increment(j)[c]);
            }
        }
        let v = (0..f.len()).map(|j| f.increment(j)[0].powi(2) / f.h()).sum::<f64>() / f.len() as f64;
        assert!((v - 1.0).abs() < 0.1, "{v}");
        // The two halves of one coarse step are independent.
        let cov = (0..p.len()).map(|j| f.increment(2 * j)[1] * f.increment(2 * j + 1)[1] / f.h()).sum::<f64>() / p.len() as f64;
        assert!(cov.abs() < 0.1, "{cov}");
    }

    #[test]
    fn zero_diffusion_matches_exponential() {
        let f = Objective::quadratic(1, 1.0).unwrap();
        let s = StepSchedule::new(0.5, 0.0).unwrap();
        let k = 1000;
        let h = 0.5 / k as f64;
        let path = BrownianPath::generate(1, 1.0, h, &mut bstream(4)).unwrap();
        let t = run_sde_em(&f, &ScaledIdentity(0.0), &s, &[1.0], 1.0, k, &path, &[1.0]).unwrap();
        let y = t.final_state().unwrap()[0];
        assert!((y / (-1.0f64).exp() - 1.0).abs() < 1e-3, "{y}");
    }

    #[test]
    fn pure_brownian_variance() {
        let f = Objective::linear_probe(1).unwrap();
        let s = StepSchedule::new(1.0, 0.0).unwrap();
        let horizon = 2.0;
        let reps = 10_000;
        let ys: Vec<f64> = (0..reps)
            .map(|r| {
                let path = BrownianPath::generate(1, horizon, 0.25, &mut bstream(100 + r)).unwrap();
                run_sde_em(&f, &ScaledIdentity(1.0), &s, &[0.3], horizon, 4, &path, &[horizon]).unwrap().final_state().unwrap()[0]
            })
            .collect();
        let m = ys.iter().sum::<f64>() / reps as f64;
        let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!((v / horizon - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn minimizer_is_fixed_without_diffusion() {
        let f = Objective::quadratic(2, 3.0).unwrap();
        let s = StepSchedule::new(0.2, 0.4).unwrap();
        let ga = s.gamma_alpha().unwrap();
        let path = BrownianPath::generate(2, 3.0, ga / 8.0, &mut bstream(5)).unwrap();
        let times: Vec<f64> = (0..=30).map(|i| 0.1 * i as f64).collect();
        let t = run_sde_em(&f, &ScaledIdentity(0.0), &s, &[0.0, 0.0], 3.0, 8, &path, &times).unwrap();
        assert!(t.dist2_to_min.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn path_mismatch_rejected() {
        let f = Objective::quadratic(2, 1.0).unwrap();
        let s = StepSchedule::new(0.5, 0.0).unwrap();
        let d1 = BrownianPath::generate(1, 1.0, 0.05, &mut bstream(6)).unwrap();
        let r = run_sde_em(&f, &ScaledIdentity(1.0), &s, &[0.0, 0.0], 1.0, 10, &d1, &[1.0]);
        assert!(matches!(r, Err(Error::PathMismatch(_))));
        let short = BrownianPath::generate(2, 0.5, 0.05, &mut bstream(7)).unwrap();
        let r = run_sde_em(&f, &ScaledIdentity(1.0), &s, &[0.0, 0.0], 1.0, 10, &short, &[1.0]);
        assert!(matches!(r, Err(Error::PathMismatch(_))));
        let wrong_h = BrownianPath::generate(2, 1.0, 0.01, &mut bstream(8)).unwrap();
        let r = run_sde_em(&f, &ScaledIdentity(1.0), &s, &[0.0, 0.0], 1.0, 10, &wrong_h, &[1.0]);
        assert!(matches!(r, Err(Error::PathMismatch(_))));
    }

    #[test]
    fn alpha_one_has_no_continuous_model() {
        let f = Objective::quadratic(1, 1.0).unwrap();
        let s = StepSchedule::new(0.5, 1.0).unwrap();
        let path = BrownianPath::generate(1, 1.0, 0.1, &mut bstream(9)).unwrap();
        let r = run_sde_em(&f, &ScaledIdentity(1.0), &s, &[0.0], 1.0, 5, &path, &[1.0]);
        assert_eq!(r.unwrap_err(), Error::AlphaOneContinuous);
    }

    #[test]
    fn gradient_flow_examples() {
        let q = Objective::quadratic(1, 1.0).unwrap();
        let t = run_gradient_flow(&q, &[1.0], 1.0, 1000, &[1.0]).unwrap();
        assert!((t.final_state().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-8);
        let p = Objective::linear_probe(2).unwrap();
        let t = run_gradient_flow(&p, &[0.0, 0.0], 2.0, 10, &[0.0, 1.0, 2.0]).unwrap();
        assert!(t.states.unwrap().iter().all(|x| x == &vec![0.0, 0.0]));
        let t = run_gradient_flow(&q, &[0.0], 2.0, 10, &[0.5, 2.0]).unwrap();
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    fn rms_probe(problem: &SdeProblem<'_>, k: u32, reps: u64) -> f64 {
        let ga = problem.schedule.gamma_alpha().unwrap();
        let mut acc = 0.0;
        for r in 0..reps {
            let path = BrownianPath::generate(problem.objective.dim(), problem.horizon, ga / k as f64, &mut bstream(500 + r)).unwrap();
            acc += em_bias_probe(problem, k, &path, &mut derive_stream(12, r, StreamRole::Brownian)).unwrap().powi(2);
        }
        (acc / reps as f64).sqrt()
    }

    #[test]
    fn probe_halves_with_k_for_linear_drift() {
        let f = Objective::quadratic(1, 1.0).unwrap();
        let s = StepSchedule::new(0.5, 0.0).unwrap();
        let problem = SdeProblem {
            objective: &f,
            diffusion: &ScaledIdentity(0.0),
            schedule: s,
            x0: &[1.0],
            horizon: 2.0,
        };
        let ratio = rms_probe(&problem, 8, 1) / rms_probe(&problem, 16, 1);
        assert!((1.7..=2.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn probe_halves_with_k_for_additive_noise() {
        let f = Objective::quadratic(1, 1.0).unwrap();
        let oracle = GradientOracle::gaussian(&f, SigmaSpec::Constant(1.0)).unwrap();
        let s = StepSchedule::new(0.5, 0.5).unwrap();
        let problem = SdeProblem {
            objective: &f,
            diffusion: &oracle,
            schedule: s,
            x0: &[1.0],
            horizon: 2.0,
        };
        let ratio = rms_probe(&problem, 8, 400) / rms_probe(&problem, 16, 400);
        assert!((1.7..=2.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn probe_vanishes_for_pure_brownian() {
        let f = Objective::linear_probe(2).unwrap();
        let problem = SdeProblem {
            objective: &f,
            diffusion: &ScaledIdentity(1.0),
            schedule: StepSchedule::new(1.0, 0.0).unwrap(),
            x0: &[0.5, -0.5],
            horizon: 1.0,
        };
        let path = BrownianPath::generate(2, 1.0, 1.0 / 16.0, &mut bstream(13)).unwrap();
        let p = em_bias_probe(&problem, 16, &path, &mut bstream(14)).unwrap();
        assert!(p <= 1e-12, "{p}");
    }

    #[test]
    fn strongly_convex_long_run_is_bounded() {
        let f = Objective::quadratic(1, 1.0).unwrap();
        let oracle = GradientOracle::gaussian(&f, SigmaSpec::Constant(1.0)).unwrap();
        let s = StepSchedule::new(0.5, 0.5).unwrap();
        let ga = s.gamma_alpha().unwrap();
        let horizon = 1000.0;
        let times = [1.0, 10.0, 100.0, 1000.0];
        let reps = 200;
        let mut mean = [0.0; 4];
        for r in 0..reps {
            let path = BrownianPath::generate(1, horizon, ga / 4.0, &mut bstream(900 + r)).unwrap();
            let t = run_sde_em(&f, &oracle, &s, &[1.0], horizon, 4, &path, &times).unwrap();
            for (m, d) in mean.iter_mut().zip(&t.dist2_to_min) {
                *m += d / reps as f64;
            }
        }
        let scaled: Vec<f64> = mean.iter().zip(times).map(|(m, t)| m * (ga + t).powf(0.5)).collect();
        let top = scaled.iter().cloned().fold(0.0, f64::max);
        let bottom = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(top / bottom < 5.0, "{scaled:?}");
    }
}

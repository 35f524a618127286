//! Stochastic gradient oracles `H(x, z)` with their noise covariance `Sigma(x)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StudentT};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::linalg::Covariance;
use crate::objectives::{Objective, ObjectiveKind};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Which unbiasedness/variance assumption the oracle satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSetting {
    /// Additive noise with `E|H(x, Z) - grad f(x)|^2 <= eta` for all `x`.
    A2a,
    /// Per-sample gradients `H = grad f~(., z)`, each L-smooth, with `E|H(x*, Z)|^2 <= eta`.
    A2b,
}

/// Zero-mean, unit-variance scalar laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLaw {
    Gaussian,
    Rademacher,
    /// Laplace with scale `1/sqrt(2)`.
    Laplace,
    /// Student t with `df > 4`, scaled by `sqrt((df - 2) / df)`.
    StudentT { df: f64 },
}

impl NoiseLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseLaw::StudentT { df } if !(df > 4.0) => Err(Error::invalid(
                "df",
                format!("Student t noise needs df > 4 (finite fourth moment), got {df}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseLaw::Gaussian => "gaussian",
            NoiseLaw::Rademacher => "rademacher",
            NoiseLaw::Laplace => "laplace",
            NoiseLaw::StudentT { .. } => "student",
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            NoiseLaw::Gaussian => rng.standard_normal(),
            NoiseLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseLaw::Laplace => self.quantile(rng.open_uniform()),
            NoiseLaw::StudentT { df } => {
                let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
                t * ((df - 2.0) / df).sqrt()
            }
        }
    }

    /// Quantile function `F^{-1}(u)` for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            NoiseLaw::Gaussian => standard_normal().inverse_cdf(u),
            NoiseLaw::Rademacher => {
                if u < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
            NoiseLaw::Laplace => {
                let b = std::f64::consts::FRAC_1_SQRT_2;
                if u < 0.5 {
                    b * (2.0 * u).ln()
                } else {
                    -b * (2.0 * (1.0 - u)).ln()
                }
            }
            NoiseLaw::StudentT { df } => {
                // The incomplete-beta inversion is accurate down to about 1e-30 and fails below.
                let tail = u.min(1.0 - u).max(1e-30);
                let t = StudentsT::new(0.0, 1.0, df).expect("validated df").inverse_cdf(tail);
                let t = if u > 0.5 { -t } else { t };
                t * ((df - 2.0) / df).sqrt()
            }
        }
    }

    /// Monotone map sending a standard Gaussian draw to a draw of this law, `F^{-1}(Phi(g))`.
    /// Evaluated through the lower tail so it stays finite for large `|g|`.
    pub fn from_gaussian(&self, g: f64) -> f64 {
        if let NoiseLaw::Gaussian = self {
            return g;
        }
        // Phi(-37.5) is the smallest tail probability above the subnormal range.
        let u = standard_normal().cdf(-g.abs().min(37.5));
        let q = -self.quantile(u);
        if g < 0.0 {
            -q
        } else {
            q
        }
    }

    pub fn excess_kurtosis(&self) -> f64 {
        match *self {
            NoiseLaw::Gaussian => 0.0,
            NoiseLaw::Rademacher => -2.0,
            NoiseLaw::Laplace => 3.0,
            NoiseLaw::StudentT { df } => 6.0 / (df - 4.0),
        }
    }
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Diffusion profile of a Gaussian oracle; the values are the diagonal of `Sigma^{1/2}(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSpec {
    /// `Sigma^{1/2} = s Id`.
    Constant(f64),
    /// `Sigma^{1/2}(x) = diag(scale (1 + amplitude tanh(x_i)))`, Lipschitz with constant
    /// `scale * amplitude`, `amplitude` in `[0, 1]`.
    StateDependent { scale: f64, amplitude: f64 },
}

/// Where the per-sample data of a mini-batch oracle come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchSource {
    /// For the linear probe `f~(x, z) = <x, z>`: `z` has i.i.d. coordinates from the law.
    LinearProbe(NoiseLaw),
    /// Uniform draws from the rows of a least-squares data set.
    Dataset,
}

#[derive(Debug, Clone, PartialEq)]
enum OracleKind {
    Gaussian(SigmaSpec),
    Heavy { scale: f64, law: NoiseLaw },
    Batch { source: BatchSource, m: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOracle {
    objective: Objective,
    kind: OracleKind,
    setting: NoiseSetting,
    eta: f64,
}

impl GradientOracle {
    /// `H(x) = grad f(x) + Sigma^{1/2}(x) G`, `G` standard Gaussian.
    pub fn gaussian(objective: &Objective, sigma: SigmaSpec) -> Result<Self> {
        let d = objective.dim() as f64;
        let eta = match sigma {
            SigmaSpec::Constant(s) => {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Error::invalid("sigma", format!("must be >= 0, got {s}")));
                }
                s * s * d
            }
            SigmaSpec::StateDependent { scale, amplitude } => {
                if !(scale.is_finite() && scale >= 0.0) {
                    return Err(Error::invalid("sigma.scale", format!("must be >= 0, got {scale}")));
                }
                if !(0.0..=1.0).contains(&amplitude) {
                    return Err(Error::invalid("sigma.amplitude", format!("must lie in [0, 1], got {amplitude}")));
                }
                d * (scale * (1.0 + amplitude)).powi(2)
            }
        };
        Ok(Self {
            objective: objective.clone(),
            kind: OracleKind::Gaussian(sigma),
            setting: NoiseSetting::A2a,
            eta,
        })
    }

    /// `H(x) = grad f(x) + s W` with `W` i.i.d. coordinates of a standardized law.
    pub fn heavy(objective: &Objective, scale: f64, law: NoiseLaw) -> Result<Self> {
        law.validate()?;
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::invalid("scale", format!("must be >= 0, got {scale}")));
        }
        Ok(Self {
            objective: objective.clone(),
            kind: OracleKind::Heavy { scale, law },
            setting: NoiseSetting::A2a,
            eta: scale * scale * objective.dim() as f64,
        })
    }

    /// Mini-batch oracle `H(x, z) = (1/M) sum_i grad f~(x, y_i)`.
    pub fn batch(objective: &Objective, source: BatchSource, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("batch", "M must be >= 1"));
        }
        let eta = match (objective.kind(), source) {
            (ObjectiveKind::LinearProbe, BatchSource::LinearProbe(law)) => {
                law.validate()?;
                objective.dim() as f64 / m as f64
            }
            (ObjectiveKind::LeastSquares(data), BatchSource::Dataset) => {
                let xs = objective.x_star();
                let second: f64 = (0..data.len())
                    .map(|i| data.residual(i, xs).powi(2) * crate::linalg::norm_sq(data.row(i)))
                    .sum::<f64>()
                    / data.len() as f64;
                second / m as f64
            }
            _ => {
                return Err(Error::invalid(
                    "source",
                    "batch source must match the objective (linear probe or least squares)",
                ))
            }
        };
        Ok(Self {
            objective: objective.clone(),
            kind: OracleKind::Batch { source, m },
            setting: NoiseSetting::A2b,
            eta,
        })
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn setting(&self) -> NoiseSetting {
        self.setting
    }

    /// Variance bound (A2a) or second moment at `x*` (A2b).
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn batch_size(&self) -> Option<usize> {
        match self.kind {
            OracleKind::Batch { m, .. } => Some(m),
            _ => None,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(
            self.kind,
            OracleKind::Gaussian(_)
                | OracleKind::Batch {
                    source: BatchSource::LinearProbe(NoiseLaw::Gaussian),
                    ..
                }
        )
    }

    pub fn is_noiseless(&self) -> bool {
        match self.kind {
            OracleKind::Gaussian(SigmaSpec::Constant(s)) => s == 0.0,
            OracleKind::Gaussian(SigmaSpec::StateDependent { scale, .. }) => scale == 0.0,
            OracleKind::Heavy { scale, .. } => scale == 0.0,
            OracleKind::Batch { .. } => false,
        }
    }

    /// Law of the standardized scalar noise when it is additive and coordinatewise,
    /// i.e. when `H = grad f + Sigma^{1/2} W` with `W` i.i.d. from the returned law.
    pub fn scalar_law(&self) -> Option<NoiseLaw> {
        match self.kind {
            OracleKind::Gaussian(_) => Some(NoiseLaw::Gaussian),
            OracleKind::Heavy { law, .. } => Some(law),
            OracleKind::Batch {
                source: BatchSource::LinearProbe(law),
                m: 1,
            } => Some(law),
            OracleKind::Batch { .. } => None,
        }
    }

    /// One draw of `H(x, Z)` written to `out`.
    #[inline]
    pub fn sample_into(&self, x: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        match self.kind {
            OracleKind::Gaussian(spec) => {
                self.objective.gradient_into(x, out);
                match spec {
                    SigmaSpec::Constant(s) => {
                        if s != 0.0 {
                            for o in out.iter_mut() {
                                *o += s * rng.standard_normal();
                            }
                        }
                    }
                    SigmaSpec::StateDependent { scale, amplitude } => {
                        for (o, xi) in out.iter_mut().zip(x) {
                            *o += scale * (1.0 + amplitude * xi.tanh()) * rng.standard_normal();
                        }
                    }
                }
            }
            OracleKind::Heavy { scale, law } => {
                self.objective.gradient_into(x, out);
                if scale != 0.0 {
                    for o in out.iter_mut() {
                        *o += scale * law.sample(rng);
                    }
                }
            }
            OracleKind::Batch { source, m } => {
                out.fill(0.0);
                let w = 1.0 / m as f64;
                match source {
                    BatchSource::LinearProbe(law) => {
                        for _ in 0..m {
                            for o in out.iter_mut() {
                                *o += w * law.sample(rng);
                            }
                        }
                    }
                    BatchSource::Dataset => {
                        let data = self.objective.dataset().expect("checked at construction");
                        for _ in 0..m {
                            let i = rng.random_range(0..data.len());
                            data.add_sample_gradient(i, x, w, out);
                        }
                    }
                }
            }
        }
    }

    pub fn sample(&self, x: &[f64], rng: &mut RngStream) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(x, rng, &mut out);
        out
    }

    /// `Sigma(x)`, the covariance of `H(x, Z) - grad f(x)`.
    pub fn sigma(&self, x: &[f64]) -> Covariance {
        let d = self.dim();
        match self.kind {
            OracleKind::Gaussian(_) | OracleKind::Heavy { .. } => match self.sigma_sqrt(x) {
                Covariance::Diagonal(s) => Covariance::Diagonal(s.iter().map(|v| v * v).collect()),
                Covariance::Full(_) => unreachable!("additive oracles are diagonal"),
            },
            OracleKind::Batch { source, m } => match source {
                BatchSource::LinearProbe(_) => Covariance::Diagonal(vec![1.0 / m as f64; d]),
                BatchSource::Dataset => {
                    let data = self.objective.dataset().expect("checked at construction");
                    let grad = self.objective.gradient(x);
                    let mut cov = DMatrix::<f64>::zeros(d, d);
                    let mut g = vec![0.0; d];
                    for i in 0..data.len() {
                        g.fill(0.0);
                        data.add_sample_gradient(i, x, 1.0, &mut g);
                        for r in 0..d {
                            for c in 0..d {
                                cov[(r, c)] += (g[r] - grad[r]) * (g[c] - grad[c]);
                            }
                        }
                    }
                    Covariance::Full(cov / (data.len() as f64 * m as f64))
                }
            },
        }
    }

    /// `Sigma(x)^{1/2}`.
    pub fn sigma_sqrt(&self, x: &[f64]) -> Covariance {
        let d = self.dim();
        match self.kind {
            OracleKind::Gaussian(SigmaSpec::Constant(s)) => Covariance::Diagonal(vec![s; d]),
            OracleKind::Gaussian(SigmaSpec::StateDependent { scale, amplitude }) => {
                Covariance::Diagonal(x.iter().map(|xi| scale * (1.0 + amplitude * xi.tanh())).collect())
            }
            OracleKind::Heavy { scale, .. } => Covariance::Diagonal(vec![scale; d]),
            OracleKind::Batch { .. } => self.sigma(x).sqrt(),
        }
    }

    /// `out = Sigma(x)^{1/2} g` without allocating for the diagonal oracles.
    #[inline]
    pub fn apply_sigma_sqrt(&self, x: &[f64], g: &[f64], out: &mut [f64]) {
        match self.kind {
            OracleKind::Gaussian(SigmaSpec::Constant(s)) | OracleKind::Heavy { scale: s, .. } => {
                for (o, gi) in out.iter_mut().zip(g) {
                    *o = s * gi;
                }
            }
            OracleKind::Gaussian(SigmaSpec::StateDependent { scale, amplitude }) => {
                for ((o, gi), xi) in out.iter_mut().zip(g).zip(x) {
                    *o = scale * (1.0 + amplitude * xi.tanh()) * gi;
                }
            }
            OracleKind::Batch {
                source: BatchSource::LinearProbe(_),
                m,
            } => {
                let s = (1.0 / m as f64).sqrt();
                for (o, gi) in out.iter_mut().zip(g) {
                    *o = s * gi;
                }
            }
            OracleKind::Batch { .. } => self.sigma_sqrt(x).apply(g, out),
        }
    }
}

/// Unbiased sample covariance of `H(x, .) - grad f(x)` from `n_samples` draws.
pub fn empirical_sigma(oracle: &GradientOracle, x: &[f64], n_samples: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    if n_samples < 2 {
        return Err(Error::NotEnoughPoints {
            needed: 2,
            got: n_samples,
        });
    }
    let d = oracle.dim();
    let grad = oracle.objective().gradient(x);
    let mut draws = vec![0.0; n_samples * d];
    for chunk in draws.chunks_exact_mut(d) {
        oracle.sample_into(x, rng, chunk);
        for (v, g) in chunk.iter_mut().zip(&grad) {
            *v -= g;
        }
    }
    let mut mean = vec![0.0; d];
    for chunk in draws.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(chunk) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n_samples as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for chunk in draws.chunks_exact(d) {
        for r in 0..d {
            let a = chunk[r] - mean[r];
            for c in 0..d {
                cov[(r, c)] += a * (chunk[c] - mean[c]);
            }
        }
    }
    Ok(cov / (n_samples - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use crate::rng::{derive_stream, StreamRole};

    fn stream(id: u64) -> RngStream {
        derive_stream(99, id, StreamRole::Noise)
    }

    fn moments(xs: &[f64]) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let k = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n / (v * v) - 3.0;
        (m, v, k)
    }

    #[test]
    fn zero_noise_returns_gradient() {
        let f = Objective::quadratic(2, 1.5).unwrap();
        let o = GradientOracle::gaussian(&f, SigmaSpec::Constant(0.0)).unwrap();
        let x = [0.3, -2.0];
        assert_eq!(o.sample(&x, &mut stream(0)), f.gradient(&x));
        assert!(o.is_noiseless());
        let cov = empirical_sigma(&o, &x, 100, &mut stream(1)).unwrap();
        assert_eq!(cov, DMatrix::zeros(2, 2));
    }

    #[test]
    fn trace_equals_eta_for_constant_gaussian() {
        let f = Objective::quadratic(2, 1.0).unwrap();
        let o = GradientOracle::gaussian(&f, SigmaSpec::Constant(1.0)).unwrap();
        assert_eq!(o.eta(), 2.0);
        assert_eq!(o.sigma(&[5.0, 1.0]).trace(), 2.0);
        assert_eq!(o.setting(), NoiseSetting::A2a);
    }

    #[test]
    fn gaussian_empirical_covariance_is_identity() {
        let f = Objective::quadratic(2, 1.0).unwrap();
        let o = GradientOracle::gaussian(&f, SigmaSpec::Constant(1.0)).unwrap();
        let cov = empirical_sigma(&o, &[0.5, 0.5], 100_000, &mut stream(2)).unwrap();
        assert!((cov - DMatrix::identity(2, 2)).abs().max() < 0.05);
    }

    #[test]
    fn gaussian_s2_empirical_sigma() {
        let f = Objective::quadratic(2, 1.0).unwrap();
        let o = GradientOracle::gaussian(&f, SigmaSpec::Constant(2.0)).unwrap();
        let cov = empirical_sigma(&o, &[1.0, -1.0], 100_000, &mut stream(3)).unwrap();
        assert!((cov - DMatrix::identity(2, 2) * 4.0).abs().max() < 0.2);
    }

    #[test]
    fn rejects_negative_sigma() {
        let f = Objective::quadratic(1, 1.0).unwrap();
        assert!(GradientOracle::gaussian(&f, SigmaSpec::Constant(-1.0)).is_err());
        assert!(GradientOracle::gaussian(&f, SigmaSpec::StateDependent { scale: 1.0, amplitude: 1.5 }).is_err());
        assert!(GradientOracle::heavy(&f, -0.5, NoiseLaw::Laplace).is_err());
    }

    #[test]
    fn linear_probe_batch_sigma() {
        let f = Objective::linear_probe(3).unwrap();
        for m in [1, 2, 7] {
            let o = GradientOracle::batch(&f, BatchSource::LinearProbe(NoiseLaw::Gaussian), m).unwrap();
            assert_eq!(o.sigma(&[1.0, 2.0, 3.0]), Covariance::Diagonal(vec![1.0 / m as f64; 3]));
            assert_eq!(o.setting(), NoiseSetting::A2b);
        }
        let o = GradientOracle::batch(&f, BatchSource::LinearProbe(NoiseLaw::Gaussian), 2).unwrap();
        let cov = empirical_sigma(&o, &[0.0; 3], 100_000, &mut stream(4)).unwrap();
        assert!((cov - DMatrix::identity(3, 3) * 0.5).abs().max() < 0.05);
    }

    #[test]
    fn single_datum_batch_is_deterministic() {
        let f = Objective::least_squares_from_data(2, vec![1.0, 2.0, 3.0, -1.0], vec![0.5, 1.0]).unwrap();
        let o = GradientOracle::batch(&f, BatchSource::Dataset, 1).unwrap();
        let x = [0.2, 0.7];
        let mut rng = stream(5);
        for _ in 0..50 {
            let h = o.sample(&x, &mut rng);
            let r0 = 0.2 + 1.4 - 0.5;
            let r1 = 0.6 - 0.7 - 1.0;
            let ok0 = (h[0] - r0).abs() < 1e-12 && (h[1] - 2.0 * r0).abs() < 1e-12;
            let ok1 = (h[0] - 3.0 * r1).abs() < 1e-12 && (h[1] + r1).abs() < 1e-12;
            assert!(ok0 || ok1);
        }
        let one = Objective::least_squares_from_data(1, vec![2.0], vec![1.0]).unwrap();
        let o1 = GradientOracle::batch(&one, BatchSource::Dataset, 1).unwrap();
        assert_eq!(o1.sample(&[3.0], &mut rng), vec![2.0 * (6.0 - 1.0)]);
    }

    #[test]
    fn batch_variance_ratio() {
        let f = Objective::linear_probe(1).unwrap();
        let var = |m: usize, id: u64| {
            let o = GradientOracle::batch(&f, BatchSource::LinearProbe(NoiseLaw::Gaussian), m).unwrap();
            empirical_sigma(&o, &[0.0], 100_000, &mut stream(id)).unwrap()[(0, 0)]
        };
        let ratio = var(4, 6) / var(1, 7);
        assert!((ratio - 0.25).abs() < 0.025, "{ratio}");
    }

    #[test]
    fn mismatched_batch_source_rejected() {
        let q = Objective::quadratic(1, 1.0).unwrap();
        assert!(GradientOracle::batch(&q, BatchSource::Dataset, 2).is_err());
        let p = Objective::linear_probe(1).unwrap();
        assert!(GradientOracle::batch(&p, BatchSource::LinearProbe(NoiseLaw::Gaussian), 0).is_err());
    }

    #[test]
    fn rademacher_takes_two_values() {
        let f = Objective::quadratic(1, 1.0).unwrap();
        let o = GradientOracle::heavy(&f, 1.0, NoiseLaw::Rademacher).unwrap();
        let x = [0.7];
        let mut up = 0;
        let mut rng = stream(8);
        let n = 10_000;
        for _ in 0..n {
            let h = o.sample(&x, &mut rng)[0];
            if (h - 1.7).abs() < 1e-12 {
                up += 1;
            } else {
                assert!((h + 0.3).abs() < 1e-12);
            }
        }
        assert!((up as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn heavy_variance_matches_scale() {
        let f = Objective::quadratic(1, 1.0).unwrap();
        for (i, law) in [NoiseLaw::Rademacher, NoiseLaw::Laplace, NoiseLaw::StudentT { df: 6.0 }].into_iter().enumerate() {
            let o = GradientOracle::heavy(&f, 1.5, law).unwrap();
            let mut rng = stream(20 + i as u64);
            let xs: Vec<f64> = (0..100_000).map(|_| o.sample(&[0.0], &mut rng)[0]).collect();
            let (_, v, _) = moments(&xs);
            assert!((v / 2.25 - 1.0).abs() < 0.05, "{law:?}: {v}");
        }
    }

    #[test]
    fn laplace_excess_kurtosis() {
        let mut rng = stream(30);
        let xs: Vec<f64> = (0..1_000_000).map(|_| NoiseLaw::Laplace.sample(&mut rng)).collect();
        let (m, v, k) = moments(&xs);
        assert!(m.abs() < 0.01);
        assert!((v - 1.0).abs() < 0.01);
        assert!((k - 3.0).abs() < 0.3, "{k}");
    }

    #[test]
    fn student_df_must_exceed_four() {
        let f = Objective::quadratic(1, 1.0).unwrap();
        assert!(GradientOracle::heavy(&f, 1.0, NoiseLaw::StudentT { df: 4.0 }).is_err());
        assert!(GradientOracle::heavy(&f, 1.0, NoiseLaw::StudentT { df: 4.5 }).is_ok());
    }

    #[test]
    fn gaussian_transport_is_identity_for_gaussian_law() {
        for g in [-3.0, -0.2, 0.0, 0.4, 2.5] {
            assert_eq!(NoiseLaw::Gaussian.from_gaussian(g), g);
        }
        // Going through Phi and Phi^{-1} explicitly agrees to round-off.
        let n = Normal::standard();
        for g in [-3.0f64, -0.2, 0.4, 2.5] {
            assert!((n.inverse_cdf(n.cdf(g)) - g).abs() < 1e-9);
        }
    }

    #[test]
    fn transport_is_monotone_and_finite() {
        for law in [NoiseLaw::Rademacher, NoiseLaw::Laplace, NoiseLaw::StudentT { df: 5.0 }] {
            let mut prev = f64::NEG_INFINITY;
            for k in -400..=400 {
                let v = law.from_gaussian(k as f64 * 0.1);
                assert!(v.is_finite());
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn unbiased_at_random_points() {
        let f = Objective::pl_sine();
        let oracles = [
            GradientOracle::gaussian(&f, SigmaSpec::Constant(0.7)).unwrap(),
            GradientOracle::gaussian(&f, SigmaSpec::StateDependent { scale: 0.5, amplitude: 0.8 }).unwrap(),
            GradientOracle::heavy(&f, 1.0, NoiseLaw::Laplace).unwrap(),
            GradientOracle::heavy(&f, 1.0, NoiseLaw::StudentT { df: 7.0 }).unwrap(),
        ];
        let mut rng = stream(40);
        let n = 100_000;
        for o in &oracles {
            for k in 0..20 {
                let x = [-3.0 + 0.3 * k as f64];
                let mut mean = 0.0;
                for _ in 0..n {
                    mean += o.sample(&x, &mut rng)[0];
                }
                mean /= n as f64;
                let bound = 4.0 * (o.sigma(&x).trace() / n as f64).sqrt();
                assert!((mean - f.gradient(&x)[0]).abs() <= bound);
            }
        }
    }

    #[test]
    fn least_squares_batch_unbiased_and_sigma_sqrt_consistent() {
        let mut data_rng = derive_stream(1, 0, StreamRole::Data);
        let f = Objective::least_squares(3, 40, &mut data_rng).unwrap();
        let o = GradientOracle::batch(&f, BatchSource::Dataset, 4).unwrap();
        let x = [0.3, -0.2, 1.0];
        let s = o.sigma(&x).to_dense();
        let r = o.sigma_sqrt(&x).to_dense();
        assert!((&r * r.transpose() - &s).abs().max() < 1e-10);
        let emp = empirical_sigma(&o, &x, 200_000, &mut stream(41)).unwrap();
        assert!((emp - &s).abs().max() < 0.05 * s.abs().max());
        let mut mean = [0.0; 3];
        let n = 100_000;
        let mut rng = stream(42);
        for _ in 0..n {
            let h = o.sample(&x, &mut rng);
            for i in 0..3 {
                mean[i] += h[i] / n as f64;
            }
        }
        let g = f.gradient(&x);
        let err: Vec<f64> = mean.iter().zip(&g).map(|(a, b)| a - b).collect();
        assert!(norm(&err) <= 4.0 * (s.trace() / n as f64).sqrt());
    }

    #[test]
    fn state_dependent_sigma_sqrt_squares_to_sigma() {
        let f = Objective::quadratic(3, 1.0).unwrap();
        let o = GradientOracle::gaussian(&f, SigmaSpec::StateDependent { scale: 0.9, amplitude: 0.5 }).unwrap();
        let mut rng = stream(50);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| 3.0 * rng.standard_normal()).collect();
            let s = o.sigma(&x).to_dense();
            let r = o.sigma_sqrt(&x).to_dense();
            assert!((&r * r.transpose() - &s).abs().max() < 1e-10);
            assert!(o.sigma(&x).trace() <= o.eta() + 1e-12);
        }
    }
}

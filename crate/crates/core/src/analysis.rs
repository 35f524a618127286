//! Rate regression, theoretical exponents, the discrete comparison bound and closed forms.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Least-squares fit of `log value = intercept + slope log point`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    /// Negative for decay.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Half-open index range `[start, end)` of the input points used.
    pub window: (usize, usize),
    /// Half-width of the 95% Student-t interval for the slope.
    pub ci_halfwidth: f64,
}

pub const DEFAULT_WINDOW_FRACTION: f64 = 0.5;
pub const MIN_RATE_POINTS: usize = 5;

/// Log-log OLS over all points; needs at least three. Used for sweeps in `gamma` or `M`
/// where only a handful of design points exist.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<RateEstimate> {
    if points.len() < 3 {
        return Err(Error::NotEnoughPoints {
            needed: 3,
            got: points.len(),
        });
    }
    ols_log(points, (0, points.len()))
}

/// Log-log OLS restricted to the last `ceil(window_fraction * len)` points.
pub fn fit_rate(points: &[(f64, f64)], window_fraction: f64) -> Result<RateEstimate> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::invalid(
            "window_fraction",
            format!("must lie in (0, 1], got {window_fraction}"),
        ));
    }
    let used = ((window_fraction * points.len() as f64).ceil() as usize).min(points.len());
    if used < MIN_RATE_POINTS {
        return Err(Error::NotEnoughPoints {
            needed: MIN_RATE_POINTS,
            got: used,
        });
    }
    ols_log(points, (points.len() - used, points.len()))
}

fn ols_log(points: &[(f64, f64)], window: (usize, usize)) -> Result<RateEstimate> {
    for (i, &(x, y)) in points.iter().enumerate().take(window.1).skip(window.0) {
        if !(x > 0.0) {
            return Err(Error::NonPositiveValue { index: i, value: x });
        }
        if !(y > 0.0) {
            return Err(Error::NonPositiveValue { index: i, value: y });
        }
    }
    let pts = &points[window.0..window.1];
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "abscissae are all equal"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
    let dof = n - 2.0;
    let se = (sse / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).expect("dof >= 1").inverse_cdf(0.975);
    Ok(RateEstimate {
        slope,
        intercept,
        r_squared,
        window,
        ci_halfwidth: t * se,
    })
}

/// Hypotheses on `f` for which a rate is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionClass {
    StronglyConvex,
    Convex,
    /// `|grad f|^r >= tau (f - f*)`, `r` in `(0, 2]`.
    Kl { r: f64 },
    /// `|grad f|^{r1} |x - x*|^{r2} >= tau (f - f*)` with moment growth exponent `beta`.
    F3 { r1: f64, r2: f64, beta: f64 },
    F3b,
    /// F3b plus linear growth of `f` away from `x*`.
    F3bLinearGrowth,
    /// F3 plus quadratic growth of `<grad f, x - x*>` away from `x*`.
    F3QuadraticGrowth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    FGap,
    Dist2,
    GradSq,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSetting {
    pub class: FunctionClass,
    pub alpha: f64,
    pub observable: Observable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateExponent {
    /// Decay like `n^{-exponent}` up to logarithmic factors.
    Exponent(f64),
    NoGuarantee,
}

impl RateExponent {
    pub fn value(&self) -> Option<f64> {
        match *self {
            RateExponent::Exponent(e) => Some(e),
            RateExponent::NoGuarantee => None,
        }
    }
}

fn positive_or_none(e: f64) -> RateExponent {
    if e > 0.0 {
        RateExponent::Exponent(e)
    } else {
        RateExponent::NoGuarantee
    }
}

/// Theoretical decay exponent of `setting.observable`, logarithmic factors ignored.
pub fn expected_rate(setting: &RateSetting) -> Result<RateExponent> {
    let a = setting.alpha;
    let open = a > 0.0 && a < 1.0;
    let check_open = || -> Result<()> {
        if open {
            Ok(())
        } else {
            Err(Error::invalid("alpha", format!("{:?} needs alpha in (0, 1), got {a}", setting.class)))
        }
    };
    use FunctionClass::*;
    use Observable::*;
    match setting.class {
        StronglyConvex => {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::invalid("alpha", format!("StronglyConvex needs alpha in (0, 1], got {a}")));
            }
            Ok(RateExponent::Exponent(a))
        }
        Convex => {
            check_open()?;
            Ok(match setting.observable {
                FGap | GradSq => RateExponent::Exponent(a.min(1.0 - a)),
                Dist2 => RateExponent::NoGuarantee,
            })
        }
        Kl { r } => {
            check_open()?;
            if !(r > 0.0 && r <= 2.0) {
                return Err(Error::invalid("r", format!("KL exponent must lie in (0, 2], got {r}")));
            }
            if setting.observable != FGap {
                return Ok(RateExponent::NoGuarantee);
            }
            if r == 2.0 {
                return Ok(RateExponent::Exponent(a));
            }
            let h = r / 2.0;
            Ok(positive_or_none((h / (1.0 - h) * (1.0 - a)).min(h * a)))
        }
        F3 { r1, r2: _, beta } => {
            check_open()?;
            if !(r1 > 0.0 && r1 < 2.0) {
                return Err(Error::invalid("r1", format!("F3 needs r1 in (0, 2), got {r1}")));
            }
            if !(beta >= 0.0) {
                return Err(Error::invalid("beta", format!("must be >= 0, got {beta}")));
            }
            if setting.observable != FGap {
                return Ok(RateExponent::NoGuarantee);
            }
            let h = r1 / 2.0;
            let d1 = h / (1.0 - h) * (1.0 - a) - beta;
            let d2 = h * a - beta * (1.0 - h);
            Ok(positive_or_none(d1.min(d2)))
        }
        F3b => {
            check_open()?;
            if setting.observable != FGap || a <= 1.0 / 3.0 {
                return Ok(RateExponent::NoGuarantee);
            }
            Ok(positive_or_none(((3.0 * a - 1.0) / 2.0).min(a / 2.0).min(1.0 - a)))
        }
        F3bLinearGrowth | F3QuadraticGrowth => {
            check_open()?;
            if setting.observable != FGap {
                return Ok(RateExponent::NoGuarantee);
            }
            Ok(RateExponent::Exponent((a / 2.0).min(1.0 - a)))
        }
    }
}

/// `B = max(max_{n <= n0 + 1} u_n, A1) + A2`, where `initial` holds `u_0, ..., u_{n0+1}`.
pub fn lemma4_bound(initial: &[f64], a1: f64, a2: f64) -> Result<f64> {
    if initial.is_empty() {
        return Err(Error::NotEnoughPoints { needed: 1, got: 0 });
    }
    let top = initial.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(top.max(a1) + a2)
}

/// Grid used to spot-check the hypotheses `F(n, x) < 0` for `x >= A1` and `F(n, x) <= A2`
/// for `x >= 0`, both for `n0 <= n <= n_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisGrid {
    pub n_max: u64,
    pub x_max: f64,
    pub points_per_axis: usize,
}

impl Default for HypothesisGrid {
    fn default() -> Self {
        Self {
            n_max: 10_000,
            x_max: 100.0,
            points_per_axis: 200,
        }
    }
}

pub fn check_lemma4_hypotheses<F>(f: &F, n0: u64, a1: f64, a2: f64, grid: &HypothesisGrid) -> Result<()>
where
    F: Fn(u64, f64) -> f64,
{
    let m = grid.points_per_axis.max(2);
    let span = grid.n_max.saturating_sub(n0) as f64;
    for i in 0..m {
        let n = n0 + (span * i as f64 / (m - 1) as f64).round() as u64;
        for j in 0..m {
            let x = grid.x_max.max(a1) * j as f64 / (m - 1) as f64;
            let v = f(n, x);
            if v > a2 {
                return Err(Error::Hypothesis(format!("F({n}, {x}) = {v} exceeds A2 = {a2}")));
            }
            let y = a1 + (grid.x_max.max(a1) - a1) * j as f64 / (m - 1) as f64;
            let w = f(n, y);
            if w >= 0.0 {
                return Err(Error::Hypothesis(format!("F({n}, {y}) = {w} is not negative above A1 = {a1}")));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma4Report {
    pub bound: f64,
    pub max_observed: f64,
    /// First index with `u_n > B`, if any.
    pub first_violation: Option<u64>,
}

impl Lemma4Report {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks the hypotheses on `grid`, then iterates the worst case
/// `u_{n+1} = max(0, u_n + F(n, u_n))` from `u_{n0+1}` up to index `steps` and compares with `B`.
pub fn verify_lemma4<F>(
    f: &F,
    initial: &[f64],
    n0: u64,
    a1: f64,
    a2: f64,
    steps: u64,
    grid: &HypothesisGrid,
) -> Result<Lemma4Report>
where
    F: Fn(u64, f64) -> f64,
{
    if initial.len() as u64 != n0 + 2 {
        return Err(Error::invalid(
            "initial",
            format!("need u_0..u_{{n0+1}} ({} values), got {}", n0 + 2, initial.len()),
        ));
    }
    if let Some((i, &v)) = initial.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NonPositiveValue { index: i, value: v });
    }
    check_lemma4_hypotheses(f, n0, a1, a2, grid)?;
    let bound = lemma4_bound(initial, a1, a2)?;
    let mut max_observed = initial.iter().cloned().fold(0.0, f64::max);
    let mut first_violation = None;
    let mut u = *initial.last().expect("non-empty");
    for n in (n0 + 1)..steps {
        u = (u + f(n, u)).max(0.0);
        max_observed = max_observed.max(u);
        if u > bound && first_violation.is_none() {
            first_violation = Some(n + 1);
        }
    }
    Ok(Lemma4Report {
        bound,
        max_observed,
        first_violation,
    })
}

/// `E|X_n|^2 = (gamma^2 / M) sum_{k<n} (k+1)^{-2 alpha}` for SGD on `f = 0` from `x0 = 0`
/// with `M`-batch unit-variance noise.
pub fn prop24_exact(m: usize, gamma: f64, alpha: f64, n: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("M", "must be >= 1"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("must lie in [0, 1/2), got {alpha}")));
    }
    let sum: f64 = (1..=n).map(|k| (k as f64).powf(-2.0 * alpha)).sum();
    Ok(gamma * gamma / m as f64 * sum)
}

/// `M^{-1/2} gamma^delta (1 - 2 alpha)^{-1/2} (T/2)^{1/2 - alpha}` with
/// `delta = min(1, 1/(2 - 2 alpha))`.
pub fn prop24_lower_bound(m: usize, gamma: f64, alpha: f64, horizon: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("M", "must be >= 1"));
    }
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("must lie in [0, 1/2), got {alpha}")));
    }
    let delta = strong_order(alpha);
    Ok((m as f64).powf(-0.5) * gamma.powf(delta) * (1.0 - 2.0 * alpha).powf(-0.5) * (horizon / 2.0).powf(0.5 - alpha))
}

/// `delta = min(1, (2 - 2 alpha)^{-1})`.
pub fn strong_order(alpha: f64) -> f64 {
    (1.0 / (2.0 - 2.0 * alpha)).min(1.0)
}

/// Mean and 95% normal half-width `1.96 s / sqrt(n)`, `s` the standard deviation with
/// divisor `n`.
pub fn confidence_interval(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::NotEnoughPoints { needed: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    Ok((mean, 1.96 * (var / n as f64).sqrt()))
}

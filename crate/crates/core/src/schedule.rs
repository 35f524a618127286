//! Step-size schedules `gamma (n+1)^{-alpha}` and their continuous-time rate.

use crate::{Error, Result};

/// Base step `gamma` and decay exponent `alpha`.
///
/// `alpha = 1` is a valid discrete schedule; the continuous-time quantities
/// ([`StepSchedule::gamma_alpha`], [`StepSchedule::continuous_rate`]) reject it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    gamma: f64,
    alpha: f64,
}

impl StepSchedule {
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { gamma, alpha })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Step used to go from `X_n` to `X_{n+1}`: `gamma (n+1)^{-alpha}`.
    pub fn step_size(&self, n: u64) -> f64 {
        if self.alpha == 0.0 {
            return self.gamma;
        }
        self.gamma * ((n + 1) as f64).powf(-self.alpha)
    }

    /// Time scale `gamma^{1/(1-alpha)}` linking iteration `n` to time `n * gamma_alpha`.
    pub fn gamma_alpha(&self) -> Result<f64> {
        if self.alpha >= 1.0 {
            return Err(Error::AlphaOneContinuous);
        }
        Ok(self.gamma.powf(1.0 / (1.0 - self.alpha)))
    }

    /// Rate `(gamma_alpha + t)^{-alpha}` multiplying the drift and diffusion at time `t`.
    pub fn continuous_rate(&self, t: f64) -> Result<f64> {
        let ga = self.gamma_alpha()?;
        Ok(rate_at(ga, self.alpha, t))
    }

    /// Number of whole `gamma_alpha`-blocks in `[0, horizon]`, i.e. `floor(horizon / gamma_alpha)`.
    pub fn blocks_in(&self, horizon: f64) -> Result<u64> {
        let ga = self.gamma_alpha()?;
        Ok(floor_ratio(horizon, ga))
    }
}

#[inline]
pub(crate) fn rate_at(gamma_alpha: f64, alpha: f64, t: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else {
        (gamma_alpha + t).powf(-alpha)
    }
}

/// `floor(a / b)` tolerant to the rounding of `a / b` landing just below an integer.
pub(crate) fn floor_ratio(a: f64, b: f64) -> u64 {
    let q = a / b;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        q.floor() as u64
    }
}

/// `ceil(a / b)` with the same tolerance as [`floor_ratio`].
pub(crate) fn ceil_ratio(a: f64, b: f64) -> u64 {
    let q = a / b;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        q.ceil() as u64
    }
}

//! Grid certification of function-class inequalities.

use super::{ClassTag, Objective};
use crate::linalg::{dist_sq, dot, norm};

/// Points closer than this to `x*` are skipped: the class ratios are 0/0 there.
pub const DEFAULT_EXCLUSION_RADIUS: f64 = 1e-6;

/// Relative slack allowed when comparing a ratio to its bound.
const REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    /// `lo, lo + step, ..., <= hi` on the real line.
    Line { lo: f64, hi: f64, step: f64 },
    /// Tensor grid on `[lo, hi]^dim` with `points_per_axis` points per axis.
    Cube { dim: usize, lo: f64, hi: f64, points_per_axis: usize },
    Points(Vec<Vec<f64>>),
}

impl Grid {
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            Grid::Line { lo, hi, step } => {
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| vec![lo + k as f64 * step]).collect()
            }
            Grid::Cube {
                dim,
                lo,
                hi,
                points_per_axis,
            } => {
                let m = (*points_per_axis).max(2);
                let axis: Vec<f64> = (0..m).map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64).collect();
                let total = m.pow(*dim as u32);
                (0..total)
                    .map(|mut idx| {
                        (0..*dim)
                            .map(|_| {
                                let v = axis[idx % m];
                                idx /= m;
                                v
                            })
                            .collect()
                    })
                    .collect()
            }
            Grid::Points(p) => p.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub condition: ClassTag,
    /// Smallest observed ratio (left side over the right-side factor of the inequality).
    pub worst_ratio: f64,
    /// Point at which the worst ratio occurred.
    pub worst_point: Vec<f64>,
    /// Constant the ratio has to reach (`mu`, `tau`, or 0 for convexity).
    pub required: f64,
    pub passed: bool,
    pub points_checked: usize,
}

impl CertificationReport {
    pub fn slack(&self) -> f64 {
        self.worst_ratio - self.required
    }
}

/// Checks `cond` on every grid point away from `x*`.
///
/// Ratios are: `<grad f(x), x - x*> / |x - x*|^2` for strong convexity (around `x*`),
/// the gradient-monotonicity ratio over consecutive grid points for convexity, and
/// `lhs / (f(x) - f*)` for the Lojasiewicz-type conditions.
pub fn certify_condition(obj: &Objective, cond: ClassTag, grid: &Grid, exclusion_radius: f64) -> CertificationReport {
    let pts = grid.points();
    let xs = obj.x_star();
    let mut worst = f64::INFINITY;
    let mut worst_point = Vec::new();
    let mut checked = 0usize;

    let mut consider = |ratio: f64, x: &[f64]| {
        if ratio < worst || worst_point.is_empty() {
            worst = ratio.min(worst);
            worst_point = x.to_vec();
        }
    };

    let required = match cond {
        ClassTag::StronglyConvex { mu } => mu,
        ClassTag::Convex => 0.0,
        ClassTag::Kl { tau, .. } | ClassTag::F3 { tau, .. } | ClassTag::F3b { tau } => tau,
    };

    match cond {
        ClassTag::Convex => {
            for w in pts.windows(2) {
                let (a, b) = (&w[0], &w[1]);
                let dx2 = dist_sq(a, b);
                if dx2 == 0.0 {
                    continue;
                }
                let ga = obj.gradient(a);
                let gb = obj.gradient(b);
                let num: f64 = ga.iter().zip(&gb).zip(a.iter().zip(b)).map(|((p, q), (u, v))| (q - p) * (v - u)).sum();
                checked += 1;
                consider(num / dx2, b);
            }
        }
        _ => {
            for x in &pts {
                let r2 = dist_sq(x, xs);
                if r2.sqrt() < exclusion_radius {
                    continue;
                }
                let g = obj.gradient(x);
                let diff: Vec<f64> = x.iter().zip(xs).map(|(a, b)| a - b).collect();
                let gap = obj.value(x) - obj.f_star();
                let ratio = match cond {
                    ClassTag::StronglyConvex { .. } => dot(&g, &diff) / r2,
                    ClassTag::Kl { r, .. } => norm(&g).powf(r) / gap,
                    ClassTag::F3 { r1, r2: e2, .. } => norm(&g).powf(r1) * r2.sqrt().powf(e2) / gap,
                    ClassTag::F3b { .. } => dot(&g, &diff) / gap,
                    ClassTag::Convex => unreachable!(),
                };
                if ratio.is_nan() {
                    continue;
                }
                checked += 1;
                consider(ratio, x);
            }
        }
    }

    let passed = checked > 0 && worst >= required - REL_TOL * required.abs().max(f64::MIN_POSITIVE);
    CertificationReport {
        condition: cond,
        worst_ratio: worst,
        worst_point,
        required,
        passed,
        points_checked: checked,
    }
}

//! Test objectives with exact gradients, minimizers and function-class metadata.

mod certify;

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{dot, norm_sq};
use crate::rng::RngStream;
use crate::{Error, Result};

pub use certify::{certify_condition, CertificationReport, Grid, DEFAULT_EXCLUSION_RADIUS};

/// Function-class assumptions with their constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassTag {
    /// `<grad f(x) - grad f(y), x - y> >= mu |x - y|^2`.
    StronglyConvex { mu: f64 },
    Convex,
    /// Lojasiewicz-type inequality `|grad f(x)|^r >= tau (f(x) - f*)`.
    /// For `r = 2` this is `f(x) - f* <= c |grad f(x)|^2` with `c = 1 / tau`.
    Kl { r: f64, tau: f64 },
    /// `|grad f(x)|^r1 |x - x*|^r2 >= tau (f(x) - f*)` with `r1` in `(0, 2)`.
    F3 { r1: f64, r2: f64, tau: f64 },
    /// Weak quasi-convexity `<grad f(x), x - x*> >= tau (f(x) - f*)`.
    F3b { tau: f64 },
}

impl ClassTag {
    /// Gradient-domination tag from the constant `c` of `f - f* <= c |grad f|^2`.
    pub fn kl_from_c(c: f64) -> Self {
        ClassTag::Kl { r: 2.0, tau: 1.0 / c }
    }

    /// The constant `c` of `f - f* <= c |grad f|^2` when this is an `r = 2` tag.
    pub fn kl_c(&self) -> Option<f64> {
        match *self {
            ClassTag::Kl { r: 2.0, tau } => Some(1.0 / tau),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassTag::StronglyConvex { .. } => "strongly-convex",
            ClassTag::Convex => "convex",
            ClassTag::Kl { .. } => "kl",
            ClassTag::F3 { .. } => "f3",
            ClassTag::F3b { .. } => "f3b",
        }
    }
}

/// Rows `a_i` and targets `b_i` of a least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    rows: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    /// Residual `<a_i, x> - b_i`.
    #[inline]
    pub fn residual(&self, i: usize, x: &[f64]) -> f64 {
        dot(self.row(i), x) - self.targets[i]
    }

    /// `out += weight * grad_x (<a_i, x> - b_i)^2 / 2`
    #[inline]
    pub fn add_sample_gradient(&self, i: usize, x: &[f64], weight: f64, out: &mut [f64]) {
        let r = weight * self.residual(i, x);
        for (o, a) in out.iter_mut().zip(self.row(i)) {
            *o += r * a;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    /// `(lambda / 2) |x|^2`
    Quadratic { lambda: f64 },
    /// `x^{2p}` on `[-1, 1]`, `2p(|x| - 1) + 1` outside.
    PhiP { p: u32 },
    /// `x^2 + 3 sin^2 x`, non-convex with a single stationary point.
    PlSine,
    /// Empirical mean of `(<a_i, x> - b_i)^2 / 2`.
    LeastSquares(Arc<Dataset>),
    /// `f = 0` with per-sample `f~(x, z) = <x, z>`.
    LinearProbe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    kind: ObjectiveKind,
    dim: usize,
    x_star: Vec<f64>,
    f_star: f64,
    lipschitz: f64,
    tags: Vec<ClassTag>,
    twice_differentiable: bool,
}

impl Objective {
    pub fn quadratic(dim: usize, lambda: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid("lambda", format!("must be > 0, got {lambda}")));
        }
        Ok(Self {
            kind: ObjectiveKind::Quadratic { lambda },
            dim,
            x_star: vec![0.0; dim],
            f_star: 0.0,
            lipschitz: lambda,
            tags: vec![
                ClassTag::StronglyConvex { mu: lambda },
                ClassTag::Convex,
                ClassTag::kl_from_c(1.0 / (2.0 * lambda)),
            ],
            twice_differentiable: true,
        })
    }

    pub fn phi_p(p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("p", "must be >= 1"));
        }
        let two_p = 2.0 * p as f64;
        Ok(Self {
            kind: ObjectiveKind::PhiP { p },
            dim: 1,
            x_star: vec![0.0],
            f_star: 0.0,
            lipschitz: two_p * (two_p - 1.0),
            tags: vec![ClassTag::Convex],
            twice_differentiable: false,
        })
    }

    pub fn pl_sine() -> Self {
        Self {
            kind: ObjectiveKind::PlSine,
            dim: 1,
            x_star: vec![0.0],
            f_star: 0.0,
            lipschitz: 8.0,
            tags: vec![ClassTag::kl_from_c(pl_sine_kl_constant())],
            twice_differentiable: true,
        }
    }

    /// Random instance: rows `a_i ~ N(0, I)`, targets `<a_i, w> + noise/2` for a random `w`.
    pub fn least_squares(dim: usize, n_data: usize, rng: &mut RngStream) -> Result<Self> {
        check_dim(dim)?;
        if n_data < dim {
            return Err(Error::invalid("n_data", format!("need n_data >= dim ({dim}), got {n_data}")));
        }
        let w: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let mut rows = Vec::with_capacity(n_data * dim);
        let mut targets = Vec::with_capacity(n_data);
        for _ in 0..n_data {
            let a: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let eps: f64 = StandardNormal.sample(rng);
            targets.push(dot(&a, &w) + 0.5 * eps);
            rows.extend_from_slice(&a);
        }
        Self::least_squares_from_data(dim, rows, targets)
    }

    /// Least squares over explicit data; `rows` is row-major `n x dim`.
    pub fn least_squares_from_data(dim: usize, rows: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if dim > 32 {
            return Err(Error::invalid("dim", "least squares is limited to dim <= 32"));
        }
        let n = targets.len();
        if rows.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                got: rows.len(),
            });
        }
        if n < dim {
            return Err(Error::invalid("n_data", format!("need n_data >= dim ({dim}), got {n}")));
        }
        let a = DMatrix::from_row_slice(n, dim, &rows);
        let b = DVector::from_column_slice(&targets);
        let gram = a.transpose() * &a / n as f64;
        let rhs = a.transpose() * &b / n as f64;
        let eig = SymmetricEigen::new(gram.clone());
        let min_eig = eig.eigenvalues.min();
        let max_eig = eig.eigenvalues.max();
        if min_eig <= 1e-12 * max_eig.max(1.0) {
            return Err(Error::SingularGram { min_eig });
        }
        let x_star = gram
            .cholesky()
            .ok_or(Error::SingularGram { min_eig })?
            .solve(&rhs);
        let data = Arc::new(Dataset { dim, rows, targets });
        let x_star: Vec<f64> = x_star.iter().copied().collect();
        let f_star = (0..n).map(|i| data.residual(i, &x_star).powi(2)).sum::<f64>() / (2.0 * n as f64);
        Ok(Self {
            kind: ObjectiveKind::LeastSquares(data),
            dim,
            x_star,
            f_star,
            lipschitz: max_eig,
            tags: vec![ClassTag::StronglyConvex { mu: min_eig }, ClassTag::Convex],
            twice_differentiable: true,
        })
    }

    pub fn linear_probe(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            kind: ObjectiveKind::LinearProbe,
            dim,
            x_star: vec![0.0; dim],
            f_star: 0.0,
            lipschitz: 0.0,
            tags: vec![ClassTag::Convex],
            twice_differentiable: true,
        })
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// Smoothness constant `L` of the gradient.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn tags(&self) -> &[ClassTag] {
        &self.tags
    }

    pub fn twice_differentiable(&self) -> bool {
        self.twice_differentiable
    }

    pub fn strong_convexity(&self) -> Option<f64> {
        self.tags.iter().find_map(|t| match t {
            ClassTag::StronglyConvex { mu } => Some(*mu),
            _ => None,
        })
    }

    pub fn dataset(&self) -> Option<&Arc<Dataset>> {
        match &self.kind {
            ObjectiveKind::LeastSquares(d) => Some(d),
            _ => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ObjectiveKind::Quadratic { lambda } => 0.5 * lambda * norm_sq(x),
            ObjectiveKind::PhiP { p } => phi_value(*p, x[0]),
            ObjectiveKind::PlSine => {
                let s = x[0].sin();
                x[0] * x[0] + 3.0 * s * s
            }
            ObjectiveKind::LeastSquares(d) => {
                (0..d.len()).map(|i| d.residual(i, x).powi(2)).sum::<f64>() / (2.0 * d.len() as f64)
            }
            ObjectiveKind::LinearProbe => 0.0,
        }
    }

    #[inline]
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ObjectiveKind::Quadratic { lambda } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = lambda * xi;
                }
            }
            ObjectiveKind::PhiP { p } => out[0] = phi_gradient(*p, x[0]),
            ObjectiveKind::PlSine => out[0] = 2.0 * x[0] + 3.0 * (2.0 * x[0]).sin(),
            ObjectiveKind::LeastSquares(d) => {
                out.fill(0.0);
                let w = 1.0 / d.len() as f64;
                for i in 0..d.len() {
                    d.add_sample_gradient(i, x, w, out);
                }
            }
            ObjectiveKind::LinearProbe => out.fill(0.0),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g);
        g
    }

    /// `f(x) - f*`, clamped at zero against round-off.
    #[inline]
    pub fn gap(&self, x: &[f64]) -> f64 {
        (self.value(x) - self.f_star).max(0.0)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::invalid("dim", "must be >= 1"))
    } else {
        Ok(())
    }
}

#[inline]
fn phi_value(p: u32, x: f64) -> f64 {
    if x.abs() <= 1.0 {
        x.powi(2 * p as i32)
    } else {
        2.0 * p as f64 * (x.abs() - 1.0) + 1.0
    }
}

#[inline]
fn phi_gradient(p: u32, x: f64) -> f64 {
    let two_p = 2.0 * p as f64;
    if x.abs() <= 1.0 {
        two_p * x.powi(2 * p as i32 - 1)
    } else {
        two_p * x.signum()
    }
}

/// `sup (f - f*) / |grad f|^2` for `x^2 + 3 sin^2 x` over the grid `[-20, 20]`, step `1e-4`,
/// skipping `|x| < 1e-6` where the ratio is 0/0.
pub fn pl_sine_kl_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let f = Objective {
            kind: ObjectiveKind::PlSine,
            dim: 1,
            x_star: vec![0.0],
            f_star: 0.0,
            lipschitz: 8.0,
            tags: vec![],
            twice_differentiable: true,
        };
        let mut sup = 0.0f64;
        for k in -200_000i64..=200_000 {
            let x = k as f64 * 1e-4;
            if x.abs() < 1e-6 {
                continue;
            }
            let g = f.gradient(&[x])[0];
            sup = sup.max(f.value(&[x]) / (g * g));
        }
        sup
    })
}

//! Experiment configuration: TOML grammar, semantic validation and object construction.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sgdlab::noise::{BatchSource, SigmaSpec};
use sgdlab::{derive_stream, GradientOracle, NoiseLaw, Objective, StreamRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Rates,
    StrongApprox,
    WeakApprox,
    BatchEps,
    Prop24,
    CoupleDemo,
    Certify,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Rates => "rates",
            ExperimentKind::StrongApprox => "strong-approx",
            ExperimentKind::WeakApprox => "weak-approx",
            ExperimentKind::BatchEps => "batch-eps",
            ExperimentKind::Prop24 => "prop24",
            ExperimentKind::CoupleDemo => "couple-demo",
            ExperimentKind::Certify => "certify",
        }
    }

    /// Experiments that simulate the continuous-time process.
    fn continuous(&self) -> bool {
        matches!(
            self,
            ExperimentKind::StrongApprox | ExperimentKind::WeakApprox | ExperimentKind::CoupleDemo | ExperimentKind::Prop24
        )
    }
}

/// Top-level configuration. Scalars precede tables so the echo serializes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<u64>,
    /// Worker threads; 0 or absent means one per core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Starting point; defaults to all ones (zeros for the linear probe).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub objective: ObjectiveSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<HorizonSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde: Option<SdeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Quadratic {
        dim: usize,
        lambda: f64,
    },
    PhiP {
        p: u32,
    },
    PlSine,
    LeastSquares {
        dim: usize,
        n_data: usize,
    },
    LinearProbe {
        dim: usize,
    },
}

impl ObjectiveSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ObjectiveSpec::Quadratic { dim, .. } | ObjectiveSpec::LeastSquares { dim, .. } | ObjectiveSpec::LinearProbe { dim } => dim,
            ObjectiveSpec::PhiP { .. } | ObjectiveSpec::PlSine => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawName {
    Gaussian,
    Rademacher,
    Laplace,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSourceName {
    Probe,
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    /// `grad f + sigma G`.
    Gaussian { sigma: f64 },
    /// `grad f + diag(scale (1 + amplitude tanh x)) G`.
    StateDependent { scale: f64, amplitude: f64 },
    /// `grad f + scale xi` with `xi` i.i.d. unit-variance draws from `law`.
    Heavy {
        scale: f64,
        law: LawName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        df: Option<f64>,
    },
    /// Average of `m` per-sample gradients; one run per listed batch size.
    Batch {
        source: BatchSourceName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        law: Option<LawName>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        df: Option<f64>,
        m: Vec<usize>,
    },
}

impl OracleSpec {
    /// Batch sizes swept by this oracle; a single `None` for non-batch oracles.
    pub fn batch_sizes(&self) -> Vec<Option<usize>> {
        match self {
            OracleSpec::Batch { m, .. } => m.iter().map(|&m| Some(m)).collect(),
            _ => vec![None],
        }
    }
}

/// Every `(gamma, alpha)` pair of the Cartesian product is one schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSpec {
    /// Iterations of the discrete process.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Continuous-time horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Number of log-spaced checkpoints (before deduplication).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingName {
    Auto,
    GaussianShared,
    Comonotone1d,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingName>,
    /// Brownian paths used for the Euler-Maruyama bias probe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_probe_paths: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Trailing fraction of checkpoints used by rate fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_fraction: Option<f64>,
    /// Absolute tolerance on fitted exponents for the report verdicts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Draws per distribution for the coupling-gap estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix_average: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    pub lo: f64,
    pub hi: f64,
    /// Line step in dimension 1, points per axis otherwise.
    pub resolution: f64,
}

pub const DEFAULT_REPLICATES: u64 = 100;
pub const DEFAULT_TOLERANCE: f64 = 0.1;
pub const DEFAULT_EPS_SAMPLES: usize = 100_000;
pub const DEFAULT_BIAS_PROBE_PATHS: u64 = 20;

/// One violated constraint, located by its dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub issues: Vec<Issue>,
}

impl ConfigError {
    fn single(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            issues: vec![Issue {
                path: path.into(),
                message: message.into(),
            }],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", issue.path, issue.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    /// Parses and validates. `experiment` overrides (or must agree with) the file's value.
    pub fn parse(text: &str, experiment: Option<ExperimentKind>) -> Result<Self, ConfigError> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::single("<toml>", e.to_string().trim_end().to_string()))?;
        match (cfg.experiment, experiment) {
            (Some(a), Some(b)) if a != b => {
                return Err(ConfigError::single(
                    "experiment",
                    format!("file declares `{}` but `{}` was requested", a.name(), b.name()),
                ))
            }
            (None, None) => return Err(ConfigError::single("experiment", "missing; set it in the file or pick a subcommand")),
            (None, Some(b)) => cfg.experiment = Some(b),
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, experiment: Option<ExperimentKind>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, experiment)
    }

    /// TOML rendering of the parsed configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn kind(&self) -> ExperimentKind {
        self.experiment.expect("set by parse")
    }

    pub fn replicates(&self) -> u64 {
        self.replicates.unwrap_or(DEFAULT_REPLICATES)
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(0)
    }

    pub fn x0(&self) -> Vec<f64> {
        match (&self.x0, &self.objective) {
            (Some(x), _) => x.clone(),
            (None, ObjectiveSpec::LinearProbe { dim }) => vec![0.0; *dim],
            (None, spec) => vec![1.0; spec.dim()],
        }
    }

    pub fn schedules(&self) -> Vec<(f64, f64)> {
        let Some(s) = &self.schedule else { return Vec::new() };
        s.gamma.iter().flat_map(|&g| s.alpha.iter().map(move |&a| (g, a))).collect()
    }

    pub fn iterations(&self) -> Option<u64> {
        self.horizon.as_ref().and_then(|h| h.n)
    }

    pub fn time_horizon(&self) -> Option<f64> {
        self.horizon.as_ref().and_then(|h| h.t)
    }

    pub fn checkpoints(&self) -> usize {
        self.horizon
            .as_ref()
            .and_then(|h| h.checkpoints)
            .unwrap_or(sgdlab::SamplingPlan::DEFAULT_POINTS)
    }

    pub fn substeps(&self) -> u32 {
        self.sde
            .as_ref()
            .and_then(|s| s.substeps)
            .unwrap_or(sgdlab::sde::DEFAULT_SUBSTEPS)
    }

    pub fn coupling(&self) -> CouplingName {
        self.sde.as_ref().and_then(|s| s.coupling).unwrap_or(CouplingName::Auto)
    }

    pub fn bias_probe_paths(&self) -> u64 {
        self.sde
            .as_ref()
            .and_then(|s| s.bias_probe_paths)
            .unwrap_or(DEFAULT_BIAS_PROBE_PATHS)
    }

    pub fn window_fraction(&self) -> f64 {
        self.analysis
            .as_ref()
            .and_then(|a| a.window_fraction)
            .unwrap_or(sgdlab::analysis::DEFAULT_WINDOW_FRACTION)
    }

    pub fn tolerance(&self) -> f64 {
        self.analysis.as_ref().and_then(|a| a.tolerance).unwrap_or(DEFAULT_TOLERANCE)
    }

    pub fn eps_samples(&self) -> usize {
        self.analysis.as_ref().and_then(|a| a.samples).unwrap_or(DEFAULT_EPS_SAMPLES)
    }

    pub fn suffix_average(&self) -> bool {
        self.analysis.as_ref().and_then(|a| a.suffix_average).unwrap_or(false)
    }

    /// Full structural and range validation; all violations are collected.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        let mut bad = |path: String, message: String| v.push(Issue { path, message });
        let kind = match self.experiment {
            Some(k) => k,
            None => {
                return Err(ConfigError::single("experiment", "missing"));
            }
        };

        if self.replicates == Some(0) {
            bad("replicates".into(), "must be at least 1".into());
        }

        let dim = self.objective.dim();
        match self.objective {
            ObjectiveSpec::Quadratic { dim, lambda } => {
                if dim == 0 {
                    bad("objective.dim".into(), "must be at least 1".into());
                }
                if !(lambda.is_finite() && lambda > 0.0) {
                    bad("objective.lambda".into(), format!("must be positive, got {lambda}"));
                }
            }
            ObjectiveSpec::PhiP { p } => {
                if p < 2 {
                    bad("objective.p".into(), format!("must be at least 2, got {p}"));
                }
            }
            ObjectiveSpec::PlSine => {}
            ObjectiveSpec::LeastSquares { dim, n_data } => {
                if dim == 0 {
                    bad("objective.dim".into(), "must be at least 1".into());
                }
                if n_data < dim {
                    bad("objective.n_data".into(), format!("needs at least dim = {dim} rows, got {n_data}"));
                }
            }
            ObjectiveSpec::LinearProbe { dim } => {
                if dim == 0 {
                    bad("objective.dim".into(), "must be at least 1".into());
                }
            }
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != dim {
                bad("x0".into(), format!("has {} entries, objective dimension is {dim}", x0.len()));
            }
            if let Some(i) = x0.iter().position(|x| !x.is_finite()) {
                bad(format!("x0[{i}]"), "must be finite".into());
            }
        }

        let needs_oracle = !matches!(kind, ExperimentKind::Certify);
        match &self.oracle {
            None if needs_oracle => bad("oracle".into(), format!("required by `{}`", kind.name())),
            None => {}
            Some(o) => validate_oracle(o, &self.objective, &mut bad),
        }
        if kind == ExperimentKind::BatchEps && !matches!(self.oracle, Some(OracleSpec::Batch { .. })) {
            bad("oracle.kind".into(), "batch-eps needs a batch oracle".into());
        }
        if kind == ExperimentKind::Prop24 {
            if !matches!(self.objective, ObjectiveSpec::LinearProbe { .. }) {
                bad("objective.kind".into(), "prop24 needs the linear_probe objective (f = 0)".into());
            }
            match &self.oracle {
                Some(OracleSpec::Batch { law, .. }) if law.unwrap_or(LawName::Gaussian) == LawName::Gaussian => {}
                Some(_) => bad("oracle".into(), "prop24 needs a batch oracle with Gaussian per-sample noise".into()),
                None => {}
            }
            if self.x0.as_ref().is_some_and(|x| x.iter().any(|&v| v != 0.0)) {
                bad("x0".into(), "prop24 starts at the minimizer x0 = 0".into());
            }
        }

        let needs_schedule = !matches!(kind, ExperimentKind::Certify | ExperimentKind::BatchEps);
        match &self.schedule {
            None if needs_schedule => bad("schedule".into(), format!("required by `{}`", kind.name())),
            None => {}
            Some(s) => {
                if s.gamma.is_empty() {
                    bad("schedule.gamma".into(), "must list at least one value".into());
                }
                if s.alpha.is_empty() {
                    bad("schedule.alpha".into(), "must list at least one value".into());
                }
                for (i, &g) in s.gamma.iter().enumerate() {
                    if !(g.is_finite() && g > 0.0) {
                        bad(format!("schedule.gamma[{i}]"), format!("must be positive, got {g}"));
                    }
                }
                for (i, &a) in s.alpha.iter().enumerate() {
                    let path = format!("schedule.alpha[{i}]");
                    if !(0.0..=1.0).contains(&a) {
                        bad(path, format!("must lie in [0, 1], got {a}"));
                    } else if kind.continuous() && kind != ExperimentKind::Prop24 && a >= 1.0 {
                        bad(
                            path,
                            format!(
                                "alpha = 1 is not allowed for `{}`: the continuous-time process needs gamma_alpha = gamma^(1/(1-alpha)), which requires alpha < 1",
                                kind.name()
                            ),
                        );
                    } else if kind == ExperimentKind::Prop24 && a >= 0.5 {
                        bad(path, format!("prop24 needs alpha in [0, 1/2), got {a}"));
                    }
                }
            }
        }

        match kind {
            ExperimentKind::Rates => match self.iterations() {
                None => bad("horizon.n".into(), "required by `rates`".into()),
                Some(0) => bad("horizon.n".into(), "must be at least 1".into()),
                _ => {}
            },
            ExperimentKind::StrongApprox | ExperimentKind::WeakApprox | ExperimentKind::CoupleDemo | ExperimentKind::Prop24 => {
                match self.time_horizon() {
                    None => bad("horizon.t".into(), format!("required by `{}`", kind.name())),
                    Some(t) if !(t.is_finite() && t > 0.0) => bad("horizon.t".into(), format!("must be positive, got {t}")),
                    _ => {}
                }
            }
            _ => {}
        }
        if let Some(h) = &self.horizon {
            if matches!(h.checkpoints, Some(c) if c < 2) {
                bad("horizon.checkpoints".into(), "must be at least 2".into());
            }
        }
        if let Some(s) = &self.sde {
            if s.substeps == Some(0) {
                bad("sde.substeps".into(), "must be at least 1".into());
            }
            if s.bias_probe_paths == Some(1) {
                bad("sde.bias_probe_paths".into(), "use 0 to disable or at least 2".into());
            }
        }
        if matches!(kind, ExperimentKind::StrongApprox | ExperimentKind::WeakApprox) && self.replicates() < 2 {
            bad("replicates".into(), "error estimates need at least 2 replicates".into());
        }
        if let Some(a) = &self.analysis {
            if let Some(w) = a.window_fraction {
                if !(w > 0.0 && w <= 1.0) {
                    bad("analysis.window_fraction".into(), format!("must lie in (0, 1], got {w}"));
                }
            }
            if let Some(t) = a.tolerance {
                if !(t.is_finite() && t >= 0.0) {
                    bad("analysis.tolerance".into(), format!("must be nonnegative, got {t}"));
                }
            }
            if a.samples.is_some_and(|s| s < 2) {
                bad("analysis.samples".into(), "must be at least 2".into());
            }
        }
        if let Some(c) = &self.certify {
            if !(c.lo < c.hi) {
                bad("certify.hi".into(), "must exceed certify.lo".into());
            }
            if !(c.resolution > 0.0) {
                bad("certify.resolution".into(), "must be positive".into());
            }
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues: v })
        }
    }

    /// The objective; least-squares data come from the `(seed, 0, Data)` stream.
    pub fn build_objective(&self) -> sgdlab::Result<Objective> {
        match self.objective {
            ObjectiveSpec::Quadratic { dim, lambda } => Objective::quadratic(dim, lambda),
            ObjectiveSpec::PhiP { p } => Objective::phi_p(p),
            ObjectiveSpec::PlSine => Ok(Objective::pl_sine()),
            ObjectiveSpec::LeastSquares { dim, n_data } => {
                let mut rng = derive_stream(self.seed, 0, StreamRole::Data);
                Objective::least_squares(dim, n_data, &mut rng)
            }
            ObjectiveSpec::LinearProbe { dim } => Objective::linear_probe(dim),
        }
    }

    /// The oracle for one batch size (ignored unless the oracle is a batch oracle).
    pub fn build_oracle(&self, obj: &Objective, batch: Option<usize>) -> sgdlab::Result<GradientOracle> {
        let spec = self
            .oracle
            .as_ref()
            .ok_or_else(|| sgdlab::Error::invalid("oracle", "not configured"))?;
        match spec {
            OracleSpec::Gaussian { sigma } => GradientOracle::gaussian(obj, SigmaSpec::Constant(*sigma)),
            OracleSpec::StateDependent { scale, amplitude } => GradientOracle::gaussian(
                obj,
                SigmaSpec::StateDependent {
                    scale: *scale,
                    amplitude: *amplitude,
                },
            ),
            OracleSpec::Heavy { scale, law, df } => GradientOracle::heavy(obj, *scale, to_law(*law, *df)),
            OracleSpec::Batch { source, law, df, m } => {
                let m = batch.or_else(|| m.first().copied()).unwrap_or(1);
                let source = match source {
                    BatchSourceName::Probe => BatchSource::LinearProbe(to_law(law.unwrap_or(LawName::Gaussian), *df)),
                    BatchSourceName::Dataset => BatchSource::Dataset,
                };
                GradientOracle::batch(obj, source, m)
            }
        }
    }
}

pub fn to_law(law: LawName, df: Option<f64>) -> NoiseLaw {
    match law {
        LawName::Gaussian => NoiseLaw::Gaussian,
        LawName::Rademacher => NoiseLaw::Rademacher,
        LawName::Laplace => NoiseLaw::Laplace,
        LawName::Student => NoiseLaw::StudentT { df: df.unwrap_or(5.0) },
    }
}

fn validate_oracle(o: &OracleSpec, objective: &ObjectiveSpec, bad: &mut impl FnMut(String, String)) {
    let nonneg = |x: f64| x.is_finite() && x >= 0.0;
    match o {
        OracleSpec::Gaussian { sigma } => {
            if !nonneg(*sigma) {
                bad("oracle.sigma".into(), format!("must be nonnegative, got {sigma}"));
            }
        }
        OracleSpec::StateDependent { scale, amplitude } => {
            if !nonneg(*scale) {
                bad("oracle.scale".into(), format!("must be nonnegative, got {scale}"));
            }
            if !(amplitude.is_finite() && amplitude.abs() < 1.0) {
                bad("oracle.amplitude".into(), format!("must lie in (-1, 1), got {amplitude}"));
            }
        }
        OracleSpec::Heavy { scale, law, df } => {
            if !nonneg(*scale) {
                bad("oracle.scale".into(), format!("must be nonnegative, got {scale}"));
            }
            check_law(*law, *df, bad);
        }
        OracleSpec::Batch { source, law, df, m } => {
            if m.is_empty() {
                bad("oracle.m".into(), "must list at least one batch size".into());
            }
            for (i, &mi) in m.iter().enumerate() {
                if mi == 0 {
                    bad(format!("oracle.m[{i}]"), "must be at least 1".into());
                }
            }
            match source {
                BatchSourceName::Probe => {
                    if !matches!(objective, ObjectiveSpec::LinearProbe { .. }) {
                        bad("oracle.source".into(), "`probe` batches need the linear_probe objective".into());
                    }
                    check_law(law.unwrap_or(LawName::Gaussian), *df, bad);
                }
                BatchSourceName::Dataset => {
                    if !matches!(objective, ObjectiveSpec::LeastSquares { .. }) {
                        bad("oracle.source".into(), "`dataset` batches need the least_squares objective".into());
                    }
                    if law.is_some() {
                        bad("oracle.law".into(), "dataset batches take their noise from the data".into());
                    }
                }
            }
        }
    }
}

fn check_law(law: LawName, df: Option<f64>, bad: &mut impl FnMut(String, String)) {
    match (law, df) {
        (LawName::Student, Some(df)) if !(df > 4.0) => {
            bad("oracle.df".into(), format!("Student-t needs df > 4 for finite fourth moments, got {df}"))
        }
        (LawName::Student, _) => {}
        (_, Some(_)) => bad("oracle.df".into(), "only meaningful for law = \"student\"".into()),
        _ => {}
    }
}

//! Experiment runners. Each returns an in-memory [`Outcome`]; writing files is separate.

use sgdlab::analysis::{
    confidence_interval, expected_rate, fit_power_law, fit_rate, prop24_exact, prop24_lower_bound, strong_order, FunctionClass,
    Observable, RateEstimate, RateExponent, RateSetting,
};
use sgdlab::coupling::{
    blocks_in_horizon, epsilon_hat, run_coupled, strong_error, weak_error_paired, CoupledRun, CouplingConfig, CouplingKind,
    CouplingRequest, Estimate,
};
use sgdlab::linalg::norm_sq;
use sgdlab::objectives::{certify_condition, CertificationReport, Grid, ObjectiveKind, DEFAULT_EXCLUSION_RADIUS};
use sgdlab::parallel::map_replicates;
use sgdlab::sde::{em_bias_probe, BrownianPath, SdeProblem};
use sgdlab::sgd::{run_sgd_with, SgdOptions};
use sgdlab::{derive_stream, ClassTag, GradientOracle, Objective, SamplingPlan, StepSchedule, StreamRole, Trajectory};

use crate::config::{CouplingName, ExperimentConfig, ExperimentKind};

/// Salt separating the bias-probe paths from the replicate streams.
const PROBE_SALT: u64 = 0x7072_6f62_6570_6174;

/// One `(gamma, alpha, batch)` combination of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub run_id: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub batch: Option<usize>,
}

/// One row of `raw.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub run: RunSpec,
    pub replicate: u64,
    pub n_or_t: f64,
    pub f_gap: f64,
    pub dist2: f64,
    pub grad_sq: f64,
    pub suffix_avg: Option<f64>,
}

/// One row of `summary.csv`: an observable of one run at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub run: RunSpec,
    pub n_or_t: f64,
    pub observable: &'static str,
    pub count: usize,
    pub mean: f64,
    pub ci_halfwidth: Option<f64>,
}

/// Experiment-specific CSV written next to the standard ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file_name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub run_id: usize,
    pub replicate: u64,
    pub error: String,
}

/// Fitted exponent of one observable against its theoretical value.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableFit {
    pub observable: Observable,
    pub fit: Option<RateEstimate>,
    pub expected: Option<RateExponent>,
    /// Why no fit is reported.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRun {
    pub run: RunSpec,
    pub checkpoints: Vec<f64>,
    pub mean_f_gap: Vec<f64>,
    pub mean_dist2: Vec<f64>,
    pub mean_grad_sq: Vec<f64>,
    pub fits: Vec<ObservableFit>,
    pub completed: usize,
}

impl RateRun {
    pub fn fit(&self, observable: Observable) -> Option<&ObservableFit> {
        self.fits.iter().find(|f| f.observable == observable)
    }
}

/// Strong and weak errors of one schedule at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxPoint {
    pub run: RunSpec,
    pub blocks: u64,
    pub kind: CouplingKind,
    pub strong: Estimate,
    pub weak: Estimate,
    /// Root mean square of the Euler-Maruyama bias probe over the probe paths.
    pub bias_probe: Option<f64>,
    pub completed: usize,
}

/// Slopes against `gamma` for one `(alpha, batch)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxFit {
    pub alpha: f64,
    pub batch: Option<usize>,
    pub strong: Option<RateEstimate>,
    pub weak: Option<RateEstimate>,
    pub expected_strong: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsPoint {
    pub run: RunSpec,
    pub mean: f64,
    pub ci_halfwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop24Point {
    pub run: RunSpec,
    pub n: u64,
    pub mean: f64,
    pub standard_error: f64,
    pub ci_halfwidth: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop24Run {
    pub run: RunSpec,
    pub points: Vec<Prop24Point>,
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Details {
    Rates(Vec<RateRun>),
    Approx { points: Vec<ApproxPoint>, fits: Vec<ApproxFit> },
    BatchEps { points: Vec<EpsPoint>, fit: Option<RateEstimate> },
    Prop24(Vec<Prop24Run>),
    CoupleDemo,
    Certify(Vec<CertificationReport>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub experiment: ExperimentKind,
    pub raw: Vec<RawRow>,
    pub summary: Vec<SummaryRow>,
    pub tables: Vec<Table>,
    pub report: Vec<String>,
    pub aborts: Vec<Abort>,
    /// Replicates started, summed over runs.
    pub attempted: u64,
    pub details: Details,
}

impl Outcome {
    fn new(experiment: ExperimentKind, details: Details) -> Self {
        Self {
            experiment,
            raw: Vec::new(),
            summary: Vec::new(),
            tables: Vec::new(),
            report: Vec::new(),
            aborts: Vec::new(),
            attempted: 0,
            details,
        }
    }

    pub fn all_aborted(&self) -> bool {
        self.attempted > 0 && self.aborts.len() as u64 == self.attempted
    }
}

/// Runs the configured experiment. Errors are setup failures (objective or oracle
/// construction); replicate failures are recorded in [`Outcome::aborts`].
pub fn run_experiment(cfg: &ExperimentConfig) -> sgdlab::Result<Outcome> {
    let mut out = match cfg.kind() {
        ExperimentKind::Rates => run_rates(cfg)?,
        ExperimentKind::StrongApprox | ExperimentKind::WeakApprox => run_approx(cfg)?,
        ExperimentKind::BatchEps => run_batch_eps(cfg)?,
        ExperimentKind::Prop24 => run_prop24(cfg)?,
        ExperimentKind::CoupleDemo => run_couple_demo(cfg)?,
        ExperimentKind::Certify => run_certify(cfg)?,
    };
    let mut header = vec![
        format!("experiment: {}", cfg.kind().name()),
        format!("seed: {}", cfg.seed),
    ];
    if out.attempted > 0 {
        header.push(format!(
            "replicates: {} attempted, {} aborted",
            out.attempted,
            out.aborts.len()
        ));
        if let Some(first) = out.aborts.first() {
            header.push(format!(
                "first abort: run {} replicate {}: {}",
                first.run_id, first.replicate, first.error
            ));
        }
    }
    header.push(String::new());
    header.append(&mut out.report);
    out.report = header;
    Ok(out)
}

fn run_specs(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let batches = cfg.oracle.as_ref().map(|o| o.batch_sizes()).unwrap_or_else(|| vec![None]);
    let mut runs = Vec::new();
    for (gamma, alpha) in cfg.schedules() {
        for &batch in &batches {
            runs.push(RunSpec {
                run_id: runs.len(),
                gamma,
                alpha,
                batch,
            });
        }
    }
    runs
}

fn run_label(run: &RunSpec) -> String {
    match run.batch {
        Some(m) => format!("run {}: gamma={} alpha={} M={}", run.run_id, run.gamma, run.alpha, m),
        None => format!("run {}: gamma={} alpha={}", run.run_id, run.gamma, run.alpha),
    }
}

/// Mean and half-width; the half-width needs two samples.
fn mean_ci(xs: &[f64]) -> (f64, Option<f64>) {
    match xs.len() {
        0 => (f64::NAN, None),
        1 => (xs[0], None),
        _ => {
            let (m, h) = confidence_interval(xs).expect("two or more samples");
            (m, Some(h))
        }
    }
}

/// Summary rows and per-checkpoint means of one observable; `values[r][i]` is replicate
/// `r` at checkpoint `i`.
fn summarize(
    run: &RunSpec,
    points: &[f64],
    name: &'static str,
    values: &[&[f64]],
    rows: &mut Vec<SummaryRow>,
) -> Vec<f64> {
    let mut means = Vec::with_capacity(points.len());
    let mut column = Vec::with_capacity(values.len());
    for (i, &p) in points.iter().enumerate() {
        column.clear();
        column.extend(values.iter().map(|v| v[i]));
        let (mean, ci) = mean_ci(&column);
        means.push(mean);
        rows.push(SummaryRow {
            run: *run,
            n_or_t: p,
            observable: name,
            count: column.len(),
            mean,
            ci_halfwidth: ci,
        });
    }
    means
}

/// Separates successful replicates from aborted ones.
fn collect_results<T>(run: &RunSpec, results: Vec<sgdlab::Result<T>>, out: &mut Outcome) -> Vec<T> {
    out.attempted += results.len() as u64;
    let mut ok = Vec::with_capacity(results.len());
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                log::warn!("{}: replicate {rep} aborted: {e}", run_label(run));
                out.aborts.push(Abort {
                    run_id: run.run_id,
                    replicate: rep as u64,
                    error: e.to_string(),
                });
            }
        }
    }
    ok
}

fn push_raw(run: &RunSpec, traj: &Trajectory, f_star: f64, raw: &mut Vec<RawRow>) {
    for i in 0..traj.len() {
        raw.push(RawRow {
            run: *run,
            replicate: traj.replicate_id,
            n_or_t: traj.sample_points[i],
            f_gap: (traj.values[i] - f_star).max(0.0),
            dist2: traj.dist2_to_min[i],
            grad_sq: traj.grad_sq[i],
            suffix_avg: traj.suffix_avg.as_ref().map(|s| s[i] - f_star),
        });
    }
}

/// Summary rows for the standard observables of a set of trajectories sharing a plan.
fn summarize_trajectories(run: &RunSpec, trajs: &[Trajectory], f_star: f64, rows: &mut Vec<SummaryRow>) -> [Vec<f64>; 3] {
    let Some(first) = trajs.first() else {
        return [Vec::new(), Vec::new(), Vec::new()];
    };
    let points = first.sample_points.clone();
    let gaps: Vec<Vec<f64>> = trajs.iter().map(|t| t.gaps(f_star)).collect();
    let gap_refs: Vec<&[f64]> = gaps.iter().map(Vec::as_slice).collect();
    let f = summarize(run, &points, "f_gap", &gap_refs, rows);
    let d: Vec<&[f64]> = trajs.iter().map(|t| t.dist2_to_min.as_slice()).collect();
    let d = summarize(run, &points, "dist2", &d, rows);
    let g: Vec<&[f64]> = trajs.iter().map(|t| t.grad_sq.as_slice()).collect();
    let g = summarize(run, &points, "grad_sq", &g, rows);
    if trajs.iter().all(|t| t.suffix_avg.is_some()) {
        let s: Vec<Vec<f64>> = trajs
            .iter()
            .map(|t| t.suffix_avg.as_ref().expect("checked").iter().map(|v| v - f_star).collect())
            .collect();
        let s: Vec<&[f64]> = s.iter().map(Vec::as_slice).collect();
        summarize(run, &points, "suffix_avg", &s, rows);
    }
    [f, d, g]
}

/// The class whose rate applies to `obj`, most informative first.
pub fn rate_class(obj: &Objective) -> Option<FunctionClass> {
    let tags = obj.tags();
    let has = |p: fn(&ClassTag) -> bool| tags.iter().any(p);
    if has(|t| matches!(t, ClassTag::StronglyConvex { .. })) {
        return Some(FunctionClass::StronglyConvex);
    }
    if let Some(ClassTag::Kl { r, .. }) = tags.iter().find(|t| matches!(t, ClassTag::Kl { .. })) {
        return Some(FunctionClass::Kl { r: *r });
    }
    if has(|t| matches!(t, ClassTag::Convex)) {
        return Some(FunctionClass::Convex);
    }
    if has(|t| matches!(t, ClassTag::F3b { .. })) {
        return Some(FunctionClass::F3b);
    }
    None
}

fn observable_name(o: Observable) -> &'static str {
    match o {
        Observable::FGap => "f_gap",
        Observable::Dist2 => "dist2",
        Observable::GradSq => "grad_sq",
    }
}

/// `|x0|^2 prod_{k<n} (1 - lambda gamma (k+1)^{-alpha})^2`: noiseless SGD on the quadratic.
fn deterministic_quadratic_dist2(lambda: f64, sched: &StepSchedule, x0: &[f64], points: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut acc = norm_sq(x0);
    let mut k = 0u64;
    for &p in points {
        let n = p as u64;
        while k < n {
            let c = 1.0 - lambda * sched.step_size(k);
            acc *= c * c;
            k += 1;
        }
        out.push(acc);
    }
    out
}

fn run_rates(cfg: &ExperimentConfig) -> sgdlab::Result<Outcome> {
    let obj = cfg.build_objective()?;
    let x0 = cfg.x0();
    let n = cfg.iterations().expect("validated");
    let plan = SamplingPlan::log_spaced(n, cfg.checkpoints())?;
    let class = rate_class(&obj);
    let window = cfg.window_fraction();
    let tol = cfg.tolerance();
    let opts = SgdOptions {
        record_states: false,
        suffix_average: cfg.suffix_average(),
        radius: f64::INFINITY,
    };
    let mut out = Outcome::new(ExperimentKind::Rates, Details::Rates(Vec::new()));
    let mut rate_runs = Vec::new();
    out.report.push(format!(
        "objective class: {}",
        class.map(|c| format!("{c:?}")).unwrap_or_else(|| "none (no rate claimed)".into())
    ));
    out.report.push(format!(
        "fit window: last {:.0}% of {} checkpoints, tolerance {tol}",
        window * 100.0,
        plan.len()
    ));
    for run in run_specs(cfg) {
        let oracle = cfg.build_oracle(&obj, run.batch)?;
        let sched = StepSchedule::new(run.gamma, run.alpha)?;
        let results = map_replicates(cfg.threads(), cfg.replicates(), |rep| {
            let mut stream = derive_stream(cfg.seed, rep, StreamRole::Noise);
            run_sgd_with(&obj, &oracle, &sched, &x0, n, &plan, &mut stream, &opts)
        })?;
        let trajs = collect_results(&run, results, &mut out);
        for t in &trajs {
            push_raw(&run, t, obj.f_star(), &mut out.raw);
        }
        out.report.push(String::new());
        out.report.push(format!("{} ({} replicates)", run_label(&run), trajs.len()));
        if trajs.is_empty() {
            out.report.push("  all replicates aborted".into());
            continue;
        }
        let [mf, md, mg] = summarize_trajectories(&run, &trajs, obj.f_star(), &mut out.summary);
        let points = trajs[0].sample_points.clone();
        let noiseless = oracle.is_noiseless();
        let mut fits = Vec::new();
        for (observable, means) in [(Observable::FGap, &mf), (Observable::Dist2, &md), (Observable::GradSq, &mg)] {
            let expected = class.and_then(|class| {
                expected_rate(&RateSetting {
                    class,
                    alpha: run.alpha,
                    observable,
                })
                .ok()
            });
            let (fit, note) = if noiseless {
                (None, Some("super-polynomial (noiseless oracle): rate fit not applicable".to_string()))
            } else if means.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
                (None, Some("mean reaches zero or is not finite: rate fit not applicable".to_string()))
            } else {
                let pts: Vec<(f64, f64)> = points.iter().copied().zip(means.iter().copied()).collect();
                match fit_rate(&pts, window) {
                    Ok(f) => (Some(f), None),
                    Err(e) => (None, Some(format!("fit failed: {e}"))),
                }
            };
            out.report.push(fit_line(observable, fit.as_ref(), expected, note.as_deref(), tol));
            fits.push(ObservableFit {
                observable,
                fit,
                expected,
                note,
            });
        }
        if noiseless {
            if let ObjectiveKind::Quadratic { lambda } = obj.kind() {
                let exact = deterministic_quadratic_dist2(*lambda, &sched, &x0, &points);
                let dev = exact
                    .iter()
                    .zip(&md)
                    .map(|(e, m)| if *e == 0.0 { m.abs() } else { ((m - e) / e).abs() })
                    .fold(0.0, f64::max);
                out.report.push(format!(
                    "  deterministic decay check: max relative deviation of dist2 from prod (1 - lambda gamma_k)^2 |x0|^2 is {dev:.3e}"
                ));
            }
        }
        rate_runs.push(RateRun {
            run,
            checkpoints: points,
            mean_f_gap: mf,
            mean_dist2: md,
            mean_grad_sq: mg,
            fits,
            completed: trajs.len(),
        });
    }
    out.details = Details::Rates(rate_runs);
    Ok(out)
}

fn fit_line(observable: Observable, fit: Option<&RateEstimate>, expected: Option<RateExponent>, note: Option<&str>, tol: f64) -> String {
    let name = observable_name(observable);
    let theory = match expected {
        Some(RateExponent::Exponent(e)) => format!("-{e:.4}"),
        Some(RateExponent::NoGuarantee) => "no guarantee".into(),
        None => "n/a".into(),
    };
    match fit {
        None => format!("  {name}: {} (theory {theory})", note.unwrap_or("no fit")),
        Some(f) => {
            let verdict = match expected.and_then(|e| e.value()) {
                Some(e) => {
                    let decay = -f.slope;
                    if (decay - e).abs() <= tol {
                        "PASS"
                    } else if decay > e {
                        "PASS (faster than the bound)"
                    } else {
                        "FAIL"
                    }
                }
                None => "no verdict",
            };
            format!(
                "  {name}: slope {:.4} +/- {:.4} (points {}..{}, R^2 {:.4}) theory {theory} -> {verdict}",
                f.slope, f.ci_halfwidth, f.window.0, f.window.1, f.r_squared
            )
        }
    }
}

fn coupling_request(cfg: &ExperimentConfig) -> CouplingRequest {
    match cfg.coupling() {
        CouplingName::Auto => CouplingRequest::Auto,
        CouplingName::GaussianShared => CouplingRequest::Exactly(CouplingKind::GaussianShared),
        CouplingName::Comonotone1d => CouplingRequest::Exactly(CouplingKind::Comonotone1d),
        CouplingName::Independent => CouplingRequest::Exactly(CouplingKind::Independent),
    }
}

fn coupled_header() -> Vec<String> {
    [
        "run_id",
        "gamma",
        "alpha",
        "batch",
        "replicate",
        "n",
        "t",
        "sq_distance",
        "g_discrete",
        "g_continuous",
        "x_discrete",
        "x_continuous",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn join_coords(x: &[f64]) -> String {
    x.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_batch(b: Option<usize>) -> String {
    b.map(|m| m.to_string()).unwrap_or_default()
}

fn coupled_rows(run: &RunSpec, runs: &[CoupledRun], with_states: bool, rows: &mut Vec<Vec<String>>) {
    for cr in runs {
        let ga = cr.schedule.gamma_alpha().expect("coupled runs have alpha < 1");
        let sd = cr.discrete.states.as_ref().expect("coupled runs record states");
        let sc = cr.continuous.states.as_ref().expect("coupled runs record states");
        for (i, &n) in cr.checkpoints.iter().enumerate() {
            rows.push(vec![
                run.run_id.to_string(),
                fmt_f64(run.gamma),
                fmt_f64(run.alpha),
                fmt_batch(run.batch),
                cr.replicate_id.to_string(),
                n.to_string(),
                fmt_f64(n as f64 * ga),
                fmt_f64(cr.sq_distances[i]),
                fmt_f64(norm_sq(&sd[i])),
                fmt_f64(norm_sq(&sc[i])),
                if with_states { join_coords(&sd[i]) } else { String::new() },
                if with_states { join_coords(&sc[i]) } else { String::new() },
            ]);
        }
    }
}

/// Root mean square of the Euler-Maruyama bias probe over `paths` Brownian paths.
fn bias_probe_rms(
    cfg: &ExperimentConfig,
    obj: &Objective,
    oracle: &GradientOracle,
    sched: &StepSchedule,
    x0: &[f64],
    blocks: u64,
    paths: u64,
) -> sgdlab::Result<f64> {
    let ga = sched.gamma_alpha()?;
    let k = cfg.substeps();
    let horizon = blocks as f64 * ga;
    let problem = SdeProblem {
        objective: obj,
        diffusion: oracle,
        schedule: *sched,
        x0,
        horizon,
    };
    let probes = map_replicates(cfg.threads(), paths, |p| {
        let mut bstream = derive_stream(cfg.seed ^ PROBE_SALT, p, StreamRole::Brownian);
        let path = BrownianPath::generate(obj.dim(), horizon, ga / k as f64, &mut bstream)?;
        let mut rstream = derive_stream(cfg.seed ^ PROBE_SALT, p, StreamRole::Noise);
        em_bias_probe(&problem, k, &path, &mut rstream)
    })?;
    let probes: Vec<f64> = probes.into_iter().collect::<sgdlab::Result<_>>()?;
    Ok((probes.iter().map(|p| p * p).sum::<f64>() / probes.len() as f64).sqrt())
}

fn run_approx(cfg: &ExperimentConfig) -> sgdlab::Result<Outcome> {
    let obj = cfg.build_objective()?;
    let x0 = cfg.x0();
    let horizon = cfg.time_horizon().expect("validated");
    let request = coupling_request(cfg);
    let paths = cfg.bias_probe_paths();
    let mut out = Outcome::new(cfg.kind(), Details::CoupleDemo);
    let mut points = Vec::new();
    let mut coupled = Vec::new();
    out.report.push(format!(
        "horizon T = {horizon}, substeps K = {}, coupling request {:?}, weak functional g(x) = |x|^2",
        cfg.substeps(),
        cfg.coupling()
    ));
    for run in run_specs(cfg) {
        let oracle = cfg.build_oracle(&obj, run.batch)?;
        let sched = StepSchedule::new(run.gamma, run.alpha)?;
        let blocks = blocks_in_horizon(&sched, horizon)?;
        out.report.push(String::new());
        out.report.push(format!("{} ({} blocks)", run_label(&run), blocks));
        if blocks == 0 {
            out.report.push("  horizon shorter than one block: skipped".into());
            continue;
        }
        let config = CouplingConfig {
            horizon,
            substeps: cfg.substeps(),
            request,
            plan: Some(SamplingPlan::log_spaced(blocks, cfg.checkpoints())?),
        };
        let results = map_replicates(cfg.threads(), cfg.replicates(), |rep| {
            run_coupled(&obj, &oracle, &sched, &x0, &config, cfg.seed, rep)
        })?;
        let runs = collect_results(&run, results, &mut out);
        if runs.len() < 2 {
            out.report.push("  fewer than two replicates completed: no estimate".into());
            continue;
        }
        let discrete: Vec<Trajectory> = runs.iter().map(|r| r.discrete.clone()).collect();
        for t in &discrete {
            push_raw(&run, t, obj.f_star(), &mut out.raw);
        }
        summarize_trajectories(&run, &discrete, obj.f_star(), &mut out.summary);
        let cps: Vec<f64> = runs[0].checkpoints.iter().map(|&n| n as f64).collect();
        let sq: Vec<&[f64]> = runs.iter().map(|r| r.sq_distances.as_slice()).collect();
        summarize(&run, &cps, "sq_distance", &sq, &mut out.summary);
        let gd: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| {
                let sd = r.discrete.states.as_ref().expect("recorded");
                let sc = r.continuous.states.as_ref().expect("recorded");
                sc.iter().zip(sd).map(|(c, d)| norm_sq(c) - norm_sq(d)).collect()
            })
            .collect();
        let gd: Vec<&[f64]> = gd.iter().map(Vec::as_slice).collect();
        summarize(&run, &cps, "g_difference", &gd, &mut out.summary);
        coupled_rows(&run, &runs, false, &mut coupled);

        let strong = strong_error(&runs, blocks)?;
        let weak = weak_error_paired(&runs, blocks, norm_sq)?;
        let bias_probe = if paths >= 2 {
            Some(bias_probe_rms(cfg, &obj, &oracle, &sched, &x0, blocks, paths)?)
        } else {
            None
        };
        out.report.push(format!("  coupling: {}", runs[0].kind.name()));
        out.report.push(format!(
            "  strong error {:.6e} +/- {:.2e}, weak error {:.6e} +/- {:.2e}",
            strong.value, strong.halfwidth, weak.value, weak.halfwidth
        ));
        if let Some(b) = bias_probe {
            out.report.push(format!("  Euler-Maruyama bias probe (K vs 2K, rms over {paths} paths): {b:.3e}"));
        }
        points.push(ApproxPoint {
            run,
            blocks,
            kind: runs[0].kind,
            strong,
            weak,
            bias_probe,
            completed: runs.len(),
        });
    }

    let mut fits = Vec::new();
    let mut groups: Vec<(f64, Option<usize>)> = Vec::new();
    for p in &points {
        if !groups.contains(&(p.run.alpha, p.run.batch)) {
            groups.push((p.run.alpha, p.run.batch));
        }
    }
    let tol = cfg.tolerance();
    out.report.push(String::new());
    for (alpha, batch) in groups {
        let group: Vec<&ApproxPoint> = points.iter().filter(|p| p.run.alpha == alpha && p.run.batch == batch).collect();
        let fit_of = |f: &dyn Fn(&ApproxPoint) -> f64| -> Option<RateEstimate> {
            let pts: Vec<(f64, f64)> = group.iter().map(|p| (p.run.gamma, f(p))).filter(|(_, v)| *v > 0.0).collect();
            fit_power_law(&pts).ok()
        };
        let strong = fit_of(&|p| p.strong.value);
        let weak = fit_of(&|p| p.weak.value);
        // zero coupling gap leaves the gamma term; otherwise gamma^delta dominates
        let exact_gap = group.first().is_some_and(|p| p.kind == CouplingKind::GaussianShared);
        let expected_strong = if exact_gap { 1.0 } else { strong_order(alpha) };
        let label = match batch {
            Some(m) => format!("alpha={alpha} M={m}"),
            None => format!("alpha={alpha}"),
        };
        let verdict = |fit: &Option<RateEstimate>, e: f64| match fit {
            Some(f) if (f.slope - e).abs() <= tol => format!("slope {:.4} +/- {:.4}, theory {e:.4} -> PASS", f.slope, f.ci_halfwidth),
            Some(f) => format!("slope {:.4} +/- {:.4}, theory {e:.4} -> FAIL", f.slope, f.ci_halfwidth),
            None => "needs three or more step sizes with positive errors: no fit".into(),
        };
        if cfg.kind() == ExperimentKind::StrongApprox {
            out.report.push(format!("strong error vs gamma ({label}): {}", verdict(&strong, expected_strong)));
            out.report.push(format!("weak error vs gamma ({label}): {}", verdict(&weak, 1.0)));
        } else {
            out.report.push(format!("weak error vs gamma ({label}): {}", verdict(&weak, 1.0)));
            out.report.push(format!("strong error vs gamma ({label}): {}", verdict(&strong, expected_strong)));
        }
        let probed: Vec<&&ApproxPoint> = group.iter().filter(|p| p.bias_probe.is_some()).collect();
        if !probed.is_empty() {
            // each probe is compared with the error it could contaminate, i.e. at the same gamma
            let worst = probed
                .iter()
                .map(|p| p.bias_probe.expect("filtered") / p.strong.value)
                .fold(0.0, f64::max);
            let min_err = group.iter().map(|p| p.strong.value).fold(f64::INFINITY, f64::min);
            let max_probe = probed.iter().filter_map(|p| p.bias_probe).fold(0.0, f64::max);
            out.report.push(format!(
                "discretization check ({label}): largest bias probe / strong error at the same gamma {worst:.3} -> {}",
                if worst <= 0.1 { "PASS" } else { "FAIL: increase sde.substeps" }
            ));
            out.report.push(format!(
                "  (largest probe over all gamma {max_probe:.3e}, smallest strong error {min_err:.3e})"
            ));
        }
        fits.push(ApproxFit {
            alpha,
            batch,
            strong,
            weak,
            expected_strong,
        });
    }
    let mut table_rows = Vec::new();
    for p in &points {
        table_rows.push(vec![
            p.run.run_id.to_string(),
            fmt_f64(p.run.gamma),
            fmt_f64(p.run.alpha),
            fmt_batch(p.run.batch),
            p.blocks.to_string(),
            p.kind.name().to_string(),
            fmt_f64(p.strong.value),
            fmt_f64(p.strong.halfwidth),
            fmt_f64(p.weak.value),
            fmt_f64(p.weak.halfwidth),
            fmt_opt(p.bias_probe),
        ]);
    }
    out.tables.push(Table {
        file_name: "errors.csv",
        header: [
            "run_id",
            "gamma",
            "alpha",
            "batch",
            "blocks",
            "coupling",
            "strong_error",
            "strong_ci",
            "weak_error",
            "weak_ci",
            "bias_probe",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        rows: table_rows,
    });
    out.tables.push(Table {
        file_name: "coupled.csv",
        header: coupled_header(),
        rows: coupled,
    });
    out.details = Details::Approx { points, fits };
    Ok(out)
}

fn run_couple_demo(cfg: &ExperimentConfig) -> sgdlab::Result<Outcome> {
    let obj = cfg.build_objective()?;
    let x0 = cfg.x0();
    let horizon = cfg.time_horizon().expect("validated");
    let mut out = Outcome::new(ExperimentKind::CoupleDemo, Details::CoupleDemo);
    let mut rows = Vec::new();
    for run in run_specs(cfg) {
        let oracle = cfg.build_oracle(&obj, run.batch)?;
        let sched = StepSchedule::new(run.gamma, run.alpha)?;
        let blocks = blocks_in_horizon(&sched, horizon)?;
        out.report.push(format!("{} ({} blocks)", run_label(&run), blocks));
        if blocks == 0 {
            out.report.push("  horizon shorter than one block: skipped".into());
            continue;
        }
        let plan = if blocks <= 10_000 {
            SamplingPlan::every(blocks)
        } else {
            SamplingPlan::log_spaced(blocks, cfg.checkpoints())?
        };
        let config = CouplingConfig {
            horizon,
            substeps: cfg.substeps(),
            request: coupling_request(cfg),
            plan: Some(plan),
        };
        let results = map_replicates(cfg.threads(), cfg.replicates(), |rep| {
            run_coupled(&obj, &oracle, &sched, &x0, &config, cfg.seed, rep)
        })?;
        let runs = collect_results(&run, results, &mut out);
        for r in &runs {
            push_raw(&run, &r.discrete, obj.f_star(), &mut out.raw);
            let last = r.sq_distances.last().copied().unwrap_or(f64::NAN);
            out.report.push(format!(
                "  replicate {} ({}): |X_T - X_N|^2 = {last:.4e}",
                r.replicate_id,
                r.kind.name()
            ));
        }
        coupled_rows(&run, &runs, true, &mut rows);
    }
    out.tables.push(Table {
        file_name: "coupled.csv",
        header: coupled_header(),
        rows,
    });
    Ok(out)
}

fn run_batch_eps(cfg: &ExperimentConfig) -> sgdlab::Result<Outcome> {
    let obj = cfg.build_objective()?;
    let x = cfg.x0();
    let samples = cfg.eps_samples();
    let mut out = Outcome::new(ExperimentKind::BatchEps, Details::CoupleDemo);
    let mut points = Vec::new();
    let mut rows = Vec::new();
    out.report.push(format!("coupling gap at x = {x:?}, {samples} samples per estimate"));
    let batches = cfg.oracle.as_ref().expect("validated").batch_sizes();
    for (run_id, &batch) in batches.iter().enumerate() {
        let run = RunSpec {
            run_id,
            gamma: f64::NAN,
            alpha: f64::NAN,
            batch,
        };
        let oracle = cfg.build_oracle(&obj, batch)?;
        let results = map_replicates(cfg.threads(), cfg.replicates(), |rep| {
            let mut stream = derive_stream(cfg.seed, rep, StreamRole::Noise);
            epsilon_hat(&oracle, &x, samples, &mut stream)
        })?;
        let eps = collect_results(&run, results, &mut out);
        for (rep, e) in eps.iter().enumerate() {
            rows.push(vec![run_id.to_string(), fmt_batch(batch), rep.to_string(), samples.to_string(), fmt_f64(*e)]);
        }
        let (mean, ci) = mean_ci(&eps);
        out.summary.push(SummaryRow {
            run,
            n_or_t: batch.unwrap_or(1) as f64,
            observable: "epsilon_hat",
            count: eps.len(),
            mean,
            ci_halfwidth: ci,
        });
        out.report.push(format!(
            "M = {}: epsilon_hat {mean:.5e}{}",
            batch.unwrap_or(1),
            ci.map(|c| format!(" +/- {c:.2e}")).unwrap_or_default()
        ));
        points.push(EpsPoint {
            run,
            mean,
            ci_halfwidth: ci,
        });
    }
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.run.batch.unwrap_or(1) as f64, p.mean))
        .filter(|(_, v)| *v > 0.0)
        .collect();
    let fit = fit_power_law(&pts).ok();
    let tol = cfg.tolerance();
    out.report.push(String::new());
    out.report.push(match &fit {
        Some(f) => format!(
            "slope vs M: {:.4} +/- {:.4}, theory -1 -> {}",
            f.slope,
            f.ci_halfwidth,
            if (f.slope + 1.0).abs() <= tol { "PASS" } else { "FAIL" }
        ),
        None => "slope vs M: needs three or more batch sizes: no fit".into(),
    });
    out.tables.push(Table {
        file_name: "eps.csv",
        header: ["run_id", "batch", "replicate", "samples", "epsilon_hat"].iter().map(|s| s.to_string()).collect(),
        rows,
    });
    out.details = Details::BatchEps { points, fit };
    Ok(out)
}

fn run_prop24(cfg: &ExperimentConfig) -> sgdlab::Result<Outcome> {
    let obj = cfg.build_objective()?;
    let x0 = cfg.x0();
    let d = obj.dim() as f64;
    let horizon = cfg.time_horizon().expect("validated");
    let opts = SgdOptions {
        record_states: false,
        ..SgdOptions::default()
    };
    let mut out = Outcome::new(ExperimentKind::Prop24, Details::CoupleDemo);
    let mut prop_runs = Vec::new();
    out.report.push(format!(
        "f = 0 from x0 = 0: the gradient flow stays at 0, so E|X_n - X_(n gamma_alpha)|^2 = E|X_n|^2; horizon T = {horizon}"
    ));
    for run in run_specs(cfg) {
        let m = run.batch.expect("validated: batch oracle");
        let oracle = cfg.build_oracle(&obj, run.batch)?;
        let sched = StepSchedule::new(run.gamma, run.alpha)?;
        let n = blocks_in_horizon(&sched, horizon)?;
        out.report.push(String::new());
        out.report.push(format!("{} (n = {n})", run_label(&run)));
        if n == 0 {
            out.report.push("  horizon shorter than one step: skipped".into());
            continue;
        }
        let plan = SamplingPlan::log_spaced(n, cfg.checkpoints())?;
        let results = map_replicates(cfg.threads(), cfg.replicates(), |rep| {
            let mut stream = derive_stream(cfg.seed, rep, StreamRole::Noise);
            run_sgd_with(&obj, &oracle, &sched, &x0, n, &plan, &mut stream, &opts)
        })?;
        let trajs = collect_results(&run, results, &mut out);
        if trajs.len() < 2 {
            out.report.push("  fewer than two replicates completed: no estimate".into());
            continue;
        }
        for t in &trajs {
            push_raw(&run, t, obj.f_star(), &mut out.raw);
        }
        let mut rows = Vec::new();
        summarize_trajectories(&run, &trajs, obj.f_star(), &mut rows);
        let mut points = Vec::new();
        for row in rows.iter().filter(|r| r.observable == "dist2") {
            let k = row.n_or_t as u64;
            let ci = row.ci_halfwidth.unwrap_or(0.0);
            points.push(Prop24Point {
                run,
                n: k,
                mean: row.mean,
                standard_error: ci / 1.96,
                ci_halfwidth: ci,
                exact: d * prop24_exact(m, run.gamma, run.alpha, k)?,
            });
        }
        out.summary.append(&mut rows);
        let worst = points
            .iter()
            .map(|p| (p.mean - p.exact).abs() / p.ci_halfwidth.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        let last = points.last().expect("plan is nonempty");
        let lower_bound = prop24_lower_bound(m, run.gamma, run.alpha, horizon)?;
        out.report.push(format!(
            "  E|X_n|^2 at n = {}: {:.6e} +/- {:.2e}, exact {:.6e}",
            last.n, last.mean, last.ci_halfwidth, last.exact
        ));
        out.report.push(format!(
            "  largest deviation over {} checkpoints: {worst:.2} CI half-widths -> {}",
            points.len(),
            if worst <= 3.0 { "PASS" } else { "FAIL" }
        ));
        out.report.push(format!(
            "  sqrt(E|X_n|^2) = {:.6e} vs gradient-flow lower bound {lower_bound:.6e} -> {}",
            last.mean.sqrt(),
            if last.mean.sqrt() >= lower_bound { "PASS" } else { "FAIL" }
        ));
        prop_runs.push(Prop24Run {
            run,
            points,
            lower_bound,
        });
    }
    out.details = Details::Prop24(prop_runs);
    Ok(out)
}

fn run_certify(cfg: &ExperimentConfig) -> sgdlab::Result<Outcome> {
    let obj = cfg.build_objective()?;
    let d = obj.dim();
    let (lo, hi, res) = match &cfg.certify {
        Some(c) => (c.lo, c.hi, c.resolution),
        None if d == 1 => (-5.0, 5.0, 0.01),
        None => (-5.0, 5.0, 21.0),
    };
    let grid = if d == 1 {
        Grid::Line { lo, hi, step: res }
    } else {
        Grid::Cube {
            dim: d,
            lo,
            hi,
            points_per_axis: res as usize,
        }
    };
    let mut out = Outcome::new(ExperimentKind::Certify, Details::CoupleDemo);
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    out.report.push(format!("grid {grid:?} around x* = {:?}", obj.x_star()));
    for tag in obj.tags() {
        let r = certify_condition(&obj, *tag, &grid, DEFAULT_EXCLUSION_RADIUS);
        out.report.push(format!(
            "{}: worst ratio {:.6e} at {:?}, required {:.6e} over {} points -> {}",
            tag.name(),
            r.worst_ratio,
            r.worst_point,
            r.required,
            r.points_checked,
            if r.passed { "PASS" } else { "FAIL" }
        ));
        rows.push(vec![
            tag.name().to_string(),
            fmt_f64(r.worst_ratio),
            fmt_f64(r.required),
            r.passed.to_string(),
            r.points_checked.to_string(),
        ]);
        reports.push(r);
    }
    if obj.tags().is_empty() {
        out.report.push("objective carries no class tags".into());
    }
    out.tables.push(Table {
        file_name: "certify.csv",
        header: ["condition", "worst_ratio", "required", "passed", "points_checked"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    });
    out.details = Details::Certify(reports);
    Ok(out)
}

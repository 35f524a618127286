use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use sgdlab::analysis::prop24_exact;
use sgdlab_cli::experiment::Details;
use sgdlab_cli::output::write_raw;
use sgdlab_cli::{run_experiment, ExperimentConfig};

const SMALL_RATES: &str = r#"experiment = "rates"
seed = 11
replicates = 40

[objective]
kind = "quadratic"
dim = 2
lambda = 1.0

[oracle]
kind = "state_dependent"
scale = 1.0
amplitude = 0.5

[schedule]
gamma = [0.5]
alpha = [0.4, 0.8]

[horizon]
n = 3000
checkpoints = 20

[analysis]
suffix_average = true
"#;

fn sgdlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sgdlab"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn raw_bytes(text: &str, threads: usize) -> Vec<u8> {
    let mut cfg = ExperimentConfig::parse(text, None).unwrap();
    cfg.threads = Some(threads);
    let out = run_experiment(&cfg).unwrap();
    let mut buf = Vec::new();
    write_raw(&out.raw, &mut buf).unwrap();
    buf
}

#[test]
fn rerun_gives_byte_identical_raw_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rates.toml", SMALL_RATES);
    for run in ["a", "b"] {
        let out = sgdlab()
            .args(["rates", "--config"])
            .arg(&cfg)
            .arg("--out-dir")
            .arg(tmp.path().join(run))
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let a = std::fs::read(tmp.path().join("a/raw.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("b/raw.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(!a.contains(&b'\r'));
}

#[test]
fn raw_csv_is_independent_of_thread_count() {
    let one = raw_bytes(SMALL_RATES, 1);
    for threads in [4, 8] {
        assert_eq!(raw_bytes(SMALL_RATES, threads), one, "threads = {threads}");
    }
}

#[test]
fn seed_override_changes_the_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rates.toml", SMALL_RATES);
    let run = |seed: &str, dir: &str| {
        let out = sgdlab()
            .args(["rates", "--seed", seed, "--threads", "2", "--config"])
            .arg(&cfg)
            .arg("--out-dir")
            .arg(tmp.path().join(dir))
            .output()
            .unwrap();
        assert!(out.status.success());
        std::fs::read(tmp.path().join(dir).join("raw.csv")).unwrap()
    };
    assert_ne!(run("1", "s1"), run("2", "s2"));
    assert_eq!(run("1", "s1b"), run("1", "s1"));
}

/// Means in summary.csv agree with means recomputed from raw.csv.
#[test]
fn summary_means_match_raw_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rates.toml", SMALL_RATES);
    let out_dir = tmp.path().join("out");
    let out = sgdlab()
        .args(["rates", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());

    let mut sums: BTreeMap<(String, String, String), (f64, usize)> = BTreeMap::new();
    let mut raw = csv::Reader::from_path(out_dir.join("raw.csv")).unwrap();
    let header = raw.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (run, n) = (col("run_id"), col("n_or_t"));
    for rec in raw.records() {
        let rec = rec.unwrap();
        for obs in ["f_gap", "dist2", "grad_sq", "suffix_avg"] {
            let v: f64 = rec[col(obs)].parse().unwrap();
            let e = sums.entry((rec[run].to_string(), rec[n].to_string(), obs.to_string())).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let mut summary = csv::Reader::from_path(out_dir.join("summary.csv")).unwrap();
    let mut checked = 0;
    for rec in summary.records() {
        let rec = rec.unwrap();
        let key = (rec[0].to_string(), rec[4].to_string(), rec[5].to_string());
        let (s, c) = sums[&key];
        let mean: f64 = rec[7].parse().unwrap();
        let count: usize = rec[6].parse().unwrap();
        assert_eq!(count, c);
        let raw_mean = s / c as f64;
        assert!((mean - raw_mean).abs() <= 1e-12 * raw_mean.abs().max(1.0), "{key:?}: {mean} vs {raw_mean}");
        checked += 1;
    }
    assert_eq!(checked, sums.len());
}

#[test]
fn invalid_configs_exit_with_code_one_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let strong = SMALL_RATES
        .replace("experiment = \"rates\"\n", "")
        .replace("alpha = [0.4, 0.8]", "alpha = [0.4, 1.0]")
        .replace("n = 3000", "t = 1.0");
    let cfg = write_config(tmp.path(), "strong.toml", &strong);
    let out = sgdlab().args(["strong-approx", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("schedule.alpha[1]") && err.contains("continuous-time"), "{err}");

    let no_seed = write_config(tmp.path(), "noseed.toml", &SMALL_RATES.replace("seed = 11\n", ""));
    let out = sgdlab().args(["validate", "--config"]).arg(&no_seed).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let typo = write_config(tmp.path(), "typo.toml", &SMALL_RATES.replace("[horizon]", "[horizn]"));
    let out = sgdlab().args(["rates", "--config"]).arg(&typo).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("horizn") && err.contains("line"), "{err}");
}

#[test]
fn validate_prints_an_equivalent_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "rates.toml", SMALL_RATES);
    let out = sgdlab().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let echoed: toml::Table = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let original: toml::Table = toml::from_str(SMALL_RATES).unwrap();
    assert_eq!(echoed, original);
}

#[test]
fn all_replicates_diverging_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    // |1 - gamma lambda| = 9 at every step
    let text = SMALL_RATES
        .replace("lambda = 1.0", "lambda = 10.0")
        .replace("gamma = [0.5]", "gamma = [1.0]")
        .replace("alpha = [0.4, 0.8]", "alpha = [0.0]");
    let cfg = write_config(tmp.path(), "diverge.toml", &text);
    let out_dir = tmp.path().join("out");
    let out = sgdlab().args(["rates", "--config"]).arg(&cfg).arg("--out-dir").arg(&out_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("40 attempted, 40 aborted"), "{report}");
    assert!(report.contains("divergent"), "{report}");
}

#[test]
fn noiseless_rates_are_flagged_super_polynomial() {
    let text = SMALL_RATES
        .replace("kind = \"state_dependent\"\nscale = 1.0\namplitude = 0.5", "kind = \"gaussian\"\nsigma = 0.0")
        .replace("alpha = [0.4, 0.8]", "alpha = [0.3, 0.5, 0.7]")
        .replace("lambda = 1.0", "lambda = 0.1")
        .replace("n = 3000", "n = 200")
        .replace("replicates = 40", "replicates = 2");
    let cfg = ExperimentConfig::parse(&text, None).unwrap();
    let out = run_experiment(&cfg).unwrap();
    let report = out.report.join("\n");
    assert_eq!(report.matches("super-polynomial").count(), 9, "{report}");
    let Details::Rates(runs) = &out.details else { panic!() };
    for r in runs {
        assert!(r.fits.iter().all(|f| f.fit.is_none()));
    }
    for line in report.lines().filter(|l| l.contains("deterministic decay check")) {
        let dev: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
        assert!(dev < 1e-12, "{line}");
    }
}

/// Mean of |X_n|^2 matches the exact partial sum at every checkpoint.
#[test]
fn prop24_summary_matches_exact_law() {
    let text = r#"experiment = "prop24"
seed = 3
replicates = 4000

[objective]
kind = "linear_probe"
dim = 2

[oracle]
kind = "batch"
source = "probe"
m = [1, 3]

[schedule]
gamma = [0.2]
alpha = [0.1]

[horizon]
t = 3.0
"#;
    let cfg = ExperimentConfig::parse(text, None).unwrap();
    let out = run_experiment(&cfg).unwrap();
    let Details::Prop24(runs) = &out.details else { panic!() };
    assert_eq!(runs.len(), 2);
    for run in runs {
        let m = run.run.batch.unwrap();
        for p in &run.points {
            let exact = 2.0 * prop24_exact(m, 0.2, 0.1, p.n).unwrap();
            assert_eq!(p.exact, exact);
            assert!((p.mean - exact).abs() <= 3.0 * p.ci_halfwidth, "M={m} n={}: {} vs {exact}", p.n, p.mean);
        }
    }
}

#[test]
fn every_experiment_writes_its_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (
            "strong-approx",
            r#"seed = 5
replicates = 20
[objective]
kind = "pl_sine"
[oracle]
kind = "heavy"
scale = 0.5
law = "laplace"
[schedule]
gamma = [0.2, 0.1, 0.05]
alpha = [0.3]
[horizon]
t = 1.0
[sde]
substeps = 4
bias_probe_paths = 4
"#,
            vec!["raw.csv", "summary.csv", "report.txt", "errors.csv", "coupled.csv", "config.toml"],
        ),
        (
            "batch-eps",
            r#"seed = 5
replicates = 2
[objective]
kind = "linear_probe"
dim = 1
[oracle]
kind = "batch"
source = "probe"
law = "rademacher"
m = [1, 2, 4]
[analysis]
samples = 2000
"#,
            vec!["eps.csv", "summary.csv", "report.txt"],
        ),
        (
            "couple-demo",
            r#"seed = 5
replicates = 2
[objective]
kind = "least_squares"
dim = 2
n_data = 30
[oracle]
kind = "batch"
source = "dataset"
m = [4]
[schedule]
gamma = [0.1]
alpha = [0.5]
[horizon]
t = 0.5
[sde]
coupling = "independent"
"#,
            vec!["coupled.csv", "raw.csv", "report.txt"],
        ),
        (
            "certify",
            r#"seed = 5
[objective]
kind = "phi_p"
p = 3
"#,
            vec!["certify.csv", "report.txt"],
        ),
    ];
    for (cmd, text, files) in cases {
        let cfg = write_config(tmp.path(), &format!("{cmd}.toml"), text);
        let dir = tmp.path().join(cmd);
        let out = sgdlab().arg(cmd).arg("--config").arg(&cfg).arg("--out-dir").arg(&dir).output().unwrap();
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        for f in files {
            let body = std::fs::read_to_string(dir.join(f)).unwrap_or_else(|_| panic!("{cmd}: missing {f}"));
            assert!(body.lines().count() >= 2, "{cmd}: {f} is empty");
        }
    }
    let certify = std::fs::read_to_string(tmp.path().join("certify/report.txt")).unwrap();
    assert!(certify.contains("convex") && !certify.contains("FAIL"), "{certify}");
}

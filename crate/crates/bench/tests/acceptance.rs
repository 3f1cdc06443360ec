//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (uncaptured) and then asserts the same verdict.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use cmeta::conformal::{quantile_rank, quantile_value};
use cmeta::dgp::{generate_synthetic, regularized_incomplete_beta, Setup, SynthConfig};
use cmeta::metalearner::Learner;
use cmeta::regress::{self, GbmConfig, Loss};
use cmeta::stochord::weighted_stop_loss_gap;
use cmeta_bench::config::{
    DataSection, ExperimentConfig, ExperimentSection, GbmSection, Method, ScoreChoice, SetupChoice, SplitSection,
    SweepSection,
};
use cmeta_bench::experiment::{run_experiment, RunResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 0.1;
const REPS: usize = 100;

fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn verdict(criterion: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} criterion {criterion}: {detail}");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn synthetic(
    setup: SetupChoice,
    n: usize,
    reps: usize,
    seed: u64,
    methods: &[Method],
    score: ScoreChoice,
) -> ExperimentConfig {
    ExperimentConfig {
        experiment: ExperimentSection {
            master_seed: seed,
            replications: reps,
            alpha: ALPHA,
            methods: methods.to_vec(),
            score,
        },
        data: DataSection::Synthetic {
            setup: Some(setup),
            gamma: None,
            n,
            d: 10,
        },
        splits: SplitSection::default(),
        gbm: GbmSection::default(),
        sweep: SweepSection::default(),
    }
}

fn run(cfg: ExperimentConfig) -> RunResult {
    let start = Instant::now();
    let out = run_experiment(cfg, jobs()).expect("experiment runs");
    let _ = writeln!(
        std::io::stderr(),
        "  ({} reps in {:.1}s)",
        out.replications.len(),
        start.elapsed().as_secs_f64()
    );
    out
}

fn setup_a() -> &'static RunResult {
    static CELL: OnceLock<RunResult> = OnceLock::new();
    CELL.get_or_init(|| {
        run(synthetic(
            SetupChoice::A,
            2000,
            REPS,
            101,
            &Method::ALL,
            ScoreChoice::Abs,
        ))
    })
}

fn setup_b() -> &'static RunResult {
    static CELL: OnceLock<RunResult> = OnceLock::new();
    CELL.get_or_init(|| {
        run(synthetic(
            SetupChoice::B,
            2000,
            REPS,
            202,
            &Method::ALL,
            ScoreChoice::Abs,
        ))
    })
}

fn setup_b_cqr() -> &'static RunResult {
    static CELL: OnceLock<RunResult> = OnceLock::new();
    let methods = [Method::CmDr, Method::CmIpw];
    CELL.get_or_init(|| run(synthetic(SetupChoice::B, 2000, REPS, 303, &methods, ScoreChoice::Cqr)))
}

fn coverage(result: &RunResult, m: Method) -> f64 {
    let s = result.summary();
    s.iter().find(|s| s.method == m).expect("method summarised").coverage
}

#[test]
fn criterion_1_split_conformal_exactness() {
    let start = Instant::now();
    let cfg = synthetic(SetupChoice::B, 440, 500, 11, &[Method::Oracle], ScoreChoice::Abs);
    let fractions = cfg.splits.fractions();
    let n_calib = cmeta::dgp::split(440, fractions, 0).unwrap().calib.len();
    let result = run(cfg);
    let elapsed = start.elapsed().as_secs_f64();
    let cov = coverage(&result, Method::Oracle);
    let failures = result.summary()[0].failures;
    let pass = n_calib == 99 && failures == 0 && (0.88..=0.93).contains(&cov) && elapsed < 60.0;
    verdict(
        1,
        pass,
        &format!("oracle coverage {cov:.4} over 500 reps (n_c = {n_calib}, target [0.88, 0.93]) in {elapsed:.1}s"),
    );
}

#[test]
fn criterion_2_coverage_pattern() {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, result) in [("A", setup_a()), ("B", setup_b())] {
        let c = |m| coverage(result, m);
        let (dr, ipw, x) = (c(Method::CmDr), c(Method::CmIpw), c(Method::CmX));
        let (naive, exact) = (c(Method::WcpNaive), c(Method::WcpExact));
        ok &= dr >= 0.88 && ipw >= 0.88 && x < dr && x < ipw && naive >= 0.88 && exact >= 0.88;
        detail.push(format!(
            "setup {name}: DR {dr:.3} IPW {ipw:.3} X {x:.3} naive {naive:.3} exact {exact:.3}"
        ));
    }
    verdict(2, ok, &detail.join("; "));
}

#[test]
fn criterion_3_averaged_ecdf_dominance() {
    let result = setup_b();
    let ecdf = |l| result.averaged_ecdf(l).unwrap().expect("scores recorded");
    let dr = ecdf(Learner::Dr).fraction_pseudo_below();
    let ipw = ecdf(Learner::Ipw).fraction_pseudo_below();
    let x = ecdf(Learner::X).fraction_pseudo_above();
    let pass = dr >= 0.95 && ipw >= 0.95 && x >= 0.95;
    verdict(
        3,
        pass,
        &format!("pseudo ECDF at or below oracle: DR {dr:.3}, IPW {ipw:.3}; X at or above: {x:.3}"),
    );
}

#[test]
fn criterion_4_convex_order_audit() {
    let mut ok = true;
    let mut detail = Vec::new();
    for (kind, result) in [("abs", setup_b()), ("cqr", setup_b_cqr())] {
        for learner in [Learner::Dr, Learner::Ipw] {
            let (held, total) = result
                .replications
                .iter()
                .flat_map(|r| r.scores.iter().filter(|s| s.learner == learner))
                .fold((0, 0), |(h, t), s| (h + usize::from(s.report.mcx_fg.holds), t + 1));
            ok &= total == REPS && held == total;
            detail.push(format!("{learner}/{kind} {held}/{total}"));
        }
    }
    verdict(4, ok, &format!("MCX holds in {}", detail.join(", ")));
}

#[test]
fn criterion_5_mixture_stop_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let k = rng.random_range(1..=6);
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let pi = rng.random_range(0.01..0.99);
        let mut mixture = Vec::new();
        let mut convex = Vec::new();
        for p in raw.iter().map(|r| r / total) {
            let (x, y) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            mixture.push((f64::abs(x), pi * p));
            mixture.push((f64::abs(y), (1.0 - pi) * p));
            convex.push((f64::abs(pi * x + (1.0 - pi) * y), p));
        }
        worst = worst.min(weighted_stop_loss_gap(&mixture, &convex));
    }
    verdict(
        5,
        worst >= -1e-10,
        &format!("minimum stop-loss gap over 1000 instances {worst:.3e}"),
    );
}

#[test]
fn criterion_6_efficiency_ordering() {
    let result = setup_b();
    let frac = |a: Method, b: Method, cmp: fn(f64, f64) -> bool| {
        let hits = result
            .replications
            .iter()
            .filter(|r| cmp(r.outcome(a).unwrap().avg_len, r.outcome(b).unwrap().avg_len))
            .count();
        hits as f64 / result.replications.len() as f64
    };
    let dr_ipw = frac(Method::CmDr, Method::CmIpw, |a, b| a < b);
    let exact = frac(Method::WcpExact, Method::WcpInexact, |a, b| a >= b);
    let pass = dr_ipw >= 0.9 && exact >= 0.9;
    verdict(
        6,
        pass,
        &format!(
            "DR narrower than IPW in {dr_ipw:.2} of reps; exact at least inexact width in {exact:.2} (both need 0.90)"
        ),
    );
}

/// `I_x(2, 4) = P(Bin(5, x) >= 2)` via the complement of the first two terms.
fn beta_2_4_oracle(x: f64) -> f64 {
    let q = 1.0 - x;
    1.0 - q.powi(5) - 5.0 * x * q.powi(4)
}

#[test]
fn criterion_7_numerical_primitives() {
    let mut beta_err: f64 = 0.0;
    for k in 0..1000 {
        let x = k as f64 / 999.0;
        let got = regularized_incomplete_beta(x, 2, 4).unwrap();
        beta_err = beta_err.max((got - beta_2_4_oracle(x)).abs());
    }

    let mut rank_mismatch = 0usize;
    for n in 1..=200usize {
        let scores: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        for a in 1..1000u64 {
            let need = (n as u64 + 1) * (1000 - a);
            let k = need.div_ceil(1000).max(1) as usize;
            let expected = (k <= n).then_some(k);
            let alpha = a as f64 / 1000.0;
            let value = quantile_value(&scores, alpha).unwrap();
            let expected_value = expected.map_or(f64::INFINITY, |k| k as f64);
            if quantile_rank(n, alpha).unwrap() != expected || value != expected_value {
                rank_mismatch += 1;
            }
        }
    }

    let ds = generate_synthetic(&SynthConfig::new(Setup::B, 5000, 10, 7)).unwrap();
    let mut worst_pinball: f64 = 0.0;
    for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let cfg = GbmConfig::default().with_loss(Loss::Pinball(q));
        let model = regress::fit(ds.x(), ds.y(), &cfg).unwrap();
        let pred = model.predict(ds.x()).unwrap();
        let below = ds.y().iter().zip(&pred).filter(|(y, p)| y <= p).count() as f64 / 5000.0;
        worst_pinball = worst_pinball.max((below - q).abs());
    }

    let pass = beta_err <= 1e-12 && rank_mismatch == 0 && worst_pinball <= 0.05;
    verdict(
        7,
        pass,
        &format!(
            "I_x(2,4) max error {beta_err:.2e}; {rank_mismatch} quantile index mismatches; pinball coverage max deviation {worst_pinball:.4}"
        ),
    );
}

fn run_cli(config: &Path, out: &Path, jobs: usize) {
    let status = Command::new(env!("CARGO_BIN_EXE_cmeta"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--jobs", &jobs.to_string(), "--seed", "8"])
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_8_determinism_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "[experiment]\nreplications = 6\nalpha = 0.1\n\n[data]\nsource = \"synthetic\"\nsetup = \"B\"\nn = 600\n",
    )
    .unwrap();
    let (one, many) = (dir.path().join("jobs1"), dir.path().join("jobs4"));
    run_cli(&config, &one, 1);
    run_cli(&config, &many, 4);
    let (a, b) = (csv_files(&one), csv_files(&many));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    let pass = !a.is_empty() && a == b;
    verdict(
        8,
        pass,
        &format!(
            "{} CSVs byte-identical for --jobs 1 and 4: {}",
            a.len(),
            names.join(", ")
        ),
    );
}

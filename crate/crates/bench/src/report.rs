//! CSV and SVG outputs. Numbers use the shortest round-trip formatting,
//! `inf` for unbounded values and an empty field for missing ones, so equal
//! results always produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use cmeta::metalearner::Learner;
use cmeta::stochord::{AveragedEcdf, OrderCheck, OrderReport};

use crate::config::Method;
use crate::error::{BenchError, Result};
use crate::experiment::{MethodSummary, RunResult};
use crate::plot::{LinePlot, Series};

pub const SUMMARY_HEADER: [&str; 9] = [
    "method",
    "coverage",
    "coverage_se",
    "avg_len",
    "avg_len_se",
    "rmse",
    "rmse_se",
    "vacuous",
    "failures",
];

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(BenchError::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn summary_fields(s: &MethodSummary) -> Vec<String> {
    vec![
        s.method.name().to_string(),
        fmt_f64(s.coverage),
        fmt_f64(s.coverage_se),
        fmt_f64(s.avg_len),
        fmt_f64(s.avg_len_se),
        fmt_f64(s.rmse),
        fmt_f64(s.rmse_se),
        s.vacuous.to_string(),
        s.failures.to_string(),
    ]
}

pub fn write_summary(path: &Path, summary: &[MethodSummary]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for s in summary {
        w.write_record(summary_fields(s))?;
    }
    w.flush().map_err(BenchError::io(path))?;
    Ok(())
}

pub fn write_replications(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "replication",
        "seed",
        "method",
        "coverage",
        "avg_len",
        "vacuous",
        "rmse",
        "error",
    ])?;
    for r in &result.replications {
        for o in &r.outcomes {
            w.write_record([
                r.index.to_string(),
                r.seed.to_string(),
                o.method.name().to_string(),
                fmt_opt(o.coverage),
                fmt_f64(o.avg_len),
                o.vacuous.to_string(),
                fmt_opt(o.rmse),
                o.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(BenchError::io(path))?;
    Ok(())
}

const ORDER_HEADER: [&str; 11] = [
    "learner",
    "fosd_fg",
    "fosd_fg_margin",
    "fosd_gf",
    "fosd_gf_margin",
    "sosd_fg",
    "sosd_fg_margin",
    "mcx_fg",
    "mcx_fg_margin",
    "alpha_star",
    "crossing_point",
];

fn order_fields(learner: &str, r: &OrderReport) -> Vec<String> {
    let check = |c: &OrderCheck| [c.holds.to_string(), fmt_f64(c.margin)];
    let mut f = vec![learner.to_string()];
    for c in [&r.fosd_fg, &r.fosd_gf, &r.sosd_fg, &r.mcx_fg] {
        f.extend(check(c));
    }
    f.push(fmt_opt(r.alpha_star));
    f.push(fmt_opt(r.crossing_point));
    f
}

pub fn write_orders(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["replication"];
    header.extend(ORDER_HEADER);
    w.write_record(&header)?;
    for r in &result.replications {
        for s in &r.scores {
            let mut fields = vec![r.index.to_string()];
            fields.extend(order_fields(s.learner.name(), &s.report));
            w.write_record(fields)?;
        }
    }
    w.flush().map_err(BenchError::io(path))?;
    Ok(())
}

/// Single order report, as written by `diagnose`.
pub fn write_order_report(path: &Path, report: &OrderReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(ORDER_HEADER)?;
    w.write_record(order_fields("input", report))?;
    w.flush().map_err(BenchError::io(path))?;
    Ok(())
}

pub fn write_ecdf(path: &Path, ecdf: &AveragedEcdf) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "F_pseudo", "F_oracle"])?;
    for ((t, p), o) in ecdf.t.iter().zip(&ecdf.f_pseudo).zip(&ecdf.f_oracle) {
        w.write_record([fmt_f64(*t), fmt_f64(*p), fmt_f64(*o)])?;
    }
    w.flush().map_err(BenchError::io(path))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(BenchError::io(path))
}

fn learner_slug(learner: Learner) -> String {
    learner.name().to_lowercase()
}

fn ecdf_plot(learner: Learner, ecdf: &AveragedEcdf) -> LinePlot {
    let curve = |f: &[f64]| ecdf.t.iter().copied().zip(f.iter().copied()).collect();
    LinePlot::new(format!("Averaged score ECDFs, {learner}-learner"), "score", "ECDF")
        .with_series(Series::new("pseudo-outcome scores", curve(&ecdf.f_pseudo)))
        .with_series(Series::new("oracle scores", curve(&ecdf.f_oracle)))
}

fn check_nonempty(result: &RunResult) -> Result<()> {
    if result.methods.is_empty() {
        return Err(BenchError::Config("no methods to report".into()));
    }
    if result.replications.is_empty() {
        return Err(BenchError::Config("no replications to report".into()));
    }
    Ok(())
}

fn create_dir(outdir: &Path) -> Result<()> {
    fs::create_dir_all(outdir).map_err(BenchError::io(outdir))
}

/// Writes `summary.csv`, `replications.csv`, `orders.csv` and per-learner
/// `ecdf_<learner>.csv` / `.svg`. Returns the written paths.
pub fn emit_reports(result: &RunResult, outdir: &Path) -> Result<Vec<PathBuf>> {
    check_nonempty(result)?;
    create_dir(outdir)?;
    let mut written = Vec::new();

    let path = outdir.join("summary.csv");
    write_summary(&path, &result.summary())?;
    written.push(path);

    let path = outdir.join("replications.csv");
    write_replications(&path, result)?;
    written.push(path);

    if result.replications.iter().any(|r| !r.scores.is_empty()) {
        let path = outdir.join("orders.csv");
        write_orders(&path, result)?;
        written.push(path);
    }

    for learner in result.learners() {
        if let Some(ecdf) = result.averaged_ecdf(learner)? {
            let slug = learner_slug(learner);
            let path = outdir.join(format!("ecdf_{slug}.csv"));
            write_ecdf(&path, &ecdf)?;
            written.push(path);
            let path = outdir.join(format!("ecdf_{slug}.svg"));
            write_text(&path, &ecdf_plot(learner, &ecdf).to_svg())?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Writes `coverage_vs_alpha.csv` and coverage, length and RMSE plots
/// against `α`.
pub fn emit_sweep_reports(results: &[RunResult], outdir: &Path) -> Result<Vec<PathBuf>> {
    let first = results
        .first()
        .ok_or_else(|| BenchError::Config("empty sweep".into()))?;
    for r in results {
        check_nonempty(r)?;
    }
    create_dir(outdir)?;
    let mut written = Vec::new();

    let path = outdir.join("coverage_vs_alpha.csv");
    let mut w = writer(&path)?;
    let mut header = vec!["alpha"];
    header.extend(SUMMARY_HEADER);
    w.write_record(&header)?;
    let summaries: Vec<(f64, Vec<MethodSummary>)> = results.iter().map(|r| (r.alpha, r.summary())).collect();
    for (alpha, summary) in &summaries {
        for s in summary {
            let mut fields = vec![fmt_f64(*alpha)];
            fields.extend(summary_fields(s));
            w.write_record(fields)?;
        }
    }
    w.flush().map_err(BenchError::io(&path))?;
    written.push(path);

    type Metric = fn(&MethodSummary) -> f64;
    let panels: [(&str, &str, Metric); 3] = [
        ("coverage_vs_alpha.svg", "coverage", |s| s.coverage),
        ("length_vs_alpha.svg", "average interval length", |s| s.avg_len),
        ("rmse_vs_alpha.svg", "RMSE", |s| s.rmse),
    ];
    for (file, label, metric) in panels {
        let mut plot = LinePlot::new(format!("{label} vs target miscoverage"), "alpha", label);
        if file.starts_with("coverage") {
            let nominal: Vec<(f64, f64)> = summaries.iter().map(|(a, _)| (*a, 1.0 - a)).collect();
            plot = plot.with_series(Series::new("target 1 - alpha", nominal));
        }
        for &method in &first.methods {
            let points = summaries
                .iter()
                .filter_map(|(a, sum)| sum.iter().find(|s| s.method == method).map(|s| (*a, metric(s))))
                .collect();
            plot = plot.with_series(Series::new(method.name(), points));
        }
        let path = outdir.join(file);
        write_text(&path, &plot.to_svg())?;
        written.push(path);
    }
    Ok(written)
}

/// Looks up a method row in a summary.
pub fn find_summary(summary: &[MethodSummary], method: Method) -> Option<&MethodSummary> {
    summary.iter().find(|s| s.method == method)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cmeta::dgp::{self, SynthConfig};
use cmeta::stochord;
use cmeta_bench::config::{DataSection, ExperimentConfig, SetupChoice};
use cmeta_bench::{report, BenchError, Experiment, Result};

#[derive(Parser)]
#[command(name = "cmeta", version, about = "Conformal meta-learners for ITE intervals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Simulate(SimulateArgs),
    /// Run a replicated experiment and write reports.
    Run(RunArgs),
    /// Compare two score samples for stochastic dominance.
    Diagnose(DiagnoseArgs),
    /// Run the experiment over a grid of miscoverage levels.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Take `[data]` from this config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_setup, default_value = "A")]
    setup: SetupChoice,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; the file is `synthetic.csv`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override the miscoverage level.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Replace the sweep grid; repeat for several levels.
    #[arg(long)]
    alpha: Vec<f64>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// CSV of pseudo-outcome scores (column `score`, else the first column).
    #[arg(long)]
    pseudo: PathBuf,
    /// CSV of oracle scores.
    #[arg(long)]
    oracle: PathBuf,
    /// Also write `orders.csv` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_setup(s: &str) -> std::result::Result<SetupChoice, String> {
    match s {
        "A" | "a" => Ok(SetupChoice::A),
        "B" | "b" => Ok(SetupChoice::B),
        _ => Err(format!("unknown setup {s:?}, expected A or B")),
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            let setup = cfg
                .data
                .setup()?
                .ok_or_else(|| BenchError::Config("simulate needs synthetic [data]".into()))?;
            match cfg.data {
                DataSection::Synthetic { n, d, .. } => SynthConfig::new(setup, n, d, args.seed),
                DataSection::Csv { .. } => unreachable!(),
            }
        }
        None => {
            let setup = match args.setup {
                SetupChoice::A => dgp::Setup::A,
                SetupChoice::B => dgp::Setup::B,
            };
            SynthConfig::new(setup, args.n, args.d, args.seed)
        }
    };
    let ds = dgp::generate_synthetic(&cfg)?;
    std::fs::create_dir_all(&args.out).map_err(|e| BenchError::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let path = args.out.join("synthetic.csv");
    dgp::write_csv(&ds, &path)?;
    print_written(&[path]);
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.experiment.master_seed = s;
    }
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(&args.config, args.seed)?;
    if let Some(a) = args.alpha {
        cfg.experiment.alpha = a;
    }
    let alpha = cfg.experiment.alpha;
    let exp = Experiment::new(cfg)?;
    let result = exp.run(alpha, args.jobs)?;
    for s in result.summary() {
        println!(
            "{:<12} coverage {:>8} avg_len {:>10} rmse {:>10} failures {}",
            s.method.name(),
            format!("{:.4}", s.coverage),
            format!("{:.4}", s.avg_len),
            format!("{:.4}", s.rmse),
            s.failures
        );
    }
    print_written(&report::emit_reports(&result, &args.out)?);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = load_config(&args.config, args.seed)?;
    if !args.alpha.is_empty() {
        cfg.sweep.alphas = args.alpha.clone();
    }
    let exp = Experiment::new(cfg)?;
    let results = exp.sweep(args.jobs)?;
    print_written(&report::emit_sweep_reports(&results, &args.out)?);
    Ok(())
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    let data_err = |e: cmeta::Error| BenchError::Data(e);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(e.into()))?;
    let headers = reader.headers().map_err(|e| data_err(e.into()))?.clone();
    let col = headers.iter().position(|h| h == "score").unwrap_or(0);
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| data_err(e.into()))?;
        let field = rec.get(col).unwrap_or("");
        let v: f64 = field.parse().map_err(|e: std::num::ParseFloatError| {
            data_err(cmeta::Error::Parse {
                path: path.to_path_buf(),
                row: row + 1,
                column: headers.get(col).unwrap_or("").to_string(),
                message: e.to_string(),
            })
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(data_err(cmeta::Error::NoDataRows {
            path: path.to_path_buf(),
        }));
    }
    Ok(out)
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let pseudo = read_scores(&args.pseudo)?;
    let oracle = read_scores(&args.oracle)?;
    let r = stochord::order_report(&pseudo, &oracle).map_err(BenchError::Data)?;
    println!(
        "fosd pseudo over oracle: {} (max F-G {})",
        r.fosd_fg.holds, r.fosd_fg.margin
    );
    println!(
        "fosd oracle over pseudo: {} (max G-F {})",
        r.fosd_gf.holds, r.fosd_gf.margin
    );
    println!(
        "sosd pseudo over oracle: {} (min gap {})",
        r.sosd_fg.holds, r.sosd_fg.margin
    );
    println!(
        "mcx pseudo over oracle:  {} (min gap {})",
        r.mcx_fg.holds, r.mcx_fg.margin
    );
    match (r.alpha_star, r.crossing_point) {
        (Some(a), Some(v)) => println!("alpha*: {a} at v* = {v}"),
        (Some(a), None) => println!("alpha*: {a}"),
        _ => println!("alpha*: none"),
    }
    if let Some(out) = args.out {
        std::fs::create_dir_all(&out).map_err(|e| BenchError::Io {
            path: out.clone(),
            source: e,
        })?;
        let path = out.join("orders.csv");
        report::write_order_report(&path, &r)?;
        print_written(&[path]);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

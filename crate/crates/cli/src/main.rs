use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use proboost::boosting::Variant;
use proboost::ensemble::WeightScheme;
use proboost_cli::config::Family;
use proboost_cli::demo::{demo_iris, IrisDemoConfig};
use proboost_cli::{
    prepare, report, run, write_atomic, CliError, ExperimentConfig, Overrides, Result,
};

#[derive(Parser)]
#[command(
    name = "proboost",
    version,
    about = "Uncertainty-driven boosting experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Contaminate, split and cache the data of every repetition.
    PrepareData(ExpArgs),
    /// Train and evaluate every missing (cell, repetition).
    Train(ExpArgs),
    /// Evaluate stored models for every missing (cell, repetition).
    Evaluate(ExpArgs),
    /// Summaries, paired tests and ROI tables from stored records.
    Report(ReportArgs),
    /// Weight and uncertainty trace of weighted boosting on Iris.
    DemoIris(DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Under,
    Over,
    Weighted,
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerArg {
    Det,
    Vi,
    Mcd,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Fw,
    Vw,
    Vwo,
}

#[derive(Args)]
struct ExpArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Comma-separated level counts, e.g. 1,2,3,4.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    learner: Option<LearnerArg>,
    #[arg(long, value_enum, value_delimiter = ',')]
    weights: Option<Vec<WeightsArg>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment config whose output directory holds the records.
    #[arg(long, required_unless_present = "out")]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Baseline cell id, e.g. vi-weighted-V1-vw.
    #[arg(long)]
    baseline: Option<String>,
    /// Treatment cell ids; every other cell when omitted.
    #[arg(long)]
    treatment: Vec<String>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Iris CSV, when no config is given.
    #[arg(long, default_value = "data/iris.csv")]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "runs/iris")]
    out: PathBuf,
}

fn experiment(a: &ExpArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    cfg.apply(&Overrides {
        seed: a.seed,
        repetitions: a.reps,
        variant: a.variant.map(|v| match v {
            VariantArg::Under => Variant::Undersampled,
            VariantArg::Over => Variant::Oversampled,
            VariantArg::Weighted => Variant::Weighted,
        }),
        levels: a.levels.clone(),
        family: a.learner.map(|l| match l {
            LearnerArg::Det => Family::Det,
            LearnerArg::Vi => Family::Vi,
            LearnerArg::Mcd => Family::Mcd,
        }),
        weights: a.weights.as_ref().map(|ws| {
            ws.iter()
                .map(|w| match w {
                    WeightsArg::Fw => WeightScheme::Fw,
                    WeightsArg::Vw => WeightScheme::Vw,
                    WeightsArg::Vwo => WeightScheme::Vwo,
                })
                .collect()
        }),
        out: a.out.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn demo(a: &DemoArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => CliError::MissingInput {
                    path: p.clone(),
                    reason: "config file not found".into(),
                },
                _ => CliError::Io {
                    context: format!("reading {}", p.display()),
                    source: e,
                },
            })?;
            IrisDemoConfig::from_toml(&text, p.parent().unwrap_or(Path::new(".")))?
        }
        None => IrisDemoConfig::new(&a.data, 0),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let (_, trace) = demo_iris(&cfg)?;
    let csv = trace.to_csv()?;
    write_atomic(&a.out.join("iris_trace.csv"), csv.as_bytes())?;
    let class0_selected = trace
        .selected
        .iter()
        .flatten()
        .filter(|&&i| trace.rows[i].class == 0)
        .count();
    println!(
        "wrote {} rows to {}; class-0 samples selected across levels: {class0_selected}",
        trace.rows.len(),
        a.out.join("iris_trace.csv").display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PrepareData(a) => {
            let cfg = experiment(&a)?;
            let manifests = prepare::cmd_prepare_data(&cfg)?;
            println!(
                "prepared {} repetition(s) under {}",
                manifests.len(),
                cfg.out.join("prepared").display()
            );
        }
        Command::Train(a) => {
            let cfg = experiment(&a)?;
            let s = run::cmd_train(&cfg)?;
            println!(
                "{} record(s) written, {} complete repetition(s) skipped",
                s.written, s.skipped_repetitions
            );
        }
        Command::Evaluate(a) => {
            let cfg = experiment(&a)?;
            let s = run::cmd_evaluate(&cfg)?;
            println!(
                "{} record(s) written, {} complete repetition(s) skipped",
                s.written, s.skipped_repetitions
            );
        }
        Command::Report(a) => {
            let out = match (&a.out, &a.config) {
                (Some(o), _) => o.clone(),
                (None, Some(c)) => ExperimentConfig::load(c)?.out,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let r = report::cmd_report(&out, a.baseline.as_deref(), &a.treatment)?;
            print!("{}", r.to_text());
        }
        Command::DemoIris(a) => demo(&a)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

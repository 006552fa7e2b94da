use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamsema::harness::{
    self, build_features, evaluate, fit, load_for, report_csv, report_table, ExperimentConfig,
    ExperimentReport,
};
use beamsema::nn::Model;
use beamsema::predictors::PredictorKind;
use beamsema::scene_sim::{generate_dataset, Preset, Split, MANIFEST_FILE};
use beamsema::Error;
use clap::{Parser, Subcommand, ValueEnum};

const THREADS_ENV: &str = "BEAMSEMA_THREADS";

#[derive(Parser)]
#[command(name = "beamsema", version, about = "Semantics-aided beam prediction experiments")]
struct Cli {
    /// Worker thread cap; 1 runs fully serial. Falls back to BEAMSEMA_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a preset.
    Gen {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drop detection noise and scattered paths.
        #[arg(long)]
        noiseless: bool,
    },
    /// Train one predictor and write its checkpoint and history.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        predictor: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on one split and print its metrics as JSON.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        predictor: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train and evaluate every configured predictor and write the report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a report as a table or CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    error: Error,
}

impl Failure {
    fn usage(error: Error) -> Self {
        Self { code: 2, error }
    }

    fn runtime(error: Error) -> Self {
        Self { code: 3, error }
    }

    /// Usage/validation errors exit 2, everything else 3.
    fn classify(error: Error) -> Self {
        if error.is_validation() {
            Self::usage(error)
        } else {
            Self::runtime(error)
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            Failure::usage(Error::Config(format!("{THREADS_ENV}={v} is not a thread count")))
        }),
        Err(_) => Ok(None),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_file(path).map_err(Failure::usage)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_kind(name: &str) -> Result<PredictorKind, Failure> {
    name.parse().map_err(Failure::usage)
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| Failure::runtime(Error::io(path, e)))
}

fn gen(preset: &str, out: &Path, seed: u64, noiseless: bool) -> Result<(), Failure> {
    let mut preset = Preset::builtin(preset).map_err(Failure::usage)?;
    if noiseless {
        preset = preset.noiseless();
    }
    let ds = generate_dataset(&preset, seed, out).map_err(|e| match e {
        Error::Io { .. } => Failure::usage(e),
        other => Failure::classify(other),
    })?;
    println!(
        "wrote {} samples to {}",
        ds.records.len(),
        out.join(MANIFEST_FILE).display()
    );
    Ok(())
}

fn train(config: &Path, predictor: &str, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load_config(config, seed)?;
    let kind = parse_kind(predictor)?;
    let ds = load_for(&cfg).map_err(|e| Failure::runtime(e.in_stage("load")))?;
    let features = build_features(&ds, kind).map_err(|e| Failure::runtime(e.in_stage("features")))?;
    let (model, history, secs) =
        fit(&cfg, kind, &features, ds.meta.preset.channel.num_beams).map_err(Failure::runtime)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::runtime(Error::io(out, e)))?;
    let ckpt = out.join(format!("{kind}.checkpoint.json"));
    model.save_checkpoint(&ckpt).map_err(Failure::runtime)?;
    let hist = serde_json::to_string_pretty(&history).expect("history serializes");
    write_file(&out.join(format!("{kind}.history.json")), &hist)?;
    println!(
        "{kind}: best epoch {} (val top-1 {:.2}%), {:.1}s, checkpoint {}",
        history.best_epoch,
        history.best().val_top1,
        secs,
        ckpt.display()
    );
    Ok(())
}

fn eval(config: &Path, predictor: &str, checkpoint: &Path, split: &str) -> Result<(), Failure> {
    let cfg = load_config(config, None)?;
    let kind = parse_kind(predictor)?;
    let split: Split = split.parse().map_err(Failure::usage)?;
    let model = Model::load_checkpoint(checkpoint).map_err(Failure::classify)?;
    let ds = load_for(&cfg).map_err(|e| Failure::runtime(e.in_stage("load")))?;
    let mut features = build_features(&ds, kind).map_err(|e| Failure::runtime(e.in_stage("features")))?;
    features.test = features.split(split).clone();
    model.expect_input(&features.input_shape).map_err(Failure::usage)?;
    let (m, ms) = evaluate(&model, &features).map_err(|e| Failure::runtime(e.in_stage("evaluate")))?;
    let summary = serde_json::json!({
        "predictor": kind.tag(),
        "split": split.to_string(),
        "samples": m.samples,
        "top1": m.top1,
        "top2": m.top2,
        "top3": m.top3,
        "params": model.param_count(),
        "infer_ms_per_sample": ms,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    Ok(())
}

fn run(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = load_config(config, seed)?;
    let output = harness::run_experiment(&cfg).map_err(Failure::runtime)?;
    output.write(out).map_err(Failure::runtime)?;
    print!("{}", report_table(&output.report));
    Ok(())
}

fn report(input: &Path, format: Format) -> Result<(), Failure> {
    let r = ExperimentReport::read(input).map_err(Failure::usage)?;
    match format {
        Format::Table => print!("{}", report_table(&r)),
        Format::Csv => print!("{}", report_csv(&r)),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(Failure::usage(Error::Config("--threads must be at least 1".into())));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::runtime(Error::Config(e.to_string())))?;
    }
    match cli.command {
        Command::Gen { preset, out, seed, noiseless } => gen(&preset, &out, seed, noiseless),
        Command::Train { config, predictor, out, seed } => train(&config, &predictor, &out, seed),
        Command::Eval { config, predictor, checkpoint, split } => {
            eval(&config, &predictor, &checkpoint, &split)
        }
        Command::Run { config, out, seed } => run(&config, &out, seed),
        Command::Report { input, format } => report(&input, format),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybridae::metrics::accuracy;
use hybridae::pipeline::{train_pipeline, Stage};
use hybridae_harness::experiment::{load_dataset, repeat_seed, repeat_split};
use hybridae_harness::{
    compare, load_model, run_ablation, run_experiment, save_model, selftest, ExperimentConfig, ModelPayload, Report,
    Result,
};

#[derive(Parser)]
#[command(name = "hybridae", version, about = "Hybrid-feature autoencoder pipeline experiments")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one stage on the first split and save the model.
    Train(TrainArgs),
    /// Score a saved model, or run the repeated protocol for one stage.
    Evaluate(EvaluateArgs),
    /// Every stage from OF to the full pipeline on shared splits.
    Ablate(Common),
    /// SAE, SSAE, HESSAE and HESAE softmax classifiers on shared splits.
    Compare(Common),
    /// Property checks against independent oracles.
    Selftest,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data table; overrides the config's dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Label column: "last", a zero-based index, or a header name.
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// OF, DF, HF, HF&L1 or HF&L1&Ensemble.
    #[arg(long)]
    stage: Option<Stage>,
    /// Epoch budget for every autoencoder training phase.
    #[arg(long)]
    epochs: Option<usize>,
    /// Report path (delimited table; a JSON report is written next to it).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Saved model to score on its held-out split.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Score the saved model on every row instead of the held-out split.
    #[arg(long, requires = "model")]
    all: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.dataset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(data)) => ExperimentConfig::for_dataset(data),
            (None, None) => {
                return Err(hybridae_harness::HarnessError::Config("give --config or --dataset".into()));
            }
        };
        if let Some(d) = &self.dataset {
            cfg.dataset.path = d.clone();
        }
        if let Some(l) = &self.label_col {
            cfg.dataset.label = l.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.repeats {
            cfg.repeats = r;
        }
        if let Some(s) = self.stage {
            cfg.stage = s;
        }
        if let Some(e) = self.epochs {
            cfg.hessae.epochs = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(report: &Report, out: Option<&PathBuf>) -> Result<()> {
    print!("{}", report.to_table());
    if let Some(path) = out {
        report.write(path)?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.common.resolve()?;
    let data = load_dataset(&cfg)?;
    let (tr, te) = repeat_split(&data, &cfg, 0)?.apply(&data);
    let seed = repeat_seed(&cfg, 0);
    let pipeline = train_pipeline(&tr, &cfg.pipeline(), cfg.stage, seed)?;
    let acc = accuracy(&pipeline.predict(te.features.view())?, &te.labels);
    println!("{}: held-out accuracy {:.2}% on {} rows", cfg.stage, 100.0 * acc, te.n_samples());
    let out = args.common.out.clone().unwrap_or_else(|| PathBuf::from("model.bin"));
    save_model(&out, &ModelPayload { config: cfg, seed, pipeline })?;
    println!("model written to {}", out.display());
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let Some(path) = &args.model else {
        let cfg = args.common.resolve()?;
        return emit(&run_experiment(&cfg)?, args.common.out.as_ref());
    };
    let file = load_model(path)?;
    let mut cfg = file.payload.config.clone();
    if let Some(d) = &args.common.dataset {
        cfg.dataset.path = d.clone();
    }
    if let Some(l) = &args.common.label_col {
        cfg.dataset.label = l.clone();
    }
    let data = load_dataset(&cfg)?;
    let rows = if args.all { data } else { repeat_split(&data, &cfg, 0)?.apply(&data).1 };
    let pred = file.payload.pipeline.predict(rows.features.view())?;
    println!(
        "{} model (format {}, seed {}): accuracy {:.2}% on {} rows",
        file.payload.pipeline.stage,
        file.format_version,
        file.payload.seed,
        100.0 * accuracy(&pred, &rows.labels),
        rows.n_samples()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Train(a) => train(a)?,
        Command::Evaluate(a) => evaluate(a)?,
        Command::Ablate(c) => emit(&run_ablation(&c.resolve()?)?, c.out.as_ref())?,
        Command::Compare(c) => emit(&compare(&c.resolve()?)?, c.out.as_ref())?,
        Command::Selftest => {
            let results = selftest::run_all();
            for r in &results {
                println!("{}", r.line());
            }
            return Ok(results.iter().all(|r| r.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spr::config::RunConfig;
use spr::error::StageExt as _;
use spr::pipeline;
use spr::synth_io::write_corpus;
use spr_core::synth::{AnomalyStyle, CorpusSpec};

#[derive(Parser)]
#[command(name = "spr", version, about = "Unsupervised video anomaly discovery with self-paced refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic corpus with planted anomalies.
    Synth(SynthArgs),
    /// Localize objects and cache cubes.
    Extract(RunArgs),
    /// Train on cached cubes and write checkpoints and telemetry.
    Train(RunArgs),
    /// Score the test split with trained checkpoints.
    Score(RunArgs),
    /// Compute AUROC and EER of the scores file.
    Eval(RunArgs),
    /// Every stage in sequence.
    Run(RunArgs),
    /// Summarize a dataset directory.
    Describe { root: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Distinct,
    Speed,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    videos: usize,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0.1)]
    anomaly_fraction: f64,
    #[arg(long, value_enum, default_value_t = Style::Distinct)]
    style: Style,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    train_dataset: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    paradigm: Option<String>,
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Any config key, as `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> spr::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("dataset", &self.dataset),
            ("train_dataset", &self.train_dataset),
            ("mode", &self.mode),
            ("paradigm", &self.paradigm),
            ("baseline", &self.baseline),
            ("seed", &self.seed),
            ("out", &self.out),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                c.set(k, v).map_err(|m| spr::Error::Usage(format!("--{}: {}", k, m)))?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| spr::Error::Usage(format!("--set expects key=value, got '{}'", kv)))?;
            c.set(k.trim(), v.trim())
                .map_err(|m| spr::Error::Usage(format!("--set: {}", m)))?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("SPR_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn execute(command: Command) -> spr::Result<()> {
    match command {
        Command::Synth(a) => {
            let spec = CorpusSpec {
                n_videos: a.videos,
                frames_per_video: a.frames,
                width: a.size,
                height: a.size,
                anomaly_fraction: a.anomaly_fraction,
                style: match a.style {
                    Style::Distinct => AnomalyStyle::Distinct,
                    Style::Speed => AnomalyStyle::SpeedOnly,
                },
                seed: a.seed,
                ..CorpusSpec::default()
            };
            let summary = write_corpus(&spec, &a.out).stage("synth")?;
            println!("{}", summary);
        }
        Command::Describe { root } => println!("{}", spr::dataset::describe(&root)?),
        Command::Extract(a) => {
            let c = a.config()?;
            let corpus = pipeline::extract_stage(&c).stage("extract")?;
            println!(
                "test cubes={} train cubes={}",
                corpus.test.appearance.len(),
                corpus.test_offset()
            );
        }
        Command::Train(a) => {
            let c = a.config()?;
            let corpus = pipeline::load_corpus(&c).stage("train")?;
            let truth = pipeline::ground_truth(c.dataset.as_deref().unwrap_or(".".as_ref())).stage("train")?;
            let trained = pipeline::train_stage(&c, &corpus, truth.as_ref()).stage("train")?;
            if let Some(last) = trained.appearance.report.epochs.last() {
                println!("epoch={} mean_loss={} drop_fraction={}", last.epoch, last.mean_loss, last.drop_fraction);
            }
        }
        Command::Score(a) => {
            let c = a.config()?;
            let corpus = pipeline::load_corpus(&c).stage("score")?;
            let (app, mot) = pipeline::load_models(&c).stage("score")?;
            let rows = pipeline::score_stage(&c, &corpus, &app, mot.as_ref()).stage("score")?;
            println!("scored {} frames", rows.len());
        }
        Command::Eval(a) => {
            let c = a.config()?;
            println!("{}", pipeline::eval_stage(&c).stage("eval")?);
        }
        Command::Run(a) => {
            let c = a.config()?;
            let summary = pipeline::run(&c)?;
            match summary.metrics {
                Some(m) => println!("{}", m),
                None => println!("scored {} frames (no labels)", summary.rows.len()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ spr::Error::Usage(_)) | Err(e @ spr::Error::Config { .. }) => {
            eprintln!("error: {}", e);
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}

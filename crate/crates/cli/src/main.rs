mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use quadmelody::generator::{derive_seed, DEFAULT_ALPHA, DEFAULT_ORDER};
use quadmelody::labeling::{QuadrantLabel, SPLIT_RATIO};
use quadmelody::template::AblationMask;

use commands::{EmptyResult, Sampling};
use config::{pick, Config};

/// Emotion-conditioned melody pipeline over ABC and MusicXML corpora.
#[derive(Parser)]
#[command(name = "quadmelody", version)]
struct Cli {
    /// TOML configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, de-duplicate, segment and label score files into a JSONL dataset.
    Ingest {
        /// Files, directories or glob patterns (.abc, .xml, .musicxml, .mxl).
        inputs: Vec<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Pitch-spread threshold; defaults to the corpus median.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Re-label an existing dataset.
    Label {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Fan Q2/Q3 records out to fifteen keys, optionally writing a train/test split.
    Balance {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        split: bool,
        /// Training records per test record.
        #[arg(long)]
        ratio: Option<usize>,
    },
    /// Write the eleven-column feature table of a dataset.
    Features {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Correlation report, density curves and bar counts from a feature table.
    Analyze {
        table: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train the character model.
    Train {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Held-out dataset for cross-entropy.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Generate templated pieces as .abc/.mid pairs with a JSON manifest.
    Generate {
        #[arg(long)]
        model: PathBuf,
        /// Q1..Q4, repeatable or comma-separated; default all four.
        #[arg(long = "emotion", value_delimiter = ',')]
        emotions: Vec<QuadrantLabel>,
        /// Pieces per emotion.
        #[arg(long)]
        count: Option<usize>,
        /// Features to ablate: tempo, pitch_sd, mode, octave, volume.
        #[arg(long, value_delimiter = ',')]
        ablate: Option<Vec<String>>,
        #[arg(long, short)]
        out: PathBuf,
        /// Also render .wav files.
        #[arg(long)]
        wav: bool,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Parse rate of sampled pieces.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        /// Write the report here as well as to stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
}

#[derive(Args)]
struct SamplingArgs {
    /// 0 decodes greedily.
    #[arg(long)]
    temperature: Option<f64>,
    /// Reject characters after which the text can no longer parse.
    #[arg(long)]
    guarded: bool,
    #[arg(long)]
    max_chars: Option<usize>,
}

impl SamplingArgs {
    fn resolve(&self, config: &Config) -> Sampling {
        Sampling::resolve(self.temperature, self.guarded, self.max_chars, config)
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = Config::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    let root = config.root_seed();
    match cli.command {
        Command::Ingest { inputs, out, threshold } => {
            let inputs = if inputs.is_empty() { config.inputs.clone() } else { inputs };
            if inputs.is_empty() {
                anyhow::bail!("no inputs given");
            }
            let out = out
                .or_else(|| config.out.as_ref().map(|d| d.join("dataset.jsonl")))
                .unwrap_or_else(|| PathBuf::from("dataset.jsonl"));
            commands::ingest(&commands::IngestArgs {
                inputs,
                out,
                threshold: threshold.or(config.threshold),
            })
        }
        Command::Label { input, out, threshold } => commands::label(&input, &out, threshold.or(config.threshold)),
        Command::Balance { input, out, split, ratio } => {
            let ratio = pick(ratio, config.split.ratio, SPLIT_RATIO);
            if ratio < 2 {
                anyhow::bail!("split ratio must exceed 1");
            }
            commands::balance_cmd(&commands::BalanceArgs {
                input,
                out,
                split: split || config.split.seed.is_some(),
                ratio,
                split_seed: config.split.seed.unwrap_or_else(|| derive_seed(root, 1)),
            })
        }
        Command::Features { input, out } => commands::features(&input, &out),
        Command::Analyze { table, out } => commands::analyze(&table, &out),
        Command::Train { input, out, order, alpha, test } => commands::train_cmd(&commands::TrainArgs {
            input,
            out,
            order: pick(order, config.model.order, DEFAULT_ORDER),
            alpha: pick(alpha, config.model.alpha, DEFAULT_ALPHA),
            test,
        }),
        Command::Generate { model, emotions, count, ablate, out, wav, sampling } => {
            let count = pick(count, config.generate.count, 25);
            if count == 0 {
                anyhow::bail!("count must be positive");
            }
            let ablate = ablate.or_else(|| config.generate.ablate.clone()).unwrap_or_default();
            let emotions = if emotions.is_empty() { QuadrantLabel::ALL.to_vec() } else { emotions };
            commands::generate(&commands::GenerateArgs {
                model,
                emotions,
                count,
                mask: AblationMask::ablating(&ablate)?,
                seed: derive_seed(root, 2),
                out,
                sampling: sampling.resolve(&config),
                wav: wav || config.generate.wav.unwrap_or(false),
            })
        }
        Command::Eval { model, samples, out, sampling } => {
            let samples = pick(samples, config.eval.samples, 100);
            if samples == 0 {
                anyhow::bail!("samples must be positive");
            }
            commands::eval(&model, samples, derive_seed(root, 3), sampling.resolve(&config), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let empty = e.downcast_ref::<EmptyResult>().is_some();
            io::log("error", "fatal", json!({"reason": format!("{e:#}")}));
            ExitCode::from(if empty { 2 } else { 1 })
        }
    }
}

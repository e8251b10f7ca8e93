//! `fastlink` command-line front end.
//!
//! Exit status: 0 on success, 2 for configuration or input errors, 3 for
//! runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fastlink::codec::CodecModel;
use fastlink::harness::config::LinkConfig;
use fastlink::harness::{experiment, report};
use fastlink::importance::{self, EvaluatorModel};
use fastlink::{Error, Result};

#[derive(Parser)]
#[command(name = "fastlink", version, about = "Importance-aware semantic transmission experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the linear codec and write it to a model file.
    TrainCodec {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build gradient labels for a codec and fit the importance evaluator.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the (features, labels) dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the scheme comparison and write per-trial results as CSV.
    Run {
        #[command(flatten)]
        common: Common,
        /// Pretrained codec; trained from the configuration when omitted.
        #[arg(long)]
        codec: Option<PathBuf>,
        /// Pretrained evaluator; distilled when omitted and needed.
        #[arg(long)]
        evaluator: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write feature orders and block rankings of every transmission.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the grouped summary next to the results.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Group a results CSV by mode, scheme and SNR.
    Summarize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<LinkConfig> {
    let mut cfg = match &common.config {
        Some(p) => LinkConfig::from_file(p)?,
        None => LinkConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainCodec { common, out } => {
            let cfg = load_config(&common)?;
            let (model, rep) = experiment::train_codec(&cfg)?;
            model.save(&out)?;
            if let Some(last) = rep.epoch_losses.last() {
                eprintln!("trained {} epochs, final loss {last:.6e}", rep.epoch_losses.len());
            }
        }
        Command::Distill {
            common,
            codec,
            out,
            dataset,
        } => {
            let cfg = load_config(&common)?;
            let model = CodecModel::load(&codec)?;
            check_codec_shape(&cfg, &model)?;
            let (ev, pairs) = experiment::distill(&cfg, &model)?;
            ev.save(&out)?;
            if let Some(p) = dataset {
                importance::save_distill_dataset(&pairs, &p)?;
            }
            eprintln!("distilled evaluator from {} pairs", pairs.len());
        }
        Command::Run {
            common,
            codec,
            evaluator,
            out,
            trace,
            summary,
        } => {
            let cfg = load_config(&common)?;
            let codec = match codec {
                Some(p) => CodecModel::load(&p)?,
                None => experiment::train_codec(&cfg)?.0,
            };
            check_codec_shape(&cfg, &codec)?;
            let needs_ev = cfg.schemes.iter().any(|s| s.uses_evaluator());
            let evaluator = match (evaluator, needs_ev) {
                (Some(p), _) => Some(EvaluatorModel::load(&p)?),
                (None, true) => Some(experiment::distill(&cfg, &codec)?.0),
                (None, false) => None,
            };
            let models = experiment::Models { codec, evaluator };
            let images = experiment::test_images(&cfg)?;
            let opts = experiment::RunOptions {
                importance_override: None,
                trace: trace.is_some(),
            };
            let output = experiment::run_experiment(&cfg, &models, &images, &opts)?;
            report::emit_csv(&output.rows, &out)?;
            if let Some(p) = trace {
                write(&p, &report::trace_text(&output.traces))?;
            }
            if let Some(p) = summary {
                report::emit_summary(&output.rows, &p)?;
            }
            eprintln!("wrote {} rows to {}", output.rows.len(), out.display());
        }
        Command::Summarize { input, out } => {
            let text = std::fs::read_to_string(&input)?;
            let rows = report::parse_csv(&text)?;
            report::emit_summary(&rows, &out)?;
        }
    }
    Ok(())
}

fn check_codec_shape(cfg: &LinkConfig, model: &CodecModel) -> Result<()> {
    let want = cfg.shape()?;
    if model.shape != want {
        return Err(Error::Config(format!(
            "codec shape {:?} does not match the configuration {:?}",
            model.shape, want
        )));
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

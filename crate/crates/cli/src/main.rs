mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use jeit::data::{generate_corpus, Corpus, Split};
use jeit::decode::{greedy_decode, DecodeRecord};
use jeit::loss::{jeit_grad_check, oracle_check, rnnt_nll};
use jeit::metrics::EvalSummary;
use jeit::model::ModelParams;
use jeit::train::{
    evaluate_all, headline, headline_table, run_experiment, Comparison, Headline, RunReport, REPORT_FILE,
};
use jeit::Error;
use serde::Serialize;

use crate::config::Config;

const GRAD_TOLERANCE: f64 = 1e-4;
const ORACLE_TOLERANCE: f64 = 1e-9;

/// Multi-output transducer training with joint text-only objectives.
#[derive(Parser)]
#[command(name = "jeit", version)]
struct Cli {
    /// TOML experiment file; missing keys take their defaults.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `train.weights.beta=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus into `corpus_dir`.
    GenData,
    /// Print the effective configuration as TOML.
    ShowConfig,
    /// Train one regime, evaluate it and write the run directory.
    Train {
        /// Output directory [default: `<run_dir>/<regime>-seed<seed>`].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode one split with a checkpoint and write JSON lines.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "tail_eval", value_parser = parse_split)]
        split: Split,
        /// Output file [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score checkpoints on the three evaluation sets.
    Eval {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Also write the full summaries as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Finite-difference check of the joint loss gradients on a toy model.
    GradCheck {
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
    /// Compare the transducer loss with brute-force alignment sums.
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare finished runs, given as run directories or report files.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn parse_split(name: &str) -> Result<Split, String> {
    Split::ALL.into_iter().find(|s| s.name() == name).ok_or_else(|| {
        let names: Vec<_> = Split::ALL.iter().map(|s| s.name()).collect();
        format!("unknown split {name:?}; expected one of {}", names.join(", "))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<Error>().is_some_and(Error::is_usage);
            ExitCode::from(if usage { 2 } else { 3 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::GenData => gen_data(&config),
        Command::ShowConfig => {
            print!("{}", config.to_toml());
            Ok(())
        }
        Command::Train { out } => train(&config, out),
        Command::Decode { checkpoint, split, out } => decode(&config, &checkpoint, split, out.as_deref()),
        Command::Eval { checkpoints, json } => eval(&config, &checkpoints, json.as_deref()),
        Command::GradCheck { seeds } => grad_check(seeds),
        Command::OracleCheck { trials, seed } => {
            let r = oracle_check(rnnt_nll, trials, seed)?;
            println!("{} trials, max abs error {:.3e}", r.trials, r.max_abs_error);
            if r.max_abs_error >= ORACLE_TOLERANCE {
                bail!("oracle check failed: {:.3e} >= {ORACLE_TOLERANCE:e}", r.max_abs_error);
            }
            Ok(())
        }
        Command::Report { runs, json } => report(&runs, json.as_deref()),
    }
}

fn gen_data(config: &Config) -> anyhow::Result<()> {
    let corpus = generate_corpus(&config.corpus, &config.corpus_dir)?;
    for split in Split::ALL {
        println!("{:<15} {}", split.name(), corpus.len(split));
    }
    println!("vocabulary     {}", corpus.vocab.num_pieces());
    Ok(())
}

/// Loads the corpus and checks that it was generated from the configured spec.
fn load_corpus(config: &Config) -> anyhow::Result<Corpus> {
    let corpus = Corpus::load(&config.corpus_dir)?;
    if corpus.spec != config.corpus {
        return Err(Error::Config(format!(
            "{} was generated from a different corpus spec; rerun gen-data",
            config.corpus_dir.display()
        ))
        .into());
    }
    Ok(corpus)
}

fn load_checkpoint(path: &Path, corpus: &Corpus) -> anyhow::Result<ModelParams> {
    let params = ModelParams::load(path, None)?;
    if params.config.feature_dim != corpus.spec.feature_dim {
        return Err(Error::load(
            path,
            format!(
                "model expects {} feature channels, corpus has {}",
                params.config.feature_dim, corpus.spec.feature_dim
            ),
        )
        .into());
    }
    Ok(params)
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn train(config: &Config, out: Option<PathBuf>) -> anyhow::Result<()> {
    let corpus = load_corpus(config)?;
    let dir = out.unwrap_or_else(|| config.run_path());
    let result = run_experiment(&corpus, &config.train, Some(&dir))?;
    write_file(&dir.join("config.toml"), &config.to_toml())?;
    if let Some(last) = &result.report.final_loss {
        println!("step {} loss {:.4}", last.step + 1, last.total);
    }
    let label = format!("{}-seed{}", config.train.regime.name(), config.train.seed);
    print!("{}", headline_table(&[(label, result.report.headline)]));
    println!("wrote {}", dir.display());
    Ok(())
}

fn decode(config: &Config, checkpoint: &Path, split: Split, out: Option<&Path>) -> anyhow::Result<()> {
    let corpus = load_corpus(config)?;
    let params = load_checkpoint(checkpoint, &corpus)?;
    let Some(examples) = corpus.paired(split) else {
        return Err(Error::Config(format!("split {} has no audio", split.name())).into());
    };
    let mut text = String::new();
    for e in examples {
        let hyp = greedy_decode(&e.features, &params, &corpus.vocab, &config.train.decode)?;
        let record = DecodeRecord {
            id: e.id.clone(),
            text: hyp.text,
            events: hyp.events,
        };
        text.push_str(&serde_json::to_string(&record)?);
        text.push('\n');
    }
    match out {
        Some(path) => write_file(path, &text),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing stdout"),
    }
}

#[derive(Serialize)]
struct EvalEntry {
    checkpoint: PathBuf,
    headline: Headline,
    eval: std::collections::BTreeMap<Split, EvalSummary>,
}

fn checkpoint_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match path.parent().and_then(Path::file_name) {
        Some(dir) if stem == "checkpoint" => dir.to_string_lossy().into_owned(),
        _ => stem,
    }
}

fn eval(config: &Config, checkpoints: &[PathBuf], json: Option<&Path>) -> anyhow::Result<()> {
    let corpus = load_corpus(config)?;
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for path in checkpoints {
        let params = load_checkpoint(path, &corpus)?;
        let (eval, _) = evaluate_all(&params, &corpus, &config.train)?;
        let h = headline(&eval);
        rows.push((checkpoint_label(path), h));
        entries.push(EvalEntry {
            checkpoint: path.clone(),
            headline: h,
            eval,
        });
    }
    print!("{}", headline_table(&rows));
    if let Some(path) = json {
        write_file(path, &(serde_json::to_string_pretty(&entries)? + "\n"))?;
    }
    Ok(())
}

fn grad_check(seeds: u64) -> anyhow::Result<()> {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let r = jeit_grad_check(seed)?;
        println!(
            "seed {seed}: {} coordinates, max relative error {:.3e}",
            r.checked, r.max_rel_error
        );
        worst = worst.max(r.max_rel_error);
    }
    if worst >= GRAD_TOLERANCE {
        bail!("gradient check failed: {worst:.3e} >= {GRAD_TOLERANCE:e}");
    }
    Ok(())
}

fn report(runs: &[PathBuf], json: Option<&Path>) -> anyhow::Result<()> {
    let reports = runs
        .iter()
        .map(|p| {
            let path = if p.is_dir() { p.join(REPORT_FILE) } else { p.clone() };
            RunReport::load(&path)
        })
        .collect::<jeit::Result<Vec<_>>>()?;
    let comparison = Comparison::new(reports);
    print!("{}", comparison.to_text());
    if let Some(path) = json {
        write_file(path, &comparison.to_json())?;
    }
    Ok(())
}

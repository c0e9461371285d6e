//! `pru`: train, evaluate and inspect pyramidal recurrent language models.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration, 3 data, 4 numeric.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pru_core::analysis::{self, EntropyHistogram, TransformReport};
use pru_core::config::{ModelConfig, TrainConfig};
use pru_core::lm::perplexity;
use pru_core::training::{self, load_checkpoint, read_corpus, Checkpoint, LogWriter};
use pru_core::transforms::{SubsampleMode, TransformKind, TransformSpec};
use pru_core::{Error, Execution};

#[derive(Parser)]
#[command(
    name = "pru",
    version,
    about = "Pyramidal recurrent unit language models"
)]
struct Cli {
    /// Seed for every random draw; falls back to PRU_SEED, then the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run on one thread, without the data-parallel paths.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes the log and best checkpoint named in the config.
    Train(TrainArgs),
    /// Perplexity of a checkpoint on a corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Number of independent streams (defaults to the config's eval_batch_size).
        #[arg(long)]
        streams: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Entropy, embedding variance and saliency analyses.
    #[command(subcommand)]
    Analyze(Analysis),
    /// Closed-form parameter counts.
    Params(ParamsArgs),
    /// Time forward steps of the configured recurrent stack and its LSTM twin.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 10_000)]
        vocab: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Analysis {
    /// Histogram of next-token entropies along a corpus.
    Entropy {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = analysis::entropy::DEFAULT_MAX_CONTEXTS)]
        max_contexts: usize,
        #[arg(long, default_value_t = analysis::entropy::DEFAULT_BIN_WIDTH)]
        bin_width: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-category embedding variance from a token<TAB>category file.
    Variance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        categories: PathBuf,
        /// Pyramid level of the embeddings (1 = raw embeddings).
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient-norm relevance of each context token for the top-1 prediction.
    Saliency {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Context as whitespace-separated tokens.
        #[arg(long)]
        text: String,
        /// Position whose next-token prediction is explained (defaults to the last).
        #[arg(long)]
        position: Option<usize>,
        /// Include the raw per-dimension gradients.
        #[arg(long)]
        gradients: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    g: usize,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 10_000)]
    vocab: usize,
    /// Embedding size (defaults to --n).
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long)]
    untied: bool,
    /// Shrink the top layer to the embedding size instead of keeping width M.
    #[arg(long)]
    top_to_embed: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Shape(_) => 2,
        Error::Io { .. }
        | Error::Ingestion(_)
        | Error::Vocabulary { .. }
        | Error::Persistence(_) => 3,
        Error::Numeric(_) => 4,
        Error::Contract(_) => 1,
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{s}`")))
        })
        .collect()
}

fn env_seed() -> Result<Option<u64>, Error> {
    match std::env::var("PRU_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("PRU_SEED is not an integer: `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<TrainConfig, Error> {
    let mut pairs = parse_overrides(overrides)?;
    if let Some(s) = seed {
        pairs.push(("seed".into(), s.to_string()));
    }
    TrainConfig::load(path, &pairs)
}

fn run_train(args: &TrainArgs, seed: Option<u64>, exec: Execution) -> Result<(), Error> {
    let cfg = load_config(&args.config, &args.overrides, seed)?;
    if cfg.train_path.is_empty() || cfg.valid_path.is_empty() {
        return Err(Error::Config(
            "train_path and valid_path must be set".into(),
        ));
    }
    let train_tokens = read_corpus(Path::new(&cfg.train_path))?;
    let valid_tokens = read_corpus(Path::new(&cfg.valid_path))?;
    let vocab = training::build_vocab(&train_tokens, cfg.min_count)?;
    let train_ids = vocab.encode(&train_tokens);
    let valid_ids = vocab.encode(&valid_tokens);
    let mut log = LogWriter::create(Path::new(&cfg.log_path), &cfg)?;
    let outcome = training::train(&cfg, vocab.len(), &train_ids, &valid_ids, exec, |r| {
        eprintln!(
            "epoch {} train_ppl {:.3} valid_ppl {:.3} lr {}",
            r.epoch, r.train_ppl, r.valid_ppl, r.lr
        );
        log.append(r)
    })?;
    training::save_checkpoint(Path::new(&cfg.checkpoint_path), &cfg, &vocab, &outcome.best)?;
    Ok(())
}

fn encode_file(ck: &Checkpoint, path: &Path) -> Result<Vec<usize>, Error> {
    Ok(ck.vocab.encode(&read_corpus(path)?))
}

fn run_eval(
    checkpoint: &Path,
    data: &Path,
    streams: Option<usize>,
    out: Option<&Path>,
    exec: Execution,
) -> Result<(), Error> {
    let ck = load_checkpoint(checkpoint)?;
    let ids = encode_file(&ck, data)?;
    let streams = streams.unwrap_or(ck.config.eval_batch_size);
    let nll = ck.model.evaluate(exec, &ids, streams, ck.config.bptt)?;
    emit(
        out,
        &format!(
            "tokens={}\nmean_nll={:.12}\nperplexity={:.12}\n",
            ids.len(),
            nll,
            perplexity(nll)
        ),
    )
}

fn run_analysis(a: &Analysis) -> Result<(), Error> {
    match a {
        Analysis::Entropy {
            checkpoint,
            data,
            max_contexts,
            bin_width,
            out,
        } => {
            let ck = load_checkpoint(checkpoint)?;
            let ids = encode_file(&ck, data)?;
            let h = analysis::corpus_entropies(&ck.model, &ids, *max_contexts, ck.config.bptt)?;
            let hist = EntropyHistogram::from_entropies(&h, *bin_width, ck.model.vocab_size())?;
            emit(out.as_deref(), &hist.to_csv())
        }
        Analysis::Variance {
            checkpoint,
            categories,
            level,
            out,
        } => {
            let ck = load_checkpoint(checkpoint)?;
            let text = fs::read_to_string(categories).map_err(|e| Error::Io {
                path: categories.clone(),
                source: e,
            })?;
            let map = analysis::parse_category_map(&text)?;
            let (groups, empty) = analysis::group_by_category(&ck.vocab, &map);
            for c in &empty {
                eprintln!("warning: category `{c}` has no in-vocabulary members; skipped");
            }
            let rows = analysis::embedding_rows(&ck.model, *level)?;
            let table = analysis::variance_by_category(&rows, &groups)?;
            emit(out.as_deref(), &analysis::variance::variance_csv(&table))
        }
        Analysis::Saliency {
            checkpoint,
            text,
            position,
            gradients,
            out,
        } => {
            let ck = load_checkpoint(checkpoint)?;
            let tokens: Vec<&str> = text.split_whitespace().collect();
            if tokens.is_empty() {
                return Err(Error::Contract("saliency needs a non-empty --text".into()));
            }
            let ids = ck.vocab.encode(&tokens);
            let pos = position.unwrap_or(ids.len() - 1);
            let map = analysis::saliency(&ck.model, &ids, pos)?;
            let mut json = map.to_json(&ck.vocab, *gradients)?;
            json.push('\n');
            emit(out.as_deref(), &json)
        }
    }
}

fn run_params(p: &ParamsArgs) -> Result<(), Error> {
    if p.n == 0 || p.m == 0 || p.k == 0 || p.g == 0 {
        return Err(Error::Config(
            "--n, --m, --k and --g must be positive".into(),
        ));
    }
    let t = TransformReport::new(p.n, p.m, p.k, p.g);
    let mut s = String::new();
    s.push_str(&format!("linear_weights {}\n", t.linear));
    s.push_str(&format!(
        "pyramidal_weights {} ({:.1}% reduction)\n",
        t.pyramidal,
        100.0 * t.pyramidal_reduction()
    ));
    s.push_str(&format!(
        "grouped_weights {} ({:.1}% reduction)\n",
        t.grouped,
        100.0 * t.grouped_reduction()
    ));
    let embed = p.embed.unwrap_or(p.n);
    let mc = ModelConfig {
        vocab_size: p.vocab,
        embed_dim: embed,
        hidden_dim: p.m,
        layers: p.layers,
        input: TransformSpec {
            kind: TransformKind::Pyramidal,
            levels: p.k,
            groups: 1,
            mode: SubsampleMode::AvgPool,
            residual: true,
        },
        context: TransformSpec {
            kind: TransformKind::Grouped,
            levels: 1,
            groups: p.g,
            mode: SubsampleMode::AvgPool,
            residual: false,
        },
        tie_weights: !p.untied,
        last_layer_to_embed: p.top_to_embed,
        dropout: 0.0,
    };
    mc.validate()?;
    s.push('\n');
    s.push_str(&analysis::param_report(&mc).to_csv());
    emit(None, &s)
}

fn run(cli: Cli) -> Result<(), Error> {
    let seed = match cli.seed {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match &cli.command {
        Command::Train(args) => run_train(args, seed, exec),
        Command::Eval {
            checkpoint,
            data,
            streams,
            out,
        } => run_eval(checkpoint, data, *streams, out.as_deref(), exec),
        Command::Analyze(a) => run_analysis(a),
        Command::Params(p) => run_params(p),
        Command::Bench {
            config,
            overrides,
            steps,
            runs,
            vocab,
            out,
        } => {
            let cfg = load_config(config, overrides, seed)?;
            if *steps == 0 || *runs == 0 {
                return Err(Error::Config("--steps and --runs must be positive".into()));
            }
            let report = analysis::bench(&cfg.model(*vocab)?, *steps, *runs, cfg.seed)?;
            emit(out.as_deref(), &report.to_csv())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pru: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

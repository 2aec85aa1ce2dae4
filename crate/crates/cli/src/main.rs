mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use artifacts::{invalid, CmdResult, Classify};
use commands::{Ctx, SynthKind, TimingOptions, LABELED_FILE, TEMPLATE_FILE, WORKLOAD_FILE};
use config::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "aqp", version, about = "Learned approximate answers for aggregate queries")]
struct Cli {
    /// JSON settings file; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding every stage's artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for labeling and inference (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone, Default)]
struct DataArgs {
    /// CSV table.
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON schema declaring each column nominal or continuous.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic table and its schema.
    Synth {
        #[arg(long, value_enum, default_value = "transactions")]
        kind: SynthKind,
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
    },
    /// Summarize a table: cardinalities, ranges, entropies.
    Profile {
        #[command(flatten)]
        data: DataArgs,
        /// Attributes whose statistics matter (default: every continuous one).
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
        /// Attributes averaged into the mean entropy (default: all).
        #[arg(long = "where", value_delimiter = ',')]
        where_attrs: Vec<String>,
    },
    /// Expand a query template into a workload.
    Generate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        template: Option<PathBuf>,
        /// Also write the workload as SQL.
        #[arg(long)]
        sql: bool,
    },
    /// Compute exact answers for a workload.
    Label {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        workload: Option<PathBuf>,
    },
    /// Build the vocabulary and split labeled queries per target.
    Encode {
        #[arg(long)]
        labeled: Option<PathBuf>,
        /// Resolved template written by `generate`.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Train one model per aggregation target.
    Train {
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        lstm_units: Option<usize>,
        #[arg(long)]
        dense_units: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Estimate answers for a workload file.
    Predict {
        #[arg(long)]
        queries: PathBuf,
        /// File name inside the output directory.
        #[arg(long, default_value = "predictions.jsonl")]
        output: String,
    },
    /// Score every model on its test split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        warmup: Option<usize>,
        /// Timed repetitions for latency; 0 skips timing.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Latency and throughput over a range of batch sizes.
    Bench {
        #[arg(long, value_delimiter = ',')]
        batch_sizes: Vec<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> CmdResult<PathBuf> {
    match flag.or_else(|| fallback.clone()) {
        Some(p) => Ok(p),
        None => invalid(format!("--{name} is required (or set `{name}` in the config file)")),
    }
}

fn data_paths(args: DataArgs, cfg: &PipelineConfig) -> CmdResult<(PathBuf, PathBuf)> {
    Ok((
        required(args.data, &cfg.data, "data")?,
        required(args.schema, &cfg.schema, "schema")?,
    ))
}

fn run(cli: Cli) -> CmdResult<()> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).invalid(format!("cannot read config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    let threads = cli
        .threads
        .or(cfg.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return invalid("--threads must be positive");
    }
    let ctx = Ctx {
        out_dir: cli.out_dir.or(cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("aqp-out")),
        seed: cli.seed.or(cfg.seed),
        threads,
    };
    let timing = |warmup: Option<usize>, reps: Option<usize>, workers: Option<usize>| {
        let base = TimingOptions::from_settings(&cfg.metrics, threads);
        TimingOptions {
            warmup: warmup.unwrap_or(base.warmup),
            reps: reps.unwrap_or(base.reps),
            workers: workers.unwrap_or(base.workers).max(1),
        }
    };
    let in_out = |name: &str| ctx.out_dir.join(name);

    match cli.command {
        Command::Synth { kind, rows } => commands::synth(&ctx, kind, rows),
        Command::Profile { data, targets, where_attrs } => {
            let (d, s) = data_paths(data, &cfg)?;
            commands::profile(&ctx, &d, &s, &targets, &where_attrs)
        }
        Command::Generate { data, template, sql } => {
            let (d, s) = data_paths(data, &cfg)?;
            let t = required(template, &cfg.template, "template")?;
            commands::generate(&ctx, &d, &s, &t, sql)
        }
        Command::Label { data, workload } => {
            let (d, s) = data_paths(data, &cfg)?;
            commands::label(&ctx, &d, &s, &workload.unwrap_or_else(|| in_out(WORKLOAD_FILE)))
        }
        Command::Encode { labeled, template } => commands::encode(
            &ctx,
            &labeled.unwrap_or_else(|| in_out(LABELED_FILE)),
            &template.unwrap_or_else(|| in_out(TEMPLATE_FILE)),
        ),
        Command::Train {
            max_epochs,
            patience,
            lstm_units,
            dense_units,
            learning_rate,
            batch_size,
        } => {
            let mut s = cfg.model.clone();
            s.max_epochs = max_epochs.or(s.max_epochs);
            s.patience = patience.or(s.patience);
            s.lstm_units = lstm_units.or(s.lstm_units);
            s.dense_units = dense_units.or(s.dense_units);
            s.learning_rate = learning_rate.or(s.learning_rate);
            s.batch_size = batch_size.or(s.batch_size);
            commands::train(&ctx, &s)
        }
        Command::Predict { queries, output } => commands::predict(&ctx, &queries, &output),
        Command::Eval {
            data,
            warmup,
            reps,
            workers,
        } => {
            let d = data.data.or(cfg.data.clone());
            let s = data.schema.or(cfg.schema.clone());
            let pair = d.as_deref().zip(s.as_deref());
            commands::eval(&ctx, pair, timing(warmup, reps, workers))
        }
        Command::Bench {
            batch_sizes,
            warmup,
            reps,
            workers,
        } => {
            let sizes = if batch_sizes.is_empty() {
                cfg.metrics.batch_sizes.clone().unwrap_or_else(|| vec![1, 16, 256, 4096])
            } else {
                batch_sizes
            };
            commands::bench(&ctx, &sizes, timing(warmup, reps, workers))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let payload = serde_json::json!({ "error": "validation", "message": e.to_string().trim_end() });
            eprintln!("{payload}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::debug!("{f:?}");
            eprintln!("{}", f.payload());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}

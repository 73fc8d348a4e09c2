mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multicrf::oracle::{LabelStyle, Order, SyntheticSpec};
use multicrf::timing::BenchSpec;
use multicrf::{Dims, FamilyTag, ParamField, RngSeed};

use commands::{CmdResult, Failure, GradcheckArgs};
use config::{family_list, CliConfig};

/// Linear-chain CRF sequence labeler with pluggable potential functions.
#[derive(Parser)]
#[command(name = "multicrf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options that override keys of the config file.
#[derive(clap::Args)]
struct Overrides {
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of the training set to keep, in (0, 1].
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Any other key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the effective configuration after overrides.
    ShowConfig {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Label a CoNLL file with a trained model.
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Span and token scores of predicted labels against gold labels.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Compare analytic gradients and fast inference against brute force.
    Gradcheck {
        /// A family name, a comma-separated list, or `all`.
        #[arg(long, default_value = "all")]
        family: String,
        #[arg(long, default_value_t = 4)]
        labels: usize,
        #[arg(long, default_value_t = 5)]
        d_h: usize,
        #[arg(long, default_value_t = 4)]
        d_t: usize,
        #[arg(long, default_value_t = 3)]
        d_r: usize,
        #[arg(long, default_value_t = 6)]
        mlp_hidden: usize,
        #[arg(long, default_value_t = 5)]
        len: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Number of consecutive seeds starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Perturb the analytic gradient of this field (the check must then fail).
        #[arg(long, value_parser = commands::parse_field)]
        corrupt_field: Option<ParamField>,
    },
    /// Time training steps and decoding on random inputs. Writes CSV.
    Bench {
        #[arg(long, default_value = "vanilla-crf,d-trilinear,d-quadrilinear")]
        family: String,
        #[arg(long, default_value_t = 17)]
        labels: usize,
        #[arg(long, default_value_t = 100)]
        d_h: usize,
        #[arg(long, default_value_t = 100)]
        d_t: usize,
        #[arg(long, default_value_t = 128)]
        d_r: usize,
        #[arg(long, default_value_t = 128)]
        mlp_hidden: usize,
        /// Sequence length.
        #[arg(long, default_value_t = 30)]
        len: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a synthetic corpus and its embeddings.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "first", value_parser = commands::parse_order)]
        order: Order,
        #[arg(long, default_value = "plain", value_parser = commands::parse_style)]
        style: LabelStyle,
        #[arg(long, default_value_t = 5)]
        labels: usize,
        #[arg(long, default_value_t = 50)]
        vocab: usize,
        #[arg(long, default_value_t = 64)]
        d_h: usize,
        #[arg(long, default_value_t = 0.25)]
        embedding_std: f64,
        #[arg(long, default_value_t = 5)]
        min_len: usize,
        #[arg(long, default_value_t = 15)]
        max_len: usize,
        #[arg(long, default_value_t = 2000)]
        train: usize,
        #[arg(long, default_value_t = 200)]
        dev: usize,
        #[arg(long, default_value_t = 200)]
        test: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train on several fractions of the training set; one CSV row per run.
    SmallData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,1.0")]
        fractions: Vec<f64>,
        /// Seeds to repeat each fraction with; defaults to the config seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load_config(path: &Path, o: &Overrides) -> Result<CliConfig, Failure> {
    let mut cfg = CliConfig::load(path)?;
    let mut set = |k: &str, v: String| cfg.set(k, &v);
    if let Some(f) = &o.family {
        set("family", f.clone())?;
    }
    if let Some(s) = o.seed {
        set("seed", s.to_string())?;
    }
    if let Some(s) = o.subsample {
        set("subsample", s.to_string())?;
    }
    if let Some(t) = o.threads {
        set("threads", t.to_string())?;
    }
    if let Some(e) = o.max_epochs {
        set("max_epochs", e.to_string())?;
    }
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects key=value, got {kv:?}")))?;
        set(k.trim(), v.trim().to_string())?;
    }
    Ok(cfg)
}

fn families(spec: &str) -> Result<Vec<FamilyTag>, Failure> {
    Ok(family_list(spec)?)
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Train { config, overrides } => commands::train(&load_config(&config, &overrides)?),
        Command::ShowConfig { config, overrides } => {
            print!("{}", load_config(&config, &overrides)?.dump());
            Ok(())
        }
        Command::Tag {
            model,
            embeddings,
            input,
            output,
        } => commands::tag(&model, &embeddings, &input, output.as_deref()),
        Command::Eval { gold, pred, json } => commands::eval(&gold, &pred, json),
        Command::Gradcheck {
            family,
            labels,
            d_h,
            d_t,
            d_r,
            mlp_hidden,
            len,
            seed,
            seeds,
            corrupt_field,
        } => commands::gradcheck(&GradcheckArgs {
            families: families(&family)?,
            dims: Dims::new(labels, d_h, d_t, d_r).with_mlp_hidden(mlp_hidden),
            len,
            seed,
            seeds,
            corrupt: corrupt_field,
        }),
        Command::Bench {
            family,
            labels,
            d_h,
            d_t,
            d_r,
            mlp_hidden,
            len,
            batch,
            reps,
            seed,
            output,
        } => {
            let base = BenchSpec {
                family: FamilyTag::VanillaCrf,
                num_labels: labels,
                d_h,
                d_t,
                d_r,
                mlp_hidden,
                len,
                batch,
                reps,
                seed: RngSeed(seed),
            };
            commands::bench(&families(&family)?, base, output.as_deref())
        }
        Command::Synth {
            out_dir,
            order,
            style,
            labels,
            vocab,
            d_h,
            embedding_std,
            min_len,
            max_len,
            train,
            dev,
            test,
            seed,
        } => {
            let spec = SyntheticSpec {
                num_labels: labels,
                vocab_size: vocab,
                d_h,
                embedding_std,
                order,
                transitions: None,
                min_len,
                max_len,
                seed: RngSeed(seed),
                train,
                dev,
                test,
                label_style: style,
            };
            commands::synth(&spec, &out_dir)
        }
        Command::SmallData {
            config,
            fractions,
            seeds,
            output,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            commands::small_data(&cfg, &fractions, &seeds, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

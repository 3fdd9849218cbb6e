use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use pkd_harness::commands::{self, parse_list, SweepAxis};
use pkd_harness::{ExperimentConfig, TaskSource, WorkerSource};

#[derive(Parser)]
#[command(name = "pkd", version, about = "Privacy-preserving task assignment simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-key overrides.
#[derive(Args, Clone, Debug, Default)]
struct ConfigArgs {
    /// Flat `key = value` config file; unset keys take the paper defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    generator: Option<WorkerSource>,
    #[arg(long, value_enum)]
    task_generator: Option<TaskSource>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tau: Option<usize>,
    /// Decryption threshold T.
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    key_shares: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    key_bits: Option<u64>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    task_weight_bits: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Plaintext sums with simulated noise instead of Paillier.
    #[arg(long)]
    mock_crypto: bool,
    #[arg(long)]
    stack_profiles: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($arg:ident => $field:ident),*) => {$( if let Some(v) = self.$arg.clone() { c.$field = v; } )*};
        }
        set!(generator => generator, task_generator => task_generator, dims => n_dims, workers => n_workers,
             tasks => n_tasks, epsilon => epsilon, tau => tau, threshold => threshold, key_shares => key_shares,
             bins => l_bins, depth => depth_h, key_bits => key_bits, ratio => subvolume_ratio,
             task_weight_bits => task_weight_bits, seed => seed, repetitions => repetitions);
        if self.mock_crypto {
            c.mock_crypto = true;
        }
        if let Some(p) = &self.stack_profiles {
            c.stack_profiles = Some(p.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Dealer key generation: public key, key-shares and dealer key files.
    Keygen {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "keys")]
        out: PathBuf,
    },
    /// Synthetic workers and tasks.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Tree JSON, required for SUBVOLUME tasks.
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Worker profiles from StackExchange XML dumps.
    Ingest {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        votes: PathBuf,
        #[arg(long)]
        tags: PathBuf,
        /// Comma-separated tags to keep, in dimension order. Defaults to the
        /// ten common skills.
        #[arg(long, conflicts_with = "all_tags")]
        whitelist: Option<String>,
        /// Use every tag of the Tags dump.
        #[arg(long)]
        all_tags: bool,
        #[arg(long, default_value = "stack")]
        out: PathBuf,
    },
    /// Private KD-tree over a worker file.
    BuildPkd {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long = "worker-file")]
        worker_file: PathBuf,
        /// Key directory from `keygen`.
        #[arg(long)]
        keys: Option<PathBuf>,
        /// Keep raw counts (skip constrained inference).
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value = "tree.json")]
        out: PathBuf,
    },
    /// Buckets for a task file on a tree.
    Pack {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long = "task-file")]
        task_file: PathBuf,
        #[arg(long, default_value = "packing.json")]
        out: PathBuf,
    },
    /// Full pipeline over `repetitions` seeds.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Repeats `run` over values of one parameter.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// PIR answer time against library size.
    BenchPir {
        /// Comma-separated library sizes in bytes.
        #[arg(long, default_value = "8000,16000,24000,32000,40000")]
        sizes: String,
        #[arg(long, default_value_t = 8)]
        items: usize,
        #[arg(long, default_value_t = 15)]
        trials: usize,
        #[arg(long, default_value_t = 1024)]
        key_bits: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Keygen { cfg, out } => {
            let keys = commands::keygen_cmd(&cfg.resolve()?, &out)?;
            println!("wrote {} key-shares (threshold {}) to {}", keys.shares.len(), keys.public.threshold(), out.display());
        }
        Command::GenData { cfg, tree, out } => {
            commands::gen_data_cmd(&cfg.resolve()?, tree.as_deref(), &out)?;
            println!("wrote workers.tsv and tasks.tsv to {}", out.display());
        }
        Command::Ingest { posts, votes, tags, whitelist, all_tags, out } => {
            let whitelist = match (whitelist, all_tags) {
                (_, true) => None,
                (Some(list), false) => Some(parse_list(&list)?),
                (None, false) => Some(commands::default_whitelist()),
            };
            let users = commands::ingest_cmd(&posts, &votes, &tags, whitelist, &out)?;
            println!("{users} profiles written to {}", out.display());
        }
        Command::BuildPkd { cfg, worker_file, keys, raw, out } => {
            let s = commands::build_pkd_cmd(&cfg.resolve()?, &worker_file, keys.as_deref(), raw, &out)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Pack { tree, task_file, out } => {
            let (buckets, max) = commands::pack_cmd(&tree, &task_file, &out)?;
            println!("{buckets} buckets, at most {max} tasks per bucket");
        }
        Command::Run { cfg, out } => print!("{}", commands::run_cmd(&cfg.resolve()?, &out)?),
        Command::Sweep { cfg, axis, values, out } => {
            let rows = commands::sweep_cmd(&cfg.resolve()?, axis, &parse_list(&values)?, &out)?;
            println!("{} rows written to {}", rows.len(), out.display());
        }
        Command::BenchPir { sizes, items, trials, key_bits, seed, out } => {
            let b = commands::bench_pir_cmd(key_bits, &parse_list(&sizes)?, items, trials, seed, Some(&out))?;
            println!("scan rate {:.6} s/MB, intercept {:.6} s, r² {:.4}", b.scan_rate, b.fit.intercept, b.fit.r_squared);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

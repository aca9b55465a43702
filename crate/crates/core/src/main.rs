use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use startrack::commands;
use startrack::config::{config_keys, ConfigSources, RunConfig, SEED_ENV};
use startrack::Error;

#[derive(Parser)]
#[command(name = "startrack", version, about = "Star image synthesis, network training and centroiding benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value by dotted path, e.g. `net.train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for every random stream; beats the environment and the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the train and eval splits with labels and a manifest.
    GenDataset {
        #[command(flatten)]
        common: Common,
    },
    /// Train the network on the train split; writes weights and a loss log.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run the network pipeline on one frame and print centroids as JSON.
    Infer {
        #[command(flatten)]
        common: Common,
        frame: PathBuf,
        /// Weight file; defaults to `paths.weights`.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for PGM dumps of the predicted maps.
        #[arg(long)]
        dump_maps: Option<PathBuf>,
    },
    /// Run a classical detector and centroider on one frame.
    Detect {
        #[command(flatten)]
        common: Common,
        frame: PathBuf,
        /// `<liebe|witm|st16|sun>+<cog|gaussian_grid>`.
        #[arg(long, default_value = "liebe+gaussian_grid")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark the configured methods on the eval split.
    Eval {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::GenDataset { common }
            | Command::Train { common }
            | Command::Infer { common, .. }
            | Command::Detect { common, .. }
            | Command::Eval { common } => common,
        }
    }
}

fn key_listing() -> String {
    let mut s = format!("Config keys (defaults); seed precedence: --seed > {SEED_ENV} > --set/file:\n");
    for (k, v) in config_keys() {
        s.push_str(&format!("  {k} = {v}\n"));
    }
    s
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

fn emit(json: &impl serde::Serialize, out: Option<&PathBuf>) -> startrack::Result<()> {
    match out {
        Some(path) => startrack::io::write_json(path, json),
        None => {
            println!("{}", serde_json::to_string_pretty(json)?);
            Ok(())
        }
    }
}

fn run(cmd: &Command) -> startrack::Result<()> {
    let common = cmd.common();
    let cfg = RunConfig::resolve(&ConfigSources {
        file: common.config.as_deref(),
        env_seed: std::env::var(SEED_ENV).ok(),
        overrides: &common.overrides,
        flag_seed: common.seed,
    })?;
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    match cmd {
        Command::GenDataset { .. } => {
            let m = commands::gen_dataset(&cfg)?;
            eprintln!(
                "wrote {} train and {} eval images to {} (config {})",
                m.train_count,
                m.eval_count,
                cfg.paths.dataset_dir.display(),
                &m.config_hash[..12]
            );
        }
        Command::Train { .. } => {
            commands::train_network(&cfg, |e| {
                eprintln!(
                    "epoch {:>3}  L_S {:.5}  L_D {:.5}  total {:.5}  lr {:.2e}",
                    e.epoch, e.l_s, e.l_d, e.l_total, e.lr
                )
            })?;
            eprintln!("weights: {}", cfg.paths.weights.display());
        }
        Command::Infer {
            frame,
            weights,
            out,
            dump_maps,
            ..
        } => {
            let w = weights.as_ref().unwrap_or(&cfg.paths.weights);
            let list = commands::infer(&cfg, w, frame, dump_maps.as_deref())?;
            emit(&list, out.as_ref())?;
        }
        Command::Detect { frame, method, out, .. } => {
            let list = commands::detect(&cfg, method, frame)?;
            emit(&list, out.as_ref())?;
        }
        Command::Eval { .. } => {
            let bench = commands::evaluate(&cfg)?;
            print!("{}", bench.to_csv());
            eprintln!("report: {}", cfg.paths.eval_dir.join("report.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let keys = key_listing();
    let mut command = Cli::command().after_long_help(keys.clone());
    for name in ["gen-dataset", "train", "infer", "detect", "eval"] {
        command = command.mut_subcommand(name, |s| s.after_long_help(keys.clone()));
    }
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! `dto`: simulate, ingest, train, evaluate, score and decide from the
//! command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad flags, config files or output clashes. Exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "dto", version, about = "Notification delta-effect modelling and send/hold decisions")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
    /// Output directory.
    #[arg(long, required_unless_present = "print_config")]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event log with known ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_users: Option<usize>,
        #[arg(long)]
        window_hours: Option<f64>,
    },
    /// Turn an event log into censored observations, split 4:1 by user.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Events as JSON lines, or CSV when the name ends in .csv.
        #[arg(long, required_unless_present = "print_config")]
        events: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_config")]
        schema: Option<PathBuf>,
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long)]
        window_start: Option<f64>,
        #[arg(long)]
        window_end: Option<f64>,
        #[arg(long)]
        max_notifications: Option<u32>,
        #[arg(long)]
        max_visits: Option<u32>,
    },
    /// Fit a Weibull AFT model or a logistic baseline for one horizon.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "print_config")]
        observations: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_config")]
        schema: Option<PathBuf>,
        /// `aft` or `logistic:<hours>`.
        #[arg(long)]
        model: Option<String>,
        /// `naive` or `clean` labels for logistic models.
        #[arg(long)]
        labeler: Option<String>,
        /// Event log, needed for naive labels.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        observed_until: Option<f64>,
        #[arg(long)]
        ridge: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// AUC of the AFT model and per-horizon logistic models on test data.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "print_config")]
        aft: Option<PathBuf>,
        /// One per horizon; repeat the flag.
        #[arg(long)]
        logistic: Vec<PathBuf>,
        #[arg(long, required_unless_present = "print_config")]
        test: Option<PathBuf>,
        /// Event log, needed for naive labels.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Comma-separated hours.
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<f64>>,
        /// Comma-separated: naive, clean.
        #[arg(long, value_delimiter = ',')]
        labelers: Option<Vec<String>>,
        #[arg(long)]
        observed_until: Option<f64>,
    },
    /// Delta effect of sending now versus waiting, per scoring context.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "print_config")]
        model: Option<PathBuf>,
        #[arg(long, required_unless_present = "print_config")]
        contexts: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Send/hold decisions from scores: threshold, ratio or moo.
    Decide {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "print_config")]
        scores: Option<PathBuf>,
        #[arg(long)]
        rule: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        kappa: Option<f64>,
        #[arg(long)]
        c_click: Option<f64>,
        #[arg(long)]
        c_send: Option<f64>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use dto_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) => 2,
                E::Numerical(_) | E::NonFinite { .. } | E::NonConvergence(_) => 4,
                _ => 3,
            };
        }
    }
    3
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Simulate { common, seed, n_users, window_hours } => {
            commands::simulate(&common, seed, n_users, window_hours)
        }
        Command::Ingest { common, events, schema, split_seed, window_start, window_end, max_notifications, max_visits } => {
            commands::ingest(
                &common,
                events,
                schema,
                commands::IngestOverrides { split_seed, window_start, window_end, max_notifications, max_visits },
            )
        }
        Command::Train { common, observations, schema, model, labeler, events, observed_until, ridge, max_iters, tol } => {
            commands::train(
                &common,
                observations,
                schema,
                events,
                commands::TrainOverrides { model, labeler, observed_until, ridge, max_iters, tol },
            )
        }
        Command::Evaluate { common, aft, logistic, test, events, horizons, labelers, observed_until } => {
            commands::evaluate(&common, aft, logistic, test, events, horizons, labelers, observed_until)
        }
        Command::Score { common, model, contexts, horizon } => commands::score(&common, model, contexts, horizon),
        Command::Decide { common, scores, rule, kappa, c_click, c_send } => {
            commands::decide(&common, scores, rule, kappa, c_click, c_send)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

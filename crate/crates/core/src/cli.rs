//! Command-line front end: `validate`, `run` and `inspect`.
//!
//! Exit codes: 0 on success, 2 for invalid input (configuration, pattern,
//! arguments), 1 for failures while running or reading a store.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bus::TopicPattern;
use crate::kernel::VirtualTime;
use crate::recorder::RecordStore;
use crate::scenario::{run_scenario, ScenarioConfig, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "orchsim", version, about = "Event-driven orchestration simulator")]
pub struct Cli {
    /// Log filter, e.g. `warn`, `info` or `orchsim=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario config and print every problem found.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a scenario and write its report and recordings.
    Run(RunOptions),
    /// List entries of a recording store.
    Inspect(InspectOptions),
}

#[derive(Debug, Clone, Args)]
pub struct RunOptions {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for recording stores; without it stores stay in memory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Report path. Defaults to `<out-dir>/report.json`, or stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct InspectOptions {
    pub store: PathBuf,
    #[arg(long, default_value = "#")]
    pub pattern: String,
    /// Start of the publish-time window, seconds.
    #[arg(long)]
    pub from: Option<f64>,
    /// End of the publish-time window, seconds.
    #[arg(long)]
    pub to: Option<f64>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .try_init();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Validate { config } => validate(&config, &mut out),
        Command::Run(opts) => run(&opts, &mut out),
        Command::Inspect(opts) => inspect(&opts, &mut out),
    }
}

/// Prints diagnostics, one per line.
pub fn validate(config: &Path, out: &mut impl Write) -> i32 {
    let diagnostics = match ScenarioConfig::load(config) {
        Ok(cfg) => cfg.validate(),
        Err(d) => vec![d],
    };
    if diagnostics.is_empty() {
        let _ = writeln!(out, "{}: ok", config.display());
        return EXIT_OK;
    }
    for d in &diagnostics {
        let _ = writeln!(out, "{d}");
    }
    EXIT_INVALID
}

pub fn run(opts: &RunOptions, out: &mut impl Write) -> i32 {
    let mut config = match ScenarioConfig::load(&opts.config) {
        Ok(c) => c,
        Err(d) => {
            eprintln!("{d}");
            return EXIT_INVALID;
        }
    };
    if let Some(seed) = opts.seed {
        config = config.with_seed(seed);
    }
    let outcome = match run_scenario(&config, opts.out_dir.as_deref()) {
        Ok(o) => o,
        Err(ScenarioError::Invalid(diags)) => {
            for d in diags {
                eprintln!("{d}");
            }
            return EXIT_INVALID;
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            return EXIT_RUNTIME;
        }
    };
    let json = outcome.report.to_json();
    let target = opts
        .report
        .clone()
        .or_else(|| opts.out_dir.as_ref().map(|d| d.join("report.json")));
    match target {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, json + "\n") {
                eprintln!("cannot write report {}: {e}", path.display());
                return EXIT_RUNTIME;
            }
            let r = &outcome.report;
            let _ = writeln!(
                out,
                "{} episode(s), {} decision(s); report written to {}",
                r.episodes.len(),
                r.decisions.len(),
                path.display()
            );
        }
        None => {
            let _ = writeln!(out, "{json}");
        }
    }
    EXIT_OK
}

pub fn inspect(opts: &InspectOptions, out: &mut impl Write) -> i32 {
    let pattern = match TopicPattern::new(opts.pattern.clone()) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("bad pattern {:?}: {e}", opts.pattern);
            return EXIT_INVALID;
        }
    };
    let secs = |s: Option<f64>, default: VirtualTime| match s {
        None => Ok(default),
        Some(v) if v >= 0.0 && v.is_finite() => Ok(VirtualTime::from_secs_f64(v)),
        Some(v) => Err(format!("bad time {v}")),
    };
    let (from, to) = match (secs(opts.from, VirtualTime::ZERO), secs(opts.to, VirtualTime::MAX)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("{e}");
            return EXIT_INVALID;
        }
    };
    let store = match RecordStore::open_read(&opts.store) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot open {}: {e}", opts.store.display());
            return EXIT_RUNTIME;
        }
    };
    let entries = match store.query(&pattern, from, to) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_INVALID;
        }
    };
    let mut by_topic: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        let _ = writeln!(
            out,
            "{:>8}  {:>12.6}  {:>12.6}  {:<28} {:<8} {:>7} B",
            e.store_sequence,
            e.publish_time.as_secs_f64(),
            e.ingest_time.as_secs_f64(),
            e.topic.as_str(),
            e.schema_tag,
            e.payload.len()
        );
        *by_topic.entry(e.topic.as_str()).or_default() += 1;
    }
    for (topic, n) in &by_topic {
        let _ = writeln!(out, "{topic}: {n}");
    }
    let _ = writeln!(out, "total: {}", entries.len());
    EXIT_OK
}

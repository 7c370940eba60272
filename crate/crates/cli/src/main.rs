//! Command-line front end for the fingerprinting toolkit.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use dnsfp::eval::{
    benchmark, closed_world, cross_resolver, default_thresholds, open_world_binary,
    open_world_multiclass, write_pr_csv, Attack, AttackConfig, EvalError, OpenWorldSplit,
    RolePools,
};
use dnsfp::ingest::{filter_capture, read_dataset, write_dataset, IngestError, ResolverSpec};
use dnsfp::synth::{generate_dataset, CacheMode, PaddingMode, SynthConfig};
use dnsfp::{Dataset, Protocol};
use padprobe::{default_probe_specs, probe_all, read_targets_csv, summarize, write_report_csv,
               write_report_json, ReportError};

#[derive(Parser)]
#[command(name = "dnsfp", version, about = "Fingerprints apps from encrypted DNS traffic")]
struct Cli {
    /// Seed for every stochastic step; equal seeds give equal reports.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; 0 uses all available cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Omit the generated-at timestamp from reports.
    #[arg(long, global = true)]
    no_timestamps: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract one labelled trace from a packet capture.
    Ingest(IngestArgs),
    /// Generate a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Evaluate an attack on labelled traces.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Time training and per-query classification.
    Bench(BenchArgs),
    /// Audit resolvers for padding compliance.
    Probe(ProbeArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Packet capture in either standard format.
    #[arg(long)]
    pcap: PathBuf,
    /// Resolver addresses, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    resolver_ip: Vec<String>,
    #[arg(long)]
    port: u16,
    /// dot or doh.
    #[arg(long)]
    protocol: Protocol,
    /// App label to record on the trace.
    #[arg(long)]
    app: String,
    /// Resolver name to record; defaults to the first address.
    #[arg(long)]
    resolver: Option<String>,
    /// Trace id; defaults to the capture's file stem.
    #[arg(long)]
    trace_id: Option<String>,
    /// Output JSONL path (overwritten).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of distinct apps.
    #[arg(long)]
    apps: usize,
    #[arg(long)]
    traces_per_app: usize,
    /// none, edns, or custom:<req>,<resp>.
    #[arg(long, default_value = "none", value_parser = parse_padding)]
    padding: PaddingMode,
    /// cold, or warm:<rho> with rho in [0,1].
    #[arg(long, default_value = "cold", value_parser = parse_cache)]
    cache: CacheMode,
    /// Fraction of each app's queries drawn from a shared pool.
    #[arg(long, default_value_t = 0.2)]
    overlap: f64,
    /// Resolver name stamped on the traces.
    #[arg(long, default_value = "synth")]
    resolver: String,
    /// dot or doh.
    #[arg(long, default_value = "dot")]
    protocol: Protocol,
    /// Output JSONL path (overwritten).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Stratified k-fold cross-validation on one dataset.
    Closed(EvalClosedArgs),
    /// Monitored-vs-other detection with a precision/recall curve.
    OpenBinary(OpenArgs),
    /// Per-app classification with an aggregate class for strangers.
    OpenMulti(OpenArgs),
    /// Train on one dataset, score on another.
    Cross(CrossArgs),
}

#[derive(Args)]
struct EvalClosedArgs {
    /// Labelled traces, JSONL.
    #[arg(long)]
    traces: PathBuf,
    /// freq, ngrams, bnr, or segram.
    #[arg(long)]
    attack: Attack,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OpenArgs {
    /// Labelled traces, JSONL.
    #[arg(long)]
    traces: PathBuf,
    /// File of monitored app labels, one per line.
    #[arg(long, requires = "unmonitored", requires = "unknown")]
    monitored: Option<PathBuf>,
    /// File of unmonitored app labels, one per line.
    #[arg(long, requires = "monitored", requires = "unknown")]
    unmonitored: Option<PathBuf>,
    /// File of unknown app labels, one per line.
    #[arg(long, requires = "monitored", requires = "unmonitored")]
    unknown: Option<PathBuf>,
    /// freq, ngrams, bnr, or segram.
    #[arg(long)]
    attack: Attack,
    /// Monitored apps when roles are derived from the dataset.
    #[arg(long, default_value_t = 10)]
    monitored_apps: usize,
    #[arg(long, default_value_t = 100)]
    unmonitored_apps: usize,
    #[arg(long, default_value_t = 100)]
    unknown_apps: usize,
    /// Training traces per monitored app.
    #[arg(long, default_value_t = 30)]
    monitored_train: usize,
    /// Test traces per monitored app.
    #[arg(long, default_value_t = 10)]
    monitored_test: usize,
    /// Training traces per unmonitored app.
    #[arg(long, default_value_t = 3)]
    unmonitored_train: usize,
    /// Test traces per unknown app.
    #[arg(long, default_value_t = 12)]
    unknown_test: usize,
    /// Monitored resampling iterations (open-binary only).
    #[arg(long, default_value_t = 1)]
    iterations: usize,
    /// Also write the precision/recall curve as CSV (open-binary only).
    #[arg(long)]
    pr_csv: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CrossArgs {
    /// Training traces, JSONL.
    #[arg(long)]
    train: PathBuf,
    /// Test traces, JSONL.
    #[arg(long)]
    test: PathBuf,
    /// freq, ngrams, bnr, or segram.
    #[arg(long)]
    attack: Attack,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Labelled traces, JSONL.
    #[arg(long)]
    traces: PathBuf,
    /// Attacks to time, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [Attack::FreqDist, Attack::NGrams, Attack::BnR, Attack::Segram])]
    attacks: Vec<Attack>,
    /// Held-out queries, each from a distinct app.
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Target list CSV: resolver_id,protocol,host,port,doh_url,method.
    #[arg(long)]
    targets: PathBuf,
    /// Report path; .json selects JSON, anything else CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Probe(#[from] ReportError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Data(String),
}

fn parse_padding(s: &str) -> Result<PaddingMode, String> {
    match s {
        "none" => Ok(PaddingMode::None),
        "edns" => Ok(PaddingMode::EdnsRecommended),
        _ => {
            let rest = s
                .strip_prefix("custom:")
                .ok_or_else(|| format!("expected none, edns, or custom:<req>,<resp>, got {s:?}"))?;
            let (req, resp) = rest
                .split_once(',')
                .ok_or_else(|| format!("custom padding needs two block sizes, got {rest:?}"))?;
            let block_req: u32 = req.trim().parse().map_err(|_| format!("bad block {req:?}"))?;
            let block_resp: u32 = resp.trim().parse().map_err(|_| format!("bad block {resp:?}"))?;
            if block_req == 0 || block_resp == 0 {
                return Err("padding blocks must be at least 1".to_string());
            }
            Ok(PaddingMode::Custom { block_req, block_resp })
        }
    }
}

fn parse_cache(s: &str) -> Result<CacheMode, String> {
    if s == "cold" {
        return Ok(CacheMode::Cold);
    }
    let rest = s
        .strip_prefix("warm:")
        .ok_or_else(|| format!("expected cold or warm:<rho>, got {s:?}"))?;
    let rho: f64 = rest.parse().map_err(|_| format!("bad cache ratio {rest:?}"))?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(format!("cache ratio must be within [0,1], got {rho}"));
    }
    Ok(CacheMode::Warm(rho))
}

// Reports carry a timestamp unless --no-timestamps strips it for
// byte-comparable runs.
#[derive(Serialize)]
struct Stamped<T: Serialize> {
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<String>,
    #[serde(flatten)]
    report: T,
}

struct OutputOptions {
    stamp: bool,
}

impl OutputOptions {
    fn emit<T: Serialize>(&self, out: Option<&Path>, report: &T) -> Result<(), CliError> {
        let stamped = Stamped {
            generated_at: self
                .stamp
                .then(|| Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)),
            report,
        };
        let mut text = serde_json::to_string_pretty(&stamped)?;
        text.push('\n');
        match out {
            Some(path) => fs::write(path, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(read_dataset(path)?)
}

fn read_label_file(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path)?;
    let labels: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .map(str::to_string)
        .collect();
    if labels.is_empty() {
        return Err(CliError::Data(format!("{} lists no labels", path.display())));
    }
    Ok(labels)
}

fn cmd_ingest(args: &IngestArgs) -> Result<(), CliError> {
    let resolver_id = args
        .resolver
        .clone()
        .unwrap_or_else(|| args.resolver_ip[0].clone());
    let ips: Vec<&str> = args.resolver_ip.iter().map(String::as_str).collect();
    let spec = ResolverSpec::new(&resolver_id, &ips, args.port, args.protocol)?;
    let trace_id = args.trace_id.clone().unwrap_or_else(|| {
        args.pcap
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "capture".to_string())
    });
    let trace = filter_capture(&args.pcap, &spec, &args.app, &trace_id)?;
    let events = trace.events.len();
    let ds = Dataset::new(vec![trace]).map_err(IngestError::from)?;
    write_dataset(&ds, &args.out)?;
    eprintln!("wrote 1 trace ({events} events) to {}", args.out.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs, seed: u64) -> Result<(), CliError> {
    let cfg = SynthConfig {
        n_apps: args.apps,
        traces_per_app: args.traces_per_app,
        padding: args.padding,
        cache: args.cache,
        overlap: args.overlap,
        seed,
        resolver: args.resolver.clone(),
        protocol: args.protocol,
    };
    let ds = generate_dataset(&cfg);
    write_dataset(&ds, &args.out)?;
    eprintln!("wrote {} traces to {}", ds.len(), args.out.display());
    Ok(())
}

fn cmd_eval_closed(args: &EvalClosedArgs, seed: u64, output: &OutputOptions) -> Result<(), CliError> {
    let ds = load_dataset(&args.traces)?;
    let cfg = AttackConfig::new(args.attack, seed);
    let report = closed_world(&ds, &cfg, args.folds, seed)?;
    output.emit(args.out.as_deref(), &report)
}

fn open_world_inputs(args: &OpenArgs, ds: &Dataset, seed: u64) -> Result<(OpenWorldSplit, RolePools), CliError> {
    match (&args.monitored, &args.unmonitored, &args.unknown) {
        (Some(monitored), Some(unmonitored), Some(unknown)) => {
            let pools = RolePools {
                monitored: read_label_file(monitored)?,
                unmonitored: read_label_file(unmonitored)?,
                unknown: read_label_file(unknown)?,
            };
            let split = OpenWorldSplit {
                monitored_apps: pools.monitored.len(),
                monitored_train: args.monitored_train,
                monitored_test: args.monitored_test,
                unmonitored_apps: pools.unmonitored.len(),
                unmonitored_train: args.unmonitored_train,
                unknown_apps: pools.unknown.len(),
                unknown_test: args.unknown_test,
            };
            Ok((split, pools))
        }
        _ => {
            let split = OpenWorldSplit {
                monitored_apps: args.monitored_apps,
                monitored_train: args.monitored_train,
                monitored_test: args.monitored_test,
                unmonitored_apps: args.unmonitored_apps,
                unmonitored_train: args.unmonitored_train,
                unknown_apps: args.unknown_apps,
                unknown_test: args.unknown_test,
            };
            let pools = RolePools::from_dataset(ds, &split, seed)?;
            Ok((split, pools))
        }
    }
}

fn cmd_eval_open_binary(args: &OpenArgs, seed: u64, output: &OutputOptions) -> Result<(), CliError> {
    let ds = load_dataset(&args.traces)?;
    let (split, pools) = open_world_inputs(args, &ds, seed)?;
    let cfg = AttackConfig::new(args.attack, seed);
    let thresholds = default_thresholds();
    let report = open_world_binary(&split, &pools, &ds, &cfg, &thresholds, args.iterations, seed)?;
    if let Some(path) = &args.pr_csv {
        let file = fs::File::create(path)?;
        write_pr_csv(file, &report.curve).map_err(|e| CliError::Data(e.to_string()))?;
    }
    output.emit(args.out.as_deref(), &report)
}

fn cmd_eval_open_multi(args: &OpenArgs, seed: u64, output: &OutputOptions) -> Result<(), CliError> {
    let ds = load_dataset(&args.traces)?;
    let (split, pools) = open_world_inputs(args, &ds, seed)?;
    let cfg = AttackConfig::new(args.attack, seed);
    let report = open_world_multiclass(&split, &pools, &ds, &cfg, seed)?;
    output.emit(args.out.as_deref(), &report)
}

fn cmd_eval_cross(args: &CrossArgs, seed: u64, output: &OutputOptions) -> Result<(), CliError> {
    let train = load_dataset(&args.train)?;
    let test = load_dataset(&args.test)?;
    let cfg = AttackConfig::new(args.attack, seed);
    let report = cross_resolver(&train, &test, &cfg, seed)?;
    output.emit(args.out.as_deref(), &report)
}

fn cmd_bench(args: &BenchArgs, seed: u64, output: &OutputOptions) -> Result<(), CliError> {
    if args.attacks.is_empty() {
        return Err(CliError::Data("no attacks listed".to_string()));
    }
    let ds = load_dataset(&args.traces)?;
    let configs: Vec<AttackConfig> = args
        .attacks
        .iter()
        .map(|&attack| AttackConfig::new(attack, seed))
        .collect();
    let report = benchmark(&ds, &configs, args.queries, args.repeats, seed)?;
    output.emit(args.out.as_deref(), &report)
}

fn cmd_probe(args: &ProbeArgs, threads: usize) -> Result<(), CliError> {
    let targets = read_targets_csv(&args.targets)?;
    if targets.is_empty() {
        return Err(CliError::Data(format!(
            "{} lists no targets",
            args.targets.display()
        )));
    }
    let results = probe_all(&targets, &default_probe_specs(), threads.max(1));
    let file = fs::File::create(&args.out)?;
    if args.out.extension().is_some_and(|e| e == "json") {
        write_report_json(file, &results)?;
    } else {
        write_report_csv(file, &results)?;
    }
    for (protocol, summary) in summarize(&results) {
        println!(
            "{protocol}: {} targets, {} responders, no_padding {:.2}, custom {:.2}, edns468 {:.2}",
            summary.targets,
            summary.responders,
            summary.responder_fraction(padprobe::Verdict::NoPadding),
            summary.responder_fraction(padprobe::Verdict::Custom),
            summary.responder_fraction(padprobe::Verdict::Edns468),
        );
    }
    Ok(())
}

fn effective_threads(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(1, usize::from)
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let threads = effective_threads(cli.threads);
    // One global pool caps every parallel section in the run.
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Data(format!("thread pool: {e}")))?;
    let output = OutputOptions {
        stamp: !cli.no_timestamps,
    };
    match &cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Synth(args) => cmd_synth(args, cli.seed),
        Command::Eval(EvalCommand::Closed(args)) => cmd_eval_closed(args, cli.seed, &output),
        Command::Eval(EvalCommand::OpenBinary(args)) => cmd_eval_open_binary(args, cli.seed, &output),
        Command::Eval(EvalCommand::OpenMulti(args)) => cmd_eval_open_multi(args, cli.seed, &output),
        Command::Eval(EvalCommand::Cross(args)) => cmd_eval_cross(args, cli.seed, &output),
        Command::Bench(args) => cmd_bench(args, cli.seed, &output),
        Command::Probe(args) => cmd_probe(args, threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

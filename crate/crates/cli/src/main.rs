//! `taskalloc` command-line front end: single runs, sweeps, the packaged
//! acceptance suites and oracle comparisons.

mod overrides;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use taskalloc::engine::{self, RunOptions};
use taskalloc::metrics;
use taskalloc::model::validate_config;
use taskalloc::oracle;
use taskalloc::suites::{self, criterion_title, SuiteOptions, SUITES};
use taskalloc::SimConfig;
use toml::Value;

const OUT_ENV: &str = "TASKALLOC_OUT";

#[derive(Parser)]
#[command(name = "taskalloc", version, about = "Simulate ant-inspired task allocation under noisy feedback")]
struct Cli {
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write trace.csv and summary.json.
    Run(RunArgs),
    /// Check a config and print its errors and warnings.
    Validate(ConfigArgs),
    /// Run a parameter sweep described by a TOML file.
    Sweep(SweepArgs),
    /// Run a packaged acceptance suite, or `all`.
    Accept(AcceptArgs),
    /// Compare the engine against the exact chain on a tiny instance.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Simulation config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Set a config field, e.g. `gamma=0.1` or `noise.lambda=2`. Repeatable.
    #[arg(long = "override", short = 'o', value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SimConfig> {
        let base = overrides::load_config(&self.config)?;
        let parsed: Vec<(String, Value)> = self
            .overrides
            .iter()
            .map(|o| overrides::split_override(o).map(|(p, v)| (p.to_string(), v)))
            .collect::<Result<_>>()?;
        let mut c = overrides::apply(&base, &parsed)?;
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(h) = self.horizon {
            c.horizon = h;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory (default: $TASKALLOC_OUT, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep the loads of every n-th round only.
    #[arg(long, default_value_t = 1)]
    record_every: u64,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep description (TOML).
    spec: PathBuf,
    /// Output directory; overrides the file's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AcceptArgs {
    /// Suite name or `all`.
    suite: String,
    /// Seeds per scenario instead of the packaged number.
    #[arg(long)]
    seeds: Option<usize>,
    /// Monte Carlo runs per oracle comparison.
    #[arg(long)]
    runs: Option<usize>,
    /// Also write the full reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Monte Carlo runs to compare against the exact distribution.
    #[arg(long, default_value_t = 10_000)]
    runs: usize,
    /// Output directory for divergence.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn out_dir(flag: Option<&Path>, fallback: Option<&Path>) -> PathBuf {
    flag.or(fallback)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Rejects configs with errors; prints warnings.
fn checked(c: &SimConfig) -> Result<()> {
    let report = validate_config(c);
    for w in report.warnings() {
        eprintln!("{w}");
    }
    if report.has_errors() {
        let msgs: Vec<String> = report.errors().map(|i| i.to_string()).collect();
        bail!("invalid config:\n  {}", msgs.join("\n  "));
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let c = args.config.load()?;
    checked(&c)?;
    if args.record_every == 0 {
        bail!("--record-every must be positive");
    }
    let opts = RunOptions { record_every: args.record_every, parallel: c.n >= 10_000, ..RunOptions::default() };
    let trace = engine::run_with(&c, &opts)?;
    let summary = metrics::summarize(&trace, metrics::default_burn_in_for(&c));

    let out = out_dir(args.out.as_deref(), None);
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let csv = out.join("trace.csv");
    let f = fs::File::create(&csv).with_context(|| format!("cannot create {}", csv.display()))?;
    trace.write_csv(std::io::BufWriter::new(f), true)?;
    let json = out.join("summary.json");
    fs::write(&json, serde_json::to_string_pretty(&summary)? + "\n")?;

    println!("{} n={} k={} horizon={} seed={}", c.algorithm.name(), c.n, c.k, c.horizon, c.seed);
    println!("average regret {:.4}", summary.avg_regret);
    if let Some(r) = summary.avg_regret_after_burn_in {
        println!("average regret after round {} {:.4}", summary.burn_in, r);
    }
    if let Some(x) = summary.closeness {
        println!("closeness {x:.4}");
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(true)
}

fn cmd_validate(args: &ConfigArgs) -> Result<bool> {
    let c = args.load()?;
    let report = validate_config(&c);
    for i in &report.issues {
        println!("{i}");
    }
    if let Ok(gs) = c.critical_value() {
        println!("critical value {gs:.6}");
    }
    Ok(!report.has_errors())
}

fn cmd_sweep(args: &SweepArgs) -> Result<bool> {
    let spec = sweep::SweepSpec::load(&args.spec)?;
    let out = out_dir(args.out.as_deref(), spec.out.as_deref());
    let o = sweep::run(&spec, &out)?;
    println!("wrote {} rows to {}", o.rows, o.path.display());
    if o.failed > 0 {
        eprintln!("{} of {} runs failed; see the error column", o.failed, o.rows);
    }
    Ok(o.failed == 0)
}

fn cmd_accept(args: &AcceptArgs) -> Result<bool> {
    let names: Vec<&str> = if args.suite == "all" {
        SUITES.to_vec()
    } else if SUITES.contains(&args.suite.as_str()) {
        vec![args.suite.as_str()]
    } else {
        bail!("unknown suite `{}`; valid suites: {}, all", args.suite, SUITES.join(", "));
    };
    let opts = SuiteOptions { seeds: args.seeds, runs: args.runs };
    let mut reports = Vec::new();
    let mut ok = true;
    for name in names {
        let r = suites::run_suite(name, &opts)?;
        for c in &r.checks {
            println!("    {c}");
        }
        for (n, pass) in r.criteria() {
            println!(
                "C{n} {}: {}  [{name}, {:.1}s]",
                if pass { "PASS" } else { "FAIL" },
                criterion_title(n),
                r.seconds
            );
        }
        ok &= r.pass();
        reports.push(r);
    }
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_string_pretty(&reports)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(ok)
}

fn cmd_oracle(args: &OracleArgs) -> Result<bool> {
    let c = args.config.load()?;
    checked(&c)?;
    let report = oracle::compare_mc_oracle(&c, args.runs).map_err(|e| anyhow!("oracle: {e}"))?;
    for r in &report.rounds {
        println!("round {:>4}  support {:>5}  tv {:.5}  tolerance {:.5}", r.round, r.support, r.tv, r.tolerance);
    }
    println!(
        "{} {}: max tv {:.5}, worst tv/tolerance {:.3} over {} runs",
        if report.pass { "PASS" } else { "FAIL" },
        report.algorithm,
        report.max_tv,
        report.worst_ratio,
        report.runs
    );
    let out = out_dir(args.out.as_deref(), None);
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let path = out.join("divergence.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    println!("wrote {}", path.display());
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: cannot start {j} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Accept(a) => cmd_accept(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

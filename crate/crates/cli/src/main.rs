//! Configuration-driven experiment runner: verification suites, Monte
//! Carlo ensembles, and report aggregation for the dropout
//! gradient-descent library. Exit codes: 0 all checks pass, 1 a
//! verification failed, 2 usage or configuration error.

mod config;
mod manifest;
mod output;
mod suites;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use dropout_dynamics::{run_ensemble, EnsembleConfig, Error};

use config::{load_context, ExperimentContext, Overrides, ReportFormat, Suite};
use manifest::Manifest;
use output::SuiteReport;

#[derive(Parser)]
#[command(
    name = "dropout-dynamics",
    version,
    about = "Exact dynamics of gradient descent with dropout: verification suites and simulators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the closed-form dropout mask moments against enumeration
    VerifyMoments(RunArgs),
    /// Run the Monte Carlo ensembles and dump trajectories and moments
    Simulate(RunArgs),
    /// Compute the asymptotic excess covariance by three routes
    FixedPoint(RunArgs),
    /// Evaluate the convergence, averaging, and sub-optimality bounds
    Bounds(RunArgs),
    /// Check the covariance decomposition around the anchor estimator
    GaussMarkov(RunArgs),
    /// Aggregate previously written suite reports into one table
    Report(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the experiment config (JSON)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Comma-separated subset of the configured suites to run
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    suites: Option<Vec<String>>,

    /// Output directory (overrides the config)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Report format (overrides the config)
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,

    /// Worker threads (overrides the config; default: all processors)
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,

    /// Replace the config's master seed
    #[arg(long, value_name = "U64")]
    seed_override: Option<u64>,
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::VerifyMoments(a)
            | Command::Simulate(a)
            | Command::FixedPoint(a)
            | Command::Bounds(a)
            | Command::GaussMarkov(a)
            | Command::Report(a) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::VerifyMoments(_) => "verify-moments",
            Command::Simulate(_) => "simulate",
            Command::FixedPoint(_) => "fixed-point",
            Command::Bounds(_) => "bounds",
            Command::GaussMarkov(_) => "gauss-markov",
            Command::Report(_) => "report",
        }
    }

    /// Which suites the command may run; None means it runs none itself.
    fn suite_domain(&self) -> Option<&'static [Suite]> {
        match self {
            Command::VerifyMoments(_) => Some(&[Suite::Moments]),
            Command::FixedPoint(_) => Some(&[Suite::FixedPoint]),
            Command::GaussMarkov(_) => Some(&[Suite::GaussMarkov]),
            Command::Bounds(_) => Some(&[
                Suite::Minimizer,
                Suite::Dynamics,
                Suite::Bounds,
                Suite::Rp,
                Suite::Simplified,
                Suite::SingularDesign,
            ]),
            Command::Simulate(_) | Command::Report(_) => None,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify_exit(&err))
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let args = cli.command.args();
    let overrides = Overrides {
        suites: args.suites.clone(),
        out: args.out.clone(),
        format: args.format,
        parallel: args.parallel,
        seed_override: args.seed_override,
    };
    let mut ctx = load_context(&args.config, &overrides)?;

    if let Some(domain) = cli.command.suite_domain() {
        ctx.suites.retain(|s| domain.contains(s));
        if ctx.suites.is_empty() {
            let runnable: Vec<&str> = domain.iter().map(|s| s.name()).collect();
            bail!(Error::InvalidConfig {
                path: "suites".into(),
                message: format!(
                    "no requested suite applies to '{}' (it runs: {})",
                    cli.command.name(),
                    runnable.join(", ")
                ),
            });
        }
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = ctx.parallel {
        pool = pool.num_threads(threads);
    }
    let pool = pool.build().context("building the worker pool")?;
    pool.install(|| match cli.command {
        Command::Simulate(_) => cmd_simulate(&ctx),
        Command::Report(_) => cmd_report(&ctx),
        _ => cmd_suites(cli.command.name(), &ctx),
    })
}

/// Walks the error chain and maps library errors onto the exit-code
/// contract: violated hypotheses and failed convergence are verification
/// failures (1), everything else is a usage or configuration error (2).
fn classify_exit(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::StepSizeViolation { .. }
                | Error::HypothesisViolated(_)
                | Error::NoConvergence { .. }
                | Error::NotInvertible { .. }
                | Error::NotSymmetric { .. }
                | Error::NotPositiveDefinite { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}

fn cmd_suites(command: &str, ctx: &ExperimentContext) -> anyhow::Result<bool> {
    fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("cannot create output directory '{}'", ctx.out_dir.display()))?;
    let mut all_passed = true;
    for &suite in &ctx.suites {
        let report = suites::run_suite(ctx, suite)?;
        output::write_suite_report(&ctx.out_dir, &report, ctx.format)?;
        println!(
            "suite {}: {} ({} checks, {} notes)",
            report.suite,
            if report.passed { "PASS" } else { "FAIL" },
            report.rows.len(),
            report.notes.len()
        );
        all_passed &= report.passed;
    }
    Manifest::for_run(command, ctx)?.write(&ctx.out_dir)?;
    Ok(all_passed)
}

fn cmd_simulate(ctx: &ExperimentContext) -> anyhow::Result<bool> {
    fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("cannot create output directory '{}'", ctx.out_dir.display()))?;
    let schemes = ctx.schemes()?;
    for (i, scheme) in schemes.iter().enumerate() {
        let kind = ctx.config.schemes[i].kind_name();
        let cfg = EnsembleConfig::new(
            ctx.config.ensemble.replicas,
            scheme.clone(),
            ctx.config.ensemble.resample_response,
            ctx.master_seed,
        )?;
        let stats = run_ensemble(&ctx.model, &cfg)?;
        output::write_json(
            &ctx.out_dir.join(format!("ensemble_{i}_{kind}.json")),
            &stats,
        )?;
        let csv = output::trajectory_csv(&ctx.model, &cfg)?;
        output::write_text(&ctx.out_dir.join(format!("trajectory_{i}_{kind}.csv")), &csv)?;
        println!(
            "scheme {i} ({kind}): {} replicas to k = {}",
            cfg.replicas, scheme.k_max
        );
    }
    Manifest::for_run("simulate", ctx)?.write(&ctx.out_dir)?;
    Ok(true)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct MergedReport {
    sections: Vec<SuiteReport>,
    all_passed: bool,
}

fn cmd_report(ctx: &ExperimentContext) -> anyhow::Result<bool> {
    let dir = &ctx.out_dir;
    let mut paths: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("report_") && n.ends_with(".json"))
            })
            .collect(),
        Err(_) => Vec::new(),
    };
    paths.sort();
    if paths.is_empty() {
        bail!(Error::InvalidConfig {
            path: "output_dir".into(),
            message: format!("no suite reports found in '{}'", dir.display()),
        });
    }

    let mut sections = Vec::with_capacity(paths.len());
    for path in &paths {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read '{}'", path.display()))?;
        let report: SuiteReport = serde_json::from_str(&text)
            .with_context(|| format!("suite report '{}'", path.display()))?;
        sections.push(report);
    }
    let all_passed = sections.iter().all(|s| s.passed);
    let merged = MergedReport {
        sections,
        all_passed,
    };
    output::write_json(&dir.join("report.json"), &merged)?;
    if ctx.format.wants_csv() {
        let mut csv = String::from("suite,check,theoretical,observed,margin,status\n");
        for section in &merged.sections {
            csv.push_str(&output::csv_body(&section.suite, &section.rows));
        }
        output::write_text(&dir.join("report.csv"), &csv)?;
    }

    println!(
        "{:<16} {:<64} {:>13} {:>13} {:>13} {:>6}",
        "suite", "check", "theoretical", "observed", "margin", "status"
    );
    for section in &merged.sections {
        for row in &section.rows {
            println!(
                "{:<16} {:<64} {:>13.4e} {:>13.4e} {:>13.4e} {:>6}",
                section.suite,
                row.name,
                row.theoretical,
                row.observed,
                row.margin,
                if row.satisfied { "pass" } else { "FAIL" }
            );
        }
    }
    let failed: usize = merged
        .sections
        .iter()
        .map(|s| s.rows.iter().filter(|r| !r.satisfied).count())
        .sum();
    if all_passed {
        println!("all checks passed across {} suites", merged.sections.len());
    } else {
        println!("{failed} checks failed");
    }
    Manifest::for_run("report", ctx)?.write(dir)?;
    Ok(all_passed)
}

//! Command-line front end: run config-file experiments, reproduce the
//! built-in benchmark tables, and execute the oracle verification battery.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime or check
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use evmcv::error::Error;
use evmcv::harness::{
    replicate, run_experiment, table_configs, ConfigFile, ExperimentConfig, ExperimentReport,
    ReplicateSummary, TABLE_COUNT,
};
use evmcv::oracle::run_oracle_checks;
use evmcv::report::{emit_replicate_summary, emit_report, ReportFormat};

#[derive(Parser)]
#[command(
    name = "evmcv",
    version,
    about = "Monte Carlo variance reduction by empirical variance minimization",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Report destination; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_name = "csv|json", default_value = "csv")]
    format: String,
    /// Master-seed override for every experiment.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Replications per experiment; > 1 emits a median/IQR summary.
    #[arg(long, value_name = "K", default_value_t = 1)]
    replicate: usize,
    /// Experiment-level parallelism (default: logical processors).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config file.
    Run {
        /// TOML config with one [[experiment]] section per experiment.
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a built-in benchmark table (1..=7).
    Table {
        /// Table number.
        number: u32,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the oracle verification battery and print a pass/fail table.
    Verify {
        /// Seed for the Monte Carlo checks.
        #[arg(long, value_name = "U64", default_value_t = 17)]
        seed: u64,
    },
    /// List built-in tables, densities, families, and integrands.
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    let code = match cli.command {
        Command::Run { config, output } => cmd_run(&config, &output),
        Command::Table { number, output } => cmd_table(number, &output),
        Command::Verify { seed } => cmd_verify(seed),
        Command::List => cmd_list(),
    };
    ExitCode::from(code)
}

fn parse_output(output: &OutputArgs) -> Result<ReportFormat, u8> {
    if output.replicate == 0 {
        eprintln!("error: --replicate must be >= 1");
        return Err(1);
    }
    if let Some(jobs) = output.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be >= 1");
            return Err(1);
        }
        // a pool may already exist; the bound then stays as-is
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    output.format.parse::<ReportFormat>().map_err(|e| {
        eprintln!("error: {e}");
        1u8
    })
}

fn exit_code_for(errors: &[Error]) -> u8 {
    if errors.is_empty() {
        0
    } else if errors.iter().any(|e| e.exit_code() == 1) {
        1
    } else {
        2
    }
}

fn write_reports(
    reports: &[ExperimentReport],
    summaries: &[ReplicateSummary],
    replicated: bool,
    format: ReportFormat,
    out: Option<&Path>,
) -> Result<(), Error> {
    let write = |w: &mut dyn std::io::Write| -> Result<(), Error> {
        if replicated {
            emit_replicate_summary(summaries, format, w)
        } else {
            emit_report(reports, format, w)
        }
    };
    match out {
        Some(path) => {
            let mut file = std::fs::File::create(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            write(&mut file)
        }
        None => write(&mut std::io::stdout().lock()),
    }
}

fn execute(mut configs: Vec<ExperimentConfig>, output: &OutputArgs) -> u8 {
    let format = match parse_output(output) {
        Ok(f) => f,
        Err(code) => return code,
    };
    if let Some(seed) = output.seed {
        for c in &mut configs {
            c.seed = seed;
        }
    }

    let mut errors: Vec<Error> = Vec::new();
    let mut reports: Vec<ExperimentReport> = Vec::new();
    let mut summaries: Vec<ReplicateSummary> = Vec::new();

    if output.replicate > 1 {
        let results: Vec<Result<ReplicateSummary, Error>> = configs
            .par_iter()
            .map(|c| replicate(c, output.replicate, c.seed))
            .collect();
        for (config, result) in configs.iter().zip(results) {
            match result {
                Ok(summary) => {
                    for failure in &summary.failures {
                        eprintln!("{}: replicate failed: {failure}", config.id);
                        errors.push(Error::FitFailed {
                            experiment_id: config.id.clone(),
                            source: Box::new(Error::Config(failure.clone())),
                        });
                    }
                    eprintln!(
                        "{}: median svar_evm {:.6e}, median ratio {:.4}",
                        summary.experiment_id, summary.median_svar_evm, summary.median_ratio
                    );
                    summaries.push(summary);
                }
                Err(e) => {
                    eprintln!("{}: {e}", config.id);
                    errors.push(e);
                }
            }
        }
    } else {
        let results: Vec<Result<ExperimentReport, Error>> =
            configs.par_iter().map(run_experiment).collect();
        for (config, result) in configs.iter().zip(results) {
            match result {
                Ok(report) => {
                    eprintln!(
                        "{}: svar {:.6}, svar_evm {:.6e}, ratio {:.4} ({:.2}s fit)",
                        report.experiment_id,
                        report.variance.svar,
                        report.variance.svar_evm,
                        report.variance.ratio,
                        report.wall.fit_secs
                    );
                    reports.push(report);
                }
                Err(e) => {
                    eprintln!("{}: {e}", config.id);
                    errors.push(e);
                }
            }
        }
    }

    if let Err(e) =
        write_reports(&reports, &summaries, output.replicate > 1, format, output.out.as_deref())
    {
        eprintln!("error: {e}");
        return 2;
    }
    exit_code_for(&errors)
}

fn cmd_run(config_path: &Path, output: &OutputArgs) -> u8 {
    let text = match std::fs::read_to_string(config_path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read config `{}`: {e}", config_path.display());
            return 1;
        }
    };
    let file = match ConfigFile::parse(&text) {
        Ok(file) => file,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    execute(file.experiments, output)
}

fn cmd_table(number: u32, output: &OutputArgs) -> u8 {
    if !(1..=TABLE_COUNT).contains(&number) {
        eprintln!("error: table number must be in 1..={TABLE_COUNT}, got {number}");
        return 1;
    }
    match table_configs(number) {
        Ok(configs) => execute(configs, output),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_verify(seed: u64) -> u8 {
    let checks = run_oracle_checks(seed);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut failures = 0;
    for check in &checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        println!("{:width$}  {status}  {}", check.name, check.detail, width = width);
        if !check.passed {
            failures += 1;
        }
    }
    println!(
        "{} checks, {} passed, {} failed",
        checks.len(),
        checks.len() - failures,
        failures
    );
    if failures == 0 {
        0
    } else {
        2
    }
}

fn cmd_list() -> u8 {
    println!("built-in tables:");
    for number in 1..=TABLE_COUNT {
        let configs = table_configs(number).expect("table in range");
        let ids: Vec<&str> = configs.iter().map(|c| c.id.as_str()).collect();
        println!("  table {number} ({} experiments): {}", configs.len(), ids.join(", "));
    }
    println!("densities: std_normal, exp1, mvn, lognormal_gbm, product");
    println!(
        "families: poly1d, additive_poly, gauss_hermite, rotated_poly, basket_exp1, basket_exp2"
    );
    println!("integrands: sumsq, sumexp, sumcos, invnorm, basket_call");
    0
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use prollect::controllers::Method;
use prollect::error::{Error, Result};
use prollect::harness::{
    build_scenario, comparison_csv, per_seed_csv, render_table, run_monte_carlo, suite_ablation,
    suite_comm, suite_comparison, suite_scaling, write_files, ExperimentConfig, ScenarioKind,
    ScenarioParams,
};
use prollect::timing::timing_audit_csv;
use prollect::verify::{report_csv, run_all, VerifyPlan};

#[derive(Parser)]
#[command(
    name = "prollect",
    version,
    about = "Multi-agent coordination experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Comparison,
    Ablation,
    Scaling,
    Comm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Monte Carlo seeds, run as 0..seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Frozen window multiplier.
    #[arg(long, default_value_t = 1)]
    alpha: usize,
    #[arg(long = "p-drop", default_value_t = 0.0)]
    p_drop: f64,
    /// Delivery delay in cycles.
    #[arg(long, default_value_t = 0)]
    delay: usize,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    preempt: Toggle,
    /// Coordinator grid as `nx,ny`.
    #[arg(long, default_value = "1,1", value_parser = parse_partition)]
    partition: (usize, usize),
    #[arg(long = "out-dir", default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// One method on one scenario over a batch of seeds.
    Run {
        #[arg(long, default_value = "intersection")]
        scenario: ScenarioKind,
        #[arg(long, default_value = "prollect")]
        method: Method,
        /// Agent count; the scenario default when absent.
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// An experiment suite.
    Suite {
        #[arg(value_enum)]
        suite: Suite,
        #[command(flatten)]
        common: Common,
    },
    /// Timing, ISS, feasibility and blackout checks.
    Verify {
        #[arg(long = "out-dir", default_value = "results")]
        out_dir: PathBuf,
    },
    /// Prints a result CSV as a table.
    Report { csv: PathBuf },
}

fn parse_partition(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected nx,ny, got {s:?}"))?;
    let nx = a.trim().parse().map_err(|e| format!("nx: {e}"))?;
    let ny = b.trim().parse().map_err(|e| format!("ny: {e}"))?;
    Ok((nx, ny))
}

fn experiment(common: &Common, default_seeds: usize) -> Result<ExperimentConfig> {
    let mut exp = ExperimentConfig::default().with_comms(common.alpha, common.delay, common.p_drop);
    exp.seeds = common.seeds.unwrap_or(default_seeds);
    exp.preemption_enabled = common.preempt == Toggle::On;
    exp.partition = common.partition;
    exp.validate()?;
    Ok(exp)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            method,
            n,
            common,
        } => {
            let exp = experiment(&common, 1)?.with_method(method);
            let n = n.unwrap_or(scenario.default_agents());
            // Fail early on layouts that cannot be built.
            build_scenario(&prollect::harness::ScenarioSpec::new(scenario, n, 0))?;
            let (agg, rows) = run_monte_carlo(&exp, scenario, n, &ScenarioParams::default())?;
            let table = comparison_csv(&[(scenario, method, agg)]);
            write_files(
                &common.out_dir,
                &[
                    ("run.csv".to_string(), table.clone()),
                    ("run_seeds.csv".to_string(), per_seed_csv(&rows)),
                ],
            )?;
            print!("{}", render_table(&table));
            Ok(true)
        }
        Command::Suite { suite, common } => {
            let files = match suite {
                Suite::Comparison => suite_comparison(&experiment(&common, 30)?)?.0,
                Suite::Ablation => suite_ablation(&experiment(&common, 10)?)?.0,
                Suite::Scaling => suite_scaling(&experiment(&common, 10)?)?.0,
                Suite::Comm => suite_comm(&experiment(&common, 10)?)?.0,
            };
            write_files(&common.out_dir, &files)?;
            for (name, _) in &files {
                println!("{}", common.out_dir.join(name).display());
            }
            Ok(true)
        }
        Command::Verify { out_dir } => {
            let (reports, rows) = run_all(&VerifyPlan::default())?;
            let audit: Vec<_> = rows
                .iter()
                .map(|r| (r.t_step, r.t_adj_max, r.jitter, r.audit))
                .collect();
            let report = report_csv(&reports);
            write_files(
                &out_dir,
                &[
                    ("verify_report.csv".to_string(), report.clone()),
                    ("timing_audit.csv".to_string(), timing_audit_csv(&audit)),
                ],
            )?;
            print!("{}", render_table(&report));
            Ok(reports.iter().all(|r| r.passed))
        }
        Command::Report { csv } => {
            let body = std::fs::read_to_string(&csv)?;
            if body.trim().is_empty() {
                return Err(Error::Parse {
                    line: 1,
                    reason: format!("{} is empty", csv.display()),
                });
            }
            print!("{}", render_table(&body));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

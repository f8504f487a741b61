//! Monte Carlo execution, the experiment suites and CSV emission.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::run::{run_single, ExperimentConfig};
use super::scenario::{build_scenario, ScenarioKind, ScenarioParams, ScenarioSpec};
use crate::controllers::Method;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, AggregateRow, Quartiles, RunMetrics};

/// One seed's outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub scenario: ScenarioKind,
    pub method: Method,
    pub n_agents: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Runs seeds `0..exp.seeds` in parallel and aggregates them. Rows come back
/// sorted by seed whatever the execution order.
pub fn run_monte_carlo(
    exp: &ExperimentConfig,
    kind: ScenarioKind,
    n_agents: usize,
    params: &ScenarioParams,
) -> Result<(AggregateRow, Vec<RunRow>)> {
    let mut rows = (0..exp.seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let spec = ScenarioSpec {
                kind,
                n_agents,
                seed,
                params: params.clone(),
            };
            let scenario = build_scenario(&spec)?;
            let mut e = exp.clone();
            e.comm.seed = seed;
            Ok(RunRow {
                scenario: kind,
                method: exp.method,
                n_agents,
                seed,
                metrics: run_single(&scenario, &e)?,
            })
        })
        .collect::<Result<Vec<RunRow>>>()?;
    rows.sort_by_key(|r| (r.scenario, r.method, r.seed));
    let metrics: Vec<RunMetrics> = rows.iter().map(|r| r.metrics.clone()).collect();
    Ok((aggregate(&metrics), rows))
}

/// A generated file: name relative to the output directory, and contents.
pub type OutputFile = (String, String);

fn f9(x: f64) -> String {
    format!("{x:.9}")
}

fn median_cell(q: Option<Quartiles>) -> String {
    q.map_or_else(|| "--".to_string(), |q| f9(q.median))
}

/// Header of [`per_seed_csv`]. `runtime_us` is last so determinism checks
/// can drop it.
pub const PER_SEED_HEADER: &str = "scenario,method,n_agents,seed,completed,collision,deadlock,\
completion_time,min_dist,min_clearance,avg_speed,avg_dv,preempt_rate,proj_act,\
agents_completed_frac,starved_steps,runtime_us";

pub fn per_seed_csv(rows: &[RunRow]) -> String {
    let mut out = format!("{PER_SEED_HEADER}\n");
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario.name(),
            r.method.name(),
            r.n_agents,
            r.seed,
            m.completed,
            m.collision,
            m.deadlock,
            m.completion_time.map_or_else(|| "--".to_string(), f9),
            f9(m.min_dist),
            f9(m.min_clearance),
            f9(m.avg_speed),
            f9(m.avg_dv),
            f9(m.preempt_rate),
            f9(m.proj_act),
            f9(m.agents_completed_frac),
            m.starved_steps,
            f9(m.runtime_per_call_us),
        );
    }
    out
}

/// Header of [`comparison_csv`]: table columns, `median [q25, q75]` cells.
pub const COMPARISON_HEADER: &str = "scenario,method,runs,completion_rate_pct,collision_rate_pct,\
deadlock_rate_pct,completion_time,min_dist,avg_speed,avg_dv,preempt_rate,proj_act,runtime_us";

/// One comparison table cell group: scenario, method and its aggregate.
pub type ComparisonRow = (ScenarioKind, Method, AggregateRow);

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = format!("{COMPARISON_HEADER}\n");
    for (kind, method, a) in rows {
        let q = |x| format!("\"{}\"", Quartiles::cell(x));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            kind.name(),
            method.name(),
            a.runs,
            f9(a.completion_rate_pct),
            f9(a.collision_rate_pct),
            f9(a.deadlock_rate_pct),
            q(a.completion_time),
            q(a.min_dist),
            q(a.avg_speed),
            q(a.avg_dv),
            q(a.preempt_rate),
            q(a.proj_act),
            q(a.runtime_us),
        );
    }
    out
}

/// Run metadata shared by every suite: the generator and the projection
/// signature all four methods were run with.
pub fn metadata_csv(exp: &ExperimentConfig) -> String {
    format!(
        "key,value\nrng,ChaCha8 (scenario stream 0 / comms stream 1)\nprojection_signature,{:016x}\n\
quantiles,linear interpolation at rank (n - 1) q\ndv_weighting,agent-ticks\n",
        exp.projection.signature()
    )
}

/// Three scenarios at their default sizes, every method, `exp.seeds` seeds.
pub fn suite_comparison(exp: &ExperimentConfig) -> Result<(Vec<OutputFile>, Vec<ComparisonRow>)> {
    let mut aggregates = Vec::new();
    let mut all_rows = Vec::new();
    for kind in ScenarioKind::ALL {
        for method in Method::ALL {
            let e = exp.clone().with_method(method);
            let (agg, rows) =
                run_monte_carlo(&e, kind, kind.default_agents(), &ScenarioParams::default())?;
            aggregates.push((kind, method, agg));
            all_rows.extend(rows);
        }
    }
    all_rows.sort_by_key(|r| (r.scenario, r.method, r.seed));
    let files = vec![
        ("comparison.csv".to_string(), comparison_csv(&aggregates)),
        ("comparison_seeds.csv".to_string(), per_seed_csv(&all_rows)),
        ("metadata.csv".to_string(), metadata_csv(exp)),
    ];
    Ok((files, aggregates))
}

pub const ABLATION_ALPHAS: [usize; 4] = [1, 2, 3, 5];

/// One ablation cell.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub scenario: ScenarioKind,
    pub alpha: usize,
    pub preemption: bool,
    pub aggregate: AggregateRow,
}

/// Prollect on intersection and random, frozen multiplier against the
/// preemption switch, no dropout.
pub fn suite_ablation(exp: &ExperimentConfig) -> Result<(Vec<OutputFile>, Vec<AblationRow>)> {
    let mut rows = Vec::new();
    for kind in [ScenarioKind::Intersection, ScenarioKind::Random] {
        for alpha in ABLATION_ALPHAS {
            for preemption in [true, false] {
                let mut e = exp
                    .clone()
                    .with_method(Method::Prollect)
                    .with_comms(alpha, 0, 0.0);
                e.preemption_enabled = preemption;
                let (aggregate, _) =
                    run_monte_carlo(&e, kind, kind.default_agents(), &ScenarioParams::default())?;
                rows.push(AblationRow {
                    scenario: kind,
                    alpha,
                    preemption,
                    aggregate,
                });
            }
        }
    }
    let mut csv = String::from(
        "scenario,alpha,preemption,completion_rate_pct,collision_rate_pct,avg_dv_med,preempt_rate_med,proj_act_med\n",
    );
    for r in &rows {
        let a = &r.aggregate;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.scenario.name(),
            r.alpha,
            if r.preemption { "on" } else { "off" },
            f9(a.completion_rate_pct),
            f9(a.collision_rate_pct),
            median_cell(a.avg_dv),
            median_cell(a.preempt_rate),
            median_cell(a.proj_act),
        );
    }
    Ok((vec![("ablation.csv".to_string(), csv)], rows))
}

/// Agent counts swept per scenario.
pub fn scaling_sizes(kind: ScenarioKind) -> [usize; 3] {
    match kind {
        ScenarioKind::Bottleneck => [16, 32, 64],
        _ => [20, 40, 80],
    }
}

/// One scaling point.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub scenario: ScenarioKind,
    pub method: Method,
    pub n_agents: usize,
    pub aggregate: Option<AggregateRow>,
}

pub const SCALING_HEADER: &str =
    "n_agents,completion_rate_pct,runtime_us_med,avg_dv_med,preempt_rate_med";

/// Every method at three sizes per scenario, one file per scenario and
/// method. A size whose layout cannot be built is written as `--`.
pub fn suite_scaling(exp: &ExperimentConfig) -> Result<(Vec<OutputFile>, Vec<ScalingRow>)> {
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for kind in ScenarioKind::ALL {
        for method in Method::ALL {
            let mut csv = format!("{SCALING_HEADER}\n");
            for n in scaling_sizes(kind) {
                let e = exp.clone().with_method(method);
                let aggregate = match run_monte_carlo(&e, kind, n, &ScenarioParams::default()) {
                    Ok((a, _)) => Some(a),
                    Err(Error::Scenario(_)) => None,
                    Err(err) => return Err(err),
                };
                match &aggregate {
                    Some(a) => {
                        let _ = writeln!(
                            csv,
                            "{n},{},{},{},{}",
                            f9(a.completion_rate_pct),
                            median_cell(a.runtime_us),
                            median_cell(a.avg_dv),
                            median_cell(a.preempt_rate),
                        );
                    }
                    None => {
                        let _ = writeln!(csv, "{n},--,--,--,--");
                    }
                }
                rows.push(ScalingRow {
                    scenario: kind,
                    method,
                    n_agents: n,
                    aggregate,
                });
            }
            files.push((format!("{}_{}.csv", kind.name(), method.name()), csv));
        }
    }
    Ok((files, rows))
}

pub const COMM_ALPHAS: [usize; 3] = [1, 3, 5];
pub const COMM_DELAYS: [usize; 2] = [0, 1];

/// Drop probabilities 0, 0.05, ..., 0.5.
pub fn comm_p_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 20.0).collect()
}

/// `p` with the decimal point removed, as in `delay_p02` for 0.2.
pub fn p_tag(p: f64) -> String {
    format!("{p}").replace('.', "")
}

/// One comm sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct CommRow {
    pub alpha: usize,
    pub delay: usize,
    pub p_drop: f64,
    pub completion_rate_pct: f64,
    pub collision_rate_pct: f64,
}

/// Prollect on the intersection under every (alpha, delay, p_drop).
pub fn suite_comm(exp: &ExperimentConfig) -> Result<(Vec<OutputFile>, Vec<CommRow>)> {
    let kind = ScenarioKind::Intersection;
    let mut rows = Vec::new();
    for alpha in COMM_ALPHAS {
        for delay in COMM_DELAYS {
            for p_drop in comm_p_grid() {
                let e = exp
                    .clone()
                    .with_method(Method::Prollect)
                    .with_comms(alpha, delay, p_drop);
                let (a, _) =
                    run_monte_carlo(&e, kind, kind.default_agents(), &ScenarioParams::default())?;
                rows.push(CommRow {
                    alpha,
                    delay,
                    p_drop,
                    completion_rate_pct: a.completion_rate_pct,
                    collision_rate_pct: a.collision_rate_pct,
                });
            }
        }
    }
    let mut files = Vec::new();
    for alpha in COMM_ALPHAS {
        for delay in COMM_DELAYS {
            let mut csv = String::from("p_drop,completion_rate_pct\n");
            for r in rows.iter().filter(|r| r.alpha == alpha && r.delay == delay) {
                let _ = writeln!(csv, "{},{}", f9(r.p_drop), f9(r.completion_rate_pct));
            }
            files.push((format!("dropout_delay{delay}_alpha{alpha}.csv"), csv));
        }
        for p in comm_p_grid() {
            let mut csv = String::from("delay_steps,completion_rate_pct\n");
            for r in rows.iter().filter(|r| r.alpha == alpha && r.p_drop == p) {
                let _ = writeln!(csv, "{},{}", r.delay, f9(r.completion_rate_pct));
            }
            files.push((format!("delay_p{}_alpha{alpha}.csv", p_tag(p)), csv));
        }
    }
    files.sort();
    Ok((files, rows))
}

/// Writes `files` under `dir`, creating it if needed.
pub fn write_files(dir: &Path, files: &[OutputFile]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Renders a CSV as an aligned plain-text table.
pub fn render_table(csv: &str) -> String {
    let rows: Vec<Vec<String>> = csv.lines().map(split_csv_line).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = width[c]))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("  "));
        }
    }
    out
}

/// Splits one CSV line, honouring double-quoted fields.
fn split_csv_line(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for ch in line.chars() {
        match ch {
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(std::mem::take(&mut cur)),
            _ => cur.push(ch),
        }
    }
    out.push(cur);
    out
}

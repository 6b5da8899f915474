//! Benchmark suites: optimum values per instance, checked against brute
//! force where the strategy space is small enough.

use std::ops::RangeInclusive;
use std::time::Instant;

use decprog::bnb::{self, SolveParams};
use decprog::diagram::{strategy_space_size, Diagram};
use decprog::formulation::{DecisionModel, FormulationOptions};
use decprog::models;
use decprog::paths::Utility;
use decprog::strategy::brute_force_optimum;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{BenchArgs, Suite};
use crate::commands::{create_dir, csv_writer, solve_params, solver_report};
use crate::error::CliError;
use crate::report::{digest, fmt_f64, RunReport};

/// Largest strategy space checked by enumeration.
pub const ORACLE_CAP: u128 = 1 << 16;
/// Relative agreement required between solver and enumeration.
pub const ORACLE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub seed: Option<u64>,
    pub binaries: usize,
    pub continuous: usize,
    pub status: String,
    pub objective: Option<f64>,
    pub oracle: Option<f64>,
    pub agree: Option<bool>,
    pub nodes: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SizeSummary {
    pub size: usize,
    pub instances: usize,
    pub failures: usize,
    pub oracle_checked: usize,
    pub agreement_rate: Option<f64>,
}

/// Parses `a..b` (inclusive), `a,b,c` or a single size.
pub fn parse_sizes(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("sizes must look like 3..7, 2,3,4 or 5; got {text}"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok(RangeInclusive::new(a, b).collect());
    }
    text.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn instance(d: &Diagram, size: usize, seed: Option<u64>, params: &SolveParams, oracle: bool) -> BenchRow {
    let mut row = BenchRow {
        size,
        seed,
        binaries: 0,
        continuous: 0,
        status: "error".into(),
        objective: None,
        oracle: None,
        agree: None,
        nodes: None,
        error: None,
    };
    let model = match DecisionModel::build_base(d, &Utility::identity(), FormulationOptions::default()) {
        Ok(m) => m,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let stats = model.statistics();
    row.binaries = stats.binaries;
    row.continuous = stats.continuous;
    match bnb::solve(&model, params) {
        Ok(sol) => {
            row.status = format!("{:?}", sol.status()).to_lowercase();
            row.nodes = Some(sol.milp.node_count);
            if sol.strategy.is_some() {
                row.objective = Some(sol.objective());
            }
        }
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    if oracle && strategy_space_size(d).is_ok_and(|n| n <= ORACLE_CAP) {
        if let Ok((_, best)) = brute_force_optimum(d, &Utility::identity(), ORACLE_CAP) {
            row.oracle = Some(best);
            row.agree =
                Some(row.objective.is_some_and(|v| (v - best).abs() <= ORACLE_TOL * v.abs().max(best.abs()).max(1.0)));
        }
    }
    row
}

pub fn summarize(rows: &[BenchRow]) -> Vec<SizeSummary> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.size).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|size| {
            let of_size: Vec<&BenchRow> = rows.iter().filter(|r| r.size == size).collect();
            let checked: Vec<bool> = of_size.iter().filter_map(|r| r.agree).collect();
            SizeSummary {
                size,
                instances: of_size.len(),
                failures: of_size.iter().filter(|r| r.error.is_some()).count(),
                oracle_checked: checked.len(),
                agreement_rate: (!checked.is_empty())
                    .then(|| checked.iter().filter(|&&a| a).count() as f64 / checked.len() as f64),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn run(args: &BenchArgs) -> Result<(RunReport, Vec<BenchRow>), CliError> {
    let start = Instant::now();
    let params = solve_params(&args.solver)?;
    let sizes = match &args.sizes {
        Some(text) => parse_sizes(text)?,
        None => match args.suite {
            Suite::PigFarm => (3..=7).collect(),
            Suite::NMonitoring => (2..=4).collect(),
        },
    };
    let instances: Vec<(usize, Option<u64>)> = match args.suite {
        Suite::PigFarm => {
            if sizes.iter().any(|&m| m < 2) {
                return Err(CliError::Usage("the pig farm needs at least two months".into()));
            }
            sizes.iter().map(|&m| (m, None)).collect()
        }
        Suite::NMonitoring => {
            if sizes.contains(&0) {
                return Err(CliError::Usage("N-monitoring needs at least one report".into()));
            }
            sizes.iter().flat_map(|&n| (args.seed..args.seed + args.seeds).map(move |s| (n, Some(s)))).collect()
        }
    };
    let suite = match args.suite {
        Suite::PigFarm => "pig-farm",
        Suite::NMonitoring => "n-monitoring",
    };
    let identity = format!("{suite} sizes={sizes:?} seed={} seeds={}", args.seed, args.seeds);
    let mut report = RunReport::new("bench", identity.as_bytes());
    report.input_digest = digest(identity.as_bytes());
    solver_report(&mut report, &args.solver);
    report
        .param("suite", suite)
        .param("sizes", &sizes)
        .param("seed", args.seed)
        .param("seeds", args.seeds)
        .param("jobs", args.jobs);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker(s): {e}", args.jobs)))?;
    let rows: Vec<BenchRow> = pool.install(|| {
        instances
            .par_iter()
            .map(|&(size, seed)| {
                let d = match args.suite {
                    Suite::PigFarm => models::pig_farm(size),
                    Suite::NMonitoring => models::n_monitoring(size, seed.expect("seeded suite")),
                };
                let row = instance(&d, size, seed, &params, args.suite == Suite::NMonitoring);
                log::info!("{suite} size={size} seed={seed:?}: {:?}", row.objective);
                row
            })
            .collect()
    });

    create_dir(&args.out)?;
    let path = args.out.join(format!("bench_{suite}.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record([
        "size",
        "seed",
        "binaries",
        "continuous",
        "status",
        "objective",
        "oracle",
        "agree",
        "nodes",
        "error",
    ])?;
    for r in &rows {
        w.write_record([
            r.size.to_string(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.binaries.to_string(),
            r.continuous.to_string(),
            r.status.clone(),
            opt(r.objective),
            opt(r.oracle),
            r.agree.map(|a| a.to_string()).unwrap_or_default(),
            r.nodes.map(|n| n.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(CliError::io(&path))?;
    report.outputs.push(path);

    let summary = summarize(&rows);
    let path = args.out.join(format!("bench_{suite}_summary.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["size", "instances", "failures", "oracle_checked", "agreement_rate"])?;
    for s in &summary {
        w.write_record([
            s.size.to_string(),
            s.instances.to_string(),
            s.failures.to_string(),
            s.oracle_checked.to_string(),
            opt(s.agreement_rate),
        ])?;
        match s.agreement_rate {
            Some(rate) => {
                println!("size {}: {} instance(s), oracle agreement {:.1}%", s.size, s.instances, 100.0 * rate)
            }
            None => println!("size {}: {} instance(s)", s.size, s.instances),
        }
    }
    w.flush().map_err(CliError::io(&path))?;
    report.outputs.push(path);
    for r in rows.iter().filter(|_| args.suite == Suite::PigFarm) {
        println!("months {}: {}", r.size, r.objective.map(|v| format!("{v:.6}")).unwrap_or_else(|| r.status.clone()));
    }
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    report.status = if failures == 0 { "complete".into() } else { format!("{failures} instance(s) failed") };
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.write(&args.out)?;
    Ok((report, rows))
}

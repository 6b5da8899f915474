use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use decprog::bnb::{self, CutPolicy, SolveParams};
use decprog::diagram::{strategy_space_size, validate, Diagram};
use decprog::error::{DiagramError, StrategyError};
use decprog::formulation::{DecisionModel, FormulationOptions, Objective};
use decprog::models::{self, RandomShape, SplitMix64};
use decprog::pareto::{self, FrontierConfig, ObjectivePoint};
use decprog::paths::{PathTable, Utility, DEFAULT_PATH_CAP};
use decprog::strategy::{
    cvar_direct, deviation_measures, distribution, enumerate_strategies, expected_by_value, expected_utility,
    var_direct, GlobalStrategy,
};
use decprog_milp::{MilpStatus, Sense};

use crate::args::{
    CutArg, EvaluateArgs, FrontierArgs, GenerateArgs, GenerateKind, ObjectivesArg, PathsArgs, SenseArg, SolveArgs,
    SolverFlags,
};
use crate::error::CliError;
use crate::report::{fmt_f64, RunReport};

/// Strategy spaces up to this size are written out in full by `frontier`.
pub const SCATTER_CAP: u128 = 1 << 16;

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(CliError::io(path))
}

fn parse_diagram(path: &Path, bytes: &[u8]) -> Result<Diagram, CliError> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    Diagram::from_json_str(text).map_err(|e| match e {
        DiagramError::Json(e) => CliError::Parse { path: path.to_path_buf(), message: e.to_string() },
        other => other.into(),
    })
}

/// Reads, parses and validates a diagram file.
pub fn load(path: &Path) -> Result<(Vec<u8>, Diagram), CliError> {
    let bytes = read(path)?;
    let d = parse_diagram(path, &bytes)?;
    let report = validate(&d);
    if !report.is_valid() {
        return Err(CliError::Invalid(report));
    }
    Ok((bytes, d))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(CliError::io(p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

pub fn solve_params(flags: &SolverFlags) -> Result<SolveParams, CliError> {
    if !(flags.gap > 0.0) {
        return Err(CliError::Usage(format!("gap must be positive, got {}", flags.gap)));
    }
    let mut p = SolveParams::default();
    p.milp.gap_tolerance = flags.gap;
    p.milp.node_limit = flags.node_limit;
    p.milp.time_limit = match flags.time_limit {
        Some(t) if t >= 0.0 && t.is_finite() => Some(Duration::from_secs_f64(t)),
        Some(t) => return Err(CliError::Usage(format!("time limit must be a nonnegative number of seconds, got {t}"))),
        None => None,
    };
    p.cuts = match flags.cuts {
        CutArg::Off => CutPolicy::Off,
        CutArg::Probability => CutPolicy::ProbabilityCut,
        CutArg::ActivePath => CutPolicy::ProbabilityAndActivePath,
    };
    Ok(p)
}

fn formulation_options(flags: &SolverFlags) -> FormulationOptions {
    FormulationOptions { normalize_utilities: flags.normalize, ..FormulationOptions::default() }
}

pub fn solver_report(report: &mut RunReport, flags: &SolverFlags) {
    report
        .param("cuts", format!("{:?}", flags.cuts).to_lowercase())
        .param("gap", flags.gap)
        .param("normalize", flags.normalize)
        .param("node_limit", flags.node_limit)
        .param("time_limit", flags.time_limit);
}

pub fn status_name(status: MilpStatus) -> &'static str {
    match status {
        MilpStatus::Optimal => "optimal",
        MilpStatus::Feasible => "feasible",
        MilpStatus::Infeasible => "infeasible",
        MilpStatus::Limit => "limit",
    }
}

fn parse_sense(text: &str) -> Result<Sense, CliError> {
    use clap::ValueEnum;
    match SenseArg::from_str(text, true)
        .map_err(|_| CliError::Usage(format!("sense must be le, ge or eq, got {text}")))?
    {
        SenseArg::Le => Ok(Sense::Le),
        SenseArg::Ge => Ok(Sense::Ge),
        SenseArg::Eq => Ok(Sense::Eq),
    }
}

fn parse_number(text: &str, what: &str) -> Result<f64, CliError> {
    text.parse().map_err(|_| CliError::Usage(format!("{what} must be a number, got {text}")))
}

pub fn solve(args: &SolveArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let (bytes, d) = load(&args.model)?;
    let mut report = RunReport::new("solve", &bytes);
    solver_report(&mut report, &args.solver);
    let params = solve_params(&args.solver)?;
    let mut model = DecisionModel::build_base(&d, &Utility::identity(), formulation_options(&args.solver))?;
    let mut alpha = None;
    if let Some(v) = &args.cvar {
        let (a, w) = (v[0], v[1]);
        model.add_cvar_block(a)?;
        let objective = if w == 1.0 {
            Objective::Expected
        } else if w == 0.0 {
            Objective::Tail
        } else if w > 0.0 && w < 1.0 {
            Objective::Mixed { w }
        } else {
            return Err(CliError::Usage(format!("cvar weight must lie in [0, 1], got {w}")));
        };
        model.set_objective(objective)?;
        report.param("cvar_alpha", a).param("cvar_weight", w);
        alpha = Some(a);
    }
    if let Some(v) = &args.chance {
        let t = parse_number(&v[0], "chance threshold")?;
        let p = parse_number(&v[1], "chance level")?;
        let sense = parse_sense(&v[2])?;
        model.add_chance_constraint(t, p, sense)?;
        report.param("chance", v);
    }
    if let Some(v) = &args.edr {
        model.add_edr_objective_term(v[0], v[1])?;
        report.param("edr_target", v[0]).param("edr_weight", v[1]);
    }
    if let Some(path) = &args.export_lp {
        model.export_lp(path)?;
        report.outputs.push(path.clone());
    }
    let stats = model.statistics();
    report.param("binaries", stats.binaries).param("continuous", stats.continuous);
    let solution = bnb::solve(&model, &params)?;
    report.status = status_name(solution.status()).into();
    report.node_count = Some(solution.milp.node_count);
    if let Some(z) = &solution.strategy {
        report.gap = Some(solution.milp.gap);
        report.objectives.insert("objective".into(), solution.objective());
        report.objectives.insert("expected_utility".into(), expected_utility(&d, &Utility::identity(), z));
        if let Some(a) = alpha {
            report.objectives.insert("cvar".into(), cvar_direct(&distribution(&d, &Utility::identity(), z), a)?);
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        report.write(dir)?;
    }
    println!("status: {}", report.status);
    match solution.status() {
        MilpStatus::Infeasible => return Err(CliError::Infeasible),
        MilpStatus::Limit => return Err(CliError::NoSolution),
        MilpStatus::Optimal | MilpStatus::Feasible => {}
    }
    let z = solution.strategy.as_ref().expect("incumbent has a strategy");
    println!("objective: {}", fmt_f64(solution.objective()));
    for (k, v) in &report.objectives {
        if k != "objective" {
            println!("{k}: {}", fmt_f64(*v));
        }
    }
    println!("gap: {:e}", solution.milp.gap);
    println!("nodes: {}", solution.milp.node_count);
    println!("strategy: {}", z.to_json(&d));
    Ok(report)
}

pub fn validate_cmd(path: &Path) -> Result<(), CliError> {
    let bytes = read(path)?;
    let d = parse_diagram(path, &bytes)?;
    let report = validate(&d);
    for f in &report.errors {
        println!("error: {f}");
    }
    for f in &report.warnings {
        println!("warning: {f}");
    }
    if report.is_valid() {
        println!("valid: {} node(s), {} decision node(s)", d.num_nodes(), d.decision_nodes().len());
        Ok(())
    } else {
        Err(CliError::Invalid(report))
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let (mut bytes, d) = load(&args.model)?;
    let strategy_bytes = read(&args.strategy)?;
    let text = String::from_utf8_lossy(&strategy_bytes);
    let z = GlobalStrategy::from_json(&d, &text).map_err(|e| match e {
        StrategyError::Json(message) => CliError::Parse { path: args.strategy.clone(), message },
        other => other.into(),
    })?;
    bytes.extend_from_slice(&strategy_bytes);
    let mut report = RunReport::new("evaluate", &bytes);
    report.param("alpha", args.alpha).param("target", args.target);
    let u = Utility::identity();
    let dist = distribution(&d, &u, &z);
    let mut values = vec![("expected_utility".to_string(), expected_utility(&d, &u, &z))];
    for (&v, e) in d.value_nodes().iter().zip(expected_by_value(&d, &u, &z)) {
        values.push((format!("expected_{}", d.node(v).label), e));
    }
    values.push(("var".into(), var_direct(&dist, args.alpha)?));
    values.push(("cvar".into(), cvar_direct(&dist, args.alpha)?));
    let dev = deviation_measures(&dist, args.target.unwrap_or(dist.mean()));
    if args.target.is_some() {
        values.push(("edr".into(), dev.edr));
    }
    values.push(("ad".into(), dev.ad));
    values.push(("lsad".into(), dev.lsad));
    for (k, v) in values {
        println!("{k}: {}", fmt_f64(v));
        report.objectives.insert(k, v);
    }
    report.status = "evaluated".into();
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let path = dir.join("distribution.csv");
        let file = std::fs::File::create(&path).map_err(CliError::io(&path))?;
        dist.write_csv(std::io::BufWriter::new(file)).map_err(CliError::io(&path))?;
        report.outputs.push(path);
        report.wall_time_s = start.elapsed().as_secs_f64();
        report.write(dir)?;
    }
    Ok(report)
}

fn frontier_config(d: &Diagram, args: &FrontierArgs) -> Result<FrontierConfig, CliError> {
    let kind =
        args.objectives.unwrap_or(if args.alpha.is_some() { ObjectivesArg::EuCvar } else { ObjectivesArg::Values });
    let mut config = match kind {
        ObjectivesArg::Values => FrontierConfig::per_value_node(d),
        ObjectivesArg::EuCvar => {
            let alpha = args.alpha.ok_or_else(|| CliError::Usage("eu-cvar objectives need --alpha".into()))?;
            FrontierConfig::expectation_and_tail(alpha)
        }
    };
    config.options = formulation_options(&args.solver);
    config.solve = solve_params(&args.solver)?;
    Ok(config)
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    let file = std::fs::File::create(path).map_err(CliError::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn frontier(args: &FrontierArgs) -> Result<(RunReport, Vec<ObjectivePoint>), CliError> {
    let start = Instant::now();
    let (bytes, d) = load(&args.model)?;
    let mut report = RunReport::new("frontier", &bytes);
    solver_report(&mut report, &args.solver);
    let config = frontier_config(&d, args)?;
    let labels: Vec<String> = config.criteria.iter().map(|&c| pareto::criterion_label(&d, c, config.alpha)).collect();
    report.param("objectives", &labels).param("alpha", config.alpha);
    let points = pareto::frontier(&d, &config)?;
    create_dir(&args.out)?;

    let path = args.out.join("frontier.csv");
    let file = std::fs::File::create(&path).map_err(CliError::io(&path))?;
    pareto::write_frontier_csv(&d, &labels, &points, std::io::BufWriter::new(file))?;
    report.outputs.push(path);

    if strategy_space_size(&d)? <= SCATTER_CAP {
        let path = args.out.join("scatter.csv");
        let mut w = csv_writer(&path)?;
        let mut header = labels.clone();
        header.extend(["non_dominated".to_string(), "strategy".to_string()]);
        w.write_record(&header)?;
        for z in enumerate_strategies(&d, SCATTER_CAP)? {
            let values = pareto::evaluate(&d, &config, &z)?;
            let on_frontier = points.iter().any(|p| p.strategy == z);
            let mut record: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
            record.push(u8::from(on_frontier).to_string());
            record.push(z.to_json(&d));
            w.write_record(&record)?;
        }
        w.flush().map_err(CliError::io(&path))?;
        report.outputs.push(path);
    }

    for (t, p) in points.iter().enumerate() {
        let values: Vec<String> = p.values.iter().map(|&v| fmt_f64(v)).collect();
        println!("point {t}: {} {}", values.join(" "), p.strategy.to_json(&d));
    }
    println!("frontier points: {}", points.len());
    report.status = "complete".into();
    report.objectives.insert("frontier_points".into(), points.len() as f64);
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.write(&args.out)?;
    Ok((report, points))
}

pub fn generate(args: &GenerateArgs) -> Result<Diagram, CliError> {
    let d = match args.kind {
        GenerateKind::PigFarm { months } => {
            if months < 2 {
                return Err(CliError::Usage("the pig farm needs at least two months".into()));
            }
            models::pig_farm(months)
        }
        GenerateKind::NMonitoring { n, seed } => {
            if n == 0 {
                return Err(CliError::Usage("N-monitoring needs at least one report".into()));
            }
            models::n_monitoring(n, seed)
        }
        GenerateKind::DoubleMonitoring { seed } => {
            models::double_monitoring(&models::DoubleMonitoringParams::sample(&mut SplitMix64::new(seed)))
        }
        GenerateKind::Random { seed, chance, decisions, values, max_states, max_info } => {
            if chance == 0 || values == 0 || max_states < 2 {
                return Err(CliError::Usage("random diagrams need a chance node, a value node and two states".into()));
            }
            let shape = RandomShape {
                chance_nodes: chance,
                decision_nodes: decisions,
                value_nodes: values,
                max_states,
                max_info,
                ..RandomShape::default()
            };
            models::random_diagram(&shape, seed)
        }
    };
    write_output(args.output.as_deref(), &(d.to_json_string() + "\n"))?;
    Ok(d)
}

pub fn paths(args: &PathsArgs) -> Result<usize, CliError> {
    let (_, d) = load(&args.model)?;
    let table = PathTable::build(&d, &Utility::identity(), DEFAULT_PATH_CAP)?;
    let mut out = Vec::new();
    table.write_csv(&mut out).expect("writing to memory cannot fail");
    match &args.output {
        Some(p) => std::fs::write(p, &out).map_err(CliError::io(p))?,
        None => std::io::stdout().write_all(&out).map_err(CliError::io(PathBuf::from("<stdout>")))?,
    }
    Ok(table.len())
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_decprog");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("DECPROG_LOG", "off").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, name: &str, kind: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["generate"];
    args.extend_from_slice(kind);
    args.extend(["--output", path.to_str().unwrap()]);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

fn field(text: &str, key: &str) -> f64 {
    let line =
        text.lines().find(|l| l.starts_with(&format!("{key}: "))).unwrap_or_else(|| panic!("no {key} in {text}"));
    line[key.len() + 2..].trim().parse().unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("run_report.json")).unwrap()).unwrap()
}

#[test]
fn validate_accepts_generated_models() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "pf.json", &["pig-farm", "--months", "3"]);
    let o = run(&["validate", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("valid:"));
}

#[test]
fn validate_names_the_broken_rule() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "pf.json", &["pig-farm", "--months", "3"]);
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    json["cpts"][0]["rows"][0]["p"] = serde_json::json!([0.2, 0.9]);
    std::fs::write(&model, json.to_string()).unwrap();
    let o = run(&["validate", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("row-normalization"), "{}", stdout(&o));
}

#[test]
fn malformed_input_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let model = tmp.path().join("bad.json");
    std::fs::write(&model, "{ \"nodes\": [").unwrap();
    for cmd in ["validate", "solve"] {
        let o = run(&[cmd, model.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{cmd}: {}", stderr(&o));
    }
    let o = run(&["solve", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_reports_the_pig_farm_optimum() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "pf.json", &["pig-farm", "--months", "4"]);
    let out = tmp.path().join("run");
    let o = run(&["solve", model.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!((field(&text, "objective") - 726.8121).abs() <= 1e-6, "{text}");
    assert!(text.contains("status: optimal"));
    let r = report(&out);
    assert_eq!(r["command"], "solve");
    assert_eq!(r["input_digest"].as_str().unwrap().len(), 64);
    assert!((r["objectives"]["objective"].as_f64().unwrap() - 726.8121).abs() <= 1e-6);
}

#[test]
fn cvar_weight_one_is_the_expected_utility_optimum() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "pf.json", &["pig-farm", "--months", "4"]);
    let o = run(&["solve", model.to_str().unwrap(), "--cvar", "1.0", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!((field(&text, "objective") - 726.8121).abs() <= 1e-6, "{text}");
    assert!(field(&text, "cvar") <= field(&text, "expected_utility") + 1e-9);
}

#[test]
fn cvar_weight_outside_the_unit_interval_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "pf.json", &["pig-farm", "--months", "3"]);
    let o = run(&["solve", model.to_str().unwrap(), "--cvar", "0.2", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exported_lp_matches_the_model_statistics() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "pf.json", &["pig-farm", "--months", "3"]);
    let lp = tmp.path().join("pf.lp");
    let out = tmp.path().join("run");
    let o =
        run(&["solve", model.to_str().unwrap(), "--export-lp", lp.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let read = decprog_milp::lp_format::read_lp(&lp).unwrap();
    let stats = read.statistics();
    let r = report(&out);
    assert_eq!(stats.binaries as u64, r["params"]["binaries"].as_u64().unwrap());
    assert_eq!(stats.continuous as u64, r["params"]["continuous"].as_u64().unwrap());
    assert_eq!(stats.binaries, 8);
}

#[test]
fn unreachable_chance_constraint_is_infeasible() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "pf.json", &["pig-farm", "--months", "3"]);
    let o = run(&["solve", model.to_str().unwrap(), "--chance", "100000", "0.5", "ge"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stdout(&o).contains("status: infeasible"));
}

#[test]
fn solved_strategy_evaluates_to_the_same_value() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "pf.json", &["pig-farm", "--months", "3"]);
    let o = run(&["solve", model.to_str().unwrap()]);
    let text = stdout(&o);
    let strategy = text.lines().find_map(|l| l.strip_prefix("strategy: ")).unwrap();
    let zpath = tmp.path().join("z.json");
    std::fs::write(&zpath, strategy).unwrap();
    let out = tmp.path().join("eval");
    let e = run(&["evaluate", model.to_str().unwrap(), zpath.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(e.status.code(), Some(0), "{}", stderr(&e));
    let eu = field(&stdout(&e), "expected_utility");
    assert!((eu - field(&text, "objective")).abs() <= 1e-9 * eu.abs());
    let dist = std::fs::read_to_string(out.join("distribution.csv")).unwrap();
    assert!(!dist.contains('\r'));
    assert!(dist.lines().count() > 1);
}

#[test]
fn pig_farm_frontier_and_scatter() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "pf.json", &["pig-farm", "--months", "4"]);
    let out = tmp.path().join("front");
    let o = run(&["frontier", model.to_str().unwrap(), "--alpha", "0.2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let frontier = std::fs::read_to_string(out.join("frontier.csv")).unwrap();
    assert_eq!(frontier.lines().count(), 1 + 4, "{frontier}");
    let scatter = std::fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 1 + 64);
    let flagged = scatter.lines().skip(1).filter(|l| l.split(',').nth(2) == Some("1")).count();
    assert_eq!(flagged, 4);
    assert!(!frontier.contains('\r') && !scatter.contains('\r'));
    assert_eq!(report(&out)["objectives"]["frontier_points"].as_f64(), Some(4.0));
}

#[test]
fn single_value_node_frontier_has_one_point() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "nm.json", &["n-monitoring", "--n", "2", "--seed", "3"]);
    let out = tmp.path().join("front");
    let o = run(&["frontier", model.to_str().unwrap(), "--objectives", "values", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let frontier = std::fs::read_to_string(out.join("frontier.csv")).unwrap();
    assert_eq!(frontier.lines().count(), 2, "{frontier}");
}

#[test]
fn paths_lists_every_path() {
    let tmp = TempDir::new().unwrap();
    let model = generate(tmp.path(), "pf.json", &["pig-farm", "--months", "3"]);
    let o = run(&["paths", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // Three health states, two tests and two decisions, each binary.
    assert_eq!(stdout(&o).lines().count(), 1 + (1 << 7));
}

#[test]
fn bench_output_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let mut csvs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = tmp.path().join(name);
        let o = run(&[
            "bench",
            "n-monitoring",
            "--sizes",
            "2..3",
            "--seeds",
            "4",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("oracle agreement 100.0%"), "{}", stdout(&o));
        csvs.push(std::fs::read(out.join("bench_n-monitoring.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
    let text = String::from_utf8(csvs.pop().unwrap()).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 4);
    // Four binaries per report.
    assert!(text.lines().skip(1).all(|l| {
        let f: Vec<&str> = l.split(',').collect();
        f[2].parse::<usize>().unwrap() == 4 * f[0].parse::<usize>().unwrap()
    }));
}

#[test]
fn bench_rejects_malformed_sizes() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["bench", "pig-farm", "--sizes", "7..3", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

use decprog::bnb::{extract_strategy, solve, CutPolicy, SolveParams};
use decprog::diagram::Diagram;
use decprog::error::SolveError;
use decprog::formulation::{DecisionModel, FormulationOptions};
use decprog::models::{n_monitoring, pig_farm, random_diagram, RandomShape};
use decprog::paths::Utility;
use decprog::strategy::{
    brute_force_optimum, enumerate_strategies, expected_utility, for_each_compatible, GlobalStrategy,
};
use decprog_milp::{MilpStatus, NodeOutcome, Sense};

const REL_TOL: f64 = 1e-9;
const CAP: u128 = 1 << 16;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(1.0)
}

fn model(d: &Diagram, normalize: bool) -> DecisionModel {
    let options = FormulationOptions { normalize_utilities: normalize, ..FormulationOptions::default() };
    DecisionModel::build_base(d, &Utility::identity(), options).unwrap()
}

fn params(cuts: CutPolicy) -> SolveParams {
    SolveParams { cuts, ..SolveParams::default() }
}

#[test]
fn n_monitoring_matches_brute_force() {
    for n in 2..=4 {
        for seed in 0..5 {
            let d = n_monitoring(n, seed);
            let (_, best) = brute_force_optimum(&d, &Utility::identity(), CAP).unwrap();
            let m = model(&d, true);
            let sol = solve(&m, &SolveParams::default()).unwrap();
            assert_eq!(sol.status(), MilpStatus::Optimal);
            assert!(close(sol.objective(), best), "n={n} seed={seed}: {} vs {best}", sol.objective());
            let z = sol.strategy.as_ref().unwrap();
            assert!(close(expected_utility(&d, &Utility::identity(), z), sol.objective()));
        }
    }
}

#[test]
fn pig_farm_small_horizons() {
    for (months, expected) in [(3, 764.39), (4, 726.8121)] {
        let d = pig_farm(months);
        let sol = solve(&model(&d, true), &SolveParams::default()).unwrap();
        assert!((sol.objective() - expected).abs() <= 1e-6, "M={months}: {}", sol.objective());
    }
}

#[test]
fn cut_policies_agree() {
    let mut cases = vec![pig_farm(3), pig_farm(4)];
    cases.extend((2..=4).map(|n| n_monitoring(n, 7)));
    for d in &cases {
        let m = model(d, true);
        let values: Vec<f64> = [CutPolicy::Off, CutPolicy::ProbabilityCut, CutPolicy::ProbabilityAndActivePath]
            .iter()
            .map(|&c| solve(&m, &params(c)).unwrap().objective())
            .collect();
        assert!(close(values[0], values[1]) && close(values[0], values[2]), "{values:?}");
    }
}

#[test]
fn solving_without_completion_agrees() {
    for seed in 0..10 {
        let d = random_diagram(&RandomShape::default(), seed);
        let m = model(&d, true);
        let with = solve(&m, &SolveParams::default()).unwrap();
        let without = solve(&m, &SolveParams { use_completion: false, ..SolveParams::default() }).unwrap();
        assert!(close(with.objective(), without.objective()), "seed {seed}");
    }
}

#[test]
fn raw_and_normalized_agree() {
    for seed in 0..10 {
        let d = random_diagram(&RandomShape::default(), seed);
        let a = solve(&model(&d, true), &SolveParams::default()).unwrap();
        let b = solve(&model(&d, false), &SolveParams::default()).unwrap();
        assert!(close(a.objective(), b.objective()), "seed {seed}: {} vs {}", a.objective(), b.objective());
    }
}

#[test]
fn root_bound_and_trace_are_consistent() {
    for d in [pig_farm(4), n_monitoring(3, 2)] {
        let sol = solve(&model(&d, true), &SolveParams::default()).unwrap();
        let tol = REL_TOL * sol.objective().abs().max(1.0);
        assert!(sol.milp.root_bound >= sol.objective() - tol);
        for w in sol.milp.trace.windows(2) {
            assert!(w[1].bound <= w[0].bound + tol);
            assert!(w[1].incumbent >= w[0].incumbent);
        }
    }
}

#[test]
fn audited_nodes_never_beat_the_optimum() {
    let d = pig_farm(4);
    let m = model(&d, true);
    let p =
        SolveParams { milp: decprog_milp::SolveParams { audit: true, ..Default::default() }, ..SolveParams::default() };
    let sol = solve(&m, &p).unwrap();
    let tol = REL_TOL * sol.objective().abs().max(1.0);
    assert!(sol.milp.nodes.len() >= sol.milp.node_count);
    for rec in &sol.milp.nodes {
        if let NodeOutcome::Leaf { value: Some(v) } = rec.outcome {
            assert!(v <= sol.objective() + tol);
        }
    }
}

fn tail_probability(d: &Diagram, z: &GlobalStrategy, t: f64) -> f64 {
    let u = Utility::identity();
    let mut mass = 0.0;
    for_each_compatible(d, z, |s, p| {
        if decprog::paths::path_utility(d, &u, s) >= t {
            mass += p;
        }
    });
    mass
}

#[test]
fn chance_constraint_matches_filtered_enumeration() {
    for seed in 0..6 {
        let d = n_monitoring(2, seed);
        let t = 50.0;
        let level = 0.6;
        let mut m = model(&d, true);
        m.add_chance_constraint(t, level, Sense::Ge).unwrap();
        let best = enumerate_strategies(&d, CAP)
            .unwrap()
            .filter(|z| tail_probability(&d, z, t) >= level - 1e-12)
            .map(|z| expected_utility(&d, &Utility::identity(), &z))
            .fold(f64::NEG_INFINITY, f64::max);
        let sol = solve(&m, &SolveParams::default()).unwrap();
        if best.is_finite() {
            assert!(close(sol.objective(), best), "seed {seed}: {} vs {best}", sol.objective());
            assert!(tail_probability(&d, sol.strategy.as_ref().unwrap(), t) >= level - 1e-9);
        } else {
            assert_eq!(sol.status(), MilpStatus::Infeasible);
        }
    }
}

#[test]
fn state_chance_constraint_matches_filtered_enumeration() {
    for seed in 0..6 {
        let d = n_monitoring(2, seed);
        // Failure node F follows L, R1, R2, A1, A2; state 1 is failure.
        let failure = 6;
        let cap = 0.3;
        let mut m = model(&d, true);
        m.add_state_chance_constraint(failure, &[1], cap, Sense::Le).unwrap();
        let failure_prob = |z: &GlobalStrategy| {
            let mut mass = 0.0;
            for_each_compatible(&d, z, |s, p| {
                if s[failure - 1] == 1 {
                    mass += p;
                }
            });
            mass
        };
        let best = enumerate_strategies(&d, CAP)
            .unwrap()
            .filter(|z| failure_prob(z) <= cap + 1e-12)
            .map(|z| expected_utility(&d, &Utility::identity(), &z))
            .fold(f64::NEG_INFINITY, f64::max);
        let sol = solve(&m, &SolveParams::default()).unwrap();
        if best.is_finite() {
            assert!(close(sol.objective(), best), "seed {seed}: {} vs {best}", sol.objective());
        } else {
            assert_eq!(sol.status(), MilpStatus::Infeasible);
        }
    }
}

#[test]
fn extraction_rejects_fractional_points() {
    let d = n_monitoring(2, 0);
    let m = model(&d, true);
    let sol = solve(&m, &SolveParams::default()).unwrap();
    let z = extract_strategy(&m, &sol.milp.x, 1e-6).unwrap();
    assert_eq!(&z, sol.strategy.as_ref().unwrap());
    let mut x = sol.milp.x.clone();
    let var = m.z_var(d.decision_nodes()[0], 0, 1);
    x[var.0] = 0.5;
    assert!(matches!(extract_strategy(&m, &x, 1e-6), Err(SolveError::Ambiguous { .. })));
}

#[test]
fn active_path_cut_needs_a_count_when_probabilities_vanish() {
    let shape = RandomShape { zero_probability: 0.5, ..RandomShape::default() };
    let d = (0..50)
        .map(|seed| random_diagram(&shape, seed))
        .find(|d| model(d, true).default_active_paths().is_none())
        .expect("some seed has a zero probability entry");
    let m = model(&d, true);
    assert!(matches!(solve(&m, &params(CutPolicy::ProbabilityAndActivePath)), Err(SolveError::UnknownActivePaths)));
}

use std::collections::BTreeSet;

use decprog::diagram::{Diagram, DiagramBuilder};
use decprog::error::ParetoError;
use decprog::formulation::Criterion;
use decprog::models::{pig_farm, random_diagram, RandomShape};
use decprog::pareto::{
    dominates, evaluate, frontier, non_dominated, robust_classification, write_frontier_csv, FrontierConfig,
    LocalChoice, ObjectivePoint,
};
use decprog::strategy::{enumerate_strategies, GlobalStrategy};

const TREAT: usize = 1;
const PASS: usize = 2;
const POSITIVE: usize = 0;
const NEGATIVE: usize = 1;

fn choices(z: &GlobalStrategy) -> Vec<Vec<usize>> {
    z.locals().iter().map(|l| l.choices.clone()).collect()
}

fn brute_force(d: &Diagram, config: &FrontierConfig) -> Vec<ObjectivePoint> {
    let all: Vec<ObjectivePoint> = enumerate_strategies(d, 1 << 12)
        .unwrap()
        .map(|z| {
            let values = evaluate(d, config, &z).unwrap();
            ObjectivePoint { strategy: z, values }
        })
        .collect();
    non_dominated(&all)
}

fn strategy_set(points: &[ObjectivePoint]) -> BTreeSet<Vec<Vec<usize>>> {
    points.iter().map(|p| choices(&p.strategy)).collect()
}

#[test]
fn dominance_relation() {
    assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]));
    assert!(!dominates(&[2.0, 2.0], &[1.0, 3.0]));
    assert!(!dominates(&[1.0, 3.0], &[2.0, 2.0]));
    assert!(dominates(&[727.0, 300.0], &[700.0, 300.0]));
    assert!(!dominates(&[727.0, 300.0], &[727.0, 300.0 + 1e-8]));
    assert!(!dominates(&[727.0 + 1e-10, 300.0], &[727.0, 300.0]));
}

#[test]
fn pig_farm_expectation_and_tail_frontier() {
    let d = pig_farm(4);
    let config = FrontierConfig::expectation_and_tail(0.2);
    let points = frontier(&d, &config).unwrap();
    let never = vec![PASS, PASS];
    let on_positive = vec![TREAT, PASS];
    let expected: BTreeSet<Vec<Vec<usize>>> = [
        vec![never.clone(), on_positive.clone(), on_positive.clone()],
        vec![never.clone(), never.clone(), on_positive.clone()],
        vec![never.clone(), on_positive.clone(), never.clone()],
        vec![never.clone(), never.clone(), never.clone()],
    ]
    .into_iter()
    .collect();
    assert_eq!(strategy_set(&points), expected);
    assert_eq!(strategy_set(&points), strategy_set(&brute_force(&d, &config)));

    let classes = robust_classification(&points, &d).unwrap();
    let d1 = d.decision_nodes()[0];
    for row in [POSITIVE, NEGATIVE] {
        assert!(classes.core.contains(&LocalChoice { node: d1, row, state: PASS }));
    }
    for &j in d.decision_nodes() {
        assert!(classes.exterior.contains(&LocalChoice { node: j, row: NEGATIVE, state: TREAT }));
    }
}

#[test]
fn single_criterion_gives_the_optimum() {
    let d = pig_farm(3);
    let config = FrontierConfig::new(vec![Criterion::Utility], None);
    let points = frontier(&d, &config).unwrap();
    assert_eq!(points.len(), 1);
    assert!((points[0].values[0] - 764.39).abs() <= 1e-6);
    let classes = robust_classification(&points, &d).unwrap();
    assert!(classes.borderline.is_empty());
    let expected_core: usize = d.decision_nodes().iter().map(|&j| d.info_state_count(j)).sum();
    assert_eq!(classes.core.len(), expected_core);
}

#[test]
fn random_two_value_frontiers_match_brute_force() {
    let shape = RandomShape { value_nodes: 2, ..RandomShape::default() };
    for seed in 0..8 {
        let d = random_diagram(&shape, seed);
        let config = FrontierConfig::per_value_node(&d);
        let points = frontier(&d, &config).unwrap();
        for p in &points {
            assert!(!points.iter().any(|q| dominates(&q.values, &p.values)), "seed {seed}: unsound");
        }
        assert_eq!(strategy_set(&points), strategy_set(&brute_force(&d, &config)), "seed {seed}");
    }
}

#[test]
fn weight_schedules_do_not_change_the_set() {
    let shape = RandomShape { value_nodes: 2, ..RandomShape::default() };
    let d = random_diagram(&shape, 3);
    let base = frontier(&d, &FrontierConfig::per_value_node(&d)).unwrap();
    let mut config = FrontierConfig::per_value_node(&d);
    config.weights = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
    assert_eq!(strategy_set(&frontier(&d, &config).unwrap()), strategy_set(&base));
}

#[test]
fn bad_weights_are_rejected() {
    let d = pig_farm(3);
    let mut config = FrontierConfig::expectation_and_tail(0.2);
    config.weights = vec![vec![1.0, 0.0]];
    assert!(matches!(frontier(&d, &config), Err(ParetoError::BadWeights(_))));
    config.weights = vec![vec![1.0]];
    assert!(matches!(frontier(&d, &config), Err(ParetoError::WeightArity { got: 1, expected: 2 })));
}

#[test]
fn empty_frontier_has_no_classification() {
    assert!(matches!(robust_classification(&[], &pig_farm(3)), Err(ParetoError::EmptyFrontier)));
}

#[test]
fn csv_has_one_row_per_point() {
    let d = pig_farm(4);
    let points = frontier(&d, &FrontierConfig::expectation_and_tail(0.2)).unwrap();
    let mut out = Vec::new();
    write_frontier_csv(&d, &["eu".into(), "cvar".into()], &points, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), points.len());
    for (row, p) in rows.iter().zip(&points) {
        let eu: f64 = row[0].parse().unwrap();
        assert!((eu - p.values[0]).abs() <= 1e-9);
        assert_eq!(GlobalStrategy::from_json(&d, &row[2]).unwrap(), p.strategy);
    }
}

/// A candidate tied with a found point in one criterion and worse in the
/// other clears the relaxed dominance block; the explicit check drops it.
#[test]
fn dominated_candidates_passing_the_block_are_dropped() {
    let mut b = DiagramBuilder::new();
    let x = b.chance("x", &["a", "b"], &[]);
    let dn = b.decision("d", &["best", "mid", "worst"], &[x]);
    let flat = b.value("flat", &[dn]);
    let graded = b.value("graded", &[dn]);
    b.cpt(x, |_| vec![0.5, 0.5]);
    b.consequences(flat, |_| 1.0);
    b.consequences(graded, |g| 3.0 - g[0] as f64);
    let d = b.build();
    for weights in [vec![], vec![vec![0.9, 0.1]]] {
        let mut config = FrontierConfig::per_value_node(&d);
        config.weights = weights;
        let points = frontier(&d, &config).unwrap();
        let expected: BTreeSet<Vec<Vec<usize>>> = [vec![vec![1, 1]]].into_iter().collect();
        assert_eq!(strategy_set(&points), expected);
        assert_eq!(points[0].values, vec![1.0, 2.0]);
    }
}

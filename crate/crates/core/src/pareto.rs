//! Non-dominated strategy frontiers over several expectation criteria.
//!
//! Each round maximizes a positive weighting of the criteria over strategies
//! not yet examined. Every examined strategy receives an exclusion cut; every
//! strategy found non-dominated also receives a dominance block, which cuts
//! the region it dominates on all criteria strictly. The block is necessary
//! but not sufficient, so candidates are checked explicitly. The search ends
//! when no unexamined strategy survives.

use std::io::Write;

use crate::bnb::{self, SolveParams};
use crate::diagram::{Diagram, NodeId};
use crate::error::ParetoError;
use crate::formulation::{Criterion, DecisionModel, FormulationOptions, Objective};
use crate::paths::Utility;
use crate::strategy::{cvar_direct, distribution, expected_by_value, expected_utility, GlobalStrategy};

/// Values within this relative distance compare as equal.
pub const DOMINANCE_TOL: f64 = 1e-9;

fn tolerance(a: f64, b: f64) -> f64 {
    DOMINANCE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// True iff `a` is at least `b` in every component and above it in one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    assert_eq!(a.len(), b.len(), "objective dimensions differ");
    let mut strict = false;
    for (&x, &y) in a.iter().zip(b) {
        let tol = tolerance(x, y);
        if x < y - tol {
            return false;
        }
        strict |= x > y + tol;
    }
    strict
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectivePoint {
    pub strategy: GlobalStrategy,
    /// One value per criterion, in criterion order.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FrontierConfig {
    pub criteria: Vec<Criterion>,
    /// Risk level of [`Criterion::Tail`].
    pub alpha: Option<f64>,
    /// Weight vectors used in turn; empty means uniform.
    pub weights: Vec<Vec<f64>>,
    pub utility: Utility,
    pub options: FormulationOptions,
    pub solve: SolveParams,
}

impl FrontierConfig {
    /// Expected utility of each value node.
    pub fn per_value_node(d: &Diagram) -> Self {
        Self::new(d.value_nodes().iter().map(|&v| Criterion::ValueNode(v)).collect(), None)
    }

    /// Expected utility and the conditional tail expectation at `alpha`.
    pub fn expectation_and_tail(alpha: f64) -> Self {
        Self::new(vec![Criterion::Utility, Criterion::Tail], Some(alpha))
    }

    pub fn new(criteria: Vec<Criterion>, alpha: Option<f64>) -> Self {
        Self {
            criteria,
            alpha,
            weights: Vec::new(),
            utility: Utility::identity(),
            options: FormulationOptions::default(),
            solve: SolveParams::default(),
        }
    }

    fn schedule(&self) -> Result<Vec<Vec<f64>>, ParetoError> {
        let n = self.criteria.len();
        if n == 0 {
            return Err(ParetoError::NoObjectives);
        }
        if self.weights.is_empty() {
            return Ok(vec![vec![1.0 / n as f64; n]]);
        }
        for w in &self.weights {
            if w.len() != n {
                return Err(ParetoError::WeightArity { got: w.len(), expected: n });
            }
            if !w.iter().all(|&x| x > 0.0 && x.is_finite()) {
                return Err(ParetoError::BadWeights(w.clone()));
            }
        }
        Ok(self.weights.clone())
    }
}

/// Evaluates every criterion of `z` directly from the diagram.
pub fn evaluate(d: &Diagram, config: &FrontierConfig, z: &GlobalStrategy) -> Result<Vec<f64>, ParetoError> {
    let mut by_value: Option<Vec<f64>> = None;
    config
        .criteria
        .iter()
        .map(|&c| match c {
            Criterion::Utility => Ok(expected_utility(d, &config.utility, z)),
            Criterion::ValueNode(v) => {
                let pos = d.value_nodes().iter().position(|&u| u == v).ok_or_else(|| {
                    crate::error::FormulationError::BadParameter(format!("node {v} is not a value node"))
                })?;
                let all = by_value.get_or_insert_with(|| expected_by_value(d, &config.utility, z));
                Ok(all[pos])
            }
            Criterion::Tail => {
                let alpha = config.alpha.ok_or(ParetoError::MissingAlpha)?;
                Ok(cvar_direct(&distribution(d, &config.utility, z), alpha)?)
            }
        })
        .collect()
}

/// Full non-dominated set, in discovery order.
pub fn frontier(d: &Diagram, config: &FrontierConfig) -> Result<Vec<ObjectivePoint>, ParetoError> {
    let schedule = config.schedule()?;
    let mut model = DecisionModel::build_base(d, &config.utility, config.options.clone())?;
    if config.criteria.contains(&Criterion::Tail) {
        let alpha = config.alpha.ok_or(ParetoError::MissingAlpha)?;
        model.add_cvar_block(alpha)?;
    }
    let mut found: Vec<ObjectivePoint> = Vec::new();
    for round in 0.. {
        let w = &schedule[round % schedule.len()];
        model.set_objective(Objective::Weighted(config.criteria.iter().copied().zip(w.iter().copied()).collect()))?;
        let sol = bnb::solve(&model, &config.solve)?;
        let Some(z) = sol.strategy else {
            if sol.status() == decprog_milp::MilpStatus::Infeasible {
                break;
            }
            return Err(ParetoError::Incomplete { found: found.len() });
        };
        let values = evaluate(d, config, &z)?;
        model.add_exclusion_cut(&z)?;
        log::debug!("round {round}: candidate {values:?}");
        if found.iter().any(|p| dominates(&p.values, &values)) {
            continue;
        }
        found.retain(|p| !dominates(&values, &p.values));
        let reference: Vec<f64> = values.iter().map(|&v| v - tolerance(v, v)).collect();
        model.add_dominance_block(&reference, &config.criteria, None)?;
        found.push(ObjectivePoint { strategy: z, values });
    }
    Ok(found)
}

/// Non-dominated subset of `points`, keeping points with equal values.
pub fn non_dominated(points: &[ObjectivePoint]) -> Vec<ObjectivePoint> {
    points.iter().filter(|p| !points.iter().any(|q| dominates(&q.values, &p.values))).cloned().collect()
}

/// One local choice: at `node`, information state `row` selects `state`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalChoice {
    pub node: NodeId,
    pub row: usize,
    pub state: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RobustClassification {
    /// Chosen by every frontier strategy.
    pub core: Vec<LocalChoice>,
    /// Chosen by no frontier strategy.
    pub exterior: Vec<LocalChoice>,
    pub borderline: Vec<LocalChoice>,
}

impl RobustClassification {
    pub fn class_of(&self, c: LocalChoice) -> Option<&'static str> {
        if self.core.contains(&c) {
            Some("core")
        } else if self.exterior.contains(&c) {
            Some("exterior")
        } else if self.borderline.contains(&c) {
            Some("borderline")
        } else {
            None
        }
    }
}

/// Splits every local choice of `d` by how many frontier strategies use it.
pub fn robust_classification(points: &[ObjectivePoint], d: &Diagram) -> Result<RobustClassification, ParetoError> {
    if points.is_empty() {
        return Err(ParetoError::EmptyFrontier);
    }
    let mut out = RobustClassification::default();
    for &j in d.decision_nodes() {
        for row in 0..d.info_state_count(j) {
            for state in 1..=d.states(j) {
                let c = LocalChoice { node: j, row, state };
                let uses = points.iter().filter(|p| p.strategy.choice(j, row) == state).count();
                if uses == points.len() {
                    out.core.push(c);
                } else if uses == 0 {
                    out.exterior.push(c);
                } else {
                    out.borderline.push(c);
                }
            }
        }
    }
    Ok(out)
}

/// One row per point: criterion values, then the strategy JSON.
pub fn write_frontier_csv(
    d: &Diagram,
    labels: &[String],
    points: &[ObjectivePoint],
    w: impl Write,
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = labels.to_vec();
    header.push("strategy".into());
    out.write_record(&header)?;
    for p in points {
        let mut record: Vec<String> = p.values.iter().map(|v| format!("{v:.16e}")).collect();
        record.push(p.strategy.to_json(d));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// Column label of a criterion.
pub fn criterion_label(d: &Diagram, c: Criterion, alpha: Option<f64>) -> String {
    match c {
        Criterion::Utility => "expected_utility".into(),
        Criterion::ValueNode(v) => format!("expected_{}", d.node(v).label),
        Criterion::Tail => format!("cvar_{}", alpha.unwrap_or(f64::NAN)),
    }
}

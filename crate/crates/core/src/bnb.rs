//! Solving a [`DecisionModel`] by branch and bound: valid-equality cut
//! policy, the canonical completion, and strategy extraction.

use decprog_milp::{self as milp, MilpSolution, MilpStatus, Row};

use crate::error::SolveError;
use crate::formulation::DecisionModel;
use crate::strategy::{GlobalStrategy, LocalStrategy};

/// Valid equalities handed to the solver's cut pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CutPolicy {
    #[default]
    Off,
    ProbabilityCut,
    ProbabilityAndActivePath,
}

#[derive(Clone, Debug)]
pub struct SolveParams {
    pub milp: milp::SolveParams,
    pub cuts: CutPolicy,
    /// Active path count for the active-path cut; defaults to
    /// [`DecisionModel::default_active_paths`].
    pub active_paths: Option<u64>,
    /// Settle integral decision nodes by the canonical completion.
    pub use_completion: bool,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self { milp: milp::SolveParams::default(), cuts: CutPolicy::Off, active_paths: None, use_completion: true }
    }
}

#[derive(Clone, Debug)]
pub struct DecisionSolution {
    /// Objective and bounds include the normalization shift.
    pub milp: MilpSolution,
    pub strategy: Option<GlobalStrategy>,
}

impl DecisionSolution {
    pub fn status(&self) -> MilpStatus {
        self.milp.status
    }

    pub fn objective(&self) -> f64 {
        self.milp.objective
    }
}

/// Rows the cut policy adds to the pool, skipping a probability cut the
/// model already carries.
pub fn policy_cuts(model: &DecisionModel, params: &SolveParams) -> Result<Vec<Row>, SolveError> {
    let mut rows = Vec::new();
    if params.cuts == CutPolicy::Off {
        return Ok(rows);
    }
    if model.probability_cut().is_none() {
        rows.push(model.probability_cut_row());
    }
    if params.cuts == CutPolicy::ProbabilityAndActivePath {
        let n_s = params.active_paths.or_else(|| model.default_active_paths()).ok_or(SolveError::UnknownActivePaths)?;
        rows.push(model.active_path_cut_row(n_s)?);
    }
    Ok(rows)
}

pub fn solve(model: &DecisionModel, params: &SolveParams) -> Result<DecisionSolution, SolveError> {
    let cuts = policy_cuts(model, params)?;
    let completion = model.completion();
    let hook: Option<&dyn milp::Completion> = if params.use_completion { Some(&completion) } else { None };
    let sol = milp::solve(model.model(), &cuts, &params.milp, hook)?;
    let strategy = if sol.has_incumbent() {
        Some(extract_strategy(model, &sol.x, params.milp.integrality_tolerance)?)
    } else {
        None
    };
    Ok(DecisionSolution { milp: sol, strategy })
}

/// Per information state, the unique state whose binary is within `tol` of
/// one; any other pattern is an error.
pub fn extract_strategy(model: &DecisionModel, x: &[f64], tol: f64) -> Result<GlobalStrategy, SolveError> {
    if x.len() != model.model().num_vars() {
        return Err(SolveError::NoIncumbent);
    }
    let d = model.diagram();
    let mut locals = Vec::with_capacity(d.decision_nodes().len());
    for &j in d.decision_nodes() {
        let mut choices = Vec::with_capacity(d.info_state_count(j));
        for row in 0..d.info_state_count(j) {
            let values: Vec<f64> = (1..=d.states(j)).map(|s| x[model.z_var(j, row, s).0]).collect();
            let ones: Vec<usize> = (0..values.len()).filter(|&s| (values[s] - 1.0).abs() <= tol).collect();
            let zeros = values.iter().filter(|v| v.abs() <= tol).count();
            if ones.len() != 1 || zeros + 1 != values.len() {
                return Err(SolveError::Ambiguous { node: j, row, values });
            }
            choices.push(ones[0] + 1);
        }
        locals.push(LocalStrategy { node: j, choices });
    }
    Ok(GlobalStrategy::new(d, locals).expect("one state per information state"))
}

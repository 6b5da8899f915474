//! Mixed-integer formulation of a diagram over decision binaries and path
//! probability variables, with optional cuts, risk constraints, risk-aware
//! objectives and the constraints used for frontier enumeration.
//!
//! Variables: one binary per (decision node, information state, state) and one
//! continuous path variable `pi(s)` in `[0, p(s)]` per path. For any integral
//! assignment of the binaries the path variables of compatible paths can reach
//! `p(s)` and all others are held at zero by the `pi(s) <= z(...)` rows.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use decprog_milp::{lp_format, Completion, Model, ModelStatistics, Priority, Row, RowId, Sense, VarId};

use crate::diagram::{Diagram, NodeId, NodeKind};
use crate::error::FormulationError;
use crate::paths::{PathTable, Utility, DEFAULT_PATH_CAP};
use crate::strategy::{var_direct, ConsequenceDistribution, GlobalStrategy, LocalStrategy};

/// Distinct utilities closer than this count as one value when computing the
/// CVaR separation constant.
pub const UTILITY_DEDUP_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormulationOptions {
    /// Shift path objective coefficients so their minimum is zero.
    pub normalize_utilities: bool,
    /// Add `pi(s) >= p(s) + sum z - |D|` rows even when not required.
    pub include_lower_bound_rows: bool,
    pub path_cap: usize,
}

impl Default for FormulationOptions {
    fn default() -> Self {
        Self { normalize_utilities: true, include_lower_bound_rows: false, path_cap: DEFAULT_PATH_CAP }
    }
}

/// Structured variable names with a stable text encoding.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum VariableKey {
    /// `z[j=s|i1=s1,i2=s2]`
    Z {
        node: NodeId,
        state: usize,
        info: Vec<(NodeId, usize)>,
    },
    /// `pi[p<k>]`, path ordinal from 0.
    Pi(usize),
    Eta,
    /// `lam[p<k>]`
    Lam(usize),
    /// `lamb[p<k>]`
    LamBar(usize),
    /// `rho[p<k>]`
    Rho(usize),
    /// `rhob[p<k>]`
    RhoBar(usize),
    /// `lplus[b<block>v<criterion>]`
    LPlus {
        block: usize,
        criterion: usize,
    },
    /// `lminus[b<block>v<criterion>]`
    LMinus {
        block: usize,
        criterion: usize,
    },
    /// `aux[name]`
    Aux(String),
}

impl fmt::Display for VariableKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariableKey::Z { node, state, info } => {
                write!(f, "z[{node}={state}|")?;
                for (k, (i, s)) in info.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{i}={s}")?;
                }
                f.write_str("]")
            }
            VariableKey::Pi(k) => write!(f, "pi[p{k}]"),
            VariableKey::Eta => f.write_str("eta"),
            VariableKey::Lam(k) => write!(f, "lam[p{k}]"),
            VariableKey::LamBar(k) => write!(f, "lamb[p{k}]"),
            VariableKey::Rho(k) => write!(f, "rho[p{k}]"),
            VariableKey::RhoBar(k) => write!(f, "rhob[p{k}]"),
            VariableKey::LPlus { block, criterion } => write!(f, "lplus[b{block}v{criterion}]"),
            VariableKey::LMinus { block, criterion } => write!(f, "lminus[b{block}v{criterion}]"),
            VariableKey::Aux(name) => write!(f, "aux[{name}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unrecognized variable key {0:?}")]
pub struct KeyParseError(pub String);

impl FromStr for VariableKey {
    type Err = KeyParseError;

    fn from_str(text: &str) -> Result<Self, KeyParseError> {
        let bad = || KeyParseError(text.to_string());
        if text == "eta" {
            return Ok(VariableKey::Eta);
        }
        let open = text.find('[').ok_or_else(bad)?;
        let body = text[open + 1..].strip_suffix(']').ok_or_else(bad)?;
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let path = |s: &str| s.strip_prefix('p').ok_or_else(bad).and_then(num);
        let block = |s: &str| -> Result<(usize, usize), KeyParseError> {
            let rest = s.strip_prefix('b').ok_or_else(bad)?;
            let (b, v) = rest.split_once('v').ok_or_else(bad)?;
            Ok((num(b)?, num(v)?))
        };
        match &text[..open] {
            "z" => {
                let (head, tail) = body.split_once('|').ok_or_else(bad)?;
                let (node, state) = head.split_once('=').ok_or_else(bad)?;
                let info = if tail.is_empty() {
                    Vec::new()
                } else {
                    tail.split(',')
                        .map(|pair| {
                            let (i, s) = pair.split_once('=').ok_or_else(bad)?;
                            Ok((num(i)?, num(s)?))
                        })
                        .collect::<Result<_, KeyParseError>>()?
                };
                Ok(VariableKey::Z { node: num(node)?, state: num(state)?, info })
            }
            "pi" => Ok(VariableKey::Pi(path(body)?)),
            "lam" => Ok(VariableKey::Lam(path(body)?)),
            "lamb" => Ok(VariableKey::LamBar(path(body)?)),
            "rho" => Ok(VariableKey::Rho(path(body)?)),
            "rhob" => Ok(VariableKey::RhoBar(path(body)?)),
            "lplus" => block(body).map(|(block, criterion)| VariableKey::LPlus { block, criterion }),
            "lminus" => block(body).map(|(block, criterion)| VariableKey::LMinus { block, criterion }),
            "aux" => Ok(VariableKey::Aux(body.to_string())),
            _ => Err(bad()),
        }
    }
}

/// Quantity a linear objective or dominance comparison is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    /// Total utility over all value nodes.
    Utility,
    /// Transformed consequence of one value node.
    ValueNode(NodeId),
    /// Lower-tail conditional expectation of the total utility; needs a CVaR block.
    Tail,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    /// Expected utility.
    Expected,
    /// `w * expected utility + (1 - w) * tail expectation`.
    Mixed { w: f64 },
    /// Tail expectation alone.
    Tail,
    /// Minimize the VaR variable of the CVaR block.
    MinimizeEta,
    /// Weighted sum of criteria.
    Weighted(Vec<(Criterion, f64)>),
}

/// Variables of the CVaR block and its constants.
#[derive(Clone, Debug)]
pub struct CvarBlock {
    pub alpha: f64,
    pub eta: VarId,
    pub lam: Vec<VarId>,
    pub lam_bar: Vec<VarId>,
    pub rho: Vec<VarId>,
    pub rho_bar: Vec<VarId>,
    pub c_min: f64,
    pub c_max: f64,
    pub big_m: f64,
    pub epsilon: f64,
    pub rows: Vec<RowId>,
}

#[derive(Clone, Debug)]
pub struct DominanceBlock {
    pub criteria: Vec<Criterion>,
    pub reference: Vec<f64>,
    pub big_m: Vec<f64>,
    pub plus: Vec<VarId>,
    pub minus: Vec<VarId>,
    pub rows: Vec<RowId>,
}

#[derive(Clone, Debug)]
pub struct DecisionModel {
    diagram: Diagram,
    table: PathTable,
    options: FormulationOptions,
    model: Model,
    keys: Vec<VariableKey>,
    /// `z[decision position][info row][state - 1]`
    z: Vec<Vec<Vec<VarId>>>,
    pi: Vec<VarId>,
    assignment_rows: Vec<RowId>,
    lower_rows: bool,
    objective: Objective,
    edr_terms: Vec<(f64, f64)>,
    probability_cut: Option<RowId>,
    cvar: Option<CvarBlock>,
    dominance: Vec<DominanceBlock>,
    exclusions: Vec<RowId>,
    has_raw: bool,
}

fn is_unit_interval(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl DecisionModel {
    /// Decision binaries, path variables, assignment rows, `pi <= z` rows,
    /// and the expected-utility objective.
    pub fn build_base(d: &Diagram, utility: &Utility, options: FormulationOptions) -> Result<Self, FormulationError> {
        let table = PathTable::build(d, utility, options.path_cap)?;
        let mut model = Model::new();
        let mut keys = Vec::new();
        let mut z = Vec::with_capacity(d.decision_nodes().len());
        let mut assignment_rows = Vec::new();
        for &j in d.decision_nodes() {
            let mut per_row = Vec::with_capacity(d.info_state_count(j));
            for r in 0..d.info_state_count(j) {
                let given = d.info_state(j, r);
                let info: Vec<(NodeId, usize)> = d.info_set(j).iter().copied().zip(given).collect();
                let vars: Vec<VarId> = (1..=d.states(j))
                    .map(|s| {
                        let key = VariableKey::Z { node: j, state: s, info: info.clone() };
                        let v = model.add_binary(key.to_string(), 0.0, Priority::Primary);
                        keys.push(key);
                        v
                    })
                    .collect();
                let row = model.add_row(
                    format!("assign[{j}:{r}]"),
                    vars.iter().map(|&v| (v, 1.0)).collect(),
                    Sense::Eq,
                    1.0,
                    false,
                )?;
                assignment_rows.push(row);
                per_row.push(vars);
            }
            z.push(per_row);
        }
        let mut pi = Vec::with_capacity(table.len());
        for k in 0..table.len() {
            let key = VariableKey::Pi(k);
            pi.push(model.add_continuous(key.to_string(), 0.0, table.p(k), 0.0)?);
            keys.push(key);
        }
        let mut s = vec![0; d.path_len()];
        for k in 0..table.len() {
            table.decode_into(k, &mut s);
            for (pos, &j) in d.decision_nodes().iter().enumerate() {
                let zv = z[pos][d.info_row(j, &s)][s[j - 1] - 1];
                model.add_row(format!("ub[{k}:{j}]"), vec![(pi[k], 1.0), (zv, -1.0)], Sense::Le, 0.0, false)?;
            }
        }
        let mut dm = DecisionModel {
            diagram: d.clone(),
            table,
            options,
            model,
            keys,
            z,
            pi,
            assignment_rows,
            lower_rows: false,
            objective: Objective::Expected,
            edr_terms: Vec::new(),
            probability_cut: None,
            cvar: None,
            dominance: Vec::new(),
            exclusions: Vec::new(),
            has_raw: false,
        };
        if options.include_lower_bound_rows {
            dm.add_lower_bound_rows()?;
        }
        dm.refresh_objective()?;
        Ok(dm)
    }

    fn add_lower_bound_rows(&mut self) -> Result<(), FormulationError> {
        if self.lower_rows {
            return Ok(());
        }
        let d = &self.diagram;
        let nd = d.decision_nodes().len() as f64;
        let mut s = vec![0; d.path_len()];
        for k in 0..self.table.len() {
            self.table.decode_into(k, &mut s);
            let mut terms = vec![(self.pi[k], 1.0)];
            for (pos, &j) in d.decision_nodes().iter().enumerate() {
                terms.push((self.z[pos][d.info_row(j, &s)][s[j - 1] - 1], -1.0));
            }
            self.model.add_row(format!("lb[{k}]"), terms, Sense::Ge, self.table.p(k) - nd, false)?;
        }
        self.lower_rows = true;
        Ok(())
    }

    pub fn diagram(&self) -> &Diagram {
        &self.diagram
    }

    pub fn table(&self) -> &PathTable {
        &self.table
    }

    pub fn options(&self) -> &FormulationOptions {
        &self.options
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn key(&self, v: VarId) -> &VariableKey {
        &self.keys[v.0]
    }

    pub fn keys(&self) -> &[VariableKey] {
        &self.keys
    }

    /// Binary of choosing `state` at decision node `j`, information row `row`.
    pub fn z_var(&self, j: NodeId, row: usize, state: usize) -> VarId {
        let pos = self.decision_position(j);
        self.z[pos][row][state - 1]
    }

    fn decision_position(&self, j: NodeId) -> usize {
        self.diagram.decision_nodes().iter().position(|&x| x == j).expect("decision node")
    }

    pub fn pi_var(&self, k: usize) -> VarId {
        self.pi[k]
    }

    pub fn has_lower_bound_rows(&self) -> bool {
        self.lower_rows
    }

    pub fn cvar_block(&self) -> Option<&CvarBlock> {
        self.cvar.as_ref()
    }

    pub fn dominance_blocks(&self) -> &[DominanceBlock] {
        &self.dominance
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    /// Constant added to the linear objective by normalization.
    pub fn shift(&self) -> f64 {
        self.model.offset()
    }

    pub fn statistics(&self) -> ModelStatistics {
        self.model.statistics()
    }

    /// Number of (decision node, information state) pairs.
    pub fn assignment_count(&self) -> usize {
        self.assignment_rows.len()
    }

    // -----------------------------------------------------------------------
    // Objective
    // -----------------------------------------------------------------------

    pub fn set_objective(&mut self, objective: Objective) -> Result<(), FormulationError> {
        let needs_tail = match &objective {
            Objective::Mixed { w } => {
                if !(*w > 0.0 && *w < 1.0) {
                    return Err(FormulationError::BadParameter(format!("mixed weight {w} outside (0, 1)")));
                }
                true
            }
            Objective::Tail | Objective::MinimizeEta => true,
            Objective::Weighted(terms) => {
                for (c, w) in terms {
                    if !w.is_finite() {
                        return Err(FormulationError::BadParameter(format!("weight {w} is not finite")));
                    }
                    if let Criterion::ValueNode(v) = c {
                        self.value_position(*v)?;
                    }
                }
                terms.iter().any(|(c, _)| *c == Criterion::Tail)
            }
            Objective::Expected => false,
        };
        if needs_tail && self.cvar.is_none() {
            return Err(FormulationError::Missing("a CVaR block"));
        }
        self.objective = objective;
        self.refresh_objective()
    }

    /// `w * expected utility + (1 - w) * tail expectation`, `w` in (0, 1).
    pub fn set_mixed_objective(&mut self, w: f64) -> Result<(), FormulationError> {
        self.set_objective(Objective::Mixed { w })
    }

    /// Subtracts `phi` times the expected shortfall of the utility below `target`.
    pub fn add_edr_objective_term(&mut self, target: f64, phi: f64) -> Result<(), FormulationError> {
        if !target.is_finite() || !phi.is_finite() {
            return Err(FormulationError::BadParameter("EDR target and weight must be finite".into()));
        }
        self.edr_terms.push((target, phi));
        self.refresh_objective()
    }

    fn value_position(&self, v: NodeId) -> Result<usize, FormulationError> {
        self.diagram
            .value_nodes()
            .iter()
            .position(|&x| x == v)
            .ok_or_else(|| FormulationError::BadParameter(format!("node {v} is not a value node")))
    }

    /// Weights on each value node's consequence, on the tail expectation and on eta.
    fn objective_weights(&self) -> (Vec<f64>, f64, f64) {
        let nv = self.diagram.value_nodes().len();
        match &self.objective {
            Objective::Expected => (vec![1.0; nv], 0.0, 0.0),
            Objective::Mixed { w } => (vec![*w; nv], 1.0 - w, 0.0),
            Objective::Tail => (vec![0.0; nv], 1.0, 0.0),
            Objective::MinimizeEta => (vec![0.0; nv], 0.0, -1.0),
            Objective::Weighted(terms) => {
                let mut per_value = vec![0.0; nv];
                let mut tail = 0.0;
                for &(c, w) in terms {
                    match c {
                        Criterion::Utility => per_value.iter_mut().for_each(|x| *x += w),
                        Criterion::ValueNode(v) => per_value[self.value_position(v).expect("checked")] += w,
                        Criterion::Tail => tail += w,
                    }
                }
                (per_value, tail, 0.0)
            }
        }
    }

    fn refresh_objective(&mut self) -> Result<(), FormulationError> {
        let (per_value, tail, eta) = self.objective_weights();
        let n = self.table.len();
        let mut coef = vec![0.0; n];
        for (k, c) in coef.iter_mut().enumerate() {
            let by_value = self.table.utility_by_value(k);
            *c = per_value.iter().zip(by_value).map(|(w, u)| w * u).sum::<f64>();
            let total = self.table.utility(k);
            for &(t, phi) in &self.edr_terms {
                *c -= phi * (t - total).max(0.0);
            }
        }
        let mut offset = 0.0;
        if self.options.normalize_utilities {
            offset = coef.iter().copied().fold(f64::INFINITY, f64::min);
            if !offset.is_finite() {
                offset = 0.0;
            }
            coef.iter_mut().for_each(|c| *c -= offset);
        } else if !self.lower_rows && coef.iter().zip(self.table.bounds()).any(|(&c, &p)| c < 0.0 && p > 0.0) {
            self.add_lower_bound_rows()?;
        }
        self.model.clear_objective();
        self.model.set_offset(offset);
        for (k, &c) in coef.iter().enumerate() {
            self.model.set_obj(self.pi[k], c);
        }
        if let Some(b) = &self.cvar {
            for (k, &v) in b.rho_bar.iter().enumerate() {
                self.model.set_obj(v, tail / b.alpha * self.table.utility(k));
            }
            self.model.set_obj(b.eta, eta);
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // Valid equalities
    // -----------------------------------------------------------------------

    /// `sum pi(s) = 1`.
    pub fn probability_cut_row(&self) -> Row {
        Row {
            name: "prob_cut".into(),
            terms: self.pi.iter().map(|&v| (v, 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
            lazy: true,
        }
    }

    /// Adds the probability cut once; a later eager request makes it eager.
    pub fn add_probability_cut(&mut self, lazy: bool) -> RowId {
        if let Some(r) = self.probability_cut {
            if !lazy {
                self.model.set_lazy(r, false);
            }
            return r;
        }
        let row = self.probability_cut_row();
        let r = self.model.add_row(row.name, row.terms, row.sense, row.rhs, lazy).expect("path variables exist");
        self.probability_cut = Some(r);
        r
    }

    pub fn probability_cut(&self) -> Option<RowId> {
        self.probability_cut
    }

    /// `sum pi(s) / p(s) = n_s` over paths with `p(s) > 0`.
    pub fn active_path_cut_row(&self, n_s: u64) -> Result<Row, FormulationError> {
        if n_s == 0 {
            return Err(FormulationError::BadParameter("active path count must be positive".into()));
        }
        let terms = (0..self.table.len())
            .filter(|&k| self.table.p(k) > 0.0)
            .map(|k| (self.pi[k], 1.0 / self.table.p(k)))
            .collect();
        Ok(Row { name: "active_paths".into(), terms, sense: Sense::Eq, rhs: n_s as f64, lazy: true })
    }

    pub fn add_active_path_cut(&mut self, n_s: u64, lazy: bool) -> Result<RowId, FormulationError> {
        let row = self.active_path_cut_row(n_s)?;
        Ok(self.model.add_row(row.name, row.terms, row.sense, row.rhs, lazy)?)
    }

    /// Active path count shared by all strategies when every probability is
    /// positive: the product of chance-node state counts.
    pub fn default_active_paths(&self) -> Option<u64> {
        let d = &self.diagram;
        let all_positive = d
            .chance_nodes()
            .iter()
            .all(|&j| (0..d.info_state_count(j)).all(|r| d.probability_row(j, r).iter().all(|&p| p > 0.0)));
        if !all_positive {
            return None;
        }
        d.chance_nodes().iter().try_fold(1u64, |acc, &j| acc.checked_mul(d.states(j) as u64))
    }

    // -----------------------------------------------------------------------
    // Chance constraints
    // -----------------------------------------------------------------------

    /// `sum pi(s) [U(s) >= t]  (sense)  p_t`.
    pub fn add_chance_constraint(&mut self, t: f64, p_t: f64, sense: Sense) -> Result<RowId, FormulationError> {
        if !is_unit_interval(p_t) {
            return Err(FormulationError::BadParameter(format!("probability level {p_t} outside [0, 1]")));
        }
        self.add_probability_cut(true);
        let terms = (0..self.table.len()).filter(|&k| self.table.utility(k) >= t).map(|k| (self.pi[k], 1.0)).collect();
        Ok(self.model.add_row(format!("chance[{}]", self.model.num_rows()), terms, sense, p_t, false)?)
    }

    /// `sum pi(s) [s_k in states]  (sense)  p`.
    pub fn add_state_chance_constraint(
        &mut self,
        k: NodeId,
        states: &[usize],
        p: f64,
        sense: Sense,
    ) -> Result<RowId, FormulationError> {
        let d = &self.diagram;
        if k == 0 || k > d.path_len() || d.node(k).kind == NodeKind::Value {
            return Err(FormulationError::BadParameter(format!("node {k} is not a chance or decision node")));
        }
        if states.is_empty() {
            return Err(FormulationError::BadParameter("state set is empty".into()));
        }
        if let Some(&s) = states.iter().find(|&&s| s == 0 || s > d.states(k)) {
            return Err(FormulationError::BadParameter(format!("state {s} of node {k} out of range")));
        }
        if !is_unit_interval(p) {
            return Err(FormulationError::BadParameter(format!("probability level {p} outside [0, 1]")));
        }
        self.add_probability_cut(true);
        let mut s = vec![0; self.table.path_len()];
        let mut terms = Vec::new();
        for path in 0..self.table.len() {
            self.table.decode_into(path, &mut s);
            if states.contains(&s[k - 1]) {
                terms.push((self.pi[path], 1.0));
            }
        }
        Ok(self.model.add_row(format!("state_chance[{}]", self.model.num_rows()), terms, sense, p, false)?)
    }

    // -----------------------------------------------------------------------
    // CVaR
    // -----------------------------------------------------------------------

    /// Adds eta, lambda, lambda-bar, rho, rho-bar and their rows for level
    /// `alpha`. With every utility equal the separation constant is undefined;
    /// eta is then pinned to that utility and the rows still force
    /// `rho-bar` to carry `alpha` of the mass.
    pub fn add_cvar_block(&mut self, alpha: f64) -> Result<&CvarBlock, FormulationError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(FormulationError::BadParameter(format!("risk level {alpha} outside (0, 1]")));
        }
        if self.cvar.is_some() {
            return Err(FormulationError::BadParameter("model already has a CVaR block".into()));
        }
        self.add_probability_cut(true);
        let utils = self.table.utilities();
        let c_min = utils.iter().copied().fold(f64::INFINITY, f64::min);
        let c_max = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let big_m = c_max - c_min;
        let epsilon = separation(utils).unwrap_or(1.0);

        let n = self.table.len();
        let eta = self.model.add_continuous("eta", c_min, c_max, 0.0)?;
        self.keys.push(VariableKey::Eta);
        let mut block = CvarBlock {
            alpha,
            eta,
            lam: Vec::with_capacity(n),
            lam_bar: Vec::with_capacity(n),
            rho: Vec::with_capacity(n),
            rho_bar: Vec::with_capacity(n),
            c_min,
            c_max,
            big_m,
            epsilon,
            rows: Vec::new(),
        };
        for k in 0..n {
            for (key, list) in [(VariableKey::Lam(k), &mut block.lam), (VariableKey::LamBar(k), &mut block.lam_bar)] {
                list.push(self.model.add_binary(key.to_string(), 0.0, Priority::Auxiliary));
                self.keys.push(key);
            }
            for (key, list) in [(VariableKey::Rho(k), &mut block.rho), (VariableKey::RhoBar(k), &mut block.rho_bar)] {
                list.push(self.model.add_continuous(key.to_string(), 0.0, 1.0, 0.0)?);
                self.keys.push(key);
            }
        }
        let (m, e) = (big_m, epsilon);
        for k in 0..n {
            let c = utils[k];
            let (lam, lamb, rho, rhob, pi) =
                (block.lam[k], block.lam_bar[k], block.rho[k], block.rho_bar[k], self.pi[k]);
            let rows: [(&str, Vec<(VarId, f64)>, Sense, f64); 9] = [
                ("c1", vec![(eta, 1.0), (lam, -m)], Sense::Le, c),
                ("c2", vec![(eta, 1.0), (lam, -(m + e))], Sense::Ge, c - m),
                ("c3", vec![(eta, 1.0), (lamb, -(m + e))], Sense::Le, c - e),
                ("c4", vec![(eta, 1.0), (lamb, -m)], Sense::Ge, c - m),
                ("c5", vec![(rhob, 1.0), (lamb, -1.0)], Sense::Le, 0.0),
                ("c6", vec![(pi, 1.0), (lam, 1.0), (rho, -1.0)], Sense::Le, 1.0),
                ("c7", vec![(rho, 1.0), (lam, -1.0)], Sense::Le, 0.0),
                ("c8", vec![(rho, 1.0), (rhob, -1.0)], Sense::Le, 0.0),
                ("c9", vec![(rhob, 1.0), (pi, -1.0)], Sense::Le, 0.0),
            ];
            for (name, terms, sense, rhs) in rows {
                block.rows.push(self.model.add_row(format!("{name}[{k}]"), terms, sense, rhs, false)?);
            }
        }
        let tail_mass = block.rho_bar.iter().map(|&v| (v, 1.0)).collect();
        block.rows.push(self.model.add_row("tail_mass", tail_mass, Sense::Eq, alpha, false)?);
        self.cvar = Some(block);
        self.refresh_objective()?;
        Ok(self.cvar.as_ref().expect("just added"))
    }

    /// Linear expression of `sum rho-bar(s) U(s) / alpha`, the tail expectation.
    pub fn tail_expression(&self) -> Option<Vec<(VarId, f64)>> {
        let b = self.cvar.as_ref()?;
        Some(b.rho_bar.iter().enumerate().map(|(k, &v)| (v, self.table.utility(k) / b.alpha)).collect())
    }

    /// Tail expectation at assignment `x`.
    pub fn tail_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.tail_expression()?.iter().map(|&(v, a)| a * x[v.0]).sum())
    }

    // -----------------------------------------------------------------------
    // Frontier support
    // -----------------------------------------------------------------------

    /// Per-path values of a criterion (the tail uses the total utility).
    fn criterion_path_values(&self, c: Criterion) -> Result<Vec<f64>, FormulationError> {
        Ok(match c {
            Criterion::Utility | Criterion::Tail => self.table.utilities().to_vec(),
            Criterion::ValueNode(v) => {
                let pos = self.value_position(v)?;
                (0..self.table.len()).map(|k| self.table.utility_by_value(k)[pos]).collect()
            }
        })
    }

    /// Linear expression of a criterion's expectation.
    pub fn criterion_terms(&self, c: Criterion) -> Result<Vec<(VarId, f64)>, FormulationError> {
        match c {
            Criterion::Tail => self.tail_expression().ok_or(FormulationError::Missing("a CVaR block")),
            _ => Ok(self.criterion_path_values(c)?.into_iter().zip(&self.pi).map(|(u, &v)| (v, u)).collect()),
        }
    }

    /// `sum_{z'=0} z + N - sum_{z'=1} z >= 1`, where `N` is the number of
    /// (decision node, information state) pairs; violated only by `z` itself.
    pub fn add_exclusion_cut(&mut self, z: &GlobalStrategy) -> Result<RowId, FormulationError> {
        let mut terms = Vec::new();
        for (pos, local) in z.locals().iter().enumerate() {
            for (r, &chosen) in local.choices.iter().enumerate() {
                for (s, &v) in self.z[pos][r].iter().enumerate() {
                    terms.push((v, if s + 1 == chosen { -1.0 } else { 1.0 }));
                }
            }
        }
        let constant = self.assignment_count() as f64;
        let row = self.model.add_row(
            format!("exclude[{}]", self.exclusions.len()),
            terms,
            Sense::Ge,
            1.0 - constant,
            false,
        )?;
        self.exclusions.push(row);
        Ok(row)
    }

    /// Requires a feasible point not to be dominated by a strategy with
    /// criterion values `reference`: per criterion `v`,
    /// `E_v <= ref_v + M lplus_v`, `ref_v <= E_v + M lminus_v`,
    /// `lplus_v + lminus_v = 1`, and `sum lplus >= 1`. `big_m` defaults to the
    /// per-path value range plus one.
    pub fn add_dominance_block(
        &mut self,
        reference: &[f64],
        criteria: &[Criterion],
        big_m: Option<f64>,
    ) -> Result<&DominanceBlock, FormulationError> {
        if reference.len() != criteria.len() || criteria.is_empty() {
            return Err(FormulationError::BadParameter("one reference value per criterion is required".into()));
        }
        self.add_probability_cut(true);
        let b = self.dominance.len();
        let mut block = DominanceBlock {
            criteria: criteria.to_vec(),
            reference: reference.to_vec(),
            big_m: Vec::new(),
            plus: Vec::new(),
            minus: Vec::new(),
            rows: Vec::new(),
        };
        for (v, (&c, &e_ref)) in criteria.iter().zip(reference).enumerate() {
            let terms = self.criterion_terms(c)?;
            let m = match big_m {
                Some(m) => m,
                None => {
                    let vals = self.criterion_path_values(c)?;
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    hi - lo + 1.0
                }
            };
            let plus_key = VariableKey::LPlus { block: b, criterion: v };
            let minus_key = VariableKey::LMinus { block: b, criterion: v };
            let plus = self.model.add_binary(plus_key.to_string(), 0.0, Priority::Auxiliary);
            let minus = self.model.add_binary(minus_key.to_string(), 0.0, Priority::Auxiliary);
            self.keys.push(plus_key);
            self.keys.push(minus_key);
            let mut upper = terms.clone();
            upper.push((plus, -m));
            block.rows.push(self.model.add_row(format!("dom_up[{b}:{v}]"), upper, Sense::Le, e_ref, false)?);
            let mut lower: Vec<(VarId, f64)> = terms.into_iter().map(|(x, a)| (x, -a)).collect();
            lower.push((minus, -m));
            block.rows.push(self.model.add_row(format!("dom_lo[{b}:{v}]"), lower, Sense::Le, -e_ref, false)?);
            block.rows.push(self.model.add_row(
                format!("dom_pair[{b}:{v}]"),
                vec![(plus, 1.0), (minus, 1.0)],
                Sense::Eq,
                1.0,
                false,
            )?);
            block.big_m.push(m);
            block.plus.push(plus);
            block.minus.push(minus);
        }
        let any_plus = block.plus.iter().map(|&v| (v, 1.0)).collect();
        block.rows.push(self.model.add_row(format!("dom_any[{b}]"), any_plus, Sense::Ge, 1.0, false)?);
        self.dominance.push(block);
        Ok(self.dominance.last().expect("just added"))
    }

    // -----------------------------------------------------------------------
    // Strategies and raw access
    // -----------------------------------------------------------------------

    /// Fixes every decision binary to `z`.
    pub fn pin_strategy(&mut self, z: &GlobalStrategy) -> Result<(), FormulationError> {
        for (pos, local) in z.locals().iter().enumerate() {
            for (r, &chosen) in local.choices.iter().enumerate() {
                for (s, &v) in self.z[pos][r].iter().enumerate() {
                    let val = if s + 1 == chosen { 1.0 } else { 0.0 };
                    self.model.set_bounds(v, val, val)?;
                }
            }
        }
        Ok(())
    }

    /// Restores `[0, 1]` bounds on every decision binary.
    pub fn unpin(&mut self) {
        for v in self.z.iter().flatten().flatten() {
            self.model.set_bounds(*v, 0.0, 1.0).expect("unit interval is valid");
        }
    }

    pub fn add_aux_binary(&mut self, name: &str, obj: f64) -> VarId {
        self.has_raw = true;
        let key = VariableKey::Aux(name.to_string());
        let v = self.model.add_binary(key.to_string(), obj, Priority::Auxiliary);
        self.keys.push(key);
        v
    }

    pub fn add_aux_continuous(&mut self, name: &str, lo: f64, hi: f64, obj: f64) -> Result<VarId, FormulationError> {
        self.has_raw = true;
        let key = VariableKey::Aux(name.to_string());
        let v = self.model.add_continuous(key.to_string(), lo, hi, obj)?;
        self.keys.push(key);
        Ok(v)
    }

    /// Arbitrary linear row over existing and auxiliary variables.
    pub fn add_raw_row(
        &mut self,
        name: &str,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<RowId, FormulationError> {
        self.has_raw = true;
        Ok(self.model.add_row(name, terms, sense, rhs, false)?)
    }

    pub fn export_lp(&self, path: &Path) -> Result<(), FormulationError> {
        Ok(lp_format::write_lp(&self.model, path)?)
    }

    pub fn to_lp_string(&self) -> String {
        lp_format::to_lp_string(&self.model)
    }

    // -----------------------------------------------------------------------
    // Canonical completion
    // -----------------------------------------------------------------------

    /// Strategy taking, per information state, the state of largest binary
    /// value in `x` (lowest state on ties).
    pub fn round_strategy(&self, x: &[f64]) -> GlobalStrategy {
        let locals: Vec<LocalStrategy> = self
            .diagram
            .decision_nodes()
            .iter()
            .zip(&self.z)
            .map(|(&j, rows)| LocalStrategy {
                node: j,
                choices: rows
                    .iter()
                    .map(|vars| {
                        let mut best = 0;
                        for (s, v) in vars.iter().enumerate() {
                            if x[v.0] > x[vars[best].0] {
                                best = s;
                            }
                        }
                        best + 1
                    })
                    .collect(),
            })
            .collect();
        GlobalStrategy::new(&self.diagram, locals).expect("rounded strategy is total")
    }

    /// Path variable values `p(s)` on compatible paths, zero elsewhere.
    pub fn path_probabilities(&self, z: &GlobalStrategy) -> Vec<f64> {
        let mut pi = vec![0.0; self.table.len()];
        crate::strategy::for_each_compatible(&self.diagram, z, |s, _| {
            let k = self.table.index_of(s);
            pi[k] = self.table.p(k);
        });
        pi
    }

    /// Full assignment determined by `z`: path variables at their compatible
    /// values, the CVaR block at VaR with the tail filled in path order, and
    /// each dominance indicator switched on where the criterion does not fall
    /// below the reference. Auxiliary variables keep their values from `x`.
    pub fn canonical_point(&self, z: &GlobalStrategy, x: Option<&[f64]>) -> Vec<f64> {
        let mut out = match x {
            Some(x) => x.to_vec(),
            None => vec![0.0; self.model.num_vars()],
        };
        for (pos, local) in z.locals().iter().enumerate() {
            for (r, &chosen) in local.choices.iter().enumerate() {
                for (s, v) in self.z[pos][r].iter().enumerate() {
                    out[v.0] = if s + 1 == chosen { 1.0 } else { 0.0 };
                }
            }
        }
        let pi = self.path_probabilities(z);
        for (k, &v) in self.pi.iter().enumerate() {
            out[v.0] = pi[k];
        }
        if let Some(b) = &self.cvar {
            let utils = self.table.utilities();
            let dist = ConsequenceDistribution::from_pairs(utils.iter().copied().zip(pi.iter().copied()).collect());
            let var = var_direct(&dist, b.alpha).expect("alpha checked when the block was added");
            out[b.eta.0] = var;
            let mut remaining = b.alpha;
            for k in 0..self.table.len() {
                let c = utils[k];
                let below = c < var - b.epsilon;
                let above = c > var + b.epsilon;
                out[b.lam[k].0] = if below { 1.0 } else { 0.0 };
                out[b.lam_bar[k].0] = if above { 0.0 } else { 1.0 };
                out[b.rho[k].0] = if below { pi[k] } else { 0.0 };
                out[b.rho_bar[k].0] = if below {
                    remaining -= pi[k];
                    pi[k]
                } else {
                    0.0
                };
            }
            for k in 0..self.table.len() {
                let c = utils[k];
                if (c - var).abs() <= b.epsilon && remaining > 0.0 {
                    let take = pi[k].min(remaining);
                    out[b.rho_bar[k].0] = take;
                    remaining -= take;
                }
            }
        }
        for block in &self.dominance {
            for (v, &c) in block.criteria.iter().enumerate() {
                let terms = self.criterion_terms(c).expect("criterion validated when the block was added");
                let value: f64 = terms.iter().map(|&(x, a)| a * out[x.0]).sum();
                let on = value >= block.reference[v] - 1e-9;
                out[block.plus[v].0] = if on { 1.0 } else { 0.0 };
                out[block.minus[v].0] = if on { 0.0 } else { 1.0 };
            }
        }
        out
    }

    /// Completion hook for the branch-and-bound solver.
    pub fn completion(&self) -> DecisionCompletion<'_> {
        DecisionCompletion { model: self }
    }
}

/// Half the smallest gap between distinct utilities (duplicates within
/// [`UTILITY_DEDUP_TOL`] merged); `None` when all utilities coincide.
pub fn separation(utils: &[f64]) -> Option<f64> {
    let mut sorted = utils.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup_by(|a, b| (*a - *b).abs() <= UTILITY_DEDUP_TOL * b.abs().max(1.0));
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))))
        .map(|g| g / 2.0)
}

/// Rounds the decision binaries and completes the rest canonically.
pub struct DecisionCompletion<'a> {
    model: &'a DecisionModel,
}

impl Completion for DecisionCompletion<'_> {
    fn complete(&self, x: &[f64]) -> Option<Vec<f64>> {
        let z = self.model.round_strategy(x);
        Some(self.model.canonical_point(&z, Some(x)))
    }

    fn exact_on_primary(&self) -> bool {
        !self.model.has_raw
    }

    fn candidate_key(&self, x: &[f64]) -> Option<Vec<usize>> {
        if self.model.has_raw {
            return None;
        }
        let z = self.model.round_strategy(x);
        Some(z.locals().iter().flat_map(|l| l.choices.iter().copied()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_round_trip() {
        let keys = [
            VariableKey::Z { node: 4, state: 2, info: vec![(1, 2), (3, 1)] },
            VariableKey::Z { node: 1, state: 1, info: vec![] },
            VariableKey::Pi(0),
            VariableKey::Pi(12345),
            VariableKey::Eta,
            VariableKey::Lam(3),
            VariableKey::LamBar(3),
            VariableKey::Rho(7),
            VariableKey::RhoBar(7),
            VariableKey::LPlus { block: 2, criterion: 1 },
            VariableKey::LMinus { block: 0, criterion: 0 },
            VariableKey::Aux("link".into()),
        ];
        let texts: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
        assert_eq!(texts[0], "z[4=2|1=2,3=1]");
        assert_eq!(texts[1], "z[1=1|]");
        assert_eq!(texts[3], "pi[p12345]");
        assert_eq!(texts[9], "lplus[b2v1]");
        for (k, t) in keys.iter().zip(&texts) {
            assert_eq!(&t.parse::<VariableKey>().unwrap(), k);
        }
        for bad in ["z[1|]", "pi[12]", "eta[1]", "lplus[b1]", "q[p1]", "lam[p1"] {
            assert!(bad.parse::<VariableKey>().is_err(), "{bad}");
        }
    }

    #[test]
    fn separation_dedups() {
        assert_eq!(separation(&[0.0, 1.0, 1.0 + 1e-13, 3.0]), Some(0.5));
        assert_eq!(separation(&[2.0, 2.0]), None);
    }
}

//! Branch and bound over binary variables.
//!
//! Node relaxations are solved by [`DualSimplex`] warm-started from the parent
//! basis. Lazy rows are checked against integer-feasible relaxation points
//! (optionally every node) and loaded when violated, after which the node is
//! re-solved. An optional [`Completion`] turns relaxation points into full
//! candidate assignments; when it is exact on primary binaries, a node whose
//! primary binaries are integral is settled by the completion alone.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use crate::error::SolveError;
use crate::model::{Model, Priority, Row, VarId, VarKind};
use crate::propagate::{propagate, Scratch};
use crate::simplex::{Basis, DualSimplex, LpLimits, LpStatus, SparseLp};

const CUT_TOL: f64 = 1e-7;
const FEAS_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branching {
    MostFractional,
    FirstIndex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Search {
    /// Best bound, diving depth-first until the first incumbent exists.
    BestBound,
    DepthFirst,
}

/// When lazy rows are checked against relaxation points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LazyCutPolicy {
    /// Lazy rows are loaded into the relaxation from the start.
    Eager,
    IntegerNodes,
    EveryNode,
}

#[derive(Clone, Debug)]
pub struct SolveParams {
    pub gap_tolerance: f64,
    pub integrality_tolerance: f64,
    pub node_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    pub lazy: LazyCutPolicy,
    pub branching: Branching,
    pub search: Search,
    /// Record every settled node for soundness audits.
    pub audit: bool,
    pub lp_limits: LpLimits,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-9,
            integrality_tolerance: 1e-6,
            node_limit: None,
            time_limit: None,
            lazy: LazyCutPolicy::IntegerNodes,
            branching: Branching::MostFractional,
            search: Search::BestBound,
            audit: false,
            lp_limits: LpLimits::default(),
        }
    }
}

impl SolveParams {
    fn check(&self) -> Result<(), SolveError> {
        if !(self.gap_tolerance > 0.0) || !(self.integrality_tolerance > 0.0) || self.integrality_tolerance >= 0.5 {
            return Err(SolveError::BadParameter(
                "tolerances must be positive and the integrality tolerance below 0.5".into(),
            ));
        }
        Ok(())
    }
}

/// Maps relaxation points to full candidate assignments.
pub trait Completion {
    /// Candidate built from `x` (binaries may be fractional), or `None`.
    fn complete(&self, x: &[f64]) -> Option<Vec<f64>>;

    /// True when, for `x` with integral primary binaries, the candidate is an
    /// optimal assignment among all points sharing those primary values, and
    /// infeasibility of the candidate proves no such point is feasible.
    fn exact_on_primary(&self) -> bool {
        false
    }

    /// Identifies the candidate `complete(x)` returns: equal keys give
    /// equal candidates. `None` disables caching for `x`.
    fn candidate_key(&self, _x: &[f64]) -> Option<Vec<usize>> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    /// A limit stopped the search after an incumbent was found.
    Feasible,
    Infeasible,
    /// A limit stopped the search before any incumbent was found.
    Limit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeOutcome {
    Infeasible,
    Pruned {
        bound: f64,
    },
    /// Settled exactly; `value` is the best objective in the subtree, if any.
    Leaf {
        value: Option<f64>,
    },
    Branched {
        bound: f64,
    },
}

/// One processed node: its branching fixings and how it was settled.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub fixings: Vec<(VarId, f64)>,
    pub outcome: NodeOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Progress {
    pub node: usize,
    pub bound: f64,
    pub incumbent: f64,
    pub gap: f64,
    pub cuts: usize,
}

impl std::fmt::Display for Progress {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "node={} bound={:.12e} incumbent={:.12e} gap={:.3e} cuts={}",
            self.node, self.bound, self.incumbent, self.gap, self.cuts
        )
    }
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Incumbent objective including the model offset (`-inf` without one).
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub x: Vec<f64>,
    pub node_count: usize,
    pub cuts_added: usize,
    /// Relaxation value at the root after lazy-cut rounds, offset included.
    pub root_bound: f64,
    pub trace: Vec<Progress>,
    pub nodes: Vec<NodeRecord>,
}

impl MilpSolution {
    pub fn has_incumbent(&self) -> bool {
        matches!(self.status, MilpStatus::Optimal | MilpStatus::Feasible)
    }
}

struct OpenNode {
    id: usize,
    parent: usize,
    key: f64,
    fixings: Vec<(usize, f64)>,
    basis: Option<Basis>,
    /// Propagated bounds of the parent.
    bounds: Option<Rc<BoundDelta>>,
}

/// Bounds that differ from the parent's, chained up to the root.
struct BoundDelta {
    parent: Option<Rc<BoundDelta>>,
    changes: Vec<(usize, f64, f64)>,
}

fn apply_chain(mut delta: Option<&BoundDelta>, lo: &mut [f64], hi: &mut [f64]) {
    let mut chain = Vec::new();
    while let Some(d) = delta {
        chain.push(d);
        delta = d.parent.as_deref();
    }
    for d in chain.into_iter().rev() {
        for &(j, l, h) in &d.changes {
            lo[j] = l;
            hi[j] = h;
        }
    }
}

struct PoolRow {
    terms: Vec<(usize, f64)>,
    lo: f64,
    hi: f64,
    loaded: bool,
}

impl PoolRow {
    fn violation(&self, x: &[f64]) -> f64 {
        let act: f64 = self.terms.iter().map(|&(j, a)| a * x[j]).sum();
        (self.lo - act).max(act - self.hi).max(0.0)
    }
}

fn relative_gap(bound: f64, incumbent: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((bound - incumbent) / incumbent.abs().max(1.0)).max(0.0)
}

/// Maximizes `model` over its binaries. `extra_lazy` rows join the model's own
/// lazy rows in the cut pool.
pub fn solve(
    model: &Model,
    extra_lazy: &[Row],
    params: &SolveParams,
    completion: Option<&dyn Completion>,
) -> Result<MilpSolution, SolveError> {
    params.check()?;
    let start = Instant::now();
    let n = model.num_vars();
    let offset = model.offset();
    let is_int: Vec<bool> = model.vars().iter().map(|v| v.kind == VarKind::Binary).collect();
    let primary: Vec<usize> = (0..n).filter(|&j| is_int[j] && model.vars()[j].priority == Priority::Primary).collect();
    let auxiliary: Vec<usize> =
        (0..n).filter(|&j| is_int[j] && model.vars()[j].priority == Priority::Auxiliary).collect();

    let eager = params.lazy == LazyCutPolicy::Eager;
    let (mut lp, _) = SparseLp::from_model(model, false);
    let mut pool: Vec<PoolRow> = Vec::new();
    let lazy_rows = model.rows().iter().filter(|r| r.lazy).chain(extra_lazy.iter());
    let mut eager_rows = Vec::new();
    for r in lazy_rows {
        let (lo, hi) = r.sense.interval(r.rhs);
        let terms: Vec<(usize, f64)> = r.terms.iter().map(|&(v, a)| (v.0, a)).collect();
        if eager {
            eager_rows.push((terms.clone(), lo, hi));
        }
        pool.push(PoolRow { terms, lo, hi, loaded: eager });
    }
    lp.append_rows(eager_rows);

    let mut root_lo: Vec<f64> = model.vars().iter().map(|v| v.lo).collect();
    let mut root_hi: Vec<f64> = model.vars().iter().map(|v| v.hi).collect();
    let mut sol = MilpSolution {
        status: MilpStatus::Infeasible,
        objective: f64::NEG_INFINITY,
        bound: f64::NEG_INFINITY,
        gap: f64::INFINITY,
        x: Vec::new(),
        node_count: 0,
        cuts_added: 0,
        root_bound: f64::NAN,
        trace: Vec::new(),
        nodes: Vec::new(),
    };
    let mut scratch = Scratch::default();
    let mut changed = Vec::new();
    if !propagate(&lp, &is_int, &mut root_lo, &mut root_hi, None, &mut scratch, &mut changed) {
        sol.root_bound = f64::NEG_INFINITY;
        return Ok(sol);
    }

    let mut solver = DualSimplex::new(lp, root_lo.clone(), root_hi.clone());
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut open: Vec<OpenNode> = vec![OpenNode {
        id: 0,
        parent: usize::MAX,
        key: f64::INFINITY,
        fixings: Vec::new(),
        basis: None,
        bounds: None,
    }];
    let mut next_id = 1usize;
    let mut last_processed = usize::MAX;
    let mut limit_hit = false;
    let mut checked: HashMap<Vec<usize>, Option<f64>> = HashMap::new();

    let feasible = |x: &[f64], pool: &[PoolRow]| -> bool {
        model.max_violation(x) <= FEAS_TOL && pool.iter().all(|r| r.violation(x) <= FEAS_TOL)
    };
    let prune_level = |inc: &Option<(f64, Vec<f64>)>| -> f64 {
        match inc {
            Some((v, _)) => v + params.gap_tolerance * v.abs().max(1.0),
            None => f64::NEG_INFINITY,
        }
    };

    while !open.is_empty() {
        if params.node_limit.is_some_and(|l| sol.node_count >= l)
            || params.time_limit.is_some_and(|t| start.elapsed() >= t)
        {
            limit_hit = true;
            break;
        }
        let pick = if incumbent.is_none() || params.search == Search::DepthFirst {
            open.len() - 1
        } else {
            let mut best = 0;
            for (t, nd) in open.iter().enumerate() {
                let b = &open[best];
                if nd.key > b.key || (nd.key == b.key && nd.id < b.id) {
                    best = t;
                }
            }
            best
        };
        let node = open.swap_remove(pick);
        if node.key <= prune_level(&incumbent) {
            if params.audit {
                sol.nodes.push(NodeRecord {
                    id: node.id,
                    fixings: to_var(&node.fixings),
                    outcome: NodeOutcome::Pruned { bound: node.key },
                });
            }
            continue;
        }
        sol.node_count += 1;

        let mut lo = root_lo.clone();
        let mut hi = root_hi.clone();
        apply_chain(node.bounds.as_deref(), &mut lo, &mut hi);
        changed.clear();
        if let Some(&(j, v)) = node.fixings.last() {
            lo[j] = v;
            hi[j] = v;
            changed.push(j);
        }
        let seeds = changed.clone();
        let outcome = 'node: {
            if !propagate(solver.lp(), &is_int, &mut lo, &mut hi, Some(&seeds), &mut scratch, &mut changed) {
                break 'node NodeOutcome::Infeasible;
            }
            if node.parent != last_processed {
                if let Some(b) = &node.basis {
                    solver.load_basis(b);
                }
            }
            solver.set_bounds(&lo, &hi);
            let (lp_sol, lp_value) = loop {
                let s = match solver.solve(&params.lp_limits) {
                    Ok(s) => s,
                    Err(e) => {
                        log::debug!("node {}: {e}; re-solving from scratch with Bland's rule", node.id);
                        let mut fresh = DualSimplex::new(solver.lp().clone(), lo.clone(), hi.clone());
                        let s = fresh.solve(&LpLimits { bland: true, ..params.lp_limits })?;
                        solver = fresh;
                        s
                    }
                };
                if s.status != LpStatus::Optimal {
                    break (s, f64::NEG_INFINITY);
                }
                let check_lazy = params.lazy == LazyCutPolicy::EveryNode
                    || (params.lazy == LazyCutPolicy::IntegerNodes
                        && all_integral(&s.primal, &is_int, params.integrality_tolerance));
                if check_lazy {
                    let mut add = Vec::new();
                    for r in pool.iter_mut().filter(|r| !r.loaded) {
                        if r.violation(&s.primal) > CUT_TOL {
                            r.loaded = true;
                            add.push((r.terms.clone(), r.lo, r.hi));
                        }
                    }
                    if !add.is_empty() {
                        sol.cuts_added += add.len();
                        solver.add_rows(add);
                        continue;
                    }
                }
                let v = s.objective + offset;
                break (s, v);
            };
            match lp_sol.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => break 'node NodeOutcome::Infeasible,
                _ => {
                    return Err(SolveError::Numerical(format!(
                        "node {} relaxation ended with {:?}",
                        node.id, lp_sol.status
                    )));
                }
            }
            let bound = lp_value.min(node.key);
            if node.id == 0 {
                sol.root_bound = lp_value;
            }
            let x = lp_sol.primal;

            let primary_integral = primary.iter().all(|&j| is_integral(x[j], params.integrality_tolerance));
            if let Some(c) = completion {
                let key = c.candidate_key(&x);
                let value = match key.as_ref().and_then(|k| checked.get(k)) {
                    Some(&v) => v,
                    None => {
                        let cand = c.complete(&x).filter(|cand| feasible(cand, &pool));
                        let v = cand.as_ref().map(|cand| model.objective_value(cand));
                        if let (Some(v), Some(cand)) = (v, cand) {
                            if incumbent.as_ref().map_or(true, |(iv, _)| v > *iv) {
                                incumbent = Some((v, cand));
                            }
                        }
                        if let Some(k) = key {
                            checked.insert(k, v);
                        }
                        v
                    }
                };
                if primary_integral && c.exact_on_primary() {
                    break 'node NodeOutcome::Leaf { value };
                }
            }
            if bound <= prune_level(&incumbent) {
                break 'node NodeOutcome::Pruned { bound };
            }
            if primary_integral && auxiliary.iter().all(|&j| is_integral(x[j], params.integrality_tolerance)) {
                let mut xr = x.clone();
                for &j in primary.iter().chain(&auxiliary) {
                    xr[j] = xr[j].round();
                }
                let value = if feasible(&xr, &pool) {
                    let v = model.objective_value(&xr);
                    if incumbent.as_ref().map_or(true, |(iv, _)| v > *iv) {
                        incumbent = Some((v, xr));
                    }
                    Some(v)
                } else if feasible(&x, &pool) {
                    let v = model.objective_value(&x);
                    if incumbent.as_ref().map_or(true, |(iv, _)| v > *iv) {
                        incumbent = Some((v, x.clone()));
                    }
                    Some(v)
                } else {
                    return Err(SolveError::Numerical(format!(
                        "node {}: integral relaxation point violates the model",
                        node.id
                    )));
                };
                break 'node NodeOutcome::Leaf { value };
            }
            let var = select_branch(&x, &primary, &lo, &hi, params)
                .or_else(|| select_branch(&x, &auxiliary, &lo, &hi, params))
                .expect("a fractional binary exists");
            let basis = solver.basis();
            changed.sort_unstable();
            changed.dedup();
            let delta = Rc::new(BoundDelta {
                parent: node.bounds.clone(),
                changes: changed.iter().map(|&j| (j, lo[j], hi[j])).collect(),
            });
            for v in [0.0, 1.0] {
                let mut fixings = node.fixings.clone();
                fixings.push((var, v));
                open.push(OpenNode {
                    id: next_id,
                    parent: node.id,
                    key: bound,
                    fixings,
                    basis: Some(basis.clone()),
                    bounds: Some(delta.clone()),
                });
                next_id += 1;
            }
            NodeOutcome::Branched { bound }
        };
        last_processed = node.id;
        if params.audit {
            sol.nodes.push(NodeRecord { id: node.id, fixings: to_var(&node.fixings), outcome });
        }
        let inc = incumbent.as_ref().map_or(f64::NEG_INFINITY, |(v, _)| *v);
        let open_bound = open.iter().map(|o| o.key).fold(f64::NEG_INFINITY, f64::max);
        let bound = if open.is_empty() { inc } else { open_bound.max(inc) };
        let p = Progress {
            node: sol.node_count,
            bound,
            incumbent: inc,
            gap: relative_gap(bound, inc),
            cuts: sol.cuts_added,
        };
        if sol.node_count % 1000 == 0 {
            log::info!("{p}");
        } else {
            log::debug!("{p}");
        }
        sol.trace.push(p);
    }

    let open_bound = open.iter().map(|o| o.key).fold(f64::NEG_INFINITY, f64::max);
    match incumbent {
        Some((v, x)) => {
            sol.objective = v;
            sol.x = x;
            sol.bound = if limit_hit { open_bound.max(v) } else { v };
            sol.gap = relative_gap(sol.bound, v);
            sol.status =
                if limit_hit && sol.gap > params.gap_tolerance { MilpStatus::Feasible } else { MilpStatus::Optimal };
        }
        None => {
            sol.bound = if limit_hit { open_bound } else { f64::NEG_INFINITY };
            sol.status = if limit_hit { MilpStatus::Limit } else { MilpStatus::Infeasible };
        }
    }
    if sol.root_bound.is_nan() {
        sol.root_bound = sol.bound;
    }
    log::info!(
        "node={} bound={:.12e} incumbent={:.12e} gap={:.3e} cuts={}",
        sol.node_count,
        sol.bound,
        sol.objective,
        sol.gap,
        sol.cuts_added
    );
    Ok(sol)
}

fn to_var(f: &[(usize, f64)]) -> Vec<(VarId, f64)> {
    f.iter().map(|&(j, v)| (VarId(j), v)).collect()
}

fn is_integral(v: f64, tol: f64) -> bool {
    (v - v.round()).abs() <= tol
}

fn all_integral(x: &[f64], is_int: &[bool], tol: f64) -> bool {
    x.iter().zip(is_int).all(|(&v, &b)| !b || is_integral(v, tol))
}

fn select_branch(x: &[f64], cands: &[usize], lo: &[f64], hi: &[f64], params: &SolveParams) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in cands {
        if lo[j] == hi[j] || is_integral(x[j], params.integrality_tolerance) {
            continue;
        }
        let score = 0.5 - (x[j] - x[j].floor() - 0.5).abs();
        match params.branching {
            Branching::FirstIndex => return Some(j),
            Branching::MostFractional => {
                if best.map_or(true, |(_, s)| score > s) {
                    best = Some((j, score));
                }
            }
        }
    }
    best.map(|b| b.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;

    fn knapsack() -> Model {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 4 (binaries): optimum a + c = 8.
        let mut m = Model::new();
        let a = m.add_binary("a", 5.0, Priority::Primary);
        let b = m.add_binary("b", 4.0, Priority::Primary);
        let c = m.add_binary("c", 3.0, Priority::Primary);
        m.add_row("cap", vec![(a, 2.0), (b, 3.0), (c, 1.0)], Sense::Le, 4.0, false).unwrap();
        m
    }

    #[test]
    fn solves_small_knapsack() {
        let s = solve(&knapsack(), &[], &SolveParams::default(), None).unwrap();
        assert_eq!(s.status, MilpStatus::Optimal);
        assert!((s.objective - 8.0).abs() < 1e-9);
        assert!(s.root_bound >= s.objective - 1e-9);
    }

    #[test]
    fn lazy_row_is_enforced() {
        let m = knapsack();
        let cut = Row { name: "no_a".into(), terms: vec![(VarId(0), 1.0)], sense: Sense::Le, rhs: 0.0, lazy: true };
        let s = solve(&m, &[cut], &SolveParams::default(), None).unwrap();
        // Without a: b + c = 7.
        assert!((s.objective - 7.0).abs() < 1e-9);
        assert!(s.cuts_added >= 1);
        assert!(s.x[0].abs() < 1e-9);
    }

    #[test]
    fn infeasible_model() {
        let mut m = Model::new();
        let a = m.add_binary("a", 1.0, Priority::Primary);
        let b = m.add_binary("b", 1.0, Priority::Primary);
        m.add_row("r", vec![(a, 1.0), (b, 1.0)], Sense::Eq, 1.5, false).unwrap();
        let s = solve(&m, &[], &SolveParams::default(), None).unwrap();
        assert_eq!(s.status, MilpStatus::Infeasible);
    }

    #[test]
    fn bounds_trace_is_monotone() {
        let mut m = Model::new();
        let vars: Vec<_> =
            (0..8).map(|k| m.add_binary(format!("x{k}"), 1.0 + k as f64 * 0.37, Priority::Primary)).collect();
        let terms = vars.iter().enumerate().map(|(k, &v)| (v, 1.0 + (k % 3) as f64)).collect();
        m.add_row("cap", terms, Sense::Le, 7.5, false).unwrap();
        let s = solve(&m, &[], &SolveParams::default(), None).unwrap();
        for w in s.trace.windows(2) {
            assert!(w[1].bound <= w[0].bound + 1e-12);
            assert!(w[1].incumbent >= w[0].incumbent);
        }
    }
}

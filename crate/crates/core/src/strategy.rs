//! Decision strategies, their exact evaluation, brute-force oracles and risk
//! measures of fixed strategies.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::diagram::{strategy_space_size, Diagram, NodeId, NodeKind};
use crate::error::{DiagramError, StrategyError};
use crate::paths::Utility;

/// Strategies enumerated before [`enumerate_strategies`] refuses.
pub const DEFAULT_STRATEGY_CAP: u128 = 10_000_000;

/// Support values closer than this are merged.
pub const MERGE_TOL: f64 = 1e-9;

const MASS_TOL: f64 = 1e-12;

/// Decision rule of one node: `choices[row]` is the chosen state (1-based) at
/// information state `row` (lexicographic ordinal).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalStrategy {
    pub node: NodeId,
    pub choices: Vec<usize>,
}

/// One local strategy per decision node, in node order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GlobalStrategy {
    locals: Vec<LocalStrategy>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LocalDoc {
    node: NodeId,
    rows: Vec<RowDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowDoc {
    given: Vec<usize>,
    choose: usize,
}

impl GlobalStrategy {
    /// Checks that `locals` cover every decision node of `d` totally and in range.
    pub fn new(d: &Diagram, mut locals: Vec<LocalStrategy>) -> Result<Self, StrategyError> {
        locals.sort_by_key(|l| l.node);
        for l in &locals {
            if l.node == 0 || l.node > d.num_nodes() || d.node(l.node).kind != NodeKind::Decision {
                return Err(StrategyError::Malformed { node: l.node, message: "not a decision node".into() });
            }
        }
        let nodes: Vec<NodeId> = locals.iter().map(|l| l.node).collect();
        for &j in d.decision_nodes() {
            if !nodes.contains(&j) {
                return Err(StrategyError::MissingNode(j));
            }
        }
        if nodes.len() != d.decision_nodes().len() {
            return Err(StrategyError::Malformed { node: nodes[0], message: "node listed more than once".into() });
        }
        for l in &locals {
            if l.choices.len() != d.info_state_count(l.node) {
                return Err(StrategyError::Malformed {
                    node: l.node,
                    message: format!(
                        "{} choices for {} information states",
                        l.choices.len(),
                        d.info_state_count(l.node)
                    ),
                });
            }
            if let Some(&c) = l.choices.iter().find(|&&c| c == 0 || c > d.states(l.node)) {
                return Err(StrategyError::Malformed { node: l.node, message: format!("state {c} out of range") });
            }
        }
        Ok(Self { locals })
    }

    /// Strategy choosing `f(node, information state)` everywhere.
    pub fn from_fn(d: &Diagram, mut f: impl FnMut(NodeId, &[usize]) -> usize) -> Result<Self, StrategyError> {
        let locals = d
            .decision_nodes()
            .iter()
            .map(|&j| LocalStrategy {
                node: j,
                choices: (0..d.info_state_count(j)).map(|r| f(j, &d.info_state(j, r))).collect(),
            })
            .collect();
        Self::new(d, locals)
    }

    pub fn locals(&self) -> &[LocalStrategy] {
        &self.locals
    }

    pub fn local(&self, j: NodeId) -> Option<&LocalStrategy> {
        self.locals.iter().find(|l| l.node == j)
    }

    /// State chosen at decision node `j`, information row `row`.
    #[inline]
    pub fn choice(&self, j: NodeId, row: usize) -> usize {
        self.locals.iter().find(|l| l.node == j).expect("decision node covered by strategy").choices[row]
    }

    /// JSON array of `{node, rows: [{given, choose}]}`.
    pub fn to_json(&self, d: &Diagram) -> String {
        let docs: Vec<LocalDoc> = self
            .locals
            .iter()
            .map(|l| LocalDoc {
                node: l.node,
                rows: l
                    .choices
                    .iter()
                    .enumerate()
                    .map(|(r, &c)| RowDoc { given: d.info_state(l.node, r), choose: c })
                    .collect(),
            })
            .collect();
        serde_json::to_string(&docs).expect("strategy documents always serialize")
    }

    pub fn from_json(d: &Diagram, text: &str) -> Result<Self, StrategyError> {
        let docs: Vec<LocalDoc> = serde_json::from_str(text).map_err(|e| StrategyError::Json(e.to_string()))?;
        let mut locals = Vec::with_capacity(docs.len());
        for doc in docs {
            let j = doc.node;
            if j == 0 || j > d.num_nodes() || d.node(j).kind != NodeKind::Decision {
                return Err(StrategyError::Malformed { node: j, message: "not a decision node".into() });
            }
            let rows = d.info_state_count(j);
            let mut choices = vec![0; rows];
            for row in doc.rows {
                let r = (0..rows).find(|&r| d.info_state(j, r) == row.given).ok_or_else(|| {
                    StrategyError::Malformed { node: j, message: format!("unknown information state {:?}", row.given) }
                })?;
                if choices[r] != 0 {
                    return Err(StrategyError::Malformed {
                        node: j,
                        message: format!("state {:?} given twice", row.given),
                    });
                }
                choices[r] = row.choose;
            }
            if choices.contains(&0) {
                return Err(StrategyError::Malformed {
                    node: j,
                    message: "not every information state is mapped".into(),
                });
            }
            locals.push(LocalStrategy { node: j, choices });
        }
        Self::new(d, locals)
    }
}

/// Calls `f(path, probability)` for every compatible path of positive
/// probability, in lexicographic order.
pub fn for_each_compatible(d: &Diagram, z: &GlobalStrategy, mut f: impl FnMut(&[usize], f64)) {
    let n = d.path_len();
    let mut path = vec![0usize; n];
    // Decision position of each node, for the strategy lookup.
    let mut local_of = vec![usize::MAX; n + 1];
    for (k, l) in z.locals().iter().enumerate() {
        local_of[l.node] = k;
    }
    fn rec(
        d: &Diagram,
        z: &GlobalStrategy,
        local_of: &[usize],
        path: &mut Vec<usize>,
        j: usize,
        prob: f64,
        f: &mut dyn FnMut(&[usize], f64),
    ) {
        if j > path.len() {
            f(path, prob);
            return;
        }
        let row = d.info_row(j, path);
        if local_of[j] != usize::MAX {
            path[j - 1] = z.locals()[local_of[j]].choices[row];
            rec(d, z, local_of, path, j + 1, prob, f);
        } else {
            for (s, &q) in d.probability_row(j, row).iter().enumerate() {
                if q > 0.0 {
                    path[j - 1] = s + 1;
                    rec(d, z, local_of, path, j + 1, prob * q, f);
                }
            }
        }
    }
    rec(d, z, &local_of, &mut path, 1, 1.0, &mut f);
}

/// Sum of path probability times path utility over compatible paths.
pub fn expected_utility(d: &Diagram, utility: &Utility, z: &GlobalStrategy) -> f64 {
    let mut total = 0.0;
    for_each_compatible(d, z, |s, p| {
        let u: f64 = d.value_nodes().iter().map(|&v| utility.apply(d.consequence_on(v, s))).sum();
        total += p * u;
    });
    total
}

/// Expected transformed consequence of each value node.
pub fn expected_by_value(d: &Diagram, utility: &Utility, z: &GlobalStrategy) -> Vec<f64> {
    let mut total = vec![0.0; d.value_nodes().len()];
    for_each_compatible(d, z, |s, p| {
        for (t, &v) in total.iter_mut().zip(d.value_nodes()) {
            *t += p * utility.apply(d.consequence_on(v, s));
        }
    });
    total
}

/// Discrete distribution of the path utility, support strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsequenceDistribution {
    support: Vec<(f64, f64)>,
}

impl ConsequenceDistribution {
    /// Sorts `(value, probability)` pairs, drops zero masses and merges values
    /// within [`MERGE_TOL`] of the smallest value of their group.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.retain(|&(_, p)| p > 0.0);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<(f64, f64)> = Vec::new();
        for (c, p) in pairs {
            match support.last_mut() {
                Some(last) if c - last.0 <= MERGE_TOL * last.0.abs().max(1.0) => last.1 += p,
                _ => support.push((c, p)),
            }
        }
        Self { support }
    }

    pub fn support(&self) -> &[(f64, f64)] {
        &self.support
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().map(|(c, p)| c * p).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }

    /// CSV with columns `value, probability`.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "value,probability")?;
        for (c, p) in &self.support {
            writeln!(w, "{c:.16e},{p:.16e}")?;
        }
        Ok(())
    }
}

pub fn distribution(d: &Diagram, utility: &Utility, z: &GlobalStrategy) -> ConsequenceDistribution {
    let mut pairs = Vec::new();
    for_each_compatible(d, z, |s, p| {
        let u: f64 = d.value_nodes().iter().map(|&v| utility.apply(d.consequence_on(v, s))).sum();
        pairs.push((u, p));
    });
    ConsequenceDistribution::from_pairs(pairs)
}

/// Lexicographic iterator over global strategies: positions are ordered by
/// (node, information state), the first position varies slowest.
#[derive(Clone, Debug)]
pub struct StrategyIter {
    nodes: Vec<NodeId>,
    rows: Vec<usize>,
    radix: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for StrategyIter {
    type Item = GlobalStrategy;

    fn next(&mut self) -> Option<GlobalStrategy> {
        let digits = self.next.take()?;
        let mut succ = digits.clone();
        let mut k = succ.len();
        while k > 0 {
            k -= 1;
            if succ[k] < self.radix[k] {
                succ[k] += 1;
                self.next = Some(succ);
                break;
            }
            succ[k] = 1;
        }
        let mut locals = Vec::with_capacity(self.nodes.len());
        let mut at = 0;
        for (&j, &r) in self.nodes.iter().zip(&self.rows) {
            locals.push(LocalStrategy { node: j, choices: digits[at..at + r].to_vec() });
            at += r;
        }
        Some(GlobalStrategy { locals })
    }
}

/// Every global strategy exactly once, refusing spaces above `cap`.
pub fn enumerate_strategies(d: &Diagram, cap: u128) -> Result<StrategyIter, StrategyError> {
    let size = strategy_space_size(d).map_err(|e| match e {
        DiagramError::Overflow => StrategyError::Overflow,
        _ => unreachable!("strategy_space_size only overflows"),
    })?;
    if size > cap {
        return Err(StrategyError::TooMany { size, cap });
    }
    let nodes = d.decision_nodes().to_vec();
    let rows: Vec<usize> = nodes.iter().map(|&j| d.info_state_count(j)).collect();
    let radix: Vec<usize> =
        nodes.iter().zip(&rows).flat_map(|(&j, &r)| std::iter::repeat(d.states(j)).take(r)).collect();
    let next = if size == 0 { None } else { Some(vec![1; radix.len()]) };
    Ok(StrategyIter { nodes, rows, radix, next })
}

/// First strategy of maximal expected utility in enumeration order.
pub fn brute_force_optimum(d: &Diagram, utility: &Utility, cap: u128) -> Result<(GlobalStrategy, f64), StrategyError> {
    let mut best: Option<(GlobalStrategy, f64)> = None;
    for z in enumerate_strategies(d, cap)? {
        let eu = expected_utility(d, utility, &z);
        if best.as_ref().map_or(true, |(_, b)| eu > *b) {
            best = Some((z, eu));
        }
    }
    Ok(best.expect("a diagram always has at least one strategy"))
}

fn check_alpha(alpha: f64) -> Result<(), StrategyError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(StrategyError::BadAlpha(alpha))
    }
}

/// `sup{t : P(C <= t) < alpha}`: the smallest support value whose strictly
/// lower mass is below `alpha` and whose inclusive mass reaches it.
pub fn var_direct(dist: &ConsequenceDistribution, alpha: f64) -> Result<f64, StrategyError> {
    check_alpha(alpha)?;
    let mut below = 0.0;
    for &(c, p) in dist.support() {
        if below < alpha - MASS_TOL && below + p >= alpha - MASS_TOL {
            return Ok(c);
        }
        below += p;
    }
    Ok(dist.support().last().map_or(0.0, |&(c, _)| c))
}

/// Expectation over the lower `alpha` tail, counting only the fraction of the
/// VaR atom needed to fill the tail.
pub fn cvar_direct(dist: &ConsequenceDistribution, alpha: f64) -> Result<f64, StrategyError> {
    let var = var_direct(dist, alpha)?;
    let (mut mass, mut sum) = (0.0, 0.0);
    for &(c, p) in dist.support() {
        if c < var {
            mass += p;
            sum += p * c;
        }
    }
    Ok((sum + (alpha - mass) * var) / alpha)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Deviations {
    pub mean: f64,
    /// Expected shortfall below the target.
    pub edr: f64,
    /// Mean absolute deviation from the mean.
    pub ad: f64,
    /// Mean shortfall below the mean.
    pub lsad: f64,
}

pub fn deviation_measures(dist: &ConsequenceDistribution, target: f64) -> Deviations {
    let mean = dist.mean();
    let mut dev = Deviations { mean, edr: 0.0, ad: 0.0, lsad: 0.0 };
    for &(c, p) in dist.support() {
        dev.edr += p * (target - c).max(0.0);
        dev.ad += p * (c - mean).abs();
        dev.lsad += p * (mean - c).max(0.0);
    }
    dev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::DiagramBuilder;

    fn dist(pairs: &[(f64, f64)]) -> ConsequenceDistribution {
        ConsequenceDistribution::from_pairs(pairs.to_vec())
    }

    #[test]
    fn var_examples() {
        assert_eq!(var_direct(&dist(&[(7.0, 1.0)]), 0.3).unwrap(), 7.0);
        assert_eq!(var_direct(&dist(&[(0.0, 0.1), (100.0, 0.9)]), 0.2).unwrap(), 100.0);
        // Inclusive mass at 0 equals alpha, so 0 is the last t with P(C <= t) < alpha's sup.
        assert_eq!(var_direct(&dist(&[(0.0, 0.2), (100.0, 0.8)]), 0.2).unwrap(), 0.0);
        assert!(matches!(var_direct(&dist(&[(1.0, 1.0)]), 0.0), Err(StrategyError::BadAlpha(_))));
        assert!(matches!(var_direct(&dist(&[(1.0, 1.0)]), 1.5), Err(StrategyError::BadAlpha(_))));
    }

    #[test]
    fn cvar_examples() {
        assert_eq!(cvar_direct(&dist(&[(7.0, 1.0)]), 0.05).unwrap(), 7.0);
        let two = dist(&[(0.0, 0.1), (100.0, 0.9)]);
        assert!((cvar_direct(&two, 0.2).unwrap() - 50.0).abs() < 1e-12);
        assert!((cvar_direct(&two, 1.0).unwrap() - two.mean()).abs() < 1e-12);
    }

    #[test]
    fn deviation_examples() {
        let one = deviation_measures(&dist(&[(3.0, 1.0)]), 3.0);
        assert_eq!((one.edr, one.ad, one.lsad), (0.0, 0.0, 0.0));
        let two = deviation_measures(&dist(&[(0.0, 0.5), (10.0, 0.5)]), -1.0);
        assert_eq!(two.mean, 5.0);
        assert_eq!(two.ad, 5.0);
        assert_eq!(two.lsad, 2.5);
        assert_eq!(two.edr, 0.0);
    }

    #[test]
    fn merge_collapses_rounding_duplicates() {
        let d = dist(&[(0.1 + 0.2, 0.5), (0.3, 0.25), (1.0, 0.25), (2.0, 0.0)]);
        assert_eq!(d.support().len(), 2);
        assert_eq!(d.support()[0].1, 0.75);
    }

    fn dominant() -> Diagram {
        let mut b = DiagramBuilder::new();
        let x = b.chance("x", &["lo", "hi"], &[]);
        let d = b.decision("d", &["a", "b", "c"], &[]);
        let v = b.value("v", &[x, d]);
        b.cpt(x, |_| vec![0.4, 0.6]);
        b.consequences(v, |g| g[0] as f64 + if g[1] == 2 { 10.0 } else { 0.0 });
        b.build()
    }

    #[test]
    fn enumeration_and_brute_force() {
        let d = dominant();
        let all: Vec<_> = enumerate_strategies(&d, DEFAULT_STRATEGY_CAP).unwrap().collect();
        assert_eq!(all.len(), 3);
        let (z, eu) = brute_force_optimum(&d, &Utility::identity(), DEFAULT_STRATEGY_CAP).unwrap();
        assert_eq!(z.choice(2, 0), 2);
        assert!((eu - 11.6).abs() < 1e-12);
        assert!(matches!(enumerate_strategies(&d, 2), Err(StrategyError::TooMany { size: 3, cap: 2 })));
    }

    #[test]
    fn strategy_json_round_trip() {
        let d = dominant();
        let z = GlobalStrategy::from_fn(&d, |_, _| 3).unwrap();
        let text = z.to_json(&d);
        assert_eq!(text, r#"[{"node":2,"rows":[{"given":[],"choose":3}]}]"#);
        assert_eq!(GlobalStrategy::from_json(&d, &text).unwrap(), z);
        assert!(GlobalStrategy::from_json(&d, r#"[{"node":2,"rows":[{"given":[],"choose":4}]}]"#).is_err());
        assert!(matches!(GlobalStrategy::from_json(&d, "[]"), Err(StrategyError::MissingNode(2))));
    }
}

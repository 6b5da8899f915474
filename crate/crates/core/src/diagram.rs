//! Influence diagrams: typed nodes, information sets, probability tables and
//! consequence tables.
//!
//! Nodes are numbered from 1. Chance and decision nodes come first (`1..=n`),
//! value nodes after them. A diagram may be constructed from inconsistent
//! input; [`validate`] reports every problem, and the remaining operations
//! assume a diagram that validates cleanly.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DiagramError;

/// 1-based position in the global node ordering.
pub type NodeId = usize;

/// Tolerance on the sum of each probability row.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Chance,
    Decision,
    Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub label: String,
    /// One label per state; empty for value nodes.
    pub state_labels: Vec<String>,
    /// Ascending node ids.
    pub info_set: Vec<NodeId>,
}

impl Node {
    pub fn states(&self) -> usize {
        self.state_labels.len()
    }
}

/// Dense table over the information states of one node, `width` entries per row.
#[derive(Clone, Debug, PartialEq)]
struct Table {
    width: usize,
    data: Vec<f64>,
    coverage: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Finding {
    pub node: Option<NodeId>,
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(j) => write!(f, "node {j}: [{}] {}", self.rule, self.message),
            None => write!(f, "[{}] {}", self.rule, self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn first_error(&self) -> String {
        self.errors.first().map(|f| f.to_string()).unwrap_or_default()
    }

    fn error(&mut self, node: Option<NodeId>, rule: &'static str, message: impl Into<String>) {
        self.errors.push(Finding { node, rule, message: message.into() });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagram {
    nodes: Vec<Node>,
    tables: Vec<Option<Table>>,
    /// Row strides of each node's information set, aligned with `info_set`.
    strides: Vec<Vec<usize>>,
    /// Problems detected while assembling tables from input rows.
    issues: Vec<Finding>,
    declared_ids: Vec<Option<usize>>,
    chance: Vec<NodeId>,
    decision: Vec<NodeId>,
    value: Vec<NodeId>,
}

// ---------------------------------------------------------------------------
// JSON documents
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagramDoc {
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub cpts: Vec<CptDoc>,
    #[serde(default)]
    pub consequences: Vec<ConsequenceDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub info_set: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CptDoc {
    pub node: NodeId,
    pub rows: Vec<CptRowDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CptRowDoc {
    pub given: Vec<usize>,
    pub p: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsequenceDoc {
    pub node: NodeId,
    pub rows: Vec<ConsequenceRowDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsequenceRowDoc {
    pub given: Vec<usize>,
    pub value: f64,
}

fn product_states(states: &[usize]) -> usize {
    states.iter().map(|&s| s.max(1)).product()
}

impl Diagram {
    pub fn from_json_str(text: &str) -> Result<Self, DiagramError> {
        let doc: DiagramDoc = serde_json::from_str(text)?;
        Ok(Self::from_doc(&doc))
    }

    pub fn from_json_file(path: &Path) -> Result<Self, DiagramError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| DiagramError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }

    /// Builds a diagram, recording (not rejecting) inconsistent input.
    pub fn from_doc(doc: &DiagramDoc) -> Self {
        let mut issues = Vec::new();
        let mut issue = |node: Option<NodeId>, rule: &'static str, message: String| {
            issues.push(Finding { node, rule, message });
        };
        let count = doc.nodes.len();
        let mut nodes = Vec::with_capacity(count);
        // Position of each original info-set entry after sorting.
        let mut perms: Vec<Vec<usize>> = Vec::with_capacity(count);
        for (pos, nd) in doc.nodes.iter().enumerate() {
            let j = pos + 1;
            let state_labels = match (&nd.labels, nd.states) {
                (Some(l), Some(k)) if l.len() != k => {
                    issue(Some(j), "state-count", format!("{} labels given for {k} states", l.len()));
                    l.clone()
                }
                (Some(l), _) => l.clone(),
                (None, Some(k)) => (1..=k).map(|s| s.to_string()).collect(),
                (None, None) => Vec::new(),
            };
            let mut order: Vec<usize> = (0..nd.info_set.len()).collect();
            order.sort_by_key(|&k| nd.info_set[k]);
            let info_set: Vec<NodeId> = order.iter().map(|&k| nd.info_set[k]).collect();
            let mut perm = vec![0; order.len()];
            for (sorted_pos, &orig) in order.iter().enumerate() {
                perm[orig] = sorted_pos;
            }
            perms.push(perm);
            nodes.push(Node { kind: nd.kind, label: nd.label.clone(), state_labels, info_set });
        }
        let state_count = |i: NodeId| -> usize {
            if (1..=count).contains(&i) {
                nodes[i - 1].states()
            } else {
                1
            }
        };
        let mut strides = Vec::with_capacity(count);
        for node in &nodes {
            let sizes: Vec<usize> = node.info_set.iter().map(|&i| state_count(i).max(1)).collect();
            let mut st = vec![1usize; sizes.len()];
            for k in (0..sizes.len().saturating_sub(1)).rev() {
                st[k] = st[k + 1] * sizes[k + 1];
            }
            strides.push(st);
        }
        let mut tables: Vec<Option<Table>> = vec![None; count];

        let row_index = |j: NodeId, given: &[usize], issue: &mut dyn FnMut(Option<NodeId>, &'static str, String)| {
            let node = &nodes[j - 1];
            if given.len() != node.info_set.len() {
                issue(
                    Some(j),
                    "given-arity",
                    format!("row has {} given states, information set has {}", given.len(), node.info_set.len()),
                );
                return None;
            }
            let mut idx = 0;
            let mut ok = true;
            for (k, &s) in given.iter().enumerate() {
                let sp = perms[j - 1][k];
                let i = node.info_set[sp];
                let limit = state_count(i);
                if s == 0 || s > limit {
                    issue(Some(j), "given-range", format!("state {s} of node {i} outside 1..={limit}"));
                    ok = false;
                } else {
                    idx += (s - 1) * strides[j - 1][sp];
                }
            }
            ok.then_some(idx)
        };

        for cpt in &doc.cpts {
            let j = cpt.node;
            if !(1..=count).contains(&j) {
                issue(None, "unknown-node", format!("probability table for unknown node {j}"));
                continue;
            }
            if nodes[j - 1].kind != NodeKind::Chance {
                issue(Some(j), "unexpected-table", "probability table on a non-chance node".into());
                continue;
            }
            if tables[j - 1].is_some() {
                issue(Some(j), "duplicate-table", "more than one probability table".into());
                continue;
            }
            let width = nodes[j - 1].states();
            let rows = product_states(&nodes[j - 1].info_set.iter().map(|&i| state_count(i)).collect::<Vec<_>>());
            let mut t = Table { width, data: vec![0.0; rows * width], coverage: vec![0; rows] };
            for row in &cpt.rows {
                let Some(r) = row_index(j, &row.given, &mut issue) else { continue };
                if row.p.len() != width {
                    issue(
                        Some(j),
                        "row-length",
                        format!("row {:?} has {} entries for {width} states", row.given, row.p.len()),
                    );
                    continue;
                }
                if row.p.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
                    issue(Some(j), "probability-range", format!("row {:?} has entries outside [0, 1]", row.given));
                }
                let sum: f64 = row.p.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    issue(Some(j), "row-normalization", format!("row {:?}: row sum {sum} ≠ 1", row.given));
                }
                t.coverage[r] += 1;
                t.data[r * width..(r + 1) * width].copy_from_slice(&row.p);
            }
            tables[j - 1] = Some(t);
        }
        for cons in &doc.consequences {
            let j = cons.node;
            if !(1..=count).contains(&j) {
                issue(None, "unknown-node", format!("consequence table for unknown node {j}"));
                continue;
            }
            if nodes[j - 1].kind != NodeKind::Value {
                issue(Some(j), "unexpected-table", "consequence table on a non-value node".into());
                continue;
            }
            if tables[j - 1].is_some() {
                issue(Some(j), "duplicate-table", "more than one consequence table".into());
                continue;
            }
            let rows = product_states(&nodes[j - 1].info_set.iter().map(|&i| state_count(i)).collect::<Vec<_>>());
            let mut t = Table { width: 1, data: vec![0.0; rows], coverage: vec![0; rows] };
            for row in &cons.rows {
                let Some(r) = row_index(j, &row.given, &mut issue) else { continue };
                if !row.value.is_finite() {
                    issue(Some(j), "non-finite", format!("row {:?} has a non-finite value", row.given));
                }
                t.coverage[r] += 1;
                t.data[r] = row.value;
            }
            tables[j - 1] = Some(t);
        }
        let by_kind = |k: NodeKind| -> Vec<NodeId> { (1..=count).filter(|&j| nodes[j - 1].kind == k).collect() };
        Diagram {
            chance: by_kind(NodeKind::Chance),
            decision: by_kind(NodeKind::Decision),
            value: by_kind(NodeKind::Value),
            declared_ids: doc.nodes.iter().map(|n| n.id).collect(),
            nodes,
            tables,
            strides,
            issues,
        }
    }

    /// Inverse of [`Diagram::from_doc`] for a valid diagram.
    pub fn to_doc(&self) -> DiagramDoc {
        let mut doc = DiagramDoc::default();
        for (pos, node) in self.nodes.iter().enumerate() {
            let j = pos + 1;
            let numeric = node.state_labels.iter().enumerate().all(|(k, l)| *l == (k + 1).to_string());
            let (states, labels) = match node.kind {
                NodeKind::Value => (None, None),
                _ if numeric => (Some(node.states()), None),
                _ => (None, Some(node.state_labels.clone())),
            };
            doc.nodes.push(NodeDoc {
                id: self.declared_ids[pos],
                kind: node.kind,
                label: node.label.clone(),
                states,
                labels,
                info_set: node.info_set.clone(),
            });
            let states_list = info_states(self, j);
            match node.kind {
                NodeKind::Chance => doc.cpts.push(CptDoc {
                    node: j,
                    rows: states_list
                        .into_iter()
                        .enumerate()
                        .map(|(r, given)| CptRowDoc { given, p: self.probability_row(j, r).to_vec() })
                        .collect(),
                }),
                NodeKind::Value => doc.consequences.push(ConsequenceDoc {
                    node: j,
                    rows: states_list
                        .into_iter()
                        .enumerate()
                        .map(|(r, given)| ConsequenceRowDoc { given, value: self.consequence(j, r) })
                        .collect(),
                }),
                NodeKind::Decision => {}
            }
        }
        doc
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("diagram documents always serialize")
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of chance and decision nodes (the path length).
    pub fn path_len(&self) -> usize {
        self.chance.len() + self.decision.len()
    }

    pub fn node(&self, j: NodeId) -> &Node {
        &self.nodes[j - 1]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().enumerate().map(|(k, n)| (k + 1, n))
    }

    pub fn states(&self, j: NodeId) -> usize {
        self.nodes[j - 1].states()
    }

    pub fn chance_nodes(&self) -> &[NodeId] {
        &self.chance
    }

    pub fn decision_nodes(&self) -> &[NodeId] {
        &self.decision
    }

    pub fn value_nodes(&self) -> &[NodeId] {
        &self.value
    }

    pub fn info_set(&self, j: NodeId) -> &[NodeId] {
        &self.nodes[j - 1].info_set
    }

    /// Number of information states |S_I(j)|.
    pub fn info_state_count(&self, j: NodeId) -> usize {
        product_states(&self.nodes[j - 1].info_set.iter().map(|&i| self.states(i)).collect::<Vec<_>>())
    }

    /// Row of node `j`'s table selected by `path` (1-based states indexed by node - 1).
    #[inline]
    pub fn info_row(&self, j: NodeId, path: &[usize]) -> usize {
        let node = &self.nodes[j - 1];
        let mut idx = 0;
        for (&i, &st) in node.info_set.iter().zip(&self.strides[j - 1]) {
            idx += (path[i - 1] - 1) * st;
        }
        idx
    }

    /// Information state tuple of row `row` of node `j`.
    pub fn info_state(&self, j: NodeId, row: usize) -> Vec<usize> {
        let node = &self.nodes[j - 1];
        node.info_set.iter().zip(&self.strides[j - 1]).map(|(&i, &st)| (row / st) % self.states(i) + 1).collect()
    }

    /// Probability vector over the states of chance node `j` at information row `row`.
    pub fn probability_row(&self, j: NodeId, row: usize) -> &[f64] {
        let t = self.tables[j - 1].as_ref().expect("chance node has a probability table");
        &t.data[row * t.width..(row + 1) * t.width]
    }

    #[inline]
    pub fn probability(&self, j: NodeId, row: usize, state: usize) -> f64 {
        let t = self.tables[j - 1].as_ref().expect("chance node has a probability table");
        t.data[row * t.width + state - 1]
    }

    #[inline]
    pub fn consequence(&self, v: NodeId, row: usize) -> f64 {
        self.tables[v - 1].as_ref().expect("value node has a consequence table").data[row]
    }

    /// Consequence of value node `v` on `path`.
    #[inline]
    pub fn consequence_on(&self, v: NodeId, path: &[usize]) -> f64 {
        self.consequence(v, self.info_row(v, path))
    }

    /// Returns `self` when it validates, the report otherwise.
    pub fn checked(self) -> Result<Self, DiagramError> {
        let report = validate(&self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(DiagramError::Invalid(report))
        }
    }
}

/// Reports every rule violation; never stops at the first one.
pub fn validate(d: &Diagram) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let count = d.nodes.len();
    for (pos, id) in d.declared_ids.iter().enumerate() {
        if let Some(id) = id {
            if *id != pos + 1 {
                rep.error(Some(pos + 1), "consecutive-indices", format!("declared id {id} at position {}", pos + 1));
            }
        }
    }
    let mut seen_value = false;
    for (j, node) in d.nodes() {
        match node.kind {
            NodeKind::Value => {
                seen_value = true;
                if node.states() > 0 {
                    rep.error(Some(j), "value-node-states", "value nodes carry no states");
                }
            }
            _ => {
                if seen_value {
                    rep.error(Some(j), "value-nodes-last", "chance and decision nodes must precede value nodes");
                }
                if node.states() == 0 {
                    rep.error(Some(j), "state-count", "node needs at least one state");
                } else if node.kind == NodeKind::Decision && node.states() == 1 {
                    rep.warnings.push(Finding {
                        node: Some(j),
                        rule: "degenerate-decision",
                        message: "decision node has a single alternative".into(),
                    });
                }
            }
        }
        for (k, &i) in node.info_set.iter().enumerate() {
            if k > 0 && node.info_set[k - 1] == i {
                rep.error(Some(j), "duplicate-info-member", format!("node {i} listed twice"));
            }
            if !(1..=count).contains(&i) {
                rep.error(Some(j), "unknown-node", format!("information set refers to unknown node {i}"));
                continue;
            }
            if i >= j {
                rep.error(Some(j), "topological-order", format!("information set member {i} is not smaller than {j}"));
            }
            if d.nodes[i - 1].kind == NodeKind::Value {
                rep.error(Some(j), "value-in-info-set", format!("value node in information set (node {i})"));
            }
        }
    }
    if d.value.is_empty() {
        rep.error(None, "no-value-node", "diagram needs at least one value node");
    }
    rep.errors.extend(d.issues.iter().cloned());
    for (j, node) in d.nodes() {
        let wants_table = matches!(node.kind, NodeKind::Chance | NodeKind::Value);
        match (&d.tables[j - 1], wants_table) {
            (None, true) => {
                let what = if node.kind == NodeKind::Chance { "probability" } else { "consequence" };
                rep.error(Some(j), "missing-table", format!("no {what} table"));
            }
            (Some(t), _) => {
                for (r, &c) in t.coverage.iter().enumerate() {
                    if c == 0 {
                        rep.error(Some(j), "table-coverage", format!("missing row for {:?}", d.info_state(j, r)));
                    } else if c > 1 {
                        rep.error(
                            Some(j),
                            "table-coverage",
                            format!("row for {:?} given {c} times", d.info_state(j, r)),
                        );
                    }
                }
            }
            (None, false) => {}
        }
    }
    rep
}

/// Product set of the states of `j`'s information set, lexicographic by
/// ascending node id then ascending state. An empty information set yields one
/// empty tuple.
pub fn info_states(d: &Diagram, j: NodeId) -> Vec<Vec<usize>> {
    (0..d.info_state_count(j)).map(|r| d.info_state(j, r)).collect()
}

/// Number of global strategies, the product over decision nodes of
/// |S_j|^{|S_I(j)|}.
pub fn strategy_space_size(d: &Diagram) -> Result<u128, DiagramError> {
    let mut total: u128 = 1;
    for &j in d.decision_nodes() {
        let base = d.states(j) as u128;
        let exp = u32::try_from(d.info_state_count(j)).map_err(|_| DiagramError::Overflow)?;
        let local = base.checked_pow(exp).ok_or(DiagramError::Overflow)?;
        total = total.checked_mul(local).ok_or(DiagramError::Overflow)?;
    }
    Ok(total)
}

/// Programmatic construction in node order.
#[derive(Clone, Debug, Default)]
pub struct DiagramBuilder {
    doc: DiagramDoc,
}

impl DiagramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, kind: NodeKind, label: &str, states: &[&str], info_set: &[NodeId]) -> NodeId {
        self.doc.nodes.push(NodeDoc {
            id: None,
            kind,
            label: label.to_string(),
            states: None,
            labels: (kind != NodeKind::Value).then(|| states.iter().map(|s| s.to_string()).collect()),
            info_set: info_set.to_vec(),
        });
        self.doc.nodes.len()
    }

    pub fn chance(&mut self, label: &str, states: &[&str], info_set: &[NodeId]) -> NodeId {
        self.push(NodeKind::Chance, label, states, info_set)
    }

    pub fn decision(&mut self, label: &str, states: &[&str], info_set: &[NodeId]) -> NodeId {
        self.push(NodeKind::Decision, label, states, info_set)
    }

    pub fn value(&mut self, label: &str, info_set: &[NodeId]) -> NodeId {
        self.push(NodeKind::Value, label, &[], info_set)
    }

    /// Every tuple over the information set of `j`, in the order the set was given.
    fn givens(&self, j: NodeId) -> Vec<Vec<usize>> {
        let sizes: Vec<usize> = self.doc.nodes[j - 1]
            .info_set
            .iter()
            .map(|&i| self.doc.nodes[i - 1].labels.as_ref().map_or(1, |l| l.len()))
            .collect();
        let mut out = vec![Vec::new()];
        for &k in &sizes {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<usize>| {
                    (1..=k).map(move |s| {
                        let mut v = prefix.clone();
                        v.push(s);
                        v
                    })
                })
                .collect();
        }
        out
    }

    /// Fills the probability table of `j` from `f(given)`, where `given`
    /// follows the information set order passed at creation.
    pub fn cpt(&mut self, j: NodeId, mut f: impl FnMut(&[usize]) -> Vec<f64>) -> &mut Self {
        let rows = self.givens(j).into_iter().map(|g| CptRowDoc { p: f(&g), given: g }).collect();
        self.doc.cpts.push(CptDoc { node: j, rows });
        self
    }

    pub fn consequences(&mut self, j: NodeId, mut f: impl FnMut(&[usize]) -> f64) -> &mut Self {
        let rows = self.givens(j).into_iter().map(|g| ConsequenceRowDoc { value: f(&g), given: g }).collect();
        self.doc.consequences.push(ConsequenceDoc { node: j, rows });
        self
    }

    pub fn build(&self) -> Diagram {
        Diagram::from_doc(&self.doc)
    }
}

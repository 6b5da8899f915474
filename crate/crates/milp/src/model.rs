//! Linear models with binary and bounded continuous variables.
//!
//! The objective is always maximized. Every variable has finite bounds, and
//! binaries are bounded by `[0, 1]`.

use std::fmt;

use crate::error::ModelError;

/// Index of a variable in a [`Model`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// Index of a constraint row in a [`Model`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

/// Branching class of a binary variable.
///
/// Primary binaries are branched on first; auxiliary binaries only once every
/// primary binary is integral and no exact completion exists.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Priority {
    Primary,
    Auxiliary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }

    /// Row activity interval `[lo, hi]` for right-hand side `rhs`.
    pub fn interval(self, rhs: f64) -> (f64, f64) {
        match self {
            Sense::Le => (f64::NEG_INFINITY, rhs),
            Sense::Eq => (rhs, rhs),
            Sense::Ge => (rhs, f64::INFINITY),
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
    pub obj: f64,
    pub priority: Priority,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    /// Lazy rows form the cut pool: they are enforced at integer-feasible
    /// nodes unless the solver is told to load them eagerly.
    pub lazy: bool,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates this row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// Counts reported by [`Model::statistics`]. Lazy rows are counted only in
/// `lazy_cuts`; variable bounds are never counted as rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ModelStatistics {
    pub binaries: usize,
    pub continuous: usize,
    pub equality_rows: usize,
    pub inequality_rows: usize,
    pub lazy_cuts: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Model {
    vars: Vec<Variable>,
    rows: Vec<Row>,
    offset: f64,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_binary(&mut self, name: impl Into<String>, obj: f64, priority: Priority) -> VarId {
        self.push_var(Variable { name: name.into(), kind: VarKind::Binary, lo: 0.0, hi: 1.0, obj, priority })
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lo: f64, hi: f64, obj: f64) -> Result<VarId, ModelError> {
        let name = name.into();
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(ModelError::BadBounds { name, lo, hi });
        }
        Ok(self.push_var(Variable { name, kind: VarKind::Continuous, lo, hi, obj, priority: Priority::Auxiliary }))
    }

    fn push_var(&mut self, v: Variable) -> VarId {
        self.vars.push(v);
        VarId(self.vars.len() - 1)
    }

    /// Appends a row. Duplicate variable references are merged and zero
    /// coefficients dropped.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        lazy: bool,
    ) -> Result<RowId, ModelError> {
        let name = name.into();
        for &(v, a) in &terms {
            if v.0 >= self.vars.len() {
                return Err(ModelError::UnknownVariable { row: name, index: v.0 });
            }
            if !a.is_finite() {
                return Err(ModelError::NonFinite { what: format!("coefficient in row {name}") });
            }
        }
        if !rhs.is_finite() {
            return Err(ModelError::NonFinite { what: format!("rhs of row {name}") });
        }
        let terms = merge_terms(terms);
        self.rows.push(Row { name, terms, sense, rhs, lazy });
        Ok(RowId(self.rows.len() - 1))
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row(&self, r: RowId) -> &Row {
        &self.rows[r.0]
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_obj(&mut self, v: VarId, c: f64) {
        self.vars[v.0].obj = c;
    }

    pub fn clear_objective(&mut self) {
        for v in &mut self.vars {
            v.obj = 0.0;
        }
        self.offset = 0.0;
    }

    pub fn set_bounds(&mut self, v: VarId, lo: f64, hi: f64) -> Result<(), ModelError> {
        let var = &mut self.vars[v.0];
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(ModelError::BadBounds { name: var.name.clone(), lo, hi });
        }
        var.lo = lo;
        var.hi = hi;
        Ok(())
    }

    pub fn set_lazy(&mut self, r: RowId, lazy: bool) {
        self.rows[r.0].lazy = lazy;
    }

    /// Constant added to the linear objective.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn set_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn find_var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.offset + self.vars.iter().zip(x).map(|(v, &xv)| v.obj * xv).sum::<f64>()
    }

    /// Largest bound or row violation of `x`, lazy rows included.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xv) in self.vars.iter().zip(x) {
            worst = worst.max(v.lo - xv).max(xv - v.hi);
        }
        for r in &self.rows {
            worst = worst.max(r.violation(x));
        }
        worst
    }

    pub fn statistics(&self) -> ModelStatistics {
        let mut s = ModelStatistics::default();
        for v in &self.vars {
            match v.kind {
                VarKind::Binary => s.binaries += 1,
                VarKind::Continuous => s.continuous += 1,
            }
        }
        for r in &self.rows {
            if r.lazy {
                s.lazy_cuts += 1;
            } else if r.sense == Sense::Eq {
                s.equality_rows += 1;
            } else {
                s.inequality_rows += 1;
            }
        }
        s
    }
}

fn merge_terms(mut terms: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
    for (v, a) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += a,
            _ => out.push((v, a)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_model_statistics_are_zero() {
        assert_eq!(Model::new().statistics(), ModelStatistics::default());
    }

    #[test]
    fn terms_are_merged_and_sorted() {
        let mut m = Model::new();
        let x = m.add_binary("x", 0.0, Priority::Primary);
        let y = m.add_binary("y", 0.0, Priority::Primary);
        let r = m.add_row("r", vec![(y, 1.0), (x, 2.0), (y, -1.0), (x, 1.0)], Sense::Le, 1.0, false).unwrap();
        assert_eq!(m.row(r).terms, vec![(x, 3.0)]);
    }

    #[test]
    fn statistics_split_lazy_rows() {
        let mut m = Model::new();
        let x = m.add_binary("x", 1.0, Priority::Primary);
        let y = m.add_continuous("y", 0.0, 2.0, 0.0).unwrap();
        m.add_row("a", vec![(x, 1.0)], Sense::Eq, 1.0, false).unwrap();
        m.add_row("b", vec![(y, 1.0), (x, -1.0)], Sense::Le, 0.0, false).unwrap();
        m.add_row("c", vec![(y, 1.0)], Sense::Ge, 0.0, true).unwrap();
        assert_eq!(
            m.statistics(),
            ModelStatistics { binaries: 1, continuous: 1, equality_rows: 1, inequality_rows: 1, lazy_cuts: 1 }
        );
    }

    #[test]
    fn rejects_infinite_bounds() {
        let mut m = Model::new();
        assert!(m.add_continuous("y", 0.0, f64::INFINITY, 0.0).is_err());
    }
}

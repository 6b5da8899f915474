//! Bounded-variable dual simplex.
//!
//! The problem is `max c'x` subject to `row_lo <= A x <= row_hi` and
//! `lo <= x <= hi`, with every structural bound finite. A basis is a pair of
//! equally sized lists: basic structurals and active rows (rows held at one of
//! their bounds). The kernel `K = A[active, basic]` is kept as an explicit
//! dense inverse, updated in O(k²) per pivot and refactored periodically.
//! Nonbasic structurals sit at a bound; inactive rows float freely.
//!
//! Starting from the all-slack basis with each structural at the bound its
//! cost favours, the basis is dual feasible, so only the dual phase is needed.
//! Pivoting is deterministic: leaving rows are chosen by largest violation,
//! entering candidates by a bound-flipping ratio test with index tie-breaks,
//! and Bland's rule takes over after a run of degenerate steps.

use crate::error::SolveError;
use crate::model::{Model, VarId};

const NONE: usize = usize::MAX;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const FINAL_TOL: f64 = 1e-7;
const DEGENERATE_RUN: usize = 50;
const MAX_DRIFT: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub iteration_count: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LpLimits {
    pub max_iterations: usize,
    /// Start with Bland's rule instead of waiting for the degeneracy trigger.
    pub bland: bool,
}

impl Default for LpLimits {
    fn default() -> Self {
        Self { max_iterations: 5_000_000, bland: false }
    }
}

/// Sparse constraint matrix with row bounds and objective.
#[derive(Clone, Debug)]
pub struct SparseLp {
    n: usize,
    c: Vec<f64>,
    row_start: Vec<usize>,
    row_idx: Vec<usize>,
    row_val: Vec<f64>,
    col_start: Vec<usize>,
    col_idx: Vec<usize>,
    col_val: Vec<f64>,
    row_lo: Vec<f64>,
    row_hi: Vec<f64>,
}

impl SparseLp {
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        let mut lp = Self {
            n,
            c,
            row_start: vec![0],
            row_idx: Vec::new(),
            row_val: Vec::new(),
            col_start: Vec::new(),
            col_idx: Vec::new(),
            col_val: Vec::new(),
            row_lo: Vec::new(),
            row_hi: Vec::new(),
        };
        lp.rebuild_columns();
        lp
    }

    /// Relaxation of `model` with its non-lazy rows, plus lazy rows when
    /// `include_lazy`. Returns the model row index of every LP row.
    pub fn from_model(model: &Model, include_lazy: bool) -> (Self, Vec<usize>) {
        let c = model.vars().iter().map(|v| v.obj).collect();
        let mut lp = Self::new(c);
        let mut origin = Vec::new();
        let mut batch = Vec::new();
        for (k, row) in model.rows().iter().enumerate() {
            if row.lazy && !include_lazy {
                continue;
            }
            let (lo, hi) = row.sense.interval(row.rhs);
            batch.push((row.terms.iter().map(|&(v, a)| (v.0, a)).collect::<Vec<_>>(), lo, hi));
            origin.push(k);
        }
        lp.append_rows(batch);
        (lp, origin)
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.row_lo.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.c
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_start[i], self.row_start[i + 1]);
        (&self.row_idx[s..e], &self.row_val[s..e])
    }

    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.col_start[j], self.col_start[j + 1]);
        (&self.col_idx[s..e], &self.col_val[s..e])
    }

    pub fn row_bounds(&self, i: usize) -> (f64, f64) {
        (self.row_lo[i], self.row_hi[i])
    }

    /// Appends rows given as `(terms, lo, hi)` and rebuilds the column index.
    pub fn append_rows(&mut self, rows: Vec<(Vec<(usize, f64)>, f64, f64)>) {
        if rows.is_empty() {
            return;
        }
        for (terms, lo, hi) in rows {
            for (j, a) in terms {
                debug_assert!(j < self.n);
                self.row_idx.push(j);
                self.row_val.push(a);
            }
            self.row_start.push(self.row_idx.len());
            self.row_lo.push(lo);
            self.row_hi.push(hi);
        }
        self.rebuild_columns();
    }

    fn rebuild_columns(&mut self) {
        let mut count = vec![0usize; self.n + 1];
        for &j in &self.row_idx {
            count[j + 1] += 1;
        }
        for j in 0..self.n {
            count[j + 1] += count[j];
        }
        let mut next = count.clone();
        let nnz = self.row_idx.len();
        self.col_idx = vec![0; nnz];
        self.col_val = vec![0.0; nnz];
        for i in 0..self.num_rows() {
            for k in self.row_start[i]..self.row_start[i + 1] {
                let j = self.row_idx[k];
                self.col_idx[next[j]] = i;
                self.col_val[next[j]] = self.row_val[k];
                next[j] += 1;
            }
        }
        self.col_start = count;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Basic,
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Ent {
    Col(usize),
    Row(usize),
}

/// Compact basis snapshot for warm starts: basic structurals and active rows
/// with the bound each row is held at. Nonbasic structural positions are
/// re-derived from reduced-cost signs on load.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    basic: Vec<usize>,
    active: Vec<(usize, bool)>,
}

impl Basis {
    pub fn size(&self) -> usize {
        self.basic.len()
    }
}

/// Stateful dual simplex solver over a [`SparseLp`].
#[derive(Clone, Debug)]
pub struct DualSimplex {
    lp: SparseLp,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    r: Vec<f64>,
    xstat: Vec<Status>,
    rstat: Vec<Status>,
    basic: Vec<usize>,
    active: Vec<usize>,
    bpos: Vec<usize>,
    apos: Vec<usize>,
    kinv: Vec<Vec<f64>>,
    g: Vec<f64>,
    gr: Vec<f64>,
    updates: usize,
    acc: Vec<f64>,
    acc_mark: Vec<bool>,
    acc_list: Vec<usize>,
    /// Incremental primal updates since the last full recompute.
    drift: usize,
    /// Basic entities whose value moved since they were last checked; a
    /// superset of the primal infeasible ones unless `rescan` is set.
    watch: Vec<Ent>,
    col_mark: Vec<bool>,
    row_mark: Vec<bool>,
    rescan: bool,
}

impl DualSimplex {
    /// Solver with the slack basis; `lo`/`hi` are structural bounds.
    pub fn new(lp: SparseLp, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let n = lp.num_cols();
        let m = lp.num_rows();
        assert_eq!(lo.len(), n);
        assert_eq!(hi.len(), n);
        let mut s = Self {
            lp,
            lo,
            hi,
            x: vec![0.0; n],
            r: vec![0.0; m],
            xstat: vec![Status::Lower; n],
            rstat: vec![Status::Basic; m],
            basic: Vec::new(),
            active: Vec::new(),
            bpos: vec![NONE; n],
            apos: vec![NONE; m],
            kinv: Vec::new(),
            g: vec![0.0; n],
            gr: vec![0.0; m],
            updates: 0,
            acc: vec![0.0; n],
            acc_mark: vec![false; n],
            acc_list: Vec::new(),
            drift: 0,
            watch: Vec::new(),
            col_mark: vec![false; n],
            row_mark: vec![false; m],
            rescan: true,
        };
        s.cold_start();
        s
    }

    pub fn lp(&self) -> &SparseLp {
        &self.lp
    }

    fn cold_start(&mut self) {
        let n = self.lp.num_cols();
        let m = self.lp.num_rows();
        self.basic.clear();
        self.active.clear();
        self.kinv.clear();
        self.bpos = vec![NONE; n];
        self.apos = vec![NONE; m];
        self.rstat = vec![Status::Basic; m];
        self.gr = vec![0.0; m];
        self.g = self.lp.c.clone();
        for j in 0..n {
            self.xstat[j] = if self.g[j] > 0.0 { Status::Upper } else { Status::Lower };
        }
        self.updates = 0;
        self.recompute_primal();
    }

    /// Replaces structural bounds; nonbasic structurals move to the bound
    /// their reduced cost favours, which keeps the basis dual feasible.
    pub fn set_bounds(&mut self, lo: &[f64], hi: &[f64]) {
        self.lo.copy_from_slice(lo);
        self.hi.copy_from_slice(hi);
        for j in 0..self.lp.num_cols() {
            if self.xstat[j] == Status::Basic {
                continue;
            }
            if self.g[j] > DUAL_TOL {
                self.xstat[j] = Status::Upper;
            } else if self.g[j] < -DUAL_TOL {
                self.xstat[j] = Status::Lower;
            }
        }
        self.update_primal();
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Adds rows; they enter as inactive, so the basis stays valid.
    pub fn add_rows(&mut self, rows: Vec<(Vec<(usize, f64)>, f64, f64)>) {
        let added = rows.len();
        self.lp.append_rows(rows);
        let m = self.lp.num_rows();
        self.rstat.resize(m, Status::Basic);
        self.apos.resize(m, NONE);
        self.gr.resize(m, 0.0);
        self.r.resize(m, 0.0);
        self.row_mark.resize(m, false);
        self.rescan = true;
        for i in m - added..m {
            let (idx, val) = self.lp.row(i);
            self.r[i] = idx.iter().zip(val).map(|(&j, &a)| a * self.x[j]).sum();
        }
    }

    pub fn basis(&self) -> Basis {
        Basis {
            basic: self.basic.clone(),
            active: self.active.iter().map(|&i| (i, self.rstat[i] == Status::Upper)).collect(),
        }
    }

    /// Loads a snapshot. Falls back to the slack basis when the snapshot is
    /// singular or not dual feasible for the current objective.
    pub fn load_basis(&mut self, basis: &Basis) {
        let n = self.lp.num_cols();
        let m = self.lp.num_rows();
        if basis.basic.len() != basis.active.len()
            || basis.basic.iter().any(|&j| j >= n)
            || basis.active.iter().any(|&(i, _)| i >= m)
        {
            self.cold_start();
            return;
        }
        for &j in &self.basic {
            self.bpos[j] = NONE;
        }
        for &i in &self.active {
            self.apos[i] = NONE;
            self.rstat[i] = Status::Basic;
        }
        for j in 0..n {
            self.xstat[j] = Status::Lower;
        }
        self.basic = basis.basic.clone();
        self.active = basis.active.iter().map(|&(i, _)| i).collect();
        for (p, &j) in self.basic.iter().enumerate() {
            self.xstat[j] = Status::Basic;
            self.bpos[j] = p;
        }
        for (a, &(i, upper)) in basis.active.iter().enumerate() {
            self.apos[i] = a;
            self.rstat[i] = if upper { Status::Upper } else { Status::Lower };
        }
        if self.refactor().is_err() {
            self.cold_start();
            return;
        }
        self.recompute_duals();
        for j in 0..n {
            if self.xstat[j] != Status::Basic && self.g[j] > 0.0 {
                self.xstat[j] = Status::Upper;
            }
        }
        if !self.repair_row_duals() {
            self.cold_start();
            return;
        }
        self.update_primal();
    }

    /// Moves active rows whose dual sign disagrees with their bound side to
    /// the other bound. Returns false if some row cannot be repaired.
    fn repair_row_duals(&mut self) -> bool {
        for a in 0..self.active.len() {
            let i = self.active[a];
            let (rlo, rhi) = self.lp.row_bounds(i);
            if rlo == rhi {
                continue;
            }
            let y = self.gr[i];
            match self.rstat[i] {
                Status::Lower if y > DUAL_TOL => {
                    if rhi.is_finite() {
                        self.rstat[i] = Status::Upper;
                    } else {
                        return false;
                    }
                }
                Status::Upper if y < -DUAL_TOL => {
                    if rlo.is_finite() {
                        self.rstat[i] = Status::Lower;
                    } else {
                        return false;
                    }
                }
                _ => {}
            }
        }
        true
    }

    fn ent_value(&self, e: Ent) -> f64 {
        match e {
            Ent::Col(j) => self.x[j],
            Ent::Row(i) => self.r[i],
        }
    }

    fn ent_bounds(&self, e: Ent) -> (f64, f64) {
        match e {
            Ent::Col(j) => (self.lo[j], self.hi[j]),
            Ent::Row(i) => self.lp.row_bounds(i),
        }
    }

    fn ent_status(&self, e: Ent) -> Status {
        match e {
            Ent::Col(j) => self.xstat[j],
            Ent::Row(i) => self.rstat[i],
        }
    }

    fn ent_dual(&self, e: Ent) -> f64 {
        match e {
            Ent::Col(j) => self.g[j],
            Ent::Row(i) => self.gr[i],
        }
    }

    fn nonbasic_col_value(&self, j: usize) -> f64 {
        match self.xstat[j] {
            Status::Upper => self.hi[j],
            _ => self.lo[j],
        }
    }

    fn active_row_value(&self, i: usize) -> f64 {
        let (rlo, rhi) = self.lp.row_bounds(i);
        match self.rstat[i] {
            Status::Upper => rhi,
            _ => rlo,
        }
    }

    /// Rebuilds the kernel inverse from scratch.
    fn refactor(&mut self) -> Result<(), SolveError> {
        let k = self.basic.len();
        self.updates = 0;
        if k == 0 {
            self.kinv.clear();
            return Ok(());
        }
        // Dense K[a][p] = A[active[a], basic[p]], augmented with identity.
        let mut mat = vec![vec![0.0; 2 * k]; k];
        for (a, &i) in self.active.iter().enumerate() {
            let (idx, val) = self.lp.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                let p = self.bpos[j];
                if p != NONE {
                    mat[a][p] = v;
                }
            }
            mat[a][k + a] = 1.0;
        }
        // Gauss-Jordan on K to obtain K^{-1}; columns of K are basic positions.
        for col in 0..k {
            let mut piv = col;
            let mut best = mat[col][col].abs();
            for row in col + 1..k {
                let v = mat[row][col].abs();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if best < 1e-12 {
                return Err(SolveError::Numerical("singular basis kernel".into()));
            }
            mat.swap(col, piv);
            let pivot = mat[col][col];
            for v in mat[col].iter_mut() {
                *v /= pivot;
            }
            // Entries left of `col` are already zero in the pivot row.
            let prow: Vec<(usize, f64)> =
                mat[col].iter().enumerate().skip(col).filter(|(_, &v)| v != 0.0).map(|(c, &v)| (c, v)).collect();
            for (row, rowv) in mat.iter_mut().enumerate() {
                if row == col {
                    continue;
                }
                let f = rowv[col];
                if f != 0.0 {
                    for &(c, pv) in &prow {
                        rowv[c] -= f * pv;
                    }
                }
            }
        }
        // After elimination row `p` of the right block is row `p` of K^{-1}.
        self.kinv = mat.into_iter().map(|row| row[k..].to_vec()).collect();
        Ok(())
    }

    /// Recomputes structural values from the basis; row activities move only
    /// along columns whose value changed. Falls back to a full recompute
    /// every `MAX_DRIFT` calls.
    fn update_primal(&mut self) {
        self.drift += 1;
        if self.drift >= MAX_DRIFT {
            self.recompute_primal();
            return;
        }
        let mut x = self.x.clone();
        for j in 0..self.lp.num_cols() {
            if self.xstat[j] != Status::Basic {
                x[j] = self.nonbasic_col_value(j);
            }
        }
        let k = self.basic.len();
        if k > 0 {
            let mut rhs = vec![0.0; k];
            for (a, &i) in self.active.iter().enumerate() {
                let mut v = self.active_row_value(i);
                let (idx, val) = self.lp.row(i);
                for (&j, &c) in idx.iter().zip(val) {
                    if self.xstat[j] != Status::Basic {
                        v -= c * x[j];
                    }
                }
                rhs[a] = v;
            }
            for p in 0..k {
                x[self.basic[p]] = self.kinv[p].iter().zip(&rhs).map(|(a, b)| a * b).sum();
            }
        }
        for (j, (&new, old)) in x.iter().zip(&self.x).enumerate() {
            let d = new - old;
            if d != 0.0 {
                let (s0, e0) = (self.lp.col_start[j], self.lp.col_start[j + 1]);
                for kk in s0..e0 {
                    self.r[self.lp.col_idx[kk]] += self.lp.col_val[kk] * d;
                }
            }
        }
        self.x = x;
        self.rescan = true;
    }

    /// Recomputes structural values and row activities from the basis.
    fn recompute_primal(&mut self) {
        self.drift = 0;
        self.rescan = true;
        let n = self.lp.num_cols();
        for j in 0..n {
            if self.xstat[j] != Status::Basic {
                self.x[j] = self.nonbasic_col_value(j);
            }
        }
        let k = self.basic.len();
        if k > 0 {
            let mut rhs = vec![0.0; k];
            for (a, &i) in self.active.iter().enumerate() {
                let mut v = self.active_row_value(i);
                let (idx, val) = self.lp.row(i);
                for (&j, &c) in idx.iter().zip(val) {
                    if self.xstat[j] != Status::Basic {
                        v -= c * self.x[j];
                    }
                }
                rhs[a] = v;
            }
            for p in 0..k {
                let row = &self.kinv[p];
                self.x[self.basic[p]] = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            }
        }
        for i in 0..self.lp.num_rows() {
            let (idx, val) = self.lp.row(i);
            self.r[i] = idx.iter().zip(val).map(|(&j, &a)| a * self.x[j]).sum();
        }
    }

    fn recompute_duals(&mut self) {
        let k = self.basic.len();
        let mut y = vec![0.0; k];
        for p in 0..k {
            let cb = self.lp.c[self.basic[p]];
            if cb != 0.0 {
                for (ya, &kv) in y.iter_mut().zip(&self.kinv[p]) {
                    *ya += cb * kv;
                }
            }
        }
        self.g.copy_from_slice(&self.lp.c);
        for v in self.gr.iter_mut() {
            *v = 0.0;
        }
        for (a, &i) in self.active.iter().enumerate() {
            self.gr[i] = y[a];
            if y[a] != 0.0 {
                let (idx, val) = self.lp.row(i);
                for (&j, &c) in idx.iter().zip(val) {
                    self.g[j] -= y[a] * c;
                }
            }
        }
        for &j in &self.basic {
            self.g[j] = 0.0;
        }
    }

    /// Largest dual infeasibility among movable nonbasic entities.
    fn max_dual_infeasibility(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.lp.num_cols() {
            if self.lo[j] == self.hi[j] {
                continue;
            }
            match self.xstat[j] {
                Status::Lower => worst = worst.max(self.g[j]),
                Status::Upper => worst = worst.max(-self.g[j]),
                Status::Basic => {}
            }
        }
        for &i in &self.active {
            let (rlo, rhi) = self.lp.row_bounds(i);
            if rlo == rhi {
                continue;
            }
            match self.rstat[i] {
                Status::Lower => worst = worst.max(self.gr[i]),
                Status::Upper => worst = worst.max(-self.gr[i]),
                Status::Basic => {}
            }
        }
        worst
    }

    /// Flips nonbasic structurals with wrong-signed reduced costs.
    fn repair_dual(&mut self) -> bool {
        let mut changed = false;
        for j in 0..self.lp.num_cols() {
            if self.lo[j] == self.hi[j] {
                continue;
            }
            match self.xstat[j] {
                Status::Lower if self.g[j] > DUAL_TOL => {
                    self.xstat[j] = Status::Upper;
                    changed = true;
                }
                Status::Upper if self.g[j] < -DUAL_TOL => {
                    self.xstat[j] = Status::Lower;
                    changed = true;
                }
                _ => {}
            }
        }
        let ok = self.repair_row_duals();
        if changed || ok {
            self.update_primal();
        }
        ok
    }

    fn violation(&self, e: Ent) -> f64 {
        let v = self.ent_value(e);
        let (l, h) = self.ent_bounds(e);
        (l - v).max(v - h)
    }

    fn mark(&mut self, e: Ent) {
        let m = match e {
            Ent::Col(j) => &mut self.col_mark[j],
            Ent::Row(i) => &mut self.row_mark[i],
        };
        if !*m {
            *m = true;
            self.watch.push(e);
        }
    }

    fn unmark(&mut self, e: Ent) {
        match e {
            Ent::Col(j) => self.col_mark[j] = false,
            Ent::Row(i) => self.row_mark[i] = false,
        }
    }

    /// Most violated basic entity; entities in `tolerated` count only once
    /// their violation exceeds the final tolerance.
    fn choose_leaving(&mut self, bland: bool, tolerated: &[Ent]) -> Option<Ent> {
        let mut watch = std::mem::take(&mut self.watch);
        if self.rescan {
            self.rescan = false;
            for &e in &watch {
                self.unmark(e);
            }
            watch.clear();
            for &j in &self.basic {
                watch.push(Ent::Col(j));
            }
            for i in 0..self.lp.num_rows() {
                if self.rstat[i] == Status::Basic && self.violation(Ent::Row(i)) > PRIMAL_TOL {
                    watch.push(Ent::Row(i));
                }
            }
            for &e in &watch {
                match e {
                    Ent::Col(j) => self.col_mark[j] = true,
                    Ent::Row(i) => self.row_mark[i] = true,
                }
            }
        }
        watch.retain(|&e| {
            let keep = self.ent_status(e) == Status::Basic && self.violation(e) > PRIMAL_TOL;
            if !keep {
                match e {
                    Ent::Col(j) => self.col_mark[j] = false,
                    Ent::Row(i) => self.row_mark[i] = false,
                }
            }
            keep
        });
        let mut best: Option<(Ent, f64)> = None;
        for &e in &watch {
            let viol = self.violation(e);
            if viol <= FINAL_TOL && tolerated.contains(&e) {
                continue;
            }
            let better = match best {
                None => true,
                Some((be, bv)) => {
                    if bland {
                        e < be
                    } else {
                        viol > bv || (viol == bv && e < be)
                    }
                }
            };
            if better {
                best = Some((e, viol));
            }
        }
        self.watch = watch;
        best.map(|(e, _)| e)
    }

    fn acc_add(&mut self, j: usize, v: f64) {
        if !self.acc_mark[j] {
            self.acc_mark[j] = true;
            self.acc_list.push(j);
        }
        self.acc[j] += v;
    }

    /// Sensitivities of the leaving entity to every nonbasic entity, plus the
    /// row combination `sigma` over active positions.
    fn pivot_row(&mut self, leaving: Ent) -> (Vec<(Ent, f64)>, Vec<f64>) {
        let k = self.basic.len();
        let mut sigma = vec![0.0; k];
        // Leaving value = base row of A over nonbasics - sum_a sigma_a A[active_a, N] x_N
        // + sum_a sigma_a r_active_a; for a structural the base row is empty.
        match leaving {
            Ent::Col(q) => sigma.copy_from_slice(&self.kinv[self.bpos[q]]),
            Ent::Row(t) => {
                let (s0, e0) = (self.lp.row_start[t], self.lp.row_start[t + 1]);
                for kk in s0..e0 {
                    let j = self.lp.row_idx[kk];
                    let c = self.lp.row_val[kk];
                    let p = self.bpos[j];
                    if p != NONE {
                        for (s, &kv) in sigma.iter_mut().zip(&self.kinv[p]) {
                            *s += c * kv;
                        }
                    } else {
                        self.acc_add(j, c);
                    }
                }
            }
        }
        for a in 0..k {
            let s = sigma[a];
            if s == 0.0 {
                continue;
            }
            let i = self.active[a];
            let (s0, e0) = (self.lp.row_start[i], self.lp.row_start[i + 1]);
            for kk in s0..e0 {
                let j = self.lp.row_idx[kk];
                if self.xstat[j] != Status::Basic {
                    let c = self.lp.row_val[kk];
                    self.acc_add(j, -s * c);
                }
            }
        }
        let mut alpha = Vec::with_capacity(self.acc_list.len() + k);
        let list = std::mem::take(&mut self.acc_list);
        for &j in &list {
            let v = self.acc[j];
            self.acc[j] = 0.0;
            self.acc_mark[j] = false;
            if v.abs() > 1e-14 {
                alpha.push((Ent::Col(j), v));
            }
        }
        self.acc_list = list;
        self.acc_list.clear();
        for (a, &s) in sigma.iter().enumerate() {
            if s.abs() > 1e-14 {
                alpha.push((Ent::Row(self.active[a]), s));
            }
        }
        (alpha, sigma)
    }

    /// Applies simultaneous moves of nonbasic entities and propagates them to
    /// the basic structurals and all row activities.
    fn apply_moves(&mut self, moves: &[(Ent, f64)]) {
        let k = self.basic.len();
        let mut w = vec![0.0; k];
        for &(e, dv) in moves {
            if dv == 0.0 {
                continue;
            }
            match e {
                Ent::Col(j) => {
                    self.x[j] += dv;
                    self.mark(Ent::Col(j));
                    let (s0, e0) = (self.lp.col_start[j], self.lp.col_start[j + 1]);
                    for kk in s0..e0 {
                        let i = self.lp.col_idx[kk];
                        let a = self.lp.col_val[kk];
                        self.r[i] += a * dv;
                        self.mark(Ent::Row(i));
                        let ap = self.apos[i];
                        if ap != NONE {
                            w[ap] -= a * dv;
                        }
                    }
                }
                Ent::Row(i) => {
                    w[self.apos[i]] += dv;
                    self.mark(Ent::Row(i));
                }
            }
        }
        if k == 0 {
            return;
        }
        let nz: Vec<(usize, f64)> = w.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(a, &v)| (a, v)).collect();
        if nz.is_empty() {
            return;
        }
        for p in 0..k {
            let dx: f64 = nz.iter().map(|&(a, v)| self.kinv[p][a] * v).sum();
            if dx == 0.0 {
                continue;
            }
            let q = self.basic[p];
            self.x[q] += dx;
            self.mark(Ent::Col(q));
            let (s0, e0) = (self.lp.col_start[q], self.lp.col_start[q + 1]);
            for kk in s0..e0 {
                let i = self.lp.col_idx[kk];
                self.r[i] += self.lp.col_val[kk] * dx;
                self.mark(Ent::Row(i));
            }
        }
    }

    /// `K^{-1} A[active, j]`, using the sparsity of the column.
    fn kernel_solve(&self, j: usize) -> Vec<f64> {
        let (idx, val) = self.lp.col(j);
        let u: Vec<(usize, f64)> =
            idx.iter().zip(val).filter_map(|(&i, &a)| (self.apos[i] != NONE).then(|| (self.apos[i], a))).collect();
        self.kinv.iter().map(|row| u.iter().map(|&(a, v)| row[a] * v).sum()).collect()
    }

    fn update_kernel(&mut self, leaving: Ent, entering: Ent, sigma: &[f64]) -> Result<(), SolveError> {
        let k = self.basic.len();
        match (leaving, entering) {
            (Ent::Col(q), Ent::Col(j)) => {
                let p = self.bpos[q];
                let w = self.kernel_solve(j);
                let piv = w[p];
                if piv.abs() < 1e-12 {
                    return Err(SolveError::Numerical("tiny pivot in column exchange".into()));
                }
                for v in self.kinv[p].iter_mut() {
                    *v /= piv;
                }
                let prow = self.kinv[p].clone();
                for (pp, row) in self.kinv.iter_mut().enumerate() {
                    if pp == p || w[pp] == 0.0 {
                        continue;
                    }
                    let f = w[pp];
                    for (v, &pv) in row.iter_mut().zip(&prow) {
                        *v -= f * pv;
                    }
                }
                self.basic[p] = j;
                self.bpos[j] = p;
                self.bpos[q] = NONE;
            }
            (Ent::Col(q), Ent::Row(i)) => {
                let p = self.bpos[q];
                let a = self.apos[i];
                let piv = self.kinv[p][a];
                if piv.abs() < 1e-12 {
                    return Err(SolveError::Numerical("tiny pivot in kernel shrink".into()));
                }
                let prow = self.kinv[p].clone();
                for (pp, row) in self.kinv.iter_mut().enumerate() {
                    if pp == p {
                        continue;
                    }
                    let f = row[a] / piv;
                    if f != 0.0 {
                        for (v, &pv) in row.iter_mut().zip(&prow) {
                            *v -= f * pv;
                        }
                    }
                }
                self.kinv.swap_remove(p);
                self.basic.swap_remove(p);
                self.bpos[q] = NONE;
                if p < self.basic.len() {
                    self.bpos[self.basic[p]] = p;
                }
                for row in self.kinv.iter_mut() {
                    row.swap_remove(a);
                }
                self.active.swap_remove(a);
                self.apos[i] = NONE;
                if a < self.active.len() {
                    self.apos[self.active[a]] = a;
                }
            }
            (Ent::Row(t), Ent::Col(j)) => {
                let w = self.kernel_solve(j);
                let mut d = 0.0;
                let (idx, val) = self.lp.row(t);
                let mut vw = 0.0;
                for (&jj, &c) in idx.iter().zip(val) {
                    if jj == j {
                        d = c;
                    }
                    let p = self.bpos[jj];
                    if p != NONE {
                        vw += c * w[p];
                    }
                }
                let s = d - vw;
                if s.abs() < 1e-12 {
                    return Err(SolveError::Numerical("tiny pivot in kernel growth".into()));
                }
                for (p, row) in self.kinv.iter_mut().enumerate() {
                    let f = w[p] / s;
                    if f != 0.0 {
                        for (v, &sg) in row.iter_mut().zip(sigma) {
                            *v += f * sg;
                        }
                    }
                    row.push(-w[p] / s);
                }
                let mut last: Vec<f64> = sigma.iter().map(|&sg| -sg / s).collect();
                last.push(1.0 / s);
                self.kinv.push(last);
                self.basic.push(j);
                self.bpos[j] = k;
                self.active.push(t);
                self.apos[t] = k;
            }
            (Ent::Row(t), Ent::Row(i)) => {
                let a = self.apos[i];
                let sa = sigma[a];
                if sa.abs() < 1e-12 {
                    return Err(SolveError::Numerical("tiny pivot in row exchange".into()));
                }
                for row in self.kinv.iter_mut() {
                    let ka = row[a];
                    if ka == 0.0 {
                        continue;
                    }
                    let f = ka / sa;
                    for (b, v) in row.iter_mut().enumerate() {
                        let e = if b == a { sigma[b] - 1.0 } else { sigma[b] };
                        *v -= f * e;
                    }
                }
                self.active[a] = t;
                self.apos[t] = a;
                self.apos[i] = NONE;
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Runs the dual simplex from the current basis.
    pub fn solve(&mut self, limits: &LpLimits) -> Result<LpSolution, SolveError> {
        let mut iterations = 0usize;
        let mut bland = limits.bland;
        let mut degenerate = 0usize;
        if self.max_dual_infeasibility() > DUAL_TOL && !self.repair_dual() {
            self.cold_start();
        }
        let mut final_checks = 0;
        // Entities whose violation is within the final tolerance but admit no
        // ratio-test candidate: infeasibility is only concluded above it.
        let mut tolerated: Vec<Ent> = Vec::new();
        loop {
            if iterations >= limits.max_iterations {
                return Ok(self.finish(LpStatus::IterationLimit, iterations));
            }
            if self.updates >= 64.max(self.basic.len()) {
                self.refactor()?;
                self.recompute_primal();
                self.recompute_duals();
                if self.max_dual_infeasibility() > DUAL_TOL {
                    if !self.repair_dual() {
                        return Err(SolveError::Numerical("dual feasibility lost".into()));
                    }
                }
            }
            let Some(leaving) = self.choose_leaving(bland, &tolerated) else {
                if self.updates > 0 && final_checks < 3 {
                    final_checks += 1;
                    self.refactor()?;
                    self.update_primal();
                    self.recompute_duals();
                    if self.max_dual_infeasibility() > DUAL_TOL && !self.repair_dual() {
                        return Err(SolveError::Numerical("dual feasibility lost".into()));
                    }
                    continue;
                }
                return self.verify(iterations);
            };
            iterations += 1;
            let (lval, (llo, lhi)) = (self.ent_value(leaving), self.ent_bounds(leaving));
            let (delta, target, to_upper) = if lval < llo { (1.0, llo, false) } else { (-1.0, lhi, true) };
            let (alpha, sigma) = self.pivot_row(leaving);

            // Candidates: (ratio, |alpha|, entity, alpha, dir, range).
            let mut cand: Vec<(f64, f64, Ent, f64, f64, f64)> = Vec::new();
            for &(e, a) in &alpha {
                let st = self.ent_status(e);
                if st == Status::Basic {
                    continue;
                }
                let (el, eh) = self.ent_bounds(e);
                if el == eh {
                    continue;
                }
                let dir = if st == Status::Lower { 1.0 } else { -1.0 };
                if delta * dir * a <= PIVOT_TOL {
                    continue;
                }
                let gd = (-self.ent_dual(e) * dir).max(0.0);
                cand.push((gd / a.abs(), a.abs(), e, a, dir, eh - el));
            }
            if cand.is_empty() {
                if self.violation(leaving) <= FINAL_TOL {
                    tolerated.push(leaving);
                    continue;
                }
                return Ok(self.finish(LpStatus::Infeasible, iterations));
            }
            cand.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)).then(x.2.cmp(&y.2)));

            let mut slope = (target - lval).abs();
            let mut flips: Vec<(Ent, f64)> = Vec::new();
            let mut moved = lval;
            let mut chosen: Option<usize> = None;
            if bland {
                let rmin = cand[0].0;
                let mut pick = 0;
                for (t, c) in cand.iter().enumerate() {
                    if c.0 > rmin + 1e-12 {
                        break;
                    }
                    if c.2 < cand[pick].2 {
                        pick = t;
                    }
                }
                chosen = Some(pick);
            } else {
                for t in 0..cand.len() {
                    let (_, aabs, e, _, dir, range) = cand[t];
                    if range.is_finite() && slope - aabs * range > PRIMAL_TOL {
                        slope -= aabs * range;
                        flips.push((e, dir * range));
                        moved += cand[t].3 * dir * range;
                        continue;
                    }
                    // Among near-ties at this breakpoint prefer the largest pivot.
                    let mut pick = t;
                    for (u, c) in cand.iter().enumerate().skip(t + 1) {
                        if c.0 > cand[t].0 + 1e-12 {
                            break;
                        }
                        if c.1 > cand[pick].1 {
                            pick = u;
                        }
                    }
                    chosen = Some(pick);
                    break;
                }
            }
            let Some(ci) = chosen else {
                if self.violation(leaving) <= FINAL_TOL {
                    tolerated.push(leaving);
                    continue;
                }
                return Ok(self.finish(LpStatus::Infeasible, iterations));
            };
            let (_, _, entering, a_e, _, _) = cand[ci];
            let theta = self.ent_dual(entering) / a_e;
            if theta.abs() < 1e-13 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN && !bland {
                    log::debug!("simplex: degenerate run, switching to Bland's rule");
                    bland = true;
                }
            } else {
                degenerate = 0;
            }

            // Primal step: flips first, then the entering move that drives
            // the leaving entity exactly onto its violated bound.
            let step = (target - moved) / a_e;
            let mut moves = flips.clone();
            moves.push((entering, step));
            self.apply_moves(&moves);
            for &(e, _) in &flips {
                match e {
                    Ent::Col(j) => {
                        self.xstat[j] = if self.xstat[j] == Status::Lower { Status::Upper } else { Status::Lower };
                        self.x[j] = self.nonbasic_col_value(j);
                    }
                    Ent::Row(i) => {
                        self.rstat[i] = if self.rstat[i] == Status::Lower { Status::Upper } else { Status::Lower };
                    }
                }
            }

            // Dual step.
            for &(e, a) in &alpha {
                if self.ent_status(e) == Status::Basic {
                    continue;
                }
                match e {
                    Ent::Col(j) => self.g[j] -= theta * a,
                    Ent::Row(i) => self.gr[i] -= theta * a,
                }
            }

            self.update_kernel(leaving, entering, &sigma)?;
            let lstat = if to_upper { Status::Upper } else { Status::Lower };
            match leaving {
                Ent::Col(q) => {
                    self.xstat[q] = lstat;
                    self.x[q] = target;
                    self.g[q] = theta;
                }
                Ent::Row(t) => {
                    self.rstat[t] = lstat;
                    self.r[t] = target;
                    self.gr[t] = theta;
                }
            }
            match entering {
                Ent::Col(j) => {
                    self.xstat[j] = Status::Basic;
                    self.g[j] = 0.0;
                }
                Ent::Row(i) => {
                    self.rstat[i] = Status::Basic;
                    self.gr[i] = 0.0;
                }
            }
        }
    }

    fn verify(&mut self, iterations: usize) -> Result<LpSolution, SolveError> {
        let mut worst: f64 = 0.0;
        for j in 0..self.lp.num_cols() {
            worst = worst.max(self.lo[j] - self.x[j]).max(self.x[j] - self.hi[j]);
        }
        for i in 0..self.lp.num_rows() {
            let (idx, val) = self.lp.row(i);
            let act: f64 = idx.iter().zip(val).map(|(&j, &a)| a * self.x[j]).sum();
            let (rlo, rhi) = self.lp.row_bounds(i);
            worst = worst.max(rlo - act).max(act - rhi);
        }
        if worst > FINAL_TOL {
            return Err(SolveError::Numerical(format!("final primal violation {worst:e}")));
        }
        Ok(self.finish(LpStatus::Optimal, iterations))
    }

    fn finish(&self, status: LpStatus, iterations: usize) -> LpSolution {
        let objective = self.lp.c.iter().zip(&self.x).map(|(c, x)| c * x).sum();
        LpSolution { status, objective, primal: self.x.clone(), iteration_count: iterations }
    }
}

/// Solves the LP relaxation of `model` (lazy rows excluded) with the given
/// variables fixed. The reported objective includes the model offset.
pub fn solve_lp(model: &Model, fixings: &[(VarId, f64)], limits: &LpLimits) -> Result<LpSolution, SolveError> {
    let (lp, _) = SparseLp::from_model(model, false);
    let mut lo: Vec<f64> = model.vars().iter().map(|v| v.lo).collect();
    let mut hi: Vec<f64> = model.vars().iter().map(|v| v.hi).collect();
    for &(v, val) in fixings {
        if v.0 >= lo.len() {
            return Err(SolveError::UnknownVariable(v.0));
        }
        lo[v.0] = val;
        hi[v.0] = val;
    }
    let mut solver = DualSimplex::new(lp, lo, hi);
    let mut sol = match solver.solve(limits) {
        Ok(s) => s,
        Err(_) if !limits.bland => {
            let (lp, _) = SparseLp::from_model(model, false);
            let (l, h) = solver.bounds();
            let mut fresh = DualSimplex::new(lp, l.to_vec(), h.to_vec());
            fresh.solve(&LpLimits { bland: true, ..*limits })?
        }
        Err(e) => return Err(e),
    };
    sol.objective += model.offset();
    Ok(sol)
}

//! Activity-based bound propagation over the rows of a [`SparseLp`].

use std::collections::VecDeque;

use crate::simplex::SparseLp;

const INT_SLACK: f64 = 1e-6;
const INFEASIBLE_TOL: f64 = 1e-7;
const MAX_ROW_VISITS: u32 = 8;

fn margin(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

/// Reusable row queue for [`propagate`]; only touched entries are reset.
#[derive(Default)]
pub(crate) struct Scratch {
    queued: Vec<bool>,
    visits: Vec<u32>,
    touched: Vec<usize>,
    queue: VecDeque<usize>,
}

impl Scratch {
    fn prepare(&mut self, m: usize) {
        for &i in &self.touched {
            self.queued[i] = false;
            self.visits[i] = 0;
        }
        self.touched.clear();
        self.queue.clear();
        self.queued.resize(m, false);
        self.visits.resize(m, 0);
    }

    fn push(&mut self, i: usize) {
        if !self.queued[i] {
            if self.visits[i] == 0 {
                self.touched.push(i);
            }
            self.queued[i] = true;
            self.queue.push_back(i);
        }
    }
}

/// Tightens `lo`/`hi` to a fixpoint (bounded by a per-row visit cap).
/// Returns false when some row cannot be satisfied within the bounds.
/// `seeds` lists changed variables; `None` visits every row. Every
/// variable whose bounds move is appended to `changed`.
pub(crate) fn propagate(
    lp: &SparseLp,
    is_int: &[bool],
    lo: &mut [f64],
    hi: &mut [f64],
    seeds: Option<&[usize]>,
    scratch: &mut Scratch,
    changed: &mut Vec<usize>,
) -> bool {
    let m = lp.num_rows();
    scratch.prepare(m);
    let push_col = |j: usize, scratch: &mut Scratch| {
        let (rows, _) = lp.col(j);
        for &i in rows {
            scratch.push(i);
        }
    };
    match seeds {
        None => {
            for i in 0..m {
                scratch.push(i);
            }
        }
        Some(cols) => {
            for &j in cols {
                push_col(j, scratch);
            }
        }
    }
    while let Some(i) = scratch.queue.pop_front() {
        scratch.queued[i] = false;
        scratch.visits[i] += 1;
        if scratch.visits[i] > MAX_ROW_VISITS {
            continue;
        }
        let (idx, val) = lp.row(i);
        let (rlo, rhi) = lp.row_bounds(i);
        let mut min_act = 0.0;
        let mut max_act = 0.0;
        for (&j, &a) in idx.iter().zip(val) {
            if a > 0.0 {
                min_act += a * lo[j];
                max_act += a * hi[j];
            } else {
                min_act += a * hi[j];
                max_act += a * lo[j];
            }
        }
        let scale = rhi.abs().min(rlo.abs()).max(1.0);
        if min_act > rhi + INFEASIBLE_TOL * scale || max_act < rlo - INFEASIBLE_TOL * scale {
            return false;
        }
        for (&j, &a) in idx.iter().zip(val) {
            if lo[j] == hi[j] {
                continue;
            }
            let (mut new_lo, mut new_hi) = (f64::NEG_INFINITY, f64::INFINITY);
            if rhi.is_finite() {
                let rest = if a > 0.0 { min_act - a * lo[j] } else { min_act - a * hi[j] };
                let b = (rhi - rest) / a;
                if a > 0.0 {
                    new_hi = new_hi.min(b);
                } else {
                    new_lo = new_lo.max(b);
                }
            }
            if rlo.is_finite() {
                let rest = if a > 0.0 { max_act - a * hi[j] } else { max_act - a * lo[j] };
                let b = (rlo - rest) / a;
                if a > 0.0 {
                    new_lo = new_lo.max(b);
                } else {
                    new_hi = new_hi.min(b);
                }
            }
            let (old_lo, old_hi) = (lo[j], hi[j]);
            if is_int[j] {
                if new_hi.is_finite() {
                    new_hi = (new_hi + INT_SLACK).floor();
                }
                if new_lo.is_finite() {
                    new_lo = (new_lo - INT_SLACK).ceil();
                }
            } else {
                new_hi += margin(new_hi);
                new_lo -= margin(new_lo);
            }
            let mut moved = false;
            if new_hi < hi[j] - margin(hi[j]) * 100.0 || (is_int[j] && new_hi < hi[j]) {
                hi[j] = new_hi;
                moved = true;
            }
            if new_lo > lo[j] + margin(lo[j]) * 100.0 || (is_int[j] && new_lo > lo[j]) {
                lo[j] = new_lo;
                moved = true;
            }
            if !moved {
                continue;
            }
            if hi[j] < lo[j] {
                if lo[j] - hi[j] > INFEASIBLE_TOL * lo[j].abs().max(1.0) {
                    return false;
                }
                // Crossing within tolerance collapses onto the old bound that survived.
                let v = if hi[j] != old_hi { lo[j] } else { hi[j] };
                lo[j] = v;
                hi[j] = v;
            } else if hi[j] - lo[j] <= 2.0 * margin(lo[j]) {
                let v = if lo[j] != old_lo { hi[j] } else { lo[j] };
                lo[j] = v;
                hi[j] = v;
            }
            changed.push(j);
            // Row activity bounds moved; revisit every row touching j.
            push_col(j, scratch);
            if a > 0.0 {
                min_act += a * (lo[j] - old_lo);
                max_act += a * (hi[j] - old_hi);
            } else {
                min_act += a * (hi[j] - old_hi);
                max_act += a * (lo[j] - old_lo);
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_upper_bound_fixes_dependent_variable() {
        // pi - z <= 0 with z fixed to 0 forces pi to 0.
        let mut lp = SparseLp::new(vec![1.0, 0.0]);
        lp.append_rows(vec![(vec![(0, 1.0), (1, -1.0)], f64::NEG_INFINITY, 0.0)]);
        let mut lo = vec![0.0, 0.0];
        let mut hi = vec![0.3, 0.0];
        assert!(propagate(&lp, &[false, true], &mut lo, &mut hi, None, &mut Scratch::default(), &mut Vec::new()));
        assert_eq!((lo[0], hi[0]), (0.0, 0.0));
    }

    #[test]
    fn assignment_row_fixes_last_binary() {
        let mut lp = SparseLp::new(vec![0.0; 3]);
        lp.append_rows(vec![(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 1.0, 1.0)]);
        let mut lo = vec![0.0; 3];
        let mut hi = vec![0.0, 0.0, 1.0];
        assert!(propagate(&lp, &[true; 3], &mut lo, &mut hi, None, &mut Scratch::default(), &mut Vec::new()));
        assert_eq!(lo[2], 1.0);
    }

    #[test]
    fn detects_infeasibility() {
        let mut lp = SparseLp::new(vec![0.0; 2]);
        lp.append_rows(vec![(vec![(0, 1.0), (1, 1.0)], 3.0, f64::INFINITY)]);
        let mut lo = vec![0.0; 2];
        let mut hi = vec![1.0; 2];
        assert!(!propagate(&lp, &[true; 2], &mut lo, &mut hi, None, &mut Scratch::default(), &mut Vec::new()));
    }
}

//! Path space: joint state assignments over chance and decision nodes, their
//! probability bounds and utilities, and the strategy-conditional path
//! probability recursion.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use crate::diagram::{Diagram, NodeKind};
use crate::error::PathError;
use crate::strategy::GlobalStrategy;

/// Paths cached by [`PathTable::build`] unless the caller raises the cap.
pub const DEFAULT_PATH_CAP: usize = 1 << 24;

/// Transform applied to each value node's consequence before summation.
#[derive(Clone, Default)]
pub struct Utility(Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>);

impl Utility {
    pub fn identity() -> Self {
        Self(None)
    }

    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Some(Arc::new(f)))
    }

    /// `a * c + b`.
    pub fn affine(a: f64, b: f64) -> Self {
        Self::new(move |c| a * c + b)
    }

    #[inline]
    pub fn apply(&self, c: f64) -> f64 {
        match &self.0 {
            None => c,
            Some(f) => f(c),
        }
    }
}

impl fmt::Debug for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_none() { "Utility(identity)" } else { "Utility(custom)" })
    }
}

/// Number of paths, the product of state counts; `None` on overflow.
pub fn path_count(d: &Diagram) -> Option<u128> {
    (1..=d.path_len()).try_fold(1u128, |acc, j| acc.checked_mul(d.states(j) as u128))
}

/// Lexicographic path iterator, node 1 slowest.
#[derive(Clone, Debug)]
pub struct PathIter {
    radix: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for PathIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.next.take()?;
        let mut succ = cur.clone();
        let mut k = succ.len();
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            if succ[k] < self.radix[k] {
                succ[k] += 1;
                self.next = Some(succ);
                break;
            }
            succ[k] = 1;
        }
        Some(cur)
    }
}

pub fn enumerate_paths(d: &Diagram) -> PathIter {
    let radix: Vec<usize> = (1..=d.path_len()).map(|j| d.states(j)).collect();
    let first = if radix.iter().all(|&r| r >= 1) { Some(vec![1; radix.len()]) } else { None };
    PathIter { radix, next: first }
}

/// Product of the chance-node probabilities along `s`; decision nodes
/// contribute a factor of one.
pub fn path_bound(d: &Diagram, s: &[usize]) -> f64 {
    d.chance_nodes().iter().map(|&j| d.probability(j, d.info_row(j, s), s[j - 1])).product()
}

/// Transformed consequence of each value node on `s`.
pub fn path_utility_by_value(d: &Diagram, utility: &Utility, s: &[usize]) -> Vec<f64> {
    d.value_nodes().iter().map(|&v| utility.apply(d.consequence_on(v, s))).collect()
}

/// Sum over value nodes of the transformed consequences on `s`.
pub fn path_utility(d: &Diagram, utility: &Utility, s: &[usize]) -> f64 {
    d.value_nodes().iter().map(|&v| utility.apply(d.consequence_on(v, s))).sum()
}

/// True iff every decision node's state on `s` is the one `z` prescribes.
pub fn is_compatible(d: &Diagram, z: &GlobalStrategy, s: &[usize]) -> bool {
    z.locals().iter().all(|l| l.choices[d.info_row(l.node, s)] == s[l.node - 1])
}

/// Running products along `s` in node order: a chance node multiplies by its
/// conditional probability, a decision node by 1 when `z` picks the path's
/// state and by 0 otherwise. The last entry is the path probability under `z`.
pub fn recursion_probabilities(d: &Diagram, z: &GlobalStrategy, s: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.len());
    let mut acc = 1.0;
    for j in 1..=d.path_len() {
        let row = d.info_row(j, s);
        acc *= match d.node(j).kind {
            NodeKind::Chance => d.probability(j, row, s[j - 1]),
            NodeKind::Decision => {
                if z.choice(j, row) == s[j - 1] {
                    1.0
                } else {
                    0.0
                }
            }
            NodeKind::Value => unreachable!("value nodes follow the path nodes"),
        };
        out.push(acc);
    }
    out
}

/// Per-path bounds and utilities for every path, indexed by lexicographic ordinal.
#[derive(Clone, Debug)]
pub struct PathTable {
    radix: Vec<usize>,
    p: Vec<f64>,
    utility: Vec<f64>,
    by_value: Vec<f64>,
    value_nodes: usize,
}

impl PathTable {
    pub fn build(d: &Diagram, utility: &Utility, cap: usize) -> Result<Self, PathError> {
        let count = path_count(d).unwrap_or(u128::MAX);
        if count > cap as u128 {
            return Err(PathError::TooMany { count, cap });
        }
        let count = count as usize;
        let nv = d.value_nodes().len();
        let mut table = PathTable {
            radix: (1..=d.path_len()).map(|j| d.states(j)).collect(),
            p: Vec::with_capacity(count),
            utility: Vec::with_capacity(count),
            by_value: Vec::with_capacity(count * nv),
            value_nodes: nv,
        };
        for s in enumerate_paths(d) {
            table.p.push(path_bound(d, &s));
            let mut total = 0.0;
            for &v in d.value_nodes() {
                let u = utility.apply(d.consequence_on(v, &s));
                table.by_value.push(u);
                total += u;
            }
            table.utility.push(total);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn path_len(&self) -> usize {
        self.radix.len()
    }

    /// Writes the states of path `k` into `out`.
    pub fn decode_into(&self, mut k: usize, out: &mut [usize]) {
        for (slot, &r) in out.iter_mut().zip(&self.radix).rev() {
            *slot = k % r + 1;
            k /= r;
        }
    }

    pub fn states(&self, k: usize) -> Vec<usize> {
        let mut out = vec![0; self.radix.len()];
        self.decode_into(k, &mut out);
        out
    }

    /// Ordinal of the path with the given states.
    pub fn index_of(&self, s: &[usize]) -> usize {
        s.iter().zip(&self.radix).fold(0, |acc, (&st, &r)| acc * r + st - 1)
    }

    pub fn p(&self, k: usize) -> f64 {
        self.p[k]
    }

    pub fn bounds(&self) -> &[f64] {
        &self.p
    }

    pub fn utility(&self, k: usize) -> f64 {
        self.utility[k]
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utility
    }

    pub fn utility_by_value(&self, k: usize) -> &[f64] {
        &self.by_value[k * self.value_nodes..(k + 1) * self.value_nodes]
    }

    /// CSV with columns `s_1..s_n, p, utility`.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let n = self.radix.len();
        let header: Vec<String> = (1..=n).map(|i| format!("s_{i}")).chain(["p".into(), "utility".into()]).collect();
        writeln!(w, "{}", header.join(","))?;
        let mut s = vec![0; n];
        for k in 0..self.len() {
            self.decode_into(k, &mut s);
            for st in &s {
                write!(w, "{st},")?;
            }
            writeln!(w, "{:.16e},{:.16e}", self.p[k], self.utility[k])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::DiagramBuilder;

    fn two_binary() -> Diagram {
        let mut b = DiagramBuilder::new();
        let x = b.chance("x", &["a", "b"], &[]);
        let d = b.decision("d", &["p", "q"], &[x]);
        let v = b.value("v", &[x, d]);
        b.cpt(x, |_| vec![0.3, 0.7]);
        b.consequences(v, |g| (g[0] * 10 + g[1]) as f64);
        b.build()
    }

    #[test]
    fn paths_are_lexicographic() {
        let paths: Vec<_> = enumerate_paths(&two_binary()).collect();
        assert_eq!(paths, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
    }

    #[test]
    fn bound_ignores_decisions() {
        let d = two_binary();
        assert_eq!(path_bound(&d, &[2, 1]), 0.7);
        assert_eq!(path_bound(&d, &[2, 2]), 0.7);
    }

    #[test]
    fn table_matches_direct_evaluation() {
        let d = two_binary();
        let u = Utility::affine(2.0, 1.0);
        let t = PathTable::build(&d, &u, DEFAULT_PATH_CAP).unwrap();
        for (k, s) in enumerate_paths(&d).enumerate() {
            assert_eq!(t.states(k), s);
            assert_eq!(t.index_of(&s), k);
            assert_eq!(t.p(k), path_bound(&d, &s));
            assert_eq!(t.utility(k), path_utility(&d, &u, &s));
        }
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next(), Some("s_1,s_2,p,utility"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn cap_is_enforced() {
        let d = two_binary();
        assert_eq!(PathTable::build(&d, &Utility::identity(), 3).unwrap_err(), PathError::TooMany { count: 4, cap: 3 });
    }
}

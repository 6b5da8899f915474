//! Benchmark diagrams: randomly generated N-monitoring instances, the pig farm
//! LIMID for a given number of months, and double monitoring with explicit
//! parameters.

use crate::diagram::{Diagram, DiagramBuilder};

/// SplitMix64: the state advances by 0x9E3779B97F4A7C15 and each output is
/// the state mixed by two xor-shift-multiply rounds (constants
/// 0xBF58476D1CE4E5B9, 0x94D049BB133111EB) and a final xor-shift by 31.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on [0, 1): the top 53 bits scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

const LOAD: [&str; 2] = ["high", "low"];
const ACTION: [&str; 2] = ["yes", "no"];
const OUTCOME: [&str; 2] = ["failure", "no failure"];

/// Drawn parameters of an N-monitoring instance.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitoringDraws {
    pub p_high: f64,
    /// Per report: probability the report is correct given high load, given low load.
    pub report_correct: Vec<[f64; 2]>,
    /// Failure probability without actions, given high load and given low load.
    pub failure_prior: [f64; 2],
    pub costs: Vec<f64>,
}

impl MonitoringDraws {
    /// Draws in a fixed order: load, then per report (high, low) correctness,
    /// then the two failure priors, then per action its cost.
    pub fn sample(n: usize, rng: &mut SplitMix64) -> Self {
        let p_high = rng.next_f64();
        let report_correct = (0..n)
            .map(|_| {
                let x = rng.next_f64();
                let y = rng.next_f64();
                [x.max(1.0 - x), y.max(1.0 - y)]
            })
            .collect();
        let x = rng.next_f64();
        let y = rng.next_f64();
        let failure_prior = [x.max(1.0 - x), y.min(1.0 - y)];
        let costs = (0..n).map(|_| rng.next_f64()).collect();
        Self { p_high, report_correct, failure_prior, costs }
    }
}

/// Load `L`, reports `R^i`, actions `A^i` informed by `R^i` only, failure `F`
/// and target `T`, in that order.
pub fn monitoring_diagram(draws: &MonitoringDraws) -> Diagram {
    let n = draws.costs.len();
    let mut b = DiagramBuilder::new();
    let load = b.chance("L", &LOAD, &[]);
    let reports: Vec<_> = (1..=n).map(|i| b.chance(&format!("R{i}"), &LOAD, &[load])).collect();
    let actions: Vec<_> = (0..n).map(|i| b.decision(&format!("A{}", i + 1), &ACTION, &[reports[i]])).collect();
    let mut f_info = vec![load];
    f_info.extend(&actions);
    let failure = b.chance("F", &OUTCOME, &f_info);
    let mut t_info = vec![failure];
    t_info.extend(&actions);
    let target = b.value("T", &t_info);

    b.cpt(load, |_| vec![draws.p_high, 1.0 - draws.p_high]);
    for (i, &r) in reports.iter().enumerate() {
        let [hi, lo] = draws.report_correct[i];
        b.cpt(r, |g| if g[0] == 1 { vec![hi, 1.0 - hi] } else { vec![1.0 - lo, lo] });
    }
    let spent =
        |acts: &[usize]| -> f64 { acts.iter().zip(&draws.costs).filter(|(&a, _)| a == 1).map(|(_, c)| c).sum() };
    b.cpt(failure, |g| {
        let prior = draws.failure_prior[g[0] - 1];
        let p = prior / spent(&g[1..]).exp();
        vec![p, 1.0 - p]
    });
    b.consequences(target, |g| if g[0] == 2 { 100.0 } else { 0.0 } - spent(&g[1..]));
    b.build()
}

/// Random N-monitoring instance from `seed`.
pub fn n_monitoring(n: usize, seed: u64) -> Diagram {
    assert!(n >= 1, "n_monitoring needs at least one report");
    monitoring_diagram(&MonitoringDraws::sample(n, &mut SplitMix64::new(seed)))
}

/// Every table entry of the double monitoring diagram. Index 0 is the first
/// state: high load, a correct-report entry for high load, action taken,
/// failure.
#[derive(Clone, Debug, PartialEq)]
pub struct DoubleMonitoringParams {
    pub p_high: f64,
    /// `report_correct[i][l]`: report `i` matches load state `l`.
    pub report_correct: [[f64; 2]; 2],
    /// `failure[l][a1][a2]`: failure probability.
    pub failure: [[[f64; 2]; 2]; 2],
    /// `value[a1][a2][f]`: consequence at the target.
    pub value: [[[f64; 2]; 2]; 2],
}

impl DoubleMonitoringParams {
    /// Parameters drawn like an N-monitoring instance with two reports.
    pub fn sample(rng: &mut SplitMix64) -> Self {
        let draws = MonitoringDraws::sample(2, rng);
        let mut failure = [[[0.0; 2]; 2]; 2];
        let mut value = [[[0.0; 2]; 2]; 2];
        for a1 in 0..2 {
            for a2 in 0..2 {
                let spent = if a1 == 0 { draws.costs[0] } else { 0.0 } + if a2 == 0 { draws.costs[1] } else { 0.0 };
                for l in 0..2 {
                    failure[l][a1][a2] = draws.failure_prior[l] / spent.exp();
                }
                value[a1][a2] = [-spent, 100.0 - spent];
            }
        }
        Self {
            p_high: draws.p_high,
            report_correct: [draws.report_correct[0], draws.report_correct[1]],
            failure,
            value,
        }
    }
}

pub fn double_monitoring(params: &DoubleMonitoringParams) -> Diagram {
    let mut b = DiagramBuilder::new();
    let load = b.chance("L", &LOAD, &[]);
    let r1 = b.chance("R1", &LOAD, &[load]);
    let r2 = b.chance("R2", &LOAD, &[load]);
    let a1 = b.decision("A1", &ACTION, &[r1]);
    let a2 = b.decision("A2", &ACTION, &[r2]);
    let f = b.chance("F", &OUTCOME, &[load, a1, a2]);
    let t = b.value("T", &[a1, a2, f]);
    b.cpt(load, |_| vec![params.p_high, 1.0 - params.p_high]);
    for (i, r) in [r1, r2].into_iter().enumerate() {
        let [hi, lo] = params.report_correct[i];
        b.cpt(r, |g| if g[0] == 1 { vec![hi, 1.0 - hi] } else { vec![1.0 - lo, lo] });
    }
    b.cpt(f, |g| {
        let p = params.failure[g[0] - 1][g[1] - 1][g[2] - 1];
        vec![p, 1.0 - p]
    });
    b.consequences(t, |g| params.value[g[0] - 1][g[1] - 1][g[2] - 1]);
    b.build()
}

pub const ILL_AT_START: f64 = 0.1;
pub const POSITIVE_IF_ILL: f64 = 0.8;
pub const POSITIVE_IF_HEALTHY: f64 = 0.1;
/// `HEALTHY_NEXT[ill or healthy][treated or not]`.
pub const HEALTHY_NEXT: [[f64; 2]; 2] = [[0.5, 0.1], [0.9, 0.8]];
pub const TREATMENT_COST: f64 = 100.0;
pub const PRICE_ILL: f64 = 300.0;
pub const PRICE_HEALTHY: f64 = 1000.0;

/// Pig farm over `months` health states: `h_k, t_k, d_k` for each month but
/// the last, then `h_M`. Each treatment decision sees only the latest test.
pub fn pig_farm(months: usize) -> Diagram {
    assert!(months >= 2, "pig_farm needs at least two months");
    let health = ["ill", "healthy"];
    let mut b = DiagramBuilder::new();
    let mut h = b.chance("h1", &health, &[]);
    b.cpt(h, |_| vec![ILL_AT_START, 1.0 - ILL_AT_START]);
    let mut decisions = Vec::new();
    for k in 1..months {
        let t = b.chance(&format!("t{k}"), &["positive", "negative"], &[h]);
        b.cpt(t, |g| {
            let p = if g[0] == 1 { POSITIVE_IF_ILL } else { POSITIVE_IF_HEALTHY };
            vec![p, 1.0 - p]
        });
        let d = b.decision(&format!("d{k}"), &["treat", "pass"], &[t]);
        decisions.push(d);
        let next = b.chance(&format!("h{}", k + 1), &health, &[h, d]);
        b.cpt(next, |g| {
            let p = HEALTHY_NEXT[g[0] - 1][g[1] - 1];
            vec![1.0 - p, p]
        });
        h = next;
    }
    for (k, &d) in decisions.iter().enumerate() {
        let u = b.value(&format!("u{}", k + 1), &[d]);
        b.consequences(u, |g| if g[0] == 1 { -TREATMENT_COST } else { 0.0 });
    }
    let u = b.value(&format!("u{months}"), &[h]);
    b.consequences(u, |g| if g[0] == 1 { PRICE_ILL } else { PRICE_HEALTHY });
    b.build()
}

/// Shape of a random diagram from [`random_diagram`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomShape {
    pub chance_nodes: usize,
    pub decision_nodes: usize,
    pub value_nodes: usize,
    /// States per chance or decision node are drawn from `2..=max_states`.
    pub max_states: usize,
    /// Information sets hold at most this many earlier nodes.
    pub max_info: usize,
    /// Chance a CPT entry is zeroed (each row keeps at least one positive entry).
    pub zero_probability: f64,
    /// Consequences are integers in `-10..=10` rather than uniform on `[-10, 10)`.
    pub integer_consequences: bool,
}

impl Default for RandomShape {
    fn default() -> Self {
        Self {
            chance_nodes: 3,
            decision_nodes: 2,
            value_nodes: 1,
            max_states: 2,
            max_info: 2,
            zero_probability: 0.0,
            integer_consequences: true,
        }
    }
}

fn below(rng: &mut SplitMix64, n: usize) -> usize {
    (rng.next_f64() * n as f64) as usize % n.max(1)
}

/// Distinct members of `0..n`, at most `k`, ascending.
fn sample_subset(rng: &mut SplitMix64, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let take = below(rng, k.min(n) + 1);
    let mut out = Vec::with_capacity(take);
    for _ in 0..take {
        out.push(pool.swap_remove(below(rng, pool.len())));
    }
    out.sort_unstable();
    out
}

/// Random valid diagram. The first node is a chance node; the remaining
/// chance and decision nodes are interleaved at random. Value nodes observe
/// at least one chance or decision node.
pub fn random_diagram(shape: &RandomShape, seed: u64) -> Diagram {
    assert!(shape.chance_nodes >= 1 && shape.value_nodes >= 1 && shape.max_states >= 2);
    let mut rng = SplitMix64::new(seed);
    let n = shape.chance_nodes + shape.decision_nodes;
    let mut kinds = vec![true; shape.chance_nodes - 1];
    kinds.extend(std::iter::repeat(false).take(shape.decision_nodes));
    for i in (1..kinds.len()).rev() {
        let j = below(&mut rng, i + 1);
        kinds.swap(i, j);
    }
    kinds.insert(0, true);

    let mut b = DiagramBuilder::new();
    let mut ids = Vec::with_capacity(n);
    let mut chance = Vec::new();
    let mut state_counts = Vec::with_capacity(n);
    for (k, &is_chance) in kinds.iter().enumerate() {
        let states = 2 + below(&mut rng, shape.max_states - 1);
        state_counts.push(states);
        let labels: Vec<String> = (1..=states).map(|s| format!("s{s}")).collect();
        let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
        let info: Vec<_> = sample_subset(&mut rng, k, shape.max_info).into_iter().map(|i| ids[i]).collect();
        let id = if is_chance {
            let id = b.chance(&format!("c{k}"), &labels, &info);
            chance.push(id);
            id
        } else {
            b.decision(&format!("d{k}"), &labels, &info)
        };
        ids.push(id);
    }
    let mut values = Vec::new();
    for v in 0..shape.value_nodes {
        let mut info = sample_subset(&mut rng, n, shape.max_info);
        if info.is_empty() {
            info.push(below(&mut rng, n));
        }
        let info: Vec<_> = info.into_iter().map(|i| ids[i]).collect();
        values.push(b.value(&format!("v{v}"), &info));
    }
    for &j in &chance {
        b.cpt(j, |_| {
            let states = state_counts[j - 1];
            let mut w: Vec<f64> = (0..states)
                .map(|_| if rng.next_f64() < shape.zero_probability { 0.0 } else { rng.next_f64() + 1e-3 })
                .collect();
            if w.iter().all(|&x| x == 0.0) {
                let k = below(&mut rng, states);
                w[k] = 1.0;
            }
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        });
    }
    for &v in &values {
        b.consequences(v, |_| {
            if shape.integer_consequences {
                below(&mut rng, 21) as f64 - 10.0
            } else {
                rng.next_f64() * 20.0 - 10.0
            }
        });
    }
    b.build()
}

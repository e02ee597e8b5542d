//! Hausdorff, Prokhorov and Wasserstein distances for co-embedded trees and
//! empirical samples, and the Monte Carlo contraction factor.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::measure::TreeMeasure;
use crate::point::{l1_distance, SparsePoint};
use crate::rng::stream;
use crate::samplers::StringSampler;
use crate::stats::Estimate;
use crate::tree::EmbeddedTree;
use crate::word::UlamWord;

/// A closed interval known to contain the quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn exact(v: f64) -> Self {
        Bracket { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn max(self, o: Bracket) -> Bracket {
        Bracket {
            lo: self.lo.max(o.lo),
            hi: self.hi.max(o.hi),
        }
    }
}

/// One-sided Hausdorff distance from `big` to `small` when `small`'s
/// segments are a subset of `big`'s: the largest height of a maximal
/// pendant subtree of `big` above its anchor.
pub fn hausdorff_nested(small: &EmbeddedTree, big: &EmbeddedTree) -> Result<f64> {
    if !small.is_submap_of(big) {
        return Err(Error::Domain(
            "trees are not nested; use hausdorff_general".into(),
        ));
    }
    // pendant root of each extra segment: its highest ancestor outside `small`
    let mut best: BTreeMap<UlamWord, f64> = BTreeMap::new();
    for s in big.segments() {
        if small.contains(&s.word) {
            continue;
        }
        let mut top = s.word.clone();
        while let Some(p) = top.parent() {
            if small.contains(&p) || !big.contains(&p) {
                break;
            }
            top = p;
        }
        let anchor = &big.get(&top).expect("pendant root in big").base;
        let h = l1_distance(anchor, &s.base) + s.length;
        let e = best.entry(top).or_insert(0.0);
        *e = e.max(h);
    }
    Ok(best.values().copied().fold(0.0, f64::max))
}

/// Points spaced at most `resolution` along every segment, both ends included.
pub fn skeleton_net(t: &EmbeddedTree, resolution: f64) -> Vec<SparsePoint> {
    if t.is_empty() {
        return vec![SparsePoint::zero()];
    }
    let mut out = Vec::new();
    for s in t.segments() {
        let n = (s.length / resolution).ceil().max(1.0) as usize;
        for k in 0..=n {
            out.push(s.point_at(s.length * k as f64 / n as f64));
        }
    }
    out
}

/// Hausdorff distance between two co-embedded trees, from exact
/// point-to-skeleton distances of `resolution`-nets. The true value lies in
/// the returned bracket.
pub fn hausdorff_general(a: &EmbeddedTree, b: &EmbeddedTree, resolution: f64) -> Result<Bracket> {
    if !(resolution > 0.0) {
        return Err(param("resolution must be positive"));
    }
    let one_sided = |x: &EmbeddedTree, y: &EmbeddedTree| -> f64 {
        skeleton_net(x, resolution)
            .par_iter()
            .map(|p| y.distance_to(p))
            .reduce(|| 0.0, f64::max)
    };
    let v = one_sided(a, b).max(one_sided(b, a));
    Ok(Bracket {
        lo: v,
        hi: v + resolution,
    })
}

/// Max-flow on a small dense graph (Dinic), with floating capacities.
struct FlowNet {
    n: usize,
    to: Vec<usize>,
    cap: Vec<f64>,
    head: Vec<Vec<usize>>,
}

const FLOW_EPS: f64 = 1e-13;

impl FlowNet {
    fn new(n: usize) -> Self {
        FlowNet {
            n,
            to: Vec::new(),
            cap: Vec::new(),
            head: vec![Vec::new(); n],
        }
    }

    fn edge(&mut self, u: usize, v: usize, c: f64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0.0);
    }

    fn levels(&self, s: usize) -> Vec<i64> {
        let mut lvl = vec![-1; self.n];
        lvl[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > FLOW_EPS && lvl[v] < 0 {
                    lvl[v] = lvl[u] + 1;
                    q.push_back(v);
                }
            }
        }
        lvl
    }

    fn push(&mut self, u: usize, t: usize, f: f64, lvl: &[i64], it: &mut [usize]) -> f64 {
        if u == t {
            return f;
        }
        while it[u] < self.head[u].len() {
            let e = self.head[u][it[u]];
            let v = self.to[e];
            if self.cap[e] > FLOW_EPS && lvl[v] == lvl[u] + 1 {
                let d = self.push(v, t, f.min(self.cap[e]), lvl, it);
                if d > 0.0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            it[u] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        loop {
            let lvl = self.levels(s);
            if lvl[t] < 0 {
                return total;
            }
            let mut it = vec![0; self.n];
            loop {
                let f = self.push(s, t, f64::INFINITY, &lvl, &mut it);
                if f <= 0.0 {
                    break;
                }
                total += f;
            }
        }
    }
}

/// Whether `mu(A) <= nu(A^eps) + eps` for every set `A` of atoms of `mu`,
/// with closed thickenings: a flow saturating `mu` through edges of length
/// at most `eps` and a slack node of capacity `eps`.
fn one_way_feasible(mu: &[(SparsePoint, f64)], nu: &[(SparsePoint, f64)], dist: &[Vec<f64>], eps: f64, transpose: bool) -> bool {
    let (na, nb) = (mu.len(), nu.len());
    let s = na + nb + 1;
    let t = s + 1;
    let slack = na + nb;
    let mut g = FlowNet::new(t + 1);
    let total: f64 = mu.iter().map(|a| a.1).sum();
    for (i, a) in mu.iter().enumerate() {
        g.edge(s, i, a.1);
        g.edge(i, slack, f64::INFINITY);
        for j in 0..nb {
            let d = if transpose { dist[j][i] } else { dist[i][j] };
            if d <= eps {
                g.edge(i, na + j, f64::INFINITY);
            }
        }
    }
    for (j, b) in nu.iter().enumerate() {
        g.edge(na + j, t, b.1);
    }
    g.edge(slack, t, eps);
    g.max_flow(s, t) >= total - 1e-12 * total.max(1.0)
}

/// Prokhorov distance between two tree measures. Continuous parts are
/// binned at spacing `resolution` (which moves mass by at most
/// `resolution`); the result brackets the distance by bisection on `eps`.
pub fn prokhorov_distance(mu: &TreeMeasure, nu: &TreeMeasure, resolution: f64) -> Result<Bracket> {
    if !(resolution > 0.0) {
        return Err(param("resolution must be positive"));
    }
    let a = mu.discretized(resolution);
    let b = nu.discretized(resolution);
    let blur = if mu.continuous.is_empty() && nu.continuous.is_empty() {
        0.0
    } else {
        resolution
    };
    let dist: Vec<Vec<f64>> = a
        .par_iter()
        .map(|(p, _)| b.iter().map(|(q, _)| l1_distance(p, q)).collect())
        .collect();
    let feasible = |eps: f64| one_way_feasible(&a, &b, &dist, eps, false) && one_way_feasible(&b, &a, &dist, eps, true);
    if feasible(0.0) {
        return Ok(Bracket { lo: 0.0, hi: blur });
    }
    let mut lo = 0.0;
    let mut hi = a.iter().chain(&b).map(|x| x.1).sum::<f64>().max(1.0);
    let target = (resolution / 4.0).max(1e-12);
    while hi - lo > target {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Bracket {
        lo: (lo - blur).max(0.0),
        hi: hi + blur,
    })
}

/// Hausdorff-Prokhorov bracket: the larger of the two.
pub fn hp_distance(
    a: (&EmbeddedTree, &TreeMeasure),
    b: (&EmbeddedTree, &TreeMeasure),
    resolution: f64,
) -> Result<Bracket> {
    let h = hausdorff_general(a.0, b.0, resolution)?;
    let p = prokhorov_distance(a.1, b.1, resolution)?;
    Ok(h.max(p))
}

/// Exact `W_p` between the empirical laws of two samples on the line. Equal
/// sizes use the sorted pairing; otherwise the quantile functions are
/// integrated piecewise.
pub fn wasserstein_1d(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    if !(p >= 1.0) {
        return Err(param(format!("p must be >= 1, got {p}")));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(param("samples must be finite"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let sum = if n == m {
        a.iter().zip(&b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>() / n as f64
    } else {
        let (mut i, mut j) = (0usize, 0usize);
        let mut u = 0.0f64;
        let mut acc = 0.0;
        while i < n && j < m {
            let next_a = (i + 1) as f64 / n as f64;
            let next_b = (j + 1) as f64 / m as f64;
            let next = next_a.min(next_b);
            acc += (next - u) * (a[i] - b[j]).abs().powf(p);
            u = next;
            if next_a <= next {
                i += 1;
            }
            if next_b <= next {
                j += 1;
            }
        }
        acc
    };
    Ok(sum.powf(1.0 / p))
}

/// Monte Carlo `E[sum_i P_i^(p beta)]` (with the exact tail correction) and
/// its `1/p`-th power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contraction {
    pub mean: Estimate,
    pub factor: Estimate,
}

pub fn contraction_factor(
    sampler: &StringSampler,
    p: f64,
    beta: f64,
    reps: usize,
    n_atoms: usize,
    seed: u64,
) -> Result<Contraction> {
    if !(p >= 1.0) {
        return Err(param(format!("p must be >= 1, got {p}")));
    }
    let q = p * beta;
    let mean = if sampler.is_random() {
        if reps < 100 {
            return Err(param(format!("reps must be >= 100, got {reps}")));
        }
        let xs: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let s = sampler.sample(n_atoms, &mut stream(seed, r as u64))?;
                Ok(s.power_sum(q) + s.tail_moment(q))
            })
            .collect::<Result<_>>()?;
        Estimate::from_samples(&xs)
    } else {
        let s = sampler.sample(n_atoms, &mut stream(seed, 0))?;
        Estimate::exact(s.power_sum(q) + s.tail_moment(q))
    };
    Ok(Contraction {
        mean,
        factor: mean.root(p),
    })
}

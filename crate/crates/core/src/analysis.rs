//! Malthusian exponent and dimension estimates: `phi(q)`, `q*`, stopping
//! lines, the Malthusian martingale, Frostman energies, box counting, height
//! moments, and replicate chains of build traces.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{build_recursive, BuildConfig, BuildTrace};
use crate::error::{param, Error, Result};
use crate::measure::TreeMeasure;
use crate::metrics::wasserstein_1d;
use crate::point::{l1_distance, SparsePoint};
use crate::rng::stream;
use crate::samplers::StringSampler;
use crate::stats::{bootstrap_ci, hill_tail_index, linear_fit, Estimate, LinearFit};
use crate::tree::EmbeddedTree;
use crate::word::UlamWord;

/// `E[sum_i P_i^q]` estimated two ways: over the kept atoms only, and with
/// the exact conditional moment of the truncated tail added.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub raw: Estimate,
    pub corrected: Estimate,
}

pub fn phi_estimate(
    sampler: &StringSampler,
    q: f64,
    reps: usize,
    n_atoms: usize,
    seed: u64,
) -> Result<PhiEstimate> {
    if !(q > 0.0) {
        return Err(param(format!("q must be positive, got {q}")));
    }
    if !sampler.is_random() {
        let s = sampler.sample(n_atoms, &mut stream(seed, 0))?;
        let raw = s.power_sum(q);
        return Ok(PhiEstimate {
            raw: Estimate::exact(raw),
            corrected: Estimate::exact(raw + s.tail_moment(q)),
        });
    }
    if reps < 100 {
        return Err(param(format!("reps must be >= 100, got {reps}")));
    }
    let pairs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = sampler.sample(n_atoms, &mut stream(seed, r as u64))?;
            let raw = s.power_sum(q);
            Ok((raw, raw + s.tail_moment(q)))
        })
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let corrected: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(PhiEstimate {
        raw: Estimate::from_samples(&raw),
        corrected: Estimate::from_samples(&corrected),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiPoint {
    pub q: f64,
    pub estimate: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiCurve {
    pub sampler: String,
    pub points: Vec<PhiPoint>,
}

/// Tail-corrected `phi` on a grid, one independent seed stream per point.
pub fn phi_curve(
    sampler: &StringSampler,
    qs: &[f64],
    reps: usize,
    n_atoms: usize,
    seed: u64,
) -> Result<PhiCurve> {
    let points = qs
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let e = phi_estimate(sampler, q, reps, n_atoms, crate::rng::derive_seed(seed, i as u64))?;
            Ok(PhiPoint {
                q,
                estimate: e.corrected,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PhiCurve {
        sampler: sampler.label(),
        points,
    })
}

/// Bisection bracket for `q* = inf {q > 0 : phi(q) < 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QStar {
    pub lo: f64,
    pub hi: f64,
    /// Comparisons that stayed inconclusive at the replicate cap; the
    /// bracket was widened by `tol` on each side for them.
    pub ambiguous: usize,
    pub evaluations: usize,
}

impl QStar {
    pub fn contains(&self, q: f64) -> bool {
        self.lo <= q && q <= self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionConfig {
    pub q_min: f64,
    pub q_max: f64,
    pub tol: f64,
    pub reps: usize,
    pub reps_cap: usize,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        BisectionConfig {
            q_min: 0.05,
            q_max: 8.0,
            tol: 0.01,
            reps: 1000,
            reps_cap: 16000,
        }
    }
}

/// CI-aware bisection on a nonincreasing `phi`. `phi(q, reps)` returns a
/// Monte Carlo estimate; a value counts as below one only when its CI lies
/// below one, and as at least one only when its CI lies at or above one.
/// Otherwise the replicate count doubles up to the cap, after which the
/// point estimate decides.
pub fn malthusian_exponent(
    mut phi: impl FnMut(f64, usize) -> Result<Estimate>,
    cfg: &BisectionConfig,
) -> Result<QStar> {
    if !(cfg.q_min > 0.0 && cfg.q_max > cfg.q_min && cfg.tol > 0.0) {
        return Err(param("need 0 < q_min < q_max and tol > 0"));
    }
    let mut evaluations = 0;
    let mut ambiguous = 0;
    // True when phi(q) < 1.
    let mut below = |q: f64, amb: &mut usize, ev: &mut usize| -> Result<bool> {
        let mut reps = cfg.reps;
        loop {
            let e = phi(q, reps)?;
            *ev += 1;
            if e.hi() < 1.0 {
                return Ok(true);
            }
            if e.lo() >= 1.0 {
                return Ok(false);
            }
            if reps * 2 > cfg.reps_cap {
                *amb += 1;
                return Ok(e.mean < 1.0);
            }
            reps *= 2;
        }
    };
    if !below(cfg.q_max, &mut ambiguous, &mut evaluations)? {
        return Err(Error::NoRoot(format!(
            "phi >= 1 on [{}, {}]",
            cfg.q_min, cfg.q_max
        )));
    }
    if below(cfg.q_min, &mut ambiguous, &mut evaluations)? {
        return Ok(QStar {
            lo: 0.0,
            hi: cfg.q_min,
            ambiguous,
            evaluations,
        });
    }
    let (mut lo, mut hi) = (cfg.q_min, cfg.q_max);
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        if below(mid, &mut ambiguous, &mut evaluations)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let widen = if ambiguous > 0 { cfg.tol } else { 0.0 };
    Ok(QStar {
        lo: (lo - widen).max(0.0),
        hi: hi + widen,
        ambiguous,
        evaluations,
    })
}

/// `phi` closure for a sampler, with a fresh seed per evaluation point.
pub fn sampler_phi(
    sampler: &StringSampler,
    n_atoms: usize,
    seed: u64,
) -> impl FnMut(f64, usize) -> Result<Estimate> + '_ {
    let mut k = 0u64;
    move |q, reps| {
        k += 1;
        Ok(phi_estimate(sampler, q, reps, n_atoms, crate::rng::derive_seed(seed, k))?.corrected)
    }
}

/// `(q*/beta, max(q*/beta, 1))`: leaf and tree dimension.
pub fn dimension_theoretical(q_star: f64, beta: f64) -> Result<(f64, f64)> {
    if !(q_star >= 0.0 && beta > 0.0) {
        return Err(param("need q* >= 0 and beta > 0"));
    }
    let d = q_star / beta;
    Ok((d, d.max(1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingLine {
    pub words: Vec<UlamWord>,
    pub epsilon: f64,
    /// `P_check` of each word, in the same order.
    pub scales: Vec<f64>,
}

impl StoppingLine {
    pub fn power_sum(&self, q: f64) -> f64 {
        self.scales.iter().map(|s| s.powf(q)).sum()
    }
}

/// First-passage words: `P_check > eps` along every proper prefix (from
/// generation one on) and `<= eps` at the word. Words whose scale drops
/// below `eps` need not be built; rays above `eps` at the built depth are
/// reported as uncrossed.
pub fn stopping_line(trace: &BuildTrace, epsilon: f64) -> Result<StoppingLine> {
    if !(epsilon > 0.0) {
        return Err(param("epsilon must be positive"));
    }
    let mut words = Vec::new();
    let mut scales = Vec::new();
    let mut uncrossed = 0usize;
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        let n = &trace.nodes[i];
        for (j, a) in n.string.atoms.iter().enumerate() {
            if !(a.p > 0.0) {
                continue;
            }
            let s = n.scale * a.p;
            if s <= epsilon {
                words.push(n.word.child(j as u32 + 1));
                scales.push(s);
            } else {
                match n.children[j] {
                    Some(c) => stack.push(c),
                    None => uncrossed += 1,
                }
            }
        }
    }
    if uncrossed > 0 {
        return Err(Error::UncrossedRays(uncrossed));
    }
    let mut order: Vec<usize> = (0..words.len()).collect();
    order.sort_by(|&a, &b| words[a].cmp(&words[b]));
    Ok(StoppingLine {
        words: order.iter().map(|&k| words[k].clone()).collect(),
        scales: order.iter().map(|&k| scales[k]).collect(),
        epsilon,
    })
}

/// `M_n = sum over words of length n + 1 of P_check^q`, `n = 0..=depth`,
/// summed over the atoms of built generation-`n` strings, together with a
/// compensated version. The compensation adds back the exact conditional
/// moment of every truncated tail met so far and keeps each pruned
/// (unexpanded) word at its own value, which is its conditional mean when
/// `phi(q) = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTrace {
    pub q: f64,
    pub raw: Vec<f64>,
    /// `raw[n] + leakage[0..=n] + frozen[0..n]`.
    pub compensated: Vec<f64>,
    /// Per generation `n`: `sum P_check^q * (tail moment)` over its strings.
    pub leakage: Vec<f64>,
    /// Per generation `n`: `P_check^q` of atoms of generation-`n` strings
    /// that were not expanded although the trace goes deeper.
    pub frozen: Vec<f64>,
}

impl MartingaleTrace {
    /// `x[n + 1] - x[n]` for `n = 0..depth`.
    pub fn increments(x: &[f64]) -> Vec<f64> {
        x.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

pub fn malthusian_martingale(trace: &BuildTrace, q: f64) -> Result<MartingaleTrace> {
    if !(q > 0.0) {
        return Err(param("q must be positive"));
    }
    let d = trace.depth;
    let mut raw = vec![0.0; d + 1];
    let mut leakage = vec![0.0; d + 1];
    let mut frozen = vec![0.0; d + 1];
    for n in &trace.nodes {
        let g = n.generation();
        if g > d {
            continue;
        }
        for (a, c) in n.string.atoms.iter().zip(&n.children) {
            if a.p > 0.0 {
                let v = (n.scale * a.p).powf(q);
                raw[g] += v;
                if g < d && c.is_none() {
                    frozen[g] += v;
                }
            }
        }
        leakage[g] += n.scale.powf(q) * n.string.tail_moment(q);
    }
    let mut leaked = 0.0;
    let mut kept = 0.0;
    let compensated = (0..=d)
        .map(|k| {
            leaked += leakage[k];
            let v = raw[k] + leaked + kept;
            kept += frozen[k];
            v
        })
        .collect();
    Ok(MartingaleTrace {
        q,
        raw,
        compensated,
        leakage,
        frozen,
    })
}

/// Normalised sampler of points from the located part of a tree measure.
pub struct MeasureSampler<'a> {
    m: &'a TreeMeasure,
    cum: Vec<f64>,
}

impl<'a> MeasureSampler<'a> {
    pub fn new(m: &'a TreeMeasure) -> Result<Self> {
        let mut cum = Vec::with_capacity(m.atoms.len() + m.continuous.len());
        let mut acc = 0.0;
        for a in &m.atoms {
            acc += a.1.max(0.0);
            cum.push(acc);
        }
        for c in &m.continuous {
            acc += c.total();
            cum.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InsufficientData("measure has no located mass".into()));
        }
        Ok(MeasureSampler { m, cum })
    }

    /// A point and the index of the component it came from.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (SparsePoint, usize) {
        let total = *self.cum.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        let k = self.cum.partition_point(|c| *c <= u).min(self.cum.len() - 1);
        let na = self.m.atoms.len();
        if k < na {
            (self.m.atoms[k].0.clone(), k)
        } else {
            let c = &self.m.continuous[k - na];
            let t = c.cdf.inverse(rng.random::<f64>() * c.total());
            (c.point_at(t), k)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrostmanReport {
    pub gamma: f64,
    pub estimate: Estimate,
    /// Pairs at distance zero (dropped when `gamma > 0`).
    pub excluded: usize,
    pub exclusion_rate: f64,
    /// Running estimates at doubling sample sizes.
    pub running: Vec<(usize, f64)>,
    pub diverging: bool,
}

/// Fraction of zero-distance pairs above which the energy is flagged as
/// infinite (an atom of mass `m` produces such pairs at rate about `m^2`).
pub const EXCLUSION_LIMIT: f64 = 0.01;

/// Monte Carlo `int int d(v, v')^(-gamma) mu(dv) mu(dv')` over i.i.d. pairs
/// from the normalised located part of `measure`. Flags divergence when the
/// running estimate doubles twice in a row across sample-size doublings, or
/// when zero-distance pairs are frequent.
pub fn frostman_energy(measure: &TreeMeasure, gamma: f64, samples: usize, seed: u64) -> Result<FrostmanReport> {
    if !(gamma >= 0.0) {
        return Err(param("gamma must be >= 0"));
    }
    if samples < 2 {
        return Err(param("need at least two samples"));
    }
    let ms = MeasureSampler::new(measure)?;
    let mut rng = stream(seed, 0);
    let mut vals = Vec::with_capacity(samples);
    let mut excluded = 0usize;
    let mut running = Vec::new();
    let mut sum = 0.0;
    let mut next_report = 64.min(samples);
    for k in 1..=samples {
        let (a, _) = ms.sample(&mut rng);
        let (b, _) = ms.sample(&mut rng);
        let d = l1_distance(&a, &b);
        if gamma == 0.0 {
            vals.push(1.0);
            sum += 1.0;
        } else if d > 0.0 {
            let v = d.powf(-gamma);
            vals.push(v);
            sum += v;
        } else {
            excluded += 1;
        }
        if k == next_report || k == samples {
            if !vals.is_empty() {
                running.push((k, sum / vals.len() as f64));
            }
            next_report = (next_report * 2).min(samples);
        }
    }
    running.dedup_by_key(|r| r.0);
    let doubling = running
        .windows(3)
        .any(|w| w[1].1 >= 2.0 * w[0].1 && w[2].1 >= 2.0 * w[1].1);
    let exclusion_rate = excluded as f64 / samples as f64;
    Ok(FrostmanReport {
        gamma,
        estimate: Estimate::from_samples(&vals),
        excluded,
        exclusion_rate,
        running,
        diverging: doubling || exclusion_rate > EXCLUSION_LIMIT,
    })
}

/// Skeleton graph with vertices every `spacing` (and at every attachment
/// point), edges weighted by length.
struct SkeletonGraph {
    adj: Vec<Vec<(usize, f64)>>,
    leaf: Vec<bool>,
}

impl SkeletonGraph {
    fn new(t: &EmbeddedTree, spacing: f64) -> Self {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
        let mut leaf = vec![t.is_empty()];
        // vertices along each segment as (t, id), sorted by t
        let mut along: std::collections::BTreeMap<UlamWord, Vec<(f64, usize)>> = Default::default();
        let mut offsets: std::collections::BTreeMap<UlamWord, Vec<f64>> = Default::default();
        for s in t.segments() {
            if let Some(p) = s.word.parent() {
                let ps = t.get(&p).expect("validated tree");
                offsets.entry(p.clone()).or_default().push(s.base.get(&p) - ps.base.get(&p));
            }
        }
        for s in t.segments() {
            let n = (s.length / spacing).ceil().max(1.0) as usize;
            let mut ts: Vec<f64> = (0..=n).map(|k| s.length * k as f64 / n as f64).collect();
            if let Some(o) = offsets.get(&s.word) {
                ts.extend(o.iter().map(|x| x.clamp(0.0, s.length)));
            }
            ts.sort_by(f64::total_cmp);
            ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * s.length.max(1.0));
            let start = match s.word.parent() {
                None => 0,
                Some(p) => {
                    let off = s.base.get(&p) - t.get(&p).expect("validated tree").base.get(&p);
                    let v = &along[&p];
                    let k = v.partition_point(|e| e.0 < off - 1e-12 * off.abs().max(1.0));
                    let k = if k < v.len() { k } else { v.len() - 1 };
                    // nearest of the neighbours around the insertion point
                    let k = if k > 0 && (v[k - 1].0 - off).abs() < (v[k].0 - off).abs() { k - 1 } else { k };
                    v[k].1
                }
            };
            let mut ids = Vec::with_capacity(ts.len());
            ids.push((0.0, start));
            let mut prev = (0.0, start);
            for &x in &ts[1..] {
                let id = adj.len();
                adj.push(Vec::new());
                leaf.push(false);
                adj[prev.1].push((id, x - prev.0));
                adj[id].push((prev.1, x - prev.0));
                ids.push((x, id));
                prev = (x, id);
            }
            along.insert(s.word.clone(), ids);
        }
        for (i, a) in adj.iter().enumerate().skip(1) {
            leaf[i] = a.len() == 1;
        }
        SkeletonGraph { adj, leaf }
    }

    /// Greedy `r`-net size: repeatedly pick an uncovered vertex and cover
    /// everything within graph distance `r`.
    fn greedy_net(&self, r: f64, leaves_only: bool) -> usize {
        let n = self.adj.len();
        let mut covered = vec![false; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut touched = Vec::new();
        let mut count = 0;
        for c in 0..n {
            if covered[c] || (leaves_only && !self.leaf[c]) {
                continue;
            }
            count += 1;
            let mut heap = BinaryHeap::new();
            dist[c] = 0.0;
            touched.push(c);
            heap.push(Reverse((Ordf(0.0), c)));
            while let Some(Reverse((Ordf(d), u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                covered[u] = true;
                for &(v, w) in &self.adj[u] {
                    let nd = d + w;
                    if nd <= r && nd < dist[v] {
                        if dist[v].is_infinite() {
                            touched.push(v);
                        }
                        dist[v] = nd;
                        heap.push(Reverse((Ordf(nd), v)));
                    }
                }
            }
            for &u in &touched {
                dist[u] = f64::INFINITY;
            }
            touched.clear();
        }
        count
    }
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
struct Ordf(f64);

impl Eq for Ordf {}

impl Ord for Ordf {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxCount {
    pub radii: Vec<f64>,
    pub counts: Vec<usize>,
    pub slope: f64,
    pub r2: f64,
}

/// Net sizes `N(r)` of the skeleton (or of its segment tips when
/// `leaves_only`) on a vertex grid of spacing `r / 4`, and the least-squares
/// slope of `log N(r)` against `log(1/r)`.
pub fn box_counting_dimension(t: &EmbeddedTree, radii: &[f64], leaves_only: bool) -> Result<BoxCount> {
    if radii.len() < 4 {
        return Err(param("need at least 4 radii"));
    }
    if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(param("radii must be positive and decreasing"));
    }
    if radii[0] / radii[radii.len() - 1] < 10.0 * (1.0 - 1e-9) {
        return Err(param("radii must span at least one decade"));
    }
    let counts: Vec<usize> = radii
        .par_iter()
        .map(|&r| SkeletonGraph::new(t, r / 4.0).greedy_net(r, leaves_only))
        .collect();
    let x: Vec<f64> = radii.iter().map(|r| (1.0 / r).ln()).collect();
    let y: Vec<f64> = counts.iter().map(|&c| (c.max(1) as f64).ln()).collect();
    let fit: LinearFit = linear_fit(&x, &y).ok_or_else(|| {
        Error::DegenerateFit(format!("radii {radii:?}, counts {counts:?}"))
    })?;
    if !fit.slope.is_finite() {
        return Err(Error::DegenerateFit(format!("radii {radii:?}, counts {counts:?}")));
    }
    Ok(BoxCount {
        radii: radii.to_vec(),
        counts,
        slope: fit.slope,
        r2: fit.r2,
    })
}

/// `n` radii log-spaced from `r_max` down to `r_min`.
pub fn log_radii(r_max: f64, r_min: f64, n: usize) -> Vec<f64> {
    let (a, b) = (r_max.ln(), r_min.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub p: f64,
    pub moment: f64,
    pub ci: (f64, f64),
    /// Same from the first half of the sample.
    pub half_moment: f64,
    pub half_ci: (f64, f64),
    /// The two bootstrap intervals overlap.
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    /// Hill estimate of the tail index from the top tenth of the sample.
    pub tail_index: Option<f64>,
}

/// Empirical `p`-th moments with 95% bootstrap intervals, compared between
/// the first half of the sample and the whole.
pub fn height_moment_diagnostics(samples: &[f64], p_grid: &[f64], resamples: usize, seed: u64) -> Result<MomentReport> {
    if samples.len() < 500 {
        return Err(Error::InsufficientData(format!(
            "need at least 500 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(param("samples must be finite and nonnegative"));
    }
    let half = &samples[..samples.len() / 2];
    let rows = p_grid
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let stat = |xs: &[f64]| xs.iter().map(|x| x.powf(p)).sum::<f64>() / xs.len() as f64;
            let mut r = stream(seed, i as u64);
            let ci = bootstrap_ci(samples, stat, resamples, 0.95, &mut r);
            let half_ci = bootstrap_ci(half, stat, resamples, 0.95, &mut r);
            MomentRow {
                p,
                moment: stat(samples),
                ci,
                half_moment: stat(half),
                half_ci,
                stable: ci.0 <= half_ci.1 && half_ci.0 <= ci.1,
            }
        })
        .collect();
    Ok(MomentReport {
        rows,
        tail_index: hill_tail_index(samples, samples.len() / 10),
    })
}

/// Per-replicate summaries of independent build traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    /// `[replicate][m]`: `ht(T_m)`, `m = 0..=depth`.
    pub heights: Vec<Vec<f64>>,
    /// `[replicate][m]`: `delta_H(T_m, T_depth)`, `m = 0..depth`.
    pub gaps: Vec<Vec<f64>>,
    /// `[replicate][n]`: `max P_check` over generation `n`.
    pub max_scales: Vec<Vec<f64>>,
    pub depth: usize,
}

/// Builds `reps` traces, replicate `r` on stream `(seed, r)`.
pub fn run_chain(cfg: &BuildConfig, reps: usize, seed: u64) -> Result<ChainSamples> {
    cfg.validate()?;
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let t = build_recursive(cfg, &mut stream(seed, r as u64))?;
            Ok((t.heights_by_depth(), t.nested_gaps(cfg.depth), t.max_scale_by_gen()))
        })
        .collect::<Result<_>>()?;
    let mut out = ChainSamples {
        heights: Vec::with_capacity(reps),
        gaps: Vec::with_capacity(reps),
        max_scales: Vec::with_capacity(reps),
        depth: cfg.depth,
    };
    for (h, g, m) in rows {
        out.heights.push(h);
        out.gaps.push(g);
        out.max_scales.push(m);
    }
    Ok(out)
}

impl ChainSamples {
    pub fn heights_at(&self, m: usize) -> Vec<f64> {
        self.heights.iter().map(|h| h[m]).collect()
    }

    /// `W_p(law ht(T_(n-1)), law ht(T_n))` for `n = 1..=depth`.
    pub fn wp_successive(&self, p: f64) -> Result<Vec<f64>> {
        (1..=self.depth)
            .map(|n| wasserstein_1d(&self.heights_at(n - 1), &self.heights_at(n), p))
            .collect()
    }

    /// Geometric decay ratio of `w[from..=to]` (indices into `wp_successive`,
    /// which starts at `n = 1`) from a log-linear fit.
    pub fn decay_ratio(w: &[f64], from: usize, to: usize) -> Result<f64> {
        let idx: Vec<usize> = (from..=to).filter(|&i| i < w.len() && w[i] > 0.0).collect();
        let x: Vec<f64> = idx.iter().map(|&i| i as f64).collect();
        let y: Vec<f64> = idx.iter().map(|&i| w[i].ln()).collect();
        let fit = linear_fit(&x, &y)
            .ok_or_else(|| Error::DegenerateFit(format!("W values {w:?}")))?;
        Ok(fit.slope.exp())
    }

    /// `E[delta_H(T_m, T_depth)^p]` for `m = 0..depth`.
    pub fn gap_moments(&self, p: f64) -> Vec<Estimate> {
        (0..self.depth)
            .map(|m| {
                let xs: Vec<f64> = self.gaps.iter().map(|g| g[m].powf(p)).collect();
                Estimate::from_samples(&xs)
            })
            .collect()
    }

    /// `E[ht(T_m)^p]`.
    pub fn height_moment(&self, m: usize, p: f64) -> Estimate {
        let xs: Vec<f64> = self.heights.iter().map(|h| h[m].powf(p)).collect();
        Estimate::from_samples(&xs)
    }

    /// `P(max over generation n of P_check > eps)`.
    pub fn exceedance(&self, eps: f64, n: usize) -> Estimate {
        let xs: Vec<f64> = self
            .max_scales
            .iter()
            .map(|m| if m[n] > eps { 1.0 } else { 0.0 })
            .collect();
        Estimate::from_samples(&xs)
    }
}

//! Recursive constructions: generation-by-generation builds with their mass
//! measures, bead splitting, and line breaking.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::measure::{ContinuousPart, TreeMeasure};
use crate::point::SparsePoint;
use crate::samplers::{GeneralizedString, StringSampler};
use crate::tree::{EmbeddedTree, Segment};
use crate::word::UlamWord;

pub const DEFAULT_SEGMENT_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub beta: f64,
    pub depth: usize,
    pub n_atoms: usize,
    pub sampler: StringSampler,
    /// Law of the root string when it differs from `sampler`.
    pub root_sampler: Option<StringSampler>,
    pub seed: u64,
    /// Atoms whose cumulative scale would fall below this are not expanded;
    /// their mass stays in the measure as an atom. Zero disables pruning.
    pub min_scale: f64,
    pub segment_cap: usize,
}

impl BuildConfig {
    pub fn new(sampler: StringSampler, beta: f64, depth: usize, n_atoms: usize) -> Self {
        BuildConfig {
            beta,
            depth,
            n_atoms,
            sampler,
            root_sampler: None,
            seed: 0,
            min_scale: 0.0,
            segment_cap: DEFAULT_SEGMENT_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(param(format!("beta must be positive, got {}", self.beta)));
        }
        if self.n_atoms < 1 {
            return Err(param("n_atoms must be >= 1"));
        }
        if !(self.min_scale >= 0.0) {
            return Err(param("min_scale must be >= 0"));
        }
        Ok(())
    }
}

/// One string of the construction, attached at atom `atom` of `parent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub word: UlamWord,
    pub parent: Option<usize>,
    /// 0-based index of the parent's atom this node is attached to.
    pub atom: usize,
    /// Cumulative mass scale `P_check`.
    pub scale: f64,
    /// `scale^beta`.
    pub factor: f64,
    pub string: GeneralizedString,
    /// Child node per atom of `string`, if built.
    pub children: Vec<Option<usize>>,
}

impl Node {
    pub fn generation(&self) -> usize {
        self.word.generation()
    }
}

/// A finished build: every string with its scale and position, from which
/// snapshots, measures and height profiles are derived.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildTrace {
    pub beta: f64,
    pub depth: usize,
    pub min_scale: f64,
    pub nodes: Vec<Node>,
    /// Set for growth-fragmentation traces whose parameters lie outside the
    /// range covered by the convergence statement.
    pub outside_theorem: bool,
}

impl BuildTrace {
    fn new(beta: f64, depth: usize, min_scale: f64, root: GeneralizedString) -> Self {
        let n = root.atoms.len();
        BuildTrace {
            beta,
            depth,
            min_scale,
            nodes: vec![Node {
                word: UlamWord::root(),
                parent: None,
                atom: 0,
                scale: 1.0,
                factor: 1.0,
                string: root,
                children: vec![None; n],
            }],
            outside_theorem: false,
        }
    }

    /// Attaches `string` at atom `j` of node `parent`; returns the new index.
    pub fn add_child(&mut self, parent: usize, j: usize, string: GeneralizedString) -> usize {
        let par = &self.nodes[parent];
        let scale = par.scale * par.string.atoms[j].p;
        let word = par.word.child(j as u32 + 1);
        let n = string.atoms.len();
        let idx = self.nodes.len();
        self.nodes.push(Node {
            word,
            parent: Some(parent),
            atom: j,
            scale,
            factor: scale.powf(self.beta),
            string,
            children: vec![None; n],
        });
        self.nodes[parent].children[j] = Some(idx);
        idx
    }

    pub fn is_pruned(&self) -> bool {
        self.min_scale > 0.0
            && self.nodes.iter().any(|n| {
                n.generation() < self.depth
                    && n.string
                        .atoms
                        .iter()
                        .zip(&n.children)
                        .any(|(a, c)| a.p > 0.0 && c.is_none())
            })
    }

    /// Position along the parent's axis where node `i` starts, in global units.
    pub fn offset(&self, i: usize) -> f64 {
        let n = &self.nodes[i];
        match n.parent {
            None => 0.0,
            Some(p) => self.nodes[p].factor * self.nodes[p].string.atoms[n.atom].x,
        }
    }

    /// Anchor `X_check` of every node, computed in one pass.
    pub fn anchors(&self) -> Vec<SparsePoint> {
        let mut out: Vec<SparsePoint> = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            let a = match n.parent {
                None => SparsePoint::zero(),
                Some(p) => out[p].plus_axis(&self.nodes[p].word, self.offset(i)),
            };
            out.push(a);
        }
        out
    }

    fn segment(&self, i: usize, base: SparsePoint) -> Segment {
        let n = &self.nodes[i];
        Segment {
            word: n.word.clone(),
            base,
            length: n.factor * n.string.ell,
            scale: n.scale,
            raw_length: n.string.ell,
        }
    }

    /// The snapshot made of all strings of generation at most `m`.
    pub fn tree_at(&self, m: usize) -> EmbeddedTree {
        let anchors = self.anchors();
        EmbeddedTree::from_segments(
            self.beta,
            self.nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| n.generation() <= m)
                .map(|(i, _)| self.segment(i, anchors[i].clone())),
        )
    }

    pub fn tree(&self) -> EmbeddedTree {
        self.tree_at(self.depth)
    }

    /// Mass measure of snapshot `m`: atoms of strings whose child is not in
    /// the snapshot, continuous parts of all strings up to generation `m`,
    /// and truncation remainders as deficit.
    pub fn measure_at(&self, m: usize) -> TreeMeasure {
        let anchors = self.anchors();
        let mut meas = TreeMeasure::default();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.generation() > m {
                continue;
            }
            for (a, c) in n.string.atoms.iter().zip(&n.children) {
                let expanded = c.is_some() && n.generation() < m;
                if a.p > 0.0 && !expanded {
                    meas.atoms
                        .push((anchors[i].plus_axis(&n.word, n.factor * a.x), n.scale * a.p));
                }
            }
            if let Some(c) = &n.string.lambda {
                if c.total() > 0.0 {
                    meas.continuous.push(ContinuousPart {
                        word: n.word.clone(),
                        base: anchors[i].clone(),
                        cdf: c.transformed(0.0, n.factor, n.scale),
                    });
                }
            }
            meas.deficit += n.scale * n.string.remainder;
        }
        meas
    }

    pub fn measure(&self) -> TreeMeasure {
        self.measure_at(self.depth)
    }

    /// Local height profiles: entry `[i][k]` is the height above its anchor of
    /// node `i`'s subtree with `k` further generations, in the node's own units.
    fn local_heights(&self) -> Vec<Vec<f64>> {
        let mut h: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            let n = &self.nodes[i];
            let levels = self.depth - n.generation().min(self.depth) + 1;
            let mut v = vec![n.string.ell; levels];
            for (a, c) in n.string.atoms.iter().zip(&n.children) {
                if let Some(c) = c {
                    let pf = self.nodes[*c].factor / n.factor;
                    for k in 1..levels {
                        let hc = &h[*c];
                        let sub = hc[(k - 1).min(hc.len() - 1)];
                        v[k] = v[k].max(a.x + pf * sub);
                    }
                }
            }
            h[i] = v;
        }
        h
    }

    /// `ht(T_check_m)` for `m = 0..=depth`.
    pub fn heights_by_depth(&self) -> Vec<f64> {
        self.local_heights()[0].clone()
    }

    /// Hausdorff gaps `delta_H(T_m, T_n)` for `m = 0..n`, `n <= depth`: the
    /// largest height of a pendant subtree rooted in generation `m + 1`.
    pub fn nested_gaps(&self, n: usize) -> Vec<f64> {
        let h = self.local_heights();
        let mut gaps = vec![0.0f64; n];
        for (i, node) in self.nodes.iter().enumerate() {
            let g = node.generation();
            if g == 0 || g > n {
                continue;
            }
            let m = g - 1;
            let v = node.factor * h[i][(n - g).min(h[i].len() - 1)];
            gaps[m] = gaps[m].max(v);
        }
        gaps
    }

    /// `max P_check` over built nodes of each generation.
    pub fn max_scale_by_gen(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.depth + 1];
        for n in &self.nodes {
            let g = n.generation();
            if g <= self.depth {
                out[g] = f64::max(out[g], n.scale);
            }
        }
        out
    }

    /// `sum P_check^q` over built nodes of each generation.
    pub fn scale_power_sums(&self, q: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.depth + 1];
        for n in &self.nodes {
            out[n.generation()] += n.scale.powf(q);
        }
        out
    }

    /// Number of segments per snapshot `m = 0..=depth`.
    pub fn segment_counts(&self) -> Vec<usize> {
        let mut per = vec![0usize; self.depth + 1];
        for n in &self.nodes {
            per[n.generation()] += 1;
        }
        per.iter()
            .scan(0usize, |acc, c| {
                *acc += c;
                Some(*acc)
            })
            .collect()
    }

    /// Conditional bound on the unbuilt part: `m_hat * sum P_check^(p beta)`
    /// over the atoms of the last generation.
    pub fn remainder_bound(&self, p: f64, m_hat: f64) -> f64 {
        let s: f64 = self
            .nodes
            .iter()
            .filter(|n| n.generation() == self.depth)
            .flat_map(|n| n.string.atoms.iter().map(move |a| (n.scale * a.p).powf(p * self.beta)))
            .sum();
        m_hat * s
    }

    /// Rows `(generation, segment_count, height, max_scale, gap_to_final)`.
    pub fn generation_summary(&self) -> Vec<GenerationRow> {
        let counts = self.segment_counts();
        let heights = self.heights_by_depth();
        let maxs = self.max_scale_by_gen();
        let mut gaps = self.nested_gaps(self.depth);
        gaps.push(0.0);
        (0..=self.depth)
            .map(|m| GenerationRow {
                generation: m,
                segment_count: counts[m],
                height: heights[m],
                max_scale: maxs[m],
                hausdorff_gap_to_final: gaps[m],
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub generation: usize,
    pub segment_count: usize,
    pub height: f64,
    pub max_scale: f64,
    pub hausdorff_gap_to_final: f64,
}

/// Builds generations `0..=depth` breadth first, so strings are drawn in
/// canonical word order.
pub fn build_recursive<R: Rng + ?Sized>(cfg: &BuildConfig, rng: &mut R) -> Result<BuildTrace> {
    cfg.validate()?;
    let root_sampler = cfg.root_sampler.as_ref().unwrap_or(&cfg.sampler);
    let root = root_sampler.sample(cfg.n_atoms, rng)?;
    let mut trace = BuildTrace::new(cfg.beta, cfg.depth, cfg.min_scale, root);
    let mut frontier = vec![0usize];
    for _gen in 0..cfg.depth {
        let mut next = Vec::new();
        for &i in &frontier {
            let n_atoms = trace.nodes[i].string.atoms.len();
            for j in 0..n_atoms {
                let p = trace.nodes[i].string.atoms[j].p;
                let scale = trace.nodes[i].scale * p;
                if p <= 0.0 || scale < cfg.min_scale {
                    continue;
                }
                if trace.nodes.len() >= cfg.segment_cap {
                    let built = trace.nodes.len();
                    return Err(Error::SegmentCap {
                        cap: cfg.segment_cap,
                        built,
                        partial: Box::new(trace),
                    });
                }
                let s = cfg.sampler.sample(cfg.n_atoms, rng)?;
                next.push(trace.add_child(i, j, s));
            }
        }
        frontier = next;
    }
    Ok(trace)
}

/// Root string a (beta, beta)-string, every other string beta-mixed.
pub fn build_binary_embedding_tree<R: Rng + ?Sized>(
    beta: f64,
    depth: usize,
    n_atoms: usize,
    rng: &mut R,
) -> Result<BuildTrace> {
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(param(format!("beta must lie in (0,1/2], got {beta}")));
    }
    let mut cfg = BuildConfig::new(StringSampler::BetaMixed { beta }, beta, depth, n_atoms);
    cfg.root_sampler = Some(StringSampler::BetaBeta { beta });
    build_recursive(&cfg, rng)
}

/// Current state of a bead-splitting run.
#[derive(Clone, Debug)]
struct Splitting {
    tree: EmbeddedTree,
    /// Open atoms: (segment word, atom index, point, mass).
    atoms: Vec<(UlamWord, usize, SparsePoint, f64)>,
    continuous: Vec<ContinuousPart>,
    deficit: f64,
    scales: BTreeMap<UlamWord, f64>,
}

impl Splitting {
    fn start(s: &GeneralizedString, beta: f64) -> Self {
        let mut st = Splitting {
            tree: EmbeddedTree::point(beta),
            atoms: Vec::new(),
            continuous: Vec::new(),
            deficit: 0.0,
            scales: BTreeMap::new(),
        };
        st.attach(UlamWord::root(), SparsePoint::zero(), 1.0, s);
        st
    }

    fn attach(&mut self, word: UlamWord, base: SparsePoint, scale: f64, s: &GeneralizedString) {
        let f = scale.powf(self.tree.beta);
        self.tree.insert(Segment {
            word: word.clone(),
            base: base.clone(),
            length: f * s.ell,
            scale,
            raw_length: s.ell,
        });
        for (j, a) in s.atoms.iter().enumerate() {
            if a.p > 0.0 {
                self.atoms
                    .push((word.clone(), j, base.plus_axis(&word, f * a.x), scale * a.p));
            }
        }
        if let Some(c) = &s.lambda {
            if c.total() > 0.0 {
                self.continuous.push(ContinuousPart {
                    word: word.clone(),
                    base,
                    cdf: c.transformed(0.0, f, scale),
                });
            }
        }
        self.deficit += scale * s.remainder;
        self.scales.insert(word, scale);
    }

    fn measure(&self) -> TreeMeasure {
        TreeMeasure {
            atoms: self.atoms.iter().map(|a| (a.2.clone(), a.3)).collect(),
            continuous: self.continuous.clone(),
            deficit: self.deficit,
        }
    }

    /// Replaces open atom `k` by the string `s`.
    fn split(&mut self, k: usize, s: &GeneralizedString) {
        let (word, j, point, mass) = self.atoms.remove(k);
        self.attach(word.child(j as u32 + 1), point, mass, s);
    }
}

fn pick_by_mass<R: Rng + ?Sized>(masses: impl Iterator<Item = f64> + Clone, rng: &mut R) -> Option<usize> {
    let total: f64 = masses.clone().sum();
    if !(total > 0.0) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (k, m) in masses.enumerate() {
        if m > 0.0 {
            acc += m;
            last = Some(k);
            if u < acc {
                return Some(k);
            }
        }
    }
    last
}

fn bead_splitting_impl<R: Rng + ?Sized>(
    sampler: &StringSampler,
    beta: f64,
    n_atoms: usize,
    steps: usize,
    allow_lambda: bool,
    rng: &mut R,
) -> Result<Vec<(EmbeddedTree, TreeMeasure)>> {
    let draw = |rng: &mut R| -> Result<GeneralizedString> {
        let s = sampler.sample(n_atoms, rng)?;
        if !allow_lambda && s.lambda_mass() > 0.0 {
            return Err(Error::CannotSplit(
                "string has a continuous part; use the multifurcating variant".into(),
            ));
        }
        Ok(s)
    };
    let root = draw(rng)?;
    let mut st = Splitting::start(&root, beta);
    let mut out = vec![(st.tree.clone(), st.measure())];
    for _ in 0..steps {
        let k = pick_by_mass(st.atoms.iter().map(|a| a.3), rng)
            .ok_or_else(|| Error::CannotSplit("no atoms left to pick".into()))?;
        let s = draw(rng)?;
        st.split(k, &s);
        out.push((st.tree.clone(), st.measure()));
    }
    Ok(out)
}

/// Binary bead splitting: at each step pick an atom with probability
/// proportional to its mass and replace it by an independent string scaled
/// by that mass. Strings with continuous parts are rejected.
pub fn bead_splitting_run<R: Rng + ?Sized>(
    sampler: &StringSampler,
    beta: f64,
    n_atoms: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<(EmbeddedTree, TreeMeasure)>> {
    bead_splitting_impl(sampler, beta, n_atoms, steps, false, rng)
}

/// Bead splitting with generalised strings: continuous parts stay in the
/// measure and are never picked; several atoms may share a location.
pub fn multifurcating_bead_splitting<R: Rng + ?Sized>(
    sampler: &StringSampler,
    beta: f64,
    n_atoms: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<(EmbeddedTree, TreeMeasure)>> {
    bead_splitting_impl(sampler, beta, n_atoms, steps, true, rng)
}

/// Bead splitting realised inside a pre-built trace: an atom is picked by
/// descending from the root, choosing atom `j` of the current string with
/// probability `p_j` (restarting on truncated or continuous mass), until an
/// atom outside the current tree is reached. Strings beyond the pre-built
/// depth are drawn when first needed.
pub fn bead_splitting_embedded<R: Rng + ?Sized>(
    cfg: &BuildConfig,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<(EmbeddedTree, TreeMeasure)>> {
    let mut pre = cfg.clone();
    pre.min_scale = 0.0;
    let mut trace = build_recursive(&pre, rng)?;
    let root = trace.nodes[0].string.clone();
    if root.lambda_mass() > 0.0 {
        return Err(Error::CannotSplit("string has a continuous part".into()));
    }
    let mut st = Splitting::start(&root, cfg.beta);
    let mut included: HashSet<usize> = HashSet::from([0]);
    let mut out = vec![(st.tree.clone(), st.measure())];
    for _ in 0..steps {
        if st.atoms.is_empty() {
            return Err(Error::CannotSplit("no atoms left to pick".into()));
        }
        let (node, j) = 'descent: loop {
            let mut cur = 0usize;
            loop {
                let s = &trace.nodes[cur].string;
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut pick = None;
                for (j, a) in s.atoms.iter().enumerate() {
                    acc += a.p;
                    if u < acc {
                        pick = Some(j);
                        break;
                    }
                }
                let Some(j) = pick else { continue 'descent };
                match trace.nodes[cur].children[j] {
                    Some(c) if included.contains(&c) => cur = c,
                    _ => break 'descent (cur, j),
                }
            }
        };
        let child = match trace.nodes[node].children[j] {
            Some(c) => c,
            None => {
                let s = cfg.sampler.sample(cfg.n_atoms, rng)?;
                trace.add_child(node, j, s)
            }
        };
        let word = trace.nodes[node].word.clone();
        let k = st
            .atoms
            .iter()
            .position(|a| a.0 == word && a.1 == j)
            .expect("picked atom is open");
        let s = trace.nodes[child].string.clone();
        if s.lambda_mass() > 0.0 {
            return Err(Error::CannotSplit("string has a continuous part".into()));
        }
        st.split(k, &s);
        included.insert(child);
        out.push((st.tree.clone(), st.measure()));
    }
    Ok(out)
}

/// Branch points and their degrees: children attached at the same point of
/// a parent segment share a vertex.
pub fn vertex_degrees(t: &EmbeddedTree) -> Vec<(SparsePoint, usize)> {
    let mut groups: BTreeMap<(UlamWord, u64), (SparsePoint, usize)> = BTreeMap::new();
    for s in t.segments() {
        let Some(pw) = s.word.parent() else { continue };
        let off = s.base.get(&pw);
        let e = groups
            .entry((pw, off.to_bits()))
            .or_insert_with(|| (s.base.clone(), 0));
        e.1 += 1;
    }
    groups
        .into_iter()
        .map(|((pw, bits), (p, k))| {
            let off = f64::from_bits(bits);
            let at_tip = t.get(&pw).is_some_and(|ps| off >= ps.length);
            (p, k + if at_tip { 1 } else { 2 })
        })
        .collect()
}

/// Line breaking with given cut points `c_0 < c_1 < ...`: the first branch
/// has length `c_0`; branch `k + 1` has length `c_{k+1} - c_k` and is attached
/// at a point drawn from the normalised length measure of the current tree.
pub fn line_breaking<R: Rng + ?Sized>(cuts: &[f64], beta: f64, rng: &mut R) -> Result<EmbeddedTree> {
    let Some(&c0) = cuts.first() else {
        return Err(param("need at least one cut"));
    };
    if cuts.windows(2).any(|w| !(w[1] > w[0])) || !(c0 > 0.0) {
        return Err(param("cuts must be positive and increasing"));
    }
    let mut t = EmbeddedTree::single(beta, c0);
    let mut next_child: BTreeMap<UlamWord, u32> = BTreeMap::new();
    for w in cuts.windows(2) {
        let (word, pos) = t.sample_location(rng).expect("positive length");
        let seg = t.get(&word).expect("sampled segment").clone();
        let k = next_child.entry(word.clone()).or_insert(0);
        *k += 1;
        let len = w[1] - w[0];
        t.insert(Segment {
            word: word.child(*k),
            base: seg.point_at(pos),
            length: len,
            scale: 1.0,
            raw_length: len,
        });
    }
    Ok(t)
}

/// Points of the Poisson process of intensity `t dt` on `(0, inf)`:
/// `C_0 = sqrt(-2 ln U)`, `C_{j+1} = sqrt(C_j^2 - 2 ln U)`.
pub fn rayleigh_cuts<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let mut c = Vec::with_capacity(k + 1);
    let mut s = 0.0f64;
    for _ in 0..=k {
        let u: f64 = 1.0 - rng.random::<f64>();
        s += -2.0 * u.ln();
        c.push(s.sqrt());
    }
    c
}

/// Aldous' line breaking with `k` attachment steps (`k + 1` branches).
pub fn line_breaking_aldous<R: Rng + ?Sized>(k: usize, rng: &mut R) -> EmbeddedTree {
    let cuts = rayleigh_cuts(k, rng);
    line_breaking(&cuts, 0.5, rng).expect("rayleigh cuts are increasing")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::samplers::{deterministic_string, symmetric_binary};

    fn binary_cfg(depth: usize) -> BuildConfig {
        BuildConfig::new(StringSampler::deterministic(symmetric_binary()), 1.0, depth, 2)
    }

    #[test]
    fn depth_zero_is_single_segment() {
        let t = build_recursive(&binary_cfg(0), &mut stream(0, 0)).unwrap();
        assert_eq!(t.tree().len(), 1);
        assert!((t.measure().total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn binary_depth_two() {
        let t = build_recursive(&binary_cfg(2), &mut stream(0, 0)).unwrap();
        let tree = t.tree();
        assert_eq!(tree.len(), 7);
        let mut scales: Vec<f64> = tree.segments().map(|s| s.scale).collect();
        scales.sort_by(f64::total_cmp);
        assert_eq!(scales, vec![0.25, 0.25, 0.25, 0.25, 0.5, 0.5, 1.0]);
        assert!((tree.height() - 1.75).abs() < 1e-15);
        assert_eq!(t.heights_by_depth(), vec![1.0, 1.5, 1.75]);
        assert!(tree.validate().is_empty());
        for m in 0..=2 {
            assert_eq!(t.measure_at(m).total_mass(), 1.0);
            assert_eq!(t.tree_at(m).height(), t.heights_by_depth()[m]);
        }
    }

    #[test]
    fn nested_gaps_match_snapshots() {
        let t = build_recursive(&binary_cfg(4), &mut stream(0, 0)).unwrap();
        let gaps = t.nested_gaps(4);
        assert_eq!(gaps.len(), 4);
        assert!((gaps[0] - (0.5 + 0.25 + 0.125 + 0.0625)).abs() < 1e-15);
        assert!(gaps.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn random_build_is_valid_and_conserves_mass() {
        let cfg = BuildConfig::new(StringSampler::BetaBeta { beta: 0.5 }, 0.5, 3, 10);
        let t = build_recursive(&cfg, &mut stream(4, 0)).unwrap();
        assert!(t.tree().validate().is_empty());
        for m in 0..=3 {
            assert!((t.measure_at(m).accounted_mass() - 1.0).abs() < 1e-12);
            assert!(t.tree_at(m).is_submap_of(&t.tree_at(m + 1)));
        }
        for (i, n) in t.nodes.iter().enumerate().skip(1) {
            let p = &t.nodes[n.parent.unwrap()];
            assert_eq!(n.scale, p.scale * p.string.atoms[n.atom].p);
            let _ = i;
        }
    }

    #[test]
    fn segment_cap_returns_partial() {
        let mut cfg = binary_cfg(10);
        cfg.segment_cap = 20;
        match build_recursive(&cfg, &mut stream(0, 0)) {
            Err(Error::SegmentCap { partial, built, .. }) => {
                assert_eq!(built, 20);
                assert_eq!(partial.nodes.len(), 20);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn pruning_keeps_unexpanded_mass() {
        let mut cfg = binary_cfg(5);
        cfg.min_scale = 0.1;
        let t = build_recursive(&cfg, &mut stream(0, 0)).unwrap();
        assert!(t.is_pruned());
        assert_eq!(t.max_scale_by_gen()[4], 0.0);
        assert!((t.measure_at(5).total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bead_split_first_step() {
        let s = StringSampler::deterministic(symmetric_binary());
        let run = bead_splitting_run(&s, 1.0, 2, 1, &mut stream(0, 0)).unwrap();
        assert_eq!(run.len(), 2);
        assert_eq!(run[0].0.len(), 1);
        let (t, m) = &run[1];
        assert!((t.total_length() - 1.5).abs() < 1e-15);
        assert_eq!(m.atoms.len(), 3);
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_only_cannot_split() {
        let u = deterministic_string(1.0, &[], Some(crate::measure::Cdf::uniform(1.0, 1.0))).unwrap();
        let s = StringSampler::deterministic(u);
        assert!(matches!(
            multifurcating_bead_splitting(&s, 0.5, 2, 1, &mut stream(0, 0)),
            Err(Error::CannotSplit(_))
        ));
        assert!(multifurcating_bead_splitting(&s, 0.5, 2, 0, &mut stream(0, 0)).is_ok());
        assert!(bead_splitting_run(&s, 0.5, 2, 0, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn embedded_split_matches_trace_geometry() {
        let cfg = binary_cfg(2);
        let run = bead_splitting_embedded(&cfg, 5, &mut stream(1, 0)).unwrap();
        for (t, m) in &run {
            assert!(t.validate().is_empty());
            assert!((m.total_mass() - 1.0).abs() < 1e-15);
        }
        assert_eq!(run[5].0.len(), 6);
    }

    #[test]
    fn line_breaking_counts() {
        let mut r = stream(2, 0);
        for k in 0..6 {
            let cuts = rayleigh_cuts(k, &mut stream(2, k as u64));
            let t = line_breaking(&cuts, 0.5, &mut r).unwrap();
            assert_eq!(t.len(), k + 1);
            assert!((t.total_length() - cuts[k]).abs() < 1e-12);
            assert!(t.validate().is_empty());
        }
    }

    #[test]
    fn degrees_of_shared_location() {
        let s = deterministic_string(1.0, &[(0.5, 0.5), (0.5, 0.5)], None).unwrap();
        let tr = BuildConfig::new(StringSampler::deterministic(s), 1.0, 1, 2);
        let t = build_recursive(&tr, &mut stream(0, 0)).unwrap().tree();
        let d = vertex_degrees(&t);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].1, 4);
    }
}

//! The grafting map: attach rescaled trees at the atoms of a string.
//!
//! [`graft`] works on embedded trees. [`AbstractTree`] keeps the same object
//! as a recursive structure and computes distances by the four-case formula
//! of the grafted metric, without coordinates; it serves as the reference
//! for the embedded form.

use rand::Rng;

use crate::error::{Error, Result};
use crate::point::SparsePoint;
use crate::samplers::GeneralizedString;
use crate::tree::{EmbeddedTree, Segment};
use crate::word::UlamWord;

/// A string and the trees to graft on its atoms (index-aligned; missing
/// children are point trees).
#[derive(Clone, Debug)]
pub struct GraftInput {
    pub string: GeneralizedString,
    pub children: Vec<EmbeddedTree>,
    pub beta: f64,
}

/// Every word `w` becomes `j w`, in segment names and coordinate keys.
pub fn shift_subtree(j: u32, t: &EmbeddedTree) -> EmbeddedTree {
    EmbeddedTree::from_segments(
        t.beta,
        t.segments().map(|s| Segment {
            word: s.word.shifted(j),
            base: s.base.map_keys(|w| w.shifted(j)),
            length: s.length,
            scale: s.scale,
            raw_length: s.raw_length,
        }),
    )
}

/// Distances multiplied by `c^beta`, masses (scales) by `c`.
pub fn scale_tree(c: f64, t: &EmbeddedTree, beta: f64) -> EmbeddedTree {
    let f = c.powf(beta);
    EmbeddedTree::from_segments(
        beta,
        t.segments().map(|s| Segment {
            word: s.word.clone(),
            base: s.base.scaled(f),
            length: s.length * f,
            scale: s.scale * c,
            raw_length: s.raw_length,
        }),
    )
}

fn translate_root_axis(t: &EmbeddedTree, x: f64) -> EmbeddedTree {
    let root = UlamWord::root();
    EmbeddedTree::from_segments(
        t.beta,
        t.segments().map(|s| Segment {
            base: s.base.plus_axis(&root, x),
            ..s.clone()
        }),
    )
}

/// Embedded grafting: the segment `[0, ell] e_root` plus, for each atom `i`
/// with positive mass, child `i` scaled by `p_i`, shifted into the
/// `i`-subtree and translated to `x_i e_root`.
pub fn graft(g: &GraftInput) -> Result<EmbeddedTree> {
    let s = &g.string;
    if g.children.len() > s.atoms.len() {
        return Err(Error::Graft(format!(
            "{} children for {} atoms",
            g.children.len(),
            s.atoms.len()
        )));
    }
    let mut out = EmbeddedTree::single(g.beta, s.ell);
    for (i, child) in g.children.iter().enumerate() {
        let a = s.atoms[i];
        if a.p <= 0.0 || child.is_empty() {
            continue;
        }
        let h = a.p.powf(g.beta) * child.height();
        if !h.is_finite() {
            return Err(Error::Graft(format!("non-finite scaled height at atom {}", i + 1)));
        }
        let placed = translate_root_axis(&shift_subtree(i as u32 + 1, &scale_tree(a.p, child, g.beta)), a.x);
        for seg in placed.segments() {
            out.insert(seg.clone());
        }
    }
    Ok(out)
}

/// A grafted tree kept as a recursive structure.
#[derive(Clone, Debug)]
pub struct AbstractTree {
    pub string: GeneralizedString,
    /// Index-aligned with `string.atoms`; `None` is the point tree.
    pub children: Vec<Option<AbstractTree>>,
}

/// A point of an [`AbstractTree`]: the chain of atom indices (0-based) down
/// to a string, then a position in that string's own length units.
#[derive(Clone, Debug, PartialEq)]
pub struct AbstractPoint {
    pub path: Vec<usize>,
    pub t: f64,
}

impl AbstractPoint {
    pub fn root() -> Self {
        AbstractPoint {
            path: Vec::new(),
            t: 0.0,
        }
    }

    fn tail(&self) -> AbstractPoint {
        AbstractPoint {
            path: self.path[1..].to_vec(),
            t: self.t,
        }
    }
}

impl AbstractTree {
    pub fn leaf(string: GeneralizedString) -> Self {
        let n = string.atoms.len();
        AbstractTree {
            string,
            children: vec![None; n],
        }
    }

    fn child(&self, j: usize) -> &AbstractTree {
        self.children[j].as_ref().expect("point lies in a missing child")
    }

    /// Distance by the grafted-metric case analysis.
    pub fn distance(&self, beta: f64, a: &AbstractPoint, b: &AbstractPoint) -> f64 {
        let atoms = &self.string.atoms;
        match (a.path.first(), b.path.first()) {
            (None, None) => (a.t - b.t).abs(),
            (Some(&i), Some(&j)) if i == j => {
                atoms[i].p.powf(beta) * self.child(i).distance(beta, &a.tail(), &b.tail())
            }
            (None, Some(&j)) => {
                (a.t - atoms[j].x).abs()
                    + atoms[j].p.powf(beta) * self.child(j).distance(beta, &AbstractPoint::root(), &b.tail())
            }
            (Some(_), None) => self.distance(beta, b, a),
            (Some(&i), Some(&j)) => {
                atoms[i].p.powf(beta) * self.child(i).distance(beta, &a.tail(), &AbstractPoint::root())
                    + (atoms[i].x - atoms[j].x).abs()
                    + atoms[j].p.powf(beta) * self.child(j).distance(beta, &AbstractPoint::root(), &b.tail())
            }
        }
    }

    /// Height by the recursion `max(ell, max_i x_i + p_i^beta ht(child_i))`.
    pub fn height(&self, beta: f64) -> f64 {
        let mut h = self.string.ell;
        for (a, c) in self.string.atoms.iter().zip(&self.children) {
            if let Some(c) = c {
                if a.p > 0.0 {
                    h = h.max(a.x + a.p.powf(beta) * c.height(beta));
                }
            }
        }
        h
    }

    /// The embedded tree, by recursive [`graft`].
    pub fn embed(&self, beta: f64) -> Result<EmbeddedTree> {
        let mut children = Vec::new();
        for c in &self.children {
            children.push(match c {
                Some(c) => c.embed(beta)?,
                None => EmbeddedTree::point(beta),
            });
        }
        while children.last().is_some_and(|c| c.is_empty()) {
            children.pop();
        }
        graft(&GraftInput {
            string: self.string.clone(),
            children,
            beta,
        })
    }

    /// Word of the segment carrying the string at `path`.
    pub fn word_of(path: &[usize]) -> UlamWord {
        let mut w = UlamWord::root();
        for &j in path {
            w = w.child(j as u32 + 1);
        }
        w
    }

    /// Embedded coordinates of `a`, read off the segment of an embedded copy.
    pub fn locate(&self, embedded: &EmbeddedTree, a: &AbstractPoint) -> Option<SparsePoint> {
        let seg = embedded.get(&Self::word_of(&a.path))?;
        Some(seg.point_at(a.t * seg.length / seg.raw_length))
    }

    /// Paths of all strings reachable through positive-mass atoms.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for (j, c) in self.children.iter().enumerate() {
            if let Some(c) = c {
                if self.string.atoms[j].p > 0.0 {
                    for mut p in c.paths() {
                        p.insert(0, j);
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    pub fn string_at(&self, path: &[usize]) -> &GeneralizedString {
        match path.first() {
            None => &self.string,
            Some(&j) => self.child(j).string_at(&path[1..]),
        }
    }

    /// A random point: uniform string among reachable ones, then uniform position.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> AbstractPoint {
        let paths = self.paths();
        let path = paths[rng.random_range(0..paths.len())].clone();
        let ell = self.string_at(&path).ell;
        AbstractPoint {
            path,
            t: rng.random::<f64>() * ell,
        }
    }

    /// A random tree of depth at most `depth`: strings with up to four atoms
    /// (masses not necessarily summing to one, occasional zero masses) and
    /// each child present with probability 0.7.
    pub fn random<R: Rng + ?Sized>(depth: usize, rng: &mut R) -> AbstractTree {
        let ell = rng.random_range(0.2..2.0);
        let k = rng.random_range(0..=4usize);
        let atoms: Vec<(f64, f64)> = (0..k)
            .map(|_| {
                let p = if rng.random::<f64>() < 0.1 {
                    0.0
                } else {
                    rng.random_range(0.01..0.9)
                };
                (rng.random::<f64>() * ell, p)
            })
            .collect();
        let string = crate::samplers::deterministic_string(ell, &atoms, None).expect("valid random string");
        let children = (0..k)
            .map(|_| {
                if depth > 0 && rng.random::<f64>() < 0.7 {
                    Some(AbstractTree::random(depth - 1, rng))
                } else {
                    None
                }
            })
            .collect();
        AbstractTree { string, children }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::l1_distance;
    use crate::rng::stream;
    use crate::samplers::deterministic_string;

    fn unit() -> EmbeddedTree {
        EmbeddedTree::single(1.0, 1.0)
    }

    #[test]
    fn empty_graft_is_bare_segment() {
        let s = deterministic_string(2.0, &[], None).unwrap();
        let t = graft(&GraftInput {
            string: s,
            children: vec![],
            beta: 0.5,
        })
        .unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.height(), 2.0);
    }

    #[test]
    fn graft_single_child() {
        let s = deterministic_string(2.0, &[(1.0, 0.25)], None).unwrap();
        let child = EmbeddedTree::single(0.5, 1.0);
        let t = graft(&GraftInput {
            string: s,
            children: vec![child],
            beta: 0.5,
        })
        .unwrap();
        let leaf = t.get(&UlamWord::from(&[1u32][..])).unwrap().tip();
        assert!((leaf.norm() - 1.5).abs() < 1e-15);
        assert_eq!(t.height(), 2.0);
        assert!(t.validate().is_empty());
    }

    #[test]
    fn graft_two_children_cross_distance() {
        let s = deterministic_string(2.0, &[(1.0, 0.5), (2.0, 0.5)], None).unwrap();
        let t = graft(&GraftInput {
            string: s,
            children: vec![unit(), unit()],
            beta: 1.0,
        })
        .unwrap();
        let a = t.get(&UlamWord::from(&[1u32][..])).unwrap().tip();
        let b = t.get(&UlamWord::from(&[2u32][..])).unwrap().tip();
        assert!((l1_distance(&a, &b) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn graft_rejects_extra_children() {
        let s = deterministic_string(1.0, &[(1.0, 1.0)], None).unwrap();
        assert!(graft(&GraftInput {
            string: s,
            children: vec![unit(), unit()],
            beta: 1.0,
        })
        .is_err());
    }

    #[test]
    fn zero_mass_atoms_are_skipped() {
        let s = deterministic_string(1.0, &[(0.5, 1.0), (0.2, 0.0)], None).unwrap();
        let t = graft(&GraftInput {
            string: s,
            children: vec![unit(), unit()],
            beta: 1.0,
        })
        .unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn shift_and_scale_examples() {
        let p = EmbeddedTree::point(1.0);
        assert!(shift_subtree(3, &p).is_empty());
        let s = shift_subtree(3, &unit());
        assert!(s.contains(&UlamWord::from(&[3u32][..])));
        let c = scale_tree(0.25, &EmbeddedTree::single(0.5, 1.0), 0.5);
        assert_eq!(c.height(), 0.5);
        assert!(c.validate().is_empty());
        assert_eq!(scale_tree(1.0, &unit(), 1.0), unit());
    }

    #[test]
    fn abstract_and_embedded_agree() {
        let mut r = stream(17, 0);
        for _ in 0..50 {
            let a = AbstractTree::random(3, &mut r);
            let beta = r.random_range(0.3..1.0);
            let e = a.embed(beta).unwrap();
            assert!(e.validate().is_empty(), "{:?}", e.validate());
            assert!((e.height() - a.height(beta)).abs() < 1e-12 * (1.0 + e.height()));
            for _ in 0..10 {
                let x = a.sample_point(&mut r);
                let y = a.sample_point(&mut r);
                let d_abs = a.distance(beta, &x, &y);
                let d_emb = l1_distance(&a.locate(&e, &x).unwrap(), &a.locate(&e, &y).unwrap());
                assert!((d_abs - d_emb).abs() <= 1e-9 * d_abs.max(1e-300) + 1e-15);
            }
        }
    }
}

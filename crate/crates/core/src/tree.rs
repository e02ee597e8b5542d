//! Rooted R-trees embedded in sparse `l1` coordinates as axis-aligned segments.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{l1_distance, SparsePoint};
use crate::word::UlamWord;

/// Segment `{base + t e_word : 0 <= t <= length}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub word: UlamWord,
    pub base: SparsePoint,
    pub length: f64,
    pub scale: f64,
    pub raw_length: f64,
}

impl Segment {
    pub fn point_at(&self, t: f64) -> SparsePoint {
        self.base.plus_axis(&self.word, t)
    }

    pub fn tip(&self) -> SparsePoint {
        self.point_at(self.length)
    }

    /// Exact `l1` distance from `p` to this segment.
    pub fn distance_to(&self, p: &SparsePoint) -> f64 {
        let off = p.get(&self.word) - self.base.get(&self.word);
        let to_base = l1_distance(p, &self.base);
        let along = off.clamp(0.0, self.length);
        (to_base - off.abs() + (off - along).abs()).max(0.0)
    }
}

/// One invariant violation found by [`EmbeddedTree::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Orphan(UlamWord),
    OffParent { word: UlamWord, gap: f64 },
    RootBase { gap: f64 },
    LengthScale { word: UlamWord, length: f64, expected: f64 },
    NonPositive(UlamWord),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedTree {
    pub beta: f64,
    segments: BTreeMap<UlamWord, Segment>,
}

#[derive(Serialize, Deserialize)]
struct TreeJson {
    beta: f64,
    segments: Vec<Segment>,
}

impl EmbeddedTree {
    /// The one-point tree (the root alone).
    pub fn point(beta: f64) -> Self {
        EmbeddedTree {
            beta,
            segments: BTreeMap::new(),
        }
    }

    /// A single root segment `[0, length] e_root` with unit scale.
    pub fn single(beta: f64, length: f64) -> Self {
        let mut t = EmbeddedTree::point(beta);
        t.insert(Segment {
            word: UlamWord::root(),
            base: SparsePoint::zero(),
            length,
            scale: 1.0,
            raw_length: length,
        });
        t
    }

    pub fn from_segments(beta: f64, segs: impl IntoIterator<Item = Segment>) -> Self {
        let mut t = EmbeddedTree::point(beta);
        for s in segs {
            t.insert(s);
        }
        t
    }

    pub fn insert(&mut self, s: Segment) {
        self.segments.insert(s.word.clone(), s);
    }

    pub fn remove(&mut self, w: &UlamWord) -> Option<Segment> {
        self.segments.remove(w)
    }

    pub fn get(&self, w: &UlamWord) -> Option<&Segment> {
        self.segments.get(w)
    }

    pub fn contains(&self, w: &UlamWord) -> bool {
        self.segments.contains_key(w)
    }

    /// Segments in canonical word order.
    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.values()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.values().map(|s| s.length).sum()
    }

    /// Max over segments of `|base|_1 + length`; zero for the point tree.
    pub fn height(&self) -> f64 {
        self.segments
            .values()
            .map(|s| s.base.norm() + s.length)
            .fold(0.0, f64::max)
    }

    /// Exact `l1` distance from `p` to the skeleton.
    pub fn distance_to(&self, p: &SparsePoint) -> f64 {
        if self.segments.is_empty() {
            return p.norm();
        }
        self.segments
            .values()
            .map(|s| s.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn point_on_tree(&self, p: &SparsePoint, tol: f64) -> bool {
        self.distance_to(p) <= tol
    }

    /// True iff every word of `self` is a word of `other` with an identical segment.
    pub fn is_submap_of(&self, other: &EmbeddedTree) -> bool {
        self.segments
            .iter()
            .all(|(w, s)| other.segments.get(w).is_some_and(|o| o == s))
    }

    /// Invariant violations, with relative tolerance `1e-9`.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (w, s) in &self.segments {
            if !(s.length > 0.0 && s.scale > 0.0 && s.raw_length > 0.0) || !s.base.is_finite() {
                out.push(Violation::NonPositive(w.clone()));
            }
            let expected = s.scale.powf(self.beta) * s.raw_length;
            if (s.length - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                out.push(Violation::LengthScale {
                    word: w.clone(),
                    length: s.length,
                    expected,
                });
            }
            match w.parent() {
                None => {
                    let gap = s.base.norm();
                    if gap > 1e-9 {
                        out.push(Violation::RootBase { gap });
                    }
                }
                Some(pw) => match self.segments.get(&pw) {
                    None => out.push(Violation::Orphan(w.clone())),
                    Some(ps) => {
                        let gap = ps.distance_to(&s.base);
                        if gap > 1e-9 * (1.0 + s.base.norm()) {
                            out.push(Violation::OffParent {
                                word: w.clone(),
                                gap,
                            });
                        }
                    }
                },
            }
        }
        out
    }

    /// Length-uniform point on the skeleton, as `(word, t)`.
    pub fn sample_location<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(UlamWord, f64)> {
        let total = self.total_length();
        if !(total > 0.0) {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for s in self.segments.values() {
            if u < s.length {
                return Some((s.word.clone(), u));
            }
            u -= s.length;
            last = Some(s);
        }
        last.map(|s| (s.word.clone(), s.length))
    }

    pub fn to_json(&self) -> Result<String> {
        let j = TreeJson {
            beta: self.beta,
            segments: self.segments.values().cloned().collect(),
        };
        Ok(serde_json::to_string(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: TreeJson = serde_json::from_str(s)?;
        if !(j.beta > 0.0) {
            return Err(Error::Validation("beta must be positive".into()));
        }
        Ok(EmbeddedTree::from_segments(j.beta, j.segments))
    }
}

impl Serialize for EmbeddedTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TreeJson {
            beta: self.beta,
            segments: self.segments.values().cloned().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EmbeddedTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = TreeJson::deserialize(d)?;
        Ok(EmbeddedTree::from_segments(j.beta, j.segments))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(d: &[u32]) -> UlamWord {
        UlamWord::from(d)
    }

    fn seg(word: UlamWord, base: SparsePoint, length: f64) -> Segment {
        Segment {
            word,
            base,
            length,
            scale: 1.0,
            raw_length: length,
        }
    }

    #[test]
    fn point_on_tree_examples() {
        let t = EmbeddedTree::single(1.0, 2.0);
        assert!(t.point_on_tree(&SparsePoint::axis(w(&[]), 1.0), 0.0));
        assert!(!t.point_on_tree(&SparsePoint::axis(w(&[]), 3.0), 0.0));
        let p = SparsePoint::from_pairs([(w(&[]), 1.0), (w(&[1]), 0.1)]);
        assert!(t.point_on_tree(&p, 0.1 + 1e-15));
        assert!(!t.point_on_tree(&p, 0.09));
    }

    #[test]
    fn height_examples() {
        let mut t = EmbeddedTree::single(1.0, 2.0);
        assert_eq!(t.height(), 2.0);
        t.insert(seg(w(&[1]), SparsePoint::axis(w(&[]), 1.0), 0.5));
        assert_eq!(t.height(), 2.0);
        t.insert(seg(w(&[1]), SparsePoint::axis(w(&[]), 1.0), 1.5));
        assert_eq!(t.height(), 2.5);
    }

    #[test]
    fn validate_examples() {
        let t = EmbeddedTree::single(0.5, 1.0);
        assert!(t.validate().is_empty());
        let mut bad = t.clone();
        bad.insert(seg(
            w(&[1]),
            SparsePoint::from_pairs([(w(&[]), 0.5), (w(&[2]), 0.3)]),
            0.2,
        ));
        let v = bad.validate();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::OffParent { .. }));
        let mut orphan = t.clone();
        orphan.insert(seg(w(&[1, 1]), SparsePoint::axis(w(&[]), 0.5), 0.2));
        assert!(matches!(orphan.validate()[0], Violation::Orphan(_)));
    }

    #[test]
    fn json_roundtrip() {
        let mut t = EmbeddedTree::single(0.5, 2.0);
        t.insert(seg(w(&[1]), SparsePoint::axis(w(&[]), 1.0), 0.5));
        let s = t.to_json().unwrap();
        assert!(s.contains(r#""word":[1]"#));
        assert_eq!(EmbeddedTree::from_json(&s).unwrap(), t);
    }
}

//! Finitely supported points of `l1` over Ulam-Harris words.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::word::UlamWord;

/// A point with finitely many nonzero coordinates, keyed by word.
/// Zero coordinates are never stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparsePoint {
    coords: BTreeMap<UlamWord, f64>,
}

impl SparsePoint {
    pub fn zero() -> Self {
        SparsePoint::default()
    }

    /// `t * e_w`.
    pub fn axis(w: UlamWord, t: f64) -> Self {
        let mut p = SparsePoint::zero();
        p.set(w, t);
        p
    }

    pub fn from_pairs<I: IntoIterator<Item = (UlamWord, f64)>>(pairs: I) -> Self {
        let mut p = SparsePoint::zero();
        for (w, t) in pairs {
            p.add(&w, t);
        }
        p
    }

    pub fn get(&self, w: &UlamWord) -> f64 {
        self.coords.get(w).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, w: UlamWord, t: f64) {
        if t == 0.0 {
            self.coords.remove(&w);
        } else {
            self.coords.insert(w, t);
        }
    }

    pub fn add(&mut self, w: &UlamWord, t: f64) {
        let v = self.get(w) + t;
        self.set(w.clone(), v);
    }

    /// `self + t * e_w` as a new point.
    pub fn plus_axis(&self, w: &UlamWord, t: f64) -> SparsePoint {
        let mut p = self.clone();
        p.add(w, t);
        p
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UlamWord, &f64)> {
        self.coords.iter()
    }

    pub fn support_len(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        self.coords.values().map(|v| v.abs()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.values().all(|v| v.is_finite())
    }

    pub fn map_keys(&self, f: impl Fn(&UlamWord) -> UlamWord) -> SparsePoint {
        SparsePoint::from_pairs(self.coords.iter().map(|(w, v)| (f(w), *v)))
    }

    pub fn scaled(&self, c: f64) -> SparsePoint {
        SparsePoint::from_pairs(self.coords.iter().map(|(w, v)| (w.clone(), v * c)))
    }

    /// Canonical JSON map: encoded word string to coordinate.
    pub fn to_encoded(&self) -> BTreeMap<String, f64> {
        self.coords.iter().map(|(w, v)| (w.encode(), *v)).collect()
    }

    pub fn from_encoded(m: &BTreeMap<String, f64>) -> Result<SparsePoint> {
        let mut p = SparsePoint::zero();
        for (k, v) in m {
            let w: UlamWord = k.parse()?;
            if !v.is_finite() {
                return Err(Error::Validation(format!("non-finite coordinate at {k:?}")));
            }
            p.add(&w, *v);
        }
        Ok(p)
    }
}

/// `sum_w |a_w - b_w|`, by a merge over the two sorted supports.
pub fn l1_distance(a: &SparsePoint, b: &SparsePoint) -> f64 {
    let mut ia = a.coords.iter().peekable();
    let mut ib = b.coords.iter().peekable();
    let mut s = 0.0;
    loop {
        match (ia.peek(), ib.peek()) {
            (None, None) => break,
            (Some((_, va)), None) => {
                s += va.abs();
                ia.next();
            }
            (None, Some((_, vb))) => {
                s += vb.abs();
                ib.next();
            }
            (Some((wa, va)), Some((wb, vb))) => match wa.cmp(wb) {
                std::cmp::Ordering::Less => {
                    s += va.abs();
                    ia.next();
                }
                std::cmp::Ordering::Greater => {
                    s += vb.abs();
                    ib.next();
                }
                std::cmp::Ordering::Equal => {
                    s += (*va - *vb).abs();
                    ia.next();
                    ib.next();
                }
            },
        }
    }
    s
}

impl Serialize for SparsePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_encoded().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SparsePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = BTreeMap::<String, f64>::deserialize(d)?;
        SparsePoint::from_encoded(&m).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(d: &[u32]) -> UlamWord {
        UlamWord::from(d)
    }

    #[test]
    fn distance_examples() {
        let z = SparsePoint::zero();
        assert_eq!(l1_distance(&z, &z), 0.0);
        assert_eq!(l1_distance(&SparsePoint::axis(w(&[]), 2.0), &z), 2.0);
        let a = SparsePoint::from_pairs([(w(&[]), 1.0), (w(&[1]), 0.5)]);
        let b = SparsePoint::axis(w(&[]), 1.5);
        assert!((l1_distance(&a, &b) - 1.0).abs() < 1e-15);
        assert_eq!(l1_distance(&a, &b), l1_distance(&b, &a));
    }

    #[test]
    fn zero_coordinates_are_dropped() {
        let mut p = SparsePoint::axis(w(&[2]), 1.0);
        p.add(&w(&[2]), -1.0);
        assert_eq!(p, SparsePoint::zero());
        assert_eq!(p.support_len(), 0);
    }

    #[test]
    fn json_roundtrip_uses_encoded_keys() {
        let p = SparsePoint::from_pairs([(w(&[]), 1.0), (w(&[1, 2]), 0.25)]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"":1.0,"1.2":0.25}"#);
        let q: SparsePoint = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }
}

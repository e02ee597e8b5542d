//! Ulam-Harris words: finite sequences of positive integers.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A word in the Ulam-Harris tree. The empty word is the root.
///
/// Ordering is by generation first, then lexicographic on digits.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct UlamWord(Vec<u32>);

impl UlamWord {
    pub fn root() -> Self {
        UlamWord(Vec::new())
    }

    pub fn new(digits: Vec<u32>) -> Result<Self> {
        if digits.contains(&0) {
            return Err(Error::Validation(format!(
                "word digits must be >= 1, got {digits:?}"
            )));
        }
        Ok(UlamWord(digits))
    }

    pub fn digits(&self) -> &[u32] {
        &self.0
    }

    pub fn generation(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parent(&self) -> Option<UlamWord> {
        if self.0.is_empty() {
            None
        } else {
            Some(UlamWord(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn last(&self) -> Option<u32> {
        self.0.last().copied()
    }

    /// The word `self j`.
    pub fn child(&self, j: u32) -> UlamWord {
        assert!(j >= 1, "child index must be >= 1");
        let mut d = Vec::with_capacity(self.0.len() + 1);
        d.extend_from_slice(&self.0);
        d.push(j);
        UlamWord(d)
    }

    /// The word `j self`, i.e. the coordinate shift into the `j`-subtree.
    pub fn shifted(&self, j: u32) -> UlamWord {
        assert!(j >= 1, "shift index must be >= 1");
        let mut d = Vec::with_capacity(self.0.len() + 1);
        d.push(j);
        d.extend_from_slice(&self.0);
        UlamWord(d)
    }

    pub fn is_prefix_of(&self, other: &UlamWord) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }

    /// Canonical encoding: digits joined by `.`, root is the empty string.
    pub fn encode(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        parts.join(".")
    }
}

impl Ord for UlamWord {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for UlamWord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for UlamWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            write!(f, "∅")
        } else {
            write!(f, "{}", self.encode())
        }
    }
}

impl fmt::Debug for UlamWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UlamWord({self})")
    }
}

impl FromStr for UlamWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Ok(UlamWord::root());
        }
        let digits = s
            .split('.')
            .map(|p| {
                p.parse::<u32>()
                    .map_err(|_| Error::Validation(format!("bad word encoding {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        UlamWord::new(digits)
    }
}

impl Serialize for UlamWord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for UlamWord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let digits = Vec::<u32>::deserialize(d)?;
        UlamWord::new(digits).map_err(serde::de::Error::custom)
    }
}

impl From<&[u32]> for UlamWord {
    fn from(d: &[u32]) -> Self {
        UlamWord::new(d.to_vec()).expect("word digits must be >= 1")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_generation_first() {
        let a = UlamWord::from(&[5u32][..]);
        let b = UlamWord::from(&[1u32, 1][..]);
        assert!(a < b);
        assert!(UlamWord::root() < a);
        assert!(UlamWord::from(&[1u32, 2][..]) < UlamWord::from(&[2u32, 1][..]));
    }

    #[test]
    fn encode_roundtrip() {
        let w = UlamWord::from(&[3u32, 1, 12][..]);
        assert_eq!(w.encode(), "3.1.12");
        assert_eq!("3.1.12".parse::<UlamWord>().unwrap(), w);
        assert_eq!("".parse::<UlamWord>().unwrap(), UlamWord::root());
        assert!("1.0".parse::<UlamWord>().is_err());
    }

    #[test]
    fn shift_and_child() {
        let w = UlamWord::from(&[2u32][..]);
        assert_eq!(w.child(4).digits(), &[2, 4]);
        assert_eq!(w.shifted(7).digits(), &[7, 2]);
        assert_eq!(w.child(4).parent().unwrap(), w);
        assert!(w.is_prefix_of(&w.child(1)));
        assert!(UlamWord::root().is_prefix_of(&w));
    }
}

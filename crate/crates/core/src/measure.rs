//! Piecewise-linear CDFs and finite measures on embedded trees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::SparsePoint;
use crate::word::UlamWord;

/// A piecewise-linear cumulative mass function on an interval, given by its
/// breakpoints `(x, F(x))`. The first breakpoint carries `F = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cdf {
    points: Vec<(f64, f64)>,
}

impl Cdf {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Validation("cdf needs at least two breakpoints".into()));
        }
        if points[0].1 != 0.0 {
            return Err(Error::Validation("cdf must start at mass 0".into()));
        }
        for w in points.windows(2) {
            if !(w[1].0 >= w[0].0 && w[1].1 >= w[0].1) {
                return Err(Error::Validation(format!(
                    "cdf breakpoints must be nondecreasing: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        if points.iter().any(|(x, f)| !x.is_finite() || !f.is_finite()) {
            return Err(Error::Validation("non-finite cdf breakpoint".into()));
        }
        Ok(Cdf { points })
    }

    /// Uniform mass `mass` on `[0, ell]`.
    pub fn uniform(ell: f64, mass: f64) -> Self {
        Cdf {
            points: vec![(0.0, 0.0), (ell, mass)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn total(&self) -> f64 {
        self.points.last().map(|p| p.1).unwrap_or(0.0)
    }

    pub fn support_max(&self) -> f64 {
        self.points.last().map(|p| p.0).unwrap_or(0.0)
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let pts = &self.points;
        if x <= pts[0].0 {
            return 0.0;
        }
        for w in pts.windows(2) {
            let ((x0, f0), (x1, f1)) = (w[0], w[1]);
            if x <= x1 {
                if x1 == x0 {
                    return f1;
                }
                return f0 + (f1 - f0) * (x - x0) / (x1 - x0);
            }
        }
        self.total()
    }

    /// Smallest `x` with `F(x) >= u`, for `u` in `[0, total]`.
    pub fn inverse(&self, u: f64) -> f64 {
        let pts = &self.points;
        for w in pts.windows(2) {
            let ((x0, f0), (x1, f1)) = (w[0], w[1]);
            if u <= f1 && f1 > f0 {
                return x0 + (x1 - x0) * ((u - f0) / (f1 - f0)).clamp(0.0, 1.0);
            }
        }
        self.support_max()
    }

    /// Image under `x -> shift + scale_x * x` with masses multiplied by `scale_mass`.
    pub fn transformed(&self, shift: f64, scale_x: f64, scale_mass: f64) -> Cdf {
        Cdf {
            points: self
                .points
                .iter()
                .map(|(x, f)| (shift + scale_x * x, f * scale_mass))
                .collect(),
        }
    }

    /// Concatenation of two CDFs with disjoint, ordered supports.
    pub fn concat(&self, other: &Cdf) -> Cdf {
        let base = self.total();
        let mut points = self.points.clone();
        for (x, f) in &other.points {
            points.push((*x, base + f));
        }
        Cdf { points }
    }

    /// Mass binned into cells of width at most `spacing`, each bin placed at
    /// its midpoint. Total mass is preserved exactly up to rounding.
    pub fn discretize(&self, spacing: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for w in self.points.windows(2) {
            let ((x0, f0), (x1, f1)) = (w[0], w[1]);
            let m = f1 - f0;
            if m <= 0.0 {
                continue;
            }
            let len = x1 - x0;
            let k = ((len / spacing).ceil() as usize).max(1);
            let h = len / k as f64;
            for i in 0..k {
                out.push((x0 + (i as f64 + 0.5) * h, m / k as f64));
            }
        }
        out
    }
}

/// Continuous mass carried along one segment of a tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousPart {
    pub word: UlamWord,
    /// Base point of the carrying segment.
    pub base: SparsePoint,
    /// CDF in the segment's own length coordinate.
    pub cdf: Cdf,
}

impl ContinuousPart {
    pub fn total(&self) -> f64 {
        self.cdf.total()
    }

    pub fn point_at(&self, t: f64) -> SparsePoint {
        self.base.plus_axis(&self.word, t)
    }
}

/// A finite measure on an embedded tree: atoms plus segment-supported
/// continuous parts. `deficit` records truncated mass that belongs to the
/// measure's law but has no located support (sampler truncation remainder).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeMeasure {
    pub atoms: Vec<(SparsePoint, f64)>,
    pub continuous: Vec<ContinuousPart>,
    pub deficit: f64,
}

impl TreeMeasure {
    pub fn dirac(p: SparsePoint) -> Self {
        TreeMeasure {
            atoms: vec![(p, 1.0)],
            ..Default::default()
        }
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn continuous_mass(&self) -> f64 {
        self.continuous.iter().map(|c| c.total()).sum()
    }

    /// Mass of the located parts (atoms and continuous parts).
    pub fn total_mass(&self) -> f64 {
        self.atom_mass() + self.continuous_mass()
    }

    /// Located mass plus the recorded deficit.
    pub fn accounted_mass(&self) -> f64 {
        self.total_mass() + self.deficit
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.iter().any(|a| !(a.1 >= 0.0) || !a.1.is_finite()) {
            return Err(Error::Validation("negative or non-finite atom mass".into()));
        }
        if !(self.deficit >= 0.0) {
            return Err(Error::Validation("negative deficit".into()));
        }
        Ok(())
    }

    /// Replaces continuous parts by atoms on a grid of spacing at most
    /// `spacing`. Each atom moves by at most `spacing / 2`.
    pub fn discretized(&self, spacing: f64) -> Vec<(SparsePoint, f64)> {
        let mut out: Vec<(SparsePoint, f64)> =
            self.atoms.iter().filter(|a| a.1 > 0.0).cloned().collect();
        for c in &self.continuous {
            for (t, m) in c.cdf.discretize(spacing) {
                out.push((c.point_at(t), m));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_inverse_and_value() {
        let c = Cdf::new(vec![(0.0, 0.0), (1.0, 0.25), (3.0, 0.75)]).unwrap();
        assert_eq!(c.total(), 0.75);
        assert!((c.value_at(2.0) - 0.5).abs() < 1e-15);
        assert!((c.inverse(0.5) - 2.0).abs() < 1e-15);
        assert!((c.inverse(0.125) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cdf_rejects_decreasing() {
        assert!(Cdf::new(vec![(0.0, 0.0), (1.0, 0.5), (0.5, 0.6)]).is_err());
        assert!(Cdf::new(vec![(0.0, 0.1), (1.0, 0.5)]).is_err());
    }

    #[test]
    fn discretize_preserves_mass() {
        let c = Cdf::uniform(2.0, 0.3);
        let bins = c.discretize(0.15);
        let m: f64 = bins.iter().map(|b| b.1).sum();
        assert!((m - 0.3).abs() < 1e-14);
        assert!(bins.len() >= 14);
    }
}

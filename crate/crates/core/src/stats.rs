//! Small statistics helpers: running estimates, regression, KS test, bootstrap.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub const Z_CI: f64 = 3.0;

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                se: f64::NAN,
                n: 0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate { mean, se, n }
    }

    pub fn exact(v: f64) -> Estimate {
        Estimate {
            mean: v,
            se: 0.0,
            n: 1,
        }
    }

    /// `mean -/+ Z_CI * se`.
    pub fn ci(&self) -> (f64, f64) {
        (self.mean - Z_CI * self.se, self.mean + Z_CI * self.se)
    }

    pub fn lo(&self) -> f64 {
        self.ci().0
    }

    pub fn hi(&self) -> f64 {
        self.ci().1
    }

    pub fn contains(&self, v: f64) -> bool {
        let (lo, hi) = self.ci();
        lo <= v && v <= hi
    }

    /// Delta-method estimate of `mean^(1/p)`.
    pub fn root(&self, p: f64) -> Estimate {
        let m = self.mean.max(0.0);
        let v = m.powf(1.0 / p);
        let d = if m > 0.0 { v / (p * m) } else { 0.0 };
        Estimate {
            mean: v,
            se: d * self.se,
            n: self.n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope (zero for exact fits or two points).
    pub slope_se: f64,
}

/// Ordinary least squares of `y` on `x`. Returns `None` for fewer than two
/// points or constant `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if n > 2 {
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(LinearFit {
        slope,
        intercept,
        r2,
        slope_se,
    })
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    (d, kolmogorov_q(lambda))
}

/// Complementary Kolmogorov distribution `Q(l) = 2 sum (-1)^(k-1) exp(-2 k^2 l^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Percentile bootstrap interval for a statistic of the sample.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    xs: &[f64],
    stat: impl Fn(&[f64]) -> f64,
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> (f64, f64) {
    let n = xs.len();
    let mut vals = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; n];
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = xs[rng.random_range(0..n)];
        }
        vals.push(stat(&buf));
    }
    vals.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    let lo = vals[((a * resamples as f64) as usize).min(resamples - 1)];
    let hi = vals[(((1.0 - a) * resamples as f64) as usize).min(resamples - 1)];
    (lo, hi)
}

/// Hill estimator of the tail index from the `k` largest values.
pub fn hill_tail_index(xs: &[f64], k: usize) -> Option<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| *x > 0.0).collect();
    if v.len() <= k || k < 2 {
        return None;
    }
    v.sort_by(|a, b| b.total_cmp(a));
    let xk = v[k];
    let h = v[..k].iter().map(|x| (x / xk).ln()).sum::<f64>() / k as f64;
    if h > 0.0 {
        Some(1.0 / h)
    } else {
        None
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn estimate_basics() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0]);
        assert_eq!(e.mean, 2.0);
        assert!((e.se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(e.contains(2.5));
    }

    #[test]
    fn linear_fit_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let mut r = stream(1, 0);
        let a: Vec<f64> = (0..2000).map(|_| r.random::<f64>()).collect();
        let b: Vec<f64> = (0..2000).map(|_| r.random::<f64>()).collect();
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample(&a, &b).1 > 0.01);
        assert!(ks_two_sample(&a, &c).1 < 1e-6);
        assert_eq!(ks_two_sample(&a, &a).0, 0.0);
    }

    #[test]
    fn kolmogorov_known_value() {
        // Q(1.36) is the classical 5% critical point
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn hill_on_pareto() {
        let mut r = stream(2, 0);
        let xs: Vec<f64> = (0..20000)
            .map(|_| (1.0 - r.random::<f64>()).powf(-1.0 / 3.0))
            .collect();
        let a = hill_tail_index(&xs, 2000).unwrap();
        assert!((a - 3.0).abs() < 0.3, "{a}");
    }
}

//! Growth fragmentations: the cumulant `kappa`, the Laplace exponent `psi`,
//! the `kappa_theta` family, Lamperti-transformed cell paths and the strings
//! read off their negative jumps.
//!
//! Jumps of `Y` are compensated by `q (e^y - 1)`, so
//! `psi(q) = -k + b q + sigma2 q^2 / 2 + int (e^(qy) - 1 - q (e^y - 1)) nu(dy)`
//! and `kappa = psi + int_(y<0) (1 - e^y)^q nu(dy)`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::builder::{build_recursive, BuildConfig, BuildTrace};
use crate::error::{param, Error, Result};
use crate::samplers::{Atom, GeneralizedString, StringKind, StringSampler, TailPart};
use crate::stats::gamma;

/// Value of a numerically integrated quantity with its error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadValue {
    pub value: f64,
    pub error: f64,
}

/// Lévy measure of the log-size process `Y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum JumpMeasure {
    None,
    /// Push-forward under `log` of the density on `(1/2, inf)`
    /// `Gamma(theta+1)/pi [x^(-theta-1) (1-x)^(-theta-1) 1{x<1}
    ///  + sin(pi(theta-1/2)) x^(-theta-1) (x-1)^(-theta-1) 1{x>1}]`.
    NuTheta { theta: f64 },
    /// Finitely many jump sizes `y` with rates.
    Atoms { atoms: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevyCharacteristics {
    pub killing: f64,
    pub drift: f64,
    pub sigma2: f64,
    pub nu: JumpMeasure,
}

/// `sin(pi x)` with exact zeros at integers and exact values at half-integers.
pub fn sin_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        0.0
    } else if r == 0.5 {
        1.0
    } else if r == 1.5 {
        -1.0
    } else {
        (PI * r).sin()
    }
}

/// `cos(pi x)` with exact zeros at half-integers.
pub fn cos_pi(x: f64) -> f64 {
    sin_pi(x + 0.5)
}

/// `kappa_theta(q) = cos(pi(q-theta)) / sin(pi(q-2theta)) * Gamma(q-theta) / Gamma(q-2theta)`,
/// evaluated as `cos(pi(q-theta)) Gamma(q-theta) Gamma(1-q+2theta) / pi`
/// by the reflection formula, which has no poles inside the domain.
pub fn kappa_theta(theta: f64, q: f64) -> Result<f64> {
    if !(theta > 0.5 && theta <= 1.5) {
        return Err(param(format!("theta must lie in (1/2, 3/2], got {theta}")));
    }
    let tol = 1e-12;
    if !(q > theta + tol && q < 2.0 * theta + 1.0 - tol) {
        return Err(Error::Domain(format!(
            "q = {q} outside ({theta}, {})",
            2.0 * theta + 1.0
        )));
    }
    Ok(cos_pi(q - theta) * gamma(q - theta) * gamma(1.0 - q + 2.0 * theta) / PI)
}

/// `((1+u)^q - 1 - q u) / u^2`, accurate for small `u`.
fn h2(q: f64, u: f64) -> f64 {
    if u.abs() < 0.1 {
        let mut c = q * (q - 1.0) / 2.0;
        let mut s = c;
        let mut upow = 1.0;
        for k in 3..60 {
            c *= (q - (k as f64 - 1.0)) / k as f64;
            upow *= u;
            let t = c * upow;
            s += t;
            if t.abs() <= 1e-17 * s.abs() {
                break;
            }
        }
        s
    } else {
        ((1.0 + u).powf(q) - 1.0 - q * u) / (u * u)
    }
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

const QUAD_TOL: f64 = 1e-11;

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> QuadValue {
    let o = quadrature::integrate(|x| finite_or_zero(f(x)), a, b, QUAD_TOL);
    QuadValue {
        value: o.integral,
        error: o.error_estimate,
    }
}

/// `int_0^b f`, for `f(u)` behaving like `u^alpha` (`alpha > -1`) near zero:
/// the substitution `u = w^m` with `m (alpha + 1) >= 1` removes the singularity.
fn integrate_from_zero(f: impl Fn(f64) -> f64, b: f64, alpha: f64) -> QuadValue {
    let m = if alpha >= 0.0 {
        1.0
    } else {
        (1.0 / (alpha + 1.0)).ceil().min(200.0)
    };
    if m == 1.0 {
        return integrate(f, 0.0, b);
    }
    let top = b.powf(1.0 / m);
    integrate(|w: f64| f(w.powf(m)) * m * w.powf(m - 1.0), 0.0, top)
}

/// `int_0^inf f`, with `f(u) ~ u^alpha0` near zero and `f(u) ~ u^alpha_inf`
/// at infinity (`alpha_inf < -1`); the tail uses `v = 1/u`.
fn integrate_half_line(f: impl Fn(f64) -> f64 + Copy, alpha0: f64, alpha_inf: f64) -> QuadValue {
    let head = integrate_from_zero(f, 1.0, alpha0);
    let tail = integrate_from_zero(move |v: f64| f(1.0 / v) / (v * v), 1.0, -alpha_inf - 2.0);
    head.plus(tail)
}

impl QuadValue {
    fn plus(self, o: QuadValue) -> QuadValue {
        QuadValue {
            value: self.value + o.value,
            error: self.error + o.error,
        }
    }
}

#[derive(Clone, Copy)]
struct NuThetaDensity {
    theta: f64,
    c: f64,
    s: f64,
}

impl NuThetaDensity {
    fn new(theta: f64) -> Self {
        NuThetaDensity {
            theta,
            c: gamma(theta + 1.0) / PI,
            s: sin_pi(theta - 0.5),
        }
    }

    /// Density in `u = 1 - x` on `(0, 1/2)`, without the `u^(-theta-1)` factor.
    fn lower_core(&self, u: f64) -> f64 {
        self.c * (1.0 - u).powf(-self.theta - 1.0)
    }

    /// Density in `u = x - 1` on `(0, inf)`, without the `u^(-theta-1)` factor.
    fn upper_core(&self, u: f64) -> f64 {
        self.c * self.s * (1.0 + u).powf(-self.theta - 1.0)
    }

    fn lower_density(&self, u: f64) -> f64 {
        self.lower_core(u) * u.powf(-self.theta - 1.0)
    }

    fn upper_density(&self, u: f64) -> f64 {
        self.upper_core(u) * u.powf(-self.theta - 1.0)
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.5 && theta <= 1.5) {
        return Err(param(format!("theta must lie in (1/2, 3/2], got {theta}")));
    }
    Ok(())
}

/// Jump part of `psi`, plus the daughter term of `kappa` when `with_daughters`.
fn jump_integral(nu: &JumpMeasure, q: f64, with_daughters: bool) -> Result<QuadValue> {
    match nu {
        JumpMeasure::None => Ok(QuadValue {
            value: 0.0,
            error: 0.0,
        }),
        JumpMeasure::Atoms { atoms } => {
            let mut v = 0.0;
            for &(y, rate) in atoms {
                let e = y.exp();
                v += rate * ((q * y).exp() - 1.0 - q * (e - 1.0));
                if with_daughters && y < 0.0 {
                    v += rate * (1.0 - e).powf(q);
                }
            }
            Ok(QuadValue { value: v, error: 0.0 })
        }
        JumpMeasure::NuTheta { theta } => {
            check_theta(*theta)?;
            let d = NuThetaDensity::new(*theta);
            let th = *theta;
            if with_daughters && q <= th {
                return Err(Error::Divergence(format!(
                    "daughter term (1-x)^q against (1-x)^(-theta-1) diverges at x=1 for q={q} <= theta={th}"
                )));
            }
            if d.s != 0.0 && q >= 2.0 * th + 1.0 {
                return Err(Error::Divergence(format!(
                    "x^q against x^(-2theta-2) diverges at infinity for q={q} >= 2theta+1={}",
                    2.0 * th + 1.0
                )));
            }
            let alpha = if with_daughters {
                (1.0 - th).min(q - th - 1.0)
            } else {
                1.0 - th
            };
            let lower = integrate_from_zero(
                |u| {
                    let core = d.lower_core(u);
                    let mut v = h2(q, -u) * u.powf(1.0 - th);
                    if with_daughters {
                        v += u.powf(q - th - 1.0);
                    }
                    core * v
                },
                0.5,
                alpha,
            );
            let upper = if d.s == 0.0 {
                QuadValue {
                    value: 0.0,
                    error: 0.0,
                }
            } else {
                integrate_half_line(
                    move |u| d.upper_core(u) * h2(q, u) * u.powf(1.0 - th),
                    1.0 - th,
                    q - 2.0 * th - 2.0,
                )
            };
            Ok(lower.plus(upper))
        }
    }
}

impl LevyCharacteristics {
    pub fn drift_only(b: f64) -> Self {
        LevyCharacteristics {
            killing: 0.0,
            drift: b,
            sigma2: 0.0,
            nu: JumpMeasure::None,
        }
    }

    pub fn brownian_drift(b: f64, sigma2: f64) -> Self {
        LevyCharacteristics {
            killing: 0.0,
            drift: b,
            sigma2,
            nu: JumpMeasure::None,
        }
    }

    /// The characteristics behind `kappa_theta`: no killing, no Gaussian part,
    /// jump measure `nu_theta`, and the drift that makes `kappa` equal the
    /// closed form. The drift is not given in closed form; it is fitted at
    /// `q0 = 2 theta + 1/2` as `(kappa_theta(q0) - jump integral(q0)) / q0`.
    pub fn kappa_theta_preset(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        let q0 = 2.0 * theta + 0.5;
        let nu = JumpMeasure::NuTheta { theta };
        let jumps = jump_integral(&nu, q0, true)?;
        let drift = (kappa_theta(theta, q0)? - jumps.value) / q0;
        Ok(LevyCharacteristics {
            killing: 0.0,
            drift,
            sigma2: 0.0,
            nu,
        })
    }

    /// Parses `kappa-theta theta=1.5`, `brownian-drift b=-1 sigma2=1`,
    /// `drift-only b=-1` or `compound-poisson b=.. sigma2=.. k=.. jumps=y:rate,y:rate`.
    pub fn from_preset(spec: &str) -> Result<Self> {
        let mut parts = spec.split_whitespace();
        let name = parts.next().ok_or_else(|| param("empty characteristics preset"))?;
        let mut kv = std::collections::BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| param(format!("expected key=value, got {p:?}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let num = |k: &str, default: f64| -> Result<f64> {
            match kv.get(k) {
                None => Ok(default),
                Some(v) => v.parse().map_err(|_| param(format!("bad number for {k}: {v:?}"))),
            }
        };
        match name {
            "kappa-theta" => Self::kappa_theta_preset(num("theta", 1.5)?),
            "brownian-drift" => Ok(Self::brownian_drift(num("b", -1.0)?, num("sigma2", 1.0)?)),
            "drift-only" => Ok(Self::drift_only(num("b", -1.0)?)),
            "compound-poisson" => {
                let mut atoms = Vec::new();
                if let Some(j) = kv.get("jumps") {
                    for pair in j.split(',') {
                        let (y, r) = pair
                            .split_once(':')
                            .ok_or_else(|| param(format!("expected y:rate, got {pair:?}")))?;
                        let y: f64 = y.parse().map_err(|_| param(format!("bad jump {y:?}")))?;
                        let r: f64 = r.parse().map_err(|_| param(format!("bad rate {r:?}")))?;
                        if !(r >= 0.0) {
                            return Err(param("jump rates must be >= 0"));
                        }
                        atoms.push((y, r));
                    }
                }
                Ok(LevyCharacteristics {
                    killing: num("k", 0.0)?,
                    drift: num("b", 0.0)?,
                    sigma2: num("sigma2", 0.0)?,
                    nu: JumpMeasure::Atoms { atoms },
                })
            }
            other => Err(param(format!("unknown characteristics preset {other:?}"))),
        }
    }

    pub fn label(&self) -> String {
        match &self.nu {
            JumpMeasure::None => format!("b={},sigma2={},k={}", self.drift, self.sigma2, self.killing),
            JumpMeasure::NuTheta { theta } => format!("nu_theta(theta={theta})"),
            JumpMeasure::Atoms { atoms } => format!("compound-poisson({} jumps)", atoms.len()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.killing >= 0.0) || !(self.sigma2 >= 0.0) || !self.drift.is_finite() {
            return Err(param("need killing >= 0, sigma2 >= 0 and finite drift"));
        }
        if let JumpMeasure::NuTheta { theta } = self.nu {
            check_theta(theta)?;
        }
        Ok(())
    }

    pub fn has_negative_jumps(&self) -> bool {
        match &self.nu {
            JumpMeasure::None => false,
            JumpMeasure::NuTheta { .. } => true,
            JumpMeasure::Atoms { atoms } => atoms.iter().any(|a| a.0 < 0.0 && a.1 > 0.0),
        }
    }
}

fn gaussian_part(c: &LevyCharacteristics, q: f64) -> f64 {
    -c.killing + 0.5 * c.sigma2 * q * q + c.drift * q
}

/// The cumulant `kappa(q)`.
pub fn kappa(c: &LevyCharacteristics, q: f64) -> Result<QuadValue> {
    let j = jump_integral(&c.nu, q, true)?;
    Ok(QuadValue {
        value: gaussian_part(c, q) + j.value,
        error: j.error,
    })
}

/// The Laplace exponent `psi(q) = log E[exp(q Y_1)]`.
pub fn psi(c: &LevyCharacteristics, q: f64) -> Result<QuadValue> {
    let j = jump_integral(&c.nu, q, false)?;
    Ok(QuadValue {
        value: gaussian_part(c, q) + j.value,
        error: j.error,
    })
}

/// Smallest grid point `q >= q_min` with `kappa(q) < 0`, if any.
pub fn kappa_negative_point(c: &LevyCharacteristics, q_min: f64) -> Option<f64> {
    (1..=400)
        .map(|i| i as f64 * 0.025)
        .filter(|q| *q >= q_min)
        .find(|q| kappa(c, *q).is_ok_and(|k| k.value < 0.0))
}

/// Tabulated big-jump law and the Gaussian replacement of small jumps.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpPlan {
    pub jump_floor: f64,
    /// Total rate of jumps with `|e^y - 1| >= jump_floor`.
    pub big_rate: f64,
    /// `int_big (e^y - 1) nu(dy)`.
    pub big_compensator: f64,
    /// `int_small y^2 nu(dy)`.
    pub small_variance: f64,
    /// Cumulative rate table over jump sizes `y`, for inversion.
    table: Vec<(f64, f64)>,
    /// Table entries are exact jump sizes rather than interpolation nodes.
    discrete: bool,
}

const TABLE_POINTS: usize = 600;
const UPPER_CUTOFF: f64 = 1e4;

impl JumpPlan {
    pub fn new(nu: &JumpMeasure, jump_floor: f64) -> Result<Self> {
        if !(jump_floor > 0.0 && jump_floor < 0.5) {
            return Err(param(format!("jump_floor must lie in (0, 1/2), got {jump_floor}")));
        }
        match nu {
            JumpMeasure::None => Ok(JumpPlan {
                jump_floor,
                big_rate: 0.0,
                big_compensator: 0.0,
                small_variance: 0.0,
                table: Vec::new(),
                discrete: true,
            }),
            JumpMeasure::Atoms { atoms } => {
                let mut table = Vec::new();
                let mut acc = 0.0;
                let mut comp = 0.0;
                for &(y, r) in atoms {
                    if r > 0.0 {
                        acc += r;
                        comp += r * (y.exp() - 1.0);
                        table.push((y, acc));
                    }
                }
                Ok(JumpPlan {
                    jump_floor,
                    big_rate: acc,
                    big_compensator: comp,
                    small_variance: 0.0,
                    table,
                    discrete: true,
                })
            }
            JumpMeasure::NuTheta { theta } => {
                check_theta(*theta)?;
                let d = NuThetaDensity::new(*theta);
                let f = jump_floor;
                let lower_var =
                    integrate_from_zero(|u| (1.0 - u).ln().powi(2) * d.lower_density(u), f, 1.0 - theta).value;
                let lower_comp = integrate(|u| -u * d.lower_density(u), f, 0.5).value;
                let (upper_var, upper_comp) = if d.s == 0.0 {
                    (0.0, 0.0)
                } else {
                    (
                        integrate_from_zero(|u| (1.0 + u).ln().powi(2) * d.upper_density(u), f, 1.0 - theta).value,
                        integrate(|u| u * d.upper_density(u), f, UPPER_CUTOFF).value,
                    )
                };
                // table over y: lower part y = ln(1-u) for u from 1/2 down to f,
                // then upper part y = ln(1+u) for u from f up to the cutoff
                let mut table = Vec::new();
                let mut acc = 0.0;
                let lo_grid = log_grid(f, 0.5, TABLE_POINTS);
                let mut prev = 0.5f64;
                table.push(((1.0 - prev).ln(), 0.0));
                for &u in lo_grid.iter().rev().skip(1) {
                    acc += integrate(|v| d.lower_density(v), u, prev).value;
                    table.push(((1.0 - u).ln(), acc));
                    prev = u;
                }
                if d.s != 0.0 {
                    let hi_grid = log_grid(f, UPPER_CUTOFF, TABLE_POINTS);
                    let mut prev = f;
                    table.push(((1.0 + f).ln(), acc));
                    for &u in hi_grid.iter().skip(1) {
                        acc += integrate(|v| d.upper_density(v), prev, u).value;
                        table.push(((1.0 + u).ln(), acc));
                        prev = u;
                    }
                }
                Ok(JumpPlan {
                    jump_floor,
                    big_rate: acc,
                    big_compensator: lower_comp + upper_comp,
                    small_variance: lower_var + upper_var,
                    table,
                    discrete: false,
                })
            }
        }
    }

    /// A big jump size `y`, by inversion of the cumulative rate table.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let target = rng.random::<f64>() * self.big_rate;
        let k = self.table.partition_point(|e| e.1 < target);
        if k == 0 {
            return self.table[0].0;
        }
        if k >= self.table.len() {
            return self.table[self.table.len() - 1].0;
        }
        let (y0, a0) = self.table[k - 1];
        let (y1, a1) = self.table[k];
        if a1 == a0 {
            return y1;
        }
        if self.discrete {
            return y1;
        }
        y0 + (y1 - y0) * (target - a0) / (a1 - a0)
    }

    /// `kappa` of the simulated characteristics (small jumps replaced by
    /// their Gaussian approximation and not producing daughters) minus the
    /// `kappa` of the full ones.
    pub fn kappa_bias(&self, c: &LevyCharacteristics, q: f64) -> Result<f64> {
        kappa(c, q)?;
        let v = self.small_variance;
        let small_gauss = 0.5 * v * (q * q - q);
        let small_exact = match &c.nu {
            JumpMeasure::NuTheta { theta } => {
                let d = NuThetaDensity::new(*theta);
                let th = *theta;
                let f = self.jump_floor;
                let lo = integrate_from_zero(
                    |u| d.lower_core(u) * (h2(q, -u) * u.powf(1.0 - th) + u.powf(q - th - 1.0)),
                    f,
                    (1.0 - th).min(q - th - 1.0),
                )
                .value;
                let hi = if d.s == 0.0 {
                    0.0
                } else {
                    integrate_from_zero(|u| d.upper_core(u) * h2(q, u) * u.powf(1.0 - th), f, 1.0 - th).value
                };
                lo + hi
            }
            _ => 0.0,
        };
        Ok(small_gauss - small_exact)
    }
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Numerical settings for cell simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub dt: f64,
    pub jump_floor: f64,
    pub extinction_floor: f64,
    pub max_steps: usize,
    /// Keep the full `(t, Z)` grid; otherwise only the endpoints.
    pub record_path: bool,
}

impl Default for CellConfig {
    fn default() -> Self {
        CellConfig {
            dt: 1e-3,
            jump_floor: 0.02,
            extinction_floor: 1e-6,
            max_steps: 10_000_000,
            record_path: false,
        }
    }
}

/// One cell: `Z(t) = exp(Y(tau(t)))` from `Z(0) = x0`, until extinction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Negative jumps as `(time, |Delta Z|)`.
    pub jumps: Vec<(f64, f64)>,
    pub zeta: f64,
    /// Sum of all decreases of `Z`, continuous and by jumps.
    pub total_decrease: f64,
}

/// Simulates one cell. `Y` moves on a grid of step `dt` in its own clock `s`
/// (Gaussian part, small-jump replacement, compound-Poisson big jumps at the
/// end of each step); the Lamperti clock advances by `int exp(beta Y) ds`,
/// integrated exactly for `Y` linear between grid points.
pub fn simulate_cell<R: Rng + ?Sized>(
    chars: &LevyCharacteristics,
    plan: &JumpPlan,
    beta: f64,
    x0: f64,
    cfg: &CellConfig,
    rng: &mut R,
) -> Result<CellPath> {
    if !(cfg.dt > 0.0) || !(x0 > 0.0) || !(beta > 0.0) {
        return Err(param("need dt > 0, x0 > 0, beta > 0"));
    }
    let ds = cfg.dt;
    let sig = (chars.sigma2 + plan.small_variance).sqrt() * ds.sqrt();
    let mu = (chars.drift - plan.big_compensator - 0.5 * plan.small_variance) * ds;
    let mut y = x0.ln();
    let mut t = 0.0f64;
    let mut path = CellPath::default();
    let record = |p: &mut CellPath, t: f64, z: f64| {
        p.times.push(t);
        p.values.push(z);
    };
    record(&mut path, 0.0, x0);
    let mut next_jump = if plan.big_rate > 0.0 {
        exp_draw(plan.big_rate, rng)
    } else {
        f64::INFINITY
    };
    let kill_at = if chars.killing > 0.0 {
        exp_draw(chars.killing, rng)
    } else {
        f64::INFINITY
    };
    let floor = cfg.extinction_floor.ln();
    for step in 0..cfg.max_steps {
        let s0 = step as f64 * ds;
        let z0 = y.exp();
        let dy = mu + if sig > 0.0 {
            sig * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        if kill_at < s0 + ds {
            let frac = (kill_at - s0) / ds;
            t += lamperti_increment(beta, y, y + frac * dy, frac * ds);
            path.zeta = t;
            path.total_decrease += (y + frac * dy).exp();
            return Ok(path);
        }
        let y1 = y + dy;
        t += lamperti_increment(beta, y, y1, ds);
        y = y1;
        path.total_decrease += (z0 - y.exp()).max(0.0);
        while next_jump < s0 + ds {
            let j = plan.sample_jump(rng);
            let zb = y.exp();
            if j < 0.0 {
                let m = zb * (1.0 - j.exp());
                path.jumps.push((t, m));
                path.total_decrease += m;
            }
            y += j;
            next_jump += exp_draw(plan.big_rate, rng);
        }
        if cfg.record_path {
            record(&mut path, t, y.exp());
        }
        if y < floor {
            path.zeta = t;
            if !cfg.record_path {
                record(&mut path, t, y.exp());
            }
            return Ok(path);
        }
    }
    path.zeta = t;
    Err(Error::Timeout {
        max_time: cfg.max_steps as f64 * ds,
        steps: cfg.max_steps,
        partial: Box::new(path),
    })
}

fn exp_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// `int_0^h exp(beta (a + (b - a) s / h)) ds`.
fn lamperti_increment(beta: f64, a: f64, b: f64, h: f64) -> f64 {
    let d = beta * (b - a);
    let ea = (beta * a).exp();
    if d.abs() < 1e-8 {
        h * ea * (1.0 + d / 2.0 + d * d / 6.0)
    } else {
        h * ea * (d.exp() - 1.0) / d
    }
}

/// The string of a cell: length its lifetime, atoms at negative jump times
/// with the jump sizes as masses. Not proper in general.
pub fn genealogy_string(path: &CellPath) -> Result<GeneralizedString> {
    if !(path.zeta > 0.0) {
        return Err(Error::Validation("cell path has no positive lifetime".into()));
    }
    let atoms = path
        .jumps
        .iter()
        .map(|&(x, p)| Atom { x: x.min(path.zeta), p })
        .collect();
    Ok(GeneralizedString::assemble(
        path.zeta,
        atoms,
        None,
        0.0,
        Vec::new(),
        StringKind::GrowthFrag,
        false,
    ))
}

/// Samples genealogy strings from fresh cells started at size one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellSampler {
    pub chars: LevyCharacteristics,
    pub beta: f64,
    pub cell: CellConfig,
    #[serde(skip)]
    plan: OnceLock<Arc<JumpPlan>>,
}

impl Default for LevyCharacteristics {
    fn default() -> Self {
        LevyCharacteristics::drift_only(-1.0)
    }
}

impl CellSampler {
    pub fn new(chars: LevyCharacteristics, beta: f64, cell: CellConfig) -> Result<Self> {
        chars.validate()?;
        if !(beta > 0.0) {
            return Err(param("beta must be positive"));
        }
        Ok(CellSampler {
            chars,
            beta,
            cell,
            plan: OnceLock::new(),
        })
    }

    pub fn plan(&self) -> Result<Arc<JumpPlan>> {
        if let Some(p) = self.plan.get() {
            return Ok(p.clone());
        }
        let p = Arc::new(JumpPlan::new(&self.chars.nu, self.cell.jump_floor)?);
        Ok(self.plan.get_or_init(|| p).clone())
    }

    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CellPath> {
        let plan = self.plan()?;
        simulate_cell(&self.chars, &plan, self.beta, 1.0, &self.cell, rng)
    }

    /// Genealogy string with the `n_atoms` largest jumps kept; the others
    /// are recorded as remainder and tail.
    pub fn sample_string<R: Rng + ?Sized>(&self, n_atoms: usize, rng: &mut R) -> Result<GeneralizedString> {
        let mut s = genealogy_string(&self.simulate(rng)?)?;
        if s.atoms.len() > n_atoms {
            for a in s.atoms.drain(n_atoms..) {
                s.remainder += a.p;
                s.tail.push(TailPart {
                    mass: a.p,
                    factors: Vec::new(),
                });
            }
        }
        Ok(s)
    }
}

/// Genealogical tree of a growth fragmentation up to generation `depth`.
/// The trace is tagged `outside_theorem` unless `kappa(q) < 0` for some
/// grid point `q >= beta`.
pub fn growth_frag_tree<R: Rng + ?Sized>(
    chars: &LevyCharacteristics,
    beta: f64,
    depth: usize,
    n_atoms: usize,
    min_scale: f64,
    cell: &CellConfig,
    rng: &mut R,
) -> Result<BuildTrace> {
    let sampler = CellSampler::new(chars.clone(), beta, cell.clone())?;
    growth_frag_tree_with(&sampler, depth, n_atoms, min_scale, rng)
}

pub fn growth_frag_tree_with<R: Rng + ?Sized>(
    sampler: &CellSampler,
    depth: usize,
    n_atoms: usize,
    min_scale: f64,
    rng: &mut R,
) -> Result<BuildTrace> {
    let mut cfg = BuildConfig::new(
        StringSampler::GrowthFrag {
            cell: sampler.clone(),
        },
        sampler.beta,
        depth,
        n_atoms,
    );
    cfg.min_scale = min_scale;
    let mut trace = build_recursive(&cfg, rng)?;
    trace.outside_theorem = kappa_negative_point(&sampler.chars, sampler.beta).is_none();
    Ok(trace)
}

/// `E[zeta] = -1 / psi(beta)` when `psi(beta) < 0`.
pub fn mean_lifetime(chars: &LevyCharacteristics, beta: f64) -> Result<f64> {
    let p = psi(chars, beta)?.value;
    if p >= 0.0 {
        return Err(Error::Domain(format!("psi(beta) = {p} >= 0: infinite mean lifetime")));
    }
    Ok(-1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn kappa_without_jumps() {
        let c = LevyCharacteristics {
            killing: 1.0,
            drift: -2.0,
            sigma2: 2.0,
            nu: JumpMeasure::None,
        };
        assert_eq!(kappa(&c, 1.0).unwrap().value, -2.0);
    }

    #[test]
    fn kappa_single_atom() {
        let c = LevyCharacteristics {
            killing: 0.0,
            drift: 0.0,
            sigma2: 0.0,
            nu: JumpMeasure::Atoms {
                atoms: vec![(0.5f64.ln(), 1.0)],
            },
        };
        // 1/4 - 1 - 2 (1/2 - 1) + (1/2)^2
        assert!((kappa(&c, 2.0).unwrap().value - 0.5).abs() < 1e-15);
        assert!((psi(&c, 2.0).unwrap().value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn kappa_theta_values() {
        let v = kappa_theta(1.5, 2.5).unwrap();
        assert!((v + 1.0 / (2.0 * PI.sqrt())).abs() < 1e-14);
        assert_eq!(kappa_theta(1.5, 2.0).unwrap(), 0.0);
        assert_eq!(kappa_theta(1.5, 3.0).unwrap(), 0.0);
        assert!(kappa_theta(1.5, 2.01).unwrap() < 0.0);
        assert!(kappa_theta(1.5, 1.99).unwrap() >= 0.0);
        assert!(kappa_theta(1.5, 1.5).is_err());
        assert!(kappa_theta(1.5, 4.0).is_err());
        assert!(kappa_theta(0.4, 1.0).is_err());
    }

    #[test]
    fn kappa_quadrature_matches_closed_form() {
        let c = LevyCharacteristics::kappa_theta_preset(1.5).unwrap();
        assert!((c.drift + 2.0 / PI.sqrt()).abs() < 1e-10, "{}", c.drift);
        for &q in &[2.1, 2.5, 2.9, 3.5, 3.9] {
            let k = kappa(&c, q).unwrap().value;
            let e = kappa_theta(1.5, q).unwrap();
            assert!((k / e - 1.0).abs() < 1e-6, "{q}: {k} vs {e}");
        }
        let c = LevyCharacteristics::kappa_theta_preset(1.2).unwrap();
        for &q in &[1.5, 2.0, 2.5, 3.0] {
            let k = kappa(&c, q).unwrap().value;
            let e = kappa_theta(1.2, q).unwrap();
            assert!((k - e).abs() < 1e-6 * e.abs().max(1.0), "{q}: {k} vs {e}");
        }
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(&LevyCharacteristics::drift_only(-1.0), 1.0).unwrap().value, -1.0);
        assert_eq!(psi(&LevyCharacteristics::brownian_drift(0.0, 2.0), 1.0).unwrap().value, 1.0);
        assert!((mean_lifetime(&LevyCharacteristics::drift_only(-1.0), 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn h2_series_matches_direct() {
        for &q in &[1.7, 2.5, 3.3] {
            for &u in &[-0.09, -0.01, 0.05, 0.099] {
                let direct = ((1.0f64 + u).powf(q) - 1.0 - q * u) / (u * u);
                assert!((h2(q, u) - direct).abs() < 1e-9 * direct.abs());
            }
        }
    }

    #[test]
    fn drift_only_cell_is_linear() {
        let c = LevyCharacteristics::drift_only(-1.0);
        let plan = JumpPlan::new(&c.nu, 0.02).unwrap();
        let cfg = CellConfig {
            dt: 1e-3,
            record_path: true,
            ..Default::default()
        };
        let p = simulate_cell(&c, &plan, 1.0, 1.0, &cfg, &mut stream(0, 0)).unwrap();
        assert!(p.jumps.is_empty());
        assert!((p.zeta - 1.0).abs() < 1e-3);
        for (t, z) in p.times.iter().zip(&p.values) {
            assert!((z - (1.0 - t)).abs() < 1e-9, "{t} {z}");
        }
    }

    #[test]
    fn genealogy_string_from_hand_path() {
        let p = CellPath {
            times: vec![0.0, 1.0, 2.0],
            values: vec![1.0, 0.5, 0.0],
            jumps: vec![(1.0, 0.5)],
            zeta: 2.0,
            total_decrease: 1.0,
        };
        let s = genealogy_string(&p).unwrap();
        assert_eq!(s.ell, 2.0);
        assert_eq!(s.atoms, vec![Atom { x: 1.0, p: 0.5 }]);
        assert!(!s.flags.proper);
    }

    #[test]
    fn preset_parsing() {
        let c = LevyCharacteristics::from_preset("brownian-drift b=-0.5 sigma2=2").unwrap();
        assert_eq!(c.drift, -0.5);
        assert_eq!(c.sigma2, 2.0);
        let c = LevyCharacteristics::from_preset("compound-poisson b=1 jumps=-0.7:2,0.3:1").unwrap();
        assert!(matches!(c.nu, JumpMeasure::Atoms { ref atoms } if atoms.len() == 2));
        assert!(LevyCharacteristics::from_preset("nope").is_err());
    }
}

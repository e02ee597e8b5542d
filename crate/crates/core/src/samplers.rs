//! Random generalised strings of beads.
//!
//! Masses come from Poisson-Dirichlet stick-breaking. Every sampler draws
//! `OVERSAMPLE * n` sticks, keeps the `n` largest as atoms and records all
//! discarded mass in `remainder`. The discarded mass is also kept as a list
//! of [`TailPart`]s whose conditional power sums are known in closed form,
//! which lets estimators of `E[sum p^q]` account for truncation exactly.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::measure::Cdf;
use crate::stats::ln_gamma;

pub const OVERSAMPLE: usize = 4;

/// One bead: location and mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", from = "[f64; 2]")]
pub struct Atom {
    pub x: f64,
    pub p: f64,
}

impl From<Atom> for [f64; 2] {
    fn from(a: Atom) -> Self {
        [a.x, a.p]
    }
}

impl From<[f64; 2]> for Atom {
    fn from(v: [f64; 2]) -> Self {
        Atom { x: v[0], p: v[1] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StringKind {
    BetaBeta,
    BetaGeneralised,
    BetaMixed,
    Deterministic,
    GrowthFrag,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StringFlags {
    pub kind: StringKind,
    /// Atoms, continuous part and remainder add up to one.
    pub proper: bool,
    /// Distinct locations, no continuous part (the limit condition on `ell`
    /// is reported separately in `ell_gap`).
    pub xi_s: bool,
    /// Continuous part present or repeated locations.
    pub generalised: bool,
    /// `ell - max x` over positive-mass atoms.
    pub ell_gap: f64,
}

/// Truncated mass whose internal split has a known law: `mass` times a
/// product of independent Poisson-Dirichlet partitions with parameters
/// `factors`. Empty `factors` means a single block of size `mass`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPart {
    pub mass: f64,
    pub factors: Vec<(f64, f64)>,
}

impl TailPart {
    /// `E[sum of (block size)^q]` for this part.
    pub fn moment(&self, q: f64) -> f64 {
        if self.mass <= 0.0 {
            return 0.0;
        }
        let mut v = self.mass.powf(q);
        for &(a, t) in &self.factors {
            v *= pd_moment(a, t, q);
        }
        v
    }
}

/// `E[sum_i P_i^q]` under PD(alpha, theta):
/// `Gamma(theta+1) Gamma(q-alpha) / (Gamma(theta+q) Gamma(1-alpha))`.
pub fn pd_moment(alpha: f64, theta: f64, q: f64) -> f64 {
    if theta == -alpha {
        return 1.0;
    }
    if q <= alpha {
        return f64::INFINITY;
    }
    (ln_gamma(theta + 1.0) + ln_gamma(q - alpha) - ln_gamma(theta + q) - ln_gamma(1.0 - alpha))
        .exp()
}

/// Nonincreasing weights of a partition with the mass that was not kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedWeights {
    pub weights: Vec<f64>,
    pub remainder: f64,
    pub tail: Vec<TailPart>,
}

impl RankedWeights {
    /// Keeps the `n` largest weights, moving the rest into the tail.
    pub fn truncate(mut self, n: usize) -> RankedWeights {
        if self.weights.len() > n {
            for w in self.weights.drain(n..) {
                if w > 0.0 {
                    self.remainder += w;
                    self.tail.push(TailPart {
                        mass: w,
                        factors: Vec::new(),
                    });
                }
            }
        }
        self
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn check_pd(alpha: f64, theta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(param(format!("alpha must lie in [0,1), got {alpha}")));
    }
    if !(theta >= -alpha) || !theta.is_finite() {
        return Err(param(format!("theta must be >= -alpha, got {theta}")));
    }
    Ok(())
}

/// Stick-breaking with `W_i ~ Beta(1 - alpha, theta + i alpha)`, `n` sticks,
/// then ranked. The boundary `theta = -alpha` returns exactly `[1.0]` and
/// consumes no randomness.
pub fn sample_gem<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    n: usize,
    rng: &mut R,
) -> Result<RankedWeights> {
    check_pd(alpha, theta)?;
    if n == 0 {
        return Err(param("need at least one stick"));
    }
    if theta == -alpha {
        return Ok(RankedWeights {
            weights: vec![1.0],
            remainder: 0.0,
            tail: Vec::new(),
        });
    }
    let mut weights = Vec::with_capacity(n);
    let mut rest = 1.0f64;
    for i in 1..=n {
        let b = theta + i as f64 * alpha;
        let w = if alpha == 0.0 && theta == 0.0 {
            1.0
        } else {
            Beta::new(1.0 - alpha, b)
                .map_err(|e| param(format!("beta({}, {b}): {e}", 1.0 - alpha)))?
                .sample(rng)
        };
        weights.push(w * rest);
        rest *= 1.0 - w;
        if rest <= 0.0 {
            rest = 0.0;
            break;
        }
    }
    weights.sort_by(|a, b| b.total_cmp(a));
    let tail = if rest > 0.0 {
        vec![TailPart {
            mass: rest,
            factors: vec![(alpha, theta + weights.len() as f64 * alpha)],
        }]
    } else {
        Vec::new()
    };
    Ok(RankedWeights {
        weights,
        remainder: rest,
        tail,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiversityMode {
    Tail,
    Regression,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    pub value: f64,
    /// False when the regression window shows a trend in `m`.
    pub converged: bool,
}

/// Estimates the diversity `lim m Gamma(1-beta) Q_m^beta` from ranked weights.
pub fn diversity_estimate(w: &[f64], beta: f64, mode: DiversityMode) -> Result<Diversity> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(param(format!("beta must lie in (0,1), got {beta}")));
    }
    let m = w.iter().take_while(|x| **x > 0.0).count();
    if m < 10 {
        return Err(Error::InsufficientData(format!(
            "diversity needs at least 10 positive weights, got {m}"
        )));
    }
    let g = ln_gamma(1.0 - beta).exp();
    let v = |k: usize| k as f64 * g * w[k - 1].powf(beta);
    match mode {
        DiversityMode::Tail => Ok(Diversity {
            value: v(m),
            converged: true,
        }),
        DiversityMode::Regression => {
            let lo = m / 2;
            let xs: Vec<f64> = (lo..=m).map(|k| k as f64).collect();
            let ys: Vec<f64> = (lo..=m).map(v).collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let fit = crate::stats::linear_fit(&xs, &ys)
                .ok_or_else(|| Error::InsufficientData("degenerate window".into()))?;
            let drift = (fit.slope * (m - lo) as f64).abs();
            Ok(Diversity {
                value: mean,
                converged: drift <= 0.25 * mean.abs(),
            })
        }
    }
}

/// A generalised string `([0, ell], atoms, lambda)` with truncation bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedString {
    pub ell: f64,
    pub atoms: Vec<Atom>,
    #[serde(rename = "cdf", default, with = "opt_cdf")]
    pub lambda: Option<Cdf>,
    pub flags: StringFlags,
    pub remainder: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tail: Vec<TailPart>,
}

mod opt_cdf {
    use super::Cdf;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &Option<Cdf>, s: S) -> Result<S::Ok, S::Error> {
        match c {
            Some(c) => c.serialize(s),
            None => Vec::<(f64, f64)>::new().serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Cdf>, D::Error> {
        let pts = Vec::<(f64, f64)>::deserialize(d)?;
        if pts.is_empty() {
            Ok(None)
        } else {
            Cdf::new(pts).map(Some).map_err(serde::de::Error::custom)
        }
    }
}

fn rank_atoms(atoms: &mut [Atom]) {
    atoms.sort_by(|a, b| b.p.total_cmp(&a.p).then(a.x.total_cmp(&b.x)));
}

impl GeneralizedString {
    /// Builds a string and computes its flags. Atoms are ranked by mass
    /// (descending) then location (ascending); the sort is stable.
    pub fn assemble(
        ell: f64,
        mut atoms: Vec<Atom>,
        lambda: Option<Cdf>,
        remainder: f64,
        tail: Vec<TailPart>,
        kind: StringKind,
        proper: bool,
    ) -> GeneralizedString {
        rank_atoms(&mut atoms);
        let positive: Vec<&Atom> = atoms.iter().filter(|a| a.p > 0.0).collect();
        let mut xs: Vec<f64> = positive.iter().map(|a| a.x).collect();
        xs.sort_by(f64::total_cmp);
        let distinct = xs.windows(2).all(|w| w[0] != w[1]);
        let has_lambda = lambda.as_ref().is_some_and(|c| c.total() > 0.0);
        let xmax = xs.last().copied().unwrap_or(0.0);
        GeneralizedString {
            ell,
            atoms,
            lambda,
            remainder,
            tail,
            flags: StringFlags {
                kind,
                proper,
                xi_s: distinct && !has_lambda,
                generalised: has_lambda || !distinct,
                ell_gap: ell - xmax,
            },
        }
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.p).sum()
    }

    pub fn lambda_mass(&self) -> f64 {
        self.lambda.as_ref().map(|c| c.total()).unwrap_or(0.0)
    }

    /// `sum_i p_i^q` over the kept atoms.
    pub fn power_sum(&self, q: f64) -> f64 {
        self.atoms.iter().filter(|a| a.p > 0.0).map(|a| a.p.powf(q)).sum()
    }

    /// Conditional expectation of the truncated atoms' contribution to `sum p^q`.
    pub fn tail_moment(&self, q: f64) -> f64 {
        self.tail.iter().map(|t| t.moment(q)).sum()
    }

    pub fn is_ranked(&self) -> bool {
        self.atoms
            .windows(2)
            .all(|w| w[0].p > w[1].p || (w[0].p == w[1].p && w[0].x <= w[1].x))
    }

    /// Checks the requested flags against the computed ones.
    pub fn require(&self, proper: Option<bool>, xi_s: Option<bool>) -> Result<()> {
        if let Some(p) = proper {
            if p != self.flags.proper {
                return Err(Error::Validation(format!(
                    "requested proper={p}, string has proper={}",
                    self.flags.proper
                )));
            }
        }
        if let Some(s) = xi_s {
            let actual = self.flags.xi_s && self.flags.ell_gap.abs() <= 1e-12;
            if s != actual {
                return Err(Error::Validation(format!(
                    "requested xi_s={s}, string has xi_s={actual}"
                )));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell > 0.0) || !self.ell.is_finite() {
            return Err(Error::Validation(format!("ell must be positive, got {}", self.ell)));
        }
        for a in &self.atoms {
            if !(a.p >= 0.0) || !(0.0..=self.ell * (1.0 + 1e-12)).contains(&a.x) {
                return Err(Error::Validation(format!("bad atom {a:?} on [0,{}]", self.ell)));
            }
        }
        if !self.is_ranked() {
            return Err(Error::Validation("atoms are not ranked".into()));
        }
        if let Some(c) = &self.lambda {
            if c.support_max() > self.ell * (1.0 + 1e-12) {
                return Err(Error::Validation("continuous part exceeds [0, ell]".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Wraps given data as a string, ranking atoms and computing flags.
/// `proper` holds when atoms and continuous mass add up to one within `1e-12`.
pub fn deterministic_string(
    ell: f64,
    atoms: &[(f64, f64)],
    lambda: Option<Cdf>,
) -> Result<GeneralizedString> {
    let atoms: Vec<Atom> = atoms.iter().map(|&(x, p)| Atom { x, p }).collect();
    let total = atoms.iter().map(|a| a.p).sum::<f64>() + lambda.as_ref().map_or(0.0, |c| c.total());
    let s = GeneralizedString::assemble(
        ell,
        atoms,
        lambda,
        0.0,
        Vec::new(),
        StringKind::Deterministic,
        (total - 1.0).abs() <= 1e-12,
    );
    s.validate()?;
    Ok(s)
}

/// `([0,1], {(1, 1/2), (1/2, 1/2)})`.
pub fn symmetric_binary() -> GeneralizedString {
    deterministic_string(1.0, &[(1.0, 0.5), (0.5, 0.5)], None).expect("valid fixture")
}

/// `([0,1], {(1, 1/2), (3/4, 1/2), (1/2, 1/2)})`, total mass 3/2.
pub fn ternary_half() -> GeneralizedString {
    deterministic_string(1.0, &[(1.0, 0.5), (0.75, 0.5), (0.5, 0.5)], None).expect("valid fixture")
}

/// A PD(alpha, theta) string: `OVERSAMPLE * n` sticks, the `n` largest kept,
/// length from the alpha-diversity at `m = n`, i.i.d. uniform locations.
pub fn sample_pd_string<R: Rng + ?Sized>(
    alpha: f64,
    theta: f64,
    n_atoms: usize,
    kind: StringKind,
    rng: &mut R,
) -> Result<GeneralizedString> {
    if n_atoms < 10 {
        return Err(param(format!("n_atoms must be >= 10, got {n_atoms}")));
    }
    if !(alpha > 0.0) {
        return Err(param("diversity length needs alpha > 0"));
    }
    let w = sample_gem(alpha, theta, OVERSAMPLE * n_atoms, rng)?;
    let ell = diversity_estimate(&w.weights[..n_atoms.min(w.weights.len())], alpha, DiversityMode::Tail)?
        .value;
    let w = w.truncate(n_atoms);
    let atoms: Vec<Atom> = w
        .weights
        .iter()
        .map(|&p| Atom {
            x: ell * rng.random::<f64>(),
            p,
        })
        .collect();
    Ok(GeneralizedString::assemble(
        ell,
        atoms,
        None,
        w.remainder,
        w.tail,
        kind,
        true,
    ))
}

/// A (beta, beta)-string of beads.
pub fn sample_beta_beta_string<R: Rng + ?Sized>(
    beta: f64,
    n_atoms: usize,
    rng: &mut R,
) -> Result<GeneralizedString> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(param(format!("beta must lie in (0,1), got {beta}")));
    }
    sample_pd_string(beta, beta, n_atoms, StringKind::BetaBeta, rng)
}

/// A beta-generalised string: each coarse block `Q_m` at `L U_m` is split by
/// an independent PD(1-beta, -beta) partition. Coarse draws come first, so
/// at `beta = 1/2` (where the fine split is the single block `1`) the output
/// matches [`sample_beta_beta_string`] draw for draw.
pub fn sample_beta_generalised_string<R: Rng + ?Sized>(
    beta: f64,
    n_coarse: usize,
    n_fine: usize,
    rng: &mut R,
) -> Result<GeneralizedString> {
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(param(format!("beta must lie in (0,1/2], got {beta}")));
    }
    if n_fine == 0 {
        return Err(param("n_fine must be positive"));
    }
    let coarse = sample_beta_beta_string(beta, n_coarse, rng)?;
    let fine_law = (1.0 - beta, -beta);
    let mut atoms = Vec::new();
    let mut remainder = coarse.remainder;
    let mut tail: Vec<TailPart> = coarse
        .tail
        .iter()
        .map(|t| {
            let mut f = t.factors.clone();
            f.push(fine_law);
            TailPart {
                mass: t.mass,
                factors: f,
            }
        })
        .collect();
    for a in &coarse.atoms {
        let r = sample_gem(fine_law.0, fine_law.1, OVERSAMPLE * n_fine, rng)?.truncate(n_fine);
        for &p in &r.weights {
            atoms.push(Atom { x: a.x, p: a.p * p });
        }
        remainder += a.p * r.remainder;
        for t in r.tail {
            tail.push(TailPart {
                mass: a.p * t.mass,
                factors: t.factors,
            });
        }
    }
    Ok(GeneralizedString::assemble(
        coarse.ell,
        atoms,
        None,
        remainder,
        tail,
        StringKind::BetaGeneralised,
        true,
    ))
}

/// Concatenation `Psi_beta(s1, s2, b)`: the first string scaled by `b` in mass
/// and `b^beta` in length, followed by the second scaled by `1 - b` and
/// `(1 - b)^beta`. Zero-mass images are dropped.
pub fn psi_beta_merge(
    s1: &GeneralizedString,
    s2: &GeneralizedString,
    b: f64,
    beta: f64,
) -> Result<GeneralizedString> {
    if !(0.0..=1.0).contains(&b) {
        return Err(param(format!("b must lie in [0,1], got {b}")));
    }
    let c1 = b.powf(beta);
    let c2 = (1.0 - b).powf(beta);
    let l1 = c1 * s1.ell;
    let ell = l1 + c2 * s2.ell;
    let mut atoms = Vec::new();
    let mut tail = Vec::new();
    if b > 0.0 {
        atoms.extend(s1.atoms.iter().map(|a| Atom {
            x: c1 * a.x,
            p: b * a.p,
        }));
        tail.extend(s1.tail.iter().map(|t| TailPart {
            mass: b * t.mass,
            factors: t.factors.clone(),
        }));
    }
    if b < 1.0 {
        atoms.extend(s2.atoms.iter().map(|a| Atom {
            x: l1 + c2 * a.x,
            p: (1.0 - b) * a.p,
        }));
        tail.extend(s2.tail.iter().map(|t| TailPart {
            mass: (1.0 - b) * t.mass,
            factors: t.factors.clone(),
        }));
    }
    let lam1 = s1.lambda.as_ref().filter(|_| b > 0.0).map(|c| c.transformed(0.0, c1, b));
    let lam2 = s2
        .lambda
        .as_ref()
        .filter(|_| b < 1.0)
        .map(|c| c.transformed(l1, c2, 1.0 - b));
    let lambda = match (lam1, lam2) {
        (Some(a), Some(c)) => Some(a.concat(&c)),
        (Some(a), None) => Some(a),
        (None, Some(c)) => Some(c),
        (None, None) => None,
    };
    let remainder = if b == 1.0 {
        s1.remainder
    } else if b == 0.0 {
        s2.remainder
    } else {
        b * s1.remainder + (1.0 - b) * s2.remainder
    };
    let kind = if b == 1.0 {
        s1.flags.kind
    } else if b == 0.0 {
        s2.flags.kind
    } else {
        StringKind::BetaMixed
    };
    Ok(GeneralizedString::assemble(
        ell,
        atoms,
        lambda,
        remainder,
        tail,
        kind,
        s1.flags.proper && s2.flags.proper,
    ))
}

/// The ingredients of a beta-mixed string.
#[derive(Clone, Debug)]
pub struct MixedDraw {
    pub first: Option<GeneralizedString>,
    pub second: GeneralizedString,
    pub b: f64,
}

/// Draws `(xi_1, xi_2, B)`: a (beta, 1-2beta)-string, a (beta, beta)-string and
/// `B ~ Beta(1-2beta, beta)`. At `beta = 1/2`, `B = 0` and `xi_1` is not drawn.
pub fn sample_beta_mixed_parts<R: Rng + ?Sized>(
    beta: f64,
    n_atoms: usize,
    rng: &mut R,
) -> Result<MixedDraw> {
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(param(format!("beta must lie in (0,1/2], got {beta}")));
    }
    if beta == 0.5 {
        let second = sample_beta_beta_string(beta, n_atoms, rng)?;
        return Ok(MixedDraw {
            first: None,
            second,
            b: 0.0,
        });
    }
    let first = sample_pd_string(beta, 1.0 - 2.0 * beta, n_atoms, StringKind::Custom, rng)?;
    let second = sample_beta_beta_string(beta, n_atoms, rng)?;
    let b = Beta::new(1.0 - 2.0 * beta, beta)
        .map_err(|e| param(e.to_string()))?
        .sample(rng);
    Ok(MixedDraw {
        first: Some(first),
        second,
        b,
    })
}

pub fn sample_beta_mixed_string<R: Rng + ?Sized>(
    beta: f64,
    n_atoms: usize,
    rng: &mut R,
) -> Result<GeneralizedString> {
    let d = sample_beta_mixed_parts(beta, n_atoms, rng)?;
    let mut s = match &d.first {
        Some(f) => psi_beta_merge(f, &d.second, d.b, beta)?,
        None => d.second,
    };
    s.flags.kind = StringKind::BetaMixed;
    Ok(s)
}

/// The law of the strings attached at each node of a construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StringSampler {
    BetaBeta { beta: f64 },
    BetaGeneralised { beta: f64, n_fine: usize },
    BetaMixed { beta: f64 },
    /// PD(alpha, theta) masses on an alpha-diversity interval.
    Custom { alpha: f64, theta: f64 },
    Deterministic { string: GeneralizedString },
    GrowthFrag { cell: crate::levy::CellSampler },
}

impl StringSampler {
    pub fn deterministic(s: GeneralizedString) -> Self {
        StringSampler::Deterministic { string: s }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n_atoms: usize, rng: &mut R) -> Result<GeneralizedString> {
        match self {
            StringSampler::BetaBeta { beta } => sample_beta_beta_string(*beta, n_atoms, rng),
            StringSampler::BetaGeneralised { beta, n_fine } => {
                sample_beta_generalised_string(*beta, n_atoms, *n_fine, rng)
            }
            StringSampler::BetaMixed { beta } => sample_beta_mixed_string(*beta, n_atoms, rng),
            StringSampler::Custom { alpha, theta } => {
                sample_pd_string(*alpha, *theta, n_atoms, StringKind::Custom, rng)
            }
            StringSampler::Deterministic { string } => Ok(string.clone()),
            StringSampler::GrowthFrag { cell } => cell.sample_string(n_atoms, rng),
        }
    }

    pub fn kind(&self) -> StringKind {
        match self {
            StringSampler::BetaBeta { .. } => StringKind::BetaBeta,
            StringSampler::BetaGeneralised { .. } => StringKind::BetaGeneralised,
            StringSampler::BetaMixed { .. } => StringKind::BetaMixed,
            StringSampler::Custom { .. } => StringKind::Custom,
            StringSampler::Deterministic { .. } => StringKind::Deterministic,
            StringSampler::GrowthFrag { .. } => StringKind::GrowthFrag,
        }
    }

    /// True when every draw is proper (mass one up to recorded remainder).
    pub fn is_proper(&self) -> bool {
        match self {
            StringSampler::Deterministic { string } => string.flags.proper,
            StringSampler::GrowthFrag { .. } => false,
            _ => true,
        }
    }

    pub fn is_random(&self) -> bool {
        !matches!(self, StringSampler::Deterministic { .. })
    }

    pub fn label(&self) -> String {
        match self {
            StringSampler::BetaBeta { beta } => format!("beta-beta(beta={beta})"),
            StringSampler::BetaGeneralised { beta, n_fine } => {
                format!("beta-generalised(beta={beta},n_fine={n_fine})")
            }
            StringSampler::BetaMixed { beta } => format!("beta-mixed(beta={beta})"),
            StringSampler::Custom { alpha, theta } => format!("pd(alpha={alpha},theta={theta})"),
            StringSampler::Deterministic { string } => {
                format!("deterministic(ell={},atoms={})", string.ell, string.atoms.len())
            }
            StringSampler::GrowthFrag { cell } => format!("growth-frag({})", cell.chars.label()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn gem_conservation_and_ranking() {
        let mut r = stream(11, 0);
        for _ in 0..50 {
            let w = sample_gem(0.5, 0.5, 200, &mut r).unwrap();
            assert!(w.weights.windows(2).all(|p| p[0] >= p[1]));
            assert!((w.sum() + w.remainder - 1.0).abs() < 1e-12);
            let t = w.clone().truncate(20);
            assert_eq!(t.weights.len(), 20);
            assert!((t.sum() + t.remainder - 1.0).abs() < 1e-12);
            let tail: f64 = t.tail.iter().map(|p| p.mass).sum();
            assert!((tail - t.remainder).abs() < 1e-12);
        }
    }

    #[test]
    fn gem_boundary_is_degenerate_and_draws_nothing() {
        let mut r = stream(3, 0);
        let before: u64 = stream(3, 0).random();
        let w = sample_gem(0.5, -0.5, 10, &mut r).unwrap();
        assert_eq!(w.weights, vec![1.0]);
        assert_eq!(w.remainder, 0.0);
        assert_eq!(r.random::<u64>(), before);
    }

    #[test]
    fn gem_rejects_bad_parameters() {
        let mut r = stream(3, 0);
        assert!(sample_gem(1.0, 0.5, 10, &mut r).is_err());
        assert!(sample_gem(0.5, -0.6, 10, &mut r).is_err());
        assert!(sample_gem(0.5, 0.5, 0, &mut r).is_err());
    }

    #[test]
    fn pd_moment_values() {
        assert!((pd_moment(0.5, 0.5, 2.0) - 1.0 / 3.0).abs() < 1e-14);
        assert!((pd_moment(0.3, 1.2, 1.0) - 1.0).abs() < 1e-14);
        assert_eq!(pd_moment(0.5, -0.5, 2.7), 1.0);
        assert!(pd_moment(0.5, 0.5, 0.4).is_infinite());
    }

    #[test]
    fn diversity_of_power_law() {
        let w: Vec<f64> = (1..=400).map(|m| (m as f64).powf(-2.0)).collect();
        let pi_sqrt = std::f64::consts::PI.sqrt();
        for mode in [DiversityMode::Tail, DiversityMode::Regression] {
            let d = diversity_estimate(&w, 0.5, mode).unwrap();
            assert!((d.value - pi_sqrt).abs() < 1e-12, "{mode:?} {}", d.value);
            assert!(d.converged);
        }
        let c = 3.0;
        let w2: Vec<f64> = w.iter().map(|x| c * x).collect();
        let d = diversity_estimate(&w2, 0.5, DiversityMode::Tail).unwrap();
        assert!((d.value - pi_sqrt * c.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn diversity_flags_flat_weights() {
        let w = vec![0.01; 100];
        let d = diversity_estimate(&w, 0.5, DiversityMode::Regression).unwrap();
        assert!(!d.converged);
        assert!(diversity_estimate(&w[..5], 0.5, DiversityMode::Tail).is_err());
    }

    #[test]
    fn beta_beta_string_is_proper_and_ranked() {
        let mut r = stream(5, 1);
        let s = sample_beta_beta_string(0.5, 50, &mut r).unwrap();
        s.validate().unwrap();
        assert_eq!(s.atoms.len(), 50);
        assert!((s.atom_mass() + s.remainder - 1.0).abs() < 1e-12);
        assert!(s.flags.proper && s.flags.xi_s && !s.flags.generalised);
        assert!(s.flags.ell_gap >= 0.0);
    }

    #[test]
    fn generalised_at_half_matches_beta_beta() {
        for seed in 0..20 {
            let a = sample_beta_beta_string(0.5, 30, &mut stream(seed, 0)).unwrap();
            let b = sample_beta_generalised_string(0.5, 30, 7, &mut stream(seed, 0)).unwrap();
            assert_eq!(a.ell, b.ell);
            assert_eq!(a.atoms, b.atoms);
            assert_eq!(a.remainder, b.remainder);
            for q in [1.0, 1.5, 2.0] {
                assert!((a.tail_moment(q) - b.tail_moment(q)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn generalised_groups_recover_coarse_masses() {
        let beta = 1.0 / 3.0;
        let coarse = sample_beta_beta_string(beta, 20, &mut stream(9, 0)).unwrap();
        let s = sample_beta_generalised_string(beta, 20, 15, &mut stream(9, 0)).unwrap();
        assert!((s.atom_mass() + s.remainder - 1.0).abs() < 1e-12);
        let mut grouped = 0.0;
        for c in &coarse.atoms {
            let group: f64 = s.atoms.iter().filter(|a| a.x == c.x).map(|a| a.p).sum();
            assert!(group > 0.0 && group <= c.p * (1.0 + 1e-12));
            grouped += group;
        }
        assert!((grouped - s.atom_mass()).abs() < 1e-12);
        assert!(s.flags.generalised);
    }

    #[test]
    fn merge_examples() {
        let s1 = deterministic_string(1.0, &[(0.5, 1.0)], None).unwrap();
        let s2 = deterministic_string(1.0, &[(0.25, 0.5), (1.0, 0.5)], None).unwrap();
        let m1 = psi_beta_merge(&s1, &s2, 1.0, 0.5).unwrap();
        assert_eq!(m1.ell, s1.ell);
        assert_eq!(m1.atoms, s1.atoms);
        let m0 = psi_beta_merge(&s1, &s2, 0.0, 0.5).unwrap();
        assert_eq!(m0.ell, s2.ell);
        assert_eq!(m0.atoms, s2.atoms);
        let u1 = deterministic_string(1.0, &[], Some(Cdf::uniform(1.0, 1.0))).unwrap();
        let u2 = deterministic_string(1.0, &[], Some(Cdf::uniform(1.0, 1.0))).unwrap();
        let m = psi_beta_merge(&u1, &u2, 0.25, 0.5).unwrap();
        assert!((m.ell - (0.5 + 0.75f64.sqrt())).abs() < 1e-15);
        assert!((m.lambda.as_ref().unwrap().value_at(0.5) - 0.25).abs() < 1e-15);
        assert!((m.lambda_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mixed_length_identity() {
        let beta = 0.4;
        for seed in 0..10 {
            let d = sample_beta_mixed_parts(beta, 20, &mut stream(seed, 2)).unwrap();
            let s = sample_beta_mixed_string(beta, 20, &mut stream(seed, 2)).unwrap();
            let f = d.first.unwrap();
            let want = d.b.powf(beta) * f.ell + (1.0 - d.b).powf(beta) * d.second.ell;
            assert_eq!(s.ell, want);
            assert!((s.atom_mass() + s.remainder - 1.0).abs() < 1e-12);
            assert_eq!(s.flags.kind, StringKind::BetaMixed);
        }
        let half = sample_beta_mixed_string(0.5, 20, &mut stream(1, 0)).unwrap();
        let bb = sample_beta_beta_string(0.5, 20, &mut stream(1, 0)).unwrap();
        assert_eq!(half.atoms, bb.atoms);
    }

    #[test]
    fn deterministic_fixtures() {
        let s = symmetric_binary();
        assert!(s.flags.proper && s.flags.xi_s);
        s.require(Some(true), Some(true)).unwrap();
        let t = ternary_half();
        assert!(!t.flags.proper);
        assert!(t.require(Some(true), None).is_err());
        let u = deterministic_string(1.0, &[], Some(Cdf::uniform(1.0, 1.0))).unwrap();
        assert!(u.flags.proper && u.flags.generalised && u.atoms.is_empty());
        assert!(deterministic_string(1.0, &[(2.0, 0.5)], None).is_err());
    }

    #[test]
    fn json_has_expected_fields() {
        let s = symmetric_binary();
        let v: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(v["ell"], 1.0);
        assert_eq!(v["atoms"][0], serde_json::json!([0.5, 0.5]));
        assert!(v.get("flags").is_some() && v.get("remainder").is_some());
    }
}

//! Run configuration: command-line flags layered over an optional
//! `key = value` file with per-subcommand `[sections]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crt_forge_core::levy::{CellConfig, CellSampler, LevyCharacteristics};
use crt_forge_core::samplers::{deterministic_string, symmetric_binary, ternary_half, StringSampler};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "crt-forge", version, about = "Seeded experiments on recursively grafted random trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub knobs: Knobs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Draw strings of beads and list their atoms.
    SampleString,
    /// Build recursive trees and summarise each generation.
    BuildTree,
    /// Run binary bead splitting.
    BeadSplit,
    /// Run line breaking on Rayleigh cuts.
    LineBreak,
    /// Build growth-fragmentation genealogy trees.
    GrowthFrag,
    /// Heights and Hausdorff gaps along the approximation chain.
    ContractionChain,
    /// Per-replicate power sums of string masses.
    PhiCurve,
    /// Bisection for the Malthusian exponent.
    QStar,
    /// Box-counting dimension of built trees.
    Dimension,
    /// Hausdorff and Prokhorov distances between snapshots and the final tree.
    HpDistance,
    /// Raw and compensated additive martingales.
    Martingale,
    /// Monte Carlo Frostman energy of the mass measure.
    Energy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SampleString => "sample-string",
            Command::BuildTree => "build-tree",
            Command::BeadSplit => "bead-split",
            Command::LineBreak => "line-break",
            Command::GrowthFrag => "growth-frag",
            Command::ContractionChain => "contraction-chain",
            Command::PhiCurve => "phi-curve",
            Command::QStar => "q-star",
            Command::Dimension => "dimension",
            Command::HpDistance => "hp-distance",
            Command::Martingale => "martingale",
            Command::Energy => "energy",
        }
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to built-in defaults.
#[derive(Debug, Default, Args)]
pub struct Knobs {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long = "n-atoms", global = true)]
    pub n_atoms: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "CRT_FORGE_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Config file with `key = value` lines and `[subcommand]` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// String law: binary, ternary, beta-beta, beta-generalised [n_fine=..],
    /// beta-mixed, pd alpha=.. theta=.., growth-frag, or string ell=.. atoms=x:p,...
    #[arg(long, global = true)]
    pub sampler: Option<String>,
    /// Comma-separated exponents for phi-curve and martingale.
    #[arg(long, global = true)]
    pub q: Option<String>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub resolution: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Levy characteristics preset for growth fragmentations.
    #[arg(long, global = true)]
    pub chars: Option<String>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long = "min-scale", global = true)]
    pub min_scale: Option<f64>,
    /// Pair samples for the energy estimator.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

/// Everything that determines the numbers a run produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub subcommand: Command,
    pub sampler: String,
    pub beta: f64,
    pub depth: usize,
    pub steps: usize,
    pub reps: usize,
    pub n_atoms: usize,
    pub seed: u64,
    pub q: Vec<f64>,
    pub p: f64,
    pub resolution: f64,
    pub tol: f64,
    pub gamma: f64,
    pub chars: String,
    pub dt: f64,
    pub min_scale: f64,
    pub samples: usize,
}

/// A resolved invocation: the run config plus where and how to execute it.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub config: RunConfig,
    pub out: PathBuf,
    pub workers: Option<usize>,
}

const KEYS: &[&str] = &[
    "seed", "reps", "beta", "depth", "steps", "n-atoms", "out", "workers", "sampler", "q", "p", "resolution", "tol",
    "gamma", "chars", "dt", "min-scale", "samples",
];

/// Parsed config file: section name to key-value pairs, `""` for the
/// top-level section.
pub type ConfigFile = BTreeMap<String, BTreeMap<String, String>>;

pub fn parse_config_file(text: &str) -> Result<ConfigFile, CliError> {
    let mut out = ConfigFile::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if Command::from_str(name, false).is_err() {
                return Err(CliError::Usage(format!("line {}: unknown section [{name}]", i + 1)));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().replace('_', "-");
        if !KEYS.contains(&k.as_str()) {
            return Err(CliError::Usage(format!("line {}: unknown key {k:?}", i + 1)));
        }
        out.entry(section.clone()).or_default().insert(k, v.trim().to_string());
    }
    Ok(out)
}

struct Layers<'a> {
    file: &'a ConfigFile,
    section: &'static str,
}

impl Layers<'_> {
    fn get(&self, key: &str) -> Option<&str> {
        self.file
            .get(self.section)
            .and_then(|m| m.get(key))
            .or_else(|| self.file.get("").and_then(|m| m.get(key)))
            .map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(s) => s
                .parse()
                .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {s:?}"))),
            None => Ok(default),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad number {x:?} in list {s:?}")))
        })
        .collect()
}

/// Default sampler and depth per subcommand.
fn defaults(cmd: Command) -> (&'static str, usize) {
    match cmd {
        Command::GrowthFrag => ("growth-frag", 3),
        Command::Dimension => ("beta-beta", 8),
        Command::HpDistance => ("beta-beta", 3),
        _ => ("beta-beta", 4),
    }
}

pub fn resolve(cmd: Command, knobs: Knobs) -> Result<Invocation, CliError> {
    let file = match &knobs.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_config_file(&text)?
        }
        None => ConfigFile::new(),
    };
    let l = Layers {
        file: &file,
        section: cmd.name(),
    };
    let (sampler, depth) = defaults(cmd);
    let q = match knobs.q {
        Some(s) => parse_list(&s)?,
        None => parse_list(l.get("q").unwrap_or("0.5,1,2"))?,
    };
    let config = RunConfig {
        subcommand: cmd,
        sampler: l.parse("sampler", knobs.sampler, sampler.to_string())?,
        beta: l.parse("beta", knobs.beta, 0.5)?,
        depth: l.parse("depth", knobs.depth, depth)?,
        steps: l.parse("steps", knobs.steps, 10)?,
        reps: l.parse("reps", knobs.reps, 100)?,
        n_atoms: l.parse("n-atoms", knobs.n_atoms, 16)?,
        seed: l.parse("seed", knobs.seed, 0)?,
        q,
        p: l.parse("p", knobs.p, 2.0)?,
        resolution: l.parse("resolution", knobs.resolution, 0.01)?,
        tol: l.parse("tol", knobs.tol, 0.01)?,
        gamma: l.parse("gamma", knobs.gamma, 1.5)?,
        chars: l.parse("chars", knobs.chars, "kappa-theta theta=1.5".to_string())?,
        dt: l.parse("dt", knobs.dt, 1e-2)?,
        min_scale: l.parse("min-scale", knobs.min_scale, 1e-4)?,
        samples: l.parse("samples", knobs.samples, 20_000)?,
    };
    let out = l.parse("out", knobs.out, PathBuf::from("crt-forge-out"))?;
    let workers = match knobs.workers {
        Some(w) => Some(w),
        None => l
            .get("workers")
            .map(|s| s.parse().map_err(|_| CliError::Usage(format!("config key workers: cannot parse {s:?}"))))
            .transpose()?,
    };
    config.check()?;
    Ok(Invocation { config, out, workers })
}

impl RunConfig {
    /// Range checks that do not need the core library.
    pub fn check(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.reps == 0 {
            return bad("reps must be positive");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if self.q.is_empty() || self.q.iter().any(|q| !(*q > 0.0)) {
            return bad("q values must be positive");
        }
        if !(self.resolution > 0.0 && self.tol > 0.0 && self.dt > 0.0) {
            return bad("resolution, tol and dt must be positive");
        }
        if !(self.min_scale >= 0.0) {
            return bad("min-scale must be >= 0");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// The config as a file accepted by `--config`.
    pub fn to_file(&self) -> String {
        let q: Vec<String> = self.q.iter().map(|q| q.to_string()).collect();
        let rows = [
            ("sampler", self.sampler.clone()),
            ("beta", self.beta.to_string()),
            ("depth", self.depth.to_string()),
            ("steps", self.steps.to_string()),
            ("reps", self.reps.to_string()),
            ("n-atoms", self.n_atoms.to_string()),
            ("seed", self.seed.to_string()),
            ("q", q.join(",")),
            ("p", self.p.to_string()),
            ("resolution", self.resolution.to_string()),
            ("tol", self.tol.to_string()),
            ("gamma", self.gamma.to_string()),
            ("chars", self.chars.clone()),
            ("dt", self.dt.to_string()),
            ("min-scale", self.min_scale.to_string()),
            ("samples", self.samples.to_string()),
        ];
        let mut s = format!("[{}]\n", self.subcommand.name());
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn cell_config(&self) -> CellConfig {
        CellConfig {
            dt: self.dt,
            jump_floor: 0.05,
            ..Default::default()
        }
    }

    /// Builds the string law named by `sampler`.
    pub fn string_sampler(&self) -> Result<StringSampler, CliError> {
        let mut parts = self.sampler.split_whitespace();
        let name = parts.next().ok_or_else(|| CliError::Usage("empty sampler".into()))?;
        let mut kv = BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("sampler: expected key=value, got {p:?}")))?;
            kv.insert(k, v);
        }
        let num = |k: &str| -> Result<f64, CliError> {
            kv.get(k)
                .ok_or_else(|| CliError::Usage(format!("sampler {name} needs {k}=")))?
                .parse()
                .map_err(|_| CliError::Usage(format!("sampler: bad value for {k}")))
        };
        let beta = self.beta;
        Ok(match name {
            "binary" => StringSampler::deterministic(symmetric_binary()),
            "ternary" => StringSampler::deterministic(ternary_half()),
            "beta-beta" => StringSampler::BetaBeta { beta },
            "beta-generalised" => StringSampler::BetaGeneralised {
                beta,
                n_fine: kv.get("n_fine").map_or(Ok(8.0), |_| num("n_fine"))? as usize,
            },
            "beta-mixed" => StringSampler::BetaMixed { beta },
            "pd" => StringSampler::Custom {
                alpha: num("alpha")?,
                theta: num("theta")?,
            },
            "growth-frag" => {
                let chars = LevyCharacteristics::from_preset(&self.chars).map_err(|e| CliError::Usage(e.to_string()))?;
                StringSampler::GrowthFrag {
                    cell: CellSampler::new(chars, beta, self.cell_config()).map_err(|e| CliError::Usage(e.to_string()))?,
                }
            }
            "string" => {
                let ell = num("ell")?;
                let atoms = kv
                    .get("atoms")
                    .ok_or_else(|| CliError::Usage("sampler string needs atoms=x:p,...".into()))?
                    .split(',')
                    .map(|a| {
                        let (x, p) = a
                            .split_once(':')
                            .ok_or_else(|| CliError::Usage(format!("atom {a:?} is not x:p")))?;
                        match (x.parse::<f64>(), p.parse::<f64>()) {
                            (Ok(x), Ok(p)) => Ok((x, p)),
                            _ => Err(CliError::Usage(format!("atom {a:?} is not numeric"))),
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                StringSampler::deterministic(
                    deterministic_string(ell, &atoms, None).map_err(|e| CliError::Usage(e.to_string()))?,
                )
            }
            _ => return Err(CliError::Usage(format!("unknown sampler {name:?}"))),
        })
    }
}

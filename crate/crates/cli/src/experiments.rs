//! One function per subcommand. Replicate `r` always draws from stream
//! `(seed, r)`, so results do not depend on the worker count.

use rayon::prelude::*;
use serde_json::{json, Value};

use crt_forge_core::analysis::{
    box_counting_dimension, dimension_theoretical, frostman_energy, log_radii, malthusian_exponent,
    malthusian_martingale, run_chain, sampler_phi, BisectionConfig, ChainSamples,
};
use crt_forge_core::builder::{bead_splitting_run, build_recursive, line_breaking_aldous, BuildConfig, BuildTrace};
use crt_forge_core::levy::{growth_frag_tree_with, CellSampler, LevyCharacteristics};
use crt_forge_core::metrics::{hausdorff_nested, hp_distance};
use crt_forge_core::rng::{derive_seed, stream};
use crt_forge_core::stats::Estimate;
use crt_forge_core::StringSampler;

use crate::config::{Command, RunConfig};
use crate::output::Table;
use crate::CliError;

/// Tables, extra JSON files and a summary for the manifest.
pub struct Report {
    pub table: Table,
    pub extra: Vec<(String, String)>,
    pub summary: Value,
}

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.subcommand {
        Command::SampleString => sample_string(cfg),
        Command::BuildTree => build_tree(cfg),
        Command::BeadSplit => bead_split(cfg),
        Command::LineBreak => line_break(cfg),
        Command::GrowthFrag => growth_frag(cfg),
        Command::ContractionChain => contraction_chain(cfg),
        Command::PhiCurve => phi_curve(cfg),
        Command::QStar => q_star(cfg),
        Command::Dimension => dimension(cfg),
        Command::HpDistance => hp(cfg),
        Command::Martingale => martingale(cfg),
        Command::Energy => energy(cfg),
    }
}

fn replicates<T: Send>(
    cfg: &RunConfig,
    f: impl Fn(usize) -> Result<T, CliError> + Sync + Send,
) -> Result<Vec<T>, CliError> {
    (0..cfg.reps).into_par_iter().map(f).collect()
}

fn build_config(cfg: &RunConfig) -> Result<BuildConfig, CliError> {
    let mut b = BuildConfig::new(cfg.string_sampler()?, cfg.beta, cfg.depth, cfg.n_atoms);
    b.min_scale = cfg.min_scale;
    b.seed = cfg.seed;
    b.validate()?;
    Ok(b)
}

fn build(cfg: &RunConfig, b: &BuildConfig, r: usize) -> Result<BuildTrace, CliError> {
    Ok(build_recursive(b, &mut stream(cfg.seed, r as u64))?)
}

fn estimate_json(e: &Estimate) -> Value {
    json!({ "mean": e.mean, "se": e.se, "n": e.n, "ci": [e.lo(), e.hi()] })
}

fn sample_string(cfg: &RunConfig) -> Result<Report, CliError> {
    let s = cfg.string_sampler()?;
    let strings = replicates(cfg, |r| Ok(s.sample(cfg.n_atoms, &mut stream(cfg.seed, r as u64))?))?;
    let mut t = Table::new(cfg, &["rank", "x", "p", "ell", "remainder"]);
    for (r, g) in strings.iter().enumerate() {
        for (i, a) in g.atoms.iter().enumerate() {
            t.row(r, [(i + 1).to_string(), a.x.to_string(), a.p.to_string(), g.ell.to_string(), g.remainder.to_string()]);
        }
    }
    let ells: Vec<f64> = strings.iter().map(|g| g.ell).collect();
    let masses: Vec<f64> = strings.iter().map(|g| g.atom_mass()).collect();
    let extra = vec![("string.json".to_string(), strings[0].to_json()?)];
    Ok(Report {
        table: t,
        extra,
        summary: json!({
            "ell": estimate_json(&Estimate::from_samples(&ells)),
            "atom_mass": estimate_json(&Estimate::from_samples(&masses)),
        }),
    })
}

fn build_tree(cfg: &RunConfig) -> Result<Report, CliError> {
    let b = build_config(cfg)?;
    let traces = replicates(cfg, |r| build(cfg, &b, r))?;
    let mut t = Table::new(cfg, &["generation", "segments", "height", "max_scale", "hausdorff_gap"]);
    for (r, tr) in traces.iter().enumerate() {
        for g in tr.generation_summary() {
            t.row(
                r,
                [
                    g.generation.to_string(),
                    g.segment_count.to_string(),
                    g.height.to_string(),
                    g.max_scale.to_string(),
                    g.hausdorff_gap_to_final.to_string(),
                ],
            );
        }
    }
    let heights: Vec<f64> = traces.iter().map(|tr| tr.tree().height()).collect();
    let first = traces[0].tree();
    Ok(Report {
        table: t,
        extra: vec![("tree.json".to_string(), first.to_json()?)],
        summary: json!({
            "height": estimate_json(&Estimate::from_samples(&heights)),
            "segments_first": first.len(),
            "pruned": traces.iter().filter(|tr| tr.is_pruned()).count(),
        }),
    })
}

fn bead_split(cfg: &RunConfig) -> Result<Report, CliError> {
    let s = cfg.string_sampler()?;
    let runs = replicates(cfg, |r| {
        Ok(bead_splitting_run(&s, cfg.beta, cfg.n_atoms, cfg.steps, &mut stream(cfg.seed, r as u64))?)
    })?;
    let mut t = Table::new(cfg, &["step", "segments", "height", "total_length"]);
    for (r, run) in runs.iter().enumerate() {
        for (k, (tree, _)) in run.iter().enumerate() {
            t.row(
                r,
                [k.to_string(), tree.len().to_string(), tree.height().to_string(), tree.total_length().to_string()],
            );
        }
    }
    let last: Vec<f64> = runs.iter().filter_map(|run| run.last()).map(|(tree, _)| tree.height()).collect();
    Ok(Report {
        table: t,
        extra: Vec::new(),
        summary: json!({ "final_height": estimate_json(&Estimate::from_samples(&last)) }),
    })
}

fn line_break(cfg: &RunConfig) -> Result<Report, CliError> {
    let trees = replicates(cfg, |r| Ok(line_breaking_aldous(cfg.steps, &mut stream(cfg.seed, r as u64))))?;
    let mut t = Table::new(cfg, &["branches", "height", "total_length"]);
    for (r, tree) in trees.iter().enumerate() {
        t.row(r, [tree.len().to_string(), tree.height().to_string(), tree.total_length().to_string()]);
    }
    let h: Vec<f64> = trees.iter().map(|x| x.height()).collect();
    Ok(Report {
        table: t,
        extra: Vec::new(),
        summary: json!({ "height": estimate_json(&Estimate::from_samples(&h)) }),
    })
}

fn growth_frag(cfg: &RunConfig) -> Result<Report, CliError> {
    let chars = LevyCharacteristics::from_preset(&cfg.chars)?;
    let cell = CellSampler::new(chars, cfg.beta, cfg.cell_config())?;
    let traces = replicates(cfg, |r| {
        Ok(growth_frag_tree_with(&cell, cfg.depth, cfg.n_atoms, cfg.min_scale, &mut stream(cfg.seed, r as u64))?)
    })?;
    let mut t = Table::new(cfg, &["segments", "height", "total_length", "outside_theorem"]);
    for (r, tr) in traces.iter().enumerate() {
        let tree = tr.tree();
        t.row(
            r,
            [
                tree.len().to_string(),
                tree.height().to_string(),
                tree.total_length().to_string(),
                tr.outside_theorem.to_string(),
            ],
        );
    }
    let h: Vec<f64> = traces.iter().map(|tr| tr.tree().height()).collect();
    Ok(Report {
        table: t,
        extra: Vec::new(),
        summary: json!({
            "chars": cell.chars.label(),
            "height": estimate_json(&Estimate::from_samples(&h)),
            "outside_theorem": traces.iter().any(|tr| tr.outside_theorem),
        }),
    })
}

fn contraction_chain(cfg: &RunConfig) -> Result<Report, CliError> {
    let b = build_config(cfg)?;
    let chain = run_chain(&b, cfg.reps, cfg.seed)?;
    let mut t = Table::new(cfg, &["generation", "height", "gap", "max_scale"]);
    for r in 0..cfg.reps {
        for m in 0..=chain.depth {
            let gap = chain.gaps[r].get(m).map_or(String::new(), |g| g.to_string());
            let ms = chain.max_scales[r].get(m).map_or(String::new(), |g| g.to_string());
            t.row(r, [m.to_string(), chain.heights[r][m].to_string(), gap, ms]);
        }
    }
    let w = chain.wp_successive(cfg.p)?;
    let ratio = if chain.depth >= 3 {
        ChainSamples::decay_ratio(&w, 1, chain.depth - 1).ok()
    } else {
        None
    };
    let gaps: Vec<Value> = chain.gap_moments(cfg.p).iter().map(estimate_json).collect();
    Ok(Report {
        table: t,
        extra: Vec::new(),
        summary: json!({ "p": cfg.p, "wp_successive": w, "decay_ratio": ratio, "gap_moments": gaps }),
    })
}

fn phi_curve(cfg: &RunConfig) -> Result<Report, CliError> {
    let s = cfg.string_sampler()?;
    let strings = replicates(cfg, |r| Ok(s.sample(cfg.n_atoms, &mut stream(cfg.seed, r as u64))?))?;
    let mut t = Table::new(cfg, &["q", "value"]);
    let mut curve = Vec::new();
    for &q in &cfg.q {
        let vals: Vec<f64> = strings.iter().map(|g| g.power_sum(q) + g.tail_moment(q)).collect();
        for (r, v) in vals.iter().enumerate() {
            t.row(r, [q.to_string(), v.to_string()]);
        }
        curve.push(json!({ "q": q, "phi": estimate_json(&Estimate::from_samples(&vals)) }));
    }
    Ok(Report {
        table: t,
        extra: Vec::new(),
        summary: json!({ "curve": curve }),
    })
}

fn q_star(cfg: &RunConfig) -> Result<Report, CliError> {
    let s = cfg.string_sampler()?;
    let bis = BisectionConfig {
        tol: cfg.tol,
        reps: cfg.reps,
        reps_cap: 16 * cfg.reps,
        ..Default::default()
    };
    let q = malthusian_exponent(sampler_phi(&s, cfg.n_atoms, cfg.seed), &bis)?;
    let (leaf, tree) = dimension_theoretical(q.mid(), cfg.beta)?;
    let mut t = Table::new(cfg, &["q_lo", "q_hi", "ambiguous", "evaluations", "leaf_dimension", "tree_dimension"]);
    t.row(
        0,
        [
            q.lo.to_string(),
            q.hi.to_string(),
            q.ambiguous.to_string(),
            q.evaluations.to_string(),
            leaf.to_string(),
            tree.to_string(),
        ],
    );
    Ok(Report {
        table: t,
        extra: Vec::new(),
        summary: json!({ "q_star": q, "leaf_dimension": leaf, "tree_dimension": tree }),
    })
}

fn dimension(cfg: &RunConfig) -> Result<Report, CliError> {
    let b = build_config(cfg)?;
    let radii = log_radii(1.0, 0.05, 6);
    let counts = replicates(cfg, |r| Ok(box_counting_dimension(&build(cfg, &b, r)?.tree(), &radii, false)?))?;
    let mut t = Table::new(cfg, &["radius", "count"]);
    for (r, c) in counts.iter().enumerate() {
        for (rad, n) in c.radii.iter().zip(&c.counts) {
            t.row(r, [rad.to_string(), n.to_string()]);
        }
    }
    let slopes: Vec<f64> = counts.iter().map(|c| c.slope).collect();
    Ok(Report {
        table: t,
        extra: Vec::new(),
        summary: json!({ "slopes": slopes, "slope": estimate_json(&Estimate::from_samples(&slopes)) }),
    })
}

fn hp(cfg: &RunConfig) -> Result<Report, CliError> {
    let b = build_config(cfg)?;
    let rows = replicates(cfg, |r| {
        let tr = build(cfg, &b, r)?;
        let (full, mu) = (tr.tree(), tr.measure());
        (0..cfg.depth)
            .map(|m| {
                let small = tr.tree_at(m);
                let h = hausdorff_nested(&small, &full)?;
                let hp = hp_distance((&small, &tr.measure_at(m)), (&full, &mu), cfg.resolution)?;
                Ok((m, h, hp.lo, hp.hi))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let mut t = Table::new(cfg, &["generation", "hausdorff", "hp_lo", "hp_hi"]);
    for (r, rs) in rows.iter().enumerate() {
        for (m, h, lo, hi) in rs {
            t.row(r, [m.to_string(), h.to_string(), lo.to_string(), hi.to_string()]);
        }
    }
    Ok(Report {
        table: t,
        extra: Vec::new(),
        summary: json!({ "resolution": cfg.resolution }),
    })
}

fn martingale(cfg: &RunConfig) -> Result<Report, CliError> {
    let b = build_config(cfg)?;
    let traces = replicates(cfg, |r| {
        let tr = build(cfg, &b, r)?;
        cfg.q
            .iter()
            .map(|&q| Ok(malthusian_martingale(&tr, q)?))
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let mut t = Table::new(cfg, &["q", "generation", "raw", "compensated"]);
    for (r, ms) in traces.iter().enumerate() {
        for m in ms {
            for (n, (raw, comp)) in m.raw.iter().zip(&m.compensated).enumerate() {
                t.row(r, [m.q.to_string(), n.to_string(), raw.to_string(), comp.to_string()]);
            }
        }
    }
    let mut last = Vec::new();
    for (i, &q) in cfg.q.iter().enumerate() {
        let raw: Vec<f64> = traces.iter().filter_map(|ms| ms[i].raw.last().copied()).collect();
        last.push(json!({ "q": q, "raw_final": estimate_json(&Estimate::from_samples(&raw)) }));
    }
    Ok(Report {
        table: t,
        extra: Vec::new(),
        summary: json!({ "martingales": last }),
    })
}

fn energy(cfg: &RunConfig) -> Result<Report, CliError> {
    let b = build_config(cfg)?;
    let reports = replicates(cfg, |r| {
        let tr = build(cfg, &b, r)?;
        Ok(frostman_energy(&tr.measure(), cfg.gamma, cfg.samples, derive_seed(cfg.seed, r as u64))?)
    })?;
    let mut t = Table::new(cfg, &["gamma", "estimate", "se", "exclusion_rate", "diverging"]);
    for (r, e) in reports.iter().enumerate() {
        t.row(
            r,
            [
                e.gamma.to_string(),
                e.estimate.mean.to_string(),
                e.estimate.se.to_string(),
                e.exclusion_rate.to_string(),
                e.diverging.to_string(),
            ],
        );
    }
    let means: Vec<f64> = reports.iter().map(|e| e.estimate.mean).collect();
    Ok(Report {
        table: t,
        extra: Vec::new(),
        summary: json!({
            "gamma": cfg.gamma,
            "energy": estimate_json(&Estimate::from_samples(&means)),
            "diverging": reports.iter().filter(|e| e.diverging).count(),
        }),
    })
}

/// Samplers are validated once before any replicate runs.
pub fn preflight(cfg: &RunConfig) -> Result<(), CliError> {
    if matches!(
        cfg.subcommand,
        Command::LineBreak | Command::GrowthFrag
    ) {
        return Ok(());
    }
    let s = cfg.string_sampler()?;
    if let StringSampler::Deterministic { .. } = s {
        return Ok(());
    }
    if cfg.n_atoms < 10 {
        return Err(CliError::Usage("n-atoms must be >= 10 for random samplers".into()));
    }
    Ok(())
}

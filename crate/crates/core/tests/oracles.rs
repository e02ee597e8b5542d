//! Closed-form and hand-computed values checked against the library.

use approx::assert_relative_eq;
use statrs::function::gamma::gamma;

use crt_forge_core::analysis::{
    box_counting_dimension, dimension_theoretical, log_radii, malthusian_exponent, malthusian_martingale, phi_estimate,
    sampler_phi, stopping_line, BisectionConfig,
};
use crt_forge_core::builder::{build_recursive, rayleigh_cuts, BuildConfig};
use crt_forge_core::grafting::{graft, GraftInput};
use crt_forge_core::levy::{kappa, kappa_theta, simulate_cell, CellConfig, JumpPlan, LevyCharacteristics};
use crt_forge_core::metrics::{contraction_factor, hausdorff_nested, prokhorov_distance, wasserstein_1d};
use crt_forge_core::rng::stream;
use crt_forge_core::samplers::{
    deterministic_string, diversity_estimate, pd_moment, psi_beta_merge, symmetric_binary, ternary_half,
    DiversityMode, StringSampler,
};
use crt_forge_core::stats::Estimate;
use crt_forge_core::{Cdf, EmbeddedTree, Segment, SparsePoint, TreeMeasure, UlamWord};

fn gamma_ratio(alpha: f64, theta: f64, q: f64) -> f64 {
    gamma(theta + 1.0) * gamma(q - alpha) / (gamma(theta + q) * gamma(1.0 - alpha))
}

/// Plain GEM stick-breaking, independent of the library sampler.
fn brute_force_pd_moment(alpha: f64, theta: f64, q: f64, draws: usize) -> Estimate {
    use rand_distr::{Beta, Distribution};
    let mut rng = stream(99, 0);
    let vals: Vec<f64> = (0..draws)
        .map(|_| {
            let mut rest = 1.0f64;
            let mut s = 0.0;
            for i in 1..=4000 {
                let w = Beta::new(1.0 - alpha, theta + i as f64 * alpha).unwrap().sample(&mut rng);
                s += (rest * w).powf(q);
                rest *= 1.0 - w;
                if rest < 1e-12 {
                    break;
                }
            }
            s
        })
        .collect();
    Estimate::from_samples(&vals)
}

fn binary_trace(depth: usize) -> crt_forge_core::builder::BuildTrace {
    let cfg = BuildConfig::new(StringSampler::deterministic(symmetric_binary()), 1.0, depth, 10);
    build_recursive(&cfg, &mut stream(1, 0)).unwrap()
}

#[test]
fn pd_moment_agrees_with_gamma_ratio_and_brute_force() {
    assert_relative_eq!(pd_moment(0.5, 0.5, 2.0), 1.0 / 3.0, max_relative = 1e-12);
    for &(a, t, q) in &[(0.5, 0.5, 2.0), (0.3, 1.0, 1.5), (0.5, -0.25, 3.0)] {
        assert_relative_eq!(pd_moment(a, t, q), gamma_ratio(a, t, q), max_relative = 1e-10);
    }
    let mc = brute_force_pd_moment(0.5, 0.5, 2.0, 20_000);
    assert!(mc.contains(1.0 / 3.0), "{mc:?}");
}

#[test]
fn sampled_pd_strings_have_second_moment_one_third() {
    let s = StringSampler::BetaBeta { beta: 0.5 };
    let est = phi_estimate(&s, 2.0, 20_000, 16, 5).unwrap();
    assert!(est.corrected.contains(1.0 / 3.0), "{:?}", est.corrected);
}

#[test]
fn degenerate_pd_boundary_is_a_single_block() {
    let s = StringSampler::BetaGeneralised { beta: 0.5, n_fine: 8 };
    let b = StringSampler::BetaBeta { beta: 0.5 };
    let x = s.sample(12, &mut stream(3, 0)).unwrap();
    let y = b.sample(12, &mut stream(3, 0)).unwrap();
    assert_eq!(x.atoms.len(), y.atoms.len());
    for (u, v) in x.atoms.iter().zip(&y.atoms) {
        assert_relative_eq!(u.p, v.p, max_relative = 1e-12);
        assert_relative_eq!(u.x, v.x, max_relative = 1e-12);
    }
}

#[test]
fn diversity_of_power_law_weights() {
    let w: Vec<f64> = (1..=400).map(|m| (m as f64).powi(-2)).collect();
    for mode in [DiversityMode::Tail, DiversityMode::Regression] {
        let d = diversity_estimate(&w, 0.5, mode).unwrap();
        assert_relative_eq!(d.value, std::f64::consts::PI.sqrt(), max_relative = 1e-9);
    }
    let c = 0.3;
    let w: Vec<f64> = (1..=400).map(|m| c * (m as f64).powi(-2)).collect();
    let d = diversity_estimate(&w, 0.5, DiversityMode::Tail).unwrap();
    assert_relative_eq!(d.value, gamma(0.5) * c.sqrt(), max_relative = 1e-9);
}

#[test]
fn merged_string_length_and_mass() {
    let unit = deterministic_string(1.0, &[], Some(Cdf::uniform(1.0, 1.0))).unwrap();
    let m = psi_beta_merge(&unit, &unit, 0.25, 0.5).unwrap();
    assert_relative_eq!(m.ell, 0.5 + 0.75f64.sqrt(), max_relative = 1e-12);
    let lambda = m.lambda.as_ref().unwrap();
    assert_relative_eq!(lambda.value_at(0.5), 0.25, max_relative = 1e-12);
}

#[test]
fn grafted_distances_by_hand() {
    let s = deterministic_string(2.0, &[(1.0, 0.25)], None).unwrap();
    let t = graft(&GraftInput {
        string: s,
        children: vec![EmbeddedTree::single(0.5, 1.0)],
        beta: 0.5,
    })
    .unwrap();
    let leaf = t.get(&UlamWord::from(&[1u32][..])).unwrap().tip();
    assert_relative_eq!(leaf.norm(), 1.5, max_relative = 1e-12);
    assert_relative_eq!(t.height(), 2.0, max_relative = 1e-12);

    let s = deterministic_string(2.0, &[(1.0, 0.5), (2.0, 0.5)], None).unwrap();
    let t = graft(&GraftInput {
        string: s,
        children: vec![EmbeddedTree::single(1.0, 1.0), EmbeddedTree::single(1.0, 1.0)],
        beta: 1.0,
    })
    .unwrap();
    let a = t.get(&UlamWord::from(&[1u32][..])).unwrap().tip();
    let b = t.get(&UlamWord::from(&[2u32][..])).unwrap().tip();
    assert_relative_eq!(crt_forge_core::l1_distance(&a, &b), 2.0, max_relative = 1e-12);
}

#[test]
fn binary_build_by_hand() {
    let tr = binary_trace(2);
    let t = tr.tree();
    assert_eq!(t.len(), 7);
    let mut scales: Vec<f64> = t.segments().map(|s| s.scale).collect();
    scales.sort_by(|a, b| b.total_cmp(a));
    assert_eq!(scales, vec![1.0, 0.5, 0.5, 0.25, 0.25, 0.25, 0.25]);
    assert_relative_eq!(t.height(), 1.75, max_relative = 1e-12);
}

#[test]
fn pendant_hausdorff_gap() {
    let base = EmbeddedTree::single(1.0, 2.0);
    let mut big = base.clone();
    big.insert(Segment {
        word: UlamWord::from(&[1u32][..]),
        base: SparsePoint::axis(UlamWord::root(), 1.0),
        length: 0.5,
        scale: 0.5,
        raw_length: 1.0,
    });
    assert_relative_eq!(hausdorff_nested(&base, &big).unwrap(), 0.5, max_relative = 1e-12);

    let tr = binary_trace(3);
    let gaps = tr.nested_gaps(3);
    // Pendant subtree below generation m has height sum_{k>m} 2^-k.
    for (m, g) in gaps.iter().enumerate() {
        let expect: f64 = (m + 1..=3).map(|k| 0.5f64.powi(k as i32)).sum();
        assert_relative_eq!(*g, expect, max_relative = 1e-12);
    }
}

#[test]
fn prokhorov_between_diracs() {
    let x = SparsePoint::axis(UlamWord::root(), 0.0);
    for &t in &[0.3, 0.7, 1.5] {
        let y = SparsePoint::axis(UlamWord::root(), t);
        let r = 0.01;
        let b = prokhorov_distance(&TreeMeasure::dirac(x.clone()), &TreeMeasure::dirac(y.clone()), r).unwrap();
        assert!(b.lo - r <= t.min(1.0) && t.min(1.0) <= b.hi + r, "t={t} {b:?}");
        let half = TreeMeasure {
            atoms: vec![(x.clone(), 0.5), (y.clone(), 0.5)],
            ..Default::default()
        };
        let b = prokhorov_distance(&TreeMeasure::dirac(x.clone()), &half, r).unwrap();
        assert!(b.lo - r <= t.min(0.5) && t.min(0.5) <= b.hi + r, "t={t} {b:?}");
    }
}

#[test]
fn wasserstein_sorted_coupling() {
    assert_relative_eq!(wasserstein_1d(&[0.0, 2.0], &[1.0, 3.0], 1.0).unwrap(), 1.0);
    assert_relative_eq!(wasserstein_1d(&[2.0, 0.0], &[3.0, 1.0], 2.0).unwrap(), 1.0);
}

#[test]
fn contraction_constants() {
    let det = StringSampler::deterministic(symmetric_binary());
    let c = contraction_factor(&det, 2.0, 1.0, 1, 10, 0).unwrap();
    assert_relative_eq!(c.mean.mean, 0.5, max_relative = 1e-12);
    assert_relative_eq!(c.factor.mean, 0.5f64.sqrt(), max_relative = 1e-12);

    let pd = StringSampler::BetaBeta { beta: 0.5 };
    let c = contraction_factor(&pd, 4.0, 0.5, 20_000, 16, 8).unwrap();
    assert!(c.mean.contains(1.0 / 3.0), "{:?}", c.mean);
}

#[test]
fn phi_and_q_star_of_deterministic_strings() {
    let tern = StringSampler::deterministic(ternary_half());
    assert_relative_eq!(phi_estimate(&tern, 2.0, 1, 10, 0).unwrap().corrected.mean, 0.75, max_relative = 1e-12);

    let cfg = BisectionConfig {
        tol: 1e-4,
        ..Default::default()
    };
    let bin = StringSampler::deterministic(symmetric_binary());
    let q = malthusian_exponent(sampler_phi(&bin, 10, 0), &cfg).unwrap();
    assert!(q.contains(1.0) && q.hi - q.lo < 1e-3, "{q:?}");
    let q = malthusian_exponent(sampler_phi(&tern, 10, 0), &cfg).unwrap();
    assert!(q.contains(3f64.log2()) && q.hi - q.lo < 1e-3, "{q:?}");
}

#[test]
fn theoretical_dimensions() {
    assert_eq!(dimension_theoretical(1.0, 0.5).unwrap(), (2.0, 2.0));
    let (a, b) = dimension_theoretical(1.0, 1.0 - 1.0 / 1.5).unwrap();
    assert_relative_eq!(a, 3.0, max_relative = 1e-12);
    assert_relative_eq!(b, 3.0, max_relative = 1e-12);
}

#[test]
fn binary_stopping_lines() {
    let tr = binary_trace(4);
    let l = stopping_line(&tr, 0.25).unwrap();
    assert_eq!(l.words.len(), 4);
    assert!(l.words.iter().all(|w| w.generation() == 2));
    let l = stopping_line(&tr, 0.5).unwrap();
    assert_eq!(l.words.len(), 2);
    assert!(l.words.iter().all(|w| w.generation() == 1));
}

#[test]
fn ternary_martingale_is_constant() {
    let cfg = BuildConfig::new(StringSampler::deterministic(ternary_half()), 1.0, 5, 10);
    let tr = build_recursive(&cfg, &mut stream(0, 0)).unwrap();
    let m = malthusian_martingale(&tr, 3f64.log2()).unwrap();
    for v in &m.raw {
        assert_relative_eq!(*v, 1.0, max_relative = 1e-10);
    }
}

#[test]
fn unit_segment_has_box_dimension_one() {
    let t = EmbeddedTree::single(1.0, 1.0);
    let b = box_counting_dimension(&t, &log_radii(0.1, 0.005, 6), false).unwrap();
    assert!((b.slope - 1.0).abs() < 0.1, "{b:?}");
}

#[test]
fn kappa_by_hand() {
    let v = kappa_theta(1.5, 2.5).unwrap();
    assert_relative_eq!(v, -1.0 / (2.0 * std::f64::consts::PI.sqrt()), max_relative = 1e-12);
    let d = LevyCharacteristics::drift_only(-1.0);
    assert_relative_eq!(kappa(&d, 1.0).unwrap().value, -1.0, max_relative = 1e-12);
}

#[test]
fn drift_only_cell_dies_at_one() {
    let chars = LevyCharacteristics::drift_only(-1.0);
    let cfg = CellConfig {
        record_path: true,
        ..Default::default()
    };
    let plan = JumpPlan::new(&chars.nu, cfg.jump_floor).unwrap();
    let p = simulate_cell(&chars, &plan, 1.0, 1.0, &cfg, &mut stream(0, 0)).unwrap();
    assert!((p.zeta - 1.0).abs() <= cfg.dt, "zeta {}", p.zeta);
    for (t, z) in p.times.iter().zip(&p.values) {
        assert!((z - (1.0 - t).max(0.0)).abs() < 1e-9, "t={t} z={z}");
    }
}

#[test]
fn rayleigh_first_cut_mean() {
    let mut rng = stream(17, 0);
    let v: Vec<f64> = (0..20_000).map(|_| rayleigh_cuts(0, &mut rng)[0]).collect();
    let e = Estimate::from_samples(&v);
    assert!(e.contains((std::f64::consts::PI / 2.0).sqrt()), "{e:?}");
}

use proptest::prelude::*;

use crt_forge_core::analysis::{malthusian_martingale, phi_estimate, stopping_line};
use crt_forge_core::builder::{build_recursive, BuildConfig};
use crt_forge_core::grafting::{shift_subtree, AbstractTree};
use crt_forge_core::metrics::{hausdorff_general, hausdorff_nested, prokhorov_distance, wasserstein_1d};
use crt_forge_core::rng::stream;
use crt_forge_core::samplers::{deterministic_string, StringSampler};
use crt_forge_core::{l1_distance, SparsePoint, TreeMeasure, UlamWord};

fn random_sampler(kind: u8, beta: f64) -> StringSampler {
    match kind % 4 {
        0 => StringSampler::BetaBeta { beta },
        1 => StringSampler::BetaGeneralised {
            beta: beta.min(0.5),
            n_fine: 6,
        },
        2 => StringSampler::BetaMixed { beta: beta.min(0.5) },
        _ => StringSampler::Custom {
            alpha: beta,
            theta: 1.0 - beta,
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_is_isometric(seed in any::<u64>(), beta in 0.1f64..1.0) {
        let mut rng = stream(seed, 0);
        let t = AbstractTree::random(4, &mut rng);
        let e = t.embed(beta).unwrap();
        prop_assert!(e.validate().is_empty());
        for _ in 0..10 {
            let a = t.sample_point(&mut rng);
            let b = t.sample_point(&mut rng);
            let d = t.distance(beta, &a, &b);
            let l = l1_distance(&t.locate(&e, &a).unwrap(), &t.locate(&e, &b).unwrap());
            prop_assert!((d - l).abs() <= 1e-9 * d.max(1e-12), "{} vs {}", d, l);
        }
    }

    #[test]
    fn shifting_preserves_distances(seed in any::<u64>(), j in 1u32..6) {
        let mut rng = stream(seed, 1);
        let t = AbstractTree::random(3, &mut rng).embed(0.5).unwrap();
        let s = shift_subtree(j, &t);
        let tips: Vec<SparsePoint> = t.segments().map(|x| x.tip()).collect();
        let shifted: Vec<SparsePoint> = s.segments().map(|x| x.tip()).collect();
        prop_assert_eq!(tips.len(), shifted.len());
        for a in 0..tips.len() {
            for b in 0..tips.len() {
                let d0 = l1_distance(&tips[a], &tips[b]);
                let d1 = l1_distance(&shifted[a], &shifted[b]);
                prop_assert!((d0 - d1).abs() <= 1e-12 * d0.max(1.0));
            }
        }
    }

    #[test]
    fn sampled_strings_are_ranked_and_conserve_mass(seed in any::<u64>(), kind in 0u8..4, beta in 0.2f64..0.8) {
        let s = random_sampler(kind, beta).sample(12, &mut stream(seed, 2)).unwrap();
        prop_assert!(s.is_ranked());
        prop_assert!(s.validate().is_ok());
        let total = s.atom_mass() + s.lambda_mass() + s.remainder;
        prop_assert!((total - 1.0).abs() < 1e-9, "total {}", total);
        prop_assert!(s.atoms.iter().all(|a| a.x >= 0.0 && a.x <= s.ell));
    }

    #[test]
    fn snapshots_are_nested_with_exact_gaps(seed in any::<u64>(), depth in 1usize..4) {
        let cfg = BuildConfig::new(StringSampler::BetaBeta { beta: 0.5 }, 0.5, depth, 10);
        let tr = build_recursive(&cfg, &mut stream(seed, 3)).unwrap();
        let gaps = tr.nested_gaps(depth);
        let full = tr.tree();
        for m in 0..depth {
            let small = tr.tree_at(m);
            prop_assert!(small.is_submap_of(&full));
            let h = hausdorff_nested(&small, &full).unwrap();
            prop_assert!((h - gaps[m]).abs() <= 1e-9 * h.max(1.0), "m={} {} vs {}", m, h, gaps[m]);
        }
        let heights = tr.heights_by_depth();
        prop_assert!(heights.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!((heights[depth] - full.height()).abs() < 1e-9);
    }

    #[test]
    fn measures_account_for_all_mass(seed in any::<u64>(), kind in 0u8..4, depth in 0usize..3) {
        let cfg = BuildConfig::new(random_sampler(kind, 0.4), 0.4, depth, 10);
        let tr = build_recursive(&cfg, &mut stream(seed, 4)).unwrap();
        for m in 0..=depth {
            let mu = tr.measure_at(m);
            prop_assert!((mu.accounted_mass() - 1.0).abs() < 1e-9, "m={} mass {}", m, mu.accounted_mass());
        }
    }

    #[test]
    fn wasserstein_triangle(a in prop::collection::vec(-5.0f64..5.0, 1..30),
                            b in prop::collection::vec(-5.0f64..5.0, 1..30),
                            c in prop::collection::vec(-5.0f64..5.0, 1..30),
                            p in 1.0f64..4.0) {
        let ab = wasserstein_1d(&a, &b, p).unwrap();
        let bc = wasserstein_1d(&b, &c, p).unwrap();
        let ac = wasserstein_1d(&a, &c, p).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!((ab - wasserstein_1d(&b, &a, p).unwrap()).abs() < 1e-9);
        let doubled: Vec<f64> = a.iter().chain(&a).copied().collect();
        prop_assert!(wasserstein_1d(&a, &doubled, p).unwrap() < 1e-9);
    }

    #[test]
    fn hausdorff_triangle_and_symmetry(seed in any::<u64>()) {
        let mut rng = stream(seed, 5);
        let t: Vec<_> = (0..3).map(|_| AbstractTree::random(2, &mut rng).embed(0.5).unwrap()).collect();
        let r = 0.05;
        let ab = hausdorff_general(&t[0], &t[1], r).unwrap();
        let ba = hausdorff_general(&t[1], &t[0], r).unwrap();
        let bc = hausdorff_general(&t[1], &t[2], r).unwrap();
        let ac = hausdorff_general(&t[0], &t[2], r).unwrap();
        prop_assert!((ab.lo - ba.lo).abs() < 1e-12);
        prop_assert!(ac.lo <= ab.hi + bc.hi);
    }

    #[test]
    fn prokhorov_bracket_is_narrow_and_symmetric(xs in prop::collection::vec((0.0f64..2.0, 0.05f64..1.0), 1..5),
                                                 ys in prop::collection::vec((0.0f64..2.0, 0.05f64..1.0), 1..5)) {
        let mk = |v: &[(f64, f64)]| {
            let tot: f64 = v.iter().map(|x| x.1).sum();
            TreeMeasure {
                atoms: v.iter().map(|&(t, m)| (SparsePoint::axis(UlamWord::root(), t), m / tot)).collect(),
                ..Default::default()
            }
        };
        let (a, b) = (mk(&xs), mk(&ys));
        let r = 0.01;
        let ab = prokhorov_distance(&a, &b, r).unwrap();
        let ba = prokhorov_distance(&b, &a, r).unwrap();
        prop_assert!(ab.width() <= 2.0 * r);
        prop_assert!(ab.lo <= ba.hi && ba.lo <= ab.hi);
        prop_assert!(ab.hi <= 1.0 + r);
    }

    #[test]
    fn phi_is_nonincreasing_for_subprobability_strings(ps in prop::collection::vec(0.01f64..1.0, 1..6), q in 0.2f64..3.0) {
        let atoms: Vec<(f64, f64)> = ps.iter().enumerate().map(|(i, p)| (i as f64 * 0.1, *p)).collect();
        let s = StringSampler::deterministic(deterministic_string(1.0, &atoms, None).unwrap());
        let a = phi_estimate(&s, q, 100, 10, 0).unwrap().corrected.mean;
        let b = phi_estimate(&s, q + 0.5, 100, 10, 0).unwrap().corrected.mean;
        prop_assert!(b <= a);
    }

    #[test]
    fn stopping_line_is_an_antichain_below_the_martingale(seed in any::<u64>(), eps in 0.05f64..0.5) {
        let cfg = BuildConfig::new(StringSampler::BetaBeta { beta: 0.5 }, 0.5, 6, 10);
        let mut c = cfg.clone();
        c.min_scale = eps / 2.0;
        let tr = build_recursive(&c, &mut stream(seed, 6)).unwrap();
        let line = match stopping_line(&tr, eps) {
            Ok(l) => l,
            Err(_) => return Ok(()),
        };
        for (i, a) in line.words.iter().enumerate() {
            for b in &line.words[i + 1..] {
                prop_assert!(!a.is_prefix_of(b) && !b.is_prefix_of(a));
            }
        }
        prop_assert!(line.scales.iter().all(|s| *s <= eps));
        let m = malthusian_martingale(&tr, 1.0).unwrap();
        prop_assert!(line.power_sum(1.0) <= m.compensated[0] + 1e-9);
    }

    #[test]
    fn word_encoding_roundtrips(digits in prop::collection::vec(1u32..20, 0..6)) {
        let w = UlamWord::from(&digits[..]);
        let parsed: UlamWord = w.encode().parse().unwrap();
        prop_assert_eq!(&parsed, &w);
        let p = SparsePoint::from_pairs([(w.clone(), 0.5), (UlamWord::root(), 1.25)]);
        let back: SparsePoint = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }
}

//! Property tests for the spec-level invariants.

mod support;

use fbpick_core::dataset::{split_dataset, DatasetManifest, GatherEntry};
use fbpick_core::metrics::{hit_rate, mae};
use fbpick_core::spr::{joint_loglik, latent_update, pick, refine};
use fbpick_core::types::{Gather, LabelMask2D, PickSet1D, ProbabilityMap, UNLABELED};
use fbpick_core::window::{picks_for_window, unwindow_picks, window_gather, WindowShape};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{brute_force_update, random_instance, random_smooth_instance};

fn picks_strategy(m: usize, n: usize) -> impl Strategy<Value = Vec<i32>> {
    proptest::collection::vec(-1..(m as i32), n)
}

proptest! {
    #[test]
    fn mask_roundtrip_recovers_picks(raw in picks_strategy(24, 12)) {
        let picks = PickSet1D::new(raw).unwrap();
        let mask = LabelMask2D::from_picks(&picks, 24).unwrap();
        prop_assert_eq!(mask.to_picks(), picks);
    }

    #[test]
    fn windowing_roundtrip_preserves_picks(
        m in 4usize..40,
        n in 1usize..70,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0f32..1.0));
        let gather = Gather::new(amp, "g", 1.0).unwrap();
        let picks = PickSet1D::new(
            (0..n)
                .map(|_| {
                    if rng.random_bool(0.2) { UNLABELED } else { rng.random_range(0..m as i32) }
                })
                .collect(),
        )
        .unwrap();
        let shape = WindowShape::new(48, 16);
        let windows = window_gather(&gather, shape).unwrap();
        // every window's valid mask covers exactly M x (real traces)
        for w in &windows {
            let ones = w.valid_mask.iter().filter(|&&v| v).count();
            prop_assert_eq!(ones, m * w.valid_cols());
        }
        let pairs: Vec<_> = windows
            .iter()
            .map(|w| (picks_for_window(&picks, w), w))
            .collect();
        prop_assert_eq!(unwindow_picks(&pairs).unwrap(), picks);
    }

    #[test]
    fn split_is_a_partition(g in 3usize..120, seed in 0u64..500) {
        let manifest = DatasetManifest {
            dataset_name: "d".into(),
            sample_rate_ms: 1.0,
            gathers: (0..g)
                .map(|i| GatherEntry {
                    gather_id: format!("g{i}"),
                    num_samples: 8,
                    num_traces: 8,
                    amplitude_path: String::new(),
                    picks_path: String::new(),
                })
                .collect(),
        };
        let (tr, va, te) = split_dataset(&manifest, (0.8, 0.1, 0.1), seed).unwrap();
        let mut seen = std::collections::HashSet::new();
        for part in [&tr, &va, &te] {
            for e in &part.gathers {
                prop_assert!(seen.insert(e.gather_id.clone()), "duplicate {}", e.gather_id);
            }
        }
        prop_assert_eq!(seen.len(), g);
        prop_assert_eq!(va.len(), g / 10);
        prop_assert_eq!(te.len(), g / 10);
    }

    #[test]
    fn hit_rate_monotone_and_metrics_symmetric(
        a in picks_strategy(64, 16),
        b in picks_strategy(64, 16),
        shift in 0i32..10,
    ) {
        let a = PickSet1D::new(a).unwrap();
        let b = PickSet1D::new(b).unwrap();
        let countable = a
            .iter()
            .zip(b.iter())
            .filter(|&(x, y)| x != UNLABELED && y != UNLABELED)
            .count();
        prop_assume!(countable > 0);

        let mut prev = 0.0;
        for delta in 0..8 {
            let hr = hit_rate(&a, &b, delta).unwrap();
            prop_assert!(hr >= prev);
            prev = hr;
        }
        prop_assert_eq!(hit_rate(&a, &b, 3).unwrap(), hit_rate(&b, &a, 3).unwrap());
        prop_assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());

        // translation invariance: shift both sets by the same constant
        let shifted = |p: &PickSet1D| {
            PickSet1D::new(
                p.iter()
                    .map(|v| if v == UNLABELED { v } else { v + shift })
                    .collect(),
            )
            .unwrap()
        };
        let (sa, sb) = (shifted(&a), shifted(&b));
        prop_assert_eq!(mae(&a, &b).unwrap(), mae(&sa, &sb).unwrap());
        prop_assert_eq!(hit_rate(&a, &b, 2).unwrap(), hit_rate(&sa, &sb, 2).unwrap());
    }
}

#[test]
fn latent_update_matches_brute_force_scan() {
    for seed in 0..300 {
        let inst = random_instance(seed, 128);
        let ours = latent_update(&inst.map, &inst.manual, inst.gamma).unwrap();
        let oracle = brute_force_update(&inst);
        assert_eq!(ours.values(), &oracle[..], "instance seed {seed}");
        // refinement shares the kernel on labeled traces
        let refined = refine(&inst.map, &inst.manual, inst.gamma).unwrap();
        for k in 0..inst.manual.len() {
            if inst.manual.get(k) != UNLABELED {
                assert_eq!(refined.get(k), oracle[k], "refine trace {k} seed {seed}");
            }
        }
    }
}

#[test]
fn latent_update_is_optimal_among_alternatives() {
    // the exact update beats 100 random alternative latent assignments
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for seed in 0..20 {
        let inst = random_instance(seed, 48);
        let best = latent_update(&inst.map, &inst.manual, inst.gamma).unwrap();
        let best_mask = LabelMask2D::from_picks(&best, inst.map.num_samples()).unwrap();
        let valid = inst.map.valid.clone();
        let best_value = joint_loglik(
            &inst.manual,
            &best,
            &inst.map,
            &best_mask,
            inst.gamma,
            &valid,
        )
        .unwrap();
        for _ in 0..100 {
            let alt = PickSet1D::new(
                (0..inst.manual.len())
                    .map(|k| {
                        if inst.manual.get(k) == UNLABELED {
                            UNLABELED
                        } else {
                            // a random valid sample in this trace
                            loop {
                                let i = rng.random_range(0..inst.map.num_samples());
                                if inst.map.valid[[i, k]] {
                                    break i as i32;
                                }
                            }
                        }
                    })
                    .collect(),
            )
            .unwrap();
            let alt_mask = LabelMask2D::from_picks(&alt, inst.map.num_samples()).unwrap();
            let alt_value = joint_loglik(
                &inst.manual,
                &alt,
                &inst.map,
                &alt_mask,
                inst.gamma,
                &valid,
            )
            .unwrap();
            assert!(
                best_value >= alt_value - 1e-9,
                "seed {seed}: alternative beat the exact update ({alt_value} > {best_value})"
            );
        }
    }
}

#[test]
fn gamma_limit_laws_hold_exactly() {
    // tie-free instances: at an exact probability tie the two rules differ
    // legitimately (pick breaks ties by index, the vanishing prior by
    // distance to t)
    for seed in 300..400 {
        let inst = random_smooth_instance(seed, 96);
        let picked = pick(&inst.map);
        let wide = refine(&inst.map, &inst.manual, 1e9).unwrap();
        let narrow = refine(&inst.map, &inst.manual, 1e-9).unwrap();
        for k in 0..inst.manual.len() {
            if inst.manual.get(k) == UNLABELED {
                assert_eq!(wide.get(k), picked.get(k));
                assert_eq!(narrow.get(k), picked.get(k));
            } else {
                assert_eq!(wide.get(k), picked.get(k), "seed {seed} trace {k}");
                assert_eq!(narrow.get(k), inst.manual.get(k), "seed {seed} trace {k}");
            }
        }
    }
}

#[test]
fn latent_update_is_shift_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..200 {
        let m = rng.random_range(8..64);
        let shift = rng.random_range(1..16);
        let column: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..0.99)).collect();
        let t = rng.random_range(0..m as i32);
        let gamma = 10f64.powf(rng.random_range(-1.0..2.0));

        let total = m + shift;
        let build = |offset: usize| {
            let mut prob = Array2::from_elem((total, 1), 0.5);
            let mut valid = Array2::from_elem((total, 1), false);
            for (i, &p) in column.iter().enumerate() {
                prob[[offset + i, 0]] = p;
                valid[[offset + i, 0]] = true;
            }
            ProbabilityMap::new(prob, valid).unwrap()
        };
        let base = build(0);
        let shifted = build(shift);
        let t_base = PickSet1D::new(vec![t]).unwrap();
        let t_shifted = PickSet1D::new(vec![t + shift as i32]).unwrap();
        let a = latent_update(&base, &t_base, gamma).unwrap().get(0);
        let b = latent_update(&shifted, &t_shifted, gamma).unwrap().get(0);
        assert_eq!(b, a + shift as i32);
    }
}

#[test]
fn refinement_distance_monotone_in_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    for seed in 400..600 {
        let inst = random_instance(seed, 64);
        let mut g1 = 10f64.powf(rng.random_range(-2.0..2.5));
        let mut g2 = 10f64.powf(rng.random_range(-2.0..2.5));
        if g1 > g2 {
            std::mem::swap(&mut g1, &mut g2);
        }
        let r1 = refine(&inst.map, &inst.manual, g1).unwrap();
        let r2 = refine(&inst.map, &inst.manual, g2).unwrap();
        for k in 0..inst.manual.len() {
            let t = inst.manual.get(k);
            if t == UNLABELED {
                continue;
            }
            let d1 = (r1.get(k) - t).abs();
            let d2 = (r2.get(k) - t).abs();
            assert!(
                d1 <= d2,
                "seed {seed} trace {k}: |refine({g1}) - t| = {d1} > |refine({g2}) - t| = {d2}"
            );
        }
    }
}

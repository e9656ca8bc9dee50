//! Shared test support: random SPR instances and the independent
//! brute-force oracle for the per-trace latent objective.
//!
//! The oracle works from the definitions alone (clamp, prior, logit) and
//! never calls into the library's scan, so it stays a genuine second route.

use fbpick_core::types::{PickSet1D, ProbabilityMap, UNLABELED};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SprInstance {
    pub map: ProbabilityMap,
    pub manual: PickSet1D,
    pub gamma: f64,
}

/// Random instance: up to `max_samples` rows, a handful of traces, random
/// probabilities (sometimes quantized to force exact ties, sometimes
/// saturated to exercise the clamp), random valid extents, and a log-uniform
/// gamma.
pub fn random_instance(seed: u64, max_samples: usize) -> SprInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=max_samples);
    let n = rng.random_range(1..=6);
    let quantize = rng.random_bool(0.3);
    let saturate = rng.random_bool(0.2);
    let prob = Array2::from_shape_fn((m, n), |_| {
        let p: f64 = rng.random_range(0.0..1.0);
        let p = if quantize { (p * 8.0).round() / 8.0 } else { p };
        if saturate && p < 0.05 {
            0.0
        } else if saturate && p > 0.95 {
            1.0
        } else {
            p
        }
    });
    // random contiguous valid extent per column; at least one valid sample
    let mut valid = Array2::from_elem((m, n), false);
    let mut valid_to = vec![0usize; n];
    for k in 0..n {
        let hi = rng.random_range(1..=m);
        valid_to[k] = hi;
        for i in 0..hi {
            valid[[i, k]] = true;
        }
    }
    let map = ProbabilityMap::new(prob, valid).unwrap();
    let manual = PickSet1D::new(
        (0..n)
            .map(|k| {
                if rng.random_bool(0.15) {
                    UNLABELED
                } else {
                    rng.random_range(0..valid_to[k] as i32)
                }
            })
            .collect(),
    )
    .unwrap();
    let gamma = 10f64.powf(rng.random_range(-1.5..2.7));
    SprInstance { map, manual, gamma }
}

/// Like [`random_instance`] but with continuous probabilities away from the
/// clamp, so per-trace maxima are unique. The gamma limit laws compare two
/// different tie-break rules and only coincide on tie-free instances.
pub fn random_smooth_instance(seed: u64, max_samples: usize) -> SprInstance {
    let mut inst = random_instance(seed, max_samples);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00de_faced);
    let (m, n) = inst.map.prob().dim();
    let prob = Array2::from_shape_fn((m, n), |_| rng.random_range(0.01..0.99));
    inst.map = ProbabilityMap::new(prob, inst.map.valid.clone()).unwrap();
    inst
}

/// Definition-level scan of `f(i) = |t - i| / gamma - ln(p / (1 - p))` over
/// valid samples, clamping `p` into `[1e-12, 1 - 1e-12]` first; ties go to
/// the smallest index. Returns `None` for unlabeled traces.
pub fn brute_force_trace(
    prob_column: &[f64],
    valid_column: &[bool],
    manual_pick: i32,
    gamma: f64,
) -> Option<usize> {
    if manual_pick == UNLABELED {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, (&p, &v)) in prob_column.iter().zip(valid_column).enumerate() {
        if !v {
            continue;
        }
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        let f = (manual_pick as f64 - i as f64).abs() / gamma - (p / (1.0 - p)).ln();
        match best {
            Some((_, fb)) if fb <= f => {}
            _ => best = Some((i, f)),
        }
    }
    Some(best.expect("instances always have a valid sample").0)
}

/// Brute-force latent update over a whole instance.
pub fn brute_force_update(inst: &SprInstance) -> Vec<i32> {
    let m = inst.map.num_samples();
    let n = inst.map.num_traces();
    (0..n)
        .map(|k| {
            let prob: Vec<f64> = (0..m).map(|i| inst.map.prob()[[i, k]]).collect();
            let valid: Vec<bool> = (0..m).map(|i| inst.map.valid[[i, k]]).collect();
            brute_force_trace(&prob, &valid, inst.manual.get(k), inst.gamma)
                .map(|i| i as i32)
                .unwrap_or(UNLABELED)
        })
        .collect()
}

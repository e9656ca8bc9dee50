//! Analytic-vs-numeric gradient verification.
//!
//! Runs the identical forward/backward code at `f64`, compares every
//! parameter's analytic gradient against central finite differences
//! (`h = 1e-4`), and reports the worst relative error. Intended for tiny
//! nets where perturbing each parameter is affordable.

use ndarray::Array2;

use super::loss::logit_bce_parts;
use super::refnet::{self, Layout};
use super::PredictorState;
use crate::error::{Error, Result};
use crate::types::{LabelMask2D, WindowedGather};

const STEP: f64 = 1e-4;
const MAX_PARAMS: usize = 5_000;

// Central differences at step h carry O(h^2) truncation error (~2e-9 here),
// so gradients below this floor are unmeasurable; the relative error
// denominator must not drop under it or pure method noise reads as error.
const DENOM_FLOOR: f64 = 1e-5;

fn loss_at(
    layout: &Layout,
    flat: &[f64],
    input: &Array2<f64>,
    target: &LabelMask2D,
    valid: &Array2<bool>,
) -> Result<f64> {
    let cache = refnet::forward(layout, flat, input)?;
    let (sum, count, _) = logit_bce_parts(&cache.logits, target, valid);
    if count == 0 {
        return Err(Error::Domain("gradient check over an empty valid set".into()));
    }
    Ok(sum / count as f64)
}

/// Maximum relative error between the analytic gradient and central finite
/// differences of the masked BCE, over every parameter.
pub fn grad_check(
    state: &PredictorState,
    window: &WindowedGather,
    target: &LabelMask2D,
    valid: &Array2<bool>,
) -> Result<f64> {
    if state.param_count() > MAX_PARAMS {
        return Err(Error::Config(format!(
            "gradient check is for tiny nets (<= {MAX_PARAMS} parameters), state has {}",
            state.param_count()
        )));
    }
    let layout = Layout::new(&state.arch())?;
    let mut flat: Vec<f64> = state.params().iter().map(|&p| p as f64).collect();
    let input = window.data.mapv(|v| v as f64);

    // analytic gradient of the mean BCE
    let cache = refnet::forward(&layout, &flat, &input)?;
    let (_, count, mut d_logits) = logit_bce_parts(&cache.logits, target, valid);
    if count == 0 {
        return Err(Error::Domain("gradient check over an empty valid set".into()));
    }
    let scale = 1.0 / count as f64;
    d_logits.mapv_inplace(|g| g * scale);
    let analytic = refnet::backward(&layout, &flat, &cache, &d_logits);

    let mut worst = 0.0f64;
    for i in 0..flat.len() {
        let saved = flat[i];
        flat[i] = saved + STEP;
        let up = loss_at(&layout, &flat, &input, target, valid)?;
        flat[i] = saved - STEP;
        let down = loss_at(&layout, &flat, &input, target, valid)?;
        flat[i] = saved;
        let numeric = (up - down) / (2.0 * STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(DENOM_FLOOR);
        let rel = (analytic[i] - numeric).abs() / denom;
        if !rel.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient comparison at parameter {i}: analytic {}, numeric {numeric}",
                analytic[i]
            )));
        }
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{PredictorState, ReferenceNetConfig};
    use crate::types::{Gather, PickSet1D};
    use crate::window::{window_gather, WindowShape};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_state(seed: u64) -> PredictorState {
        PredictorState::new(&ReferenceNetConfig {
            depth: 1,
            base_width: 2,
            kernel_size: 3,
            learning_rate: 1e-2,
            seed,
        })
        .unwrap()
    }

    fn setup(seed: u64) -> (WindowedGather, LabelMask2D, Array2<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = Array2::from_shape_fn((8, 8), |_| rng.random_range(-1.0f32..1.0));
        let g = Gather::new(amp, "g", 1.0).unwrap();
        let w = window_gather(&g, WindowShape::new(8, 8)).unwrap().remove(0);
        let picks =
            PickSet1D::new((0..8).map(|_| rng.random_range(0..8)).collect()).unwrap();
        let target = LabelMask2D::from_picks(&picks, 8).unwrap();
        let valid = w.valid_mask.clone();
        (w, target, valid)
    }

    #[test]
    fn depth_one_net_matches_finite_differences() {
        let state = tiny_state(3);
        let (w, target, valid) = setup(31);
        let err = grad_check(&state, &w, &target, &valid).unwrap();
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn zero_head_weights_still_match() {
        let mut state = tiny_state(5);
        // zero the last layer (head weights + bias sit at the tail)
        let n = state.param_count();
        let mut params = state.params().to_vec();
        for p in params[n - 3..].iter_mut() {
            *p = 0.0;
        }
        state.set_params(params).unwrap();
        let (w, target, valid) = setup(37);
        let err = grad_check(&state, &w, &target, &valid).unwrap();
        assert!(err.is_finite());
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn single_weight_bracket() {
        // forward/backward difference quotients bracket the analytic slope
        let state = tiny_state(7);
        let (w, target, valid) = setup(41);
        let layout = Layout::new(&state.arch()).unwrap();
        let mut flat: Vec<f64> = state.params().iter().map(|&p| p as f64).collect();
        let input = w.data.mapv(|v| v as f64);

        let cache = refnet::forward(&layout, &flat, &input).unwrap();
        let (_, count, mut d_logits) = logit_bce_parts(&cache.logits, &target, &valid);
        d_logits.mapv_inplace(|g| g / count as f64);
        let analytic = refnet::backward(&layout, &flat, &cache, &d_logits);

        let i = 10; // an encoder weight
        let l0 = loss_at(&layout, &flat, &input, &target, &valid).unwrap();
        flat[i] += STEP;
        let lp = loss_at(&layout, &flat, &input, &target, &valid).unwrap();
        flat[i] -= 2.0 * STEP;
        let lm = loss_at(&layout, &flat, &input, &target, &valid).unwrap();
        let fwd = (lp - l0) / STEP;
        let bwd = (l0 - lm) / STEP;
        let (lo, hi) = if fwd < bwd { (fwd, bwd) } else { (bwd, fwd) };
        let tol = 1e-8 + 1e-4 * analytic[i].abs();
        assert!(
            analytic[i] >= lo - tol && analytic[i] <= hi + tol,
            "analytic {} outside [{lo}, {hi}]",
            analytic[i]
        );
    }

    #[test]
    fn rejects_oversized_nets() {
        let state = PredictorState::new(&ReferenceNetConfig::default()).unwrap();
        let (w, target, valid) = setup(43);
        assert!(matches!(
            grad_check(&state, &w, &target, &valid),
            Err(Error::Config(_))
        ));
    }
}

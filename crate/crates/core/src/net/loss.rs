//! Binary cross-entropy over valid pixels, and its gradient at the logits.

use ndarray::{Array2, NdFloat};

use crate::error::{Error, Result};
use crate::types::{LabelMask2D, ProbabilityMap, PROB_CLAMP};

/// Mean binary cross-entropy over the valid pixel set `V`:
/// `-(1/|V|) * sum_V [y ln p + (1 - y) ln(1 - p)]`, with probabilities
/// already clamped to `[1e-12, 1 - 1e-12]` by [`ProbabilityMap`].
pub fn bce_loss(
    prediction: &ProbabilityMap,
    target: &LabelMask2D,
    valid: &Array2<bool>,
) -> Result<f64> {
    let dims = (prediction.num_samples(), prediction.num_traces());
    if dims != (target.num_samples(), target.num_traces()) || dims != valid.dim() {
        return Err(Error::Shape(format!(
            "bce shapes differ: prediction {dims:?}, target {:?}, valid {:?}",
            (target.num_samples(), target.num_traces()),
            valid.dim()
        )));
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for ((idx, &v), &y) in valid.indexed_iter().zip(target.mask().iter()) {
        if !v {
            continue;
        }
        count += 1;
        let p = prediction.prob()[idx];
        sum -= if y { p.ln() } else { (1.0 - p).ln() };
    }
    if count == 0 {
        return Err(Error::Domain("bce over an empty valid set".into()));
    }
    Ok(sum / count as f64)
}

/// Per-item pieces of the batch BCE: the unnormalized loss sum over valid
/// pixels, the valid-pixel count, and `d loss_sum / d logits` (that is,
/// `sigmoid(z) - y` on valid pixels, zero elsewhere).
///
/// The clamp applies to the loss value only. The gradient is that of the
/// unclamped objective, so saturated pixels keep pulling back toward the
/// data instead of freezing the net in an all-zero state.
pub fn logit_bce_parts<T: NdFloat>(
    logits: &Array2<T>,
    target: &LabelMask2D,
    valid: &Array2<bool>,
) -> (f64, usize, Array2<T>) {
    let mut sum = 0.0f64;
    let mut count = 0usize;
    let mut d_logits = Array2::zeros(logits.dim());
    for (idx, &z) in logits.indexed_iter() {
        if !valid[idx] {
            continue;
        }
        count += 1;
        let y = target.mask()[idx];
        let p = sigmoid(z.to_f64().expect("float"));
        let clamped = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        sum -= if y { clamped.ln() } else { (1.0 - clamped).ln() };
        let g = p - if y { 1.0 } else { 0.0 };
        d_logits[idx] = T::from(g).expect("float");
    }
    (sum, count, d_logits)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PickSet1D;
    use ndarray::array;

    fn map_2x1(p0: f64, p1: f64) -> ProbabilityMap {
        ProbabilityMap::new(array![[p0], [p1]], Array2::from_elem((2, 1), true)).unwrap()
    }

    #[test]
    fn hand_case_two_pixels() {
        // one-hot at row 0, probabilities (0.8, 0.2):
        // loss = -(ln 0.8 + ln 0.8) / 2
        let map = map_2x1(0.8, 0.2);
        let target =
            LabelMask2D::from_picks(&PickSet1D::new(vec![0]).unwrap(), 2).unwrap();
        let valid = Array2::from_elem((2, 1), true);
        let loss = bce_loss(&map, &target, &valid).unwrap();
        let expect = -(0.8f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((loss - expect).abs() < 1e-12);
        assert!((loss - 0.22314355131420976).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_loss_tends_to_zero() {
        let map = map_2x1(1.0, 0.0); // clamped to the bounds
        let target =
            LabelMask2D::from_picks(&PickSet1D::new(vec![0]).unwrap(), 2).unwrap();
        let valid = Array2::from_elem((2, 1), true);
        let loss = bce_loss(&map, &target, &valid).unwrap();
        assert!(loss >= 0.0 && loss < 1e-11);
    }

    #[test]
    fn masked_column_does_not_contribute() {
        let prob = array![[0.8, 0.3], [0.2, 0.9]];
        let map = ProbabilityMap::new(prob, Array2::from_elem((2, 2), true)).unwrap();
        let target =
            LabelMask2D::from_picks(&PickSet1D::new(vec![0, -1]).unwrap(), 2).unwrap();
        // exclude the unlabeled column from V
        let valid = array![[true, false], [true, false]];
        let loss = bce_loss(&map, &target, &valid).unwrap();
        let expect = -(0.8f64.ln() + 0.8f64.ln()) / 2.0;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_valid_set_is_domain_error() {
        let map = map_2x1(0.5, 0.5);
        let target =
            LabelMask2D::from_picks(&PickSet1D::new(vec![0]).unwrap(), 2).unwrap();
        let valid = Array2::from_elem((2, 1), false);
        assert!(matches!(
            bce_loss(&map, &target, &valid),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn logit_parts_agree_with_bce_loss() {
        let logits = array![[0.3f64, -1.2], [2.0, 0.0]];
        let target =
            LabelMask2D::from_picks(&PickSet1D::new(vec![1, 0]).unwrap(), 2).unwrap();
        let valid = Array2::from_elem((2, 2), true);
        let (sum, count, d) = logit_bce_parts(&logits, &target, &valid);
        let prob = logits.mapv(sigmoid);
        let map = ProbabilityMap::new(prob, valid.clone()).unwrap();
        let loss = bce_loss(&map, &target, &valid).unwrap();
        assert!((sum / count as f64 - loss).abs() < 1e-12);
        // gradient signs: positive where y = 0, negative where y = 1
        assert!(d[[1, 0]] < 0.0 && d[[0, 0]] > 0.0);
    }
}

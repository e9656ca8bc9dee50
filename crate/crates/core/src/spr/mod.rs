//! Joint picking-and-refinement core.
//!
//! The model treats the true first-break as a latent per-trace position `s`
//! (2-D form `y~`). Manual picks `t` deviate from `s` under a Laplace prior
//! with sensitivity `gamma`; the network's per-pixel Bernoulli output ties
//! `s` to the data. Training alternates a BCE gradient step on the current
//! latent labels with an exact per-trace update of those labels; inference
//! either picks (per-trace argmax) or refines existing manual picks (MAP
//! under the same prior).
//!
//! Under the one-positive-per-trace constraint the latent objective
//! decouples into independent per-trace scans of
//! `f(i) = |t_k - i| / gamma - logit(p[i, k])`, which both the latent update
//! and the refinement mode share. The `sum log(1 - p)` term is constant per
//! column and drops out of the argmin.

mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use train::{train_baseline, train_spr, TrainOptions, TrainSummary};

use crate::error::{Error, Result};
use crate::net::Predictor;
use crate::types::{Gather, LabelMask2D, PickSet1D, ProbabilityMap, UNLABELED};
use crate::window::{picks_for_window, unwindow_picks, window_gather, WindowShape};

/// Training-time configuration of the alternating optimization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SprConfig {
    /// Laplace prior sensitivity; larger values let latent picks stray
    /// further from the manual picks.
    pub gamma: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    /// With latent updates disabled the targets stay equal to the manual
    /// picks forever: the plain-BCE baseline arm.
    pub latent_update_enabled: bool,
}

impl Default for SprConfig {
    fn default() -> Self {
        Self {
            gamma: 5.0,
            epochs: 100,
            batch_size: 8,
            shuffle_seed: 0,
            latent_update_enabled: true,
        }
    }
}

impl SprConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Domain(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sample objective values for one trace:
/// `f(i) = |t_k - i| / gamma - logit(p[i, k])` over valid samples.
#[derive(Debug, Clone)]
pub struct TraceScore {
    scores: Vec<f64>,
    valid: Vec<bool>,
}

impl TraceScore {
    pub fn new(
        prediction: &ProbabilityMap,
        trace: usize,
        manual_pick: i32,
        gamma: f64,
    ) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
        }
        let m = prediction.num_samples();
        let mut scores = Vec::with_capacity(m);
        let mut valid = Vec::with_capacity(m);
        for i in 0..m {
            let ok = prediction.valid[[i, trace]];
            valid.push(ok);
            if ok {
                let prior = (manual_pick as f64 - i as f64).abs() / gamma;
                scores.push(prior - prediction.logit(i, trace));
            } else {
                scores.push(f64::INFINITY);
            }
        }
        Ok(Self { scores, valid })
    }

    /// Smallest-index argmin over valid samples.
    pub fn argmin(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, (&s, &v)) in self.scores.iter().zip(&self.valid).enumerate() {
            if !v {
                continue;
            }
            match best {
                Some((_, bs)) if bs <= s => {}
                _ => best = Some((i, s)),
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn values(&self) -> &[f64] {
        &self.scores
    }
}

/// Log prior of the manual picks given latent picks:
/// `-sum_k |t_k - s_k| / gamma` over labeled traces (normalizing constant
/// dropped). Sentinel traces contribute zero.
pub fn laplace_log_prior(manual: &PickSet1D, latent: &PickSet1D, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    if manual.len() != latent.len() {
        return Err(Error::Shape(format!(
            "pick sets differ in length: {} vs {}",
            manual.len(),
            latent.len()
        )));
    }
    let mut sum = 0.0;
    for (k, (t, s)) in manual.iter().zip(latent.iter()).enumerate() {
        match (t == UNLABELED, s == UNLABELED) {
            (true, true) => {}
            (false, false) => sum -= (t as f64 - s as f64).abs() / gamma,
            _ => {
                return Err(Error::Consistency(format!(
                    "trace {k}: sentinel labels misaligned between manual and latent picks"
                )))
            }
        }
    }
    Ok(sum)
}

/// Bernoulli log likelihood of a label mask under the prediction:
/// `sum_V [y ln p + (1 - y) ln(1 - p)]`. Equals `-|V| * bce_loss`.
pub fn bernoulli_loglik(
    prediction: &ProbabilityMap,
    labels: &LabelMask2D,
    valid: &Array2<bool>,
) -> Result<f64> {
    let dims = (prediction.num_samples(), prediction.num_traces());
    if dims != (labels.num_samples(), labels.num_traces()) || dims != valid.dim() {
        return Err(Error::Shape(format!(
            "loglik shapes differ: prediction {dims:?}, labels {:?}, valid {:?}",
            (labels.num_samples(), labels.num_traces()),
            valid.dim()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((idx, &v), &y) in valid.indexed_iter().zip(labels.mask().iter()) {
        if !v {
            continue;
        }
        count += 1;
        let p = prediction.prob()[idx];
        sum += if y { p.ln() } else { (1.0 - p).ln() };
    }
    if count == 0 {
        return Err(Error::Domain("log likelihood over an empty valid set".into()));
    }
    Ok(sum)
}

/// The joint objective both alternating updates climb:
/// `laplace_log_prior(t, s) + bernoulli_loglik(prediction, y~)`.
/// `latent_mask` must be the 2-D form of `latent`.
pub fn joint_loglik(
    manual: &PickSet1D,
    latent: &PickSet1D,
    prediction: &ProbabilityMap,
    latent_mask: &LabelMask2D,
    gamma: f64,
    valid: &Array2<bool>,
) -> Result<f64> {
    if &latent_mask.to_picks() != latent {
        return Err(Error::Consistency(
            "latent mask does not match the 1-D latent picks".into(),
        ));
    }
    Ok(laplace_log_prior(manual, latent, gamma)?
        + bernoulli_loglik(prediction, latent_mask, valid)?)
}

/// Exact latent-label update: per labeled trace the argmin of
/// `f(i) = |t_k - i| / gamma - logit(p[i, k])` over valid samples, ties
/// toward the smallest index. Sentinel traces stay sentinel. This is the
/// global optimum of the latent objective under one positive per trace.
pub fn latent_update(
    prediction: &ProbabilityMap,
    manual: &PickSet1D,
    gamma: f64,
) -> Result<PickSet1D> {
    if manual.len() != prediction.num_traces() {
        return Err(Error::Shape(format!(
            "{} picks for {} traces",
            manual.len(),
            prediction.num_traces()
        )));
    }
    let mut out = Vec::with_capacity(manual.len());
    for (k, t) in manual.iter().enumerate() {
        if t == UNLABELED {
            out.push(UNLABELED);
            continue;
        }
        let score = TraceScore::new(prediction, k, t, gamma)?;
        let best = score.argmin().ok_or_else(|| {
            Error::Domain(format!("trace {k} has no valid samples for the latent update"))
        })?;
        out.push(best as i32);
    }
    PickSet1D::new(out)
}

/// Automatic picking: per-trace argmax of the prediction over valid
/// samples, ties toward the smallest index. Fully padded traces come back
/// as sentinel.
pub fn pick(prediction: &ProbabilityMap) -> PickSet1D {
    let mut out = Vec::with_capacity(prediction.num_traces());
    for k in 0..prediction.num_traces() {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..prediction.num_samples() {
            if !prediction.valid[[i, k]] {
                continue;
            }
            let p = prediction.prob()[[i, k]];
            match best {
                Some((_, bp)) if bp >= p => {}
                _ => best = Some((i, p)),
            }
        }
        out.push(best.map(|(i, _)| i as i32).unwrap_or(UNLABELED));
    }
    PickSet1D::new(out).expect("argmax indices are in range")
}

/// Manual-pick refinement: per labeled trace the MAP position under the
/// labeling prior and the prediction, which shares the latent update's
/// scoring kernel. Unlabeled traces fall back to plain picking.
pub fn refine(
    prediction: &ProbabilityMap,
    manual: &PickSet1D,
    gamma: f64,
) -> Result<PickSet1D> {
    if manual.len() != prediction.num_traces() {
        return Err(Error::Shape(format!(
            "{} picks for {} traces",
            manual.len(),
            prediction.num_traces()
        )));
    }
    let fallback = pick(prediction);
    let mut out = Vec::with_capacity(manual.len());
    for (k, t) in manual.iter().enumerate() {
        if t == UNLABELED {
            out.push(fallback.get(k));
            continue;
        }
        let score = TraceScore::new(prediction, k, t, gamma)?;
        let best = score.argmin().ok_or_else(|| {
            Error::Domain(format!("trace {k} has no valid samples to refine"))
        })?;
        out.push(best as i32);
    }
    PickSet1D::new(out)
}

/// Windows a gather, runs the predictor, and reassembles per-trace picks.
pub fn pick_gather<P: Predictor>(
    predictor: &P,
    gather: &Gather,
    shape: WindowShape,
) -> Result<PickSet1D> {
    let windows = window_gather(gather, shape)?;
    let mut pairs = Vec::with_capacity(windows.len());
    for window in &windows {
        let map = predictor.forward(window)?;
        pairs.push((pick(&map), window));
    }
    unwindow_picks(&pairs)
}

/// Windowed refinement of a gather's manual picks.
pub fn refine_gather<P: Predictor>(
    predictor: &P,
    gather: &Gather,
    manual: &PickSet1D,
    gamma: f64,
    shape: WindowShape,
) -> Result<PickSet1D> {
    if manual.len() != gather.num_traces() {
        return Err(Error::Shape(format!(
            "{} picks for {} traces",
            manual.len(),
            gather.num_traces()
        )));
    }
    let windows = window_gather(gather, shape)?;
    let mut pairs = Vec::with_capacity(windows.len());
    for window in &windows {
        let map = predictor.forward(window)?;
        let window_manual = picks_for_window(manual, window);
        pairs.push((refine(&map, &window_manual, gamma)?, window));
    }
    unwindow_picks(&pairs)
}

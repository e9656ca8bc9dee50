//! The pluggable probability predictor `h(x; W)` and its reference
//! implementation.
//!
//! The predictor maps a windowed gather to a per-pixel first-break
//! probability map, and fits one adaptive-moment gradient step of the
//! binary cross-entropy objective at a time. The reference net is a small
//! U-shaped encoder-decoder (see [`refnet`]); the training loop only
//! depends on the [`Predictor`] trait, so other architectures can slot in.

mod adam;
mod gradcheck;
mod loss;
pub mod ops;
pub mod refnet;

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gradcheck::grad_check;
pub use loss::{bce_loss, logit_bce_parts, sigmoid};
pub use refnet::NetArch;

use crate::error::{Error, Result};
use crate::types::{LabelMask2D, ProbabilityMap, WindowedGather};
use refnet::Layout;

/// Reference net hyperparameters. Defaults: depth 3, base width 16, 3x3
/// kernels, learning rate 1e-4 (Adam), seeded init.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReferenceNetConfig {
    pub depth: usize,
    pub base_width: usize,
    pub kernel_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ReferenceNetConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            base_width: 16,
            kernel_size: 3,
            learning_rate: 1e-4,
            seed: 0,
        }
    }
}

impl ReferenceNetConfig {
    pub fn arch(&self) -> NetArch {
        NetArch {
            depth: self.depth,
            base_width: self.base_width,
            kernel_size: self.kernel_size,
        }
    }
}

/// Learnable state: architecture descriptor, flat parameters, Adam moments,
/// and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    arch: NetArch,
    learning_rate: f64,
    seed: u64,
    params: Vec<f32>,
    adam_m: Vec<f32>,
    adam_v: Vec<f32>,
    step: u64,
}

impl PredictorState {
    pub fn new(config: &ReferenceNetConfig) -> Result<Self> {
        let arch = config.arch();
        let layout = Layout::new(&arch)?;
        let params = layout.init_params(config.seed);
        let n = layout.param_count();
        Ok(Self {
            arch,
            learning_rate: config.learning_rate,
            seed: config.seed,
            params,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
        })
    }

    /// All-zero weights: the net outputs logit 0 (probability one half)
    /// everywhere. Useful as a frozen uniform predictor.
    pub fn zeroed(config: &ReferenceNetConfig) -> Result<Self> {
        let mut state = Self::new(config)?;
        state.params.iter_mut().for_each(|p| *p = 0.0);
        Ok(state)
    }

    pub fn arch(&self) -> NetArch {
        self.arch
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    /// Replaces the parameter vector; the length must match the layout.
    pub fn set_params(&mut self, params: Vec<f32>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        let layout = Layout::new(&self.arch)?;
        if self.params.len() != layout.param_count()
            || self.adam_m.len() != layout.param_count()
            || self.adam_v.len() != layout.param_count()
        {
            return Err(Error::Invariant(format!(
                "state holds {} parameters, architecture expects {}",
                self.params.len(),
                layout.param_count()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite parameter in state".into()));
        }
        Ok(())
    }
}

/// One fitted step: the pre-step loss and the pre-step predictions for the
/// batch, in input order. The predictions are the forward pass made before
/// the parameter update, which is exactly what the latent-label update
/// consumes.
pub struct FitOutcome {
    pub loss: f64,
    pub predictions: Vec<ProbabilityMap>,
}

/// One training sample: a window, its current target mask, and the
/// effective valid-pixel mask (window padding AND labeled columns).
pub struct FitSample<'a> {
    pub window: &'a WindowedGather,
    pub target: &'a LabelMask2D,
    pub valid: &'a Array2<bool>,
}

pub trait Predictor {
    /// Deterministic forward pass; output entries lie strictly in (0, 1).
    /// Padded pixels still produce probabilities; downstream consumers mask
    /// them via the map's validity.
    fn forward(&self, window: &WindowedGather) -> Result<ProbabilityMap>;

    /// One gradient step of mean BCE over the batch's valid pixels.
    /// Returns the pre-step loss and pre-step predictions. With a zero
    /// learning rate only the step counter advances.
    fn fit_step(&mut self, batch: &[FitSample]) -> Result<FitOutcome>;

    fn state(&self) -> &PredictorState;

    fn save(&self, path: &Path) -> Result<()>;
}

/// The reference encoder-decoder behind the [`Predictor`] trait.
pub struct RefNetPredictor {
    state: PredictorState,
    layout: Layout,
}

impl RefNetPredictor {
    pub fn new(config: &ReferenceNetConfig) -> Result<Self> {
        let state = PredictorState::new(config)?;
        let layout = Layout::new(&state.arch)?;
        Ok(Self { state, layout })
    }

    pub fn from_state(state: PredictorState) -> Result<Self> {
        state.validate()?;
        let layout = Layout::new(&state.arch)?;
        Ok(Self { state, layout })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_state(load_state(path)?)
    }

    pub fn state_mut(&mut self) -> &mut PredictorState {
        &mut self.state
    }

    fn logits(&self, window: &WindowedGather) -> Result<Array2<f32>> {
        let cache = refnet::forward(&self.layout, &self.state.params, &window.data)?;
        Ok(cache.logits)
    }
}

impl Predictor for RefNetPredictor {
    fn forward(&self, window: &WindowedGather) -> Result<ProbabilityMap> {
        let logits = self.logits(window)?;
        let prob = logits.mapv(|z| sigmoid(z as f64));
        ProbabilityMap::new(prob, window.valid_mask.clone())
    }

    fn fit_step(&mut self, batch: &[FitSample]) -> Result<FitOutcome> {
        for sample in batch {
            let dims = sample.window.data.dim();
            if (sample.target.num_samples(), sample.target.num_traces()) != dims
                || sample.valid.dim() != dims
            {
                return Err(Error::Shape(format!(
                    "fit sample shapes disagree: window {dims:?}, target {:?}, valid {:?}",
                    (sample.target.num_samples(), sample.target.num_traces()),
                    sample.valid.dim()
                )));
            }
        }
        let valid_total: usize = batch
            .iter()
            .map(|s| s.valid.iter().filter(|&&v| v).count())
            .sum();
        if valid_total == 0 {
            return Err(Error::Domain("fit step over an empty valid set".into()));
        }

        let params = &self.state.params;
        let layout = &self.layout;
        let scale = 1.0 / valid_total as f32;
        let per_item: Vec<Result<(f64, Vec<f32>, ProbabilityMap)>> = batch
            .par_iter()
            .map(|sample| {
                let cache = refnet::forward(layout, params, &sample.window.data)?;
                let (loss_sum, _, mut d_logits) =
                    logit_bce_parts(&cache.logits, sample.target, sample.valid);
                d_logits.mapv_inplace(|g| g * scale);
                let grad = refnet::backward(layout, params, &cache, &d_logits);
                let prob = cache.logits.mapv(|z| sigmoid(z as f64));
                let map = ProbabilityMap::new(prob, sample.window.valid_mask.clone())?;
                Ok((loss_sum, grad, map))
            })
            .collect();

        let mut loss_sum = 0.0f64;
        let mut grad = vec![0.0f32; self.state.params.len()];
        let mut predictions = Vec::with_capacity(batch.len());
        for item in per_item {
            let (l, g, map) = item?;
            loss_sum += l;
            for (acc, gi) in grad.iter_mut().zip(&g) {
                *acc += gi;
            }
            predictions.push(map);
        }
        if let Some(pos) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient at parameter {pos} (step {}, batch of {}, loss sum {loss_sum})",
                self.state.step,
                batch.len()
            )));
        }

        let loss = loss_sum / valid_total as f64;
        let lr = self.state.learning_rate as f32;
        if lr != 0.0 {
            adam::adam_update(
                &mut self.state.params,
                &grad,
                &mut self.state.adam_m,
                &mut self.state.adam_v,
                self.state.step + 1,
                lr,
            );
        }
        self.state.step += 1;
        Ok(FitOutcome { loss, predictions })
    }

    fn state(&self) -> &PredictorState {
        &self.state
    }

    fn save(&self, path: &Path) -> Result<()> {
        save_state(&self.state, path)
    }
}

// --- checkpoint format -------------------------------------------------
//
// line 1:  version string
// line 2:  JSON metadata (arch, lr, seed, step, param count)
// then:    params, adam m, adam v as consecutive little-endian f32 arrays

const CHECKPOINT_VERSION: &str = "fbpick-checkpoint-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    arch: NetArch,
    learning_rate: f64,
    seed: u64,
    step: u64,
    param_count: usize,
}

pub fn save_state(state: &PredictorState, path: &Path) -> Result<()> {
    state.validate()?;
    let meta = CheckpointMeta {
        arch: state.arch,
        learning_rate: state.learning_rate,
        seed: state.seed,
        step: state.step,
        param_count: state.params.len(),
    };
    let mut buf = Vec::with_capacity(state.params.len() * 12 + 256);
    buf.extend_from_slice(CHECKPOINT_VERSION.as_bytes());
    buf.push(b'\n');
    buf.extend_from_slice(
        serde_json::to_string(&meta)
            .map_err(|e| Error::io(path, format!("metadata serialization failed: {e}")))?
            .as_bytes(),
    );
    buf.push(b'\n');
    for arr in [&state.params, &state.adam_m, &state.adam_v] {
        for &v in arr.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io_from(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io_from(path, e))
}

pub fn load_state(path: &Path) -> Result<PredictorState> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io_from(path, e))?;
    let mut lines = bytes.splitn(3, |&b| b == b'\n');
    let version = lines.next().unwrap_or_default();
    if version != CHECKPOINT_VERSION.as_bytes() {
        return Err(Error::io(
            path,
            format!(
                "unsupported checkpoint version {:?}",
                String::from_utf8_lossy(version)
            ),
        ));
    }
    let meta_line = lines
        .next()
        .ok_or_else(|| Error::io(path, "missing checkpoint metadata"))?;
    let meta: CheckpointMeta = serde_json::from_slice(meta_line)
        .map_err(|e| Error::io(path, format!("malformed checkpoint metadata: {e}")))?;
    let body = lines
        .next()
        .ok_or_else(|| Error::io(path, "missing checkpoint body"))?;
    let expect = meta.param_count * 4 * 3;
    if body.len() != expect {
        return Err(Error::io(
            path,
            format!("checkpoint body holds {} bytes, expected {expect}", body.len()),
        ));
    }
    let read_arr = |off: usize| -> Vec<f32> {
        body[off..off + meta.param_count * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let state = PredictorState {
        arch: meta.arch,
        learning_rate: meta.learning_rate,
        seed: meta.seed,
        params: read_arr(0),
        adam_m: read_arr(meta.param_count * 4),
        adam_v: read_arr(meta.param_count * 8),
        step: meta.step,
    };
    state.validate()?;
    Ok(state)
}

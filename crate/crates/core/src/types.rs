//! Core gather and label types.
//!
//! A gather is an `M x N` amplitude matrix: rows are sample indices (time),
//! columns are trace indices (receiver channels). First-break labels come in
//! two interconvertible forms: a 1-D vector of per-trace sample indices
//! ([`PickSet1D`]) and a 2-D one-hot-per-trace mask ([`LabelMask2D`]).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample index marking a trace without a first-break label.
pub const UNLABELED: i32 = -1;

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before any
/// log or logit.
pub const PROB_CLAMP: f64 = 1e-12;

/// An `M x N` amplitude panel (rows = samples, columns = traces).
#[derive(Debug, Clone)]
pub struct Gather {
    pub amplitude: Array2<f32>,
    pub gather_id: String,
    pub sample_rate_ms: f64,
}

impl Gather {
    pub fn new(amplitude: Array2<f32>, gather_id: impl Into<String>, sample_rate_ms: f64) -> Result<Self> {
        if amplitude.nrows() == 0 || amplitude.ncols() == 0 {
            return Err(Error::Invariant(format!(
                "gather must be at least 1x1, got {}x{}",
                amplitude.nrows(),
                amplitude.ncols()
            )));
        }
        if !(sample_rate_ms > 0.0) {
            return Err(Error::Invariant(format!(
                "sample rate must be positive, got {sample_rate_ms}"
            )));
        }
        if let Some(bad) = amplitude.iter().find(|a| !a.is_finite()) {
            return Err(Error::Invariant(format!(
                "gather amplitudes must be finite, found {bad}"
            )));
        }
        Ok(Self {
            amplitude,
            gather_id: gather_id.into(),
            sample_rate_ms,
        })
    }

    /// Number of samples per trace (rows).
    pub fn num_samples(&self) -> usize {
        self.amplitude.nrows()
    }

    /// Number of traces (columns).
    pub fn num_traces(&self) -> usize {
        self.amplitude.ncols()
    }
}

/// Per-trace first-break sample indices; [`UNLABELED`] marks traces without
/// a manual pick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PickSet1D {
    picks: Vec<i32>,
}

impl PickSet1D {
    /// Wraps raw pick values. Entries must be `>= -1`; range against a gather
    /// is checked by [`PickSet1D::validate`].
    pub fn new(picks: Vec<i32>) -> Result<Self> {
        if let Some(&p) = picks.iter().find(|&&p| p < UNLABELED) {
            return Err(Error::Invariant(format!(
                "pick value {p} below the unlabeled sentinel {UNLABELED}"
            )));
        }
        Ok(Self { picks })
    }

    /// All traces unlabeled.
    pub fn unlabeled(n_traces: usize) -> Self {
        Self {
            picks: vec![UNLABELED; n_traces],
        }
    }

    pub fn len(&self) -> usize {
        self.picks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.picks.is_empty()
    }

    pub fn get(&self, trace: usize) -> i32 {
        self.picks[trace]
    }

    pub fn set(&mut self, trace: usize, pick: i32) {
        self.picks[trace] = pick;
    }

    pub fn is_labeled(&self, trace: usize) -> bool {
        self.picks[trace] != UNLABELED
    }

    pub fn values(&self) -> &[i32] {
        &self.picks
    }

    pub fn iter(&self) -> impl Iterator<Item = i32> + '_ {
        self.picks.iter().copied()
    }

    /// Checks every labeled pick against a gather with `num_samples` rows.
    pub fn validate(&self, num_samples: usize) -> Result<()> {
        for (trace, &p) in self.picks.iter().enumerate() {
            if p != UNLABELED && (p < 0 || p as usize >= num_samples) {
                return Err(Error::PickOutOfRange {
                    trace,
                    pick: p,
                    samples: num_samples,
                });
            }
        }
        Ok(())
    }

    pub fn count_labeled(&self) -> usize {
        self.picks.iter().filter(|&&p| p != UNLABELED).count()
    }
}

/// One-hot-per-trace binary mask: column `k` has a single 1 at the first-break
/// row of trace `k`, or is all zero when the trace is unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask2D {
    mask: Array2<bool>,
}

impl LabelMask2D {
    /// Builds the 2-D one-hot form from 1-D picks (`dims = (M, picks.len())`).
    pub fn from_picks(picks: &PickSet1D, num_samples: usize) -> Result<Self> {
        picks.validate(num_samples)?;
        let mut mask = Array2::from_elem((num_samples, picks.len()), false);
        for (k, p) in picks.iter().enumerate() {
            if p != UNLABELED {
                mask[[p as usize, k]] = true;
            }
        }
        Ok(Self { mask })
    }

    /// Wraps an existing mask, checking the one-hot-or-empty column invariant.
    pub fn new(mask: Array2<bool>) -> Result<Self> {
        for (k, col) in mask.columns().into_iter().enumerate() {
            let ones = col.iter().filter(|&&b| b).count();
            if ones > 1 {
                return Err(Error::Invariant(format!(
                    "label mask column {k} has {ones} ones, expected 0 or 1"
                )));
            }
        }
        Ok(Self { mask })
    }

    /// Inverse of [`LabelMask2D::from_picks`]; all-zero columns map to
    /// [`UNLABELED`].
    pub fn to_picks(&self) -> PickSet1D {
        let picks = self
            .mask
            .columns()
            .into_iter()
            .map(|col| {
                col.iter()
                    .position(|&b| b)
                    .map(|i| i as i32)
                    .unwrap_or(UNLABELED)
            })
            .collect();
        PickSet1D { picks }
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn num_samples(&self) -> usize {
        self.mask.nrows()
    }

    pub fn num_traces(&self) -> usize {
        self.mask.ncols()
    }
}

/// Where a window sits inside its source gather.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub gather_id: String,
    pub first_trace: usize,
    pub first_sample: usize,
}

/// A zero-padded window of a gather, sized for the predictor.
///
/// `valid_mask` is a contiguous top-left block of 1s covering the real
/// samples; `data` is zero wherever `valid_mask` is zero.
#[derive(Debug, Clone)]
pub struct WindowedGather {
    pub data: Array2<f32>,
    pub valid_mask: Array2<bool>,
    pub origin: WindowOrigin,
    valid_rows: usize,
    valid_cols: usize,
}

impl WindowedGather {
    pub(crate) fn from_block(
        data: Array2<f32>,
        valid_rows: usize,
        valid_cols: usize,
        origin: WindowOrigin,
    ) -> Self {
        let (h, w) = data.dim();
        debug_assert!(valid_rows <= h && valid_cols <= w);
        let valid_mask =
            Array2::from_shape_fn((h, w), |(i, k)| i < valid_rows && k < valid_cols);
        Self {
            data,
            valid_mask,
            origin,
            valid_rows,
            valid_cols,
        }
    }

    /// Number of real (unpadded) sample rows.
    pub fn valid_rows(&self) -> usize {
        self.valid_rows
    }

    /// Number of real (unpadded) trace columns.
    pub fn valid_cols(&self) -> usize {
        self.valid_cols
    }

    /// Padded window height (samples).
    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    /// Padded window width (traces).
    pub fn width(&self) -> usize {
        self.data.ncols()
    }
}

/// Per-pixel first-break probabilities from the predictor, with the window's
/// validity mask. Entries are clamped strictly inside `(0, 1)`.
#[derive(Debug, Clone)]
pub struct ProbabilityMap {
    prob: Array2<f64>,
    pub valid: Array2<bool>,
}

impl ProbabilityMap {
    pub fn new(prob: Array2<f64>, valid: Array2<bool>) -> Result<Self> {
        if prob.dim() != valid.dim() {
            return Err(Error::Shape(format!(
                "probability map {:?} does not match valid mask {:?}",
                prob.dim(),
                valid.dim()
            )));
        }
        if let Some(bad) = prob.iter().find(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!(
                "probability map contains non-finite value {bad}"
            )));
        }
        let prob = prob.mapv(|p| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP));
        Ok(Self { prob, valid })
    }

    pub fn prob(&self) -> &Array2<f64> {
        &self.prob
    }

    /// `log(p / (1 - p))` of the clamped probability at `(sample, trace)`.
    pub fn logit(&self, sample: usize, trace: usize) -> f64 {
        let p = self.prob[[sample, trace]];
        (p / (1.0 - p)).ln()
    }

    pub fn num_samples(&self) -> usize {
        self.prob.nrows()
    }

    pub fn num_traces(&self) -> usize {
        self.prob.ncols()
    }
}

//! Gather windowing: tiling the trace axis into fixed-shape, zero-padded
//! network inputs, and reassembling per-window picks.
//!
//! Windows tile the trace axis only; the sample axis must fit a single
//! window and is zero-padded below the last real sample.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Gather, PickSet1D, WindowOrigin, WindowedGather, UNLABELED};

/// Padded network input shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowShape {
    /// Window height in samples (`M'`).
    pub samples: usize,
    /// Window width in traces (`N'`).
    pub traces: usize,
}

impl WindowShape {
    pub fn new(samples: usize, traces: usize) -> Self {
        Self { samples, traces }
    }

    /// Both extents divisible by `2^depth`, as the encoder-decoder requires.
    pub fn supports_depth(&self, depth: usize) -> bool {
        let d = 1usize << depth;
        self.samples % d == 0 && self.traces % d == 0
    }
}

/// Desk-scale default: 256 samples x 64 traces.
impl Default for WindowShape {
    fn default() -> Self {
        Self {
            samples: 256,
            traces: 64,
        }
    }
}

/// Tiles `gather` into `ceil(N / traces)` consecutive windows, zero-padding
/// the last window on the right and every window below row `M`.
pub fn window_gather(gather: &Gather, shape: WindowShape) -> Result<Vec<WindowedGather>> {
    let m = gather.num_samples();
    let n = gather.num_traces();
    if m > shape.samples {
        return Err(Error::Config(format!(
            "gather {} has {m} samples but the window holds {}; vertical tiling is unsupported",
            gather.gather_id, shape.samples
        )));
    }
    let n_windows = n.div_ceil(shape.traces);
    let mut windows = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let first_trace = w * shape.traces;
        let real_cols = (n - first_trace).min(shape.traces);
        let mut data = Array2::zeros((shape.samples, shape.traces));
        data.slice_mut(ndarray::s![..m, ..real_cols]).assign(
            &gather
                .amplitude
                .slice(ndarray::s![.., first_trace..first_trace + real_cols]),
        );
        windows.push(WindowedGather::from_block(
            data,
            m,
            real_cols,
            WindowOrigin {
                gather_id: gather.gather_id.clone(),
                first_trace,
                first_sample: 0,
            },
        ));
    }
    Ok(windows)
}

/// Extracts the picks for one window's real trace columns; padded columns
/// come back as [`UNLABELED`].
pub fn picks_for_window(picks: &PickSet1D, window: &WindowedGather) -> PickSet1D {
    let mut out = vec![UNLABELED; window.width()];
    for (c, slot) in out.iter_mut().enumerate().take(window.valid_cols()) {
        *slot = picks.get(window.origin.first_trace + c);
    }
    PickSet1D::new(out).expect("window picks preserve sentinel bound")
}

/// Reassembles per-window picks into gather trace order. Picks located in
/// padded columns are dropped; windows must belong to one gather and must
/// not overlap.
pub fn unwindow_picks(per_window: &[(PickSet1D, &WindowedGather)]) -> Result<PickSet1D> {
    if per_window.is_empty() {
        return Ok(PickSet1D::unlabeled(0));
    }
    let gather_id = &per_window[0].1.origin.gather_id;
    let mut n_traces = 0usize;
    for (picks, win) in per_window {
        if &win.origin.gather_id != gather_id {
            return Err(Error::Consistency(format!(
                "windows mix gathers {gather_id} and {}",
                win.origin.gather_id
            )));
        }
        if picks.len() != win.width() {
            return Err(Error::Shape(format!(
                "window picks length {} does not match window width {}",
                picks.len(),
                win.width()
            )));
        }
        n_traces = n_traces.max(win.origin.first_trace + win.valid_cols());
    }

    let mut out = vec![UNLABELED; n_traces];
    let mut covered = vec![false; n_traces];
    for (picks, win) in per_window {
        for c in 0..win.valid_cols() {
            let trace = win.origin.first_trace + c;
            if covered[trace] {
                return Err(Error::Consistency(format!(
                    "trace {trace} of gather {gather_id} covered by overlapping windows"
                )));
            }
            covered[trace] = true;
            out[trace] = picks.get(c);
        }
    }
    if let Some(gap) = covered.iter().position(|&c| !c) {
        return Err(Error::Consistency(format!(
            "windows do not cover trace {gap} of gather {gather_id}"
        )));
    }
    PickSet1D::new(out)
}

//! Synthetic gathers with known ground-truth first-breaks, plus the two
//! corruption protocols used in the experiments: per-trace Gaussian signal
//! noise scaled by the trace maximum, and Gaussian label displacement.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::types::{Gather, PickSet1D, UNLABELED};

/// First-break moveout across traces, in sample units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Moveout {
    /// `t_k = intercept + slope * k`
    Linear { intercept: f64, slope: f64 },
    /// `t_k = sqrt(apex_time^2 + (slope * (k - apex_trace))^2)`
    Hyperbolic {
        apex_time: f64,
        apex_trace: f64,
        slope: f64,
    },
}

impl Moveout {
    pub fn time_at(&self, trace: usize) -> f64 {
        let k = trace as f64;
        match *self {
            Moveout::Linear { intercept, slope } => intercept + slope * k,
            Moveout::Hyperbolic {
                apex_time,
                apex_trace,
                slope,
            } => {
                let dx = slope * (k - apex_trace);
                (apex_time * apex_time + dx * dx).sqrt()
            }
        }
    }
}

/// Recipe for one synthetic gather.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_samples: usize,
    pub num_traces: usize,
    pub sample_rate_ms: f64,
    /// Wavelet center frequency in Hz.
    pub center_freq_hz: f64,
    pub moveout: Moveout,
    /// Background noise std relative to each trace's wavelet amplitude;
    /// 0 leaves the pre-arrival region exactly silent.
    pub noise_floor: f64,
    /// Exponential amplitude decay per trace index.
    pub amplitude_decay: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_samples: 256,
            num_traces: 64,
            sample_rate_ms: 1.0,
            center_freq_hz: 125.0,
            moveout: Moveout::Linear {
                intercept: 40.0,
                slope: 0.8,
            },
            noise_floor: 0.02,
            amplitude_decay: 0.004,
            seed: 0,
        }
    }
}

/// Signal-noise corruption level: per trace `k`, Gaussian noise with
/// `sigma_n = max(abs(x_k)) * level` is added.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(level: f64, seed: u64) -> Result<Self> {
        if !(level >= 0.0) {
            return Err(Error::Config(format!("noise level must be >= 0, got {level}")));
        }
        Ok(Self { level, seed })
    }
}

/// Per-trace noise std for a given trace maximum and level.
pub fn noise_sigma(trace_max_abs: f64, level: f64) -> f64 {
    trace_max_abs * level
}

/// Ricker pulse `(1 - 2 a^2) exp(-a^2)` with `a = pi * f * tau`.
fn ricker(tau_s: f64, freq_hz: f64) -> f64 {
    let a = std::f64::consts::PI * freq_hz * tau_s;
    let a2 = a * a;
    (1.0 - 2.0 * a2) * (-a2).exp()
}

// The wavelet is truncated to start exactly at the onset sample: its peak
// trails the first-break by ONSET_LEAD periods, so each trace is exactly
// zero before its pick (plus noise floor, when configured). Half a period
// of lead leaves a crisp 0.33-of-peak step right at the pick.
const ONSET_LEAD_PERIODS: f64 = 0.5;
const TAIL_PERIODS: f64 = 1.4;

/// Generates one gather plus its ground-truth picks. Deterministic in
/// `spec.seed`; picks are `round(moveout)` and must land inside `[0, M)`.
pub fn generate_gather(spec: &SynthSpec, gather_id: &str) -> Result<(Gather, PickSet1D)> {
    let m = spec.num_samples;
    let n = spec.num_traces;
    if m == 0 || n == 0 {
        return Err(Error::Config(format!("gather dims must be positive, got {m}x{n}")));
    }
    if !(spec.center_freq_hz > 0.0) || !(spec.sample_rate_ms > 0.0) {
        return Err(Error::Config(
            "wavelet frequency and sample rate must be positive".into(),
        ));
    }
    if spec.noise_floor < 0.0 || spec.amplitude_decay < 0.0 {
        return Err(Error::Config(
            "noise floor and amplitude decay must be nonnegative".into(),
        ));
    }

    let dt_s = spec.sample_rate_ms / 1000.0;
    let period_samples = 1.0 / (spec.center_freq_hz * dt_s);
    let lead = ONSET_LEAD_PERIODS * period_samples;
    let tail = TAIL_PERIODS * period_samples;

    let mut picks = Vec::with_capacity(n);
    for k in 0..n {
        let t = spec.moveout.time_at(k);
        let p = t.round();
        if !(0.0..m as f64).contains(&p) {
            return Err(Error::Config(format!(
                "moveout places trace {k} first-break at sample {t:.1}, outside 0..{m}"
            )));
        }
        picks.push(p as i32);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut amp = Array2::<f32>::zeros((m, n));
    for k in 0..n {
        // per-trace amplitude: exponential decay plus mild jitter
        let jitter = rng.random_range(0.85f64..1.15);
        let a_k = (-spec.amplitude_decay * k as f64).exp() * jitter;
        let onset = picks[k] as usize;
        let last = ((onset as f64 + lead + tail).ceil() as usize).min(m.saturating_sub(1));
        for i in onset..=last {
            let tau_s = ((i - onset) as f64 - lead) * dt_s;
            amp[[i, k]] = (a_k * ricker(tau_s, spec.center_freq_hz)) as f32;
        }
        if spec.noise_floor > 0.0 {
            let normal = Normal::new(0.0, spec.noise_floor * a_k)
                .map_err(|e| Error::Config(format!("bad noise floor: {e}")))?;
            for i in 0..m {
                amp[[i, k]] += normal.sample(&mut rng) as f32;
            }
        }
    }

    let gather = Gather::new(amp, gather_id, spec.sample_rate_ms)?;
    let picks = PickSet1D::new(picks)?;
    picks.validate(m)?;
    Ok((gather, picks))
}

/// Ranges for drawing per-gather moveout and wavelet variations when
/// generating a whole dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetVariation {
    pub intercept: (f64, f64),
    pub linear_slope: (f64, f64),
    pub hyperbolic_slope: (f64, f64),
    pub freq_scale: (f64, f64),
    /// Probability that a gather uses hyperbolic rather than linear moveout.
    pub hyperbolic_fraction: f64,
}

impl Default for DatasetVariation {
    fn default() -> Self {
        Self::for_panel(256, 64)
    }
}

impl DatasetVariation {
    /// Ranges scaled to an `m x n` panel: first-breaks start in the upper
    /// half and moveouts stay inside the panel across all `n` traces.
    pub fn for_panel(m: usize, n: usize) -> Self {
        let m = m as f64;
        let n = n as f64;
        let slope_cap = 0.35 * m / n;
        Self {
            intercept: (0.117 * m, 0.43 * m),
            linear_slope: (-slope_cap, slope_cap),
            hyperbolic_slope: (0.1 * m / n, slope_cap),
            freq_scale: (0.8, 1.25),
            hyperbolic_fraction: 0.5,
        }
    }
}

/// Draws `count` gathers from `base`, varying moveout and frequency per
/// gather. Gather ids are `g%06d`. Deterministic in `base.seed`.
pub fn generate_dataset(
    base: &SynthSpec,
    variation: &DatasetVariation,
    count: usize,
) -> Result<Vec<(Gather, PickSet1D)>> {
    let mut out = Vec::with_capacity(count);
    for g in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base.seed, g as u64));
        let n = base.num_traces as f64;
        let moveout = if rng.random_bool(variation.hyperbolic_fraction) {
            Moveout::Hyperbolic {
                apex_time: rng.random_range(variation.intercept.0..variation.intercept.1),
                apex_trace: rng.random_range(0.0..n),
                slope: rng.random_range(variation.hyperbolic_slope.0..variation.hyperbolic_slope.1),
            }
        } else {
            let slope = rng.random_range(variation.linear_slope.0..variation.linear_slope.1);
            // keep the whole line inside the panel
            let span = slope * (n - 1.0);
            let lo = variation.intercept.0 + (-span).max(0.0);
            let hi = variation.intercept.1 + (-span).min(0.0);
            Moveout::Linear {
                intercept: rng.random_range(lo..hi.max(lo + 1.0)),
                slope,
            }
        };
        let spec = SynthSpec {
            moveout,
            center_freq_hz: base.center_freq_hz
                * rng.random_range(variation.freq_scale.0..variation.freq_scale.1),
            seed: derive_seed(base.seed, 0x7000_0000 + g as u64),
            ..base.clone()
        };
        out.push(generate_gather(&spec, &format!("g{g:06}"))?);
    }
    Ok(out)
}

/// Adds per-trace Gaussian noise with `sigma_n = max(abs(x_k)) * level`.
/// The input gather is untouched; deterministic in `spec.seed`.
pub fn add_signal_noise(gather: &Gather, spec: &NoiseSpec) -> Result<Gather> {
    if spec.level < 0.0 {
        return Err(Error::Config(format!("noise level must be >= 0, got {}", spec.level)));
    }
    if spec.level == 0.0 {
        return Ok(gather.clone());
    }
    let mut amp = gather.amplitude.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for k in 0..amp.ncols() {
        let max_abs = amp
            .column(k)
            .iter()
            .fold(0.0f64, |acc, &v| acc.max((v as f64).abs()));
        let sigma = noise_sigma(max_abs, spec.level);
        if sigma == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, sigma).expect("sigma checked positive");
        for i in 0..amp.nrows() {
            amp[[i, k]] += normal.sample(&mut rng) as f32;
        }
    }
    Gather::new(amp, gather.gather_id.clone(), gather.sample_rate_ms)
}

/// The raw Gaussian perturbations used by [`add_label_noise`], before
/// rounding and clamping. Exposed so calibration checks can measure the
/// stated moments directly.
pub fn label_noise_draws(variance: f64, seed: u64, count: usize) -> Result<Vec<f64>> {
    if variance < 0.0 {
        return Err(Error::Config(format!("variance must be >= 0, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(vec![0.0; count]);
    }
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::Config(format!("bad variance: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| normal.sample(&mut rng)).collect())
}

/// Displaces each labeled pick by a Gaussian draw with the given variance,
/// rounded to the nearest integer and clamped to `[0, M-1]`. Unlabeled
/// traces are unchanged. Deterministic in `seed`.
pub fn add_label_noise(
    picks: &PickSet1D,
    variance: f64,
    seed: u64,
    num_samples: usize,
) -> Result<PickSet1D> {
    let draws = label_noise_draws(variance, seed, picks.len())?;
    let mut out = Vec::with_capacity(picks.len());
    for (p, eps) in picks.iter().zip(draws) {
        if p == UNLABELED {
            out.push(UNLABELED);
        } else {
            let moved = (p as f64 + eps).round();
            out.push(moved.clamp(0.0, (num_samples - 1) as f64) as i32);
        }
    }
    PickSet1D::new(out)
}

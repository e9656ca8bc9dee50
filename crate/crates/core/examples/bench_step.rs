// quick manual timing harness (not committed)
use fbpick_core::net::{FitSample, Predictor, RefNetPredictor, ReferenceNetConfig};
use fbpick_core::synth::{generate_dataset, DatasetVariation, SynthSpec};
use fbpick_core::types::LabelMask2D;
use fbpick_core::window::{picks_for_window, window_gather, WindowShape};
use std::time::Instant;

fn main() {
    let base = SynthSpec { seed: 1, ..SynthSpec::default() };
    let items = generate_dataset(&base, &DatasetVariation::default(), 8).unwrap();
    let shape = WindowShape::default();
    let mut windows = Vec::new();
    for (g, p) in &items {
        for w in window_gather(g, shape).unwrap() {
            let wp = picks_for_window(p, &w);
            let t = LabelMask2D::from_picks(&wp, w.height()).unwrap();
            let v = w.valid_mask.clone();
            windows.push((w, t, v));
        }
    }
    let mut net = RefNetPredictor::new(&ReferenceNetConfig::default()).unwrap();
    // warmup
    let batch: Vec<FitSample> = windows.iter().map(|(w, t, v)| FitSample { window: w, target: t, valid: v }).collect();
    net.fit_step(&batch).unwrap();
    let t0 = Instant::now();
    let reps = 10;
    for _ in 0..reps {
        net.fit_step(&batch).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("fit_step (batch 8, 256x64, depth3/base16): {:.3} s", dt);
    let t0 = Instant::now();
    for _ in 0..reps {
        for (w, _, _) in &windows {
            net.forward(w).unwrap();
        }
    }
    println!("forward x8: {:.3} s", t0.elapsed().as_secs_f64() / reps as f64);
}

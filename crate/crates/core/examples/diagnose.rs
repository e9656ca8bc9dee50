// Dev-only: layer-level gradient and activation stats during a short fit.

use fbpick_core::net::{FitSample, Predictor, RefNetPredictor, ReferenceNetConfig};
use fbpick_core::synth::{generate_dataset, DatasetVariation, SynthSpec};
use fbpick_core::types::LabelMask2D;
use fbpick_core::window::{picks_for_window, window_gather, WindowShape};

fn main() {
    let base = SynthSpec { seed: 1, ..SynthSpec::default() };
    let items = generate_dataset(&base, &DatasetVariation::default(), 8).unwrap();
    let shape = WindowShape::default();
    let mut samples = Vec::new();
    for (g, p) in &items {
        for w in window_gather(g, shape).unwrap() {
            let wp = picks_for_window(p, &w);
            let t = LabelMask2D::from_picks(&wp, w.height()).unwrap();
            let v = w.valid_mask.clone();
            samples.push((w, t, v));
        }
    }
    let mut net = RefNetPredictor::new(&ReferenceNetConfig {
        learning_rate: 3e-3,
        seed: 1,
        ..ReferenceNetConfig::default()
    })
    .unwrap();

    for step in 0..301 {
        let batch: Vec<FitSample> = samples
            .iter()
            .map(|(w, t, v)| FitSample { window: w, target: t, valid: v })
            .collect();
        let before = net.state().params().to_vec();
        let out = net.fit_step(&batch).unwrap();
        if step % 50 == 0 {
            let after = net.state().params();
            let delta: f64 = before
                .iter()
                .zip(after)
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            let map = net.forward(&samples[0].0).unwrap();
            let probs = map.prob();
            let mean = probs.mean().unwrap();
            let maxp = probs.iter().cloned().fold(0.0f64, f64::max);
            let minp = probs.iter().cloned().fold(1.0f64, f64::min);
            // column-wise argmax error vs target
            let picks = fbpick_core::spr::pick(&map);
            let truth = &samples[0].1;
            let t1d = truth.to_picks();
            let mae: f64 = (0..picks.len())
                .filter(|&k| t1d.get(k) >= 0)
                .map(|k| (picks.get(k) - t1d.get(k)).abs() as f64)
                .sum::<f64>()
                / picks.len() as f64;
            println!(
                "step {step:4}  loss {:.5}  |dW| {delta:.5}  p[{minp:.4},{maxp:.4}] mean {mean:.4}  win0 pick-mae {mae:.1}",
                out.loss
            );
        }
    }
}

// Dev-only: gradient-check error survey with biases pushed off the ReLU kink.
use fbpick_core::net::{grad_check, PredictorState, ReferenceNetConfig};
use fbpick_core::types::{Gather, LabelMask2D, PickSet1D};
use fbpick_core::window::{window_gather, WindowShape};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn err_for(depth: usize, width: usize, h: usize, w: usize, net_seed: u64, in_seed: u64, bias: f32) -> f64 {
    let mut state = PredictorState::new(&ReferenceNetConfig {
        depth, base_width: width, kernel_size: 3, learning_rate: 1e-2, seed: net_seed,
    }).unwrap();
    if bias != 0.0 {
        // biases are zero-initialized; push every zero entry to `bias`
        let params: Vec<f32> = state.params().iter().map(|&p| if p == 0.0 { bias } else { p }).collect();
        state.set_params(params).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(in_seed);
    let amp = Array2::from_shape_fn((h, w), |_| rng.random_range(-1.0f32..1.0));
    let g = Gather::new(amp, "g", 1.0).unwrap();
    let win = window_gather(&g, WindowShape::new(h, w)).unwrap().remove(0);
    let picks = PickSet1D::new((0..w).map(|_| rng.random_range(0..h as i32)).collect()).unwrap();
    let target = LabelMask2D::from_picks(&picks, h).unwrap();
    let valid = win.valid_mask.clone();
    grad_check(&state, &win, &target, &valid).unwrap()
}

fn main() {
    let mut good = Vec::new();
    for seed in 1..30u64 {
        let e1 = err_for(1, 2, 8, 8, seed, seed + 1000, 0.5);
        let e3 = err_for(3, 1, 16, 16, seed, seed + 2000, 0.5);
        if e1 < 1e-4 && e3 < 1e-4 { good.push(seed); }
        if seed <= 10 { println!("seed {seed}: depth1 {e1:.2e}  depth3 {e3:.2e}"); }
    }
    println!("good seeds ({} of 29): {good:?}", good.len());
}

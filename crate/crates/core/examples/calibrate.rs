// Dev-only experiment driver: runs the clean and noisy-label experiment
// pipelines end to end at desk scale and prints the metrics the acceptance
// thresholds depend on. Not part of the shipped surface.

use std::path::Path;
use std::time::Instant;

use fbpick_core::dataset::{
    read_dataset, split_dataset, write_dataset, DatasetReader, LatentPickStore,
};
use fbpick_core::metrics::{evaluate_pairs, DEFAULT_DELTAS};
use fbpick_core::net::{RefNetPredictor, ReferenceNetConfig};
use fbpick_core::spr::{
    pick_gather, refine_gather, train_baseline, train_spr, SprConfig, TrainOptions,
};
use fbpick_core::synth::{add_label_noise, generate_dataset, DatasetVariation, SynthSpec};
use fbpick_core::types::PickSet1D;
use fbpick_core::window::WindowShape;

fn pairs_for(
    clean: &DatasetReader,
    ids: &[String],
    predict: impl Fn(&str) -> PickSet1D,
) -> Vec<(PickSet1D, PickSet1D)> {
    ids.iter()
        .map(|id| (clean.load_picks(id).unwrap(), predict(id)))
        .collect()
}

fn hr(report: &fbpick_core::metrics::MetricsReport, delta: u32) -> f64 {
    report
        .hit_rates
        .iter()
        .find(|&&(d, _)| d == delta)
        .map(|&(_, v)| v)
        .unwrap()
}

fn main() {
    let t_all = Instant::now();
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let gathers: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(200);
    let epochs: u32 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(30);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-3);

    let tmp = tempfile::tempdir().unwrap();
    let clean_dir = tmp.path().join("clean");
    let noisy_dir = tmp.path().join("noisy");

    // generate
    let base = SynthSpec {
        seed,
        ..SynthSpec::default()
    };
    let items = generate_dataset(&base, &DatasetVariation::default(), gathers).unwrap();
    write_dataset(&clean_dir, "clean", 1.0, &items).unwrap();

    // label-noise corrupted copy (variance 3)
    let noisy_items: Vec<_> = items
        .iter()
        .enumerate()
        .map(|(i, (g, p))| {
            let noisy = add_label_noise(p, 3.0, seed.wrapping_mul(31).wrapping_add(i as u64), g.num_samples()).unwrap();
            (g.clone(), noisy)
        })
        .collect();
    write_dataset(&noisy_dir, "noisy", 1.0, &noisy_items).unwrap();

    let clean = read_dataset(&clean_dir).unwrap();
    let noisy = read_dataset(&noisy_dir).unwrap();
    let (train_m, _val_m, test_m) = split_dataset(clean.manifest(), (0.8, 0.1, 0.1), seed).unwrap();
    let train_ids: Vec<String> = train_m.gathers.iter().map(|e| e.gather_id.clone()).collect();
    let test_ids: Vec<String> = test_m.gathers.iter().map(|e| e.gather_id.clone()).collect();
    println!(
        "dataset: {gathers} gathers, split {}/{}/{} (seed {seed})",
        train_m.len(),
        _val_m.len(),
        test_m.len()
    );

    let shape = WindowShape::default();
    let spr_cfg = SprConfig {
        epochs,
        shuffle_seed: seed,
        ..SprConfig::default()
    };
    let net_cfg = ReferenceNetConfig {
        seed,
        learning_rate: lr,
        ..ReferenceNetConfig::default()
    };
    println!("lr {lr}, epochs {epochs}");
    let options = TrainOptions {
        window_shape: shape,
        run_dir: None,
    };

    let train_arm = |dataset: &DatasetReader, manifest, spr: bool, gamma: f64| {
        let t0 = Instant::now();
        let train_reader = dataset.with_manifest(manifest);
        let mut net = RefNetPredictor::new(&net_cfg).unwrap();
        let mut store = LatentPickStore::init_from_dataset(&train_reader).unwrap();
        let cfg = SprConfig { gamma, ..spr_cfg };
        let summary = if spr {
            train_spr(&train_reader, &mut net, &cfg, &mut store, &options).unwrap()
        } else {
            train_baseline(&train_reader, &mut net, &cfg, &mut store, &options).unwrap()
        };
        println!(
            "  trained {} gamma={gamma} ({} steps, {:.1}s, final loss {:.5})",
            if spr { "spr" } else { "baseline" },
            summary.steps_run,
            t0.elapsed().as_secs_f64(),
            summary.final_epoch_mean_loss.unwrap_or(f64::NAN)
        );
        net
    };

    // ---- clean experiment (criterion 8) ----
    println!("== clean data ==");
    let spr_net = train_arm(&clean, train_m.clone(), true, 5.0);
    let base_net = train_arm(&clean, train_m.clone(), false, 5.0);
    for (name, net) in [("spr", &spr_net), ("baseline", &base_net)] {
        let preds = pairs_for(&clean, &test_ids, |id| {
            pick_gather(net, &clean.load_gather(id).unwrap(), shape).unwrap()
        });
        let report = evaluate_pairs(&preds, &DEFAULT_DELTAS).unwrap();
        println!(
            "  {name} test: HR0 {:.3} HR1 {:.3} HR2 {:.3} MAE {:.3}",
            hr(&report, 0),
            hr(&report, 1),
            hr(&report, 2),
            report.mae
        );
    }

    // ---- noisy-label experiment (criteria 6, 7, 9) ----
    println!("== noisy labels (variance 3) ==");
    let noisy_train_m = noisy
        .manifest()
        .gathers
        .iter()
        .filter(|e| train_ids.contains(&e.gather_id))
        .cloned()
        .collect::<Vec<_>>();
    let noisy_train_manifest = fbpick_core::dataset::DatasetManifest {
        dataset_name: "noisy-train".into(),
        sample_rate_ms: 1.0,
        gathers: noisy_train_m,
    };

    // the "Noisy Label" row: corrupted picks vs clean truth on train
    let noisy_row = pairs_for(&clean, &train_ids, |id| noisy.load_picks(id).unwrap());
    let noisy_report = evaluate_pairs(&noisy_row, &DEFAULT_DELTAS).unwrap();
    println!(
        "  noisy labels: HR0 {:.3} HR1 {:.3} MAE {:.3}",
        hr(&noisy_report, 0),
        hr(&noisy_report, 1),
        noisy_report.mae
    );

    for gamma in [5.0, 500.0, 0.05] {
        let net = train_arm(&noisy, noisy_train_manifest.clone(), true, gamma);
        // refinement on train (Eq. 9 vs clean truth)
        let refined = pairs_for(&clean, &train_ids, |id| {
            refine_gather(
                &net,
                &noisy.load_gather(id).unwrap(),
                &noisy.load_picks(id).unwrap(),
                gamma,
                shape,
            )
            .unwrap()
        });
        let refine_report = evaluate_pairs(&refined, &DEFAULT_DELTAS).unwrap();
        // picking on clean test
        let picked = pairs_for(&clean, &test_ids, |id| {
            pick_gather(&net, &clean.load_gather(id).unwrap(), shape).unwrap()
        });
        let pick_report = evaluate_pairs(&picked, &DEFAULT_DELTAS).unwrap();
        println!(
            "  spr g={gamma}: refine HR0 {:.3} HR1 {:.3} MAE {:.3} | test HR0 {:.3} HR1 {:.3} MAE {:.3}",
            hr(&refine_report, 0),
            hr(&refine_report, 1),
            refine_report.mae,
            hr(&pick_report, 0),
            hr(&pick_report, 1),
            pick_report.mae
        );
    }
    let net = train_arm(&noisy, noisy_train_manifest.clone(), false, 5.0);
    let picked = pairs_for(&clean, &test_ids, |id| {
        pick_gather(&net, &clean.load_gather(id).unwrap(), shape).unwrap()
    });
    let pick_report = evaluate_pairs(&picked, &DEFAULT_DELTAS).unwrap();
    println!(
        "  baseline(noisy): test HR0 {:.3} HR1 {:.3} MAE {:.3}",
        hr(&pick_report, 0),
        hr(&pick_report, 1),
        pick_report.mae
    );

    let _ = Path::new(".");
    println!("total {:.1}s", t_all.elapsed().as_secs_f64());
}

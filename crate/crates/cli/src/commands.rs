//! Subcommand implementations.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fbpick_core::dataset::{
    read_dataset, read_picks_file, split_dataset, write_dataset, write_manifest,
    write_picks_file, DatasetManifest, DatasetReader, LatentPickStore,
};
use fbpick_core::metrics::{csv_header, csv_row, evaluate_dataset, DEFAULT_DELTAS};
use fbpick_core::net::{RefNetPredictor, ReferenceNetConfig};
use fbpick_core::seed::derive_seed;
use fbpick_core::spr::{
    pick_gather, refine_gather, train_baseline, train_spr, SprConfig, TrainOptions,
};
use fbpick_core::synth::{
    add_label_noise, add_signal_noise, generate_dataset, DatasetVariation, NoiseSpec, SynthSpec,
};
use fbpick_core::window::WindowShape;

use crate::config::{pick3, FileConfig};
use crate::svg::gather_overlay;
use crate::{Cli, Command, Mode, Subset};

// component salts for deriving per-purpose seeds from the master seed
const SALT_GEN: u64 = 0xA1;
const SALT_SIGNAL: u64 = 0xA2;
const SALT_LABEL: u64 = 0xA3;
const SALT_NET: u64 = 0xA4;
const SALT_SHUFFLE: u64 = 0xA5;
const SALT_SPLIT: u64 = 0xA6;

/// The fully resolved parameters of a training run; persisted as
/// `run_config.json` so inference and evaluation reuse the same split and
/// window shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunParams {
    pub data_dir: String,
    pub mode: String,
    pub gamma: f64,
    pub epochs: u32,
    pub batch: usize,
    pub lr: f64,
    pub depth: usize,
    pub width: usize,
    pub kernel: usize,
    pub window_samples: usize,
    pub window_traces: usize,
    pub seed: u64,
    pub split: (f64, f64, f64),
    pub split_seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate {
            gathers,
            traces,
            samples,
            sample_rate_ms,
            freq,
            noise_floor,
            decay,
            seed,
            name,
            out,
        } => {
            let spec = SynthSpec {
                num_samples: pick3(samples, file.usize("samples"), 256),
                num_traces: pick3(traces, file.usize("traces"), 64),
                sample_rate_ms: pick3(sample_rate_ms, file.f64("sample-rate-ms"), 1.0),
                center_freq_hz: pick3(freq, file.f64("freq"), 125.0),
                noise_floor: pick3(noise_floor, file.f64("noise-floor"), 0.02),
                amplitude_decay: pick3(decay, file.f64("decay"), 0.004),
                seed: derive_seed(pick3(seed, file.u64("seed"), 0), SALT_GEN),
                ..SynthSpec::default()
            };
            let count = pick3(gathers, file.usize("gathers"), 200);
            let name = pick3(name, file.string("name"), "synthetic".to_string());
            let variation = DatasetVariation::for_panel(spec.num_samples, spec.num_traces);
            let items = generate_dataset(&spec, &variation, count)?;
            write_dataset(&out, &name, spec.sample_rate_ms, &items)?;
            println!("wrote {count} gathers to {}", out.display());
            Ok(())
        }

        Command::Corrupt {
            input,
            out,
            signal_nl,
            label_var,
            seed,
        } => {
            let nl = pick3(signal_nl, file.f64("signal-nl"), 0.0);
            let var = pick3(label_var, file.f64("label-var"), 0.0);
            let seed = pick3(seed, file.u64("seed"), 0);
            if input.canonicalize().ok() == out.canonicalize().ok() {
                bail!("corrupt must write to a different directory than its input");
            }
            let reader = read_dataset(&input)?;
            let signal_base = derive_seed(seed, SALT_SIGNAL);
            let label_base = derive_seed(seed, SALT_LABEL);
            let mut items = Vec::with_capacity(reader.manifest().len());
            for (idx, entry) in reader.manifest().gathers.iter().enumerate() {
                let mut gather = reader.load_gather(&entry.gather_id)?;
                let mut picks = reader.load_picks(&entry.gather_id)?;
                if nl > 0.0 {
                    gather = add_signal_noise(
                        &gather,
                        &NoiseSpec::new(nl, derive_seed(signal_base, idx as u64))?,
                    )?;
                }
                if var > 0.0 {
                    picks = add_label_noise(
                        &picks,
                        var,
                        derive_seed(label_base, idx as u64),
                        entry.num_samples,
                    )?;
                }
                items.push((gather, picks));
            }
            let name = format!("{}-corrupt", reader.manifest().dataset_name);
            write_dataset(&out, &name, reader.manifest().sample_rate_ms, &items)?;
            println!(
                "wrote corrupted copy (NL={nl}, label variance={var}) to {}",
                out.display()
            );
            Ok(())
        }

        Command::Train {
            data,
            out,
            mode,
            gamma,
            epochs,
            batch,
            lr,
            depth,
            width,
            kernel,
            window_samples,
            window_traces,
            seed,
            split,
            split_seed,
            resume,
        } => {
            let seed_v = pick3(seed, file.u64("seed"), 0);
            let split_str = pick3(split, file.string("split"), "0.8,0.1,0.1".to_string());
            let params = RunParams {
                data_dir: data.display().to_string(),
                mode: match pick3(mode, None, Mode::Spr) {
                    Mode::Spr => "spr".to_string(),
                    Mode::Baseline => "baseline".to_string(),
                },
                gamma: pick3(gamma, file.f64("gamma"), 5.0),
                epochs: pick3(epochs, file.u64("epochs").map(|v| v as u32), 30),
                batch: pick3(batch, file.usize("batch"), 8),
                lr: pick3(lr, file.f64("lr"), 1e-4),
                depth: pick3(depth, file.usize("depth"), 3),
                width: pick3(width, file.usize("width"), 16),
                kernel: pick3(kernel, file.usize("kernel"), 3),
                window_samples: pick3(window_samples, file.usize("window-samples"), 256),
                window_traces: pick3(window_traces, file.usize("window-traces"), 64),
                seed: seed_v,
                split: parse_ratios(&split_str)?,
                split_seed: pick3(split_seed, file.u64("split-seed"), derive_seed(seed_v, SALT_SPLIT)),
            };
            train_run(&data, &out, &params, resume)
        }

        Command::Pick {
            run,
            data,
            subset,
            out,
        } => {
            let params = load_run_params(&run)?;
            let data_dir = data.unwrap_or_else(|| PathBuf::from(&params.data_dir));
            let subset = subset.unwrap_or(Subset::Test);
            let reader = subset_reader(&data_dir, &params, subset)?;
            let net = RefNetPredictor::load(&run.join("checkpoint.bin"))?;
            let shape = WindowShape::new(params.window_samples, params.window_traces);
            fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let results: Vec<Result<String>> = reader
                .manifest()
                .gathers
                .par_iter()
                .map(|entry| {
                    let gather = reader.load_gather(&entry.gather_id)?;
                    let picks = pick_gather(&net, &gather, shape)?;
                    write_picks_file(&out.join(format!("{}.csv", entry.gather_id)), &picks)?;
                    Ok(entry.gather_id.clone())
                })
                .collect();
            let mut n = 0;
            for r in results {
                r?;
                n += 1;
            }
            println!("picked {n} gathers into {}", out.display());
            Ok(())
        }

        Command::Refine {
            run,
            data,
            subset,
            gamma,
            out,
        } => {
            let params = load_run_params(&run)?;
            let data_dir = data.unwrap_or_else(|| PathBuf::from(&params.data_dir));
            let subset = subset.unwrap_or(Subset::Train);
            let gamma = pick3(gamma, file.f64("gamma"), params.gamma);
            let reader = subset_reader(&data_dir, &params, subset)?;
            let net = RefNetPredictor::load(&run.join("checkpoint.bin"))?;
            let shape = WindowShape::new(params.window_samples, params.window_traces);
            fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            let results: Vec<Result<()>> = reader
                .manifest()
                .gathers
                .par_iter()
                .map(|entry| {
                    let gather = reader.load_gather(&entry.gather_id)?;
                    let manual = reader.load_picks(&entry.gather_id)?;
                    let picks = refine_gather(&net, &gather, &manual, gamma, shape)?;
                    write_picks_file(&out.join(format!("{}.csv", entry.gather_id)), &picks)?;
                    Ok(())
                })
                .collect();
            for r in results {
                r?;
            }
            println!(
                "refined {} gathers (gamma {gamma}) into {}",
                reader.manifest().len(),
                out.display()
            );
            Ok(())
        }

        Command::Evaluate {
            reference,
            pred,
            run,
            subset,
            deltas,
            method,
            out,
            json,
        } => {
            let deltas = match pick3(deltas, file.string("deltas"), String::new()) {
                s if s.is_empty() => DEFAULT_DELTAS.to_vec(),
                s => parse_deltas(&s)?,
            };
            let method = pick3(method, file.string("method"), "spr".to_string());
            let reader = match (&run, subset) {
                (Some(run_dir), _) => {
                    let params = load_run_params(run_dir)?;
                    subset_reader(&reference, &params, subset.unwrap_or(Subset::Test))?
                }
                (None, _) => read_dataset(&reference)?,
            };
            let report = evaluate_dataset(&reader, &pred, &deltas)?;
            append_report_row(&out, &method, &deltas, &report)?;
            if let Some(json_path) = json {
                fs::write(
                    &json_path,
                    serde_json::to_string_pretty(&report)? + "\n",
                )
                .with_context(|| format!("writing {}", json_path.display()))?;
            }
            println!("{}", csv_header(&deltas));
            println!("{}", csv_row(&method, &report));
            Ok(())
        }

        Command::Report {
            evals,
            out,
            overlay_data,
            overlay_picks,
            overlay_gathers,
        } => report_cmd(&evals, &out, overlay_data, overlay_picks, overlay_gathers),
    }
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing split ratios {s:?}"))?;
    if parts.len() != 3 {
        bail!("split needs exactly three ratios, got {s:?}");
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn parse_deltas(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u32>()
                .with_context(|| format!("parsing delta {p:?}"))
        })
        .collect()
}

fn load_run_params(run: &Path) -> Result<RunParams> {
    let path = run.join("run_config.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading run config {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing run config {}", path.display()))
}

fn subset_manifest(
    manifest: &DatasetManifest,
    params: &RunParams,
    subset: Subset,
) -> Result<DatasetManifest> {
    if matches!(subset, Subset::All) {
        return Ok(manifest.clone());
    }
    let (train, val, test) = split_dataset(manifest, params.split, params.split_seed)?;
    Ok(match subset {
        Subset::Train => train,
        Subset::Val => val,
        Subset::Test => test,
        Subset::All => unreachable!(),
    })
}

fn subset_reader(data_dir: &Path, params: &RunParams, subset: Subset) -> Result<DatasetReader> {
    let reader = read_dataset(data_dir)?;
    let manifest = subset_manifest(reader.manifest(), params, subset)?;
    Ok(reader.with_manifest(manifest))
}

fn train_run(data: &Path, out: &Path, params: &RunParams, resume: bool) -> Result<()> {
    let reader = read_dataset(data)?;
    let (train_m, val_m, test_m) = split_dataset(reader.manifest(), params.split, params.split_seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_manifest(&out.join("manifest_train.json"), &train_m)?;
    write_manifest(&out.join("manifest_val.json"), &val_m)?;
    write_manifest(&out.join("manifest_test.json"), &test_m)?;
    fs::write(
        out.join("run_config.json"),
        serde_json::to_string_pretty(params)? + "\n",
    )
    .context("writing run_config.json")?;

    let train_reader = reader.with_manifest(train_m.clone());
    let net_config = ReferenceNetConfig {
        depth: params.depth,
        base_width: params.width,
        kernel_size: params.kernel,
        learning_rate: params.lr,
        seed: derive_seed(params.seed, SALT_NET),
    };
    let checkpoint = out.join("checkpoint.bin");
    let (mut net, mut store) = if resume && checkpoint.exists() {
        let net = RefNetPredictor::load(&checkpoint)?;
        let expected: Vec<(String, usize)> = train_m
            .gathers
            .iter()
            .map(|e| (e.gather_id.clone(), e.num_samples))
            .collect();
        let store = LatentPickStore::load(
            out,
            expected.iter().map(|(id, m)| (id.as_str(), *m)),
        )?;
        println!("resuming from epoch {}", store.epoch());
        (net, store)
    } else {
        (
            RefNetPredictor::new(&net_config)?,
            LatentPickStore::init_from_dataset(&train_reader)?,
        )
    };

    let spr_config = SprConfig {
        gamma: params.gamma,
        epochs: params.epochs,
        batch_size: params.batch,
        shuffle_seed: derive_seed(params.seed, SALT_SHUFFLE),
        latent_update_enabled: params.mode == "spr",
    };
    let options = TrainOptions {
        window_shape: WindowShape::new(params.window_samples, params.window_traces),
        run_dir: Some(out),
    };
    let summary = if params.mode == "spr" {
        train_spr(&train_reader, &mut net, &spr_config, &mut store, &options)?
    } else {
        train_baseline(&train_reader, &mut net, &spr_config, &mut store, &options)?
    };
    println!(
        "trained {} for {} epochs ({} steps, final epoch mean loss {})",
        params.mode,
        summary.epochs_completed,
        summary.steps_run,
        summary
            .final_epoch_mean_loss
            .map(|l| format!("{l:.6}"))
            .unwrap_or_else(|| "n/a".to_string())
    );
    Ok(())
}

fn append_report_row(odir: &Path, method: &str, deltas: &[u32], report: &fbpick_core::metrics::MetricsReport) -> Result<()> {
    if let Some(parent) = odir.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let header = csv_header(deltas);
    let mut text = if odir.exists() {
        let existing = fs::read_to_string(odir)?;
        let first = existing.lines().next().unwrap_or_default();
        if first != header {
            bail!(
                "report {} has header {first:?}, expected {header:?}",
                odir.display()
            );
        }
        existing
    } else {
        header.clone() + "\n"
    };
    text.push_str(&csv_row(method, report));
    text.push('\n');
    fs::write(odir, text)?;
    Ok(())
}

fn report_cmd(
    evals: &[PathBuf],
    out: &Path,
    overlay_data: Option<PathBuf>,
    overlay_picks: Option<PathBuf>,
    overlay_gathers: Option<String>,
) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut header: Option<String> = None;
    let mut rows: Vec<String> = Vec::new();
    let mut missing: Vec<String> = Vec::new();
    for path in evals {
        if !path.exists() {
            missing.push(path.display().to_string());
            continue;
        }
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let Some(first) = lines.next() else {
            missing.push(format!("{} (empty)", path.display()));
            continue;
        };
        match &header {
            None => header = Some(first.to_string()),
            Some(h) if h != first => bail!(
                "evaluation {} header {first:?} does not match {h:?}",
                path.display()
            ),
            _ => {}
        }
        rows.extend(lines.filter(|l| !l.is_empty()).map(str::to_string));
    }
    if !missing.is_empty() {
        bail!("missing evaluation inputs: {}", missing.join(", "));
    }
    let header = header.context("no evaluation rows found")?;
    rows.sort();
    let mut text = header + "\n";
    for row in &rows {
        text.push_str(row);
        text.push('\n');
    }
    let summary = out.join("summary.csv");
    fs::write(&summary, text)?;
    println!("wrote {} ({} rows)", summary.display(), rows.len());

    if let (Some(data_dir), Some(picks_dir), Some(ids)) =
        (&overlay_data, &overlay_picks, &overlay_gathers)
    {
        let reader = read_dataset(data_dir)?;
        let wanted: BTreeSet<&str> = ids.split(',').map(str::trim).collect();
        for id in wanted {
            let gather = reader.load_gather(id)?;
            let reference = reader.load_picks(id)?;
            let predicted = read_picks_file(&picks_dir.join(format!("{id}.csv")))?;
            let svg = gather_overlay(&gather, &reference, &predicted, id);
            let path = out.join(format!("overlay_{id}.svg"));
            fs::write(&path, svg)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

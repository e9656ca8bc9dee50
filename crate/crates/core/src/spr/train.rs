//! The alternating training loop.
//!
//! Per epoch, over shuffled window batches: forward + one BCE gradient step
//! on the current latent labels, then an exact latent-label update from the
//! pre-step predictions, written back into the persistent store. The state
//! and store checkpoint after every epoch, so training resumes from the
//! store's epoch counter.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{latent_update, SprConfig};
use crate::dataset::{DatasetReader, LatentPickStore};
use crate::error::{Error, Result};
use crate::net::{FitSample, Predictor};
use crate::seed::derive_seed;
use crate::types::{LabelMask2D, PickSet1D, WindowedGather, UNLABELED};
use crate::window::{picks_for_window, window_gather, WindowShape};

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions<'a> {
    pub window_shape: WindowShape,
    /// Destination for per-epoch checkpoints (`checkpoint.bin`, `latent/`)
    /// and the step log (`train_log.csv`). `None` trains in memory only.
    pub run_dir: Option<&'a Path>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub epochs_completed: u32,
    pub steps_run: u64,
    pub final_epoch_mean_loss: Option<f64>,
}

struct TrainWindow {
    window: WindowedGather,
    manual: PickSet1D,
}

/// Algorithm: initialize the latent labels from the manual picks (done by
/// the caller via [`LatentPickStore::init`]), then for each epoch and each
/// shuffled batch: predict, take one BCE step on the current latent labels,
/// and re-derive the batch traces' latent picks from the pre-step
/// predictions. With `latent_update_enabled` off the store is never
/// touched: the plain-BCE baseline.
pub fn train_spr<P: Predictor>(
    reader: &DatasetReader,
    predictor: &mut P,
    config: &SprConfig,
    store: &mut LatentPickStore,
    options: &TrainOptions,
) -> Result<TrainSummary> {
    config.validate()?;
    for entry in &reader.manifest().gathers {
        let stored = store.picks(&entry.gather_id)?;
        if stored.len() != entry.num_traces {
            return Err(Error::Consistency(format!(
                "latent store picks for {} have {} traces, manifest says {}",
                entry.gather_id,
                stored.len(),
                entry.num_traces
            )));
        }
    }

    // materialize all training windows once; desk-scale datasets fit in RAM
    let mut windows: Vec<TrainWindow> = Vec::new();
    for entry in &reader.manifest().gathers {
        let gather = reader.load_gather(&entry.gather_id)?;
        let manual = reader.load_picks(&entry.gather_id)?;
        for window in window_gather(&gather, options.window_shape)? {
            let manual_w = picks_for_window(&manual, &window);
            windows.push(TrainWindow {
                window,
                manual: manual_w,
            });
        }
    }

    let mut log = match options.run_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io_from(dir, e))?;
            let path = dir.join("train_log.csv");
            let fresh = !path.exists() || store.epoch() == 0;
            let mut file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .truncate(false)
                .open(&path)
                .map_err(|e| Error::io_from(&path, e))?;
            if fresh {
                file.set_len(0).map_err(|e| Error::io_from(&path, e))?;
                writeln!(file, "epoch,step,loss,latent_moved_count")
                    .map_err(|e| Error::io_from(&path, e))?;
            }
            Some((file, path))
        }
        None => None,
    };

    let start_epoch = store.epoch();
    let mut steps_run = 0u64;
    let mut final_epoch_mean_loss = None;
    for epoch in (start_epoch + 1)..=config.epochs {
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.shuffle_seed, epoch as u64));
        order.shuffle(&mut rng);

        let mut epoch_loss_sum = 0.0;
        let mut epoch_steps = 0u64;
        for (step_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            // targets come from the current latent store state
            let mut targets = Vec::with_capacity(chunk.len());
            let mut valids = Vec::with_capacity(chunk.len());
            for &wi in chunk {
                let tw = &windows[wi];
                let latent_gather = store.picks(&tw.window.origin.gather_id)?;
                let latent_w = picks_for_window(latent_gather, &tw.window);
                let target = LabelMask2D::from_picks(&latent_w, tw.window.height())?;
                // valid set: window padding AND labeled trace columns
                let mut valid = tw.window.valid_mask.clone();
                for (k, p) in latent_w.iter().enumerate() {
                    if p == UNLABELED {
                        valid.column_mut(k).fill(false);
                    }
                }
                targets.push(target);
                valids.push(valid);
            }
            let batch: Vec<FitSample> = chunk
                .iter()
                .zip(targets.iter().zip(&valids))
                .map(|(&wi, (target, valid))| FitSample {
                    window: &windows[wi].window,
                    target,
                    valid,
                })
                .collect();
            let outcome = predictor.fit_step(&batch)?;

            let mut moved = 0usize;
            if config.latent_update_enabled {
                for (&wi, prediction) in chunk.iter().zip(&outcome.predictions) {
                    let tw = &windows[wi];
                    let updated = latent_update(prediction, &tw.manual, config.gamma)?;
                    let gather_id = tw.window.origin.gather_id.clone();
                    let first = tw.window.origin.first_trace;
                    let current = store.picks(&gather_id)?.clone();
                    for c in 0..tw.window.valid_cols() {
                        let new_pick = updated.get(c);
                        if current.get(first + c) != new_pick {
                            moved += 1;
                        }
                        store.set_pick(&gather_id, first + c, new_pick)?;
                    }
                }
            }

            epoch_loss_sum += outcome.loss;
            epoch_steps += 1;
            steps_run += 1;
            if let Some((file, path)) = log.as_mut() {
                writeln!(file, "{epoch},{},{:.6},{moved}", step_idx + 1, outcome.loss)
                    .map_err(|e| Error::io_from(&*path, e))?;
            }
        }

        store.set_epoch(epoch);
        if epoch_steps > 0 {
            final_epoch_mean_loss = Some(epoch_loss_sum / epoch_steps as f64);
        }
        if let Some(dir) = options.run_dir {
            predictor.save(&dir.join("checkpoint.bin"))?;
            store.save(dir)?;
        }
    }

    Ok(TrainSummary {
        epochs_completed: config.epochs.saturating_sub(start_epoch),
        steps_run,
        final_epoch_mean_loss,
    })
}

/// The comparison arm: identical loop with latent updates disabled, so the
/// targets remain the manual picks throughout.
pub fn train_baseline<P: Predictor>(
    reader: &DatasetReader,
    predictor: &mut P,
    config: &SprConfig,
    store: &mut LatentPickStore,
    options: &TrainOptions,
) -> Result<TrainSummary> {
    let baseline = SprConfig {
        latent_update_enabled: false,
        ..*config
    };
    train_spr(reader, predictor, &baseline, store, options)
}

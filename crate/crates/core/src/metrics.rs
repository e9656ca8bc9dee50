//! Picking accuracy metrics: hit rate at sample tolerances and mean
//! absolute error, pooled over all countable traces.
//!
//! A trace counts only when both pick sets label it; traces unlabeled in
//! either input are excluded from numerator and denominator alike.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{read_picks_file, DatasetReader};
use crate::error::{Error, Result};
use crate::types::{PickSet1D, UNLABELED};

/// Tolerances reported by default.
pub const DEFAULT_DELTAS: [u32; 5] = [0, 1, 2, 3, 5];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `(delta, hit rate)` pairs in ascending delta order, unrounded.
    pub hit_rates: Vec<(u32, f64)>,
    pub mae: f64,
    /// Traces labeled in both inputs.
    pub counted: usize,
    /// Traces excluded because either input left them unlabeled.
    pub excluded: usize,
}

fn countable<'a>(
    reference: &'a PickSet1D,
    predicted: &'a PickSet1D,
) -> Result<impl Iterator<Item = (i32, i32)> + 'a> {
    if reference.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "pick sets differ in length: {} vs {}",
            reference.len(),
            predicted.len()
        )));
    }
    Ok(reference
        .iter()
        .zip(predicted.iter())
        .filter(|&(r, p)| r != UNLABELED && p != UNLABELED))
}

/// Fraction of countable traces with `|t_ref - t_pred| <= delta`.
pub fn hit_rate(reference: &PickSet1D, predicted: &PickSet1D, delta: u32) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (r, p) in countable(reference, predicted)? {
        total += 1;
        if (r - p).unsigned_abs() <= delta {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(Error::Domain("no countable traces for hit rate".into()));
    }
    Ok(hits as f64 / total as f64)
}

/// Mean |t_ref - t_pred| over countable traces.
pub fn mae(reference: &PickSet1D, predicted: &PickSet1D) -> Result<f64> {
    let mut sum = 0u64;
    let mut total = 0usize;
    for (r, p) in countable(reference, predicted)? {
        total += 1;
        sum += u64::from((r - p).unsigned_abs());
    }
    if total == 0 {
        return Err(Error::Domain("no countable traces for MAE".into()));
    }
    Ok(sum as f64 / total as f64)
}

/// Pooled (micro-averaged) metrics over many gathers: all countable traces
/// are concatenated before averaging.
pub fn evaluate_pairs(
    pairs: &[(PickSet1D, PickSet1D)],
    deltas: &[u32],
) -> Result<MetricsReport> {
    let mut abs_sum = 0u64;
    let mut hits = vec![0usize; deltas.len()];
    let mut counted = 0usize;
    let mut excluded = 0usize;
    for (reference, predicted) in pairs {
        let total_len = reference.len();
        let mut countable_here = 0usize;
        for (r, p) in countable(reference, predicted)? {
            countable_here += 1;
            let err = (r - p).unsigned_abs();
            abs_sum += u64::from(err);
            for (slot, &d) in hits.iter_mut().zip(deltas) {
                if err <= d {
                    *slot += 1;
                }
            }
        }
        counted += countable_here;
        excluded += total_len - countable_here;
    }
    if counted == 0 {
        return Err(Error::Domain("no countable traces to evaluate".into()));
    }
    let mut sorted: Vec<(u32, usize)> = deltas.iter().copied().zip(hits).collect();
    sorted.sort_by_key(|&(d, _)| d);
    Ok(MetricsReport {
        hit_rates: sorted
            .into_iter()
            .map(|(d, h)| (d, h as f64 / counted as f64))
            .collect(),
        mae: abs_sum as f64 / counted as f64,
        counted,
        excluded,
    })
}

/// Evaluates predicted pick files (`<pred_dir>/<gather_id>.csv`) against the
/// dataset's reference picks, pooled over every gather in the manifest.
pub fn evaluate_dataset(
    reader: &DatasetReader,
    pred_dir: &Path,
    deltas: &[u32],
) -> Result<MetricsReport> {
    let mut pairs = Vec::with_capacity(reader.manifest().len());
    for entry in &reader.manifest().gathers {
        let reference = reader.load_picks(&entry.gather_id)?;
        let predicted = read_picks_file(&pred_dir.join(format!("{}.csv", entry.gather_id)))?;
        if predicted.len() != entry.num_traces {
            return Err(Error::Consistency(format!(
                "predicted picks for {} have {} traces, expected {}",
                entry.gather_id,
                predicted.len(),
                entry.num_traces
            )));
        }
        pairs.push((reference, predicted));
    }
    evaluate_pairs(&pairs, deltas)
}

/// `method,HR0,...,MAE` header for the given tolerance set.
pub fn csv_header(deltas: &[u32]) -> String {
    let mut cols: Vec<String> = vec!["method".into()];
    let mut sorted = deltas.to_vec();
    sorted.sort_unstable();
    cols.extend(sorted.iter().map(|d| format!("HR{d}")));
    cols.push("MAE".into());
    cols.join(",")
}

/// One table row: hit rates as percentages with 2 decimals, MAE with 4.
/// Raw values stay unrounded in [`MetricsReport`].
pub fn csv_row(method: &str, report: &MetricsReport) -> String {
    let mut cols = vec![method.to_string()];
    cols.extend(
        report
            .hit_rates
            .iter()
            .map(|&(_, hr)| format!("{:.2}", hr * 100.0)),
    );
    cols.push(format!("{:.4}", report.mae));
    cols.join(",")
}

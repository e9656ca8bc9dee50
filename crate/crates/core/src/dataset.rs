//! On-disk dataset layout, deterministic splitting, and the persistent
//! latent-pick store.
//!
//! Layout under a dataset root:
//!
//! ```text
//! manifest.json        dataset name, sample rate, gather table
//! gathers/<id>.f32     raw little-endian f32, row-major (sample-major)
//! picks/<id>.csv       header `trace,sample`, one row per trace, -1 unlabeled
//! latent/<id>.csv      current latent picks (same pick format)
//! latent/EPOCH         last completed epoch number
//! ```
//!
//! Amplitude blobs carry no header; dimensions live in the manifest. All
//! round trips are exact: floats bit-exact, pick indices exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Gather, PickSet1D, UNLABELED};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatherEntry {
    pub gather_id: String,
    pub num_samples: usize,
    pub num_traces: usize,
    pub amplitude_path: String,
    pub picks_path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub sample_rate_ms: f64,
    pub gathers: Vec<GatherEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.gathers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gathers.is_empty()
    }

    pub fn entry(&self, gather_id: &str) -> Result<&GatherEntry> {
        self.gathers
            .iter()
            .find(|e| e.gather_id == gather_id)
            .ok_or_else(|| Error::Consistency(format!("gather {gather_id} not in manifest")))
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.gathers {
            if !seen.insert(&e.gather_id) {
                return Err(Error::Invariant(format!(
                    "duplicate gather id {} in manifest",
                    e.gather_id
                )));
            }
            if e.num_samples == 0 || e.num_traces == 0 {
                return Err(Error::Invariant(format!(
                    "gather {} has degenerate dims {}x{}",
                    e.gather_id, e.num_samples, e.num_traces
                )));
            }
        }
        Ok(())
    }
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty()
        || !id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        return Err(Error::Invariant(format!(
            "gather id {id:?} must be non-empty [A-Za-z0-9_-]"
        )));
    }
    Ok(())
}

// --- amplitude blobs ---------------------------------------------------

fn write_amplitude_blob(path: &Path, amplitude: &Array2<f32>) -> Result<()> {
    let mut bytes = Vec::with_capacity(amplitude.len() * 4);
    for row in amplitude.rows() {
        for &v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io_from(path, e))
}

fn read_amplitude_blob(path: &Path, m: usize, n: usize) -> Result<Array2<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io_from(path, e))?;
    let expect = m * n * 4;
    if bytes.len() != expect {
        return Err(Error::io(
            path,
            format!("blob holds {} bytes, expected {expect} for {m}x{n}", bytes.len()),
        ));
    }
    let mut amp = Array2::zeros((m, n));
    for i in 0..m {
        for k in 0..n {
            let off = (i * n + k) * 4;
            amp[[i, k]] = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        }
    }
    Ok(amp)
}

// --- pick files ---------------------------------------------------------

pub fn write_picks_file(path: &Path, picks: &PickSet1D) -> Result<()> {
    let mut out = String::from("trace,sample\n");
    for (trace, p) in picks.iter().enumerate() {
        out.push_str(&format!("{trace},{p}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io_from(path, e))
}

pub fn read_picks_file(path: &Path) -> Result<PickSet1D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io_from(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("trace,sample") => {}
        other => {
            return Err(Error::io(
                path,
                format!("expected header 'trace,sample', got {other:?}"),
            ))
        }
    }
    let mut picks = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (trace_s, sample_s) = line
            .split_once(',')
            .ok_or_else(|| Error::io(path, format!("malformed row {row}: {line:?}")))?;
        let trace: usize = trace_s
            .parse()
            .map_err(|_| Error::io(path, format!("bad trace index in row {row}: {line:?}")))?;
        if trace != row {
            return Err(Error::io(
                path,
                format!("row {row} lists trace {trace}; rows must be consecutive"),
            ));
        }
        let sample: i32 = sample_s
            .parse()
            .map_err(|_| Error::io(path, format!("bad sample index in row {row}: {line:?}")))?;
        if sample < UNLABELED {
            return Err(Error::io(
                path,
                format!("sample {sample} in row {row} below the unlabeled sentinel"),
            ));
        }
        picks.push(sample);
    }
    PickSet1D::new(picks)
}

// --- dataset read/write --------------------------------------------------

/// Writes gathers and picks under `dir` and returns the manifest (also
/// persisted as `manifest.json`).
pub fn write_dataset(
    dir: &Path,
    dataset_name: &str,
    sample_rate_ms: f64,
    items: &[(Gather, PickSet1D)],
) -> Result<DatasetManifest> {
    fs::create_dir_all(dir.join("gathers")).map_err(|e| Error::io_from(dir, e))?;
    fs::create_dir_all(dir.join("picks")).map_err(|e| Error::io_from(dir, e))?;
    let mut entries = Vec::with_capacity(items.len());
    for (gather, picks) in items {
        check_id(&gather.gather_id)?;
        if picks.len() != gather.num_traces() {
            return Err(Error::Consistency(format!(
                "gather {} has {} traces but {} picks",
                gather.gather_id,
                gather.num_traces(),
                picks.len()
            )));
        }
        picks.validate(gather.num_samples())?;
        let amp_rel = format!("gathers/{}.f32", gather.gather_id);
        let picks_rel = format!("picks/{}.csv", gather.gather_id);
        write_amplitude_blob(&dir.join(&amp_rel), &gather.amplitude)?;
        write_picks_file(&dir.join(&picks_rel), picks)?;
        entries.push(GatherEntry {
            gather_id: gather.gather_id.clone(),
            num_samples: gather.num_samples(),
            num_traces: gather.num_traces(),
            amplitude_path: amp_rel,
            picks_path: picks_rel,
        });
    }
    let manifest = DatasetManifest {
        dataset_name: dataset_name.to_string(),
        sample_rate_ms,
        gathers: entries,
    };
    manifest.validate()?;
    write_manifest(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::io(path, format!("manifest serialization failed: {e}")))?;
    fs::write(path, json + "\n").map_err(|e| Error::io_from(path, e))
}

/// Lazy access to a dataset on disk: the manifest is read eagerly, gathers
/// and picks on demand.
#[derive(Debug, Clone)]
pub struct DatasetReader {
    root: PathBuf,
    manifest: DatasetManifest,
}

pub fn read_dataset(dir: &Path) -> Result<DatasetReader> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io_from(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::io(&path, format!("malformed manifest: {e}")))?;
    manifest.validate()?;
    Ok(DatasetReader {
        root: dir.to_path_buf(),
        manifest,
    })
}

impl DatasetReader {
    /// Reader over the same root but restricted to a split manifest.
    pub fn with_manifest(&self, manifest: DatasetManifest) -> DatasetReader {
        DatasetReader {
            root: self.root.clone(),
            manifest,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn load_gather(&self, gather_id: &str) -> Result<Gather> {
        let entry = self.manifest.entry(gather_id)?;
        let amp = read_amplitude_blob(
            &self.root.join(&entry.amplitude_path),
            entry.num_samples,
            entry.num_traces,
        )?;
        Gather::new(amp, gather_id, self.manifest.sample_rate_ms)
    }

    pub fn load_picks(&self, gather_id: &str) -> Result<PickSet1D> {
        let entry = self.manifest.entry(gather_id)?;
        let picks = read_picks_file(&self.root.join(&entry.picks_path))?;
        if picks.len() != entry.num_traces {
            return Err(Error::Consistency(format!(
                "gather {gather_id} pick file has {} rows, manifest says {} traces",
                picks.len(),
                entry.num_traces
            )));
        }
        picks.validate(entry.num_samples)?;
        Ok(picks)
    }
}

// --- splitting ------------------------------------------------------------

/// Deterministic train/val/test split. Val and test receive
/// `floor(ratio * G)` gathers each; the remainder goes to train. Each split
/// keeps the original manifest order.
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest)> {
    let (rt, rv, rs) = ratios;
    if rt < 0.0 || rv < 0.0 || rs < 0.0 {
        return Err(Error::Split(format!("ratios must be nonnegative, got {ratios:?}")));
    }
    if ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!(
            "ratios must sum to 1, got {}",
            rt + rv + rs
        )));
    }
    let g = manifest.len();
    if g < 3 && rt > 0.0 && rv > 0.0 && rs > 0.0 {
        return Err(Error::Split(format!(
            "{g} gathers cannot satisfy three nonzero ratios"
        )));
    }
    let n_val = (rv * g as f64).floor() as usize;
    let n_test = (rs * g as f64).floor() as usize;

    let mut order: Vec<usize> = (0..g).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let test_idx: Vec<usize> = order[..n_test].to_vec();
    let val_idx: Vec<usize> = order[n_test..n_test + n_val].to_vec();
    let train_idx: Vec<usize> = order[n_test + n_val..].to_vec();

    let subset = |mut idx: Vec<usize>, suffix: &str| {
        idx.sort_unstable();
        DatasetManifest {
            dataset_name: format!("{}-{suffix}", manifest.dataset_name),
            sample_rate_ms: manifest.sample_rate_ms,
            gathers: idx.into_iter().map(|i| manifest.gathers[i].clone()).collect(),
        }
    };
    Ok((
        subset(train_idx, "train"),
        subset(val_idx, "val"),
        subset(test_idx, "test"),
    ))
}

// --- latent pick store ------------------------------------------------------

/// The persistent latent first-break state: one evolving pick set per
/// training gather, plus the last completed epoch.
///
/// Training is the single logical writer; saves go through write-then-rename
/// with the `EPOCH` marker written last.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPickStore {
    entries: BTreeMap<String, (PickSet1D, usize)>,
    epoch: u32,
}

impl LatentPickStore {
    /// Initializes the latent picks as a copy of the manual picks.
    pub fn init<I>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, PickSet1D, usize)>,
    {
        let mut entries = BTreeMap::new();
        for (id, picks, num_samples) in items {
            check_id(&id)?;
            picks.validate(num_samples)?;
            if entries.insert(id.clone(), (picks, num_samples)).is_some() {
                return Err(Error::Invariant(format!("duplicate gather {id} in latent store")));
            }
        }
        Ok(Self { entries, epoch: 0 })
    }

    /// Initializes from a training manifest by reading its manual pick files.
    pub fn init_from_dataset(reader: &DatasetReader) -> Result<Self> {
        let items = reader
            .manifest()
            .gathers
            .iter()
            .map(|e| Ok((e.gather_id.clone(), reader.load_picks(&e.gather_id)?, e.num_samples)))
            .collect::<Result<Vec<_>>>()?;
        Self::init(items)
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn set_epoch(&mut self, epoch: u32) {
        self.epoch = epoch;
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn picks(&self, gather_id: &str) -> Result<&PickSet1D> {
        self.entries
            .get(gather_id)
            .map(|(p, _)| p)
            .ok_or_else(|| Error::Consistency(format!("gather {gather_id} not in latent store")))
    }

    /// Replaces one trace's latent pick; validates range immediately.
    pub fn set_pick(&mut self, gather_id: &str, trace: usize, pick: i32) -> Result<()> {
        let (picks, m) = self
            .entries
            .get_mut(gather_id)
            .ok_or_else(|| Error::Consistency(format!("gather {gather_id} not in latent store")))?;
        if pick != UNLABELED && (pick < 0 || pick as usize >= *m) {
            return Err(Error::PickOutOfRange {
                trace,
                pick,
                samples: *m,
            });
        }
        picks.set(trace, pick);
        Ok(())
    }

    pub fn gather_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Same pick entries, ignoring the epoch counter.
    pub fn picks_equal(&self, other: &LatentPickStore) -> bool {
        self.entries == other.entries
    }

    /// Persists the store under `dir/latent/`, validating every pick first.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let latent = dir.join("latent");
        fs::create_dir_all(&latent).map_err(|e| Error::io_from(&latent, e))?;
        for (id, (picks, m)) in &self.entries {
            picks.validate(*m)?;
            let tmp = latent.join(format!("{id}.csv.tmp"));
            let fin = latent.join(format!("{id}.csv"));
            write_picks_file(&tmp, picks)?;
            fs::rename(&tmp, &fin).map_err(|e| Error::io_from(&fin, e))?;
        }
        let tmp = latent.join("EPOCH.tmp");
        let fin = latent.join("EPOCH");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io_from(&tmp, e))?;
        writeln!(f, "{}", self.epoch).map_err(|e| Error::io_from(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, &fin).map_err(|e| Error::io_from(&fin, e))?;
        Ok(())
    }

    /// Loads a store previously saved under `dir/latent/`. The on-disk gather
    /// set must exactly match `expected` (id, num_samples) pairs.
    pub fn load<'a, I>(dir: &Path, expected: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, usize)>,
    {
        let latent = dir.join("latent");
        let epoch_path = latent.join("EPOCH");
        let epoch_text =
            fs::read_to_string(&epoch_path).map_err(|e| Error::io_from(&epoch_path, e))?;
        let epoch: u32 = epoch_text
            .trim()
            .parse()
            .map_err(|_| Error::io(&epoch_path, format!("bad epoch marker {epoch_text:?}")))?;

        let mut entries = BTreeMap::new();
        for (id, m) in expected {
            let path = latent.join(format!("{id}.csv"));
            let picks = read_picks_file(&path)?;
            picks.validate(m)?;
            entries.insert(id.to_string(), (picks, m));
        }
        // reject stray pick files for gathers outside the expected set
        for dirent in fs::read_dir(&latent).map_err(|e| Error::io_from(&latent, e))? {
            let dirent = dirent.map_err(|e| Error::io_from(&latent, e))?;
            let name = dirent.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".csv") {
                if !entries.contains_key(id) {
                    return Err(Error::Consistency(format!(
                        "latent store holds gather {id} not in the expected set"
                    )));
                }
            }
        }
        Ok(Self { entries, epoch })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn random_gather(id: &str, m: usize, n: usize, seed: u64) -> (Gather, PickSet1D) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0f32..1.0));
        let picks = PickSet1D::new(
            (0..n)
                .map(|_| {
                    if rng.random_bool(0.1) {
                        UNLABELED
                    } else {
                        rng.random_range(0..m as i32)
                    }
                })
                .collect(),
        )
        .unwrap();
        (Gather::new(amp, id, 1.0).unwrap(), picks)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let items = vec![random_gather("g0", 8, 16, 3)];
        write_dataset(dir.path(), "rt", 1.0, &items).unwrap();
        let reader = read_dataset(dir.path()).unwrap();
        let g = reader.load_gather("g0").unwrap();
        assert_eq!(g.amplitude, items[0].0.amplitude);
        let p = reader.load_picks("g0").unwrap();
        assert_eq!(p, items[0].1);
    }

    #[test]
    fn unlabeled_rows_survive_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let picks = PickSet1D::new(vec![3, UNLABELED, 0]).unwrap();
        let path = dir.path().join("p.csv");
        write_picks_file(&path, &picks).unwrap();
        assert_eq!(read_picks_file(&path).unwrap(), picks);
    }

    #[test]
    fn missing_blob_is_io_error_naming_path() {
        let dir = tempfile::tempdir().unwrap();
        let items = vec![random_gather("g0", 4, 4, 1)];
        write_dataset(dir.path(), "x", 1.0, &items).unwrap();
        fs::remove_file(dir.path().join("gathers/g0.f32")).unwrap();
        let reader = read_dataset(dir.path()).unwrap();
        match reader.load_gather("g0") {
            Err(Error::Io { path, .. }) => {
                assert!(path.to_string_lossy().contains("g0.f32"))
            }
            other => panic!("expected io error, got {other:?}"),
        }
    }

    #[test]
    fn split_sizes_follow_floor_with_remainder_to_train() {
        let gathers = (0..100)
            .map(|i| GatherEntry {
                gather_id: format!("g{i}"),
                num_samples: 8,
                num_traces: 8,
                amplitude_path: format!("gathers/g{i}.f32"),
                picks_path: format!("picks/g{i}.csv"),
            })
            .collect();
        let manifest = DatasetManifest {
            dataset_name: "d".into(),
            sample_rate_ms: 1.0,
            gathers,
        };
        let (tr, va, te) = split_dataset(&manifest, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (80, 10, 10));

        let manifest10 = DatasetManifest {
            dataset_name: "d".into(),
            sample_rate_ms: 1.0,
            gathers: manifest.gathers[..10].to_vec(),
        };
        let (tr, va, te) = split_dataset(&manifest10, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));
    }

    #[test]
    fn split_is_deterministic_for_a_seed() {
        let gathers = (0..20)
            .map(|i| GatherEntry {
                gather_id: format!("g{i}"),
                num_samples: 8,
                num_traces: 8,
                amplitude_path: String::new(),
                picks_path: String::new(),
            })
            .collect();
        let manifest = DatasetManifest {
            dataset_name: "d".into(),
            sample_rate_ms: 1.0,
            gathers,
        };
        let a = split_dataset(&manifest, (0.8, 0.1, 0.1), 42).unwrap();
        let b = split_dataset(&manifest, (0.8, 0.1, 0.1), 42).unwrap();
        for (x, y) in [(&a.0, &b.0), (&a.1, &b.1), (&a.2, &b.2)] {
            let xi: Vec<_> = x.gathers.iter().map(|e| &e.gather_id).collect();
            let yi: Vec<_> = y.gathers.iter().map(|e| &e.gather_id).collect();
            assert_eq!(xi, yi);
        }
    }

    #[test]
    fn too_few_gathers_for_three_ways_is_split_error() {
        let manifest = DatasetManifest {
            dataset_name: "d".into(),
            sample_rate_ms: 1.0,
            gathers: vec![GatherEntry {
                gather_id: "g0".into(),
                num_samples: 8,
                num_traces: 8,
                amplitude_path: String::new(),
                picks_path: String::new(),
            }],
        };
        assert!(matches!(
            split_dataset(&manifest, (0.8, 0.1, 0.1), 0),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn latent_store_init_copies_manual_picks_and_roundtrips() {
        let picks = PickSet1D::new(vec![1, UNLABELED, 4]).unwrap();
        let store =
            LatentPickStore::init([("g0".to_string(), picks.clone(), 8)]).unwrap();
        assert_eq!(store.picks("g0").unwrap(), &picks);

        let dir = tempfile::tempdir().unwrap();
        let mut saved = store.clone();
        saved.set_epoch(5);
        saved.save(dir.path()).unwrap();
        let loaded = LatentPickStore::load(dir.path(), [("g0", 8usize)]).unwrap();
        assert_eq!(loaded, saved);
        assert_eq!(loaded.epoch(), 5);
    }

    #[test]
    fn latent_store_save_rejects_out_of_range_pick() {
        let picks = PickSet1D::new(vec![1]).unwrap();
        let mut store = LatentPickStore::init([("g0".to_string(), picks, 8)]).unwrap();
        assert!(store.set_pick("g0", 0, 9).is_err());
    }

    #[test]
    fn latent_store_load_rejects_gather_set_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let picks = PickSet1D::new(vec![1]).unwrap();
        let store = LatentPickStore::init([("g0".to_string(), picks, 8)]).unwrap();
        store.save(dir.path()).unwrap();
        assert!(matches!(
            LatentPickStore::load(dir.path(), [("g1", 8usize)]),
            Err(Error::Io { .. })
        ));
        // extra on-disk gather beyond the expected set
        let err = LatentPickStore::load(dir.path(), Vec::<(&str, usize)>::new()).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }
}

//! Stratified dataset generation and the little-endian `CSIG` file format.
//!
//! Layout: magic `CSIG`, u16 version, u16 reserved, u32 n_nodes,
//! u32 frame_length, u32 class_count, u64 sample_count, then per sample a
//! u32 label, `n_nodes` f32 SNRs, and per node `L` f32 I values followed by
//! `L` f32 Q values. A `<stem>.meta.json` sidecar records the generating
//! configuration.
//!
//! Samples are ordered by cell, SNR-major and modulation-minor, so the base
//! SNR of any sample follows from its position and the sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::IqFrame;
use super::modulation::{ModulationType, NUM_CLASSES};
use super::sample::{derive_seed, CooperativeSample, SampleGenerator, SnrPolicy};
use super::waveform::FrameSpec;
use crate::error::{Error, Result};
use crate::util::{fingerprint, read_json, write_json};

pub const DATASET_MAGIC: &[u8; 4] = b"CSIG";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: usize = 28;

/// Node SNR assignment inside every `(modulation, SNR)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PolicyKind {
    Grid,
    Spread { delta_snr_db: f64 },
}

impl PolicyKind {
    pub fn at(self, base_snr_db: f64) -> SnrPolicy {
        match self {
            PolicyKind::Grid => SnrPolicy::Grid {
                snr_db: base_snr_db,
            },
            PolicyKind::Spread { delta_snr_db } => SnrPolicy::Spread {
                base_snr_db,
                delta_snr_db,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub modulations: Vec<ModulationType>,
    pub snr_grid_db: Vec<f64>,
    pub samples_per_cell: usize,
    pub n_nodes: usize,
    pub policy: PolicyKind,
    /// Train share of every cell as `(numerator, denominator)`.
    pub train_split: (usize, usize),
    #[serde(default)]
    pub frame: FrameSpec,
    #[serde(default)]
    pub random_gain: bool,
}

/// SNR grid from `start` to `stop` inclusive.
pub fn snr_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|k| start + step * k as f64).collect()
}

impl GenerationConfig {
    /// 1500 samples per cell, −20..20 dB in 2 dB steps.
    pub fn paper(n_nodes: usize, policy: PolicyKind) -> Self {
        Self {
            modulations: ModulationType::ALL.to_vec(),
            snr_grid_db: snr_grid(-20.0, 20.0, 2.0),
            samples_per_cell: 1500,
            n_nodes,
            policy,
            train_split: (2, 3),
            frame: FrameSpec::default(),
            random_gain: false,
        }
    }

    /// 300 samples per cell, −20..20 dB in 4 dB steps.
    pub fn desk(n_nodes: usize, policy: PolicyKind) -> Self {
        Self {
            samples_per_cell: 300,
            snr_grid_db: snr_grid(-20.0, 20.0, 4.0),
            ..Self::paper(n_nodes, policy)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modulations.is_empty() || self.snr_grid_db.is_empty() {
            return Err(Error::InvalidConfig(
                "empty modulation list or SNR grid".into(),
            ));
        }
        if self.snr_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "SNR grid must be strictly increasing".into(),
            ));
        }
        let (num, den) = self.train_split;
        if den == 0 || num > den {
            return Err(Error::InvalidConfig(format!("bad split {num}/{den}")));
        }
        if self.n_nodes == 0 {
            return Err(Error::InvalidNodeCount(0));
        }
        for &snr in &self.snr_grid_db {
            self.policy.at(snr).validate()?;
        }
        self.frame.validate()
    }

    pub fn n_cells(&self) -> usize {
        self.modulations.len() * self.snr_grid_db.len()
    }

    pub fn train_per_cell(&self) -> usize {
        self.samples_per_cell * self.train_split.0 / self.train_split.1
    }

    pub fn test_per_cell(&self) -> usize {
        self.samples_per_cell - self.train_per_cell()
    }

    pub fn total_samples(&self) -> usize {
        self.n_cells() * self.samples_per_cell
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Contents of the `.meta.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: GenerationConfig,
    pub seed: u64,
    pub split: Split,
    pub per_cell: usize,
    pub cell_order: String,
    pub fingerprint: String,
}

impl DatasetMeta {
    fn cell(&self, position: usize) -> usize {
        position / self.per_cell.max(1)
    }

    /// Base SNR of the sample at `position` in this split.
    pub fn base_snr_db(&self, position: usize) -> f64 {
        self.config.snr_grid_db[self.cell(position) / self.config.modulations.len()]
    }

    pub fn modulation(&self, position: usize) -> ModulationType {
        self.config.modulations[self.cell(position) % self.config.modulations.len()]
    }

    pub fn sample_count(&self) -> usize {
        self.per_cell * self.config.n_cells()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u16,
    pub n_nodes: u32,
    pub frame_length: u32,
    pub class_count: u32,
    pub sample_count: u64,
}

impl DatasetHeader {
    fn payload_floats(&self) -> usize {
        self.n_nodes as usize * 2 * self.frame_length as usize
    }

    fn record_bytes(&self) -> usize {
        4 + 4 * self.n_nodes as usize + 4 * self.payload_floats()
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(DATASET_MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..8].copy_from_slice(&0u16.to_le_bytes());
        b[8..12].copy_from_slice(&self.n_nodes.to_le_bytes());
        b[12..16].copy_from_slice(&self.frame_length.to_le_bytes());
        b[16..20].copy_from_slice(&self.class_count.to_le_bytes());
        b[20..28].copy_from_slice(&self.sample_count.to_le_bytes());
        b
    }

    fn parse(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if &b[..4] != DATASET_MAGIC {
            return Err(Error::UnsupportedFormat(format!(
                "bad dataset magic {:?}",
                &b[..4]
            )));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != DATASET_VERSION {
            return Err(Error::UnsupportedFormat(format!(
                "dataset version {version}"
            )));
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let h = Self {
            version,
            n_nodes: u32_at(8),
            frame_length: u32_at(12),
            class_count: u32_at(16),
            sample_count: u64::from_le_bytes(b[20..28].try_into().unwrap()),
        };
        if h.n_nodes == 0 || h.frame_length == 0 {
            return Err(Error::DatasetCorrupt(format!("degenerate header {h:?}")));
        }
        Ok(h)
    }
}

/// A sample as persisted: label, per-node SNRs, and the node-interleaved
/// payload `[I₀, Q₀, I₁, Q₁, …]`, each row `L` long.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredSample {
    pub label: ModulationType,
    pub snr_db: Vec<f32>,
    pub data: Vec<f32>,
}

impl StoredSample {
    pub fn from_cooperative(s: &CooperativeSample) -> Self {
        let mut data = Vec::with_capacity(s.n_nodes() * 2 * s.frames[0].len());
        for f in &s.frames {
            data.extend_from_slice(&f.i);
            data.extend_from_slice(&f.q);
        }
        Self {
            label: s.label,
            snr_db: s.snrs_db().iter().map(|&v| v as f32).collect(),
            data,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.snr_db.len()
    }

    pub fn frame_length(&self) -> usize {
        self.data.len() / (2 * self.n_nodes())
    }

    /// Node `i`'s frame as a borrowed `(I, Q)` pair.
    pub fn node(&self, i: usize) -> (&[f32], &[f32]) {
        let l = self.frame_length();
        let base = 2 * l * i;
        (
            &self.data[base..base + l],
            &self.data[base + l..base + 2 * l],
        )
    }

    pub fn frame(&self, i: usize) -> IqFrame {
        let (i_rail, q_rail) = self.node(i);
        IqFrame {
            i: i_rail.to_vec(),
            q: q_rail.to_vec(),
        }
    }
}

/// Streams samples to a `CSIG` file. The header's sample count is fixed
/// up front and checked on [`DatasetWriter::finish`].
pub struct DatasetWriter {
    out: BufWriter<File>,
    header: DatasetHeader,
    written: u64,
    path: PathBuf,
}

impl DatasetWriter {
    pub fn create(
        path: &Path,
        n_nodes: usize,
        frame_length: usize,
        sample_count: u64,
    ) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let header = DatasetHeader {
            version: DATASET_VERSION,
            n_nodes: n_nodes as u32,
            frame_length: frame_length as u32,
            class_count: NUM_CLASSES as u32,
            sample_count,
        };
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&header.to_bytes())
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out,
            header,
            written: 0,
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, s: &StoredSample) -> Result<()> {
        if s.n_nodes() != self.header.n_nodes as usize
            || s.data.len() != self.header.payload_floats()
        {
            return Err(Error::Shape(format!(
                "sample with {} nodes / {} floats does not match header",
                s.n_nodes(),
                s.data.len()
            )));
        }
        let mut buf = Vec::with_capacity(self.header.record_bytes());
        buf.extend_from_slice(&(s.label.label() as u32).to_le_bytes());
        for v in s.snr_db.iter().chain(&s.data) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out
            .write_all(&buf)
            .map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.header.sample_count {
            return Err(Error::DatasetCorrupt(format!(
                "wrote {} samples, header declares {}",
                self.written, self.header.sample_count
            )));
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Iterator over the samples of a dataset file.
pub struct DatasetReader {
    input: BufReader<File>,
    header: DatasetHeader,
    read: u64,
    buf: Vec<u8>,
}

impl DatasetReader {
    pub fn header(&self) -> DatasetHeader {
        self.header
    }

    fn next_sample(&mut self) -> Result<StoredSample> {
        if let Err(e) = self.input.read_exact(&mut self.buf) {
            return Err(match e.kind() {
                ErrorKind::UnexpectedEof => Error::DatasetCorrupt(format!(
                    "truncated at sample {} of {}",
                    self.read, self.header.sample_count
                )),
                _ => Error::io("<dataset>", e),
            });
        }
        self.read += 1;
        let label = u32::from_le_bytes(self.buf[..4].try_into().unwrap()) as usize;
        let label = ModulationType::from_label(label)
            .map_err(|_| Error::DatasetCorrupt(format!("label {label} out of range")))?;
        let mut floats = self.buf[4..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let n = self.header.n_nodes as usize;
        let snr_db: Vec<f32> = floats.by_ref().take(n).collect();
        let data: Vec<f32> = floats.collect();
        Ok(StoredSample {
            label,
            snr_db,
            data,
        })
    }
}

impl Iterator for DatasetReader {
    type Item = Result<StoredSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read < self.header.sample_count {
            return Some(self.next_sample());
        }
        if self.read == self.header.sample_count {
            // any trailing bytes mean the header and payload disagree
            self.read += 1;
            let mut extra = [0u8; 1];
            if let Ok(1) = self.input.read(&mut extra) {
                return Some(Err(Error::DatasetCorrupt(
                    "trailing bytes after last sample".into(),
                )));
            }
        }
        None
    }
}

/// Opens a dataset file and validates its header.
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, DatasetReader)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::with_capacity(1 << 20, file);
    let mut raw = [0u8; HEADER_LEN];
    input.read_exact(&mut raw).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::DatasetCorrupt("file shorter than header".into()),
        _ => Error::io(path, e),
    })?;
    let header = DatasetHeader::parse(&raw)?;
    let reader = DatasetReader {
        input,
        header,
        read: 0,
        buf: vec![0u8; header.record_bytes()],
    };
    Ok((header, reader))
}

/// Sidecar path for a dataset file: `dir/train.csig` → `dir/train.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn read_meta(path: &Path) -> Result<DatasetMeta> {
    read_json(&meta_path(path))
}

/// A whole split in memory, with its sidecar.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub meta: Option<DatasetMeta>,
    pub samples: Vec<StoredSample>,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let (header, reader) = read_dataset(path)?;
        let samples = reader.collect::<Result<Vec<_>>>()?;
        let meta = match read_meta(path) {
            Ok(m) => Some(m),
            Err(Error::Io { source, .. }) if source.kind() == ErrorKind::NotFound => None,
            Err(e) => return Err(e),
        };
        if let Some(m) = &meta {
            if m.sample_count() != samples.len() || m.config.n_nodes != header.n_nodes as usize {
                return Err(Error::DatasetCorrupt(format!(
                    "sidecar describes {} samples of {} nodes, file holds {} of {}",
                    m.sample_count(),
                    m.config.n_nodes,
                    samples.len(),
                    header.n_nodes
                )));
            }
        }
        Ok(Self {
            header,
            meta,
            samples,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.header.n_nodes as usize
    }

    pub fn frame_length(&self) -> usize {
        self.header.frame_length as usize
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Base SNR of sample `k`; needs the sidecar.
    pub fn base_snr_db(&self, k: usize) -> Result<f64> {
        self.meta
            .as_ref()
            .map(|m| m.base_snr_db(k))
            .ok_or_else(|| Error::PrerequisiteMissing("dataset sidecar".into()))
    }
}

/// Paths written by [`generate_dataset`].
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub train: PathBuf,
    pub test: PathBuf,
    pub fingerprint: String,
}

/// Generates every cell of `config`, writing `train.csig` and `test.csig`
/// (with sidecars) under `out_dir`. Within a cell the first
/// `train_per_cell` sample indices go to train, the rest to test.
pub fn generate_dataset(
    config: &GenerationConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<GeneratedDataset> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let fp = fingerprint(&(config, seed));
    let train_path = out_dir.join("train.csig");
    let test_path = out_dir.join("test.csig");
    let l = config.frame.frame_length();
    let cells = config.n_cells() as u64;
    let mut train = DatasetWriter::create(
        &train_path,
        config.n_nodes,
        l,
        cells * config.train_per_cell() as u64,
    )?;
    let mut test = DatasetWriter::create(
        &test_path,
        config.n_nodes,
        l,
        cells * config.test_per_cell() as u64,
    )?;

    let n_mods = config.modulations.len();
    for (si, &snr) in config.snr_grid_db.iter().enumerate() {
        let mut gen = SampleGenerator::new(
            config.n_nodes,
            config.policy.at(snr),
            config.frame,
            derive_seed(seed, "dataset"),
        )?;
        gen.random_gain = config.random_gain;
        for (mi, &modulation) in config.modulations.iter().enumerate() {
            let cell = (si * n_mods + mi) as u64;
            let first = cell * config.samples_per_cell as u64;
            let samples = (0..config.samples_per_cell as u64)
                .into_par_iter()
                .map(|j| {
                    gen.sample(modulation, first + j)
                        .map(|s| StoredSample::from_cooperative(&s))
                })
                .collect::<Result<Vec<_>>>()?;
            let (tr, te) = samples.split_at(config.train_per_cell());
            for s in tr {
                train.write(s)?;
            }
            for s in te {
                test.write(s)?;
            }
        }
    }
    train.finish()?;
    test.finish()?;

    for (path, split, per_cell) in [
        (&train_path, Split::Train, config.train_per_cell()),
        (&test_path, Split::Test, config.test_per_cell()),
    ] {
        let meta = DatasetMeta {
            config: config.clone(),
            seed,
            split,
            per_cell,
            cell_order: "snr-major, modulation-minor".into(),
            fingerprint: fp.clone(),
        };
        write_json(&meta_path(path), &meta)?;
    }
    Ok(GeneratedDataset {
        train: train_path,
        test: test_path,
        fingerprint: fp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> GenerationConfig {
        GenerationConfig {
            modulations: vec![
                ModulationType::Bpsk,
                ModulationType::Fsk4,
                ModulationType::Qam32,
            ],
            snr_grid_db: vec![-10.0, 10.0],
            samples_per_cell: 6,
            n_nodes: 2,
            policy: PolicyKind::Spread { delta_snr_db: 5.0 },
            train_split: (2, 3),
            frame: FrameSpec::default(),
            random_gain: false,
        }
    }

    #[test]
    fn profile_sample_counts() {
        let paper = GenerationConfig::paper(1, PolicyKind::Grid);
        assert_eq!(paper.snr_grid_db.len(), 21);
        assert_eq!(paper.total_samples(), 378_000);
        assert_eq!(paper.n_cells() * paper.train_per_cell(), 252_000);
        assert_eq!(paper.n_cells() * paper.test_per_cell(), 126_000);
        let desk = GenerationConfig::desk(1, PolicyKind::Grid);
        assert_eq!(desk.snr_grid_db.len(), 11);
        assert_eq!(desk.total_samples(), 39_600);
        assert_eq!(desk.n_cells() * desk.train_per_cell(), 26_400);
    }

    #[test]
    fn roundtrip_and_stratification() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let out = generate_dataset(&cfg, 77, dir.path()).unwrap();
        let train = Dataset::load(&out.train).unwrap();
        let test = Dataset::load(&out.test).unwrap();
        assert_eq!(train.len(), 6 * 4);
        assert_eq!(test.len(), 6 * 2);
        let meta = train.meta.as_ref().unwrap();
        for (k, s) in train.samples.iter().enumerate() {
            assert_eq!(s.label, meta.modulation(k));
            let base = meta.base_snr_db(k) as f32;
            assert!(s.snr_db.iter().all(|&v| (v - base).abs() <= 5.0));
        }
        // the stored payload reproduces a freshly generated sample exactly
        let gen = SampleGenerator::new(
            2,
            cfg.policy.at(10.0),
            cfg.frame,
            derive_seed(77, "dataset"),
        )
        .unwrap();
        // cell (snr 10, 32QAM) = 5, its test samples start at sample index 5·6 + 4
        let fresh = StoredSample::from_cooperative(&gen.sample(ModulationType::Qam32, 34).unwrap());
        assert_eq!(test.samples[5 * 2], fresh);
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        generate_dataset(&cfg, 5, a.path()).unwrap();
        generate_dataset(&cfg, 5, b.path()).unwrap();
        for name in ["train.csig", "test.csig", "train.meta.json"] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap()
            );
        }
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate_dataset(&tiny_config(), 1, dir.path()).unwrap();
        let bytes = std::fs::read(&out.test).unwrap();
        let cut = dir.path().join("cut.csig");
        std::fs::write(&cut, &bytes[..bytes.len() - 100]).unwrap();
        let (_, reader) = read_dataset(&cut).unwrap();
        let err = reader.collect::<Result<Vec<_>>>().unwrap_err();
        assert!(matches!(err, Error::DatasetCorrupt(_)));
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csig");
        let mut h = DatasetHeader {
            version: 1,
            n_nodes: 1,
            frame_length: 512,
            class_count: 12,
            sample_count: 0,
        }
        .to_bytes();
        h[0] = b'X';
        std::fs::write(&p, h).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::UnsupportedFormat(_))));
        h[0] = b'C';
        h[4] = 2;
        std::fs::write(&p, h).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn header_only_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csig");
        DatasetWriter::create(&p, 3, 512, 0)
            .unwrap()
            .finish()
            .unwrap();
        let (h, reader) = read_dataset(&p).unwrap();
        assert_eq!(h.sample_count, 0);
        assert_eq!(h.n_nodes, 3);
        assert_eq!(reader.count(), 0);
    }

    #[test]
    fn unwritable_destination() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = generate_dataset(&tiny_config(), 1, &blocker.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}

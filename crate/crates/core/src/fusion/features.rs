//! `CSFT` feature files: per-node feature vectors of a multi-node dataset.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use super::pca::PcaModel;
use super::scheme::{node_outputs, NodeFrames};
use crate::error::{shape_err, Error, Result};
use crate::nn::TrainSet;
use crate::sigsynth::{push_agc, StoredSample};
use crate::zoo::{Model, FEATURE_DIM};

pub const FEATURE_MAGIC: &[u8; 4] = b"CSFT";
pub const FEATURE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8;

/// Samples of `n_nodes × feature_dim` features; also a CNN3 training set
/// with one input channel per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n_nodes: usize,
    pub feature_dim: usize,
    pub labels: Vec<u32>,
    /// Sample-major, then node, then feature.
    pub features: Vec<f32>,
}

impl FeatureSet {
    pub fn new(
        n_nodes: usize,
        feature_dim: usize,
        labels: Vec<u32>,
        features: Vec<f32>,
    ) -> Result<Self> {
        if features.len() != labels.len() * n_nodes * feature_dim {
            return Err(shape_err(format!(
                "{} feature values for {} samples of {n_nodes} × {feature_dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self {
            n_nodes,
            feature_dim,
            labels,
            features,
        })
    }

    pub fn sample(&self, k: usize) -> &[f32] {
        let w = self.n_nodes * self.feature_dim;
        &self.features[k * w..(k + 1) * w]
    }
}

impl TrainSet for FeatureSet {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn input_shape(&self) -> (usize, usize) {
        (self.n_nodes, self.feature_dim)
    }

    fn label(&self, index: usize) -> usize {
        self.labels[index] as usize
    }

    fn write_input(&self, index: usize, out: &mut [f32]) {
        out.copy_from_slice(self.sample(index));
    }
}

pub fn write_features(path: &Path, set: &FeatureSet) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(FEATURE_MAGIC).map_err(io)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(set.feature_dim as u32).to_le_bytes())
        .map_err(io)?;
    w.write_all(&(set.n_nodes as u32).to_le_bytes())
        .map_err(io)?;
    w.write_all(&(set.labels.len() as u64).to_le_bytes())
        .map_err(io)?;
    for (k, &label) in set.labels.iter().enumerate() {
        w.write_all(&label.to_le_bytes()).map_err(io)?;
        for v in set.sample(k) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_features(path: &Path) -> Result<FeatureSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "{} is not a CSFT file",
            path.display()
        )));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::DatasetCorrupt("feature header truncated".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedFormat(format!("CSFT version {version}")));
    }
    let feature_dim = u32_at(6) as usize;
    let n_nodes = u32_at(10) as usize;
    let count = u64::from_le_bytes(bytes[14..22].try_into().unwrap()) as usize;
    let record = 4 + 4 * n_nodes * feature_dim;
    let expected = count
        .checked_mul(record)
        .and_then(|b| b.checked_add(HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::DatasetCorrupt(format!(
            "header promises {count} records of {record} bytes, file has {} payload bytes",
            bytes.len() - HEADER_LEN
        )));
    }
    let mut labels = Vec::with_capacity(count);
    let mut features = Vec::with_capacity(count * n_nodes * feature_dim);
    for rec in bytes[HEADER_LEN..].chunks_exact(record) {
        labels.push(u32::from_le_bytes(rec[..4].try_into().unwrap()));
        features.extend(
            rec[4..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
        );
    }
    FeatureSet::new(n_nodes, feature_dim, labels, features)
}

const EXTRACT_BATCH: usize = 64;

/// CNN1 features of every node of every sample.
pub fn extract_feature_set(cnn1: &Model, samples: &[StoredSample]) -> Result<FeatureSet> {
    let n = samples.first().map_or(1, |s| s.n_nodes());
    let chunks = samples
        .par_chunks(EXTRACT_BATCH)
        .map(|chunk| node_outputs(cnn1, chunk).map(|(f, _)| f.into_vec()))
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::new(
        n,
        FEATURE_DIM,
        samples.iter().map(|s| s.label.label() as u32).collect(),
        chunks.concat(),
    )
}

/// PCA coordinates of every node of every sample.
pub fn pca_feature_set(pca: &PcaModel, samples: &[StoredSample]) -> Result<FeatureSet> {
    let n = samples.first().map_or(1, |s| s.n_nodes());
    let rows = samples
        .par_iter()
        .map(|s| {
            let mut out = Vec::with_capacity(n * pca.n_components());
            for k in 0..NodeFrames::n_nodes(s) {
                let (i, q) = NodeFrames::node(s, k);
                let mut v = Vec::with_capacity(2 * i.len());
                push_agc(i, q, &mut v);
                out.extend(pca.project(&v)?.into_iter().map(|x| x as f32));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::new(
        n,
        pca.n_components(),
        samples.iter().map(|s| s.label.label() as u32).collect(),
        rows.concat(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_set() -> FeatureSet {
        let labels = vec![0, 11, 5];
        let features = (0..3 * 2 * 4).map(|v| v as f32 * 0.5).collect();
        FeatureSet::new(2, 4, labels, features).unwrap()
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csft");
        write_features(&path, &small_set()).unwrap();
        assert_eq!(
            std::fs::metadata(&path).unwrap().len() as usize,
            HEADER_LEN + 3 * (4 + 32)
        );
        assert_eq!(read_features(&path).unwrap(), small_set());
    }

    #[test]
    fn corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csft");
        write_features(&path, &small_set()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            read_features(&path),
            Err(Error::DatasetCorrupt(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            read_features(&path),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn train_set_view() {
        let s = small_set();
        assert_eq!(s.input_shape(), (2, 4));
        let mut buf = [0f32; 8];
        s.write_input(1, &mut buf);
        assert_eq!(buf[0], 4.0);
        assert_eq!(s.label(1), 11);
    }
}

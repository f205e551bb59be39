//! `CSNN` named-tensor containers and the `.arch.json` model manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::nn::Architecture;
use crate::util::{read_json, write_json};

pub const TENSOR_MAGIC: &[u8; 4] = b"CSNN";
pub const TENSOR_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn write_tensors(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(TENSOR_MAGIC).map_err(io)?;
    w.write_all(&TENSOR_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())
        .map_err(io)?;
    for t in tensors {
        debug_assert_eq!(t.shape.iter().product::<usize>(), t.data.len());
        let name = t.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())
            .map_err(io)?;
        w.write_all(name).map_err(io)?;
        w.write_all(&[t.shape.len() as u8]).map_err(io)?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::ModelCorrupt(format!(
                    "need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "{} is not a CSNN container",
            path.display()
        )));
    }
    let mut c = Cursor {
        buf: &bytes,
        pos: 4,
    };
    let version = c.u16()?;
    if version != TENSOR_VERSION {
        return Err(Error::UnsupportedFormat(format!("CSNN version {version}")));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec())
            .map_err(|_| Error::ModelCorrupt("tensor name is not UTF-8".into()))?;
        let rank = c.u8()? as usize;
        let shape = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = c
            .take(
                n.checked_mul(4)
                    .ok_or_else(|| Error::ModelCorrupt("tensor size overflows".into()))?,
            )?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push(NamedTensor { name, shape, data });
    }
    if c.pos != bytes.len() {
        return Err(Error::ModelCorrupt(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Contents of the `.arch.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub spec: NetworkSpec,
    pub architecture: Architecture,
    pub shape_trace: Vec<(usize, usize)>,
    pub feature_node: Option<usize>,
    pub tensors: Vec<TensorEntry>,
    pub fingerprint: Option<String>,
}

/// Manifest path for a container: `dir/cnn1.csnn` → `dir/cnn1.arch.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("arch.json")
}

fn model_tensors(model: &Model) -> Vec<NamedTensor> {
    let params = model.net.params().map(|p| NamedTensor {
        name: p.name.clone(),
        shape: p.shape.clone(),
        data: p.value.clone(),
    });
    let buffers = model.net.buffers().map(|b| NamedTensor {
        name: b.name.clone(),
        shape: b.shape.clone(),
        data: b.value.clone(),
    });
    params.chain(buffers).collect()
}

/// Writes the tensor container at `path` and the manifest beside it.
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let tensors = model_tensors(model);
    let manifest = ModelManifest {
        spec: model.spec.clone(),
        architecture: model.net.architecture().clone(),
        shape_trace: model.net.architecture().shape_trace()?,
        feature_node: model.feature_node(),
        tensors: tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
        fingerprint: model.fingerprint.clone(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_tensors(path, &tensors)?;
    write_json(&manifest_path(path), &manifest)
}

/// Rebuilds a model from its manifest and fills it from the container,
/// checking the manifest, the rebuilt network, and the stored tensors
/// against each other.
pub fn load_model(path: &Path) -> Result<Model> {
    let manifest: ModelManifest = read_json(&manifest_path(path))?;
    let stored = read_tensors(path)?;
    let mut model = Model::new(manifest.spec.clone(), 0)?;
    if model.net.architecture() != &manifest.architecture {
        return Err(Error::ModelCorrupt(
            "manifest architecture does not match its spec".into(),
        ));
    }
    let expected: Vec<TensorEntry> = model_tensors(&model)
        .into_iter()
        .map(|t| TensorEntry {
            name: t.name,
            shape: t.shape,
        })
        .collect();
    if expected != manifest.tensors {
        return Err(Error::ModelCorrupt(
            "manifest tensor list does not match the architecture".into(),
        ));
    }
    let mut by_name: BTreeMap<&str, &NamedTensor> = BTreeMap::new();
    for t in &stored {
        if by_name.insert(&t.name, t).is_some() {
            return Err(Error::ModelCorrupt(format!("duplicate tensor {}", t.name)));
        }
    }
    if by_name.len() != expected.len() {
        return Err(Error::ModelCorrupt(format!(
            "container holds {} tensors, manifest lists {}",
            by_name.len(),
            expected.len()
        )));
    }
    let fetch = |name: &str, shape: &[usize]| -> Result<Vec<f32>> {
        let t = by_name
            .get(name)
            .ok_or_else(|| Error::ModelCorrupt(format!("missing tensor {name}")))?;
        if t.shape != shape {
            return Err(Error::ModelCorrupt(format!(
                "{name}: stored {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t.data.clone())
    };
    for p in model.net.params_mut() {
        p.value = fetch(&p.name, &p.shape)?;
    }
    for b in model.net.buffers_mut() {
        b.value = fetch(&b.name, &b.shape)?;
    }
    model.fingerprint = manifest.fingerprint;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor3;
    use crate::zoo::spec::{build_cnn1, build_cnn3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn perturbed_cnn3() -> Model {
        let mut m = Model::new(build_cnn3(2).unwrap(), 1).unwrap();
        // move running statistics away from their defaults so they are checked too
        for (k, b) in m.net.buffers_mut().enumerate() {
            b.value.iter_mut().for_each(|v| *v += 0.1 * k as f32);
        }
        m.fingerprint = Some("abc123".into());
        m
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csnn");
        let m = perturbed_cnn3();
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.fingerprint.as_deref(), Some("abc123"));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor3::from_vec(
            100,
            2,
            32,
            (0..6400).map(|_| rng.random_range(0.0..3.0)).collect(),
        )
        .unwrap();
        assert_eq!(m.predict(&x).unwrap(), back.predict(&x).unwrap());
    }

    #[test]
    fn cnn1_roundtrip_keeps_feature_layer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cnn1.csnn");
        save_model(&Model::new(build_cnn1(), 0).unwrap(), &path).unwrap();
        assert!(manifest_path(&path).ends_with("cnn1.arch.json"));
        let back = load_model(&path).unwrap();
        assert_eq!(
            back.feature_node(),
            Model::new(build_cnn1(), 0).unwrap().feature_node()
        );
    }

    #[test]
    fn edited_manifest_dims_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csnn");
        save_model(&perturbed_cnn3(), &path).unwrap();
        let mut manifest: ModelManifest = read_json(&manifest_path(&path)).unwrap();
        manifest.tensors[0].shape[0] += 1;
        write_json(&manifest_path(&path), &manifest).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelCorrupt(_))));
    }

    #[test]
    fn container_shape_mismatch_and_missing_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csnn");
        save_model(&perturbed_cnn3(), &path).unwrap();
        let mut tensors = read_tensors(&path).unwrap();
        tensors[1].shape = vec![tensors[1].data.len(), 1];
        write_tensors(&path, &tensors).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelCorrupt(_))));
        tensors.pop();
        write_tensors(&path, &tensors).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelCorrupt(_))));
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csnn");
        save_model(&perturbed_cnn3(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelCorrupt(_))));
    }

    #[test]
    fn bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csnn");
        save_model(&perturbed_cnn3(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::UnsupportedFormat(_))
        ));
        bytes[..4].copy_from_slice(b"NOPE");
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::UnsupportedFormat(_))
        ));
    }
}

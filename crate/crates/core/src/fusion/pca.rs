//! Principal component analysis of received frames.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::scalar::{MatMut, MatRef};
use crate::nn::Real;
use crate::sigsynth::{push_agc, IqFrame};
use crate::zoo::{read_tensors, write_tensors, NamedTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub dim: usize,
    pub mean: Vec<f64>,
    /// `k × dim`, row-major; rows are orthonormal.
    pub components: Vec<f64>,
    /// Variance along each component, nonincreasing.
    pub explained_variance: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
}

const CHUNK_ROWS: usize = 2048;

/// Fits the top `k` principal components of the `rows.len() / dim` vectors
/// in `rows`. The covariance is normalized by `M − 1`; each component is
/// signed so its largest-magnitude entry is positive.
pub fn pca_fit<T: Copy + Into<f64>>(rows: &[T], dim: usize, k: usize) -> Result<PcaModel> {
    if dim == 0 || k == 0 || k > dim || rows.len() % dim != 0 {
        return Err(shape_err(format!(
            "{} values cannot be split into rows of {dim} for {k} components",
            rows.len()
        )));
    }
    let m = rows.len() / dim;
    if m <= k {
        return Err(Error::InsufficientData(format!(
            "{m} vectors for {k} components"
        )));
    }
    let mut mean = vec![0.0f64; dim];
    for row in rows.chunks_exact(dim) {
        for (a, &v) in mean.iter_mut().zip(row) {
            *a += v.into();
        }
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);

    // covariance accumulated over centered chunks: C += Xcᵀ Xc
    let mut cov = vec![0.0f64; dim * dim];
    let mut centered = Vec::with_capacity(CHUNK_ROWS * dim);
    for chunk in rows.chunks(CHUNK_ROWS * dim) {
        centered.clear();
        centered.extend(
            chunk
                .iter()
                .enumerate()
                .map(|(i, &v)| v.into() - mean[i % dim]),
        );
        let r = chunk.len() / dim;
        let x = MatRef::rm(&centered, r, dim);
        f64::gemm(1.0, x.t(), x, 1.0, MatMut::rm(&mut cov, dim, dim));
    }
    let scale = 1.0 / (m - 1) as f64;
    cov.iter_mut().for_each(|c| *c *= scale);
    let total_variance = (0..dim).map(|i| cov[i * dim + i]).sum();

    let eig = SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, &cov));
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(k * dim);
    let mut explained_variance = Vec::with_capacity(k);
    for &j in &order[..k] {
        let col = eig.eigenvectors.column(j);
        let pivot = (0..dim).fold(0, |best, i| {
            if col[i].abs() > col[best].abs() {
                i
            } else {
                best
            }
        });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(col.iter().map(|v| sign * v));
        explained_variance.push(eig.eigenvalues[j].max(0.0));
    }
    Ok(PcaModel {
        dim,
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.explained_variance.len()
    }

    pub fn component(&self, j: usize) -> &[f64] {
        &self.components[j * self.dim..(j + 1) * self.dim]
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| {
                if self.total_variance > 0.0 {
                    v / self.total_variance
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Coordinates of `x − mean` along every component.
    pub fn project<T: Copy + Into<f64>>(&self, x: &[T]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(shape_err(format!(
                "PCA expects {} values, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok((0..self.n_components())
            .map(|j| {
                self.component(j)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(c, (&v, mu))| c * (v.into() - mu))
                    .sum()
            })
            .collect())
    }

    /// Maps the first `coords.len()` coordinates back to the input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (j, &a) in coords.iter().enumerate().take(self.n_components()) {
            for (o, c) in out.iter_mut().zip(self.component(j)) {
                *o += a * c;
            }
        }
        out
    }

    /// Stores the model in a `CSNN` container (values narrowed to `f32`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
        let k = self.n_components();
        write_tensors(
            path,
            &[
                NamedTensor {
                    name: "mean".into(),
                    shape: vec![self.dim],
                    data: f(&self.mean),
                },
                NamedTensor {
                    name: "components".into(),
                    shape: vec![k, self.dim],
                    data: f(&self.components),
                },
                NamedTensor {
                    name: "explained_variance".into(),
                    shape: vec![k],
                    data: f(&self.explained_variance),
                },
                NamedTensor {
                    name: "total_variance".into(),
                    shape: vec![1],
                    data: vec![self.total_variance as f32],
                },
            ],
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let tensors = read_tensors(path)?;
        let get = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::ModelCorrupt(format!("PCA container lacks {name}")))
        };
        let wide = |t: &NamedTensor| t.data.iter().map(|&v| v as f64).collect::<Vec<_>>();
        let (mean, comps, var, total) = (
            get("mean")?,
            get("components")?,
            get("explained_variance")?,
            get("total_variance")?,
        );
        let dim = mean.data.len();
        let k = var.data.len();
        if comps.shape != [k, dim] || total.data.len() != 1 {
            return Err(Error::ModelCorrupt(format!(
                "PCA components stored as {:?}",
                comps.shape
            )));
        }
        Ok(Self {
            dim,
            mean: wide(mean),
            components: wide(comps),
            explained_variance: wide(var),
            total_variance: total.data[0] as f64,
        })
    }
}

/// A frame as one AGC-scaled vector: I followed by Q.
pub fn frame_vector(frame: &IqFrame) -> Vec<f32> {
    let mut v = Vec::with_capacity(2 * frame.i.len());
    push_agc(&frame.i, &frame.q, &mut v);
    v
}

/// The frame's projection onto the fitted components.
pub fn pca_project(model: &PcaModel, frame: &IqFrame) -> Result<Vec<f32>> {
    Ok(model
        .project(&frame_vector(frame))?
        .into_iter()
        .map(|v| v as f32)
        .collect())
}

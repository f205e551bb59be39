use super::scalar::Real;
use crate::error::{shape_err, Result};

/// Dense `(batch, channels, length)` tensor, row-major with length innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<F> {
    shape: [usize; 3],
    data: Vec<F>,
}

impl<F: Real> Tensor3<F> {
    pub fn zeros(batch: usize, channels: usize, length: usize) -> Self {
        Self {
            shape: [batch, channels, length],
            data: vec![F::zero(); batch * channels * length],
        }
    }

    pub fn from_vec(batch: usize, channels: usize, length: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != batch * channels * length {
            return Err(shape_err(format!(
                "{} values for shape ({batch}, {channels}, {length})",
                data.len()
            )));
        }
        Ok(Self {
            shape: [batch, channels, length],
            data,
        })
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn length(&self) -> usize {
        self.shape[2]
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<F> {
        self.data
    }

    /// Contiguous `(channels, length)` block of one batch item.
    pub fn item(&self, b: usize) -> &[F] {
        let n = self.shape[1] * self.shape[2];
        &self.data[b * n..(b + 1) * n]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [F] {
        let n = self.shape[1] * self.shape[2];
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, b: usize, c: usize, t: usize) -> F {
        self.data[(b * self.shape[1] + c) * self.shape[2] + t]
    }

    /// Same data viewed with another `(channels, length)` split.
    pub fn reshaped(self, channels: usize, length: usize) -> Result<Self> {
        let b = self.shape[0];
        Self::from_vec(b, channels, length, self.data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<G: Real>(&self) -> Tensor3<G> {
        Tensor3 {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| G::from_f64_lossy(v.to_f64().unwrap()))
                .collect(),
        }
    }

    /// Row-wise argmax over channels for `(batch, classes, 1)` tensors.
    pub fn argmax_rows(&self) -> Vec<usize> {
        let w = self.shape[1] * self.shape[2];
        self.data
            .chunks_exact(w)
            .map(|row| {
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_batch_channel_length() {
        let t = Tensor3::<f32>::from_vec(2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(t.get(1, 0, 2), 8.0);
        assert_eq!(t.item(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert!(Tensor3::<f32>::from_vec(2, 2, 2, vec![0.0; 7]).is_err());
    }

    #[test]
    fn argmax_takes_first_maximum() {
        let t = Tensor3::<f64>::from_vec(2, 3, 1, vec![0.1, 0.5, 0.5, 0.9, 0.0, 0.1]).unwrap();
        assert_eq!(t.argmax_rows(), vec![1, 0]);
    }
}

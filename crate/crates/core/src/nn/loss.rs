use super::layers::softmax_rows;
use super::scalar::Real;
use super::tensor::Tensor3;
use crate::error::{shape_err, Error, Result};

/// Output of [`softmax_xent`].
#[derive(Debug, Clone)]
pub struct XentOutput<F> {
    pub probs: Tensor3<F>,
    /// Mean negative log-probability of the true classes.
    pub loss: F,
    /// Gradient of `loss` with respect to the logits: `(p − onehot)/B`.
    pub dlogits: Tensor3<F>,
}

/// Softmax cross-entropy over `(B, K, 1)` logits.
pub fn softmax_xent<F: Real>(logits: &Tensor3<F>, labels: &[usize]) -> Result<XentOutput<F>> {
    let [b, k, t] = logits.shape();
    if t != 1 {
        return Err(shape_err("logits must have length 1"));
    }
    if labels.len() != b {
        return Err(shape_err(format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidLabel(bad));
    }
    let probs = softmax_rows(logits.clone());
    let inv_b = F::one() / F::from_usize(b).unwrap();
    let mut loss = F::zero();
    let mut dlogits = probs.clone();
    for (i, (&label, row)) in labels.iter().zip(logits.data().chunks_exact(k)).enumerate() {
        // log-softmax from the logits keeps saturated rows finite
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<F>().ln();
        loss += lse - row[label];
        let g = &mut dlogits.data_mut()[i * k..(i + 1) * k];
        g[label] -= F::one();
        g.iter_mut().for_each(|v| *v *= inv_b);
    }
    Ok(XentOutput {
        probs,
        loss: loss * inv_b,
        dlogits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits() {
        let x = Tensor3::<f64>::from_vec(1, 12, 1, vec![0.7; 12]).unwrap();
        let out = softmax_xent(&x, &[4]).unwrap();
        assert!(out
            .probs
            .data()
            .iter()
            .all(|p| (p - 1.0 / 12.0).abs() < 1e-12));
        assert!((out.loss - 12f64.ln()).abs() < 1e-12);
        assert!((out.loss - 2.4849).abs() < 1e-4);
    }

    #[test]
    fn saturated_correct_class() {
        let mut v = vec![0.0f32; 12];
        v[3] = 100.0;
        let out = softmax_xent(&Tensor3::from_vec(1, 12, 1, v).unwrap(), &[3]).unwrap();
        assert!(out.loss < 1e-6);
    }

    #[test]
    fn label_out_of_range() {
        let x = Tensor3::<f32>::zeros(1, 12, 1);
        assert!(matches!(
            softmax_xent(&x, &[12]),
            Err(Error::InvalidLabel(12))
        ));
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(logits in proptest::collection::vec(-1e4f32..1e4, 24)) {
            let x = Tensor3::from_vec(2, 12, 1, logits).unwrap();
            let out = softmax_xent(&x, &[0, 11]).unwrap();
            for row in out.probs.data().chunks(12) {
                prop_assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            }
            prop_assert!(out.loss.is_finite());
        }
    }
}

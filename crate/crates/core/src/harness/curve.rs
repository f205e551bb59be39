//! Accuracy-versus-SNR curves and the measurements taken from them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::fusion::{classify_batch, FusionModels, FusionScheme};
use crate::sigsynth::{Dataset, StoredSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub accuracy: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    /// Curve name as written to reports, e.g. `feature` or `feature-delta5`.
    pub scheme: String,
    pub n_nodes: usize,
    pub points: Vec<CurvePoint>,
}

impl AccuracyCurve {
    pub fn id(&self) -> String {
        format!("{}/N={}", self.scheme, self.n_nodes)
    }

    pub fn accuracy_at(&self, snr_db: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| (p.snr_db - snr_db).abs() < 1e-9)
            .map(|p| p.accuracy)
    }

    /// Mean accuracy over grid points inside `[lo, hi]`.
    pub fn mean_accuracy(&self, lo: f64, hi: f64) -> Option<f64> {
        let v: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.snr_db >= lo - 1e-9 && p.snr_db <= hi + 1e-9)
            .map(|p| p.accuracy)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn snrs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.snr_db).collect()
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.accuracy).collect()
    }
}

/// Anything that labels a batch of stored samples.
pub trait Classifier {
    fn classify(&self, samples: &[StoredSample]) -> Result<Vec<usize>>;
}

impl<F: Fn(&[StoredSample]) -> Result<Vec<usize>>> Classifier for F {
    fn classify(&self, samples: &[StoredSample]) -> Result<Vec<usize>> {
        self(samples)
    }
}

/// A fusion scheme over a fixed set of models.
pub struct SchemeClassifier<'a> {
    pub scheme: FusionScheme,
    pub models: &'a FusionModels,
}

const EVAL_BATCH: usize = 64;

impl Classifier for SchemeClassifier<'_> {
    fn classify(&self, samples: &[StoredSample]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(EVAL_BATCH) {
            out.extend(
                classify_batch(self.scheme, chunk, self.models)?
                    .into_iter()
                    .map(|o| o.label),
            );
        }
        Ok(out)
    }
}

/// Per-SNR accuracy over all modulations, grouped by each sample's base SNR
/// (read from the dataset sidecar).
pub fn evaluate_accuracy_by_snr(
    scheme: &str,
    classifier: &dyn Classifier,
    test: &Dataset,
) -> Result<AccuracyCurve> {
    let predicted = classifier.classify(&test.samples)?;
    if predicted.len() != test.len() {
        return Err(shape_err(format!(
            "{} predictions for {} samples",
            predicted.len(),
            test.len()
        )));
    }
    curve_from_predictions(scheme, test, &predicted)
}

pub fn curve_from_predictions(
    scheme: &str,
    test: &Dataset,
    predicted: &[usize],
) -> Result<AccuracyCurve> {
    // keyed by SNR in millidecibels so the map orders and compares exactly
    let mut cells: BTreeMap<i64, (f64, usize, usize)> = BTreeMap::new();
    for (k, (s, &p)) in test.samples.iter().zip(predicted).enumerate() {
        let snr = test.base_snr_db(k)?;
        let e = cells
            .entry((snr * 1000.0).round() as i64)
            .or_insert((snr, 0, 0));
        e.1 += usize::from(s.label.label() == p);
        e.2 += 1;
    }
    Ok(AccuracyCurve {
        scheme: scheme.to_string(),
        n_nodes: test.n_nodes(),
        points: cells
            .into_values()
            .map(|(snr_db, correct, n)| CurvePoint {
                snr_db,
                accuracy: correct as f64 / n as f64,
                n_test: n,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrGain {
    pub reference: String,
    pub improved: String,
    pub threshold: f64,
    /// `None` when either curve never crosses the threshold.
    pub gain_db: Option<f64>,
}

/// SNR at which the curve first rises through `threshold`, by linear
/// interpolation between the bracketing grid points.
pub fn threshold_crossing(curve: &AccuracyCurve, threshold: f64) -> Option<f64> {
    let p = &curve.points;
    if p.first()?.accuracy >= threshold {
        return Some(p[0].snr_db);
    }
    p.windows(2)
        .find(|w| w[0].accuracy < threshold && w[1].accuracy >= threshold)
        .map(|w| {
            let t = (threshold - w[0].accuracy) / (w[1].accuracy - w[0].accuracy);
            w[0].snr_db + t * (w[1].snr_db - w[0].snr_db)
        })
}

/// How far left `improved` sits relative to `reference` at `threshold`.
pub fn snr_gain(
    reference: &AccuracyCurve,
    improved: &AccuracyCurve,
    threshold: f64,
) -> Result<f64> {
    if reference.snrs() != improved.snrs() {
        return Err(shape_err("curves do not share an SNR grid"));
    }
    let r = threshold_crossing(reference, threshold);
    let i = threshold_crossing(improved, threshold);
    match (r, i) {
        (Some(r), Some(i)) => Ok(r - i),
        _ => Err(Error::GainUndefined(format!(
            "{} or {} never reaches accuracy {threshold}",
            reference.id(),
            improved.id()
        ))),
    }
}

/// [`snr_gain`] as a report record.
pub fn gain_record(reference: &AccuracyCurve, improved: &AccuracyCurve, threshold: f64) -> SnrGain {
    SnrGain {
        reference: reference.id(),
        improved: improved.id(),
        threshold,
        gain_db: snr_gain(reference, improved, threshold).ok(),
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(shape_err(
            "spearman needs two equal-length series of at least 2 points",
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

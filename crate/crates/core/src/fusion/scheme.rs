//! The cooperative classification schemes over trained models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pca::PcaModel;
use super::vote::{majority_vote, LocalDecision};
use crate::error::{shape_err, Error, Result};
use crate::nn::Tensor3;
use crate::sigsynth::{push_agc, CooperativeSample, StoredSample};
use crate::zoo::{Model, FEATURE_DIM};

/// Access to the per-node IQ frames of a cooperative sample.
pub trait NodeFrames: Sync {
    fn n_nodes(&self) -> usize;
    /// Node `i`'s `(I, Q)` rails.
    fn node(&self, i: usize) -> (&[f32], &[f32]);
}

impl NodeFrames for StoredSample {
    fn n_nodes(&self) -> usize {
        StoredSample::n_nodes(self)
    }

    fn node(&self, i: usize) -> (&[f32], &[f32]) {
        StoredSample::node(self, i)
    }
}

impl NodeFrames for CooperativeSample {
    fn n_nodes(&self) -> usize {
        CooperativeSample::n_nodes(self)
    }

    fn node(&self, i: usize) -> (&[f32], &[f32]) {
        (&self.frames[i].i, &self.frames[i].q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionScheme {
    Single,
    DecisionVote,
    SignalStack,
    FeatureCnn,
    FeaturePca,
}

impl FusionScheme {
    pub const ALL: [FusionScheme; 5] = [
        FusionScheme::Single,
        FusionScheme::DecisionVote,
        FusionScheme::SignalStack,
        FusionScheme::FeatureCnn,
        FusionScheme::FeaturePca,
    ];

    /// Short name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            FusionScheme::Single => "single",
            FusionScheme::DecisionVote => "decision",
            FusionScheme::SignalStack => "signal",
            FusionScheme::FeatureCnn => "feature",
            FusionScheme::FeaturePca => "pca",
        }
    }
}

impl fmt::Display for FusionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionScheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme {s:?}")))
    }
}

/// Whichever trained models a scheme may need.
#[derive(Debug, Clone, Default)]
pub struct FusionModels {
    pub cnn1: Option<Model>,
    pub cnn2: Option<Model>,
    pub cnn3: Option<Model>,
    /// CNN3 trained on PCA features.
    pub cnn3_pca: Option<Model>,
    pub pca: Option<PcaModel>,
}

fn need<'a, T>(m: &'a Option<T>, what: &str) -> Result<&'a T> {
    m.as_ref().ok_or_else(|| Error::ModelMissing(what.into()))
}

fn check_nodes(model: &Model, n: usize) -> Result<()> {
    if model.kind().n_nodes() != n {
        return Err(shape_err(format!(
            "{} cannot take {n} nodes",
            model.kind().label()
        )));
    }
    Ok(())
}

/// The fused label plus whatever per-node results the scheme produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub label: usize,
    pub local: Vec<LocalDecision>,
}

/// Channel-stacks a sample's frames into `(1, 2N, L)`: node `i`'s I and Q
/// occupy channels `2i` and `2i + 1`.
pub fn stack_signals<S: NodeFrames + ?Sized>(sample: &S) -> Result<Tensor3<f32>> {
    let n = sample.n_nodes();
    if n == 0 {
        return Err(Error::InvalidNodeCount(0));
    }
    let l = sample.node(0).0.len();
    let mut data = Vec::with_capacity(2 * n * l);
    for k in 0..n {
        let (i, q) = sample.node(k);
        if i.len() != l || q.len() != l {
            return Err(shape_err(format!(
                "node {k} has ({}, {}) samples, node 0 has {l}",
                i.len(),
                q.len()
            )));
        }
        push_agc(i, q, &mut data);
    }
    Tensor3::from_vec(1, 2 * n, l, data)
}

fn common_nodes<S: NodeFrames>(samples: &[S]) -> Result<usize> {
    let n = samples.first().map_or(1, |s| s.n_nodes());
    if samples.iter().any(|s| s.n_nodes() != n) {
        return Err(shape_err("samples disagree on the node count"));
    }
    Ok(n)
}

/// Every node's frame from every sample, `(B·N, 2, L)`, sample-major.
fn node_batch<S: NodeFrames>(samples: &[S], nodes: std::ops::Range<usize>) -> Result<Tensor3<f32>> {
    let l = samples.first().map_or(0, |s| s.node(0).0.len());
    let mut data = Vec::with_capacity(samples.len() * nodes.len() * 2 * l);
    for s in samples {
        for k in nodes.clone() {
            let (i, q) = s.node(k);
            if i.len() != l || q.len() != l {
                return Err(shape_err("frames of unequal length"));
            }
            push_agc(i, q, &mut data);
        }
    }
    Tensor3::from_vec(samples.len() * nodes.len(), 2, l, data)
}

/// CNN1 run on every node: `(B·N, 32, 1)` features and `(B·N, 12, 1)`
/// probabilities, sample-major.
pub fn node_outputs<S: NodeFrames>(
    cnn1: &Model,
    samples: &[S],
) -> Result<(Tensor3<f32>, Tensor3<f32>)> {
    let n = common_nodes(samples)?;
    cnn1.features_and_probs(&node_batch(samples, 0..n)?)
}

/// Per-node decisions from `(B·N, K, 1)` probabilities.
pub fn local_decisions(probs: &Tensor3<f32>, n_nodes: usize) -> Result<Vec<Vec<LocalDecision>>> {
    let k = probs.channels();
    probs
        .data()
        .chunks(n_nodes * k)
        .map(|sample| {
            sample
                .chunks(k)
                .enumerate()
                .map(|(node, p)| LocalDecision::from_probs(node, p))
                .collect()
        })
        .collect()
}

/// Classifies concatenated `(B·N, 32)` feature rows with a CNN3 taking
/// `N` nodes.
pub fn classify_features(cnn3: &Model, features: &[f32], n_nodes: usize) -> Result<Vec<usize>> {
    check_nodes(cnn3, n_nodes)?;
    let b = features.len() / (n_nodes * FEATURE_DIM);
    let x = Tensor3::from_vec(b, n_nodes, FEATURE_DIM, features.to_vec())?;
    Ok(cnn3.predict(&x)?.argmax_rows())
}

/// Runs `scheme` on a batch of samples sharing one node count.
pub fn classify_batch<S: NodeFrames>(
    scheme: FusionScheme,
    samples: &[S],
    models: &FusionModels,
) -> Result<Vec<Outcome>> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let n = common_nodes(samples)?;
    let plain = |labels: Vec<usize>| {
        labels
            .into_iter()
            .map(|label| Outcome {
                label,
                local: vec![],
            })
            .collect()
    };
    match scheme {
        FusionScheme::Single => {
            let cnn1 = need(&models.cnn1, "CNN1")?;
            let probs = cnn1.predict(&node_batch(samples, 0..1)?)?;
            Ok(local_decisions(&probs, 1)?
                .into_iter()
                .map(|local| Outcome {
                    label: local[0].label,
                    local,
                })
                .collect())
        }
        FusionScheme::DecisionVote => {
            let cnn1 = need(&models.cnn1, "CNN1")?;
            let probs = cnn1.predict(&node_batch(samples, 0..n)?)?;
            local_decisions(&probs, n)?
                .into_iter()
                .map(|local| {
                    Ok(Outcome {
                        label: majority_vote(&local)?,
                        local,
                    })
                })
                .collect()
        }
        FusionScheme::SignalStack => {
            let cnn2 = need(&models.cnn2, "CNN2")?;
            check_nodes(cnn2, n)?;
            let mut data = Vec::new();
            for s in samples {
                data.extend(stack_signals(s)?.into_vec());
            }
            let l = data.len() / (samples.len() * 2 * n);
            Ok(plain(
                cnn2.predict(&Tensor3::from_vec(samples.len(), 2 * n, l, data)?)?
                    .argmax_rows(),
            ))
        }
        FusionScheme::FeatureCnn if n == 1 => {
            // a lone node has nothing to fuse; its CNN1 head decides
            classify_batch(FusionScheme::Single, samples, models)
        }
        FusionScheme::FeatureCnn => {
            let cnn1 = need(&models.cnn1, "CNN1")?;
            let cnn3 = need(&models.cnn3, "CNN3")?;
            check_nodes(cnn3, n)?;
            let feats = cnn1.features(&node_batch(samples, 0..n)?)?;
            Ok(plain(classify_features(cnn3, feats.data(), n)?))
        }
        FusionScheme::FeaturePca => {
            let pca = need(&models.pca, "PCA model")?;
            let cnn3 = need(&models.cnn3_pca, "PCA-trained CNN3")?;
            check_nodes(cnn3, n)?;
            let mut feats = Vec::with_capacity(samples.len() * n * FEATURE_DIM);
            for s in samples {
                for k in 0..n {
                    let (i, q) = s.node(k);
                    let v: Vec<f32> = i.iter().chain(q).copied().collect();
                    feats.extend(pca.project(&v)?.into_iter().map(|x| x as f32));
                }
            }
            Ok(plain(classify_features(cnn3, &feats, n)?))
        }
    }
}

/// Classifies one sample under `scheme`.
pub fn cooperative_classify<S: NodeFrames>(
    scheme: FusionScheme,
    sample: &S,
    models: &FusionModels,
) -> Result<Outcome> {
    Ok(classify_batch(scheme, std::slice::from_ref(sample), models)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigsynth::{FrameSpec, ModulationType, SampleGenerator, SnrPolicy};
    use crate::zoo::{build_cnn1, build_cnn2, build_cnn3};

    fn samples(n: usize, count: usize) -> Vec<CooperativeSample> {
        let g = SampleGenerator::new(n, SnrPolicy::Grid { snr_db: 5.0 }, FrameSpec::default(), 11)
            .unwrap();
        (0..count)
            .map(|k| g.sample(ModulationType::ALL[k % 12], k as u64).unwrap())
            .collect()
    }

    fn models(n: usize) -> FusionModels {
        FusionModels {
            cnn1: Some(Model::new(build_cnn1(), 1).unwrap()),
            cnn2: Some(Model::new(build_cnn2(n).unwrap(), 2).unwrap()),
            cnn3: Some(Model::new(build_cnn3(n).unwrap(), 3).unwrap()),
            ..FusionModels::default()
        }
    }

    #[test]
    fn stacking_layout() {
        let s = &samples(4, 1)[0];
        let t = stack_signals(s).unwrap();
        assert_eq!(t.shape(), [1, 8, 512]);
        // node 3 lands on channels 6 and 7, scaled by one gain to unit power
        let f = &s.frames[3];
        let raw: Vec<f32> = f.i.iter().chain(&f.q).copied().collect();
        let got = &t.item(0)[6 * 512..8 * 512];
        let power = got.iter().map(|v| v * v).sum::<f32>() / 512.0;
        assert!((power - 1.0).abs() < 1e-4, "{power}");
        let g = got[0] / raw[0];
        for (a, b) in got.iter().zip(&raw) {
            assert!((a - g * b).abs() <= 1e-5 * (1.0 + a.abs()));
        }
        assert_eq!(t, stack_signals(s).unwrap());
        let one = &samples(1, 1)[0];
        assert_eq!(
            stack_signals(one).unwrap(),
            crate::zoo::frame_tensor(&one.frames[0]).unwrap()
        );
    }

    #[test]
    fn stacking_rejects_ragged_frames() {
        let mut s = samples(2, 1).remove(0);
        s.frames[1].q.pop();
        assert!(matches!(stack_signals(&s), Err(Error::Shape(_))));
    }

    #[test]
    fn single_node_schemes_agree() {
        let m = models(1);
        for s in samples(1, 6) {
            let expect = m
                .cnn1
                .as_ref()
                .unwrap()
                .predict(&stack_signals(&s).unwrap())
                .unwrap()
                .argmax_rows()[0];
            for scheme in [
                FusionScheme::Single,
                FusionScheme::DecisionVote,
                FusionScheme::FeatureCnn,
            ] {
                assert_eq!(
                    cooperative_classify(scheme, &s, &m).unwrap().label,
                    expect,
                    "{scheme}"
                );
            }
        }
    }

    #[test]
    fn vote_is_the_vote_of_local_predictions() {
        let m = models(3);
        let cnn1 = m.cnn1.as_ref().unwrap();
        for s in samples(3, 5) {
            let out = cooperative_classify(FusionScheme::DecisionVote, &s, &m).unwrap();
            let local: Vec<LocalDecision> = s
                .frames
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    let p = cnn1.predict(&crate::zoo::frame_tensor(f).unwrap()).unwrap();
                    LocalDecision::from_probs(k, p.data()).unwrap()
                })
                .collect();
            assert_eq!(out.label, majority_vote(&local).unwrap());
            assert_eq!(
                out.local.iter().map(|d| d.label).collect::<Vec<_>>(),
                local.iter().map(|d| d.label).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn feature_scheme_is_the_explicit_composition() {
        let m = models(2);
        for s in samples(2, 4) {
            let mut feats = Vec::new();
            for f in &s.frames {
                feats.extend(crate::zoo::extract_features(m.cnn1.as_ref().unwrap(), f).unwrap());
            }
            let x = Tensor3::from_vec(1, 2, FEATURE_DIM, feats).unwrap();
            let expect = m.cnn3.as_ref().unwrap().predict(&x).unwrap().argmax_rows()[0];
            assert_eq!(
                cooperative_classify(FusionScheme::FeatureCnn, &s, &m)
                    .unwrap()
                    .label,
                expect
            );
        }
    }

    #[test]
    fn batched_equals_one_at_a_time() {
        let m = models(2);
        let s = samples(2, 7);
        for scheme in [
            FusionScheme::DecisionVote,
            FusionScheme::SignalStack,
            FusionScheme::FeatureCnn,
        ] {
            let batch: Vec<usize> = classify_batch(scheme, &s, &m)
                .unwrap()
                .iter()
                .map(|o| o.label)
                .collect();
            let single: Vec<usize> = s
                .iter()
                .map(|x| cooperative_classify(scheme, x, &m).unwrap().label)
                .collect();
            assert_eq!(batch, single);
        }
    }

    #[test]
    fn repeated_calls_are_identical() {
        let m = models(2);
        let s = &samples(2, 1)[0];
        let first = cooperative_classify(FusionScheme::SignalStack, s, &m).unwrap();
        for _ in 0..100 {
            assert_eq!(
                cooperative_classify(FusionScheme::SignalStack, s, &m).unwrap(),
                first
            );
        }
    }

    #[test]
    fn missing_models_and_node_mismatch() {
        let s = &samples(2, 1)[0];
        let empty = FusionModels::default();
        for scheme in FusionScheme::ALL {
            assert!(
                matches!(
                    cooperative_classify(scheme, s, &empty),
                    Err(Error::ModelMissing(_))
                ),
                "{scheme}"
            );
        }
        let m = models(4);
        assert!(matches!(
            cooperative_classify(FusionScheme::SignalStack, s, &m),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            cooperative_classify(FusionScheme::FeatureCnn, s, &m),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn scheme_names_roundtrip() {
        for s in FusionScheme::ALL {
            assert_eq!(s.name().parse::<FusionScheme>().unwrap(), s);
        }
        assert!("stacked".parse::<FusionScheme>().is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// One node's classification as sent to the fusion node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDecision {
    pub node: usize,
    pub label: usize,
    /// Class probabilities.
    pub confidence: Vec<f32>,
}

impl LocalDecision {
    /// Takes the label as the argmax of `probs`, lowest index on ties.
    pub fn from_probs(node: usize, probs: &[f32]) -> Result<Self> {
        if probs.is_empty() {
            return Err(shape_err("empty confidence vector"));
        }
        let mut label = 0;
        for (k, &p) in probs.iter().enumerate() {
            if p > probs[label] {
                label = k;
            }
        }
        Ok(Self {
            node,
            label,
            confidence: probs.to_vec(),
        })
    }

    /// Confidence in the node's own label.
    pub fn top(&self) -> f32 {
        self.confidence[self.label]
    }
}

/// Majority vote over local decisions. Ties on the count go to the label
/// whose voters have the larger summed confidence, then to the lowest label.
pub fn majority_vote(decisions: &[LocalDecision]) -> Result<usize> {
    if decisions.is_empty() {
        return Err(Error::EmptyVote);
    }
    let classes = decisions.iter().map(|d| d.label + 1).max().unwrap_or(0);
    let mut votes: Vec<Vec<f32>> = vec![Vec::new(); classes];
    for d in decisions {
        votes[d.label].push(d.top());
    }
    let score = |v: &mut Vec<f32>| {
        // summed in sorted order so permuted inputs give the same bits
        v.sort_by(f32::total_cmp);
        (v.len(), v.iter().map(|&c| c as f64).sum::<f64>())
    };
    let mut best: Option<(usize, (usize, f64))> = None;
    for (label, v) in votes.iter_mut().enumerate() {
        if v.is_empty() {
            continue;
        }
        let s = score(v);
        let better = match best {
            None => true,
            Some((_, (n, c))) => s.0 > n || (s.0 == n && s.1 > c),
        };
        if better {
            best = Some((label, s));
        }
    }
    Ok(best.expect("at least one decision").0)
}

//! Top-1 and mean per-class accuracy on a held-out split.

use alloc::format;
use alloc::vec;

use crate::embedding::{EmbeddingSet, LabeledSet};
use crate::error::{Error, Result};
use crate::transfer::adapter::AdapterModel;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Accuracy {
    pub top1: f64,
    /// Unweighted mean of per-class recall over classes present in the split.
    pub mean_per_class: f64,
}

pub fn evaluate(model: &AdapterModel, test: &EmbeddingSet, truth: &LabeledSet) -> Result<Accuracy> {
    if test.is_empty() {
        return Err(Error::Contract("evaluation on an empty test set".into()));
    }
    let pairs = test
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let t = truth
                .get(*id)
                .ok_or_else(|| Error::Data(format!("test sample {id} has no true label")))?;
            Ok((model.predict(test.row(i)), t))
        })
        .collect::<Result<alloc::vec::Vec<_>>>()?;
    accuracy_from_predictions(&pairs, truth.classes())
}

/// Metrics from `(predicted, true)` pairs.
pub fn accuracy_from_predictions(pairs: &[(usize, usize)], classes: usize) -> Result<Accuracy> {
    if pairs.is_empty() {
        return Err(Error::Contract("no predictions to score".into()));
    }
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for &(p, t) in pairs {
        if t >= classes {
            return Err(Error::Data(format!("true class {t} out of range")));
        }
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    let correct: usize = hits.iter().sum();
    let (sum, present) = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &n)| n > 0)
        .fold((0.0, 0usize), |(s, k), (&h, &n)| (s + h as f64 / n as f64, k + 1));
    Ok(Accuracy {
        top1: correct as f64 / pairs.len() as f64,
        mean_per_class: sum / present as f64,
    })
}

//! BCubed precision of a clustering against ground-truth classes.

use alloc::collections::BTreeMap;
use alloc::format;

use crate::embedding::{LabeledSet, SampleId};
use crate::error::{Error, Result};

/// Mean over samples of the share of its cluster that carries its true label.
pub fn bcubed_precision(
    assignment: &[usize],
    ids: &[SampleId],
    truth: &LabeledSet,
) -> Result<f64> {
    if assignment.len() != ids.len() {
        return Err(Error::shape("assignment and ids differ in length"));
    }
    if assignment.is_empty() {
        return Err(Error::Contract("BCubed precision of an empty clustering".into()));
    }
    let labels = ids
        .iter()
        .map(|id| {
            truth
                .get(*id)
                .ok_or_else(|| Error::Data(format!("sample {id} has no true label")))
        })
        .collect::<Result<alloc::vec::Vec<_>>>()?;
    let mut cluster_size: BTreeMap<usize, usize> = BTreeMap::new();
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&c, &l) in assignment.iter().zip(&labels) {
        *cluster_size.entry(c).or_default() += 1;
        *joint.entry((c, l)).or_default() += 1;
    }
    // each of the n(c, l) samples contributes n(c, l) / n(c)
    let sum: f64 = joint
        .iter()
        .map(|(&(c, _), &n)| {
            let n = n as f64;
            n * n / cluster_size[&c] as f64
        })
        .sum();
    Ok(sum / assignment.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn ids(n: usize) -> Vec<SampleId> {
        (0..n as u64).map(SampleId).collect()
    }

    fn truth(labels: &[usize], classes: usize) -> LabeledSet {
        LabeledSet::from_pairs(
            classes,
            labels.iter().enumerate().map(|(i, &c)| (SampleId(i as u64), c)),
        )
        .unwrap()
    }

    #[test]
    fn perfect_clusters_score_one() {
        let t = truth(&[0, 0, 1, 1, 2], 3);
        assert_eq!(bcubed_precision(&[4, 4, 7, 7, 1], &ids(5), &t).unwrap(), 1.0);
    }

    #[test]
    fn single_mixed_cluster_is_five_ninths() {
        let t = truth(&[0, 0, 1], 2);
        let p = bcubed_precision(&[0, 0, 0], &ids(3), &t).unwrap();
        assert!((p - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn singletons_score_one() {
        let t = truth(&[0, 1, 0, 1], 2);
        assert_eq!(bcubed_precision(&[0, 1, 2, 3], &ids(4), &t).unwrap(), 1.0);
    }

    #[test]
    fn missing_truth_is_a_data_error() {
        let t = truth(&[0], 1);
        assert!(matches!(
            bcubed_precision(&[0, 0], &ids(2), &t),
            Err(Error::Data(_))
        ));
        assert!(bcubed_precision(&[], &[], &t).is_err());
    }
}

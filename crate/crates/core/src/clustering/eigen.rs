//! Eigen-sample selection: the most central unlabeled member of each free cluster.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::clustering::kmeans::ClusterState;
use crate::embedding::{sq_dist, EmbeddingSet, SampleId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EigenPick {
    pub cluster: usize,
    pub id: SampleId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SkipReason {
    Empty,
    AllLabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SkippedCluster {
    pub cluster: usize,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EigenSelection {
    pub picks: Vec<EigenPick>,
    pub skipped: Vec<SkippedCluster>,
}

/// One pick per free cluster: the unlabeled member nearest its center, ties
/// to the smallest id. Clusters with no unlabeled member are reported as skipped.
pub fn select_eigen_samples(
    f: &EmbeddingSet,
    state: &ClusterState,
    already_labeled: &BTreeSet<SampleId>,
) -> Result<EigenSelection> {
    if state.new_count == 0 {
        return Err(Error::Contract("no free clusters to select from".into()));
    }
    if state.assignment.len() != f.len() {
        return Err(Error::shape("cluster state does not match the feature set"));
    }
    let m = state.anchor_count;
    let mut best: Vec<Option<(f64, SampleId)>> = alloc::vec![None; state.new_count];
    let mut sizes = alloc::vec![0usize; state.new_count];
    for (i, &c) in state.assignment.iter().enumerate() {
        if c < m {
            continue;
        }
        sizes[c - m] += 1;
        let id = f.ids()[i];
        if already_labeled.contains(&id) {
            continue;
        }
        let d = sq_dist(f.row(i), state.centers.row(c));
        let slot = &mut best[c - m];
        let better = match slot {
            None => true,
            Some((bd, bid)) => d < *bd || (d == *bd && id < *bid),
        };
        if better {
            *slot = Some((d, id));
        }
    }
    let mut out = EigenSelection::default();
    for (j, b) in best.into_iter().enumerate() {
        let cluster = m + j;
        match b {
            Some((_, id)) => out.picks.push(EigenPick { cluster, id }),
            None => out.skipped.push(SkippedCluster {
                cluster,
                reason: if sizes[j] == 0 {
                    SkipReason::Empty
                } else {
                    SkipReason::AllLabeled
                },
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use alloc::vec;

    fn state(centers: &[[f64; 2]], assignment: Vec<usize>, m: usize) -> ClusterState {
        let centers = Matrix::from_rows(centers).unwrap();
        ClusterState {
            new_count: centers.rows() - m,
            centers,
            assignment,
            anchor_count: m,
            iterations: 1,
            inertia_history: vec![],
            converged: true,
        }
    }

    fn square() -> EmbeddingSet {
        EmbeddingSet::with_sequential_ids(
            Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn equidistant_tie_goes_to_smallest_id() {
        let s = state(&[[0.0, 0.5], [10.0, 0.5]], vec![0, 0, 1, 1], 1);
        let sel = select_eigen_samples(&square(), &s, &BTreeSet::new()).unwrap();
        assert_eq!(sel.picks, vec![EigenPick { cluster: 1, id: SampleId(2) }]);
    }

    #[test]
    fn singleton_cluster_picks_its_member() {
        let s = state(&[[0.0, 0.5], [10.0, 0.0], [10.0, 1.0]], vec![0, 0, 1, 2], 1);
        let sel = select_eigen_samples(&square(), &s, &BTreeSet::new()).unwrap();
        assert_eq!(sel.picks.len(), 2);
        assert_eq!(sel.picks[1], EigenPick { cluster: 2, id: SampleId(3) });
    }

    #[test]
    fn labeled_and_empty_clusters_are_skipped() {
        let s = state(&[[0.0, 0.5], [10.0, 0.5], [50.0, 50.0]], vec![0, 0, 1, 1], 1);
        let labeled: BTreeSet<_> = [SampleId(2), SampleId(3)].into_iter().collect();
        let sel = select_eigen_samples(&square(), &s, &labeled).unwrap();
        assert!(sel.picks.is_empty());
        assert_eq!(
            sel.skipped,
            vec![
                SkippedCluster { cluster: 1, reason: SkipReason::AllLabeled },
                SkippedCluster { cluster: 2, reason: SkipReason::Empty },
            ]
        );
    }

    #[test]
    fn no_free_clusters_is_a_contract_error() {
        let s = state(&[[0.0, 0.5]], vec![0, 0, 0, 0], 1);
        assert!(matches!(
            select_eigen_samples(&square(), &s, &BTreeSet::new()),
            Err(Error::Contract(_))
        ));
    }
}

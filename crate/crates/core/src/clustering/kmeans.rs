//! Anchor-constrained KMeans.
//!
//! The first `m` centers are anchors: features of already-labeled samples.
//! They take part in assignment but are never moved, so samples close to an
//! anchor are absorbed by it and the `K` free centers spread over the rest.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};

use crate::embedding::{sq_dist, EmbeddingSet, SampleId};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;

/// Centers held fixed during clustering, with the labeled samples they came from.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnchorSet {
    vectors: Matrix,
    origin_ids: Vec<SampleId>,
}

impl AnchorSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            vectors: Matrix::zeros(0, dim),
            origin_ids: Vec::new(),
        }
    }

    pub fn new(vectors: Matrix, origin_ids: Vec<SampleId>) -> Result<Self> {
        if vectors.rows() != origin_ids.len() {
            return Err(Error::shape(format!(
                "{} anchor vectors for {} origin ids",
                vectors.rows(),
                origin_ids.len()
            )));
        }
        if !vectors.is_finite() {
            return Err(Error::Data("anchor vectors must be finite".into()));
        }
        Ok(Self {
            vectors,
            origin_ids,
        })
    }

    /// Anchors taken from the rows of `features` for `ids`, in that order.
    pub fn from_features(features: &EmbeddingSet, ids: &[SampleId]) -> Result<Self> {
        let sub = features.subset(ids)?;
        let (origin_ids, vectors) = sub.into_parts();
        Ok(Self {
            vectors,
            origin_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.origin_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn origin_ids(&self) -> &[SampleId] {
        &self.origin_ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum InitMethod {
    /// `K` distinct samples drawn uniformly.
    RandomSample,
    /// D² sampling against anchors and already chosen centers.
    KmeansPlusPlus,
}

/// What happens to a free center that ends an update with no members.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum EmptyPolicy {
    /// Move it onto the sample farthest from every other center.
    RespawnFarthest,
    /// Remove it; the state ends with fewer free clusters.
    Drop,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct KMeansConfig {
    pub t_max: usize,
    pub init: InitMethod,
    pub empty_policy: EmptyPolicy,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            t_max: 100,
            init: InitMethod::RandomSample,
            empty_policy: EmptyPolicy::RespawnFarthest,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterState {
    /// Anchors first, then the free centers.
    pub centers: Matrix,
    /// Cluster index per sample, in the row order of the clustered set.
    pub assignment: Vec<usize>,
    pub anchor_count: usize,
    pub new_count: usize,
    /// Completed assign/update rounds.
    pub iterations: usize,
    /// Inertia after each update round.
    pub inertia_history: Vec<f64>,
    pub converged: bool,
}

impl ClusterState {
    pub fn is_anchor_cluster(&self, cluster: usize) -> bool {
        cluster < self.anchor_count
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

fn check_dims(f: &EmbeddingSet, anchors: &AnchorSet) -> Result<()> {
    if !anchors.is_empty() && anchors.dim() != f.dim() {
        return Err(Error::shape(format!(
            "anchors have width {}, features {}",
            anchors.dim(),
            f.dim()
        )));
    }
    Ok(())
}

fn check_k(f: &EmbeddingSet, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::config("k", "need at least one new cluster"));
    }
    if k > f.len() {
        return Err(Error::config(
            "k",
            format!("{k} clusters requested for {} samples", f.len()),
        ));
    }
    Ok(())
}

/// Initial free centers according to `cfg.init`.
pub fn initial_centers(
    f: &EmbeddingSet,
    k: usize,
    anchors: &AnchorSet,
    cfg: &KMeansConfig,
) -> Result<Matrix> {
    check_k(f, k)?;
    check_dims(f, anchors)?;
    let stream = RngStream::new(cfg.seed, "kmeans/init");
    match cfg.init {
        InitMethod::RandomSample => {
            let mut rng = stream.rng();
            let idx = rand::seq::index::sample(&mut rng, f.len(), k).into_vec();
            Ok(f.data().select_rows(&idx))
        }
        InitMethod::KmeansPlusPlus => kmeans_pp_init(f, k, anchors, &stream),
    }
}

/// D²-weighted seeding where distances run to the nearest of the anchors and
/// the centers chosen so far. With no anchors this is standard k-means++.
pub fn kmeans_pp_init(
    f: &EmbeddingSet,
    k: usize,
    existing: &AnchorSet,
    stream: &RngStream,
) -> Result<Matrix> {
    check_k(f, k)?;
    check_dims(f, existing)?;
    let mut rng = stream.rng();
    let n = f.len();
    let mut d2 = vec![f64::INFINITY; n];
    let refresh = |d2: &mut [f64], c: &[f64]| {
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(f.row(i), c));
        }
    };
    for a in existing.vectors().iter_rows() {
        refresh(&mut d2, a);
    }
    let mut chosen = Matrix::zeros(0, f.dim());
    while chosen.rows() < k {
        let pick = if existing.is_empty() && chosen.rows() == 0 {
            rng.random_range(0..n)
        } else {
            let total: f64 = d2.iter().sum();
            if !(total > 0.0) {
                return Err(Error::degenerate(
                    None,
                    "every sample coincides with an existing center",
                ));
            }
            WeightedIndex::new(&d2)
                .map_err(|e| Error::degenerate(None, format!("D² weights: {e}")))?
                .sample(&mut rng)
        };
        chosen.push_row(f.row(pick))?;
        refresh(&mut d2, f.row(pick));
    }
    Ok(chosen)
}

/// Nearest center per sample; the lowest index wins ties.
fn assign(f: &EmbeddingSet, centers: &Matrix, out: &mut [usize]) {
    for (i, slot) in out.iter_mut().enumerate() {
        let x = f.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centers.iter_rows().enumerate() {
            let d = sq_dist(x, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        *slot = best;
    }
}

fn inertia_of(f: &EmbeddingSet, centers: &Matrix, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(f.row(i), centers.row(c)))
        .sum()
}

/// `sum_i |f_i - center(f_i)|²`
pub fn inertia(f: &EmbeddingSet, state: &ClusterState) -> Result<f64> {
    if state.assignment.len() != f.len() || state.centers.cols() != f.dim() {
        return Err(Error::shape("cluster state does not match the feature set"));
    }
    Ok(inertia_of(f, &state.centers, &state.assignment))
}

/// Anchor-constrained KMeans with `k` free clusters, seeded per `cfg`.
pub fn ackmeans(
    f: &EmbeddingSet,
    k: usize,
    anchors: &AnchorSet,
    cfg: &KMeansConfig,
) -> Result<ClusterState> {
    let init = initial_centers(f, k, anchors, cfg)?;
    ackmeans_from(f, anchors, init, cfg)
}

/// Unconstrained KMeans: [`ackmeans`] without anchors.
pub fn kmeans(f: &EmbeddingSet, k: usize, cfg: &KMeansConfig) -> Result<ClusterState> {
    ackmeans(f, k, &AnchorSet::empty(f.dim()), cfg)
}

/// Best of `restarts` unconstrained runs by final inertia; the earliest run
/// wins ties. Restart `r` seeds from `(cfg.seed, r)`.
pub fn kmeans_best_of(
    f: &EmbeddingSet,
    k: usize,
    cfg: &KMeansConfig,
    restarts: usize,
) -> Result<ClusterState> {
    if restarts == 0 {
        return Err(Error::config("restarts", "need at least one run"));
    }
    let stream = RngStream::new(cfg.seed, "kmeans/restart");
    let mut best: Option<(f64, ClusterState)> = None;
    for r in 0..restarts {
        let run_cfg = KMeansConfig {
            seed: stream.derive_indexed("run", r as u64).rng().next_u64(),
            ..cfg.clone()
        };
        let state = kmeans(f, k, &run_cfg)?;
        let score = inertia_of(f, &state.centers, &state.assignment);
        if best.as_ref().map_or(true, |(b, _)| score < *b) {
            best = Some((score, state));
        }
    }
    Ok(best.expect("at least one restart").1)
}

/// Runs the assign/update loop from explicit initial free centers.
pub fn ackmeans_from(
    f: &EmbeddingSet,
    anchors: &AnchorSet,
    init: Matrix,
    cfg: &KMeansConfig,
) -> Result<ClusterState> {
    check_k(f, init.rows())?;
    check_dims(f, anchors)?;
    if init.cols() != f.dim() {
        return Err(Error::shape("initial centers do not match the feature width"));
    }
    if cfg.t_max == 0 {
        return Err(Error::config("kmeans.t_max", "must be at least 1"));
    }
    let m = anchors.len();
    let mut centers = anchors.vectors().clone();
    if m == 0 {
        centers = Matrix::zeros(0, f.dim());
    }
    for r in init.iter_rows() {
        centers.push_row(r)?;
    }

    let n = f.len();
    let mut assignment = vec![0usize; n];
    let mut previous: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..cfg.t_max {
        assign(f, &centers, &mut assignment);
        if previous.as_deref() == Some(assignment.as_slice()) {
            converged = true;
            break;
        }
        update_free_centers(f, &mut centers, &mut assignment, m, cfg.empty_policy)?;
        history.push(inertia_of(f, &centers, &assignment));
        iterations += 1;
        previous = Some(assignment.clone());
    }

    Ok(ClusterState {
        new_count: centers.rows() - m,
        centers,
        assignment,
        anchor_count: m,
        iterations,
        inertia_history: history,
        converged,
    })
}

fn update_free_centers(
    f: &EmbeddingSet,
    centers: &mut Matrix,
    assignment: &mut [usize],
    m: usize,
    policy: EmptyPolicy,
) -> Result<()> {
    let d = f.dim();
    let total = centers.rows();
    let mut sums = Matrix::zeros(total - m, d);
    let mut counts = vec![0usize; total - m];
    for (i, &c) in assignment.iter().enumerate() {
        if c >= m {
            crate::matrix::axpy(1.0, f.row(i), sums.row_mut(c - m));
            counts[c - m] += 1;
        }
    }
    let mut empties = Vec::new();
    for j in 0..total - m {
        if counts[j] == 0 {
            empties.push(m + j);
            continue;
        }
        let inv = counts[j] as f64;
        let row = centers.row_mut(m + j);
        for (c, s) in row.iter_mut().zip(sums.row(j)) {
            *c = s / inv;
        }
    }
    match policy {
        EmptyPolicy::RespawnFarthest => {
            for &j in &empties {
                let far = farthest_sample(f, centers, j);
                let x = f.row(far).to_vec();
                centers.row_mut(j).copy_from_slice(&x);
            }
        }
        EmptyPolicy::Drop => {
            for &j in empties.iter().rev() {
                let keep: Vec<usize> = (0..centers.rows()).filter(|&r| r != j).collect();
                *centers = centers.select_rows(&keep);
                for a in assignment.iter_mut() {
                    if *a > j {
                        *a -= 1;
                    }
                }
            }
            if centers.rows() == m {
                return Err(Error::degenerate(None, "every free cluster emptied"));
            }
        }
    }
    Ok(())
}

/// Sample maximizing the distance to its nearest center, ignoring `skip`.
fn farthest_sample(f: &EmbeddingSet, centers: &Matrix, skip: usize) -> usize {
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for i in 0..f.len() {
        let x = f.row(i);
        let d = centers
            .iter_rows()
            .enumerate()
            .filter(|(j, _)| *j != skip)
            .map(|(_, c)| sq_dist(x, c))
            .fold(f64::INFINITY, f64::min);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

//! Sample identities, embedding matrices, label sets and the vector
//! primitives shared by every stage.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

/// Stable index of a sample within one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct SampleId(pub u64);

impl core::fmt::Display for SampleId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Row-wise features of a dataset, keyed by [`SampleId`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<SampleId>,
    data: Matrix,
    normalized: bool,
    index: BTreeMap<SampleId, usize>,
}

/// Tolerance on the row norm of a set flagged as normalized.
pub const UNIT_NORM_TOL: f64 = 1e-9;

impl EmbeddingSet {
    pub fn new(ids: Vec<SampleId>, data: Matrix) -> Result<Self> {
        if ids.len() != data.rows() {
            return Err(Error::shape(format!(
                "{} ids for {} rows",
                ids.len(),
                data.rows()
            )));
        }
        let mut index = BTreeMap::new();
        for (row, id) in ids.iter().enumerate() {
            if index.insert(*id, row).is_some() {
                return Err(Error::Data(format!("duplicate sample id {id}")));
            }
        }
        for (row, r) in data.iter_rows().enumerate() {
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "non-finite value in sample {}",
                    ids[row]
                )));
            }
        }
        Ok(Self {
            ids,
            data,
            normalized: false,
            index,
        })
    }

    /// Ids `0..N` in row order.
    pub fn with_sequential_ids(data: Matrix) -> Result<Self> {
        let ids = (0..data.rows() as u64).map(SampleId).collect();
        Self::new(ids, data)
    }

    /// Marks the set as normalized after checking every row norm.
    pub fn into_normalized(mut self) -> Result<Self> {
        for (row, r) in self.data.iter_rows().enumerate() {
            if (norm(r) - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Precondition(format!(
                    "sample {} is not unit-norm",
                    self.ids[row]
                )));
            }
        }
        self.normalized = true;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn position(&self, id: SampleId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn get(&self, id: SampleId) -> Option<&[f64]> {
        self.position(id).map(|i| self.data.row(i))
    }

    /// Subset in the order of `ids`.
    pub fn subset(&self, ids: &[SampleId]) -> Result<Self> {
        let rows = ids
            .iter()
            .map(|id| {
                self.position(*id)
                    .ok_or_else(|| Error::Data(format!("unknown sample id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Self::new(ids.to_vec(), self.data.select_rows(&rows))?;
        out.normalized = self.normalized;
        Ok(out)
    }

    pub fn into_parts(self) -> (Vec<SampleId>, Matrix) {
        (self.ids, self.data)
    }
}

/// Class labels for a subset of samples. Grows monotonically.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledSet {
    classes: usize,
    entries: BTreeMap<SampleId, usize>,
}

impl LabeledSet {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_pairs(
        classes: usize,
        pairs: impl IntoIterator<Item = (SampleId, usize)>,
    ) -> Result<Self> {
        let mut set = Self::new(classes);
        for (id, c) in pairs {
            set.insert(id, c)?;
        }
        Ok(set)
    }

    /// Adds a label. Relabeling an id with a different class is rejected.
    pub fn insert(&mut self, id: SampleId, class: usize) -> Result<()> {
        if class >= self.classes {
            return Err(Error::Data(format!(
                "class {class} out of range for {} classes (sample {id})",
                self.classes
            )));
        }
        match self.entries.get(&id) {
            Some(&old) if old != class => Err(Error::Data(format!(
                "sample {id} already labeled {old}, refusing {class}"
            ))),
            _ => {
                self.entries.insert(id, class);
                Ok(())
            }
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: SampleId) -> Option<usize> {
        self.entries.get(&id).copied()
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.entries.contains_key(&id)
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (SampleId, usize)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn ids(&self) -> BTreeSet<SampleId> {
        self.entries.keys().copied().collect()
    }
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows(e: &EmbeddingSet) -> Result<EmbeddingSet> {
    let mut data = e.data.clone();
    for (row, id) in e.ids.iter().enumerate() {
        let r = data.row_mut(row);
        let n = norm(r);
        if n == 0.0 {
            return Err(Error::degenerate(Some(*id), "zero row cannot be normalized"));
        }
        r.iter_mut().for_each(|v| *v /= n);
    }
    Ok(EmbeddingSet {
        ids: e.ids.clone(),
        data,
        normalized: true,
        index: e.index.clone(),
    })
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(format!(
            "cosine of vectors with dims {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (uu, vv) = (dot(u, u), dot(v, v));
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::degenerate(None, "cosine similarity of a zero vector"));
    }
    Ok((dot(u, v) / libm::sqrt(uu * vv)).clamp(-1.0, 1.0))
}

pub fn sq_euclidean(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape(format!(
            "distance between vectors with dims {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(sq_dist(u, v))
}

/// Unchecked squared distance for hot loops.
#[inline]
pub(crate) fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

/// Backpropagates through `y = u / |u|`: writes `(g - y (y.g)) / |u|`.
pub(crate) fn l2_normalize_backward(y: &[f64], u_norm: f64, g: &[f64], out: &mut [f64]) {
    let yg = dot(y, g);
    for ((o, yi), gi) in out.iter_mut().zip(y).zip(g) {
        *o = (gi - yi * yg) / u_norm;
    }
}

//! 2-D PCA projection for plotting embeddings.

use eigenloop_core::EmbeddingSet;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Principal axes of a point cloud, strongest first.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// One unit-norm axis per column.
    pub axes: DMatrix<f64>,
    pub variances: Vec<f64>,
}

impl Pca {
    /// Fits the top `components` axes. Each axis is signed so that its
    /// largest-magnitude loading is positive.
    pub fn fit(set: &EmbeddingSet, components: usize) -> Pca {
        let (n, d) = (set.len(), set.dim());
        let x = DMatrix::from_fn(n, d, |i, j| set.row(i)[j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let mut centered = x;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        let cov = centered.transpose() * &centered / (n.max(2) - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let k = components.min(d);
        let mut axes = DMatrix::zeros(d, k);
        let mut variances = Vec::with_capacity(k);
        for (c, &i) in order.iter().take(k).enumerate() {
            let mut v = eig.eigenvectors.column(i).into_owned();
            let lead = v.iter().enumerate().fold(0, |best, (j, x)| {
                if x.abs() > v[best].abs() { j } else { best }
            });
            if v[lead] < 0.0 {
                v = -v;
            }
            axes.set_column(c, &v);
            variances.push(eig.eigenvalues[i].max(0.0));
        }
        Pca { mean, axes, variances }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(row) - &self.mean;
        (self.axes.transpose() * x).iter().copied().collect()
    }
}

/// `(x, y)` coordinates of every row on the two leading principal axes.
/// A one-dimensional input projects to `y = 0`.
pub fn project_2d(set: &EmbeddingSet) -> Vec<(f64, f64)> {
    if set.is_empty() {
        return Vec::new();
    }
    let pca = Pca::fit(set, 2);
    (0..set.len())
        .map(|i| {
            let p = pca.transform_row(set.row(i));
            (p[0], p.get(1).copied().unwrap_or(0.0))
        })
        .collect()
}

use eigenloop_core::clustering::{ackmeans_from, bcubed_precision, AnchorSet, KMeansConfig};
use eigenloop_core::synth::{apply_shift, gen_mixture, BenchmarkSpec, DomainShift, MixtureSpec};
use eigenloop_core::{sq_euclidean, EmbeddingSet, Matrix, RngStream};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn mixture(seed: u64, dim: usize) -> MixtureSpec {
    MixtureSpec { classes: 3, per_class: 20, dim, center_scale: 3.0, noise_sigma: 0.5, seed }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rotation_is_proper_orthogonal(seed in any::<u64>(), dim in 2usize..12, angle in -7.0f64..7.0) {
        let shift = DomainShift::random(dim, angle, 1.0, 1.0, &RngStream::new(seed, "rot")).unwrap();
        let r = to_na(&shift.rotation_matrix());
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-9);
        let gram = r.transpose() * &r;
        prop_assert!((gram - DMatrix::identity(dim, dim)).abs().max() <= 1e-9);
    }

    #[test]
    fn shift_scales_pairwise_distances(seed in any::<u64>(), dim in 2usize..8, scale in 0.1f64..5.0, angle in 0.0f64..6.3) {
        let (x, _) = gen_mixture(&mixture(seed, dim)).unwrap();
        let shift = DomainShift::random(dim, angle, 2.0, scale, &RngStream::new(seed, "shift")).unwrap();
        let y = apply_shift(&x, &shift).unwrap();
        for i in (0..x.len()).step_by(7) {
            for j in (0..x.len()).step_by(5) {
                let before = sq_euclidean(x.row(i), x.row(j)).unwrap().sqrt();
                let after = sq_euclidean(y.row(i), y.row(j)).unwrap().sqrt();
                prop_assert!((after - scale * before).abs() <= 1e-9 * (1.0 + before));
            }
        }
    }

    #[test]
    fn isometry_preserves_consistent_clustering(seed in any::<u64>(), angle in 0.0f64..6.3) {
        let dim = 4;
        let (x, truth) = gen_mixture(&mixture(seed, dim)).unwrap();
        let shift = DomainShift::random(dim, angle, 1.5, 1.0, &RngStream::new(seed, "iso")).unwrap();
        let y = apply_shift(&x, &shift).unwrap();
        let init = x.data().select_rows(&[0, 25, 50]);
        let init_set = EmbeddingSet::with_sequential_ids(init.clone()).unwrap();
        let shifted_init = apply_shift(&init_set, &shift).unwrap().data().clone();
        let cfg = KMeansConfig::default();
        let a = ackmeans_from(&x, &AnchorSet::empty(dim), init, &cfg).unwrap();
        let b = ackmeans_from(&y, &AnchorSet::empty(dim), shifted_init, &cfg).unwrap();
        prop_assert_eq!(&a.assignment, &b.assignment);
        let pa = bcubed_precision(&a.assignment, x.ids(), &truth).unwrap();
        let pb = bcubed_precision(&b.assignment, y.ids(), &truth).unwrap();
        prop_assert_eq!(pa, pb);
    }
}

#[test]
fn vanishing_noise_collapses_onto_centers() {
    let spec = MixtureSpec { noise_sigma: 1e-9, ..mixture(5, 6) };
    let (x, truth) = gen_mixture(&spec).unwrap();
    for c in 0..3 {
        let rows: Vec<&[f64]> = x.ids().iter().enumerate().filter(|(_, id)| truth.get(**id) == Some(c)).map(|(i, _)| x.row(i)).collect();
        for r in &rows {
            assert!(sq_euclidean(r, rows[0]).unwrap().sqrt() < 1e-6);
        }
    }
}

#[test]
fn standard_benchmark_shape() {
    let b = BenchmarkSpec::standard(0).generate().unwrap();
    assert_eq!((b.source.len(), b.source.dim()), (2000, 16));
    assert_eq!(b.target.len(), 500);
    assert_eq!(b.test.len(), 500);
    assert_eq!(b.target_labels.classes(), 5);
    let again = BenchmarkSpec::standard(0).generate().unwrap();
    assert_eq!(b.target.data(), again.target.data());
}

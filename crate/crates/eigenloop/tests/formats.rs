use std::io::Cursor;

use eigenloop::formats::*;
use eigenloop::AppError;
use eigenloop_core::contrastive::EncoderMLP;
use eigenloop_core::transfer::{AnchorPolicy, LoopConfig, Oracle, ProgressiveLoop, Budget};
use eigenloop_core::synth::{nearest_mean_indicators, BenchmarkSpec};
use eigenloop_core::{normalize_rows, EmbeddingSet, LabeledSet, Matrix, RngStream, SampleId};
use proptest::prelude::*;

fn set(n: usize, d: usize, vals: &[f64]) -> EmbeddingSet {
    EmbeddingSet::with_sequential_ids(Matrix::from_vec(n, d, vals.to_vec()).unwrap()).unwrap()
}

fn emb_bytes(s: &EmbeddingSet) -> Vec<u8> {
    let mut buf = Vec::new();
    write_embeddings(&mut buf, s).unwrap();
    buf
}

#[test]
fn emb1_layout_is_little_endian_f32() {
    let s = set(1, 2, &[1.0, -2.5]);
    let b = emb_bytes(&s);
    assert_eq!(&b[..4], b"EMB1");
    assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
    assert_eq!(f32::from_le_bytes(b[16..20].try_into().unwrap()), 1.0);
    assert_eq!(f32::from_le_bytes(b[20..24].try_into().unwrap()), -2.5);
    assert_eq!(b.len(), 24);
}

#[test]
fn emb1_rejects_bad_magic_version_and_size() {
    let good = emb_bytes(&set(2, 2, &[0.0, 1.0, 2.0, 3.0]));
    let mut bad = good.clone();
    bad[0] = b'X';
    assert!(matches!(read_embeddings(Cursor::new(&bad)), Err(ReadError::Format(_))));
    let mut bad = good.clone();
    bad[4] = 9;
    assert!(matches!(read_embeddings(Cursor::new(&bad)), Err(ReadError::Format(_))));
    let short = &good[..good.len() - 1];
    assert!(matches!(read_embeddings(Cursor::new(short)), Err(ReadError::Format(_))));
    let mut long = good.clone();
    long.push(0);
    assert!(matches!(read_embeddings(Cursor::new(&long)), Err(ReadError::Format(_))));
    assert!(matches!(read_embeddings(Cursor::new(&good[..10])), Err(ReadError::Format(_))));
}

#[test]
fn emb1_rejects_non_finite_and_empty() {
    let mut b = emb_bytes(&set(1, 2, &[1.0, 2.0]));
    b[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
    assert!(matches!(read_embeddings(Cursor::new(&b)), Err(ReadError::Data(_))));
    let mut empty = b"EMB1".to_vec();
    for w in [1u32, 0, 4] {
        empty.extend(w.to_le_bytes());
    }
    assert!(matches!(read_embeddings(Cursor::new(&empty)), Err(ReadError::Data(_))));
    let huge = set(1, 1, &[1e300]);
    assert!(matches!(write_embeddings(Vec::new(), &huge), Err(WriteError::Data(_))));
}

#[test]
fn load_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.emb1");
    std::fs::write(&p, b"nope").unwrap();
    let e = load_embeddings(&p).unwrap_err();
    assert!(matches!(e, AppError::Format { .. }));
    assert_eq!(e.exit_code(), 3);
    let missing = load_embeddings(dir.path().join("missing.emb1")).unwrap_err();
    assert!(matches!(missing, AppError::Io { .. }));
}

#[test]
fn csv_import_keeps_ids() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.csv");
    std::fs::write(&p, "id,f0,f1\n7,1.5,2\n3,-1,0.25\n").unwrap();
    let s = import_csv(&p).unwrap();
    assert_eq!(s.ids(), &[SampleId(7), SampleId(3)]);
    assert_eq!(s.row(1), &[-1.0, 0.25]);
    std::fs::write(&p, "id,a,b\n1,2,3\n").unwrap();
    assert!(matches!(import_csv(&p), Err(AppError::Format { .. })));
    std::fs::write(&p, "id,f0\n1,zz\n").unwrap();
    assert!(matches!(import_csv(&p), Err(AppError::Format { .. })));
    std::fs::write(&p, "id,f0\n1,2\n1,3\n").unwrap();
    assert!(import_csv(&p).is_err());
}

#[test]
fn labels_round_trip_and_validation() {
    let l = LabeledSet::from_pairs(3, [(SampleId(4), 2), (SampleId(1), 0)]).unwrap();
    let text = write_labels(&l);
    assert_eq!(text, "1,0\n4,2\n");
    assert_eq!(parse_labels(&text, Some(3)).unwrap(), l);
    assert_eq!(parse_labels(&text, None).unwrap().classes(), 3);
    assert!(parse_labels("1,5\n", Some(3)).is_err());
    assert!(parse_labels("1;2\n", None).is_err());
    assert!(parse_labels("1,0\n1,1\n", None).is_err());
    assert_eq!(parse_labels("\n1,0\n\n", None).unwrap().len(), 1);
}

#[test]
fn encoder_checkpoint_round_trips_exactly() {
    let enc = EncoderMLP::new(&[5, 7, 3], &RngStream::new(3, "enc")).unwrap();
    let mut buf = Vec::new();
    write_encoder(&mut buf, &enc).unwrap();
    assert_eq!(&buf[..4], b"ENC1");
    assert_eq!(read_encoder(Cursor::new(&buf)).unwrap(), enc);
    let mut trailing = buf.clone();
    trailing.push(1);
    assert!(read_encoder(Cursor::new(&trailing)).is_err());
    assert!(read_encoder(Cursor::new(&buf[..buf.len() - 3])).is_err());
    let mut magic = buf;
    magic[1] = b'Z';
    assert!(read_encoder(Cursor::new(&magic)).is_err());
}

#[test]
fn tables_have_fixed_headers() {
    assert!(loss_csv(&[]).starts_with("epoch,loss,alignment,uniformity\n"));
    assert!(metrics_csv(&[]).starts_with("kappa,labels_spent,bcubed,top1,mean_per_class\n"));
}

#[test]
fn loop_state_round_trips_through_json() {
    let b = BenchmarkSpec::standard(1).generate().unwrap();
    let base = normalize_rows(&b.target).unwrap();
    let ind = nearest_mean_indicators(&base, &b.target_labels).unwrap();
    let cfg = LoopConfig {
        anchor_policy: AnchorPolicy::Recompute,
        seed: 1,
        ..LoopConfig::default()
    };
    let budget = Budget::uniform(1, 5, 1).unwrap();
    let mut lp = ProgressiveLoop::start(base.clone(), &ind, budget, cfg, None).unwrap();
    let first = lp.unanswered().next().unwrap().id;
    lp.answer(first, b.target_labels.get(first).unwrap()).unwrap();
    let snap = lp.snapshot();
    let text = snapshot_to_json(&snap);
    let back = snapshot_from_json(&text).unwrap();
    assert_eq!(back, snap);
    let mut resumed = ProgressiveLoop::resume(base, back, None).unwrap();
    resumed.drive(&Oracle::GroundTruth(b.target_labels.clone())).unwrap();
    lp.drive(&Oracle::GroundTruth(b.target_labels)).unwrap();
    assert_eq!(resumed.snapshot(), lp.snapshot());
    assert!(snapshot_from_json(&text.replace("eigenloop-loop-state", "other")).is_err());
}

proptest! {
    #[test]
    fn emb1_round_trips_f32_values(n in 1usize..6, d in 1usize..5, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..n * d).map(|_| f64::from(rng.random_range(-1e6f32..1e6))).collect();
        let s = set(n, d, &vals);
        let back = read_embeddings(Cursor::new(emb_bytes(&s))).unwrap();
        prop_assert_eq!(back.data().as_slice(), s.data().as_slice());
        prop_assert_eq!(back.ids(), s.ids());
    }

    #[test]
    fn labels_round_trip(pairs in proptest::collection::btree_map(0u64..1000, 0usize..7, 0..40)) {
        let l = LabeledSet::from_pairs(7, pairs.into_iter().map(|(i, c)| (SampleId(i), c))).unwrap();
        prop_assert_eq!(parse_labels(&write_labels(&l), Some(7)).unwrap(), l);
    }
}

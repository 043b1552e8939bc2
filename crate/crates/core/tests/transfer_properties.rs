use eigenloop_core::synth::{gen_mixture, nearest_mean_indicators, MixtureSpec};
use eigenloop_core::transfer::{
    draw_random_ids, random_baseline, Budget, DriveOutcome, Evaluator, LoopConfig, Oracle,
    ProgressiveLoop,
};
use eigenloop_core::{normalize_rows, EmbeddingSet, LabeledSet, RngStream, SampleId};
use std::collections::BTreeSet;

struct Fixture {
    pool: EmbeddingSet,
    truth: LabeledSet,
    eval: Evaluator,
    indicators: LabeledSet,
}

fn fixture(classes: usize, per_class: usize, seed: u64) -> Fixture {
    let spec = MixtureSpec { classes, per_class, dim: 8, center_scale: 3.0, noise_sigma: 0.8, seed };
    let (pool, truth) = gen_mixture(&spec).unwrap();
    let pool = normalize_rows(&pool).unwrap();
    let test_spec = MixtureSpec { per_class: 10, ..spec };
    let mixture = eigenloop_core::synth::Mixture::new(&test_spec).unwrap();
    let (test, test_truth) = mixture.sample(10, "test").unwrap();
    let test = normalize_rows(&test).unwrap();
    let indicators = nearest_mean_indicators(&pool, &truth).unwrap();
    Fixture {
        eval: Evaluator { test, test_truth, pool_truth: Some(truth.clone()) },
        pool,
        truth,
        indicators,
    }
}

fn quick_cfg(seed: u64) -> LoopConfig {
    let mut cfg = LoopConfig { seed, ..Default::default() };
    cfg.finetune.epochs = 10;
    cfg
}

#[test]
fn one_plus_nine_ledger() {
    let fx = fixture(10, 30, 3);
    let budget = Budget::uniform(1, 10, 9).unwrap();
    assert_eq!(budget.total_extra(), 90);
    let mut lp = ProgressiveLoop::start(fx.pool.clone(), &fx.indicators, budget, quick_cfg(3), None).unwrap();
    let mut picks_per_step = Vec::new();
    while !lp.is_finished() {
        picks_per_step.push(lp.pending().len());
        let open: Vec<SampleId> = lp.pending().iter().map(|q| q.id).collect();
        for id in open {
            lp.answer(id, fx.truth.get(id).unwrap()).unwrap();
        }
        lp.advance().unwrap();
        let st = lp.state();
        let anchors: BTreeSet<SampleId> = st.anchors.origin_ids().iter().copied().collect();
        assert_eq!(anchors, st.labeled.ids());
        for (i, id) in st.anchors.origin_ids().iter().enumerate() {
            assert_eq!(st.anchors.vectors().row(i), lp.current_features().get(*id).unwrap());
        }
    }
    let st = lp.state();
    assert_eq!(st.queried.len(), picks_per_step.iter().sum::<usize>());
    assert!(st.queried.len() <= 90);
    let unique: BTreeSet<SampleId> = st.queried.iter().copied().collect();
    assert_eq!(unique.len(), st.queried.len());
    assert!(st.queried.iter().all(|id| !fx.indicators.contains(*id)));
    let skipped = st.skipped.len();
    assert_eq!(st.queried.len() + skipped, 90);
    if skipped == 0 {
        assert_eq!(st.labeled.len(), 10 + 90);
    }
    assert_eq!(st.history.len(), 10);
}

#[test]
fn zero_evolutions_only_finetune_on_indicators() {
    let fx = fixture(3, 20, 4);
    let budget = Budget::uniform(1, 3, 0).unwrap();
    let lp = ProgressiveLoop::start(fx.pool.clone(), &fx.indicators, budget, quick_cfg(4), Some(fx.eval.clone())).unwrap();
    assert!(lp.is_finished());
    assert!(lp.state().queried.is_empty());
    assert_eq!(lp.state().history.len(), 1);
    let base = random_baseline(&fx.pool, &fx.indicators, 0, &Oracle::GroundTruth(fx.truth.clone()), &quick_cfg(4), Some(&fx.eval), false).unwrap();
    assert_eq!(&base.model, lp.model());
    assert_eq!(base.metrics, lp.state().history[0]);
}

#[test]
fn runs_are_deterministic() {
    let fx = fixture(4, 25, 5);
    let run = || {
        let mut lp = ProgressiveLoop::start(fx.pool.clone(), &fx.indicators, Budget::uniform(2, 4, 3).unwrap(), quick_cfg(5), Some(fx.eval.clone())).unwrap();
        assert_eq!(lp.drive(&Oracle::GroundTruth(fx.truth.clone())).unwrap(), DriveOutcome::Finished);
        lp.snapshot()
    };
    assert_eq!(run(), run());
}

#[test]
fn suspend_and_resume_matches_uninterrupted_run() {
    let fx = fixture(4, 25, 6);
    let budget = Budget::uniform(1, 4, 4).unwrap();
    let oracle = Oracle::GroundTruth(fx.truth.clone());
    let mut straight = ProgressiveLoop::start(fx.pool.clone(), &fx.indicators, budget.clone(), quick_cfg(6), Some(fx.eval.clone())).unwrap();
    straight.drive(&oracle).unwrap();

    let mut lp = ProgressiveLoop::start(fx.pool.clone(), &fx.indicators, budget, quick_cfg(6), Some(fx.eval.clone())).unwrap();
    assert_eq!(lp.drive(&Oracle::Interactive).unwrap(), DriveOutcome::Suspended);
    assert_eq!(lp.drive(&oracle).unwrap(), DriveOutcome::Finished);
    assert_eq!(lp.snapshot(), straight.snapshot());

    // interrupt part-way through the second evolution
    let mut lp = ProgressiveLoop::start(fx.pool.clone(), &fx.indicators, Budget::uniform(1, 4, 4).unwrap(), quick_cfg(6), Some(fx.eval.clone())).unwrap();
    let first: Vec<SampleId> = lp.pending().iter().map(|q| q.id).collect();
    for id in &first {
        lp.answer(*id, fx.truth.get(*id).unwrap()).unwrap();
    }
    lp.advance().unwrap();
    let half = lp.pending()[0].id;
    lp.answer(half, fx.truth.get(half).unwrap()).unwrap();
    let snap = lp.snapshot();
    drop(lp);
    let mut resumed = ProgressiveLoop::resume(fx.pool.clone(), snap, Some(fx.eval.clone())).unwrap();
    assert!(resumed.answer(half, 0).is_err());
    resumed.drive(&oracle).unwrap();
    assert_eq!(resumed.snapshot(), straight.snapshot());
}

#[test]
fn baseline_draws_are_seeded_and_disjoint_from_indicators() {
    let fx = fixture(3, 20, 7);
    let oracle = Oracle::GroundTruth(fx.truth.clone());
    let a = random_baseline(&fx.pool, &fx.indicators, 9, &oracle, &quick_cfg(7), None, false).unwrap();
    let b = random_baseline(&fx.pool, &fx.indicators, 9, &oracle, &quick_cfg(7), None, false).unwrap();
    assert_eq!(a.drawn, b.drawn);
    assert!(a.drawn.iter().all(|id| !fx.indicators.contains(*id)));
    assert_eq!(a.labeled.len(), 12);
    let s = random_baseline(&fx.pool, &fx.indicators, 9, &oracle, &quick_cfg(7), None, true).unwrap();
    let mut per_class = [0usize; 3];
    for id in &s.drawn {
        per_class[fx.truth.get(*id).unwrap()] += 1;
    }
    assert_eq!(per_class, [3, 3, 3]);
    let too_many = random_baseline(&fx.pool, &fx.indicators, 58, &oracle, &quick_cfg(7), None, false);
    assert!(matches!(too_many, Err(eigenloop_core::Error::Config { .. })));
}

#[test]
fn single_draw_is_uniform() {
    let pool: Vec<SampleId> = (0..4).map(SampleId).collect();
    let draws = 10_000;
    let mut counts = [0usize; 4];
    for i in 0..draws {
        let id = draw_random_ids(&pool, 1, &RngStream::new(i, "uniform")).unwrap()[0];
        counts[id.0 as usize] += 1;
    }
    let p = 0.25;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sd, "{counts:?}");
    }
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - 2500.0).powi(2) / 2500.0).sum();
    // 3 degrees of freedom, 99.9th percentile
    assert!(chi2 < 16.27, "chi2 {chi2}");
}

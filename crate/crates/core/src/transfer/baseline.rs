//! Random-selection baseline under the same total budget as the loop.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;

use crate::embedding::{EmbeddingSet, LabeledSet, SampleId};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::transfer::adapter::AdapterModel;
use crate::transfer::finetune::reembed;
use crate::transfer::progressive::{
    finetune_step, initial_model, measure, validate_indicators, Evaluator, LoopConfig, MetricsRow,
    Oracle,
};

#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub model: AdapterModel,
    pub labeled: LabeledSet,
    /// Extra ids in draw order.
    pub drawn: Vec<SampleId>,
    pub metrics: MetricsRow,
}

/// `count` ids drawn uniformly without replacement from `pool`.
pub fn draw_random_ids(pool: &[SampleId], count: usize, stream: &RngStream) -> Result<Vec<SampleId>> {
    if count > pool.len() {
        return Err(Error::config(
            "transfer.total_extra",
            format!("cannot draw {count} from an unlabeled pool of {}", pool.len()),
        ));
    }
    let mut rng = stream.rng();
    Ok(index::sample(&mut rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

/// Draws `total_extra` unlabeled ids, labels them all at once and finetunes
/// once from the same initialization the loop uses. With `stratified`, the
/// draw is split as evenly as possible across the oracle's classes.
pub fn random_baseline(
    base: &EmbeddingSet,
    indicators: &LabeledSet,
    total_extra: usize,
    oracle: &Oracle,
    cfg: &LoopConfig,
    eval: Option<&Evaluator>,
    stratified: bool,
) -> Result<BaselineOutcome> {
    let classes = indicators.classes();
    validate_indicators(base, indicators, classes)?;
    let pool: Vec<SampleId> = base
        .ids()
        .iter()
        .copied()
        .filter(|id| !indicators.contains(*id))
        .collect();
    let stream = RngStream::new(cfg.seed, "baseline/draw");
    let drawn = if stratified {
        draw_stratified(&pool, total_extra, classes, oracle, &stream)?
    } else {
        draw_random_ids(&pool, total_extra, &stream)?
    };
    let mut labeled = indicators.clone();
    for &id in &drawn {
        let class = oracle
            .label(id)?
            .ok_or_else(|| Error::Precondition("the random baseline needs a ground-truth oracle".into()))?;
        labeled.insert(id, class)?;
    }
    let model = initial_model(base.dim(), classes, cfg)?;
    let model = finetune_step(&model, base, &labeled, cfg, 0)?;
    let current = reembed(&model, base)?;
    let metrics = measure(&model, &current, eval, cfg, 0, drawn.len())?;
    Ok(BaselineOutcome {
        model,
        labeled,
        drawn,
        metrics,
    })
}

fn draw_stratified(
    pool: &[SampleId],
    total: usize,
    classes: usize,
    oracle: &Oracle,
    stream: &RngStream,
) -> Result<Vec<SampleId>> {
    if total > pool.len() {
        return Err(Error::config(
            "transfer.total_extra",
            format!("cannot draw {total} from an unlabeled pool of {}", pool.len()),
        ));
    }
    let mut by_class: BTreeMap<usize, Vec<SampleId>> = BTreeMap::new();
    for &id in pool {
        let c = oracle
            .label(id)?
            .ok_or_else(|| Error::Precondition("stratified draws need a ground-truth oracle".into()))?;
        by_class.entry(c).or_default().push(id);
    }
    // round-robin quotas, skipping classes whose pool runs dry
    let mut quota = alloc::vec![0usize; classes];
    let mut left = total;
    while left > 0 {
        let mut progressed = false;
        for c in 0..classes {
            if left == 0 {
                break;
            }
            let avail = by_class.get(&c).map_or(0, Vec::len);
            if quota[c] < avail {
                quota[c] += 1;
                left -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let mut out = Vec::with_capacity(total);
    for (c, ids) in &by_class {
        if *c < classes {
            out.extend(draw_random_ids(ids, quota[*c], &stream.derive_indexed("class", *c as u64))?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draw_is_deterministic_and_distinct() {
        let pool: Vec<SampleId> = (0..50).map(SampleId).collect();
        let s = RngStream::new(3, "t");
        let a = draw_random_ids(&pool, 20, &s).unwrap();
        assert_eq!(a, draw_random_ids(&pool, 20, &s).unwrap());
        let mut sorted = a.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
    }

    #[test]
    fn overdraw_is_config_error() {
        let pool: Vec<SampleId> = (0..3).map(SampleId).collect();
        assert!(matches!(
            draw_random_ids(&pool, 4, &RngStream::new(0, "t")),
            Err(Error::Config { .. })
        ));
    }
}

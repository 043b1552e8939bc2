//! Supervised finetuning of the adapter and head, and re-embedding through it.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::embedding::{EmbeddingSet, LabeledSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Momentum;
use crate::rng::RngStream;
use crate::transfer::adapter::{cross_entropy_grad, AdapterModel};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr_head: f64,
    pub lr_adapter: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            lr_head: 0.1,
            lr_adapter: 1e-3,
            momentum: 0.9,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_head >= 0.0 && self.lr_adapter >= 0.0) {
            return Err(Error::config("transfer.finetune.lr_head", "learning rates must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("transfer.finetune.momentum", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("transfer.finetune.batch_size", "must be positive"));
        }
        Ok(())
    }
}

/// SGD with momentum on softmax cross-entropy over the labeled samples. The
/// head and the adapter step at separate learning rates; no weight decay.
pub fn finetune(
    model: &AdapterModel,
    features: &EmbeddingSet,
    labels: &LabeledSet,
    cfg: &FinetuneConfig,
) -> Result<AdapterModel> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::Contract("finetuning needs at least one label".into()));
    }
    if labels.classes() != model.classes() {
        return Err(Error::shape(format!(
            "labels span {} classes, head has {}",
            labels.classes(),
            model.classes()
        )));
    }
    let mut examples: Vec<(&[f64], usize)> = labels
        .iter()
        .map(|(id, c)| {
            features
                .get(id)
                .map(|x| (x, c))
                .ok_or_else(|| Error::Data(format!("labeled sample {id} has no features")))
        })
        .collect::<Result<_>>()?;
    let mut model = model.clone();
    let mut rng = RngStream::new(cfg.seed, "finetune/order").rng();
    let mut head_opt = Momentum::new(cfg.momentum);
    let mut adapter_opt = Momentum::new(cfg.momentum);
    for epoch in 0..cfg.epochs {
        examples.shuffle(&mut rng);
        for batch in examples.chunks(cfg.batch_size) {
            let (loss, grads) = cross_entropy_grad(&model, batch)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch: epoch + 1,
                    message: "cross-entropy is not finite".into(),
                });
            }
            head_opt.step(cfg.lr_head, &mut model.head_tensors_mut(), &grads.head_tensors());
            adapter_opt.step(
                cfg.lr_adapter,
                &mut model.adapter_tensors_mut(),
                &grads.adapter_tensors(),
            );
        }
        if !model.is_finite() {
            return Err(Error::Training {
                epoch: epoch + 1,
                message: "parameters became non-finite".into(),
            });
        }
    }
    Ok(model)
}

/// Normalized adapter features of every row, ids preserved.
pub fn reembed(model: &AdapterModel, base: &EmbeddingSet) -> Result<EmbeddingSet> {
    if base.dim() != model.input_dim() {
        return Err(Error::shape(format!(
            "adapter expects width {}, features have {}",
            model.input_dim(),
            base.dim()
        )));
    }
    let mut data = Matrix::zeros(base.len(), model.out_dim());
    for i in 0..base.len() {
        data.row_mut(i).copy_from_slice(&model.trace(base.row(i)).feature);
    }
    EmbeddingSet::new(base.ids().to_vec(), data)?.into_normalized()
}

/// Training-set accuracy, for diagnostics.
pub fn training_accuracy(model: &AdapterModel, features: &EmbeddingSet, labels: &LabeledSet) -> f64 {
    let hits = labels
        .iter()
        .filter(|(id, c)| features.get(*id).is_some_and(|x| model.predict(x) == *c))
        .count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{normalize_rows, SampleId};
    use crate::transfer::adapter::AdapterConfig;

    fn toy() -> (EmbeddingSet, LabeledSet) {
        let f = EmbeddingSet::with_sequential_ids(
            Matrix::from_rows(&[[1.0, 0.2, 0.0], [-0.9, 0.1, 0.3]]).unwrap(),
        )
        .unwrap();
        let f = normalize_rows(&f).unwrap();
        let l = LabeledSet::from_pairs(2, [(SampleId(0), 0), (SampleId(1), 1)]).unwrap();
        (f, l)
    }

    fn model() -> AdapterModel {
        AdapterModel::new(3, 2, &AdapterConfig::default(), &RngStream::new(1, "ft")).unwrap()
    }

    #[test]
    fn zero_learning_rates_change_nothing() {
        let (f, l) = toy();
        let cfg = FinetuneConfig {
            lr_head: 0.0,
            lr_adapter: 0.0,
            ..FinetuneConfig::default()
        };
        let m = model();
        assert_eq!(finetune(&m, &f, &l, &cfg).unwrap(), m);
    }

    #[test]
    fn separable_pair_is_fit_within_sixty_epochs() {
        let (f, l) = toy();
        let out = finetune(&model(), &f, &l, &FinetuneConfig::default()).unwrap();
        assert_eq!(training_accuracy(&out, &f, &l), 1.0);
    }

    #[test]
    fn empty_labels_and_unknown_ids_rejected() {
        let (f, _) = toy();
        let cfg = FinetuneConfig::default();
        assert!(matches!(
            finetune(&model(), &f, &LabeledSet::new(2), &cfg),
            Err(Error::Contract(_))
        ));
        let stray = LabeledSet::from_pairs(2, [(SampleId(9), 0)]).unwrap();
        assert!(matches!(finetune(&model(), &f, &stray, &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn reembed_untrained_is_normalized_identity() {
        let base = EmbeddingSet::new(
            alloc::vec![SampleId(5), SampleId(2)],
            Matrix::from_rows(&[[2.0, 0.0, 0.0], [1.0, -1.0, 1.0]]).unwrap(),
        )
        .unwrap();
        let out = reembed(&model(), &base).unwrap();
        assert_eq!(out.ids(), base.ids());
        let expected = normalize_rows(&base).unwrap();
        for (a, b) in out.data().as_slice().iter().zip(expected.data().as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(reembed(&model(), &EmbeddingSet::with_sequential_ids(Matrix::zeros(1, 2)).unwrap()).is_err());
    }
}

//! Contrastive pretraining loop.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::contrastive::encoder::{encoder_backward, encoder_forward, EncoderMLP};
use crate::contrastive::loss::{loss_and_grad, LossTerms, Temperature};
use crate::contrastive::sampler::{mixing_sampler, MixConfig, PretrainMode, SampleRef};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{cosine_lr, Momentum};
use crate::rng::RngStream;

/// Vector-space view generator: `x -> s x + noise`, `s ~ U[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AugmentationConfig {
    pub noise_sigma: f64,
    pub scale_lo: f64,
    pub scale_hi: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 1.0,
            scale_lo: 0.8,
            scale_hi: 1.2,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("augmentation.noise_sigma", "must be non-negative"));
        }
        if !(self.scale_lo > 0.0 && self.scale_lo <= self.scale_hi && self.scale_hi.is_finite()) {
            return Err(Error::config(
                "augmentation.scale_lo",
                "scale jitter needs 0 < lo <= hi",
            ));
        }
        Ok(())
    }

    fn view<R: Rng>(&self, x: &[f64], out: &mut [f64], rng: &mut R) {
        let s = if self.scale_lo == self.scale_hi {
            self.scale_lo
        } else {
            rng.random_range(self.scale_lo..=self.scale_hi)
        };
        let noise = Normal::new(0.0, self.noise_sigma).expect("validated sigma");
        for (o, xi) in out.iter_mut().zip(x) {
            *o = s * xi;
            if self.noise_sigma > 0.0 {
                *o += noise.sample(rng);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PretrainConfig {
    pub epochs: usize,
    /// Samples per batch; each contributes two views.
    pub batch_pairs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub tau: Temperature,
    pub augmentation: AugmentationConfig,
    pub mix: MixConfig,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// Learning-rate multiplier for target-only finetuning.
    pub uf_lr_factor: f64,
    pub cosine_schedule: bool,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_pairs: 64,
            lr: 0.05,
            momentum: 0.9,
            tau: Temperature::new(0.2).expect("positive"),
            augmentation: AugmentationConfig::default(),
            mix: MixConfig::default(),
            hidden: alloc::vec![64],
            output_dim: 8,
            uf_lr_factor: 0.1,
            cosine_schedule: true,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_pairs < 2 {
            return Err(Error::config("pretrain.batch_pairs", "need at least 2 pairs"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("pretrain.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("pretrain.momentum", "must lie in [0, 1)"));
        }
        if !(self.uf_lr_factor > 0.0) {
            return Err(Error::config("pretrain.uf_lr_factor", "must be positive"));
        }
        if self.output_dim == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("pretrain.hidden", "layer widths must be positive"));
        }
        self.augmentation.validate()?;
        self.mix.validate()
    }

    pub fn widths(&self, input: usize) -> Vec<usize> {
        let mut w = alloc::vec![input];
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    /// Fresh encoder for the given input width.
    pub fn init_encoder(&self, input: usize) -> Result<EncoderMLP> {
        EncoderMLP::new(&self.widths(input), &RngStream::new(self.seed, "pretrain/init"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub terms: LossTerms,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub encoder: EncoderMLP,
    pub history: Vec<EpochRecord>,
}

/// Trains an encoder contrastively on the datasets selected by `cfg.mix.mode`.
///
/// VUP and TUP start from `init` when given, otherwise from a fresh encoder;
/// UF requires `init` and trains on the target at `lr * uf_lr_factor`.
pub fn pretrain(
    source: Option<&EmbeddingSet>,
    target: Option<&EmbeddingSet>,
    init: Option<EncoderMLP>,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let mode = cfg.mix.mode;
    let need = |set, what| require(set, mode, what);
    let (source, target) = match mode {
        PretrainMode::Vup => (Some(need(source, "source")?), None),
        PretrainMode::Tup => (Some(need(source, "source")?), Some(need(target, "target")?)),
        PretrainMode::Uf => (None, Some(need(target, "target")?)),
    };
    let dim = source.or(target).map(EmbeddingSet::dim).unwrap_or(0);
    if let (Some(s), Some(t)) = (source, target) {
        if s.dim() != t.dim() {
            return Err(Error::shape("source and target widths differ"));
        }
    }
    let (mut encoder, lr) = match (mode, init) {
        (PretrainMode::Uf, Some(e)) => (e, cfg.lr * cfg.uf_lr_factor),
        (PretrainMode::Uf, None) => {
            return Err(Error::config(
                "pretrain.mode",
                "UF continues from an existing encoder; none was provided",
            ))
        }
        (_, Some(e)) => (e, cfg.lr),
        (_, None) => (cfg.init_encoder(dim)?, cfg.lr),
    };
    if encoder.input_dim() != dim {
        return Err(Error::shape(format!(
            "encoder expects width {}, data has {dim}",
            encoder.input_dim()
        )));
    }

    let stream = RngStream::new(cfg.seed, format!("pretrain/{}", mode.name()));
    let mut sampler = mixing_sampler(
        source.map_or(0, EmbeddingSet::len),
        target.map_or(0, EmbeddingSet::len),
        cfg.mix,
        &stream.derive("sampler"),
    )?;
    let mut aug_rng = stream.derive("augment").rng();
    let mut opt = Momentum::new(cfg.momentum);
    let steps_per_epoch = sampler.epoch_len().div_ceil(cfg.batch_pairs);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut step = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    let row_of = |r: SampleRef| -> &[f64] {
        match r {
            SampleRef::Source(i) => source.expect("source present").row(i),
            SampleRef::Target(i) => target.expect("target present").row(i),
        }
    };

    for epoch in 0..cfg.epochs {
        let order = sampler.next_epoch();
        let mut sum = LossTerms::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_pairs) {
            let lr_now = if cfg.cosine_schedule {
                cosine_lr(lr, step, total_steps)
            } else {
                lr
            };
            step += 1;
            if chunk.len() < 2 {
                continue;
            }
            let mut views = Matrix::zeros(2 * chunk.len(), dim);
            for (k, r) in chunk.iter().enumerate() {
                let x = row_of(*r);
                cfg.augmentation.view(x, views.row_mut(2 * k), &mut aug_rng);
                cfg.augmentation.view(x, views.row_mut(2 * k + 1), &mut aug_rng);
            }
            let (z, cache) = encoder_forward(&encoder, &views)?;
            let (terms, grad) = loss_and_grad(&z, cfg.tau)?;
            if !terms.loss.is_finite() {
                return Err(Error::Training {
                    epoch: epoch + 1,
                    message: "loss is not finite".into(),
                });
            }
            let grads = encoder_backward(&encoder, &cache, &grad)?;
            encoder.apply(&mut opt, lr_now, &grads);
            sum.loss += terms.loss;
            sum.alignment += terms.alignment;
            sum.uniformity += terms.uniformity;
            batches += 1;
        }
        if !encoder.is_finite() {
            return Err(Error::Training {
                epoch: epoch + 1,
                message: "parameters became non-finite".into(),
            });
        }
        let b = batches.max(1) as f64;
        history.push(EpochRecord {
            epoch: epoch + 1,
            terms: LossTerms {
                loss: sum.loss / b,
                alignment: sum.alignment / b,
                uniformity: sum.uniformity / b,
            },
        });
    }
    Ok(PretrainOutcome { encoder, history })
}

fn require<'a>(
    set: Option<&'a EmbeddingSet>,
    mode: PretrainMode,
    what: &str,
) -> Result<&'a EmbeddingSet> {
    set.filter(|s| !s.is_empty()).ok_or_else(|| {
        Error::Data(format!("{} mode requires a non-empty {what} set", mode.name()))
    })
}

/// Normalized encoder features for a whole set, ids preserved.
pub fn encode(encoder: &EncoderMLP, set: &EmbeddingSet) -> Result<EmbeddingSet> {
    let z = encoder.embed(set.data())?;
    EmbeddingSet::new(set.ids().to_vec(), z)?.into_normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_mixture, MixtureSpec};

    fn data() -> EmbeddingSet {
        gen_mixture(&MixtureSpec {
            classes: 3,
            per_class: 20,
            dim: 4,
            center_scale: 2.0,
            noise_sigma: 0.3,
            seed: 5,
        })
        .unwrap()
        .0
    }

    fn small_cfg(mode: PretrainMode) -> PretrainConfig {
        PretrainConfig {
            epochs: 3,
            batch_pairs: 8,
            hidden: alloc::vec![8],
            output_dim: 4,
            mix: MixConfig {
                mode,
                ..MixConfig::default()
            },
            ..PretrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_encoder() {
        let d = data();
        let cfg = PretrainConfig {
            epochs: 0,
            ..small_cfg(PretrainMode::Vup)
        };
        let out = pretrain(Some(&d), None, None, &cfg).unwrap();
        assert_eq!(out.encoder, cfg.init_encoder(4).unwrap());
        assert!(out.history.is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let d = data();
        let cfg = small_cfg(PretrainMode::Tup);
        let a = pretrain(Some(&d), Some(&d), None, &cfg).unwrap();
        let b = pretrain(Some(&d), Some(&d), None, &cfg).unwrap();
        assert_eq!(a.encoder.params(), b.encoder.params());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn history_terms_sum_to_loss() {
        let d = data();
        let out = pretrain(Some(&d), None, None, &small_cfg(PretrainMode::Vup)).unwrap();
        assert_eq!(out.history.len(), 3);
        for r in &out.history {
            let t = r.terms;
            assert!((t.loss - (t.alignment + t.uniformity)).abs() <= 1e-9 * t.loss.abs().max(1.0));
        }
    }

    #[test]
    fn uf_requires_initial_encoder() {
        let d = data();
        let cfg = small_cfg(PretrainMode::Uf);
        assert!(matches!(
            pretrain(None, Some(&d), None, &cfg),
            Err(Error::Config { .. })
        ));
        let init = cfg.init_encoder(4).unwrap();
        assert!(pretrain(None, Some(&d), Some(init), &cfg).is_ok());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let d = data();
        let cfg = PretrainConfig {
            lr: 1e300,
            cosine_schedule: false,
            ..small_cfg(PretrainMode::Vup)
        };
        match pretrain(Some(&d), None, None, &cfg) {
            Err(Error::Training { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}

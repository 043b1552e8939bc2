//! Contrastive pretraining: loss, encoder, epoch sampler and training loop.

pub mod encoder;
pub mod loss;
pub mod pretrain;
pub mod sampler;

pub use encoder::{encoder_backward, encoder_forward, EncoderCache, EncoderGrads, EncoderMLP};
pub use loss::{info_nce_loss, loss_and_grad, loss_decomposition, loss_terms, LossTerms, Temperature};
pub use pretrain::{encode, pretrain, AugmentationConfig, EpochRecord, PretrainConfig, PretrainOutcome};
pub use sampler::{mixing_sampler, MixConfig, MixingSampler, PretrainMode, SampleRef};

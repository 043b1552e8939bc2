//! Epoch composition for vanilla, target-aware and target-only pretraining.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Which datasets feed pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PretrainMode {
    /// Source only.
    #[cfg_attr(feature = "serde", serde(rename = "VUP"))]
    Vup,
    /// Source plus re-balanced target.
    #[cfg_attr(feature = "serde", serde(rename = "TUP"))]
    Tup,
    /// Target only, continuing from an existing encoder.
    #[cfg_attr(feature = "serde", serde(rename = "UF"))]
    Uf,
}

impl PretrainMode {
    pub fn name(self) -> &'static str {
        match self {
            PretrainMode::Vup => "VUP",
            PretrainMode::Tup => "TUP",
            PretrainMode::Uf => "UF",
        }
    }
}

impl core::str::FromStr for PretrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "VUP" => Ok(Self::Vup),
            "TUP" => Ok(Self::Tup),
            "UF" => Ok(Self::Uf),
            _ => Err(Error::config("mode", alloc::format!("unknown pretraining mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MixConfig {
    /// Target draws per epoch as a fraction of `|S|`. Zero means the target
    /// set is included once, without re-balancing.
    pub p: f64,
    pub mode: PretrainMode,
    pub with_replacement: bool,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            p: 0.2,
            mode: PretrainMode::Tup,
            with_replacement: true,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::config("p", "re-balance ratio must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Number of target draws in a TUP epoch: `ceil(p |S|)`, or `|T|` when `p = 0`.
    pub fn target_draws(&self, source_len: usize, target_len: usize) -> usize {
        if self.p == 0.0 {
            target_len
        } else {
            libm::ceil(self.p * source_len as f64) as usize
        }
    }
}

/// One element of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SampleRef {
    Source(usize),
    Target(usize),
}

/// Produces shuffled epochs over row indices of the source and target sets.
#[derive(Debug, Clone)]
pub struct MixingSampler {
    source_len: usize,
    target_len: usize,
    cfg: MixConfig,
    rng: ChaCha8Rng,
}

pub fn mixing_sampler(
    source_len: usize,
    target_len: usize,
    cfg: MixConfig,
    stream: &RngStream,
) -> Result<MixingSampler> {
    cfg.validate()?;
    match cfg.mode {
        PretrainMode::Vup | PretrainMode::Tup if source_len == 0 => {
            return Err(Error::Data("source set is empty".into()))
        }
        _ => {}
    }
    match cfg.mode {
        PretrainMode::Tup | PretrainMode::Uf if target_len == 0 => {
            return Err(Error::Data("target set is empty".into()))
        }
        _ => {}
    }
    Ok(MixingSampler {
        source_len,
        target_len,
        cfg,
        rng: stream.rng(),
    })
}

impl MixingSampler {
    pub fn epoch_len(&self) -> usize {
        match self.cfg.mode {
            PretrainMode::Vup => self.source_len,
            PretrainMode::Uf => self.target_len,
            PretrainMode::Tup => {
                self.source_len + self.cfg.target_draws(self.source_len, self.target_len)
            }
        }
    }

    pub fn next_epoch(&mut self) -> Vec<SampleRef> {
        let mut epoch: Vec<SampleRef> = Vec::with_capacity(self.epoch_len());
        match self.cfg.mode {
            PretrainMode::Vup => epoch.extend((0..self.source_len).map(SampleRef::Source)),
            PretrainMode::Uf => epoch.extend((0..self.target_len).map(SampleRef::Target)),
            PretrainMode::Tup => {
                epoch.extend((0..self.source_len).map(SampleRef::Source));
                let draws = self.cfg.target_draws(self.source_len, self.target_len);
                if self.cfg.p == 0.0 {
                    epoch.extend((0..self.target_len).map(SampleRef::Target));
                } else if self.cfg.with_replacement {
                    for _ in 0..draws {
                        let t = self.rng.random_range(0..self.target_len);
                        epoch.push(SampleRef::Target(t));
                    }
                } else {
                    // concatenated permutations of the target set
                    let mut pool: Vec<usize> = Vec::new();
                    while epoch.len() < self.source_len + draws {
                        if pool.is_empty() {
                            pool = (0..self.target_len).collect();
                            pool.shuffle(&mut self.rng);
                        }
                        epoch.push(SampleRef::Target(pool.pop().expect("non-empty pool")));
                    }
                }
            }
        }
        epoch.shuffle(&mut self.rng);
        epoch
    }
}

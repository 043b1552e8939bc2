//! Annotation budget for the "1 + ε" setting.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Per-evolution labels-per-class schedule. Evolution `κ` (1-based) asks for
/// `K_κ = b_κ × C` eigen-samples; the total extra spend is `Σ K_κ = ε × C`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Budget {
    classes: usize,
    schedule: Vec<usize>,
}

impl Budget {
    /// `b` labels per class in each of `kappa_max` evolutions.
    pub fn uniform(b: usize, classes: usize, kappa_max: usize) -> Result<Self> {
        Self::from_schedule(classes, alloc::vec![b; kappa_max])
    }

    pub fn from_schedule(classes: usize, schedule: Vec<usize>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::config("transfer.classes", "must be positive"));
        }
        if schedule.iter().any(|&b| b == 0) {
            return Err(Error::config("transfer.b", "labels per class must be positive"));
        }
        Ok(Self { classes, schedule })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn schedule(&self) -> &[usize] {
        &self.schedule
    }

    pub fn kappa_max(&self) -> usize {
        self.schedule.len()
    }

    /// `K` for evolution `kappa` (1-based).
    pub fn k_at(&self, kappa: usize) -> Option<usize> {
        kappa
            .checked_sub(1)
            .and_then(|i| self.schedule.get(i))
            .map(|b| b * self.classes)
    }

    /// `Σ_κ K_κ`
    pub fn total_extra(&self) -> usize {
        self.schedule.iter().sum::<usize>() * self.classes
    }

    /// Average extra labels per class.
    pub fn epsilon(&self) -> f64 {
        self.schedule.iter().sum::<usize>() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_plus_nine_over_ten_classes() {
        let b = Budget::uniform(1, 10, 9).unwrap();
        assert_eq!(b.k_at(1), Some(10));
        assert_eq!(b.k_at(10), None);
        assert_eq!(b.k_at(0), None);
        assert_eq!(b.total_extra(), 90);
        assert_eq!(b.epsilon(), 9.0);
        assert_eq!(b.epsilon() * 10.0, (10 * 9) as f64);
    }

    #[test]
    fn coarse_schedules_share_the_total() {
        let c = 5;
        let totals: Vec<usize> = [alloc::vec![1; 9], alloc::vec![3, 3, 3], alloc::vec![4, 5]]
            .into_iter()
            .map(|s| Budget::from_schedule(c, s).unwrap().total_extra())
            .collect();
        assert_eq!(totals, alloc::vec![45, 45, 45]);
    }

    #[test]
    fn zero_b_rejected() {
        assert!(Budget::from_schedule(3, alloc::vec![1, 0]).is_err());
        assert!(Budget::uniform(1, 0, 2).is_err());
        assert_eq!(Budget::uniform(2, 3, 0).unwrap().total_extra(), 0);
    }
}

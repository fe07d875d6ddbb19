use serde::{Deserialize, Serialize};

/// Reduce-on-plateau over a loss that should decrease.
///
/// An epoch improves when the loss drops below `best - threshold`. After
/// `patience` consecutive non-improving epochs the rate is multiplied by
/// `factor` and the counter restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub patience: usize,
    pub factor: f64,
    pub threshold: f64,
    best: f64,
    wait: usize,
    reductions: usize,
}

impl PlateauSchedule {
    pub fn new(patience: usize, factor: f64, threshold: f64) -> Self {
        Self {
            patience,
            factor,
            threshold,
            best: f64::INFINITY,
            wait: 0,
            reductions: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn reductions(&self) -> usize {
        self.reductions
    }

    /// Feeds one epoch's metric; returns `true` if `lr` was reduced.
    pub fn observe(&mut self, metric: f64, lr: &mut f64) -> bool {
        if metric < self.best - self.threshold {
            self.best = metric;
            self.wait = 0;
            return false;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            *lr *= self.factor;
            self.wait = 0;
            self.reductions += 1;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reduces_after_patience_flat_epochs() {
        let mut s = PlateauSchedule::new(3, 0.1, 1e-6);
        let mut lr = 0.01;
        assert!(!s.observe(1.0, &mut lr));
        assert!(!s.observe(1.0, &mut lr));
        assert!(!s.observe(1.0 - 1e-7, &mut lr));
        assert!(s.observe(1.0, &mut lr));
        assert!((lr - 0.001).abs() < 1e-18);
        assert!(!s.observe(0.5, &mut lr));
        assert_eq!(s.best(), 0.5);
        assert_eq!(s.reductions(), 1);
    }

    #[test]
    fn steady_improvement_never_reduces() {
        let mut s = PlateauSchedule::new(1, 0.1, 1e-6);
        let mut lr = 0.01;
        for k in 0..100 {
            assert!(!s.observe(10.0 - k as f64 * 0.01, &mut lr));
        }
        assert_eq!(lr, 0.01);
    }

    proptest! {
        #[test]
        fn lr_is_geometric_and_non_increasing(losses in prop::collection::vec(0.0f64..2.0, 1..300), patience in 1usize..50) {
            let mut s = PlateauSchedule::new(patience, 0.1, 1e-6);
            let mut lr = 0.01;
            let mut prev = lr;
            for &l in &losses {
                s.observe(l, &mut lr);
                prop_assert!(lr <= prev);
                prev = lr;
            }
            let expected = 0.01 * 0.1f64.powi(s.reductions() as i32);
            prop_assert!((lr - expected).abs() <= 1e-12 * expected);
            prop_assert!(s.reductions() * patience <= losses.len());
        }
    }
}

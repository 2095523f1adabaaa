/// Patience-based early stopping on a loss that should decrease.
///
/// The evaluation before any training counts as epoch 0. Only a strictly lower
/// loss resets the patience counter.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, initial_loss: f64) -> Self {
        EarlyStopping { patience, best: initial_loss, best_epoch: 0, stale: 0 }
    }

    /// Records the loss after `epoch`; returns true when it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best || self.best.is_nan() {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_loss_stops_after_patience() {
        let mut es = EarlyStopping::new(10, 1.0);
        let mut stopped = None;
        for epoch in 1..=100 {
            es.observe(epoch, 1.0);
            if es.should_stop() {
                stopped = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped, Some(10));
        assert_eq!(es.best_epoch(), 0);
    }

    #[test]
    fn improvement_resets_patience() {
        let mut es = EarlyStopping::new(2, 1.0);
        assert!(!es.observe(1, 1.5));
        assert!(es.observe(2, 0.5));
        assert!(!es.observe(3, 0.5));
        assert!(!es.should_stop());
        es.observe(4, 0.7);
        assert!(es.should_stop());
        assert_eq!(es.best(), 0.5);
    }
}

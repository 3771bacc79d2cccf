//! Plateau learning-rate decay and early stopping, both driven by the
//! validation BLEU-4 stream.
//!
//! Both counters treat the first observation as the start of a
//! non-improvement streak (a score cannot improve on itself), so a fully
//! flat history of length `patience` triggers after exactly `patience`
//! epochs. Improvements are strict (`>`).

/// Multiplies the learning rates by `factor` after `patience` consecutive
/// epochs without a new best score, then resets its counter.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    patience: usize,
    factor: f64,
    best: Option<f64>,
    streak: usize,
}

impl PlateauSchedule {
    pub fn new(patience: usize, factor: f64) -> Self {
        assert!(patience >= 1);
        assert!(factor > 0.0 && factor < 1.0);
        PlateauSchedule {
            patience,
            factor,
            best: None,
            streak: 0,
        }
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// Feeds one epoch's validation score; returns true when the learning
    /// rates should be decayed now.
    pub fn observe(&mut self, score: f64) -> bool {
        match self.best {
            Some(best) if score > best => {
                self.best = Some(score);
                self.streak = 0;
                false
            }
            Some(_) => {
                self.streak += 1;
                if self.streak >= self.patience {
                    self.streak = 0;
                    true
                } else {
                    false
                }
            }
            None => {
                self.best = Some(score);
                self.streak = 1;
                false
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stops training after `patience` consecutive epochs without a new best
/// score. Tracks which epoch produced the best score so the trainer can
/// keep that checkpoint.
#[derive(Debug, Clone)]
pub struct EarlyStop {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    streak: usize,
    epoch: usize,
}

impl EarlyStop {
    pub fn new(patience: usize) -> Self {
        assert!(patience >= 1);
        EarlyStop {
            patience,
            best: None,
            best_epoch: 0,
            streak: 0,
            epoch: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    /// Feeds one epoch's validation score. Returns true when this epoch is
    /// a new best (the first epoch always is, though it still opens the
    /// non-improvement streak).
    pub fn observe(&mut self, score: f64) -> bool {
        self.epoch += 1;
        match self.best {
            Some(best) if score > best => {
                self.best = Some(score);
                self.best_epoch = self.epoch;
                self.streak = 0;
                true
            }
            Some(_) => {
                self.streak += 1;
                false
            }
            None => {
                self.best = Some(score);
                self.best_epoch = self.epoch;
                self.streak = 1;
                true
            }
        }
    }

    pub fn decision(&self) -> StopDecision {
        if self.streak >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// Outcome of one early-stopping check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlyStopDecision {
    Continue,
    Stop,
}

/// Patience counter on a metric where larger is better (validation accuracy).
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopState {
    pub best_metric: f64,
    pub epochs_since_improve: usize,
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopState {
    fn default() -> Self {
        Self::new(5, 1e-4)
    }
}

impl EarlyStopState {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            best_metric: f64::NEG_INFINITY,
            epochs_since_improve: 0,
            patience,
            min_delta,
        }
    }

    /// An epoch improves iff `metric > best + min_delta`; training stops once
    /// more than `patience` consecutive epochs fail to improve.
    pub fn update(&mut self, metric: f64) -> EarlyStopDecision {
        if metric > self.best_metric + self.min_delta {
            self.best_metric = metric;
            self.epochs_since_improve = 0;
        } else {
            self.epochs_since_improve += 1;
        }
        if self.epochs_since_improve > self.patience {
            EarlyStopDecision::Stop
        } else {
            EarlyStopDecision::Continue
        }
    }
}

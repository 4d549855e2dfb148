//! Learning-rate range test.
//!
//! The rate is ramped geometrically from `lr_lo` to `lr_hi`, one SGD step per
//! mini-batch, while the loss is recorded. The run stops at the first step
//! whose smoothed loss exceeds `divergence_factor` times the best smoothed loss
//! so far. A starting rate is then read off the steepest downward slope of the
//! smoothed loss against `ln(lr)`.

use std::io::Write;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Batcher, GroupLr, Model, Real, Sgd};

pub const DEFAULT_TAIL_EXCLUDE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeTestConfig {
    pub lr_lo: f64,
    pub lr_hi: f64,
    pub n_steps: usize,
    /// EMA coefficient for loss smoothing, in `[0, 1)`.
    pub smoothing_beta: f64,
    pub divergence_factor: f64,
}

impl Default for RangeTestConfig {
    fn default() -> Self {
        Self {
            lr_lo: 1e-5,
            lr_hi: 10.0,
            n_steps: 100,
            smoothing_beta: 0.98,
            divergence_factor: 4.0,
        }
    }
}

impl RangeTestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_lo > 0.0 && self.lr_lo < self.lr_hi && self.lr_hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < lr_lo < lr_hi, got {} and {}",
                self.lr_lo, self.lr_hi
            )));
        }
        if self.n_steps < 10 {
            return Err(Error::InvalidConfig(format!("n_steps must be >= 10, got {}", self.n_steps)));
        }
        if !(0.0..1.0).contains(&self.smoothing_beta) {
            return Err(Error::InvalidConfig(format!(
                "smoothing_beta must be in [0, 1), got {}",
                self.smoothing_beta
            )));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "divergence_factor must be > 1, got {}",
                self.divergence_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinderStep {
    pub lr: f64,
    pub raw_loss: f64,
    pub smoothed_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LRFinderTrace {
    pub steps: Vec<FinderStep>,
    pub stop_reason: StopReason,
}

impl LRFinderTrace {
    pub fn stopped_early(&self) -> bool {
        self.stop_reason == StopReason::Diverged
    }

    /// CSV with header `step,lr,raw_loss,smoothed_loss`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,lr,raw_loss,smoothed_loss")?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(out, "{i},{:e},{},{}", s.lr, s.raw_loss, s.smoothed_loss)?;
        }
        Ok(())
    }
}

/// Rate at `step` of a geometric ramp from `lr_lo` (step 0) to `lr_hi`
/// (step `n_steps - 1`).
pub fn ramp_lr(step: usize, cfg: &RangeTestConfig) -> f64 {
    let last = cfg.n_steps.saturating_sub(1).max(1);
    if step == 0 {
        return cfg.lr_lo;
    }
    if step >= last {
        return cfg.lr_hi;
    }
    let frac = step as f64 / last as f64;
    cfg.lr_lo * (cfg.lr_hi / cfg.lr_lo).powf(frac)
}

/// Bias-corrected exponential moving average.
pub fn smooth_losses(raw: &[f64], beta: f64) -> Vec<f64> {
    let mut smoother = Smoother::new(beta);
    raw.iter().map(|&x| smoother.push(x)).collect()
}

struct Smoother {
    beta: f64,
    avg: f64,
    beta_pow: f64,
}

impl Smoother {
    fn new(beta: f64) -> Self {
        Self {
            beta,
            avg: 0.0,
            beta_pow: 1.0,
        }
    }

    fn push(&mut self, x: f64) -> f64 {
        self.avg = self.beta * self.avg + (1.0 - self.beta) * x;
        self.beta_pow *= self.beta;
        self.avg / (1.0 - self.beta_pow)
    }
}

/// Something the range test can train one mini-batch at a time.
pub trait RangeProbe {
    type Snapshot;

    fn snapshot(&self) -> Self::Snapshot;

    fn restore(&mut self, snapshot: Self::Snapshot);

    /// Loss on the next mini-batch at the current parameters, after which one
    /// update at `lr` is applied.
    fn train_step(&mut self, lr: f64) -> Result<f64>;
}

/// Runs the range test on `probe`, restoring it to its starting state after.
pub fn range_test<P: RangeProbe>(probe: &mut P, cfg: &RangeTestConfig) -> Result<LRFinderTrace> {
    cfg.validate()?;
    let start = probe.snapshot();
    let result = run_ramp(probe, cfg);
    probe.restore(start);
    result
}

fn run_ramp<P: RangeProbe>(probe: &mut P, cfg: &RangeTestConfig) -> Result<LRFinderTrace> {
    let mut smoother = Smoother::new(cfg.smoothing_beta);
    let mut best = f64::INFINITY;
    let mut steps = Vec::with_capacity(cfg.n_steps);
    for step in 0..cfg.n_steps {
        let lr = ramp_lr(step, cfg);
        let raw_loss = match probe.train_step(lr) {
            Ok(l) if l.is_finite() => l,
            Ok(_) | Err(Error::NonFinite(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let smoothed_loss = smoother.push(raw_loss);
        steps.push(FinderStep {
            lr,
            raw_loss,
            smoothed_loss,
        });
        best = best.min(smoothed_loss);
        if !smoothed_loss.is_finite() || smoothed_loss > cfg.divergence_factor * best {
            return Ok(LRFinderTrace {
                steps,
                stop_reason: StopReason::Diverged,
            });
        }
    }
    Ok(LRFinderTrace {
        steps,
        stop_reason: StopReason::Completed,
    })
}

/// [`suggest_lr_excluding`] with the default tail of 3 steps.
pub fn suggest_lr(trace: &LRFinderTrace) -> Result<f64> {
    suggest_lr_excluding(trace, DEFAULT_TAIL_EXCLUDE)
}

/// Rate at the most negative forward slope of smoothed loss against
/// `ln(lr)`. A diverged trace first drops its divergent step and the
/// `tail_exclude` steps before it. Ties go to the smaller rate.
pub fn suggest_lr_excluding(trace: &LRFinderTrace, tail_exclude: usize) -> Result<f64> {
    let usable = match trace.stop_reason {
        StopReason::Completed => trace.steps.len(),
        StopReason::Diverged => trace.steps.len().saturating_sub(1 + tail_exclude),
    };
    if usable < 3 {
        return Err(Error::TraceTooShort { usable });
    }
    let steps = &trace.steps[..usable];
    let mut best: Option<(f64, f64)> = None;
    for w in steps.windows(2) {
        let dx = w[1].lr.ln() - w[0].lr.ln();
        let slope = (w[1].smoothed_loss - w[0].smoothed_loss) / dx;
        if slope.is_finite() && slope < 0.0 && best.is_none_or(|(s, _)| slope < s) {
            best = Some((slope, w[0].lr));
        }
    }
    best.map(|(_, lr)| lr).ok_or(Error::NoDescentFound)
}

/// Range test over a model and a dataset, cycling through seeded mini-batches.
pub struct ModelProbe<'a, T> {
    model: &'a mut Model<T>,
    data: &'a Dataset,
    batcher: Batcher,
    optimizer: Sgd<T>,
    weight_decay: f64,
    queue: Vec<Vec<usize>>,
}

impl<'a, T: Real> ModelProbe<'a, T> {
    pub fn new(
        model: &'a mut Model<T>,
        data: &'a Dataset,
        batch_size: usize,
        momentum: f64,
        weight_decay: f64,
        seed: u64,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let optimizer = Sgd::new(model, momentum)?;
        Ok(Self {
            model,
            data,
            batcher: Batcher::new(batch_size, seed, false),
            optimizer,
            weight_decay,
            queue: Vec::new(),
        })
    }
}

impl<T: Real> RangeProbe for ModelProbe<'_, T> {
    type Snapshot = Vec<Vec<T>>;

    fn snapshot(&self) -> Self::Snapshot {
        self.model.parameters()
    }

    fn restore(&mut self, snapshot: Self::Snapshot) {
        self.model
            .set_parameters(&snapshot)
            .expect("snapshot taken from the same model");
        self.model.zero_grads();
        self.optimizer.reset();
    }

    fn train_step(&mut self, lr: f64) -> Result<f64> {
        if self.queue.is_empty() {
            self.queue = self.batcher.epoch(self.data.len());
            self.queue.reverse();
        }
        let batch = self.queue.pop().expect("refilled above");
        let (x, y) = self.batcher.gather::<T>(self.data, &batch);
        let pass = self.model.forward(&x, batch.len())?;
        let loss = self.model.backward(&pass, &y, self.weight_decay)?;
        self.optimizer.step(self.model, GroupLr::uniform(lr));
        Ok(loss.as_f64())
    }
}

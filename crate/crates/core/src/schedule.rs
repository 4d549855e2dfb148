//! Cosine annealing with warm restarts and cycle-length multiplication.
//!
//! All schedules are indexed per iteration (one mini-batch). Within cycle `k`
//! the rate follows
//!
//! ```text
//! lr(t) = eta_min + 0.5 * (eta_max - eta_min) * (1 + cos(pi * t / T_k))
//! T_k   = t0 * mult^k
//! ```
//!
//! and jumps back to `eta_max` at the first iteration of every new cycle.
//!
//! The formula sometimes printed as `0.5 * (1 + eta * cos(pi t / T)) + eta_min`
//! neither starts at `eta` nor decays to zero; the form above is the one that
//! actually anneals from `eta_max` down to `eta_min`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};

/// Shape of the annealing trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineCycleConfig {
    pub eta_max: f64,
    pub eta_min: f64,
    /// Iterations in the first cycle.
    pub t0: u64,
    /// Each cycle is `mult` times longer than the previous one.
    pub mult: u64,
}

impl Default for CosineCycleConfig {
    fn default() -> Self {
        Self {
            eta_max: 0.01,
            eta_min: 0.0,
            t0: 1,
            mult: 2,
        }
    }
}

impl CosineCycleConfig {
    pub fn new(eta_max: f64, eta_min: f64, t0: u64, mult: u64) -> Result<Self> {
        let cfg = Self {
            eta_max,
            eta_min,
            t0,
            mult,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_max.is_finite() && self.eta_min.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rates must be finite, got eta_max={} eta_min={}",
                self.eta_max, self.eta_min
            )));
        }
        if self.eta_min < 0.0 || self.eta_max <= self.eta_min {
            return Err(Error::InvalidConfig(format!(
                "need eta_max > eta_min >= 0, got eta_max={} eta_min={}",
                self.eta_max, self.eta_min
            )));
        }
        if self.t0 == 0 {
            return Err(Error::InvalidConfig("t0 must be >= 1".into()));
        }
        if self.mult == 0 {
            return Err(Error::InvalidConfig("mult must be >= 1".into()));
        }
        Ok(())
    }

    /// Same cycle structure with a unit peak and zero floor.
    pub fn unit(&self) -> Self {
        Self {
            eta_max: 1.0,
            eta_min: 0.0,
            ..*self
        }
    }
}

/// Position of a global iteration inside the cycle structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleCursor {
    pub t_global: u64,
    pub cycle_index: u32,
    pub t_within: u64,
}

/// Constant learning rate, used by the conventional baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedSchedule {
    rate: f64,
}

impl FixedSchedule {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "fixed learning rate must be > 0, got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// Annealed rate `t_within` iterations into a cycle of length `cycle_len`.
pub fn cosine_lr(t_within: u64, cycle_len: u64, cfg: &CosineCycleConfig) -> Result<f64> {
    cfg.validate()?;
    if cycle_len == 0 {
        return Err(Error::InvalidConfig("cycle length must be >= 1".into()));
    }
    if t_within > cycle_len {
        return Err(Error::InvalidConfig(format!(
            "t_within {t_within} exceeds cycle length {cycle_len}"
        )));
    }
    // Endpoints are returned verbatim so restarts hit eta_max bit-exactly.
    if t_within == 0 {
        return Ok(cfg.eta_max);
    }
    if t_within == cycle_len {
        return Ok(cfg.eta_min);
    }
    let frac = t_within as f64 / cycle_len as f64;
    Ok(cfg.eta_min + 0.5 * (cfg.eta_max - cfg.eta_min) * (1.0 + (PI * frac).cos()))
}

/// Length of cycle `cycle_index`: `t0 * mult^cycle_index`.
pub fn cycle_length(cycle_index: u32, cfg: &CosineCycleConfig) -> Result<u64> {
    cfg.mult
        .checked_pow(cycle_index)
        .and_then(|m| m.checked_mul(cfg.t0))
        .ok_or_else(|| {
            Error::Overflow(format!(
                "cycle {cycle_index} with t0={} mult={}",
                cfg.t0, cfg.mult
            ))
        })
}

/// Global iteration at which cycle `cycle_index` begins.
pub fn cycle_start(cycle_index: u32, cfg: &CosineCycleConfig) -> Result<u64> {
    let overflow = || Error::Overflow(format!("start of cycle {cycle_index}"));
    if cfg.mult == 1 {
        return cfg.t0.checked_mul(cycle_index as u64).ok_or_else(overflow);
    }
    // t0 * (mult^k - 1) / (mult - 1)
    let pow = cfg.mult.checked_pow(cycle_index).ok_or_else(overflow)?;
    cfg.t0
        .checked_mul((pow - 1) / (cfg.mult - 1))
        .ok_or_else(overflow)
}

/// Splits a global iteration into (cycle, offset within cycle).
///
/// Panics only if `cfg` is invalid (`t0 == 0` or `mult == 0`).
pub fn locate(t_global: u64, cfg: &CosineCycleConfig) -> ScheduleCursor {
    assert!(cfg.t0 >= 1 && cfg.mult >= 1, "invalid cycle config");
    if cfg.mult == 1 {
        return ScheduleCursor {
            t_global,
            cycle_index: (t_global / cfg.t0) as u32,
            t_within: t_global % cfg.t0,
        };
    }
    let mut remaining = t_global;
    let mut len = cfg.t0;
    let mut cycle = 0u32;
    while remaining >= len {
        remaining -= len;
        cycle += 1;
        match len.checked_mul(cfg.mult) {
            Some(next) => len = next,
            // The next cycle is longer than any representable remainder.
            None => break,
        }
    }
    ScheduleCursor {
        t_global,
        cycle_index: cycle,
        t_within: remaining,
    }
}

/// Learning rate at global iteration `t_global`.
pub fn lr_at(t_global: u64, cfg: &CosineCycleConfig) -> Result<f64> {
    cfg.validate()?;
    let cursor = locate(t_global, cfg);
    let len = cycle_length(cursor.cycle_index, cfg)?;
    cosine_lr(cursor.t_within, len, cfg)
}

/// `(t, lr_at(t))` for `t` in `0..n_iters`.
pub fn dump_schedule(cfg: &CosineCycleConfig, n_iters: u64) -> Result<Vec<(u64, f64)>> {
    if n_iters == 0 {
        return Err(Error::InvalidConfig("n_iters must be >= 1".into()));
    }
    (0..n_iters).map(|t| Ok((t, lr_at(t, cfg)?))).collect()
}

/// Writes a schedule as CSV with header `t,lr`.
///
/// Rates carry 17 significant digits, enough to round-trip an `f64`.
pub fn write_schedule_csv<W: Write>(mut out: W, series: &[(u64, f64)]) -> std::io::Result<()> {
    writeln!(out, "t,lr")?;
    for (t, lr) in series {
        writeln!(out, "{t},{lr:.16e}")?;
    }
    Ok(())
}

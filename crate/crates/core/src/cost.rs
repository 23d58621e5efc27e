//! Prefill cost accounting in abstract round² units.
//!
//! Window contexts shift every step, so the whole context is recomputed:
//! `min(t, W)²` per step. Clip contexts only grow between clearings, so with
//! a prefix cache a step that extends the previous context pays for the new
//! rounds against the whole context (`i` for a context of `i` rounds) and
//! only the step after a clearing pays a full `L²` prefill. The system
//! prompt and goal are a constant cached prefix and cost nothing.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::policy::{PolicyConfig, PolicyState};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("invalid cost parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub costs: Vec<u64>,
}

impl CostReport {
    pub fn total(&self) -> u64 {
        self.costs.iter().sum()
    }

    pub fn average(&self) -> f64 {
        if self.costs.is_empty() {
            0.0
        } else {
            self.total() as f64 / self.costs.len() as f64
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CostError> {
        #[derive(Serialize)]
        struct Row {
            step: usize,
            cost: u64,
            cumulative: u64,
        }
        let mut out = csv::Writer::from_writer(w);
        let mut cumulative = 0;
        for (i, &cost) in self.costs.iter().enumerate() {
            cumulative += cost;
            out.serialize(Row {
                step: i + 1,
                cost,
                cumulative,
            })?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), CostError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub fn window_cost(w: usize, turns: usize) -> Result<CostReport, CostError> {
    if w == 0 {
        return Err(CostError::Params("window size must be >= 1".into()));
    }
    Ok(CostReport {
        costs: (1..=turns).map(|t| (t.min(w) as u64).pow(2)).collect(),
    })
}

/// Clip cost series: contexts grow `1, 2, ..., H-1` from an empty cache, then
/// each cycle pays `L²` at the clearing step and `i` for `i = L+1 ..= H-1`.
pub fn clip_cost(retain: usize, threshold: usize, turns: usize) -> Result<CostReport, CostError> {
    check_clip(retain, threshold)?;
    let mut costs = Vec::with_capacity(turns);
    let mut size = 0usize;
    for _ in 0..turns {
        if size + 1 == threshold {
            size = retain;
            costs.push((retain as u64).pow(2));
        } else {
            size += 1;
            costs.push(size as u64);
        }
    }
    Ok(CostReport { costs })
}

/// Exact steady-state Clip cost per step as a fraction
/// `(L² + Σ_{i=L+1}^{H-1} i) / (H - L)`, returned as `(numerator, denominator)`.
pub fn clip_cycle_average(retain: usize, threshold: usize) -> Result<(u64, u64), CostError> {
    check_clip(retain, threshold)?;
    let (l, h) = (retain as u64, threshold as u64);
    // Σ_{i=L+1}^{H-1} i = (H-1)H/2 - L(L+1)/2
    let sum = (h - 1) * h / 2 - l * (l + 1) / 2;
    Ok((l * l + sum, h - l))
}

/// Steady-state Window cost over exact Clip cost with `L = 1, H = 2W`.
pub fn speedup(w: usize) -> Result<f64, CostError> {
    if w == 0 {
        return Err(CostError::Params("window size must be >= 1".into()));
    }
    let (num, den) = clip_cycle_average(1, 2 * w)?;
    Ok((w * w) as f64 * den as f64 / num as f64)
}

/// The published approximation `2W²(2W-1) / (2 + (2W-1)²)`.
pub fn speedup_closed_form(w: usize) -> f64 {
    let w = w as f64;
    2.0 * w * w * (2.0 * w - 1.0) / (2.0 + (2.0 * w - 1.0).powi(2))
}

fn check_clip(retain: usize, threshold: usize) -> Result<(), CostError> {
    if threshold < 2 || retain >= threshold {
        return Err(CostError::Params("clip requires 0 <= L < H and H >= 2".into()));
    }
    Ok(())
}

/// Round-level prefill simulator over the trimmed history of `policy`.
///
/// The cache holds the previous step's context. A step whose context
/// extends the cached one costs `new_rounds * context_len`; any other step
/// costs `context_len²`. With `reuse = false` every step pays `context_len²`.
pub fn simulate_ops(policy: PolicyConfig, turns: usize, reuse: bool) -> CostReport {
    let mut state = PolicyState::default();
    let mut cached: Vec<usize> = Vec::new();
    let mut costs = Vec::with_capacity(turns);
    for t in 1..=turns {
        let context = policy.trimmed_context(&state, t);
        let n = context.len() as u64;
        let extends = context.len() >= cached.len() && context[..cached.len()] == cached[..];
        costs.push(if reuse && extends {
            (n - cached.len() as u64) * n
        } else {
            n * n
        });
        state.retained.clone_from(&context);
        cached = context;
    }
    CostReport { costs }
}

//! Mean and standard error over episode rewards.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; zero when `n < 2`.
    pub sem: f64,
}

impl MeanSem {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                mean: 0.0,
                sem: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sem = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { n, mean, sem }
    }

    /// Normal-approximation 95% confidence interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.sem, self.mean + 1.96 * self.sem)
    }
}

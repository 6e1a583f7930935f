//! Resampling error estimates.
//!
//! Samples are rows of equal length (one row per disorder instance, or per
//! time batch); estimators are functions of the column means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest rows the jackknife accepts.
pub const MIN_JACKKNIFE_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    /// `|a - b|` in units of the combined error.
    pub fn z_to(&self, other: f64, other_err: f64) -> f64 {
        let s = (self.error * self.error + other_err * other_err).sqrt();
        let d = (self.value - other).abs();
        if s > 0.0 {
            d / s
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

fn column_sums(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = rows.first().map_or(0, Vec::len);
    let mut sums = vec![0.0; k];
    for r in rows {
        if r.len() != k {
            return Err(Error::SizeMismatch {
                expected: k,
                found: r.len(),
            });
        }
        for (s, v) in sums.iter_mut().zip(r) {
            *s += v;
        }
    }
    Ok(sums)
}

/// Mean and standard error of the mean.
pub fn mean_sem(v: &[f64]) -> Result<Estimate> {
    if v.len() < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            got: v.len(),
        });
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Estimate {
        value: m,
        error: (var / n).sqrt(),
    })
}

/// Leave-one-out jackknife of `f(column means)`.
pub fn jackknife<F>(rows: &[Vec<f64>], f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
{
    jackknife_min(rows, f, MIN_JACKKNIFE_SAMPLES)
}

/// As [`jackknife`], with an explicit minimum row count (at least 2).
pub fn jackknife_min<F>(rows: &[Vec<f64>], f: F, min_rows: usize) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
{
    let n = rows.len();
    if n < min_rows.max(2) {
        return Err(Error::TooFewSamples {
            required: min_rows.max(2),
            got: n,
        });
    }
    let sums = column_sums(rows)?;
    let nf = n as f64;
    let full: Vec<f64> = sums.iter().map(|s| s / nf).collect();
    let value = f(&full);
    let mut loo = vec![0.0; sums.len()];
    let partial: Vec<f64> = rows
        .iter()
        .map(|r| {
            for ((m, s), x) in loo.iter_mut().zip(&sums).zip(r) {
                *m = (s - x) / (nf - 1.0);
            }
            f(&loo)
        })
        .collect();
    let mean = partial.iter().sum::<f64>() / nf;
    let var = partial.iter().map(|p| (p - mean).powi(2)).sum::<f64>() * (nf - 1.0) / nf;
    Ok(Estimate {
        value,
        error: var.sqrt(),
    })
}

/// Bootstrap of `f(column means)` with `resamples` draws of the rows.
pub fn bootstrap<F>(rows: &[Vec<f64>], f: F, resamples: usize, seed: u64) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
{
    let n = rows.len();
    if n < 2 || resamples < 2 {
        return Err(Error::TooFewSamples {
            required: 2,
            got: n.min(resamples),
        });
    }
    let sums = column_sums(rows)?;
    let full: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = vec![0.0; sums.len()];
    let values: Vec<f64> = (0..resamples)
        .map(|_| {
            means.iter_mut().for_each(|m| *m = 0.0);
            for _ in 0..n {
                let r = &rows[rng.gen_range(0..n)];
                for (m, x) in means.iter_mut().zip(r) {
                    *m += x;
                }
            }
            means.iter_mut().for_each(|m| *m /= n as f64);
            f(&means)
        })
        .collect();
    let m = values.iter().sum::<f64>() / resamples as f64;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (resamples as f64 - 1.0);
    Ok(Estimate {
        value: f(&full),
        error: var.sqrt(),
    })
}

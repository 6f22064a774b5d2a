//! Neighbor-count rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts a Hölder exponent in dimension `d` into the mass-based smoothness
/// exponent used by the k rules: `alpha = alpha_H / d`.
pub fn alpha_from_holder(alpha_h: f64, d: usize) -> Result<f64> {
    if !(alpha_h > 0.0) || !alpha_h.is_finite() {
        return Err(Error::parameter(format!("Hölder exponent must be positive, got {alpha_h}")));
    }
    if d == 0 {
        return Err(Error::parameter("dimension must be at least 1"));
    }
    Ok(alpha_h / d as f64)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::parameter(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Rate-optimal local k for subsample size `n` and `s` subsamples:
/// `max(1, round(k_o * n^(2a/(2a+1)) * s^(-1/(2a+1))))`.
pub fn select_k(alpha: f64, n: usize, s: usize, k_o: f64) -> Result<usize> {
    positive("alpha", alpha)?;
    positive("k_o", k_o)?;
    if n == 0 || s == 0 {
        return Err(Error::parameter("n and s must be at least 1"));
    }
    let denom = 2.0 * alpha + 1.0;
    let k = k_o * (n as f64).powf(2.0 * alpha / denom) * (s as f64).powf(-1.0 / denom);
    Ok((k.round() as usize).max(1))
}

/// Local k as a scaled share of a global neighbor count:
/// `K = round(N^k_exponent)`, `k = ceil(k_o_star * K / s)`.
pub fn select_k_sim3(n_total: usize, s: usize, k_exponent: f64, k_o_star: f64) -> Result<usize> {
    if n_total == 0 || s == 0 {
        return Err(Error::parameter("N and s must be at least 1"));
    }
    positive("k_o_star", k_o_star)?;
    if !k_exponent.is_finite() || k_exponent < 0.0 {
        return Err(Error::parameter(format!("K exponent must be nonnegative, got {k_exponent}")));
    }
    let big_k = (n_total as f64).powf(k_exponent).round();
    Ok(((k_o_star * big_k / s as f64).ceil() as usize).max(1))
}

/// Local k from a tuned oracle k: `max(1, round(k_oracle / s))`.
pub fn divide_oracle_k(k_oracle: usize, s: usize) -> usize {
    let s = s.max(1);
    ((k_oracle as f64 / s as f64).round() as usize).max(1)
}

/// How a bigNN model chooses its local neighbor count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum KRule {
    /// [`select_k`] with the smallest subsample size as `n`.
    Theorem { alpha: f64, k_o: f64 },
    /// [`select_k_sim3`].
    GlobalShare { k_exponent: f64, k_o_star: f64 },
    /// A fixed k in every subsample.
    Fixed { k: usize },
    /// [`divide_oracle_k`].
    DivideOracle { k_oracle: usize },
}

impl KRule {
    /// Local k for `n_total` points split into `s` subsamples whose smallest has `n_min` points.
    pub fn resolve(&self, n_total: usize, s: usize, n_min: usize) -> Result<usize> {
        match *self {
            KRule::Theorem { alpha, k_o } => select_k(alpha, n_min, s, k_o),
            KRule::GlobalShare {
                k_exponent,
                k_o_star,
            } => select_k_sim3(n_total, s, k_exponent, k_o_star),
            KRule::Fixed { k } => {
                if k == 0 {
                    return Err(Error::parameter("fixed k must be at least 1"));
                }
                Ok(k)
            }
            KRule::DivideOracle { k_oracle } => {
                if k_oracle == 0 {
                    return Err(Error::parameter("oracle k must be at least 1"));
                }
                Ok(divide_oracle_k(k_oracle, s))
            }
        }
    }

    /// The constant factor reported alongside the model.
    pub fn k_o(&self) -> f64 {
        match *self {
            KRule::Theorem { k_o, .. } => k_o,
            KRule::GlobalShare { k_o_star, .. } => k_o_star,
            KRule::Fixed { .. } | KRule::DivideOracle { .. } => 1.0,
        }
    }
}

//! Random-effects meta-analysis of per-subsample estimates.

use log::warn;

use crate::error::{PolyadsError, Result};

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TauMethod {
    PauleMandel,
    DerSimonianLaird,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaResult {
    pub pooled: f64,
    pub se: f64,
    pub ci: (f64, f64),
    /// Between-study variance.
    pub tau2: f64,
    pub method: TauMethod,
    /// `false` when Paule–Mandel failed and DerSimonian–Laird was used.
    pub converged: bool,
    pub iterations: usize,
}

/// Weighted mean and generalized Q statistic at `tau2`.
fn q_statistic(estimates: &[(f64, f64)], tau2: f64) -> (f64, f64, f64) {
    let mut sw = 0.0;
    let mut swy = 0.0;
    for &(y, v) in estimates {
        let w = 1.0 / (v + tau2);
        sw += w;
        swy += w * y;
    }
    let mean = swy / sw;
    let mut q = 0.0;
    let mut slope = 0.0;
    for &(y, v) in estimates {
        let w = 1.0 / (v + tau2);
        let r = y - mean;
        q += w * r * r;
        slope += w * w * r * r;
    }
    (mean, q, slope)
}

/// Pools `(β_k, var_k)` pairs with the Paule–Mandel `τ²`, falling back to
/// DerSimonian–Laird when the iteration does not settle.
pub fn meta_analysis(estimates: &[(f64, f64)]) -> Result<MetaResult> {
    let k = estimates.len();
    if k < 2 {
        return Err(PolyadsError::Meta(format!(
            "need at least 2 studies, got {k}"
        )));
    }
    if let Some(&(y, v)) = estimates
        .iter()
        .find(|(y, v)| !y.is_finite() || !v.is_finite() || *v <= 0.0)
    {
        return Err(PolyadsError::Meta(format!(
            "invalid study (estimate {y}, variance {v}); variances must be positive"
        )));
    }
    let df = (k - 1) as f64;

    // Q(τ²) is convex and decreasing, so Newton from τ² = 0 climbs
    // monotonically to the root of Q(τ²) = k − 1.
    let mut tau2 = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    let (_, q0, _) = q_statistic(estimates, 0.0);
    if q0 <= df {
        converged = true;
    } else {
        while iterations < MAX_ITERATIONS {
            let (_, q, slope) = q_statistic(estimates, tau2);
            if (q - df).abs() < TOLERANCE {
                converged = true;
                break;
            }
            if !(slope > 0.0) {
                break;
            }
            tau2 = (tau2 + (q - df) / slope).max(0.0);
            iterations += 1;
        }
        if !converged {
            let (_, q, _) = q_statistic(estimates, tau2);
            converged = (q - df).abs() < TOLERANCE;
        }
    }

    let method = if converged {
        TauMethod::PauleMandel
    } else {
        let sw: f64 = estimates.iter().map(|(_, v)| 1.0 / v).sum();
        let sw2: f64 = estimates.iter().map(|(_, v)| 1.0 / (v * v)).sum();
        tau2 = ((q0 - df) / (sw - sw2 / sw)).max(0.0);
        warn!("Paule–Mandel did not converge in {MAX_ITERATIONS} iterations; using DerSimonian–Laird τ² = {tau2}");
        TauMethod::DerSimonianLaird
    };

    let sw: f64 = estimates.iter().map(|(_, v)| 1.0 / (v + tau2)).sum();
    let pooled = estimates.iter().map(|(y, v)| y / (v + tau2)).sum::<f64>() / sw;
    let se = (1.0 / sw).sqrt();
    Ok(MetaResult {
        pooled,
        se,
        ci: (pooled - 1.96 * se, pooled + 1.96 * se),
        tau2,
        method,
        converged,
        iterations,
    })
}

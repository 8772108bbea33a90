//! Sandwich covariance estimators built from edge-keyed polyad gradients.
//!
//! `Ω̂` sums outer products of edge scores `S_i`; `Ω̂′` sums gradient pairs of
//! polyads meeting at a common edge, weighted by how many columns their
//! partner rows differ in.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::enumeration::{ActivePolyadRecord, PolyadIncidence};
use crate::error::{PolyadsError, Result};
use crate::estimator::{evaluate_moments, loss_gradient_hessian, FitConfig};
use crate::graph::EdgeIndex;

/// Incidence keys per reduction chunk.
const CHUNK: usize = 1024;

/// Default cap on `Σ_i |partners(i)|²` for `Ω̂′`.
pub const DEFAULT_MAX_PAIR_WORK: u128 = 2_000_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct VarianceConfig {
    /// Confidence level of the reported intervals.
    pub ci_level: f64,
    /// Skip `Ω̂′` (with a warning) above this many partner pairs.
    pub max_pair_work: u128,
    pub truncation_l: u64,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        VarianceConfig {
            ci_level: 0.95,
            max_pair_work: DEFAULT_MAX_PAIR_WORK,
            truncation_l: FitConfig::default().truncation_l,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CovarianceResult {
    pub gamma_hat: DMatrix<f64>,
    pub omega_hat: DMatrix<f64>,
    /// `None` when the pair-work guard tripped.
    pub omega_prime_hat: Option<DMatrix<f64>>,
    pub sigma_hat: DMatrix<f64>,
    pub sigma_prime_hat: Option<DMatrix<f64>>,
    /// Intervals from `Σ̂`.
    pub ci: Vec<(f64, f64)>,
    /// Intervals from `Σ̂′`.
    pub ci_prime: Option<Vec<(f64, f64)>>,
    /// Incidence entries visited for `Ω̂` (equals `N̂_a`).
    pub omega_touches: u64,
    /// Partner pairs visited for `Ω̂′`.
    pub omega_prime_touches: u64,
}

impl CovarianceResult {
    /// `Σ̂′` when available, else `Σ̂`.
    pub fn preferred_sigma(&self) -> &DMatrix<f64> {
        self.sigma_prime_hat.as_ref().unwrap_or(&self.sigma_hat)
    }

    pub fn preferred_ci(&self) -> &[(f64, f64)] {
        self.ci_prime.as_deref().unwrap_or(&self.ci)
    }
}

/// `∇ℓ_ξ(β̂)` for every canonical record, without the `2^D` factor.
pub fn record_gradients(
    records: &[ActivePolyadRecord],
    beta: &[f64],
    truncation_l: u64,
) -> Result<Vec<Vec<f64>>> {
    records
        .par_iter()
        .map(|rec| {
            let mp = evaluate_moments(rec, beta, truncation_l)?;
            let r = mp.mu - rec.m_plus as f64;
            Ok(rec.did.iter().map(|x| r * x).collect())
        })
        .collect()
}

fn add_outer(acc: &mut [f64], a: &[f64], b: &[f64], w: f64) {
    let p = a.len();
    for i in 0..p {
        let wa = w * a[i];
        for j in 0..p {
            acc[i * p + j] += wa * b[j];
        }
    }
}

fn to_symmetric(p: usize, flat: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(p, p, flat);
    (&m + m.transpose()) * 0.5
}

fn sum_chunks(p: usize, parts: Vec<Vec<f64>>) -> Vec<f64> {
    parts.into_iter().fold(vec![0.0; p * p], |mut acc, part| {
        for (a, b) in acc.iter_mut().zip(part) {
            *a += b;
        }
        acc
    })
}

/// `S_i = Σ_{i′} 2^D ∇ℓ_{(i,i′)}` for every `i ∈ ℐ_a`, in key order.
pub fn edge_scores(
    incidence: &PolyadIncidence,
    gradients: &[Vec<f64>],
    p: usize,
) -> Vec<(EdgeIndex, Vec<f64>)> {
    let scale = incidence
        .keys()
        .first()
        .map_or(1.0, |k| (1u64 << k.len()) as f64);
    incidence
        .iter()
        .map(|(key, partners)| {
            let mut s = vec![0.0; p];
            for entry in partners {
                for (a, g) in s.iter_mut().zip(&gradients[entry.record]) {
                    *a += scale * g;
                }
            }
            (key.clone(), s)
        })
        .collect()
}

/// `Ω̂ = Σ_i S_i S_iᵀ`.
pub fn omega_hat(scores: &[(EdgeIndex, Vec<f64>)], p: usize) -> DMatrix<f64> {
    let parts: Vec<Vec<f64>> = scores
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; p * p];
            for (_, s) in chunk {
                add_outer(&mut acc, s, s, 1.0);
            }
            acc
        })
        .collect();
    to_symmetric(p, &sum_chunks(p, parts))
}

/// `Ω̂′ = Σ_i Σ_{i′,i″} ∇ℓ_{(i,i′)} ∇ℓ_{(i,i″)}ᵀ 2^{D + #{d : i′_d ≠ i″_d}}`.
///
/// Returns the matrix and the number of partner pairs visited.
pub fn omega_prime_hat(
    incidence: &PolyadIncidence,
    gradients: &[Vec<f64>],
    p: usize,
    max_pair_work: u128,
) -> Result<(DMatrix<f64>, u64)> {
    let work = incidence.pair_work();
    if work > max_pair_work {
        return Err(PolyadsError::ResourceGuard(format!(
            "Ω̂′ needs {work} partner pairs, above the cap of {max_pair_work}"
        )));
    }
    let keys: Vec<_> = incidence.iter().collect();
    let parts: Vec<Vec<f64>> = keys
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; p * p];
            for (key, partners) in chunk {
                let d = key.len() as i32;
                for a in partners.iter() {
                    for b in partners.iter() {
                        let differ = a
                            .partner
                            .iter()
                            .zip(b.partner.iter())
                            .filter(|(x, y)| x != y)
                            .count() as i32;
                        let w = 2f64.powi(d + differ);
                        add_outer(&mut acc, &gradients[a.record], &gradients[b.record], w);
                    }
                }
            }
            acc
        })
        .collect();
    Ok((to_symmetric(p, &sum_chunks(p, parts)), work as u64))
}

/// `Γ̂⁻¹ Ω Γ̂⁻¹`.
pub fn sandwich(gamma: &DMatrix<f64>, omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = gamma.nrows();
    if let Some(direction) = crate::estimator::null_direction(gamma) {
        return Err(PolyadsError::CollinearFeatures { direction });
    }
    let inv = gamma.clone().cholesky().map(|c| c.inverse()).or_else(|| {
        let lu = gamma.clone().lu();
        lu.try_inverse()
    });
    let inv = match inv {
        Some(m) if m.iter().all(|v| v.is_finite()) => m,
        _ => {
            let eig = nalgebra::SymmetricEigen::new(gamma.clone());
            let k = eig.eigenvalues.imin();
            return Err(PolyadsError::CollinearFeatures {
                direction: eig.eigenvectors.column(k).iter().cloned().collect(),
            });
        }
    };
    let s = &inv * omega * &inv;
    debug_assert_eq!(s.nrows(), p);
    Ok((&s + s.transpose()) * 0.5)
}

/// Two-sided normal quantile for the given confidence level.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(PolyadsError::InvalidParameter(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    if level == 0.95 {
        return Ok(1.96);
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// `β̂_k ± z·sqrt(Σ_kk)`.
pub fn ci(sigma: &DMatrix<f64>, beta: &[f64], level: f64) -> Result<Vec<(f64, f64)>> {
    let z = normal_quantile(level)?;
    Ok(beta
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let se = sigma[(k, k)].max(0.0).sqrt();
            (b - z * se, b + z * se)
        })
        .collect())
}

/// All covariance estimates at `beta_hat`.
pub fn covariance(
    records: &[ActivePolyadRecord],
    incidence: &PolyadIncidence,
    beta_hat: &[f64],
    config: &VarianceConfig,
) -> Result<CovarianceResult> {
    let p = beta_hat.len();
    let fit_cfg = FitConfig {
        truncation_l: config.truncation_l,
        ..FitConfig::default()
    };
    let (_, _, gamma_hat) = loss_gradient_hessian(records, p, beta_hat, &fit_cfg)?;
    let gradients = record_gradients(records, beta_hat, config.truncation_l)?;
    let scores = edge_scores(incidence, &gradients, p);
    let omega = omega_hat(&scores, p);
    let sigma_hat = sandwich(&gamma_hat, &omega)?;
    let ci_plain = ci(&sigma_hat, beta_hat, config.ci_level)?;

    let (omega_prime, touches) =
        match omega_prime_hat(incidence, &gradients, p, config.max_pair_work) {
            Ok((m, t)) => (Some(m), t),
            Err(PolyadsError::ResourceGuard(msg)) => {
                warn!("{msg}; reporting Σ̂ only");
                (None, 0)
            }
            Err(e) => return Err(e),
        };
    let sigma_prime = omega_prime
        .as_ref()
        .map(|o| sandwich(&gamma_hat, o))
        .transpose()?;
    let ci_prime = sigma_prime
        .as_ref()
        .map(|s| ci(s, beta_hat, config.ci_level))
        .transpose()?;
    Ok(CovarianceResult {
        gamma_hat,
        omega_hat: omega,
        omega_prime_hat: omega_prime,
        sigma_hat,
        sigma_prime_hat: sigma_prime,
        ci: ci_plain,
        ci_prime,
        omega_touches: incidence.total_entries() as u64,
        omega_prime_touches: touches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::FnCovariates;
    use crate::enumeration::{build_incidence, enumerate_active};
    use crate::graph::SparseCountGraph;

    #[test]
    fn omega_of_two_scalar_scores() {
        let scores = vec![
            (EdgeIndex::from([1, 1]), vec![3.0]),
            (EdgeIndex::from([2, 2]), vec![-4.0]),
        ];
        assert_eq!(omega_hat(&scores, 1)[(0, 0)], 25.0);
        assert_eq!(omega_hat(&[], 2), DMatrix::zeros(2, 2));
    }

    #[test]
    fn identity_and_scalar_sandwich() {
        let omega = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(sandwich(&DMatrix::identity(2, 2), &omega).unwrap(), omega);
        let s = sandwich(
            &DMatrix::from_element(1, 1, 4.0),
            &DMatrix::from_element(1, 1, 3.0),
        )
        .unwrap();
        assert!((s[(0, 0)] - 3.0 / 16.0).abs() < 1e-15);
        assert!(sandwich(&DMatrix::zeros(1, 1), &DMatrix::from_element(1, 1, 1.0)).is_err());
        let rank_one = DMatrix::from_row_slice(2, 2, &[0.45, -0.16, -0.16, 0.16 * 0.16 / 0.45]);
        assert!(matches!(
            sandwich(&rank_one, &DMatrix::identity(2, 2)),
            Err(PolyadsError::CollinearFeatures { .. })
        ));
    }

    #[test]
    fn ci_uses_196_at_95() {
        let sigma = DMatrix::from_element(1, 1, 0.25);
        let iv = ci(&sigma, &[1.0], 0.95).unwrap();
        assert_eq!(iv[0], (1.0 - 0.98, 1.0 + 0.98));
        let wide = ci(&sigma, &[1.0], 0.99).unwrap();
        assert!((wide[0].1 - 1.0 - 0.5 * 2.5758293035489).abs() < 1e-9);
    }

    #[test]
    fn single_polyad_scores_and_meat() {
        let g = SparseCountGraph::new(&[2, 2], [([1, 1], 2u64), ([2, 2], 1), ([1, 2], 1)]).unwrap();
        let cov = FnCovariates::new(1, |i: &[u32], o: &mut [f64]| {
            o[0] = (i[0] * i[1]) as f64;
            true
        });
        let recs = enumerate_active(&g, &cov).unwrap();
        assert_eq!(recs.len(), 1);
        let inc = build_incidence(&recs);
        let grads = record_gradients(&recs, &[0.3], 100).unwrap();
        let gq = grads[0][0];
        let scores = edge_scores(&inc, &grads, 1);
        assert_eq!(scores.len(), 4);
        for (_, s) in &scores {
            assert_eq!(s[0], 4.0 * gq);
        }
        let omega = omega_hat(&scores, 1)[(0, 0)];
        assert!((omega - 64.0 * gq * gq).abs() < 1e-12);
        let (prime, touches) = omega_prime_hat(&inc, &grads, 1, u128::MAX).unwrap();
        assert!((prime[(0, 0)] - 16.0 * gq * gq).abs() < 1e-12);
        assert_eq!(touches, 4);
    }

    #[test]
    fn pair_guard_trips() {
        let g = SparseCountGraph::new(&[2, 2], [([1, 1], 2u64), ([2, 2], 1)]).unwrap();
        let cov = FnCovariates::new(1, |i: &[u32], o: &mut [f64]| {
            o[0] = i[0] as f64 * i[1] as f64;
            true
        });
        let recs = enumerate_active(&g, &cov).unwrap();
        let inc = build_incidence(&recs);
        let grads = record_gradients(&recs, &[0.0], 100).unwrap();
        assert!(matches!(
            omega_prime_hat(&inc, &grads, 1, 3),
            Err(PolyadsError::ResourceGuard(_))
        ));
        let cfg = VarianceConfig {
            max_pair_work: 3,
            ..VarianceConfig::default()
        };
        let res = covariance(&recs, &inc, &[0.0], &cfg).unwrap();
        assert!(res.sigma_prime_hat.is_none());
        assert_eq!(res.preferred_ci(), res.ci.as_slice());
    }
}

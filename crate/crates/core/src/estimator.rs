//! Per-polyad conditional-logit loss, orbit moments and the Newton fit.
//!
//! For an active polyad the orbit states are indexed by `j ∈ [0, m + M]`
//! (`j = m` is the observed graph). The log-weight of state `j` is
//! `v_j = j·βᵀX̃ − Σ ln(y_i^{(j)}!)`, and consecutive differences only involve
//! a handful of logarithms, so no factorial is ever evaluated.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::enumeration::ActivePolyadRecord;
use crate::error::{PolyadsError, Result};

/// Records per reduction chunk in deterministic mode.
const CHUNK: usize = 2048;

/// Conditional mean and variance of the orbit position given the orbit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentPair {
    pub mu: f64,
    pub sigma2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Stop when `‖∇L̂‖∞` falls below this.
    pub gradient_tolerance: f64,
    /// Orbits longer than this are truncated around the observed state.
    pub truncation_l: u64,
    /// Added to the Hessian diagonal in the Newton solve.
    pub ridge_epsilon: f64,
    /// Fixed chunked reduction tree (bit-reproducible for any worker count).
    pub deterministic_reduction: bool,
    /// Halve Newton steps until the loss decreases.
    pub damped: bool,
    /// Multiply loss, gradient and Hessian by `2^D`.
    pub multiplicity_scaling: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 50,
            gradient_tolerance: 1e-8,
            truncation_l: 100,
            ridge_epsilon: 0.0,
            deterministic_reduction: true,
            damped: false,
            multiplicity_scaling: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(PolyadsError::InvalidParameter(
                "max_iterations must be ≥ 1".into(),
            ));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(PolyadsError::InvalidParameter(
                "gradient_tolerance must be positive".into(),
            ));
        }
        if self.truncation_l < 2 {
            return Err(PolyadsError::InvalidParameter(
                "truncation_l must be ≥ 2".into(),
            ));
        }
        if !(self.ridge_epsilon >= 0.0) || !self.ridge_epsilon.is_finite() {
            return Err(PolyadsError::InvalidParameter(
                "ridge_epsilon must be finite and ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub beta: Vec<f64>,
    pub loss: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    /// `‖∇L̂(β̂)‖∞`.
    pub gradient_norm: f64,
    pub loss: f64,
    /// `Γ̂ = ∇²L̂(β̂)`, with the `2^D` factor when scaling is on.
    pub hessian: DMatrix<f64>,
    /// `N̂_a = 2^D |Ξ_a★|`.
    pub n_active: usize,
    /// `|Ξ_a★|`.
    pub n_canonical: usize,
    /// One entry per evaluated iterate, starting with `β0`.
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl FitResult {
    /// Number of Newton steps taken.
    pub fn newton_steps(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }
}

/// Loss and moments of one record at linear index `eta = βᵀX̃`.
#[derive(Clone, Copy, Debug)]
struct OrbitTerms {
    loss: f64,
    mu: f64,
    sigma2: f64,
}

/// Window of orbit states `[lo, hi]` kept after truncation.
fn window(rec: &ActivePolyadRecord, l: u64) -> (u64, u64) {
    let (m, big_m) = (rec.m_plus, rec.m_minus);
    if m + big_m + 1 <= l {
        (0, m + big_m)
    } else {
        let half = l / 2;
        (m - half.min(m), m + half.min(big_m))
    }
}

fn orbit_terms(rec: &ActivePolyadRecord, eta: f64, l: u64) -> OrbitTerms {
    let (lo, hi) = window(rec, l);
    let m = rec.m_plus;
    let len = (hi - lo + 1) as usize;
    // v[k] holds v_{lo+k} − v_m.
    let mut v = vec![0.0; len];
    let obs = (m - lo) as usize;
    let step = |j: u64| -> f64 {
        // v_j − v_{j−1}
        let up = j as i64 - m as i64;
        let mut delta = eta;
        for (s, &y) in rec.edge_counts.iter().enumerate() {
            if s.count_ones() % 2 == 0 {
                delta -= ((y as i64 + up) as f64).ln();
            } else {
                delta += ((y as i64 - up + 1) as f64).ln();
            }
        }
        delta
    };
    for k in obs + 1..len {
        v[k] = v[k - 1] + step(lo + k as u64);
    }
    for k in (0..obs).rev() {
        v[k] = v[k + 1] - step(lo + k as u64 + 1);
    }
    let top = (0..len).fold(0, |a, k| if v[k] > v[a] { k } else { a });
    let vmax = v[top];
    // z = 1 + rest; ln_1p(rest) keeps a near-zero loss accurate.
    let mut rest = 0.0;
    let mut first = 0.0;
    for (k, &vk) in v.iter().enumerate() {
        let w = (vk - vmax).exp();
        if k != top {
            rest += w;
        }
        first += w * k as f64;
    }
    let z = 1.0 + rest;
    let mean_k = first / z;
    let mut second = 0.0;
    for (k, &vk) in v.iter().enumerate() {
        let d = k as f64 - mean_k;
        second += (vk - vmax).exp() * d * d;
    }
    OrbitTerms {
        loss: vmax + rest.ln_1p(),
        mu: lo as f64 + mean_k,
        sigma2: second / z,
    }
}

fn linear_index(rec: &ActivePolyadRecord, beta: &[f64]) -> f64 {
    rec.did.iter().zip(beta).map(|(x, b)| x * b).sum()
}

fn check_beta(rec: &ActivePolyadRecord, beta: &[f64]) -> Result<()> {
    if beta.len() != rec.did.len() {
        return Err(PolyadsError::DimensionMismatch(format!(
            "β has {} entries, features have {}",
            beta.len(),
            rec.did.len()
        )));
    }
    check_finite(beta)
}

fn check_finite(beta: &[f64]) -> Result<()> {
    if let Some(k) = beta.iter().position(|b| !b.is_finite()) {
        return Err(PolyadsError::InvalidParameter(format!(
            "β[{k}] = {} is not finite",
            beta[k]
        )));
    }
    Ok(())
}

fn check_active(rec: &ActivePolyadRecord) -> Result<()> {
    if rec.m_plus + rec.m_minus == 0 {
        return Err(PolyadsError::InvalidPolyad(format!(
            "polyad {} is inactive (orbit of size 1)",
            rec.polyad
        )));
    }
    Ok(())
}

/// Conditional mean and variance of `m_ξ(Y)` on the (possibly truncated) orbit.
pub fn evaluate_moments(rec: &ActivePolyadRecord, beta: &[f64], l: u64) -> Result<MomentPair> {
    check_beta(rec, beta)?;
    check_active(rec)?;
    let t = orbit_terms(rec, linear_index(rec, beta), l.max(2));
    Ok(MomentPair {
        mu: t.mu,
        sigma2: t.sigma2,
    })
}

/// `ℓ_ξ(β)` without truncation. An inactive polyad has loss 0.
pub fn polyad_loss(rec: &ActivePolyadRecord, beta: &[f64]) -> Result<f64> {
    polyad_loss_truncated(rec, beta, u64::MAX)
}

/// `ℓ_ξ(β)` restricted to the same window as [`evaluate_moments`].
pub fn polyad_loss_truncated(rec: &ActivePolyadRecord, beta: &[f64], l: u64) -> Result<f64> {
    check_beta(rec, beta)?;
    if rec.m_plus + rec.m_minus == 0 {
        return Ok(0.0);
    }
    Ok(orbit_terms(rec, linear_index(rec, beta), l.max(2)).loss)
}

/// Per-record gradient `(μ − m_ξ)·X̃_ξ` of `ℓ_ξ`, without the `2^D` factor.
pub fn polyad_gradient(rec: &ActivePolyadRecord, beta: &[f64], l: u64) -> Result<Vec<f64>> {
    let mp = evaluate_moments(rec, beta, l)?;
    let r = mp.mu - rec.m_plus as f64;
    Ok(rec.did.iter().map(|x| r * x).collect())
}

#[derive(Clone, Debug)]
struct Partial {
    loss: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl Partial {
    fn zero(p: usize) -> Self {
        Partial {
            loss: 0.0,
            grad: vec![0.0; p],
            hess: vec![0.0; p * p],
        }
    }

    fn add_record(&mut self, rec: &ActivePolyadRecord, beta: &[f64], l: u64) {
        let p = self.grad.len();
        let t = orbit_terms(rec, linear_index(rec, beta), l);
        let r = t.mu - rec.m_plus as f64;
        self.loss += t.loss;
        for a in 0..p {
            let xa = rec.did[a];
            self.grad[a] += r * xa;
            let sx = t.sigma2 * xa;
            for b in 0..=a {
                self.hess[a * p + b] += sx * rec.did[b];
            }
        }
    }

    fn merge(mut self, other: Partial) -> Partial {
        self.loss += other.loss;
        for (a, b) in self.grad.iter_mut().zip(other.grad) {
            *a += b;
        }
        for (a, b) in self.hess.iter_mut().zip(other.hess) {
            *a += b;
        }
        self
    }
}

/// Total loss, gradient and Hessian at `beta`.
pub fn loss_gradient_hessian(
    records: &[ActivePolyadRecord],
    p: usize,
    beta: &[f64],
    config: &FitConfig,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    if beta.len() != p {
        return Err(PolyadsError::DimensionMismatch(format!(
            "β has {} entries, p = {p}",
            beta.len()
        )));
    }
    check_finite(beta)?;
    if let Some(rec) = records.iter().find(|r| r.did.len() != p) {
        return Err(PolyadsError::DimensionMismatch(format!(
            "record {} has {} features, p = {p}",
            rec.polyad,
            rec.did.len()
        )));
    }
    if let Some(rec) = records.iter().find(|r| r.m_plus + r.m_minus == 0) {
        check_active(rec)?;
    }
    let l = config.truncation_l.max(2);
    let chunk_sum = |chunk: &[ActivePolyadRecord]| {
        let mut acc = Partial::zero(p);
        for rec in chunk {
            acc.add_record(rec, beta, l);
        }
        acc
    };
    let total = if config.deterministic_reduction {
        let partials: Vec<Partial> = records.par_chunks(CHUNK).map(chunk_sum).collect();
        partials.into_iter().fold(Partial::zero(p), Partial::merge)
    } else {
        records
            .par_chunks(CHUNK)
            .map(chunk_sum)
            .reduce(|| Partial::zero(p), Partial::merge)
    };

    let scale = match records.first() {
        Some(r) if config.multiplicity_scaling => (1u64 << r.d()) as f64,
        _ => 1.0,
    };
    let grad = DVector::from_iterator(p, total.grad.iter().map(|g| scale * g));
    let mut hess = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..=a {
            let h = scale * total.hess[a * p + b];
            hess[(a, b)] = h;
            hess[(b, a)] = h;
        }
    }
    Ok((scale * total.loss, grad, hess))
}

/// `Σ X̃_ξ X̃_ξᵀ` over the records.
pub fn did_gram(records: &[ActivePolyadRecord], p: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(p, p);
    for rec in records {
        for a in 0..p {
            for b in 0..p {
                g[(a, b)] += rec.did[a] * rec.did[b];
            }
        }
    }
    g
}

/// Eigenvector of the smallest eigenvalue when `m` is numerically singular.
pub(crate) fn null_direction(m: &DMatrix<f64>) -> Option<Vec<f64>> {
    let p = m.nrows();
    if p == 0 {
        return None;
    }
    let trace = m.trace();
    let eig = SymmetricEigen::new(m.clone());
    let (k, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    if trace <= 0.0 || lmin <= 1e-12 * trace {
        Some(eig.eigenvectors.column(k).iter().cloned().collect())
    } else {
        None
    }
}

/// Solves `h x = g`, falling back to the pseudo-inverse when `h` is nearly
/// singular.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let trace = h.trace();
    let eig = SymmetricEigen::new(h.clone());
    let lmin = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if trace > 0.0 && lmin >= 1e-12 * trace {
        if let Some(chol) = h.clone().cholesky() {
            return chol.solve(g);
        }
    }
    warn!("Hessian is nearly singular (λ_min = {lmin:e}, trace = {trace:e}); using pseudo-inverse");
    let cutoff = 1e-12 * trace.abs().max(f64::MIN_POSITIVE);
    let coeffs = eig.eigenvectors.transpose() * g;
    let scaled = DVector::from_iterator(
        coeffs.len(),
        coeffs
            .iter()
            .zip(eig.eigenvalues.iter())
            .map(|(c, &l)| if l > cutoff { c / l } else { 0.0 }),
    );
    &eig.eigenvectors * scaled
}

/// Newton's method on the total loss, starting at `beta0`.
pub fn fit(
    records: &[ActivePolyadRecord],
    p: usize,
    config: &FitConfig,
    beta0: &[f64],
) -> Result<FitResult> {
    config.validate()?;
    if records.is_empty() {
        return Err(PolyadsError::InvalidParameter(
            "no active polyads: the graph carries no information on β".into(),
        ));
    }
    if beta0.len() != p {
        return Err(PolyadsError::DimensionMismatch(format!(
            "β0 has {} entries, p = {p}",
            beta0.len()
        )));
    }
    if config.ridge_epsilon == 0.0 {
        if let Some(direction) = null_direction(&did_gram(records, p)) {
            return Err(PolyadsError::CollinearFeatures { direction });
        }
    }
    let d = records[0].d();
    let ridge = DMatrix::<f64>::identity(p, p) * config.ridge_epsilon;

    let mut beta = DVector::from_column_slice(beta0);
    let mut iterations = Vec::new();
    let mut converged = false;
    let (mut loss, mut grad, mut hess) =
        loss_gradient_hessian(records, p, beta.as_slice(), config)?;
    loop {
        let gnorm = grad.amax();
        iterations.push(IterationRecord {
            beta: beta.as_slice().to_vec(),
            loss,
            gradient_norm: gnorm,
        });
        debug!(
            "newton iterate {}: loss = {loss}, |g| = {gnorm:e}",
            iterations.len() - 1
        );
        if gnorm <= config.gradient_tolerance {
            converged = true;
            break;
        }
        if !gnorm.is_finite() || iterations.len() > config.max_iterations {
            break;
        }
        let step = newton_direction(&(&hess + &ridge), &grad);
        let mut candidate = &beta - &step;
        let mut next = loss_gradient_hessian(records, p, candidate.as_slice(), config);
        if config.damped {
            let mut t = 1.0;
            while t > 1e-10 && next.as_ref().map_or(true, |n| !(n.0 <= loss)) {
                t *= 0.5;
                candidate = &beta - &step * t;
                next = loss_gradient_hessian(records, p, candidate.as_slice(), config);
            }
        }
        match next {
            Ok(n) => {
                beta = candidate;
                (loss, grad, hess) = n;
            }
            Err(PolyadsError::InvalidParameter(msg)) => {
                warn!("Newton iterate left the finite range: {msg}");
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(FitResult {
        beta_hat: beta.as_slice().to_vec(),
        gradient_norm: grad.amax(),
        loss,
        hessian: hess,
        n_active: records.len() << d,
        n_canonical: records.len(),
        iterations,
        converged,
    })
}

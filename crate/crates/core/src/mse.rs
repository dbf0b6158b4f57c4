//! Aggregation coefficients for the squared loss under channel noise.
//!
//! The expected MSE of a noisy linear aggregate splits into the noiseless model
//! error plus `αᵀΣα`. TEM trades the two off with a multiplier `λ`:
//! `α = (ΦᵀΦ + λ N_s Σ)⁻¹ Φᵀy`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::numerics::{lambda_polynomial, quadratic_roots, SpdFactor};
use crate::types::{AggregationWeights, Method, NoiseModel, PredictionMatrix};

/// Bisection stops once `|αᵀΣα − C| ≤ CONSTRAINT_TOL · max(1, C)`.
pub const CONSTRAINT_TOL: f64 = 1e-6;
const MAX_BISECTION_STEPS: usize = 200;
const MAX_BRACKET_DOUBLINGS: usize = 200;
/// Relative slack allowed when checking that `αᵀΣα` decreases along `λ`.
const MONOTONE_SLACK: f64 = 1e-9;

pub fn bem_weights(t: usize) -> Result<AggregationWeights> {
    if t == 0 {
        return Err(Error::Invalid("BEM needs T >= 1".into()));
    }
    AggregationWeights::new(DVector::from_element(t, 1.0 / t as f64), Method::Bem)
}

/// Minimizer of `‖Φα − y‖²` subject to `1ᵀα = 1`.
pub fn gem_weights(phi: &PredictionMatrix, y: &DVector<f64>) -> Result<AggregationWeights> {
    check_len("targets", phi.n_samples(), y.len())?;
    let t = phi.n_regressors();
    let alpha = with_dedup(phi, None, |p, _| {
        let gram = p.transpose() * p;
        let factor = SpdFactor::new(&gram)?;
        let ls = factor.solve(&(p.transpose() * y))?;
        let g1 = factor.solve(&DVector::from_element(p.ncols(), 1.0))?;
        let denom = g1.sum();
        if !(denom.abs() > 0.0) {
            return Err(Error::Singular("GEM constraint row".into()));
        }
        Ok(&ls - &g1 * ((ls.sum() - 1.0) / denom))
    })?;
    debug_assert_eq!(alpha.len(), t);
    AggregationWeights::new(alpha, Method::Gem)
}

/// `α = (ΦᵀΦ + λ N_s Σ)⁻¹ Φᵀy`; `λ = 1` minimizes the expected MSE.
pub fn tem_weights(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    lambda: f64,
) -> Result<AggregationWeights> {
    check_len("targets", phi.n_samples(), y.len())?;
    check_len("noise covariance", phi.n_regressors(), sigma.dim())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let scale = lambda * phi.n_samples() as f64;
    let penalty = (scale > 0.0).then(|| sigma.cov());
    let alpha = with_dedup(phi, penalty, |p, s| {
        let mut system = p.transpose() * p;
        if let Some(s) = s {
            if scale > 0.0 {
                system += s * scale;
            }
        }
        SpdFactor::new(&system)?.solve(&(p.transpose() * y))
    })?;
    AggregationWeights::new(alpha, Method::Tem)
}

/// Result of the constrained TEM problem `min J₂(α)` s.t. `αᵀΣα ≤ C`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemSolution {
    pub weights: AggregationWeights,
    pub lambda: f64,
    /// `αᵀΣα` at the returned weights.
    pub constraint_value: f64,
    /// False when the unconstrained least-squares solution is already feasible.
    pub active: bool,
}

/// Finds the multiplier `λ` that makes the noise-power constraint tight.
///
/// Returns `λ = 0` when the least-squares weights already satisfy `αᵀΣα ≤ C`.
/// Otherwise the bracket `[0, λ_hi]` is doubled until feasible and bisected.
/// A constraint curve that increases with `λ` aborts with [`Error::NonMonotone`].
pub fn solve_lambda_for_constraint(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    c: f64,
) -> Result<TemSolution> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Invalid(format!("constraint level C must be positive, got {c}")));
    }
    let eval = |lambda: f64| -> Result<(AggregationWeights, f64)> {
        let w = tem_weights(phi, y, sigma, lambda)?;
        let v = sigma.quadratic_form(w.alpha())?;
        Ok((w, v))
    };
    let tol = CONSTRAINT_TOL * c.max(1.0);
    let (w0, v0) = eval(0.0)?;
    if v0 <= c {
        return Ok(TemSolution {
            weights: w0,
            lambda: 0.0,
            constraint_value: v0,
            active: false,
        });
    }
    let check_order = |lo: (f64, f64), hi: (f64, f64)| -> Result<()> {
        if hi.1 > lo.1 * (1.0 + MONOTONE_SLACK) + f64::MIN_POSITIVE {
            return Err(Error::NonMonotone(format!(
                "alpha'Sigma alpha rose from {:e} at lambda={:e} to {:e} at lambda={:e}",
                lo.1, lo.0, hi.1, hi.0
            )));
        }
        Ok(())
    };

    let mut lo = (0.0, v0);
    let mut hi_lambda = 1.0;
    let mut hi = eval(hi_lambda)?;
    check_order(lo, (hi_lambda, hi.1))?;
    let mut doublings = 0;
    while hi.1 > c {
        if (hi.1 - c).abs() <= tol {
            return Ok(active(hi, hi_lambda));
        }
        lo = (hi_lambda, hi.1);
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::NonConvergence(format!(
                "no feasible lambda up to {hi_lambda:e}; constraint {:e} > C = {c:e}",
                hi.1
            )));
        }
        hi_lambda *= 2.0;
        hi = eval(hi_lambda)?;
        check_order(lo, (hi_lambda, hi.1))?;
    }
    if (hi.1 - c).abs() <= tol {
        return Ok(active(hi, hi_lambda));
    }

    let mut hi_pt = (hi_lambda, hi.1);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo.0 + hi_pt.0);
        let (w, v) = eval(mid)?;
        check_order(lo, (mid, v))?;
        check_order((mid, v), hi_pt)?;
        if (v - c).abs() <= tol {
            return Ok(active((w, v), mid));
        }
        if v > c {
            lo = (mid, v);
        } else {
            hi_pt = (mid, v);
        }
    }
    Err(Error::NonConvergence(format!(
        "lambda bisection stalled in [{:e}, {:e}] with constraint values ({:e}, {:e}), C = {c:e}",
        lo.0, hi_pt.0, lo.1, hi_pt.1
    )))
}

fn active((weights, constraint_value): (AggregationWeights, f64), lambda: f64) -> TemSolution {
    TemSolution {
        weights,
        lambda,
        constraint_value,
        active: true,
    }
}

/// Fast estimate of the constraint multiplier from the quadratic approximation.
///
/// The polynomial roots `r` solve the constraint for `Z = (I + r G⁻¹Σ) G⁻¹`, the
/// first-order expansion of `(G + λ N_s Σ)⁻¹` with `r = −λ N_s`. A root is accepted
/// when it maps to `λ ≥ 0`, keeps `λ N_s ρ(G⁻¹Σ) < 1`, and the exact TEM weights at
/// that `λ` land within 25% of `C`. The smallest accepted `λ` is returned.
///
/// [`Error::NoRoot`] signals that the caller should fall back to
/// [`solve_lambda_for_constraint`].
pub fn approx_lambda(
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    c: f64,
) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Invalid(format!("constraint level C must be positive, got {c}")));
    }
    if sigma.is_zero() {
        return Err(Error::NoRoot("zero noise covariance: constraint does not depend on lambda".into()));
    }
    let q = lambda_polynomial(phi, sigma, y, c)?;
    let roots = quadratic_roots(q)?;
    let n_s = phi.n_samples() as f64;
    let rho = spectral_radius_ginv_sigma(phi, sigma)?;
    let mut candidates: Vec<f64> = roots.iter().map(|r| -r / n_s).filter(|l| *l >= 0.0).collect();
    candidates.sort_by(|a, b| a.total_cmp(b));
    for lambda in candidates {
        if lambda * n_s * rho >= 1.0 {
            continue;
        }
        let w = tem_weights(phi, y, sigma, lambda)?;
        let v = sigma.quadratic_form(w.alpha())?;
        if (v - c).abs() <= 0.25 * c {
            return Ok(lambda);
        }
    }
    Err(Error::NoRoot(format!(
        "no admissible quadratic root among {roots:?} (rho(G^-1 Sigma) = {rho:e})"
    )))
}

/// Largest eigenvalue of `G⁻¹Σ`, computed from the symmetric `L⁻¹ Σ L⁻ᵀ`.
fn spectral_radius_ginv_sigma(phi: &PredictionMatrix, sigma: &NoiseModel) -> Result<f64> {
    let p = phi.values();
    let factor = SpdFactor::new(&(p.transpose() * p))?;
    if factor.jittered() {
        return Err(Error::Singular("ΦᵀΦ is rank deficient".into()));
    }
    let l = factor.l();
    let left = l
        .solve_lower_triangular(sigma.cov())
        .ok_or_else(|| Error::Singular("triangular solve".into()))?;
    let both = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Singular("triangular solve".into()))?;
    let sym = (&both + both.transpose()) * 0.5;
    Ok(sym.symmetric_eigenvalues().iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// `total = model_term + λ · noise_term`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseBreakdown {
    pub total: f64,
    /// `(1/N_s) ‖Φα − y‖²`
    pub model_term: f64,
    /// `αᵀΣα`
    pub noise_term: f64,
}

pub fn expected_mse(
    alpha: &AggregationWeights,
    phi: &PredictionMatrix,
    y: &DVector<f64>,
    sigma: &NoiseModel,
    lambda: f64,
) -> Result<MseBreakdown> {
    check_len("targets", phi.n_samples(), y.len())?;
    check_len("noise covariance", alpha.len(), sigma.dim())?;
    let residual = phi.aggregate(alpha.alpha())? - y;
    let model_term = residual.norm_squared() / phi.n_samples() as f64;
    let noise_term = sigma.quadratic_form(alpha.alpha())?;
    Ok(MseBreakdown {
        total: model_term + lambda * noise_term,
        model_term,
        noise_term,
    })
}

/// Merges prediction columns that are exactly equal and whose difference carries no
/// penalty (`sigma` absent, or `(e_j − e_k)ᵀΣ(e_j − e_k) = 0`), solves the reduced
/// system and splits each merged weight equally across its duplicates. Such columns
/// make the normal equations singular, and rounding can let a plain factorization
/// through with an arbitrary split.
fn with_dedup<F>(phi: &PredictionMatrix, sigma: Option<&DMatrix<f64>>, solve: F) -> Result<DVector<f64>>
where
    F: Fn(&DMatrix<f64>, Option<&DMatrix<f64>>) -> Result<DVector<f64>>,
{
    let groups = duplicate_groups(phi.values(), sigma);
    if groups.len() == phi.n_regressors() {
        return solve(phi.values(), sigma);
    }
    log::debug!(
        "merging {} duplicate prediction columns into {}",
        phi.n_regressors(),
        groups.len()
    );
    let p = phi.values();
    let reduced_phi = DMatrix::from_fn(p.nrows(), groups.len(), |i, g| p[(i, groups[g][0])]);
    let reduced_sigma = sigma.map(|s| {
        DMatrix::from_fn(groups.len(), groups.len(), |g, h| {
            let mut acc = 0.0;
            for &j in &groups[g] {
                for &k in &groups[h] {
                    acc += s[(j, k)];
                }
            }
            acc / (groups[g].len() * groups[h].len()) as f64
        })
    });
    let reduced = solve(&reduced_phi, reduced_sigma.as_ref())?;
    let mut alpha = DVector::zeros(phi.n_regressors());
    for (g, members) in groups.iter().enumerate() {
        let share = reduced[g] / members.len() as f64;
        for &j in members {
            alpha[j] = share;
        }
    }
    Ok(alpha)
}

/// Column indices grouped by exact equality and zero difference penalty, in order of
/// first appearance.
fn duplicate_groups(p: &DMatrix<f64>, sigma: Option<&DMatrix<f64>>) -> Vec<Vec<usize>> {
    let free = |j: usize, k: usize| match sigma {
        None => true,
        Some(s) => s[(j, j)] + s[(k, k)] - s[(j, k)] - s[(k, j)] <= 0.0,
    };
    let mut groups: Vec<Vec<usize>> = Vec::new();
    'cols: for j in 0..p.ncols() {
        for g in groups.iter_mut() {
            if p.column(g[0]) == p.column(j) && free(g[0], j) {
                g.push(j);
                continue 'cols;
            }
        }
        groups.push(vec![j]);
    }
    groups
}

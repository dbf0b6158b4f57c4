//! Small dense linear algebra and normal-distribution helpers.
//!
//! Inverses are never formed explicitly: every formula goes through a Cholesky
//! factor ([`SpdFactor`]) or a bordered KKT solve. Systems that fail to factor get
//! a single diagonal jitter of `1e-10 · trace / T` before a singularity error is
//! raised.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_len, Error, Result};
use crate::types::{NoiseModel, PredictionMatrix};

/// Relative jitter added to the diagonal on the single retry.
pub const JITTER: f64 = 1e-10;

/// Smallest accepted squared Cholesky pivot, relative to the largest diagonal entry.
const PIVOT_FLOOR: f64 = 1e-13;

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Cholesky factorization of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jittered: bool,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Invalid(format!(
                "expected a non-empty square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        if let Some(chol) = try_cholesky(a) {
            return Ok(Self {
                chol,
                jittered: false,
            });
        }
        let n = a.nrows();
        let scale = (a.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
        let mut jittered = a.clone();
        for i in 0..n {
            jittered[(i, i)] += JITTER * scale;
        }
        try_cholesky(&jittered)
            .map(|chol| Self {
                chol,
                jittered: true,
            })
            .ok_or_else(|| Error::Singular(format!("{n}x{n} system after diagonal jitter")))
    }

    /// Whether the jitter retry was needed.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("right-hand side", self.dim(), b.len())?;
        Ok(self.chol.solve(b))
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len("right-hand side rows", self.dim(), b.nrows())?;
        Ok(self.chol.solve(b))
    }

    /// Lower-triangular factor `L` with `A = L Lᵀ`.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

fn try_cholesky(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let sym = (a + a.transpose()) * 0.5;
    let max_diag = sym.diagonal().amax();
    let chol = Cholesky::new(sym)?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    (min_pivot > PIVOT_FLOOR * max_diag && min_pivot.is_finite()).then_some(chol)
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    SpdFactor::new(a)?.solve(b)
}

/// Minimizer of `sᵀ S s` subject to `1ᵀ s = 1`, and the minimal value.
///
/// The minimal value is the smallest generalized eigenvalue of the pair
/// `(S, 11ᵀ)` and the vector is the matching eigenvector scaled to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GenEigResult {
    pub value: f64,
    pub vector: DVector<f64>,
}

pub fn min_constrained_quadratic(s: &DMatrix<f64>) -> Result<GenEigResult> {
    if !s.is_square() || s.nrows() == 0 {
        return Err(Error::Invalid("expected a non-empty square matrix".into()));
    }
    let asym = max_asymmetry(s);
    if asym > 1e-10 * s.amax().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let t = s.nrows();
    let vector = kkt_minimizer(s).unwrap_or_else(|| pseudo_inverse_minimizer(s));
    let value = vector.dot(&(s * &vector)).max(0.0);
    debug_assert!((vector.sum() - 1.0).abs() < 1e-8, "T={t}");
    Ok(GenEigResult { value, vector })
}

/// Solves the bordered system `[[S, 1], [1ᵀ, 0]] [s; ν] = [0; 1]`.
fn kkt_minimizer(s: &DMatrix<f64>) -> Option<DVector<f64>> {
    let t = s.nrows();
    let mut kkt = DMatrix::zeros(t + 1, t + 1);
    kkt.view_mut((0, 0), (t, t)).copy_from(s);
    for i in 0..t {
        kkt[(i, t)] = 1.0;
        kkt[(t, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(t + 1);
    rhs[t] = 1.0;
    let sol = kkt.clone().lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let residual = (&kkt * &sol - &rhs).amax();
    let scale = 1.0 + s.amax() * sol.amax();
    if residual > 1e-9 * scale {
        return None;
    }
    let v = sol.rows(0, t).into_owned();
    // normalize away rounding in the constraint row
    let sum = v.sum();
    (sum.abs() > 0.5).then(|| v / sum)
}

/// Fallback for singular `S`: any null-space direction with nonzero sum gives value 0;
/// otherwise `S⁺1 / 1ᵀS⁺1`.
fn pseudo_inverse_minimizer(s: &DMatrix<f64>) -> DVector<f64> {
    let t = s.nrows();
    let eig = ((s + s.transpose()) * 0.5).symmetric_eigen();
    let tol = 1e-12 * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let ones = DVector::from_element(t, 1.0);
    let mut null_proj = DVector::zeros(t);
    let mut pinv_ones = DVector::zeros(t);
    for k in 0..t {
        let v = eig.eigenvectors.column(k);
        let coef = v.dot(&ones);
        if eig.eigenvalues[k] <= tol {
            null_proj += v * coef;
        } else {
            pinv_ones += v * (coef / eig.eigenvalues[k]);
        }
    }
    let null_sum = null_proj.sum();
    if null_sum.abs() > 1e-12 * t as f64 {
        null_proj / null_sum
    } else {
        let sum = pinv_ones.sum();
        pinv_ones / sum
    }
}

/// Coefficients of `a λ² + b λ + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticCoeffs {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

/// Quadratic whose roots solve `yᵀΦ Zᵀ Σ Z Φᵀy = C` with
/// `Z = (I + λ G⁻¹Σ) G⁻¹` and `G = ΦᵀΦ`.
///
/// Writing `w = G⁻¹Φᵀy` and `u = G⁻¹Σw`, the left side is `(w + λu)ᵀ Σ (w + λu)`,
/// so `a = uᵀΣu`, `b = 2uᵀΣw`, `c = wᵀΣw − C`.
pub fn lambda_polynomial(
    phi: &PredictionMatrix,
    sigma: &NoiseModel,
    y: &DVector<f64>,
    c: f64,
) -> Result<QuadraticCoeffs> {
    let (gram, rhs) = normal_equations(phi, sigma, y)?;
    let factor = exact_factor(&gram)?;
    let s = sigma.cov();
    let w = factor.solve(&rhs)?;
    let sw = s * &w;
    let u = factor.solve(&sw)?;
    let su = s * &u;
    let coeffs = QuadraticCoeffs {
        a: u.dot(&su),
        b: 2.0 * u.dot(&sw),
        c: w.dot(&sw) - c,
    };
    if log::log_enabled!(log::Level::Debug) {
        let unscaled = lambda_polynomial_unscaled(phi, sigma, y, c)?;
        log::debug!(
            "lambda polynomial: expanded (a={:e}, b={:e}, c={:e}) vs unscaled (a={:e}, b={:e}, c={:e})",
            coeffs.a,
            coeffs.b,
            coeffs.c,
            unscaled.a,
            unscaled.b,
            unscaled.c
        );
    }
    Ok(coeffs)
}

/// Coefficient variant with fewer inverse-Gram factors: with `v = ΣΦᵀy`,
/// `a = vᵀG⁻¹ΣG⁻¹v`, `b = 2vᵀG⁻¹v`, `c = yᵀΦΣΦᵀy − C`. It agrees with
/// [`lambda_polynomial`] only when `ΦᵀΦ = I`; logged next to it at debug level.
pub fn lambda_polynomial_unscaled(
    phi: &PredictionMatrix,
    sigma: &NoiseModel,
    y: &DVector<f64>,
    c: f64,
) -> Result<QuadraticCoeffs> {
    let (gram, rhs) = normal_equations(phi, sigma, y)?;
    let factor = exact_factor(&gram)?;
    let s = sigma.cov();
    let v = s * &rhs;
    let ginv_v = factor.solve(&v)?;
    Ok(QuadraticCoeffs {
        a: ginv_v.dot(&(s * &ginv_v)),
        b: 2.0 * v.dot(&ginv_v),
        c: rhs.dot(&v) - c,
    })
}

fn normal_equations(
    phi: &PredictionMatrix,
    sigma: &NoiseModel,
    y: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_len("targets", phi.n_samples(), y.len())?;
    check_len("noise covariance", phi.n_regressors(), sigma.dim())?;
    let p = phi.values();
    Ok((p.transpose() * p, p.transpose() * y))
}

fn exact_factor(gram: &DMatrix<f64>) -> Result<SpdFactor> {
    let factor = SpdFactor::new(gram)?;
    if factor.jittered() {
        return Err(Error::Singular("ΦᵀΦ is rank deficient".into()));
    }
    Ok(factor)
}

/// Real roots of `a λ² + b λ + c` in ascending order.
///
/// `a = b = 0` has no isolated roots and is reported as [`Error::NoRoot`].
pub fn quadratic_roots(q: QuadraticCoeffs) -> Result<Vec<f64>> {
    let QuadraticCoeffs { a, b, c } = q;
    if ![a, b, c].iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("quadratic coefficient".into()));
    }
    if a == 0.0 {
        if b == 0.0 {
            return Err(Error::NoRoot(format!("degenerate polynomial with c = {c:e}")));
        }
        return Ok(vec![-c / b]);
    }
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        if disc > -1e-14 * b * b {
            disc = 0.0;
        } else {
            return Ok(Vec::new());
        }
    }
    if disc == 0.0 {
        return Ok(vec![-b / (2.0 * a)]);
    }
    // stable pairing avoids cancellation between -b and sqrt(disc)
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 {
        let r = (-c / a).sqrt();
        (-r, r)
    } else {
        (q / a, c / q)
    };
    Ok(if r1 <= r2 { vec![r1, r2] } else { vec![r2, r1] })
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

pub fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t * FRAC_1_SQRT_2)
}

/// Standard normal density and distribution function at `t`.
pub fn normal_funcs(t: f64) -> (f64, f64) {
    (normal_pdf(t), normal_cdf(t))
}

/// `√(2/π)`, the mean of a standard half-normal.
pub fn sqrt_2_over_pi() -> f64 {
    (2.0 / PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * 0.1
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose()
    }

    #[test]
    fn solve_spd_examples() {
        let x = solve_spd(&DMatrix::identity(3, 3), &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0, 3.0]);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let x = solve_spd(&a, &DVector::from_vec(vec![2.0, 4.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solve_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_spd(&mut rng, 5);
            let b = DVector::from_fn(5, |_, _| rng.random_range(-3.0..3.0));
            let x = solve_spd(&a, &b).unwrap();
            assert!((&a * &x - &b).amax() <= 1e-8 * (1.0 + b.amax()));
        }
    }

    #[test]
    fn solve_spd_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            solve_spd(&a, &DVector::from_vec(vec![1.0, 1.0])),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn solve_spd_jitters_rank_deficient() {
        // duplicated column: Gram matrix is exactly singular
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = SpdFactor::new(&a).unwrap();
        assert!(f.jittered());
        let x = f.solve(&DVector::from_vec(vec![2.0, 2.0])).unwrap();
        assert!((x[0] - x[1]).abs() < 1e-6);
    }

    #[test]
    fn min_quadratic_identity() {
        let r = min_constrained_quadratic(&DMatrix::identity(4, 4)).unwrap();
        assert!((r.value - 0.25).abs() < 1e-14);
        assert!(r.vector.iter().all(|v| (v - 0.25).abs() < 1e-14));
    }

    #[test]
    fn min_quadratic_two_dim_closed_form() {
        let (s1, s2) = (1.0, 1e6);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![s1, s2]));
        let r = min_constrained_quadratic(&s).unwrap();
        let expected = [s2 / (s1 + s2), s1 / (s1 + s2)];
        assert!((r.vector[0] - expected[0]).abs() < 1e-12);
        assert!((r.vector[1] - expected[1]).abs() < 1e-12);
        assert!((r.value - s1 * s2 / (s1 + s2)).abs() < 1e-9);
    }

    #[test]
    fn min_quadratic_beats_random_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let s = random_psd(&mut rng, 3, 3);
            let r = min_constrained_quadratic(&s).unwrap();
            assert!((r.vector.sum() - 1.0).abs() < 1e-10);
            assert!((r.value - r.vector.dot(&(&s * &r.vector))).abs() < 1e-8);
            for _ in 0..1000 {
                let mut v = DVector::<f64>::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
                let sum = v.sum();
                if sum.abs() < 1e-3 {
                    continue;
                }
                v /= sum;
                assert!(r.value <= v.dot(&(&s * &v)) + 1e-12);
            }
        }
    }

    #[test]
    fn min_quadratic_singular_fallbacks() {
        let r = min_constrained_quadratic(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(r.value, 0.0);
        assert!((r.vector.sum() - 1.0).abs() < 1e-12);
        // null space orthogonal to 1: S = (e1 - e2)(e1 - e2)ᵀ
        let s = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let r = min_constrained_quadratic(&s).unwrap();
        assert!(r.value.abs() < 1e-12);
        // rank-one PSD whose null space contains a direction with nonzero sum
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let r = min_constrained_quadratic(&s).unwrap();
        assert!(r.value.abs() < 1e-12);
        assert!((r.vector[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn min_quadratic_rejects_asymmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(matches!(min_constrained_quadratic(&s), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn lambda_polynomial_identity_instance() {
        let phi = PredictionMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let sigma = NoiseModel::diagonal(&[1.0, 1.0]).unwrap();
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let q = lambda_polynomial(&phi, &sigma, &y, 0.7).unwrap();
        assert!((q.a - 2.0).abs() < 1e-14);
        assert!((q.b - 4.0).abs() < 1e-14);
        assert!((q.c - (2.0 - 0.7)).abs() < 1e-14);
        // with ΦᵀΦ = I both coefficient forms coincide
        let u = lambda_polynomial_unscaled(&phi, &sigma, &y, 0.7).unwrap();
        assert!((u.a - q.a).abs() < 1e-14 && (u.b - q.b).abs() < 1e-14 && (u.c - q.c).abs() < 1e-14);
    }

    #[test]
    fn lambda_polynomial_zero_noise() {
        let phi = PredictionMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let q = lambda_polynomial(&phi, &NoiseModel::zeros(2), &DVector::from_vec(vec![1.0, 2.0]), 0.3).unwrap();
        assert_eq!((q.a, q.b, q.c), (0.0, 0.0, -0.3));
    }

    /// Evaluates `yᵀΦ Zᵀ Σ Z Φᵀy` with `Z` built from explicit inverses.
    fn direct_lhs(phi: &DMatrix<f64>, s: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> f64 {
        let g = phi.transpose() * phi;
        let ginv = g.clone().try_inverse().unwrap();
        let t = g.nrows();
        let z = (DMatrix::identity(t, t) + &ginv * s * lambda) * &ginv;
        let v = &z * phi.transpose() * y;
        v.dot(&(s * &v))
    }

    #[test]
    fn lambda_polynomial_roots_satisfy_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        for _ in 0..30 {
            let phi = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
            let s = random_psd(&mut rng, 3, 3) * 0.2;
            let lhs0 = direct_lhs(&phi, &s, &y, 0.0);
            let c = lhs0 * rng.random_range(1.2..3.0);
            let pm = PredictionMatrix::new(phi.clone()).unwrap();
            let nm = NoiseModel::new(s.clone(), None).unwrap();
            let q = lambda_polynomial(&pm, &nm, &y, c).unwrap();
            for r in quadratic_roots(q).unwrap() {
                let lhs = direct_lhs(&phi, &s, &y, r);
                assert!((lhs - c).abs() <= 1e-6 * c, "lhs {lhs} vs C {c}");
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn quadratic_roots_examples() {
        assert_eq!(quadratic_roots(QuadraticCoeffs { a: 1.0, b: -3.0, c: 2.0 }).unwrap(), vec![1.0, 2.0]);
        assert_eq!(quadratic_roots(QuadraticCoeffs { a: 0.0, b: 2.0, c: -4.0 }).unwrap(), vec![2.0]);
        assert!(quadratic_roots(QuadraticCoeffs { a: 1.0, b: 0.0, c: 1.0 }).unwrap().is_empty());
        assert!(matches!(
            quadratic_roots(QuadraticCoeffs { a: 0.0, b: 0.0, c: 1.0 }),
            Err(Error::NoRoot(_))
        ));
        assert_eq!(quadratic_roots(QuadraticCoeffs { a: 1.0, b: 0.0, c: -4.0 }).unwrap(), vec![-2.0, 2.0]);
    }

    /// Maclaurin series of erf, summed in extended steps; accurate to ~1e-16 for |x| ≤ 3.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-20 {
            n += 1.0;
            term *= -x * x / n;
            sum += term / (2.0 * n + 1.0);
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn normal_funcs_examples() {
        let (pdf, cdf) = normal_funcs(0.0);
        assert!((pdf - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(cdf, 0.5);
        assert!((normal_cdf(8.0) - 1.0).abs() < 1e-12);
        let oracle = 0.5 * (1.0 + erf_series(1.0 / 2f64.sqrt()));
        assert!((normal_cdf(1.0) - oracle).abs() < 1e-12);
        assert!((normal_cdf(1.0) - 0.841_344_746_1).abs() < 1e-10);
        for x in [-2.5, -1.0, -0.3, 0.2, 0.9, 1.7, 2.9] {
            let oracle = 0.5 * (1.0 + erf_series(x / 2f64.sqrt()));
            assert!((normal_cdf(x) - oracle).abs() < 1e-12, "x={x}");
        }
    }

    proptest! {
        #[test]
        fn cdf_symmetric_and_monotone(t in -10.0f64..10.0, dt in 0.0f64..1.0) {
            prop_assert!((normal_cdf(t) + normal_cdf(-t) - 1.0).abs() < 1e-12);
            prop_assert!(normal_cdf(t + dt) >= normal_cdf(t));
        }

        #[test]
        fn min_quadratic_scale_invariance(seed in 0u64..1000, c in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_spd(&mut rng, 4);
            let base = min_constrained_quadratic(&s).unwrap();
            let scaled = min_constrained_quadratic(&(&s * c)).unwrap();
            prop_assert!((scaled.value - c * base.value).abs() <= 1e-8 * (c * base.value).max(1.0));
            prop_assert!((scaled.vector - base.vector).amax() < 1e-8);
        }

        #[test]
        fn solve_spd_multiplies_back(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + (seed % 6) as usize;
            let a = random_spd(&mut rng, n);
            let b = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let x = solve_spd(&a, &b).unwrap();
            prop_assert!((&a * &x - &b).amax() <= 1e-8 * (1.0 + b.amax()));
        }
    }
}

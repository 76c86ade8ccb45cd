//! Gaussian-copula machinery: regularized correlation models, multivariate
//! normal orthant CDF (Genz separation-of-variables with randomized
//! quasi-Monte Carlo), the copula density, and correlated-uniform sampling.

use crate::error::{Error, Result};
use crate::specfun;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Saturation bounds for the normal-quantile map: Φ(±8.2) is within 1e-16
/// of {0, 1}, so arguments beyond that cannot change any orthant estimate.
pub const PHI_SATURATION: f64 = 8.2;
const U_SATURATION: f64 = 1e-15;

/// φ⁻¹(u) = √2·erf⁻¹(2u−1), totalized: exact 0 and 1 map to ∓∞ sentinels,
/// near-boundary u saturates at ±8.2.
pub fn phi_inv_saturated(u: f64) -> f64 {
    if u <= 0.0 {
        f64::NEG_INFINITY
    } else if u >= 1.0 {
        f64::INFINITY
    } else if u <= U_SATURATION {
        -PHI_SATURATION
    } else if u >= 1.0 - U_SATURATION {
        PHI_SATURATION
    } else {
        SQRT_2 * specfun::erf_inv(2.0 * u - 1.0).expect("u strictly interior")
    }
}

// ---------------------------------------------------------------------------
// Correlation model
// ---------------------------------------------------------------------------

/// A correlation matrix prepared for copula work: eigenvalue-clipped to be
/// positive definite, re-normalized to unit diagonal, with its Cholesky
/// factor, inverse, and log-determinant.
#[derive(Debug, Clone)]
pub struct CorrelationModel {
    dim: usize,
    matrix: DMatrix<f64>,
    regularized: DMatrix<f64>,
    factor: DMatrix<f64>,
    inverse: DMatrix<f64>,
    log_det: f64,
    eps_regularization: f64,
    ones_quad: f64,
}

impl CorrelationModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The raw matrix this model was built from.
    pub fn raw_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn regularized(&self) -> &DMatrix<f64> {
        &self.regularized
    }

    /// Lower-triangular Cholesky factor of the regularized matrix.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Eigenvalue floor that was actually applied (0 when no clipping fired).
    pub fn eps_regularization(&self) -> f64 {
        self.eps_regularization
    }

    /// 1ᵀ R⁻¹ 1, the quadratic form behind the equicoordinate copula density.
    pub fn ones_quad(&self) -> f64 {
        self.ones_quad
    }
}

pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-10;

/// Build a `CorrelationModel`: verify symmetry/unit diagonal, clip
/// eigenvalues below `eps` to `eps`, reassemble with the diagonal
/// re-normalized to 1, then factorize.
pub fn build_correlation_model(matrix: &DMatrix<f64>, eps: f64) -> Result<CorrelationModel> {
    let n = matrix.nrows();
    if n == 0 || matrix.ncols() != n {
        return Err(Error::InvalidMatrix("matrix must be square".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidMatrix(format!("eps = {eps} must be >= 0")));
    }
    for i in 0..n {
        if (matrix[(i, i)] - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidMatrix(format!(
                "diagonal entry ({i},{i}) = {} is not 1",
                matrix[(i, i)]
            )));
        }
        for j in 0..i {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-10 {
                return Err(Error::InvalidMatrix(format!(
                    "matrix not symmetric at ({i},{j})"
                )));
            }
            if matrix[(i, j)].abs() > 1.0 + 1e-10 {
                return Err(Error::InvalidMatrix(format!(
                    "|entry ({i},{j})| = {} exceeds 1",
                    matrix[(i, j)].abs()
                )));
            }
        }
    }

    let mut regularized = matrix.clone();
    let mut applied = 0.0_f64;
    // Clipping then re-normalizing can nudge an eigenvalue back below the
    // floor; iterate until the floor holds (converges in one or two passes).
    for _ in 0..8 {
        let eig = regularized.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        if min_eig >= eps * (1.0 - 1e-6) {
            break;
        }
        applied = eps;
        let clipped = DVector::from_fn(n, |i, _| eig.eigenvalues[i].max(eps));
        let v = &eig.eigenvectors;
        let mut rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
                rebuilt[(i, j)] = avg;
                rebuilt[(j, i)] = avg;
            }
        }
        let d = DVector::from_fn(n, |i, _| rebuilt[(i, i)].sqrt());
        for i in 0..n {
            for j in 0..n {
                rebuilt[(i, j)] /= d[i] * d[j];
            }
        }
        regularized = rebuilt;
    }

    let chol = regularized
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidMatrix("regularized matrix not positive definite".into()))?;
    let factor = chol.l();
    let log_det: f64 = (0..n).map(|i| 2.0 * factor[(i, i)].ln()).sum();
    let inverse = chol.inverse();
    let ones_quad = inverse.iter().sum();

    Ok(CorrelationModel {
        dim: n,
        matrix: matrix.clone(),
        regularized,
        factor,
        inverse,
        log_det,
        eps_regularization: applied,
        ones_quad,
    })
}

// ---------------------------------------------------------------------------
// Multivariate normal CDF (Genz SOV + randomized QMC)
// ---------------------------------------------------------------------------

/// Default number of random lattice shifts used for the error estimate.
const QMC_SHIFTS: usize = 12;
/// Total sample budget across all adaptive rounds.
const QMC_BUDGET: usize = 1 << 20;

/// Equicoordinate orthant probability Φ_R(t, ..., t). ±∞ sentinels return
/// exactly 0 and 1. Estimated absolute error ≤ `tol`; deterministic for a
/// fixed `seed`; errors out (carrying the best estimate) if the sample
/// budget is exhausted first.
pub fn mvn_cdf_equicoordinate(
    t: f64,
    model: &CorrelationModel,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    let limits = vec![t; model.dim()];
    mvn_cdf(&limits, model, tol, seed)
}

/// General lower-orthant probability Φ_R(b₁, ..., b_N).
pub fn mvn_cdf(limits: &[f64], model: &CorrelationModel, tol: f64, seed: u64) -> Result<f64> {
    if limits.len() != model.dim() {
        return Err(Error::domain("mvn_cdf", "limit/model dimension mismatch"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("mvn_cdf", format!("tol = {tol} must be > 0")));
    }
    if limits.iter().any(|b| b.is_nan()) {
        return Err(Error::domain("mvn_cdf", "NaN limit"));
    }
    if limits.iter().any(|&b| b == f64::NEG_INFINITY) {
        return Ok(0.0);
    }
    if limits.iter().all(|&b| b == f64::INFINITY) {
        return Ok(1.0);
    }
    let finite: Vec<f64> = limits.iter().map(|&b| b.min(PHI_SATURATION * 4.0)).collect();
    if model.dim() == 1 {
        return Ok(specfun::norm_cdf(finite[0]));
    }

    let plan = GenzPlan::new(&finite, model);
    let mut points = 256usize;
    let mut used = 0usize;
    let mut best = (f64::NAN, f64::INFINITY);
    while used + points * QMC_SHIFTS <= QMC_BUDGET {
        let (est, err) = plan.run(points, QMC_SHIFTS, seed);
        used += points * QMC_SHIFTS;
        if err < best.1 {
            best = (est, err);
        }
        if err <= tol {
            return Ok(est.clamp(0.0, 1.0));
        }
        points *= 2;
    }
    Err(Error::NonConvergence {
        estimate: best.0.clamp(0.0, 1.0),
        error_bound: best.1,
        target: tol,
    })
}

/// Fixed-budget estimate with no adaptivity: the same lattice and shifts
/// regardless of the limits, which makes the estimate a smooth function of
/// `t` — exactly what finite-difference derivatives of the CDF need.
pub fn mvn_cdf_fixed(
    limits: &[f64],
    model: &CorrelationModel,
    points: usize,
    shifts: usize,
    seed: u64,
) -> f64 {
    if limits.iter().any(|&b| b == f64::NEG_INFINITY) {
        return 0.0;
    }
    if limits.iter().all(|&b| b == f64::INFINITY) {
        return 1.0;
    }
    let finite: Vec<f64> = limits.iter().map(|&b| b.min(PHI_SATURATION * 4.0)).collect();
    if model.dim() == 1 {
        return specfun::norm_cdf(finite[0]);
    }
    let plan = GenzPlan::new(&finite, model);
    plan.run(points, shifts, seed).0.clamp(0.0, 1.0)
}

/// Pivoted Cholesky + limit ordering for the Genz integrand.
struct GenzPlan {
    n: usize,
    lower: DMatrix<f64>,
    limits: Vec<f64>,
}

impl GenzPlan {
    /// Greedy variable reordering: at each elimination step pick the
    /// remaining variable with the smallest conditional probability mass,
    /// substituting truncated-normal expectations for integrated-out
    /// variables. Ties (e.g. equicoordinate limits on an exchangeable R)
    /// resolve to the lowest index.
    fn new(limits: &[f64], model: &CorrelationModel) -> Self {
        let n = model.dim();
        let mut c = model.regularized().clone();
        let mut b = limits.to_vec();
        let mut y = vec![0.0_f64; n];

        for i in 0..n {
            let mut best_j = i;
            let mut best_p = f64::INFINITY;
            for j in i..n {
                let mut dot = 0.0;
                let mut sq = 0.0;
                for k in 0..i {
                    dot += c[(j, k)] * y[k];
                    sq += c[(j, k)] * c[(j, k)];
                }
                let var = (c[(j, j)] - sq).max(1e-14);
                let p = specfun::norm_cdf((b[j] - dot) / var.sqrt());
                if p < best_p {
                    best_p = p;
                    best_j = j;
                }
            }
            if best_j != i {
                c.swap_rows(i, best_j);
                c.swap_columns(i, best_j);
                b.swap(i, best_j);
            }
            let mut sq = 0.0;
            for k in 0..i {
                sq += c[(i, k)] * c[(i, k)];
            }
            let diag = (c[(i, i)] - sq).max(1e-14).sqrt();
            c[(i, i)] = diag;
            for j in (i + 1)..n {
                let mut dot = 0.0;
                for k in 0..i {
                    dot += c[(j, k)] * c[(i, k)];
                }
                c[(j, i)] = (c[(j, i)] - dot) / diag;
            }
            let mut dot = 0.0;
            for k in 0..i {
                dot += c[(i, k)] * y[k];
            }
            let z = (b[i] - dot) / diag;
            let e = specfun::norm_cdf(z).max(1e-300);
            // Expected value of a standard normal truncated to (−∞, z].
            y[i] = -specfun::norm_pdf(z) / e;
        }

        GenzPlan {
            n,
            lower: c,
            limits: b,
        }
    }

    /// Integrand along one lattice point w ∈ [0,1)^{n−1}.
    fn integrand(&self, w: &[f64]) -> f64 {
        let n = self.n;
        let mut y = [0.0_f64; 64];
        let mut ybuf: Vec<f64>;
        let y: &mut [f64] = if n <= 64 {
            &mut y[..n]
        } else {
            ybuf = vec![0.0; n];
            &mut ybuf[..]
        };
        let mut e_prev = specfun::norm_cdf(self.limits[0] / self.lower[(0, 0)]);
        let mut f = e_prev;
        for i in 1..n {
            let u = (w[i - 1] * e_prev).clamp(1e-300, 1.0 - 1e-16);
            y[i - 1] = specfun::norm_quantile_estimate(u);
            let mut dot = 0.0;
            for k in 0..i {
                dot += self.lower[(i, k)] * y[k];
            }
            let q = (self.limits[i] - dot) / self.lower[(i, i)];
            let e = specfun::norm_cdf(q);
            f *= e;
            e_prev = e;
            if f <= 1e-300 {
                return 0.0;
            }
        }
        f
    }

    /// Randomized Richtmyer lattice: `shifts` independent shifts of a
    /// `points`-point rule; returns (mean, 3·standard error).
    fn run(&self, points: usize, shifts: usize, seed: u64) -> (f64, f64) {
        let ndim = self.n - 1;
        let gens = richtmyer_generators(ndim);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut means = Vec::with_capacity(shifts);
        let mut w = vec![0.0_f64; ndim];
        for _ in 0..shifts {
            let delta: Vec<f64> = (0..ndim).map(|_| rng.random::<f64>()).collect();
            let mut acc = 0.0;
            for j in 1..=points {
                for d in 0..ndim {
                    let x = (j as f64) * gens[d] + delta[d];
                    let frac = x - x.floor();
                    // Baker's transform symmetrizes the lattice.
                    w[d] = (2.0 * frac - 1.0).abs();
                }
                acc += self.integrand(&w);
            }
            means.push(acc / points as f64);
        }
        let mean = means.iter().sum::<f64>() / shifts as f64;
        let var = means
            .iter()
            .map(|m| (m - mean) * (m - mean))
            .sum::<f64>()
            / (shifts as f64 * (shifts as f64 - 1.0));
        (mean, 3.0 * var.sqrt())
    }
}

/// √p mod 1 for the first `n` primes (Richtmyer lattice generators).
fn richtmyer_generators(n: usize) -> Vec<f64> {
    let mut primes = Vec::with_capacity(n);
    let mut cand = 2u64;
    while primes.len() < n {
        if (2..cand).take_while(|d| d * d <= cand).all(|d| cand % d != 0) {
            primes.push(cand);
        }
        cand += 1;
    }
    primes
        .iter()
        .map(|&p| {
            let s = (p as f64).sqrt();
            s - s.floor()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Copula CDF / density / sampling
// ---------------------------------------------------------------------------

/// Gaussian copula CDF C_G(u₁, ..., u_N): each component mapped through the
/// saturated normal quantile, then the MVN orthant probability.
pub fn gaussian_copula_cdf(
    u: &[f64],
    model: &CorrelationModel,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    if u.len() != model.dim() {
        return Err(Error::domain(
            "gaussian_copula_cdf",
            "dimension mismatch",
        ));
    }
    if u.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::domain(
            "gaussian_copula_cdf",
            "components must lie in [0,1]",
        ));
    }
    let limits: Vec<f64> = u.iter().map(|&x| phi_inv_saturated(x)).collect();
    mvn_cdf(&limits, model, tol, seed)
}

/// Gaussian copula density on the open cube:
/// exp(−½ q^T (R⁻¹ − I) q) / √det(R) with q the vector of normal quantiles,
/// using the regularized model's inverse and determinant.
pub fn gaussian_copula_density(u: &[f64], model: &CorrelationModel) -> Result<f64> {
    if u.len() != model.dim() {
        return Err(Error::domain(
            "gaussian_copula_density",
            "dimension mismatch",
        ));
    }
    if u.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::domain(
            "gaussian_copula_density",
            "components must lie strictly inside (0,1)",
        ));
    }
    let q: Vec<f64> = u
        .iter()
        .map(|&x| specfun::norm_quantile(x))
        .collect::<Result<_>>()?;
    let qv = DVector::from_vec(q);
    let quad = (qv.transpose() * model.inverse() * &qv)[(0, 0)] - qv.dot(&qv);
    Ok((-0.5 * quad - 0.5 * model.log_det()).exp())
}

/// log-density on the equicoordinate diagonal (all components equal, with
/// common quantile `t`); the quadratic form collapses to t²(1ᵀR⁻¹1 − N).
pub fn ln_copula_density_equicoordinate(t: f64, model: &CorrelationModel) -> f64 {
    let n = model.dim() as f64;
    -0.5 * t * t * (model.ones_quad() - n) - 0.5 * model.log_det()
}

/// Draw one vector with uniform marginals and the model's Gaussian-copula
/// dependence: u = Φ(L z) with z ~ N(0, I).
pub fn sample_correlated_uniforms<R: Rng>(model: &CorrelationModel, rng: &mut R) -> Vec<f64> {
    let n = model.dim();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let l = model.factor();
    (0..n)
        .map(|i| {
            let mut x = 0.0;
            for k in 0..=i {
                x += l[(i, k)] * z[k];
            }
            specfun::norm_cdf(x)
        })
        .collect()
}

// ---------------------------------------------------------------------------

//! FAS port geometry, Jake's spatial correlation, and the marginal statistics
//! of the equivalent (direct + backscatter) per-port channel gain.
//!
//! The per-port gain is modeled as g_eq = A′ + D with A′ the path-loss-scaled
//! direct gain (exponential) and D the reflection-scaled product of the two
//! cascade gains (product of exponentials). Its distribution is approximated
//! by a Gamma(κ, ϖ) matching mean and variance; the exact product-term law
//! (Bessel-K forms) is kept alongside as an oracle.

use crate::error::{Error, Result};
use crate::specfun;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Planar FAS port grid: n1 × n2 ports over a normalized aperture of
/// w1 × w2 wavelengths. Ports are numbered 1..=N row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FasGeometry {
    pub n1: usize,
    pub n2: usize,
    pub w1: f64,
    pub w2: f64,
}

impl FasGeometry {
    pub fn new(n1: usize, n2: usize, w1: f64, w2: f64) -> Result<Self> {
        if n1 < 1 || n2 < 1 {
            return Err(Error::domain("FasGeometry", "port counts must be >= 1"));
        }
        if !(w1 >= 0.0) || !(w2 >= 0.0) {
            return Err(Error::domain("FasGeometry", "widths must be nonnegative"));
        }
        Ok(Self { n1, n2, w1, w2 })
    }

    /// Single-port (traditional antenna) geometry.
    pub fn single_port() -> Self {
        Self {
            n1: 1,
            n2: 1,
            w1: 0.0,
            w2: 0.0,
        }
    }

    /// Total port count N = n1·n2.
    pub fn ports(&self) -> usize {
        self.n1 * self.n2
    }

    /// 1-based port index → 1-based grid indices, row-major.
    pub fn port_to_grid(&self, port: usize) -> Result<(usize, usize)> {
        if port < 1 || port > self.ports() {
            return Err(Error::IndexOutOfRange(format!(
                "port {port} not in 1..={}",
                self.ports()
            )));
        }
        let zero = port - 1;
        Ok((zero / self.n2 + 1, zero % self.n2 + 1))
    }

    /// 1-based grid indices → 1-based port index, row-major.
    pub fn grid_to_port(&self, i1: usize, i2: usize) -> Result<usize> {
        if i1 < 1 || i1 > self.n1 || i2 < 1 || i2 > self.n2 {
            return Err(Error::IndexOutOfRange(format!(
                "grid ({i1},{i2}) not in (1..={}, 1..={})",
                self.n1, self.n2
            )));
        }
        Ok((i1 - 1) * self.n2 + i2)
    }
}

/// Jake's spatial correlation between two ports: j0 of 2π times the
/// normalized Euclidean separation. A dimension with a single port
/// contributes zero separation (the continuous limit of a degenerate grid).
pub fn jakes_correlation(geom: &FasGeometry, port_a: usize, port_b: usize) -> Result<f64> {
    let (a1, a2) = geom.port_to_grid(port_a)?;
    let (b1, b2) = geom.port_to_grid(port_b)?;
    let d1 = if geom.n1 > 1 {
        (a1 as f64 - b1 as f64) / (geom.n1 as f64 - 1.0) * geom.w1
    } else {
        0.0
    };
    let d2 = if geom.n2 > 1 {
        (a2 as f64 - b2 as f64) / (geom.n2 as f64 - 1.0) * geom.w2
    } else {
        0.0
    };
    Ok(specfun::spherical_bessel_j0(
        2.0 * std::f64::consts::PI * d1.hypot(d2),
    ))
}

/// The raw N×N Jake's correlation matrix (symmetric, unit diagonal). Dense
/// grids may make it numerically indefinite; regularization is the copula
/// module's job.
pub fn correlation_matrix(geom: &FasGeometry) -> DMatrix<f64> {
    let n = geom.ports();
    DMatrix::from_fn(n, n, |i, j| {
        jakes_correlation(geom, i + 1, j + 1).expect("indices in range")
    })
}

// ---------------------------------------------------------------------------
// System parameters
// ---------------------------------------------------------------------------

/// Which NOMA user a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum User {
    Near,
    Far,
}

/// Link-level system parameters, all in linear units (dB conversion is the
/// CLI's job).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// NOMA power allocation factors, p_un + p_uf = 1.
    pub p_un: f64,
    pub p_uf: f64,
    /// Communication/sensing power split, mu_c + mu_s = 1.
    pub mu_c: f64,
    pub mu_s: f64,
    /// Tag reflection coefficient in [0, 1].
    pub zeta: f64,
    /// Path-loss exponent, > 2.
    pub alpha: f64,
    /// Distances in meters.
    pub d_b_un: f64,
    pub d_b_uf: f64,
    pub d_b_t: f64,
    pub d_t_un: f64,
    pub d_t_uf: f64,
    /// Mean channel gains: direct (ā), BS→tag (b̄), tag→user (c̄), tag→BS (ē).
    pub abar: f64,
    pub bbar: f64,
    pub cbar: f64,
    pub ebar: f64,
    /// Linear SINR thresholds.
    pub gamma_hat_sic: f64,
    pub gamma_hat_un: f64,
    pub gamma_hat_uf: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::domain("SystemParams", msg));
        if (self.p_un + self.p_uf - 1.0).abs() > 1e-12 {
            return bad(format!("p_un + p_uf = {} != 1", self.p_un + self.p_uf));
        }
        if (self.mu_c + self.mu_s - 1.0).abs() > 1e-12 {
            return bad(format!("mu_c + mu_s = {} != 1", self.mu_c + self.mu_s));
        }
        if !(0.0..=1.0).contains(&self.p_un) || !(0.0..=1.0).contains(&self.mu_c) {
            return bad("power factors must lie in [0,1]".into());
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return bad(format!("zeta = {} not in [0,1]", self.zeta));
        }
        if !(self.alpha > 2.0) {
            return bad(format!("alpha = {} must be > 2", self.alpha));
        }
        for (name, d) in [
            ("d_b_un", self.d_b_un),
            ("d_b_uf", self.d_b_uf),
            ("d_b_t", self.d_b_t),
            ("d_t_un", self.d_t_un),
            ("d_t_uf", self.d_t_uf),
        ] {
            if !(d > 0.0) {
                return bad(format!("{name} = {d} must be > 0"));
            }
        }
        for (name, g) in [
            ("abar", self.abar),
            ("bbar", self.bbar),
            ("cbar", self.cbar),
            ("ebar", self.ebar),
        ] {
            if !(g > 0.0) {
                return bad(format!("{name} = {g} must be > 0"));
            }
        }
        for (name, g) in [
            ("gamma_hat_sic", self.gamma_hat_sic),
            ("gamma_hat_un", self.gamma_hat_un),
            ("gamma_hat_uf", self.gamma_hat_uf),
        ] {
            if !(g >= 0.0) {
                return bad(format!("{name} = {g} must be >= 0"));
            }
        }
        Ok(())
    }

    /// Distance BS → user.
    pub fn d_direct(&self, user: User) -> f64 {
        match user {
            User::Near => self.d_b_un,
            User::Far => self.d_b_uf,
        }
    }

    /// Distance tag → user.
    pub fn d_tag(&self, user: User) -> f64 {
        match user {
            User::Near => self.d_t_un,
            User::Far => self.d_t_uf,
        }
    }

    /// Mean of the direct term A′ = d^{-α}·ā.
    pub fn direct_mean(&self, user: User) -> f64 {
        self.d_direct(user).powf(-self.alpha) * self.abar
    }

    /// Mean of the cascade term D = ζ d_bt^{-α} d_ti^{-α} b̄ c̄; this is also
    /// the scale of the product-of-exponentials law.
    pub fn cascade_mean(&self, user: User) -> f64 {
        self.zeta
            * self.d_b_t.powf(-self.alpha)
            * self.d_tag(user).powf(-self.alpha)
            * self.bbar
            * self.cbar
    }
}

// ---------------------------------------------------------------------------
// Gamma moment matching
// ---------------------------------------------------------------------------

/// Moment-matched shape/scale of the equivalent per-port gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaMoments {
    pub kappa: f64,
    pub varpi: f64,
}

impl GammaMoments {
    pub fn mean(&self) -> f64 {
        self.kappa * self.varpi
    }

    pub fn variance(&self) -> f64 {
        self.kappa * self.varpi * self.varpi
    }
}

/// Match Gamma(κ, ϖ) to the analytic mean and variance of g_eq = A′ + D:
/// E[A′] = d^{-α}ā, Var(A′) = E[A′]², E[D] = ζ d_bt^{-α} d_ti^{-α} b̄c̄,
/// Var(D) = 3·E[D]². Then κ = mean²/var and ϖ = var/mean, so κϖ and κϖ²
/// reproduce the two moments exactly.
pub fn gamma_moments(params: &SystemParams, user: User) -> Result<GammaMoments> {
    let mean_a = params.direct_mean(user);
    let var_a = mean_a * mean_a;
    let mean_d = params.cascade_mean(user);
    let var_d = 3.0 * mean_d * mean_d;
    let mean = mean_a + mean_d;
    let var = var_a + var_d;
    if !(mean > 0.0) || !(var > 0.0) {
        return Err(Error::domain(
            "gamma_moments",
            "degenerate input: equivalent gain has zero mean",
        ));
    }
    Ok(GammaMoments {
        kappa: mean * mean / var,
        varpi: var / mean,
    })
}

/// Marginal CDF of the equivalent per-port gain: P(κ, g/ϖ).
pub fn marginal_cdf_geq(g: f64, gm: &GammaMoments) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    specfun::lower_incomplete_gamma_regularized(gm.kappa, g / gm.varpi)
        .expect("kappa > 0 and g/varpi >= 0")
}

/// Marginal PDF of the equivalent per-port gain:
/// g^{κ-1} e^{-g/ϖ} / (Γ(κ) ϖ^κ).
pub fn marginal_pdf_geq(g: f64, gm: &GammaMoments) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    ln_marginal_pdf_geq(g, gm).exp()
}

/// log of the marginal PDF, for products that would under/overflow.
pub fn ln_marginal_pdf_geq(g: f64, gm: &GammaMoments) -> f64 {
    (gm.kappa - 1.0) * g.ln() - g / gm.varpi
        - specfun::ln_gamma(gm.kappa)
        - gm.kappa * gm.varpi.ln()
}

// ---------------------------------------------------------------------------
// Product-of-exponentials law (exact cascade-term distribution)
// ---------------------------------------------------------------------------

/// CDF of D = scale·X·Y with X, Y unit-mean exponentials:
/// F_D(d) = 1 − 2√(d/scale)·K₁(2√(d/scale)), and F_D(0) = 0 by the
/// K₁ small-argument limit.
pub fn product_exp_cdf(d: f64, scale: f64) -> f64 {
    assert!(scale > 0.0, "product_exp_cdf requires scale > 0");
    if d <= 0.0 {
        return 0.0;
    }
    let q = 2.0 * (d / scale).sqrt();
    // q·K1(q) → 1 as q → 0; below ~1e-8 the difference underflows anyway.
    if q < 1e-8 {
        return 0.0;
    }
    let k1 = specfun::bessel_k(1, q).expect("q > 0");
    (1.0 - q * k1).max(0.0)
}

/// PDF of D = scale·X·Y: f_D(d) = (2/scale)·K₀(2√(d/scale)).
pub fn product_exp_pdf(d: f64, scale: f64) -> f64 {
    assert!(scale > 0.0, "product_exp_pdf requires scale > 0");
    if d <= 0.0 {
        return 0.0;
    }
    let q = 2.0 * (d / scale).sqrt();
    2.0 / scale * specfun::bessel_k(0, q).expect("q > 0")
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{adaptive_simpson, quad_semi_infinite};
    use approx::assert_abs_diff_eq;

    pub(crate) fn sec_iv_params() -> SystemParams {
        SystemParams {
            p_un: 0.3,
            p_uf: 0.7,
            mu_c: 0.5,
            mu_s: 0.5,
            zeta: 0.8,
            alpha: 2.1,
            d_b_un: 1.0,
            d_b_uf: 1.3,
            d_b_t: 1.0,
            d_t_un: 1.0,
            d_t_uf: 1.0,
            abar: 1.0,
            bbar: 1.0,
            cbar: 1.0,
            ebar: 1.0,
            gamma_hat_sic: 1.0,
            gamma_hat_un: 1.0,
            gamma_hat_uf: 1.0,
        }
    }

    #[test]
    fn port_mapping_bijection() {
        let geom = FasGeometry::new(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(geom.port_to_grid(1).unwrap(), (1, 1));
        assert_eq!(geom.grid_to_port(2, 2).unwrap(), 4);
        let g32 = FasGeometry::new(3, 2, 0.5, 0.5).unwrap();
        for port in 1..=6 {
            let (i1, i2) = g32.port_to_grid(port).unwrap();
            assert_eq!(g32.grid_to_port(i1, i2).unwrap(), port);
        }
        assert!(g32.port_to_grid(0).is_err());
        assert!(g32.port_to_grid(7).is_err());
        assert!(g32.grid_to_port(4, 1).is_err());
    }

    #[test]
    fn jakes_values() {
        let geom = FasGeometry::new(2, 1, 0.5, 0.0).unwrap();
        assert_eq!(jakes_correlation(&geom, 1, 1).unwrap(), 1.0);
        // Ports half a wavelength apart: j0(π) = 0.
        assert!(jakes_correlation(&geom, 1, 2).unwrap().abs() < 1e-15);
        // Corner-to-corner on a 4×4 unit grid: j0(2π√2).
        let g44 = FasGeometry::new(4, 4, 1.0, 1.0).unwrap();
        let expect = specfun::spherical_bessel_j0(
            2.0 * std::f64::consts::PI * 2.0_f64.sqrt(),
        );
        assert_abs_diff_eq!(
            jakes_correlation(&g44, 1, 16).unwrap(),
            expect,
            epsilon = 1e-15
        );
    }

    #[test]
    fn correlation_matrix_structure() {
        let single = correlation_matrix(&FasGeometry::single_port());
        assert_eq!(single.nrows(), 1);
        assert_eq!(single[(0, 0)], 1.0);

        let geom = FasGeometry::new(2, 1, 0.5, 0.0).unwrap();
        let r = correlation_matrix(&geom);
        assert!(r[(0, 1)].abs() < 1e-15);
        assert_eq!(r[(0, 0)], 1.0);

        let g22 = FasGeometry::new(2, 2, 1.0, 1.0).unwrap();
        let r4 = correlation_matrix(&g22);
        for i in 0..4 {
            assert_eq!(r4[(i, i)], 1.0);
            for j in 0..4 {
                // Symmetry and element-wise agreement with j0.
                assert_eq!(r4[(i, j)], r4[(j, i)]);
                assert_eq!(
                    r4[(i, j)],
                    jakes_correlation(&g22, i + 1, j + 1).unwrap()
                );
                assert!(r4[(i, j)].abs() <= 1.0);
            }
        }
    }

    #[test]
    fn correlation_bounded_when_widths_double() {
        let a = FasGeometry::new(3, 3, 0.5, 0.5).unwrap();
        let b = FasGeometry::new(3, 3, 1.0, 1.0).unwrap();
        for geom in [a, b] {
            let r = correlation_matrix(&geom);
            for i in 0..9 {
                for j in 0..9 {
                    assert!(r[(i, j)].abs() <= 1.0 + 1e-15);
                }
            }
        }
    }

    #[test]
    fn gamma_moments_exponential_reduction() {
        let mut p = sec_iv_params();
        p.zeta = 0.0;
        let gm = gamma_moments(&p, User::Near).unwrap();
        assert_abs_diff_eq!(gm.kappa, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gm.varpi, 1.0, epsilon = 1e-12);
        // CDF coincides with 1 − exp(−g·d^α/ā).
        for g in [0.1, 0.5, 1.0, 3.0] {
            assert_abs_diff_eq!(
                marginal_cdf_geq(g, &gm),
                1.0 - (-g).exp(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn gamma_moments_sec_iv_near_user() {
        let p = sec_iv_params();
        let gm = gamma_moments(&p, User::Near).unwrap();
        // mean = 1.8, variance = 1 + 3·0.64 = 2.92.
        assert_abs_diff_eq!(gm.kappa, 3.24 / 2.92, epsilon = 1e-12);
        assert_abs_diff_eq!(gm.varpi, 2.92 / 1.8, epsilon = 1e-12);
        assert_abs_diff_eq!(gm.mean(), 1.8, epsilon = 1e-12);
        assert_abs_diff_eq!(gm.variance(), 2.92, epsilon = 1e-12);
    }

    #[test]
    fn gamma_moments_invariants_random_params() {
        // Mean/variance identities to 1e-12 across 1000 random valid params.
        let mut state = 0x243F_6A88_85A3_08D3_u64;
        let mut next = move || {
            // splitmix64
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z = z ^ (z >> 31);
            (z >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let p_un = 0.05 + 0.9 * next();
            let params = SystemParams {
                p_un,
                p_uf: 1.0 - p_un,
                mu_c: 0.5,
                mu_s: 0.5,
                zeta: next(),
                alpha: 2.01 + 2.0 * next(),
                d_b_un: 0.5 + 2.0 * next(),
                d_b_uf: 0.5 + 2.0 * next(),
                d_b_t: 0.5 + 2.0 * next(),
                d_t_un: 0.5 + 2.0 * next(),
                d_t_uf: 0.5 + 2.0 * next(),
                abar: 0.2 + 2.0 * next(),
                bbar: 0.2 + 2.0 * next(),
                cbar: 0.2 + 2.0 * next(),
                ebar: 0.2 + 2.0 * next(),
                gamma_hat_sic: 1.0,
                gamma_hat_un: 1.0,
                gamma_hat_uf: 1.0,
            };
            params.validate().unwrap();
            for user in [User::Near, User::Far] {
                let gm = gamma_moments(&params, user).unwrap();
                let mean = params.direct_mean(user) + params.cascade_mean(user);
                let var = params.direct_mean(user).powi(2)
                    + 3.0 * params.cascade_mean(user).powi(2);
                assert!((gm.mean() - mean).abs() <= 1e-12 * mean.max(1.0));
                assert!((gm.variance() - var).abs() <= 1e-12 * var.max(1.0));
            }
        }
    }

    #[test]
    fn marginal_cdf_examples() {
        let exp = GammaMoments {
            kappa: 1.0,
            varpi: 1.0,
        };
        assert_eq!(marginal_cdf_geq(0.0, &exp), 0.0);
        assert_abs_diff_eq!(
            marginal_cdf_geq(1.0, &exp),
            1.0 - (-1.0_f64).exp(),
            epsilon = 1e-13
        );
        let p = sec_iv_params();
        let gm = gamma_moments(&p, User::Near).unwrap();
        let at_mean = marginal_cdf_geq(gm.mean(), &gm);
        let oracle = specfun::lower_incomplete_gamma_regularized(gm.kappa, gm.kappa).unwrap();
        assert_abs_diff_eq!(at_mean, oracle, epsilon = 1e-13);
    }

    #[test]
    fn marginal_pdf_integrates_to_one_and_matches_cdf_slope() {
        let p = sec_iv_params();
        let gm = gamma_moments(&p, User::Near).unwrap();
        let hi = 50.0 * gm.mean();
        let total = adaptive_simpson(&|g| marginal_pdf_geq(g, &gm), 1e-12, hi, 1e-10).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
        // Central difference of the CDF at the mean, step 1e-5.
        let g0 = gm.mean();
        let h = 1e-5;
        let fd = (marginal_cdf_geq(g0 + h, &gm) - marginal_cdf_geq(g0 - h, &gm)) / (2.0 * h);
        assert_abs_diff_eq!(fd, marginal_pdf_geq(g0, &gm), epsilon = 1e-6);
        // Exponential special case.
        let exp = GammaMoments {
            kappa: 1.0,
            varpi: 1.0,
        };
        assert_abs_diff_eq!(marginal_pdf_geq(0.7, &exp), (-0.7_f64).exp(), epsilon = 1e-13);
    }

    #[test]
    fn product_exp_cdf_pdf() {
        assert_eq!(product_exp_cdf(0.0, 1.0), 0.0);
        // F_D(1) with scale 1 is 1 − 2·K1(2).
        let expect = 1.0 - 2.0 * specfun::bessel_k(1, 2.0).unwrap();
        assert_abs_diff_eq!(product_exp_cdf(1.0, 1.0), expect, epsilon = 1e-12);
        // Cross-check against the defining double integral
        // ∫ f_B(b) F_C(d/b) db with unit-mean exponentials.
        let oracle = quad_semi_infinite(
            &|b: f64| (-b).exp() * (1.0 - (-1.0 / b).exp()),
            1e-11,
        )
        .unwrap();
        assert_abs_diff_eq!(product_exp_cdf(1.0, 1.0), oracle, epsilon = 1e-8);
        // PDF integrates to 1 (substitute d = v² to tame the log endpoint).
        let scale = 0.8;
        let total = adaptive_simpson(
            &|v: f64| 2.0 * v * product_exp_pdf(v * v, scale),
            1e-9,
            12.0,
            1e-10,
        )
        .unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn product_exp_mean_matches_scale() {
        // E[D] = scale: ∫ d f_D(d) dd with d = v².
        let scale = 0.8;
        let mean = adaptive_simpson(
            &|v: f64| 2.0 * v * v * v * product_exp_pdf(v * v, scale),
            1e-9,
            15.0,
            1e-11,
        )
        .unwrap();
        assert_abs_diff_eq!(mean, scale, epsilon = 1e-7);
    }
}

//! Closed-form MSE analysis for one feature per view.
//!
//! Latent model: `U ~ N(0, 1)`, `X = γ_x U + σ_x ε_x`, `Z = γ_z U + σ_z ε_z`,
//! `Y = γ_y U + σ_y ε_y`. The estimator is the unpenalized cooperative fit
//! `θ̂ = argmin ½‖y − xθ_x − zθ_z‖² + (ρ/2)‖xθ_x − zθ_z‖²` on a training sample
//! `(x, z, y)`, and the MSE is the expected squared error on a fresh draw,
//! conditional on `x` and `z`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoopError, Result};
use crate::math;
use crate::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentModelParams {
    pub gamma_x: f64,
    pub gamma_z: f64,
    pub gamma_y: f64,
    pub sigma_x: f64,
    pub sigma_z: f64,
    pub sigma_y: f64,
    pub n: usize,
}

impl Default for LatentModelParams {
    fn default() -> Self {
        Self {
            gamma_x: 1.0,
            gamma_z: 1.0,
            gamma_y: 1.0,
            sigma_x: 1.0,
            sigma_z: 1.0,
            sigma_y: 1.0,
            n: 100,
        }
    }
}

impl LatentModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma_x", self.gamma_x), ("gamma_z", self.gamma_z), ("gamma_y", self.gamma_y)] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        for (name, v) in [("sigma_x", self.sigma_x), ("sigma_z", self.sigma_z), ("sigma_y", self.sigma_y)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be finite and > 0"));
            }
        }
        if self.n < 2 {
            return Err(invalid("n", "at least two observations are required"));
        }
        Ok(())
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..*self }
    }

    /// Second moments of `(X, Z)` on a fresh draw.
    pub fn covariance(&self) -> Matrix2<f64> {
        let (gx, gz) = (self.gamma_x, self.gamma_z);
        Matrix2::new(
            gx * gx + self.sigma_x * self.sigma_x,
            gx * gz,
            gx * gz,
            gz * gz + self.sigma_z * self.sigma_z,
        )
    }

    /// `σ_x²γ_z² + σ_z²γ_x² + σ_x²σ_z²`.
    fn d(&self) -> f64 {
        let (sx2, sz2) = (self.sigma_x * self.sigma_x, self.sigma_z * self.sigma_z);
        sx2 * self.gamma_z * self.gamma_z + sz2 * self.gamma_x * self.gamma_x + sx2 * sz2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationQuantities {
    pub theta_x_star: f64,
    pub theta_z_star: f64,
    pub sigma_star_sq: f64,
}

/// Population regression of `Y` on `(X, Z)` and its residual variance.
pub fn population_params(params: &LatentModelParams) -> PopulationQuantities {
    let p = params;
    let (sx2, sz2) = (p.sigma_x * p.sigma_x, p.sigma_z * p.sigma_z);
    let (gx2, gz2) = (p.gamma_x * p.gamma_x, p.gamma_z * p.gamma_z);
    PopulationQuantities {
        theta_x_star: p.gamma_x * p.gamma_y / (sx2 + gx2 + gz2 * sx2 / sz2),
        theta_z_star: p.gamma_z * p.gamma_y / (sz2 + gz2 + gx2 * sz2 / sx2),
        sigma_star_sq: p.gamma_y * p.gamma_y / (1.0 + gx2 / sx2 + gz2 / sz2) + p.sigma_y * p.sigma_y,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Moments {
    xx: f64,
    zz: f64,
    xz: f64,
}

impl Moments {
    fn new(x: &Vector, z: &Vector) -> Result<Self> {
        if x.len() != z.len() {
            return Err(CoopError::DimensionMismatch(format!("x has {} entries, z has {}", x.len(), z.len())));
        }
        if x.is_empty() {
            return Err(CoopError::EmptyInput);
        }
        let m = Self {
            xx: x.dot(x),
            zz: z.dot(z),
            xz: x.dot(z),
        };
        if !(m.xx.is_finite() && m.zz.is_finite() && m.xz.is_finite()) {
            return Err(CoopError::NonFinite("x or z".into()));
        }
        Ok(m)
    }

    fn det(&self, rho: f64) -> f64 {
        (1.0 + rho) * (1.0 + rho) * self.xx * self.zz - (1.0 - rho) * (1.0 - rho) * self.xz * self.xz
    }

    fn c2(&self) -> f64 {
        self.xx * self.zz - self.xz * self.xz
    }

    fn gram(&self) -> Matrix2<f64> {
        Matrix2::new(self.xx, self.xz, self.xz, self.zz)
    }

    fn system(&self, rho: f64) -> Matrix2<f64> {
        Matrix2::new(
            (1.0 + rho) * self.xx,
            (1.0 - rho) * self.xz,
            (1.0 - rho) * self.xz,
            (1.0 + rho) * self.zz,
        )
    }
}

/// Coefficients of the variance numerator and of `det'(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct DerivativeTerms {
    pub C1: f64,
    pub B1: f64,
    pub C2: f64,
    pub B2: f64,
}

/// The `ρ²` coefficient of the variance numerator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTerms {
    pub a_v1: f64,
    pub a_v2: f64,
    pub a_v3: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
}

fn collinear_check(m: &Moments) -> Result<()> {
    let c2 = m.c2();
    if !(c2 > 1e-12 * m.xx * m.zz) {
        return Err(CoopError::Collinear("x and z are linearly dependent".into()));
    }
    Ok(())
}

fn terms(m: &Moments, params: &LatentModelParams) -> DerivativeTerms {
    let s = params.covariance();
    let c2 = m.c2();
    let cross = params.gamma_x * params.gamma_z * m.xz;
    DerivativeTerms {
        C1: (s[(0, 0)] * m.zz + s[(1, 1)] * m.xx - 2.0 * cross) * c2,
        B1: 2.0 * (s[(0, 0)] * m.zz + s[(1, 1)] * m.xx + 2.0 * cross) * c2,
        C2: c2,
        B2: 2.0 * (m.xx * m.zz + m.xz * m.xz),
    }
}

fn quadratic(m: &Moments, params: &LatentModelParams) -> QuadraticTerms {
    let s = params.covariance();
    let a_v1 = m.zz * (m.xx * m.zz + 3.0 * m.xz * m.xz);
    let a_v2 = m.xx * (m.xx * m.zz + 3.0 * m.xz * m.xz);
    let a_v3 = m.xz * (3.0 * m.xx * m.zz + m.xz * m.xz);
    QuadraticTerms {
        a_v1,
        a_v2,
        a_v3,
        a1: s[(0, 0)] * a_v1 + s[(1, 1)] * a_v2 + 2.0 * params.gamma_x * params.gamma_z * a_v3,
    }
}

pub fn derivative_terms(x: &Vector, z: &Vector, params: &LatentModelParams) -> Result<DerivativeTerms> {
    params.validate()?;
    let m = Moments::new(x, z)?;
    collinear_check(&m)?;
    Ok(terms(&m, params))
}

pub fn quadratic_terms(x: &Vector, z: &Vector, params: &LatentModelParams) -> Result<QuadraticTerms> {
    params.validate()?;
    let m = Moments::new(x, z)?;
    Ok(quadratic(&m, params))
}

/// `E[θ̂ | x, z] − θ*`.
pub fn conditional_bias(x: &Vector, z: &Vector, params: &LatentModelParams, rho: f64) -> Result<(f64, f64)> {
    params.validate()?;
    let m = Moments::new(x, z)?;
    let det = positive_det(&m, rho)?;
    Ok(bias(&m, &population_params(params), rho, det))
}

fn positive_det(m: &Moments, rho: f64) -> Result<f64> {
    if !rho.is_finite() {
        return Err(invalid("rho", "must be finite"));
    }
    let det = m.det(rho);
    if !(det > 1e-12 * (1.0 + rho) * (1.0 + rho) * m.xx * m.zz) {
        return Err(CoopError::Collinear(format!("det = {det} at rho = {rho}")));
    }
    Ok(det)
}

fn bias(m: &Moments, pq: &PopulationQuantities, rho: f64, det: f64) -> (f64, f64) {
    let (tx, tz) = (pq.theta_x_star, pq.theta_z_star);
    let c2 = m.c2();
    let bx = rho * (tx * (-m.zz * m.xx - m.xz * m.xz) + 2.0 * tz * m.xz * m.zz - rho * tx * c2) / det;
    let bz = rho * (tz * (-m.xx * m.zz - m.xz * m.xz) + 2.0 * tx * m.xz * m.xx - rho * tz * c2) / det;
    (bx, bz)
}

/// Bias and variance parts of the conditional MSE; the total adds `σ*²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MseParts {
    pub bias_sq: f64,
    pub variance: f64,
    pub sigma_star_sq: f64,
}

impl MseParts {
    pub fn total(&self) -> f64 {
        self.bias_sq + self.variance + self.sigma_star_sq
    }
}

pub fn mse_parts(x: &Vector, z: &Vector, params: &LatentModelParams, rho: f64) -> Result<MseParts> {
    params.validate()?;
    let m = Moments::new(x, z)?;
    let det = positive_det(&m, rho)?;
    let pq = population_params(params);
    let s = params.covariance();
    let (bx, bz) = bias(&m, &pq, rho, det);
    let b = Vector2::new(bx, bz);
    let t = terms(&m, params);
    let q = quadratic(&m, params);
    Ok(MseParts {
        bias_sq: b.dot(&(s * b)),
        variance: pq.sigma_star_sq * (t.C1 + t.B1 * rho + q.a1 * rho * rho) / (det * det),
        sigma_star_sq: pq.sigma_star_sq,
    })
}

/// Conditional test MSE of the `ρ` estimator given the training features.
pub fn mse_exact(x: &Vector, z: &Vector, params: &LatentModelParams, rho: f64) -> Result<f64> {
    mse_parts(x, z, params, rho).map(|p| p.total())
}

/// The same MSE through 2×2 matrix algebra:
/// `σ*² + bᵀΣb + σ*² tr(Σ A⁻¹ G A⁻¹)`, `A = X̃ᵀX̃`, `G = [x z]ᵀ[x z]`.
pub fn mse_matrix_form(x: &Vector, z: &Vector, params: &LatentModelParams, rho: f64) -> Result<f64> {
    params.validate()?;
    let m = Moments::new(x, z)?;
    positive_det(&m, rho)?;
    let pq = population_params(params);
    let a_inv = m
        .system(rho)
        .try_inverse()
        .ok_or_else(|| CoopError::Collinear("singular system".into()))?;
    let g = m.gram();
    let theta = Vector2::new(pq.theta_x_star, pq.theta_z_star);
    let b = a_inv * g * theta - theta;
    let s = params.covariance();
    let cov = a_inv * g * a_inv * pq.sigma_star_sq;
    Ok(pq.sigma_star_sq + b.dot(&(s * b)) + (s * cov).trace())
}

/// `d MSE/dρ` at `ρ = 0`: `σ*²(C2 B1 − 2 C1 B2)/C2³`.
pub fn derivative_at_zero(x: &Vector, z: &Vector, params: &LatentModelParams) -> Result<f64> {
    let t = derivative_terms(x, z, params)?;
    let s2 = population_params(params).sigma_star_sq;
    Ok(s2 * (t.C2 * t.B1 - 2.0 * t.C1 * t.B2) / (t.C2 * t.C2 * t.C2))
}

/// Leading term of the derivative at zero as `n → ∞`.
pub fn asymptotic_derivative(params: &LatentModelParams) -> f64 {
    let d = params.d();
    let (sx2, sz2) = (params.sigma_x * params.sigma_x, params.sigma_z * params.sigma_z);
    asymptotic_ratio(params)
        * (params.sigma_y * params.sigma_y + params.gamma_y * params.gamma_y * sx2 * sz2 / d)
}

/// Leading term of `derivative_at_zero / MSE(ρ = 0)`.
pub fn asymptotic_ratio(params: &LatentModelParams) -> f64 {
    let g2 = params.gamma_x * params.gamma_x * params.gamma_z * params.gamma_z;
    -4.0 / params.n as f64 * (1.0 + 2.0 * g2 / params.d())
}

/// Leading term of `V(x, z; 0)`: two parameters fitted by least squares.
pub fn asymptotic_variance_at_zero(params: &LatentModelParams) -> f64 {
    2.0 * population_params(params).sigma_star_sq / params.n as f64
}

/// Training features `(x, z)` of length `params.n` from the latent model.
pub fn draw_features<R: Rng + ?Sized>(params: &LatentModelParams, rng: &mut R) -> (Vector, Vector) {
    let n = params.n;
    let mut x = Vector::zeros(n);
    let mut z = Vector::zeros(n);
    for i in 0..n {
        let u: f64 = rng.sample(StandardNormal);
        let ex: f64 = rng.sample(StandardNormal);
        let ez: f64 = rng.sample(StandardNormal);
        x[i] = params.gamma_x * u + params.sigma_x * ex;
        z[i] = params.gamma_z * u + params.sigma_z * ez;
    }
    (x, z)
}

/// Parameters drawn uniformly from a box that keeps every `γ` away from zero.
pub fn random_params<R: Rng + ?Sized>(n: usize, rng: &mut R) -> LatentModelParams {
    let mut g = || rng.random_range(0.3..2.0);
    LatentModelParams {
        gamma_x: g(),
        gamma_z: g(),
        gamma_y: g(),
        sigma_x: g(),
        sigma_z: g(),
        sigma_y: g(),
        n,
    }
}

/// `θ̂` for a training sample.
pub fn fit_rho_estimator(x: &Vector, z: &Vector, y: &Vector, rho: f64) -> Result<(f64, f64)> {
    let m = Moments::new(x, z)?;
    if y.len() != x.len() {
        return Err(CoopError::DimensionMismatch("y length differs from x".into()));
    }
    positive_det(&m, rho)?;
    let rhs = Vector2::new(x.dot(y), z.dot(y));
    let sol = m
        .system(rho)
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CoopError::Collinear("singular system".into()))?;
    Ok((sol[0], sol[1]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub draws: usize,
}

/// Simulated conditional MSE: each draw redraws `y | x, z` (Gaussian
/// conditioning on the latent factor), refits, and scores one fresh point.
pub fn monte_carlo_mse(
    x: &Vector,
    z: &Vector,
    params: &LatentModelParams,
    rho: f64,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    params.validate()?;
    if draws < 2 {
        return Err(invalid("draws", "at least two draws are required"));
    }
    let n = x.len();
    let s = params.covariance();
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| CoopError::Collinear("feature covariance".into()))?;
    let c = Vector2::new(params.gamma_x, params.gamma_z);
    let k = s_inv * c;
    let u_sd = math::sqrt((1.0 - c.dot(&k)).max(0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vector::zeros(n);
    let mut errors = Vec::with_capacity(draws);
    for _ in 0..draws {
        for i in 0..n {
            let u = k[0] * x[i] + k[1] * z[i] + u_sd * rng.sample::<f64, _>(StandardNormal);
            y[i] = params.gamma_y * u + params.sigma_y * rng.sample::<f64, _>(StandardNormal);
        }
        let (tx, tz) = fit_rho_estimator(x, z, &y, rho)?;
        let u: f64 = rng.sample(StandardNormal);
        let xn = params.gamma_x * u + params.sigma_x * rng.sample::<f64, _>(StandardNormal);
        let zn = params.gamma_z * u + params.sigma_z * rng.sample::<f64, _>(StandardNormal);
        let yn = params.gamma_y * u + params.sigma_y * rng.sample::<f64, _>(StandardNormal);
        let r = yn - tx * xn - tz * zn;
        errors.push(r * r);
    }
    let mean = math::mean(&errors);
    Ok(MonteCarloEstimate {
        mean,
        standard_error: math::sample_sd(&errors) / math::sqrt(draws as f64),
        draws,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub analytic: f64,
    pub numeric: f64,
    pub relative_gap: f64,
    pub richardson: bool,
}

fn excess(m: &Moments, params: &LatentModelParams, rho: f64) -> Result<f64> {
    let det = positive_det(m, rho)?;
    let pq = population_params(params);
    let (bx, bz) = bias(m, &pq, rho, det);
    let b = Vector2::new(bx, bz);
    let t = terms(m, params);
    let q = quadratic(m, params);
    Ok(b.dot(&(params.covariance() * b)) + pq.sigma_star_sq * (t.C1 + t.B1 * rho + q.a1 * rho * rho) / (det * det))
}

/// Central difference of `mse_exact` at `ρ = 0` with step `h`; one Richardson
/// step (`h`, `h/2`) if the plain difference is off by more than 1e-4 relative.
pub fn check_derivative(x: &Vector, z: &Vector, params: &LatentModelParams, h: f64) -> Result<DerivativeCheck> {
    if !(h > 0.0 && h < 0.5) {
        return Err(invalid("h", "step must lie in (0, 0.5)"));
    }
    let analytic = derivative_at_zero(x, z, params)?;
    let m = Moments::new(x, z)?;
    let central = |h: f64| -> Result<f64> { Ok((excess(&m, params, h)? - excess(&m, params, -h)?) / (2.0 * h)) };
    let rel = |v: f64| (v - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE);
    let mut numeric = central(h)?;
    let mut richardson = false;
    if rel(numeric) > 1e-4 {
        numeric = (4.0 * central(h / 2.0)? - numeric) / 3.0;
        richardson = true;
    }
    Ok(DerivativeCheck {
        analytic,
        numeric,
        relative_gap: rel(numeric),
        richardson,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryCheckConfig {
    pub params: LatentModelParams,
    pub seed: u64,
    /// Random instances (random parameters and draws) for the finite-difference check.
    pub fd_instances: usize,
    pub fd_n: usize,
    pub fd_step: f64,
    pub fd_tolerance: f64,
    /// Seeds for the sign check at `fd_n`.
    pub sign_draws: usize,
    pub sign_fraction: f64,
    pub large_n: usize,
    pub large_draws: usize,
    pub large_tolerance: f64,
    pub rate_ns: (usize, usize),
    pub rate_draws: usize,
    /// Largest allowed ratio of median `gap·n^{3/2}` between the two rate sizes.
    pub rate_growth: f64,
    pub mc_n: usize,
    pub mc_rhos: Vec<f64>,
    pub mc_draws: usize,
    pub mc_sigmas: f64,
}

impl Default for TheoryCheckConfig {
    fn default() -> Self {
        Self {
            params: LatentModelParams::default(),
            seed: 2022,
            fd_instances: 50,
            fd_n: 200,
            fd_step: 1e-5,
            fd_tolerance: 1e-5,
            sign_draws: 100,
            sign_fraction: 0.95,
            large_n: 100_000,
            large_draws: 5,
            large_tolerance: 0.05,
            rate_ns: (1_000, 10_000),
            rate_draws: 50,
            rate_growth: 2.0,
            mc_n: 20,
            mc_rhos: alloc::vec![0.0, 0.5, 2.0],
            mc_draws: 100_000,
            mc_sigmas: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub params: LatentModelParams,
    pub population: PopulationQuantities,
    pub asymptotic_derivative: f64,
    pub asymptotic_ratio: f64,
    pub checks: Vec<CheckOutcome>,
}

impl TheoryReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Absolute gaps `(derivative, ratio, variance at zero)` against their leading terms.
fn asymptotic_gaps(x: &Vector, z: &Vector, params: &LatentModelParams) -> Result<[f64; 3]> {
    let d = derivative_at_zero(x, z, params)?;
    let parts = mse_parts(x, z, params, 0.0)?;
    Ok([
        (d - asymptotic_derivative(params)).abs(),
        (d / parts.total() - asymptotic_ratio(params)).abs(),
        (parts.variance - asymptotic_variance_at_zero(params)).abs(),
    ])
}

fn median_scaled_gaps(params: &LatentModelParams, n: usize, draws: usize, seed: u64) -> Result<[f64; 3]> {
    let p = params.with_n(n);
    let scale = math::powf(n as f64, 1.5);
    let mut cols: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for r in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let (x, z) = draw_features(&p, &mut rng);
        let g = asymptotic_gaps(&x, &z, &p)?;
        for j in 0..3 {
            cols[j].push(g[j] * scale);
        }
    }
    let [a, b, c] = cols;
    Ok([median(a), median(b), median(c)])
}

fn outcome(name: &str, passed: bool, observed: f64, threshold: f64, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed,
        observed,
        threshold,
        detail,
    }
}

/// Runs every numerical check of the closed forms.
pub fn run_theory_checks(config: &TheoryCheckConfig) -> Result<TheoryReport> {
    let params = config.params;
    params.validate()?;
    let mut checks = Vec::new();

    let unit = LatentModelParams::default().with_n(100);
    let hand = [
        (asymptotic_derivative(&unit), -8.0 / 90.0),
        (asymptotic_ratio(&unit), -1.0 / 15.0),
    ];
    let worst = hand.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(outcome(
        "asymptotic_hand_values",
        worst < 1e-15,
        worst,
        1e-15,
        format!("unit parameters, n = 100: derivative {:.5}, ratio {:.5}", hand[0].0, hand[1].0),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut worst = 0.0f64;
    let mut used_richardson = 0;
    for _ in 0..config.fd_instances {
        let p = random_params(config.fd_n, &mut rng);
        let (x, z) = draw_features(&p, &mut rng);
        let c = check_derivative(&x, &z, &p, config.fd_step)?;
        worst = worst.max(c.relative_gap);
        used_richardson += c.richardson as usize;
    }
    checks.push(outcome(
        "derivative_finite_difference",
        worst < config.fd_tolerance,
        worst,
        config.fd_tolerance,
        format!(
            "max relative gap over {} random instances, n = {}; {} used Richardson",
            config.fd_instances, config.fd_n, used_richardson
        ),
    ));

    let p = params.with_n(config.fd_n);
    let mut negative = 0;
    for r in 0..config.sign_draws {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1000 + r as u64));
        let (x, z) = draw_features(&p, &mut rng);
        negative += (derivative_at_zero(&x, &z, &p)? < 0.0) as usize;
    }
    let frac = negative as f64 / config.sign_draws.max(1) as f64;
    checks.push(outcome(
        "derivative_negative",
        frac >= config.sign_fraction,
        frac,
        config.sign_fraction,
        format!("{negative}/{} draws at n = {}", config.sign_draws, config.fd_n),
    ));

    let p = params.with_n(config.large_n);
    let mut rel_d = Vec::new();
    let mut rel_r = Vec::new();
    for r in 0..config.large_draws {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(5000 + r as u64));
        let (x, z) = draw_features(&p, &mut rng);
        let d = derivative_at_zero(&x, &z, &p)?;
        let ratio = d / mse_exact(&x, &z, &p, 0.0)?;
        rel_d.push((d / asymptotic_derivative(&p) - 1.0).abs());
        rel_r.push((ratio / asymptotic_ratio(&p) - 1.0).abs());
    }
    let (gd, gr) = (median(rel_d), median(rel_r));
    checks.push(outcome(
        "asymptotic_derivative_gap",
        gd < config.large_tolerance,
        gd,
        config.large_tolerance,
        format!("median relative gap over {} draws, n = {}", config.large_draws, config.large_n),
    ));
    checks.push(outcome(
        "asymptotic_ratio_gap",
        gr < config.large_tolerance,
        gr,
        config.large_tolerance,
        format!("median relative gap over {} draws, n = {}", config.large_draws, config.large_n),
    ));

    let (n1, n2) = config.rate_ns;
    let lo = median_scaled_gaps(&params, n1, config.rate_draws, config.seed.wrapping_add(20_000))?;
    let hi = median_scaled_gaps(&params, n2, config.rate_draws, config.seed.wrapping_add(30_000))?;
    for (j, name) in ["derivative_rate", "ratio_rate", "variance_at_zero_rate"].iter().enumerate() {
        let growth = hi[j] / lo[j];
        checks.push(outcome(
            name,
            growth <= config.rate_growth,
            growth,
            config.rate_growth,
            format!(
                "median gap*n^1.5: {:.4} at n = {n1}, {:.4} at n = {n2}",
                lo[j], hi[j]
            ),
        ));
    }

    let p = params.with_n(config.mc_n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(40_000));
    let (x, z) = draw_features(&p, &mut rng);
    let mut worst = 0.0f64;
    for (i, &rho) in config.mc_rhos.iter().enumerate() {
        let exact = mse_exact(&x, &z, &p, rho)?;
        let mc = monte_carlo_mse(&x, &z, &p, rho, config.mc_draws, config.seed.wrapping_add(50_000 + i as u64))?;
        worst = worst.max((mc.mean - exact).abs() / mc.standard_error);
    }
    checks.push(outcome(
        "monte_carlo_mse",
        worst <= config.mc_sigmas,
        worst,
        config.mc_sigmas,
        format!(
            "largest |simulated - exact| in standard errors, {} draws, n = {}",
            config.mc_draws, config.mc_n
        ),
    ));

    Ok(TheoryReport {
        params,
        population: population_params(&params),
        asymptotic_derivative: asymptotic_derivative(&params),
        asymptotic_ratio: asymptotic_ratio(&params),
        checks,
    })
}

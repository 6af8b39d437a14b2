//! Financial model catalogue: coefficient functions, BSDE drivers, payoffs,
//! analytic references and the basket coordinate transform.
//!
//! Sign convention: every [`DriverSpec`] stores the driver in the PDE
//! convention, i.e. the `f` appearing as `∂_t u + L u + f(t, x, u, σ*∇u) = 0`.
//! The wealth-equation BSDEs in the catalogue are written with a subtracted
//! integral, so their drivers enter here negated. Keeping one convention at
//! the solver boundary removes per-model sign bugs; the `z` argument handed
//! to a driver is always the σ-scaled gradient `σ*(x)∇u`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::generator::DifferenceSet;
use crate::grid::TensorGrid;
use crate::integrators::Nonlinearity;

/// Standard normal CDF through the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Positive part.
fn pos(a: f64) -> f64 {
    a.max(0.0)
}

/// Negative part, nonnegative: `a = pos(a) - neg(a)`.
fn neg(a: f64) -> f64 {
    (-a).max(0.0)
}

pub type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SurfaceFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Time-homogeneous scalar diffusion `dX = μ(X)dt + σ(X)dW`.
pub struct Model1D {
    pub mu: ScalarFn,
    pub sigma: ScalarFn,
}

impl Model1D {
    /// Geometric Brownian motion with appreciation `mu` and volatility `sigma`.
    pub fn black_scholes(mu: f64, sigma: f64) -> Self {
        Model1D {
            mu: Box::new(move |x| mu * x),
            sigma: Box::new(move |x| sigma * x),
        }
    }
}

/// Driver in PDE convention; `x` is the full state point, `y` the value and
/// `z` the σ-scaled gradient vector.
pub struct DriverSpec {
    pub f: Box<dyn Fn(f64, &[f64], f64, &[f64]) -> Result<f64> + Send + Sync>,
}

impl DriverSpec {
    pub fn new(f: impl Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        DriverSpec {
            f: Box::new(move |t, x, y, z| Ok(f(t, x, y, z))),
        }
    }

    pub fn new_fallible(
        f: impl Fn(f64, &[f64], f64, &[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        DriverSpec { f: Box::new(f) }
    }

    pub fn eval(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> Result<f64> {
        (self.f)(t, x, y, z)
    }

    /// Plain discounting: `f = -r y`.
    pub fn linear_rate(r: f64) -> Self {
        DriverSpec::new(move |_, _, y, _| -r * y)
    }
}

/// Driver for the scalar Black-Scholes wealth equation with a higher
/// borrowing rate `cap_r` than the lending rate `r`:
///
/// ```text
///     f = -[ r (y - z/σ̄)^+ - R (y - z/σ̄)^- + (μ̄/σ̄) z ]
/// ```
///
/// where `σ̄`, `μ̄` are the scalar log-coefficients and `z` the σ-scaled
/// gradient argument, so `z/σ̄ = s ∂_s u` is the stock position.
pub fn nonlinear_rates_driver(mu: f64, sigma_scalar: f64, r: f64, cap_r: f64) -> DriverSpec {
    DriverSpec::new(move |_, _, y, z| {
        let zz = z[0];
        let a = y - zz / sigma_scalar;
        -(r * pos(a) - cap_r * neg(a) + mu / sigma_scalar * zz)
    })
}

/// Closed-form European call value and σ-scaled delta under Black-Scholes.
/// Past expiry (`t >= T`) the payoff limit is returned.
pub fn bs_analytic_price(
    s: f64,
    t: f64,
    strike: f64,
    r: f64,
    sigma: f64,
    horizon: f64,
) -> (f64, f64) {
    let tau = horizon - t;
    if tau <= 0.0 || s <= 0.0 {
        let price = pos(s - strike);
        let delta_term = if s > strike { sigma * s } else { 0.0 };
        return (price, delta_term);
    }
    let vol = sigma * tau.sqrt();
    let d1 = ((s / strike).ln() + (r + 0.5 * sigma * sigma) * tau) / vol;
    let d2 = d1 - vol;
    let price = s * normal_cdf(d1) - strike * (-r * tau).exp() * normal_cdf(d2);
    (price, s * normal_cdf(d1) * sigma)
}

/// Single-asset stochastic local volatility model
///
/// ```text
///     dS = ω(S, v) dt + m(v) Γ(S) dW1,    dv = μ_v(v) dt + σ_v(v) dW2,
/// ```
///
/// with correlation `ρ` between the two Brownian motions.
pub struct SlvModel {
    pub omega: SurfaceFn,
    pub vol_multiplier: ScalarFn,
    pub local_factor: ScalarFn,
    pub mu_v: ScalarFn,
    pub sigma_v: ScalarFn,
    pub rho: f64,
}

impl SlvModel {
    fn check_rho(rho: f64) -> Result<()> {
        if !(rho.abs() < 1.0) {
            return Err(Error::invalid(format!("need |rho| < 1, got {rho}")));
        }
        Ok(())
    }

    /// Lower-triangular Cholesky factor of the 2x2 correlation matrix.
    pub fn chol(&self) -> DMatrix<f64> {
        let rho = self.rho;
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, rho, (1.0 - rho * rho).sqrt()])
    }

    /// Drift vector at `(s, v)`.
    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        vec![(self.omega)(x[0], x[1]), (self.mu_v)(x[1])]
    }

    /// Diffusion matrix `diag(m(v)Γ(s), σ_v(v)) · L`.
    pub fn diffusion(&self, x: &[f64]) -> DMatrix<f64> {
        let d1 = (self.vol_multiplier)(x[1]) * (self.local_factor)(x[0]);
        let d2 = (self.sigma_v)(x[1]);
        let rho = self.rho;
        let root = (1.0 - rho * rho).sqrt();
        DMatrix::from_row_slice(2, 2, &[d1, 0.0, rho * d2, root * d2])
    }
}

/// Heston-SABR: `dS = bS dt + √v S^β dW1`, `dv = η(θ-v) dt + α√v dW2`.
pub fn heston_sabr(b: f64, beta: f64, eta: f64, theta: f64, alpha: f64, rho: f64) -> Result<SlvModel> {
    SlvModel::check_rho(rho)?;
    if !(eta > 0.0 && theta > 0.0 && alpha > 0.0) {
        return Err(Error::invalid("heston_sabr needs eta, theta, alpha > 0"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid("heston_sabr needs beta in (0, 1]"));
    }
    Ok(SlvModel {
        omega: Box::new(move |s, _| b * s),
        vol_multiplier: Box::new(|v| v.sqrt()),
        local_factor: Box::new(move |s| s.powf(beta)),
        mu_v: Box::new(move |v| eta * (theta - v)),
        sigma_v: Box::new(move |v| alpha * v.sqrt()),
        rho,
    })
}

/// The local factor of the Hyp-Hyp model.
pub fn hyphyp_f(beta: f64, x: f64) -> f64 {
    ((1.0 - beta + beta * beta) * x
        + (beta - 1.0) * ((x * x + beta * beta * (1.0 - x) * (1.0 - x)).sqrt() - beta))
        / beta
}

/// The volatility multiplier of the Hyp-Hyp model.
pub fn hyphyp_g(v: f64) -> f64 {
    v + (v * v + 1.0).sqrt()
}

/// Hyp-Hyp: `dS = bS dt + σ0 F(S) G(v) dW1`, `dv = -κv dt + α√(2κ) dW2`.
pub fn hyphyp(b: f64, beta: f64, kappa: f64, sigma0: f64, alpha: f64, rho: f64) -> Result<SlvModel> {
    SlvModel::check_rho(rho)?;
    if !(kappa > 0.0 && sigma0 > 0.0 && alpha > 0.0) {
        return Err(Error::invalid("hyphyp needs kappa, sigma0, alpha > 0"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid("hyphyp needs beta in (0, 1]"));
    }
    Ok(SlvModel {
        omega: Box::new(move |s, _| b * s),
        vol_multiplier: Box::new(hyphyp_g),
        local_factor: Box::new(move |s| sigma0 * hyphyp_f(beta, s)),
        mu_v: Box::new(move |v| -kappa * v),
        sigma_v: Box::new(move |_| alpha * (2.0 * kappa).sqrt()),
        rho,
    })
}

/// SABR on the forward: `dF = v F^β dW1`, `dv = α v dW2`; both driftless.
pub fn sabr(alpha: f64, beta: f64, rho: f64) -> Result<SlvModel> {
    SlvModel::check_rho(rho)?;
    if !(alpha > 0.0) {
        return Err(Error::invalid("sabr needs alpha > 0"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid("sabr needs beta in (0, 1]"));
    }
    Ok(SlvModel {
        omega: Box::new(|_, _| 0.0),
        vol_multiplier: Box::new(|v| v),
        local_factor: Box::new(move |f| f.powf(beta)),
        mu_v: Box::new(|_| 0.0),
        sigma_v: Box::new(move |v| alpha * v),
        rho,
    })
}

/// Solves `σ*(x) w = z` for the single-asset SLV factorization
/// `σ = diag(d) L`: one triangular backsolve and a diagonal solve, no dense
/// inverse. Fails when the diagonal degenerates at the evaluation point.
fn solve_sigma_transpose_2d(d1: f64, d2: f64, rho: f64, z: &[f64]) -> Result<[f64; 2]> {
    let root = (1.0 - rho * rho).sqrt();
    if d1 == 0.0 || d2 == 0.0 || root == 0.0 || !(d1.is_finite() && d2.is_finite()) {
        return Err(Error::numeric(
            "singular diffusion matrix; grid touches a zero of m, Γ or σ_v",
        ));
    }
    // σ* = L* diag(d): first the upper-triangular L*, then the diagonal.
    let u2 = z[1] / root;
    let u1 = z[0] - rho * u2;
    Ok([u1 / d1, u2 / d2])
}

/// Wealth-equation driver for a single-asset SLV model with lending rate `r`
/// and borrowing rate `cap_r`:
///
/// ```text
///     f = -[ r (y - w·x)^+ - R (y - w·x)^- + w·μ(x) ],   w = σ(x)^{-*} z,
/// ```
///
/// where `σ(x)^{-*}` is applied through the `diag·L` factorization.
pub fn slv_driver(model: std::sync::Arc<SlvModel>, r: f64, cap_r: f64) -> DriverSpec {
    DriverSpec::new_fallible(move |_, x, y, z| {
        let d1 = (model.vol_multiplier)(x[1]) * (model.local_factor)(x[0]);
        let d2 = (model.sigma_v)(x[1]);
        let w = solve_sigma_transpose_2d(d1, d2, model.rho, z)?;
        let mu = model.drift(x);
        let invested = w[0] * x[0] + w[1] * x[1];
        let a = y - invested;
        Ok(-(r * pos(a) - cap_r * neg(a) + w[0] * mu[0] + w[1] * mu[1]))
    })
}

/// European call `(s - K)^+`.
pub fn call_payoff(strike: f64) -> impl Fn(f64) -> f64 + Send + Sync + Copy {
    move |s| pos(s - strike)
}

/// European put `(K - s)^+`.
pub fn put_payoff(strike: f64) -> impl Fn(f64) -> f64 + Send + Sync + Copy {
    move |s| pos(strike - s)
}

/// Long one call at `k1`, short two calls at `k2`.
pub fn call_combination_payoff(k1: f64, k2: f64) -> impl Fn(f64) -> f64 + Send + Sync + Copy {
    move |s| pos(s - k1) - 2.0 * pos(s - k2)
}

/// Discounted Black call price with the Hagan implied volatility expansion
/// for the SABR model; `f` and `v` are the forward and volatility states.
pub fn hagan_sabr_price(
    f: f64,
    v: f64,
    t: f64,
    strike: f64,
    horizon: f64,
    r: f64,
    alpha: f64,
    beta: f64,
    rho: f64,
) -> Result<f64> {
    if !(f > 0.0 && strike > 0.0 && v > 0.0) {
        return Err(Error::invalid("hagan_sabr_price needs f, K, v > 0"));
    }
    let tau = horizon - t;
    if tau <= 0.0 {
        return Ok(pos(f - strike));
    }
    let sigma_b = hagan_implied_vol(f, v, strike, tau, alpha, beta, rho);
    let vol = sigma_b * tau.sqrt();
    let d1 = ((f / strike).ln() + 0.5 * vol * vol) / vol;
    let d2 = d1 - vol;
    Ok((-r * tau).exp() * (f * normal_cdf(d1) - strike * normal_cdf(d2)))
}

/// Hagan's implied-volatility expansion. The `z/χ(z)` factor takes its
/// analytic limit 1 at the money.
pub fn hagan_implied_vol(
    f: f64,
    v: f64,
    strike: f64,
    tau: f64,
    alpha: f64,
    beta: f64,
    rho: f64,
) -> f64 {
    let log_fk = (f / strike).ln();
    let one_m_beta = 1.0 - beta;
    let fk_pow_half = (f * strike).powf(one_m_beta / 2.0);
    let fk_pow_full = (f * strike).powf(one_m_beta);
    let denom_series = 1.0
        + one_m_beta * one_m_beta / 24.0 * log_fk * log_fk
        + one_m_beta.powi(4) / 1920.0 * log_fk.powi(4);
    let correction = 1.0
        + (one_m_beta * one_m_beta / 24.0 * v * v / fk_pow_full
            + 0.25 * rho * beta * alpha * v / fk_pow_half
            + (2.0 - 3.0 * rho * rho) / 24.0 * alpha * alpha)
            * tau;
    let z = alpha / v * fk_pow_half * log_fk;
    // Near the money the direct ratio z/χ(z) loses precision; its expansion
    // χ(z)/z = 1 + ρz/2 + O(z²) is exact to well below 1e-12 there.
    let z_over_chi = if z.abs() < 1e-6 {
        1.0 / (1.0 + 0.5 * rho * z)
    } else {
        let chi = (((1.0 - 2.0 * rho * z + z * z).sqrt() + z - rho) / (1.0 - rho)).ln();
        z / chi
    };
    v / (fk_pow_half * denom_series) * z_over_chi * correction
}

/// d-asset stochastic local volatility system on the state
/// `(S^1..S^d, v^1..v^d)` with block correlation matrix
/// `[[C_S, C_Sv], [C_Sv*, C_v]]`.
pub struct MultiAssetSlv {
    pub components: Vec<SlvComponent>,
    /// Cholesky factor of the assembled 2d x 2d correlation matrix.
    pub chol_l: DMatrix<f64>,
}

pub struct SlvComponent {
    pub omega: SurfaceFn,
    pub vol_multiplier: ScalarFn,
    pub local_factor: ScalarFn,
    pub mu_v: ScalarFn,
    pub sigma_v: ScalarFn,
}

impl MultiAssetSlv {
    /// Assembles and Cholesky-factors the correlation matrix, rejecting
    /// blocks that are not jointly positive definite.
    pub fn new(
        components: Vec<SlvComponent>,
        c_s: DMatrix<f64>,
        c_sv: DMatrix<f64>,
        c_v: DMatrix<f64>,
    ) -> Result<Self> {
        let d = components.len();
        if c_s.shape() != (d, d) || c_sv.shape() != (d, d) || c_v.shape() != (d, d) {
            return Err(Error::invalid("correlation blocks must be d x d"));
        }
        let mut c = DMatrix::<f64>::zeros(2 * d, 2 * d);
        c.view_mut((0, 0), (d, d)).copy_from(&c_s);
        c.view_mut((0, d), (d, d)).copy_from(&c_sv);
        c.view_mut((d, 0), (d, d)).copy_from(&c_sv.transpose());
        c.view_mut((d, d), (d, d)).copy_from(&c_v);
        let chol = c
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("correlation matrix is not positive definite"))?;
        Ok(MultiAssetSlv {
            components,
            chol_l: chol.l(),
        })
    }

    pub fn n_assets(&self) -> usize {
        self.components.len()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.components.len()
    }

    /// Drift `(ω^i(s_i, v_i))_i ++ (μ_v^i(v_i))_i` at the untransformed state.
    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let d = self.n_assets();
        let mut out = Vec::with_capacity(2 * d);
        for (i, comp) in self.components.iter().enumerate() {
            out.push((comp.omega)(x[i], x[d + i]));
        }
        for (i, comp) in self.components.iter().enumerate() {
            out.push((comp.mu_v)(x[d + i]));
        }
        out
    }

    /// Diagonal part of the diffusion at the untransformed state.
    pub fn diffusion_diag(&self, x: &[f64]) -> Vec<f64> {
        let d = self.n_assets();
        let mut out = Vec::with_capacity(2 * d);
        for (i, comp) in self.components.iter().enumerate() {
            out.push((comp.vol_multiplier)(x[d + i]) * (comp.local_factor)(x[i]));
        }
        for (i, comp) in self.components.iter().enumerate() {
            out.push((comp.sigma_v)(x[d + i]));
        }
        out
    }

    /// Full diffusion matrix `diag(..) · L`.
    pub fn diffusion(&self, x: &[f64]) -> DMatrix<f64> {
        let diag = self.diffusion_diag(x);
        let n = diag.len();
        let mut m = self.chol_l.clone();
        for i in 0..n {
            for j in 0..=i {
                m[(i, j)] *= diag[i];
            }
        }
        m
    }
}

/// Linear coordinate change for basket payoffs: the first transformed
/// coordinate is the basket value `λ1 s1 + λ2 s2`, so a basket call becomes
/// a call on a single coordinate.
#[derive(Debug, Clone)]
pub struct BasketTransform {
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
}

impl BasketTransform {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if lambda1 == 0.0 || lambda2 == 0.0 {
            return Err(Error::invalid("basket weights must be nonzero"));
        }
        let matrix = DMatrix::from_row_slice(
            4,
            4,
            &[
                lambda1, lambda2, 0.0, 0.0, //
                -lambda1, lambda2, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        let det2 = 2.0 * lambda1 * lambda2;
        let inverse = DMatrix::from_row_slice(
            4,
            4,
            &[
                lambda2 / det2,
                -lambda2 / det2,
                0.0,
                0.0, //
                lambda1 / det2,
                lambda1 / det2,
                0.0,
                0.0, //
                0.0,
                0.0,
                1.0,
                0.0, //
                0.0,
                0.0,
                0.0,
                1.0,
            ],
        );
        Ok(BasketTransform { matrix, inverse })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_row_slice(x))
            .iter()
            .copied()
            .collect()
    }

    pub fn backward(&self, xh: &[f64]) -> Vec<f64> {
        (&self.inverse * DVector::from_row_slice(xh))
            .iter()
            .copied()
            .collect()
    }
}

/// Dynamics and driver of a multi-asset SLV system in (optionally)
/// transformed coordinates `x̂ = B x`: drift `Bμ(B^{-1}x̂)` and diffusion
/// `Bσ(B^{-1}x̂)`; the driver keeps its algebraic form with hatted
/// quantities, and `σ̂^{-*}` is applied by composing the triangular, diagonal
/// and `B^{-*}` solves.
pub struct TransformedSlv {
    pub model: MultiAssetSlv,
    pub transform: Option<BasketTransform>,
}

impl TransformedSlv {
    pub fn plain(model: MultiAssetSlv) -> Self {
        TransformedSlv {
            model,
            transform: None,
        }
    }

    pub fn with_transform(model: MultiAssetSlv, transform: BasketTransform) -> Self {
        TransformedSlv {
            model,
            transform: Some(transform),
        }
    }

    fn untransform(&self, xh: &[f64]) -> Vec<f64> {
        match &self.transform {
            Some(b) => b.backward(xh),
            None => xh.to_vec(),
        }
    }

    pub fn drift(&self, xh: &[f64]) -> Vec<f64> {
        let x = self.untransform(xh);
        let mu = self.model.drift(&x);
        match &self.transform {
            Some(b) => (&b.matrix * DVector::from_row_slice(&mu)).iter().copied().collect(),
            None => mu,
        }
    }

    pub fn diffusion(&self, xh: &[f64]) -> DMatrix<f64> {
        let x = self.untransform(xh);
        let s = self.model.diffusion(&x);
        match &self.transform {
            Some(b) => &b.matrix * s,
            None => s,
        }
    }

    /// Solves `σ̂*(x̂) w = z` through the factorization; errors identify the
    /// offending node when the diagonal vanishes.
    pub fn solve_sigma_transpose(&self, xh: &[f64], z: &[f64], node: usize) -> Result<Vec<f64>> {
        let x = self.untransform(xh);
        let diag = self.model.diffusion_diag(&x);
        if let Some(pos) = diag.iter().position(|&d| d == 0.0 || !d.is_finite()) {
            return Err(Error::NumericAt {
                context: format!("node {node}"),
                message: format!(
                    "singular diffusion (diagonal entry {pos}); grid touches a zero of m, Γ or σ_v"
                ),
            });
        }
        // σ̂* = L* diag B*: backsolve the upper-triangular L*, divide by the
        // diagonal, then apply B^{-*}.
        let l = &self.model.chol_l;
        let n = z.len();
        let mut u = z.to_vec();
        for i in (0..n).rev() {
            let mut acc = u[i];
            for j in i + 1..n {
                acc -= l[(j, i)] * u[j];
            }
            u[i] = acc / l[(i, i)];
        }
        for i in 0..n {
            u[i] /= diag[i];
        }
        match &self.transform {
            Some(b) => Ok((b.inverse.transpose() * DVector::from_row_slice(&u))
                .iter()
                .copied()
                .collect()),
            None => Ok(u),
        }
    }

    /// Wealth-equation driver with different lending/borrowing rates, in PDE
    /// convention.
    pub fn driver(self: std::sync::Arc<Self>, r: f64, cap_r: f64) -> DriverSpec {
        let me = self;
        DriverSpec::new_fallible(move |_, xh, y, z| {
            let w = me.solve_sigma_transpose(xh, z, usize::MAX)?;
            let mu = me.drift(xh);
            let invested: f64 = w.iter().zip(xh).map(|(a, b)| a * b).sum();
            let carry: f64 = w.iter().zip(&mu).map(|(a, b)| a * b).sum();
            let a = y - invested;
            Ok(-(r * pos(a) - cap_r * neg(a) + carry))
        })
    }
}

/// Assembles the spatially discretized reaction term
///
/// ```text
///     F(t, z)_i = f(t, x_i, z_i, σ*(x_i) · (D̃1^(1) z |_i, ..., D̃1^(d) z |_i))
/// ```
///
/// Boundary rows receive zero derivative values because the boundary rows of
/// each difference matrix vanish. `sigma` is evaluated once per node during
/// assembly.
pub fn assemble_f(
    grid: &TensorGrid,
    diffs: &DifferenceSet,
    sigma: impl Fn(&[f64]) -> DMatrix<f64>,
    driver: DriverSpec,
) -> Nonlinearity {
    let d = grid.dim();
    let n = grid.total_size();
    let points: Vec<Vec<f64>> = (0..n).map(|i| grid.point(i)).collect();
    // store σ*(x_i) row-major per node
    let mut sigma_t: Vec<f64> = Vec::with_capacity(n * d * d);
    for point in &points {
        let s = sigma(point);
        for r in 0..d {
            for c in 0..d {
                sigma_t.push(s[(c, r)]);
            }
        }
    }
    let d1: Vec<_> = diffs.d1.clone();
    Box::new(move |t: f64, z: &[f64]| {
        let mut grads = vec![vec![0.0; n]; d];
        for (p, d1p) in d1.iter().enumerate() {
            d1p.mul_vec_into(z, &mut grads[p]);
        }
        let mut out = vec![0.0; n];
        let mut zvec = vec![0.0; d];
        for i in 0..n {
            let st = &sigma_t[i * d * d..(i + 1) * d * d];
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += st[r * d + c] * grads[c][i];
                }
                zvec[r] = acc;
            }
            let v = driver
                .eval(t, &points[i], z[i], &zvec)
                .map_err(|e| Error::NumericAt {
                    context: format!("node {i}"),
                    message: e.to_string(),
                })?;
            if !v.is_finite() {
                return Err(Error::NumericAt {
                    context: format!("node {i}"),
                    message: "driver returned a non-finite value".into(),
                });
            }
            out[i] = v;
        }
        Ok(out)
    })
}

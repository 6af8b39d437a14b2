//! Ready-made experiment setups: option-pricing problems on their reference
//! grids, with the matching analytic or approximate price oracles.
//!
//! Each `*_problem` builder accepts the tensor grid it should discretize on,
//! so the same problem definition serves both full-grid solves and the
//! per-level sub-solves of the sparse-grid combination.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::generator::{build_generator_1d, build_generator_nd, DifferenceSet};
use crate::grid::{concat_grids, tavella_randall_grid, uniform_grid, Grid1D, TensorGrid};
use crate::integrators::BackwardProblem;
use crate::models::{
    assemble_f, bs_analytic_price, call_combination_payoff, call_payoff, hagan_sabr_price,
    heston_sabr, hyphyp, nonlinear_rates_driver, put_payoff, sabr, slv_driver, BasketTransform,
    DriverSpec, MultiAssetSlv, SlvComponent, SlvModel, TransformedSlv,
};
use crate::sparsegrid::AxisFamily;

/// Reference price used for error columns.
pub enum Oracle {
    BsCall {
        strike: f64,
        rate: f64,
        sigma: f64,
        horizon: f64,
    },
    HaganSabr {
        strike: f64,
        rate: f64,
        alpha: f64,
        beta: f64,
        rho: f64,
        horizon: f64,
    },
    None,
}

impl Oracle {
    /// Price at time `t` and state `x` (state layout per experiment).
    pub fn price(&self, t: f64, x: &[f64]) -> Option<f64> {
        match self {
            Oracle::BsCall {
                strike,
                rate,
                sigma,
                horizon,
            } => Some(bs_analytic_price(x[0], t, *strike, *rate, *sigma, *horizon).0),
            Oracle::HaganSabr {
                strike,
                rate,
                alpha,
                beta,
                rho,
                horizon,
            } => hagan_sabr_price(x[0], x[1], t, *strike, *horizon, *rate, *alpha, *beta, *rho)
                .ok(),
            Oracle::None => None,
        }
    }
}

/// European call under geometric Brownian motion with plain discounting.
#[derive(Debug, Clone, Copy)]
pub struct BsLinearParams {
    pub horizon: f64,
    pub strike: f64,
    pub rate: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Default for BsLinearParams {
    fn default() -> Self {
        BsLinearParams {
            horizon: 1.0,
            strike: 100.0,
            rate: 0.03,
            mu: 0.03,
            sigma: 0.2,
        }
    }
}

/// The stretched reference grid for the scalar experiments.
pub fn bs_reference_grid(half_count: usize) -> Result<Grid1D> {
    tavella_randall_grid(0.0, 100.0, 200.0, half_count, 50.0, 50.0)
}

pub fn bs_linear_problem(grid: &TensorGrid, p: &BsLinearParams) -> Result<BackwardProblem> {
    let (mu, sigma) = (p.mu, p.sigma);
    let gen = build_generator_1d(grid.axis(0), move |x| mu * x, move |x| sigma * x)?;
    let payoff = call_payoff(p.strike);
    let terminal: Vec<f64> = grid.axis(0).nodes().iter().map(|&s| payoff(s)).collect();
    let diffs = gen.differences.clone();
    let f = assemble_f(
        grid,
        &diffs,
        move |x| DMatrix::from_element(1, 1, sigma * x[0]),
        DriverSpec::linear_rate(p.rate),
    );
    BackwardProblem::new(gen, f, terminal, p.horizon)
}

pub fn bs_linear_oracle(p: &BsLinearParams) -> Oracle {
    Oracle::BsCall {
        strike: p.strike,
        rate: p.rate,
        sigma: p.sigma,
        horizon: p.horizon,
    }
}

/// European call funded at a higher borrowing rate.
#[derive(Debug, Clone, Copy)]
pub struct NonlinearRatesParams {
    pub horizon: f64,
    pub strike: f64,
    pub rate: f64,
    pub borrow_rate: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Default for NonlinearRatesParams {
    fn default() -> Self {
        NonlinearRatesParams {
            horizon: 1.0,
            strike: 100.0,
            rate: 0.01,
            borrow_rate: 0.3,
            mu: 0.03,
            sigma: 0.2,
        }
    }
}

pub fn nonlinear_rates_problem(
    grid: &TensorGrid,
    p: &NonlinearRatesParams,
) -> Result<BackwardProblem> {
    let (mu, sigma) = (p.mu, p.sigma);
    let gen = build_generator_1d(grid.axis(0), move |x| mu * x, move |x| sigma * x)?;
    let payoff = call_payoff(p.strike);
    let terminal: Vec<f64> = grid.axis(0).nodes().iter().map(|&s| payoff(s)).collect();
    let diffs = gen.differences.clone();
    let f = assemble_f(
        grid,
        &diffs,
        move |x| DMatrix::from_element(1, 1, sigma * x[0]),
        nonlinear_rates_driver(p.mu, p.sigma, p.rate, p.borrow_rate),
    );
    BackwardProblem::new(gen, f, terminal, p.horizon)
}

/// Heston-SABR put with different lending/borrowing rates.
#[derive(Debug, Clone, Copy)]
pub struct HestonSabrParams {
    pub horizon: f64,
    pub strike: f64,
    pub rate: f64,
    pub borrow_rate: f64,
    pub b: f64,
    pub beta: f64,
    pub eta: f64,
    pub theta: f64,
    pub alpha: f64,
    pub rho: f64,
    pub s0: f64,
    pub v0: f64,
}

impl Default for HestonSabrParams {
    fn default() -> Self {
        HestonSabrParams {
            horizon: 1.0,
            strike: 100.0,
            rate: 0.01,
            borrow_rate: 0.07,
            b: 0.01,
            beta: 0.7,
            eta: 4.0,
            theta: 0.035,
            alpha: 0.15,
            rho: -0.75,
            s0: 100.0,
            v0: 0.4,
        }
    }
}

impl HestonSabrParams {
    pub fn model(&self) -> Result<SlvModel> {
        heston_sabr(self.b, self.beta, self.eta, self.theta, self.alpha, self.rho)
    }
}

/// First-quadrant grid `[Δ1, 2s0-Δ1] x [Δ2, 2v0-Δ2]` with `Δ = center/N0`
/// on each axis: stretched in the asset, uniform in the variance.
pub fn heston_sabr_grid(p: &HestonSabrParams, n0_s: usize, n0_v: usize) -> Result<TensorGrid> {
    let d1 = p.s0 / n0_s as f64;
    let d2 = p.v0 / n0_v as f64;
    let s_axis = tavella_randall_grid(d1, p.s0, 2.0 * p.s0 - d1, n0_s, 1.0, 1.0)?;
    let v_axis = uniform_grid(d2, p.v0, 2.0 * p.v0 - d2, n0_v)?;
    TensorGrid::new(vec![s_axis, v_axis])
}

fn slv_problem(
    grid: &TensorGrid,
    model: Arc<SlvModel>,
    payoff: impl Fn(f64) -> f64,
    rate: f64,
    borrow_rate: f64,
    horizon: f64,
) -> Result<BackwardProblem> {
    let gen = build_generator_nd(grid, |x| model.drift(x), |x| model.diffusion(x))?;
    let terminal = grid.evaluate(|x| payoff(x[0]));
    let diffs = gen.differences.clone();
    let model_for_sigma = model.clone();
    let f = assemble_f(
        grid,
        &diffs,
        move |x| model_for_sigma.diffusion(x),
        slv_driver(model, rate, borrow_rate),
    );
    BackwardProblem::new(gen, f, terminal, horizon)
}

pub fn heston_sabr_problem(grid: &TensorGrid, p: &HestonSabrParams) -> Result<BackwardProblem> {
    let model = Arc::new(p.model()?);
    slv_problem(
        grid,
        model,
        put_payoff(p.strike),
        p.rate,
        p.borrow_rate,
        p.horizon,
    )
}

/// Hyp-Hyp call combination `(s-k1)^+ - 2(s-k2)^+`.
#[derive(Debug, Clone, Copy)]
pub struct HypHypParams {
    pub horizon: f64,
    pub k1: f64,
    pub k2: f64,
    pub rate: f64,
    pub borrow_rate: f64,
    pub b: f64,
    pub beta: f64,
    pub kappa: f64,
    pub sigma0: f64,
    pub alpha: f64,
    pub rho: f64,
    pub s0: f64,
    pub v0: f64,
}

impl Default for HypHypParams {
    fn default() -> Self {
        HypHypParams {
            horizon: 1.0,
            k1: 95.0,
            k2: 105.0,
            rate: 0.006,
            borrow_rate: 0.06,
            b: 0.04,
            beta: 0.25,
            kappa: 0.5,
            sigma0: 0.25,
            alpha: 0.3,
            rho: 0.8,
            s0: 100.0,
            v0: 0.4,
        }
    }
}

impl HypHypParams {
    pub fn model(&self) -> Result<SlvModel> {
        hyphyp(self.b, self.beta, self.kappa, self.sigma0, self.alpha, self.rho)
    }
}

/// Asset axis: two stretched halves meeting at the junction between the two
/// strikes, concentrating nodes at both payoff kinks.
pub fn hyphyp_grid(p: &HypHypParams, half_count: usize, n0_v: usize) -> Result<TensorGrid> {
    let d1 = p.s0 / (2 * half_count) as f64;
    let right = 2.0 * p.s0 - d1;
    let mid = 0.5 * (p.k1 + p.k2);
    let left_part = tavella_randall_grid(d1, p.k1, mid, half_count, 1.0, 1.0)?;
    let right_part = tavella_randall_grid(mid, p.k2, right, half_count, 1.0, 1.0)?;
    let s_axis = concat_grids(&left_part, &right_part)?;
    let d2 = p.v0 / n0_v as f64;
    let v_axis = uniform_grid(d2, p.v0, 2.0 * p.v0 - d2, n0_v)?;
    TensorGrid::new(vec![s_axis, v_axis])
}

pub fn hyphyp_problem(grid: &TensorGrid, p: &HypHypParams) -> Result<BackwardProblem> {
    let model = Arc::new(p.model()?);
    slv_problem(
        grid,
        model,
        call_combination_payoff(p.k1, p.k2),
        p.rate,
        p.borrow_rate,
        p.horizon,
    )
}

/// SABR forward call with plain discounting.
#[derive(Debug, Clone, Copy)]
pub struct SabrParams {
    pub horizon: f64,
    pub strike: f64,
    pub rate: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub f0: f64,
    pub v0: f64,
}

impl Default for SabrParams {
    fn default() -> Self {
        SabrParams {
            horizon: 1.0,
            strike: 100.0,
            rate: 0.05,
            alpha: 0.4,
            beta: 0.9,
            rho: 0.3,
            f0: 100.0,
            v0: 0.4,
        }
    }
}

impl SabrParams {
    pub fn model(&self) -> Result<SlvModel> {
        sabr(self.alpha, self.beta, self.rho)
    }
}

pub fn sabr_full_grid(p: &SabrParams, n0_f: usize, n0_v: usize) -> Result<TensorGrid> {
    let f_axis = tavella_randall_grid(0.0, p.f0, 2.0 * p.f0, n0_f, 5.0, 5.0)?;
    let v_axis = uniform_grid(0.0, p.v0, 2.0 * p.v0, n0_v)?;
    TensorGrid::new(vec![f_axis, v_axis])
}

/// Level families for the SABR combination runs: stretched forward axis,
/// uniform volatility axis.
pub fn sabr_axis_families(p: &SabrParams) -> [AxisFamily; 2] {
    [
        AxisFamily::tavella_randall(0.0, p.f0, 2.0 * p.f0, 5.0, 5.0),
        AxisFamily::uniform(0.0, p.v0, 2.0 * p.v0),
    ]
}

pub fn sabr_problem(grid: &TensorGrid, p: &SabrParams) -> Result<BackwardProblem> {
    let model = Arc::new(p.model()?);
    let gen = build_generator_nd(grid, |x| model.drift(x), |x| model.diffusion(x))?;
    let payoff = call_payoff(p.strike);
    let terminal = grid.evaluate(|x| payoff(x[0]));
    let diffs = gen.differences.clone();
    let model_for_sigma = model.clone();
    let f = assemble_f(
        grid,
        &diffs,
        move |x| model_for_sigma.diffusion(x),
        DriverSpec::linear_rate(p.rate),
    );
    BackwardProblem::new(gen, f, terminal, p.horizon)
}

pub fn sabr_oracle(p: &SabrParams) -> Oracle {
    Oracle::HaganSabr {
        strike: p.strike,
        rate: p.rate,
        alpha: p.alpha,
        beta: p.beta,
        rho: p.rho,
        horizon: p.horizon,
    }
}

/// Basket call on two Heston-SABR assets after the decorrelating coordinate
/// change; the transformed payoff reads only the first coordinate.
#[derive(Debug, Clone)]
pub struct BasketParams {
    pub horizon: f64,
    pub strike: f64,
    pub rate: f64,
    pub borrow_rate: f64,
    pub lambda: [f64; 2],
    pub beta: [f64; 2],
    pub eta: [f64; 2],
    pub theta: [f64; 2],
    pub alpha: [f64; 2],
    pub b: [f64; 2],
    pub c_s: [[f64; 2]; 2],
    pub c_sv: [[f64; 2]; 2],
    pub c_v: [[f64; 2]; 2],
    /// Transformed-domain bounds per axis: (left, center, right).
    pub domain: [(f64, f64, f64); 4],
    pub probe: [f64; 4],
}

impl Default for BasketParams {
    fn default() -> Self {
        BasketParams {
            horizon: 1.0,
            strike: 100.0,
            rate: 0.01,
            borrow_rate: 0.07,
            lambda: [0.5, 0.5],
            beta: [0.6, 0.07],
            eta: [0.9, 0.2],
            theta: [0.02, 0.3],
            alpha: [0.65, 0.3],
            b: [0.01, 0.01],
            c_s: [[1.0, 0.5], [0.5, 1.0]],
            c_sv: [[0.65, 0.3], [-0.1, 0.05]],
            c_v: [[1.0, 0.7], [0.7, 1.0]],
            domain: [
                (51.0, 100.0, 149.0),
                (-49.0, 0.0, 49.0),
                (0.01, 0.4, 0.79),
                (0.01, 0.3, 0.59),
            ],
            probe: [100.0, 100.0, 0.4, 0.3],
        }
    }
}

impl BasketParams {
    pub fn dynamics(&self) -> Result<TransformedSlv> {
        let mut components = Vec::new();
        for i in 0..2 {
            let (b, beta) = (self.b[i], self.beta[i]);
            let (eta, theta, alpha) = (self.eta[i], self.theta[i], self.alpha[i]);
            components.push(SlvComponent {
                omega: Box::new(move |s, _| b * s),
                vol_multiplier: Box::new(|v: f64| v.abs().sqrt()),
                local_factor: Box::new(move |s: f64| s.abs().powf(beta)),
                mu_v: Box::new(move |v| eta * (theta - v)),
                sigma_v: Box::new(move |v: f64| alpha * v.abs().sqrt()),
            });
        }
        let to_mat = |b: &[[f64; 2]; 2]| {
            DMatrix::from_row_slice(2, 2, &[b[0][0], b[0][1], b[1][0], b[1][1]])
        };
        let model = MultiAssetSlv::new(
            components,
            to_mat(&self.c_s),
            to_mat(&self.c_sv),
            to_mat(&self.c_v),
        )?;
        let transform = BasketTransform::new(self.lambda[0], self.lambda[1])?;
        Ok(TransformedSlv::with_transform(model, transform))
    }

    /// Probe point in transformed coordinates.
    pub fn transformed_probe(&self) -> Result<Vec<f64>> {
        let t = BasketTransform::new(self.lambda[0], self.lambda[1])?;
        Ok(t.forward(&self.probe))
    }

    pub fn axis_families(&self) -> [AxisFamily; 4] {
        let d = self.domain;
        [
            AxisFamily::tavella_randall(d[0].0, d[0].1, d[0].2, 1.0, 1.0),
            AxisFamily::uniform(d[1].0, d[1].1, d[1].2),
            AxisFamily::uniform(d[2].0, d[2].1, d[2].2),
            AxisFamily::uniform(d[3].0, d[3].1, d[3].2),
        ]
    }
}

pub fn basket_problem(grid: &TensorGrid, p: &BasketParams) -> Result<BackwardProblem> {
    let dynamics = Arc::new(p.dynamics()?);
    let gen = build_generator_nd(grid, |x| dynamics.drift(x), |x| dynamics.diffusion(x))?;
    let payoff = call_payoff(p.strike);
    let terminal = grid.evaluate(|x| payoff(x[0]));
    let diffs = gen.differences.clone();
    let dyn_for_sigma = dynamics.clone();
    let f = assemble_f(
        grid,
        &diffs,
        move |x| dyn_for_sigma.diffusion(x),
        dynamics.driver(p.rate, p.borrow_rate),
    );
    BackwardProblem::new(gen, f, terminal, p.horizon)
}

/// Nodes of a 1-D grid lying inside a closed window, with their indices.
pub fn window_nodes(grid: &Grid1D, lo: f64, hi: f64) -> Vec<(usize, f64)> {
    grid.nodes()
        .iter()
        .enumerate()
        .filter(|(_, &x)| x >= lo && x <= hi)
        .map(|(i, &x)| (i, x))
        .collect()
}

/// Difference operators of a problem's grid (handy for external callers).
pub fn problem_differences(problem: &BackwardProblem) -> &DifferenceSet {
    &problem.generator.differences
}

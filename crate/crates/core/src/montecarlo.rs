//! Stochastic cross-checks: exact event-driven simulation of the CTMC, a
//! pathwise check of the probabilistic representation behind the backward
//! solver, and a least-squares Monte Carlo reference solver for the original
//! diffusion-driven equations.
//!
//! All randomness flows through a counter-based ChaCha generator: stream
//! `path_index` of `ChaCha12Rng::seed_from_u64(seed)` drives path
//! `path_index`, so runs reproduce bit-exactly regardless of scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::{check_validity, Generator};
use crate::integrators::{BackwardProblem, Trajectory};
use crate::models::DriverSpec;

/// RNG for one path of one experiment.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    // Box-Muller on open-interval uniforms.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Piecewise-constant realization of the chain: `states[k]` holds on
/// `[jump_times[k-1], jump_times[k])`, with `jump_times[0]` the first jump.
#[derive(Debug, Clone)]
pub struct ChainPath {
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
}

impl ChainPath {
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.states[k]
    }

    pub fn terminal_state(&self) -> usize {
        *self.states.last().unwrap()
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }
}

/// Exact simulation of the CTMC with generator `q`: exponential holding
/// times with rate `-q_ii`, jumps to `j != i` with probability
/// `q_ij / (-q_ii)`. Rows with `q_ii = 0` are absorbing.
///
/// Refuses generators that fail the Q-matrix validity check, and generators
/// whose worst-case expected jump count over the horizon exceeds 1e7 (rates
/// from fine spatial grids grow quadratically, making event-driven
/// simulation useless there).
pub fn gillespie_simulate(
    gen: &Generator,
    start: usize,
    horizon: f64,
    rng: &mut ChaCha12Rng,
) -> Result<ChainPath> {
    let q = &gen.q;
    if start >= q.dim() {
        return Err(Error::invalid("start state out of range"));
    }
    let report = check_validity(gen, 1e-12);
    if !report.is_valid {
        return Err(Error::invalid(
            "generator is not a valid transition rate matrix",
        ));
    }
    let max_rate = (0..q.dim()).map(|i| -q.get(i, i)).fold(0.0, f64::max);
    if max_rate * horizon > 1e7 {
        return Err(Error::invalid(format!(
            "expected jump count {:.2e} exceeds the simulation guardrail 1e7",
            max_rate * horizon
        )));
    }
    let mut t = 0.0;
    let mut state = start;
    let mut jump_times = Vec::new();
    let mut states = vec![start];
    loop {
        let rate = -q.get(state, state);
        if rate <= 0.0 {
            break; // absorbing
        }
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        t += -u.ln() / rate;
        if t > horizon {
            break;
        }
        // choose the next state proportionally to the off-diagonal rates
        let target = rng.random::<f64>() * rate;
        let (cols, vals) = q.row(state);
        let mut acc = 0.0;
        let mut next = state;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == state || v <= 0.0 {
                continue;
            }
            acc += v;
            if acc >= target {
                next = j;
                break;
            }
        }
        if next == state {
            // numerical leftovers: take the last admissible column
            next = *cols
                .iter()
                .zip(vals)
                .filter(|(&j, &v)| j != state && v > 0.0)
                .map(|(j, _)| j)
                .last()
                .unwrap_or(&state);
            if next == state {
                break;
            }
        }
        jump_times.push(t);
        states.push(next);
        state = next;
    }
    Ok(ChainPath { jump_times, states })
}

/// Monte Carlo check of the representation `Y_0 = E[X_T* G + ∫ X_s* H(s, U_s) ds]`
/// along simulated chain paths, with `U` interpolated linearly in time from
/// the solved trajectory. Returns the estimate and its standard error.
pub fn feynman_kac_check(
    gen: &Generator,
    problem: &BackwardProblem,
    traj: &Trajectory,
    start: usize,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let times = &traj.times;
    let m_steps = times.len() - 1;
    // H(t_m, U_m) at every trajectory knot, reused across paths.
    let mut h_knots = Vec::with_capacity(times.len());
    for (m, t) in times.iter().enumerate() {
        h_knots.push((problem.nonlinearity)(*t, &traj.values[m])?);
    }
    let horizon = problem.horizon;
    let dt = horizon / m_steps as f64;
    let values: Result<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let path = gillespie_simulate(gen, start, horizon, &mut rng)?;
            // ∫ H(s, U_s)_{X_s} ds: trapezoid on the union of knots and jumps
            let mut integral = 0.0;
            let h_at = |s: f64, i: usize| -> f64 {
                let k = ((s / dt).floor() as usize).min(m_steps - 1);
                let w = (s - times[k]) / dt;
                (1.0 - w) * h_knots[k][i] + w * h_knots[k + 1][i]
            };
            let mut cursor = 0.0;
            for seg in 0..=path.jump_times.len() {
                let seg_end = if seg < path.jump_times.len() {
                    path.jump_times[seg].min(horizon)
                } else {
                    horizon
                };
                let state = path.states[seg];
                // subdivide [cursor, seg_end] at trajectory knots, walking
                // knot indices so floating-point rounding cannot stall
                let mut a = cursor;
                let mut k = (cursor / dt).floor() as usize + 1;
                while k <= m_steps && times[k] < seg_end {
                    if times[k] > a {
                        integral += 0.5 * (h_at(a, state) + h_at(times[k], state)) * (times[k] - a);
                        a = times[k];
                    }
                    k += 1;
                }
                if seg_end > a {
                    integral += 0.5 * (h_at(a, state) + h_at(seg_end, state)) * (seg_end - a);
                }
                cursor = seg_end;
            }
            Ok(problem.terminal[path.terminal_state()] + integral)
        })
        .collect();
    let values = values?;
    let (mean, std) = run_statistics(&values)?;
    Ok((mean, std / (n_paths as f64).sqrt()))
}

/// Coefficients of the Laguerre polynomials up to degree `p`:
/// `poly_k(x) = Σ_{j<=k} (-1)^j / j! · C(k, j) x^j`.
pub fn laguerre_coefficients(p: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(p + 1);
    for k in 0..=p {
        let mut coeffs = Vec::with_capacity(k + 1);
        let mut binom = 1.0f64;
        let mut fact = 1.0f64;
        for j in 0..=k {
            if j > 0 {
                binom = binom * (k - j + 1) as f64 / j as f64;
                fact *= j as f64;
            }
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            coeffs.push(sign / fact * binom);
        }
        out.push(coeffs);
    }
    out
}

/// The Laguerre basis as callable functions.
pub fn laguerre_basis(p: usize) -> Vec<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    laguerre_coefficients(p)
        .into_iter()
        .map(|c| {
            Box::new(move |x: f64| c.iter().rev().fold(0.0, |acc, &a| acc * x + a))
                as Box<dyn Fn(f64) -> f64 + Send + Sync>
        })
        .collect()
}

/// Monte Carlo configuration for one least-squares run.
#[derive(Debug, Clone, Copy)]
pub struct LsmcConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub basis_degree: usize,
    pub seed: u64,
}

impl LsmcConfig {
    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(Error::invalid("n_paths and n_steps must be positive"));
        }
        Ok(())
    }
}

/// Result of one LSMC run.
#[derive(Debug, Clone, Copy)]
pub struct LsmcOutcome {
    pub y0: f64,
    /// Standard error of the terminal averaging step.
    pub std_error: f64,
    /// Largest condition number met across the regressions.
    pub max_condition: f64,
}

/// Column-equilibrated least squares via QR with an SVD fallback on the
/// triangular factor; returns the fitted values `A β` and the condition
/// number of the scaled system.
fn fit_least_squares(a: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, f64) {
    let (m, b) = (a.nrows(), a.ncols());
    let mut scales = vec![0.0f64; b];
    for j in 0..b {
        let s = a.column(j).amax();
        scales[j] = if s == 0.0 { 1.0 } else { s };
    }
    let mut scaled = a.clone();
    for j in 0..b {
        let inv = 1.0 / scales[j];
        for i in 0..m {
            scaled[(i, j)] *= inv;
        }
    }
    let qr = scaled.clone().qr();
    let qtb = qr.q().transpose() * rhs;
    let r = qr.r();
    if std::env::var("BSDEX_LSMC_DEBUG").is_ok() {
        let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rhsmax = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let nonfinite = a.iter().filter(|v| !v.is_finite()).count()
            + rhs.iter().filter(|v| !v.is_finite()).count();
        eprintln!("LS: amax={amax:.3e} rhsmax={rhsmax:.3e} nonfinite={nonfinite}");
    }
    let svd = r.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let beta_scaled = svd
        .solve(&qtb, smax * 1e-13)
        .unwrap_or_else(|_| DVector::zeros(b));
    (scaled * beta_scaled, cond)
}

/// Least-squares Monte Carlo solve of the diffusion-driven problem: forward
/// Euler-Maruyama paths, then backward induction with separate regressions
/// for the conditional value and for the Brownian-increment projection that
/// estimates the σ-scaled gradient entering the driver.
///
/// `drift`/`diffusion` are the state coefficients (callers fold any
/// domain safeguard such as `|·|` under square roots into them), `driver`
/// is in PDE convention, `payoff` maps the terminal state to the value.
pub fn lsmc_solve(
    drift: impl Fn(&[f64]) -> Vec<f64> + Sync,
    diffusion: impl Fn(&[f64]) -> DMatrix<f64> + Sync,
    driver: &DriverSpec,
    payoff: impl Fn(&[f64]) -> f64 + Sync,
    x0: &[f64],
    horizon: f64,
    cfg: &LsmcConfig,
) -> Result<LsmcOutcome> {
    cfg.validate()?;
    let d = x0.len();
    let m = cfg.n_paths;
    let n_steps = cfg.n_steps;
    let dt = horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();

    // forward simulation, path-indexed streams
    let mut states = vec![0.0f64; m * (n_steps + 1) * d];
    let mut increments = vec![0.0f64; m * n_steps * d];
    states
        .par_chunks_mut((n_steps + 1) * d)
        .zip(increments.par_chunks_mut(n_steps * d))
        .enumerate()
        .for_each(|(p, (xs, dws))| {
            let mut rng = path_rng(cfg.seed, p as u64);
            xs[..d].copy_from_slice(x0);
            for k in 0..n_steps {
                let xk: Vec<f64> = xs[k * d..(k + 1) * d].to_vec();
                let mu = drift(&xk);
                let sig = diffusion(&xk);
                for j in 0..d {
                    dws[k * d + j] = sqrt_dt * standard_normal(&mut rng);
                }
                for i in 0..d {
                    let mut acc = xk[i] + mu[i] * dt;
                    for j in 0..d {
                        acc += sig[(i, j)] * dws[k * d + j];
                    }
                    xs[(k + 1) * d + i] = acc;
                }
            }
        });

    // tensor Laguerre basis over all axes, degrees 0..=p per axis
    let coeffs = laguerre_coefficients(cfg.basis_degree);
    let n_basis_1d = coeffs.len();
    let n_basis = n_basis_1d.pow(d as u32);
    let eval_basis_row = |x: &[f64], row: &mut [f64]| {
        // per-axis values then tensor product (last axis fastest)
        let mut per_axis = vec![0.0; d * n_basis_1d];
        for (axis, &xi) in x.iter().enumerate() {
            for (k, c) in coeffs.iter().enumerate() {
                per_axis[axis * n_basis_1d + k] =
                    c.iter().rev().fold(0.0, |acc, &a| acc * xi + a);
            }
        }
        for (b, slot) in row.iter_mut().enumerate() {
            let mut prod = 1.0;
            let mut rem = b;
            for axis in (0..d).rev() {
                let k = rem % n_basis_1d;
                rem /= n_basis_1d;
                prod *= per_axis[axis * n_basis_1d + k];
            }
            *slot = prod;
        }
    };

    let mut y: Vec<f64> = (0..m)
        .map(|p| payoff(&states[(p * (n_steps + 1) + n_steps) * d..][..d]))
        .collect();
    let mut max_condition: f64 = 1.0;

    for k in (1..n_steps).rev() {
        let t_k = k as f64 * dt;
        let mut design = DMatrix::<f64>::zeros(m, n_basis);
        for p in 0..m {
            let x = &states[(p * (n_steps + 1) + k) * d..][..d];
            let mut row = vec![0.0; n_basis];
            eval_basis_row(x, &mut row);
            for (j, v) in row.iter().enumerate() {
                design[(p, j)] = *v;
            }
        }
        let y_next = DVector::from_row_slice(&y);
        let (cont, cond_y) = fit_least_squares(&design, &y_next);
        max_condition = max_condition.max(cond_y);
        // Z^(j) from the martingale-increment regression
        // (Y_{k+1} - E_k[Y_{k+1}]) ΔW_j / Δt: same conditional expectation as
        // Y_{k+1} ΔW_j / Δt but with far less variance feeding the driver.
        let mut zfit = Vec::with_capacity(d);
        for j in 0..d {
            let rhs = DVector::from_iterator(
                m,
                (0..m).map(|p| (y[p] - cont[p]) * increments[(p * n_steps + k) * d + j] / dt),
            );
            let (zj, cond_z) = fit_least_squares(&design, &rhs);
            max_condition = max_condition.max(cond_z);
            zfit.push(zj);
        }
        for p in 0..m {
            let x = &states[(p * (n_steps + 1) + k) * d..][..d];
            let zrow: Vec<f64> = (0..d).map(|j| zfit[j][p]).collect();
            let f = driver.eval(t_k, x, cont[p], &zrow)?;
            y[p] = cont[p] + dt * f;
        }
    }

    // k = 0: the state is deterministic, conditional expectations are means
    let mean_y: f64 = y.iter().sum::<f64>() / m as f64;
    let var_y: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum::<f64>() / (m - 1) as f64;
    let mut z0 = vec![0.0; d];
    for j in 0..d {
        z0[j] = (0..m)
            .map(|p| (y[p] - mean_y) * increments[(p * n_steps) * d + j] / dt)
            .sum::<f64>()
            / m as f64;
    }
    let f0 = driver.eval(0.0, x0, mean_y, &z0)?;
    let y0 = mean_y + dt * f0;
    Ok(LsmcOutcome {
        y0,
        std_error: (var_y / m as f64).sqrt(),
        max_condition,
    })
}

/// Arithmetic mean and n-1-normalized standard deviation.
pub fn run_statistics(runs: &[f64]) -> Result<(f64, f64)> {
    if runs.len() < 2 {
        return Err(Error::invalid(
            "standard deviation needs at least two runs",
        ));
    }
    let n = runs.len() as f64;
    let mean = runs.iter().sum::<f64>() / n;
    let var = runs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::build_generator_1d;
    use crate::grid::uniform_grid;
    use crate::models::bs_analytic_price;
    use crate::sparse::SparseMatrix;

    fn two_state_chain(rate: f64) -> Generator {
        let g = uniform_grid(-1.0, 0.0, 1.0, 1).unwrap();
        let mut gen = build_generator_1d(&g, |_| 0.0, |_| 0.0).unwrap();
        gen.q = SparseMatrix::from_triples(
            3,
            vec![
                (0, 0, -rate),
                (0, 1, rate),
                (1, 0, rate),
                (1, 1, -rate),
            ],
        );
        gen
    }

    #[test]
    fn absorbing_state_never_leaves() {
        let gen = two_state_chain(2.0); // state 2 has a zero row
        let mut rng = path_rng(7, 0);
        let path = gillespie_simulate(&gen, 2, 5.0, &mut rng).unwrap();
        assert_eq!(path.n_jumps(), 0);
        assert_eq!(path.terminal_state(), 2);
    }

    #[test]
    fn jump_count_mean_matches_poisson() {
        // symmetric 2-state chain at rate λ: jumps over [0,T] ~ Poisson(λT)
        let (rate, horizon) = (2.0, 1.5);
        let gen = two_state_chain(rate);
        let n = 100_000usize;
        let counts: Vec<f64> = (0..n)
            .map(|p| {
                let mut rng = path_rng(42, p as u64);
                gillespie_simulate(&gen, 0, horizon, &mut rng).unwrap().n_jumps() as f64
            })
            .collect();
        let (mean, std) = run_statistics(&counts).unwrap();
        let lambda = rate * horizon;
        let tol = 3.0 * (lambda / n as f64).sqrt();
        assert!((mean - lambda).abs() < tol, "mean {mean} vs {lambda}");
        assert!((std * std - lambda).abs() < 0.1 * lambda);
    }

    #[test]
    fn occupation_matches_matrix_exponential() {
        // 3-state chain: empirical occupation at T vs the e^{TQ} row.
        let g = uniform_grid(-1.0, 0.0, 1.0, 1).unwrap();
        let mut gen = build_generator_1d(&g, |_| 0.0, |_| 0.0).unwrap();
        gen.q = SparseMatrix::from_triples(
            3,
            vec![
                (0, 0, -1.0),
                (0, 1, 0.7),
                (0, 2, 0.3),
                (1, 0, 0.4),
                (1, 1, -0.9),
                (1, 2, 0.5),
                (2, 0, 0.2),
                (2, 1, 0.2),
                (2, 2, -0.4),
            ],
        );
        let horizon = 1.2;
        let probs = crate::expmv::expm(&(gen.q.to_dense() * horizon));
        let n = 60_000usize;
        let mut freq = [0.0f64; 3];
        for p in 0..n {
            let mut rng = path_rng(1234, p as u64);
            let path = gillespie_simulate(&gen, 0, horizon, &mut rng).unwrap();
            freq[path.terminal_state()] += 1.0;
        }
        for f in freq.iter_mut() {
            *f /= n as f64;
        }
        for j in 0..3 {
            let want = probs[(0, j)];
            let se = (want * (1.0 - want) / n as f64).sqrt();
            assert!(
                (freq[j] - want).abs() < 3.5 * se,
                "state {j}: {} vs {want}",
                freq[j]
            );
        }
    }

    #[test]
    fn guardrail_blocks_fast_chains() {
        let gen = two_state_chain(1e8);
        let mut rng = path_rng(0, 0);
        assert!(gillespie_simulate(&gen, 0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn invalid_generator_rejected() {
        let g = uniform_grid(-1.0, 0.0, 1.0, 1).unwrap();
        let mut gen = build_generator_1d(&g, |_| 0.0, |_| 0.0).unwrap();
        gen.q = SparseMatrix::from_triples(3, vec![(0, 0, 1.0), (0, 1, -1.0)]);
        let mut rng = path_rng(0, 0);
        assert!(gillespie_simulate(&gen, 0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn laguerre_low_orders() {
        let basis = laguerre_basis(3);
        for x in [-1.0f64, 0.0, 0.7, 2.5] {
            assert_eq!(basis[0](x), 1.0);
            assert!((basis[1](x) - (1.0 - x)).abs() < 1e-14);
        }
        // constant term of every polynomial is 1
        for k in 0..=3 {
            assert!((basis[k](0.0) - 1.0).abs() < 1e-14);
        }
        // poly_2(x) = 1 - 2x + x²/2
        let c = laguerre_coefficients(2);
        assert_eq!(c[2], vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn statistics_basics() {
        let (mean, std) = run_statistics(&[0.0, 2.0]).unwrap();
        assert_eq!(mean, 1.0);
        assert!((std - std::f64::consts::SQRT_2).abs() < 1e-15);
        let (_, szero) = run_statistics(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(szero, 0.0);
        assert!(run_statistics(&[1.0]).is_err());
    }

    #[test]
    fn lsmc_deterministic_under_seed() {
        let driver = DriverSpec::linear_rate(0.03);
        let cfg = LsmcConfig {
            n_paths: 2000,
            n_steps: 4,
            basis_degree: 3,
            seed: 99,
        };
        let run = || {
            lsmc_solve(
                |x| vec![0.03 * x[0]],
                |x| DMatrix::from_element(1, 1, 0.2 * x[0]),
                &driver,
                |x| (x[0] - 100.0).max(0.0),
                &[100.0],
                1.0,
                &cfg,
            )
            .unwrap()
            .y0
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn lsmc_zero_volatility_is_deterministic_ode() {
        // no randomness: Y0 = payoff(x_T) + time discretization of the
        // discount; with driver -r y this is the ODE value up to O(dt).
        let r = 0.05;
        let driver = DriverSpec::linear_rate(r);
        let cfg = LsmcConfig {
            n_paths: 50,
            n_steps: 64,
            basis_degree: 2,
            seed: 5,
        };
        let out = lsmc_solve(
            |x| vec![0.0 * x[0]],
            |_| DMatrix::from_element(1, 1, 0.0),
            &driver,
            |x| x[0],
            &[80.0],
            1.0,
            &cfg,
        )
        .unwrap();
        let want = 80.0 * (-r * 1.0f64).exp();
        assert!(out.std_error < 1e-12);
        assert!((out.y0 - want).abs() < 80.0 * r * r / cfg.n_steps as f64 * 2.0);
    }

    #[test]
    fn lsmc_linear_bs_within_two_sigma() {
        let (mu, sigma, r, strike, horizon) = (0.03, 0.2, 0.03, 100.0, 1.0);
        let driver = DriverSpec::linear_rate(r);
        let cfg = LsmcConfig {
            n_paths: 100_000,
            n_steps: 16,
            basis_degree: 6,
            seed: 2024,
        };
        let out = lsmc_solve(
            |x| vec![mu * x[0]],
            |x| DMatrix::from_element(1, 1, sigma * x[0].abs()),
            &driver,
            |x| (x[0] - strike).max(0.0),
            &[100.0],
            horizon,
            &cfg,
        )
        .unwrap();
        let (want, _) = bs_analytic_price(100.0, 0.0, strike, r, sigma, horizon);
        // allow discretization bias on top of the statistical band
        let band = 2.0 * out.std_error + 0.06;
        assert!(
            (out.y0 - want).abs() < band,
            "lsmc {} vs analytic {want} (band {band})",
            out.y0
        );
    }

    #[test]
    fn feynman_kac_linear_three_state() {
        use crate::integrators::{solve_backward, tableau, SchemeName};
        let g = uniform_grid(-1.0, 0.0, 1.0, 1).unwrap();
        let mut gen = build_generator_1d(&g, |_| 0.0, |_| 0.0).unwrap();
        gen.q = SparseMatrix::from_triples(
            3,
            vec![
                (0, 0, -0.8),
                (0, 1, 0.5),
                (0, 2, 0.3),
                (1, 0, 0.2),
                (1, 1, -0.6),
                (1, 2, 0.4),
                (2, 0, 0.3),
                (2, 1, 0.3),
                (2, 2, -0.6),
            ],
        );
        let r = 0.1;
        let problem = BackwardProblem::new(
            gen,
            Box::new(move |_, z: &[f64]| Ok(z.iter().map(|v| -r * v).collect())),
            vec![1.0, 3.0, -2.0],
            1.0,
        )
        .unwrap();
        let traj = solve_backward(&tableau(SchemeName::HochOst4), &problem, 64, 8).unwrap();
        let (mc, se) =
            feynman_kac_check(&problem.generator, &problem, &traj, 1, 100_000, 31).unwrap();
        let solver_value = traj.values[0][1];
        assert!(
            (mc - solver_value).abs() <= 3.0 * se + 1e-4,
            "mc {mc} vs solver {solver_value} (se {se})"
        );
    }

    #[test]
    fn feynman_kac_degenerate_absorbing_start() {
        use crate::integrators::{solve_backward, tableau, SchemeName};
        let gen = two_state_chain(1.0); // state 2 absorbing
        let problem = BackwardProblem::new(
            gen,
            Box::new(|_, z: &[f64]| Ok(z.iter().map(|v| 0.25 * v).collect())),
            vec![0.5, 1.0, 2.0],
            1.0,
        )
        .unwrap();
        let traj = solve_backward(&tableau(SchemeName::Etd2Rk), &problem, 50, 4).unwrap();
        let (mc, se) =
            feynman_kac_check(&problem.generator, &problem, &traj, 2, 200, 11).unwrap();
        // no randomness from an absorbing start: the standard error vanishes
        assert!(se < 1e-12);
        assert!((mc - traj.values[0][2]).abs() < 2e-3, "mc {mc}");
    }
}

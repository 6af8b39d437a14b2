//! Exponential Runge-Kutta tableaux and the backward-in-time solver for the
//! terminal-value system `dU/dt + Q U + F(t, U) = 0`, `U(T) = G`.
//!
//! One step from `t_{m+1}` down to `t_m = t_{m+1} - Δt` reads
//!
//! ```text
//!     ζ_i  = χ_i(ΔtQ) U_{m+1} + Δt Σ_j a_ij(ΔtQ) G_j
//!     G_i  = F(t_{m+1} - c_i Δt, ζ_i)
//!     U_m  = χ_0(ΔtQ) U_{m+1} + Δt Σ_i b_i(ΔtQ) G_i
//! ```
//!
//! with every coefficient function a φ-combination applied through the
//! Krylov machinery in [`crate::expmv`]. The carried vector and each stage
//! output get their own Krylov factorization, reused across all coefficient
//! functions that act on that vector.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::expmv::{PhiCombination, VectorApplier};
use crate::generator::Generator;
use crate::grid::TensorGrid;

/// Identifiers for the shipped schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeName {
    LawsonEuler,
    NorsettEuler,
    Etd2Rk,
    Etdrk3,
    Etdrk4,
    HochOst4,
}

impl SchemeName {
    pub const ALL: [SchemeName; 6] = [
        SchemeName::LawsonEuler,
        SchemeName::NorsettEuler,
        SchemeName::Etd2Rk,
        SchemeName::Etdrk3,
        SchemeName::Etdrk4,
        SchemeName::HochOst4,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeName::LawsonEuler => "lawson_euler",
            SchemeName::NorsettEuler => "norsett_euler",
            SchemeName::Etd2Rk => "etd2rk",
            SchemeName::Etdrk3 => "etdrk3",
            SchemeName::Etdrk4 => "etdrk4",
            SchemeName::HochOst4 => "hochost4",
        }
    }

    /// Classical convergence order, used to label outputs.
    pub fn classical_order(&self) -> usize {
        match self {
            SchemeName::LawsonEuler | SchemeName::NorsettEuler => 1,
            SchemeName::Etd2Rk => 2,
            SchemeName::Etdrk3 => 3,
            SchemeName::Etdrk4 | SchemeName::HochOst4 => 4,
        }
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lawson_euler" => Ok(SchemeName::LawsonEuler),
            "norsett_euler" => Ok(SchemeName::NorsettEuler),
            "etd2rk" => Ok(SchemeName::Etd2Rk),
            "etd3rk" | "etdrk3" => Ok(SchemeName::Etdrk3),
            "etd4rk" | "etdrk4" => Ok(SchemeName::Etdrk4),
            "hochost4" => Ok(SchemeName::HochOst4),
            other => Err(Error::invalid(format!("unknown scheme `{other}`"))),
        }
    }
}

/// An explicit s-stage exponential Runge-Kutta tableau.
///
/// `chi[0]` propagates the carried vector (always `e^z`); `chi[i]` for
/// `i = 1..=s` propagates it into stage `i`. `a` is strictly lower
/// triangular.
#[derive(Debug, Clone)]
pub struct ExpRkTableau {
    pub name: SchemeName,
    pub stages: usize,
    pub c: Vec<f64>,
    pub chi: Vec<PhiCombination>,
    pub a: Vec<Vec<PhiCombination>>,
    pub b: Vec<PhiCombination>,
}

impl ExpRkTableau {
    pub fn max_phi_index(&self) -> usize {
        self.chi
            .iter()
            .chain(self.b.iter())
            .chain(self.a.iter().flatten())
            .map(|c| c.max_phi_index())
            .max()
            .unwrap_or(0)
    }

    fn validate(&self) {
        assert_eq!(self.c.len(), self.stages);
        assert_eq!(self.chi.len(), self.stages + 1);
        assert_eq!(self.b.len(), self.stages);
        assert_eq!(self.a.len(), self.stages);
        for (i, row) in self.a.iter().enumerate() {
            assert_eq!(row.len(), self.stages);
            for (j, coeff) in row.iter().enumerate() {
                if j >= i {
                    assert!(coeff.is_zero(), "tableau must be strictly lower triangular");
                }
            }
        }
    }
}

fn phi(weight: f64, l: usize, gamma: f64) -> PhiCombination {
    PhiCombination::single(weight, l, gamma)
}

/// Builds one of the shipped tableaux.
pub fn tableau(name: SchemeName) -> ExpRkTableau {
    use PhiCombination as C;
    let z = C::zero;
    let tab = match name {
        SchemeName::LawsonEuler => ExpRkTableau {
            name,
            stages: 1,
            c: vec![0.0],
            chi: vec![C::exp(), C::identity()],
            a: vec![vec![z()]],
            b: vec![C::exp()],
        },
        SchemeName::NorsettEuler => ExpRkTableau {
            name,
            stages: 1,
            c: vec![0.0],
            chi: vec![C::exp(), C::identity()],
            a: vec![vec![z()]],
            b: vec![phi(1.0, 1, 1.0)],
        },
        SchemeName::Etd2Rk => ExpRkTableau {
            name,
            stages: 2,
            c: vec![0.0, 1.0],
            chi: vec![C::exp(), C::identity(), C::exp()],
            a: vec![vec![z(), z()], vec![phi(1.0, 1, 1.0), z()]],
            b: vec![phi(1.0, 1, 1.0).minus(&phi(1.0, 2, 1.0)), phi(1.0, 2, 1.0)],
        },
        SchemeName::Etdrk3 => ExpRkTableau {
            name,
            stages: 3,
            c: vec![0.0, 0.5, 1.0],
            chi: vec![C::exp(), C::identity(), phi(1.0, 0, 0.5), phi(1.0, 0, 1.0)],
            a: vec![
                vec![z(), z(), z()],
                vec![phi(0.5, 1, 0.5), z(), z()],
                vec![phi(-1.0, 1, 1.0), phi(2.0, 1, 1.0), z()],
            ],
            b: vec![
                phi(1.0, 1, 1.0)
                    .plus(&phi(-3.0, 2, 1.0))
                    .plus(&phi(4.0, 3, 1.0)),
                phi(4.0, 2, 1.0).plus(&phi(-8.0, 3, 1.0)),
                phi(-1.0, 2, 1.0).plus(&phi(4.0, 3, 1.0)),
            ],
        },
        SchemeName::Etdrk4 => ExpRkTableau {
            name,
            stages: 4,
            c: vec![0.0, 0.5, 0.5, 1.0],
            chi: vec![
                C::exp(),
                C::identity(),
                phi(1.0, 0, 0.5),
                phi(1.0, 0, 0.5),
                phi(1.0, 0, 1.0),
            ],
            a: vec![
                vec![z(), z(), z(), z()],
                vec![phi(0.5, 1, 0.5), z(), z(), z()],
                vec![z(), phi(0.5, 1, 0.5), z(), z()],
                vec![
                    phi(1.0, 1, 1.0).minus(&phi(1.0, 1, 0.5)),
                    z(),
                    phi(1.0, 1, 0.5),
                    z(),
                ],
            ],
            b: vec![
                phi(1.0, 1, 1.0)
                    .plus(&phi(-3.0, 2, 1.0))
                    .plus(&phi(4.0, 3, 1.0)),
                phi(2.0, 2, 1.0).plus(&phi(-4.0, 3, 1.0)),
                phi(2.0, 2, 1.0).plus(&phi(-4.0, 3, 1.0)),
                phi(-1.0, 2, 1.0).plus(&phi(4.0, 3, 1.0)),
            ],
        },
        SchemeName::HochOst4 => {
            let a52 = phi(0.5, 2, 0.5)
                .plus(&phi(-1.0, 3, 1.0))
                .plus(&phi(0.25, 2, 1.0))
                .plus(&phi(-0.5, 3, 0.5));
            let a54 = phi(0.25, 2, 0.5).minus(&a52);
            let a51 = phi(0.5, 1, 0.5).minus(&a52.scaled(2.0)).minus(&a54);
            ExpRkTableau {
                name,
                stages: 5,
                c: vec![0.0, 0.5, 0.5, 1.0, 0.5],
                chi: vec![
                    C::exp(),
                    C::identity(),
                    phi(1.0, 0, 0.5),
                    phi(1.0, 0, 0.5),
                    phi(1.0, 0, 1.0),
                    phi(1.0, 0, 0.5),
                ],
                a: vec![
                    vec![z(), z(), z(), z(), z()],
                    vec![phi(0.5, 1, 0.5), z(), z(), z(), z()],
                    vec![
                        phi(0.5, 1, 0.5).minus(&phi(1.0, 2, 0.5)),
                        phi(1.0, 2, 0.5),
                        z(),
                        z(),
                        z(),
                    ],
                    vec![
                        phi(1.0, 1, 1.0).plus(&phi(-2.0, 2, 1.0)),
                        phi(1.0, 2, 1.0),
                        phi(1.0, 2, 1.0),
                        z(),
                        z(),
                    ],
                    vec![a51, a52.clone(), a52, a54, z()],
                ],
                b: vec![
                    phi(1.0, 1, 1.0)
                        .plus(&phi(-3.0, 2, 1.0))
                        .plus(&phi(4.0, 3, 1.0)),
                    z(),
                    z(),
                    phi(-1.0, 2, 1.0).plus(&phi(4.0, 3, 1.0)),
                    phi(4.0, 2, 1.0).plus(&phi(-8.0, 3, 1.0)),
                ],
            }
        }
    };
    tab.validate();
    tab
}

/// Parses a scheme name and builds the tableau.
pub fn tableau_by_name(name: &str) -> Result<ExpRkTableau> {
    Ok(tableau(name.parse()?))
}

/// Nonlinearity callback: maps `(t, z)` to the reaction vector, failing with
/// node context when a driver misbehaves.
pub type Nonlinearity = Box<dyn Fn(f64, &[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// The terminal-value problem `dU/dt + Q U + F(t, U) = 0`, `U(T) = G`.
pub struct BackwardProblem {
    pub generator: Generator,
    pub nonlinearity: Nonlinearity,
    pub terminal: Vec<f64>,
    pub horizon: f64,
}

impl BackwardProblem {
    pub fn new(
        generator: Generator,
        nonlinearity: Nonlinearity,
        terminal: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        if terminal.len() != generator.dim() {
            return Err(Error::invalid(format!(
                "terminal vector has length {}, generator dimension is {}",
                terminal.len(),
                generator.dim()
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        Ok(BackwardProblem {
            generator,
            nonlinearity,
            terminal,
            horizon,
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    /// A problem with no reaction term.
    pub fn linear_free(generator: Generator, terminal: Vec<f64>, horizon: f64) -> Result<Self> {
        let n = terminal.len();
        BackwardProblem::new(
            generator,
            Box::new(move |_, _| Ok(vec![0.0; n])),
            terminal,
            horizon,
        )
    }
}

/// Time grid and solution values, filled backward from the terminal slice.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Value at a (time index, flat state index) pair.
    pub fn evaluate(&self, grid: &TensorGrid, t_index: usize, state_index: usize) -> Result<f64> {
        if t_index >= self.times.len() {
            return Err(Error::invalid(format!(
                "time index {t_index} out of range 0..{}",
                self.times.len()
            )));
        }
        if state_index >= grid.total_size() || state_index >= self.values[t_index].len() {
            return Err(Error::invalid(format!(
                "state index {state_index} out of range"
            )));
        }
        Ok(self.values[t_index][state_index])
    }
}

fn check_stage_output(v: &[f64], n: usize, stage: usize, t: f64) -> Result<()> {
    if v.len() != n {
        return Err(Error::NumericAt {
            context: format!("stage {stage} at t={t}"),
            message: format!("nonlinearity returned {} components, expected {n}", v.len()),
        });
    }
    if let Some(idx) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NumericAt {
            context: format!("stage {stage} at t={t}"),
            message: format!("non-finite nonlinearity value at component {idx}"),
        });
    }
    Ok(())
}

/// One backward step from `t_next` to `t_next - dt`.
pub fn step(
    tab: &ExpRkTableau,
    problem: &BackwardProblem,
    t_next: f64,
    z_next: &[f64],
    dt: f64,
    krylov_m: usize,
) -> Result<Vec<f64>> {
    let q = &problem.generator.q;
    let n = q.dim();
    let pmax = tab.max_phi_index();
    let mut z_app = VectorApplier::new(q, dt, z_next, krylov_m, pmax)?;

    let mut stage_apps: Vec<VectorApplier> = Vec::with_capacity(tab.stages);
    for i in 0..tab.stages {
        let mut zeta = z_app.apply(&tab.chi[i + 1])?;
        for (j, stage_app) in stage_apps.iter_mut().enumerate() {
            let coeff = &tab.a[i][j];
            if coeff.is_zero() {
                continue;
            }
            let contrib = stage_app.apply(coeff)?;
            for (zk, ck) in zeta.iter_mut().zip(&contrib) {
                *zk += dt * ck;
            }
        }
        let t_i = t_next - tab.c[i] * dt;
        if let Some(idx) = zeta.iter().position(|x| !x.is_finite()) {
            return Err(Error::NumericAt {
                context: format!("stage {} at t={t_i}", i + 1),
                message: format!("non-finite stage vector at component {idx}"),
            });
        }
        let g = (problem.nonlinearity)(t_i, &zeta)?;
        check_stage_output(&g, n, i + 1, t_i)?;
        stage_apps.push(VectorApplier::new(q, dt, &g, krylov_m, pmax)?);
    }

    let mut out = z_app.apply(&tab.chi[0])?;
    for (i, stage_app) in stage_apps.iter_mut().enumerate() {
        let coeff = &tab.b[i];
        if coeff.is_zero() {
            continue;
        }
        let contrib = stage_app.apply(coeff)?;
        for (ok, ck) in out.iter_mut().zip(&contrib) {
            *ok += dt * ck;
        }
    }
    Ok(out)
}

/// Integrates the problem backward on the uniform time grid
/// `t_m = m·T/n_steps`, anchoring `values[n_steps]` to the terminal vector
/// bit-exactly.
pub fn solve_backward(
    tab: &ExpRkTableau,
    problem: &BackwardProblem,
    n_steps: usize,
    krylov_m: usize,
) -> Result<Trajectory> {
    if n_steps < 1 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    let t_total = problem.horizon;
    let dt = t_total / n_steps as f64;
    let times: Vec<f64> = (0..=n_steps).map(|m| m as f64 * dt).collect();
    let mut values = vec![Vec::new(); n_steps + 1];
    values[n_steps] = problem.terminal.clone();
    for m in (0..n_steps).rev() {
        let z = step(tab, problem, times[m + 1], &values[m + 1], dt, krylov_m)?;
        values[m] = z;
    }
    Ok(Trajectory { times, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expmv::{expm, phi_scalar};
    use crate::generator::build_generator_1d;
    use crate::grid::uniform_grid;
    use crate::sparse::SparseMatrix;
    use nalgebra::DVector;

    fn scalar_problem(q_val: f64, h: f64, terminal: f64, horizon: f64) -> BackwardProblem {
        // 3-node grid whose generator we overwrite with a diagonal scalar.
        let g = uniform_grid(-1.0, 0.0, 1.0, 1).unwrap();
        let mut gen = build_generator_1d(&g, |_| 0.0, |_| 0.0).unwrap();
        gen.q = SparseMatrix::from_triples(3, vec![(0, 0, q_val), (1, 1, q_val), (2, 2, q_val)]);
        BackwardProblem::new(
            gen,
            Box::new(move |_, z| Ok(vec![h; z.len()])),
            vec![terminal; 3],
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn named_tableaux_match_published_weights() {
        let lw = tableau(SchemeName::LawsonEuler);
        assert_eq!(lw.stages, 1);
        assert_eq!(lw.b[0], PhiCombination::exp());

        let ne = tableau(SchemeName::NorsettEuler);
        assert_eq!(ne.b[0], PhiCombination::single(1.0, 1, 1.0));

        let e2 = tableau(SchemeName::Etd2Rk);
        assert_eq!(e2.c, vec![0.0, 1.0]);
        assert_eq!(e2.a[1][0], PhiCombination::single(1.0, 1, 1.0));
        for z in [-3.0f64, -0.7, 0.4] {
            assert!((e2.b[0].eval_scalar(z) - (phi_scalar(1, z) - phi_scalar(2, z))).abs() < 1e-13);
            assert!((e2.b[1].eval_scalar(z) - phi_scalar(2, z)).abs() < 1e-13);
        }
    }

    #[test]
    fn quadrature_weight_identities() {
        // Σ b_i c_i^{k-1} = (k-1)! φ_k for the ETD-type schemes; k up to 3
        // pins the transcriptions.
        let probes = [-5.0f64, -1.3, -0.2, 0.8];
        for name in [
            SchemeName::NorsettEuler,
            SchemeName::Etd2Rk,
            SchemeName::Etdrk3,
            SchemeName::Etdrk4,
            SchemeName::HochOst4,
        ] {
            let tab = tableau(name);
            let kmax = match name {
                SchemeName::NorsettEuler => 1,
                SchemeName::Etd2Rk => 2,
                _ => 3,
            };
            for &z in &probes {
                for k in 1..=kmax {
                    let lhs: f64 = tab
                        .b
                        .iter()
                        .zip(&tab.c)
                        .map(|(b, &c)| b.eval_scalar(z) * c.powi(k as i32 - 1))
                        .sum();
                    let fact: f64 = (1..k).map(|v| v as f64).product();
                    let rhs = fact * phi_scalar(k, z);
                    assert!(
                        (lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0),
                        "{name} k={k} z={z}: {lhs} vs {rhs}"
                    );
                }
            }
        }
    }

    #[test]
    fn stage_consistency_chi_matches_exp_at_c() {
        // χ_i(z) = e^{c_i z} for every shipped tableau.
        for name in SchemeName::ALL {
            let tab = tableau(name);
            for (i, chi) in tab.chi.iter().enumerate() {
                let c = if i == 0 { 1.0 } else { tab.c[i - 1] };
                for z in [-4.0f64, -0.9, 0.33] {
                    let want = (c * z).exp();
                    assert!(
                        (chi.eval_scalar(z) - want).abs() < 1e-13 * want.max(1.0),
                        "{name} chi[{i}] at z={z}"
                    );
                }
            }
        }
    }

    #[test]
    fn unknown_scheme_is_error() {
        assert!(tableau_by_name("rk4").is_err());
    }

    #[test]
    fn zero_nonlinearity_step_is_phi0_action() {
        let g = uniform_grid(-2.0, 0.0, 2.0, 2).unwrap();
        let gen = build_generator_1d(&g, |x| 0.3 * x, |x| 1.0 + 0.1 * x * x).unwrap();
        let n = gen.dim();
        let qd = gen.q.to_dense();
        let problem =
            BackwardProblem::linear_free(gen, vec![1.0, -0.5, 2.0, 0.25, 1.5], 1.0).unwrap();
        let dt = 0.37;
        let want = expm(&(qd * dt)) * DVector::from_row_slice(&problem.terminal);
        for name in SchemeName::ALL {
            let tab = tableau(name);
            let out = step(&tab, &problem, 1.0, &problem.terminal, dt, n + 1).unwrap();
            for i in 0..n {
                assert!(
                    (out[i] - want[i]).abs() < 1e-12 * want[i].abs().max(1.0),
                    "{name} i={i}"
                );
            }
        }
    }

    #[test]
    fn norsett_step_exact_for_constant_forcing() {
        // scalar q, constant H: one Nørsett step is e^{Δt q} z + Δt φ1(Δt q) h.
        let (q, h, term) = (-1.7, 0.9, 2.0);
        let problem = scalar_problem(q, h, term, 1.0);
        let tab = tableau(SchemeName::NorsettEuler);
        let dt = 0.25;
        let out = step(&tab, &problem, 1.0, &problem.terminal, dt, 10).unwrap();
        let want = (dt * q).exp() * term + dt * phi_scalar(1, dt * q) * h;
        for v in out {
            assert!((v - want).abs() < 1e-13);
        }
    }

    #[test]
    fn etd2rk_step_matches_quadrature_oracle() {
        // Diagonal Q, H(t,z) = z: one step against high-resolution Simpson
        // quadrature of the defining integrals
        //   U_m = e^{ΔtQ}U + Δt(φ1-φ2)(ΔtQ)H(U) + Δt φ2(ΔtQ)H(ζ),
        //   φ1 = ∫ e^{(1-θ)ΔtQ}dθ,  φ2 = ∫ e^{(1-θ)ΔtQ}θ dθ.
        let diag = [-2.0, -0.5, 0.0];
        let g = uniform_grid(-1.0, 0.0, 1.0, 1).unwrap();
        let mut gen = build_generator_1d(&g, |_| 0.0, |_| 0.0).unwrap();
        gen.q = SparseMatrix::from_triples(
            3,
            vec![(0, 0, diag[0]), (1, 1, diag[1]), (2, 2, diag[2])],
        );
        let problem = BackwardProblem::new(
            gen,
            Box::new(|_, z| Ok(z.to_vec())),
            vec![1.0, 2.0, 0.5],
            1.0,
        )
        .unwrap();
        let dt = 0.3;
        let tab = tableau(SchemeName::Etd2Rk);
        let out = step(&tab, &problem, 1.0, &problem.terminal, dt, 10).unwrap();

        let simpson = |f: &dyn Fn(f64) -> f64| -> f64 {
            let n = 2000;
            let h = 1.0 / n as f64;
            let mut acc = f(0.0) + f(1.0);
            for k in 1..n {
                let x = k as f64 * h;
                acc += f(x) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        };
        for (i, &d) in diag.iter().enumerate() {
            let z = problem.terminal[i];
            let e = (dt * d).exp();
            let p1 = simpson(&|th: f64| ((1.0 - th) * dt * d).exp());
            let p2 = simpson(&|th: f64| ((1.0 - th) * dt * d).exp() * th);
            let zeta = e * z + dt * p1 * z; // H = identity
            let want = e * z + dt * (p1 - p2) * z + dt * p2 * zeta;
            assert!((out[i] - want).abs() < 1e-9, "i={i}: {} vs {want}", out[i]);
        }
    }

    #[test]
    fn solve_backward_anchors_terminal_exactly() {
        let problem = scalar_problem(-1.0, 0.3, 1.25, 2.0);
        let tab = tableau(SchemeName::Etd2Rk);
        let traj = solve_backward(&tab, &problem, 8, 10).unwrap();
        assert_eq!(traj.values[8], problem.terminal);
        assert_eq!(traj.times.len(), 9);
        assert_eq!(traj.times[8], 2.0);
    }

    #[test]
    fn single_step_linear_is_full_exponential() {
        let g = uniform_grid(-1.0, 0.0, 1.0, 2).unwrap();
        let gen = build_generator_1d(&g, |_| 0.1, |_| 0.8).unwrap();
        let qd = gen.q.to_dense();
        let term = vec![0.2, 0.4, 1.0, 0.4, 0.2];
        let problem = BackwardProblem::linear_free(gen, term.clone(), 0.7).unwrap();
        let traj = solve_backward(&tableau(SchemeName::HochOst4), &problem, 1, 10).unwrap();
        let want = expm(&(qd * 0.7)) * DVector::from_row_slice(&term);
        for i in 0..5 {
            assert!((traj.values[0][i] - want[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn constant_forcing_closed_form_orders() {
        // dU/dt + qU + h = 0 with constant h: Lawson converges at first
        // order; the φ1-weighted schemes integrate this affine ODE exactly.
        let (q, h, term, horizon) = (-1.3f64, 0.4, 1.0, 1.0);
        let exact = {
            let tau = horizon;
            (q * tau).exp() * term + phi_scalar(1, q * tau) * tau * h
        };
        let mut errs = Vec::new();
        for n_steps in [8usize, 16, 32, 64] {
            let problem = scalar_problem(q, h, term, horizon);
            let traj =
                solve_backward(&tableau(SchemeName::LawsonEuler), &problem, n_steps, 10).unwrap();
            errs.push((traj.values[0][0] - exact).abs());
        }
        let slope = (errs[0] / errs[errs.len() - 1]).log2() / (errs.len() - 1) as f64;
        assert!(slope > 0.9, "Lawson order {slope} from errors {errs:?}");
        for name in [SchemeName::NorsettEuler, SchemeName::Etd2Rk, SchemeName::HochOst4] {
            let problem = scalar_problem(q, h, term, horizon);
            let traj = solve_backward(&tableau(name), &problem, 8, 10).unwrap();
            assert!(
                (traj.values[0][0] - exact).abs() < 1e-12,
                "{name} should integrate constant forcing exactly"
            );
        }
    }

    #[test]
    fn measured_orders_on_time_dependent_forcing() {
        // dU/dt + qU + cos(ωt) = 0: the closed form uses
        // ∫ e^{q(s-t)} cos(ωs) ds = [e^{q(s-t)}(q cos ωs + ω sin ωs)]/(q²+ω²).
        let (q, omega, term, horizon) = (-1.3f64, 3.0f64, 1.0, 1.0);
        let exact = {
            let anti = |s: f64, t: f64| {
                (q * (s - t)).exp() * (q * (omega * s).cos() + omega * (omega * s).sin())
                    / (q * q + omega * omega)
            };
            (q * horizon).exp() * term + anti(horizon, 0.0) - anti(0.0, 0.0)
        };
        let make = || {
            let g = uniform_grid(-1.0, 0.0, 1.0, 1).unwrap();
            let mut gen = build_generator_1d(&g, |_| 0.0, |_| 0.0).unwrap();
            gen.q = SparseMatrix::from_triples(3, vec![(0, 0, q), (1, 1, q), (2, 2, q)]);
            BackwardProblem::new(
                gen,
                Box::new(move |t, z| Ok(vec![(omega * t).cos(); z.len()])),
                vec![term; 3],
                horizon,
            )
            .unwrap()
        };
        let mut orders = Vec::new();
        for name in [SchemeName::LawsonEuler, SchemeName::Etd2Rk, SchemeName::Etdrk3] {
            let tab = tableau(name);
            let mut errs = Vec::new();
            for n_steps in [8usize, 16, 32, 64] {
                let traj = solve_backward(&tab, &make(), n_steps, 10).unwrap();
                errs.push((traj.values[0][0] - exact).abs());
            }
            let slope = (errs[0] / errs[errs.len() - 1]).log2() / (errs.len() - 1) as f64;
            orders.push((name, slope));
        }
        assert!(orders[0].1 > 0.9, "orders {orders:?}");
        assert!(orders[1].1 > 1.8, "orders {orders:?}");
        assert!(orders[2].1 > 2.7, "orders {orders:?}");
    }

    #[test]
    fn nonlinearity_error_reports_stage() {
        let g = uniform_grid(-1.0, 0.0, 1.0, 1).unwrap();
        let gen = build_generator_1d(&g, |_| 0.0, |_| 1.0).unwrap();
        let problem = BackwardProblem::new(
            gen,
            Box::new(|_, _| Ok(vec![f64::NAN; 3])),
            vec![1.0; 3],
            1.0,
        )
        .unwrap();
        let err =
            step(&tableau(SchemeName::Etd2Rk), &problem, 1.0, &[1.0; 3], 0.1, 5).unwrap_err();
        match err {
            Error::NumericAt { context, .. } => assert!(context.contains("stage 1")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn evaluate_bounds_checked() {
        let problem = scalar_problem(-1.0, 0.0, 1.0, 1.0);
        let grid = problem.generator.grid.clone();
        let traj = solve_backward(&tableau(SchemeName::LawsonEuler), &problem, 2, 5).unwrap();
        assert!(traj.evaluate(&grid, 0, 0).is_ok());
        assert!(traj.evaluate(&grid, 3, 0).is_err());
        assert!(traj.evaluate(&grid, 0, 11).is_err());
    }

    #[test]
    fn affine_linearity_of_solution_map() {
        // For affine H the map G -> U(0) is affine: check superposition with
        // the dense fallback path where linearity is exact.
        let g = uniform_grid(-1.0, 0.0, 1.0, 2).unwrap();
        let make = |term: Vec<f64>| {
            let gen = build_generator_1d(&g, |x| 0.2 * x, |_| 0.9).unwrap();
            BackwardProblem::new(
                gen,
                Box::new(|_, z| Ok(z.iter().map(|v| -0.05 * v + 0.1).collect())),
                term,
                1.0,
            )
            .unwrap()
        };
        let tab = tableau(SchemeName::Etdrk3);
        let m = 16; // dense fallback for n = 5
        let u =
            |term: Vec<f64>| solve_backward(&tab, &make(term), 6, m).unwrap().values[0].clone();
        let g1 = vec![1.0, 0.0, 2.0, -1.0, 0.5];
        let g2 = vec![0.0, 1.0, -1.0, 3.0, 2.0];
        let (al, be) = (0.7, -1.3);
        let combo: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| al * a + be * b).collect();
        let u1 = u(g1);
        let u2 = u(g2);
        let u0 = u(vec![0.0; 5]);
        let uc = u(combo);
        for i in 0..5 {
            let want = al * u1[i] + be * u2[i] + (1.0 - al - be) * u0[i];
            assert!((uc[i] - want).abs() < 1e-10, "i={i}: {} vs {want}", uc[i]);
        }
    }

    #[test]
    fn scheme_consistency_on_stiffer_generator() {
        // one H≡0 step within 1e-10 of the dense exponential action under
        // the same Krylov settings.
        let g = uniform_grid(0.0, 50.0, 100.0, 30).unwrap();
        let gen = build_generator_1d(&g, |x| 0.03 * x, |x| 0.2 * x).unwrap();
        let term: Vec<f64> = g.nodes().iter().map(|&x| (x - 50.0).max(0.0)).collect();
        let qd = gen.q.to_dense();
        let problem = BackwardProblem::linear_free(gen, term.clone(), 1.0).unwrap();
        let dt = 0.05;
        let want = expm(&(qd * dt)) * DVector::from_row_slice(&term);
        let scale = want.amax();
        for name in SchemeName::ALL {
            let tab = tableau(name);
            let out = step(&tab, &problem, 1.0, &term, dt, 40).unwrap();
            let err = out
                .iter()
                .enumerate()
                .map(|(i, v)| (v - want[i]).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10 * scale.max(1.0), "{name}: err {err}");
        }
    }

    #[test]
    fn hochost4_dense_vs_krylov_agree() {
        let g = uniform_grid(0.0, 10.0, 20.0, 12).unwrap();
        let gen = build_generator_1d(&g, |x| 0.1 * x, |x| 0.3 + 0.02 * x).unwrap();
        let n = gen.dim();
        let term: Vec<f64> = g.nodes().iter().map(|&x| (x - 10.0).abs()).collect();
        let problem = BackwardProblem::new(
            gen,
            Box::new(|_, z| Ok(z.iter().map(|v| -0.03 * v).collect())),
            term,
            1.0,
        )
        .unwrap();
        let tab = tableau(SchemeName::HochOst4);
        let krylov = solve_backward(&tab, &problem, 5, 15).unwrap();
        let dense = solve_backward(&tab, &problem, 5, n + 1).unwrap();
        for i in 0..n {
            assert!((krylov.values[0][i] - dense.values[0][i]).abs() < 1e-9);
        }
    }

    #[test]
    fn stage_times_run_backward_from_t_next() {
        // ETD2RK has c = (0, 1): H is evaluated at t_{m+1} and t_{m+1} - Δt.
        use std::sync::{Arc, Mutex};
        let g = uniform_grid(-1.0, 0.0, 1.0, 1).unwrap();
        let gen = build_generator_1d(&g, |_| 0.0, |_| 1.0).unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let seen2 = seen.clone();
        let problem = BackwardProblem::new(
            gen,
            Box::new(move |t, z| {
                seen2.lock().unwrap().push(t);
                Ok(vec![0.0; z.len()])
            }),
            vec![1.0; 3],
            1.0,
        )
        .unwrap();
        step(&tableau(SchemeName::Etd2Rk), &problem, 0.8, &[1.0; 3], 0.2, 5).unwrap();
        let t = seen.lock().unwrap().clone();
        assert_eq!(t.len(), 2);
        assert!((t[0] - 0.8).abs() < 1e-15);
        assert!((t[1] - 0.6).abs() < 1e-15);
    }
}

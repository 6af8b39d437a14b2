//! Experiment drivers: full-grid solves, sparse-grid combinations and LSMC
//! reference runs, each emitting deterministic CSV tables.

use std::fmt::Write as _;
use std::time::Instant;

use bsdex_core::error::{Error, Result};
use bsdex_core::grid::TensorGrid;
use bsdex_core::integrators::{solve_backward, tableau_by_name, Trajectory};
use bsdex_core::io::combination_members_csv;
use bsdex_core::models::{nonlinear_rates_driver, DriverSpec};
use bsdex_core::montecarlo::{lsmc_solve, run_statistics, LsmcConfig};
use bsdex_core::presets::Oracle;
use bsdex_core::sparsegrid::{
    count_points, evaluate_combined, level_node_count, solve_combination,
};

use crate::config::{ExperimentConfig, ModelSpec};

/// Maximum absolute deviation between the numerical solution and the oracle
/// over every time-grid point and every grid node inside the closed window.
///
/// The window is intersected with the grid axis by axis; an empty
/// intersection is an error.
pub fn sup_error_window(
    traj: &Trajectory,
    grid: &TensorGrid,
    oracle: &Oracle,
    window: &[(f64, f64)],
) -> Result<f64> {
    if window.len() != grid.dim() {
        return Err(Error::invalid(format!(
            "window has {} axes, grid has {}",
            window.len(),
            grid.dim()
        )));
    }
    let mut per_axis: Vec<Vec<usize>> = Vec::with_capacity(grid.dim());
    for (p, &(lo, hi)) in window.iter().enumerate() {
        let idx: Vec<usize> = grid
            .axis(p)
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, &x)| x >= lo && x <= hi)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::invalid(format!(
                "window [{lo}, {hi}] does not intersect axis {p}"
            )));
        }
        per_axis.push(idx);
    }
    // enumerate the window's node product
    let mut flats = Vec::new();
    let mut counters = vec![0usize; grid.dim()];
    loop {
        let multi: Vec<usize> = counters
            .iter()
            .zip(&per_axis)
            .map(|(&c, ax)| ax[c])
            .collect();
        flats.push(grid.flatten(&multi)?);
        let mut p = grid.dim();
        loop {
            if p == 0 {
                flats.sort_unstable();
                let mut sup: f64 = 0.0;
                for (m, &t) in traj.times.iter().enumerate() {
                    for &i in &flats {
                        let point = grid.point(i);
                        if let Some(want) = oracle.price(t, &point) {
                            sup = sup.max((traj.values[m][i] - want).abs());
                        }
                    }
                }
                return Ok(sup);
            }
            p -= 1;
            counters[p] += 1;
            if counters[p] < per_axis[p].len() {
                break;
            }
            counters[p] = 0;
        }
    }
}

fn probe_label(point: &[f64]) -> String {
    point
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Runs the full-grid experiment matrix `scheme x n_steps`, evaluating the
/// probe points and the sup-error window against the configured oracle.
/// Returns the CSV table; optionally also the first trajectory for dumping.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<(String, Option<Trajectory>)> {
    let solve = cfg
        .solve
        .as_ref()
        .ok_or_else(|| Error::invalid("config has no [solve] section"))?;
    let grid = cfg.build_grid()?;
    let probe = cfg.probe.clone().unwrap_or(crate::config::ProbeSpec {
        points: Vec::new(),
        window: Vec::new(),
        oracle: "none".into(),
    });
    let oracle = cfg.model.oracle(&probe.oracle)?;
    let problem = cfg.model.problem(&grid)?;

    let mut rows: Vec<String> = Vec::new();
    let mut first_traj = None;
    for scheme in &solve.schemes {
        let tab = tableau_by_name(scheme)?;
        for &n_steps in &solve.n_steps {
            let t0 = Instant::now();
            let traj = solve_backward(&tab, &problem, n_steps, solve.krylov_m)?;
            let wall = t0.elapsed().as_secs_f64();
            let sup = if probe.window.is_empty() {
                None
            } else {
                Some(sup_error_window(&traj, &grid, &oracle, &probe.window)?)
            };
            if probe.points.is_empty() {
                rows.push(format!(
                    "{scheme},{n_steps},,,,{},{wall:.3}",
                    fmt_opt(sup)
                ));
            }
            for point in &probe.points {
                let multi: Result<Vec<usize>> = point
                    .iter()
                    .enumerate()
                    .map(|(p, &x)| {
                        grid.axis(p).find_node(x, 1e-9).ok_or_else(|| {
                            Error::invalid(format!("probe {x} is not a node of axis {p}"))
                        })
                    })
                    .collect();
                let flat = grid.flatten(&multi?)?;
                let value = traj.values[0][flat];
                let abs_err = oracle.price(0.0, point).map(|w| (value - w).abs());
                rows.push(format!(
                    "{scheme},{n_steps},{},{value},{},{},{wall:.3}",
                    probe_label(point),
                    fmt_opt(abs_err),
                    fmt_opt(sup),
                ));
            }
            if first_traj.is_none() {
                first_traj = Some(traj);
            }
        }
    }
    rows.sort();
    let mut csv = String::from("scheme,n_steps,probe,value,abs_error,sup_error_window,wall_time_s\n");
    for r in rows {
        let _ = writeln!(csv, "{r}");
    }
    Ok((csv, first_traj))
}

/// Runs the sparse-grid combination for each level parameter `q`, emitting
/// probe values, errors, point counts and per-member metadata.
pub fn run_sparse(cfg: &ExperimentConfig) -> Result<(String, String)> {
    let sparse = cfg
        .sparse
        .as_ref()
        .ok_or_else(|| Error::invalid("config has no [sparse] section"))?;
    let probe = cfg.probe.clone().unwrap_or(crate::config::ProbeSpec {
        points: Vec::new(),
        window: Vec::new(),
        oracle: "none".into(),
    });
    let oracle = cfg.model.oracle(&probe.oracle)?;
    let tab = tableau_by_name(&sparse.scheme)?;
    let families: Vec<_> = sparse.axes.iter().map(|a| a.family()).collect();

    // fixed evaluation grid for the sup-error window
    let window_grid = if !probe.window.is_empty() && !sparse.window_grid_half_counts.is_empty() {
        let axes: Result<Vec<_>> = sparse
            .axes
            .iter()
            .zip(&sparse.window_grid_half_counts)
            .map(|(a, &hc)| a.build(hc))
            .collect();
        Some(TensorGrid::new(axes?)?)
    } else {
        None
    };

    let mut rows = Vec::new();
    let mut members_csv = String::new();
    for &q in &sparse.q {
        let points =
            count_points(q, sparse.axes.len(), level_node_count)?;
        for &n_steps in &sparse.n_steps {
            let t0 = Instant::now();
            let sol = solve_combination(
                q,
                &families,
                |grid| cfg.model.problem(grid),
                &tab,
                n_steps,
                sparse.krylov_m,
            )?;
            let wall = t0.elapsed().as_secs_f64();
            let sup = match (&window_grid, probe.window.is_empty()) {
                (Some(wgrid), false) => {
                    let mut sup: f64 = 0.0;
                    let times = sol.times().to_vec();
                    for i in 0..wgrid.total_size() {
                        let point = wgrid.point(i);
                        if point
                            .iter()
                            .zip(&probe.window)
                            .any(|(x, (lo, hi))| x < lo || x > hi)
                        {
                            continue;
                        }
                        for (m, &t) in times.iter().enumerate() {
                            if let Some(want) = oracle.price(t, &point) {
                                let got = evaluate_combined(&sol, m, &point)?;
                                sup = sup.max((got - want).abs());
                            }
                        }
                    }
                    Some(sup)
                }
                _ => None,
            };
            for point in &probe.points {
                let value = evaluate_combined(&sol, 0, point)?;
                let abs_err = oracle.price(0.0, point).map(|w| (value - w).abs());
                rows.push(format!(
                    "{q},{n_steps},{points},{},{value},{},{},{wall:.3}",
                    probe_label(point),
                    fmt_opt(abs_err),
                    fmt_opt(sup),
                ));
            }
            if members_csv.is_empty() {
                members_csv = combination_members_csv(&sol);
            }
        }
    }
    rows.sort();
    let mut csv =
        String::from("q,n_steps,total_points,probe,value,abs_error,sup_error_window,wall_time_s\n");
    for r in rows {
        let _ = writeln!(csv, "{r}");
    }
    Ok((csv, members_csv))
}

/// Forward-model ingredients for the LSMC reference runs.
struct LsmcModel {
    drift: Box<dyn Fn(&[f64]) -> Vec<f64> + Sync>,
    diffusion: Box<dyn Fn(&[f64]) -> nalgebra::DMatrix<f64> + Sync>,
    driver: DriverSpec,
    payoff: Box<dyn Fn(&[f64]) -> f64 + Sync>,
    horizon: f64,
}

fn lsmc_model(model: &ModelSpec) -> Result<LsmcModel> {
    match model {
        ModelSpec::BsLinear { .. } => {
            let p = model.bs_linear()?;
            Ok(LsmcModel {
                drift: Box::new(move |x| vec![p.mu * x[0]]),
                diffusion: Box::new(move |x| {
                    nalgebra::DMatrix::from_element(1, 1, p.sigma * x[0].abs())
                }),
                driver: DriverSpec::linear_rate(p.rate),
                payoff: Box::new(move |x| (x[0] - p.strike).max(0.0)),
                horizon: p.horizon,
            })
        }
        ModelSpec::BsNonlinear { .. } => {
            let p = model.bs_nonlinear()?;
            Ok(LsmcModel {
                drift: Box::new(move |x| vec![p.mu * x[0]]),
                diffusion: Box::new(move |x| {
                    nalgebra::DMatrix::from_element(1, 1, p.sigma * x[0].abs())
                }),
                driver: nonlinear_rates_driver(p.mu, p.sigma, p.rate, p.borrow_rate),
                payoff: Box::new(move |x| (x[0] - p.strike).max(0.0)),
                horizon: p.horizon,
            })
        }
        _ => Err(Error::invalid(
            "lsmc runs are wired for the bs_linear and bs_nonlinear models",
        )),
    }
}

/// Repeated seeded LSMC runs with a mean/std summary row.
pub fn run_lsmc(cfg: &ExperimentConfig) -> Result<String> {
    let spec = cfg
        .lsmc
        .as_ref()
        .ok_or_else(|| Error::invalid("config has no [lsmc] section"))?;
    let model = lsmc_model(&cfg.model)?;
    let mut estimates = Vec::with_capacity(spec.runs);
    let mut csv = String::from("run,estimate,seed,std_error,max_condition\n");
    for run in 0..spec.runs {
        let seed = spec.seed.wrapping_add(run as u64);
        let out = lsmc_solve(
            &model.drift,
            &model.diffusion,
            &model.driver,
            &model.payoff,
            &spec.x0,
            model.horizon,
            &LsmcConfig {
                n_paths: spec.n_paths,
                n_steps: spec.n_steps,
                basis_degree: spec.degree,
                seed,
            },
        )?;
        let _ = writeln!(
            csv,
            "{run},{},{seed},{},{:.3e}",
            out.y0, out.std_error, out.max_condition
        );
        estimates.push(out.y0);
    }
    if estimates.len() >= 2 {
        let (mean, std) = run_statistics(&estimates)?;
        let _ = writeln!(csv, "summary,{mean},,{std},");
    } else {
        let _ = writeln!(csv, "summary,{},,,", estimates[0]);
    }
    Ok(csv)
}

/// Q-matrix validity report for the configured model and grid.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<String> {
    let grid = cfg.build_grid()?;
    let problem = cfg.model.problem(&grid)?;
    let report = bsdex_core::generator::check_validity(&problem.generator, 1e-12);
    let structural = bsdex_core::generator::check_structural_condition(&problem.generator);
    let mut out = String::new();
    let _ = writeln!(out, "dimension: {}", problem.generator.dim());
    let _ = writeln!(out, "valid_q_matrix: {}", report.is_valid);
    let _ = writeln!(out, "structural_condition: {structural}");
    if let Some(sc) = report.step_condition {
        let _ = writeln!(
            out,
            "step_condition: max_dx = {} <= bound = {} -> {}",
            sc.max_spacing, sc.bound, sc.holds
        );
    }
    if !report.violations.is_empty() {
        let _ = writeln!(out, "offdiagonal_violations: {}", report.violations.len());
        for (i, j, v) in report.violations.iter().take(20) {
            let _ = writeln!(out, "  ({i}, {j}) = {v}");
        }
    }
    if !report.row_sum_violations.is_empty() {
        let _ = writeln!(out, "row_sum_violations: {}", report.row_sum_violations.len());
    }
    Ok(out)
}

//! Sparse-grid combination technique: solve the backward problem on a family
//! of anisotropic coarse tensor grids and combine the interpolants
//!
//! ```text
//!     u^{SG,q}(t, x) = Σ_{q-d+1 <= |l|_1 <= q} (-1)^{q-|l|_1} C(d-1, q-|l|_1) u^l(t, x)
//! ```
//!
//! where each axis contributes `2^l + 1` nodes at level `l`. Member
//! sub-solves share nothing and run as an independent task set; results are
//! reduced deterministically in enumeration order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, TensorGrid};
use crate::integrators::{solve_backward, BackwardProblem, ExpRkTableau, Trajectory};

/// A multi-index of per-axis refinement levels, each at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LevelIndex {
    pub levels: Vec<usize>,
}

impl LevelIndex {
    pub fn sum(&self) -> usize {
        self.levels.iter().sum()
    }
}

/// Number of nodes contributed by one axis at level `l`.
pub fn level_node_count(l: usize) -> usize {
    (1usize << l) + 1
}

fn binomial(n: usize, k: usize) -> i64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: i64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i64 / (i + 1) as i64;
    }
    acc
}

/// Combination coefficient `(-1)^{q-|l|} C(d-1, q-|l|)`.
pub fn combination_coefficient(q: usize, d: usize, level: &LevelIndex) -> i64 {
    let defect = q - level.sum();
    let sign = if defect % 2 == 0 { 1 } else { -1 };
    sign * binomial(d - 1, defect)
}

/// All levels `l` with `l_p >= 1` and `q-d+1 <= |l|_1 <= q`, ordered by
/// total level then lexicographically.
pub fn enumerate_levels(q: usize, d: usize) -> Result<Vec<LevelIndex>> {
    if d < 1 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if q < d {
        return Err(Error::invalid(format!(
            "level parameter q={q} must be at least the dimension d={d}"
        )));
    }
    let mut out = Vec::new();
    for total in (q - d + 1).max(d)..=q {
        let mut current = vec![1usize; d];
        compositions(total, d, 0, &mut current, &mut out);
    }
    Ok(out)
}

fn compositions(total: usize, d: usize, axis: usize, current: &mut Vec<usize>, out: &mut Vec<LevelIndex>) {
    if axis == d - 1 {
        let used: usize = current[..axis].iter().sum();
        if total >= used + 1 {
            current[axis] = total - used;
            out.push(LevelIndex {
                levels: current.clone(),
            });
        }
        return;
    }
    let used: usize = current[..axis].iter().sum();
    let remaining_axes = d - axis - 1;
    let max_here = total.saturating_sub(used + remaining_axes);
    for l in 1..=max_here {
        current[axis] = l;
        compositions(total, d, axis + 1, current, out);
    }
}

/// Total spatial points the combination consumes:
/// `Σ_levels Π_p size(l_p)`.
pub fn count_points(q: usize, d: usize, axis_size: impl Fn(usize) -> usize) -> Result<u64> {
    let levels = enumerate_levels(q, d)?;
    Ok(levels
        .iter()
        .map(|l| l.levels.iter().map(|&lp| axis_size(lp) as u64).product::<u64>())
        .sum())
}

/// A level-parameterized family of 1-D grids sharing endpoints across
/// levels; level `l` has `2^l + 1` nodes.
pub struct AxisFamily {
    builder: Box<dyn Fn(usize) -> Result<Grid1D> + Send + Sync>,
}

impl AxisFamily {
    pub fn new(builder: impl Fn(usize) -> Result<Grid1D> + Send + Sync + 'static) -> Self {
        AxisFamily {
            builder: Box::new(builder),
        }
    }

    pub fn uniform(left: f64, center: f64, right: f64) -> Self {
        AxisFamily::new(move |l| crate::grid::uniform_grid(left, center, right, 1 << (l - 1)))
    }

    pub fn tavella_randall(left: f64, center: f64, right: f64, g1: f64, g2: f64) -> Self {
        AxisFamily::new(move |l| {
            crate::grid::tavella_randall_grid(left, center, right, 1 << (l - 1), g1, g2)
        })
    }

    pub fn grid(&self, level: usize) -> Result<Grid1D> {
        if level < 1 {
            return Err(Error::invalid("axis level must be at least 1"));
        }
        (self.builder)(level)
    }
}

/// One member of the combination.
pub struct CombinationMember {
    pub level: LevelIndex,
    pub coefficient: i64,
    pub grid: TensorGrid,
    pub trajectory: Trajectory,
}

/// Coefficient-weighted family of per-level solutions sharing one time grid.
pub struct CombinationSolution {
    pub q: usize,
    pub members: Vec<CombinationMember>,
}

impl CombinationSolution {
    pub fn times(&self) -> &[f64] {
        &self.members[0].trajectory.times
    }

    pub fn total_points(&self) -> u64 {
        self.members
            .iter()
            .map(|m| m.grid.total_size() as u64)
            .sum()
    }
}

/// Multilinear interpolation of nodal values on a tensor grid. Points must
/// lie inside the closed bounding box; no extrapolation.
pub fn interpolate(grid: &TensorGrid, values: &[f64], point: &[f64]) -> Result<f64> {
    let d = grid.dim();
    if point.len() != d {
        return Err(Error::invalid("interpolation point has wrong dimension"));
    }
    if values.len() != grid.total_size() {
        return Err(Error::invalid("value vector length mismatch"));
    }
    let mut cells = Vec::with_capacity(d);
    for (p, x) in point.iter().enumerate() {
        let nodes = grid.axis(p).nodes();
        let n = nodes.len();
        if *x < nodes[0] || *x > nodes[n - 1] {
            return Err(Error::invalid(format!(
                "point component {p} = {x} outside [{}, {}]",
                nodes[0],
                nodes[n - 1]
            )));
        }
        // bracketing cell, closed at the right end
        let hi = nodes.partition_point(|&v| v < *x).min(n - 1).max(1);
        let lo = hi - 1;
        let w_hi = (*x - nodes[lo]) / (nodes[hi] - nodes[lo]);
        cells.push((lo, w_hi));
    }
    let mut acc = 0.0;
    let mut idx = vec![0usize; d];
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        for p in 0..d {
            let (lo, w_hi) = cells[p];
            if corner >> p & 1 == 1 {
                idx[p] = lo + 1;
                w *= w_hi;
            } else {
                idx[p] = lo;
                w *= 1.0 - w_hi;
            }
        }
        if w != 0.0 {
            acc += w * values[grid.flatten(&idx)?];
        }
    }
    Ok(acc)
}

/// Solves one backward problem per enumerated level and attaches the
/// combination coefficients. Sub-solves are independent and run in parallel;
/// members are returned in enumeration order.
pub fn solve_combination(
    q: usize,
    axis_families: &[AxisFamily],
    problem_factory: impl Fn(&TensorGrid) -> Result<BackwardProblem> + Sync,
    tab: &ExpRkTableau,
    n_steps: usize,
    krylov_m: usize,
) -> Result<CombinationSolution> {
    let d = axis_families.len();
    let levels = enumerate_levels(q, d)?;
    let members: Result<Vec<CombinationMember>> = levels
        .into_par_iter()
        .map(|level| {
            let axes: Result<Vec<Grid1D>> = level
                .levels
                .iter()
                .zip(axis_families)
                .map(|(&l, fam)| fam.grid(l))
                .collect();
            let grid = TensorGrid::new(axes?)?;
            let problem = problem_factory(&grid)?;
            let trajectory = solve_backward(tab, &problem, n_steps, krylov_m)?;
            let coefficient = combination_coefficient(q, d, &level);
            Ok(CombinationMember {
                level,
                coefficient,
                grid,
                trajectory,
            })
        })
        .collect();
    Ok(CombinationSolution {
        q,
        members: members?,
    })
}

/// Evaluates the combined solution at one time index and spatial point.
pub fn evaluate_combined(sol: &CombinationSolution, t_index: usize, point: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for m in &sol.members {
        if m.coefficient == 0 {
            continue;
        }
        let v = interpolate(&m.grid, &m.trajectory.values[t_index], point)?;
        acc += m.coefficient as f64 * v;
    }
    Ok(acc)
}

//! Text serialization: grids, sparse matrices in coordinate form,
//! trajectories as CSV and combination metadata. Floats are written with
//! Rust's shortest round-trip formatting, so parse → write → parse is exact.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::sparse::SparseMatrix;
use crate::sparsegrid::CombinationSolution;
use crate::Trajectory;

/// One node per line.
pub fn grid_to_text(grid: &Grid1D) -> String {
    let mut out = String::new();
    for x in grid.nodes() {
        let _ = writeln!(out, "{x}");
    }
    out
}

pub fn grid_from_text(text: &str) -> Result<Grid1D> {
    let nodes: std::result::Result<Vec<f64>, _> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::parse::<f64>)
        .collect();
    let nodes = nodes.map_err(|e| Error::invalid(format!("bad grid line: {e}")))?;
    Grid1D::from_nodes(nodes)
}

/// `row col value` per line, 0-based indices.
pub fn matrix_to_coord_text(m: &SparseMatrix) -> String {
    let mut out = String::new();
    for (i, j, v) in m.iter() {
        let _ = writeln!(out, "{i} {j} {v}");
    }
    out
}

/// CSV with header `t,node_0,...,node_{N-1}`; an optional stride keeps every
/// `stride`-th node for plotting.
pub fn trajectory_to_csv(traj: &Trajectory, node_stride: Option<usize>) -> String {
    let stride = node_stride.unwrap_or(1).max(1);
    let n = traj.values[0].len();
    let mut out = String::from("t");
    for i in (0..n).step_by(stride) {
        let _ = write!(out, ",node_{i}");
    }
    out.push('\n');
    for (t, row) in traj.times.iter().zip(&traj.values) {
        let _ = write!(out, "{t}");
        for i in (0..n).step_by(stride) {
            let _ = write!(out, ",{}", row[i]);
        }
        out.push('\n');
    }
    out
}

/// Per-member metadata of a combination solution: level tuple, coefficient
/// and grid sizes.
pub fn combination_members_csv(sol: &CombinationSolution) -> String {
    let mut out = String::from("level,coefficient,axis_sizes,total_points\n");
    for m in &sol.members {
        let level = m
            .level
            .levels
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join("x");
        let sizes = m
            .grid
            .axes()
            .iter()
            .map(|g| g.len().to_string())
            .collect::<Vec<_>>()
            .join("x");
        let _ = writeln!(out, "{level},{},{sizes},{}", m.coefficient, m.grid.total_size());
    }
    out
}

//! Spatial grids: 1-D node sequences and their tensor products.
//!
//! A [`Grid1D`] always has an odd number of nodes `2*half_count+1` with a
//! distinguished center node, mirroring the signed indexing `-N0..=N0` used
//! when the grids anchor a finite-difference discretization. The public API
//! is 0-based; [`Grid1D::offset_of_signed`] maps the signed convention.

use crate::error::{Error, Result};

/// A strictly increasing 1-D grid with an odd number of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    nodes: Vec<f64>,
}

impl Grid1D {
    /// Wraps a raw node sequence, validating strict monotonicity and odd length.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 || nodes.len() % 2 == 0 {
            return Err(Error::invalid(format!(
                "grid must have odd length >= 3, got {}",
                nodes.len()
            )));
        }
        for w in nodes.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid(format!(
                    "grid nodes must be strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("grid nodes must be finite"));
        }
        Ok(Grid1D { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of nodes on each side of the center: `len == 2*half_count + 1`.
    pub fn half_count(&self) -> usize {
        (self.nodes.len() - 1) / 2
    }

    /// Maps a signed index in `-N0..=N0` to the 0-based offset.
    pub fn offset_of_signed(&self, k: isize) -> usize {
        (k + self.half_count() as isize) as usize
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn center(&self) -> f64 {
        self.nodes[self.half_count()]
    }

    pub fn left(&self) -> f64 {
        self.nodes[0]
    }

    pub fn right(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Forward spacing `nodes[i+1] - nodes[i]`.
    pub fn spacing(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    /// Index of the node equal to `x` within `tol`, if any.
    pub fn find_node(&self, x: f64, tol: f64) -> Option<usize> {
        self.nodes.iter().position(|&n| (n - x).abs() <= tol)
    }
}

fn check_bounds(left: f64, center: f64, right: f64, half_count: usize) -> Result<()> {
    if !(left < center && center < right) {
        return Err(Error::invalid(format!(
            "need left < center < right, got {left} < {center} < {right}"
        )));
    }
    if half_count < 1 {
        return Err(Error::invalid("half_count must be >= 1"));
    }
    Ok(())
}

/// Uniform grid with `half_count` equally spaced nodes on each side of
/// `center`. When `center` is not the midpoint of `[left, right]`, the
/// spacing differs between the two sides.
pub fn uniform_grid(left: f64, center: f64, right: f64, half_count: usize) -> Result<Grid1D> {
    check_bounds(left, center, right, half_count)?;
    let n0 = half_count as isize;
    let dl = (center - left) / half_count as f64;
    let dr = (right - center) / half_count as f64;
    let mut nodes = Vec::with_capacity(2 * half_count + 1);
    for k in -n0..=n0 {
        let x = if k < 0 {
            center + dl * k as f64
        } else {
            center + dr * k as f64
        };
        nodes.push(x);
    }
    // Pin the anchors exactly.
    nodes[0] = left;
    nodes[half_count] = center;
    nodes[2 * half_count] = right;
    Grid1D::from_nodes(nodes)
}

/// Sinh-stretched grid concentrating nodes around `center`.
///
/// Node `k` for `k in -N0..=0` is `center + g1*sinh(asinh((center-left)/g1) * k/N0)`
/// and symmetrically with `g2` on the right side. Small `g1`, `g2` concentrate
/// nodes near the center; large values approach the uniform grid.
pub fn tavella_randall_grid(
    left: f64,
    center: f64,
    right: f64,
    half_count: usize,
    g1: f64,
    g2: f64,
) -> Result<Grid1D> {
    check_bounds(left, center, right, half_count)?;
    if !(g1 > 0.0) || !(g2 > 0.0) {
        return Err(Error::invalid(format!(
            "stretch parameters must be positive, got g1={g1}, g2={g2}"
        )));
    }
    let n0 = half_count as f64;
    let cl = ((center - left) / g1).asinh();
    let cr = ((right - center) / g2).asinh();
    let mut nodes = Vec::with_capacity(2 * half_count + 1);
    for k in -(half_count as isize)..=(half_count as isize) {
        let x = if k <= 0 {
            center + g1 * (cl * k as f64 / n0).sinh()
        } else {
            center + g2 * (cr * k as f64 / n0).sinh()
        };
        nodes.push(x);
    }
    nodes[0] = left;
    nodes[half_count] = center;
    nodes[2 * half_count] = right;
    Grid1D::from_nodes(nodes)
}

/// Merges two grids sharing exactly one endpoint node: the last node of `a`
/// must equal the first node of `b`; the shared node is kept once.
pub fn concat_grids(a: &Grid1D, b: &Grid1D) -> Result<Grid1D> {
    if a.right() != b.left() {
        return Err(Error::invalid(format!(
            "grids do not share a junction node: {} vs {}",
            a.right(),
            b.left()
        )));
    }
    let mut nodes = a.nodes.clone();
    nodes.extend_from_slice(&b.nodes[1..]);
    Grid1D::from_nodes(nodes)
}

/// Tensor product of 1-D grids with lexicographic flattening.
///
/// The last axis index varies fastest, so a one-axis operator placed at axis
/// `p` addresses flat indices with stride `prod(sizes[p+1..])`, consistent
/// with the Kronecker product ordering `D^(1) ⊗ ... ⊗ D^(d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    axes: Vec<Grid1D>,
    total_size: usize,
}

impl TensorGrid {
    pub fn new(axes: Vec<Grid1D>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("tensor grid needs at least one axis"));
        }
        let total_size = axes.iter().map(|g| g.len()).product();
        Ok(TensorGrid { axes, total_size })
    }

    pub fn from_axis(axis: Grid1D) -> Self {
        let total_size = axis.len();
        TensorGrid {
            axes: vec![axis],
            total_size,
        }
    }

    pub fn axes(&self) -> &[Grid1D] {
        &self.axes
    }

    pub fn axis(&self, p: usize) -> &Grid1D {
        &self.axes[p]
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn total_size(&self) -> usize {
        self.total_size
    }

    /// Stride of axis `p` in the flat ordering.
    pub fn stride(&self, p: usize) -> usize {
        self.axes[p + 1..].iter().map(|g| g.len()).product()
    }

    pub fn flatten(&self, multi_index: &[usize]) -> Result<usize> {
        if multi_index.len() != self.dim() {
            return Err(Error::invalid(format!(
                "multi-index has {} entries for a {}-axis grid",
                multi_index.len(),
                self.dim()
            )));
        }
        let mut flat = 0usize;
        for (p, (&i, g)) in multi_index.iter().zip(&self.axes).enumerate() {
            if i >= g.len() {
                return Err(Error::invalid(format!(
                    "index {i} out of range for axis {p} of size {}",
                    g.len()
                )));
            }
            flat = flat * g.len() + i;
        }
        Ok(flat)
    }

    pub fn unflatten(&self, mut flat: usize) -> Result<Vec<usize>> {
        if flat >= self.total_size {
            return Err(Error::invalid(format!(
                "flat index {flat} out of range for grid of size {}",
                self.total_size
            )));
        }
        let mut idx = vec![0usize; self.dim()];
        for p in (0..self.dim()).rev() {
            let n = self.axes[p].len();
            idx[p] = flat % n;
            flat /= n;
        }
        Ok(idx)
    }

    /// Spatial coordinates of the node at flat index `i`.
    pub fn point(&self, i: usize) -> Vec<f64> {
        let idx = self.unflatten(i).expect("flat index in range");
        idx.iter()
            .zip(&self.axes)
            .map(|(&k, g)| g.node(k))
            .collect()
    }

    /// Evaluates `f` on every node in flat order.
    pub fn evaluate(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_size);
        let mut idx = vec![0usize; self.dim()];
        let mut point = vec![0.0; self.dim()];
        loop {
            for (p, &k) in idx.iter().enumerate() {
                point[p] = self.axes[p].node(k);
            }
            out.push(f(&point));
            // odometer increment, last axis fastest
            let mut p = self.dim();
            loop {
                if p == 0 {
                    return out;
                }
                p -= 1;
                idx[p] += 1;
                if idx[p] < self.axes[p].len() {
                    break;
                }
                idx[p] = 0;
            }
        }
    }
}

//! φ-functions of matrices and their actions on vectors.
//!
//! The functions
//!
//! ```text
//!     φ_0(z) = e^z,     φ_l(z) = ∫_0^1 e^{(1-θ)z} θ^{l-1}/(l-1)! dθ
//! ```
//!
//! are the building blocks of exponential integrator coefficients. Small
//! dense arguments are handled by Padé scaling-and-squaring on an augmented
//! block matrix; large sparse arguments act on vectors through Arnoldi
//! projection onto a Krylov subspace, with the φ-evaluation done on the
//! projected Hessenberg matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// One `weight * φ_l(γ · z)` term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiTerm {
    pub weight: f64,
    pub phi_index: usize,
    pub node_scale: f64,
}

/// A linear combination `c·1 + Σ_k w_k φ_{l_k}(γ_k z)` used as an
/// exponential-integrator coefficient function of `Δt·Q`.
///
/// The constant part covers internal stages whose coefficient function is
/// identically one.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiCombination {
    pub identity_weight: f64,
    pub terms: Vec<PhiTerm>,
}

impl PhiCombination {
    pub fn identity() -> Self {
        PhiCombination {
            identity_weight: 1.0,
            terms: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        PhiCombination {
            identity_weight: 0.0,
            terms: Vec::new(),
        }
    }

    /// Single term `w · φ_l(γ z)`.
    pub fn single(weight: f64, phi_index: usize, node_scale: f64) -> Self {
        PhiCombination {
            identity_weight: 0.0,
            terms: vec![PhiTerm {
                weight,
                phi_index,
                node_scale,
            }],
        }
    }

    /// The exponential itself, `φ_0(z)`.
    pub fn exp() -> Self {
        PhiCombination::single(1.0, 0, 1.0)
    }

    pub fn with_term(mut self, weight: f64, phi_index: usize, node_scale: f64) -> Self {
        self.terms.push(PhiTerm {
            weight,
            phi_index,
            node_scale,
        });
        self
    }

    pub fn is_zero(&self) -> bool {
        self.identity_weight == 0.0 && self.terms.iter().all(|t| t.weight == 0.0)
    }

    pub fn max_phi_index(&self) -> usize {
        self.terms.iter().map(|t| t.phi_index).max().unwrap_or(0)
    }

    /// Scalar evaluation, used by tests and tableau checks.
    pub fn eval_scalar(&self, z: f64) -> f64 {
        let mut acc = self.identity_weight;
        for t in &self.terms {
            acc += t.weight * phi_scalar(t.phi_index, t.node_scale * z);
        }
        acc
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.identity_weight *= factor;
        for t in &mut out.terms {
            t.weight *= factor;
        }
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.identity_weight += other.identity_weight;
        out.terms.extend_from_slice(&other.terms);
        out.simplify();
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    /// Merges terms sharing `(phi_index, node_scale)` and drops zero weights.
    pub fn simplify(&mut self) {
        let mut merged: Vec<PhiTerm> = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if let Some(m) = merged
                .iter_mut()
                .find(|m| m.phi_index == t.phi_index && m.node_scale == t.node_scale)
            {
                m.weight += t.weight;
            } else {
                merged.push(*t);
            }
        }
        merged.retain(|t| t.weight != 0.0);
        self.terms = merged;
    }
}

/// φ_l(z) for scalar z via the stable recurrence / series.
pub fn phi_scalar(l: usize, z: f64) -> f64 {
    if l == 0 {
        return z.exp();
    }
    if z.abs() < 0.5 {
        // Taylor series: φ_l(z) = Σ_{j>=0} z^j / (j+l)!
        let mut term = 1.0 / factorial(l);
        let mut acc = term;
        for j in 1..30 {
            term *= z / (j + l) as f64;
            acc += term;
            if term.abs() < 1e-20 * acc.abs() {
                break;
            }
        }
        acc
    } else {
        // Upward recurrence φ_{l+1}(z) = (φ_l(z) - 1/l!) / z.
        let mut p = z.exp();
        for k in 0..l {
            p = (p - 1.0 / factorial(k)) / z;
        }
        p
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

// Padé coefficients for the [m/m] approximants of the exponential.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

fn pade_low(a: &DMatrix<f64>, coeffs: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    let a2 = a * a;
    let ident = DMatrix::<f64>::identity(n, n);
    // U = A (c1 I + c3 A^2 + c5 A^4 + ...), V = c0 I + c2 A^2 + ...
    let mut even = &ident * coeffs[0];
    let mut odd = &ident * coeffs[1];
    let mut pow = ident.clone();
    let mut k = 2;
    while k < coeffs.len() {
        pow = &pow * &a2;
        even += &pow * coeffs[k];
        if k + 1 < coeffs.len() {
            odd += &pow * coeffs[k + 1];
        }
        k += 2;
    }
    let u = a * odd;
    solve_pade(&even, &u)
}

fn pade13(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let b = &PADE13;
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let w1 = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let w2 = &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = a * (&a6 * &w1 + w2);
    let z1 = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * &z1 + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    solve_pade(&v, &u)
}

fn solve_pade(v: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    // r = (V - U)^{-1} (V + U)
    let lhs = v - u;
    let rhs = v + u;
    lhs.lu().solve(&rhs).expect("Padé denominator is singular")
}

/// Matrix exponential by Padé scaling-and-squaring.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    expm_impl(a, false).0
}

/// Returns `(exp(A), exp(A/2))` from one scaling-and-squaring pass; the
/// half-step result is the penultimate squaring.
pub fn expm_with_half(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (full, half) = expm_impl(a, true);
    (full, half.expect("half requested"))
}

fn expm_impl(a: &DMatrix<f64>, want_half: bool) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let eta = one_norm(a);
    if !want_half {
        if eta <= THETA3 {
            return (pade_low(a, &PADE3), None);
        } else if eta <= THETA5 {
            return (pade_low(a, &PADE5), None);
        } else if eta <= THETA7 {
            return (pade_low(a, &PADE7), None);
        } else if eta <= THETA9 {
            return (pade_low(a, &PADE9), None);
        }
    }
    let mut s = if eta > THETA13 {
        ((eta / THETA13).log2().ceil()) as u32
    } else {
        0
    };
    if want_half && s == 0 {
        s = 1;
    }
    let scaled = a / 2f64.powi(s as i32);
    let mut r = pade13(&scaled);
    let mut half = None;
    for step in 0..s {
        if want_half && step == s - 1 {
            half = Some(r.clone());
        }
        r = &r * &r;
    }
    if want_half && s == 0 {
        half = Some(pade13(&(a / 2.0)));
    }
    (r, half)
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

/// φ_l of a dense matrix, via the exponential of the augmented block matrix
/// `[[A, E], [0, J]]` whose top block row reads off φ_1..φ_l simultaneously.
pub fn phi_dense(l: usize, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid("phi_dense needs a square matrix"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("phi_dense: non-finite entry in matrix"));
    }
    let n = a.nrows();
    if l == 0 {
        return Ok(expm(a));
    }
    let size = n * (l + 1);
    let mut aug = DMatrix::<f64>::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    // E block: identity coupling A to the first nilpotent block.
    for i in 0..n {
        aug[(i, n + i)] = 1.0;
    }
    // J: identity blocks on the superdiagonal of the nilpotent part.
    for b in 1..l {
        for i in 0..n {
            aug[(b * n + i, (b + 1) * n + i)] = 1.0;
        }
    }
    let e = expm(&aug);
    Ok(e.view((0, l * n), (n, n)).into())
}

/// Arnoldi decomposition of `K_m(a, v)`.
///
/// `basis` stores the orthonormal vectors contiguously, one per row of a
/// `k x n` buffer; `hess` is the square projected matrix `V* A V`, and
/// `next_coeff` the subdiagonal coefficient `h_{k+1,k}` closing the
/// recurrence `A V_k = V_k H + h_{k+1,k} v_{k+1} e_k*` (zero after a happy
/// breakdown).
#[derive(Debug, Clone)]
pub struct KrylovWorkspace {
    pub n: usize,
    pub k: usize,
    pub basis: Vec<f64>,
    pub hess: DMatrix<f64>,
    pub next_coeff: f64,
    pub next_vec: Option<Vec<f64>>,
    pub v_norm: f64,
    pub breakdown: bool,
}

impl KrylovWorkspace {
    pub fn basis_vec(&self, i: usize) -> &[f64] {
        &self.basis[i * self.n..(i + 1) * self.n]
    }

    /// Lifts a coefficient vector from the subspace back to R^n.
    pub fn lift(&self, small: &DVector<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.k {
            let c = small[i];
            if c != 0.0 {
                axpy(c, self.basis_vec(i), &mut out);
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let chunks = a.len() / 4 * 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < chunks {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut s = (s0 + s1) + (s2 + s3);
    while i < a.len() {
        s += a[i] * b[i];
        i += 1;
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Arnoldi iteration building an orthonormal basis of `K_m(a, v)`.
///
/// Stops early on happy breakdown (residual below `1e-14 * ||v||`), in which
/// case the returned subspace is exact. One classical Gram-Schmidt correction
/// pass keeps the basis orthonormal when cancellation degrades the first pass.
pub fn arnoldi(a: &SparseMatrix, v: &[f64], m: usize) -> Result<KrylovWorkspace> {
    let n = a.dim();
    if v.len() != n {
        return Err(Error::invalid("arnoldi: dimension mismatch"));
    }
    let v_norm = norm2(v);
    if v_norm == 0.0 {
        return Err(Error::invalid("arnoldi: zero starting vector"));
    }
    if !v_norm.is_finite() {
        return Err(Error::numeric("arnoldi: non-finite starting vector"));
    }
    let m = m.max(1).min(n);
    let breakdown_tol = 1e-14 * v_norm;

    let mut basis = Vec::with_capacity((m + 1) * n);
    basis.extend(v.iter().map(|x| x / v_norm));
    let mut hess = DMatrix::<f64>::zeros(m, m);
    let mut w = vec![0.0; n];
    let mut k_final = m;
    let mut next_coeff = 0.0;
    let mut next_vec = None;
    let mut breakdown = false;

    for k in 0..m {
        a.mul_vec_into(&basis[k * n..(k + 1) * n], &mut w);
        let w_initial = norm2(&w);
        if !w_initial.is_finite() {
            return Err(Error::numeric("arnoldi: non-finite matrix-vector product"));
        }
        // classical Gram-Schmidt pass
        for i in 0..=k {
            let h = dot(&basis[i * n..(i + 1) * n], &w);
            hess[(i, k)] = h;
            axpy(-h, &basis[i * n..(i + 1) * n].to_vec(), &mut w);
        }
        let mut wn = norm2(&w);
        // correction pass when cancellation indicates orthogonality loss
        if wn < 0.5 * w_initial {
            for i in 0..=k {
                let c = dot(&basis[i * n..(i + 1) * n], &w);
                hess[(i, k)] += c;
                axpy(-c, &basis[i * n..(i + 1) * n].to_vec(), &mut w);
            }
            wn = norm2(&w);
        }
        if wn <= breakdown_tol {
            k_final = k + 1;
            breakdown = true;
            break;
        }
        if k + 1 < m {
            hess[(k + 1, k)] = wn;
            basis.extend(w.iter().map(|x| x / wn));
        } else {
            next_coeff = wn;
            next_vec = Some(w.iter().map(|x| x / wn).collect());
        }
    }

    let hess = hess.view((0, 0), (k_final, k_final)).into();
    basis.truncate(k_final * n);
    Ok(KrylovWorkspace {
        n,
        k: k_final,
        basis,
        hess,
        next_coeff,
        next_vec,
        v_norm,
        breakdown,
    })
}

/// Values `φ_l(γ·A) b` for `l = 0..=p`, read from one augmented exponential.
///
/// Returns the columns for `γ = 1` and, when `with_half` is set, for
/// `γ = 1/2` of the same matrix (recovered from the penultimate squaring).
fn phi_columns(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    p: usize,
    with_half: bool,
) -> (Vec<DVector<f64>>, Option<Vec<DVector<f64>>>) {
    let k = a.nrows();
    let size = k + p.max(1);
    let mut aug = DMatrix::<f64>::zeros(size, size);
    aug.view_mut((0, 0), (k, k)).copy_from(a);
    for i in 0..k {
        aug[(i, k)] = b[i];
    }
    for j in 0..p.max(1).saturating_sub(1) {
        aug[(k + j, k + j + 1)] = 1.0;
    }
    let (full, half) = if with_half {
        let (f, h) = expm_with_half(&aug);
        (f, Some(h))
    } else {
        (expm(&aug), None)
    };
    let extract = |e: &DMatrix<f64>, scale_pow: f64| -> Vec<DVector<f64>> {
        let mut cols = Vec::with_capacity(p + 1);
        // φ_0 action: top-left block times b.
        let mut c0 = DVector::zeros(k);
        for i in 0..k {
            let mut acc = 0.0;
            for j in 0..k {
                acc += e[(i, j)] * b[j];
            }
            c0[i] = acc;
        }
        cols.push(c0);
        let mut scale = scale_pow;
        for l in 1..=p {
            let mut cl = DVector::zeros(k);
            for i in 0..k {
                cl[i] = e[(i, k + l - 1)] * scale;
            }
            cols.push(cl);
            scale *= scale_pow;
        }
        cols
    };
    let cols_full = extract(&full, 1.0);
    // exp(aug/2) columns carry (1/2)^l φ_l(A/2); undo the scale.
    let cols_half = half.as_ref().map(|h| extract(h, 2.0));
    (cols_full, cols_half)
}

/// Evaluates `Σ_k w_k φ_{l_k}(γ_k · dt · a) · v` (plus any identity part).
///
/// One Arnoldi factorization of `(a, v)` is shared by every term; each
/// distinct `γ` reuses the same Hessenberg matrix with a scaled argument,
/// valid because `K_m(γA, v) = K_m(A, v)`. With `m >= dim(a)` the evaluation
/// falls back to the exact dense path.
pub fn phi_combination_action(
    comb: &PhiCombination,
    a: &SparseMatrix,
    dt: f64,
    v: &[f64],
    m: usize,
) -> Result<Vec<f64>> {
    let mut applier = VectorApplier::new(a, dt, v, m, comb.max_phi_index())?;
    applier.apply(comb)
}

enum Projection {
    /// Krylov subspace: act on the Hessenberg matrix and lift.
    Krylov(KrylovWorkspace),
    /// Exact dense evaluation on the full matrix.
    Dense { a: DMatrix<f64>, v: DVector<f64> },
    /// Zero input vector: every action is zero.
    Zero,
}

/// Caches one factorization of `(dt·a, v)` and serves φ-combination actions
/// against it. γ-values 1 and 1/2 share a single augmented exponential.
pub struct VectorApplier {
    n: usize,
    dt: f64,
    pmax: usize,
    projection: Projection,
    /// (γ, per-l action columns in the projected space)
    cache: Vec<(f64, Vec<DVector<f64>>)>,
}

impl VectorApplier {
    pub fn new(a: &SparseMatrix, dt: f64, v: &[f64], m: usize, pmax: usize) -> Result<Self> {
        let n = a.dim();
        if v.len() != n {
            return Err(Error::invalid("phi action: dimension mismatch"));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("phi action: dt must be positive"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("phi action: non-finite input vector"));
        }
        let projection = if norm2(v) == 0.0 {
            Projection::Zero
        } else if m >= n {
            Projection::Dense {
                a: a.to_dense(),
                v: DVector::from_row_slice(v),
            }
        } else {
            Projection::Krylov(arnoldi(a, v, m)?)
        };
        Ok(VectorApplier {
            n,
            dt,
            pmax,
            projection,
            cache: Vec::new(),
        })
    }

    fn columns_for(&mut self, gamma: f64) -> Result<usize> {
        if let Some(pos) = self.cache.iter().position(|(g, _)| *g == gamma) {
            return Ok(pos);
        }
        let p = self.pmax;
        match &self.projection {
            Projection::Zero => unreachable!("zero projection never evaluates columns"),
            Projection::Krylov(ws) => {
                let scaled = &ws.hess * (self.dt * gamma);
                let b = {
                    let mut e1 = DVector::zeros(ws.k);
                    e1[0] = ws.v_norm;
                    e1
                };
                let want_half = gamma == 1.0 && self.wants_half();
                let (cols, half_cols) = phi_columns(&scaled, &b, p, want_half);
                self.cache.push((gamma, cols));
                if let Some(hc) = half_cols {
                    if !self.cache.iter().any(|(g, _)| *g == 0.5) {
                        self.cache.push((0.5, hc));
                    }
                }
            }
            Projection::Dense { a, v } => {
                let scaled = a * (self.dt * gamma);
                let (cols, _) = phi_columns(&scaled, v, p, false);
                self.cache.push((gamma, cols));
            }
        }
        Ok(self
            .cache
            .iter()
            .position(|(g, _)| *g == gamma)
            .expect("just inserted"))
    }

    fn wants_half(&self) -> bool {
        // The shipped tableaux only use γ in {1/2, 1}; harvesting the
        // penultimate squaring makes the 1/2 columns free.
        true
    }

    /// Applies one combination to the cached vector.
    pub fn apply(&mut self, comb: &PhiCombination) -> Result<Vec<f64>> {
        if let Projection::Zero = self.projection {
            return Ok(vec![0.0; self.n]);
        }
        for t in &comb.terms {
            if !(t.node_scale > 0.0 && t.node_scale <= 1.0) {
                return Err(Error::invalid(format!(
                    "node_scale must lie in (0,1], got {}",
                    t.node_scale
                )));
            }
            if t.phi_index > self.pmax {
                return Err(Error::invalid(format!(
                    "phi index {} exceeds applier bound {}",
                    t.phi_index, self.pmax
                )));
            }
        }
        // Favor γ=1 first so the shared half-step columns land in the cache.
        let mut gammas: Vec<f64> = comb.terms.iter().map(|t| t.node_scale).collect();
        gammas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        gammas.dedup();
        for g in gammas {
            self.columns_for(g)?;
        }
        let small_dim = match &self.projection {
            Projection::Krylov(ws) => ws.k,
            Projection::Dense { v, .. } => v.len(),
            Projection::Zero => unreachable!(),
        };
        let mut small = DVector::<f64>::zeros(small_dim);
        if comb.identity_weight != 0.0 {
            match &self.projection {
                Projection::Krylov(ws) => small[0] += comb.identity_weight * ws.v_norm,
                Projection::Dense { v, .. } => small += v * comb.identity_weight,
                Projection::Zero => unreachable!(),
            }
        }
        for t in &comb.terms {
            if t.weight == 0.0 {
                continue;
            }
            let pos = self
                .cache
                .iter()
                .position(|(g, _)| *g == t.node_scale)
                .expect("columns cached above");
            small += &self.cache[pos].1[t.phi_index] * t.weight;
        }
        let out = match &self.projection {
            Projection::Krylov(ws) => ws.lift(&small),
            Projection::Dense { .. } => small.iter().copied().collect(),
            Projection::Zero => unreachable!(),
        };
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("phi action produced non-finite values"));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CooBuilder;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn phi_of_zero_matrix_is_inverse_factorial() {
        let z = DMatrix::<f64>::zeros(3, 3);
        for l in 0..4usize {
            let p = phi_dense(l, &z).unwrap();
            let expected = 1.0 / factorial(l);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { expected } else { 0.0 };
                    assert!(approx(p[(i, j)], want, 1e-12), "l={l} entry {i},{j}");
                }
            }
        }
    }

    #[test]
    fn phi_scalar_one() {
        // φ1(1) = e - 1, φ2(1) = e - 2.
        let a = DMatrix::from_element(1, 1, 1.0);
        let p1 = phi_dense(1, &a).unwrap()[(0, 0)];
        let p2 = phi_dense(2, &a).unwrap()[(0, 0)];
        assert!(approx(p1, std::f64::consts::E - 1.0, 1e-12));
        assert!(approx(p2, std::f64::consts::E - 2.0, 1e-12));
        assert!(approx(phi_scalar(1, 1.0), std::f64::consts::E - 1.0, 1e-14));
        assert!(approx(phi_scalar(2, 1.0), std::f64::consts::E - 2.0, 1e-14));
    }

    #[test]
    fn expm_matches_taylor_on_small_norm() {
        let a = DMatrix::from_row_slice(3, 3, &[0.1, 0.2, 0.0, -0.3, 0.05, 0.1, 0.0, 0.4, -0.2]);
        let e = expm(&a);
        // truncated Taylor oracle
        let mut acc = DMatrix::<f64>::identity(3, 3);
        let mut term = DMatrix::<f64>::identity(3, 3);
        for k in 1..30 {
            term = &term * &a / k as f64;
            acc += &term;
        }
        assert!((e - acc).norm() < 1e-12);
    }

    #[test]
    fn expm_with_half_consistent() {
        let a = DMatrix::from_row_slice(2, 2, &[-40.0, 3.0, 1.0, -20.0]);
        let (full, half) = expm_with_half(&a);
        let direct_half = expm(&(&a / 2.0));
        assert!((&half - &direct_half).norm() < 1e-10 * direct_half.norm());
        assert!((&half * &half - &full).norm() < 1e-10 * full.norm());
    }

    #[test]
    fn phi_recurrence_matrix() {
        // φ_{l+1}(A)·A + I/l! = φ_l(A)
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 0.7, 0.4]);
        for l in 0..3usize {
            let pl = phi_dense(l, &a).unwrap();
            let pl1 = phi_dense(l + 1, &a).unwrap();
            let resid = &pl1 * &a + DMatrix::<f64>::identity(2, 2) / factorial(l) - pl;
            assert!(resid.norm() < 1e-12, "l={l}");
        }
    }

    #[test]
    fn arnoldi_identity_breaks_down_immediately() {
        let a = SparseMatrix::identity(6);
        let v = vec![1.0, 2.0, 0.0, -1.0, 0.5, 3.0];
        let ws = arnoldi(&a, &v, 4).unwrap();
        assert!(ws.breakdown);
        assert_eq!(ws.k, 1);
        assert!(approx(ws.hess[(0, 0)], 1.0, 1e-14));
    }

    #[test]
    fn arnoldi_nilpotent_shift_full_subspace() {
        // shift matrix: e_i -> e_{i+1}; K_5(A, e1) spans everything.
        let mut b = CooBuilder::new(5);
        for i in 0..4 {
            b.push(i + 1, i, 1.0);
        }
        let a = b.build();
        let mut v = vec![0.0; 5];
        v[0] = 1.0;
        let ws = arnoldi(&a, &v, 5).unwrap();
        assert_eq!(ws.k, 5);
        assert!(ws.breakdown);
    }

    #[test]
    fn arnoldi_residual_identity() {
        // A V_k = V_k H + h_{k+1,k} v_{k+1} e_k^T on a random-ish matrix.
        let n = 50;
        let mut b = CooBuilder::new(n);
        let mut state = 88172645463325252u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        for i in 0..n {
            for j in 0..n {
                if (i + 3 * j) % 7 == 0 {
                    b.push(i, j, rng());
                }
            }
            b.push(i, i, -2.0 + rng());
        }
        let a = b.build();
        let v: Vec<f64> = (0..n).map(|_| rng()).collect();
        let m = 10;
        let ws = arnoldi(&a, &v, m).unwrap();
        assert_eq!(ws.k, m);
        let anorm = a.norm_inf();
        // residual check column by column
        let mut max_resid = 0.0f64;
        for k in 0..m {
            let av = a.mul_vec(ws.basis_vec(k));
            let mut recon = vec![0.0; n];
            for i in 0..m {
                axpy(ws.hess[(i, k)], ws.basis_vec(i), &mut recon);
            }
            if k == m - 1 {
                if let Some(nv) = &ws.next_vec {
                    axpy(ws.next_coeff, nv, &mut recon);
                }
            }
            let r: f64 = av
                .iter()
                .zip(&recon)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            max_resid = max_resid.max(r);
        }
        assert!(max_resid < 1e-8 * anorm, "residual {max_resid}");
        // orthonormality
        for i in 0..m {
            for j in i..m {
                let d = dot(ws.basis_vec(i), ws.basis_vec(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-8, "gram({i},{j}) = {d}");
            }
        }
    }

    #[test]
    fn action_on_diagonal_matrix() {
        let n = 40;
        let mut b = CooBuilder::new(n);
        let diag: Vec<f64> = (0..n).map(|i| -(i as f64) * 0.37 - 0.1).collect();
        for (i, &d) in diag.iter().enumerate() {
            b.push(i, i, d);
        }
        let a = b.build();
        let v: Vec<f64> = (0..n).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let dt = 0.8;
        let comb = PhiCombination::exp();
        let out = phi_combination_action(&comb, &a, dt, &v, 30).unwrap();
        for i in 0..n {
            let want = (dt * diag[i]).exp() * v[i];
            assert!(approx(out[i], want, 1e-12 * (1.0 + want.abs())), "i={i}");
        }
    }

    #[test]
    fn action_zero_vector_short_circuits() {
        let a = SparseMatrix::identity(7);
        let comb = PhiCombination::single(2.0, 1, 1.0);
        let out = phi_combination_action(&comb, &a, 0.5, &[0.0; 7], 3).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn krylov_matches_dense_oracle() {
        // moderately sized sparse matrix, mixed combination
        let n = 120;
        let mut b = CooBuilder::new(n);
        for i in 0..n {
            b.push(i, i, -2.0 - (i % 5) as f64);
            if i + 1 < n {
                b.push(i, i + 1, 1.0 + (i % 3) as f64 * 0.25);
                b.push(i + 1, i, 0.75);
            }
        }
        let a = b.build();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.31).sin()).collect();
        let comb = PhiCombination::single(0.4, 1, 1.0)
            .with_term(-0.3, 2, 0.5)
            .with_term(1.1, 0, 1.0)
            .with_term(0.2, 3, 0.5);
        let dt = 0.05;
        let krylov = phi_combination_action(&comb, &a, dt, &v, 60).unwrap();
        // dense oracle assembled from phi_dense pieces
        let ad = a.to_dense();
        let vv = DVector::from_row_slice(&v);
        let mut want = DVector::<f64>::zeros(n);
        for t in &comb.terms {
            let m = phi_dense(t.phi_index, &(&ad * (dt * t.node_scale))).unwrap();
            want += m * &vv * t.weight;
        }
        let scale = want.amax();
        let err = krylov
            .iter()
            .zip(want.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10 * scale.max(1.0), "err {err}");
    }

    #[test]
    fn dense_fallback_when_m_exceeds_dim() {
        let n = 9;
        let mut b = CooBuilder::new(n);
        for i in 0..n {
            b.push(i, i, -1.0 - i as f64 * 0.2);
        }
        let a = b.build();
        let v = vec![1.0; n];
        let comb = PhiCombination::single(1.0, 2, 1.0);
        let out = phi_combination_action(&comb, &a, 1.0, &v, 100).unwrap();
        for i in 0..n {
            let z = -1.0 - i as f64 * 0.2;
            assert!(approx(out[i], phi_scalar(2, z), 1e-13));
        }
    }

    #[test]
    fn rejects_bad_node_scale() {
        let a = SparseMatrix::identity(3);
        let comb = PhiCombination::single(1.0, 1, 1.5);
        assert!(phi_combination_action(&comb, &a, 1.0, &[1.0, 0.0, 0.0], 2).is_err());
    }
}

//! Network admittance: branch laws, grounded Laplacian, Kron reduction,
//! the identical-R/X factorization, gSCR, gain/phase rescaling and the
//! equivalent network seen by the remaining devices once some are absorbed.

use nalgebra::{Complex, DMatrix, Matrix2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matphase::{lit, Real};

/// Condition number above which a solved sample is flagged unreliable.
pub const COND_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("branch {index}: {reason}")]
    InvalidBranch { index: usize, reason: String },
    #[error("node {node} outside 1..={max}")]
    NodeOutOfRange { node: usize, max: usize },
    #[error("device count {n} exceeds node count {m}")]
    TooManyDevices { n: usize, m: usize },
    #[error("node {node} is not connected to ground or to any device node")]
    Floating { node: usize },
    #[error("branch {index} is singular at ω = {omega} rad/s (ε = 0 at ω₀)")]
    SingularBranch { index: usize, omega: f64 },
    #[error("interior block is singular at ω = {omega} rad/s")]
    IllPosedInterior { omega: f64 },
    #[error("branches have different R/X ratios; the reduced susceptance matrix needs a common ratio")]
    HeterogeneousRatio,
    #[error("reduced susceptance matrix is not positive definite (λ = {min_eig})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("scaling entries must be positive (found {value})")]
    NonPositiveScaling { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchLaw<T> {
    /// Line with susceptance `b` and resistance-to-reactance ratio `eps`.
    Rl { b: T, eps: T },
    Load { r: T },
    Shunt { c: T },
}

/// Branch between two nodes; ids are 1-based and `M + 1` denotes ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch<T> {
    pub from: usize,
    pub to: usize,
    #[serde(flatten)]
    pub law: BranchLaw<T>,
}

impl<T: Real> Branch<T> {
    pub fn rl(from: usize, to: usize, b: T, eps: T) -> Self {
        Self { from, to, law: BranchLaw::Rl { b, eps } }
    }

    pub fn load(from: usize, to: usize, r: T) -> Self {
        Self { from, to, law: BranchLaw::Load { r } }
    }

    pub fn shunt(from: usize, to: usize, c: T) -> Self {
        Self { from, to, law: BranchLaw::Shunt { c } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel<T> {
    /// Non-ground nodes.
    pub m: usize,
    /// Device nodes, numbered `1..=n`.
    pub n: usize,
    pub branches: Vec<Branch<T>>,
    pub omega0: T,
}

pub(crate) fn cx<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

fn re<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

impl<T: Real> NetworkModel<T> {
    pub fn new(m: usize, n: usize, branches: Vec<Branch<T>>, omega0: T) -> Result<Self, NetError> {
        let net = Self { m, n, branches, omega0 };
        net.validate()?;
        Ok(net)
    }

    pub fn ground(&self) -> usize {
        self.m + 1
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.n > self.m {
            return Err(NetError::TooManyDevices { n: self.n, m: self.m });
        }
        let g = self.ground();
        for (index, br) in self.branches.iter().enumerate() {
            for node in [br.from, br.to] {
                if node == 0 || node > g {
                    return Err(NetError::NodeOutOfRange { node, max: g });
                }
            }
            if br.from == br.to {
                return Err(NetError::InvalidBranch { index, reason: "self loop".into() });
            }
            let bad = |what: &str, v: T| NetError::InvalidBranch {
                index,
                reason: format!("{what} = {}", v.to_f64().unwrap_or(f64::NAN)),
            };
            match br.law {
                BranchLaw::Rl { b, eps } => {
                    if !(b > T::zero()) || !b.is_finite() {
                        return Err(bad("susceptance", b));
                    }
                    if !eps.is_finite() || eps < T::zero() {
                        return Err(bad("R/X ratio", eps));
                    }
                }
                BranchLaw::Load { r } => {
                    if !(r > T::zero()) || !r.is_finite() {
                        return Err(bad("load resistance", r));
                    }
                }
                BranchLaw::Shunt { c } => {
                    if !(c >= T::zero()) || !c.is_finite() {
                        return Err(bad("capacitance", c));
                    }
                }
            }
        }
        // every node must reach ground or a device node
        let mut adj = vec![Vec::new(); g + 1];
        for br in &self.branches {
            adj[br.from].push(br.to);
            adj[br.to].push(br.from);
        }
        let mut seen = vec![false; g + 1];
        let mut stack: Vec<usize> = (1..=self.n).chain(std::iter::once(g)).collect();
        for &s in &stack {
            seen[s] = true;
        }
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if let Some(node) = (1..=self.m).find(|&k| !seen[k]) {
            return Err(NetError::Floating { node });
        }
        Ok(())
    }

    /// Common R/X ratio of the RL branches, if there is one.
    pub fn common_ratio(&self) -> Option<T> {
        let mut it = self.branches.iter().filter_map(|b| match b.law {
            BranchLaw::Rl { eps, .. } => Some(eps),
            _ => None,
        });
        let first = it.next()?;
        let tol: T = lit(1e-12);
        it.all(|e| (e - first).abs() <= tol * (T::one() + first.abs())).then_some(first)
    }

    /// Mean R/X ratio over RL branches (zero when there are none).
    pub fn mean_ratio(&self) -> T {
        let eps: Vec<T> = self
            .branches
            .iter()
            .filter_map(|b| match b.law {
                BranchLaw::Rl { eps, .. } => Some(eps),
                _ => None,
            })
            .collect();
        if eps.is_empty() {
            return T::zero();
        }
        eps.iter().fold(T::zero(), |a, &e| a + e) / T::from_usize(eps.len()).unwrap()
    }

    /// Whether some RL branch has zero resistance, making `ω₀` a singular sample.
    pub fn has_lossless_line(&self) -> bool {
        self.branches
            .iter()
            .any(|b| matches!(b.law, BranchLaw::Rl { eps, .. } if eps == T::zero()))
    }
}

/// `F̃_ε(jω)⁻¹ = (jω/ω₀ + ε) I + J`.
pub fn f_inv<T: Real>(omega: T, omega0: T, eps: T) -> Matrix2<Complex<T>> {
    let a = cx(eps, omega / omega0);
    Matrix2::new(a, re(-T::one()), re(T::one()), a)
}

/// Admittance of a single branch at `ω`.
pub fn branch_admittance<T: Real>(law: &BranchLaw<T>, omega: T, omega0: T) -> Option<Matrix2<Complex<T>>> {
    match *law {
        BranchLaw::Rl { b, eps } => {
            let a = cx(eps, omega / omega0);
            let det = a * a + re(T::one());
            if det.norm_sqr() <= lit::<T>(1e-24) * (T::one() + a.norm_sqr()).powi(2) {
                return None;
            }
            let k = re(b) / det;
            Some(Matrix2::new(a * k, k, -k, a * k))
        }
        BranchLaw::Load { r } => Some(Matrix2::identity() * re(T::one() / r)),
        BranchLaw::Shunt { c } => {
            let jwc = cx(T::zero(), omega * c);
            let w0c = re(omega0 * c);
            Some(Matrix2::new(jwc, -w0c, w0c, jwc))
        }
    }
}

/// `2M × 2M` grounded Laplacian `Y(jω)`.
pub fn grounded_laplacian<T: Real>(net: &NetworkModel<T>, omega: T) -> Result<DMatrix<Complex<T>>, NetError> {
    let m = net.m;
    let g = net.ground();
    let mut y = DMatrix::zeros(2 * m, 2 * m);
    for (index, br) in net.branches.iter().enumerate() {
        let yb = branch_admittance(&br.law, omega, net.omega0).ok_or(NetError::SingularBranch {
            index,
            omega: omega.to_f64().unwrap_or(f64::NAN),
        })?;
        let (i, j) = (br.from - 1, br.to - 1);
        if br.from != g {
            add_block(&mut y, i, i, &yb, T::one());
        }
        if br.to != g {
            add_block(&mut y, j, j, &yb, T::one());
        }
        if br.from != g && br.to != g {
            add_block(&mut y, i, j, &yb, -T::one());
            add_block(&mut y, j, i, &yb, -T::one());
        }
    }
    Ok(y)
}

fn add_block<T: Real>(y: &mut DMatrix<Complex<T>>, bi: usize, bj: usize, blk: &Matrix2<Complex<T>>, sign: T) {
    for r in 0..2 {
        for c in 0..2 {
            y[(2 * bi + r, 2 * bj + c)] += blk[(r, c)] * re(sign);
        }
    }
}

/// Induced 1-norm.
fn norm1<T: Real>(a: &DMatrix<Complex<T>>) -> T {
    (0..a.ncols())
        .map(|c| a.column(c).iter().fold(T::zero(), |s, z| s + z.norm_sqr().sqrt()))
        .fold(T::zero(), |m, v| if v > m { v } else { m })
}

/// Schur complement `A₁ − A₂ A₄⁻¹ A₃` over the trailing `a.nrows() - k` rows,
/// with the 1-norm condition estimate of `A₄`.
pub fn schur_complement<T: Real>(a: &DMatrix<Complex<T>>, k: usize) -> Option<(DMatrix<Complex<T>>, T)> {
    let n = a.nrows();
    if k == n {
        return Some((a.clone(), T::one()));
    }
    let a1 = a.view((0, 0), (k, k));
    let a2 = a.view((0, k), (k, n - k));
    let a3 = a.view((k, 0), (n - k, k));
    let a4 = a.view((k, k), (n - k, n - k)).into_owned();
    let norm4 = norm1(&a4);
    let inv = a4.lu().try_inverse()?;
    let cond = norm4 * norm1(&inv);
    if !cond.is_finite() {
        return None;
    }
    let out = a1.into_owned() - a2 * (&inv * a3);
    Some((out, cond))
}

/// Kron reduction onto the first `n` nodes (`2n` rows).
pub fn kron_reduce<T: Real>(y: &DMatrix<Complex<T>>, n: usize) -> Option<DMatrix<Complex<T>>> {
    schur_complement(y, 2 * n).map(|(m, _)| m)
}

/// `Y_grid(jω)`: the Laplacian Kron-reduced onto the device nodes, with the
/// condition estimate of the eliminated interior block.
pub fn grid_admittance<T: Real>(net: &NetworkModel<T>, omega: T) -> Result<(DMatrix<Complex<T>>, T), NetError> {
    let y = grounded_laplacian(net, omega)?;
    schur_complement(&y, 2 * net.n).ok_or(NetError::IllPosedInterior {
        omega: omega.to_f64().unwrap_or(f64::NAN),
    })
}

/// Reduced susceptance matrix `B_r` of a network with a common R/X ratio.
pub fn reduced_b_matrix<T: Real>(net: &NetworkModel<T>) -> Result<DMatrix<T>, NetError> {
    if net.common_ratio().is_none() {
        return Err(NetError::HeterogeneousRatio);
    }
    let g = net.ground();
    let mut b = DMatrix::<T>::zeros(net.m, net.m);
    for br in &net.branches {
        if let BranchLaw::Rl { b: bij, .. } = br.law {
            let (i, j) = (br.from - 1, br.to - 1);
            if br.from != g {
                b[(i, i)] += bij;
            }
            if br.to != g {
                b[(j, j)] += bij;
            }
            if br.from != g && br.to != g {
                b[(i, j)] -= bij;
                b[(j, i)] -= bij;
            }
        }
    }
    let n = net.n;
    if n == net.m {
        return Ok(b);
    }
    let b4 = b.view((n, n), (net.m - n, net.m - n)).into_owned();
    let inv = b4.lu().try_inverse().ok_or(NetError::IllPosedInterior { omega: 0.0 })?;
    let b1 = b.view((0, 0), (n, n)).into_owned();
    let b2 = b.view((0, n), (n, net.m - n));
    let b3 = b.view((n, 0), (net.m - n, n));
    Ok(b1 - b2 * (inv * b3))
}

fn check_scaling<T: Real>(v: &[T], n: usize) -> Result<(), NetError> {
    if v.len() != n {
        return Err(NetError::DimensionMismatch { expected: n, found: v.len() });
    }
    if let Some(&bad) = v.iter().find(|&&x| !(x > T::zero()) || !x.is_finite()) {
        return Err(NetError::NonPositiveScaling { value: bad.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(())
}

/// `gSCR = λ₁(S^{-1/2} B_r S^{-1/2})`.
pub fn gscr<T: Real>(b_r: &DMatrix<T>, s: &[T]) -> Result<T, NetError> {
    let n = b_r.nrows();
    check_scaling(s, n)?;
    let w = DMatrix::from_fn(n, n, |i, j| {
        let sym = (b_r[(i, j)] + b_r[(j, i)]) * lit(0.5);
        sym / (s[i] * s[j]).sqrt()
    });
    let eig = w.symmetric_eigenvalues();
    let min = eig.iter().copied().fold(T::max_value().unwrap(), |a, b| if b < a { b } else { a });
    if !(min > T::zero()) {
        return Err(NetError::NotPositiveDefinite { min_eig: min.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(min)
}

/// `λ₁(S⁻¹ B_r)` from the non-symmetric product.
pub fn gscr_unsymmetric<T: Real>(b_r: &DMatrix<T>, s: &[T]) -> Result<T, NetError> {
    let n = b_r.nrows();
    check_scaling(s, n)?;
    let p = DMatrix::from_fn(n, n, |i, j| b_r[(i, j)] / s[i]);
    let min = p
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(T::max_value().unwrap(), |a, b| if b < a { b } else { a });
    if !(min > T::zero()) {
        return Err(NetError::NotPositiveDefinite { min_eig: min.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(min)
}

/// Per-node scaling used by the rescaled conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rescaling<T> {
    /// Capacity ratios `S_i`.
    pub s: Vec<T>,
    /// Positive weights `D_i`.
    pub d: Vec<T>,
    pub eps_tilde: T,
}

impl<T: Real> Rescaling<T> {
    pub fn identity(n: usize, eps_tilde: T) -> Self {
        Self { s: vec![T::one(); n], d: vec![T::one(); n], eps_tilde }
    }

    pub fn validate(&self, n: usize) -> Result<(), NetError> {
        check_scaling(&self.s, n)?;
        check_scaling(&self.d, n)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            s: idx.iter().map(|&i| self.s[i]).collect(),
            d: idx.iter().map(|&i| self.d[i]).collect(),
            eps_tilde: self.eps_tilde,
        }
    }
}

/// `Ỹ = (S^{-1/2} ⊗ I₂) Y (S^{-1/2} D ⊗ F̃_ε̃(jω)⁻¹)`.
pub fn rescaled_grid<T: Real>(
    y: &DMatrix<Complex<T>>,
    sc: &Rescaling<T>,
    omega: T,
    omega0: T,
) -> Result<DMatrix<Complex<T>>, NetError> {
    let n = y.nrows() / 2;
    if y.nrows() != 2 * n || y.ncols() != 2 * n {
        return Err(NetError::DimensionMismatch { expected: 2 * n, found: y.ncols() });
    }
    sc.validate(n)?;
    let fi = f_inv(omega, omega0, sc.eps_tilde);
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for bi in 0..n {
        let left = T::one() / sc.s[bi].sqrt();
        for bj in 0..n {
            let right = sc.d[bj] / sc.s[bj].sqrt();
            let blk = y.fixed_view::<2, 2>(2 * bi, 2 * bj).into_owned() * fi * re(left * right);
            out.fixed_view_mut::<2, 2>(2 * bi, 2 * bj).copy_from(&blk);
        }
    }
    Ok(out)
}

/// `Y_gridC = Y_g¹ − Y_g² (Y_C{2} + Y_g⁴)⁻¹ Y_g³`, absorbing the trailing
/// device nodes whose (global, capacity-scaled) admittances are `absorbed`.
/// Returns the reduced matrix and the condition estimate of the solved block.
pub fn equivalent_network<T: Real>(
    y_grid: &DMatrix<Complex<T>>,
    absorbed: &[Matrix2<Complex<T>>],
) -> Option<(DMatrix<Complex<T>>, T)> {
    let n = y_grid.nrows() / 2;
    let k = absorbed.len();
    assert!(k <= n, "more absorbed devices than device nodes");
    let mut a = y_grid.clone();
    for (t, blk) in absorbed.iter().enumerate() {
        let b = n - k + t;
        let mut v = a.fixed_view_mut::<2, 2>(2 * b, 2 * b);
        v += blk;
    }
    schur_complement(&a, 2 * (n - k))
}

/// Reorders the 2×2 node blocks so that new block `i` is old block `order[i]`.
pub fn permute_blocks<T: Real>(y: &DMatrix<Complex<T>>, order: &[usize]) -> DMatrix<Complex<T>> {
    let n = order.len();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| y[(2 * order[r / 2] + r % 2, 2 * order[c / 2] + c % 2)])
}

/// Block-diagonal matrix of 2×2 blocks.
pub fn block_diag<T: Real>(blocks: &[Matrix2<Complex<T>>]) -> DMatrix<Complex<T>> {
    let n = blocks.len();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for (i, b) in blocks.iter().enumerate() {
        out.fixed_view_mut::<2, 2>(2 * i, 2 * i).copy_from(b);
    }
    out
}

/// `B ⊗ M` for a real `B` and a 2×2 complex `M`.
pub fn kron_real<T: Real>(b: &DMatrix<T>, m: &Matrix2<Complex<T>>) -> DMatrix<Complex<T>> {
    let n = b.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| m[(r % 2, c % 2)] * re(b[(r / 2, c / 2)]))
}

//! Gains and phases of complex matrices and the pointwise mixed small
//! gain / small phase feedback test.
//!
//! Gains are singular values. Phases are defined for sectorial matrices
//! (`0` outside the numerical range) as the arguments of the unitary factor
//! of the sectorial decomposition. After rotating the matrix into the open
//! right half-plane they are the arguments `atan λ + γ` of a Hermitian
//! congruence, equal to half the arguments of the eigenvalues of `B (B*)⁻¹`.

use nalgebra::{Complex, DMatrix, RealField};
use num_traits::{FromPrimitive, ToPrimitive};
use thiserror::Error;

/// Real scalar usable by the gain/phase routines (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {}

impl<T: RealField + Copy + FromPrimitive + ToPrimitive> Real for T {}

pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("representable constant")
}

/// Number of uniform rotations scanned when searching for a separating half-plane.
pub const GAMMA_SCAN_POINTS: usize = 720;
/// Relative threshold (times `σ̄`) below which a matrix is declared non-sectorial.
pub const SECTORIAL_REL_TOL: f64 = 1e-9;
/// Margin (times `σ̄`) at which the trace-argument rotation is accepted
/// without scanning.
pub const FAST_ROTATION_REL_MARGIN: f64 = 1e-3;
/// Iteration cap of the Schur solve in [`phases_from_ratio`].
pub const SCHUR_MAX_ITER: usize = 10_000;
/// Absolute slack required by every strict inequality of the feedback test.
pub const MARGIN_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("sectorial matrix could not be inverted numerically")]
    Conditioning,
    #[error("eigenvalue iteration did not converge")]
    Eigen,
}

/// A finite square complex matrix sampled at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSample<T: Real> {
    entries: DMatrix<Complex<T>>,
}

impl<T: Real> MatrixSample<T> {
    pub fn new(entries: DMatrix<Complex<T>>) -> Result<Self, PhaseError> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(PhaseError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(PhaseError::Empty);
        }
        for c in 0..cols {
            for r in 0..rows {
                let z = entries[(r, c)];
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(PhaseError::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn from_diagonal(diag: &[Complex<T>]) -> Result<Self, PhaseError> {
        let n = diag.len();
        Self::new(DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                diag[r]
            } else {
                Complex::new(T::zero(), T::zero())
            }
        }))
    }

    pub fn identity(p: usize) -> Self {
        Self {
            entries: DMatrix::identity(p, p),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex<T>> {
        self.entries
    }
}

/// Singular values in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSpectrum<T> {
    pub sigmas: Vec<T>,
}

impl<T: Real> GainSpectrum<T> {
    pub fn max(&self) -> T {
        self.sigmas[0]
    }

    pub fn min(&self) -> T {
        self.sigmas[self.sigmas.len() - 1]
    }
}

/// Matrix phases in descending order. Empty when the matrix is not sectorial,
/// in which case the phase interval is unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpectrum<T> {
    pub sectorial: bool,
    pub phis: Vec<T>,
    /// Rotation `γ` for which the Hermitian part of `e^{-jγ}A` is positive definite.
    pub rotation_gamma: T,
}

impl<T: Real> PhaseSpectrum<T> {
    fn unbounded() -> Self {
        Self {
            sectorial: false,
            phis: Vec::new(),
            rotation_gamma: T::zero(),
        }
    }

    /// `(φ̲, φ̄)`, or `None` for a non-sectorial matrix.
    pub fn interval(&self) -> Option<(T, T)> {
        if self.sectorial {
            Some((self.phis[self.phis.len() - 1], self.phis[0]))
        } else {
            None
        }
    }

    pub fn max(&self) -> Option<T> {
        self.interval().map(|(_, hi)| hi)
    }

    pub fn min(&self) -> Option<T> {
        self.interval().map(|(lo, _)| lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    GainOk,
    PhaseOk,
    Undecided,
}

impl Verdict {
    pub fn certified(self) -> bool {
        !matches!(self, Verdict::Undecided)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::GainOk => "GAIN_OK",
            Verdict::PhaseOk => "PHASE_OK",
            Verdict::Undecided => "UNDECIDED",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn singular_values<T: Real>(a: &MatrixSample<T>) -> GainSpectrum<T> {
    let mut sigmas: Vec<T> = a.entries.clone().singular_values().iter().copied().collect();
    sigmas.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    GainSpectrum { sigmas }
}

/// Hermitian and skew parts so that `Herm(e^{-jγ}A) = cos γ·H1 + sin γ·H2`.
struct HermitianPencil<T: Real> {
    h1: DMatrix<Complex<T>>,
    h2: DMatrix<Complex<T>>,
}

impl<T: Real> HermitianPencil<T> {
    fn new(a: &DMatrix<Complex<T>>) -> Self {
        let ah = a.adjoint();
        let half = lit::<T>(0.5);
        let h1 = (a + &ah).map(|z| z * half);
        // (A - A*) / (2j)
        let h2 = (a - &ah).map(|z| Complex::new(z.im * half, -z.re * half));
        Self { h1, h2 }
    }

    fn min_eig(&self, gamma: T) -> T {
        let (s, c) = gamma.sin_cos();
        let h = self.h1.map(|z| z * c) + self.h2.map(|z| z * s);
        hermitian_min_eig(&h)
    }
}

/// `h / nrm` with parts below `ε²` set to zero; the Hermitian eigensolver can
/// return NaN when such parts are present.
fn unit_flushed<T: Real>(h: &DMatrix<Complex<T>>, nrm: T) -> DMatrix<Complex<T>> {
    let tiny = T::default_epsilon() * T::default_epsilon();
    let flush = |x: T| if x.abs() < tiny { T::zero() } else { x };
    h.map(|z| {
        let u = z.unscale(nrm);
        Complex::new(flush(u.re), flush(u.im))
    })
}

pub(crate) fn hermitian_min_eig<T: Real>(h: &DMatrix<Complex<T>>) -> T {
    match h.nrows() {
        1 => h[(0, 0)].re,
        2 => {
            let a = h[(0, 0)].re;
            let d = h[(1, 1)].re;
            let b = h[(0, 1)];
            let half = lit::<T>(0.5);
            let mid = (a + d) * half;
            let dev = (a - d) * half;
            mid - (dev * dev + b.norm_sqr()).sqrt()
        }
        _ => {
            let nrm = h.norm();
            if nrm == T::zero() {
                return T::zero();
            }
            unit_flushed(h, nrm)
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(T::max_value().unwrap_or(lit(f64::MAX)), |m, x| if x < m { x } else { m })
                * nrm
        }
    }
}

fn golden_max<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, iters: usize) -> (T, T) {
    let r = lit::<T>(0.618_033_988_749_894_8);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn wrap_2pi<T: Real>(x: T) -> T {
    let tau = T::two_pi();
    let mut y = x % tau;
    if y < T::zero() {
        y += tau;
    }
    if y >= tau {
        y -= tau;
    }
    y
}

/// Rotation `γ ∈ [0, 2π)` making the Hermitian part of `e^{-jγ}A` positive
/// definite, or `None` when no such rotation exists within tolerance.
pub fn sectoriality<T: Real>(a: &MatrixSample<T>) -> Option<T> {
    sectoriality_with_margin(a).map(|(g, _)| g)
}

fn sectoriality_with_margin<T: Real>(a: &MatrixSample<T>) -> Option<(T, T)> {
    let sigma_max = singular_values(a).max();
    if sigma_max == T::zero() {
        return None;
    }
    if a.dim() == 1 {
        let z = a.entries[(0, 0)];
        return Some((wrap_2pi(z.im.atan2(z.re)), z.norm_sqr().sqrt()));
    }
    let pencil = HermitianPencil::new(&a.entries);
    let threshold = sigma_max * lit(SECTORIAL_REL_TOL);
    // tr(A)/n lies in W(A), so its argument is a candidate rotation
    let tr = a.entries.trace();
    if tr.norm_sqr() > T::zero() {
        let g0 = tr.im.atan2(tr.re);
        let m0 = pencil.min_eig(g0);
        // accept only a well-separated rotation; the scan finds the best one
        if m0 > sigma_max * lit(FAST_ROTATION_REL_MARGIN) {
            return Some((wrap_2pi(g0), m0));
        }
    }
    let n = GAMMA_SCAN_POINTS;
    let step = T::two_pi() / lit::<T>(n as f64);
    let vals: Vec<T> = (0..n)
        .map(|k| pencil.min_eig(step * lit::<T>(k as f64)))
        .collect();

    let feasible: Vec<bool> = vals.iter().map(|v| *v > T::zero()).collect();
    let (center, half_width) = if feasible.iter().all(|f| *f) {
        // Only possible for the zero matrix, which was handled above.
        (T::zero(), T::pi())
    } else if let Some((start, len)) = widest_circular_run(&feasible) {
        let mid = lit::<T>(start as f64) + lit::<T>((len - 1) as f64) * lit(0.5);
        (mid * step, (lit::<T>(len as f64) * lit(0.5) + T::one()) * step)
    } else {
        let best = vals
            .iter()
            .enumerate()
            .fold((0usize, vals[0]), |acc, (k, v)| if *v > acc.1 { (k, *v) } else { acc });
        (lit::<T>(best.0 as f64) * step, step)
    };
    let (g, m) = golden_max(|g| pencil.min_eig(g), center - half_width, center + half_width, 80);
    let mid_val = pencil.min_eig(center);
    let (g, m) = if mid_val > m { (center, mid_val) } else { (g, m) };
    if m > threshold {
        Some((wrap_2pi(g), m))
    } else {
        None
    }
}

fn widest_circular_run(flags: &[bool]) -> Option<(usize, usize)> {
    let n = flags.len();
    let first_false = flags.iter().position(|f| !*f)?;
    let mut best: Option<(usize, usize)> = None;
    let mut run_start = 0usize;
    let mut run_len = 0usize;
    for k in 1..=n {
        let idx = (first_false + k) % n;
        if flags[idx] {
            if run_len == 0 {
                run_start = idx;
            }
            run_len += 1;
        } else if run_len > 0 {
            if best.map(|b| run_len > b.1).unwrap_or(true) {
                best = Some((run_start, run_len));
            }
            run_len = 0;
        }
    }
    best
}

/// Phases from the congruence `B = H^{1/2}(I + jC)H^{1/2}` of the rotated
/// matrix `B = e^{-jγ}A`, with `H = Herm(B)` positive definite. The
/// eigenvalues of `B(B*)⁻¹` are `(1 + jλ)/(1 − jλ)` for the eigenvalues `λ`
/// of the Hermitian `C`, so `φ = atan λ + γ`.
pub fn phases<T: Real>(a: &MatrixSample<T>) -> Result<PhaseSpectrum<T>, PhaseError> {
    let Some(gamma) = sectoriality(a) else {
        return Ok(PhaseSpectrum::unbounded());
    };
    if a.dim() == 1 {
        return Ok(scalar_phase(a, gamma));
    }
    let pencil = HermitianPencil::new(&rotated(a, gamma));
    let Some(chol) = pencil.h1.clone().cholesky() else {
        return phases_from_ratio(a);
    };
    let l_inv = chol.l().try_inverse().ok_or(PhaseError::Conditioning)?;
    let c = &l_inv * &pencil.h2 * l_inv.adjoint();
    let c = (&c + c.adjoint()).map(|z| z * lit::<T>(0.5));
    let nrm = c.norm();
    let mut phis: Vec<T> = if nrm < T::default_epsilon() {
        vec![gamma; a.dim()]
    } else {
        unit_flushed(&c, nrm)
            .symmetric_eigenvalues().iter().map(|l| (*l * nrm).atan() + gamma).collect()
    };
    if phis.iter().any(|x| !x.is_finite()) {
        return phases_from_ratio(a);
    }
    recenter(&mut phis);
    phis.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(PhaseSpectrum { sectorial: true, phis, rotation_gamma: gamma })
}

/// Phases as `½·arg λ(B(B*)⁻¹) + γ`, using a general eigenvalue solve.
pub fn phases_from_ratio<T: Real>(a: &MatrixSample<T>) -> Result<PhaseSpectrum<T>, PhaseError> {
    let Some(gamma) = sectoriality(a) else {
        return Ok(PhaseSpectrum::unbounded());
    };
    if a.dim() == 1 {
        return Ok(scalar_phase(a, gamma));
    }
    let b = rotated(a, gamma);
    let b_adj_inv = b.adjoint().lu().try_inverse().ok_or(PhaseError::Conditioning)?;
    let m = &b * b_adj_inv;
    let eig = m
        .try_schur(T::default_epsilon(), SCHUR_MAX_ITER)
        .ok_or(PhaseError::Eigen)?
        .eigenvalues()
        .ok_or(PhaseError::Eigen)?;
    let half = lit::<T>(0.5);
    let mut phis: Vec<T> = eig.iter().map(|z| z.im.atan2(z.re) * half + gamma).collect();
    recenter(&mut phis);
    phis.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(PhaseSpectrum { sectorial: true, phis, rotation_gamma: gamma })
}

fn rotated<T: Real>(a: &MatrixSample<T>, gamma: T) -> DMatrix<Complex<T>> {
    let rot = Complex::new(gamma.cos(), -gamma.sin());
    a.entries.map(|z| z * rot)
}

fn scalar_phase<T: Real>(a: &MatrixSample<T>, gamma: T) -> PhaseSpectrum<T> {
    let z = a.entries[(0, 0)];
    PhaseSpectrum { sectorial: true, phis: vec![z.im.atan2(z.re)], rotation_gamma: gamma }
}

/// Shift by a multiple of `2π` so that the mean phase lies in `(-π, π]`.
fn recenter<T: Real>(phis: &mut [T]) {
    let n = lit::<T>(phis.len() as f64);
    let mean = phis.iter().fold(T::zero(), |s, x| s + *x) / n;
    let tau = T::two_pi();
    let mut k = (mean / tau).round();
    if mean - k * tau <= -T::pi() {
        k -= T::one();
    } else if mean - k * tau > T::pi() {
        k += T::one();
    }
    let shift = k * tau;
    for x in phis.iter_mut() {
        *x -= shift;
    }
}

/// Pointwise test of the feedback loop `G # H`.
pub fn check_mixed_lemma<T: Real>(
    g: &MatrixSample<T>,
    h: &MatrixSample<T>,
) -> Result<Verdict, PhaseError> {
    if g.dim() != h.dim() {
        return Err(PhaseError::DimensionMismatch {
            left: g.dim(),
            right: h.dim(),
        });
    }
    let eps = lit::<T>(MARGIN_EPS);
    let gain = singular_values(g).max() * singular_values(h).max();
    if T::one() - gain > eps {
        return Ok(Verdict::GainOk);
    }
    let pg = phases(g)?;
    let ph = phases(h)?;
    match (pg.interval(), ph.interval()) {
        (Some((g_lo, g_hi)), Some((h_lo, h_hi)))
            if T::pi() - (g_hi + h_hi) > eps && (g_lo + h_lo) + T::pi() > eps =>
        {
            Ok(Verdict::PhaseOk)
        }
        _ => Ok(Verdict::Undecided),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn polar(r: f64, th: f64) -> Complex<f64> {
        Complex::from_polar(r, th)
    }

    #[test]
    fn identity_gains_and_phases() {
        let a = MatrixSample::<f64>::identity(2);
        assert_eq!(singular_values(&a).sigmas, vec![1.0, 1.0]);
        let gamma = sectoriality(&a).unwrap();
        assert!(gamma.abs() < 1e-6 || (gamma - 2.0 * PI).abs() < 1e-6);
        let ph = phases(&a).unwrap();
        assert!(ph.sectorial);
        for p in ph.phis {
            assert!(p.abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_gains() {
        let a = MatrixSample::from_diagonal(&[c(1.0, 0.0), c(3.0, 0.0)]).unwrap();
        let s = singular_values(&a).sigmas;
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn segment_through_origin_is_not_sectorial() {
        let a = MatrixSample::from_diagonal(&[c(1.0, 0.0), c(-1.0, 0.0)]).unwrap();
        assert!(sectoriality(&a).is_none());
        let ph = phases(&a).unwrap();
        assert!(!ph.sectorial && ph.phis.is_empty());
        assert!(ph.interval().is_none());
    }

    #[test]
    fn one_and_j_rotation() {
        let a = MatrixSample::from_diagonal(&[c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let gamma = sectoriality(&a).unwrap();
        assert!((gamma - PI / 4.0).abs() < 1e-3, "gamma {gamma}");
        // Hermitian part of e^{-jπ/4}A is diag(cos π/4, cos π/4).
        let rot = polar(1.0, -PI / 4.0);
        let b = a.matrix().map(|z| z * rot);
        let h = (&b + b.adjoint()).map(|z| z * 0.5);
        assert!(hermitian_min_eig(&h) > 0.7);
    }

    #[test]
    fn unitary_diagonal_phases() {
        let a = MatrixSample::from_diagonal(&[polar(1.0, PI / 6.0), polar(1.0, -PI / 6.0)]).unwrap();
        let ph = phases(&a).unwrap();
        assert!((ph.phis[0] - PI / 6.0).abs() < 1e-12);
        assert!((ph.phis[1] + PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_case() {
        let a = MatrixSample::new(DMatrix::from_element(1, 1, c(-2.0, 0.5))).unwrap();
        let ph = phases(&a).unwrap();
        assert!(ph.sectorial);
        assert!((ph.phis[0] - 0.5f64.atan2(-2.0)).abs() < 1e-15);
        assert!((singular_values(&a).max() - 4.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let e = MatrixSample::new(DMatrix::from_element(2, 2, c(f64::NAN, 0.0))).unwrap_err();
        assert!(matches!(e, PhaseError::NonFinite { .. }));
        let e = MatrixSample::new(DMatrix::from_element(2, 3, c(1.0, 0.0))).unwrap_err();
        assert!(matches!(e, PhaseError::NotSquare { .. }));
        let g = MatrixSample::<f64>::identity(2);
        let h = MatrixSample::<f64>::identity(3);
        assert!(matches!(
            check_mixed_lemma(&g, &h),
            Err(PhaseError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mixed_lemma_examples() {
        let i2 = MatrixSample::<f64>::identity(2);
        let half = MatrixSample::from_diagonal(&[c(0.5, 0.0), c(0.5, 0.0)]).unwrap();
        assert_eq!(check_mixed_lemma(&half, &i2).unwrap(), Verdict::GainOk);
        let two = MatrixSample::from_diagonal(&[c(2.0, 0.0), c(2.0, 0.0)]).unwrap();
        assert_eq!(check_mixed_lemma(&two, &i2).unwrap(), Verdict::PhaseOk);
        let g = MatrixSample::from_diagonal(&[polar(2.0, 2.0), polar(2.0, -2.0)]).unwrap();
        assert_eq!(check_mixed_lemma(&g, &i2).unwrap(), Verdict::Undecided);
    }

    #[test]
    fn wide_chord_is_sectorial_but_fails_phase_test() {
        // The chord between 2e^{±2j} passes left of the origin, so the matrix is
        // sectorial with phases {2π-2, 2}; the phase sum with H = I exceeds π.
        let g = MatrixSample::from_diagonal(&[polar(2.0, 2.0), polar(2.0, -2.0)]).unwrap();
        let ph = phases(&g).unwrap();
        assert!(ph.sectorial);
        let (lo, hi) = ph.interval().unwrap();
        assert!((hi - lo - (2.0 * PI - 4.0)).abs() < 1e-9);
        assert!(hi > PI - 1e-9 || lo < -PI + 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let a = MatrixSample::<f32>::from_diagonal(&[
            Complex::from_polar(1.0f32, 0.3),
            Complex::from_polar(2.0f32, -0.2),
        ])
        .unwrap();
        let ph = phases(&a).unwrap();
        assert!((ph.phis[0] - 0.3).abs() < 1e-4);
        assert!((ph.phis[1] + 0.2).abs() < 1e-4);
    }

    #[test]
    fn recenter_keeps_mean_in_principal_range() {
        let mut v = vec![3.0 * PI, 3.0 * PI + 0.2];
        recenter(&mut v);
        let mean = (v[0] + v[1]) / 2.0;
        assert!(mean > -PI && mean <= PI);
    }

    #[test]
    fn near_real_symmetric_matrix_has_finite_zero_phases() {
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[38.2, -14.06, -14.06, 10.55]);
        let big = DMatrix::from_fn(4, 4, |r, c| {
            let v = if r % 2 == c % 2 { m[(r / 2, c / 2)] } else { 0.0 };
            Complex::new(v, if r == c { 1e-300 } else { 0.0 })
        });
        let inv = big.lu().try_inverse().unwrap();
        let ph = phases(&MatrixSample::new(inv).unwrap()).unwrap();
        assert!(ph.phis.iter().all(|p: &f64| p.is_finite() && p.abs() < 1e-12), "{:?}", ph.phis);
    }
}

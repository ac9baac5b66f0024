//! Ground truth for the frequency-domain certificates: closed-loop
//! eigenvalues of the assembled state-space model and the determinant
//! winding of the return difference.

use std::io::Write;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devmodel::{jmat, rotate_to_global, Complex64, DevError, DeviceAdmittance, StateSpace};
use crate::network::{block_diag, equivalent_network, permute_blocks, schur_complement, BranchLaw, NetError, NetworkModel};

/// Eigenvalues smaller than this in modulus are treated as the common-angle
/// mode and kept out of the verdict.
pub const STRUCTURAL_EPS: f64 = 1e-7;
/// Relative singular-value threshold separating solvable from constrained
/// algebraic directions.
pub const RANK_TOL: f64 = 1e-10;
pub const DEFAULT_NYQUIST_BUDGET: usize = 20_000;
/// Adjacent samples whose determinant argument differs by more than this are
/// densified.
pub const NYQUIST_MAX_STEP: f64 = std::f64::consts::FRAC_PI_4;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("device {id} has no state-space realization")]
    Tabulated { id: String },
    #[error("algebraic loop: boundary equations do not determine the node voltages")]
    AlgebraicLoop,
    #[error("expected {expected} devices, found {found}")]
    DeviceCount { expected: usize, found: usize },
    #[error("eigenvalue solve failed")]
    Eigen,
    #[error("determinant argument jumps by {jump:.3} rad near {omega} rad/s after densification")]
    NyquistResolution { omega: f64, jump: f64 },
    #[error("return difference vanishes at {omega} rad/s")]
    NyquistZero { omega: f64 },
    #[error("singular evaluation at s = {s}")]
    Singular { s: Complex64 },
    #[error(transparent)]
    Device(#[from] DevError),
    #[error(transparent)]
    Network(#[from] NetError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn global_ss(d: &DeviceAdmittance) -> Result<StateSpace, OracleError> {
    rotate_to_global(d).state_space().cloned().ok_or_else(|| OracleError::Tabulated { id: d.id.clone() })
}

/// Interconnected linear model on the manifold of consistent states.
#[derive(Debug, Clone)]
pub struct ClosedLoopModel {
    /// Reduced state matrix.
    pub a: DMatrix<f64>,
    /// States before reduction (devices, lines, capacitors).
    pub raw_states: usize,
    pub device_states: Vec<usize>,
}

/// Assembles the closed loop. `devices[i]` sits at node `i + 1`; `None`
/// leaves that node open.
pub fn assemble(devices: &[Option<&DeviceAdmittance>], net: &NetworkModel<f64>) -> Result<ClosedLoopModel, OracleError> {
    if devices.len() != net.n {
        return Err(OracleError::DeviceCount { expected: net.n, found: devices.len() });
    }
    let w0 = net.omega0;
    let g = net.ground();
    let j = jmat();
    let ss: Vec<Option<StateSpace>> = devices.iter().map(|d| d.map(global_ss).transpose()).collect::<Result<_, _>>()?;

    // state layout
    let mut offs = Vec::new();
    let mut nx = 0;
    for s in &ss {
        offs.push(nx);
        nx += s.as_ref().map_or(0, |s| s.n_states());
    }
    let device_states = ss.iter().map(|s| s.as_ref().map_or(0, |s| s.n_states())).collect();
    let mut line_off = Vec::new();
    let mut shunt_idx = Vec::new();
    let mut n_shunt = 0;
    for br in &net.branches {
        match br.law {
            BranchLaw::Rl { .. } | BranchLaw::Shunt { .. } => {
                line_off.push(Some(nx));
                nx += 2;
            }
            BranchLaw::Load { .. } => line_off.push(None),
        }
        if matches!(br.law, BranchLaw::Shunt { .. }) {
            shunt_idx.push(Some(n_shunt));
            n_shunt += 1;
        } else {
            shunt_idx.push(None);
        }
    }
    // algebraic layout: node voltages then capacitor currents
    let nv = 2 * net.m;
    let ny = nv + 2 * n_shunt;
    let nrow = nv + 2 * n_shunt;

    let mut a = DMatrix::<f64>::zeros(nx, nx);
    let mut b = DMatrix::<f64>::zeros(nx, ny);
    let mut p = DMatrix::<f64>::zeros(nrow, nx);
    let mut q = DMatrix::<f64>::zeros(nrow, ny);

    let put = |m: &mut DMatrix<f64>, r: usize, c: usize, blk: &Matrix2<f64>, k: f64| {
        for i in 0..2 {
            for jj in 0..2 {
                m[(r + i, c + jj)] += k * blk[(i, jj)];
            }
        }
    };
    let eye = Matrix2::<f64>::identity();

    for (k, s) in ss.iter().enumerate() {
        let Some(s) = s else { continue };
        let o = offs[k];
        let n = s.n_states();
        a.view_mut((o, o), (n, n)).copy_from(&s.a);
        b.view_mut((o, 2 * k), (n, 2)).copy_from(&s.b);
        // device current leaves the node
        p.view_mut((2 * k, o), (2, n)).copy_from(&s.c);
        let mut qv = q.view_mut((2 * k, 2 * k), (2, 2));
        qv += &s.d;
    }
    for (e, br) in net.branches.iter().enumerate() {
        let f = (br.from != g).then(|| 2 * (br.from - 1));
        let t = (br.to != g).then(|| 2 * (br.to - 1));
        match br.law {
            BranchLaw::Rl { b: bb, eps } => {
                let o = line_off[e].unwrap();
                put(&mut a, o, o, &(eye * eps + j), -w0);
                if let Some(f) = f {
                    put(&mut b, o, f, &eye, w0 * bb);
                    put(&mut p, f, o, &eye, 1.0);
                }
                if let Some(t) = t {
                    put(&mut b, o, t, &eye, -w0 * bb);
                    put(&mut p, t, o, &eye, -1.0);
                }
            }
            BranchLaw::Load { r } => {
                for (x, sx) in [(f, 1.0), (t, -1.0)] {
                    let Some(x) = x else { continue };
                    for (y, sy) in [(f, 1.0), (t, -1.0)] {
                        if let Some(y) = y {
                            put(&mut q, x, y, &eye, sx * sy / r);
                        }
                    }
                }
            }
            BranchLaw::Shunt { c } => {
                let o = line_off[e].unwrap();
                let ic = nv + 2 * shunt_idx[e].unwrap();
                put(&mut a, o, o, &j, -w0);
                put(&mut b, o, ic, &eye, 1.0 / c);
                // capacitor voltage equals the node voltage difference
                put(&mut p, ic, o, &eye, 1.0);
                if let Some(f) = f {
                    put(&mut q, f, ic, &eye, 1.0);
                    put(&mut q, ic, f, &eye, -1.0);
                }
                if let Some(t) = t {
                    put(&mut q, t, ic, &eye, -1.0);
                    put(&mut q, ic, t, &eye, 1.0);
                }
            }
        }
    }
    let a = reduce_dae(&a, &b, &p, &q)?;
    Ok(ClosedLoopModel { a, raw_states: nx, device_states })
}

/// Full-size orthonormal factors of a possibly rectangular matrix, padding
/// with zero rows so that `V` is square.
fn full_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (r, c) = m.shape();
    let k = r.max(c);
    let mut sq = DMatrix::zeros(k, k);
    sq.view_mut((0, 0), (r, c)).copy_from(m);
    let svd = sq.svd(true, true);
    let u = svd.u.unwrap().rows(0, r).into_owned();
    let vt = svd.v_t.unwrap();
    (u, svd.singular_values.iter().copied().collect(), vt.transpose().rows(0, c).into_owned())
}

/// State matrix of `ẋ = Ax + By, 0 = Px + Qy` restricted to the consistent
/// subspace. Directions of `y` that `Q` cannot resolve are fixed by the
/// differentiated constraint.
fn reduce_dae(a: &DMatrix<f64>, b: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, OracleError> {
    let nx = a.nrows();
    let ny = q.ncols();
    if ny == 0 {
        return Ok(a.clone());
    }
    let svd = q.clone().svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sig = &svd.singular_values;
    let smax = sig.iter().copied().fold(0.0, f64::max);
    let rank = sig.iter().filter(|s| **s > RANK_TOL * smax.max(1.0)).count();
    // nalgebra does not sort singular values
    let mut order: Vec<usize> = (0..sig.len()).collect();
    order.sort_by(|&i, &k| sig[k].partial_cmp(&sig[i]).unwrap());
    let pick = |m: &DMatrix<f64>, idx: &[usize], cols: bool| {
        if cols {
            DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
        } else {
            DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
        }
    };
    let (o1, o2) = order.split_at(rank);
    let u1 = pick(&u, o1, true);
    let u2 = pick(&u, o2, true);
    let v1 = pick(&v_t, o1, false).transpose();
    let v2 = pick(&v_t, o2, false).transpose();
    let s1_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(rank, o1.iter().map(|&i| 1.0 / sig[i])));

    // y = V1 w1 + V2 w2 with w1 solved from the resolvable rows
    let a1 = a - b * &v1 * &s1_inv * u1.transpose() * p;
    if o2.is_empty() {
        return Ok(a1);
    }
    let b2 = b * &v2;
    let gmat = u2.transpose() * p;
    let gb = &gmat * &b2;
    let gb_inv = gb.clone().try_inverse().ok_or(OracleError::AlgebraicLoop)?;
    let gb_cond = gb.norm() * gb_inv.norm();
    if !gb_cond.is_finite() || gb_cond > 1e12 {
        return Err(OracleError::AlgebraicLoop);
    }
    let ahat = &a1 - &b2 * gb_inv * &gmat * &a1;
    // orthonormal basis of ker G
    let (_, gs, gv) = full_svd(&gmat);
    let gmax = gs.iter().copied().fold(0.0, f64::max);
    let mut idx: Vec<usize> = (0..nx).collect();
    idx.sort_by(|&i, &k| gs.get(k).copied().unwrap_or(0.0).partial_cmp(&gs.get(i).copied().unwrap_or(0.0)).unwrap());
    let rank_g = gs.iter().filter(|s| **s > RANK_TOL * gmax.max(1.0)).count();
    let basis = pick(&gv, &idx[rank_g..], true);
    Ok(basis.transpose() * ahat * basis)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    /// Eigenvalues entering the verdict.
    pub eigenvalues: Vec<Complex64>,
    /// Modes with `|λ| < STRUCTURAL_EPS`.
    pub structural: Vec<Complex64>,
    pub stable: bool,
}

impl EigenReport {
    pub fn from_eigenvalues(all: Vec<Complex64>) -> Self {
        let (structural, eigenvalues): (Vec<_>, Vec<_>) = all.into_iter().partition(|l| l.norm() < STRUCTURAL_EPS);
        let stable = eigenvalues.iter().all(|l| l.re < 0.0);
        Self { eigenvalues, structural, stable }
    }

    /// The non-structural eigenvalue with the largest real part.
    pub fn dominant(&self) -> Option<Complex64> {
        self.eigenvalues.iter().copied().max_by(|a, b| a.re.partial_cmp(&b.re).unwrap())
    }

    /// Right-half-plane eigenvalues with non-negative imaginary part.
    pub fn unstable_modes(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().copied().filter(|l| l.re >= 0.0 && l.im >= 0.0).collect()
    }
}

pub fn model_eigs(m: &ClosedLoopModel) -> Result<EigenReport, OracleError> {
    if m.a.nrows() == 0 {
        return Ok(EigenReport::from_eigenvalues(Vec::new()));
    }
    let ev = m.a.clone().complex_eigenvalues();
    if ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(OracleError::Eigen);
    }
    Ok(EigenReport::from_eigenvalues(ev.iter().copied().collect()))
}

pub fn closed_loop_eigs(devices: &[DeviceAdmittance], net: &NetworkModel<f64>) -> Result<EigenReport, OracleError> {
    let refs: Vec<Option<&DeviceAdmittance>> = devices.iter().map(Some).collect();
    model_eigs(&assemble(&refs, net)?)
}

/// Poles of `Y_gridC(s)⁻¹`: the absorbed devices on the network with every
/// other device node open.
pub fn equivalent_inverse_poles(
    devices: &[DeviceAdmittance],
    absorbed: &[bool],
    net: &NetworkModel<f64>,
) -> Result<EigenReport, OracleError> {
    if absorbed.len() != devices.len() {
        return Err(OracleError::DeviceCount { expected: devices.len(), found: absorbed.len() });
    }
    let refs: Vec<Option<&DeviceAdmittance>> = devices.iter().zip(absorbed).map(|(d, &a)| a.then_some(d)).collect();
    model_eigs(&assemble(&refs, net)?)
}

pub fn write_eigen_csv<W: Write>(r: &EigenReport, out: W) -> Result<(), OracleError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["re", "im", "damping_ratio", "freq_hz", "structural"])?;
    let mut rows: Vec<(Complex64, bool)> =
        r.eigenvalues.iter().map(|l| (*l, false)).chain(r.structural.iter().map(|l| (*l, true))).collect();
    rows.sort_by(|a, b| b.0.re.partial_cmp(&a.0.re).unwrap().then(a.0.im.partial_cmp(&b.0.im).unwrap()));
    for (l, s) in rows {
        let zeta = if l.norm() > 0.0 { -l.re / l.norm() } else { 1.0 };
        w.write_record([
            l.re.to_string(),
            l.im.to_string(),
            zeta.to_string(),
            (l.im / (2.0 * std::f64::consts::PI)).to_string(),
            s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Branch admittance at a complex frequency.
fn branch_at(law: &BranchLaw<f64>, s: Complex64, w0: f64) -> Option<Matrix2<Complex64>> {
    match *law {
        BranchLaw::Rl { b, eps } => {
            let a = s / w0 + eps;
            let det = a * a + 1.0;
            if det.norm() < 1e-14 {
                return None;
            }
            let k = re(b) / det;
            Some(Matrix2::new(a * k, k, -k, a * k))
        }
        BranchLaw::Load { r } => Some(Matrix2::identity() * re(1.0 / r)),
        BranchLaw::Shunt { c } => Some(Matrix2::new(s * c, re(-w0 * c), re(w0 * c), s * c)),
    }
}

/// `Y_grid(s)` at a complex `s`.
pub fn grid_at(net: &NetworkModel<f64>, s: Complex64) -> Result<DMatrix<Complex64>, OracleError> {
    let g = net.ground();
    let mut y = DMatrix::zeros(2 * net.m, 2 * net.m);
    for br in &net.branches {
        let yb = branch_at(&br.law, s, net.omega0).ok_or(OracleError::Singular { s })?;
        let (i, j) = (br.from - 1, br.to - 1);
        let mut add = |bi: usize, bj: usize, k: f64| {
            let mut v = y.fixed_view_mut::<2, 2>(2 * bi, 2 * bj);
            v += yb * re(k);
        };
        if br.from != g {
            add(i, i, 1.0);
        }
        if br.to != g {
            add(j, j, 1.0);
        }
        if br.from != g && br.to != g {
            add(i, j, -1.0);
            add(j, i, -1.0);
        }
    }
    schur_complement(&y, 2 * net.n).map(|(m, _)| m).ok_or(OracleError::Singular { s })
}

/// Block diagonal of the devices' global-frame responses at `s`.
pub fn devices_at(devices: &[DeviceAdmittance], s: Complex64) -> Result<DMatrix<Complex64>, OracleError> {
    let blocks = devices
        .iter()
        .map(|d| global_ss(d)?.response_at(s).ok_or(OracleError::Singular { s }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(block_diag(&blocks))
}

/// Return-difference loop `L(jω) = Y_C(jω) Y_grid(jω)⁻¹`.
pub fn loop_gain(devices: &[DeviceAdmittance], net: &NetworkModel<f64>, omega: f64) -> Result<DMatrix<Complex64>, OracleError> {
    let s = Complex64::new(0.0, omega);
    let yc = devices_at(devices, s)?;
    let yg = grid_at(net, s)?;
    let inv = yg.lu().try_inverse().ok_or(OracleError::Singular { s })?;
    Ok(yc * inv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winding {
    /// Counter-clockwise turns of `det(I + L(jω))` over `ω ∈ (−∞, ∞)`.
    pub turns: i64,
    /// Unrounded value of `turns`.
    pub raw: f64,
    pub samples: usize,
}

impl Winding {
    /// With stable open loops, zero turns means a stable closed loop.
    pub fn stable(&self) -> bool {
        self.turns == 0
    }
}

/// Winding of `det(I + L(jω))` about the origin. `l` must come from a real
/// system so that the negative half of the axis mirrors the positive one.
pub fn nyquist_winding<F>(l: F, omegas: &[f64], budget: usize) -> Result<Winding, OracleError>
where
    F: Fn(f64) -> Result<DMatrix<Complex64>, OracleError>,
{
    let det_at = |w: f64| -> Result<Complex64, OracleError> {
        let m = l(w)?;
        let n = m.nrows();
        let d = (DMatrix::<Complex64>::identity(n, n) + m).determinant();
        if d.norm() == 0.0 || !d.re.is_finite() || !d.im.is_finite() {
            return Err(OracleError::NyquistZero { omega: w });
        }
        Ok(d)
    };
    let mut pts: Vec<(f64, Complex64)> = omegas.iter().map(|&w| Ok((w, det_at(w)?))).collect::<Result<_, OracleError>>()?;
    let mut spent = 0;
    let mut total = 0.0;
    let mut k = 0;
    while k + 1 < pts.len() {
        let (w1, d1) = pts[k];
        let (w2, d2) = pts[k + 1];
        let step = (d2 / d1).arg();
        if step.abs() > NYQUIST_MAX_STEP && spent < budget {
            let mid = if w1 > 0.0 { (w1 * w2).sqrt() } else { 0.5 * (w1 + w2) };
            if mid > w1 && mid < w2 {
                pts.insert(k + 1, (mid, det_at(mid)?));
                spent += 1;
                continue;
            }
        }
        if step.abs() > 2.0 * NYQUIST_MAX_STEP {
            return Err(OracleError::NyquistResolution { omega: w1, jump: step.abs() });
        }
        total += step;
        k += 1;
    }
    let raw = 2.0 * total / (2.0 * std::f64::consts::PI);
    Ok(Winding { turns: raw.round() as i64, raw, samples: pts.len() })
}

pub fn system_winding(
    devices: &[DeviceAdmittance],
    net: &NetworkModel<f64>,
    omegas: &[f64],
) -> Result<Winding, OracleError> {
    nyquist_winding(|w| loop_gain(devices, net, w), omegas, DEFAULT_NYQUIST_BUDGET)
}

/// Worst relative residual of the determinant chain splitting the closed
/// loop into the absorbed-device subsystem and the remaining devices
/// against the equivalent network.
pub fn charpoly_identity(
    devices: &[DeviceAdmittance],
    net: &NetworkModel<f64>,
    absorbed: &[bool],
    s_samples: &[Complex64],
) -> Result<f64, OracleError> {
    if absorbed.len() != devices.len() || devices.len() != net.n {
        return Err(OracleError::DeviceCount { expected: net.n, found: devices.len() });
    }
    let mut order: Vec<usize> = (0..net.n).filter(|&i| !absorbed[i]).collect();
    let k1 = order.len();
    order.extend((0..net.n).filter(|&i| absorbed[i]));
    let permuted: Vec<DeviceAdmittance> = order.iter().map(|&i| devices[i].clone()).collect();
    let mut worst = 0.0f64;
    for &s in s_samples {
        let yg = permute_blocks(&grid_at(net, s)?, &order);
        let yc = devices_at(&permuted, s)?;
        let n2 = 2 * net.n;
        let eye = DMatrix::<Complex64>::identity(n2, n2);
        let yg_inv = yg.clone().lu().try_inverse().ok_or(OracleError::Singular { s })?;
        let lhs = (&yc * &yg_inv + &eye).determinant();
        let det_yg_inv = yg_inv.determinant();

        let e1 = (&yc + &yg).determinant() * det_yg_inv;

        let a = 2 * k1;
        let yc1 = yc.view((0, 0), (a, a)).into_owned();
        let yc2 = yc.view((a, a), (n2 - a, n2 - a)).into_owned();
        let y4 = yg.view((a, a), (n2 - a, n2 - a)).into_owned();
        let blocks2: Vec<Matrix2<Complex64>> =
            (0..(n2 - a) / 2).map(|t| yc2.fixed_view::<2, 2>(2 * t, 2 * t).into_owned()).collect();
        let (ygc, _) = equivalent_network(&yg, &blocks2).ok_or(OracleError::Singular { s })?;
        let d24 = (&yc2 + &y4).determinant();
        let e2 = d24 * (&yc1 + &ygc).determinant() * det_yg_inv;

        let eye1 = DMatrix::<Complex64>::identity(a, a);
        let ygc_inv = ygc.clone().lu().try_inverse().ok_or(OracleError::Singular { s })?;
        let sub2 = (&yc1 * &ygc_inv + &eye1).determinant();
        let e3 = d24 * sub2 * ygc.determinant() * det_yg_inv;

        let mut pad = DMatrix::<Complex64>::zeros(n2, n2);
        pad.view_mut((a, a), (n2 - a, n2 - a)).copy_from(&yc2);
        let sub1 = (&pad * &yg_inv + &eye).determinant();
        let e4 = sub2 * sub1;

        let scale = lhs.norm().max(f64::MIN_POSITIVE);
        for e in [e1, e2, e3, e4] {
            worst = worst.max((e - lhs).norm() / scale);
        }
    }
    Ok(worst)
}

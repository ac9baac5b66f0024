use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::devmodel::{Complex64, DeviceAdmittance, DevError};
use crate::matphase::{phases, singular_values, MatrixSample, Verdict, MARGIN_EPS};
use crate::network::{self, f_inv, permute_blocks, schur_complement, NetError, NetworkModel, Rescaling, COND_LIMIT};

use super::CriteriaError;

/// Gain and phase summary of one matrix at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPhase {
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// `(φ̲, φ̄)`; `None` when the matrix is not sectorial.
    pub phi: Option<(f64, f64)>,
}

impl GainPhase {
    pub fn of(m: DMatrix<Complex64>) -> Result<Self, CriteriaError> {
        let s = MatrixSample::new(m)?;
        let g = singular_values(&s);
        let p = phases(&s)?;
        Ok(Self { sigma_max: g.max(), sigma_min: g.min(), phi: p.interval() })
    }

    pub fn sectorial(&self) -> bool {
        self.phi.is_some()
    }
}

/// `Ỹ_C,i(jω) = D_i Y_C,i(jω) F̃_ε̃(jω)⁻¹`, in the device's local frame (the
/// rotation to the global frame is a unitary similarity commuting with `F̃`).
pub fn rescaled_device_response(
    d: &DeviceAdmittance,
    d_i: f64,
    eps_tilde: f64,
    omega: f64,
    omega0: f64,
) -> Result<Matrix2<Complex64>, DevError> {
    let y = d.eval(omega)?;
    Ok(y * f_inv(omega, omega0, eps_tilde) * Complex64::new(d_i, 0.0))
}

/// Device response at a sweep point; tabulated devices are clamped to their
/// largest sample at the infinity surrogate.
pub(crate) fn device_at(
    d: &DeviceAdmittance,
    d_i: f64,
    eps_tilde: f64,
    omega: f64,
    omega0: f64,
    is_infinity: bool,
) -> Result<Matrix2<Complex64>, DevError> {
    let (_, hi) = d.omega_range();
    let w = if is_infinity && omega > hi { hi } else { omega };
    let y = d.eval(w)?;
    Ok(y * f_inv(omega, omega0, eps_tilde) * Complex64::new(d_i, 0.0))
}

pub fn device_sample(
    d: &DeviceAdmittance,
    d_i: f64,
    eps_tilde: f64,
    omega: f64,
    omega0: f64,
) -> Result<GainPhase, CriteriaError> {
    let y = rescaled_device_response(d, d_i, eps_tilde, omega, omega0)?;
    GainPhase::of(DMatrix::from_iterator(2, 2, y.iter().copied()))
}

/// Network seen by the checked devices at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetSample {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Phase area `[−π − φ̲(Ỹ⁻¹), π − φ̄(Ỹ⁻¹)]`; `None` if `Ỹ` is not sectorial.
    pub area: Option<(f64, f64)>,
    /// Worst condition estimate of the matrices solved to form the sample.
    pub cond: f64,
}

impl NetSample {
    /// The area is fixed at `[−π, π]` and the gain at `gscr`.
    pub fn constant(gscr: f64) -> Self {
        Self { sigma_min: gscr, sigma_max: gscr, area: Some((-PI, PI)), cond: 1.0 }
    }

    pub fn reliable(&self) -> bool {
        self.cond <= COND_LIMIT
    }

    pub fn from_matrix(y: DMatrix<Complex64>, cond: f64) -> Result<Self, CriteriaError> {
        let n = y.nrows();
        let gp = GainPhase::of(y.clone())?;
        let area = if gp.sectorial() {
            let inv = y.lu().try_inverse();
            match inv {
                Some(inv) => {
                    let ip = phases(&MatrixSample::new(inv)?)?;
                    ip.interval().map(|(lo, hi)| (-PI - lo, PI - hi))
                }
                None => None,
            }
        } else {
            None
        };
        debug_assert!(n > 0);
        Ok(Self { sigma_min: gp.sigma_min, sigma_max: gp.sigma_max, area, cond })
    }
}

/// Which part of the system the checked devices see.
#[derive(Debug, Clone)]
pub enum NetworkView {
    /// The grid on the node subset `keep` (device indices), with the nodes in
    /// `absorbed` closed by their devices' admittances and every other device
    /// node left open.
    Grid {
        net: NetworkModel<f64>,
        keep: Vec<usize>,
        absorbed: Vec<(usize, DeviceAdmittance)>,
        rescaling: Rescaling<f64>,
    },
    /// Identical-R/X network: constant gain `gscr` and area `[−π, π]`.
    Constant { gscr: f64, n: usize },
}

impl NetworkView {
    pub fn full(net: NetworkModel<f64>, rescaling: Rescaling<f64>) -> Self {
        let keep = (0..net.n).collect();
        Self::Grid { net, keep, absorbed: Vec::new(), rescaling }
    }

    pub fn dim(&self) -> usize {
        match self {
            NetworkView::Grid { keep, .. } => keep.len(),
            NetworkView::Constant { n, .. } => *n,
        }
    }

    pub fn omega0(&self) -> Option<f64> {
        match self {
            NetworkView::Grid { net, .. } => Some(net.omega0),
            NetworkView::Constant { .. } => None,
        }
    }

    /// The (unscaled) reduced matrix in the global frame, with its worst
    /// condition estimate.
    pub fn reduced(&self, omega: f64, is_infinity: bool) -> Result<(DMatrix<Complex64>, f64), CriteriaError> {
        let NetworkView::Grid { net, keep, absorbed, .. } = self else {
            return Err(CriteriaError::Grid("constant network has no matrix form".into()));
        };
        let (y, cond_grid) = network::grid_admittance(net, omega)?;
        let mut order = keep.clone();
        order.extend(absorbed.iter().map(|(i, _)| *i));
        let open: Vec<usize> = (0..net.n).filter(|i| !order.contains(i)).collect();
        order.extend(open);
        let p = permute_blocks(&y, &order);
        let mut blocks = Vec::with_capacity(absorbed.len());
        for (_, d) in absorbed {
            let (_, hi) = d.omega_range();
            let w = if is_infinity && omega > hi { hi } else { omega };
            blocks.push(d.global_response(w)?);
        }
        let mut a = p;
        let k = keep.len();
        for (t, blk) in blocks.iter().enumerate() {
            let b = k + t;
            let mut v = a.fixed_view_mut::<2, 2>(2 * b, 2 * b);
            v += blk;
        }
        let (red, cond) = schur_complement(&a, 2 * k).ok_or(NetError::IllPosedInterior { omega })?;
        Ok((red, cond.max(cond_grid)))
    }

    pub fn sample(&self, omega: f64, is_infinity: bool) -> Result<NetSample, CriteriaError> {
        match self {
            NetworkView::Constant { gscr, .. } => Ok(NetSample::constant(*gscr)),
            NetworkView::Grid { net, keep, rescaling, .. } => {
                let (red, cond) = self.reduced(omega, is_infinity)?;
                let sc = rescaling.subset(keep);
                let yt = network::rescaled_grid(&red, &sc, omega, net.omega0)?;
                NetSample::from_matrix(yt, cond)
            }
        }
    }
}

/// Verdict at one frequency with the slack of every inequality involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub verdict: Verdict,
    /// `σ̲(Ỹ_grid) − max_i σ̄(Ỹ_C,i)`.
    pub gain_margin: f64,
    /// `π − φ̄(Ỹ⁻¹) − max_i φ̄_i`; NaN when a phase is unavailable.
    pub phase_margin_hi: f64,
    /// `min_i φ̲_i + π + φ̲(Ỹ⁻¹)`; NaN when a phase is unavailable.
    pub phase_margin_lo: f64,
    /// `π − (max_i φ̄_i − min_i φ̲_i)`; NaN when a phase is unavailable.
    pub phase_margin_width: f64,
}

/// The pointwise decentralized gain / phase test.
pub fn check_conditions(devices: &[GainPhase], net: &NetSample) -> Check {
    let eps = MARGIN_EPS;
    if devices.is_empty() {
        return Check {
            verdict: Verdict::GainOk,
            gain_margin: net.sigma_min,
            phase_margin_hi: f64::NAN,
            phase_margin_lo: f64::NAN,
            phase_margin_width: f64::NAN,
        };
    }
    let max_gain = devices.iter().map(|d| d.sigma_max).fold(0.0, f64::max);
    let gain_margin = net.sigma_min - max_gain;
    let intervals: Option<Vec<(f64, f64)>> = devices.iter().map(|d| d.phi).collect();
    let (hi, lo, width) = match (&intervals, net.area) {
        (Some(iv), Some((a_lo, a_hi))) => {
            let top = iv.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let bot = iv.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            (a_hi - top, bot - a_lo, PI - (top - bot))
        }
        _ => (f64::NAN, f64::NAN, f64::NAN),
    };
    let verdict = if gain_margin > eps {
        Verdict::GainOk
    } else if hi > eps && lo > eps && width > eps {
        Verdict::PhaseOk
    } else {
        Verdict::Undecided
    };
    Check { verdict, gain_margin, phase_margin_hi: hi, phase_margin_lo: lo, phase_margin_width: width }
}

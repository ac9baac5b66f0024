//! Grid-following converter: LCL filter, current PI in the PLL frame with
//! first-order capacitor-voltage feed-forward, active/reactive power PI
//! producing the current references, and an SRF-PLL on the capacitor voltage.
//! Power is measured at the terminal, behind the grid-side inductance.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::linearize::{damped_newton, linearize, Dynamics};
use super::statespace::{j_times, put, rotation, seg};
use super::{DevError, DeviceAdmittance, DeviceClass, OperatingPoint, Response};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PllVariant {
    #[default]
    Basic,
    /// Input normalized by the measured voltage magnitude; the rated frequency
    /// enters as a feed-forward term.
    NormalizedFf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GflParams {
    pub l_f: f64,
    pub c_f: f64,
    pub l_g: f64,
    pub kp_i: f64,
    pub ki_i: f64,
    pub t_vff: f64,
    pub kp_pq: f64,
    pub ki_pq: f64,
    /// PLL bandwidth (rad/s).
    pub pll_bw: f64,
    #[serde(default)]
    pub pll_variant: PllVariant,
}

impl Default for GflParams {
    fn default() -> Self {
        Self {
            l_f: 0.05,
            c_f: 0.06,
            l_g: 0.15,
            kp_i: 0.3,
            ki_i: 10.0,
            t_vff: 0.02,
            kp_pq: 0.5,
            ki_pq: 40.0,
            pll_bw: 40.0,
            pll_variant: PllVariant::Basic,
        }
    }
}

impl GflParams {
    pub fn validate(&self) -> Result<(), DevError> {
        for (name, v) in [("l_f", self.l_f), ("c_f", self.c_f), ("l_g", self.l_g), ("pll_bw", self.pll_bw), ("t_vff", self.t_vff)] {
            if !(v > 0.0) {
                return Err(DevError::InvalidParam { name, value: v });
            }
        }
        Ok(())
    }
}

pub const PLL_DAMPING: f64 = std::f64::consts::FRAC_1_SQRT_2;

const N: usize = 14;
const IF: usize = 0;
const VC: usize = 2;
const IG: usize = 4;
const DELTA: usize = 6;
const WPLL: usize = 7;
const XI: usize = 8;
const XPQ: usize = 10;
const VFF: usize = 12;

/// Nonlinear GFL model at fixed power references.
#[derive(Debug, Clone)]
pub struct GflModel {
    pub params: GflParams,
    pub p_ref: f64,
    pub q_ref: f64,
    pub omega0: f64,
    kp_pll: f64,
    ki_pll: f64,
}

impl GflModel {
    pub fn new(params: GflParams, op: &OperatingPoint) -> Self {
        let zeta = PLL_DAMPING;
        let wn = params.pll_bw;
        let v = match params.pll_variant {
            PllVariant::Basic => op.v0,
            PllVariant::NormalizedFf => 1.0,
        };
        Self {
            kp_pll: 2.0 * zeta * wn / v,
            ki_pll: wn * wn / v,
            params,
            p_ref: op.p0,
            q_ref: op.q0,
            omega0: op.omega0,
        }
    }

    /// Closed-form steady state for terminal voltage `u`, used as the Newton seed.
    fn seed(&self, u: &Vector2<f64>) -> DVector<f64> {
        let p = &self.params;
        let u2 = u.norm_squared();
        // P = u·i, Q = u_q i_d - u_d i_q
        let ig = Vector2::new(
            (self.p_ref * u[0] - self.q_ref * u[1]) / u2,
            (self.p_ref * u[1] + self.q_ref * u[0]) / u2,
        );
        let vc = u + j_times(&ig) * p.l_g;
        let i_f = ig + j_times(&vc) * p.c_f;
        let delta = vc[1].atan2(vc[0]);
        let rm = rotation(-delta);
        let vff = rm * vc;
        let iref = rm * i_f;
        let vconv = vc + j_times(&i_f) * p.l_f;
        let mut x = DVector::zeros(N);
        put(&mut x, IF, i_f);
        put(&mut x, VC, vc);
        put(&mut x, IG, ig);
        x[DELTA] = delta;
        put(&mut x, XI, rm * vconv - vff);
        put(&mut x, XPQ, Vector2::new(iref[0], -iref[1]));
        put(&mut x, VFF, vff);
        x
    }

    pub fn equilibrium(&self, u: &Vector2<f64>) -> Result<DVector<f64>, DevError> {
        damped_newton(|x| self.rhs(x, u), self.seed(u), 1e-11)
    }
}

impl Dynamics for GflModel {
    fn n_states(&self) -> usize {
        N
    }

    fn rhs(&self, x: &DVector<f64>, u: &Vector2<f64>) -> DVector<f64> {
        let p = &self.params;
        let w0 = self.omega0;
        let i_f = seg(x, IF);
        let vc = seg(x, VC);
        let ig = seg(x, IG);
        let delta = x[DELTA];
        let rm = rotation(-delta);

        let vc_pll = rm * vc;
        let vq = match p.pll_variant {
            PllVariant::Basic => vc_pll[1],
            PllVariant::NormalizedFf => vc_pll[1] / vc.norm().max(1e-9),
        };

        let pe = u.dot(&ig);
        let qe = u[1] * ig[0] - u[0] * ig[1];
        let ep = self.p_ref - pe;
        let eq = self.q_ref - qe;
        let xpq = seg(x, XPQ);
        let iref = Vector2::new(p.kp_pq * ep + xpq[0], -(p.kp_pq * eq + xpq[1]));
        let ei = iref - rm * i_f;
        let vref = ei * p.kp_i + seg(x, XI) + seg(x, VFF);
        let vconv = rotation(delta) * vref;

        let mut dx = DVector::zeros(N);
        put(&mut dx, IF, (vconv - vc - j_times(&i_f) * p.l_f) * (w0 / p.l_f));
        put(&mut dx, VC, (i_f - ig - j_times(&vc) * p.c_f) * (w0 / p.c_f));
        put(&mut dx, IG, (vc - u - j_times(&ig) * p.l_g) * (w0 / p.l_g));
        dx[DELTA] = self.kp_pll * vq + x[WPLL];
        dx[WPLL] = self.ki_pll * vq;
        put(&mut dx, XI, ei * p.ki_i);
        put(&mut dx, XPQ, Vector2::new(ep, eq) * p.ki_pq);
        put(&mut dx, VFF, (vc_pll - seg(x, VFF)) / p.t_vff);
        dx
    }

    fn absorbed_current(&self, x: &DVector<f64>, _u: &Vector2<f64>) -> Vector2<f64> {
        -seg(x, IG)
    }
}

pub fn gfl_admittance(
    id: impl Into<String>,
    params: &GflParams,
    op: &OperatingPoint,
) -> Result<DeviceAdmittance, DevError> {
    params.validate()?;
    op.validate()?;
    let model = GflModel::new(params.clone(), op);
    let u = op.terminal_voltage();
    let x = model.equilibrium(&u)?;
    let ss = linearize(&model, &x, &u)?;
    Ok(DeviceAdmittance::new(
        id,
        DeviceClass::Gfl,
        1.0,
        op.theta,
        Response::StateSpace(ss),
    ).with_omega0(op.omega0))
}

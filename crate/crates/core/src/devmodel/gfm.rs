//! Grid-forming converter synchronized by a virtual swing equation.
//!
//! The capacitor voltage is regulated in the virtual-rotor frame by a dq PI that
//! produces filter-current references (optionally with output-current
//! feed-forward); the inner current PI and voltage feed-forward match the GFL
//! converter. Active power is measured at the terminal.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::linearize::{damped_newton, linearize, Dynamics};
use super::statespace::{j_times, put, rotation, seg};
use super::{DevError, DeviceAdmittance, DeviceClass, OperatingPoint, Response};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfmParams {
    pub l_f: f64,
    pub c_f: f64,
    pub l_g: f64,
    pub kp_i: f64,
    pub ki_i: f64,
    pub t_vff: f64,
    pub kp_v: f64,
    pub ki_v: f64,
    /// Virtual inertia `J_v` (s).
    pub j_v: f64,
    /// Damping `D_v` (pu power per pu frequency).
    pub d_v: f64,
    /// Add the measured output current to the filter-current reference.
    #[serde(default = "yes")]
    pub current_feedforward: bool,
}

fn yes() -> bool {
    true
}

impl Default for GfmParams {
    fn default() -> Self {
        Self {
            l_f: 0.05,
            c_f: 0.06,
            l_g: 0.15,
            kp_i: 0.3,
            ki_i: 10.0,
            t_vff: 0.02,
            kp_v: 2.0,
            ki_v: 10.0,
            j_v: 2.0,
            d_v: 50.0,
            current_feedforward: true,
        }
    }
}

impl GfmParams {
    pub fn validate(&self) -> Result<(), DevError> {
        for (name, v) in [
            ("l_f", self.l_f),
            ("c_f", self.c_f),
            ("l_g", self.l_g),
            ("t_vff", self.t_vff),
            ("j_v", self.j_v),
            ("d_v", self.d_v),
        ] {
            if !(v > 0.0) {
                return Err(DevError::InvalidParam { name, value: v });
            }
        }
        Ok(())
    }
}

const N: usize = 14;
const IF: usize = 0;
const VC: usize = 2;
const IG: usize = 4;
const DELTA: usize = 6;
const DW: usize = 7;
const XV: usize = 8;
const XI: usize = 10;
const VFF: usize = 12;

#[derive(Debug, Clone)]
pub struct GfmModel {
    pub params: GfmParams,
    pub p_ref: f64,
    /// Capacitor-voltage magnitude reference, fixed by the equilibrium solve.
    pub v_ref: f64,
    pub omega0: f64,
}

impl GfmModel {
    fn seed(&self, u: &Vector2<f64>, q0: f64) -> DVector<f64> {
        let p = &self.params;
        let u2 = u.norm_squared();
        let ig = Vector2::new(
            (self.p_ref * u[0] - q0 * u[1]) / u2,
            (self.p_ref * u[1] + q0 * u[0]) / u2,
        );
        let vc = u + j_times(&ig) * p.l_g;
        let i_f = ig + j_times(&vc) * p.c_f;
        let delta = vc[1].atan2(vc[0]);
        let rm = rotation(-delta);
        let vcl = rm * vc;
        let vconv = vc + j_times(&i_f) * p.l_f;
        let ff = if p.current_feedforward { rm * ig } else { Vector2::zeros() };
        let mut x = DVector::zeros(N + 1);
        put(&mut x, IF, i_f);
        put(&mut x, VC, vc);
        put(&mut x, IG, ig);
        x[DELTA] = delta;
        put(&mut x, XV, rm * i_f - ff);
        put(&mut x, XI, rm * vconv - vcl);
        put(&mut x, VFF, vcl);
        x[N] = vc.norm();
        x
    }
}

impl Dynamics for GfmModel {
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
        let dw = x[DW];
        let rm = rotation(-delta);
        let vcl = rm * vc;

        let pe = u.dot(&ig);
        let ev = Vector2::new(self.v_ref - vcl[0], -vcl[1]);
        let ff = if p.current_feedforward { rm * ig } else { Vector2::zeros() };
        let if_ref = ev * p.kp_v + seg(x, XV) + ff;
        let ei = if_ref - rm * i_f;
        let vref = ei * p.kp_i + seg(x, XI) + seg(x, VFF);
        let vconv = rotation(delta) * vref;

        let mut dx = DVector::zeros(N);
        put(&mut dx, IF, (vconv - vc - j_times(&i_f) * p.l_f) * (w0 / p.l_f));
        put(&mut dx, VC, (i_f - ig - j_times(&vc) * p.c_f) * (w0 / p.c_f));
        put(&mut dx, IG, (vc - u - j_times(&ig) * p.l_g) * (w0 / p.l_g));
        dx[DELTA] = w0 * dw;
        dx[DW] = (self.p_ref - pe - p.d_v * dw) / p.j_v;
        put(&mut dx, XV, ev * p.ki_v);
        put(&mut dx, XI, ei * p.ki_i);
        put(&mut dx, VFF, (vcl - seg(x, VFF)) / p.t_vff);
        dx
    }

    fn absorbed_current(&self, x: &DVector<f64>, _u: &Vector2<f64>) -> Vector2<f64> {
        -seg(x, IG)
    }
}

/// Builds the GFM model with its voltage reference chosen so that the
/// terminal reactive power equals `op.q0`.
pub fn gfm_model(params: &GfmParams, op: &OperatingPoint) -> Result<(GfmModel, DVector<f64>), DevError> {
    params.validate()?;
    op.validate()?;
    let u = op.terminal_voltage();
    let proto = GfmModel {
        params: params.clone(),
        p_ref: op.p0,
        v_ref: 1.0,
        omega0: op.omega0,
    };
    let z0 = proto.seed(&u, op.q0);
    let z = damped_newton(
        |z| {
            let m = GfmModel { v_ref: z[N], ..proto.clone() };
            let x = z.rows(0, N).into_owned();
            let ig = seg(&x, IG);
            let q = u[1] * ig[0] - u[0] * ig[1];
            let mut r = DVector::zeros(N + 1);
            r.rows_mut(0, N).copy_from(&m.rhs(&x, &u));
            r[N] = q - op.q0;
            r
        },
        z0,
        1e-11,
    )?;
    let model = GfmModel { v_ref: z[N], ..proto };
    Ok((model, z.rows(0, N).into_owned()))
}

pub fn gfm_admittance(
    id: impl Into<String>,
    params: &GfmParams,
    op: &OperatingPoint,
) -> Result<DeviceAdmittance, DevError> {
    let (model, x) = gfm_model(params, op)?;
    let ss = linearize(&model, &x, &op.terminal_voltage())?;
    Ok(DeviceAdmittance::new(id, DeviceClass::Gfm, 1.0, op.theta, Response::StateSpace(ss)).with_omega0(op.omega0))
}

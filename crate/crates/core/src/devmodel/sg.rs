//! Synchronous generator: sixth-order machine with stator flux dynamics in
//! the rotor frame, IEEEG1-style steam governor and IEEET1-style exciter with rate
//! feedback. Machine quantities are on the machine base.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::linearize::{damped_newton, linearize, Dynamics};
use super::statespace::{j_times, put, rotation, seg};
use super::{DevError, DeviceAdmittance, DeviceClass, OperatingPoint, Response};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgParams {
    /// Inertia constant `2H` (s).
    pub j_sg: f64,
    pub x_d: f64,
    pub x_q: f64,
    pub x_d1: f64,
    pub x_q1: f64,
    pub x_d2: f64,
    pub x_q2: f64,
    /// Armature resistance; damps the stator flux (DC-offset) mode.
    #[serde(default = "default_r_a")]
    pub r_a: f64,
    /// Open-circuit transient and subtransient time constants (s).
    pub t_d1: f64,
    pub t_q1: f64,
    pub t_d2: f64,
    pub t_q2: f64,
    pub governor: GovernorParams,
    pub exciter: ExciterParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernorParams {
    /// Speed-error gain (inverse droop).
    pub k_droop: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
    pub t6: f64,
    pub t7: f64,
    /// Valve servo loop gain.
    pub k: f64,
    pub k1: f64,
    pub k3: f64,
    pub k5: f64,
    pub k7: f64,
    #[serde(default = "enabled")]
    pub enabled: bool,
}

fn default_r_a() -> f64 {
    0.003
}

fn enabled() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExciterParams {
    pub k_a: f64,
    pub t_a: f64,
    pub k_f: f64,
    pub t_f: f64,
    pub t_r: f64,
}

impl Default for SgParams {
    fn default() -> Self {
        Self {
            j_sg: 10.39,
            x_d: 1.81,
            x_q: 1.76,
            x_d1: 0.3,
            x_q1: 0.65,
            x_d2: 0.23,
            x_q2: 0.25,
            r_a: default_r_a(),
            t_d1: 8.0,
            t_q1: 1.0,
            t_d2: 0.03,
            t_q2: 0.07,
            governor: GovernorParams {
                k_droop: 8.0,
                t1: 0.5,
                t2: 1.0,
                t3: 0.6,
                t4: 0.6,
                t5: 0.5,
                t6: 0.8,
                t7: 1.0,
                k: 5.0,
                k1: 0.3,
                k3: 0.25,
                k5: 0.3,
                k7: 0.15,
                enabled: true,
            },
            exciter: ExciterParams {
                k_a: 15.0,
                t_a: 0.05,
                k_f: 0.0057,
                t_f: 0.5,
                t_r: 0.1,
            },
        }
    }
}

impl SgParams {
    pub fn validate(&self) -> Result<(), DevError> {
        let g = &self.governor;
        let e = &self.exciter;
        for (name, v) in [
            ("j_sg", self.j_sg),
            ("x_d2", self.x_d2),
            ("x_q2", self.x_q2),
            ("t_d1", self.t_d1),
            ("t_q1", self.t_q1),
            ("t_d2", self.t_d2),
            ("t_q2", self.t_q2),
            ("governor.t1", g.t1),
            ("governor.t3", g.t3),
            ("governor.t4", g.t4),
            ("governor.t5", g.t5),
            ("governor.t6", g.t6),
            ("governor.t7", g.t7),
            ("exciter.t_a", e.t_a),
            ("exciter.t_f", e.t_f),
            ("exciter.t_r", e.t_r),
        ] {
            if !(v > 0.0) {
                return Err(DevError::InvalidParam { name, value: v });
            }
        }
        if !(self.r_a >= 0.0) {
            return Err(DevError::InvalidParam { name: "r_a", value: self.r_a });
        }
        Ok(())
    }
}

const N: usize = 17;
const I: usize = 0;
const DELTA: usize = 2;
const DW: usize = 3;
const EQ1: usize = 4;
const ED1: usize = 5;
const EQ2: usize = 6;
const ED2: usize = 7;
const XLL: usize = 8;
const PGV: usize = 9;
const X4: usize = 10;
const VM: usize = 14;
const EFD: usize = 15;
const ZF: usize = 16;

#[derive(Debug, Clone)]
pub struct SgModel {
    pub params: SgParams,
    pub p_ref: f64,
    pub v_ref: f64,
    pub omega0: f64,
}

impl SgModel {
    fn seed(&self, u: &Vector2<f64>, q0: f64) -> DVector<f64> {
        let p = &self.params;
        let u2 = u.norm_squared();
        let i = Vector2::new(
            (self.p_ref * u[0] - q0 * u[1]) / u2,
            (self.p_ref * u[1] + q0 * u[0]) / u2,
        );
        let e_q = u + i * p.r_a + j_times(&i) * p.x_q;
        let delta = e_q[1].atan2(e_q[0]) - std::f64::consts::FRAC_PI_2;
        let ir = rotation(-delta) * i;
        let vr = rotation(-delta) * u;
        let e2 = Vector2::new(
            vr[0] + p.r_a * ir[0] - p.x_q2 * ir[1],
            vr[1] + p.r_a * ir[1] + p.x_d2 * ir[0],
        );
        let ed1 = (p.x_q - p.x_q1) * ir[1];
        let eq1 = e2[1] + (p.x_d1 - p.x_d2) * ir[0];
        let efd = eq1 + (p.x_d - p.x_d1) * ir[0];
        let mut x = DVector::zeros(N + 2);
        put(&mut x, I, ir);
        x[DELTA] = delta;
        x[EQ1] = eq1;
        x[ED1] = ed1;
        x[EQ2] = e2[1];
        x[ED2] = e2[0];
        x[PGV] = self.p_ref;
        for k in 0..4 {
            x[X4 + k] = self.p_ref;
        }
        x[VM] = u.norm();
        x[EFD] = efd;
        x[ZF] = efd;
        x[N] = u.norm() + efd / p.exciter.k_a;
        x[N + 1] = self.p_ref + p.r_a * i.norm_squared();
        x
    }
}

impl Dynamics for SgModel {
    fn n_states(&self) -> usize {
        N
    }

    fn rhs(&self, x: &DVector<f64>, u: &Vector2<f64>) -> DVector<f64> {
        let p = &self.params;
        let g = &p.governor;
        let e = &p.exciter;
        let w0 = self.omega0;
        let ir = seg(x, I);
        let delta = x[DELTA];
        let dw = x[DW];
        let (id, iq) = (ir[0], ir[1]);
        let vr = rotation(-delta) * u;

        // stator flux linkages in the rotor frame
        let psi = Vector2::new(x[EQ2] - p.x_d2 * id, -x[ED2] - p.x_q2 * iq);
        let dpsi = (vr + ir * p.r_a - j_times(&psi) * (1.0 + dw)) * w0;
        let pe = psi[0] * iq - psi[1] * id;
        let speed_err = -dw;
        let ll_in = speed_err;
        let lead = g.t2 / g.t1;
        let ll_out = lead * ll_in + (1.0 - lead) * x[XLL];
        let signal = if g.enabled { g.k_droop * ll_out } else { 0.0 };
        let pm = g.k1 * x[X4] + g.k3 * x[X4 + 1] + g.k5 * x[X4 + 2] + g.k7 * x[X4 + 3];

        let vf = e.k_f / e.t_f * (x[EFD] - x[ZF]);

        let mut dx = DVector::zeros(N);
        dx[DELTA] = w0 * dw;
        dx[DW] = (pm - pe) / p.j_sg;
        dx[EQ1] = (x[EFD] - x[EQ1] - (p.x_d - p.x_d1) * id) / p.t_d1;
        dx[ED1] = (-x[ED1] + (p.x_q - p.x_q1) * iq) / p.t_q1;
        dx[EQ2] = (x[EQ1] - x[EQ2] - (p.x_d1 - p.x_d2) * id) / p.t_d2;
        dx[ED2] = (x[ED1] - x[ED2] + (p.x_q1 - p.x_q2) * iq) / p.t_q2;
        dx[I] = (dx[EQ2] - dpsi[0]) / p.x_d2;
        dx[I + 1] = (-dx[ED2] - dpsi[1]) / p.x_q2;
        dx[XLL] = (ll_in - x[XLL]) / g.t1;
        dx[PGV] = g.k * (self.p_ref + signal - x[PGV]) / g.t3;
        dx[X4] = (x[PGV] - x[X4]) / g.t4;
        dx[X4 + 1] = (x[X4] - x[X4 + 1]) / g.t5;
        dx[X4 + 2] = (x[X4 + 1] - x[X4 + 2]) / g.t6;
        dx[X4 + 3] = (x[X4 + 2] - x[X4 + 3]) / g.t7;
        dx[VM] = (u.norm() - x[VM]) / e.t_r;
        dx[EFD] = (e.k_a * (self.v_ref - x[VM] - vf) - x[EFD]) / e.t_a;
        dx[ZF] = (x[EFD] - x[ZF]) / e.t_f;
        dx
    }

    fn absorbed_current(&self, x: &DVector<f64>, _u: &Vector2<f64>) -> Vector2<f64> {
        -(rotation(x[DELTA]) * seg(x, I))
    }
}

pub fn sg_model(params: &SgParams, op: &OperatingPoint) -> Result<(SgModel, DVector<f64>), DevError> {
    params.validate()?;
    op.validate()?;
    let u = op.terminal_voltage();
    let proto = SgModel {
        params: params.clone(),
        p_ref: op.p0,
        v_ref: 1.0,
        omega0: op.omega0,
    };
    let z0 = proto.seed(&u, op.q0);
    let z = damped_newton(
        |z| {
            let m = SgModel { v_ref: z[N], p_ref: z[N + 1], ..proto.clone() };
            let x = z.rows(0, N).into_owned();
            let i = rotation(x[DELTA]) * seg(&x, I);
            let mut r = DVector::zeros(N + 2);
            r.rows_mut(0, N).copy_from(&m.rhs(&x, &u));
            r[N] = u[1] * i[0] - u[0] * i[1] - op.q0;
            r[N + 1] = u.dot(&i) - op.p0;
            r
        },
        z0,
        1e-11,
    )?;
    let model = SgModel { v_ref: z[N], p_ref: z[N + 1], ..proto };
    Ok((model, z.rows(0, N).into_owned()))
}

pub fn sg_admittance(
    id: impl Into<String>,
    params: &SgParams,
    op: &OperatingPoint,
) -> Result<DeviceAdmittance, DevError> {
    let (model, x) = sg_model(params, op)?;
    let ss = linearize(&model, &x, &op.terminal_voltage())?;
    Ok(DeviceAdmittance::new(id, DeviceClass::Sg, 1.0, op.theta, Response::StateSpace(ss)).with_omega0(op.omega0))
}

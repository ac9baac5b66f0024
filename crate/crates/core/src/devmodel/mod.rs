//! Small-signal admittance models of grid-connected devices.

mod gfl;
mod gfm;
mod linearize;
mod sg;
mod statespace;
mod tabulated;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gfl::{gfl_admittance, GflModel, GflParams, PllVariant, PLL_DAMPING};
pub use gfm::{gfm_admittance, gfm_model, GfmModel, GfmParams};
pub use linearize::{damped_newton, linearize, Dynamics, EQUILIBRIUM_TOL, NEWTON_MAX_ITER};
pub use sg::{sg_admittance, sg_model, ExciterParams, GovernorParams, SgModel, SgParams};
pub use statespace::{jmat, rotation, Complex64, StateSpace};
pub use tabulated::{TabulatedResponse, CSV_HEADER};

pub const DEFAULT_OMEGA0: f64 = 2.0 * std::f64::consts::PI * 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DevError {
    #[error("jωI - A is singular at ω = {omega} rad/s")]
    SingularResolvent { omega: f64 },
    #[error("operating point is not an equilibrium (residual {residual:e})")]
    NotEquilibrium { residual: f64 },
    #[error("equilibrium solve did not converge (residual {residual:e})")]
    EquilibriumFailed { residual: f64 },
    #[error("invalid parameter `{name}` = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("frequency {freq_hz} Hz outside tabulated range [{lo}, {hi}] Hz")]
    OutOfRange { freq_hz: f64, lo: f64, hi: f64 },
    #[error("rescaling filter is singular at ω = {omega} rad/s")]
    SingularRescale { omega: f64 },
    #[error("admittance table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub v0: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub p0: f64,
    #[serde(default)]
    pub q0: f64,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
}

fn default_omega0() -> f64 {
    DEFAULT_OMEGA0
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self { v0: 1.0, theta: 0.0, p0: 1.0, q0: 0.0, omega0: DEFAULT_OMEGA0 }
    }
}

impl OperatingPoint {
    pub fn validate(&self) -> Result<(), DevError> {
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(DevError::InvalidParam { name: "v0", value: self.v0 });
        }
        if !(self.omega0 > 0.0 && self.omega0.is_finite()) {
            return Err(DevError::InvalidParam { name: "omega0", value: self.omega0 });
        }
        for (name, v) in [("theta", self.theta), ("p0", self.p0), ("q0", self.q0)] {
            if !v.is_finite() {
                return Err(DevError::InvalidParam { name, value: v });
            }
        }
        Ok(())
    }

    /// Terminal voltage in the device's local frame.
    pub fn terminal_voltage(&self) -> nalgebra::Vector2<f64> {
        nalgebra::Vector2::new(self.v0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceClass {
    Gfl,
    Gfm,
    Sg,
    Tabulated,
}

impl DeviceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceClass::Gfl => "gfl",
            DeviceClass::Gfm => "gfm",
            DeviceClass::Sg => "sg",
            DeviceClass::Tabulated => "tabulated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    StateSpace(StateSpace),
    Tabulated(TabulatedResponse),
}

/// A device's local per-unit admittance with its placement data.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceAdmittance {
    pub id: String,
    pub class: DeviceClass,
    /// Capacity ratio `S_i`.
    pub capacity: f64,
    pub theta: f64,
    pub omega0: f64,
    pub response: Response,
    /// Open-loop stability of a tabulated device, which cannot be inferred.
    pub declared_stable: Option<bool>,
}

impl DeviceAdmittance {
    pub fn new(id: impl Into<String>, class: DeviceClass, capacity: f64, theta: f64, response: Response) -> Self {
        Self {
            id: id.into(),
            class,
            capacity,
            theta,
            omega0: DEFAULT_OMEGA0,
            response,
            declared_stable: None,
        }
    }

    pub fn with_capacity(mut self, capacity: f64) -> Result<Self, DevError> {
        if !(capacity > 0.0 && capacity.is_finite()) {
            return Err(DevError::InvalidParam { name: "capacity", value: capacity });
        }
        self.capacity = capacity;
        Ok(self)
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_omega0(mut self, omega0: f64) -> Self {
        self.omega0 = omega0;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Local admittance `Y_C,i(jω)`.
    pub fn eval(&self, omega: f64) -> Result<Matrix2<Complex64>, DevError> {
        match &self.response {
            Response::StateSpace(ss) => ss.response(omega),
            Response::Tabulated(t) => t.at_omega(omega),
        }
    }

    pub fn state_space(&self) -> Option<&StateSpace> {
        match &self.response {
            Response::StateSpace(ss) => Some(ss),
            Response::Tabulated(_) => None,
        }
    }

    /// Whether the device alone has no right-half-plane poles; `None` when
    /// neither a realization nor a declaration is available.
    pub fn open_loop_stable(&self) -> Option<bool> {
        match &self.response {
            Response::StateSpace(ss) => Some(ss.max_real_eigenvalue() < 0.0),
            Response::Tabulated(_) => self.declared_stable,
        }
    }

    /// Frequency range over which the response is defined (rad/s).
    pub fn omega_range(&self) -> (f64, f64) {
        match &self.response {
            Response::StateSpace(_) => (0.0, f64::INFINITY),
            Response::Tabulated(t) => {
                let (lo, hi) = t.range_hz();
                let k = 2.0 * std::f64::consts::PI;
                (lo * k, hi * k)
            }
        }
    }

    /// Global-frame response `S_i e^{Jθ} Y(jω) e^{-Jθ}`.
    pub fn global_response(&self, omega: f64) -> Result<Matrix2<Complex64>, DevError> {
        let y = self.eval(omega)?;
        Ok(rotate_matrix(&y, self.theta) * Complex64::new(self.capacity, 0.0))
    }
}

fn rotate_matrix(y: &Matrix2<Complex64>, theta: f64) -> Matrix2<Complex64> {
    let r = rotation(theta).map(|v| Complex64::new(v, 0.0));
    let rt = rotation(-theta).map(|v| Complex64::new(v, 0.0));
    r * y * rt
}

/// The same device expressed in the global frame and system base: the
/// returned admittance has unit capacity and zero angle.
pub fn rotate_to_global(d: &DeviceAdmittance) -> DeviceAdmittance {
    let response = match &d.response {
        Response::StateSpace(ss) => Response::StateSpace(ss.rotated_scaled(d.theta, d.capacity)),
        Response::Tabulated(t) => {
            let s = Complex64::new(d.capacity, 0.0);
            Response::Tabulated(t.map(|y| rotate_matrix(y, d.theta) * s))
        }
    };
    DeviceAdmittance {
        capacity: 1.0,
        theta: 0.0,
        response,
        ..d.clone()
    }
}

/// `F̃_ε(jω)⁻¹ = (jω/ω₀ + ε̃) I + J`.
pub fn f_inv(omega: f64, omega0: f64, eps: f64) -> Matrix2<Complex64> {
    let a = Complex64::new(eps, omega / omega0);
    let one = Complex64::new(1.0, 0.0);
    Matrix2::new(a, -one, one, a)
}

/// `F̃_ε(jω)`, failing where `ε̃ = 0` and `ω = ±ω₀`.
pub fn f_eps(omega: f64, omega0: f64, eps: f64) -> Result<Matrix2<Complex64>, DevError> {
    let a = Complex64::new(eps, omega / omega0);
    let det = a * a + 1.0;
    if det.norm() <= 1e-12 * (1.0 + a.norm_sqr()) {
        return Err(DevError::SingularRescale { omega });
    }
    let one = Complex64::new(1.0, 0.0);
    Ok(Matrix2::new(a, one, -one, a) / det)
}

/// `Ỹ_C,i(jω) = D_i Y_C,i(jω) F̃_ε(jω)⁻¹`, on the device's local response.
pub fn rescale_device(
    d: &DeviceAdmittance,
    d_i: f64,
    eps_tilde: f64,
    omega: f64,
) -> Result<Matrix2<Complex64>, DevError> {
    if !(d_i > 0.0 && d_i.is_finite()) {
        return Err(DevError::InvalidParam { name: "D_i", value: d_i });
    }
    let y = d.eval(omega)?;
    Ok(y * f_inv(omega, d.omega0, eps_tilde) * Complex64::new(d_i, 0.0))
}

pub fn load_tabulated(
    id: impl Into<String>,
    samples: Vec<(f64, Matrix2<Complex64>)>,
) -> Result<DeviceAdmittance, DevError> {
    let t = TabulatedResponse::new(samples)?;
    Ok(DeviceAdmittance::new(id, DeviceClass::Tabulated, 1.0, 0.0, Response::Tabulated(t)))
}

#[cfg(test)]
mod tests;

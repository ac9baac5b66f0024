use nalgebra::{DMatrix, DVector, Vector2};

use super::statespace::StateSpace;
use super::DevError;

/// Largest equilibrium residual accepted before linearizing.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
/// Iteration cap of the damped Newton equilibrium solve.
pub const NEWTON_MAX_ITER: usize = 50;

/// Nonlinear device seen from its terminal: states driven by the terminal
/// voltage `u` (local dq, per unit), producing the current drawn from the node.
pub trait Dynamics {
    fn n_states(&self) -> usize;
    fn rhs(&self, x: &DVector<f64>, u: &Vector2<f64>) -> DVector<f64>;
    fn absorbed_current(&self, x: &DVector<f64>, u: &Vector2<f64>) -> Vector2<f64>;
}

fn step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

/// Central-difference Jacobians at an equilibrium.
pub fn linearize(
    model: &dyn Dynamics,
    x0: &DVector<f64>,
    u0: &Vector2<f64>,
) -> Result<StateSpace, DevError> {
    let n = model.n_states();
    let r0 = model.rhs(x0, u0);
    let residual = r0.amax();
    if !(residual < EQUILIBRIUM_TOL) {
        return Err(DevError::NotEquilibrium { residual });
    }
    let mut a = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(2, n);
    for k in 0..n {
        let h = step(x0[k]);
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (model.rhs(&xp, u0) - model.rhs(&xm, u0)) / (2.0 * h);
        a.set_column(k, &col);
        let out = (model.absorbed_current(&xp, u0) - model.absorbed_current(&xm, u0)) / (2.0 * h);
        c[(0, k)] = out[0];
        c[(1, k)] = out[1];
    }
    let mut b = DMatrix::zeros(n, 2);
    let mut d = DMatrix::zeros(2, 2);
    for k in 0..2 {
        let h = step(u0[k]);
        let mut up = *u0;
        let mut um = *u0;
        up[k] += h;
        um[k] -= h;
        let col = (model.rhs(x0, &up) - model.rhs(x0, &um)) / (2.0 * h);
        b.set_column(k, &col);
        let out = (model.absorbed_current(x0, &up) - model.absorbed_current(x0, &um)) / (2.0 * h);
        d[(0, k)] = out[0];
        d[(1, k)] = out[1];
    }
    Ok(StateSpace::new(a, b, c, d))
}

/// Damped Newton iteration on `f(z) = 0` with a finite-difference Jacobian.
pub fn damped_newton(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    z0: DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>, DevError> {
    let mut z = z0;
    let n = z.len();
    let mut r = f(&z);
    let mut norm = r.amax();
    for _ in 0..NEWTON_MAX_ITER {
        if norm < tol {
            return Ok(z);
        }
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let h = 1e-7 * z[k].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            jac.set_column(k, &((f(&zp) - f(&zm)) / (2.0 * h)));
        }
        let dz = jac
            .lu()
            .solve(&(-&r))
            .ok_or(DevError::EquilibriumFailed { residual: norm })?;
        let mut lambda = 1.0;
        loop {
            let trial = &z + &dz * lambda;
            let rt = f(&trial);
            let nt = rt.amax();
            if nt < norm || lambda < 1e-4 {
                z = trial;
                r = rt;
                norm = nt;
                break;
            }
            lambda *= 0.5;
        }
        if !norm.is_finite() {
            break;
        }
    }
    if norm < tol {
        Ok(z)
    } else {
        Err(DevError::EquilibriumFailed { residual: norm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Cubic;

    impl Dynamics for Cubic {
        fn n_states(&self) -> usize {
            1
        }
        fn rhs(&self, x: &DVector<f64>, u: &Vector2<f64>) -> DVector<f64> {
            DVector::from_element(1, -x[0] * x[0] * x[0] + u[0])
        }
        fn absorbed_current(&self, x: &DVector<f64>, u: &Vector2<f64>) -> Vector2<f64> {
            Vector2::new(2.0 * x[0], 0.5 * u[1])
        }
    }

    #[test]
    fn jacobians_of_cubic() {
        let x = DVector::from_element(1, 2.0);
        let u = Vector2::new(8.0, 1.0);
        let ss = linearize(&Cubic, &x, &u).unwrap();
        assert!((ss.a[(0, 0)] + 12.0).abs() < 1e-6);
        assert!((ss.b[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((ss.c[(0, 0)] - 2.0).abs() < 1e-9);
        assert!((ss.d[(1, 1)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_equilibrium() {
        let x = DVector::from_element(1, 1.0);
        let u = Vector2::new(8.0, 0.0);
        assert!(matches!(
            linearize(&Cubic, &x, &u),
            Err(DevError::NotEquilibrium { .. })
        ));
    }

    #[test]
    fn newton_finds_root_and_reports_failure() {
        let z = damped_newton(|z| DVector::from_element(1, z[0] * z[0] - 2.0), DVector::from_element(1, 1.0), 1e-12).unwrap();
        assert!((z[0] - 2f64.sqrt()).abs() < 1e-10);
        let err = damped_newton(|z| DVector::from_element(1, z[0] * z[0] + 1.0), DVector::from_element(1, 1.0), 1e-12);
        assert!(matches!(err, Err(DevError::EquilibriumFailed { .. })));
    }
}

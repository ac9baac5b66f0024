use nalgebra::{Complex, DMatrix, DVector, Matrix2, Vector2};

use super::DevError;

pub type Complex64 = Complex<f64>;

/// Linear model `dx/dt = A x + B u`, `y = C x + D u` with two inputs (terminal
/// voltage, d and q) and two outputs (current drawn from the terminal).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Self {
        let n = a.nrows();
        assert_eq!(a.ncols(), n, "A must be square");
        assert_eq!(b.shape(), (n, 2), "B must be n x 2");
        assert_eq!(c.shape(), (2, n), "C must be 2 x n");
        assert_eq!(d.shape(), (2, 2), "D must be 2 x 2");
        Self { a, b, c, d }
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    /// `C (jωI - A)⁻¹ B + D`.
    pub fn response(&self, omega: f64) -> Result<Matrix2<Complex64>, DevError> {
        let n = self.n_states();
        let d = self.d.map(|v| Complex64::new(v, 0.0));
        if n == 0 {
            return Ok(Matrix2::from_iterator(d.iter().copied()));
        }
        let jw = Complex64::new(0.0, omega);
        let m = DMatrix::from_fn(n, n, |r, c| {
            let diag = if r == c { jw } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(r, c)]
        });
        let rhs = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m
            .lu()
            .solve(&rhs)
            .ok_or(DevError::SingularResolvent { omega })?;
        let y = self.c.map(|v| Complex64::new(v, 0.0)) * x + d;
        if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DevError::SingularResolvent { omega });
        }
        Ok(Matrix2::from_iterator(y.iter().copied()))
    }

    /// `C (sI - A)⁻¹ B + D` at a complex `s`; `None` when `s` is a pole.
    pub fn response_at(&self, s: Complex64) -> Option<Matrix2<Complex64>> {
        let n = self.n_states();
        let d = self.d.map(|v| Complex64::new(v, 0.0));
        if n == 0 {
            return Some(Matrix2::from_iterator(d.iter().copied()));
        }
        let m = DMatrix::from_fn(n, n, |r, c| if r == c { s - self.a[(r, c)] } else { Complex64::new(-self.a[(r, c)], 0.0) });
        let x = m.lu().solve(&self.b.map(|v| Complex64::new(v, 0.0)))?;
        let y = self.c.map(|v| Complex64::new(v, 0.0)) * x + d;
        Some(Matrix2::from_iterator(y.iter().copied()))
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        if self.n_states() == 0 {
            return Vec::new();
        }
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    pub fn max_real_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Realization of `S·R(θ)·Y(s)·R(-θ)` where `R` is the planar rotation.
    pub fn rotated_scaled(&self, theta: f64, scale: f64) -> StateSpace {
        let r = rotation(theta);
        let rt = rotation(-theta);
        let b = &self.b * DMatrix::from_iterator(2, 2, rt.iter().copied());
        let rs = DMatrix::from_iterator(2, 2, r.iter().copied()) * scale;
        let c = &rs * &self.c;
        let d = &rs * &self.d * DMatrix::from_iterator(2, 2, rt.iter().copied());
        StateSpace::new(self.a.clone(), b, c, d)
    }
}

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// `J = [[0, -1], [1, 0]]`.
pub fn jmat() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

pub(crate) fn j_times(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v[1], v[0])
}

pub(crate) fn seg(x: &DVector<f64>, i: usize) -> Vector2<f64> {
    Vector2::new(x[i], x[i + 1])
}

pub(crate) fn put(dx: &mut DVector<f64>, i: usize, v: Vector2<f64>) {
    dx[i] = v[0];
    dx[i + 1] = v[1];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_response() {
        // dx = -x + u_d ; y_d = x
        let ss = StateSpace::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::zeros(2, 2),
        );
        let y = ss.response(2.0).unwrap();
        let expect = Complex64::new(1.0, 0.0) / Complex64::new(1.0, 2.0);
        assert!((y[(0, 0)] - expect).norm() < 1e-14);
        assert_eq!(y[(1, 1)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn singular_resolvent_reported() {
        let ss = StateSpace::new(
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            DMatrix::zeros(2, 2),
        );
        assert!(matches!(ss.response(0.0), Err(DevError::SingularResolvent { .. })));
    }

    #[test]
    fn rotation_realization_matches_similarity() {
        let ss = StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 3.0, -2.0, -0.5]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]),
        );
        let th = 0.7;
        let rot = ss.rotated_scaled(th, 2.0);
        let y = ss.response(1.3).unwrap();
        let r = rotation(th).map(|v| Complex64::new(v, 0.0));
        let rt = rotation(-th).map(|v| Complex64::new(v, 0.0));
        let expect = r * y * rt * Complex64::new(2.0, 0.0);
        assert!((rot.response(1.3).unwrap() - expect).norm() < 1e-13);
    }
}

use serde::{Deserialize, Serialize};

use super::CriteriaError;

/// Default log-spaced points between the grid bounds.
pub const DEFAULT_POINTS: usize = 600;
/// Default bounds as multiples of `ω₀`.
pub const DEFAULT_LO: f64 = 1e-2;
pub const DEFAULT_HI: f64 = 1e3;
/// The infinity surrogate sits this far above `ω₀`.
pub const INFINITY_FACTOR: f64 = 1e6;
/// Points closer than this (times `ω₀`) to `ω₀` are moved when lossless
/// elements are present.
pub const NUDGE_WINDOW: f64 = 1e-6;
pub const NUDGE_STEP: f64 = 1e-4;
/// Extra points available to the bisection refinement.
pub const DEFAULT_REFINE_BUDGET: usize = 400;
/// Band edges are refined until neighbouring points differ by this ratio.
pub const REFINE_REL_WIDTH: f64 = 1e-2;

/// Sample frequencies (rad/s) of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
    /// The last point stands in for `ω = ∞`.
    pub has_infinity: bool,
    pub refine_budget: usize,
}

impl FrequencyGrid {
    pub fn new(omegas: Vec<f64>, has_infinity: bool) -> Result<Self, CriteriaError> {
        if omegas.len() < 2 {
            return Err(CriteriaError::Grid("at least two points are required".into()));
        }
        if omegas.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CriteriaError::Grid("points must be finite and non-negative".into()));
        }
        if omegas.windows(2).any(|p| p[1] <= p[0]) {
            return Err(CriteriaError::Grid("points must be strictly increasing".into()));
        }
        Ok(Self { omegas, has_infinity, refine_budget: DEFAULT_REFINE_BUDGET })
    }

    /// `n` log-spaced points over `[lo, hi]` (rad/s).
    pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Self, CriteriaError> {
        if !(lo > 0.0 && hi > lo) || n < 2 {
            return Err(CriteriaError::Grid(format!("bad log range [{lo}, {hi}] with {n} points")));
        }
        let r = (hi / lo).ln();
        let pts = (0..n).map(|k| lo * (r * k as f64 / (n - 1) as f64).exp()).collect();
        Self::new(pts, false)
    }

    /// `0`, the default log range and the infinity surrogate.
    pub fn standard(omega0: f64) -> Self {
        Self::standard_with(omega0, DEFAULT_POINTS, DEFAULT_LO * omega0, DEFAULT_HI * omega0).expect("valid defaults")
    }

    pub fn standard_with(omega0: f64, n: usize, lo: f64, hi: f64) -> Result<Self, CriteriaError> {
        let mut g = Self::log_spaced(lo, hi, n)?;
        g.omegas.insert(0, 0.0);
        g.omegas.push(INFINITY_FACTOR * omega0.max(hi));
        g.has_infinity = true;
        Ok(g)
    }

    pub fn with_refine_budget(mut self, budget: usize) -> Self {
        self.refine_budget = budget;
        self
    }

    /// Moves points sitting on `±ω₀`, where lossless lines and the `ε̃ = 0`
    /// rescaling are singular.
    pub fn nudged(mut self, omega0: f64) -> Self {
        for w in self.omegas.iter_mut() {
            if (*w - omega0).abs() <= NUDGE_WINDOW * omega0 {
                *w = omega0 * (1.0 + NUDGE_STEP);
            }
        }
        self.omegas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        self.omegas.dedup();
        self
    }

    /// Keeps points inside `[lo, hi]`; the infinity surrogate is kept and
    /// remapped to `hi`.
    pub fn clipped(mut self, lo: f64, hi: f64) -> Result<Self, CriteriaError> {
        let inf = self.has_infinity;
        let n = self.omegas.len();
        let mut pts: Vec<f64> = self
            .omegas
            .iter()
            .enumerate()
            .filter(|&(k, w)| !(inf && k == n - 1) && *w >= lo && *w <= hi)
            .map(|(_, w)| *w)
            .collect();
        if inf && pts.last().is_none_or(|&w| w < hi) {
            pts.push(hi);
        }
        let budget = self.refine_budget;
        self = Self::new(pts, inf)?;
        self.refine_budget = budget;
        Ok(self)
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn is_infinity(&self, omega: f64) -> bool {
        self.has_infinity && self.omegas.last() == Some(&omega)
    }
}

pub fn to_hz(omega: f64) -> f64 {
    omega / (2.0 * std::f64::consts::PI)
}

pub fn from_hz(f: f64) -> f64 {
    f * 2.0 * std::f64::consts::PI
}

#[cfg(test)]
mod tests {
    use super::*;

    const W0: f64 = 2.0 * std::f64::consts::PI * 50.0;

    #[test]
    fn standard_grid_shape() {
        let g = FrequencyGrid::standard(W0);
        assert_eq!(g.len(), DEFAULT_POINTS + 2);
        assert_eq!(g.omegas()[0], 0.0);
        assert!((g.omegas()[1] - 1e-2 * W0).abs() < 1e-9);
        assert!(g.is_infinity(*g.omegas().last().unwrap()));
    }

    #[test]
    fn nominal_point_is_nudged() {
        // 100 points per decade puts a sample on ω₀
        let g = FrequencyGrid::standard_with(W0, 501, 1e-2 * W0, 1e3 * W0).unwrap();
        assert!(g.omegas().iter().any(|w| (w - W0).abs() < 1e-6 * W0));
        let g = g.nudged(W0);
        assert!(g.omegas().iter().all(|w| (w - W0).abs() > 1e-6 * W0));
        assert!(g.omegas().iter().any(|w| (w - W0 * 1.0001).abs() < 1e-9));
        assert!(g.omegas().windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn clipping_keeps_surrogate() {
        let g = FrequencyGrid::standard(W0).clipped(1.0, 1000.0).unwrap();
        assert!(g.omegas()[0] >= 1.0);
        assert_eq!(*g.omegas().last().unwrap(), 1000.0);
        assert!(g.has_infinity);
    }

    #[test]
    fn rejects_bad_points() {
        assert!(FrequencyGrid::new(vec![1.0], false).is_err());
        assert!(FrequencyGrid::new(vec![2.0, 1.0], false).is_err());
        assert!(FrequencyGrid::log_spaced(0.0, 1.0, 10).is_err());
    }
}

use super::*;
use crate::matphase::{phases, singular_values, MatrixSample};
use nalgebra::{DMatrix, DVector, Vector2};

const W0: f64 = DEFAULT_OMEGA0;

fn hz(f: f64) -> f64 {
    2.0 * std::f64::consts::PI * f
}

fn sigma_max(y: &Matrix2<Complex64>) -> f64 {
    let s = MatrixSample::new(DMatrix::from_iterator(2, 2, y.iter().copied())).unwrap();
    singular_values(&s).max()
}

fn rel_err(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn gfl(pll_bw: f64) -> DeviceAdmittance {
    let p = GflParams { pll_bw, ..GflParams::default() };
    gfl_admittance("gfl", &p, &OperatingPoint::default()).unwrap()
}

/// Series RL branch seen from one end with the far end grounded.
struct RlBranch {
    l: f64,
    r: f64,
}

impl Dynamics for RlBranch {
    fn n_states(&self) -> usize {
        2
    }
    fn rhs(&self, x: &DVector<f64>, u: &Vector2<f64>) -> DVector<f64> {
        let i = Vector2::new(x[0], x[1]);
        let di = (u - i * self.r - Vector2::new(-i[1], i[0]) * self.l) * (W0 / self.l);
        DVector::from_column_slice(di.as_slice())
    }
    fn absorbed_current(&self, x: &DVector<f64>, _u: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(x[0], x[1])
    }
}

#[test]
fn inductance_branch_linearizes_exactly() {
    let m = RlBranch { l: 0.2, r: 0.0 };
    let u = Vector2::new(1.0, 0.0);
    // steady state: u = J i L  =>  i = -J u / L
    let x0 = DVector::from_vec(vec![0.0, -1.0 / 0.2]);
    let ss = linearize(&m, &x0, &u).unwrap();
    for f in [1.0, 13.0, 120.0, 3000.0] {
        let w = hz(f);
        let z = f_inv(w, W0, 0.0) * Complex64::new(0.2, 0.0);
        let expect = z.try_inverse().unwrap();
        assert!(rel_err(&ss.response(w).unwrap(), &expect) < 1e-6, "f = {f}");
    }
}

#[test]
fn pi_current_source_matches_hand_derivation() {
    // Current source behind L with PI on the current and no PLL:
    // L/ω0 di = v - u - J L i, v = kp (iref - i) + x, dx = ki (iref - i).
    struct PiSource;
    const L: f64 = 0.1;
    const KP: f64 = 0.5;
    const KI: f64 = 20.0;
    impl Dynamics for PiSource {
        fn n_states(&self) -> usize {
            4
        }
        fn rhs(&self, x: &DVector<f64>, u: &Vector2<f64>) -> DVector<f64> {
            let i = Vector2::new(x[0], x[1]);
            let xi = Vector2::new(x[2], x[3]);
            let e = Vector2::new(1.0, 0.0) - i;
            let v = e * KP + xi;
            let di = (v - u - Vector2::new(-i[1], i[0]) * L) * (W0 / L);
            DVector::from_vec(vec![di[0], di[1], KI * e[0], KI * e[1]])
        }
        fn absorbed_current(&self, x: &DVector<f64>, _u: &Vector2<f64>) -> Vector2<f64> {
            -Vector2::new(x[0], x[1])
        }
    }
    let u = Vector2::new(1.0, 0.0);
    let x0 = DVector::from_vec(vec![1.0, 0.0, 1.0, L]);
    let ss = linearize(&PiSource, &x0, &u).unwrap();
    for f in [0.5, 7.0, 80.0, 900.0] {
        let w = hz(f);
        let s = Complex64::new(0.0, w);
        let pi = Complex64::new(KP, 0.0) + Complex64::new(KI, 0.0) / s;
        // (s L/ω0 + L J + PI) i = -u  =>  Y = (s L/ω0 I + L J + PI I)⁻¹
        let a = s * (L / W0) + pi;
        let z = Matrix2::new(a, Complex64::new(-L, 0.0), Complex64::new(L, 0.0), a);
        let expect = z.try_inverse().unwrap();
        assert!(rel_err(&ss.response(w).unwrap(), &expect) < 1e-6, "f = {f}");
    }
}

#[test]
fn gfl_filter_asymptote_and_properness() {
    let d = gfl(40.0);
    assert!(d.eval(1e5).unwrap().norm() < d.eval(1e2).unwrap().norm());
    let hi1 = d.eval(1e7).unwrap();
    let hi2 = d.eval(2e7).unwrap();
    assert!((hi1 - hi2).norm() < 1e-3);
}

#[test]
fn gfl_is_passive_at_1khz() {
    let d = gfl(40.0);
    let y = d.eval(hz(1000.0)).unwrap();
    let s = MatrixSample::new(DMatrix::from_iterator(2, 2, y.iter().copied())).unwrap();
    let ph = phases(&s).unwrap();
    assert!(ph.sectorial);
    let half_pi = std::f64::consts::FRAC_PI_2;
    assert!(ph.max().unwrap() < half_pi && ph.min().unwrap() > -half_pi, "{:?}", ph.phis);
}

#[test]
fn slower_pll_narrows_low_frequency_phase() {
    // a non-sectorial sample has no bounded phase interval: treat its width as π
    let width = |bw: f64| {
        let y = gfl(bw).eval(hz(5.0)).unwrap();
        let s = MatrixSample::new(DMatrix::from_iterator(2, 2, y.iter().copied())).unwrap();
        let p = phases(&s).unwrap();
        p.interval().map_or(std::f64::consts::PI, |(lo, hi)| hi - lo)
    };
    let w: Vec<f64> = [1.0, 5.0, 20.0, 150.0].iter().map(|&b| width(b)).collect();
    assert!(w[0] < std::f64::consts::PI);
    assert!(w.windows(2).all(|p| p[0] <= p[1]), "{w:?}");
    assert!(w[0] < w[3]);
}

#[test]
fn built_models_are_real_rational() {
    let devices = [
        gfl(40.0),
        gfm_admittance("gfm", &GfmParams::default(), &OperatingPoint::default()).unwrap(),
        sg_admittance("sg", &SgParams::default(), &OperatingPoint { p0: 0.8, ..Default::default() }).unwrap(),
    ];
    for d in &devices {
        for f in [0.3, 4.0, 45.0, 700.0] {
            let a = d.eval(hz(f)).unwrap();
            let b = d.eval(-hz(f)).unwrap();
            assert!((a - b.map(|z| z.conj())).norm() < 1e-12 * (1.0 + a.norm()), "{} at {f}", d.id);
        }
        assert_eq!(d.open_loop_stable(), Some(true), "{} open-loop unstable", d.id);
    }
}

#[test]
fn gfm_admittance_exceeds_gfl_at_1hz() {
    let op = OperatingPoint::default();
    let gfm = gfm_admittance("gfm", &GfmParams::default(), &op).unwrap();
    let g = gfl(40.0);
    assert!(sigma_max(&gfm.eval(hz(1.0)).unwrap()) > sigma_max(&g.eval(hz(1.0)).unwrap()));
}

fn swing_peak(j_v: f64) -> f64 {
    let p = GfmParams { j_v, ..GfmParams::default() };
    let d = gfm_admittance("gfm", &p, &OperatingPoint::default()).unwrap();
    let mut best = (0.0, 0.0);
    for k in 0..400 {
        let f = 1.0 * 1.01f64.powi(k);
        if f > 10.0 {
            break;
        }
        let s = sigma_max(&d.eval(hz(f)).unwrap());
        if s > best.1 {
            best = (f, s);
        }
    }
    best.0
}

#[test]
fn gfm_heavier_inertia_lowers_swing_resonance() {
    assert!(swing_peak(4.0) < swing_peak(2.0));
}

#[test]
fn gfm_zero_power_builds() {
    let op = OperatingPoint { p0: 0.0, q0: 0.0, ..Default::default() };
    let d = gfm_admittance("gfm", &GfmParams::default(), &op).unwrap();
    for k in 0..60 {
        let f = 0.5 * 1.2f64.powi(k);
        assert!(d.eval(hz(f)).unwrap().iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }
}

#[test]
fn sg_is_proper_and_subtransient() {
    let p = SgParams::default();
    let d = sg_admittance("sg", &p, &OperatingPoint { p0: 0.8, ..Default::default() }).unwrap();
    for k in 0..=40 {
        let f = 0.1 * 10f64.powf(k as f64 / 10.0);
        assert!(d.eval(hz(f)).unwrap().iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }
    let hi1 = d.eval(1e7).unwrap();
    let hi2 = d.eval(2e7).unwrap();
    assert!((hi1 - hi2).norm() < 1e-3);
    let g = sigma_max(&d.eval(hz(100.0)).unwrap());
    let target = 1.0 / p.x_d2;
    assert!(g > 0.5 * target && g < 1.5 * target, "gain {g}");
}

#[test]
fn sg_governor_acts_only_at_low_frequency() {
    let op = OperatingPoint { p0: 0.8, ..Default::default() };
    let on = SgParams::default();
    let mut off = on.clone();
    off.governor.enabled = false;
    let a = sg_admittance("on", &on, &op).unwrap();
    let b = sg_admittance("off", &off, &op).unwrap();
    for f in [10.0, 30.0, 100.0, 500.0] {
        let ya = a.eval(hz(f)).unwrap();
        let yb = b.eval(hz(f)).unwrap();
        assert!(rel_err(&yb, &ya) < 1e-3, "f = {f}: {}", rel_err(&yb, &ya));
    }
    let ya = a.eval(hz(0.1)).unwrap();
    let yb = b.eval(hz(0.1)).unwrap();
    assert!(rel_err(&yb, &ya) > 1e-3);
}

#[test]
fn rotation_identity_and_gain_invariance() {
    let d = gfl(40.0);
    let w = hz(7.0);
    assert_eq!(rotate_to_global(&d).eval(w).unwrap(), d.eval(w).unwrap());
    for th in [0.3, -1.2, 2.9] {
        let r = rotate_to_global(&d.clone().with_theta(th));
        let s0 = MatrixSample::new(DMatrix::from_iterator(2, 2, d.eval(w).unwrap().iter().copied())).unwrap();
        let s1 = MatrixSample::new(DMatrix::from_iterator(2, 2, r.eval(w).unwrap().iter().copied())).unwrap();
        let a = singular_values(&s0).sigmas;
        let b = singular_values(&s1).sigmas;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let direct = d.clone().with_theta(th).global_response(w).unwrap();
        assert!((direct - r.eval(w).unwrap()).norm() < 1e-12);
    }
}

#[test]
fn rotation_commutes_with_j() {
    let j = jmat().map(|v| Complex64::new(v, 0.0));
    let t = TabulatedResponse::new(vec![(1.0, j), (10.0, j)]).unwrap();
    let d = DeviceAdmittance::new("j", DeviceClass::Tabulated, 1.0, std::f64::consts::FRAC_PI_2, Response::Tabulated(t));
    let y = rotate_to_global(&d).eval(hz(3.0)).unwrap();
    assert!((y - j).norm() < 1e-15);
}

#[test]
fn rescale_round_trip_and_scaling() {
    let d = gfl(40.0);
    for f in [0.7, 12.0, 49.0, 400.0] {
        let w = hz(f);
        let yt = rescale_device(&d, 2.5, 0.1, w).unwrap();
        let back = yt * f_eps(w, W0, 0.1).unwrap() / Complex64::new(2.5, 0.0);
        assert!(rel_err(&back, &d.eval(w).unwrap()) < 1e-10);
        let y1 = sigma_max(&rescale_device(&d, 1.0, 0.1, w).unwrap());
        let y2 = sigma_max(&rescale_device(&d, 2.0, 0.1, w).unwrap());
        assert!((y2 - 2.0 * y1).abs() < 1e-12 * y2);
    }
    assert!(rescale_device(&d, 0.0, 0.1, 1.0).is_err());
}

#[test]
fn matched_rl_branch_rescales_to_constant() {
    let (l, r) = (0.25, 0.05);
    let m = RlBranch { l, r };
    let u = Vector2::new(1.0, 0.0);
    let z = nalgebra::Matrix2::new(r, -l, l, r);
    let i = z.try_inverse().unwrap() * u;
    let ss = linearize(&m, &DVector::from_vec(vec![i[0], i[1]]), &u).unwrap();
    let d = DeviceAdmittance::new("rl", DeviceClass::Tabulated, 1.0, 0.0, Response::StateSpace(ss));
    for f in [0.0, 3.0, 50.0, 2000.0] {
        let y = rescale_device(&d, 1.0, r / l, hz(f)).unwrap();
        let expect = Matrix2::identity() * Complex64::new(1.0 / l, 0.0);
        assert!((y - expect).norm() < 1e-6, "f = {f}");
    }
}

#[test]
fn unrescalable_point_is_flagged() {
    assert!(matches!(f_eps(W0, W0, 0.0), Err(DevError::SingularRescale { .. })));
    assert!(matches!(f_eps(-W0, W0, 0.0), Err(DevError::SingularRescale { .. })));
    assert!(f_eps(W0, W0, 0.1).is_ok());
}

#[test]
fn tabulated_round_trip_against_generator() {
    let d = gfl(40.0);
    let n = 400;
    // stops short of the lightly damped LCL resonance near 1 kHz
    let (lo, hi) = (0.1f64, 500.0f64);
    let samples: Vec<_> = (0..n)
        .map(|k| {
            let f = lo * (hi / lo).powf(k as f64 / (n - 1) as f64);
            (f, d.eval(hz(f)).unwrap())
        })
        .collect();
    let t = load_tabulated("t", samples).unwrap();
    let mut worst = 0.0f64;
    for k in 0..n - 1 {
        let f = lo * (hi / lo).powf((k as f64 + 0.37) / (n - 1) as f64);
        let a = t.eval(hz(f)).unwrap();
        let b = d.eval(hz(f)).unwrap();
        worst = worst.max((a - b).map(|z| z.norm()).max() / b.map(|z| z.norm()).max());
    }
    assert!(worst < 1e-3, "worst {worst}");
    assert!(matches!(t.eval(hz(0.05)), Err(DevError::OutOfRange { .. })));
}

#[test]
fn invalid_inputs_rejected() {
    let op = OperatingPoint { v0: 0.0, ..Default::default() };
    assert!(gfl_admittance("x", &GflParams::default(), &op).is_err());
    let p = GflParams { pll_bw: 0.0, ..GflParams::default() };
    assert!(matches!(
        gfl_admittance("x", &p, &OperatingPoint::default()),
        Err(DevError::InvalidParam { name: "pll_bw", .. })
    ));
    let p = GfmParams { j_v: -1.0, ..GfmParams::default() };
    assert!(gfm_admittance("x", &p, &OperatingPoint::default()).is_err());
}

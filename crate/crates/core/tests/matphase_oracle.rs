use gpstab::matphase::{phases, phases_from_ratio, sectoriality, singular_values, MatrixSample};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::f64::consts::PI;

mod common;

use common::{herm_min, random_complex, random_sectorial, support_angles, wrap_near, C};

#[test]
fn phases_match_support_angles_on_random_matrices() {
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for trial in 0..300 {
        let n = 2 + trial % 7;
        let a = random_sectorial(&mut rng, n);
        let (lo, hi) = support_angles(&a).expect("constructed sectorial");
        let ph = phases(&MatrixSample::new(a).unwrap()).unwrap();
        let (plo, phi) = ph.interval().unwrap();
        worst = worst.max((wrap_near(hi, phi) - phi).abs());
        worst = worst.max((wrap_near(lo, plo) - plo).abs());
    }
    assert!(worst < 1e-6, "worst support-angle error {worst}");
}

#[test]
fn congruence_and_ratio_routes_agree() {
    let mut rng = StdRng::seed_from_u64(19);
    for trial in 0..200 {
        let n = 2 + trial % 7;
        let s = MatrixSample::new(random_sectorial(&mut rng, n)).unwrap();
        let a = phases(&s).unwrap().phis;
        let b = phases_from_ratio(&s).unwrap().phis;
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8, "trial {trial}: {x} vs {y}");
        }
    }
}

#[test]
fn nearly_scalar_matrix_is_fast() {
    // a rotated real SPD matrix with clustered phases
    let b = DMatrix::from_fn(6, 6, |r, c| if r == c { C::new(4.0, 0.0) } else { C::new(0.1, 0.0) });
    let a = b.map(|z| z * C::from_polar(1.0, 1e-9));
    let t = std::time::Instant::now();
    let (lo, hi) = phases(&MatrixSample::new(a).unwrap()).unwrap().interval().unwrap();
    assert!(t.elapsed().as_secs_f64() < 0.5);
    assert!((lo - 1e-9).abs() < 1e-9 && (hi - 1e-9).abs() < 1e-9);
}

#[test]
fn singular_values_match_gram_eigenvalues() {
    let mut rng = StdRng::seed_from_u64(11);
    let a = random_complex(&mut rng, 5);
    let gram = a.adjoint() * &a;
    let mut expect: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|l| l.max(0.0).sqrt()).collect();
    expect.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let got = singular_values(&MatrixSample::new(a).unwrap()).sigmas;
    for (g, e) in got.iter().zip(&expect) {
        assert!((g - e).abs() / e < 1e-10);
    }
}

#[test]
fn one_and_j_support_angles_oracle() {
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C::new(1.0, 0.0), C::new(0.0, 1.0)]));
    assert!(herm_min(&a, PI / 4.0) > 0.0);
    let (lo, hi) = support_angles(&a).unwrap();
    assert!(lo.abs() < 1e-9 && (hi - PI / 2.0).abs() < 1e-9);
}

fn arb_sectorial() -> impl Strategy<Value = DMatrix<C>> {
    (2usize..6, any::<u64>()).prop_map(|(n, seed)| random_sectorial(&mut StdRng::seed_from_u64(seed), n))
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|x, y| y.partial_cmp(x).unwrap());
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_shifts_phases_and_keeps_gains(a in arb_sectorial(), alpha in -1.0f64..1.0) {
        let base = MatrixSample::new(a.clone()).unwrap();
        let rotated = MatrixSample::new(a.map(|z| z * C::from_polar(1.0, alpha))).unwrap();
        let p0 = phases(&base).unwrap().phis;
        let p1 = phases(&rotated).unwrap().phis;
        for (x, y) in p0.iter().zip(&p1) {
            let d = y - x - alpha;
            prop_assert!((d - 2.0 * PI * (d / (2.0 * PI)).round()).abs() < 1e-7);
        }
        let s0 = singular_values(&base).sigmas;
        let s1 = singular_values(&rotated).sigmas;
        for (x, y) in s0.iter().zip(&s1) {
            prop_assert!((x - y).abs() < 1e-10 * s0[0]);
        }
    }

    #[test]
    fn congruence_preserves_sectoriality(a in arb_sectorial(), seed in any::<u64>()) {
        let n = a.nrows();
        let t = random_complex(&mut StdRng::seed_from_u64(seed), n) + DMatrix::<C>::identity(n, n);
        prop_assume!(t.clone().lu().try_inverse().is_some());
        let b = t.adjoint() * &a * &t;
        prop_assert!(sectoriality(&MatrixSample::new(b).unwrap()).is_some());
        let indefinite = DMatrix::from_fn(n, n, |r, c| if r == c { C::new(if r == 0 { -1.0 } else { 1.0 }, 0.0) } else { C::new(0.0, 0.0) });
        let b = t.adjoint() * indefinite * &t;
        prop_assert!(sectoriality(&MatrixSample::new(b).unwrap()).is_none());
    }

    #[test]
    fn eigenvalue_arguments_within_phase_interval(a in arb_sectorial()) {
        let (lo, hi) = phases(&MatrixSample::new(a.clone()).unwrap()).unwrap().interval().unwrap();
        let mid = 0.5 * (lo + hi);
        for z in a.eigenvalues().unwrap().iter() {
            let arg = wrap_near(z.im.atan2(z.re), mid);
            prop_assert!(arg >= lo - 1e-8 && arg <= hi + 1e-8);
        }
    }

    #[test]
    fn inverse_negates_and_reverses_phases(a in arb_sectorial()) {
        let inv = a.clone().lu().try_inverse().unwrap();
        let p = phases(&MatrixSample::new(a).unwrap()).unwrap().phis;
        let q = phases(&MatrixSample::new(inv).unwrap()).unwrap().phis;
        let expect = sorted_desc(p.iter().map(|x| -x).collect());
        let shift = 2.0 * PI * ((q[0] - expect[0]) / (2.0 * PI)).round();
        for (x, y) in q.iter().zip(&expect) {
            prop_assert!((x - shift - y).abs() < 1e-8);
        }
    }

    #[test]
    fn rotation_like_blocks_commute(a in -2.0f64..2.0, b in -2.0f64..2.0, c in 0.1f64..2.0, d in -2.0f64..2.0) {
        let m = |x: f64, y: f64| DMatrix::from_row_slice(2, 2, &[C::new(x, 0.3), C::new(-y, 0.0), C::new(y, 0.0), C::new(x, 0.3)]);
        let x = m(a, b);
        let y = m(c, d);
        let xy = MatrixSample::new(&x * &y).unwrap();
        let yx = MatrixSample::new(&y * &x).unwrap();
        let pxy = phases(&xy).unwrap();
        let pyx = phases(&yx).unwrap();
        prop_assert_eq!(pxy.sectorial, pyx.sectorial);
        for (u, v) in pxy.phis.iter().zip(&pyx.phis) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }
}

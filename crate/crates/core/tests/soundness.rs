mod common;

use common::{fuzz_system, fuzz_trial, random_weights};
use gpstab::criteria::{rescaled_device_response, to_hz};
use gpstab::network::{grid_admittance, rescaled_grid};
use gpstab::Complex64;
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn certified_systems_are_stable() {
    let mut rng = StdRng::seed_from_u64(2024);
    let (mut certified, mut stable) = (0, 0);
    for trial in 0..100 {
        let sys = fuzz_system(&mut rng);
        let out = fuzz_trial(&sys, &vec![1.0; sys.devices.len()]);
        assert!(!out.certified || out.oracle_stable, "trial {trial}: certified but unstable");
        certified += out.certified as usize;
        stable += out.oracle_stable as usize;
    }
    eprintln!("certified {certified}, oracle-stable {stable} of 100");
    assert!(certified > 0);
}

fn loop_eigs(l: DMatrix<Complex64>) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = l.eigenvalues().expect("square").iter().copied().collect();
    v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    v
}

/// The loop gain `Ỹ_grid⁻¹ Ỹ_C` is similar to `Y_grid⁻¹ Y_C` for every
/// positive `D`, so the closed loop does not see the weights.
#[test]
fn weights_cancel_in_the_loop_gain() {
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..40 {
        let sys = fuzz_system(&mut rng);
        let n = sys.devices.len();
        let w0 = sys.net.omega0;
        let omega = rng.gen_range(0.01..20.0) * w0;
        if (omega - w0).abs() < 1e-3 * w0 {
            continue;
        }
        let (y, _) = grid_admittance(&sys.net, omega).unwrap();
        let eigs_with = |d: &[f64]| {
            let sc = gpstab::Rescaling { d: d.to_vec(), ..sys.rescaling.clone() };
            let yg = rescaled_grid(&y, &sc, omega, w0).unwrap();
            let mut yc = DMatrix::zeros(2 * n, 2 * n);
            for (i, dev) in sys.devices.iter().enumerate() {
                let local = rescaled_device_response(dev, d[i], sc.eps_tilde, omega, w0).unwrap();
                let r = gpstab::devmodel::rotation(dev.theta).map(|v| Complex64::new(v, 0.0));
                let g = r * local * r.transpose();
                yc.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&g);
            }
            loop_eigs(yg.lu().try_inverse().unwrap() * yc)
        };
        let base = eigs_with(&vec![1.0; n]);
        let other = eigs_with(&random_weights(&mut rng, n));
        let scale = base.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for (a, b) in base.iter().zip(&other) {
            assert!((a - b).norm() < 1e-7 * scale, "at {} Hz: {a} vs {b}", to_hz(omega));
        }
    }
}

#[test]
fn random_weights_keep_certificates_sound() {
    let mut rng = StdRng::seed_from_u64(7);
    for trial in 0..25 {
        let sys = fuzz_system(&mut rng);
        let d = random_weights(&mut rng, sys.devices.len());
        let out = fuzz_trial(&sys, &d);
        assert!(!out.certified || out.oracle_stable, "trial {trial}: certified with D = {d:?} but unstable");
    }
}

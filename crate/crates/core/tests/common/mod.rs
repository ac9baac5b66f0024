#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rand::rngs::StdRng;
use rand::Rng;

pub type C = Complex<f64>;

pub fn herm_min(a: &DMatrix<C>, theta: f64) -> f64 {
    let r = C::from_polar(1.0, -theta);
    let b = a.map(|z| z * r);
    let h = (&b + b.adjoint()).map(|z| z * 0.5);
    h.symmetric_eigenvalues().min()
}

/// Support angles of the numerical range found by sampling the minimum
/// eigenvalue of the rotated Hermitian part and bisecting its zero crossings.
pub fn support_angles(a: &DMatrix<C>) -> Option<(f64, f64)> {
    let n = 1024;
    let vals: Vec<f64> = (0..n).map(|k| herm_min(a, 2.0 * PI * k as f64 / n as f64)).collect();
    let k0 = (0..n).max_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap())?;
    if vals[k0] <= 0.0 {
        return None;
    }
    let step = 2.0 * PI / n as f64;
    let t0 = k0 as f64 * step;
    let mut lo_out = t0;
    while herm_min(a, lo_out) > 0.0 {
        lo_out -= step;
    }
    let mut hi_out = t0;
    while herm_min(a, hi_out) > 0.0 {
        hi_out += step;
    }
    let edge = |mut inside: f64, mut outside: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if herm_min(a, mid) > 0.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        0.5 * (inside + outside)
    };
    let g_lo = edge(t0, lo_out);
    let g_hi = edge(t0, hi_out);
    Some((g_hi - PI / 2.0, g_lo + PI / 2.0))
}

pub fn random_complex(rng: &mut StdRng, n: usize) -> DMatrix<C> {
    DMatrix::from_fn(n, n, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_sectorial(rng: &mut StdRng, n: usize) -> DMatrix<C> {
    let t = random_complex(rng, n) + DMatrix::<C>::identity(n, n).map(|z| z * 1.5);
    let spread = rng.gen_range(0.05..0.9) * PI;
    let offset = rng.gen_range(-PI..PI);
    let d = DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            C::from_polar(1.0, offset + spread * (rng.gen::<f64>() - 0.5))
        } else {
            C::new(0.0, 0.0)
        }
    });
    t.adjoint() * d * t
}

pub fn wrap_near(x: f64, target: f64) -> f64 {
    x - 2.0 * PI * ((x - target) / (2.0 * PI)).round()
}


/// A randomized small system for soundness checks.
pub struct FuzzSystem {
    pub devices: Vec<gpstab::devmodel::DeviceAdmittance>,
    pub net: gpstab::NetworkModel,
    pub rescaling: gpstab::Rescaling,
}

fn log_uniform(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// 1–4 open-loop stable devices on a connected network of 2–6 nodes.
pub fn fuzz_system(rng: &mut StdRng) -> FuzzSystem {
    use gpstab::devmodel::{gfl_admittance, gfm_admittance, GflParams, GfmParams, OperatingPoint};
    use gpstab::network::Branch;

    loop {
        let n = rng.gen_range(1..=4usize);
        let m = rng.gen_range(n.max(2)..=6usize);
        let ground = m + 1;
        let common_eps = rng.gen_bool(0.3).then(|| rng.gen_range(0.0..0.2));
        let eps = |rng: &mut StdRng| common_eps.unwrap_or_else(|| rng.gen_range(0.0..0.3));
        let mut branches = Vec::new();
        // random spanning tree over 1..=m+1
        for k in 2..=ground {
            let parent = rng.gen_range(1..k);
            let e = eps(rng);
            branches.push(Branch::rl(parent, k, log_uniform(rng, 3.0, 60.0), e));
        }
        for _ in 0..rng.gen_range(0..=2) {
            let a = rng.gen_range(1..=ground);
            let b = rng.gen_range(1..=ground);
            if a != b {
                let e = eps(rng);
                branches.push(Branch::rl(a.min(b), a.max(b), log_uniform(rng, 3.0, 60.0), e));
            }
        }
        if common_eps.is_none() && m > n && rng.gen_bool(0.4) {
            branches.push(Branch::load(rng.gen_range(n + 1..=m), ground, rng.gen_range(1.0..10.0)));
        }
        let Ok(net) = gpstab::NetworkModel::new(m, n, branches, gpstab::devmodel::DEFAULT_OMEGA0) else { continue };

        let mut devices = Vec::new();
        let mut s = Vec::new();
        for i in 0..n {
            let op = OperatingPoint { p0: rng.gen_range(0.2..1.0), ..OperatingPoint::default() };
            let dev = if rng.gen_bool(0.3) {
                let p = GfmParams { j_v: rng.gen_range(0.5..4.0), d_v: rng.gen_range(20.0..80.0), ..GfmParams::default() };
                gfm_admittance(format!("d{i}"), &p, &op)
            } else {
                let p = GflParams {
                    pll_bw: log_uniform(rng, 15.0, 200.0),
                    l_g: rng.gen_range(0.08..0.3),
                    ..GflParams::default()
                };
                gfl_admittance(format!("d{i}"), &p, &op)
            };
            let Ok(dev) = dev else { break };
            let cap = rng.gen_range(0.5..2.0);
            s.push(cap);
            devices.push(dev.with_capacity(cap).unwrap().with_theta(rng.gen_range(-0.4..0.4)));
        }
        if devices.len() != n || devices.iter().any(|d| d.open_loop_stable() != Some(true)) {
            continue;
        }
        let eps_tilde = net.common_ratio().unwrap_or_else(|| net.mean_ratio());
        let rescaling = gpstab::Rescaling { s, d: vec![1.0; n], eps_tilde };
        return FuzzSystem { devices, net, rescaling };
    }
}

pub fn random_weights(rng: &mut StdRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| log_uniform(rng, 0.2, 5.0)).collect()
}

/// Grid used by the fuzz checks.
pub fn fuzz_grid() -> gpstab::criteria::FrequencyGrid {
    let w0 = gpstab::devmodel::DEFAULT_OMEGA0;
    gpstab::criteria::FrequencyGrid::standard_with(w0, 240, 1e-2 * w0, 1e3 * w0).unwrap().nudged(w0)
}

pub struct FuzzOutcome {
    pub certified: bool,
    pub oracle_stable: bool,
}

/// Sweeps (and two-stage sweeps when something is absorbed) one system and
/// compares with the eigenvalue oracle.
pub fn fuzz_trial(sys: &FuzzSystem, d: &[f64]) -> FuzzOutcome {
    use gpstab::criteria::{absorbed_by_default, monolithic, two_stage};
    let grid = fuzz_grid();
    let sc = gpstab::Rescaling { d: d.to_vec(), ..sys.rescaling.clone() };
    let mono = monolithic(&sys.devices, &sys.net, &sc, &grid).unwrap();
    let mut certified = mono.stable();
    let absorbed: Vec<bool> = sys.devices.iter().map(absorbed_by_default).collect();
    if absorbed.iter().any(|a| *a) {
        let t = two_stage(&sys.devices, &absorbed, &sys.net, &sc, &grid).unwrap();
        certified |= t.stable;
    }
    let e = gpstab::oracle::closed_loop_eigs(&sys.devices, &sys.net).unwrap();
    FuzzOutcome { certified, oracle_stable: e.stable }
}

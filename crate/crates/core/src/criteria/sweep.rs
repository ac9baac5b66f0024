use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::devmodel::{DeviceAdmittance, DeviceClass};
use crate::matphase::Verdict;
use crate::network::{gscr, reduced_b_matrix, NetError, NetworkModel, Rescaling};

use super::grid::{FrequencyGrid, REFINE_REL_WIDTH};
use super::profile::{check_conditions, device_at, Check, GainPhase, NetSample, NetworkView};
use super::CriteriaError;

/// Relative width to which sectorial transitions are localized.
pub const TRANSITION_REL_WIDTH: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Monolithic,
    Subsystem1,
    Subsystem2,
    Corollary,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Monolithic => "monolithic",
            Stage::Subsystem1 => "subsystem1",
            Stage::Subsystem2 => "subsystem2",
            Stage::Corollary => "corollary",
        }
    }
}

/// A set of devices checked against the network they see.
#[derive(Debug, Clone)]
pub struct Problem {
    pub stage: Stage,
    pub devices: Vec<DeviceAdmittance>,
    /// Weights `D_i`, aligned with `devices`.
    pub d: Vec<f64>,
    pub eps_tilde: f64,
    pub omega0: f64,
    pub view: NetworkView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum PointFlag {
    Ok,
    /// A solved block had a condition estimate above the limit.
    IllConditioned,
    /// The sample could not be evaluated; it counts as undecided.
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub omega: f64,
    pub infinity: bool,
    pub check: Check,
    pub net: Option<NetSample>,
    pub devices: Vec<Option<GainPhase>>,
    pub flag: PointFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Culprit {
    pub device: String,
    /// Worst `σ̄(Ỹ_C,i) − σ̲(Ỹ_grid)` over the band.
    pub gain_excess: f64,
    /// Worst amount by which the device's phase interval leaves the network
    /// area (infinite where the device is not sectorial).
    pub phase_excess: f64,
}

/// Contiguous run of undecided grid points (rad/s, inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub culprits: Vec<Culprit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub device: String,
    /// Lowest frequency (rad/s) above which the device stays sectorial on the
    /// grid; `None` when it is not sectorial at the top of the grid.
    pub omega: Option<f64>,
    /// Frequencies where the sectorial status flips, in increasing order.
    pub toggles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub stage: Stage,
    pub device_ids: Vec<String>,
    pub points: Vec<PointResult>,
    pub undecided_bands: Vec<Band>,
    pub transitions: Vec<Transition>,
    /// Open-loop stability of each device (`None`: unknown).
    pub open_loop_stable: Vec<Option<bool>>,
}

impl StabilityReport {
    /// No undecided grid point.
    pub fn certified(&self) -> bool {
        self.points.iter().all(|p| p.check.verdict.certified())
    }

    pub fn preconditions_hold(&self) -> bool {
        self.open_loop_stable.iter().all(|s| *s == Some(true))
    }

    pub fn stable(&self) -> bool {
        self.certified() && self.preconditions_hold()
    }

    pub fn verdict_at(&self, omega: f64) -> Option<Verdict> {
        self.points
            .iter()
            .min_by(|a, b| (a.omega - omega).abs().partial_cmp(&(b.omega - omega).abs()).unwrap())
            .map(|p| p.check.verdict)
    }

    pub fn transition_of(&self, device: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.device == device)
    }
}

fn skipped(omega: f64, infinity: bool, n: usize, reason: String) -> PointResult {
    PointResult {
        omega,
        infinity,
        check: Check {
            verdict: Verdict::Undecided,
            gain_margin: f64::NAN,
            phase_margin_hi: f64::NAN,
            phase_margin_lo: f64::NAN,
            phase_margin_width: f64::NAN,
        },
        net: None,
        devices: vec![None; n],
        flag: PointFlag::Skipped(reason),
    }
}

fn device_profile(p: &Problem, k: usize, omega: f64, infinity: bool) -> Result<GainPhase, CriteriaError> {
    let y = device_at(&p.devices[k], p.d[k], p.eps_tilde, omega, p.omega0, infinity)?;
    GainPhase::of(nalgebra::DMatrix::from_iterator(2, 2, y.iter().copied()))
}

pub fn evaluate_point(p: &Problem, omega: f64, infinity: bool) -> PointResult {
    let n = p.devices.len();
    let devs: Result<Vec<GainPhase>, CriteriaError> =
        (0..n).map(|k| device_profile(p, k, omega, infinity)).collect();
    let devs = match devs {
        Ok(d) => d,
        Err(e) => return skipped(omega, infinity, n, e.to_string()),
    };
    let net = match p.view.sample(omega, infinity) {
        Ok(s) => s,
        Err(e) => return skipped(omega, infinity, n, e.to_string()),
    };
    let check = check_conditions(&devs, &net);
    let flag = if net.reliable() { PointFlag::Ok } else { PointFlag::IllConditioned };
    PointResult { omega, infinity, check, net: Some(net), devices: devs.into_iter().map(Some).collect(), flag }
}

fn validate(p: &Problem) -> Result<(), CriteriaError> {
    if p.d.len() != p.devices.len() {
        return Err(NetError::DimensionMismatch { expected: p.devices.len(), found: p.d.len() }.into());
    }
    if p.view.dim() != p.devices.len() {
        return Err(NetError::DimensionMismatch { expected: p.devices.len(), found: p.view.dim() }.into());
    }
    Ok(())
}

/// Evaluates every grid point, refines band edges, and assembles the report.
pub fn sweep(p: &Problem, grid: &FrequencyGrid) -> Result<StabilityReport, CriteriaError> {
    validate(p)?;
    let omegas = grid.omegas();
    let last = omegas.len() - 1;
    let mut points: Vec<PointResult> = omegas
        .par_iter()
        .enumerate()
        .map(|(k, &w)| evaluate_point(p, w, grid.has_infinity && k == last))
        .collect();

    let mut budget = grid.refine_budget;
    while budget > 0 {
        let mids: Vec<f64> = points
            .windows(2)
            .filter(|w| {
                let (a, b) = (&w[0], &w[1]);
                a.omega > 0.0
                    && !b.infinity
                    && a.check.verdict.certified() != b.check.verdict.certified()
                    && b.omega / a.omega - 1.0 > REFINE_REL_WIDTH
            })
            .map(|w| (w[0].omega * w[1].omega).sqrt())
            .take(budget)
            .collect();
        if mids.is_empty() {
            break;
        }
        budget -= mids.len();
        let fresh: Vec<PointResult> = mids.par_iter().map(|&w| evaluate_point(p, w, false)).collect();
        points.extend(fresh);
        points.sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap());
    }

    let transitions = (0..p.devices.len()).map(|k| transition(p, &points, k)).collect();
    let undecided_bands = bands(p, &points);
    Ok(StabilityReport {
        stage: p.stage,
        device_ids: p.devices.iter().map(|d| d.id.clone()).collect(),
        points,
        undecided_bands,
        transitions,
        open_loop_stable: p.devices.iter().map(|d| d.open_loop_stable()).collect(),
    })
}

fn sectorial_at(p: &Problem, k: usize, omega: f64) -> Option<bool> {
    device_profile(p, k, omega, false).ok().map(|g| g.sectorial())
}

fn transition(p: &Problem, points: &[PointResult], k: usize) -> Transition {
    let status: Vec<(f64, Option<bool>)> =
        points.iter().map(|pt| (pt.omega, pt.devices[k].map(|g| g.sectorial()))).collect();
    let mut toggles = Vec::new();
    for w in status.windows(2) {
        if let (Some(a), Some(b)) = (w[0].1, w[1].1) {
            if a != b {
                toggles.push(w[1].0);
            }
        }
    }
    let device = p.devices[k].id.clone();
    if status.last().and_then(|s| s.1) != Some(true) {
        return Transition { device, omega: None, toggles };
    }
    let start = status.iter().rposition(|s| s.1 != Some(true)).map_or(0, |i| i + 1);
    if start == 0 {
        return Transition { device, omega: Some(status[0].0), toggles };
    }
    // bisect between the last non-sectorial sample and the first sectorial one
    let (mut lo, mut hi) = (status[start - 1].0, status[start].0);
    if lo > 0.0 {
        while hi / lo - 1.0 > TRANSITION_REL_WIDTH {
            let mid = (lo * hi).sqrt();
            match sectorial_at(p, k, mid) {
                Some(true) => hi = mid,
                Some(false) => lo = mid,
                None => break,
            }
        }
    }
    Transition { device, omega: Some(hi), toggles }
}

fn bands(p: &Problem, points: &[PointResult]) -> Vec<Band> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < points.len() {
        if points[k].check.verdict.certified() {
            k += 1;
            continue;
        }
        let start = k;
        while k < points.len() && !points[k].check.verdict.certified() {
            k += 1;
        }
        let run = &points[start..k];
        out.push(Band { lo: run[0].omega, hi: run[run.len() - 1].omega, culprits: culprits(p, run) });
    }
    out
}

fn culprits(p: &Problem, run: &[PointResult]) -> Vec<Culprit> {
    let mut list: Vec<Culprit> = (0..p.devices.len())
        .map(|k| {
            let mut gain_excess = f64::NEG_INFINITY;
            let mut phase_excess = f64::NEG_INFINITY;
            for pt in run {
                let (Some(net), Some(dev)) = (pt.net, pt.devices[k]) else { continue };
                gain_excess = gain_excess.max(dev.sigma_max - net.sigma_min);
                let ph = match (dev.phi, net.area) {
                    (Some((lo, hi)), Some((a_lo, a_hi))) => (hi - a_hi).max(a_lo - lo).max(0.0),
                    _ => f64::INFINITY,
                };
                phase_excess = phase_excess.max(ph);
            }
            Culprit { device: p.devices[k].id.clone(), gain_excess, phase_excess }
        })
        .collect();
    list.sort_by(|a, b| {
        b.gain_excess
            .partial_cmp(&a.gain_excess)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.phase_excess.partial_cmp(&a.phase_excess).unwrap_or(std::cmp::Ordering::Equal))
    });
    list
}

/// Monolithic check of every device against the full rescaled network.
pub fn monolithic(
    devices: &[DeviceAdmittance],
    net: &NetworkModel<f64>,
    sc: &Rescaling<f64>,
    grid: &FrequencyGrid,
) -> Result<StabilityReport, CriteriaError> {
    sc.validate(net.n)?;
    if devices.len() != net.n {
        return Err(NetError::DimensionMismatch { expected: net.n, found: devices.len() }.into());
    }
    let p = Problem {
        stage: Stage::Monolithic,
        devices: devices.to_vec(),
        d: sc.d.clone(),
        eps_tilde: sc.eps_tilde,
        omega0: net.omega0,
        view: NetworkView::full(net.clone(), sc.clone()),
    };
    sweep(&p, grid)
}

/// Identical-R/X check against the constant gSCR with the network phase
/// area fixed at `[−π, π]`.
pub fn corollary_check(
    devices: &[DeviceAdmittance],
    net: &NetworkModel<f64>,
    s: &[f64],
    grid: &FrequencyGrid,
) -> Result<StabilityReport, CriteriaError> {
    let eps = net.common_ratio().ok_or(NetError::HeterogeneousRatio)?;
    let b_r = reduced_b_matrix(net)?;
    let g = gscr(&b_r, s)?;
    corollary_with_gscr(devices, g, eps, net.omega0, grid)
}

pub fn corollary_with_gscr(
    devices: &[DeviceAdmittance],
    gscr: f64,
    eps: f64,
    omega0: f64,
    grid: &FrequencyGrid,
) -> Result<StabilityReport, CriteriaError> {
    let p = Problem {
        stage: Stage::Corollary,
        devices: devices.to_vec(),
        d: vec![1.0; devices.len()],
        eps_tilde: eps,
        omega0,
        view: NetworkView::Constant { gscr, n: devices.len() },
    };
    sweep(&p, grid)
}

/// Devices absorbed into the equivalent network in the two-stage check.
pub fn absorbed_by_default(d: &DeviceAdmittance) -> bool {
    matches!(d.class, DeviceClass::Gfm | DeviceClass::Sg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageReport {
    /// Absorbed devices against the network with the other device nodes open.
    pub subsystem1: Option<StabilityReport>,
    /// Remaining devices against the equivalent network.
    pub subsystem2: Option<StabilityReport>,
    /// Stability of `Y_gridC⁻¹`, implied by a certified subsystem 1.
    pub equivalent_inverse_stable: bool,
    pub stable: bool,
}

pub fn two_stage(
    devices: &[DeviceAdmittance],
    absorbed: &[bool],
    net: &NetworkModel<f64>,
    sc: &Rescaling<f64>,
    grid: &FrequencyGrid,
) -> Result<TwoStageReport, CriteriaError> {
    sc.validate(net.n)?;
    if devices.len() != net.n || absorbed.len() != net.n {
        return Err(NetError::DimensionMismatch { expected: net.n, found: devices.len().min(absorbed.len()) }.into());
    }
    let group2: Vec<usize> = (0..net.n).filter(|&i| absorbed[i]).collect();
    let group1: Vec<usize> = (0..net.n).filter(|&i| !absorbed[i]).collect();
    let pick = |idx: &[usize]| idx.iter().map(|&i| devices[i].clone()).collect::<Vec<_>>();

    let subsystem1 = if group2.is_empty() {
        None
    } else {
        let p = Problem {
            stage: Stage::Subsystem1,
            devices: pick(&group2),
            d: group2.iter().map(|&i| sc.d[i]).collect(),
            eps_tilde: sc.eps_tilde,
            omega0: net.omega0,
            view: NetworkView::Grid { net: net.clone(), keep: group2.clone(), absorbed: Vec::new(), rescaling: sc.clone() },
        };
        Some(sweep(&p, grid)?)
    };
    let subsystem2 = if group1.is_empty() {
        None
    } else {
        let p = Problem {
            stage: if group2.is_empty() { Stage::Monolithic } else { Stage::Subsystem2 },
            devices: pick(&group1),
            d: group1.iter().map(|&i| sc.d[i]).collect(),
            eps_tilde: sc.eps_tilde,
            omega0: net.omega0,
            view: NetworkView::Grid {
                net: net.clone(),
                keep: group1.clone(),
                absorbed: group2.iter().map(|&i| (i, devices[i].clone())).collect(),
                rescaling: sc.clone(),
            },
        };
        Some(sweep(&p, grid)?)
    };
    let equivalent_inverse_stable = subsystem1.as_ref().is_none_or(|r| r.stable());
    let stable = subsystem1.as_ref().is_none_or(|r| r.stable()) && subsystem2.as_ref().is_none_or(|r| r.stable());
    Ok(TwoStageReport { subsystem1, subsystem2, equivalent_inverse_stable, stable })
}

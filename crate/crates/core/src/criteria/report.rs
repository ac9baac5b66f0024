use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::matphase::Verdict;

use super::grid::to_hz;
use super::sweep::{PointFlag, StabilityReport, TwoStageReport};
use super::CriteriaError;

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn num(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn flag_str(f: &PointFlag) -> &str {
    match f {
        PointFlag::Ok => "ok",
        PointFlag::IllConditioned => "ill_conditioned",
        PointFlag::Skipped(_) => "skipped",
    }
}

/// One row per frequency; empty cells stand for unavailable values.
pub fn write_report_csv<W: Write>(r: &StabilityReport, out: W) -> Result<(), CriteriaError> {
    let mut w = csv::Writer::from_writer(out);
    let mut head: Vec<String> = [
        "freq_hz",
        "verdict",
        "gain_margin",
        "phase_margin_hi",
        "phase_margin_lo",
        "phase_margin_width",
        "net_sigma_min",
        "flag",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for id in &r.device_ids {
        for col in ["sigma_max", "phi_lo", "phi_hi", "sectorial"] {
            head.push(format!("{id}_{col}"));
        }
    }
    w.write_record(&head)?;
    for p in &r.points {
        let mut row = vec![
            to_hz(p.omega).to_string(),
            p.check.verdict.as_str().to_string(),
            num(finite(p.check.gain_margin)),
            num(finite(p.check.phase_margin_hi)),
            num(finite(p.check.phase_margin_lo)),
            num(finite(p.check.phase_margin_width)),
            num(p.net.map(|n| n.sigma_min)),
            flag_str(&p.flag).to_string(),
        ];
        for d in &p.devices {
            row.push(num(d.map(|g| g.sigma_max)));
            row.push(num(d.and_then(|g| g.phi).map(|x| x.0)));
            row.push(num(d.and_then(|g| g.phi).map(|x| x.1)));
            row.push(d.map_or_else(String::new, |g| g.sectorial().to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per (frequency, device).
pub fn write_device_profiles<W: Write>(r: &StabilityReport, out: W) -> Result<(), CriteriaError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["freq_hz", "device", "sigma_max", "sigma_min", "phi_lo", "phi_hi", "sectorial"])?;
    for p in &r.points {
        for (id, d) in r.device_ids.iter().zip(&p.devices) {
            let Some(g) = d else { continue };
            w.write_record([
                to_hz(p.omega).to_string(),
                id.clone(),
                g.sigma_max.to_string(),
                g.sigma_min.to_string(),
                num(g.phi.map(|x| x.0)),
                num(g.phi.map(|x| x.1)),
                g.sectorial().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_network_profile<W: Write>(r: &StabilityReport, out: W) -> Result<(), CriteriaError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["freq_hz", "sigma_min", "sigma_max", "area_lo", "area_hi", "cond", "flag"])?;
    for p in &r.points {
        let Some(n) = p.net else { continue };
        w.write_record([
            to_hz(p.omega).to_string(),
            n.sigma_min.to_string(),
            n.sigma_max.to_string(),
            num(n.area.map(|a| a.0)),
            num(n.area.map(|a| a.1)),
            n.cond.to_string(),
            flag_str(&p.flag).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CulpritSummary {
    pub device: String,
    pub gain_excess: Option<f64>,
    /// `None` where the device is not sectorial somewhere in the band.
    pub phase_excess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub culprits: Vec<CulpritSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSummary {
    pub device: String,
    pub freq_hz: Option<f64>,
    pub toggles_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointVerdict {
    pub freq_hz: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub devices: Vec<String>,
    pub open_loop_stable: Vec<Option<bool>>,
    pub certified: bool,
    pub undecided_bands: Vec<BandSummary>,
    pub transitions: Vec<TransitionSummary>,
    pub verdicts: Vec<PointVerdict>,
}

impl StageSummary {
    pub fn of(r: &StabilityReport) -> Self {
        Self {
            stage: r.stage.as_str().to_string(),
            devices: r.device_ids.clone(),
            open_loop_stable: r.open_loop_stable.clone(),
            certified: r.certified(),
            undecided_bands: r
                .undecided_bands
                .iter()
                .map(|b| BandSummary {
                    lo_hz: to_hz(b.lo),
                    hi_hz: to_hz(b.hi),
                    culprits: b
                        .culprits
                        .iter()
                        .map(|c| CulpritSummary {
                            device: c.device.clone(),
                            gain_excess: finite(c.gain_excess),
                            phase_excess: finite(c.phase_excess),
                        })
                        .collect(),
                })
                .collect(),
            transitions: r
                .transitions
                .iter()
                .map(|t| TransitionSummary {
                    device: t.device.clone(),
                    freq_hz: t.omega.map(to_hz),
                    toggles_hz: t.toggles.iter().copied().map(to_hz).collect(),
                })
                .collect(),
            verdicts: r.points.iter().map(|p| PointVerdict { freq_hz: to_hz(p.omega), verdict: p.check.verdict }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub mode: String,
    /// No undecided point in any stage and every open-loop precondition holds.
    pub stable: bool,
    pub stages: Vec<StageSummary>,
    /// Set by the two-stage mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalent_inverse_stable: Option<bool>,
}

impl ReportSummary {
    pub fn single(mode: &str, r: &StabilityReport) -> Self {
        Self { mode: mode.to_string(), stable: r.stable(), stages: vec![StageSummary::of(r)], equivalent_inverse_stable: None }
    }

    pub fn two_stage(t: &TwoStageReport) -> Self {
        let stages = t.subsystem1.iter().chain(t.subsystem2.iter()).map(StageSummary::of).collect();
        Self {
            mode: "two_stage".to_string(),
            stable: t.stable,
            stages,
            equivalent_inverse_stable: Some(t.equivalent_inverse_stable),
        }
    }

    pub fn has_undecided(&self) -> bool {
        self.stages.iter().any(|s| !s.certified)
    }

    pub fn to_json(&self) -> Result<String, CriteriaError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn read_summary(json: &str) -> Result<ReportSummary, CriteriaError> {
    Ok(serde_json::from_str(json)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{corollary_with_gscr, FrequencyGrid};
    use crate::devmodel::{gfl_admittance, GflParams, OperatingPoint, DEFAULT_OMEGA0};

    fn report(g: f64) -> StabilityReport {
        let op = OperatingPoint::default();
        let dev = gfl_admittance("gfl1", &GflParams::default(), &op).unwrap();
        let grid = FrequencyGrid::standard_with(DEFAULT_OMEGA0, 60, 1.0, 1e4).unwrap();
        corollary_with_gscr(&[dev], g, 0.0, DEFAULT_OMEGA0, &grid).unwrap()
    }

    #[test]
    fn summary_round_trip_is_exact() {
        let r = report(2.0);
        let s = ReportSummary::single("corollary", &r);
        let back = read_summary(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_has_device_columns() {
        let r = report(5.0);
        let mut buf = Vec::new();
        write_report_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let head = text.lines().next().unwrap();
        assert!(head.starts_with("freq_hz,verdict,gain_margin"));
        assert!(head.ends_with("gfl1_sigma_max,gfl1_phi_lo,gfl1_phi_hi,gfl1_sectorial"));
        assert_eq!(text.lines().count(), r.points.len() + 1);
    }
}

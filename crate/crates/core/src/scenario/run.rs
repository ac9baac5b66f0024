use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::criteria::{
    corollary_check, monolithic, two_stage, write_device_profiles, write_network_profile, write_report_csv,
    ReportSummary, StabilityReport, TwoStageReport,
};
use crate::oracle::{closed_loop_eigs, write_eigen_csv, EigenReport};

use super::config::{AnalysisConfig, Format, Mode, Scenario};
use super::ScenarioError;

#[derive(Debug, Clone)]
pub enum Analysis {
    Single(Mode, StabilityReport),
    TwoStage(TwoStageReport),
}

impl Analysis {
    pub fn summary(&self) -> ReportSummary {
        match self {
            Analysis::Single(m, r) => ReportSummary::single(m.as_str(), r),
            Analysis::TwoStage(t) => ReportSummary::two_stage(t),
        }
    }

    pub fn reports(&self) -> Vec<&StabilityReport> {
        match self {
            Analysis::Single(_, r) => vec![r],
            Analysis::TwoStage(t) => t.subsystem1.iter().chain(t.subsystem2.iter()).collect(),
        }
    }
}

pub fn analyze(sc: &Scenario) -> Result<Analysis, ScenarioError> {
    Ok(match sc.mode {
        Mode::Corollary => {
            Analysis::Single(sc.mode, corollary_check(&sc.devices, &sc.net, &sc.rescaling.s, &sc.grid)?)
        }
        Mode::Monolithic => Analysis::Single(sc.mode, monolithic(&sc.devices, &sc.net, &sc.rescaling, &sc.grid)?),
        Mode::TwoStage => {
            Analysis::TwoStage(two_stage(&sc.devices, &sc.absorbed, &sc.net, &sc.rescaling, &sc.grid)?)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Stable,
    NotCertified,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Stable => 0,
            ExitStatus::NotCertified => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub analysis: Analysis,
    pub summary: ReportSummary,
    pub eigen: Option<EigenReport>,
    pub files: Vec<PathBuf>,
    pub status: ExitStatus,
}

fn create(dir: &Path, name: &str, files: &mut Vec<PathBuf>) -> Result<BufWriter<File>, ScenarioError> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| ScenarioError::Io { path: path.clone(), source: e })?;
    files.push(path);
    Ok(BufWriter::new(f))
}

/// Writes per-stage report, device and network CSVs, the JSON summary and
/// the eigenvalue dump.
pub fn write_outputs(
    analysis: &Analysis,
    eigen: Option<&EigenReport>,
    dir: &Path,
    formats: &[Format],
) -> Result<Vec<PathBuf>, ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::Io { path: dir.to_path_buf(), source: e })?;
    let mut files = Vec::new();
    if formats.contains(&Format::Csv) {
        for r in analysis.reports() {
            let stage = r.stage.as_str();
            write_report_csv(r, create(dir, &format!("report_{stage}.csv"), &mut files)?)?;
            write_device_profiles(r, create(dir, &format!("devices_{stage}.csv"), &mut files)?)?;
            write_network_profile(r, create(dir, &format!("network_{stage}.csv"), &mut files)?)?;
        }
    }
    if formats.contains(&Format::Json) {
        let json = analysis.summary().to_json()?;
        let path = dir.join("summary.json");
        std::fs::write(&path, json + "\n").map_err(|e| ScenarioError::Io { path: path.clone(), source: e })?;
        files.push(path);
    }
    if let Some(e) = eigen {
        write_eigen_csv(e, create(dir, "eigenvalues.csv", &mut files)?)?;
    }
    Ok(files)
}

/// Builds, analyzes and writes outputs; `out` overrides the configured
/// directory.
pub fn run(config: &AnalysisConfig, base_dir: &Path, out: Option<&Path>) -> Result<RunOutcome, ScenarioError> {
    let sc = config.build(base_dir)?;
    let analysis = analyze(&sc)?;
    let eigen = if sc.oracle { Some(closed_loop_eigs(&sc.devices, &sc.net)?) } else { None };
    let dir = out.unwrap_or(&config.output.dir);
    let files = write_outputs(&analysis, eigen.as_ref(), dir, &config.output.formats)?;
    let summary = analysis.summary();
    let status = if summary.stable { ExitStatus::Stable } else { ExitStatus::NotCertified };
    Ok(RunOutcome { analysis, summary, eigen, files, status })
}

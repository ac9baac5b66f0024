//! Frequency sweeps of the decentralized gain / phase conditions.

mod grid;
mod profile;
mod report;
mod sweep;

use thiserror::Error;

use crate::devmodel::DevError;
use crate::matphase::PhaseError;
use crate::network::NetError;

pub use grid::{
    from_hz, to_hz, FrequencyGrid, DEFAULT_HI, DEFAULT_LO, DEFAULT_POINTS, DEFAULT_REFINE_BUDGET, INFINITY_FACTOR,
    NUDGE_STEP, NUDGE_WINDOW, REFINE_REL_WIDTH,
};
pub use profile::{check_conditions, device_sample, rescaled_device_response, Check, GainPhase, NetSample, NetworkView};
pub use report::{
    read_summary, write_device_profiles, write_network_profile, write_report_csv, BandSummary, CulpritSummary,
    PointVerdict, ReportSummary,
    StageSummary, TransitionSummary,
};
pub use sweep::{
    absorbed_by_default, corollary_check, corollary_with_gscr, evaluate_point, monolithic, sweep, two_stage, Band,
    Culprit, PointFlag, PointResult, Problem, Stage, StabilityReport, Transition, TwoStageReport,
    TRANSITION_REL_WIDTH,
};

#[derive(Debug, Error)]
pub enum CriteriaError {
    #[error("frequency grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Device(#[from] DevError),
    #[error(transparent)]
    Network(#[from] NetError),
    #[error("report output: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::criteria::{from_hz, FrequencyGrid, DEFAULT_HI, DEFAULT_LO, DEFAULT_POINTS, DEFAULT_REFINE_BUDGET};
use crate::devmodel::{
    gfl_admittance, gfm_admittance, sg_admittance, DeviceAdmittance, DeviceClass, GflParams, GfmParams,
    OperatingPoint, SgParams, TabulatedResponse, DEFAULT_OMEGA0,
};
use crate::network::{Branch, NetworkModel, Rescaling};

use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub network: NetworkConfig,
    pub devices: Vec<DeviceConfig>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Buses are numbered `1..=buses`.
    pub buses: usize,
    /// The infinite bus; `buses + 1` (the default) adds a separate ground.
    #[serde(default)]
    pub ground: Option<usize>,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    pub branches: Vec<BranchConfig>,
    /// Data the fixture could not provide and that must be filled in.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub user_supplied: Vec<String>,
}

fn default_omega0() -> f64 {
    DEFAULT_OMEGA0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Rl,
    Load,
    Shunt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub from: usize,
    pub to: usize,
    pub kind: BranchKind,
    /// Series susceptance `1/X` of an RL branch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// `R/X` of an RL branch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Load resistance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Shunt capacitance (pu·s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

impl BranchConfig {
    pub fn rl(from: usize, to: usize, b: f64, eps: f64) -> Self {
        Self { from, to, kind: BranchKind::Rl, b: Some(b), eps: Some(eps), r: None, c: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    /// Checked against the (equivalent) network.
    Checked,
    /// Merged into the equivalent network in the two-stage mode.
    Absorbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub id: String,
    pub node: usize,
    pub class: DeviceClass,
    #[serde(default = "one")]
    pub capacity: f64,
    #[serde(default)]
    pub theta: f64,
    /// Rescaling weight `D_i`.
    #[serde(default = "one")]
    pub d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<Group>,
    /// Overrides of the operating point defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<toml::Table>,
    /// Overrides of the class's parameter defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<toml::Table>,
    /// Admittance table of a tabulated device, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    /// Open-loop stability of a tabulated device.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_stable: Option<bool>,
}

fn one() -> f64 {
    1.0
}

impl DeviceConfig {
    pub fn new(id: &str, node: usize, class: DeviceClass) -> Self {
        Self {
            id: id.to_string(),
            node,
            class,
            capacity: 1.0,
            theta: 0.0,
            d: 1.0,
            group: None,
            op: None,
            params: None,
            table: None,
            declared_stable: None,
        }
    }

    pub fn with_params(mut self, params: toml::Table) -> Self {
        self.params = Some(params);
        self
    }

    pub fn group(&self) -> Group {
        self.group.unwrap_or(match self.class {
            DeviceClass::Gfm | DeviceClass::Sg => Group::Absorbed,
            DeviceClass::Gfl | DeviceClass::Tabulated => Group::Checked,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Monolithic,
    TwoStage,
    Corollary,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Monolithic => "monolithic",
            Mode::TwoStage => "two_stage",
            Mode::Corollary => "corollary",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "monolithic" => Ok(Mode::Monolithic),
            "two_stage" | "two-stage" => Ok(Mode::TwoStage),
            "corollary" => Ok(Mode::Corollary),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsChoice {
    /// `"mean"`: the average R/X ratio of the RL branches.
    Named(String),
    Value(f64),
}

impl Default for EpsChoice {
    fn default() -> Self {
        EpsChoice::Named("mean".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmin_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fmax_hz: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub eps_tilde: EpsChoice,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_budget")]
    pub refine_budget: usize,
}

fn default_points() -> usize {
    DEFAULT_POINTS
}

fn default_budget() -> usize {
    DEFAULT_REFINE_BUDGET
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            fmin_hz: None,
            fmax_hz: None,
            points: DEFAULT_POINTS,
            eps_tilde: EpsChoice::default(),
            mode: Mode::default(),
            refine_budget: DEFAULT_REFINE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Also compute closed-loop eigenvalues.
    #[serde(default)]
    pub oracle: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), formats: default_formats(), oracle: false }
    }
}

/// Everything a run needs, with device `i` at network node `i + 1`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub devices: Vec<DeviceAdmittance>,
    pub absorbed: Vec<bool>,
    pub net: NetworkModel<f64>,
    pub rescaling: Rescaling<f64>,
    pub grid: FrequencyGrid,
    pub mode: Mode,
    pub oracle: bool,
    /// Original bus id of every network node, in network order.
    pub bus_of_node: Vec<usize>,
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { path: path.into(), message: message.into() }
}

/// Deserializes `T` from its defaults overridden by `table`.
fn merged<T: Serialize + serde::de::DeserializeOwned>(
    defaults: &T,
    table: Option<&toml::Table>,
    path: &str,
) -> Result<T, ScenarioError> {
    let mut base = toml::Table::try_from(defaults).map_err(|e| invalid(path, e.to_string()))?;
    if let Some(t) = table {
        merge_into(&mut base, t, path)?;
    }
    toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| invalid(path, e.message().to_string()))
}

fn merge_into(base: &mut toml::Table, over: &toml::Table, path: &str) -> Result<(), ScenarioError> {
    for (k, v) in over {
        let here = format!("{path}.{k}");
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_into(b, o, &here)?,
            (Some(slot), _) => *slot = v.clone(),
            (None, _) => return Err(invalid(here, "unknown field")),
        }
    }
    Ok(())
}

impl AnalysisConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ScenarioError::Parse { path: String::new(), message: e.to_string() })?;
        serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        toml::to_string_pretty(self).map_err(|e| invalid("", e.to_string()))
    }

    fn ground(&self) -> usize {
        self.network.ground.unwrap_or(self.network.buses + 1)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let nw = &self.network;
        let ground = self.ground();
        if ground == 0 || ground > nw.buses + 1 {
            return Err(invalid("network.ground", format!("bus {ground} does not exist")));
        }
        if !(nw.omega0 > 0.0) {
            return Err(invalid("network.omega0", "must be positive"));
        }
        let in_range = |b: usize| b >= 1 && (b <= nw.buses || b == ground);
        for (k, br) in nw.branches.iter().enumerate() {
            let p = format!("network.branches[{k}]");
            if !in_range(br.from) {
                return Err(invalid(format!("{p}.from"), format!("bus {} does not exist", br.from)));
            }
            if !in_range(br.to) {
                return Err(invalid(format!("{p}.to"), format!("bus {} does not exist", br.to)));
            }
            let need = |v: Option<f64>, name: &str, what: &str| -> Result<f64, ScenarioError> {
                let v = v.ok_or_else(|| invalid(format!("{p}.{name}"), format!("missing {what}")))?;
                if !v.is_finite() {
                    return Err(invalid(format!("{p}.{name}"), "must be finite"));
                }
                Ok(v)
            };
            match br.kind {
                BranchKind::Rl => {
                    if need(br.b, "b", "branch susceptance")? <= 0.0 {
                        return Err(invalid(format!("{p}.b"), "must be positive"));
                    }
                    if need(br.eps.or(Some(0.0)), "eps", "R/X ratio")? < 0.0 {
                        return Err(invalid(format!("{p}.eps"), "must be non-negative"));
                    }
                }
                BranchKind::Load => {
                    if need(br.r, "r", "load resistance")? <= 0.0 {
                        return Err(invalid(format!("{p}.r"), "must be positive"));
                    }
                }
                BranchKind::Shunt => {
                    if need(br.c, "c", "shunt capacitance")? <= 0.0 {
                        return Err(invalid(format!("{p}.c"), "must be positive"));
                    }
                }
            }
        }
        if self.devices.is_empty() {
            return Err(invalid("devices", "at least one device is required"));
        }
        let mut seen = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for (k, d) in self.devices.iter().enumerate() {
            let p = format!("devices[{k}]");
            if d.node == 0 || d.node > nw.buses || d.node == ground {
                return Err(invalid(format!("{p}.node"), format!("bus {} is not a device bus", d.node)));
            }
            if !seen.insert(d.node) {
                return Err(invalid(format!("{p}.node"), format!("bus {} already has a device", d.node)));
            }
            if !ids.insert(d.id.as_str()) {
                return Err(invalid(format!("{p}.id"), format!("duplicate id `{}`", d.id)));
            }
            if !(d.capacity > 0.0) {
                return Err(invalid(format!("{p}.capacity"), "must be positive"));
            }
            if !(d.d > 0.0) {
                return Err(invalid(format!("{p}.d"), "must be positive"));
            }
            if d.class == DeviceClass::Tabulated {
                if d.table.is_none() {
                    return Err(invalid(format!("{p}.table"), "tabulated devices need a table"));
                }
                if d.declared_stable.is_none() {
                    return Err(invalid(format!("{p}.declared_stable"), "open-loop stability must be declared"));
                }
                if self.output.oracle {
                    return Err(invalid("output.oracle", format!("device `{}` has no state-space realization", d.id)));
                }
            }
        }
        let s = &self.sweep;
        if let EpsChoice::Named(n) = &s.eps_tilde {
            if n != "mean" {
                return Err(invalid("sweep.eps_tilde", format!("expected \"mean\" or a number, found `{n}`")));
            }
        }
        if let EpsChoice::Value(v) = s.eps_tilde {
            if !(v >= 0.0) {
                return Err(invalid("sweep.eps_tilde", "must be non-negative"));
            }
        }
        if s.points < 2 {
            return Err(invalid("sweep.points", "at least two points are required"));
        }
        Ok(())
    }

    fn build_device(&self, k: usize, base_dir: &Path) -> Result<DeviceAdmittance, ScenarioError> {
        let d = &self.devices[k];
        let p = format!("devices[{k}]");
        let mut op_default = OperatingPoint { omega0: self.network.omega0, ..OperatingPoint::default() };
        op_default.theta = d.theta;
        let op: OperatingPoint = merged(&op_default, d.op.as_ref(), &format!("{p}.op"))?;
        let dev_err = |e: crate::devmodel::DevError| ScenarioError::Device { path: p.clone(), source: e };
        let dev = match d.class {
            DeviceClass::Gfl => {
                let params: GflParams = merged(&GflParams::default(), d.params.as_ref(), &format!("{p}.params"))?;
                gfl_admittance(d.id.clone(), &params, &op).map_err(dev_err)?
            }
            DeviceClass::Gfm => {
                let params: GfmParams = merged(&GfmParams::default(), d.params.as_ref(), &format!("{p}.params"))?;
                gfm_admittance(d.id.clone(), &params, &op).map_err(dev_err)?
            }
            DeviceClass::Sg => {
                let params: SgParams = merged(&SgParams::default(), d.params.as_ref(), &format!("{p}.params"))?;
                sg_admittance(d.id.clone(), &params, &op).map_err(dev_err)?
            }
            DeviceClass::Tabulated => {
                let rel = d.table.as_ref().expect("validated");
                let path = base_dir.join(rel);
                let f = std::fs::File::open(&path).map_err(|e| ScenarioError::Io { path: path.clone(), source: e })?;
                let t = TabulatedResponse::read_csv(f).map_err(dev_err)?;
                let mut dev = DeviceAdmittance::new(
                    d.id.clone(),
                    DeviceClass::Tabulated,
                    1.0,
                    0.0,
                    crate::devmodel::Response::Tabulated(t),
                )
                .with_omega0(self.network.omega0);
                dev.declared_stable = d.declared_stable;
                dev
            }
        };
        let dev = dev.with_capacity(d.capacity).map_err(dev_err)?.with_theta(d.theta);
        Ok(dev)
    }

    /// Validates and assembles the run inputs; relative table paths resolve
    /// against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Scenario, ScenarioError> {
        self.validate()?;
        let nw = &self.network;
        let ground = self.ground();
        // device buses first, in device order
        let mut bus_of_node: Vec<usize> = self.devices.iter().map(|d| d.node).collect();
        let dev_buses: BTreeSet<usize> = bus_of_node.iter().copied().collect();
        bus_of_node.extend((1..=nw.buses).filter(|b| *b != ground && !dev_buses.contains(b)));
        let m = bus_of_node.len();
        let mut node_of_bus = vec![0usize; nw.buses + 2];
        for (i, &b) in bus_of_node.iter().enumerate() {
            node_of_bus[b] = i + 1;
        }
        node_of_bus[ground] = m + 1;
        let branches = nw
            .branches
            .iter()
            .map(|br| {
                let (f, t) = (node_of_bus[br.from], node_of_bus[br.to]);
                match br.kind {
                    BranchKind::Rl => Branch::rl(f, t, br.b.unwrap(), br.eps.unwrap_or(0.0)),
                    BranchKind::Load => Branch::load(f, t, br.r.unwrap()),
                    BranchKind::Shunt => Branch::shunt(f, t, br.c.unwrap()),
                }
            })
            .collect();
        let net = NetworkModel::new(m, self.devices.len(), branches, nw.omega0)
            .map_err(|e| ScenarioError::Network { path: "network".into(), source: e })?;

        let devices = (0..self.devices.len()).map(|k| self.build_device(k, base_dir)).collect::<Result<Vec<_>, _>>()?;
        let eps = match self.sweep.eps_tilde {
            EpsChoice::Value(v) => v,
            EpsChoice::Named(_) => net.mean_ratio(),
        };
        let rescaling = Rescaling {
            s: self.devices.iter().map(|d| d.capacity).collect(),
            d: self.devices.iter().map(|d| d.d).collect(),
            eps_tilde: eps,
        };

        let w0 = nw.omega0;
        let lo = self.sweep.fmin_hz.map_or(DEFAULT_LO * w0, from_hz);
        let hi = self.sweep.fmax_hz.map_or(DEFAULT_HI * w0, from_hz);
        let mut grid = FrequencyGrid::standard_with(w0, self.sweep.points, lo, hi)
            .map_err(|e| invalid("sweep", e.to_string()))?
            .with_refine_budget(self.sweep.refine_budget);
        if net.has_lossless_line() || eps == 0.0 {
            grid = grid.nudged(w0);
        }
        let (mut t_lo, mut t_hi) = (0.0f64, f64::INFINITY);
        for d in devices.iter().filter(|d| d.class == DeviceClass::Tabulated) {
            let (a, b) = d.omega_range();
            t_lo = t_lo.max(a);
            t_hi = t_hi.min(b);
        }
        if t_hi.is_finite() || t_lo > 0.0 {
            grid = grid.clipped(t_lo, t_hi).map_err(|e| invalid("sweep", format!("tabulated range: {e}")))?;
        }
        Ok(Scenario {
            absorbed: self.devices.iter().map(|d| d.group() == Group::Absorbed).collect(),
            devices,
            net,
            rescaling,
            grid,
            mode: self.sweep.mode,
            oracle: self.output.oracle,
            bus_of_node,
        })
    }
}

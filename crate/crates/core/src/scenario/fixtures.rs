use toml::toml;

use crate::devmodel::DeviceClass;

use super::config::{
    AnalysisConfig, BranchConfig, DeviceConfig, Mode, NetworkConfig, OutputConfig, SweepConfig,
};
use super::ScenarioError;

pub const FIXTURES: [&str; 4] = ["example2", "example3", "example4", "bus68-partial"];

pub fn fixture(name: &str) -> Result<AnalysisConfig, ScenarioError> {
    match name {
        "example2" => Ok(example2(0.2)),
        "example3" => Ok(example3()),
        "example4" => Ok(example4()),
        "bus68-partial" => Ok(bus68_partial()),
        _ => Err(ScenarioError::UnknownFixture(name.to_string())),
    }
}

fn gfl(id: &str, node: usize, pll_bw: f64) -> DeviceConfig {
    DeviceConfig::new(id, node, DeviceClass::Gfl).with_params(toml! { pll_bw = pll_bw })
}

fn config(buses: usize, branches: Vec<BranchConfig>, devices: Vec<DeviceConfig>, mode: Mode) -> AnalysisConfig {
    AnalysisConfig {
        network: NetworkConfig {
            buses,
            ground: None,
            omega0: crate::devmodel::DEFAULT_OMEGA0,
            branches,
            user_supplied: Vec::new(),
        },
        devices,
        sweep: SweepConfig { mode, ..SweepConfig::default() },
        output: OutputConfig::default(),
    }
}

/// One GFL converter behind a lossless line of reactance `x`.
pub fn example2(x: f64) -> AnalysisConfig {
    config(1, vec![BranchConfig::rl(1, 2, 1.0 / x, 0.0)], vec![gfl("c1", 1, 40.0)], Mode::Corollary)
}

/// Three converters on a lossless star with gSCR 4.82.
fn star(devices: Vec<DeviceConfig>, mode: Mode) -> AnalysisConfig {
    let mut br: Vec<_> = (1..=3).map(|i| BranchConfig::rl(i, 4, 30.0, 0.0)).collect();
    br.push(BranchConfig::rl(4, 5, 17.228, 0.0));
    config(4, br, devices, mode)
}

pub fn example3() -> AnalysisConfig {
    star(vec![gfl("c1", 1, 70.0), gfl("c2", 2, 40.0), gfl("c3", 3, 150.0)], Mode::Monolithic)
}

pub fn example4() -> AnalysisConfig {
    let gfm = DeviceConfig::new("c3", 3, DeviceClass::Gfm).with_params(toml! { j_v = 2.0 d_v = 50.0 });
    star(vec![gfl("c1", 1, 70.0), gfl("c2", 2, 40.0), gfm], Mode::TwoStage)
}

/// Line impedances `(from, to, R, X)` in units of 1e-2 pu.
const BUS68_LINES: [(usize, usize, f64, f64); 83] = [
    (1, 54, 0.0, 0.0905), (2, 58, 0.0, 0.1250), (3, 62, 0.0, 0.1), (4, 19, 0.0035, 0.071),
    (5, 20, 0.0045, 0.09), (6, 22, 0.0, 0.0715), (7, 23, 0.0025, 0.136), (8, 25, 0.003, 0.116),
    (9, 29, 0.004, 0.078), (10, 31, 0.0, 0.13), (11, 32, 0.0, 0.065), (12, 36, 0.0, 0.0375),
    (13, 17, 0.0, 0.2475), (14, 41, 0.0, 0.0075), (15, 42, 0.0, 0.0075), (16, 18, 0.0, 0.015),
    (17, 36, 0.0025, 0.0225), (17, 43, 0.0025, 0.138), (18, 42, 0.002, 0.03), (18, 49, 0.038, 0.5709),
    (18, 50, 0.006, 0.144), (19, 20, 0.0035, 0.069), (19, 68, 0.008, 0.0976), (21, 22, 0.004, 0.07),
    (21, 68, 0.004, 0.0675), (22, 23, 0.003, 0.048), (23, 24, 0.011, 0.175), (24, 68, 0.0015, 0.0295),
    (25, 26, 0.016, 0.1615), (25, 54, 0.035, 0.043), (26, 27, 0.007, 0.0735), (26, 28, 0.0215, 0.237),
    (26, 29, 0.0285, 0.3125), (27, 37, 0.0065, 0.0865), (27, 53, 0.16, 1.6), (28, 29, 0.007, 0.0755),
    (30, 31, 0.0065, 0.0935), (30, 32, 0.012, 0.144), (30, 53, 0.004, 0.037), (30, 61, 0.0047, 0.0458),
    (31, 38, 0.0055, 0.0735), (31, 53, 0.008, 0.0815), (32, 33, 0.004, 0.0495), (33, 34, 0.0055, 0.0785),
    (33, 38, 0.018, 0.222), (34, 35, 0.0005, 0.037), (34, 36, 0.0165, 0.0555), (35, 45, 0.0035, 0.0875),
    (36, 61, 0.0055, 0.049), (37, 52, 0.0035, 0.041), (37, 68, 0.0035, 0.0445), (38, 46, 0.011, 0.142),
    (39, 44, 0.0, 0.2055), (39, 45, 0.0, 0.4195), (40, 41, 0.03, 0.42), (40, 48, 0.01, 0.11),
    (41, 42, 0.02, 0.3), (43, 44, 0.0005, 0.0055), (44, 45, 0.0125, 0.365), (45, 51, 0.002, 0.0525),
    (46, 49, 0.009, 0.137), (47, 48, 0.0063, 0.067), (47, 53, 0.0065, 0.094), (50, 51, 0.0045, 0.1105),
    (52, 55, 0.0055, 0.0665), (53, 54, 0.0175, 0.2055), (54, 55, 0.0065, 0.0755), (55, 56, 0.0065, 0.1065),
    (56, 57, 0.004, 0.064), (56, 66, 0.004, 0.0645), (57, 58, 0.001, 0.013), (57, 60, 0.004, 0.056),
    (58, 59, 0.003, 0.046), (58, 63, 0.0035, 0.041), (59, 60, 0.002, 0.023), (60, 61, 0.0115, 0.1815),
    (62, 63, 0.002, 0.0215), (62, 65, 0.002, 0.0215), (63, 64, 0.008, 0.2175), (64, 65, 0.008, 0.2175),
    (65, 66, 0.0045, 0.0505), (66, 67, 0.009, 0.1085), (67, 68, 0.0045, 0.047),
];

/// The modified 68-bus system: GFM at buses 1–4, GFL at 5–13, SG at 14–15,
/// bus 16 as the infinite bus. Loads, line-charging shunts and unit
/// capacities are not part of the built-in data.
pub fn bus68_partial() -> AnalysisConfig {
    let branches = BUS68_LINES
        .iter()
        .map(|&(f, t, r, x)| BranchConfig::rl(f, t, 1.0 / (x * 1e-2), r / x))
        .collect();
    let mut devices = Vec::new();
    for i in 1..=4 {
        let (l_g, j_v) = if i == 1 { (0.12, 0.2) } else { (0.1, 4.0) };
        devices.push(
            DeviceConfig::new(&format!("gfm{i}"), i, DeviceClass::Gfm)
                .with_params(toml! { l_g = l_g j_v = j_v d_v = 50.0 }),
        );
    }
    for i in 5..=13 {
        let l_g = if i <= 11 { 0.2 } else { 0.26 };
        devices.push(
            DeviceConfig::new(&format!("gfl{i}"), i, DeviceClass::Gfl)
                .with_params(toml! { l_g = l_g pll_variant = "normalized_ff" }),
        );
    }
    for i in 14..=15 {
        devices.push(DeviceConfig::new(&format!("sg{i}"), i, DeviceClass::Sg));
    }
    let mut c = config(68, branches, devices, Mode::TwoStage);
    c.network.ground = Some(16);
    c.network.user_supplied = vec![
        "network.branches: loads".into(),
        "network.branches: line-charging shunts".into(),
        "devices.capacity".into(),
    ];
    c
}

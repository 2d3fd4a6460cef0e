//! Scenario configuration read from a TOML document.
//!
//! Every physical quantity is expressed in units of the damping rate `A`: rates and
//! frequencies carry a `_per_A` suffix and times are given as the product `At`.

use std::fmt;

use oscdamp::{Branch, DetectionConfig, KickPair, OscillatorParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub fock_dim: usize,
    pub oscillator: OscillatorSection,
    #[serde(default)]
    pub kick: KickSection,
    pub detection: Option<DetectionSection>,
    pub time: Option<TimeSection>,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub counting: CountingSection,
    pub kicked: Option<KickedSection>,
    pub trajectory: Option<TrajectorySection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSection {
    #[serde(rename = "omega_per_A", default)]
    pub omega_per_a: f64,
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KickSection {
    /// Atoms leave the field alone and exit `down` with a fixed probability.
    None {
        #[serde(default = "half")]
        down_probability: f64,
    },
    Jc {
        phi_rad: f64,
    },
    Parity,
    OnePhoton {
        p: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl Default for KickSection {
    fn default() -> Self {
        Self::None { down_probability: half() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub eta_down: f64,
    pub eta_up: f64,
    #[serde(rename = "rate_per_A")]
    pub rate_per_a: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "start_At", default)]
    pub start_at: f64,
    #[serde(rename = "end_At")]
    pub end_at: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_points() -> usize {
    101
}

fn default_spacing() -> Spacing {
    Spacing::Linear
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub n_max: usize,
    pub k_max: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { n_max: 5, k_max: 3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchName {
    Down,
    Up,
}

impl From<BranchName> for Branch {
    fn from(b: BranchName) -> Self {
        match b {
            BranchName::Down => Branch::Down,
            BranchName::Up => Branch::Up,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingSection {
    pub branch: BranchName,
    pub n_max: usize,
}

impl Default for CountingSection {
    fn default() -> Self {
        Self { branch: BranchName::Down, n_max: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KickedSection {
    #[serde(rename = "period_At")]
    pub period_at: f64,
    pub periods: usize,
    #[serde(default = "default_samples")]
    pub samples_per_period: usize,
    #[serde(default)]
    pub initial_fock: usize,
}

fn default_samples() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySection {
    #[serde(rename = "end_At")]
    pub end_at: f64,
    #[serde(rename = "sample_At")]
    pub sample_at: f64,
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_observers")]
    pub observers: Vec<String>,
}

fn one() -> usize {
    1
}

fn default_observers() -> Vec<String> {
    ["bob", "chuck", "doris", "alice"].map(String::from).to_vec()
}

pub const OBSERVER_NAMES: [&str; 4] = ["alice", "bob", "chuck", "doris"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Also write a JSON mirror of every table.
    #[serde(default)]
    pub json: bool,
}

/// What a subcommand needs from the configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Steady,
    Correlations,
    Waiting,
    Counting,
    Fano,
    Kicked,
    Trajectory,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Steady => "steady",
            Self::Correlations => "correlations",
            Self::Waiting => "waiting",
            Self::Counting => "counting",
            Self::Fano => "fano",
            Self::Kicked => "kicked",
            Self::Trajectory => "trajectory",
        }
    }

    fn uses_detection(self) -> bool {
        matches!(self, Self::Correlations | Self::Waiting | Self::Counting | Self::Fano | Self::Trajectory)
    }

    fn uses_time(self) -> bool {
        matches!(self, Self::Correlations | Self::Waiting | Self::Counting | Self::Fano)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        toml::from_str(text).map_err(|e| vec![e.to_string().trim_end().to_string()])
    }

    /// Canonical serialisation, independent of formatting and key order in the source.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn sha256(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every violated precondition for running `cmd`.
    pub fn validate(&self, cmd: Command) -> Vec<String> {
        let mut errs = Vec::new();
        if self.fock_dim < 2 {
            errs.push(format!("fock_dim = {} must be at least 2", self.fock_dim));
        }
        let o = &self.oscillator;
        if !o.omega_per_a.is_finite() {
            errs.push("oscillator.omega_per_A must be finite".into());
        }
        if !(o.nu.is_finite() && o.nu >= 0.0) {
            errs.push(format!("oscillator.nu = {} must be finite and non-negative", o.nu));
        }
        match &self.kick {
            KickSection::None { down_probability } if !in_unit(*down_probability) => {
                errs.push(format!("kick.down_probability = {down_probability} must lie in [0, 1]"))
            }
            KickSection::Jc { phi_rad } if !phi_rad.is_finite() => errs.push("kick.phi_rad must be finite".into()),
            KickSection::OnePhoton { p } if !in_unit(*p) => errs.push(format!("kick.p = {p} must lie in [0, 1]")),
            _ => {}
        }
        if cmd.uses_detection() {
            if matches!(self.kick, KickSection::OnePhoton { .. }) {
                errs.push(format!("`{cmd}` needs a kick with two outcomes (none, jc or parity), not one_photon"));
            }
            match &self.detection {
                None => errs.push(format!("`{cmd}` needs a [detection] section")),
                Some(d) => {
                    if !in_unit(d.eta_down) {
                        errs.push(format!("detection.eta_down = {} must lie in [0, 1]", d.eta_down));
                    }
                    if !in_unit(d.eta_up) {
                        errs.push(format!("detection.eta_up = {} must lie in [0, 1]", d.eta_up));
                    }
                    if !(d.rate_per_a.is_finite() && d.rate_per_a > 0.0) {
                        errs.push(format!("detection.rate_per_A = {} must be positive", d.rate_per_a));
                    }
                    let needs_eta = |b: BranchName| match b {
                        BranchName::Down => d.eta_down > 0.0,
                        BranchName::Up => d.eta_up > 0.0,
                    };
                    match cmd {
                        Command::Waiting | Command::Fano if !(d.eta_down > 0.0 || d.eta_up > 0.0) => {
                            errs.push(format!("`{cmd}` needs a detector with positive efficiency"))
                        }
                        Command::Counting if !needs_eta(self.counting.branch) => errs.push(format!(
                            "counting.branch = {:?} has zero detection efficiency",
                            self.counting.branch
                        )),
                        _ => {}
                    }
                }
            }
        }
        if cmd.uses_time() {
            match &self.time {
                None => errs.push(format!("`{cmd}` needs a [time] section")),
                Some(t) => {
                    if !(t.start_at.is_finite() && t.start_at >= 0.0) {
                        errs.push(format!("time.start_At = {} must be non-negative", t.start_at));
                    }
                    if !(t.end_at.is_finite() && t.end_at > t.start_at) {
                        errs.push(format!("time.end_At = {} must exceed time.start_At", t.end_at));
                    }
                    if t.points < 2 {
                        errs.push(format!("time.points = {} must be at least 2", t.points));
                    }
                    if t.spacing == Spacing::Log && !(t.start_at > 0.0) {
                        errs.push("time.start_At must be positive for log spacing".into());
                    }
                }
            }
        }
        if cmd == Command::Counting && self.counting.n_max == 0 {
            errs.push("counting.n_max must be positive".into());
        }
        let needs_period = cmd == Command::Kicked || (cmd == Command::Steady && matches!(self.kick, KickSection::OnePhoton { .. }));
        if needs_period {
            match &self.kicked {
                None => errs.push(format!("`{cmd}` with this kick needs a [kicked] section")),
                Some(k) => {
                    if !(k.period_at.is_finite() && k.period_at > 0.0) {
                        errs.push(format!("kicked.period_At = {} must be positive", k.period_at));
                    }
                    if cmd == Command::Kicked {
                        if k.periods == 0 {
                            errs.push("kicked.periods must be positive".into());
                        }
                        if k.samples_per_period == 0 {
                            errs.push("kicked.samples_per_period must be positive".into());
                        }
                        if k.initial_fock >= self.fock_dim {
                            errs.push(format!("kicked.initial_fock = {} must be below fock_dim", k.initial_fock));
                        }
                    }
                }
            }
        }
        if cmd == Command::Trajectory {
            match &self.trajectory {
                None => errs.push("`trajectory` needs a [trajectory] section".into()),
                Some(t) => {
                    if !(t.end_at.is_finite() && t.end_at > 0.0) {
                        errs.push(format!("trajectory.end_At = {} must be positive", t.end_at));
                    }
                    if !(t.sample_at.is_finite() && t.sample_at > 0.0) {
                        errs.push(format!("trajectory.sample_At = {} must be positive", t.sample_at));
                    }
                    if t.seeds == 0 {
                        errs.push("trajectory.seeds must be positive".into());
                    }
                    for name in &t.observers {
                        if !OBSERVER_NAMES.contains(&name.as_str()) {
                            errs.push(format!("unknown observer `{name}`; expected one of {}", OBSERVER_NAMES.join(", ")));
                        }
                    }
                }
            }
        }
        errs
    }

    /// Oscillator parameters in units where `A = 1`.
    pub fn params(&self) -> oscdamp::Result<OscillatorParams> {
        OscillatorParams::new(self.oscillator.omega_per_a, 1.0, self.oscillator.nu)
    }

    pub fn kick_pair(&self) -> oscdamp::Result<KickPair> {
        let d = self.fock_dim;
        match &self.kick {
            KickSection::None { down_probability } => KickPair::trivial(*down_probability, d),
            KickSection::Jc { phi_rad } => KickPair::jc(*phi_rad, d),
            KickSection::Parity => KickPair::parity(d),
            KickSection::OnePhoton { .. } => Err(oscdamp::Error::Domain("one_photon kicks have a single outcome".into())),
        }
    }

    pub fn detection_config(&self) -> oscdamp::Result<DetectionConfig> {
        let d = self
            .detection
            .as_ref()
            .ok_or_else(|| oscdamp::Error::Domain("missing [detection] section".into()))?;
        DetectionConfig::new(d.eta_down, d.eta_up, d.rate_per_a)
    }

    pub fn time_grid(&self) -> Vec<f64> {
        let Some(t) = &self.time else { return Vec::new() };
        let last = (t.points - 1) as f64;
        (0..t.points)
            .map(|i| {
                let f = i as f64 / last;
                match t.spacing {
                    Spacing::Linear => t.start_at + (t.end_at - t.start_at) * f,
                    Spacing::Log => t.start_at * (t.end_at / t.start_at).powf(f),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PARITY: &str = r#"
fock_dim = 72
[oscillator]
nu = 2.0
[kick]
kind = "parity"
[detection]
eta_down = 0.1
eta_up = 0.15
rate_per_A = 10.0
[time]
end_At = 5.0
points = 6
"#;

    #[test]
    fn parses_units_in_key_names() {
        let c = ScenarioConfig::parse(PARITY).unwrap();
        assert_eq!(c.kick, KickSection::Parity);
        assert_eq!(c.detection.as_ref().unwrap().rate_per_a, 10.0);
        assert_eq!(c.time_grid(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(c.validate(Command::Correlations).is_empty());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = PARITY.replace("rate_per_A", "rate");
        assert!(ScenarioConfig::parse(&text).is_err());
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ScenarioConfig::parse(PARITY).unwrap();
        let b = ScenarioConfig::parse(&PARITY.replace("nu = 2.0", "nu   =   2.00")).unwrap();
        assert_eq!(a.sha256(), b.sha256());
        let c = ScenarioConfig::parse(&PARITY.replace("nu = 2.0", "nu = 2.5")).unwrap();
        assert_ne!(a.sha256(), c.sha256());
        assert_eq!(a.sha256().len(), 64);
    }

    #[test]
    fn validation_lists_every_problem() {
        let text = PARITY
            .replace("eta_down = 0.1", "eta_down = 1.5")
            .replace("nu = 2.0", "nu = -1.0")
            .replace("points = 6", "points = 1");
        let c = ScenarioConfig::parse(&text).unwrap();
        let errs = c.validate(Command::Fano);
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert!(c.validate(Command::Spectrum).len() == 1);
        let errs = c.validate(Command::Trajectory);
        assert!(errs.iter().any(|e| e.contains("[trajectory]")));
    }

    #[test]
    fn log_grid() {
        let text = PARITY.replace("[time]", "[time]\nstart_At = 0.01\nspacing = \"log\"").replace("end_At = 5.0", "end_At = 100.0").replace("points = 6", "points = 3");
        let c = ScenarioConfig::parse(&text).unwrap();
        let g = c.time_grid();
        assert!((g[1] - 1.0).abs() < 1e-12 && (g[2] - 100.0).abs() < 1e-12);
    }
}

//! Run configuration: parsing, defaults, command-line overrides and
//! resolution into core types.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twisted_ep::dilation::MetricScaling;
use twisted_ep::dynamics::{Direction, ModulationSchedule, DEFAULT_SAMPLES, DEFAULT_STEPS, DEFAULT_THRESHOLD};
use twisted_ep::SystemConfig;

use crate::error::CliError;

/// The six loop-realizable generators, as produced by the preset loops.
pub const DEFAULT_GENERATORS: [&str; 6] = [
    "(1,5)(2,6)(3,4)(7,8)",
    "(1,2)(3,6)(4,5)(7,8)",
    "(1,3)(2,6)(4,8)(5,7)",
    "(1,3)(2,6)(4,5)(7,8)",
    "(1,3)(2,4)(5,7)(6,8)",
    "(1,8)(2,6)(3,7)(4,5)",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Spectrum,
    Evolve,
    Permute,
    Group,
    Sweep,
    Stiffness,
    Dilate,
    Betadyne,
}

impl Experiment {
    pub fn uses_schedule(self) -> bool {
        matches!(self, Self::Evolve | Self::Permute | Self::Sweep | Self::Stiffness | Self::Dilate)
    }

    pub fn uses_system(self) -> bool {
        self != Self::Group
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<StiffnessSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilate: Option<DilateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betadyne: Option<BetadyneSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub field_scales: Vec<f64>,
    /// Full symmetric coupling matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<Vec<f64>>>,
    /// Shorthand: every pair coupled with this strength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_coupling: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub r_x: f64,
    pub r_y: f64,
    pub period: f64,
    pub phi0: f64,
    /// +1 counter-clockwise, −1 clockwise.
    pub direction: Direction,
    /// 1-based qubit pairs whose coupling is modulated.
    pub modulated: Vec<(usize, usize)>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { r_x: 3.0, r_y: 6.0, period: 2500.0, phi0: PI, direction: Direction::CounterClockwise, modulated: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub steps: usize,
    pub samples: usize,
    pub threshold: f64,
    pub epsilon: f64,
    pub windings: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Evolve: the initial eigenstate (1-based). Permute: also write its
    /// trajectory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<usize>,
    /// Permute: repeat the loop in the opposite direction and compare.
    pub both_directions: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            samples: DEFAULT_SAMPLES,
            threshold: DEFAULT_THRESHOLD,
            epsilon: 0.0,
            windings: 1,
            threads: None,
            initial_state: None,
            both_directions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub pretty_json: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), pretty_json: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub resolution: (usize, usize),
    pub couplings_scale: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { x_range: (-2.0, 2.0), y_range: (0.0, 2.0), resolution: (81, 81), couplings_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupSection {
    pub generators: Vec<String>,
    pub degree: usize,
    pub normal_subgroups: bool,
}

impl Default for GroupSection {
    fn default() -> Self {
        Self { generators: DEFAULT_GENERATORS.iter().map(|s| s.to_string()).collect(), degree: 8, normal_subgroups: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Epsilon,
    RX,
    RY,
    Period,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StiffnessSection {
    pub circle_radius: f64,
    /// 1-based states whose ripple is compared.
    pub states: Vec<usize>,
    pub sample_stride: usize,
    pub detrend_window: f64,
}

impl Default for StiffnessSection {
    fn default() -> Self {
        Self { circle_radius: 1.0, states: vec![7, 8], sample_stride: 10, detrend_window: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DilateSection {
    pub points: Vec<(f64, f64)>,
    pub scaling: MetricScaling,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DilatedDynamicsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSection>,
}

impl Default for DilateSection {
    fn default() -> Self {
        Self {
            points: vec![(0.5, 0.5), (1.0, 2.0), (-0.7, 3.0), (2.0, -1.5)],
            scaling: MetricScaling::Auto,
            dynamics: None,
            convergence: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DilatedDynamicsSection {
    pub steps_per_period: usize,
    pub fraction: f64,
}

impl Default for DilatedDynamicsSection {
    fn default() -> Self {
        Self { steps_per_period: 50_000, fraction: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub t: f64,
    pub dt0: f64,
    pub levels: usize,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self { t: 700.0, dt0: 1.0, levels: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BetadyneSection {
    pub points: Vec<(f64, f64)>,
    pub gamma: f64,
}

impl Default for BetadyneSection {
    fn default() -> Self {
        Self { points: vec![(0.5, 0.5), (1.0, 2.0), (-0.7, 3.0), (2.0, -1.5)], gamma: 1.0 }
    }
}

/// Values given on the command line; each replaces the config field.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub steps: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub epsilon: Option<f64>,
    pub direction: Option<Direction>,
}

/// A config with every optional part filled in, ready to run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub system: Option<SystemConfig>,
    pub schedule: Option<ModulationSchedule>,
    pub warnings: Vec<String>,
}

/// Reads a config file, or the `config` member of a manifest.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let value = match value {
        serde_json::Value::Object(mut map) if map.contains_key("config") && !map.contains_key("experiment") => {
            map.remove("config").unwrap_or_default()
        }
        v => v,
    };
    serde_json::from_value(value).map_err(|e| e.to_string())
}

pub fn parse_direction(s: &str) -> Result<Direction, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "ccw" | "counterclockwise" | "counter-clockwise" | "+1" | "1" => Ok(Direction::CounterClockwise),
        "cw" | "clockwise" | "-1" => Ok(Direction::Clockwise),
        other => Err(format!("unknown direction {other:?} (use ccw, cw, +1 or -1)")),
    }
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.steps {
            self.numerics.steps = v;
        }
        if let Some(v) = &o.output_dir {
            self.output.directory = v.clone();
        }
        if let Some(v) = o.threads {
            self.numerics.threads = Some(v);
        }
        if let Some(v) = o.epsilon {
            self.numerics.epsilon = v;
        }
        if let Some(v) = o.direction {
            self.schedule.direction = v;
        }
    }

    /// Fills defaults, builds the core objects and checks every invariant
    /// that can be checked without running.
    pub fn resolve(mut self) -> Result<Resolved, CliError> {
        let mut warnings = Vec::new();
        let n = &self.numerics;
        if n.steps == 0 || n.samples < 2 || n.windings == 0 {
            return Err(CliError::Config("steps and windings must be positive and samples at least 2".into()));
        }
        if !(n.threshold > 0.5 && n.threshold <= 1.0) {
            return Err(CliError::Config(format!("threshold {} must lie in (0.5, 1]", n.threshold)));
        }
        if !(n.epsilon >= 0.0 && n.epsilon.is_finite()) {
            return Err(CliError::Config(format!("epsilon {} must be finite and non-negative", n.epsilon)));
        }
        if n.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }

        let system = if self.experiment.uses_system() {
            let section = self
                .system
                .as_mut()
                .ok_or_else(|| CliError::Config(format!("experiment {:?} needs a system section", self.experiment)))?;
            Some(resolve_system(section, &mut warnings)?)
        } else {
            None
        };
        if let (Some(sys), Some(k)) = (&system, self.numerics.initial_state) {
            if k == 0 || k > sys.dim() {
                return Err(CliError::Config(format!("initial_state {k} outside 1..={}", sys.dim())));
            }
        }

        let schedule = match (&system, self.experiment.uses_schedule()) {
            (Some(sys), true) => {
                let s = &self.schedule;
                let schedule =
                    ModulationSchedule::new(sys.clone(), s.r_x, s.r_y, s.period, s.phi0, s.direction, s.modulated.clone())
                        .map_err(|e| CliError::Config(e.to_string()))?;
                Some(schedule)
            }
            _ => None,
        };

        match self.experiment {
            Experiment::Spectrum => {
                let g = self.grid.get_or_insert_with(GridSection::default);
                if g.resolution.0 < 2 || g.resolution.1 < 2 {
                    return Err(CliError::Config("grid resolution must be at least 2 per axis".into()));
                }
            }
            Experiment::Group => {
                let g = self.group.get_or_insert_with(GroupSection::default);
                if g.generators.is_empty() {
                    return Err(CliError::Config("group needs at least one generator".into()));
                }
            }
            Experiment::Sweep => {
                let s = self.sweep.as_ref().ok_or_else(|| CliError::Config("sweep needs a sweep section".into()))?;
                if s.values.is_empty() {
                    return Err(CliError::Config("sweep values are empty".into()));
                }
                if let Some(sched) = &schedule {
                    for &v in &s.values {
                        sweep_schedule(sched, s.parameter, v).map_err(CliError::Config)?;
                    }
                }
            }
            Experiment::Stiffness => {
                let st = self.stiffness.get_or_insert_with(StiffnessSection::default);
                let dim = system.as_ref().map(|s| s.dim()).unwrap_or(0);
                if st.states.is_empty() || st.states.iter().any(|&k| k == 0 || k > dim) {
                    return Err(CliError::Config(format!("stiffness states must lie in 1..={dim}")));
                }
                if !(st.circle_radius > 0.0) {
                    return Err(CliError::Config("circle_radius must be positive".into()));
                }
            }
            Experiment::Dilate => {
                self.dilate.get_or_insert_with(DilateSection::default);
            }
            Experiment::Betadyne => {
                let b = self.betadyne.get_or_insert_with(BetadyneSection::default);
                if !(b.gamma > 0.0 && b.gamma.is_finite()) {
                    return Err(CliError::Config(format!("gamma {} must be positive", b.gamma)));
                }
            }
            Experiment::Evolve | Experiment::Permute => {}
        }

        Ok(Resolved { config: self, system, schedule, warnings })
    }
}

fn resolve_system(section: &mut SystemSection, warnings: &mut Vec<String>) -> Result<SystemConfig, CliError> {
    let n = section.field_scales.len();
    let couplings = match (section.couplings.take(), section.uniform_coupling.take()) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("give either couplings or uniform_coupling, not both".into()));
        }
        (Some(c), None) => c,
        (None, Some(j)) => (0..n).map(|k| (0..n).map(|l| if k == l { 0.0 } else { j }).collect()).collect(),
        (None, None) => {
            warnings.push("system.couplings missing; using the zero matrix".into());
            vec![vec![0.0; n]; n]
        }
    };
    let sys = SystemConfig::new(section.field_scales.clone(), couplings).map_err(|e| CliError::Config(e.to_string()))?;
    section.couplings = Some(sys.couplings.clone());
    Ok(sys)
}

/// The schedule with one loop parameter replaced.
pub fn sweep_schedule(base: &ModulationSchedule, parameter: SweepParameter, value: f64) -> Result<ModulationSchedule, String> {
    let mut s = base.clone();
    match parameter {
        SweepParameter::Epsilon => {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(format!("epsilon {value} must be finite and non-negative"));
            }
            return Ok(s);
        }
        SweepParameter::RX => s.r_x = value,
        SweepParameter::RY => s.r_y = value,
        SweepParameter::Period => s.period = value,
    }
    s.validate().map_err(|e| format!("sweep value {value}: {e}"))?;
    Ok(s)
}

//! Scenario files, runs and result export.
//!
//! A scenario is a JSON document holding every physical input explicitly;
//! the runner validates it completely before computing anything and
//! computes everything before writing anything, so a failed run leaves no
//! partial outputs behind.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{StateVector4, C64};
use crate::analysis::{self, compare_detailed, eta_series, lz_asymptotic, BlockTransitions};
use crate::error::Error;
use crate::field::{FieldProfile, Tabulated};
use crate::frame::{effective_hamiltonian, frame_unitary, mixing_angles};
use crate::hamiltonian::{build_hamiltonian, closed_eigenvalues, BlockId, Orientation, SystemParams};
use crate::propagate::{
    block_history, out_of_pattern_max, reference_propagate, Frame, Order, ReferenceOptions,
    StepControl, TimeGrid, Trajectory, DEFAULT_MAX_HALVINGS, DEFAULT_TOLERANCE,
};

/// Accepted `|norm - 1|` for custom initial amplitudes.
pub const CUSTOM_NORM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("compute error in {module}: {0}", module = .0.module())]
    Compute(#[from] Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Compute(_) => 3,
            RunError::Io { .. } => 4,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> RunError {
    RunError::Config(e.to_string())
}

// ---------------------------------------------------------------- config

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedOrientation {
    Parallel,
    Perpendicular,
}

/// `"parallel"`, `"perpendicular"`, or an angle in radians. Numeric angles
/// only support reference-propagator runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrientationSpec {
    Named(NamedOrientation),
    Angle(f64),
}

impl OrientationSpec {
    pub fn theta(self) -> f64 {
        match self {
            OrientationSpec::Named(NamedOrientation::Parallel) => 0.0,
            OrientationSpec::Named(NamedOrientation::Perpendicular) => FRAC_PI_2,
            OrientationSpec::Angle(theta) => theta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a_par: f64,
    pub a_perp: f64,
    pub zeta: f64,
    pub orientation: OrientationSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabulatedFileKind {
    TabulatedFile,
}

/// `{"kind": "tabulated_file", "path": ...}`; relative paths are resolved
/// against the scenario file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedFile {
    pub kind: TabulatedFileKind,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    File(TabulatedFile),
    Inline(FieldProfile),
}

impl<'de> Deserialize<'de> for ProfileSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        // dispatch on "kind" so errors come from the matching schema
        let value = serde_json::Value::deserialize(d)?;
        let is_file = value.get("kind").and_then(|k| k.as_str()) == Some("tabulated_file");
        if is_file {
            serde_json::from_value(value).map(ProfileSpec::File).map_err(D::Error::custom)
        } else {
            serde_json::from_value(value).map(ProfileSpec::Inline).map_err(D::Error::custom)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl GridSpec {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t_start: self.t_start,
            t_end: self.t_end,
            n_steps: self.n_steps,
        }
    }
}

/// `chiN` is the N-th product state (|++>, |+->, |-+>, |-->), `phiN` the N-th
/// adiabatic eigenstate at `t_start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateLabel {
    Chi1,
    Chi2,
    Chi3,
    Chi4,
    Phi1,
    Phi2,
    Phi3,
    Phi4,
}

impl StateLabel {
    fn split(self) -> (bool, usize) {
        use StateLabel::*;
        match self {
            Chi1 => (false, 0),
            Chi2 => (false, 1),
            Chi3 => (false, 2),
            Chi4 => (false, 3),
            Phi1 => (true, 0),
            Phi2 => (true, 1),
            Phi3 => (true, 2),
            Phi4 => (true, 3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomState {
    /// Product-basis amplitudes as `[re, im]` pairs; must be normalized.
    pub custom: [[f64; 2]; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Label(StateLabel),
    Custom(CustomState),
}

impl InitialState {
    /// Index of the adiabatic state the run starts in, if any.
    pub fn adiabatic_index(&self) -> Option<usize> {
        match self {
            InitialState::Label(l) => match l.split() {
                (true, k) => Some(k),
                _ => None,
            },
            InitialState::Custom(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub trajectory: bool,
    /// Infidelity table; written by `compare` and `sweep` only.
    pub comparison: bool,
    pub propagators: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            trajectory: true,
            comparison: true,
            propagators: false,
        }
    }
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

fn default_halvings() -> u32 {
    DEFAULT_MAX_HALVINGS
}

fn default_frame() -> Frame {
    Frame::Lab
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Richardson error target per unit time.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
    #[serde(default = "default_frame")]
    pub frame: Frame,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec {
            tolerance: DEFAULT_TOLERANCE,
            max_halvings: DEFAULT_MAX_HALVINGS,
            frame: Frame::Lab,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Multiplies every rate of the profile; the grid is rescaled with it.
    RateScale,
    /// Sets the field scale: `omega0` of constant and harmonic fields,
    /// `omega_mid` of tanh ramps, and the symmetric range `-omega0 -> omega0`
    /// of linear ramps (the grid end follows).
    Omega0,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSpec,
    pub profile: ProfileSpec,
    pub grid: GridSpec,
    pub initial_state: InitialState,
    #[serde(default)]
    pub outputs: OutputSpec,
    /// Seeds the randomized checks of `validate`.
    pub seed: u64,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

/// A config with its tabulated profile, if any, loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub params: SystemParams,
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(config_err)
    }

    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Loads external data and checks every field; `base_dir` anchors
    /// relative paths.
    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario, RunError> {
        let profile = match &self.profile {
            ProfileSpec::Inline(p) => p.clone(),
            ProfileSpec::File(f) => {
                let path = base_dir.join(&f.path);
                let text = fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
                FieldProfile::Tabulated(Tabulated::from_csv_str(&text).map_err(config_err)?)
            }
        };
        let params = SystemParams {
            a_par: self.system.a_par,
            a_perp: self.system.a_perp,
            zeta: self.system.zeta,
            theta: self.system.orientation.theta(),
            profile,
        };
        params.validate().map_err(config_err)?;
        let grid = self.grid.grid();
        grid.validate().map_err(config_err)?;
        if let FieldProfile::Tabulated(tab) = &params.profile {
            let (lo, hi) = tab.range();
            if grid.t_start < lo || grid.t_end > hi {
                return Err(RunError::Config(format!(
                    "grid [{}, {}] exceeds the tabulated range [{lo}, {hi}]",
                    grid.t_start, grid.t_end
                )));
            }
        }
        if let InitialState::Custom(c) = &self.initial_state {
            let norm = c.custom.iter().map(|[re, im]| re * re + im * im).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= CUSTOM_NORM_TOLERANCE) {
                return Err(RunError::Config(format!(
                    "custom initial state has norm {norm}, expected 1"
                )));
            }
        }
        if self.initial_state.adiabatic_index().is_some() && params.exact_orientation().is_err() {
            return Err(RunError::Config(
                "adiabatic initial states need the parallel or perpendicular orientation".into(),
            ));
        }
        let r = &self.reference;
        if !(r.tolerance > 0.0 && r.tolerance.is_finite()) {
            return Err(RunError::Config("reference.tolerance must be positive".into()));
        }
        if r.max_halvings > 30 {
            return Err(RunError::Config("reference.max_halvings must be at most 30".into()));
        }
        if r.frame == Frame::Adiabatic && params.exact_orientation().is_err() {
            return Err(RunError::Config(
                "the adiabatic reference frame needs the parallel or perpendicular orientation"
                    .into(),
            ));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(RunError::Config("sweep.values is empty".into()));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(RunError::Config("sweep.values must be finite".into()));
            }
            if s.parameter == SweepParameter::RateScale && s.values.iter().any(|&v| v <= 0.0) {
                return Err(RunError::Config("rate_scale values must be positive".into()));
            }
            if s.parameter == SweepParameter::Omega0 {
                if matches!(params.profile, FieldProfile::Tabulated(_)) {
                    return Err(RunError::Config("omega0 sweeps need an analytic profile".into()));
                }
                let linear = matches!(params.profile, FieldProfile::LinearRamp { .. });
                if linear && s.values.iter().any(|&v| v <= 0.0) {
                    return Err(RunError::Config(
                        "linear-ramp omega0 values must be positive".into(),
                    ));
                }
            }
        }
        Ok(Scenario {
            config: self.clone(),
            params,
        })
    }
}

/// Reads and resolves a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, RunError> {
    let config = ScenarioConfig::from_path(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    config.resolve(base)
}

// ---------------------------------------------------------------- reports

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Propagate,
    Compare,
    Sweep,
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildInfo {
    pub package: String,
    pub version: String,
}

impl BuildInfo {
    pub fn current() -> Self {
        BuildInfo {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: String,
    /// File name inside the output directory.
    pub file: String,
    /// Data rows, for tables.
    pub rows: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_time: f64,
    pub final_lab_populations: [f64; 4],
    pub final_adiabatic_populations: Option<[f64; 4]>,
    /// Reference probability of leaving the initial adiabatic state.
    pub reference_transition: Option<f64>,
    /// Landau-Zener survival for linear ramps along the axis.
    pub lz_asymptotic: Option<f64>,
    pub eta_max: f64,
    pub eta_divergent: bool,
    pub reference_steps: usize,
    pub max_probability_defect: f64,
    pub final_infidelity_zeroth: Option<f64>,
    pub final_infidelity_first: Option<f64>,
    pub final_beta_sq: Option<BlockTransitions>,
    pub gauge_ratio_max: Option<f64>,
    pub non_adiabatic: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Command,
    pub build: BuildInfo,
    pub config: ScenarioConfig,
    pub resolved_profile: FieldProfile,
    pub files: Vec<ManifestEntry>,
    pub summary: Option<Summary>,
    pub sweep: Option<Vec<SweepPoint>>,
    pub validation: Option<Vec<CheckResult>>,
}

impl RunReport {
    pub fn validation_passed(&self) -> bool {
        self.validation
            .as_ref()
            .is_none_or(|checks| checks.iter().all(|c| c.passed))
    }
}

/// Plain numeric table; non-finite cells mark undefined values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// A finished computation whose tables have not been written yet.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub tables: Vec<Table>,
}

// ---------------------------------------------------------------- runs

fn reference_options(spec: &ReferenceSpec, store: bool) -> ReferenceOptions {
    ReferenceOptions {
        control: StepControl::Adaptive {
            tolerance: spec.tolerance,
            max_halvings: spec.max_halvings,
        },
        store_propagators: store,
    }
}

fn initial_lab_state(p: &SystemParams, grid: &TimeGrid, init: &InitialState) -> crate::Result<StateVector4> {
    Ok(match init {
        InitialState::Label(l) => match l.split() {
            (false, k) => StateVector4::basis(k),
            (true, k) => StateVector4(frame_unitary(&mixing_angles(p, grid.t_start)?).column(k)),
        },
        InitialState::Custom(c) => StateVector4(c.custom.map(|[re, im]| C64::new(re, im))),
    })
}

fn lz_if_applicable(p: &SystemParams) -> Option<f64> {
    if p.orientation() == Orientation::Parallel && p.a_perp > 0.0 {
        lz_asymptotic(p).ok()
    } else {
        None
    }
}

fn column_names(prefix: &str) -> Vec<String> {
    (1..=4)
        .flat_map(|k| [format!("re_{prefix}{k}"), format!("im_{prefix}{k}")])
        .collect()
}

fn amplitudes(s: &StateVector4) -> impl Iterator<Item = f64> + '_ {
    s.0.iter().flat_map(|a| [a.re, a.im])
}

struct ComparisonColumns<'a> {
    zeroth: &'a [f64],
    first: &'a [f64],
    zeroth_frame: &'a [f64],
    first_frame: &'a [f64],
}

fn trajectory_table(
    p: &SystemParams,
    traj: &Trajectory,
    eta: &[Option<f64>],
    comparison: Option<&ComparisonColumns>,
) -> crate::Result<Table> {
    let mut columns = vec!["t".to_string(), "omega".to_string()];
    columns.extend(column_names("chi"));
    let frame = traj.adiabatic_states.as_ref();
    if frame.is_some() {
        columns.extend(column_names("phi"));
    }
    columns.extend((1..=4).map(|k| format!("pop_chi{k}")));
    if frame.is_some() {
        columns.extend((1..=4).map(|k| format!("pop_phi{k}")));
    }
    if comparison.is_some() {
        for c in [
            "infidelity_zeroth",
            "infidelity_first",
            "infidelity_zeroth_frame",
            "infidelity_first_frame",
        ] {
            columns.push(c.to_string());
        }
    }
    columns.push("eta".to_string());

    let times = traj.grid.times();
    let mut rows = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let mut row = vec![t, p.profile.omega(t)?];
        row.extend(amplitudes(&traj.states[k]));
        if let Some(f) = frame {
            row.extend(amplitudes(&f[k]));
        }
        row.extend(traj.states[k].populations());
        if let Some(f) = frame {
            row.extend(f[k].populations());
        }
        if let Some(c) = comparison {
            row.extend([c.zeroth[k], c.first[k], c.zeroth_frame[k], c.first_frame[k]]);
        }
        row.push(eta[k].unwrap_or(f64::NAN));
        rows.push(row);
    }
    Ok(Table {
        name: "trajectory".into(),
        columns,
        rows,
    })
}

fn propagator_table(traj: &Trajectory) -> Option<Table> {
    let props = traj.propagators.as_ref()?;
    let mut columns = vec!["t".to_string()];
    for i in 1..=4 {
        for j in 1..=4 {
            columns.push(format!("re_u{i}{j}"));
            columns.push(format!("im_u{i}{j}"));
        }
    }
    let rows = traj
        .grid
        .times()
        .iter()
        .zip(props)
        .map(|(&t, u)| {
            let mut row = vec![t];
            row.extend(u.0.iter().flatten().flat_map(|z| [z.re, z.im]));
            row
        })
        .collect();
    let name = match traj.frame {
        Frame::Lab => "propagators",
        Frame::Adiabatic => "propagators_frame",
    };
    Some(Table {
        name: name.into(),
        columns,
        rows,
    })
}

fn propagate_run(scenario: &Scenario, store: bool) -> crate::Result<(Summary, Trajectory, Vec<Option<f64>>)> {
    let cfg = &scenario.config;
    let p = &scenario.params;
    let grid = cfg.grid.grid();
    let psi0 = initial_lab_state(p, &grid, &cfg.initial_state)?;
    let opts = reference_options(&cfg.reference, store);
    let traj = reference_propagate(p, &grid, &psi0, cfg.reference.frame, &opts)?;
    let eta = eta_series(&p.profile, &grid.times())?;
    let final_frame = traj.adiabatic_states.as_ref().map(|s| s.last().expect("grid").populations());
    let summary = Summary {
        final_time: grid.t_end,
        final_lab_populations: traj.final_state().populations(),
        final_adiabatic_populations: final_frame,
        reference_transition: cfg
            .initial_state
            .adiabatic_index()
            .zip(final_frame)
            .map(|(k, pops)| (1.0 - pops[k]).clamp(0.0, 1.0)),
        lz_asymptotic: lz_if_applicable(p),
        eta_max: eta.max,
        eta_divergent: eta.divergent,
        reference_steps: traj.substeps.iter().sum(),
        max_probability_defect: analysis::max_probability_defect(&traj.states),
        final_infidelity_zeroth: None,
        final_infidelity_first: None,
        final_beta_sq: None,
        gauge_ratio_max: None,
        non_adiabatic: None,
    };
    Ok((summary, traj, eta.values))
}

fn compare_run(scenario: &Scenario, store: bool) -> crate::Result<(Summary, Vec<Table>)> {
    let cfg = &scenario.config;
    let p = &scenario.params;
    let grid = cfg.grid.grid();
    let initial = cfg
        .initial_state
        .adiabatic_index()
        .ok_or_else(|| Error::Consistency("comparison needs an adiabatic initial state".into()))?;
    let opts = reference_options(&cfg.reference, store);
    let c = compare_detailed(p, &grid, initial, &opts)?;
    let r = &c.report;
    let frame_final = c
        .reference
        .adiabatic_states
        .as_ref()
        .map(|s| s.last().expect("grid").populations());
    let summary = Summary {
        final_time: grid.t_end,
        final_lab_populations: c.reference.final_state().populations(),
        final_adiabatic_populations: frame_final,
        reference_transition: Some(r.final_leakage),
        lz_asymptotic: lz_if_applicable(p),
        eta_max: r.eta_max,
        eta_divergent: r.eta_divergent,
        reference_steps: r.diagnostics.reference_steps,
        max_probability_defect: r.diagnostics.max_probability_defect,
        final_infidelity_zeroth: Some(r.final_infidelity_zeroth()),
        final_infidelity_first: Some(r.final_infidelity_first()),
        final_beta_sq: Some(r.final_beta_sq),
        gauge_ratio_max: Some(r.gauge_ratio_max),
        non_adiabatic: Some(r.non_adiabatic),
    };
    let cols = ComparisonColumns {
        zeroth: &r.infidelity_zeroth,
        first: &r.infidelity_first,
        zeroth_frame: &r.infidelity_zeroth_frame,
        first_frame: &r.infidelity_first_frame,
    };
    let mut tables = Vec::new();
    if cfg.outputs.trajectory {
        tables.push(trajectory_table(p, &c.reference, &r.eta, Some(&cols))?);
    }
    if cfg.outputs.comparison {
        let times = grid.times();
        let rows = (0..times.len())
            .map(|k| {
                vec![
                    times[k],
                    r.infidelity_zeroth[k],
                    r.infidelity_first[k],
                    r.infidelity_zeroth_frame[k],
                    r.infidelity_first_frame[k],
                    r.eta[k].unwrap_or(f64::NAN),
                ]
            })
            .collect();
        tables.push(Table {
            name: "comparison".into(),
            columns: [
                "t",
                "infidelity_zeroth",
                "infidelity_first",
                "infidelity_zeroth_frame",
                "infidelity_first_frame",
                "eta",
            ]
            .map(String::from)
            .to_vec(),
            rows,
        });
    }
    if cfg.outputs.propagators {
        tables.extend(propagator_table(&c.reference));
    }
    Ok((summary, tables))
}

/// Whether the scenario supports the adiabatic-frame solutions.
fn comparable(scenario: &Scenario) -> bool {
    matches!(scenario.config.system.orientation, OrientationSpec::Named(_))
        && scenario.config.initial_state.adiabatic_index().is_some()
}

/// Scenario for one sweep point.
pub fn sweep_point(scenario: &Scenario, parameter: SweepParameter, value: f64) -> crate::Result<Scenario> {
    let mut out = scenario.clone();
    let grid = &mut out.config.grid;
    let profile = &mut out.params.profile;
    match parameter {
        SweepParameter::RateScale => {
            *profile = profile.stretched(1.0 / value);
            grid.t_start /= value;
            grid.t_end /= value;
        }
        SweepParameter::Omega0 => match profile {
            FieldProfile::Constant { omega0 } | FieldProfile::Harmonic { omega0, .. } => {
                *omega0 = value
            }
            FieldProfile::TanhRamp { omega_mid, .. } => *omega_mid = value,
            FieldProfile::LinearRamp { omega_start, rate } => {
                *omega_start = -value;
                let old = grid.t_end - grid.t_start;
                let new = 2.0 * value / rate.abs();
                grid.t_end = grid.t_start + new;
                grid.n_steps = ((grid.n_steps as f64 * new / old).ceil() as usize).max(1);
            }
            FieldProfile::Tabulated(_) => {
                return Err(Error::InvalidProfile("cannot set omega0 of a tabulated field".into()))
            }
        },
    }
    out.params.validate()?;
    out.config.grid.grid().validate()?;
    Ok(out)
}

fn sweep_run(scenario: &Scenario) -> crate::Result<(Vec<SweepPoint>, Table)> {
    let spec = scenario
        .config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Consistency("no sweep section".into()))?;
    let compare = comparable(scenario);
    // collect() on an indexed parallel iterator keeps sweep order
    let points: Vec<SweepPoint> = spec
        .values
        .par_iter()
        .enumerate()
        .map(|(index, &value)| {
            let s = sweep_point(scenario, spec.parameter, value)?;
            let summary = if compare {
                compare_run(&s, false)?.0
            } else {
                propagate_run(&s, false)?.0
            };
            Ok(SweepPoint {
                index,
                value,
                summary,
            })
        })
        .collect::<crate::Result<_>>()?;

    let opt = |x: Option<f64>| x.unwrap_or(f64::NAN);
    let mut rows = Vec::with_capacity(points.len());
    for (k, pt) in points.iter().enumerate() {
        let s = &pt.summary;
        let transition = opt(s.reference_transition);
        let ratio = if k == 0 {
            f64::NAN
        } else {
            opt(points[k - 1].summary.reference_transition) / transition
        };
        let mut row = vec![
            pt.index as f64,
            pt.value,
            transition,
            ratio,
            opt(s.final_infidelity_zeroth),
            opt(s.final_infidelity_first),
            opt(s.final_beta_sq.map(|b| b.block23)),
            opt(s.final_beta_sq.and_then(|b| b.block14)),
            s.eta_max,
            opt(s.lz_asymptotic),
        ];
        row.extend(s.final_lab_populations);
        rows.push(row);
    }
    let mut columns: Vec<String> = [
        "index",
        "value",
        "reference_transition",
        "transition_ratio",
        "infidelity_zeroth",
        "infidelity_first",
        "beta_sq_23",
        "beta_sq_14",
        "eta_max",
        "lz_asymptotic",
    ]
    .map(String::from)
    .to_vec();
    columns.extend((1..=4).map(|k| format!("pop_chi{k}")));
    Ok((
        points,
        Table {
            name: "sweep".into(),
            columns,
            rows,
        },
    ))
}

// limits of the validate checks
const HERMITICITY_LIMIT: f64 = 1e-14;
const SPECTRUM_LIMIT: f64 = 1e-12;
const DIAGONAL_LIMIT: f64 = 1e-12;
const GAUGE_LIMIT: f64 = 1e-5;
const PROBABILITY_LIMIT: f64 = 1e-9;
const ROUND_TRIP_LIMIT: f64 = 5e-9;
const SPARSITY_LIMIT: f64 = 1e-10;
const BLOCK_UNITARITY_LIMIT: f64 = 1e-9;
const RANDOM_STATES: usize = 3;

fn check(name: &str, value: f64, limit: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        value,
        limit,
        passed: value <= limit,
    }
}

fn validate_run(scenario: &Scenario) -> crate::Result<Vec<CheckResult>> {
    let cfg = &scenario.config;
    let p = &scenario.params;
    let grid = cfg.grid.grid();
    let times = grid.times();
    let exact = p.exact_orientation().is_ok();
    let mut checks = Vec::new();

    let mut hermitian = 0.0f64;
    let mut spectrum = 0.0f64;
    for &t in &times {
        let h = build_hamiltonian(p, t)?;
        hermitian = hermitian.max(h.hermiticity_defect());
        if exact {
            let numeric = h.eigenvalues_sorted()?;
            let mut closed = closed_eigenvalues(p, t)?;
            closed.sort_by(f64::total_cmp);
            for (a, b) in numeric.iter().zip(&closed) {
                spectrum = spectrum.max((a - b).abs());
            }
        }
    }
    checks.push(check("hamiltonian_hermiticity", hermitian, HERMITICITY_LIMIT));
    let has_frame = exact && mixing_angles(p, grid.t_start).is_ok();
    if exact {
        checks.push(check("spectrum_closure", spectrum, SPECTRUM_LIMIT));
    }
    if has_frame {
        let mut diagonal = 0.0f64;
        let mut gauge = 0.0f64;
        for w in times.windows(2) {
            // midpoints stay clear of tabulated knots placed on the grid
            let t = 0.5 * (w[0] + w[1]);
            let snap = effective_hamiltonian(p, t)?;
            let rotated = snap.frame_unitary.adjoint() * build_hamiltonian(p, t)? * snap.frame_unitary;
            diagonal = diagonal.max(rotated.max_off_diagonal());
            let h = (1e-6 * (1.0 + t.abs())).min(0.25 * (w[1] - w[0]));
            let lo = mixing_angles(p, t - h)?;
            let hi = mixing_angles(p, t + h)?;
            for (rate, d) in [
                (snap.angles.theta1_rate, hi.theta1 - lo.theta1),
                (snap.angles.theta2_rate, hi.theta2 - lo.theta2),
            ] {
                let fd = d / (2.0 * h);
                gauge = gauge.max((rate - fd).abs() / rate.abs().max(1e-6));
            }
        }
        checks.push(check("frame_diagonalization", diagonal, DIAGONAL_LIMIT));
        checks.push(check("gauge_rate_finite_difference", gauge, GAUGE_LIMIT));
    }

    let opts = reference_options(&cfg.reference, true);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probability = 0.0f64;
    let mut sparsity = 0.0f64;
    let mut round_trip = 0.0f64;
    for _ in 0..RANDOM_STATES {
        let amps: [C64; 4] = std::array::from_fn(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let psi0 = StateVector4::normalized(amps).expect("nonzero draw");
        let lab = reference_propagate(p, &grid, &psi0, Frame::Lab, &opts)?;
        probability = probability.max(analysis::max_probability_defect(&lab.states));
        if exact {
            for u in lab.propagators.as_ref().expect("stored") {
                sparsity = sparsity.max(out_of_pattern_max(p.orientation(), u));
            }
        }
        if has_frame {
            let adia = reference_propagate(p, &grid, &psi0, Frame::Adiabatic, &opts)?;
            for (a, b) in lab.states.iter().zip(&adia.states) {
                round_trip = round_trip.max(a.max_abs_diff(b));
            }
        }
    }
    checks.push(check("probability_conservation", probability, PROBABILITY_LIMIT));
    if exact {
        checks.push(check("block_sparsity", sparsity, SPARSITY_LIMIT));
    }
    if has_frame {
        checks.push(check("frame_round_trip", round_trip, ROUND_TRIP_LIMIT));
        let mut unitarity = 0.0f64;
        let blocks: &[BlockId] = match p.orientation() {
            Orientation::Parallel => &[BlockId::Block23],
            _ => &[BlockId::Block23, BlockId::Block14],
        };
        for &block in blocks {
            for s in block_history(p, block, &grid, Order::First)?.solutions {
                unitarity = unitarity.max((s.alpha.norm_sqr() + s.beta.norm_sqr() - 1.0).abs());
            }
        }
        checks.push(check("first_order_block_unitarity", unitarity, BLOCK_UNITARITY_LIMIT));
    }
    Ok(checks)
}

/// Computes a scenario without touching the file system.
pub fn run_scenario(scenario: &Scenario, command: Command) -> Result<RunOutput, RunError> {
    let cfg = &scenario.config;
    let mut report = RunReport {
        command,
        build: BuildInfo::current(),
        config: cfg.clone(),
        resolved_profile: scenario.params.profile.clone(),
        files: Vec::new(),
        summary: None,
        sweep: None,
        validation: None,
    };
    let mut tables = Vec::new();
    match command {
        Command::Propagate => {
            let (summary, traj, eta) = propagate_run(scenario, cfg.outputs.propagators)?;
            if cfg.outputs.trajectory {
                tables.push(trajectory_table(&scenario.params, &traj, &eta, None)?);
            }
            if cfg.outputs.propagators {
                tables.extend(propagator_table(&traj));
            }
            report.summary = Some(summary);
        }
        Command::Compare => {
            if !matches!(cfg.system.orientation, OrientationSpec::Named(_)) {
                return Err(RunError::Config(
                    "compare needs orientation \"parallel\" or \"perpendicular\"".into(),
                ));
            }
            if cfg.initial_state.adiabatic_index().is_none() {
                return Err(RunError::Config(
                    "compare needs an adiabatic initial state (phi1..phi4)".into(),
                ));
            }
            let (summary, t) = compare_run(scenario, cfg.outputs.propagators)?;
            tables = t;
            report.summary = Some(summary);
        }
        Command::Sweep => {
            if cfg.sweep.is_none() {
                return Err(RunError::Config("sweep needs a \"sweep\" section".into()));
            }
            let (points, table) = sweep_run(scenario)?;
            tables.push(table);
            report.sweep = Some(points);
        }
        Command::Validate => {
            let checks = validate_run(scenario)?;
            let rows = checks
                .iter()
                .enumerate()
                .map(|(k, c)| vec![k as f64, c.value, c.limit, if c.passed { 1.0 } else { 0.0 }])
                .collect();
            tables.push(Table {
                name: "validation".into(),
                columns: ["check", "value", "limit", "passed"].map(String::from).to_vec(),
                rows,
            });
            report.validation = Some(checks);
        }
    }
    Ok(RunOutput { report, tables })
}

// ---------------------------------------------------------------- export

/// 17 significant digits; non-finite values as `nan`, `inf`, `-inf`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn table_to_csv(table: &Table) -> String {
    let mut out = table.columns.join(",");
    out.push('\n');
    for row in &table.rows {
        for (k, x) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", format_number(*x));
        }
        out.push('\n');
    }
    out
}

pub fn table_to_json(table: &Table) -> String {
    let mut s = serde_json::to_string_pretty(table).expect("tables serialize");
    s.push('\n');
    s
}

pub const REPORT_FILE: &str = "report.json";

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|e| RunError::io(path, e))
}

/// Writes the tables and `report.json` into `out_dir` and returns the
/// report with its file manifest filled in.
pub fn export_results(output: RunOutput, out_dir: &Path, format: OutputFormat) -> Result<RunReport, RunError> {
    let RunOutput { mut report, tables } = output;
    fs::create_dir_all(out_dir).map_err(|e| RunError::io(out_dir, e))?;
    report.files.clear();
    for table in &tables {
        let file = format!("{}.{}", table.name, format.extension());
        let text = match format {
            OutputFormat::Csv => table_to_csv(table),
            OutputFormat::Json => table_to_json(table),
        };
        write_file(&out_dir.join(&file), &text)?;
        report.files.push(ManifestEntry {
            kind: table.name.clone(),
            file,
            rows: Some(table.rows.len()),
        });
    }
    report.files.push(ManifestEntry {
        kind: "report".into(),
        file: REPORT_FILE.into(),
        rows: None,
    });
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| RunError::Compute(Error::Consistency(e.to_string())))?;
    json.push('\n');
    write_file(&out_dir.join(REPORT_FILE), &json)?;
    Ok(report)
}

/// Loads, runs and exports a scenario file.
pub fn execute(config_path: &Path, command: Command, out_dir: &Path, format: OutputFormat) -> Result<RunReport, RunError> {
    let scenario = load_scenario(config_path)?;
    let output = run_scenario(&scenario, command)?;
    export_results(output, out_dir, format)
}

pub fn read_report(path: &Path) -> Result<RunReport, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    serde_json::from_str(&text).map_err(config_err)
}

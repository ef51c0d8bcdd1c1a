//! TOML scenario files: one file describes one reproducible experiment
//! (system, parameters, initial state, input, integrator settings, checks and
//! outputs). [`Scenario::run`] simulates, certifies and writes artifacts.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certify::{
    check_assumption_iii, check_assumptions_i_ii, check_higs_sector, check_lyapunov_decrease,
    check_ni_dissipation, check_nonnegative, check_plant_higs_dc, check_positive_definite,
    check_switch_monotonicity, CertificateReport, CertifyError, DecreaseOptions, RegionSpec,
    SettleOptions, Verdict,
};
use crate::export::{emit_plot, emit_report, emit_trajectory, ExportError, Metadata, PlotOptions, ReportFile};
use crate::interconnect::{build_cascade, build_positive_feedback, DissipativeSystem, FeedbackLoop};
use crate::model::{
    ConstantInput, FnInput, InputSignal, ModelError, PiecewiseConstantInput, StorageFamily,
    SwitchedSystemModel, Trajectory,
};
use crate::sim::{simulate, SimConfig, SimError};
use crate::systems::{
    higs_model, higs_storage_family, plant_model, plant_storage_family, HigsParams, PlantParams,
};

/// Bundled scenario reproducing the closed-loop decay experiment.
pub const FIG4_SCENARIO: &str = include_str!("../scenarios/fig4.scenario");
/// Bundled scenario with `k_h = 1.5`, where the closed-loop storage is indefinite.
pub const KH15_NEGATIVE_SCENARIO: &str = include_str!("../scenarios/kh15-negative.scenario");

pub const EXIT_PASS: i32 = 0;
pub const EXIT_RUNTIME_ERROR: i32 = 1;
pub const EXIT_CERTIFICATE_FAIL: i32 = 2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("cannot create output directory {path}: {source}")]
    OutputDir {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Plant,
    Higs,
    /// Plant and HIGS in positive feedback.
    Feedback,
    /// Plant followed by HIGS.
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HigsSection {
    pub omega_h: f64,
    pub k_h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(default = "one")]
    pub cubic: f64,
    #[serde(default = "one")]
    pub linear: f64,
    #[serde(default = "one")]
    pub damping: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            cubic: 1.0,
            linear: 1.0,
            damping: 1.0,
        }
    }
}

impl From<PlantSection> for PlantParams {
    fn from(p: PlantSection) -> Self {
        PlantParams {
            cubic: p.cubic,
            linear: p.linear,
            damping: p.damping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InputSpec {
    Constant {
        value: Vec<f64>,
    },
    /// Rows `[t, v₁, …, v_m]`; each value holds from its time until the next.
    Piecewise {
        table: Vec<Vec<f64>>,
    },
    /// `offset + amplitude · sin(omega t)` per component.
    Sine {
        amplitude: Vec<f64>,
        omega: f64,
        #[serde(default)]
        offset: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_plot")]
    pub plot: String,
    #[serde(default = "yes")]
    pub plot_enabled: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_trajectory() -> String {
    "trajectory.csv".into()
}
fn default_report() -> String {
    "report.json".into()
}
fn default_plot() -> String {
    "trajectory.svg".into()
}
fn yes() -> bool {
    true
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            trajectory: default_trajectory(),
            report: default_report(),
            plot: default_plot(),
            plot_enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default)]
    pub exclusion_radius: Option<f64>,
}

impl From<&RegionSection> for RegionSpec {
    fn from(r: &RegionSection) -> Self {
        RegionSpec {
            lower: r.lower.clone(),
            upper: r.upper.clone(),
            counts: r.counts.clone(),
            exclusion_radius: r.exclusion_radius,
        }
    }
}

fn default_tol() -> f64 {
    1e-6
}

/// One requested certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CheckSpec {
    /// Dissipation inequality of the simulated system with its own storage
    /// (closed-loop storage and minimum strictness for feedback).
    Dissipation {
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Plant and HIGS inequalities on their parts of a feedback run.
    SubsystemDissipation {
        #[serde(default = "default_tol")]
        tol: f64,
    },
    HigsSector {
        #[serde(default = "default_tol")]
        tol: f64,
    },
    SwitchMonotonicity {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default)]
        region: Option<RegionSection>,
    },
    LyapunovDecrease {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_decay")]
        decay_fraction: f64,
    },
    PositiveDefinite {
        #[serde(default = "default_tol")]
        tol: f64,
        region: RegionSection,
    },
    Nonnegative {
        #[serde(default = "default_tol")]
        tol: f64,
        region: RegionSection,
    },
    /// Closed-form and simulated steady-state checks on the plant/HIGS cascade.
    AssumptionIii {
        #[serde(default = "default_tol")]
        tol: f64,
        inputs: Vec<f64>,
        #[serde(default = "default_settle_time")]
        t_end: f64,
        #[serde(default = "default_settle_step")]
        step: f64,
    },
    AssumptionsIIi {
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_window")]
        window: f64,
    },
}

fn default_decay() -> f64 {
    0.01
}
fn default_settle_time() -> f64 {
    80.0
}
fn default_settle_step() -> f64 {
    1e-2
}
fn default_window() -> f64 {
    0.5
}

impl CheckSpec {
    fn tol_mut(&mut self) -> &mut f64 {
        match self {
            Self::Dissipation { tol }
            | Self::SubsystemDissipation { tol }
            | Self::HigsSector { tol }
            | Self::SwitchMonotonicity { tol, .. }
            | Self::LyapunovDecrease { tol, .. }
            | Self::PositiveDefinite { tol, .. }
            | Self::Nonnegative { tol, .. }
            | Self::AssumptionIii { tol, .. }
            | Self::AssumptionsIIi { tol, .. } => tol,
        }
    }

    fn tol(&self) -> f64 {
        let mut c = self.clone();
        *c.tol_mut()
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Dissipation { .. } => "dissipation",
            Self::SubsystemDissipation { .. } => "subsystem-dissipation",
            Self::HigsSector { .. } => "higs-sector",
            Self::SwitchMonotonicity { .. } => "switch-monotonicity",
            Self::LyapunovDecrease { .. } => "lyapunov-decrease",
            Self::PositiveDefinite { .. } => "positive-definite",
            Self::Nonnegative { .. } => "nonnegative",
            Self::AssumptionIii { .. } => "assumption-iii",
            Self::AssumptionsIIi { .. } => "assumptions-i-ii",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub system: SystemKind,
    #[serde(default)]
    pub higs: Option<HigsSection>,
    #[serde(default)]
    pub plant: Option<PlantSection>,
    /// Initial state; plant states first for composite systems.
    pub initial_state: Vec<f64>,
    #[serde(default)]
    pub input: Option<InputSpec>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub no_plot: bool,
    pub step: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Simulate and write the trajectory (and plot).
    Simulate,
    /// Simulate, run every check and write the report as well.
    Certify,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub reports: Vec<CertificateReport>,
    pub exit_code: i32,
    pub scenario_hash: String,
    pub written: Vec<PathBuf>,
}

/// Runtime objects built from a validated scenario.
pub struct BuiltSystem {
    pub model: SwitchedSystemModel,
    pub storage: Option<StorageFamily>,
    pub feedback: Option<FeedbackLoop>,
    pub higs: Option<HigsParams>,
    pub plant: Option<PlantParams>,
    pub state_labels: Vec<String>,
}

impl std::str::FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn fig4() -> Self {
        FIG4_SCENARIO.parse().expect("bundled scenario is valid")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.out_dir {
            self.output.dir = dir.clone();
        }
        if o.no_plot {
            self.output.plot_enabled = false;
        }
        if let Some(step) = o.step {
            self.sim.step = step;
        }
        if let Some(tol) = o.tol {
            for c in &mut self.checks {
                *c.tol_mut() = tol;
            }
        }
    }

    /// SHA-256 of the canonical JSON form of the effective scenario. Output
    /// locations are left out since they do not affect results.
    pub fn hash(&self) -> String {
        let mut s = self.clone();
        s.output = OutputSection::default();
        let canonical = serde_json::to_vec(&s).expect("scenario serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    fn state_dim(&self) -> usize {
        match self.system {
            SystemKind::Plant => 2,
            SystemKind::Higs => 1,
            SystemKind::Feedback | SystemKind::Cascade => 3,
        }
    }

    fn input_dim(&self) -> usize {
        match self.system {
            SystemKind::Feedback => 2,
            _ => 1,
        }
    }

    fn needs_higs(&self) -> bool {
        self.system != SystemKind::Plant
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        match (&self.higs, self.needs_higs()) {
            (None, true) => return Err(invalid("higs", "section required for this system")),
            (Some(h), _) => {
                if !(h.k_h > 0.0) || !h.k_h.is_finite() {
                    return Err(invalid("higs.k_h", format!("must be finite and in (0, inf), got {}", h.k_h)));
                }
                if !(h.omega_h >= 0.0) || !h.omega_h.is_finite() {
                    return Err(invalid("higs.omega_h", format!("must be finite and >= 0, got {}", h.omega_h)));
                }
            }
            _ => {}
        }
        let plant: PlantParams = self.plant.unwrap_or_default().into();
        plant
            .validate()
            .map_err(|e| invalid("plant", e.to_string()))?;
        let n = self.state_dim();
        if self.initial_state.len() != n {
            return Err(invalid(
                "initial_state",
                format!("expected {n} values for a {:?} system, got {}", self.system, self.initial_state.len()),
            ));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial_state", "values must be finite"));
        }
        let m = self.input_dim();
        match &self.input {
            None => {}
            Some(InputSpec::Constant { value }) => {
                if value.len() != m || value.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("input.value", format!("expected {m} finite values")));
                }
            }
            Some(InputSpec::Piecewise { table }) => {
                if table.is_empty() {
                    return Err(invalid("input.table", "must have at least one row"));
                }
                for (i, row) in table.iter().enumerate() {
                    if row.len() != m + 1 {
                        return Err(invalid(
                            format!("input.table[{i}]"),
                            format!("expected [t, {m} values], got {} entries", row.len()),
                        ));
                    }
                }
            }
            Some(InputSpec::Sine { amplitude, omega, offset }) => {
                if amplitude.len() != m || !(offset.is_empty() || offset.len() == m) {
                    return Err(invalid("input.amplitude", format!("expected {m} values")));
                }
                if !omega.is_finite() {
                    return Err(invalid("input.omega", "must be finite"));
                }
            }
        }
        self.sim
            .validate()
            .map_err(|e| invalid("sim", e.to_string()))?;
        for (i, c) in self.checks.iter().enumerate() {
            let field = format!("checks[{i}]");
            let tol = c.tol();
            if !(tol >= 0.0) || !tol.is_finite() {
                return Err(invalid(format!("{field}.tol"), "must be finite and >= 0"));
            }
            let ok = match c {
                CheckSpec::Dissipation { .. } => self.system != SystemKind::Cascade,
                CheckSpec::SubsystemDissipation { .. } => self.system == SystemKind::Feedback,
                CheckSpec::HigsSector { .. } | CheckSpec::SwitchMonotonicity { .. } => {
                    matches!(self.system, SystemKind::Higs | SystemKind::Feedback)
                }
                CheckSpec::LyapunovDecrease { .. }
                | CheckSpec::PositiveDefinite { .. }
                | CheckSpec::Nonnegative { .. } => self.system != SystemKind::Cascade,
                CheckSpec::AssumptionIii { .. } => {
                    matches!(self.system, SystemKind::Feedback | SystemKind::Cascade)
                }
                CheckSpec::AssumptionsIIi { .. } => true,
            };
            if !ok {
                return Err(invalid(
                    format!("{field}.kind"),
                    format!("check `{}` does not apply to a {:?} system", c.kind(), self.system),
                ));
            }
            let region = match c {
                CheckSpec::PositiveDefinite { region, .. } | CheckSpec::Nonnegative { region, .. } => Some(region),
                CheckSpec::SwitchMonotonicity { region, .. } => region.as_ref(),
                _ => None,
            };
            if let Some(r) = region {
                let spec = RegionSpec::from(r);
                spec.validate()
                    .map_err(|e| invalid(format!("{field}.region"), e.to_string()))?;
                if spec.dim() != n {
                    return Err(invalid(format!("{field}.region"), format!("expected dimension {n}")));
                }
            }
            if let CheckSpec::AssumptionIii { t_end, step, .. } = c {
                SimConfig::new(*t_end, *step)
                    .validate()
                    .map_err(|e| invalid(format!("{field}"), e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<BuiltSystem, ScenarioError> {
        let plant_params: PlantParams = self.plant.unwrap_or_default().into();
        let higs_params = self
            .higs
            .map(|h| HigsParams::new(h.omega_h, h.k_h))
            .transpose()?;
        let plant = || {
            DissipativeSystem::new(plant_model(plant_params), plant_storage_family(plant_params))
        };
        let higs = || -> Result<DissipativeSystem, ModelError> {
            let p = higs_params.expect("validated");
            DissipativeSystem::new(higs_model(p), higs_storage_family(p))
        };
        let labels = |l: &[&str]| l.iter().map(|s| s.to_string()).collect();
        Ok(match self.system {
            SystemKind::Plant => {
                let p = plant()?;
                BuiltSystem {
                    model: p.model,
                    storage: Some(p.storage),
                    feedback: None,
                    higs: None,
                    plant: Some(plant_params),
                    state_labels: labels(&["x1", "x2"]),
                }
            }
            SystemKind::Higs => {
                let h = higs()?;
                BuiltSystem {
                    model: h.model,
                    storage: Some(h.storage),
                    feedback: None,
                    higs: higs_params,
                    plant: None,
                    state_labels: labels(&["x_h"]),
                }
            }
            SystemKind::Feedback => {
                let fl = build_positive_feedback(&plant()?, &higs()?)?;
                BuiltSystem {
                    model: fl.model.clone(),
                    storage: Some(fl.storage.as_family()),
                    feedback: Some(fl),
                    higs: higs_params,
                    plant: Some(plant_params),
                    state_labels: labels(&["x1", "x2", "x_h"]),
                }
            }
            SystemKind::Cascade => BuiltSystem {
                model: build_cascade(&plant()?.model, &higs()?.model)?,
                storage: None,
                feedback: None,
                higs: higs_params,
                plant: Some(plant_params),
                state_labels: labels(&["x1", "x2", "x_h"]),
            },
        })
    }

    pub fn input_signal(&self) -> Result<Box<dyn InputSignal>, ScenarioError> {
        let m = self.input_dim();
        Ok(match &self.input {
            None => Box::new(ConstantInput::zeros(m)),
            Some(InputSpec::Constant { value }) => Box::new(ConstantInput::from_slice(value)),
            Some(InputSpec::Piecewise { table }) => {
                let rows = table
                    .iter()
                    .map(|r| (r[0], DVector::from_column_slice(&r[1..])))
                    .collect();
                Box::new(
                    PiecewiseConstantInput::new(rows)
                        .map_err(|e| invalid("input.table", e.to_string()))?,
                )
            }
            Some(InputSpec::Sine { amplitude, omega, offset }) => {
                let a = DVector::from_column_slice(amplitude);
                let c = if offset.is_empty() {
                    DVector::zeros(m)
                } else {
                    DVector::from_column_slice(offset)
                };
                let w = *omega;
                let a2 = a.clone();
                Box::new(FnInput::new(
                    m,
                    move |t| &c + &a * (w * t).sin(),
                    move |t| &a2 * (w * (w * t).cos()),
                ))
            }
        })
    }

    pub fn simulate(&self, built: &BuiltSystem) -> Result<Trajectory, ScenarioError> {
        let x0 = DVector::from_column_slice(&self.initial_state);
        let input = self.input_signal()?;
        Ok(simulate(&built.model, &x0, &input, &self.sim)?)
    }

    /// Runs every requested check on a trajectory of this scenario.
    pub fn certify(
        &self,
        built: &BuiltSystem,
        traj: &Trajectory,
    ) -> Result<Vec<CertificateReport>, ScenarioError> {
        let mut out = Vec::new();
        let split = built.feedback.as_ref().map(|fl| fl.split_trajectory(traj));
        // (model, storage, trajectory) of the HIGS part, when present
        let higs_part = match (&built.feedback, &split) {
            (Some(fl), Some((_, t2))) => Some((&fl.h2.model, &fl.h2.storage, t2)),
            _ if self.system == SystemKind::Higs => {
                Some((&built.model, built.storage.as_ref().expect("higs storage"), traj))
            }
            _ => None,
        };
        for c in &self.checks {
            let tol = c.tol();
            match c {
                CheckSpec::Dissipation { .. } => {
                    let s = built.storage.as_ref().expect("validated");
                    out.push(check_ni_dissipation(&built.model, traj, s, s.epsilon, tol)?);
                }
                CheckSpec::SubsystemDissipation { .. } => {
                    let fl = built.feedback.as_ref().expect("validated");
                    let (t1, t2) = split.as_ref().expect("feedback run");
                    out.push(check_ni_dissipation(&fl.h1.model, t1, &fl.h1.storage, fl.h1.storage.epsilon, tol)?);
                    out.push(check_ni_dissipation(&fl.h2.model, t2, &fl.h2.storage, fl.h2.storage.epsilon, tol)?);
                }
                CheckSpec::HigsSector { .. } => {
                    let (_, _, t) = higs_part.expect("validated");
                    out.push(check_higs_sector(t, built.higs.expect("validated").k_h, tol));
                }
                CheckSpec::SwitchMonotonicity { region, .. } => {
                    let (_, s, t) = higs_part.expect("validated");
                    let region = region.as_ref().map(RegionSpec::from);
                    let higs_region = region.map(|r| RegionSpec {
                        lower: r.lower[r.dim() - 1..].to_vec(),
                        upper: r.upper[r.dim() - 1..].to_vec(),
                        counts: r.counts[r.dim() - 1..].to_vec(),
                        exclusion_radius: r.exclusion_radius,
                    });
                    out.push(check_switch_monotonicity(t, s, higs_region.as_ref(), tol)?);
                }
                CheckSpec::LyapunovDecrease { decay_fraction, .. } => {
                    let s = built.storage.as_ref().expect("validated");
                    out.push(check_lyapunov_decrease(
                        traj,
                        s,
                        DecreaseOptions { tol, decay_fraction: *decay_fraction },
                    )?);
                }
                CheckSpec::PositiveDefinite { region, .. } | CheckSpec::Nonnegative { region, .. } => {
                    let s = built.storage.as_ref().expect("validated");
                    let spec = RegionSpec::from(region);
                    for mode in 1..=s.mode_count() {
                        let mode = crate::model::ModeIndex::new(mode, s.mode_count())?;
                        let w = |p: &[f64]| {
                            s.value(mode, &DVector::from_column_slice(p)).unwrap_or(f64::NAN)
                        };
                        let mut rep = if matches!(c, CheckSpec::PositiveDefinite { .. }) {
                            check_positive_definite(w, &spec, tol)?
                        } else {
                            check_nonnegative(w, &spec, tol)?
                        };
                        if s.mode_count() > 1 {
                            rep.check_name = format!("{}[mode {mode}]", rep.check_name);
                        }
                        out.push(rep);
                    }
                }
                CheckSpec::AssumptionIii { inputs, t_end, step, .. } => {
                    let plant = built.plant.expect("validated");
                    let higs = built.higs.expect("validated");
                    out.push(check_plant_higs_dc(&plant, higs.k_h));
                    let cascade = build_cascade(&plant_model(plant), &higs_model(higs))?;
                    let opts = SettleOptions {
                        config: SimConfig {
                            t_end: *t_end,
                            step: *step,
                            ..SettleOptions::default().config
                        },
                        gap_tol: tol,
                        ..SettleOptions::default()
                    };
                    out.push(check_assumption_iii(&cascade, &DVector::zeros(3), inputs, &opts)?);
                }
                CheckSpec::AssumptionsIIi { window, .. } => match (&built.feedback, &split) {
                    (Some(fl), Some((t1, t2))) => {
                        let mut a = check_assumptions_i_ii(&fl.h1.model, std::slice::from_ref(t1), *window, tol)?;
                        a.check_name = format!("{}[{}]", a.check_name, fl.h1.model.name);
                        let mut b = check_assumptions_i_ii(&fl.h2.model, std::slice::from_ref(t2), *window, tol)?;
                        b.check_name = format!("{}[{}]", b.check_name, fl.h2.model.name);
                        out.push(a);
                        out.push(b);
                    }
                    _ => out.push(check_assumptions_i_ii(&built.model, std::slice::from_ref(traj), *window, tol)?),
                },
            }
        }
        Ok(out)
    }

    /// Simulates, certifies (in [`RunMode::Certify`]) and writes artifacts.
    pub fn run(&self, mode: RunMode) -> Result<RunOutcome, ScenarioError> {
        self.validate()?;
        let built = self.build()?;
        let traj = self.simulate(&built)?;
        let reports = match mode {
            RunMode::Simulate => Vec::new(),
            RunMode::Certify => self.certify(&built, &traj)?,
        };
        let exit_code = exit_code_for(&reports);
        let hash = self.hash();

        let dir = &self.output.dir;
        std::fs::create_dir_all(dir).map_err(|source| ScenarioError::OutputDir {
            path: dir.display().to_string(),
            source,
        })?;
        let mut written = Vec::new();
        let meta = Metadata::new()
            .with("scenario", &self.name)
            .with("scenario_hash", &hash)
            .with("step", self.sim.step)
            .with("t_end", self.sim.t_end)
            .with("record_stride", self.sim.record_stride)
            .with("event_tolerance", self.sim.event_tolerance)
            .with("drift_tolerance", self.sim.drift_tolerance);
        let path = dir.join(&self.output.trajectory);
        emit_trajectory(&traj, &meta, &path)?;
        written.push(path);
        if self.output.plot_enabled {
            let path = dir.join(&self.output.plot);
            let opts = PlotOptions {
                title: format!("{}: state trajectories", self.name),
                labels: built.state_labels.clone(),
                ..PlotOptions::default()
            };
            emit_plot(&traj, &opts, &path)?;
            written.push(path);
        }
        if mode == RunMode::Certify {
            let last = traj.last().expect("nonempty trajectory");
            let file = ReportFile {
                scenario: self.name.clone(),
                scenario_hash: hash.clone(),
                step: self.sim.step,
                t_end: self.sim.t_end,
                tolerance: self.checks.iter().map(CheckSpec::tol).fold(0.0, f64::max),
                samples: traj.len(),
                switch_events: traj.switch_events.len(),
                final_state: last.x.as_slice().to_vec(),
                exit_code,
                reports: reports.clone(),
            };
            let path = dir.join(&self.output.report);
            emit_report(&file, &path)?;
            written.push(path);
        }
        Ok(RunOutcome {
            trajectory: traj,
            reports,
            exit_code,
            scenario_hash: hash,
            written,
        })
    }
}

/// 0 when every report passes or is not falsified, 2 otherwise.
pub fn exit_code_for(reports: &[CertificateReport]) -> i32 {
    if reports.iter().all(|r| r.verdict.is_success()) {
        EXIT_PASS
    } else {
        EXIT_CERTIFICATE_FAIL
    }
}

/// Loads and runs a scenario file, printing a summary; returns the exit code.
pub fn run_scenario(path: &Path, mode: RunMode, overrides: &Overrides) -> i32 {
    let result = Scenario::load(path).and_then(|mut s| {
        s.apply(overrides);
        s.run(mode)
    });
    finish(result)
}

/// Prints a run summary to stdout (errors to stderr) and returns the exit code.
pub fn finish(result: Result<RunOutcome, ScenarioError>) -> i32 {
    match result {
        Ok(outcome) => {
            print_summary(&outcome);
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME_ERROR
        }
    }
}

fn print_summary(o: &RunOutcome) {
    let last = o.trajectory.last().expect("nonempty");
    println!(
        "simulated {} samples, {} switch events, final state {:?}",
        o.trajectory.len(),
        o.trajectory.switch_events.len(),
        last.x.as_slice()
    );
    for r in &o.reports {
        let point = r
            .worst_point
            .as_ref()
            .map(|p| match p.t {
                Some(t) => format!(" at t={t} x={:?}", p.x),
                None => format!(" at x={:?}", p.x),
            })
            .unwrap_or_default();
        println!(
            "{:<14} {}: worst residual {:e}{}",
            r.verdict.as_str(),
            r.check_name,
            r.worst_residual,
            point
        );
        if let Some(w) = &r.witness {
            if r.verdict == Verdict::Fail {
                println!("{:<14} violating point nearest the origin: {:?}", "", w.x);
            }
        }
    }
    for p in &o.written {
        println!("wrote {}", p.display());
    }
    println!("scenario hash {}", o.scenario_hash);
}

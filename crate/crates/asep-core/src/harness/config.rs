//! Experiment configuration: a single TOML file describing the mode,
//! scaling, boundary schedule, initial profile and output policy.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{liggett_rates, BoundaryRates, RateSchedule, ScalingPlan};
use crate::observables::GridField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Hydrodynamic,
    QuasiStatic,
    Stationary,
    PhaseScan,
    SolverOnly,
    Diagnostics,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Hydrodynamic => "hydrodynamic",
            Mode::QuasiStatic => "quasi-static",
            Mode::Stationary => "stationary",
            Mode::PhaseScan => "phase-scan",
            Mode::SolverOnly => "solver-only",
            Mode::Diagnostics => "diagnostics",
        }
    }
}

/// Scaling section: either strict-mode `(N, κ, θ)` or explicit
/// `(N, σ, σ̃, K)`; `n_values` runs a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingSpec {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_values: Option<Vec<usize>>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub sigma_tilde: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
}

fn default_p() -> f64 {
    1.0
}

fn default_theta() -> f64 {
    1.0
}

impl ScalingSpec {
    pub fn lattice_sizes(&self) -> Result<Vec<usize>> {
        match (&self.n_values, self.n) {
            (Some(v), _) if !v.is_empty() => Ok(v.clone()),
            (_, Some(n)) => Ok(vec![n]),
            _ => Err(Error::Config("scaling needs `n` or `n_values`".into())),
        }
    }

    /// Build the plan for one lattice size.
    pub fn plan_for(&self, n: usize) -> Result<ScalingPlan> {
        if let (Some(sigma), Some(sigma_tilde), Some(k)) = (self.sigma, self.sigma_tilde, self.k) {
            ScalingPlan::exploratory(n, sigma, sigma_tilde, k, self.p)
        } else if let Some(kappa) = self.kappa {
            ScalingPlan::strict(n, kappa, self.p, self.theta)
        } else {
            Err(Error::Config(
                "scaling needs either `kappa` (strict) or explicit `sigma`, `sigma_tilde`, `k`"
                    .into(),
            ))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub t_start: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

/// Boundary schedule: explicit segments, plain reservoir densities with
/// unit total flip rates, or the projected-infinite-dynamics rates built
/// from the plan's `(p, σ_N)`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScheduleSpec {
    #[serde(default)]
    pub segments: Option<Vec<SegmentSpec>>,
    #[serde(default)]
    pub rho_minus: Option<f64>,
    #[serde(default)]
    pub rho_plus: Option<f64>,
    /// Interpret `rho_minus`/`rho_plus` as background densities of the
    /// projected infinite dynamics (rates built from `p` and `σ_N`).
    #[serde(default)]
    pub liggett: bool,
}

impl ScheduleSpec {
    pub fn build(&self, plan: &ScalingPlan) -> Result<RateSchedule> {
        if let Some(segments) = &self.segments {
            let segs = segments
                .iter()
                .map(|s| {
                    BoundaryRates::new(s.alpha, s.beta, s.gamma, s.delta).map(|r| (s.t_start, r))
                })
                .collect::<Result<Vec<_>>>()?;
            return RateSchedule::new(segs);
        }
        match (self.rho_minus, self.rho_plus) {
            (Some(rm), Some(rp)) if self.liggett => liggett_rates(plan.p, plan.sigma, rm, rp),
            (Some(rm), Some(rp)) => RateSchedule::from_reservoir_densities(rm, rp),
            _ => Err(Error::Config(
                "schedule needs `segments` or both `rho_minus` and `rho_plus`".into(),
            )),
        }
    }
}

/// Initial macroscopic profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialSpec {
    Constant { value: f64 },
    Riemann { u_left: f64, u_right: f64, x0: f64 },
    File { path: PathBuf },
}

impl InitialSpec {
    /// The profile as a grid field with `m` cells.
    pub fn profile(&self, m: usize) -> Result<GridField> {
        match self {
            InitialSpec::Constant { value } => {
                if !(0.0..=1.0).contains(value) {
                    return Err(Error::DensityOutOfRange {
                        name: "initial value",
                        value: *value,
                    });
                }
                Ok(GridField::constant(m, *value))
            }
            InitialSpec::Riemann {
                u_left,
                u_right,
                x0,
            } => {
                for (name, v) in [("u_left", *u_left), ("u_right", *u_right)] {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::DensityOutOfRange {
                            name: if name == "u_left" {
                                "u_left"
                            } else {
                                "u_right"
                            },
                            value: v,
                        });
                    }
                }
                let (ul, ur, x0) = (*u_left, *u_right, *x0);
                Ok(GridField::from_fn(m, |x| if x < x0 { ul } else { ur }))
            }
            InitialSpec::File { path } => {
                let text = std::fs::read_to_string(path)?;
                let mut cells = Vec::new();
                for (ln, line) in text.lines().enumerate() {
                    if ln == 0 && line.starts_with("x_center") {
                        continue;
                    }
                    if line.trim().is_empty() {
                        continue;
                    }
                    let v = line
                        .rsplit(',')
                        .next()
                        .and_then(|s| s.trim().parse::<f64>().ok())
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "bad profile line {} in {}",
                                ln + 1,
                                path.display()
                            ))
                        })?;
                    cells.push(v);
                }
                let field = GridField::new(cells)?;
                resample_profile(&field, m)
            }
        }
    }

    pub fn validate_files(&self) -> Result<()> {
        if let InitialSpec::File { path } = self {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "initial profile file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

fn resample_profile(f: &GridField, m: usize) -> Result<GridField> {
    crate::solver::resample(f, m)
}

/// Extra knobs for the diagnostics mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsSpec {
    /// Block sizes for the residual trends (the plan's K is always added).
    #[serde(default)]
    pub k_values: Vec<usize>,
    /// Reservoir accelerations for the boundary-residual sweep.
    #[serde(default)]
    pub sigma_tilde_values: Vec<f64>,
    /// Entropy levels h for the Otto checks.
    #[serde(default = "default_h_values")]
    pub h_values: Vec<f64>,
}

fn default_h_values() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            k_values: vec![],
            sigma_tilde_values: vec![],
            h_values: default_h_values(),
        }
    }
}

/// Phase-scan grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseScanSpec {
    /// Number of grid points per axis on (0,1)².
    #[serde(default = "default_scan_grid")]
    pub grid: usize,
    /// Quasi-static exponent for the measurement runs.
    #[serde(default = "default_qs_exponent")]
    pub a: f64,
}

fn default_scan_grid() -> usize {
    5
}

fn default_qs_exponent() -> f64 {
    0.5
}

impl Default for PhaseScanSpec {
    fn default() -> Self {
        Self {
            grid: default_scan_grid(),
            a: default_qs_exponent(),
        }
    }
}

/// The whole experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub horizon: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_solver_cells")]
    pub solver_cells: usize,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_qs_exponent")]
    pub quasi_static_exponent: f64,
    #[serde(default = "default_event_budget")]
    pub event_budget: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    /// Write one trajectory CSV per replica (occupation snapshots).
    #[serde(default)]
    pub write_replica_trajectories: bool,
    pub scaling: ScalingSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub phase_scan: PhaseScanSpec,
}

fn default_replicas() -> usize {
    20
}

fn default_solver_cells() -> usize {
    400
}

fn default_sample_count() -> usize {
    200
}

fn default_cfl() -> f64 {
    0.9
}

fn default_event_budget() -> u64 {
    2_000_000_000
}

fn default_burn_in() -> f64 {
    0.2
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse error: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon >= 0.0) {
            return Err(Error::Config(format!(
                "horizon {} must be >= 0",
                self.horizon
            )));
        }
        if self.replicas < 1 {
            return Err(Error::Config("replicas must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config(format!(
                "burn_in_fraction {} must lie in [0, 1)",
                self.burn_in_fraction
            )));
        }
        if self.sample_count < 1 {
            return Err(Error::Config("sample_count must be >= 1".into()));
        }
        if let Some(init) = &self.initial {
            init.validate_files()?;
        }
        // modes that simulate need a plan; solver-only needs the flux only
        match self.mode {
            Mode::SolverOnly => {}
            _ => {
                for n in self.scaling.lattice_sizes()? {
                    let plan = self.scaling.plan_for(n)?;
                    plan.validate()?;
                    // phase-scan builds its schedules per grid point
                    if self.mode != Mode::PhaseScan {
                        self.schedule_or_default(&plan)?;
                    }
                }
            }
        }
        match self.mode {
            Mode::Hydrodynamic | Mode::QuasiStatic | Mode::SolverOnly => {
                if self.initial.is_none() {
                    return Err(Error::Config(format!(
                        "mode {} needs an [initial] profile",
                        self.mode.label()
                    )));
                }
                if self.mode != Mode::SolverOnly {
                    // the comparison reference needs boundary data
                    let plan = self.scaling.plan_for(self.scaling.lattice_sizes()?[0])?;
                    self.schedule_or_default(&plan)?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The schedule, or for stationary mode the balanced projected rates
    /// around `rho_minus = rho_plus = ρ̄` when only densities are given.
    pub fn schedule_or_default(&self, plan: &ScalingPlan) -> Result<RateSchedule> {
        self.schedule.build(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
mode = "hydrodynamic"
horizon = 1.0
replicas = 4
seed = 7

[scaling]
n_values = [64, 128]
kappa = 0.142857142857
p = 1.0

[schedule]
rho_minus = 0.8
rho_plus = 0.2

[initial]
kind = "riemann"
u_left = 0.8
u_right = 0.2
x0 = 0.5
"#;

    #[test]
    fn parses_and_validates() {
        let spec = ExperimentSpec::from_toml(SAMPLE).unwrap();
        assert_eq!(spec.mode, Mode::Hydrodynamic);
        assert_eq!(spec.scaling.lattice_sizes().unwrap(), vec![64, 128]);
        let plan = spec.scaling.plan_for(64).unwrap();
        let schedule = spec.schedule_or_default(&plan).unwrap();
        assert_eq!(schedule.reservoir_densities(0.0).unwrap(), (0.8, 0.2));
    }

    #[test]
    fn roundtrips_through_toml() {
        let spec = ExperimentSpec::from_toml(SAMPLE).unwrap();
        let text = spec.to_toml();
        let again = ExperimentSpec::from_toml(&text).unwrap();
        assert_eq!(spec.seed, again.seed);
        assert_eq!(spec.replicas, again.replicas);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentSpec::from_toml("mode = \"stationary\"").is_err());

        let bad = SAMPLE.replace("replicas = 4", "replicas = 0");
        assert!(ExperimentSpec::from_toml(&bad).is_err());

        let bad = SAMPLE.replace("horizon = 1.0", "horizon = -2.0");
        assert!(ExperimentSpec::from_toml(&bad).is_err());

        // missing initial for a mode that needs one
        let bad = SAMPLE.replace(
            "[initial]\nkind = \"riemann\"\nu_left = 0.8\nu_right = 0.2\nx0 = 0.5",
            "",
        );
        assert!(ExperimentSpec::from_toml(&bad).is_err());
    }

    #[test]
    fn missing_profile_file_is_a_config_error() {
        let toml = r#"
mode = "solver-only"
horizon = 0.5

[scaling]
n = 64
kappa = 0.14

[initial]
kind = "file"
path = "/nonexistent/profile.csv"
"#;
        let err = ExperimentSpec::from_toml(toml).unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }

    #[test]
    fn segments_and_liggett_parametrizations() {
        let toml = r#"
mode = "stationary"
horizon = 2.0
replicas = 2

[scaling]
n = 32
sigma = 1.0
sigma_tilde = 1.0
k = 4
p = 1.0

[schedule]
rho_minus = 0.5
rho_plus = 0.5
liggett = true
"#;
        let spec = ExperimentSpec::from_toml(toml).unwrap();
        let plan = spec.scaling.plan_for(32).unwrap();
        let schedule = spec.schedule_or_default(&plan).unwrap();
        let r = schedule.rates_at(0.0).unwrap();
        // (p+σ)ρ̄ = 1.0 etc.
        assert_eq!((r.alpha, r.beta, r.gamma, r.delta), (1.0, 1.0, 0.5, 0.5));

        let toml2 = r#"
mode = "stationary"
horizon = 1.0

[scaling]
n = 32
sigma = 1.0
sigma_tilde = 1.0
k = 4

[schedule]
segments = [
  { t_start = 0.0, alpha = 1.0, beta = 1.0, gamma = 1.0, delta = 1.0 },
  { t_start = 0.5, alpha = 2.0, beta = 1.0, gamma = 2.0, delta = 1.0 },
]
"#;
        let spec = ExperimentSpec::from_toml(toml2).unwrap();
        let plan = spec.scaling.plan_for(32).unwrap();
        let schedule = spec.schedule_or_default(&plan).unwrap();
        assert_eq!(schedule.next_breakpoint_after(0.0), Some(0.5));
    }
}

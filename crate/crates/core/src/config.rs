//! Declarative experiment configuration.
//!
//! A config is one JSON document. Unknown keys are rejected everywhere and
//! every numeric default lives in this module; `docs/config-schema.md`
//! describes the format. [`ExperimentConfig::validate`] runs before any
//! computation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::geometry::{CertificationCounts, ConvexDomain, ObliqueField, ValidationThresholds};
use crate::ldp::{EventSpec, OptimizerOptions, PathFunctional};
use crate::model::{Control, InitialCondition, ModelCoefficients, TimeGrid};
use crate::solver::{solve_penalized_skeleton, PenalizedProblem, ReplicaPlan, SolverError, SweepPlan};
use crate::space::{Field, SpatialGrid};

pub const DEFAULT_N_PEN: f64 = 1024.0;
pub const DEFAULT_SWEEP: SweepPlan = SweepPlan { n_start: 4.0, factor: 2.0, n_max: 4096.0 };
pub const DEFAULT_TOL_CAUCHY: f64 = 1e-4;
pub const DEFAULT_EPSILONS: [f64; 5] = [1.0, 0.5, 0.2, 0.1, 0.05];
pub const DEFAULT_REPLICAS: usize = 1000;
pub const DEFAULT_NOISE_EPSILON: f64 = 0.1;
pub const DEFAULT_VALIDATION_SAMPLES: usize = 1000;
/// `tol_vi` is this fraction of the total variation of the measure when unset.
pub const DEFAULT_TOL_VI_FRACTION: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config error at `{field}` (line {line}, column {column}): {message}")]
    Parse { field: String, line: usize, column: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Continuity family members with their labels.
pub type LabelledControls = Vec<(String, Control)>;

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

/// Accepts a number or `null` (infinity) but requires the key to be present.
fn nullable_radius<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    Option::<f64>::deserialize(d)
}

fn default_gamma() -> ObliqueField {
    ObliqueField::Normal
}

fn default_initial() -> InitialCondition {
    InitialCondition::Zero
}

fn default_stride() -> usize {
    1
}

fn default_epsilons() -> Vec<f64> {
    DEFAULT_EPSILONS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "J")]
    pub interior: usize,
    #[serde(rename = "T")]
    pub t_final: f64,
    /// Largest solver step; `1 / (2 n_pen)` when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyConfig {
    pub n_pen: f64,
    pub n_start: f64,
    pub factor: f64,
    pub n_max: f64,
    pub tol_cauchy: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            n_pen: DEFAULT_N_PEN,
            n_start: DEFAULT_SWEEP.n_start,
            factor: DEFAULT_SWEEP.factor,
            n_max: DEFAULT_SWEEP.n_max,
            tol_cauchy: DEFAULT_TOL_CAUCHY,
        }
    }
}

impl PenaltyConfig {
    pub fn plan(&self) -> SweepPlan {
        SweepPlan { n_start: self.n_start, factor: self.factor, n_max: self.n_max }
    }
}

/// Piecewise-constant controls on `steps` equal intervals of `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Zero {
        #[serde(default = "one")]
        steps: usize,
    },
    Constant {
        value: Vec<f64>,
        #[serde(default = "one")]
        steps: usize,
    },
    /// `hdot(t) = amplitude * sin(2 pi frequency t)`, sampled at midpoints.
    Sine { amplitude: Vec<f64>, frequency: f64, steps: usize },
    /// One `m`-vector per step.
    Values { hdot: Vec<Vec<f64>> },
}

fn one() -> usize {
    1
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec::Zero { steps: 1 }
    }
}

impl ControlSpec {
    pub fn steps(&self) -> usize {
        match self {
            ControlSpec::Zero { steps } | ControlSpec::Constant { steps, .. } | ControlSpec::Sine { steps, .. } => *steps,
            ControlSpec::Values { hdot } => hdot.len(),
        }
    }

    pub fn build(&self, t_final: f64, m: usize) -> Result<Control, ConfigError> {
        let width = |v: &[f64]| {
            if v.len() == m {
                Ok(())
            } else {
                invalid(format!("control vector has {} entries, noise dimension is {m}", v.len()))
            }
        };
        if self.steps() == 0 {
            return invalid("control needs at least one step");
        }
        let control = match self {
            ControlSpec::Zero { steps } => Control::zeros(t_final, *steps, m),
            ControlSpec::Constant { value, steps } => {
                width(value)?;
                Control::constant(t_final, *steps, value)
            }
            ControlSpec::Sine { amplitude, frequency, steps } => {
                width(amplitude)?;
                if !frequency.is_finite() {
                    return invalid("sine frequency must be finite");
                }
                let w = 2.0 * std::f64::consts::PI * frequency;
                Control::from_fn(t_final, *steps, m, |t| amplitude.iter().map(|a| a * (w * t).sin()).collect())
            }
            ControlSpec::Values { hdot } => {
                for v in hdot {
                    width(v)?;
                }
                Control::new(t_final, m, hdot.iter().flatten().copied().collect())
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?
            }
        };
        if !control.hdot.iter().all(|v| v.is_finite()) {
            return invalid("control values must be finite");
        }
        Ok(control)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyMember {
    pub label: String,
    pub control: ControlSpec,
}

/// Controls converging weakly to `limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `amplitude * sin(2 pi r t)` for each `r` in `frequencies`.
    SineFrequencies { amplitude: Vec<f64>, frequencies: Vec<f64>, steps: usize },
    Explicit { members: Vec<FamilyMember> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityConfig {
    pub family: FamilySpec,
    #[serde(default)]
    pub limit: ControlSpec,
    /// `N` of the control ball `S_N`; unchecked when absent.
    #[serde(default)]
    pub ball: Option<f64>,
}

impl ContinuityConfig {
    pub fn members(&self) -> Vec<(String, ControlSpec)> {
        match &self.family {
            FamilySpec::SineFrequencies { amplitude, frequencies, steps } => frequencies
                .iter()
                .map(|r| {
                    (format!("r={r}"), ControlSpec::Sine { amplitude: amplitude.clone(), frequency: *r, steps: *steps })
                })
                .collect(),
            FamilySpec::Explicit { members } => members.iter().map(|m| (m.label.clone(), m.control.clone())).collect(),
        }
    }
}

/// Where a reference field or path comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    Zero,
    /// Skeleton at `n_pen` under zero control.
    FreeSkeleton,
    /// Skeleton at `n_pen` under the configured control.
    ControlledSkeleton,
    /// A closed-form field (terminal-ball centers only).
    ClosedForm { field: InitialCondition },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventConfig {
    TerminalBall {
        center: ReferenceSpec,
        /// `null` for an infinite radius.
        #[serde(deserialize_with = "nullable_radius")]
        radius: Option<f64>,
        #[serde(default)]
        complement: bool,
    },
    SupExceed {
        reference: ReferenceSpec,
        threshold: f64,
    },
    FunctionalThreshold {
        functional: PathFunctional,
        level: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Noise level of the `spde` and `mc` subcommands.
    pub epsilon: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { epsilon: DEFAULT_NOISE_EPSILON }
    }
}

/// Which control drives the LDP1 distance experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ldp1Control {
    RateMinimizer,
    Configured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ldp1Config {
    pub delta: f64,
    pub control: Ldp1Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedConfig {
    pub lambda: f64,
    pub epsilons: Vec<f64>,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdpConfig {
    /// Index into `events` of the terminal-ball event used by `rate` and
    /// `ldp-compare`.
    pub event: usize,
    pub ldp1: Option<Ldp1Config>,
    pub weighted: Option<WeightedConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Lower bound for the variational inequality, `-tol_vi`; a fixed
    /// fraction of the measure's total variation when absent.
    pub tol_vi: Option<f64>,
    pub rho_min: f64,
    pub delta_min: f64,
    /// `C0` in the matrix-field display; skipped when absent.
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub samples: usize,
    pub counts: CertificationCounts,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { samples: DEFAULT_VALIDATION_SAMPLES, counts: CertificationCounts::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    /// Base seed of every random stream; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    pub domain: ConvexDomain,
    #[serde(default = "default_gamma")]
    pub gamma: ObliqueField,
    pub coefficients: ModelCoefficients,
    #[serde(default = "default_initial")]
    pub initial: InitialCondition,
    pub grid: GridConfig,
    #[serde(default)]
    pub penalty: PenaltyConfig,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub continuity: Option<ContinuityConfig>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub events: Vec<EventConfig>,
    #[serde(default)]
    pub ldp: LdpConfig,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub validation: ValidationConfig,
    /// Output directory; `--out` overrides it.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_replicas() -> usize {
    DEFAULT_REPLICAS
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        invalid(format!("{name} must be positive and finite, got {v}"))
    }
}

fn decreasing(name: &str, list: &[f64]) -> Result<(), ConfigError> {
    if list.is_empty() || list.iter().any(|e| !(e.is_finite() && *e > 0.0)) || list.windows(2).any(|w| w[1] >= w[0]) {
        return invalid(format!("{name} must be a non-empty, positive, strictly decreasing list"));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses JSON with field paths and line numbers in the diagnostics.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse { field, line: inner.line(), column: inner.column(), message: inner.to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let text = String::from_utf8_lossy(&bytes);
        Ok((Self::from_json(&text)?, bytes))
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.coefficients.noise_dim()
    }

    /// Common multiple of every configured control grid, including the
    /// optimizer's, so the solver grid refines all of them.
    fn control_steps(&self) -> usize {
        let mut q = lcm(self.control.steps().max(1), self.optimizer.control_steps.max(1));
        if let Some(c) = &self.continuity {
            q = lcm(q, c.limit.steps().max(1));
            for (_, spec) in c.members() {
                q = lcm(q, spec.steps().max(1));
            }
        }
        q
    }

    /// Schema-level checks that need no solver run.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.domain.validate().map_err(|e| wrap(&e))?;
        self.gamma.check(self.dim()).map_err(|e| wrap(&e))?;
        self.coefficients.check().map_err(|e| wrap(&e))?;
        self.coefficients.check_dim(self.dim()).map_err(|e| wrap(&e))?;
        SpatialGrid::new(self.grid.interior, self.dim()).map_err(|e| wrap(&e))?;
        positive("grid.T", self.grid.t_final)?;
        if self.grid.stride == 0 {
            return invalid("grid.stride must be at least 1");
        }
        let p = &self.penalty;
        positive("penalty.n_pen", p.n_pen)?;
        positive("penalty.tol_cauchy", p.tol_cauchy)?;
        p.plan().levels()?;
        if let Some(dt) = self.grid.dt {
            positive("grid.dt", dt)?;
            if dt > 1.0 / (2.0 * p.n_pen) * (1.0 + 1e-12) {
                return invalid(format!("grid.dt = {dt} exceeds the stability bound 1/(2 n_pen) = {}", 0.5 / p.n_pen));
            }
        }
        let m = self.noise_dim();
        self.control.build(self.grid.t_final, m)?;
        if let Some(c) = &self.continuity {
            let members = c.members();
            if members.is_empty() {
                return invalid("continuity family is empty");
            }
            for (_, spec) in &members {
                spec.build(self.grid.t_final, m)?;
            }
            c.limit.build(self.grid.t_final, m)?;
            if let Some(n) = c.ball {
                positive("continuity.ball", n)?;
            }
        }
        decreasing("epsilons", &self.epsilons)?;
        positive("noise.epsilon", self.noise.epsilon)?;
        if self.replicas == 0 {
            return invalid("replicas must be at least 1");
        }
        for (i, e) in self.events.iter().enumerate() {
            match e {
                EventConfig::TerminalBall { radius: Some(r), .. } if r.is_nan() || *r <= 0.0 => {
                    return invalid(format!("events[{i}]: radius must be positive or null"))
                }
                EventConfig::TerminalBall { center: ReferenceSpec::ClosedForm { field }, .. } => {
                    field.to_field(SpatialGrid::new(self.grid.interior, self.dim()).map_err(|e| wrap(&e))?);
                }
                EventConfig::SupExceed { reference, threshold } => {
                    if matches!(reference, ReferenceSpec::ClosedForm { .. }) {
                        return invalid(format!("events[{i}]: sup_exceed needs a path reference"));
                    }
                    if !(threshold.is_finite() && *threshold >= 0.0) {
                        return invalid(format!("events[{i}]: threshold must be finite and non-negative"));
                    }
                }
                EventConfig::FunctionalThreshold { level, .. } if !level.is_finite() => {
                    return invalid(format!("events[{i}]: level must be finite"))
                }
                _ => {}
            }
        }
        if !self.events.is_empty() && self.ldp.event >= self.events.len() {
            return invalid(format!("ldp.event = {} but only {} events are configured", self.ldp.event, self.events.len()));
        }
        if let Some(l) = &self.ldp.ldp1 {
            positive("ldp.ldp1.delta", l.delta)?;
        }
        if let Some(w) = &self.ldp.weighted {
            if !(w.lambda.is_finite() && w.lambda >= 0.0) {
                return invalid("ldp.weighted.lambda must be non-negative");
            }
            decreasing("ldp.weighted.epsilons", &w.epsilons)?;
            if w.replicas == 0 {
                return invalid("ldp.weighted.replicas must be at least 1");
            }
        }
        let o = &self.optimizer;
        if o.mu_schedule.is_empty() || o.mu_schedule.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return invalid("optimizer.mu_schedule must be a non-empty list of positive values");
        }
        if o.control_steps == 0 || o.control_steps * m > o.max_coefficients {
            return invalid(format!("optimizer.control_steps * m must lie in 1..={}", o.max_coefficients));
        }
        if let Some(t) = self.tolerances.tol_vi {
            if !(t.is_finite() && t >= 0.0) {
                return invalid("tolerances.tol_vi must be non-negative");
            }
        }
        if self.validation.samples == 0 {
            return invalid("validation.samples must be at least 1");
        }
        let u0 = self.initial_field()?;
        for (j, p) in u0.points().enumerate() {
            let d = self.domain.distance(p).map_err(|e| wrap(&e))?;
            if d > 0.0 {
                return invalid(format!("initial condition leaves the domain at node {j} (distance {d:e})"));
            }
        }
        Ok(())
    }

    pub fn spatial_grid(&self) -> Result<SpatialGrid, ConfigError> {
        SpatialGrid::new(self.grid.interior, self.dim()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn initial_field(&self) -> Result<Field, ConfigError> {
        Ok(self.initial.to_field(self.spatial_grid()?))
    }

    /// The penalized problem at `penalty.n_pen` on a time grid that refines
    /// every configured control.
    pub fn problem(&self) -> Result<PenalizedProblem, ConfigError> {
        let n_pen = self.penalty.n_pen;
        let dt = self.grid.dt.unwrap_or(1.0 / (2.0 * n_pen));
        let time = TimeGrid::fitted(self.grid.t_final, dt, self.control_steps()).map_err(SolverError::from)?;
        Ok(PenalizedProblem {
            coeffs: self.coefficients.clone(),
            domain: self.domain.clone(),
            gamma: self.gamma.clone(),
            grid: self.spatial_grid()?,
            time,
            n_pen,
            stride: self.grid.stride,
        })
    }

    pub fn control(&self) -> Result<Control, ConfigError> {
        self.control.build(self.grid.t_final, self.noise_dim())
    }

    /// Labelled family members and their limit.
    pub fn family(&self) -> Result<Option<(LabelledControls, Control)>, ConfigError> {
        let Some(c) = &self.continuity else { return Ok(None) };
        let m = self.noise_dim();
        let members = c.members().into_iter().map(|(l, s)| Ok((l, s.build(self.grid.t_final, m)?))).collect::<Result<_, ConfigError>>()?;
        Ok(Some((members, c.limit.build(self.grid.t_final, m)?)))
    }

    pub fn replica_plan(&self) -> ReplicaPlan {
        ReplicaPlan::new(self.seed, self.replicas)
    }

    pub fn thresholds(&self) -> ValidationThresholds {
        ValidationThresholds { rho_min: self.tolerances.rho_min, delta_min: self.tolerances.delta_min }
    }

    fn reference_path(&self, problem: &PenalizedProblem, u0: &Field, spec: &ReferenceSpec) -> Result<Vec<Field>, ConfigError> {
        let control = match spec {
            ReferenceSpec::Zero => {
                let (k, s) = (problem.time.steps, problem.stride);
                let count = k / s + 1 + usize::from(!k.is_multiple_of(s));
                return Ok(vec![Field::zeros(problem.grid); count]);
            }
            ReferenceSpec::FreeSkeleton => Control::zeros(problem.time.t_final, 1, self.noise_dim()),
            ReferenceSpec::ControlledSkeleton => self.control()?,
            ReferenceSpec::ClosedForm { .. } => return invalid("closed-form references are fields, not paths"),
        };
        Ok(solve_penalized_skeleton(problem, u0, &control)?.snapshots)
    }

    fn reference_field(&self, problem: &PenalizedProblem, u0: &Field, spec: &ReferenceSpec) -> Result<Field, ConfigError> {
        match spec {
            ReferenceSpec::Zero => Ok(Field::zeros(problem.grid)),
            ReferenceSpec::ClosedForm { field } => Ok(field.to_field(problem.grid)),
            _ => Ok(self.reference_path(problem, u0, spec)?.pop().expect("terminal snapshot")),
        }
    }

    /// Resolves every event against `problem`.
    pub fn events(&self, problem: &PenalizedProblem, u0: &Field) -> Result<Vec<EventSpec>, ConfigError> {
        self.events
            .iter()
            .map(|e| {
                Ok(match e {
                    EventConfig::TerminalBall { center, radius, complement } => EventSpec::TerminalBall {
                        center: self.reference_field(problem, u0, center)?,
                        radius: radius.unwrap_or(f64::INFINITY),
                        complement: *complement,
                    },
                    EventConfig::SupExceed { reference, threshold } => {
                        EventSpec::SupExceed { reference: self.reference_path(problem, u0, reference)?, threshold: *threshold }
                    }
                    EventConfig::FunctionalThreshold { functional, level } => {
                        EventSpec::FunctionalThreshold { functional: *functional, level: *level }
                    }
                })
            })
            .collect()
    }
}

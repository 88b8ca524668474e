//! TOML run configuration.
//!
//! ```toml
//! [grid]
//! R = 10.0
//! h = 0.25
//! d = 2
//!
//! [time]
//! T = 2.0
//! steps = 100
//!
//! [potential]
//! w_reg = { kind = "saddle" }
//!
//! [magnetic]
//! kind = "constant"
//! b0 = 1.0
//!
//! [initial]
//! kind = "gaussian"
//! center = [-2.5, 2.5]
//! width = 1.0
//! amplitude = 0.3183098861837907
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::control::{CostFunctionalSpec, PenaltyOperator};
use crate::fields::{AnalyticForm, ControlFunction, MagneticPotential, PotentialSpec, ScalarFunction};
use crate::grid::{Grid, Stencil};
use crate::hartree::{ConvolutionMethod, KernelSampling};
use crate::linalg::{KrylovSettings, SolveStrategy};
use crate::splitting::{InitialState, SplittingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    #[serde(default)]
    pub potential: PotentialSection,
    #[serde(default)]
    pub magnetic: MagneticSection,
    #[serde(default)]
    pub hartree: HartreeSection,
    #[serde(default)]
    pub control: ControlSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub cost: CostSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "R")]
    pub radius: f64,
    pub h: f64,
    pub d: usize,
    #[serde(default)]
    pub stencil: Stencil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub final_time: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    #[serde(default = "zero_form")]
    pub w_reg: AnalyticForm,
    #[serde(default = "zero_form")]
    pub w_sing: AnalyticForm,
    #[serde(default = "zero_form")]
    pub v_con: AnalyticForm,
}

fn zero_form() -> AnalyticForm {
    AnalyticForm::Zero
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            w_reg: AnalyticForm::Zero,
            w_sing: AnalyticForm::Zero,
            v_con: AnalyticForm::Zero,
        }
    }
}

impl PotentialSection {
    pub fn to_spec(&self) -> PotentialSpec {
        PotentialSpec {
            w_reg: self.w_reg.to_function(),
            w_sing: self.w_sing.to_function(),
            v_con: self.v_con.to_function(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MagneticSection {
    #[default]
    Zero,
    /// Uniform field `b0` along `x₃`.
    Constant { b0: f64 },
    /// Bounded potential: the listed components, or
    /// `A = (b0/2)(−sin x₂, sin x₁, 0)` when none are given.
    Bounded {
        #[serde(default)]
        b0: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        components: Vec<AnalyticForm>,
    },
}

impl MagneticSection {
    pub fn to_potential(&self, dim: usize) -> MagneticPotential {
        match self {
            Self::Zero => MagneticPotential::Zero,
            Self::Constant { b0 } => MagneticPotential::ConstantField { b0: *b0 },
            Self::Bounded { components, .. } if !components.is_empty() => MagneticPotential::BoundedSampled {
                components: components.iter().map(|c| c.to_function()).collect(),
            },
            Self::Bounded { b0, .. } => {
                let b = *b0;
                let components = (0..dim)
                    .map(|axis| match axis {
                        0 => ScalarFunction::new(move |x| -0.5 * b * x[1].sin()),
                        1 => ScalarFunction::new(move |x| 0.5 * b * x[0].sin()),
                        _ => ScalarFunction::zero(),
                    })
                    .collect();
                MagneticPotential::BoundedSampled { components }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HartreeSection {
    #[serde(default)]
    pub enabled: bool,
    /// Defaults to the lattice spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub sampling: KernelSampling,
    #[serde(default)]
    pub method: ConvolutionMethod,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    /// `[t, u]` pairs; empty means `u ≡ 0`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub knots: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSection {
    /// `amplitude · exp(−|x − center|² / (2 width²) + i p·x)`
    Gaussian {
        center: Vec<f64>,
        #[serde(default = "one")]
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        momentum: Option<Vec<f64>>,
    },
}

fn one() -> f64 {
    1.0
}

impl InitialSection {
    pub fn to_state(&self) -> InitialState {
        match self {
            Self::Gaussian {
                center,
                width,
                amplitude,
                momentum,
            } => InitialState::Gaussian {
                center: center.clone(),
                width: *width,
                amplitude: *amplitude,
                momentum: momentum.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Relative paths resolve against the config file's directory.
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    /// Confinement weight in the energy column.
    #[serde(default = "one")]
    pub energy_lambda: f64,
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_cadence() -> usize {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            snapshot_times: Vec::new(),
            cadence: 1,
            energy_lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    #[default]
    Auto,
    Direct,
    Krylov,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub strategy: StrategyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart: Option<usize>,
}

impl SolverSection {
    pub fn to_strategy(&self) -> SolveStrategy {
        let d = KrylovSettings::default();
        let settings = KrylovSettings {
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            restart: self.restart.unwrap_or(d.restart),
        };
        match self.strategy {
            StrategyName::Auto => SolveStrategy::Auto,
            StrategyName::Direct => SolveStrategy::Direct,
            StrategyName::Krylov => SolveStrategy::Krylov(settings),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PenaltySection {
    #[default]
    Identity,
    /// Projection away from a Gaussian, normalized to unit mass.
    Target {
        center: Vec<f64>,
        #[serde(default = "one")]
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        momentum: Option<Vec<f64>>,
    },
    /// `(−i∇^h − A)² + U_Q`.
    Schrodinger {
        potential: AnalyticForm,
        #[serde(default)]
        magnetic: MagneticSection,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(default)]
    pub operator: PenaltySection,
    #[serde(default = "one")]
    pub kappa: f64,
    /// Sine modes for `search`.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Dyadic refinements for `search`.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Random directions for `gradcheck`.
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Finite-difference step for `gradcheck`.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_modes() -> usize {
    2
}

fn default_levels() -> usize {
    4
}

fn default_directions() -> usize {
    5
}

fn default_delta() -> f64 {
    1e-4
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            operator: PenaltySection::Identity,
            kappa: 1.0,
            modes: default_modes(),
            levels: default_levels(),
            directions: default_directions(),
            seed: 0,
            delta: default_delta(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            CliError::Config {
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Canonical TOML; parsing it back gives an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn epsilon(&self) -> f64 {
        if self.hartree.enabled {
            self.hartree.epsilon.unwrap_or(self.grid.h)
        } else {
            0.0
        }
    }

    pub fn control_function(&self) -> Result<Option<ControlFunction>, CliError> {
        if self.control.knots.is_empty() {
            return Ok(None);
        }
        ControlFunction::new(self.control.knots.iter().map(|k| (k[0], k[1])).collect())
            .map(Some)
            .map_err(|e| semantic("control", e))
    }

    pub fn to_splitting(&self) -> Result<SplittingConfig, CliError> {
        Grid::new(self.grid.radius, self.grid.h, self.grid.d).map_err(|e| semantic("grid", e))?;
        let mut cfg = SplittingConfig::new(
            self.grid.radius,
            self.grid.h,
            self.grid.d,
            self.time.final_time,
            self.time.steps,
            self.initial.to_state(),
        );
        cfg.stencil = self.grid.stencil;
        cfg.potential = self.potential.to_spec();
        cfg.magnetic = self.magnetic.to_potential(self.grid.d);
        cfg.epsilon = self.epsilon();
        cfg.kernel_sampling = self.hartree.sampling;
        cfg.convolution = self.hartree.method;
        cfg.control = self.control_function()?;
        cfg.cadence = self.output.cadence;
        cfg.snapshot_times = self.output.snapshot_times.clone();
        cfg.solver = self.solver.to_strategy();
        cfg.lambda = self.output.energy_lambda;
        cfg.validate().map_err(|e| semantic("time/output", e))?;
        Ok(cfg)
    }

    pub fn cost_spec(&self) -> Result<CostFunctionalSpec, CliError> {
        let operator = match &self.cost.operator {
            PenaltySection::Identity => PenaltyOperator::Identity,
            PenaltySection::Target { center, width, momentum } => {
                let grid = Grid::new(self.grid.radius, self.grid.h, self.grid.d).map_err(|e| semantic("grid", e))?;
                let state = InitialState::Gaussian {
                    center: center.clone(),
                    width: *width,
                    amplitude: 1.0,
                    momentum: momentum.clone(),
                };
                let z = state.sample(&grid).map_err(|e| semantic("cost", e))?;
                let n = z.norm();
                if n == 0.0 {
                    return Err(semantic("cost", "target vanishes on the grid"));
                }
                PenaltyOperator::TargetProjection(z.scale((1.0 / n).into()))
            }
            PenaltySection::Schrodinger { potential, magnetic } => PenaltyOperator::DiscreteSchrodinger {
                potential: potential.to_function(),
                magnetic: magnetic.to_potential(self.grid.d),
            },
        };
        Ok(CostFunctionalSpec {
            operator,
            kappa: self.cost.kappa,
        })
    }

    pub fn output_dir(&self, config_path: &Path) -> PathBuf {
        if self.output.directory.is_absolute() {
            self.output.directory.clone()
        } else {
            config_path.parent().unwrap_or(Path::new(".")).join(&self.output.directory)
        }
    }
}

fn semantic(section: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config {
        line: None,
        message: format!("[{section}] {e}"),
    }
}

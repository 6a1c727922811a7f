//! Problem and experiment configuration shared by the tuner and the CLI.

use serde::{Deserialize, Serialize};

use crate::accel::{self, AccelConfig, AccelError, SolveReport};
use crate::flux::{source_cell_average, source_profile, NoiseModel, ShestakovModel};
use crate::transport::{
    Grid, InitialProfile, StepParams, TransportError, TransportMap, DEFAULT_DMAX, DEFAULT_DMIN,
};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Accel(#[from] AccelError),
    #[error("invalid problem configuration: {0}")]
    InvalidProblem(String),
}

/// How the discontinuous source is placed on the nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SourceSampling {
    /// Point values `S(x_i)`.
    Nodal,
    /// Control-volume averages; the discrete total heating is exact.
    #[default]
    CellAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// Stiffness exponent of the flux model.
    pub r: f64,
    pub n_points: usize,
    pub h_step: f64,
    pub dmin: f64,
    pub dmax: f64,
    pub initial: InitialProfile,
    pub source: SourceSampling,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            r: 2.0,
            n_points: 500,
            h_step: 1e4,
            dmin: DEFAULT_DMIN,
            dmax: DEFAULT_DMAX,
            initial: InitialProfile::Linear,
            source: SourceSampling::CellAverage,
        }
    }
}

impl ProblemConfig {
    pub fn stiff() -> Self {
        Self::default()
    }

    pub fn very_stiff() -> Self {
        Self {
            r: 10.0,
            ..Self::default()
        }
    }

    /// The unaccelerated damping `0.6 / r`.
    pub fn default_beta(&self) -> f64 {
        (0.6 / self.r).min(1.0)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(ExperimentError::InvalidProblem(format!(
                "r must be finite and nonnegative, got {}",
                self.r
            )));
        }
        if !(self.h_step > 0.0) {
            return Err(ExperimentError::InvalidProblem(format!(
                "h_step must be positive, got {}",
                self.h_step
            )));
        }
        if !(self.dmin < self.dmax) {
            return Err(ExperimentError::InvalidProblem(
                "dmin must be below dmax".into(),
            ));
        }
        Grid::new(self.n_points)?;
        Ok(())
    }

    /// The coupling map and its starting profile.
    pub fn build(
        &self,
        noise: Option<NoiseModel>,
    ) -> Result<(TransportMap<ShestakovModel>, Vec<f64>), ExperimentError> {
        self.validate()?;
        let grid = Grid::new(self.n_points)?;
        let p0 = self.initial.build(&grid).values;
        let source = match self.source {
            SourceSampling::Nodal => source_profile(&grid),
            SourceSampling::CellAverage => source_cell_average(&grid),
        };
        let params = StepParams {
            h_step: self.h_step,
            p_prev: p0.clone(),
            source,
        };
        let mut model = ShestakovModel::new(self.r);
        model.noise = noise;
        let map = TransportMap::new(grid, params, model).with_bounds(self.dmin, self.dmax);
        Ok((map, p0))
    }
}

/// Everything needed to reproduce one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub accel: AccelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub out_dir: String,
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            out_dir: "out".into(),
            plot: false,
        }
    }
}

impl ExperimentConfig {
    pub fn new(problem: ProblemConfig, accel: AccelConfig) -> Self {
        Self {
            problem,
            accel,
            ..Self::default()
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.problem.validate()?;
        self.accel.validate()?;
        Ok(())
    }

    pub fn run(&self) -> Result<SolveReport, ExperimentError> {
        self.accel.validate()?;
        let (mut map, p0) = self.problem.build(self.noise)?;
        Ok(accel::solve(&mut map, &p0, &self.accel)?)
    }
}

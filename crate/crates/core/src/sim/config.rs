use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dimensions, EnergyBudget, ModelParts, SignalModel, StateDynamics};

/// Which estimators a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Centralized, decentralized and benchmark on a static parameter.
    Static,
    Centralized,
    Decentralized,
    BenchmarkOnly,
    /// All three estimators tracking a linear-Gaussian state.
    Timevarying,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Mode::Static),
            "centralized" => Ok(Mode::Centralized),
            "decentralized" => Ok(Mode::Decentralized),
            "benchmark-only" | "benchmark" => Ok(Mode::BenchmarkOnly),
            "timevarying" | "time-varying" => Ok(Mode::Timevarying),
            _ => Err(Error::Config(format!("unknown mode '{s}'"))),
        }
    }

    pub fn runs_centralized(self) -> bool {
        matches!(self, Mode::Static | Mode::Centralized | Mode::Timevarying)
    }

    pub fn runs_decentralized(self) -> bool {
        matches!(self, Mode::Static | Mode::Decentralized | Mode::Timevarying)
    }

    pub fn runs_benchmark(self) -> bool {
        !matches!(self, Mode::Centralized | Mode::Decentralized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    pub param: usize,
    pub obs: usize,
    pub sensors: usize,
    pub transmitters: usize,
    pub antennas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrConfig {
    pub obs_db: f64,
    pub collab_db: f64,
    pub fc_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyConfig {
    Full,
    /// Random geometric graph in the unit square; each trial draws its own
    /// layout from `seed` and the trial index.
    Geometric { radius: f64, seed: u64 },
    Explicit { adjacency: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    /// Cap applied to every sensor unless `caps` is given.
    #[serde(default = "default_budget")]
    pub per_sensor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caps: Option<Vec<f64>>,
}

fn default_budget() -> f64 {
    1.0
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self { per_sensor: default_budget(), caps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlternationConfig {
    #[serde(default = "default_rho_centralized")]
    pub rho_centralized: usize,
    #[serde(default = "default_rho_decentralized")]
    pub rho_decentralized: usize,
    /// Gauss-Seidel sweeps over the transmitters per centralized round.
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
}

fn default_rho_centralized() -> usize {
    20
}

fn default_rho_decentralized() -> usize {
    100
}

fn default_sweeps() -> usize {
    1
}

impl Default for AlternationConfig {
    fn default() -> Self {
        Self {
            rho_centralized: default_rho_centralized(),
            rho_decentralized: default_rho_decentralized(),
            sweeps: default_sweeps(),
        }
    }
}

/// State evolution for the time-varying mode. `transition` / `noise_cov`
/// override the scaled identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default = "one")]
    pub transition_scale: f64,
    #[serde(default)]
    pub noise_var: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_cov: Option<Vec<Vec<f64>>>,
}

fn one() -> f64 {
    1.0
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { transition_scale: 1.0, noise_var: 0.0, transition: None, noise_cov: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// All three SNRs together.
    Snr,
    SnrObs,
    SnrCollab,
    SnrFc,
    Transmitters,
    Sensors,
    ParamDim,
    Radius,
    Budget,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Snr => "snr",
            SweepParameter::SnrObs => "snr_obs",
            SweepParameter::SnrCollab => "snr_collab",
            SweepParameter::SnrFc => "snr_fc",
            SweepParameter::Transmitters => "transmitters",
            SweepParameter::Sensors => "sensors",
            SweepParameter::ParamDim => "param_dim",
            SweepParameter::Radius => "radius",
            SweepParameter::Budget => "budget",
        }
    }
}

/// A complete scenario, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub trials: usize,
    pub horizon: usize,
    pub mode: Mode,
    pub dims: DimsConfig,
    pub snr: SnrConfig,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub alternation: AlternationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>], expect: (usize, usize)) -> Result<DMatrix<f64>> {
    if rows.len() != expect.0 || rows.iter().any(|r| r.len() != expect.1) {
        return Err(Error::Config(format!("{name} must be {}x{}", expect.0, expect.1)));
    }
    Ok(DMatrix::from_fn(expect.0, expect.1, |i, j| rows[i][j]))
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The configuration used for the default scenario: `P = 3`, `L = 6`,
    /// `N = 7`, `M = S = 3`, 20 dB everywhere, full topology.
    pub fn reference() -> Self {
        Self {
            seed: 1,
            trials: 20,
            horizon: 100,
            mode: Mode::Static,
            dims: DimsConfig { param: 3, obs: 6, sensors: 7, transmitters: 3, antennas: 3 },
            snr: SnrConfig { obs_db: 20.0, collab_db: 20.0, fc_db: 20.0 },
            topology: TopologyConfig::Full,
            budget: BudgetConfig::default(),
            alternation: AlternationConfig::default(),
            dynamics: None,
            sweep: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dimensions()?;
        if self.trials == 0 || self.horizon == 0 {
            return Err(Error::Config("trials and horizon must be positive".into()));
        }
        for (name, v) in [("snr.obs_db", self.snr.obs_db), ("snr.collab_db", self.snr.collab_db), ("snr.fc_db", self.snr.fc_db)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if self.alternation.rho_centralized == 0 || self.alternation.rho_decentralized == 0 {
            return Err(Error::Config("alternation rounds must be positive".into()));
        }
        self.budget(self.dims.sensors)?;
        match &self.topology {
            TopologyConfig::Geometric { radius, .. } if !(radius.is_finite() && *radius >= 0.0) => {
                return Err(Error::Config(format!("geometric radius must be finite and >= 0, got {radius}")));
            }
            TopologyConfig::Explicit { adjacency } => {
                matrix_from_rows("topology.adjacency", adjacency, (self.dims.transmitters, self.dims.sensors))?;
            }
            _ => {}
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() || s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("sweep values must be a non-empty list of finite numbers".into()));
            }
        }
        if self.mode == Mode::Timevarying {
            self.dynamics()?;
        }
        Ok(())
    }

    pub fn dimensions(&self) -> Result<Dimensions> {
        let d = &self.dims;
        Dimensions::new(d.param, d.obs, d.sensors, d.transmitters, d.antennas)
    }

    pub fn budget(&self, sensors: usize) -> Result<EnergyBudget> {
        match &self.budget.caps {
            Some(c) if c.len() != sensors => {
                Err(Error::Config(format!("budget.caps has {} entries, expected {sensors}", c.len())))
            }
            Some(c) => EnergyBudget::new(c.clone()),
            None => EnergyBudget::uniform(sensors, self.budget.per_sensor),
        }
    }

    /// Noise statistics and prior; `H` and `G` are drawn per step.
    pub fn base_model(&self) -> Result<SignalModel> {
        let parts = ModelParts::isotropic(self.dimensions()?, self.snr.obs_db, self.snr.collab_db, self.snr.fc_db);
        SignalModel::new(parts)
    }

    /// State evolution: the configured dynamics in time-varying mode,
    /// `None` for a static parameter.
    pub fn dynamics(&self) -> Result<Option<StateDynamics>> {
        if self.mode != Mode::Timevarying {
            return Ok(None);
        }
        let p = self.dims.param;
        let d = self.dynamics.clone().unwrap_or_default();
        let a = match &d.transition {
            Some(rows) => matrix_from_rows("dynamics.transition", rows, (p, p))?,
            None => DMatrix::identity(p, p) * d.transition_scale,
        };
        let q = match &d.noise_cov {
            Some(rows) => matrix_from_rows("dynamics.noise_cov", rows, (p, p))?,
            None => DMatrix::identity(p, p) * d.noise_var,
        };
        StateDynamics::new(a, q).map(Some)
    }

    /// Copy with one sweep parameter set to `value`.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{} must be a positive integer, got {v}", parameter.name())))
            }
        };
        match parameter {
            SweepParameter::Snr => {
                c.snr = SnrConfig { obs_db: value, collab_db: value, fc_db: value };
            }
            SweepParameter::SnrObs => c.snr.obs_db = value,
            SweepParameter::SnrCollab => c.snr.collab_db = value,
            SweepParameter::SnrFc => c.snr.fc_db = value,
            SweepParameter::Transmitters => c.dims.transmitters = count(value)?,
            SweepParameter::Sensors => c.dims.sensors = count(value)?,
            SweepParameter::ParamDim => c.dims.param = count(value)?,
            SweepParameter::Radius => match &mut c.topology {
                TopologyConfig::Geometric { radius, .. } => *radius = value,
                _ => return Err(Error::Config("radius sweep needs a geometric topology".into())),
            },
            SweepParameter::Budget => {
                c.budget.per_sensor = value;
                c.budget.caps = None;
            }
        }
        c.sweep = None;
        c.validate()?;
        Ok(c)
    }

    /// Explicit adjacency, if configured.
    pub fn explicit_adjacency(&self) -> Result<Option<DMatrix<f64>>> {
        match &self.topology {
            TopologyConfig::Explicit { adjacency } => Ok(Some(matrix_from_rows(
                "topology.adjacency",
                adjacency,
                (self.dims.transmitters, self.dims.sensors),
            )?)),
            _ => Ok(None),
        }
    }
}

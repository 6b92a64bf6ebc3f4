//! Declarative experiment files.
//!
//! ```json
//! {
//!   "geometry": {"kind": "sphere", "weight": 10},
//!   "hamiltonian": [{"generators": ["J0"], "coeff": {"re": 1.4}}],
//!   "boundary": {"z_I": {"re": 0.4}, "zbar_F": {"re": -0.1, "im": 0.5}, "tau": 1.0},
//!   "solver": {"steps": 256, "tol": 1e-12, "newton_max": 50, "rmax": 1e6},
//!   "mode": "sweep",
//!   "sweep": [{"path": "geometry.weight", "values": [10, 20, 40]}]
//! }
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;

use qcprop::dynamics::BoundaryData;
use qcprop::geometry::{Kind, PhaseSpace};
use qcprop::semiclassics::Settings;
use qcprop::symbols::{Algebra, CompiledHamiltonian, HamiltonianSpec, TermRecord};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("sweep axis `{0}` has no values")]
    EmptyAxis(String),
    #[error("mode {0:?} needs at least one sweep axis")]
    MissingAxes(Mode),
    #[error("sweep path `{0}` does not name a numeric field")]
    UnresolvedPath(String),
    #[error("convergence runs need a `geometry.weight` axis")]
    MissingWeightAxis,
    #[error(transparent)]
    Model(#[from] qcprop::error::Error),
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "config_io",
            ConfigError::Parse(_) => "config_parse",
            ConfigError::EmptyAxis(_) => "config_empty_axis",
            ConfigError::MissingAxes(_) => "config_missing_axes",
            ConfigError::UnresolvedPath(_) => "config_unresolved_path",
            ConfigError::MissingWeightAxis => "config_missing_weight_axis",
            ConfigError::Model(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Propagate,
    Sweep,
    Convergence,
    Validate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path into the config, e.g. `boundary.tau` or `hamiltonian.0.coeff.re`.
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: PhaseSpace,
    #[serde(default)]
    pub hamiltonian: Vec<TermRecord>,
    pub boundary: BoundaryData,
    #[serde(default)]
    pub solver: Settings,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    /// Fock-space cutoff for the plane and disk oracles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    /// Ordering parameter; only meaningful on the plane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// `(path, value)` substitutions defining one sweep point.
pub type Axes = Vec<(String, f64)>;

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn algebra(&self) -> Algebra {
        Algebra::for_kind(self.geometry.kind())
    }

    pub fn spec(&self) -> Result<HamiltonianSpec, ConfigError> {
        Ok(HamiltonianSpec::from_records(
            self.algebra(),
            &self.hamiltonian,
        )?)
    }

    pub fn truncation(&self) -> usize {
        self.truncation.unwrap_or(match self.geometry.kind() {
            Kind::Sphere => 0,
            Kind::Plane => qcprop::symbols::DEFAULT_HW_TRUNCATION,
            Kind::Disk => qcprop::symbols::DEFAULT_SU11_TRUNCATION,
        })
    }

    /// Checks that the config describes a computable experiment.
    pub fn validate(&self) -> Result<(), ConfigError> {
        CompiledHamiltonian::new(&self.spec()?, &self.geometry)?;
        self.boundary.check_domain(&self.geometry)?;
        if let Some(alpha) = self.alpha {
            if self.geometry.kind() != Kind::Plane {
                return Err(qcprop::error::Error::NotFlat.into());
            }
            if !(0.0..=1.0).contains(&alpha) {
                return Err(ConfigError::Parse(format!(
                    "alpha must lie in [0, 1], got {alpha}"
                )));
            }
        }
        if matches!(self.mode, Mode::Sweep | Mode::Convergence) && self.sweep.is_empty() {
            return Err(ConfigError::MissingAxes(self.mode));
        }
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(ConfigError::EmptyAxis(axis.path.clone()));
            }
            let mut tree = self.to_value();
            set_path(&mut tree, &axis.path, axis.values[0])?;
        }
        Ok(())
    }

    fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Copy of the config with the numeric field at `path` replaced.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self, ConfigError> {
        let mut tree = self.to_value();
        set_path(&mut tree, path, value)?;
        serde_json::from_value(tree)
            .map_err(|e| ConfigError::Parse(format!("{path} = {value}: {e}")))
    }

    /// Cartesian product of the sweep axes, last axis fastest. Points whose
    /// substituted config is invalid are reported by the runner, not here.
    pub fn expand(&self) -> Result<Vec<(usize, Axes)>, ConfigError> {
        self.validate()?;
        let mut combos: Vec<Axes> = vec![Vec::new()];
        for axis in &self.sweep {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut next = prefix.clone();
                        next.push((axis.path.clone(), v));
                        next
                    })
                })
                .collect();
        }
        Ok(combos.into_iter().enumerate().collect())
    }

    pub fn point(&self, axes: &[(String, f64)]) -> Result<Self, ConfigError> {
        let mut tree = self.to_value();
        for (path, v) in axes {
            set_path(&mut tree, path, *v)?;
        }
        let mut config: ExperimentConfig =
            serde_json::from_value(tree).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.sweep.clear();
        config.mode = Mode::Propagate;
        Ok(config)
    }
}

fn set_path(tree: &mut Value, path: &str, value: f64) -> Result<(), ConfigError> {
    let unresolved = || ConfigError::UnresolvedPath(path.to_string());
    let mut node = tree;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(key).ok_or_else(unresolved)?,
            Value::Array(items) => {
                let i: usize = key.parse().map_err(|_| unresolved())?;
                items.get_mut(i).ok_or_else(unresolved)?
            }
            _ => return Err(unresolved()),
        };
    }
    if !node.is_number() {
        return Err(unresolved());
    }
    *node = serde_json::Number::from_f64(value)
        .map(Value::Number)
        .ok_or_else(unresolved)?;
    Ok(())
}

/// Built-in experiment used when no config file is given.
pub fn default_config() -> ExperimentConfig {
    ExperimentConfig::from_json(
        r#"{
            "geometry": {"kind": "sphere", "weight": 10},
            "hamiltonian": [
                {"generators": ["J0"], "coeff": {"re": 1.4}},
                {"generators": ["J+"], "coeff": {"re": 0.3, "im": 0.2}},
                {"generators": ["J-"], "coeff": {"re": 0.3, "im": -0.2}}
            ],
            "boundary": {"z_I": {"re": 0.4}, "zbar_F": {"re": -0.1, "im": 0.5}, "tau": 1.0}
        }"#,
    )
    .expect("built-in config parses")
}

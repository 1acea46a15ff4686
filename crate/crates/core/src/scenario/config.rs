//! TOML scenario configuration. Every tunable constant has a default, so an
//! empty file reproduces the reference experiment.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dcee::DceeConfig;
use crate::es::EsConfig;
use crate::estimator::BankConfig;
use crate::foc::FocConfig;
use crate::observer::ObserverConfig;
use crate::plant::MotorParams;
use crate::scalar::{lit, Scalar};
use crate::scenario::timeline::ScenarioTimeline;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Integration and reporting settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig<T> {
    /// Plant integration step (s).
    pub dt: T,
    /// Control period (s); must be a whole multiple of `dt`.
    pub t_s: T,
    /// Length of the window at the end of each segment averaged for
    /// steady-state metrics (s).
    pub steady_window: T,
    /// Settling band as a fraction of the steady-state current magnitude.
    pub settle_band: T,
    /// Intervals `[t0, t1)` over which the off-MTPA current integral is reported.
    pub transient_windows: Vec<[T; 2]>,
}

impl<T: Scalar> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            dt: lit(1e-6),
            t_s: lit(1e-4),
            steady_window: lit(0.05),
            settle_band: lit(0.02),
            transient_windows: vec![[lit(0.6), lit(0.7)], [lit(0.8), lit(0.9)]],
        }
    }
}

impl<T: Scalar> SimConfig<T> {
    /// Plant steps per control tick.
    pub fn substeps(&self) -> Result<usize, ConfigError> {
        let ratio = self.t_s / self.dt;
        let rounded = ratio.round();
        if !(self.dt > T::zero()) || !ratio.is_finite() || rounded < T::one() || (ratio - rounded).abs() > lit::<T>(1e-6) * rounded {
            return Err(ConfigError::Invalid(format!(
                "t_s = {} s is not a whole multiple of dt = {} s",
                self.t_s, self.dt
            )));
        }
        Ok(rounded.to_usize().unwrap())
    }
}

/// Additive Gaussian measurement noise. All deviations default to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig<T> {
    pub seed: u64,
    /// Standard deviation on each dq current sample (A).
    pub current_std: T,
    /// Standard deviation on the mechanical speed sample (rad/s).
    pub speed_std: T,
    /// Standard deviation on the torque sample (N·m).
    pub torque_std: T,
}

impl<T: Scalar> Default for NoiseConfig<T> {
    fn default() -> Self {
        Self { seed: 0, current_std: T::zero(), speed_std: T::zero(), torque_std: T::zero() }
    }
}

impl<T: Scalar> NoiseConfig<T> {
    pub fn is_active(&self) -> bool {
        self.current_std > T::zero() || self.speed_std > T::zero() || self.torque_std > T::zero()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ScenarioConfig<T> {
    pub motor: MotorParams<T>,
    pub sim: SimConfig<T>,
    pub noise: NoiseConfig<T>,
    pub timeline: ScenarioTimeline<T>,
    pub foc: FocConfig<T>,
    pub es: EsConfig<T>,
    pub dcee: DceeConfig<T>,
    pub bank: BankConfig<T>,
    pub observer: ObserverConfig<T>,
}

impl<T: Scalar> Default for ScenarioConfig<T> {
    fn default() -> Self {
        Self {
            motor: MotorParams::reference_machine(),
            sim: SimConfig::default(),
            noise: NoiseConfig::default(),
            timeline: ScenarioTimeline::reference_experiment(),
            foc: FocConfig::default(),
            es: EsConfig::default(),
            dcee: DceeConfig::default(),
            bank: BankConfig::default(),
            observer: ObserverConfig::default(),
        }
    }
}

impl<T: Scalar + Serialize + DeserializeOwned> ScenarioConfig<T> {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Copy of `self` with the dotted key `path` (e.g. `dcee.k_x`) set to `value`.
    pub fn with_value(&self, path: &str, value: toml::Value) -> Result<Self, ConfigError> {
        let mut root = toml::Value::try_from(self)?;
        let mut node = &mut root;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| ConfigError::Invalid(format!("`{path}` does not name a table entry")))?;
            if i + 1 == keys.len() {
                if !table.contains_key(*key) {
                    return Err(ConfigError::Invalid(format!("unknown config key `{path}`")));
                }
                table.insert((*key).to_string(), value.clone());
                break;
            }
            node = table
                .get_mut(*key)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown config key `{path}`")))?;
        }
        let cfg: Self = root.try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl<T: Scalar> ScenarioConfig<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.motor.validate().map_err(|e| invalid(&e))?;
        self.timeline.validate().map_err(|e| invalid(&e))?;
        self.sim.substeps()?;
        if self.sim.dt > self.motor.max_step() {
            return Err(ConfigError::Invalid(format!(
                "dt = {} s exceeds the stability limit {} s",
                self.sim.dt,
                self.motor.max_step()
            )));
        }
        if self.dcee.t_s != self.sim.t_s {
            return Err(ConfigError::Invalid(format!(
                "dcee.t_s = {} s differs from sim.t_s = {} s",
                self.dcee.t_s, self.sim.t_s
            )));
        }
        if !(self.sim.steady_window > T::zero()) {
            return Err(ConfigError::Invalid("sim.steady_window must be positive".into()));
        }
        if self.sim.transient_windows.iter().any(|w| !(w[0] < w[1])) {
            return Err(ConfigError::Invalid("every transient window needs t0 < t1".into()));
        }
        let stds = [self.noise.current_std, self.noise.speed_std, self.noise.torque_std];
        if stds.iter().any(|s| !(*s >= T::zero()) || !s.is_finite()) {
            return Err(ConfigError::Invalid("noise deviations must be finite and non-negative".into()));
        }
        self.dcee.validate().map_err(|e| invalid(&e))?;
        self.es.validate(self.sim.t_s).map_err(|e| invalid(&e))?;
        self.bank.build().map_err(|e| invalid(&e))?;
        let obs = &self.observer;
        if !(obs.omega_min >= T::zero() && obs.tau_f >= T::zero()) {
            return Err(ConfigError::Invalid("observer constants must be non-negative".into()));
        }
        let foc = &self.foc;
        if !(foc.current_bandwidth_hz > T::zero() && foc.speed_bandwidth_hz > T::zero() && foc.speed_zero_ratio >= T::zero()) {
            return Err(ConfigError::Invalid("foc bandwidths must be positive".into()));
        }
        Ok(())
    }
}

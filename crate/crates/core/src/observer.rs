//! Voltage-model flux and torque observer.
//!
//! Flux linkages are recovered from the steady-state dq voltage equations,
//! `ψ_d = (u_q − R_s i_q)/ω_r` and `ψ_q = −(u_d − R_s i_d)/ω_r`, and the
//! torque follows as `1.5 p_n (ψ_d i_q − ψ_q i_d)`. The estimate is exact for
//! constant currents and degrades whenever `di/dt ≠ 0`. A first-order low-pass
//! smooths the output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Vec2;
use crate::scalar::{lit, Scalar};

/// Where the controllers take their torque measurement from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TorqueSource {
    /// Electromagnetic torque of the plant at the sampled currents.
    #[default]
    Ideal,
    /// Output of [`TorqueObserver`].
    Observed,
}

impl std::fmt::Display for TorqueSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TorqueSource::Ideal => "ideal",
            TorqueSource::Observed => "observed",
        })
    }
}

impl std::str::FromStr for TorqueSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ideal" => Ok(TorqueSource::Ideal),
            "observed" => Ok(TorqueSource::Observed),
            other => Err(format!("unknown torque source `{other}` (expected ideal|observed)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("electrical speed {omega_r} rad/s below observer minimum {omega_min} rad/s")]
    LowSpeed { omega_r: f64, omega_min: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig<T> {
    /// Minimum |ω_r| for a valid estimate (electrical rad/s).
    pub omega_min: T,
    /// Output low-pass time constant (s); 0 disables filtering.
    pub tau_f: T,
}

impl<T: Scalar> Default for ObserverConfig<T> {
    fn default() -> Self {
        Self { omega_min: lit(10.0), tau_f: lit(0.5e-3) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxTorque<T> {
    pub psi_d: T,
    pub psi_q: T,
    pub torque: T,
}

/// Unfiltered algebraic estimate.
pub fn observe_torque<T: Scalar>(
    voltages: Vec2<T>,
    currents: Vec2<T>,
    omega_r: T,
    r_s: T,
    p_n: T,
    omega_min: T,
) -> Result<FluxTorque<T>, ObserverError> {
    if !(omega_r.abs() >= omega_min) {
        return Err(ObserverError::LowSpeed {
            omega_r: omega_r.to_f64().unwrap_or(f64::NAN),
            omega_min: omega_min.to_f64().unwrap_or(f64::NAN),
        });
    }
    let psi_d = (voltages.y - r_s * currents.y) / omega_r;
    let psi_q = -(voltages.x - r_s * currents.x) / omega_r;
    let torque = lit::<T>(1.5) * p_n * (psi_d * currents.y - psi_q * currents.x);
    Ok(FluxTorque { psi_d, psi_q, torque })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverSample<T> {
    pub psi_d: T,
    pub psi_q: T,
    /// Filtered torque; holds the last valid value while `valid` is false.
    pub torque: T,
    pub valid: bool,
}

/// Stateful observer with output filter, one update per control tick.
#[derive(Debug, Clone)]
pub struct TorqueObserver<T> {
    pub config: ObserverConfig<T>,
    alpha: T,
    filtered: T,
    flux: (T, T),
}

impl<T: Scalar> TorqueObserver<T> {
    pub fn new(config: ObserverConfig<T>, t_s: T) -> Self {
        let alpha = if config.tau_f > T::zero() {
            T::one() - (-t_s / config.tau_f).exp()
        } else {
            T::one()
        };
        Self { config, alpha, filtered: T::zero(), flux: (T::zero(), T::zero()) }
    }

    /// `voltages` are those applied over the interval that ended at the
    /// current sample.
    pub fn update(
        &mut self,
        voltages: Vec2<T>,
        currents: Vec2<T>,
        omega_r: T,
        r_s: T,
        p_n: T,
    ) -> ObserverSample<T> {
        match observe_torque(voltages, currents, omega_r, r_s, p_n, self.config.omega_min) {
            Ok(est) => {
                self.filtered = self.filtered + self.alpha * (est.torque - self.filtered);
                self.flux = (est.psi_d, est.psi_q);
                ObserverSample {
                    psi_d: est.psi_d,
                    psi_q: est.psi_q,
                    torque: self.filtered,
                    valid: true,
                }
            }
            Err(_) => ObserverSample {
                psi_d: self.flux.0,
                psi_q: self.flux.1,
                torque: self.filtered,
                valid: false,
            },
        }
    }

    pub fn torque(&self) -> T {
        self.filtered
    }
}

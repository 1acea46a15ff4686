//! Ground-truth IPMSM model in the rotor dq frame.
//!
//! The electrical dynamics follow the standard dq voltage equations with
//! constant parameters; the mechanical side is a single inertia with viscous
//! friction. [`step_plant`] integrates the model with classical fourth-order
//! Runge-Kutta under a zero-order-held input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Vec2;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("motor parameter `{name}` must be strictly positive (got {value})")]
    NotPositive { name: &'static str, value: f64 },
    #[error("L_q ({l_q}) must exceed L_d ({l_d}) for a salient machine")]
    NoSaliency { l_d: f64, l_q: f64 },
    #[error("pole pair count must be at least 1")]
    NoPolePairs,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("integration step {dt} s outside (0, {max}] s")]
    InvalidStep { dt: f64, max: f64 },
    #[error("plant diverged at t = {t} s (i_d = {i_d} A, i_q = {i_q} A, omega_m = {omega_m} rad/s)")]
    Diverged {
        t: f64,
        i_d: f64,
        i_q: f64,
        omega_m: f64,
    },
}

/// Electrical and mechanical constants of the machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotorParams<T> {
    /// Stator resistance (Ω).
    pub r_s: T,
    /// d-axis inductance (H).
    pub l_d: T,
    /// q-axis inductance (H).
    pub l_q: T,
    /// Permanent-magnet flux linkage (Wb).
    pub psi_f: T,
    pub pole_pairs: u32,
    /// DC-link voltage (V).
    pub u_dc: T,
    /// Current magnitude limit (A).
    pub i_smax: T,
    /// Rated torque (N·m).
    pub t_rated: T,
    /// Rated speed (r/min).
    pub n_rated: T,
    /// Rotor inertia (kg·m²).
    pub inertia: T,
    /// Viscous friction coefficient (N·m·s/rad).
    pub viscous: T,
}

impl<T: Scalar> Default for MotorParams<T> {
    fn default() -> Self {
        Self::reference_machine()
    }
}

impl<T: Scalar> MotorParams<T> {
    /// The 10 kW test machine: 3 pole pairs, 0.8/2.0 mH, 0.12 Wb, 0.05 Ω,
    /// 310 V DC link, 120 A limit, 36 N·m at 3000 r/min. Mechanical
    /// constants default to J = 0.01 kg·m² and B = 0.001 N·m·s/rad.
    pub fn reference_machine() -> Self {
        Self {
            r_s: lit(0.05),
            l_d: lit(0.8e-3),
            l_q: lit(2.0e-3),
            psi_f: lit(0.12),
            pole_pairs: 3,
            u_dc: lit(310.0),
            i_smax: lit(120.0),
            t_rated: lit(36.0),
            n_rated: lit(3000.0),
            inertia: lit(0.01),
            viscous: lit(0.001),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("r_s", self.r_s),
            ("l_d", self.l_d),
            ("l_q", self.l_q),
            ("psi_f", self.psi_f),
            ("inertia", self.inertia),
            ("i_smax", self.i_smax),
            ("u_dc", self.u_dc),
        ];
        for (name, value) in positive {
            if !(value > T::zero()) || !value.is_finite() {
                return Err(ParamError::NotPositive {
                    name,
                    value: value.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        if self.viscous < T::zero() {
            return Err(ParamError::NotPositive {
                name: "viscous",
                value: self.viscous.to_f64().unwrap_or(f64::NAN),
            });
        }
        if self.pole_pairs == 0 {
            return Err(ParamError::NoPolePairs);
        }
        if self.l_q <= self.l_d {
            return Err(ParamError::NoSaliency {
                l_d: self.l_d.to_f64().unwrap_or(f64::NAN),
                l_q: self.l_q.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    pub fn p_n(&self) -> T {
        T::from_u32(self.pole_pairs).expect("pole pair count fits scalar")
    }

    /// Saliency `L_q − L_d` (H).
    pub fn l_qd(&self) -> T {
        self.l_q - self.l_d
    }

    /// Linear-modulation voltage ceiling `U_dc/√3` of an ideal inverter.
    pub fn voltage_limit(&self) -> T {
        self.u_dc / lit::<T>(3.0).sqrt()
    }

    /// Rated speed converted to mechanical rad/s.
    pub fn rated_speed_mech(&self) -> T {
        rpm_to_rad_s(self.n_rated)
    }

    /// Largest integration step the explicit scheme accepts.
    pub fn max_step(&self) -> T {
        lit::<T>(2.0) * self.l_d / self.r_s
    }
}

pub fn rpm_to_rad_s<T: Scalar>(rpm: T) -> T {
    rpm * T::PI() / lit(30.0)
}

pub fn rad_s_to_rpm<T: Scalar>(w: T) -> T {
    w * lit(30.0) / T::PI()
}

/// Plant state: dq currents, mechanical speed and simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotorState<T> {
    pub i_d: T,
    pub i_q: T,
    pub omega_m: T,
    pub t: T,
}

impl<T: Scalar> MotorState<T> {
    pub fn at_rest() -> Self {
        Self {
            i_d: T::zero(),
            i_q: T::zero(),
            omega_m: T::zero(),
            t: T::zero(),
        }
    }

    pub fn currents(&self) -> Vec2<T> {
        Vec2::new(self.i_d, self.i_q)
    }

    pub fn i_s(&self) -> T {
        self.currents().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.i_d.is_finite() && self.i_q.is_finite() && self.omega_m.is_finite() && self.t.is_finite()
    }
}

/// Voltages applied to the stator and the load torque on the shaft.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantInput<T> {
    pub u_d: T,
    pub u_q: T,
    pub t_load: T,
}

impl<T: Scalar> PlantInput<T> {
    pub fn voltages(&self) -> Vec2<T> {
        Vec2::new(self.u_d, self.u_q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivatives<T> {
    pub di_d: T,
    pub di_q: T,
    pub domega_m: T,
}

pub fn electromagnetic_torque<T: Scalar>(i_d: T, i_q: T, params: &MotorParams<T>) -> T {
    lit::<T>(1.5) * params.p_n() * (params.psi_f * i_q + (params.l_d - params.l_q) * i_d * i_q)
}

pub fn copper_loss<T: Scalar>(i_d: T, i_q: T, r_s: T) -> T {
    lit::<T>(3.0) * r_s * (i_d * i_d + i_q * i_q)
}

pub fn plant_derivatives<T: Scalar>(
    state: &MotorState<T>,
    input: &PlantInput<T>,
    params: &MotorParams<T>,
) -> Derivatives<T> {
    let omega_r = params.p_n() * state.omega_m;
    let di_d = (input.u_d - params.r_s * state.i_d + omega_r * params.l_q * state.i_q) / params.l_d;
    let di_q = (input.u_q
        - params.r_s * state.i_q
        - omega_r * (params.l_d * state.i_d + params.psi_f))
        / params.l_q;
    let t_e = electromagnetic_torque(state.i_d, state.i_q, params);
    let domega_m = (t_e - params.viscous * state.omega_m - input.t_load) / params.inertia;
    Derivatives { di_d, di_q, domega_m }
}

/// Scales the voltage vector down to `limit` if it is longer, keeping its angle.
pub fn limit_voltage<T: Scalar>(u: Vec2<T>, limit: T) -> Vec2<T> {
    let mag = u.norm();
    if mag > limit && mag > T::zero() {
        u.scale(limit / mag)
    } else {
        u
    }
}

/// Voltages that hold `(i_d, i_q)` constant at electrical speed `omega_r`.
pub fn steady_state_voltages<T: Scalar>(
    i_d: T,
    i_q: T,
    omega_r: T,
    params: &MotorParams<T>,
) -> Vec2<T> {
    Vec2::new(
        params.r_s * i_d - omega_r * params.l_q * i_q,
        params.r_s * i_q + omega_r * (params.l_d * i_d + params.psi_f),
    )
}

fn advance<T: Scalar>(s: &MotorState<T>, d: &Derivatives<T>, h: T) -> MotorState<T> {
    MotorState {
        i_d: s.i_d + d.di_d * h,
        i_q: s.i_q + d.di_q * h,
        omega_m: s.omega_m + d.domega_m * h,
        t: s.t + h,
    }
}

/// One RK4 step of size `dt` with the input held constant. The voltage vector
/// is first limited to `U_dc/√3`.
pub fn step_plant<T: Scalar>(
    state: &MotorState<T>,
    input: &PlantInput<T>,
    params: &MotorParams<T>,
    dt: T,
) -> Result<MotorState<T>, PlantError> {
    step_plant_bounded(state, input, params, dt, &DivergenceBounds::for_params(params))
}

/// Magnitudes beyond which the simulation is considered to have diverged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceBounds<T> {
    pub current: T,
    pub speed: T,
}

impl<T: Scalar> DivergenceBounds<T> {
    /// 10·I_smax on either current, 10× rated speed.
    pub fn for_params(params: &MotorParams<T>) -> Self {
        Self {
            current: lit::<T>(10.0) * params.i_smax,
            speed: lit::<T>(10.0) * params.rated_speed_mech(),
        }
    }
}

pub fn step_plant_bounded<T: Scalar>(
    state: &MotorState<T>,
    input: &PlantInput<T>,
    params: &MotorParams<T>,
    dt: T,
    bounds: &DivergenceBounds<T>,
) -> Result<MotorState<T>, PlantError> {
    let max = params.max_step();
    if !(dt > T::zero()) || dt > max {
        return Err(PlantError::InvalidStep {
            dt: dt.to_f64().unwrap_or(f64::NAN),
            max: max.to_f64().unwrap_or(f64::NAN),
        });
    }
    let u = limit_voltage(input.voltages(), params.voltage_limit());
    let input = PlantInput { u_d: u.x, u_q: u.y, t_load: input.t_load };

    let half = dt * lit(0.5);
    let k1 = plant_derivatives(state, &input, params);
    let k2 = plant_derivatives(&advance(state, &k1, half), &input, params);
    let k3 = plant_derivatives(&advance(state, &k2, half), &input, params);
    let k4 = plant_derivatives(&advance(state, &k3, dt), &input, params);

    let sixth = dt / lit(6.0);
    let two = lit::<T>(2.0);
    let next = MotorState {
        i_d: state.i_d + sixth * (k1.di_d + two * k2.di_d + two * k3.di_d + k4.di_d),
        i_q: state.i_q + sixth * (k1.di_q + two * k2.di_q + two * k3.di_q + k4.di_q),
        omega_m: state.omega_m
            + sixth * (k1.domega_m + two * k2.domega_m + two * k3.domega_m + k4.domega_m),
        t: state.t + dt,
    };

    if !next.is_finite()
        || next.i_d.abs() > bounds.current
        || next.i_q.abs() > bounds.current
        || next.omega_m.abs() > bounds.speed
    {
        return Err(PlantError::Diverged {
            t: next.t.to_f64().unwrap_or(f64::NAN),
            i_d: next.i_d.to_f64().unwrap_or(f64::NAN),
            i_q: next.i_q.to_f64().unwrap_or(f64::NAN),
            omega_m: next.omega_m.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(next)
}

/// Single-owner plant instance stepped at a fixed rate.
#[derive(Debug, Clone)]
pub struct Plant<T> {
    pub params: MotorParams<T>,
    pub state: MotorState<T>,
    pub dt: T,
    pub bounds: DivergenceBounds<T>,
}

impl<T: Scalar> Plant<T> {
    pub fn new(params: MotorParams<T>, dt: T) -> Result<Self, ParamError> {
        params.validate()?;
        Ok(Self {
            bounds: DivergenceBounds::for_params(&params),
            params,
            state: MotorState::at_rest(),
            dt,
        })
    }

    pub fn step(&mut self, input: &PlantInput<T>) -> Result<&MotorState<T>, PlantError> {
        self.state = step_plant_bounded(&self.state, input, &self.params, self.dt, &self.bounds)?;
        Ok(&self.state)
    }

    pub fn torque(&self) -> T {
        electromagnetic_torque(self.state.i_d, self.state.i_q, &self.params)
    }
}

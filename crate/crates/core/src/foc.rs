//! Conventional cascade: speed PI producing the current magnitude reference
//! and dq current PIs with cross-coupling feedforward.

use serde::{Deserialize, Serialize};

use crate::linalg::Vec2;
use crate::plant::{limit_voltage, MotorParams};
use crate::scalar::{clamp, lit, Scalar};

/// PI regulator with clamped output and conditional integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiState<T> {
    pub kp: T,
    /// Integral gain (output units per unit error per second).
    pub ki: T,
    pub integ: T,
    pub out_min: T,
    pub out_max: T,
}

impl<T: Scalar> PiState<T> {
    pub fn new(kp: T, ki: T, out_min: T, out_max: T) -> Self {
        assert!(out_min < out_max, "PI output bounds must satisfy out_min < out_max");
        Self { kp, ki, integ: T::zero(), out_min, out_max }
    }

    pub fn update(&mut self, error: T, dt: T) -> T {
        let p = self.kp * error;
        let candidate = clamp(self.integ + self.ki * error * dt, self.out_min, self.out_max);
        let raw = p + candidate;
        // Integrate only if that does not push further into saturation.
        let winding_up = (raw > self.out_max && error > T::zero()) || (raw < self.out_min && error < T::zero());
        if !winding_up {
            self.integ = candidate;
        }
        clamp(p + self.integ, self.out_min, self.out_max)
    }

    pub fn reset(&mut self) {
        self.integ = T::zero();
    }
}

/// Loop bandwidths used to derive the PI gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocConfig<T> {
    /// Current-loop bandwidth (Hz).
    pub current_bandwidth_hz: T,
    /// Speed-loop bandwidth (Hz).
    pub speed_bandwidth_hz: T,
    /// Speed PI zero as a fraction of the speed bandwidth (`ki = kp·ω_c·ratio`).
    pub speed_zero_ratio: T,
}

impl<T: Scalar> Default for FocConfig<T> {
    fn default() -> Self {
        Self {
            current_bandwidth_hz: lit(500.0),
            speed_bandwidth_hz: lit(20.0),
            speed_zero_ratio: lit(0.25),
        }
    }
}

impl<T: Scalar> FocConfig<T> {
    /// `kp = L ω_c`, `ki = R_s ω_c`: the PI zero cancels the winding's RL pole.
    pub fn current_pis(&self, params: &MotorParams<T>) -> (PiState<T>, PiState<T>) {
        let wc = lit::<T>(2.0) * T::PI() * self.current_bandwidth_hz;
        let lim = params.voltage_limit();
        (
            PiState::new(params.l_d * wc, params.r_s * wc, -lim, lim),
            PiState::new(params.l_q * wc, params.r_s * wc, -lim, lim),
        )
    }

    /// `kp = J ω_c / K_t` with the i_d = 0 torque constant `K_t = 1.5 p_n ψ_f`.
    pub fn speed_pi(&self, params: &MotorParams<T>) -> PiState<T> {
        let wc = lit::<T>(2.0) * T::PI() * self.speed_bandwidth_hz;
        let k_t = lit::<T>(1.5) * params.p_n() * params.psi_f;
        let kp = params.inertia * wc / k_t;
        PiState::new(kp, kp * wc * self.speed_zero_ratio, T::zero(), params.i_smax)
    }
}

/// Speed regulator: returns `i_s*` clamped to `[0, I_smax]`.
pub fn speed_pi<T: Scalar>(omega_ref: T, omega_m: T, st: &mut PiState<T>, t_s: T) -> T {
    st.update(omega_ref - omega_m, t_s)
}

/// Decoupled dq current regulators. Cross-coupling feedforward uses the
/// nominal parameters; the result is limited to `U_dc/√3`.
pub fn current_pi_decoupled<T: Scalar>(
    refs: Vec2<T>,
    meas: Vec2<T>,
    omega_r: T,
    params: &MotorParams<T>,
    st_d: &mut PiState<T>,
    st_q: &mut PiState<T>,
    t_s: T,
) -> Vec2<T> {
    let saved = (st_d.integ, st_q.integ);
    let v_d = st_d.update(refs.x - meas.x, t_s);
    let v_q = st_q.update(refs.y - meas.y, t_s);
    let u = Vec2::new(
        v_d - omega_r * params.l_q * meas.y,
        v_q + omega_r * (params.l_d * meas.x + params.psi_f),
    );
    let limit = params.voltage_limit();
    if u.norm() > limit {
        // Vector saturation: hold the integrators.
        st_d.integ = saved.0;
        st_q.integ = saved.1;
    }
    limit_voltage(u, limit)
}

/// Speed loop and both current loops bundled for the i_d = 0 and ES modes.
#[derive(Debug, Clone)]
pub struct Cascade<T> {
    pub speed: PiState<T>,
    pub current_d: PiState<T>,
    pub current_q: PiState<T>,
}

impl<T: Scalar> Cascade<T> {
    pub fn new(config: &FocConfig<T>, params: &MotorParams<T>) -> Self {
        let (current_d, current_q) = config.current_pis(params);
        Self { speed: config.speed_pi(params), current_d, current_q }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{step_plant, MotorState, PlantInput};

    #[test]
    fn zero_error_zero_output() {
        let mut st = PiState::new(2.0, 50.0, 0.0, 120.0);
        assert_eq!(speed_pi(100.0, 100.0, &mut st, 1e-4), 0.0);
    }

    #[test]
    fn saturates_without_windup() {
        let mut st = PiState::new(2.0, 50.0, 0.0, 120.0);
        for _ in 0..100_000 {
            assert!(speed_pi(1000.0, 0.0, &mut st, 1e-4) <= 120.0);
        }
        assert_eq!(speed_pi(1000.0, 0.0, &mut st, 1e-4), 120.0);
        assert!(st.integ <= 120.0);
        // Recovers as soon as the error reverses.
        let out = speed_pi(0.0, 1.0, &mut st, 1e-4);
        assert!(out < 120.0);
    }

    #[test]
    fn integrator_never_exceeds_bounds() {
        let mut st = PiState::new(0.1, 1e4, -5.0, 5.0);
        for k in 0..10_000 {
            let e = ((k as f64) * 0.37).sin() * 100.0;
            let out = st.update(e, 1e-3);
            assert!((-5.0..=5.0).contains(&out));
            assert!((-5.0..=5.0).contains(&st.integ));
        }
    }

    #[test]
    fn pure_feedforward_when_tracking() {
        let p = MotorParams::<f64>::reference_machine();
        let (mut d, mut q) = FocConfig::default().current_pis(&p);
        let meas = Vec2::new(-10.0, 30.0);
        let u = current_pi_decoupled(meas, meas, 900.0, &p, &mut d, &mut q, 1e-4);
        assert!((u.x - (-900.0 * p.l_q * 30.0)).abs() < 1e-9);
        assert!((u.y - 900.0 * (p.l_d * -10.0 + p.psi_f)).abs() < 1e-9);
    }

    #[test]
    fn standstill_zero_refs_zero_output() {
        let p = MotorParams::<f64>::reference_machine();
        let (mut d, mut q) = FocConfig::default().current_pis(&p);
        let u = current_pi_decoupled(Vec2::zero(), Vec2::zero(), 0.0, &p, &mut d, &mut q, 1e-4);
        assert_eq!(u, Vec2::zero());
    }

    #[test]
    fn q_step_settles_with_zero_error() {
        let p = MotorParams::<f64>::reference_machine();
        let (mut d, mut q) = FocConfig::default().current_pis(&p);
        let mut s = MotorState::at_rest();
        let refs = Vec2::new(-5.0, 20.0);
        // Locked rotor: inertia large enough that the speed barely moves.
        let p_locked = MotorParams { inertia: 1e6, ..p };
        for _ in 0..500 {
            let u = current_pi_decoupled(refs, s.currents(), 0.0, &p_locked, &mut d, &mut q, 1e-4);
            let input = PlantInput { u_d: u.x, u_q: u.y, t_load: 0.0 };
            for _ in 0..100 {
                s = step_plant(&s, &input, &p_locked, 1e-6).unwrap();
            }
        }
        assert!((s.currents() - refs).norm() < 1e-3, "{:?}", s.currents());
    }

    #[test]
    fn output_is_vector_limited() {
        let p = MotorParams::<f64>::reference_machine();
        let (mut d, mut q) = FocConfig::default().current_pis(&p);
        let u = current_pi_decoupled(Vec2::new(-100.0, 100.0), Vec2::zero(), 942.0, &p, &mut d, &mut q, 1e-4);
        assert!(u.norm() <= p.voltage_limit() + 1e-9);
        assert_eq!((d.integ, q.integ), (0.0, 0.0));
    }
}

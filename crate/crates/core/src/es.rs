//! Extremum-seeking MTPA baseline.
//!
//! A square wave of amplitude `a_inj` rides on the current vector angle. The
//! torque difference between successive samples, multiplied by the sign of
//! the injection that produced the newer sample, estimates `∂T/∂β`; an
//! integrator drives that estimate to zero. No band-pass or low-pass filters
//! are used.
//!
//! The decoupled current loop does not track an angle step exactly: within one
//! control period the cross-coupling leaks part of the step into the current
//! magnitude, roughly in proportion to speed. Raw torque then sees a radial
//! perturbation and the loop settles off the MTPA angle. Demodulating torque
//! per measured ampere ([`EsObjective::TorquePerAmpere`]) cancels that leak to
//! first order and has the same maximizing angle at a given current magnitude.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Vec2;
use crate::scalar::{clamp, lit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EsError {
    #[error("injection half-period is {ticks} control ticks; it must be a whole number >= 1")]
    HalfPeriod { ticks: f64 },
    #[error("invalid extremum-seeking configuration: {0}")]
    Config(&'static str),
}

/// Signal whose angle gradient is driven to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsObjective {
    /// Raw torque sample.
    Torque,
    /// Torque divided by the measured current magnitude, rescaled by the
    /// current tick's magnitude reference so it stays in N·m.
    TorquePerAmpere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig<T> {
    /// Injection frequency (Hz).
    pub f_inj: T,
    /// Injection amplitude (rad). Zero disables injection and adaptation.
    pub a_inj: T,
    /// Integrator gain (rad/(N·m·s)).
    pub k_int: T,
    /// Demodulate the normalized torque `T_e/(1.5·p_n)` instead of `T_e`.
    /// In N·m the default gain gives a per-tick loop gain above one at a
    /// 0.1 ms control period and the angle never settles.
    pub normalized_torque: bool,
    pub objective: EsObjective,
}

impl<T: Scalar> Default for EsConfig<T> {
    fn default() -> Self {
        Self {
            f_inj: lit(5000.0),
            a_inj: lit(0.01),
            k_int: lit(200.0),
            normalized_torque: true,
            objective: EsObjective::TorquePerAmpere,
        }
    }
}

impl<T: Scalar> EsConfig<T> {
    /// Control ticks per half period of the square wave.
    pub fn ticks_per_half_period(&self, t_s: T) -> Result<u64, EsError> {
        let ticks = (lit::<T>(2.0) * self.f_inj * t_s).recip();
        let rounded = ticks.round();
        let ticks_f = ticks.to_f64().unwrap_or(f64::NAN);
        if !ticks.is_finite() || rounded < T::one() || (ticks - rounded).abs() > lit::<T>(1e-6) * rounded {
            return Err(EsError::HalfPeriod { ticks: ticks_f });
        }
        Ok(rounded.to_u64().unwrap())
    }

    pub fn validate(&self, t_s: T) -> Result<(), EsError> {
        if !(self.a_inj >= T::zero()) {
            return Err(EsError::Config("a_inj must be non-negative"));
        }
        if !(self.k_int > T::zero()) {
            return Err(EsError::Config("k_int must be positive"));
        }
        self.ticks_per_half_period(t_s).map(|_| ())
    }
}

/// Square-wave injection `±a_inj` at control tick `tick`.
pub fn injection_signal<T: Scalar>(tick: u64, cfg: &EsConfig<T>, t_s: T) -> Result<T, EsError> {
    let half = cfg.ticks_per_half_period(t_s)?;
    if cfg.a_inj == T::zero() {
        return Ok(T::zero());
    }
    Ok(if (tick / half).is_multiple_of(2) { cfg.a_inj } else { -cfg.a_inj })
}

/// Gradient estimate from two successive objective samples, integrated into β.
///
/// `inj_sign` is the sign of the injection in effect while the newer sample
/// `t_meas` was produced. Returns `(β, gradient estimate)`; β is clamped to
/// `[0, π/2)`.
pub fn es_demodulate_and_integrate<T: Scalar>(
    t_meas: T,
    prev_t_meas: T,
    inj_sign: T,
    beta: T,
    cfg: &EsConfig<T>,
    t_s: T,
) -> (T, T) {
    if cfg.a_inj == T::zero() {
        return (beta, T::zero());
    }
    let grad = inj_sign * (t_meas - prev_t_meas) / (lit::<T>(2.0) * cfg.a_inj);
    let upper = T::FRAC_PI_2() - lit(1e-9);
    (clamp(beta + cfg.k_int * grad * t_s, T::zero(), upper), grad)
}

/// dq references for angle `beta` plus the injected offset.
pub fn es_references<T: Scalar>(beta: T, delta_beta: T, i_s_ref: T) -> Vec2<T> {
    let angle = beta + delta_beta;
    Vec2::new(-i_s_ref * angle.sin(), i_s_ref * angle.cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsOutput<T> {
    pub refs: Vec2<T>,
    pub beta: T,
    pub grad: T,
    pub inj: T,
}

/// Stateful ES loop, one [`EsController::tick`] per control period.
#[derive(Debug, Clone)]
pub struct EsController<T> {
    pub config: EsConfig<T>,
    t_s: T,
    /// Factor applied to torque samples (1 or 1/(1.5·p_n)).
    torque_scale: T,
    beta: T,
    /// Previous (objective sample, injection); per-ampere objectives are
    /// stored unscaled.
    prev: Option<(T, T)>,
}

impl<T: Scalar> EsController<T> {
    pub fn new(config: EsConfig<T>, t_s: T, p_n: T) -> Result<Self, EsError> {
        config.validate(t_s)?;
        let torque_scale = if config.normalized_torque { (lit::<T>(1.5) * p_n).recip() } else { T::one() };
        Ok(Self { config, t_s, torque_scale, beta: T::zero(), prev: None })
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn set_beta(&mut self, beta: T) {
        self.beta = beta;
    }

    /// Forget the previous torque sample; the next tick only records one.
    pub fn clear_history(&mut self) {
        self.prev = None;
    }

    /// `torque` and `i_s_meas` are sampled at the start of tick `tick`.
    pub fn tick(&mut self, tick: u64, torque: T, i_s_meas: T, i_s_ref: T) -> Result<EsOutput<T>, EsError> {
        let torque = torque * self.torque_scale;
        let (sample, scale) = match self.config.objective {
            EsObjective::Torque => (torque, T::one()),
            // Below the floor the ratio is noise; hold the previous sample.
            EsObjective::TorquePerAmpere if i_s_meas > lit(1e-3) => (torque / i_s_meas, i_s_ref),
            EsObjective::TorquePerAmpere => {
                (self.prev.map_or(T::zero(), |p| p.0), T::zero())
            }
        };
        let mut grad = T::zero();
        if let Some((prev_sample, prev_inj)) = self.prev {
            let sign = if prev_inj > T::zero() {
                T::one()
            } else if prev_inj < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            let (beta, g) =
                es_demodulate_and_integrate(sample * scale, prev_sample * scale, sign, self.beta, &self.config, self.t_s);
            self.beta = beta;
            grad = g;
        }
        let inj = injection_signal(tick, &self.config, self.t_s)?;
        self.prev = Some((sample, inj));
        Ok(EsOutput {
            refs: es_references(self.beta, inj, i_s_ref),
            beta: self.beta,
            grad,
            inj,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtpa::{mtpa_point, torque_at_angle};

    const T_S: f64 = 1e-4;

    #[test]
    fn five_khz_alternates_every_tick() {
        let cfg = EsConfig::<f64>::default();
        let seq: Vec<f64> = (0..6).map(|k| injection_signal(k, &cfg, T_S).unwrap()).collect();
        assert_eq!(seq, vec![0.01, -0.01, 0.01, -0.01, 0.01, -0.01]);
        let again: Vec<f64> = (0..6).map(|k| injection_signal(k, &cfg, T_S).unwrap()).collect();
        assert_eq!(seq, again);
    }

    #[test]
    fn slower_injection_holds_for_half_period() {
        let cfg = EsConfig { f_inj: 1250.0, ..EsConfig::default() };
        let seq: Vec<f64> = (0..8).map(|k| injection_signal(k, &cfg, T_S).unwrap().signum()).collect();
        assert_eq!(seq, vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
    }

    #[test]
    fn disabled_injection_is_zero() {
        let cfg = EsConfig { a_inj: 0.0, ..EsConfig::default() };
        assert!((0..10).all(|k| injection_signal(k, &cfg, T_S).unwrap() == 0.0));
    }

    #[test]
    fn rejects_unrepresentable_frequency() {
        let cfg = EsConfig { f_inj: 3000.0, ..EsConfig::default() };
        assert!(matches!(injection_signal(0, &cfg, T_S), Err(EsError::HalfPeriod { .. })));
        let cfg = EsConfig { f_inj: 10_000.0, ..EsConfig::default() };
        assert!(cfg.validate(T_S).is_err());
    }

    #[test]
    fn flat_torque_leaves_beta() {
        let cfg = EsConfig::default();
        let (beta, g) = es_demodulate_and_integrate(20.0, 20.0, 1.0, 0.3, &cfg, T_S);
        assert_eq!((beta, g), (0.3, 0.0));
    }

    #[test]
    fn rising_torque_below_optimum_increases_beta() {
        let cfg = EsConfig::default();
        let (psi, lqd, i_s) = (0.12, 1.2e-3, 58.9);
        let beta0 = 0.1;
        assert!(beta0 < mtpa_point(i_s, psi, lqd).unwrap().beta);
        let t_plus = torque_at_angle(i_s, beta0 + 0.01, psi, lqd, 3.0);
        let t_minus = torque_at_angle(i_s, beta0 - 0.01, psi, lqd, 3.0);
        let (beta, g) = es_demodulate_and_integrate(t_plus, t_minus, 1.0, beta0, &cfg, T_S);
        assert!(g > 0.0 && beta > beta0);
    }

    #[test]
    fn beta_is_clamped() {
        let cfg = EsConfig::default();
        let (beta, _) = es_demodulate_and_integrate(0.0, 100.0, 1.0, 0.0, &cfg, T_S);
        assert_eq!(beta, 0.0);
        let (beta, _) = es_demodulate_and_integrate(1e6, 0.0, 1.0, 1.5, &cfg, T_S);
        assert!(beta < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn reference_examples() {
        assert_eq!(es_references(0.0, 0.0, 50.0), Vec2::new(0.0, 50.0));
        assert_eq!(es_references(0.3, 0.01, 0.0), Vec2::new(0.0, 0.0));
        let pt = mtpa_point(58.9, 0.12, 1.2e-3).unwrap();
        let r = es_references(pt.beta, 0.0, 58.9);
        assert!((r - pt.dq()).norm() < 1e-12);
    }

    #[test]
    fn static_map_loop_converges_near_optimum() {
        // Torque responds instantly to the angle; the linearized per-tick loop
        // gain is k_int·T_s·|∂²T/∂β²|/(1.5·p_n), about 0.25 here.
        let (psi, lqd, i_s) = (0.12, 1.2e-3, 58.9);
        let want = mtpa_point(i_s, psi, lqd).unwrap().beta;
        let mut es = EsController::new(EsConfig::<f64>::default(), T_S, 3.0).unwrap();
        es.set_beta(want - 0.05);
        let angle_torque = |b: f64| torque_at_angle(i_s, b, psi, lqd, 3.0);
        let mut torque = angle_torque(es.beta());
        let mut tail = Vec::new();
        for k in 0..2000 {
            let out = es.tick(k, torque, i_s, i_s).unwrap();
            torque = angle_torque(crate::mtpa::current_angle(out.refs.x, out.refs.y));
            if k >= 1900 {
                tail.push(out.beta);
            }
        }
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((mean - want).abs() < 0.5f64.to_radians(), "{mean} vs {want}");
    }

    /// Closed loop on a static map whose realized current magnitude leaks
    /// `kappa` per radian of injected angle, as the decoupled current loop does.
    fn settle_with_leak(objective: EsObjective, kappa: f64) -> (f64, f64) {
        let (psi, lqd, i_s) = (0.12, 1.2e-3, 32.4);
        let want = mtpa_point(i_s, psi, lqd).unwrap().beta;
        let cfg = EsConfig { objective, ..EsConfig::default() };
        let mut es = EsController::new(cfg, T_S, 3.0).unwrap();
        es.set_beta(want);
        let (mut torque, mut mag) = (torque_at_angle(i_s, want, psi, lqd, 3.0), i_s);
        let mut sum = 0.0;
        for k in 0..6000 {
            let out = es.tick(k, torque, mag, i_s).unwrap();
            mag = i_s * (1.0 + kappa * out.inj);
            torque = torque_at_angle(mag, out.beta + out.inj, psi, lqd, 3.0);
            if k >= 5000 {
                sum += out.beta;
            }
        }
        (sum / 1000.0, want)
    }

    #[test]
    fn per_ampere_objective_rejects_magnitude_leak() {
        let (raw, want) = settle_with_leak(EsObjective::Torque, 0.04);
        assert!((raw - want).abs() > 0.02, "{raw} vs {want}");
        let (per_amp, want) = settle_with_leak(EsObjective::TorquePerAmpere, 0.04);
        assert!((per_amp - want).abs() < 0.005, "{per_amp} vs {want}");
        let (clean, want) = settle_with_leak(EsObjective::Torque, 0.0);
        assert!((clean - want).abs() < 1e-3, "{clean} vs {want}");
    }

    #[test]
    fn torque_normalization_scales_the_step() {
        let step = |normalized_torque| {
            let cfg = EsConfig { normalized_torque, objective: EsObjective::Torque, ..EsConfig::default() };
            let mut es = EsController::new(cfg, T_S, 3.0).unwrap();
            es.set_beta(0.3);
            es.tick(0, 10.0, 1.0, 1.0).unwrap();
            es.tick(1, 10.2, 1.0, 1.0).unwrap().beta - 0.3
        };
        // Injection +a at tick 0, torque rose by 0.2 N·m: g = 0.2/(2·0.01) = 10.
        assert!((step(false) - 200.0 * 10.0 * T_S).abs() < 1e-12);
        assert!((step(true) - 200.0 * 10.0 / 4.5 * T_S).abs() < 1e-12);
    }

    #[test]
    fn zero_current_holds_beta() {
        let mut es = EsController::new(EsConfig::<f64>::default(), T_S, 3.0).unwrap();
        es.set_beta(0.2);
        for k in 0..10 {
            let out = es.tick(k, 0.0, 0.0, 0.0).unwrap();
            assert_eq!(out.beta, 0.2);
        }
    }
}

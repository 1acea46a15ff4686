//! Dual control for exploration and exploitation (DCEE) of the MTPA point.
//!
//! The controller minimizes
//!
//! ```text
//! D = ‖x − r̄‖² + (1/N) Σ_j ‖r̄ − r̂_j‖²
//! ```
//!
//! where `r̂_j` is the MTPA reference implied by estimator `j` and `r̄` their
//! mean. The first term drives the currents to the believed optimum, the
//! second rewards moves whose measurements would make the estimators agree.
//! The gradient is taken by probing one step ahead: for each axis the bank is
//! updated hypothetically with the mean predicted torque at the probed state
//! and the resulting cost is compared with the current one. The state update
//! `x⁺ = x − k_x ∇D` is then inverted through the Euler-discretized current
//! dynamics to get the dq voltages.
//!
//! Near rated speed the back-EMF leaves little voltage headroom. Clipping the
//! whole vector to the inverter limit would also cut the part that holds the
//! present currents, collapsing `i_q` for a step taken along `d`. With
//! `limit_step` the gradient step is shortened instead, so the state moves
//! toward the target as fast as the headroom allows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{regressor, EstimatorBank};
use crate::linalg::{Mat2, Vec2};
use crate::plant::MotorParams;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DceeError {
    #[error("DCEE voltage command saturated for {ticks} consecutive ticks")]
    Saturated { ticks: usize },
    #[error("invalid DCEE configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DceeConfig<T> {
    /// Adaptive gain on the cost gradient.
    pub k_x: T,
    /// Probe increment per axis (A).
    pub delta_x: T,
    /// Control period (s).
    pub t_s: T,
    /// Consecutive saturated ticks tolerated before the run is declared divergent.
    pub max_saturated_ticks: usize,
    /// Shorten the gradient step to fit the voltage limit rather than leaving
    /// the whole command to the inverter's vector clamp.
    pub limit_step: bool,
    /// Samples with `|i_q|` below this (A) carry almost no information about
    /// θ and are not fed to the bank, so its covariance does not inflate
    /// while the machine idles.
    pub identify_min_i_q: T,
}

impl<T: Scalar> Default for DceeConfig<T> {
    fn default() -> Self {
        Self {
            k_x: lit(0.2),
            delta_x: lit(0.1),
            t_s: lit(1e-4),
            max_saturated_ticks: 200,
            limit_step: true,
            identify_min_i_q: lit(1.0),
        }
    }
}

impl<T: Scalar> DceeConfig<T> {
    pub fn validate(&self) -> Result<(), DceeError> {
        if !(self.k_x > T::zero()) {
            return Err(DceeError::Config("k_x must be positive"));
        }
        if !(self.delta_x > T::zero()) {
            return Err(DceeError::Config("delta_x must be positive"));
        }
        if !(self.t_s > T::zero()) {
            return Err(DceeError::Config("t_s must be positive"));
        }
        if !(self.identify_min_i_q >= T::zero()) {
            return Err(DceeError::Config("identify_min_i_q must be non-negative"));
        }
        Ok(())
    }
}

/// `x(k+1) = (I + A) x(k) + B u(k)` with `u = [u_d, u_q − ω_r ψ_f]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteModel<T> {
    pub a: Mat2<T>,
    pub b: Mat2<T>,
}

impl<T: Scalar> DiscreteModel<T> {
    pub fn new(r_s: T, l_d: T, l_q: T, omega_r: T, t_s: T) -> Self {
        let a = Mat2::new(
            -r_s / l_d,
            omega_r * l_q / l_d,
            -omega_r * l_d / l_q,
            -r_s / l_q,
        )
        .scale(t_s);
        let b = Mat2::diag(t_s / l_d, t_s / l_q);
        Self { a, b }
    }

    pub fn from_params(params: &MotorParams<T>, omega_r: T, t_s: T) -> Self {
        Self::new(params.r_s, params.l_d, params.l_q, omega_r, t_s)
    }

    pub fn step(&self, x: Vec2<T>, u: Vec2<T>) -> Vec2<T> {
        x + self.a.mul_vec(x) + self.b.mul_vec(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostTerms<T> {
    pub exploitation: T,
    pub exploration: T,
    pub r_bar: Vec2<T>,
}

impl<T: Scalar> CostTerms<T> {
    pub fn total(&self) -> T {
        self.exploitation + self.exploration
    }
}

pub fn dual_cost_terms<T: Scalar>(x: Vec2<T>, bank: &EstimatorBank<T>, i_s_ref: T) -> CostTerms<T> {
    let refs = bank.references(i_s_ref);
    CostTerms {
        exploitation: (x - refs.mean).norm_sq(),
        exploration: refs.spread(),
        r_bar: refs.mean,
    }
}

pub fn dual_cost<T: Scalar>(x: Vec2<T>, bank: &EstimatorBank<T>, i_s_ref: T) -> T {
    dual_cost_terms(x, bank, i_s_ref).total()
}

/// Mean normalized torque `T_e1` the bank predicts at `x_probe`.
pub fn predict_torque<T: Scalar>(x_probe: Vec2<T>, bank: &EstimatorBank<T>) -> T {
    bank.mean_prediction(regressor(x_probe.x, x_probe.y))
}

/// Cost after moving to `x + delta` and updating a copy of the bank with the
/// torque it predicts there. `bank` itself is not touched.
pub fn predicted_cost<T: Scalar>(
    x: Vec2<T>,
    delta: Vec2<T>,
    bank: &EstimatorBank<T>,
    i_s_ref: T,
) -> T {
    let probe = x + delta;
    let phi = regressor(probe.x, probe.y);
    let predicted = bank.mean_prediction(phi);
    let mut hypothetical = bank.clone();
    hypothetical.update(phi, predicted);
    dual_cost(probe, &hypothetical, i_s_ref)
}

/// Per-axis forward difference of the one-step-ahead cost against the
/// current cost.
pub fn cost_gradient<T: Scalar>(
    x: Vec2<T>,
    bank: &EstimatorBank<T>,
    i_s_ref: T,
    delta_x: T,
) -> Vec2<T> {
    let base = dual_cost(x, bank, i_s_ref);
    cost_gradient_from(x, bank, i_s_ref, delta_x, base)
}

fn cost_gradient_from<T: Scalar>(
    x: Vec2<T>,
    bank: &EstimatorBank<T>,
    i_s_ref: T,
    delta_x: T,
    base: T,
) -> Vec2<T> {
    let probe = |axis: usize| {
        (predicted_cost(x, Vec2::unit(axis).scale(delta_x), bank, i_s_ref) - base) / delta_x
    };
    Vec2::new(probe(0), probe(1))
}

/// `u = −B⁻¹ (A x + k_x ∇D)`, then `u_q += ω_r ψ̂_f`.
pub fn control_output<T: Scalar>(
    x: Vec2<T>,
    grad: Vec2<T>,
    model: &DiscreteModel<T>,
    k_x: T,
    psi_f_hat: T,
    omega_r: T,
) -> Vec2<T> {
    let b_inv = model
        .b
        .inverse()
        .expect("input matrix of the current model is diagonal and positive");
    let equivalent = -b_inv.mul_vec(model.a.mul_vec(x) + grad.scale(k_x));
    Vec2::new(equivalent.x, equivalent.y + omega_r * psi_f_hat)
}

/// Largest `s ∈ [0, 1]` with `‖hold + s·step‖ ≤ limit`; zero when `hold`
/// alone exceeds the limit.
pub fn step_fraction<T: Scalar>(hold: Vec2<T>, step: Vec2<T>, limit: T) -> T {
    let c = hold.norm_sq() - limit * limit;
    if c > T::zero() {
        return T::zero();
    }
    let a = step.norm_sq();
    if a == T::zero() {
        return T::one();
    }
    let b = hold.dot(step);
    // Positive root of a·s² + 2b·s + c = 0; c ≤ 0 guarantees it exists.
    let s = (-b + (b * b - a * c).max(T::zero()).sqrt()) / a;
    s.min(T::one()).max(T::zero())
}

/// Per-tick diagnostics for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct DceeDiagnostics<T> {
    pub r_bar: Vec2<T>,
    pub exploitation: T,
    pub exploration: T,
    pub grad: Vec2<T>,
    pub thetas: Vec<Vec2<T>>,
    /// Smallest eigenvalue of each estimator's covariance.
    pub cov_min_eig: Vec<T>,
    pub fallbacks: usize,
    pub saturated: bool,
}

impl<T: Scalar> DceeDiagnostics<T> {
    pub fn cost(&self) -> T {
        self.exploitation + self.exploration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DceeOutput<T> {
    /// Commanded dq voltages before the inverter's vector clamp.
    pub voltages: Vec2<T>,
    pub diagnostics: DceeDiagnostics<T>,
}

/// Measurements the controller needs for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DceeInput<T> {
    pub currents: Vec2<T>,
    pub omega_r: T,
    /// Measured normalized torque `T_e1`.
    pub t_e1: T,
    pub i_s_ref: T,
    /// Whether `t_e1` is trustworthy enough to update the bank this tick.
    pub identify: bool,
}

/// Stateful controller: estimator bank plus the saturation watchdog.
#[derive(Debug, Clone)]
pub struct DceeController<T> {
    pub config: DceeConfig<T>,
    pub bank: EstimatorBank<T>,
    nominal: MotorParams<T>,
    saturated_ticks: usize,
}

impl<T: Scalar> DceeController<T> {
    /// `nominal` supplies R_s, L_d, L_q for the discrete current model.
    pub fn new(
        config: DceeConfig<T>,
        bank: EstimatorBank<T>,
        nominal: MotorParams<T>,
    ) -> Result<Self, DceeError> {
        config.validate()?;
        Ok(Self { config, bank, nominal, saturated_ticks: 0 })
    }

    /// Update the bank with a measurement without computing a control action.
    pub fn observe(&mut self, currents: Vec2<T>, t_e1: T) {
        self.bank.update(regressor(currents.x, currents.y), t_e1);
    }

    pub fn tick(&mut self, input: &DceeInput<T>) -> Result<DceeOutput<T>, DceeError> {
        let x = input.currents;
        if input.identify && x.y.abs() >= self.config.identify_min_i_q {
            self.observe(x, input.t_e1);
        }

        let refs = self.bank.references(input.i_s_ref);
        let exploitation = (x - refs.mean).norm_sq();
        let exploration = refs.spread();
        let grad = cost_gradient_from(
            x,
            &self.bank,
            input.i_s_ref,
            self.config.delta_x,
            exploitation + exploration,
        );

        let model = DiscreteModel::from_params(&self.nominal, input.omega_r, self.config.t_s);
        let psi_f_hat = self.bank.mean_theta().x;
        let raw = control_output(x, grad, &model, self.config.k_x, psi_f_hat, input.omega_r);
        let limit = self.nominal.voltage_limit();
        let saturated = raw.norm() > limit;
        let voltages = if saturated && self.config.limit_step {
            let hold = control_output(x, Vec2::zero(), &model, self.config.k_x, psi_f_hat, input.omega_r);
            hold + (raw - hold).scale(step_fraction(hold, raw - hold, limit))
        } else {
            raw
        };

        if saturated {
            self.saturated_ticks += 1;
            if self.saturated_ticks > self.config.max_saturated_ticks {
                return Err(DceeError::Saturated { ticks: self.saturated_ticks });
            }
        } else {
            self.saturated_ticks = 0;
        }

        Ok(DceeOutput {
            voltages,
            diagnostics: DceeDiagnostics {
                r_bar: refs.mean,
                exploitation,
                exploration,
                grad,
                thetas: self.bank.estimators.iter().map(|e| e.theta).collect(),
                cov_min_eig: self.bank.estimators.iter().map(|e| e.cov.sym_eigenvalues().0).collect(),
                fallbacks: refs.fallbacks,
                saturated,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{BankConfig, ParamEstimate};
    use crate::mtpa::mtpa_point;

    const TRUE_THETA: Vec2<f64> = Vec2::new(0.12, 1.2e-3);

    fn converged_bank(n: usize) -> EstimatorBank<f64> {
        let est = ParamEstimate::new(TRUE_THETA.x, TRUE_THETA.y, Mat2::diag(1.0, 1e-4));
        EstimatorBank::new(vec![est; n], 0.99).unwrap()
    }

    fn r_star(i_s: f64) -> Vec2<f64> {
        mtpa_point(i_s, TRUE_THETA.x, TRUE_THETA.y).unwrap().dq()
    }

    #[test]
    fn zero_cost_at_agreeing_optimum() {
        let bank = converged_bank(3);
        let r = r_star(40.0);
        assert_eq!(dual_cost(r, &bank, 40.0), 0.0);
    }

    #[test]
    fn pure_exploration_when_estimators_disagree() {
        let bank = BankConfig::<f64>::default().build().unwrap();
        let terms = dual_cost_terms(Vec2::zero(), &bank, 58.9);
        let at_mean = dual_cost_terms(terms.r_bar, &bank, 58.9);
        assert_eq!(at_mean.exploitation, 0.0);
        assert!(at_mean.exploration > 0.0);
    }

    #[test]
    fn prediction_examples() {
        let bank = converged_bank(4);
        let x = Vec2::new(-20.0, 50.0);
        let truth = regressor(x.x, x.y).dot(TRUE_THETA);
        assert!((predict_torque(x, &bank) - truth).abs() < 1e-12);
        assert_eq!(predict_torque(Vec2::zero(), &bank), 0.0);

        let cov = Mat2::diag(1.0, 1e-4);
        let a = ParamEstimate::new(0.1, 1e-3, cov);
        let b = ParamEstimate::new(0.2, 0.5e-3, cov);
        let pair = EstimatorBank::new(vec![a, b], 0.99).unwrap();
        let phi = regressor(x.x, x.y);
        let expected = (a.predict(phi) + b.predict(phi)) / 2.0;
        assert!((predict_torque(x, &pair) - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_probe_on_converged_bank_matches_current_cost() {
        let bank = converged_bank(5);
        let x = Vec2::new(-5.0, 42.0);
        let a = predicted_cost(x, Vec2::zero(), &bank, 50.0);
        let b = dual_cost(x, &bank, 50.0);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn predicted_cost_leaves_bank_untouched() {
        let bank = BankConfig::<f64>::default().build().unwrap();
        let before = bank.clone();
        let _ = predicted_cost(Vec2::new(-3.0, 20.0), Vec2::new(0.1, 0.0), &bank, 30.0);
        let _ = cost_gradient(Vec2::new(-3.0, 20.0), &bank, 30.0, 0.1);
        assert_eq!(bank, before);
    }

    #[test]
    fn predicted_cost_minimum_is_at_optimum() {
        let bank = converged_bank(3);
        let x = Vec2::new(-10.0, 50.0);
        let r = r_star(58.9);
        let mut best = (f64::INFINITY, Vec2::zero());
        for i in -150..=150 {
            for j in -150..=150 {
                let delta = Vec2::new(i as f64 * 0.1, j as f64 * 0.1);
                let c = predicted_cost(x, delta, &bank, 58.9);
                if c < best.0 {
                    best = (c, delta);
                }
            }
        }
        let want = r - x;
        assert!((best.1 - want).norm() < 0.08, "{:?} vs {:?}", best.1, want);
    }

    #[test]
    fn gradient_near_and_off_optimum() {
        let bank = converged_bank(3);
        let r = r_star(58.9);
        let g = cost_gradient(r, &bank, 58.9, 0.1);
        // Forward difference of ‖δ‖² leaves δ per axis.
        assert!(g.norm() < 0.2, "{g:?}");
        let g = cost_gradient(r + Vec2::new(1.0, 0.0), &bank, 58.9, 0.1);
        assert!(g.x > 0.0);
        assert!((g.x - 2.1).abs() < 1e-6);
    }

    #[test]
    fn control_output_examples() {
        let model = DiscreteModel::<f64>::new(0.05, 0.8e-3, 2.0e-3, 900.0, 1e-4);
        let u = control_output(Vec2::zero(), Vec2::zero(), &model, 0.2, 0.12, 900.0);
        assert!(u.x.abs() < 1e-12 && (u.y - 900.0 * 0.12).abs() < 1e-9);

        let x = Vec2::new(-12.0, 33.0);
        let u = control_output(x, Vec2::zero(), &model, 0.2, 0.12, 900.0);
        let equivalent = Vec2::new(u.x, u.y - 900.0 * 0.12);
        let next = model.step(x, equivalent);
        assert!((next - x).norm() < 1e-10);
    }

    #[test]
    fn control_output_realizes_gradient_step() {
        let model = DiscreteModel::<f64>::new(0.05, 0.8e-3, 2.0e-3, 300.0, 1e-4);
        let x = Vec2::new(-4.0, 25.0);
        let grad = Vec2::new(3.0, -2.0);
        let u = control_output(x, grad, &model, 0.2, 0.0, 300.0);
        let next = model.step(x, u);
        assert!((next - (x - grad.scale(0.2))).norm() < 1e-10);
    }

    #[test]
    fn tick_at_fixed_point_holds_state() {
        let params = MotorParams::<f64>::reference_machine();
        let cfg = DceeConfig::default();
        let mut ctl = DceeController::new(cfg.clone(), converged_bank(5), params).unwrap();
        let x = r_star(40.0);
        let omega_r = 900.0;
        let t_e1 = regressor(x.x, x.y).dot(TRUE_THETA);
        let out = ctl
            .tick(&DceeInput { currents: x, omega_r, t_e1, i_s_ref: 40.0, identify: true })
            .unwrap();
        let model = DiscreteModel::from_params(&params, omega_r, 1e-4);
        let next = model.step(x, Vec2::new(out.voltages.x, out.voltages.y - omega_r * 0.12));
        // At the optimum each forward difference reads δ²/δ = δ, so the only
        // motion is the probe bias −k_x·δ per axis.
        let bias = Vec2::new(1.0, 1.0).scale(-cfg.k_x * cfg.delta_x);
        assert!((next - x - bias).norm() < 1e-9, "{:?}", next - x);
        assert!(out.diagnostics.exploration.abs() < 1e-20);
    }

    #[test]
    fn watchdog_trips_after_sustained_saturation() {
        let params = MotorParams::<f64>::reference_machine();
        let cfg = DceeConfig { max_saturated_ticks: 3, ..DceeConfig::default() };
        let mut ctl = DceeController::new(cfg, converged_bank(2), params).unwrap();
        // Far from the reference: the gradient step asks for an enormous voltage.
        let input = DceeInput {
            currents: Vec2::new(0.0, 0.0),
            omega_r: 900.0,
            t_e1: 0.0,
            i_s_ref: 100.0,
            identify: true,
        };
        let mut result = Ok(());
        for _ in 0..5 {
            if let Err(e) = ctl.tick(&input) {
                result = Err(e);
                break;
            }
        }
        assert_eq!(result, Err(DceeError::Saturated { ticks: 4 }));
    }

    #[test]
    fn config_validation() {
        assert!(DceeConfig::<f64>::default().validate().is_ok());
        let bad = DceeConfig { k_x: 0.0, ..DceeConfig::<f64>::default() };
        assert!(bad.validate().is_err());
        let bad = DceeConfig { delta_x: -1.0, ..DceeConfig::<f64>::default() };
        assert!(bad.validate().is_err());
    }
}

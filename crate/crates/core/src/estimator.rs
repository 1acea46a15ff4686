//! Bank of forgetting-factor RLS estimators for `θ = [ψ_f, L_q − L_d]`.
//!
//! The torque is linear in θ once normalized by `3 p_n / 2`:
//! `T_e1 = 2 T_e / (3 p_n) = φᵀ θ` with `φ = [i_q, −i_d i_q]`. Each estimator
//! in the bank sees the same data stream but starts from a different θ̂, so
//! their disagreement measures how much is still unknown.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat2, Vec2};
use crate::mtpa::mtpa_point;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BankError {
    #[error("estimator bank needs at least one estimator")]
    Empty,
    #[error("forgetting factor must lie in (0, 1] (got {0})")]
    ForgettingFactor(f64),
    #[error("initial covariance must be positive definite")]
    Covariance,
}

/// Regressor `φ(i_d, i_q) = [i_q, −i_d·i_q]`.
pub fn regressor<T: Scalar>(i_d: T, i_q: T) -> Vec2<T> {
    Vec2::new(i_q, -i_d * i_q)
}

/// `T_e1 = 2 T_e / (3 p_n)`.
pub fn normalized_torque<T: Scalar>(t_e: T, p_n: T) -> T {
    lit::<T>(2.0) * t_e / (lit::<T>(3.0) * p_n)
}

/// One estimator: parameter estimate and its covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate<T> {
    /// `[ψ̂_f (Wb), L̂_qd (H)]`
    pub theta: Vec2<T>,
    pub cov: Mat2<T>,
}

impl<T: Scalar> ParamEstimate<T> {
    pub fn new(psi_f: T, l_qd: T, cov: Mat2<T>) -> Self {
        Self { theta: Vec2::new(psi_f, l_qd), cov }
    }

    pub fn psi_f(&self) -> T {
        self.theta.x
    }

    pub fn l_qd(&self) -> T {
        self.theta.y
    }

    pub fn predict(&self, phi: Vec2<T>) -> T {
        phi.dot(self.theta)
    }

    /// In-place forgetting-factor RLS step.
    pub fn update(&mut self, phi: Vec2<T>, measured: T, lambda: T) {
        let p_phi = self.cov.mul_vec(phi);
        let denom = lambda + phi.dot(p_phi);
        let gain = p_phi.scale(denom.recip());
        let innovation = measured - phi.dot(self.theta);
        self.theta = self.theta + gain.scale(innovation);
        // P ← (P − K φᵀ P)/λ, symmetrized against rounding drift.
        let correction = gain.outer(phi) * self.cov;
        self.cov = ((self.cov - correction).scale(lambda.recip())).symmetrized();
    }
}

/// Functional form of [`ParamEstimate::update`].
pub fn rls_update<T: Scalar>(
    est: &ParamEstimate<T>,
    phi: Vec2<T>,
    measured: T,
    lambda: T,
) -> ParamEstimate<T> {
    let mut next = *est;
    next.update(phi, measured, lambda);
    next
}

/// Per-estimator MTPA references and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct BankReferences<T> {
    pub per_estimator: Vec<Vec2<T>>,
    pub mean: Vec2<T>,
    /// Estimators whose θ̂ was outside the MTPA domain and fell back to i_d = 0.
    pub fallbacks: usize,
}

impl<T: Scalar> BankReferences<T> {
    /// `(1/N) Σ ‖r̄ − r̂_j‖²`
    pub fn spread(&self) -> T {
        let n = T::from_usize(self.per_estimator.len()).unwrap();
        self.per_estimator
            .iter()
            .fold(T::zero(), |acc, r| acc + (self.mean - *r).norm_sq())
            / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBank<T> {
    pub estimators: Vec<ParamEstimate<T>>,
    pub lambda: T,
}

impl<T: Scalar> EstimatorBank<T> {
    pub fn new(estimators: Vec<ParamEstimate<T>>, lambda: T) -> Result<Self, BankError> {
        if estimators.is_empty() {
            return Err(BankError::Empty);
        }
        if !(lambda > T::zero() && lambda <= T::one()) {
            return Err(BankError::ForgettingFactor(lambda.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { estimators, lambda })
    }

    pub fn len(&self) -> usize {
        self.estimators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimators.is_empty()
    }

    pub fn update(&mut self, phi: Vec2<T>, measured: T) {
        let lambda = self.lambda;
        for est in &mut self.estimators {
            est.update(phi, measured, lambda);
        }
    }

    /// Mean of the per-estimator torque predictions at `phi`.
    pub fn mean_prediction(&self, phi: Vec2<T>) -> T {
        let n = T::from_usize(self.len()).unwrap();
        self.estimators
            .iter()
            .fold(T::zero(), |acc, e| acc + e.predict(phi))
            / n
    }

    pub fn mean_theta(&self) -> Vec2<T> {
        let n = T::from_usize(self.len()).unwrap();
        self.estimators
            .iter()
            .fold(Vec2::zero(), |acc, e| acc + e.theta)
            .scale(n.recip())
    }

    pub fn references(&self, i_s_ref: T) -> BankReferences<T> {
        let mut fallbacks = 0;
        let per_estimator: Vec<Vec2<T>> = self
            .estimators
            .iter()
            .map(|e| match mtpa_point(i_s_ref, e.psi_f(), e.l_qd()) {
                Ok(pt) => pt.dq(),
                Err(_) => {
                    fallbacks += 1;
                    Vec2::new(T::zero(), i_s_ref.max(T::zero()))
                }
            })
            .collect();
        // r̂_0 + mean(r̂_j − r̂_0): exactly r̂_0 when every estimator agrees.
        let n = T::from_usize(per_estimator.len()).unwrap();
        let base = per_estimator[0];
        let mean = base
            + per_estimator
                .iter()
                .fold(Vec2::zero(), |acc, r| acc + (*r - base))
                .scale(n.recip());
        BankReferences { per_estimator, mean, fallbacks }
    }
}

/// `bank_update` as a pure function.
pub fn bank_update<T: Scalar>(bank: &EstimatorBank<T>, phi: Vec2<T>, measured: T) -> EstimatorBank<T> {
    let mut next = bank.clone();
    next.update(phi, measured);
    next
}

pub fn bank_references<T: Scalar>(bank: &EstimatorBank<T>, i_s_ref: T) -> BankReferences<T> {
    bank.references(i_s_ref)
}

/// How the bank's initial estimates are laid out.
///
/// With a pinned pair, estimator 0 starts there and the remaining ones are
/// spaced evenly over `psi_span × psi_guess` (ascending) and
/// `l_qd_span × l_qd_guess` (descending), so both extremes of `i_base` are
/// covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankConfig<T> {
    pub count: usize,
    pub lambda: T,
    pub psi_guess: T,
    pub l_qd_guess: T,
    pub psi_span: [T; 2],
    pub l_qd_span: [T; 2],
    pub pinned: Option<[T; 2]>,
    /// Diagonal of the initial covariance.
    pub p0: [T; 2],
}

impl<T: Scalar> Default for BankConfig<T> {
    fn default() -> Self {
        Self {
            count: 5,
            lambda: lit(0.99),
            psi_guess: lit(0.12),
            l_qd_guess: lit(1.2e-3),
            psi_span: [lit(0.5), lit(2.5)],
            l_qd_span: [lit(0.4), lit(1.2)],
            pinned: Some([lit(0.25), lit(0.5e-3)]),
            p0: [lit(1.0), lit(1e-4)],
        }
    }
}

impl<T: Scalar> BankConfig<T> {
    pub fn build(&self) -> Result<EstimatorBank<T>, BankError> {
        if self.count == 0 {
            return Err(BankError::Empty);
        }
        if !(self.p0[0] > T::zero() && self.p0[1] > T::zero()) {
            return Err(BankError::Covariance);
        }
        let cov = Mat2::diag(self.p0[0], self.p0[1]);
        let mut estimators = Vec::with_capacity(self.count);
        if let Some([psi, l_qd]) = self.pinned {
            estimators.push(ParamEstimate::new(psi, l_qd, cov));
        }
        let spread = self.count - estimators.len();
        for i in 0..spread {
            let frac = if spread == 1 {
                lit(0.5)
            } else {
                T::from_usize(i).unwrap() / T::from_usize(spread - 1).unwrap()
            };
            let psi_k = self.psi_span[0] + (self.psi_span[1] - self.psi_span[0]) * frac;
            let l_k = self.l_qd_span[1] - (self.l_qd_span[1] - self.l_qd_span[0]) * frac;
            estimators.push(ParamEstimate::new(
                self.psi_guess * psi_k,
                self.l_qd_guess * l_k,
                cov,
            ));
        }
        EstimatorBank::new(estimators, self.lambda)
    }
}

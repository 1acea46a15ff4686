//! Maximum-torque-per-ampere geometry.
//!
//! For a current magnitude `i_s` the torque-maximizing current vector angle is
//!
//! ```text
//! i_base = ψ_f / (L_q − L_d)
//! β      = asin( (√(i_base² + 8 i_s²) − i_base) / (4 i_s) )
//! i_d    = −i_s sin β,   i_q = i_s cos β
//! ```
//!
//! [`mtpa_oracle`] finds the same angle by direct search and exists to check
//! the closed form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Vec2;
use crate::scalar::{clamp, lit, Scalar};

/// Saliency below which the MTPA angle is treated as undefined (H).
pub const SALIENCY_GUARD: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MtpaError {
    #[error("saliency L_q − L_d = {l_qd} H is at or below the guard {SALIENCY_GUARD} H")]
    DegenerateSaliency { l_qd: f64 },
    #[error("flux linkage must be positive (got {psi_f} Wb)")]
    NonPositiveFlux { psi_f: f64 },
    #[error("current reference must be non-negative and finite (got {i_s} A)")]
    InvalidCurrent { i_s: f64 },
    #[error("torque {torque} N·m exceeds {max} N·m available at the current limit")]
    UnreachableTorque { torque: f64, max: f64 },
}

/// One point on the MTPA trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtpaPoint<T> {
    pub i_base: T,
    /// Current vector angle measured from the q-axis towards −d (rad).
    pub beta: T,
    pub i_d_ref: T,
    pub i_q_ref: T,
    pub i_s_ref: T,
}

impl<T: Scalar> MtpaPoint<T> {
    pub fn from_angle(i_s_ref: T, beta: T, i_base: T) -> Self {
        Self {
            i_base,
            beta,
            i_d_ref: -i_s_ref * beta.sin(),
            i_q_ref: i_s_ref * beta.cos(),
            i_s_ref,
        }
    }

    pub fn dq(&self) -> Vec2<T> {
        Vec2::new(self.i_d_ref, self.i_q_ref)
    }
}

fn f64_of<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Closed-form MTPA angle for base current `i_base` and magnitude `i_s`.
pub fn mtpa_angle<T: Scalar>(i_s: T, i_base: T) -> T {
    if i_s == T::zero() {
        return T::zero();
    }
    // (√(b² + 8s²) − b)/(4s) rationalized to 2s/(√(b² + 8s²) + b), which is
    // free of cancellation when i_s ≪ i_base.
    let root = (i_base * i_base + lit::<T>(8.0) * i_s * i_s).sqrt();
    let arg = lit::<T>(2.0) * i_s / (root + i_base);
    clamp(arg, T::zero(), T::one()).asin()
}

pub fn mtpa_point<T: Scalar>(i_s_ref: T, psi_f: T, l_qd: T) -> Result<MtpaPoint<T>, MtpaError> {
    if !(psi_f > T::zero()) {
        return Err(MtpaError::NonPositiveFlux { psi_f: f64_of(psi_f) });
    }
    if !(l_qd > lit(SALIENCY_GUARD)) {
        return Err(MtpaError::DegenerateSaliency { l_qd: f64_of(l_qd) });
    }
    if !(i_s_ref >= T::zero()) || !i_s_ref.is_finite() {
        return Err(MtpaError::InvalidCurrent { i_s: f64_of(i_s_ref) });
    }
    let i_base = psi_f / l_qd;
    Ok(MtpaPoint::from_angle(i_s_ref, mtpa_angle(i_s_ref, i_base), i_base))
}

/// Torque at magnitude `i_s` and angle `beta`.
pub fn torque_at_angle<T: Scalar>(i_s: T, beta: T, psi_f: T, l_qd: T, p_n: T) -> T {
    let i_d = -i_s * beta.sin();
    let i_q = i_s * beta.cos();
    lit::<T>(1.5) * p_n * (psi_f * i_q - l_qd * i_d * i_q)
}

/// Current vector angle of a measured dq pair, in the same convention as `beta`.
pub fn current_angle<T: Scalar>(i_d: T, i_q: T) -> T {
    (-i_d).atan2(i_q)
}

/// Torque-maximizing angle by uniform grid sweep over `[0, π/2]` followed by
/// golden-section refinement to 1e-9 rad.
pub fn mtpa_oracle<T: Scalar>(i_s_ref: T, psi_f: T, l_qd: T, grid_points: usize) -> MtpaPoint<T> {
    assert!(grid_points >= 1000, "oracle needs at least 1000 grid points");
    let i_base = if l_qd > T::zero() { psi_f / l_qd } else { T::infinity() };
    if i_s_ref == T::zero() {
        return MtpaPoint::from_angle(i_s_ref, T::zero(), i_base);
    }
    // p_n scales the torque uniformly and does not move the argmax.
    let torque = |beta: T| torque_at_angle(i_s_ref, beta, psi_f, l_qd, T::one());

    let upper = T::FRAC_PI_2();
    let n = T::from_usize(grid_points - 1).unwrap();
    let h = upper / n;
    let mut best = (T::zero(), torque(T::zero()));
    for k in 1..grid_points {
        let beta = h * T::from_usize(k).unwrap();
        let value = torque(beta);
        if value > best.1 {
            best = (beta, value);
        }
    }

    let mut lo = (best.0 - h).max(T::zero());
    let mut hi = (best.0 + h).min(upper);
    let inv_phi = (lit::<T>(5.0).sqrt() - T::one()) * lit(0.5);
    let tol = lit::<T>(1e-9);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = torque(x1);
    let mut f2 = torque(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = torque(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = torque(x1);
        }
    }
    let beta = (lo + hi) * lit(0.5);
    MtpaPoint::from_angle(i_s_ref, beta, i_base)
}

/// Smallest current magnitude whose MTPA point delivers `t_ref`, by bisection
/// on `[0, i_max]` to 1e-6 relative.
pub fn torque_to_current<T: Scalar>(
    t_ref: T,
    psi_f: T,
    l_qd: T,
    p_n: T,
    i_max: T,
) -> Result<T, MtpaError> {
    let torque_of = |i_s: T| -> Result<T, MtpaError> {
        let pt = mtpa_point(i_s, psi_f, l_qd)?;
        Ok(torque_at_angle(i_s, pt.beta, psi_f, l_qd, p_n))
    };
    if t_ref <= T::zero() {
        return Ok(T::zero());
    }
    let max = torque_of(i_max)?;
    if t_ref > max {
        return Err(MtpaError::UnreachableTorque {
            torque: f64_of(t_ref),
            max: f64_of(max),
        });
    }
    let mut lo = T::zero();
    let mut hi = i_max;
    let rel = lit::<T>(1e-6);
    while hi - lo > rel * hi {
        let mid = (lo + hi) * lit(0.5);
        if torque_of(mid)? < t_ref {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * lit(0.5))
}

//! Invariant and oracle checks run by `dcee-mtpa validate` and the
//! acceptance suite. Each check is self-contained and seeded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dcee::{cost_gradient, dual_cost, dual_cost_terms, predicted_cost};
use crate::estimator::{regressor, EstimatorBank, ParamEstimate};
use crate::linalg::{Mat2, Vec2};
use crate::mtpa::{mtpa_oracle, mtpa_point};
use crate::observer::observe_torque;
use crate::plant::{
    electromagnetic_torque, rpm_to_rad_s, step_plant_bounded, steady_state_voltages, DivergenceBounds, MotorParams,
    MotorState, PlantInput,
};
use crate::scenario::{run_scenario, to_csv_bytes, ScenarioConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Closed-form MTPA angle against the grid/golden-section oracle on random
/// `(i_s, ψ_f, L_qd)` triples; tolerance 1e-6 rad.
pub fn mtpa_oracle_equivalence(samples: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let i_s = r.random_range(0.1..150.0);
        let psi = r.random_range(0.02..0.5);
        let lqd = r.random_range(0.1e-3..5e-3);
        let closed = mtpa_point(i_s, psi, lqd).map(|p| p.beta).unwrap_or(f64::NAN);
        let oracle = mtpa_oracle(i_s, psi, lqd, 1000).beta;
        worst = worst.max((closed - oracle).abs());
    }
    Check {
        name: "mtpa closed form vs oracle",
        passed: worst < 1e-6,
        detail: format!("{samples} triples, max |Δβ| = {worst:.2e} rad"),
    }
}

/// RLS with λ = 1 against the batch solution of the same regularized
/// least-squares problem, `θ = (P₀⁻¹ + ΦᵀΦ)⁻¹ (P₀⁻¹θ₀ + ΦᵀY)`; tolerance 1e-9 relative.
pub fn rls_matches_batch(seed: u64) -> Check {
    let mut r = rng(seed);
    let theta0 = Vec2::<f64>::new(0.25, 0.5e-3);
    let p0 = Mat2::diag(1.0, 1e-4);
    let truth = Vec2::new(0.12, 1.2e-3);
    let mut est = ParamEstimate::new(theta0.x, theta0.y, p0);
    let p0_inv = p0.inverse().expect("diagonal");
    let mut info = p0_inv;
    let mut rhs = p0_inv.mul_vec(theta0);
    for _ in 0..500 {
        let phi = regressor(r.random_range(-60.0..0.0), r.random_range(5.0..100.0));
        let y = phi.dot(truth) + r.random_range(-0.01..0.01);
        est.update(phi, y, 1.0);
        info = info + phi.outer(phi);
        rhs = rhs + phi.scale(y);
    }
    let batch = info.inverse().expect("excited").mul_vec(rhs);
    let rel = ((est.theta.x - batch.x) / batch.x).abs().max(((est.theta.y - batch.y) / batch.y).abs());
    Check {
        name: "rls (λ=1) vs batch least squares",
        passed: rel < 1e-9,
        detail: format!("max relative difference {rel:.2e}"),
    }
}

/// Observed order of the fixed-step integrator from three step sizes
/// (2, 1, 0.5 µs) at high electrical speed, where truncation error sits well
/// above rounding.
pub fn plant_convergence_order(params: &MotorParams<f64>) -> Check {
    let bounds = DivergenceBounds { current: 1e6, speed: 1e6 };
    let p = MotorParams { inertia: 1e3, ..*params };
    let horizon = 2e-4;
    let simulate = |dt: f64| -> MotorState<f64> {
        let mut s = MotorState { i_d: -50.0, i_q: 50.0, omega_m: 2500.0, t: 0.0 };
        let input = PlantInput { u_d: -100.0, u_q: 120.0, t_load: 0.0 };
        let n = (horizon / dt).round() as usize;
        for _ in 0..n {
            s = step_plant_bounded(&s, &input, &p, dt, &bounds).expect("bounded");
        }
        s
    };
    let (a, b, c) = (simulate(2e-6), simulate(1e-6), simulate(0.5e-6));
    let diff = |x: &MotorState<f64>, y: &MotorState<f64>| (x.i_d - y.i_d).hypot(x.i_q - y.i_q);
    let order = (diff(&a, &b) / diff(&b, &c)).log2();
    Check {
        name: "plant dt-halving order",
        passed: order >= 3.5,
        detail: format!("observed order {order:.2}"),
    }
}

/// Covariance stays symmetric positive definite over `updates` random
/// updates at λ = 0.99.
pub fn covariance_stays_spd(updates: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let truth = Vec2::new(0.12, 1.2e-3);
    let mut est = ParamEstimate::<f64>::new(0.25, 0.5e-3, Mat2::diag(1.0, 1e-4));
    let mut min_eig = f64::INFINITY;
    let mut asym = 0.0f64;
    for _ in 0..updates {
        let phi = regressor(r.random_range(-60.0..0.0), r.random_range(1.0..100.0));
        let y = phi.dot(truth) + r.random_range(-1e-3..1e-3);
        est.update(phi, y, 0.99);
        let c = est.cov;
        asym = asym.max((c.b - c.c).abs());
        min_eig = min_eig.min(c.sym_eigenvalues().0);
    }
    Check {
        name: "rls covariance symmetric positive definite",
        passed: asym == 0.0 && min_eig > 0.0 && est.cov.is_finite(),
        detail: format!("{updates} updates, min eigenvalue {min_eig:.3e}, max asymmetry {asym:.1e}"),
    }
}

/// Estimates within `±spread` (relative) of the reference machine; covariance
/// diagonals are drawn below the prior and multiplied by `cov_scale`.
fn random_bank(r: &mut ChaCha8Rng, n: usize, spread: f64, cov_scale: f64) -> EstimatorBank<f64> {
    let ests = (0..n)
        .map(|_| {
            let psi = 0.12 * (1.0 + r.random_range(-spread..spread));
            let lqd = 1.2e-3 * (1.0 + r.random_range(-spread..spread));
            let p_psi = cov_scale * r.random_range(1e-3..1.0);
            let p_lqd = cov_scale * r.random_range(1e-7..1e-4);
            ParamEstimate::new(psi, lqd, Mat2::diag(p_psi, p_lqd))
        })
        .collect();
    EstimatorBank::new(ests, 0.99).expect("non-empty")
}

/// `D ≥ 0` on random banks and states, and `D = 0` with zero spread when
/// every estimator is a clone and `x` sits on the common reference.
pub fn dual_cost_identities(seed: u64) -> Check {
    let mut r = rng(seed);
    let mut negative = 0;
    let mut identity_failures = 0;
    for _ in 0..1000 {
        let bank = random_bank(&mut r, 5, 0.5, 1.0);
        let i_s = r.random_range(0.0..120.0);
        let x = Vec2::new(r.random_range(-80.0..10.0), r.random_range(-10.0..120.0));
        if dual_cost(x, &bank, i_s) < 0.0 {
            negative += 1;
        }
        let clone = EstimatorBank::new(vec![bank.estimators[0]; 5], 0.99).expect("non-empty");
        let on_ref = clone.references(i_s).mean;
        let terms = dual_cost_terms(on_ref, &clone, i_s);
        if terms.exploration != 0.0 || terms.total() != 0.0 {
            identity_failures += 1;
        }
    }
    Check {
        name: "dual cost non-negative, zero-spread identity",
        passed: negative == 0 && identity_failures == 0,
        detail: format!("{negative} negative costs, {identity_failures} identity failures in 1000 cases"),
    }
}

/// `predicted_cost` leaves the caller's bank bit-identical.
pub fn hypothetical_update_purity(seed: u64) -> Check {
    let mut r = rng(seed);
    let bits = |b: &EstimatorBank<f64>| -> Vec<u64> {
        b.estimators
            .iter()
            .flat_map(|e| [e.theta.x, e.theta.y, e.cov.a, e.cov.b, e.cov.c, e.cov.d])
            .map(f64::to_bits)
            .collect()
    };
    let mut mutated = 0;
    for _ in 0..200 {
        let bank = random_bank(&mut r, 5, 0.5, 1.0);
        let before = bits(&bank);
        let x = Vec2::new(r.random_range(-60.0..0.0), r.random_range(0.0..100.0));
        let delta = Vec2::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let _ = predicted_cost(x, delta, &bank, 50.0);
        let _ = cost_gradient(x, &bank, 50.0, 0.1);
        if bits(&bank) != before {
            mutated += 1;
        }
    }
    Check {
        name: "hypothetical update purity",
        passed: mutated == 0,
        detail: format!("{mutated} of 200 banks mutated"),
    }
}

/// Forward-difference gradient against the central difference of the
/// predicted-cost surface: both components agree in sign on at least 95% of
/// 1000 random states.
///
/// Banks are drawn from the regime the controller runs in once identification
/// has started: estimates within 1% and covariance two decades below the
/// prior. Far from convergence the forward difference carries an
/// information-gain jump of order `1/delta` on both axes, which the central
/// difference cancels, so the signs are not comparable there.
pub fn gradient_sign_agreement(seed: u64, delta: f64) -> Check {
    let mut r = rng(seed);
    let mut agree = 0;
    let total = 1000;
    for _ in 0..total {
        let bank = random_bank(&mut r, 5, 0.01, 1e-2);
        let i_s = r.random_range(5.0..120.0);
        let x = Vec2::new(r.random_range(-80.0..10.0), r.random_range(-10.0..120.0));
        let g = cost_gradient(x, &bank, i_s, delta);
        let central = |axis: usize| {
            let e = Vec2::unit(axis).scale(delta);
            (predicted_cost(x, e, &bank, i_s) - predicted_cost(x, -e, &bank, i_s)) / (2.0 * delta)
        };
        if g.x.signum() == central(0).signum() && g.y.signum() == central(1).signum() {
            agree += 1;
        }
    }
    let frac = agree as f64 / total as f64;
    Check {
        name: "cost gradient sign vs central difference",
        passed: frac >= 0.95,
        detail: format!("{:.1}% of {total} states agree", 100.0 * frac),
    }
}

/// Voltage-model torque against the true torque at steady operating points;
/// tolerance 0.1%.
pub fn observer_steady_state(params: &MotorParams<f64>) -> Check {
    let mut worst = 0.0f64;
    for &(rpm, i_s) in &[(3000.0, 58.9), (3000.0, 31.9), (1500.0, 31.9), (500.0, 10.0)] {
        let pt = mtpa_point(i_s, params.psi_f, params.l_qd()).expect("salient machine");
        let omega_r = params.p_n() * rpm_to_rad_s(rpm);
        let u = steady_state_voltages(pt.i_d_ref, pt.i_q_ref, omega_r, params);
        let obs = observe_torque(u, pt.dq(), omega_r, params.r_s, params.p_n(), 10.0).expect("above minimum speed");
        let truth = electromagnetic_torque(pt.i_d_ref, pt.i_q_ref, params);
        worst = worst.max(((obs.torque - truth) / truth).abs());
    }
    Check {
        name: "observer steady-state exactness",
        passed: worst < 1e-3,
        detail: format!("max relative error {worst:.2e}"),
    }
}

/// Two runs of `cfg` produce byte-identical CSV.
pub fn csv_determinism(cfg: &ScenarioConfig<f64>) -> Check {
    let bytes = || run_scenario(cfg).map(|run| to_csv_bytes(&run.log));
    match (bytes(), bytes()) {
        (Ok(a), Ok(b)) => Check {
            name: "deterministic rerun (byte-identical CSV)",
            passed: a == b,
            detail: format!("{} bytes", a.len()),
        },
        (Err(e), _) | (_, Err(e)) => Check {
            name: "deterministic rerun (byte-identical CSV)",
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Every check above with default sample counts.
pub fn run_suite(cfg: &ScenarioConfig<f64>) -> Vec<Check> {
    vec![
        mtpa_oracle_equivalence(1000, 1),
        rls_matches_batch(2),
        plant_convergence_order(&cfg.motor),
        covariance_stays_spd(1_000_000, 3),
        dual_cost_identities(4),
        hypothetical_update_purity(5),
        gradient_sign_agreement(6, cfg.dcee.delta_x),
        observer_steady_state(&cfg.motor),
        csv_determinism(cfg),
    ]
}

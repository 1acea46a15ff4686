//! Dual-rate closed loop: the plant advances `substeps` fixed steps per
//! control tick under zero-order-held voltages, and the active strategy
//! runs once per tick on the sampled state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dcee::{DceeController, DceeInput};
use crate::es::EsController;
use crate::estimator::normalized_torque;
use crate::foc::{current_pi_decoupled, speed_pi, Cascade, PiState};
use crate::linalg::Vec2;
use crate::mtpa::{mtpa_angle, torque_to_current};
use crate::observer::{TorqueObserver, TorqueSource};
use crate::plant::{
    copper_loss, electromagnetic_torque, limit_voltage, rpm_to_rad_s, step_plant_bounded, DivergenceBounds,
    MotorState, PlantInput,
};
use crate::scalar::{lit, Scalar};
use crate::scenario::config::{ConfigError, ScenarioConfig};
use crate::scenario::timeline::Mode;

/// One control tick. Quantities that do not apply to the active mode are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub segment: usize,
    pub mode: Mode,
    pub torque_source: TorqueSource,
    pub omega_m: f64,
    pub omega_ref: f64,
    /// True electromagnetic torque.
    pub t_e: f64,
    pub t_l: f64,
    /// Normalized torque `2T/(3p_n)` from the selected source.
    pub t_e1_source: f64,
    pub i_d: f64,
    pub i_q: f64,
    pub i_s: f64,
    pub u_d: f64,
    pub u_q: f64,
    pub i_d_ref: f64,
    pub i_q_ref: f64,
    pub i_s_ref: f64,
    pub p_cu: f64,
    /// Extremum-seeking angle state.
    pub beta: f64,
    pub inj: f64,
    pub cost: f64,
    pub exploitation: f64,
    pub spread: f64,
    pub psi_f_hat: f64,
    pub l_qd_hat: f64,
    /// `ψ̂_f/L̂_qd` of estimator 0.
    pub i_base_0: f64,
    /// `[ψ̂_f, L̂_qd]` per estimator.
    pub estimates: Vec<[f64; 2]>,
}

impl LogRecord {
    pub fn is_finite_core(&self) -> bool {
        [self.t, self.omega_m, self.t_e, self.i_d, self.i_q, self.u_d, self.u_q]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub mode: Mode,
    pub torque_source: TorqueSource,
    /// Means over the steady window at the end of the segment.
    pub i_s: f64,
    pub i_d: f64,
    pub i_q: f64,
    pub i_s_ref: f64,
    pub p_cu: f64,
    pub t_e: f64,
    pub omega_m: f64,
    /// Mean extremum-seeking angle; NaN outside ES segments.
    pub beta: f64,
    /// Closed-form MTPA angle at the mean `i_s_ref`, true parameters.
    pub beta_mtpa: f64,
    pub psi_f_hat: f64,
    pub l_qd_hat: f64,
    /// Time from segment start until `i_s` stays inside the settling band;
    /// None if it never does.
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientSummary {
    pub t0: f64,
    pub t1: f64,
    /// `∫ |i_s − i_s,MTPA(T_e)| dt` over `[t0, t1)` (A·s).
    pub off_mtpa_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ticks: usize,
    pub plant_steps: usize,
    pub segments: Vec<SegmentSummary>,
    pub transients: Vec<TransientSummary>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub log: Vec<LogRecord>,
    pub summary: RunSummary,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation diverged at t = {:.6} s: {reason}", record.t)]
    Diverged { reason: String, record: Box<LogRecord> },
}

impl ScenarioError {
    /// Process exit code: 2 for divergence, 3 for configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Diverged { .. } => 2,
            ScenarioError::Config(_) => 3,
        }
    }
}

fn f<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

struct Noise<T> {
    rng: ChaCha8Rng,
    current: Option<Normal<f64>>,
    speed: Option<Normal<f64>>,
    torque: Option<Normal<f64>>,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Scalar> Noise<T> {
    fn new(cfg: &crate::scenario::config::NoiseConfig<T>) -> Self {
        let dist = |s: T| (s > T::zero()).then(|| Normal::new(0.0, f(s)).expect("validated deviation"));
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            current: dist(cfg.current_std),
            speed: dist(cfg.speed_std),
            torque: dist(cfg.torque_std),
            _scalar: std::marker::PhantomData,
        }
    }

    fn draw(rng: &mut ChaCha8Rng, d: &Option<Normal<f64>>) -> T {
        d.as_ref().map_or(T::zero(), |d| lit(d.sample(rng)))
    }

    fn current(&mut self) -> T {
        Self::draw(&mut self.rng, &self.current)
    }

    fn speed(&mut self) -> T {
        Self::draw(&mut self.rng, &self.speed)
    }

    fn torque(&mut self) -> T {
        Self::draw(&mut self.rng, &self.torque)
    }
}

/// Integrator values that reproduce `u` with zero current error.
fn seed_current_integrators<T: Scalar>(
    cascade: &mut Cascade<T>,
    u: Vec2<T>,
    meas: Vec2<T>,
    omega_r: T,
    cfg: &ScenarioConfig<T>,
) {
    let p = &cfg.motor;
    let set = |pi: &mut PiState<T>, v: T| pi.integ = v.max(pi.out_min).min(pi.out_max);
    set(&mut cascade.current_d, u.x + omega_r * p.l_q * meas.y);
    set(&mut cascade.current_q, u.y - omega_r * (p.l_d * meas.x + p.psi_f));
}

/// Run `cfg.timeline` from standstill.
pub fn run_scenario<T: Scalar>(cfg: &ScenarioConfig<T>) -> Result<ScenarioRun, ScenarioError> {
    cfg.validate()?;
    let params = cfg.motor;
    let t_s = cfg.sim.t_s;
    let dt = cfg.sim.dt;
    let substeps = cfg.sim.substeps()?;
    let p_n = params.p_n();
    let bounds = DivergenceBounds::for_params(&params);
    let n_ticks = (cfg.timeline.t_end() / t_s).round().to_usize().unwrap_or(0);

    let mut cascade = Cascade::new(&cfg.foc, &params);
    let mut es = EsController::new(cfg.es.clone(), t_s, p_n).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let bank = cfg.bank.build().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let mut dcee = DceeController::new(cfg.dcee.clone(), bank, params)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let mut observer = TorqueObserver::new(cfg.observer.clone(), t_s);
    let mut noise = Noise::new(&cfg.noise);

    let mut state = MotorState::<T>::at_rest();
    let mut u_applied = Vec2::<T>::zero();
    let mut prev_mode: Option<Mode> = None;
    let mut log = Vec::with_capacity(n_ticks);

    for k in 0..n_ticks {
        let t = t_s * T::from_usize(k).unwrap();
        let cmd = cfg.timeline.command_at(t);
        state.t = t;

        let meas = Vec2::new(state.i_d + noise.current(), state.i_q + noise.current());
        let omega_m_meas = state.omega_m + noise.speed();
        let omega_r_meas = p_n * omega_m_meas;
        let t_e = electromagnetic_torque(state.i_d, state.i_q, &params);
        let observed = observer.update(u_applied, meas, omega_r_meas, params.r_s, p_n);
        let t_meas = match cmd.torque_source {
            TorqueSource::Ideal => t_e,
            TorqueSource::Observed => observed.torque,
        } + noise.torque();

        let omega_ref = rpm_to_rad_s(cmd.speed_ref_rpm);
        let i_s_ref = speed_pi(omega_ref, omega_m_meas, &mut cascade.speed, t_s);

        if prev_mode == Some(Mode::Dcee) && cmd.mode != Mode::Dcee {
            seed_current_integrators(&mut cascade, u_applied, meas, omega_r_meas, cfg);
        }
        if cmd.mode == Mode::Es && prev_mode != Some(Mode::Es) {
            es.clear_history();
        }

        let nan = f64::NAN;
        let mut beta = nan;
        let mut inj = nan;
        let mut cost = (nan, nan, nan);
        let mut divergence: Option<String> = None;

        let (refs, u_cmd) = match cmd.mode {
            Mode::Id0 | Mode::Es => {
                let refs = if cmd.mode == Mode::Es {
                    let out = es
                        .tick(k as u64, t_meas, meas.norm(), i_s_ref)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    beta = f(out.beta);
                    inj = f(out.inj);
                    out.refs
                } else {
                    Vec2::new(T::zero(), i_s_ref)
                };
                let u = current_pi_decoupled(
                    refs,
                    meas,
                    omega_r_meas,
                    &params,
                    &mut cascade.current_d,
                    &mut cascade.current_q,
                    t_s,
                );
                (refs, u)
            }
            Mode::Dcee => {
                let input = DceeInput {
                    currents: meas,
                    omega_r: omega_r_meas,
                    t_e1: normalized_torque(t_meas, p_n),
                    i_s_ref,
                    // A held observer output is not a new measurement.
                    identify: cmd.torque_source == TorqueSource::Ideal || observed.valid,
                };
                match dcee.tick(&input) {
                    Ok(out) => {
                        let d = &out.diagnostics;
                        cost = (f(d.cost()), f(d.exploitation), f(d.exploration));
                        (d.r_bar, limit_voltage(out.voltages, params.voltage_limit()))
                    }
                    Err(e) => {
                        divergence = Some(e.to_string());
                        (Vec2::new(T::from_f64(nan).unwrap(), T::from_f64(nan).unwrap()), u_applied)
                    }
                }
            }
        };
        prev_mode = Some(cmd.mode);

        let theta_mean = dcee.bank.mean_theta();
        let est0 = dcee.bank.estimators[0].theta;
        let record = LogRecord {
            t: f(t),
            segment: cmd.segment,
            mode: cmd.mode,
            torque_source: cmd.torque_source,
            omega_m: f(state.omega_m),
            omega_ref: f(omega_ref),
            t_e: f(t_e),
            t_l: f(cmd.load),
            t_e1_source: f(normalized_torque(t_meas, p_n)),
            i_d: f(state.i_d),
            i_q: f(state.i_q),
            i_s: f(state.i_s()),
            u_d: f(u_cmd.x),
            u_q: f(u_cmd.y),
            i_d_ref: f(refs.x),
            i_q_ref: f(refs.y),
            i_s_ref: f(i_s_ref),
            p_cu: f(copper_loss(state.i_d, state.i_q, params.r_s)),
            beta,
            inj,
            cost: cost.0,
            exploitation: cost.1,
            spread: cost.2,
            psi_f_hat: f(theta_mean.x),
            l_qd_hat: f(theta_mean.y),
            i_base_0: f(est0.x / est0.y),
            estimates: dcee.bank.estimators.iter().map(|e| [f(e.theta.x), f(e.theta.y)]).collect(),
        };
        if let Some(reason) = divergence {
            return Err(ScenarioError::Diverged { reason, record: Box::new(record) });
        }

        u_applied = u_cmd;
        for _ in 0..substeps {
            let input = PlantInput { u_d: u_cmd.x, u_q: u_cmd.y, t_load: cfg.timeline.load_at(state.t) };
            state = match step_plant_bounded(&state, &input, &params, dt, &bounds) {
                Ok(next) => next,
                Err(e) => return Err(ScenarioError::Diverged { reason: e.to_string(), record: Box::new(record) }),
            };
        }
        log.push(record);
    }

    let summary = summarize(&log, cfg, n_ticks * substeps);
    Ok(ScenarioRun { log, summary })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// MTPA current magnitude that produces `|t_e|` with the true parameters
/// (braking torque needs the same magnitude as motoring torque).
pub fn mtpa_current_for_torque<T: Scalar>(t_e: f64, cfg: &ScenarioConfig<T>) -> f64 {
    let p = &cfg.motor;
    torque_to_current(t_e.abs(), f(p.psi_f), f(p.l_qd()), f(p.p_n()), f(p.i_smax)).unwrap_or(f(p.i_smax))
}

fn summarize<T: Scalar>(log: &[LogRecord], cfg: &ScenarioConfig<T>, plant_steps: usize) -> RunSummary {
    let t_s = f(cfg.sim.t_s);
    let window = f(cfg.sim.steady_window);
    let band = f(cfg.sim.settle_band);
    let i_base = f(cfg.motor.psi_f / cfg.motor.l_qd());

    let segments = cfg
        .timeline
        .segments
        .iter()
        .enumerate()
        .map(|(index, seg)| {
            let (t0, t1) = (f(seg.t_start), f(seg.t_end));
            let in_seg: Vec<&LogRecord> = log.iter().filter(|r| r.segment == index).collect();
            let steady: Vec<&LogRecord> = in_seg.iter().copied().filter(|r| r.t >= t1 - window - 1e-12).collect();
            let m = |g: fn(&LogRecord) -> f64| mean(steady.iter().map(|r| g(r)));
            let i_s = m(|r| r.i_s);
            let i_s_ref = m(|r| r.i_s_ref);
            let settling_time = in_seg
                .iter()
                .rposition(|r| (r.i_s - i_s).abs() > band * i_s.abs())
                .map_or(Some(0.0), |last| in_seg.get(last + 1).map(|r| r.t - t0));
            SegmentSummary {
                index,
                t_start: t0,
                t_end: t1,
                mode: seg.mode,
                torque_source: seg.torque_source,
                i_s,
                i_d: m(|r| r.i_d),
                i_q: m(|r| r.i_q),
                i_s_ref,
                p_cu: m(|r| r.p_cu),
                t_e: m(|r| r.t_e),
                omega_m: m(|r| r.omega_m),
                beta: m(|r| r.beta),
                beta_mtpa: mtpa_angle(i_s_ref.max(0.0), i_base),
                psi_f_hat: m(|r| r.psi_f_hat),
                l_qd_hat: m(|r| r.l_qd_hat),
                settling_time,
            }
        })
        .collect();

    let transients = cfg
        .sim
        .transient_windows
        .iter()
        .map(|w| {
            let (t0, t1) = (f(w[0]), f(w[1]));
            let off_mtpa_integral = log
                .iter()
                .filter(|r| r.t >= t0 - 1e-12 && r.t < t1 - 1e-12)
                .map(|r| (r.i_s - mtpa_current_for_torque(r.t_e, cfg)).abs() * t_s)
                .sum();
            TransientSummary { t0, t1, off_mtpa_integral }
        })
        .collect();

    RunSummary { ticks: log.len(), plant_steps, segments, transients }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::timeline::{ScenarioTimeline, Segment};

    fn short(mode: Mode, speed: f64, load: f64, t_end: f64) -> ScenarioConfig<f64> {
        ScenarioConfig {
            timeline: ScenarioTimeline {
                load_ramp: 0.01,
                segments: vec![Segment {
                    t_start: 0.0,
                    t_end,
                    speed_ref: speed,
                    load,
                    mode,
                    torque_source: TorqueSource::Ideal,
                }],
            },
            sim: crate::scenario::config::SimConfig {
                steady_window: 0.01,
                transient_windows: vec![],
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn idle_at_standstill_stays_at_rest() {
        let run = run_scenario(&short(Mode::Id0, 0.0, 0.0, 0.02)).unwrap();
        assert_eq!(run.log.len(), 200);
        assert_eq!(run.summary.plant_steps, 20_000);
        assert!(run.log.iter().all(|r| r.i_s.abs() < 1e-12 && r.p_cu.abs() < 1e-12));
    }

    #[test]
    fn records_are_monotone_in_time() {
        let run = run_scenario(&short(Mode::Id0, 1000.0, 0.0, 0.01)).unwrap();
        assert!(run.log.windows(2).all(|w| w[1].t > w[0].t));
        assert_eq!(run.log[0].t, 0.0);
    }

    #[test]
    fn id0_mode_keeps_d_current_near_zero() {
        let run = run_scenario(&short(Mode::Id0, 1000.0, 10.0, 0.1)).unwrap();
        assert!(run.log.iter().all(|r| r.i_d_ref == 0.0 && r.beta.is_nan() && r.cost.is_nan()));
        let last = run.log.last().unwrap();
        assert!(last.i_d.abs() < 0.5, "{}", last.i_d);
    }

    #[test]
    fn zero_amplitude_es_reproduces_id0() {
        let a = run_scenario(&short(Mode::Id0, 1000.0, 10.0, 0.02)).unwrap();
        let mut cfg = short(Mode::Es, 1000.0, 10.0, 0.02);
        cfg.es.a_inj = 0.0;
        let b = run_scenario(&cfg).unwrap();
        for (x, y) in a.log.iter().zip(&b.log) {
            assert_eq!((x.i_d, x.i_q, x.omega_m, x.u_d, x.u_q), (y.i_d, y.i_q, y.omega_m, y.u_d, y.u_q));
        }
    }

    #[test]
    fn bank_is_frozen_outside_dcee() {
        let run = run_scenario(&short(Mode::Es, 1000.0, 10.0, 0.02)).unwrap();
        let first = &run.log[0].estimates;
        assert!(run.log.iter().all(|r| &r.estimates == first));
        assert_eq!(run.log[0].i_base_0, 500.0);
    }

    #[test]
    fn divergence_carries_the_offending_record() {
        let mut cfg = short(Mode::Dcee, 3000.0, 0.0, 0.05);
        cfg.dcee.max_saturated_ticks = 0;
        cfg.dcee.k_x = 50.0;
        match run_scenario(&cfg) {
            Err(e @ ScenarioError::Diverged { .. }) => {
                assert_eq!(e.exit_code(), 2);
                if let ScenarioError::Diverged { record, .. } = e {
                    assert!(record.t < 0.05);
                }
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_is_reported() {
        let mut cfg = short(Mode::Id0, 0.0, 0.0, 0.01);
        cfg.sim.dt = 3e-6;
        let err = run_scenario(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}

//! Piecewise operating schedule: speed reference, load torque, control mode
//! and torque source per segment.

use serde::{Deserialize, Serialize};

use crate::observer::TorqueSource;
use crate::scalar::{clamp, lit, Scalar};

/// Current-reference strategy active in a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Id0,
    Es,
    Dcee,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Id0 => "id0",
            Mode::Es => "es",
            Mode::Dcee => "dcee",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "id0" => Ok(Mode::Id0),
            "es" => Ok(Mode::Es),
            "dcee" => Ok(Mode::Dcee),
            other => Err(format!("unknown mode `{other}` (expected id0, es or dcee)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment<T> {
    pub t_start: T,
    pub t_end: T,
    /// Speed reference (r/min).
    pub speed_ref: T,
    /// Load torque (N·m).
    pub load: T,
    pub mode: Mode,
    pub torque_source: TorqueSource,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TimelineError {
    #[error("timeline has no segments")]
    Empty,
    #[error("timeline must start at t = 0 (first segment starts at {0} s)")]
    Start(f64),
    #[error("segment {index} has t_start >= t_end")]
    EmptySegment { index: usize },
    #[error("segment {index} starts at {t_start} s but the previous one ends at {prev_end} s")]
    Gap { index: usize, t_start: f64, prev_end: f64 },
    #[error("segment {index} has a negative speed reference or a non-finite field")]
    Value { index: usize },
    #[error("load ramp must be positive (got {0} s)")]
    Ramp(f64),
}

/// Contiguous segments covering `[0, t_end)`. Load changes at segment
/// boundaries are smoothed over `load_ramp`; speed changes are steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ScenarioTimeline<T> {
    /// Duration of the load smoothing ramp (s).
    #[serde(default = "default_ramp")]
    pub load_ramp: T,
    pub segments: Vec<Segment<T>>,
}

fn default_ramp<T: Scalar>() -> T {
    lit(0.01)
}

/// Smoothstep `3τ² − 2τ³` from `before` to `after` starting at `t_step`.
pub fn smooth_load<T: Scalar>(t: T, t_step: T, before: T, after: T, ramp: T) -> T {
    let tau = clamp((t - t_step) / ramp, T::zero(), T::one());
    let s = tau * tau * (lit::<T>(3.0) - lit::<T>(2.0) * tau);
    before + (after - before) * s
}

/// Operating point commanded at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command<T> {
    pub segment: usize,
    pub speed_ref_rpm: T,
    pub load: T,
    pub mode: Mode,
    pub torque_source: TorqueSource,
}

impl<T: Scalar> ScenarioTimeline<T> {
    /// The five-condition experiment: i_d = 0 with no load then full load,
    /// MTPA at full load, half load, and half load at half speed, 0.2 s each.
    pub fn reference_experiment() -> Self {
        let rated = lit::<T>(3000.0);
        let seg = |k: usize, speed: T, load: f64, mode| Segment {
            t_start: lit::<T>(0.2) * T::from_usize(k).unwrap(),
            t_end: lit::<T>(0.2) * T::from_usize(k + 1).unwrap(),
            speed_ref: speed,
            load: lit(load),
            mode,
            torque_source: TorqueSource::Ideal,
        };
        Self {
            load_ramp: default_ramp(),
            segments: vec![
                seg(0, rated, 0.0, Mode::Id0),
                seg(1, rated, 36.0, Mode::Id0),
                seg(2, rated, 36.0, Mode::Dcee),
                seg(3, rated, 18.0, Mode::Dcee),
                seg(4, rated * lit(0.5), 18.0, Mode::Dcee),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), TimelineError> {
        let ramp = self.load_ramp.to_f64().unwrap_or(f64::NAN);
        if !(ramp > 0.0) {
            return Err(TimelineError::Ramp(ramp));
        }
        let first = self.segments.first().ok_or(TimelineError::Empty)?;
        if first.t_start != T::zero() {
            return Err(TimelineError::Start(first.t_start.to_f64().unwrap_or(f64::NAN)));
        }
        for (index, s) in self.segments.iter().enumerate() {
            let finite = s.t_start.is_finite() && s.t_end.is_finite() && s.speed_ref.is_finite() && s.load.is_finite();
            if !finite || s.speed_ref < T::zero() {
                return Err(TimelineError::Value { index });
            }
            if !(s.t_start < s.t_end) {
                return Err(TimelineError::EmptySegment { index });
            }
            if index > 0 {
                let prev_end = self.segments[index - 1].t_end;
                if s.t_start != prev_end {
                    return Err(TimelineError::Gap {
                        index,
                        t_start: s.t_start.to_f64().unwrap_or(f64::NAN),
                        prev_end: prev_end.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn t_end(&self) -> T {
        self.segments.last().map(|s| s.t_end).unwrap_or_else(T::zero)
    }

    /// Index of the segment containing `t`; the last segment absorbs `t >= t_end`.
    pub fn segment_at(&self, t: T) -> usize {
        self.segments
            .iter()
            .position(|s| t < s.t_end)
            .unwrap_or(self.segments.len().saturating_sub(1))
    }

    /// Load at `t`, ramped from the previous segment's load after each boundary.
    pub fn load_at(&self, t: T) -> T {
        let k = self.segment_at(t);
        let seg = &self.segments[k];
        if k == 0 {
            return seg.load;
        }
        smooth_load(t, seg.t_start, self.segments[k - 1].load, seg.load, self.load_ramp)
    }

    pub fn command_at(&self, t: T) -> Command<T> {
        let k = self.segment_at(t);
        let seg = &self.segments[k];
        Command {
            segment: k,
            speed_ref_rpm: seg.speed_ref,
            load: self.load_at(t),
            mode: seg.mode,
            torque_source: seg.torque_source,
        }
    }

    /// Replace the mode of every segment that is not `Id0`.
    pub fn override_mode(&mut self, mode: Mode) {
        for s in &mut self.segments {
            if s.mode != Mode::Id0 {
                s.mode = mode;
            }
        }
    }

    pub fn override_torque_source(&mut self, source: TorqueSource) {
        for s in &mut self.segments {
            s.torque_source = source;
        }
    }
}

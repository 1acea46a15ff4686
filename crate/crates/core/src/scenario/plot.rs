//! SVG figures: stacked time-series panels and the dq current-plane
//! trajectory over the MTPA curve and constant-torque contours.

use std::ops::Range;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::mtpa::mtpa_point;
use crate::plant::{rad_s_to_rpm, MotorParams};
use crate::scenario::run::LogRecord;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("nothing to plot: the log is empty")]
    Empty,
    #[error("cannot create {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("drawing {path} failed: {message}")]
    Draw { path: PathBuf, message: String },
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

struct Trace {
    label: String,
    points: Vec<(f64, f64)>,
}

fn trace(label: &str, log: &[LogRecord], g: impl Fn(&LogRecord) -> f64) -> Trace {
    Trace {
        label: label.to_string(),
        points: log.iter().map(|r| (r.t, g(r))).filter(|p| p.1.is_finite()).collect(),
    }
}

/// Finite bounds of `values`, padded so the range is never empty.
fn span(values: impl Iterator<Item = f64>) -> Range<f64> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return -1.0..1.0;
    }
    let pad = ((hi - lo) * 0.05).max(1e-9 * lo.abs().max(1.0));
    (lo - pad)..(hi + pad)
}

fn draw_err(path: &Path) -> impl Fn(String) -> PlotError + '_ {
    move |message| PlotError::Draw { path: path.to_path_buf(), message }
}

/// Panels of speed, torque, currents, flux estimates, saliency estimates and
/// the extremum-seeking angle against time.
pub fn time_series(log: &[LogRecord], path: &Path) -> Result<(), PlotError> {
    if log.is_empty() {
        return Err(PlotError::Empty);
    }
    let err = draw_err(path);
    let estimators = log[0].estimates.len();
    let panels: Vec<(&str, Vec<Trace>)> = vec![
        (
            "speed (r/min)",
            vec![
                trace("n", log, |r| rad_s_to_rpm(r.omega_m)),
                trace("n*", log, |r| rad_s_to_rpm(r.omega_ref)),
            ],
        ),
        ("torque (N·m)", vec![trace("T_e", log, |r| r.t_e), trace("T_L", log, |r| r.t_l)]),
        (
            "current (A)",
            vec![trace("i_d", log, |r| r.i_d), trace("i_q", log, |r| r.i_q), trace("i_s", log, |r| r.i_s)],
        ),
        (
            "ψ̂_f (Wb)",
            (0..estimators)
                .map(|j| trace(&format!("ψ̂_{j}"), log, move |r| r.estimates[j][0]))
                .collect(),
        ),
        (
            "L̂_qd (mH)",
            (0..estimators)
                .map(|j| trace(&format!("L̂_{j}"), log, move |r| r.estimates[j][1] * 1e3))
                .collect(),
        ),
        ("β (rad)", vec![trace("β_ES", log, |r| r.beta)]),
    ];

    let root = SVGBackend::new(path, (900, 220 * panels.len() as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let areas = root.split_evenly((panels.len(), 1));
    let t_range = span(log.iter().map(|r| r.t));

    for (area, (title, traces)) in areas.iter().zip(&panels) {
        let y_range = span(traces.iter().flat_map(|tr| tr.points.iter().map(|p| p.1)));
        let mut chart = ChartBuilder::on(area)
            .margin(8)
            .x_label_area_size(28)
            .y_label_area_size(60)
            .build_cartesian_2d(t_range.clone(), y_range)
            .map_err(|e| err(e.to_string()))?;
        chart
            .configure_mesh()
            .x_desc("t (s)")
            .y_desc(*title)
            .draw()
            .map_err(|e| err(e.to_string()))?;
        for (k, tr) in traces.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(tr.points.iter().copied(), color.stroke_width(1)))
                .map_err(|e| err(e.to_string()))?
                .label(tr.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        if traces.iter().any(|tr| !tr.points.is_empty()) {
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| err(e.to_string()))?;
        }
    }
    root.present().map_err(|e| err(e.to_string()))
}

/// The measured (i_d, i_q) path with the analytic MTPA curve and
/// constant-torque hyperbolas for the true machine.
pub fn current_trajectory(log: &[LogRecord], params: &MotorParams<f64>, path: &Path) -> Result<(), PlotError> {
    if log.is_empty() {
        return Err(PlotError::Empty);
    }
    let err = draw_err(path);
    let (psi, lqd, p_n) = (params.psi_f, params.l_qd(), params.p_n());
    let i_max = params.i_smax;

    let path_points: Vec<(f64, f64)> = log.iter().map(|r| (r.i_d, r.i_q)).filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
    let mtpa_curve: Vec<(f64, f64)> = (0..=200)
        .filter_map(|k| mtpa_point(i_max * k as f64 / 200.0, psi, lqd).ok())
        .map(|pt| (pt.i_d_ref, pt.i_q_ref))
        .collect();

    let d_lo = path_points.iter().map(|p| p.0).fold(-40.0f64, f64::min) * 1.1;
    let q_hi = path_points.iter().map(|p| p.1).fold(80.0f64, f64::max) * 1.1;
    let d_range = d_lo..(path_points.iter().map(|p| p.0).fold(0.0f64, f64::max) + 5.0);
    let q_range = 0.0..q_hi;

    let contour = |torque: f64| -> Vec<(f64, f64)> {
        (0..=200)
            .map(|k| d_range.start + (d_range.end - d_range.start) * k as f64 / 200.0)
            .map(|i_d| (i_d, torque / (1.5 * p_n * (psi - lqd * i_d))))
            .filter(|p| p.1 > 0.0 && p.1 <= q_hi)
            .collect()
    };

    let root = SVGBackend::new(path, (760, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(d_range.clone(), q_range)
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("i_d (A)")
        .y_desc("i_q (A)")
        .draw()
        .map_err(|e| err(e.to_string()))?;

    let grey = RGBColor(150, 150, 150);
    for (k, torque) in [9.0, 18.0, 27.0, 36.0].into_iter().enumerate() {
        let series = chart
            .draw_series(LineSeries::new(contour(torque), grey.stroke_width(1)))
            .map_err(|e| err(e.to_string()))?;
        if k == 0 {
            series
                .label("constant torque (9, 18, 27, 36 N·m)")
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], grey));
        }
    }
    chart
        .draw_series(LineSeries::new(mtpa_curve, PALETTE[1].stroke_width(2)))
        .map_err(|e| err(e.to_string()))?
        .label("MTPA")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], PALETTE[1]));
    chart
        .draw_series(LineSeries::new(path_points.iter().copied(), PALETTE[0].stroke_width(1)))
        .map_err(|e| err(e.to_string()))?
        .label("measured")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], PALETTE[0]));
    if let Some(&last) = path_points.last() {
        chart
            .draw_series(std::iter::once(Circle::new(last, 3, PALETTE[0].filled())))
            .map_err(|e| err(e.to_string()))?;
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))
}

/// Write `time_series.svg` and `trajectory.svg` into `out_dir`.
pub fn emit_plots(log: &[LogRecord], params: &MotorParams<f64>, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    if log.is_empty() {
        return Err(PlotError::Empty);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| PlotError::Io { path: out_dir.to_path_buf(), source })?;
    let series = out_dir.join("time_series.svg");
    let trajectory = out_dir.join("trajectory.svg");
    time_series(log, &series)?;
    current_trajectory(log, params, &trajectory)?;
    Ok(vec![series, trajectory])
}

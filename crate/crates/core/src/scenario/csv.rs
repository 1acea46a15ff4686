//! CSV log format: one header row, one row per control tick. Numbers are
//! written in plain decimal notation with 15 significant digits; quantities
//! that do not apply to the active mode are written as `NaN`.

use std::path::{Path, PathBuf};

use crate::observer::TorqueSource;
use crate::scenario::run::LogRecord;
use crate::scenario::timeline::Mode;

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: row {row}: {message}")]
    Format { path: PathBuf, row: usize, message: String },
}

const FIXED: [&str; 27] = [
    "t",
    "segment",
    "mode",
    "torque_source",
    "omega_m",
    "omega_ref",
    "T_e",
    "T_L",
    "T_e1_source",
    "i_d",
    "i_q",
    "i_s",
    "u_d",
    "u_q",
    "i_d_ref",
    "i_q_ref",
    "i_s_ref",
    "P_cu",
    "beta",
    "inj",
    "D",
    "exploitation",
    "spread",
    "psi_f_hat",
    "L_qd_hat",
    "i_base_0",
    "n_estimators",
];

/// Header for a log whose bank holds `estimators` estimators.
pub fn column_names(estimators: usize) -> Vec<String> {
    let mut cols: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    for j in 0..estimators {
        cols.push(format!("psi_f_hat_{j}"));
        cols.push(format!("L_qd_hat_{j}"));
    }
    cols
}

/// Plain decimal with `digits` significant digits; `NaN`, `inf`, `-inf` otherwise.
pub fn format_number(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exponent = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - exponent).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn row(r: &LogRecord) -> Vec<String> {
    let n = |x: f64| format_number(x, 15);
    let mut out = vec![
        n(r.t),
        r.segment.to_string(),
        r.mode.to_string(),
        r.torque_source.to_string(),
        n(r.omega_m),
        n(r.omega_ref),
        n(r.t_e),
        n(r.t_l),
        n(r.t_e1_source),
        n(r.i_d),
        n(r.i_q),
        n(r.i_s),
        n(r.u_d),
        n(r.u_q),
        n(r.i_d_ref),
        n(r.i_q_ref),
        n(r.i_s_ref),
        n(r.p_cu),
        n(r.beta),
        n(r.inj),
        n(r.cost),
        n(r.exploitation),
        n(r.spread),
        n(r.psi_f_hat),
        n(r.l_qd_hat),
        n(r.i_base_0),
        r.estimates.len().to_string(),
    ];
    for e in &r.estimates {
        out.push(n(e[0]));
        out.push(n(e[1]));
    }
    out
}

/// Serialize `log` to CSV text.
pub fn to_csv_bytes(log: &[LogRecord]) -> Vec<u8> {
    let estimators = log.first().map_or(0, |r| r.estimates.len());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(column_names(estimators)).expect("in-memory write");
    for r in log {
        w.write_record(row(r)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn export_csv(log: &[LogRecord], path: &Path) -> Result<(), CsvError> {
    std::fs::write(path, to_csv_bytes(log)).map_err(|source| CsvError::Io { path: path.to_path_buf(), source })
}

pub fn read_csv(path: &Path) -> Result<Vec<LogRecord>, CsvError> {
    let csv_err = |source| CsvError::Csv { path: path.to_path_buf(), source };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    let fixed_ok = header.len() >= FIXED.len() && FIXED.iter().zip(header.iter()).all(|(a, b)| *a == b);
    let estimators = (header.len().saturating_sub(FIXED.len())) / 2;
    if !fixed_ok || header.iter().collect::<Vec<_>>() != column_names(estimators) {
        return Err(CsvError::Format { path: path.to_path_buf(), row: 0, message: "unexpected header".into() });
    }

    let mut log = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |message: String| CsvError::Format { path: path.to_path_buf(), row: i + 1, message };
        let num = |k: usize| -> Result<f64, CsvError> {
            rec[k].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", &header[k])))
        };
        let estimates = (0..estimators)
            .map(|j| Ok([num(FIXED.len() + 2 * j)?, num(FIXED.len() + 2 * j + 1)?]))
            .collect::<Result<Vec<_>, CsvError>>()?;
        log.push(LogRecord {
            t: num(0)?,
            segment: rec[1].parse().map_err(|e| bad(format!("segment: {e}")))?,
            mode: rec[2].parse::<Mode>().map_err(bad)?,
            torque_source: rec[3].parse::<TorqueSource>().map_err(|e| bad(e.to_string()))?,
            omega_m: num(4)?,
            omega_ref: num(5)?,
            t_e: num(6)?,
            t_l: num(7)?,
            t_e1_source: num(8)?,
            i_d: num(9)?,
            i_q: num(10)?,
            i_s: num(11)?,
            u_d: num(12)?,
            u_q: num(13)?,
            i_d_ref: num(14)?,
            i_q_ref: num(15)?,
            i_s_ref: num(16)?,
            p_cu: num(17)?,
            beta: num(18)?,
            inj: num(19)?,
            cost: num(20)?,
            exploitation: num(21)?,
            spread: num(22)?,
            psi_f_hat: num(23)?,
            l_qd_hat: num(24)?,
            i_base_0: num(25)?,
            estimates,
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_examples() {
        assert_eq!(format_number(0.0, 15), "0");
        assert_eq!(format_number(1.5, 15), "1.5");
        assert_eq!(format_number(-23.1, 15), "-23.1");
        assert_eq!(format_number(f64::NAN, 15), "NaN");
        assert_eq!(format_number(1e-7, 15), "0.0000001");
        assert_eq!(format_number(123456789.0, 9), "123456789");
        assert_eq!(format_number(1.0 / 3.0, 15), "0.333333333333333");
        assert!(!format_number(6.3e-30, 15).contains('e'));
    }

    #[test]
    fn formatted_numbers_round_trip() {
        for &x in &[1.0 / 3.0, -2.0 / 7.0, 1e-12 * std::f64::consts::PI, 314.159_265_358_979, 9.999_999_999_999_999e5] {
            let back: f64 = format_number(x, 15).parse().unwrap();
            assert!((back - x).abs() <= 1e-14 * x.abs(), "{x} -> {back}");
        }
    }

    #[test]
    fn header_layout() {
        let cols = column_names(2);
        assert_eq!(cols.len(), FIXED.len() + 4);
        assert_eq!(&cols[FIXED.len()..], ["psi_f_hat_0", "L_qd_hat_0", "psi_f_hat_1", "L_qd_hat_1"]);
    }

    #[test]
    fn empty_log_is_header_only() {
        let bytes = to_csv_bytes(&[]);
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.ends_with('\n'));
    }
}

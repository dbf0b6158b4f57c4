//! Metrics rows and CSV output.

use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 9] = [
    "dataset", "method", "profile", "snr_db", "fold", "rmse", "mae", "rmse_se", "mae_se",
];

/// One evaluated (dataset, method, profile, SNR, fold) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub dataset: String,
    pub method: String,
    pub profile: String,
    pub snr_db: f64,
    pub fold: usize,
    pub rmse: f64,
    pub mae: f64,
    pub rmse_se: f64,
    pub mae_se: f64,
    pub expected_mse: Option<f64>,
    pub expected_mae: Option<f64>,
}

impl MetricsRow {
    fn key_fields(&self) -> Vec<String> {
        vec![
            self.dataset.clone(),
            self.method.clone(),
            self.profile.clone(),
            format_g9(self.snr_db),
            self.fold.to_string(),
        ]
    }

    pub fn to_record(&self) -> Vec<String> {
        let mut rec = self.key_fields();
        rec.extend([self.rmse, self.mae, self.rmse_se, self.mae_se].map(format_g9));
        rec
    }
}

/// Formats like C's `%.9g`.
pub fn format_g9(x: f64) -> String {
    format_g(x, 9)
}

/// `%.{digits}g` formatting: shortest of fixed or exponent form, trailing zeros removed.
pub fn format_g(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let p = digits.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp >= -4 && exp < p as i32 {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(format!("{:.*}", decimals, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip_zeros(mantissa.to_string()), sign, exp.abs())
    }
}

fn strip_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Writes a header plus string records.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let wrap = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Invalid(format!("writing {}: {other:?}", path.display())),
    };
    let mut writer = csv::Writer::from_path(path).map_err(wrap)?;
    writer.write_record(header).map_err(wrap)?;
    for row in rows {
        writer.write_record(row).map_err(wrap)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes rows in the fixed metrics column order.
pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let records: Vec<Vec<String>> = rows.iter().map(MetricsRow::to_record).collect();
    write_table(path, &METRICS_HEADER, &records)
}

/// Writes analytic expected losses for rows that carry them.
pub fn write_expected_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .filter_map(|r| {
            let (mse, mae) = (r.expected_mse?, r.expected_mae?);
            let mut rec = r.key_fields();
            rec.push(format_g9(mse));
            rec.push(format_g9(mae));
            Some(rec)
        })
        .collect();
    write_table(
        path,
        &["dataset", "method", "profile", "snr_db", "fold", "expected_mse", "expected_mae"],
        &records,
    )
}

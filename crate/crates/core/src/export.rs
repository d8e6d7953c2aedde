//! CSV encoding of panels and filter results.
//!
//! Files are UTF-8 with LF line endings, a header row, a 1-based `obs`
//! column, and numbers printed in plain decimal to 10 significant digits.

use crate::error::{Error, Result};
use crate::filters::Bands;
use crate::mathcore::Matrix;
use crate::simulator::SimulatedPanel;

pub const SIGNIFICANT_DIGITS: i32 = 10;

/// Plain-decimal rendering with [`SIGNIFICANT_DIGITS`] significant digits,
/// trailing zeros trimmed.
pub fn format_number(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v.is_infinite() { format!("{v}") } else { "0".into() };
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (SIGNIFICANT_DIGITS - 1 - exponent).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn table(header: &[String], rows: &Matrix) -> String {
    let mut out = String::with_capacity(16 * (rows.nrows() + 1) * (rows.ncols() + 1));
    out.push_str("obs");
    for h in header {
        out.push(',');
        out.push_str(h);
    }
    out.push('\n');
    for (t, row) in rows.row_iter().enumerate() {
        out.push_str(&(t + 1).to_string());
        for v in row.iter() {
            out.push(',');
            out.push_str(&format_number(*v));
        }
        out.push('\n');
    }
    out
}

/// One column per contract, headed `C1..Cm`.
pub fn contracts_csv(values: &Matrix) -> String {
    let header: Vec<String> = (1..=values.ncols()).map(|j| format!("C{j}")).collect();
    table(&header, values)
}

pub fn states_csv(states: &Matrix) -> String {
    table(&["chi".to_string(), "xi".to_string()], states)
}

/// Interleaved `Cj_lower,Cj_upper` columns.
pub fn bands_csv(bands: &Bands) -> String {
    let m = bands.lower.ncols();
    let mut header = Vec::with_capacity(2 * m);
    for j in 1..=m {
        header.push(format!("C{j}_lower"));
        header.push(format!("C{j}_upper"));
    }
    let joined = Matrix::from_fn(bands.lower.nrows(), 2 * m, |t, k| {
        if k % 2 == 0 {
            bands.lower[(t, k / 2)]
        } else {
            bands.upper[(t, k / 2)]
        }
    });
    table(&header, &joined)
}

pub fn prices_csv(panel: &SimulatedPanel) -> String {
    contracts_csv(&panel.prices)
}

pub fn maturities_csv(panel: &SimulatedPanel) -> String {
    contracts_csv(&panel.maturities)
}

/// Parses a table written by this module, dropping the `obs` column.
pub fn parse_csv(text: &str) -> Result<(Vec<String>, Matrix)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::invalid("csv", e.to_string()))?
        .clone();
    if headers.get(0) != Some("obs") || headers.len() < 2 {
        return Err(Error::invalid("csv", "expected an `obs` column followed by data columns"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut values = Vec::new();
    let mut n = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::invalid("csv", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(Error::invalid("csv", format!("row {} has {} fields", line + 1, record.len())));
        }
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::invalid("csv", format!("row {}: bad number `{field}`", line + 1)))?;
            values.push(v);
        }
        n += 1;
    }
    Ok((names.clone(), Matrix::from_row_slice(n, names.len(), &values)))
}

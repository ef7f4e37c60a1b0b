//! Time-series CSV ingestion and emission.

use std::io::Write;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike};
use trendgp::Dataset;

use crate::error::{CliError, CliResult};

/// Fractional year of a calendar timestamp: `year + elapsed / year_length`.
pub fn fractional_year(dt: NaiveDateTime) -> f64 {
    let year = dt.year();
    let days = if NaiveDate::from_ymd_opt(year, 12, 31).is_some_and(|d| d.ordinal() == 366) {
        366.0
    } else {
        365.0
    };
    let secs = dt.num_seconds_from_midnight() as f64 + dt.nanosecond() as f64 * 1e-9;
    year as f64 + (dt.ordinal0() as f64 + secs / 86_400.0) / days
}

pub fn parse_datetime(s: &str) -> Option<NaiveDateTime> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|dt| dt.naive_utc())
}

/// A number, or an ISO-8601 date or datetime converted to a fractional year.
pub fn parse_time(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        Ok(_) => None,
        Err(_) => parse_datetime(s).map(fractional_year),
    }
}

/// Parses a `t,y` table. Rows with a blank `y` are dropped; rows may come in
/// any order but times must be distinct.
pub fn parse_series(bytes: &[u8]) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader.headers().map_err(|e| CliError::parse(format!("cannot read header: {e}")))?;
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (ti, yi) = match (find("t"), find("y")) {
        (Some(t), Some(y)) => (t, y),
        _ => return Err(CliError::parse("input header must contain columns `t` and `y`")),
    };
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| CliError::parse(format!("line {line}: {e}")))?;
        let y = record.get(yi).unwrap_or("");
        if y.is_empty() {
            continue;
        }
        let t_raw = record.get(ti).unwrap_or("");
        let t = parse_time(t_raw).ok_or_else(|| CliError::parse(format!("line {line}: bad time `{t_raw}`")))?;
        let y = y
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::parse(format!("line {line}: bad value `{y}`")))?;
        rows.push((t, y));
    }
    if rows.is_empty() {
        return Err(CliError::parse("input has no observations"));
    }
    Ok(Dataset::from_unsorted(rows)?)
}

/// Writes `t,y` with shortest round-trip float formatting, so that
/// `parse_series` recovers the exact values.
pub fn write_series(data: &Dataset, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "t,y")?;
    for (t, y) in data.ts().iter().zip(data.ys()) {
        writeln!(out, "{t},{y}")?;
    }
    Ok(())
}

/// Parses `a:b` where both ends are times.
pub fn parse_interval(s: &str) -> CliResult<(f64, f64)> {
    let bad = || CliError::parse(format!("interval `{s}` is not of the form a:b"));
    // dates contain no ':' but datetimes do; split at the separator between two times
    let candidates = s.match_indices(':').map(|(i, _)| i);
    for i in candidates {
        if let (Some(a), Some(b)) = (parse_time(&s[..i]), parse_time(&s[i + 1..])) {
            return Ok((a, b));
        }
    }
    Err(bad())
}

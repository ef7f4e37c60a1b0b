//! Italian civil-protection national COVID-19 series: download and
//! normalization to a `t,y` table of daily new positives.

use std::fs;
use std::path::Path;

use chrono::{NaiveDate, SecondsFormat, Utc};
use serde::Serialize;

use crate::args::FetchArgs;
use crate::config::sha256_hex;
use crate::error::{CliError, CliResult, Failure};

pub const DATE_COLUMN: &str = "data";
pub const COUNT_COLUMN: &str = "nuovi_positivi";

#[derive(Debug, Clone, Serialize)]
pub struct FetchProvenance {
    pub source: String,
    pub offline: bool,
    pub retrieved_at: String,
    pub raw_digest: String,
    pub rows: usize,
    pub first_date: Option<String>,
    pub last_date: Option<String>,
}

fn drift(column: &str, message: String) -> CliError {
    CliError {
        kind: Failure::Schema,
        assumption: None,
        column: Some(column.to_string()),
        message,
    }
}

/// Extracts `(date, new positives)` rows, in file order.
pub fn normalize(bytes: &[u8]) -> CliResult<Vec<(NaiveDate, f64)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| CliError::parse(format!("cannot read header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::missing_column(name))
    };
    let di = col(DATE_COLUMN)?;
    let ci = col(COUNT_COLUMN)?;
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| CliError::parse(format!("line {line}: {e}")))?;
        let raw_date = record.get(di).unwrap_or("");
        // `2020-02-24T18:00:00` or `2020-02-24 18:00:00`
        let date = raw_date
            .get(..10)
            .and_then(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").ok())
            .ok_or_else(|| drift(DATE_COLUMN, format!("line {line}: unreadable date `{raw_date}`")))?;
        let raw_count = record.get(ci).unwrap_or("");
        let count: f64 = raw_count
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| drift(COUNT_COLUMN, format!("line {line}: unreadable count `{raw_count}`")))?;
        rows.push((date, count));
    }
    Ok(rows)
}

pub fn to_csv(rows: &[(NaiveDate, f64)]) -> String {
    let mut s = String::from("t,y\n");
    for (d, y) in rows {
        s.push_str(&format!("{},{y}\n", d.format("%Y-%m-%d")));
    }
    s
}

fn download(url: &str) -> CliResult<Vec<u8>> {
    let mut response = ureq::get(url)
        .call()
        .map_err(|e| CliError::network(format!("GET {url}: {e}")))?;
    response
        .body_mut()
        .with_config()
        .limit(64 * 1024 * 1024)
        .read_to_vec()
        .map_err(|e| CliError::network(format!("reading {url}: {e}")))
}

fn sidecar_path(output: &Path) -> std::path::PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    output.with_file_name(name)
}

pub fn run(args: &FetchArgs) -> CliResult<()> {
    let (bytes, source, offline) = match &args.offline {
        Some(path) => (
            fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?,
            path.display().to_string(),
            true,
        ),
        None => (download(&args.url)?, args.url.clone(), false),
    };
    let retrieved_at = Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true);
    let mut rows = normalize(&bytes)?;
    if let Some(days) = args.days {
        rows.truncate(days);
    }
    fs::write(&args.output, to_csv(&rows))?;
    let prov = FetchProvenance {
        source,
        offline,
        retrieved_at,
        raw_digest: sha256_hex(&bytes),
        rows: rows.len(),
        first_date: rows.first().map(|r| r.0.to_string()),
        last_date: rows.last().map(|r| r.0.to_string()),
    };
    let mut json = serde_json::to_string_pretty(&prov).expect("provenance serializes");
    json.push('\n');
    fs::write(sidecar_path(&args.output), json)?;
    eprintln!("wrote {} rows to {}", rows.len(), args.output.display());
    Ok(())
}

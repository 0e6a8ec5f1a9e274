//! CSV ingestion and machine-readable output. Schema violations are reported
//! with their row numbers so archives can be repaired in place.

use crate::CliError;
use clap::ValueEnum;
use ecap::estimator::{AdjustedProbability, ProbabilitySample};
use ecap::evaluation::{ForecastRecord, GroupEc};
use ecap::model::Probability;
use ecap::simulation::{MethodSummary, ReplicateRecord};
use serde::Serialize;
use std::path::Path;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

struct Columns {
    p_tilde: usize,
    z: Option<usize>,
    group: Option<usize>,
    weight: Option<usize>,
}

fn locate_columns(
    path: &Path,
    headers: &csv::StringRecord,
    group_by: Option<&str>,
) -> Result<Columns, CliError> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let p_tilde = find("p_tilde").ok_or_else(|| {
        CliError::config(format!(
            "{}: header must contain a p_tilde column (found: {})",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let group = match group_by {
        Some(col) => Some(find(col).ok_or_else(|| {
            CliError::config(format!("{}: no `{col}` column to group by", path.display()))
        })?),
        None => find("group"),
    };
    Ok(Columns {
        p_tilde,
        z: find("z"),
        group,
        weight: find("weight"),
    })
}

fn parse_probability(field: &str, row: usize, column: &str) -> Result<Probability, CliError> {
    let value: f64 = field
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("row {row}: {column} `{field}` is not a decimal")))?;
    Probability::new(value)
        .map_err(|_| CliError::config(format!("row {row}: {column} {value} is outside [0, 1]")))
}

fn parse_outcome(field: &str, row: usize) -> Result<bool, CliError> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(CliError::config(format!(
            "row {row}: z must be 0 or 1, got `{other}`"
        ))),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Reads estimate rows for fitting and adjusting. Extra columns are ignored.
pub fn read_samples(path: &Path) -> Result<Vec<ProbabilitySample>, CliError> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        .clone();
    let cols = locate_columns(path, &headers, None)?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // header is row 1
        let record = record.map_err(|e| CliError::config(format!("row {row}: {e}")))?;
        let p_tilde = parse_probability(&record[cols.p_tilde], row, "p_tilde")?;
        let outcome = match cols.z {
            Some(z) if !record[z].trim().is_empty() => Some(parse_outcome(&record[z], row)?),
            _ => None,
        };
        out.push(ProbabilitySample {
            p_tilde,
            outcome,
            p_true: None,
        });
    }
    Ok(out)
}

/// Reads forecast rows for evaluation; outcomes are mandatory there.
pub fn read_forecasts(
    path: &Path,
    group_by: Option<&str>,
) -> Result<Vec<ForecastRecord>, CliError> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        .clone();
    let cols = locate_columns(path, &headers, group_by)?;
    let z_col = cols.z.ok_or_else(|| {
        CliError::config(format!("{}: evaluation needs a z column", path.display()))
    })?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| CliError::config(format!("row {row}: {e}")))?;
        let p_tilde = parse_probability(&record[cols.p_tilde], row, "p_tilde")?;
        let outcome = parse_outcome(&record[z_col], row)?;
        let group = match (group_by, cols.group) {
            (Some(_), Some(g)) => Some(record[g].trim().to_string()),
            _ => None,
        };
        let weight = match cols.weight {
            Some(w) if !record[w].trim().is_empty() => {
                let value: f64 = record[w]
                    .trim()
                    .parse()
                    .map_err(|_| CliError::config(format!("row {row}: weight is not a decimal")))?;
                if !(value > 0.0) {
                    return Err(CliError::config(format!(
                        "row {row}: weight must be positive"
                    )));
                }
                Some(value)
            }
            _ => None,
        };
        out.push(ForecastRecord {
            p_tilde,
            outcome,
            group,
            weight,
        });
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io("writing output", e))
}

fn to_json<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    serde_json::to_string_pretty(rows)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::config(format!("serializing output: {e}")))
}

fn csv_from_rows(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_adjusted(
    path: &Path,
    rows: &[AdjustedProbability],
    format: OutputFormat,
) -> Result<(), CliError> {
    let text = match format {
        OutputFormat::Json => to_json(rows)?,
        OutputFormat::Csv => csv_from_rows(
            &["p_tilde", "p_hat", "mu_hat", "sigma2_hat", "flipped"],
            rows.iter()
                .map(|r| {
                    vec![
                        r.p_tilde.value().to_string(),
                        r.p_hat.value().to_string(),
                        r.mu_hat.to_string(),
                        r.sigma2_hat.to_string(),
                        (r.flipped as u8).to_string(),
                    ]
                })
                .collect(),
        ),
    };
    write_text(path, &text)
}

pub fn write_summaries(
    path: &Path,
    summaries: &[MethodSummary],
    format: OutputFormat,
) -> Result<(), CliError> {
    let text = match format {
        OutputFormat::Json => to_json(summaries)?,
        OutputFormat::Csv => csv_from_rows(
            &["method", "mean_ec2", "se", "replicates"],
            summaries
                .iter()
                .map(|s| {
                    vec![
                        s.method.to_string(),
                        s.mean_ec2.to_string(),
                        s.se.map(|v| v.to_string()).unwrap_or_default(),
                        s.replicates.to_string(),
                    ]
                })
                .collect(),
        ),
    };
    write_text(path, &text)
}

pub fn write_records(
    path: &Path,
    records: &[ReplicateRecord],
    format: OutputFormat,
) -> Result<(), CliError> {
    let text = match format {
        OutputFormat::Json => to_json(records)?,
        OutputFormat::Csv => csv_from_rows(
            &[
                "replicate",
                "method",
                "mean_ec2",
                "gamma_hat",
                "theta_hat",
                "c_hat",
                "error",
            ],
            records
                .iter()
                .map(|r| {
                    vec![
                        r.replicate.to_string(),
                        r.method.to_string(),
                        r.mean_ec2.map(|v| v.to_string()).unwrap_or_default(),
                        r.gamma_hat.map(|v| v.to_string()).unwrap_or_default(),
                        r.theta_hat.map(|v| v.to_string()).unwrap_or_default(),
                        r.c_hat.map(|v| v.to_string()).unwrap_or_default(),
                        r.error
                            .as_deref()
                            .map(|e| format!("\"{}\"", e.replace('"', "'")))
                            .unwrap_or_default(),
                    ]
                })
                .collect(),
        ),
    };
    write_text(path, &text)
}

pub fn write_ec_curve(
    path: &Path,
    curve: &[GroupEc],
    format: OutputFormat,
) -> Result<(), CliError> {
    let text = match format {
        OutputFormat::Json => to_json(curve)?,
        OutputFormat::Csv => csv_from_rows(
            &["group", "ec", "lo", "hi", "n_delta"],
            curve
                .iter()
                .map(|g| {
                    vec![
                        g.key.clone(),
                        g.ec.map(|v| v.to_string()).unwrap_or_default(),
                        g.lo.map(|v| v.to_string()).unwrap_or_default(),
                        g.hi.map(|v| v.to_string()).unwrap_or_default(),
                        g.n_delta.to_string(),
                    ]
                })
                .collect(),
        ),
    };
    write_text(path, &text)
}

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{HarnessError, MatrixTable, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(HarnessError::Usage(format!("unknown format `{other}` (json or csv)"))),
        }
    }
}

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, File), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_err(&path))?;
    Ok((path, file))
}

fn write_json<T: serde::Serialize>(value: &T, dir: &Path, name: &str) -> Result<PathBuf, HarnessError> {
    let (path, file) = create(dir, name)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| HarnessError::Json {
        path: path.clone(),
        source,
    })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(&path))?;
    Ok(path)
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: Vec<Vec<String>>) -> Result<PathBuf, HarnessError> {
    let (path, file) = create(dir, name)?;
    let csv_err = |source| HarnessError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

/// Writes `report.json` (full report) or `samples.csv` (time series) into `dir`.
pub fn emit_report(report: &RunReport, format: Format, dir: &Path) -> Result<PathBuf, HarnessError> {
    match format {
        Format::Json => write_json(report, dir, "report.json"),
        Format::Csv => {
            let mut header = vec!["time".to_string(), "phase".into(), "source".into()];
            for prefix in ["truth", "truth_v", "eus", "ref"] {
                for axis in ["x", "y", "z"] {
                    header.push(format!("{prefix}_{axis}"));
                }
            }
            header.extend(["truth_tilt".into(), "eus_altitude".into()]);
            header.extend((0..4).map(|i| format!("thrust_{i}")));
            let rows = report
                .samples
                .iter()
                .map(|s| {
                    let mut row = vec![num(s.time), format!("{:?}", s.phase), format!("{:?}", s.source)];
                    for v in [s.truth_position, s.truth_velocity, s.eus_position, s.reference] {
                        row.extend(v.iter().copied().map(num));
                    }
                    row.push(num(s.truth_tilt));
                    row.push(num(s.eus_altitude));
                    row.extend(s.thrusts.iter().copied().map(num));
                    row
                })
                .collect();
            write_csv(dir, "samples.csv", &header, rows)
        }
    }
}

/// Writes `matrix.json` or `matrix.csv` (one row per scenario and set) into `dir`.
pub fn emit_table(table: &MatrixTable, format: Format, dir: &Path) -> Result<PathBuf, HarnessError> {
    match format {
        Format::Json => write_json(table, dir, "matrix.json"),
        Format::Csv => {
            let constraints: Vec<String> = table
                .rows
                .first()
                .map(|r| r.violation_rate.keys().cloned().collect())
                .unwrap_or_default();
            let mut header = vec!["scenario".to_string(), "mitigation_set".into(), "runs".into()];
            header.extend(constraints.iter().map(|c| format!("rate_{c}")));
            header.extend(
                [
                    "touchdowns",
                    "mean_landing_error",
                    "mean_touchdown_time",
                    "mean_pad_estimate_error",
                    "post_touchdown_thrust_runs",
                ]
                .map(String::from),
            );
            let rows = table
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![r.scenario.clone(), r.mitigation_set.clone(), r.runs.to_string()];
                    row.extend(constraints.iter().map(|c| num(r.violation_rate[c])));
                    row.extend([
                        r.touchdowns.to_string(),
                        opt(r.mean_landing_error),
                        opt(r.mean_touchdown_time),
                        opt(r.mean_pad_estimate_error),
                        r.post_touchdown_thrust_runs.to_string(),
                    ]);
                    row
                })
                .collect();
            write_csv(dir, "matrix.csv", &header, rows)
        }
    }
}

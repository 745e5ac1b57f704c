//! CSV files with a mandatory header row. Floats carry 17 significant
//! digits so that every value survives a write/read cycle exactly.

use std::path::Path;

use ionmirror::counts::{CountBin, CountRecord};
use ionmirror::estimation::Observation;

use crate::error::CliError;

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// A parsed CSV file addressed by column name.
pub struct Table {
    path: String,
    pub header: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let io = |e: csv::Error| CliError::io(path, e);
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(io)?;
        let header = r.headers().map_err(io)?.iter().map(String::from).collect();
        let rows = r.records().collect::<Result<_, _>>().map_err(io)?;
        Ok(Table {
            path: path.display().to_string(),
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize, CliError> {
        self.column(name)
            .ok_or_else(|| self.error(0, format!("missing column `{name}`")))
    }

    fn error(&self, row: usize, message: String) -> CliError {
        let at = if row == 0 { String::new() } else { format!(" row {row}") };
        CliError::io(Path::new(&self.path), format!("{}{at}", message))
    }

    pub fn parse<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T, CliError> {
        let raw = self.rows[row].get(col).unwrap_or("");
        raw.parse().map_err(|_| {
            self.error(
                row + 1,
                format!("cannot parse `{raw}` in column `{}`", self.header[col]),
            )
        })
    }

    pub fn floats(&self, col: usize) -> Result<Vec<f64>, CliError> {
        (0..self.rows.len()).map(|r| self.parse(r, col)).collect()
    }
}

pub fn write_count_record(path: &Path, rec: &CountRecord) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = rec
        .bins
        .iter()
        .map(|b| vec![float(b.t), float(b.psi), b.green.to_string(), b.red.to_string()])
        .collect();
    write_csv(path, &["t_s", "psi_rad", "green_counts", "red_counts"], &rows)
}

pub fn read_count_record(path: &Path, bin_duration: f64) -> Result<CountRecord, CliError> {
    let table = Table::read(path)?;
    let (t, psi) = (table.require("t_s")?, table.require("psi_rad")?);
    let (green, red) = (table.require("green_counts")?, table.require("red_counts")?);
    let bins = (0..table.rows.len())
        .map(|r| {
            Ok(CountBin {
                t: table.parse(r, t)?,
                psi: table.parse(r, psi)?,
                green: table.parse(r, green)?,
                red: table.parse(r, red)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    CountRecord::new(bin_duration, bins).map_err(|e| CliError::io(path, e))
}

/// Fit data: the first column is the abscissa and the second the ordinate.
/// An optional `sigma` column gives the errors, otherwise they are
/// `relative_sigma · |y|`. Rows whose `status` is not `ok` are skipped.
pub fn read_observations(path: &Path, relative_sigma: f64) -> Result<Vec<Observation>, CliError> {
    let table = Table::read(path)?;
    if table.header.len() < 2 {
        return Err(CliError::io(path, "need at least two columns"));
    }
    let y = 1;
    let sigma = table.column("sigma");
    let status = table.column("status");
    let mut out = Vec::new();
    for r in 0..table.rows.len() {
        if let Some(s) = status {
            if table.rows[r].get(s) != Some("ok") {
                continue;
            }
        }
        let xv: f64 = table.parse(r, 0)?;
        let yv: f64 = table.parse(r, y)?;
        let sv = match sigma {
            Some(c) => table.parse(r, c)?,
            None => relative_sigma * yv.abs(),
        };
        if !(sv > 0.0 && sv.is_finite() && xv.is_finite() && yv.is_finite()) {
            return Err(table.error(r + 1, format!("needs finite values and sigma > 0, got sigma {sv}")));
        }
        out.push(Observation::new(xv, yv, sv));
    }
    if out.is_empty() {
        return Err(CliError::io(path, "no usable rows"));
    }
    Ok(out)
}

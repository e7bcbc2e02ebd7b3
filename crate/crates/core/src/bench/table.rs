use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] =
    ["method", "sweep_value", "rmse_deg", "crb_deg", "runtime_s", "runtime_std_s", "trials", "seed"];

const MISSING: &str = "NA";

/// One line of a benchmark table. Missing quantities are written as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub method: String,
    pub sweep_value: f64,
    pub rmse_deg: Option<f64>,
    pub crb_deg: Option<f64>,
    pub runtime_s: Option<f64>,
    pub runtime_std_s: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RmseTable {
    pub rows: Vec<RmseRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| x.to_string())
}

fn parse_opt(field: &str, line: usize, s: &str) -> Result<Option<f64>> {
    if s == MISSING {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Format(format!("row {line}: {field} = {s:?} is not a number")))
}

impl RmseTable {
    /// Rows for one method, in sweep order.
    pub fn method(&self, name: &str) -> Vec<&RmseRow> {
        self.rows.iter().filter(|r| r.method == name).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for r in &self.rows {
            out.write_record([
                r.method.clone(),
                r.sweep_value.to_string(),
                opt(r.rmse_deg),
                opt(r.crb_deg),
                opt(r.runtime_s),
                opt(r.runtime_std_s),
                r.trials.to_string(),
                r.seed.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Parses a table written by [`RmseTable::write_csv`].
pub fn read_csv<R: Read>(r: R) -> Result<RmseTable> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let f = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize| {
            f(j).parse::<f64>()
                .map_err(|_| Error::Format(format!("row {line}: {} = {:?} is not a number", CSV_HEADER[j], f(j))))
        };
        rows.push(RmseRow {
            method: f(0).to_string(),
            sweep_value: num(1)?,
            rmse_deg: parse_opt("rmse_deg", line, f(2))?,
            crb_deg: parse_opt("crb_deg", line, f(3))?,
            runtime_s: parse_opt("runtime_s", line, f(4))?,
            runtime_std_s: parse_opt("runtime_std_s", line, f(5))?,
            trials: f(6).parse().map_err(|_| Error::Format(format!("row {line}: bad trial count")))?,
            seed: f(7).parse().map_err(|_| Error::Format(format!("row {line}: bad seed")))?,
        });
    }
    Ok(RmseTable { rows })
}

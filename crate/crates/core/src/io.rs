//! CSV ingestion and export of analysis datasets.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Dataset;
use crate::marginals::{Design, Family};

/// Which CSV columns play which role. W1 excludes the intercept, which is
/// always prepended on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub x: String,
    pub m: String,
    pub y: String,
    #[serde(default)]
    pub w1: Vec<String>,
    #[serde(default)]
    pub w2: Vec<String>,
}

impl ColumnRoles {
    pub fn new(x: &str, m: &str, y: &str, w1: &[&str], w2: &[&str]) -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self { x: x.into(), m: m.into(), y: y.into(), w1: own(w1), w2: own(w2) }
    }

    /// All role columns in (x, m, y, w1…, w2…) order.
    pub fn columns(&self) -> Vec<&str> {
        let mut c = vec![self.x.as_str(), self.m.as_str(), self.y.as_str()];
        c.extend(self.w1.iter().map(String::as_str));
        c.extend(self.w2.iter().map(String::as_str));
        c
    }

    pub fn validate(&self) -> Result<()> {
        let cols = self.columns();
        for (i, c) in cols.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::Invalid("column role names must be non-empty".into()));
            }
            if cols[..i].contains(c) {
                return Err(Error::Invalid(format!("column `{c}` is assigned to more than one role")));
            }
        }
        Ok(())
    }
}

/// Reads a dataset from a CSV file with a header row.
pub fn load_csv(path: impl AsRef<Path>, roles: &ColumnRoles, families: [Family; 3]) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_csv(file, roles, families)
}

/// Reads a dataset from CSV text. Rows in errors are 1-based data rows,
/// not counting the header.
pub fn read_csv(input: impl Read, roles: &ColumnRoles, families: [Family; 3]) -> Result<Dataset> {
    roles.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let names = roles.columns();
    let index: Vec<usize> = names
        .iter()
        .map(|c| header.iter().position(|h| h.trim() == *c).ok_or_else(|| Error::MissingColumn(c.to_string())))
        .collect::<Result<_>>()?;

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (k, &j) in index.iter().enumerate() {
            let cell = record.get(j).unwrap_or("").trim();
            let parse = |message: String| Error::Parse { row, column: names[k].to_string(), message };
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(parse("missing value".into()));
            }
            let v: f64 = cell.parse().map_err(|_| parse(format!("`{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse(format!("`{cell}` is not finite")));
            }
            if k < 3 {
                families[k].check_support(v).map_err(|e| match e {
                    Error::Support { family, value, .. } => Error::Support {
                        family,
                        value,
                        location: Some(format!("row {row}, column `{}`", names[k])),
                    },
                    other => other,
                })?;
            }
            cols[k].push(v);
        }
    }
    let n = cols[0].len();
    if n == 0 {
        return Err(Error::Invalid("CSV has no data rows".into()));
    }
    let p1 = roles.w1.len() + 1;
    let mut w1 = Vec::with_capacity(n * p1);
    let mut w2 = Vec::with_capacity(n * roles.w2.len());
    for i in 0..n {
        w1.push(1.0);
        w1.extend((0..roles.w1.len()).map(|j| cols[3 + j][i]));
        w2.extend((0..roles.w2.len()).map(|j| cols[3 + roles.w1.len() + j][i]));
    }
    let mut it = cols.into_iter();
    let (x, m, y) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    Dataset::new(
        x,
        m,
        y,
        Design::from_row_major(n, p1, w1)?,
        Design::from_row_major(n, roles.w2.len(), w2)?,
    )
}

/// Writes a dataset as CSV under `roles`, dropping the intercept. Values
/// use the shortest representation that parses back to the same float.
pub fn write_csv(out: impl Write, data: &Dataset, roles: &ColumnRoles) -> Result<()> {
    roles.validate()?;
    if roles.w1.len() + 1 != data.w1.ncols() || roles.w2.len() != data.w2.ncols() {
        return Err(Error::Invalid("column roles do not match the dataset's covariate widths".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(roles.columns())?;
    for i in 0..data.n() {
        let mut rec = vec![data.x[i].to_string(), data.m[i].to_string(), data.y[i].to_string()];
        rec.extend(data.w1.row(i)[1..].iter().map(f64::to_string));
        rec.extend(data.w2.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Default role names for generated data: x, m, y, w11…, w21….
pub fn default_roles(p1: usize, p2: usize) -> ColumnRoles {
    ColumnRoles {
        x: "x".into(),
        m: "m".into(),
        y: "y".into(),
        w1: (1..p1).map(|j| format!("w1{j}")).collect(),
        w2: (1..=p2).map(|j| format!("w2{j}")).collect(),
    }
}

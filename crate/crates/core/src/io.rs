//! CSV ingestion and export of datasets.

use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::format::sig9;
use crate::model::Dataset;

/// Which CSV column holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    /// 0-based.
    Index(usize),
}

impl FromStr for ResponseColumn {
    type Err = Error;

    /// Positive integers are 1-based column numbers, anything else a name.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.parse::<usize>() {
            Ok(0) => Err(Error::Input("column numbers start at 1".into())),
            Ok(k) => Ok(ResponseColumn::Index(k - 1)),
            Err(_) if s.is_empty() => Err(Error::Input("empty response column".into())),
            Err(_) => Ok(ResponseColumn::Name(s.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub has_header: bool,
    pub response: ResponseColumn,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: true,
            response: ResponseColumn::Index(0),
        }
    }
}

/// Parse a numeric CSV. Rows in error messages count physical lines
/// (the header is line 1 when present); columns are 1-based.
pub fn read_dataset<R: Read>(reader: R, options: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Option<Vec<String>> = if options.has_header {
        let h = rdr.headers().map_err(|e| csv_error(e, 1))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let first_line = if options.has_header { 2 } else { 1 };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = header.as_ref().map(Vec::len);
    for (i, record) in rdr.records().enumerate() {
        let line = first_line + i;
        let record = record.map_err(|e| csv_error(e, line))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                row: line,
                column: record.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        let mut values = Vec::with_capacity(w);
        for (k, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: k + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            values.push(v);
        }
        rows.push(values);
    }

    let width = width.unwrap_or(0);
    if rows.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    if width < 2 {
        return Err(Error::Input("need a response and at least one covariate column".into()));
    }
    let response_col = match &options.response {
        ResponseColumn::Index(k) if *k < width => *k,
        ResponseColumn::Index(k) => {
            return Err(Error::Input(format!("response column {} out of range 1..{width}", k + 1)))
        }
        ResponseColumn::Name(name) => match &header {
            Some(h) => h
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Input(format!("unknown column {name:?}")))?,
            None => {
                return Err(Error::Input(format!(
                    "response named {name:?} but the file has no header"
                )))
            }
        },
    };
    let covariates: Vec<usize> = (0..width).filter(|&k| k != response_col).collect();
    let n = rows.len();
    let design = DMatrix::from_fn(n, covariates.len(), |i, j| rows[i][covariates[j]]);
    let response = DVector::from_fn(n, |i, _| rows[i][response_col]);
    let names = header.map(|h| covariates.iter().map(|&k| h[k].clone()).collect());
    Dataset::new(design, response, names)
}

pub fn read_dataset_path(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    read_dataset(file, options)
}

fn csv_error(e: csv::Error, line: usize) -> Error {
    let row = e.position().map_or(line, |p| p.line() as usize);
    Error::Parse {
        row,
        column: 1,
        message: e.to_string(),
    }
}

/// Response first, then the covariates. With `header`, the first line is
/// `y,<column names>`.
pub fn dataset_to_csv(dataset: &Dataset, header: bool) -> String {
    let mut out = String::new();
    if header {
        out.push('y');
        for name in dataset.column_names() {
            out.push(',');
            out.push_str(&name);
        }
        out.push('\n');
    }
    let x = dataset.design();
    let y = dataset.response();
    for i in 0..dataset.n() {
        out.push_str(&format!("{:?}", y[i]));
        for j in 0..dataset.p() {
            out.push(',');
            out.push_str(&format!("{:?}", x[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// `name,value` lines for a coefficient vector.
pub fn coefficients_csv(names: &[String], beta: &[f64]) -> String {
    let mut out = String::from("name,value\n");
    for (name, b) in names.iter().zip(beta) {
        out.push_str(&format!("{name},{}\n", sig9(*b)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, header: bool, response: &str) -> Result<Dataset> {
        read_dataset(
            text.as_bytes(),
            &CsvOptions {
                has_header: header,
                response: response.parse()?,
            },
        )
    }

    #[test]
    fn header_names_and_response_by_name() {
        let d = read("a,y,b\n1,2,3\n4,5,6\n", true, "y").unwrap();
        assert_eq!(d.column_names(), vec!["a", "b"]);
        assert_eq!(d.response().as_slice(), &[2.0, 5.0]);
        assert_eq!(d.design()[(1, 1)], 6.0);
    }

    #[test]
    fn headerless_defaults_to_beta_names() {
        let d = read("2,1,3\n5,4,6\n", false, "1").unwrap();
        assert!(!d.has_names());
        assert_eq!(d.column_names(), vec!["beta1", "beta2"]);
        assert_eq!(d.design()[(0, 0)], 1.0);
    }

    #[test]
    fn parse_error_has_coordinates() {
        match read("y,x\n1,2\n3,abc\n", true, "y") {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_column() {
        assert!(matches!(read("y,x\n1,2\n", true, "z"), Err(Error::Input(_))));
        assert!(matches!(read("1,2\n", false, "y"), Err(Error::Input(_))));
    }

    #[test]
    fn round_trip() {
        let d = read("y,u,v\n1.5,2,3\n4,5e-3,-6\n", true, "y").unwrap();
        let text = dataset_to_csv(&d, true);
        let back = read(&text, true, "y").unwrap();
        assert_eq!(d, back);
    }
}

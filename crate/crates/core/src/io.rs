//! Delimited text input and output for dense matrices.
//!
//! Rows are features and columns are samples. A header row and a leading
//! row-ID column are detected automatically unless the caller says otherwise.
//! Missing values are rejected, never imputed.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// Parse settings; `None` means detect.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    pub delimiter: Option<u8>,
    pub header: Option<bool>,
    pub row_ids: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub matrix: DataMatrix,
    pub column_names: Option<Vec<String>>,
    pub row_ids: Option<Vec<String>>,
}

const MISSING: [&str; 6] = ["", "NA", "NaN", "nan", "N/A", "null"];

fn parse_number(cell: &str) -> Option<f64> {
    let t = cell.trim();
    if MISSING.contains(&t) {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn detect_delimiter(first_line: &str) -> u8 {
    if first_line.contains('\t') {
        b'\t'
    } else if !first_line.contains(',') && first_line.contains(';') {
        b';'
    } else {
        b','
    }
}

pub fn read_table_from<R: Read>(reader: R, opts: &ParseOptions) -> Result<Table> {
    let mut text = String::new();
    BufReader::new(reader).read_to_string(&mut text)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "empty input".into(),
    })?;
    let delimiter = opts.delimiter.unwrap_or_else(|| detect_delimiter(first));

    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records: Vec<(usize, Vec<String>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            column: 0,
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(records.len() + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push((line, rec.iter().map(str::to_owned).collect()));
    }
    if records.is_empty() {
        return Err(Error::Parse { line: 1, column: 1, message: "empty input".into() });
    }

    let header = opts
        .header
        .unwrap_or_else(|| records[0].1.iter().skip(1).any(|c| parse_number(c).is_none()));
    let data_start = usize::from(header);
    if records.len() <= data_start {
        let line = records[0].0;
        return Err(Error::Parse { line, column: 1, message: "no data rows".into() });
    }
    let row_ids = opts
        .row_ids
        .unwrap_or_else(|| records[data_start..].iter().any(|(_, r)| parse_number(&r[0]).is_none()));
    let skip = usize::from(row_ids);

    let width = records[data_start].1.len();
    if width <= skip {
        let line = records[data_start].0;
        return Err(Error::Parse { line, column: 1, message: "no numeric columns".into() });
    }
    let n = width - skip;
    let m = records.len() - data_start;
    let mut values = Vec::with_capacity(m * n);
    let mut ids = Vec::new();
    for (line, rec) in &records[data_start..] {
        if rec.len() != width {
            return Err(Error::Parse {
                line: *line,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        if row_ids {
            ids.push(rec[0].clone());
        }
        for (c, cell) in rec.iter().enumerate().skip(skip) {
            let v = parse_number(cell).ok_or_else(|| Error::Parse {
                line: *line,
                column: c + 1,
                message: if MISSING.contains(&cell.as_str()) {
                    format!("missing value {cell:?}")
                } else {
                    format!("non-numeric value {cell:?}")
                },
            })?;
            values.push(v);
        }
    }

    let column_names = if header {
        let names = &records[0].1;
        let expected = if names.len() == width { &names[skip..] } else { &names[..] };
        if expected.len() != n {
            return Err(Error::Parse {
                line: records[0].0,
                column: 1,
                message: format!("header has {} fields but rows have {width}", names.len()),
            });
        }
        Some(expected.to_vec())
    } else {
        None
    };
    let matrix = DataMatrix::new(DMatrix::from_row_slice(m, n, &values))?;
    Ok(Table { matrix, column_names, row_ids: row_ids.then_some(ids) })
}

pub fn read_table(path: &Path, opts: &ParseOptions) -> Result<Table> {
    let mut opts = *opts;
    if opts.delimiter.is_none() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv")) {
        opts.delimiter = Some(b'\t');
    }
    read_table_from(File::open(path)?, &opts)
}

/// Writes a matrix as delimited text. Values use the shortest decimal form that
/// parses back to the same `f64`.
pub fn write_matrix<W: Write>(
    out: W,
    x: &DMatrix<f64>,
    column_names: Option<&[String]>,
    row_ids: Option<&[String]>,
    delimiter: u8,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    if let Some(names) = column_names {
        let mut head: Vec<&str> = Vec::new();
        if row_ids.is_some() {
            head.push("id");
        }
        head.extend(names.iter().map(String::as_str));
        w.write_record(&head).map_err(csv_err)?;
    }
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = Vec::with_capacity(x.ncols() + 1);
        if let Some(ids) = row_ids {
            rec.push(ids[i].clone());
        }
        rec.extend(x.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per record under a header.
pub fn write_rows<W: Write>(out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Column membership in two groups: `false` for the first, `true` for the second.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Groups {
    pub labels: Vec<bool>,
    pub names: [String; 2],
}

impl Groups {
    /// The first `n1` columns form group one, the next `n2` group two.
    pub fn contiguous(n1: usize, n2: usize) -> Self {
        Groups {
            labels: (0..n1 + n2).map(|j| j >= n1).collect(),
            names: ["1".into(), "2".into()],
        }
    }

    pub fn sizes(&self) -> (usize, usize) {
        let n2 = self.labels.iter().filter(|&&g| g).count();
        (self.labels.len() - n2, n2)
    }

    pub fn check_columns(&self, n: usize) -> Result<()> {
        if self.labels.len() != n {
            return Err(Error::invalid(format!(
                "groups cover {} columns but the matrix has {n}",
                self.labels.len()
            )));
        }
        let (n1, n2) = self.sizes();
        if n1 == 0 || n2 == 0 {
            return Err(Error::invalid("both groups need at least one column"));
        }
        Ok(())
    }
}

/// Parses `"n1,n2"`.
pub fn parse_group_sizes(spec: &str) -> Result<Groups> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let sizes: Vec<usize> = parts.iter().filter_map(|p| p.parse().ok()).collect();
    match sizes.as_slice() {
        [a, b] if parts.len() == 2 && *a > 0 && *b > 0 => Ok(Groups::contiguous(*a, *b)),
        _ => Err(Error::invalid(format!("groups must be given as n1,n2 with both positive, got {spec:?}"))),
    }
}

/// Reads a sidecar file with one group label per column, separated by
/// newlines, commas, tabs or spaces. Exactly two distinct labels are allowed;
/// the first one seen becomes group one.
pub fn read_groups_from<R: Read>(reader: R) -> Result<Groups> {
    let mut labels = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        for (c, tok) in line
            .split(|ch: char| ch == ',' || ch.is_whitespace())
            .filter(|t| !t.is_empty())
            .enumerate()
        {
            let idx = match names.iter().position(|n| n == tok) {
                Some(k) => k,
                None if names.len() < 2 => {
                    names.push(tok.to_owned());
                    names.len() - 1
                }
                None => {
                    return Err(Error::Parse {
                        line: i + 1,
                        column: c + 1,
                        message: format!("third group label {tok:?}; only two groups are supported"),
                    })
                }
            };
            labels.push(idx == 1);
        }
    }
    if names.len() != 2 {
        return Err(Error::Parse { line: 1, column: 1, message: "group file must contain two distinct labels".into() });
    }
    let [a, b]: [String; 2] = names.try_into().expect("two names");
    Ok(Groups { labels, names: [a, b] })
}

pub fn read_groups(path: &Path) -> Result<Groups> {
    read_groups_from(File::open(path)?)
}

//! Plain CSV writers and readers. Floats use Rust's shortest round-trip
//! formatting, so output never depends on the locale and re-reading is exact.

use std::fmt::Write as _;

use crate::error::{domain, Result};
use crate::montecarlo::EmpiricalHistogram;
use crate::optimizer::{CalibrationCurve, CalibrationSet, Quantity};

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes a header row and one row per record.
pub fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub fn pmf_csv(pmf: &[f64]) -> String {
    table(&["n", "pmf"], pmf.iter().enumerate().map(|(n, p)| vec![n.to_string(), num(*p)]))
}

pub fn histogram_csv(h: &EmpiricalHistogram) -> String {
    let class = h.class.to_string();
    table(
        &["n", "pmf_estimate", "stderr", "class"],
        h.pmf.iter().zip(&h.stderr).enumerate().map(|(n, (p, e))| vec![n.to_string(), num(*p), num(*e), class.clone()]),
    )
}

/// Grid plane with control values down the rows and column values across.
pub fn plane_csv(controls: &[f64], columns: &[f64], plane: &[Vec<Option<f64>>]) -> String {
    let mut header = vec!["control".to_string()];
    header.extend(columns.iter().map(|c| num(*c)));
    let mut s = header.join(",");
    s.push('\n');
    for (c, row) in controls.iter().zip(plane) {
        let _ = write!(s, "{}", num(*c));
        for v in row {
            let _ = write!(s, ",{}", opt(*v));
        }
        s.push('\n');
    }
    s
}

pub fn f(x: f64) -> String {
    num(x)
}

pub fn f_opt(x: Option<f64>) -> String {
    opt(x)
}

/// Parsed CSV: header and rows of raw fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header: Vec<String> = match lines.next() {
            Some(h) => h.split(',').map(|s| s.trim().to_string()).collect(),
            None => return domain("CSV has no header row"),
        };
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let row: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
            if row.len() != header.len() {
                return domain(format!("CSV row {} has {} fields, header has {}", i + 2, row.len(), header.len()));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        match self.header.iter().position(|h| h == name) {
            Some(i) => Ok(i),
            None => domain(format!("CSV has no column `{name}`")),
        }
    }

    /// Numeric column; empty fields read as NaN.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let v = &r[k];
                if v.is_empty() {
                    return Ok(f64::NAN);
                }
                v.parse::<f64>().or_else(|_| domain(format!("CSV column `{name}` row {}: `{v}` is not a number", i + 2)))
            })
            .collect()
    }
}

/// Reads a calibration table with columns
/// `control,gamma_0,gamma_1,lambda_0,lambda_1`.
pub fn read_calibration(text: &str) -> Result<CalibrationSet> {
    let csv = Csv::parse(text)?;
    let control = csv.column("control")?;
    let curves = Quantity::ALL
        .iter()
        .map(|&q| {
            let ys = csv.column(&q.to_string())?;
            CalibrationCurve::new(q, control.iter().copied().zip(ys).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    CalibrationSet::new(curves)
}

pub fn calibration_csv(set: &CalibrationSet) -> String {
    let knots = set.curve(Quantity::Gamma0).knots();
    let header: Vec<String> = std::iter::once("control".to_string()).chain(Quantity::ALL.iter().map(|q| q.to_string())).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    table(
        &header,
        knots.iter().enumerate().map(|(i, &(x, _))| {
            let mut r = vec![num(x)];
            r.extend(Quantity::ALL.iter().map(|&q| num(set.curve(q).knots()[i].1)));
            r
        }),
    )
}

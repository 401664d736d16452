//! Delimited-text datasets, standardization, the bundled benchmark data and
//! projection exports for plotting.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ecm::FitResult;
use crate::{Error, Result};

/// Environment variable overriding the directory of the bundled datasets.
pub const DATA_DIR_ENV: &str = "MJGHD_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Sample standard deviations (divisor `n − 1`).
    pub sds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub label_column: Option<String>,
    /// Rows dropped at load because of missing cells.
    pub rejected_rows: usize,
    pub standardization: Option<Standardization>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n × p`, one observation per row.
    pub matrix: DMatrix<f64>,
    pub feature_names: Vec<String>,
    pub labels: Option<Vec<String>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub header: bool,
    /// Header name of the label column, or its zero-based index when the
    /// file has no header.
    pub label_column: Option<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            header: true,
            label_column: None,
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "?")
}

pub fn load_delimited(path: &Path, options: &LoadOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut ds = read_delimited(file, options)?;
    ds.provenance.source = path.display().to_string();
    Ok(ds)
}

/// As [`load_delimited`], from any reader. Rows and columns in errors are
/// one-based and count the header line.
pub fn read_delimited<R: Read>(input: R, options: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();

    let first = match records.next() {
        Some(r) => Some(r?),
        None => None,
    };
    let width = first.as_ref().map_or(0, |r| r.len());
    let (names, mut pending) = if options.header {
        let names: Vec<String> = first.iter().flat_map(|r| r.iter().map(str::to_string)).collect();
        (names, None)
    } else {
        ((0..width).map(|k| format!("x{}", k + 1)).collect(), first)
    };

    let label_idx = match &options.label_column {
        None => None,
        Some(name) => Some(
            names
                .iter()
                .position(|n| n == name)
                .or_else(|| if options.header { None } else { name.parse().ok() })
                .filter(|&k| k < width)
                .ok_or_else(|| Error::Data(format!("label column '{name}' not found")))?,
        ),
    };
    let feature_names: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|&(k, _)| Some(k) != label_idx)
        .map(|(_, n)| n.clone())
        .collect();
    let p = feature_names.len();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rejected = 0;
    let mut line = usize::from(options.header);
    loop {
        let record = match pending.take() {
            Some(r) => r,
            None => match records.next() {
                Some(r) => r?,
                None => break,
            },
        };
        line += 1;
        let mut row = Vec::with_capacity(p);
        let mut missing = false;
        for (k, cell) in record.iter().enumerate() {
            if Some(k) == label_idx {
                continue;
            }
            if is_missing(cell) {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: k + 1,
                message: format!("non-numeric cell '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: k + 1,
                    message: format!("non-finite value '{cell}'"),
                });
            }
            row.push(v);
        }
        let label = label_idx.map(|k| record.get(k).unwrap_or("").to_string());
        if missing || label.as_deref().is_some_and(is_missing) {
            rejected += 1;
            continue;
        }
        values.extend(row);
        if let Some(l) = label {
            labels.push(l);
        }
    }
    let n = if p == 0 { 0 } else { values.len() / p };
    Ok(Dataset {
        matrix: DMatrix::from_row_slice(n, p, &values),
        feature_names,
        labels: label_idx.map(|_| labels),
        provenance: Provenance {
            source: "<reader>".into(),
            label_column: options.label_column.clone(),
            rejected_rows: rejected,
            standardization: None,
        },
    })
}

/// Centers each column and scales it to unit sample variance.
pub fn standardize(data: &Dataset) -> Result<Dataset> {
    let (n, p) = data.matrix.shape();
    if n < 2 || p == 0 {
        return Err(Error::Data(format!("cannot standardize a {n}x{p} dataset")));
    }
    let mut out = data.clone();
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let col = data.matrix.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::Data(format!("column '{}' has zero variance", data.feature_names[j])));
        }
        for v in out.matrix.column_mut(j).iter_mut() {
            *v = (*v - mean) / sd;
        }
        means.push(mean);
        sds.push(sd);
    }
    out.provenance.standardization = Some(Standardization { means, sds });
    Ok(out)
}

/// First `dims` rotated coordinates of every observation under one
/// component's orientation, with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionTable {
    pub coords: DMatrix<f64>,
    pub hard_labels: Vec<usize>,
    pub true_labels: Option<Vec<String>>,
}

pub fn export_projection(fit: &FitResult, data: &Dataset, component: usize, dims: usize) -> Result<ProjectionTable> {
    let comp = fit.model.components.get(component).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "component {component} does not exist (G = {})",
            fit.model.g()
        ))
    })?;
    if dims == 0 || dims > comp.p() {
        return Err(Error::InvalidParameter(format!("dims must be in 1..={}", comp.p())));
    }
    if data.p() != comp.p() || data.n() != fit.hard_labels.len() {
        return Err(Error::Dimension("dataset does not match the fit".into()));
    }
    let gamma = comp.gamma.columns(0, dims);
    let coords = &data.matrix * gamma;
    Ok(ProjectionTable {
        coords,
        hard_labels: fit.hard_labels.clone(),
        true_labels: data.labels.clone(),
    })
}

impl ProjectionTable {
    /// Comma-separated with header `dim1,…,dimK,hard_label[,true_label]`.
    /// Hard labels are written one-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.coords.ncols();
        let mut header: Vec<String> = (1..=k).map(|d| format!("dim{d}")).collect();
        header.push("hard_label".into());
        if self.true_labels.is_some() {
            header.push("true_label".into());
        }
        w.write_record(&header)?;
        for i in 0..self.coords.nrows() {
            let mut rec: Vec<String> = (0..k).map(|d| self.coords[(i, d)].to_string()).collect();
            rec.push((self.hard_labels[i] + 1).to_string());
            if let Some(t) = &self.true_labels {
                rec.push(t[i].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Directory holding the bundled datasets.
pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

/// A bundled dataset: file and label column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Builtin {
    pub path: PathBuf,
    pub label_column: &'static str,
}

/// Maps `wine` and `tumour` (also `tumor`, `wdbc`) to their files. For wine
/// a `wine27.csv` in the data directory takes precedence over `wine.csv`.
pub fn builtin(name: &str) -> Option<Builtin> {
    let dir = data_dir();
    match name.to_ascii_lowercase().as_str() {
        "wine" => {
            let wide = dir.join("wine27.csv");
            let path = if wide.is_file() { wide } else { dir.join("wine.csv") };
            Some(Builtin {
                path,
                label_column: "type",
            })
        }
        "tumour" | "tumor" | "wdbc" => Some(Builtin {
            path: dir.join("wdbc.csv"),
            label_column: "diagnosis",
        }),
        _ => None,
    }
}

pub fn load_builtin(name: &str) -> Result<Dataset> {
    let b = builtin(name).ok_or_else(|| Error::Data(format!("unknown dataset '{name}'")))?;
    load_delimited(
        &b.path,
        &LoadOptions {
            label_column: Some(b.label_column.into()),
            ..LoadOptions::default()
        },
    )
}

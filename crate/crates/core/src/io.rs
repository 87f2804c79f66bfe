//! File formats: data and result CSVs, JSON-lines draw files, JSON documents.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value reads back bit-for-bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clustering::Psm;
use crate::density::DensityEstimate;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::sampler::{ChainConfig, Draw, DrawSet, TraceRow};

/// A data file after parsing: numeric matrix, optional header and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFile {
    pub data: Dataset,
    pub header: Option<Vec<String>>,
    pub labels: Option<Vec<String>>,
}

fn parse_cell(s: &str, row: usize, col: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse(format!("row {row}, column {col}: '{s}' is not a finite number")))
}

/// Reads a comma-separated numeric file. A first row with any non-numeric cell
/// is taken as a header. `label_column` (header name or zero-based index)
/// is split off as reference labels.
pub fn read_data_csv(path: &Path, label_column: Option<&str>) -> Result<DataFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut records = rdr.records();
    let first = match records.next() {
        Some(r) => r?,
        None => return Err(Error::Parse(format!("{} is empty", path.display()))),
    };
    let first: Vec<String> = first.iter().map(str::to_string).collect();
    let has_header = first.iter().any(|c| c.trim().parse::<f64>().is_err());
    let label_idx = match label_column {
        None => None,
        Some(name) => {
            let by_name = if has_header {
                first.iter().position(|c| c == name)
            } else {
                None
            };
            match by_name.or_else(|| name.parse::<usize>().ok()) {
                Some(i) if i < first.len() => Some(i),
                _ => return Err(Error::Parse(format!("label column '{name}' not found"))),
            }
        }
    };
    let mut rows: Vec<Vec<String>> = Vec::new();
    if !has_header {
        rows.push(first.clone());
    }
    for r in records {
        rows.push(r?.iter().map(str::to_string).collect());
    }
    let width = first.len();
    let d = width - label_idx.map_or(0, |_| 1);
    if d == 0 {
        return Err(Error::Parse("no numeric columns".into()));
    }
    let mut values = Vec::with_capacity(rows.len() * d);
    let mut labels = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Parse(format!(
                "row {r} has {} fields, expected {width}",
                row.len()
            )));
        }
        for (c, cell) in row.iter().enumerate() {
            if Some(c) == label_idx {
                labels.push(cell.clone());
            } else {
                values.push(parse_cell(cell, r, c)?);
            }
        }
    }
    let header = has_header.then(|| {
        first
            .iter()
            .enumerate()
            .filter(|(c, _)| Some(*c) != label_idx)
            .map(|(_, h)| h.clone())
            .collect()
    });
    Ok(DataFile {
        data: Dataset::new(rows.len(), d, values)?,
        header,
        labels: label_idx.map(|_| labels),
    })
}

pub fn write_data_csv(path: &Path, data: &Dataset, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match header {
        Some(h) => w.write_record(h)?,
        None => w.write_record((1..=data.dim()).map(|k| format!("x{k}")))?,
    }
    for row in data.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Everything in a [`DrawSet`] except the draws, kept beside the JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub n_obs: usize,
    pub dim: usize,
    pub n_draws: usize,
    pub config: ChainConfig,
    pub warnings: Vec<String>,
}

/// Sidecar path for a draws file: `draws.jsonl` → `draws.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// One JSON record per retained draw plus a metadata sidecar.
pub fn write_draws(path: &Path, draws: &DrawSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in &draws.draws {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let meta = DrawsMeta {
        n_obs: draws.n_obs,
        dim: draws.dim,
        n_draws: draws.len(),
        config: draws.config,
        warnings: draws.warnings.clone(),
    };
    write_json(&meta_path(path), &meta)
}

pub fn read_draws(path: &Path) -> Result<DrawSet> {
    let meta: DrawsMeta = read_json(&meta_path(path))?;
    let mut draws = Vec::with_capacity(meta.n_draws);
    for (k, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Draw = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("draw record {k}: {e}")))?;
        if d.allocations.len() != meta.n_obs {
            return Err(Error::Parse(format!(
                "draw record {k} has {} allocations, expected {}",
                d.allocations.len(),
                meta.n_obs
            )));
        }
        draws.push(d);
    }
    if draws.len() != meta.n_draws {
        return Err(Error::Parse(format!(
            "{} draw records, metadata says {}",
            draws.len(),
            meta.n_draws
        )));
    }
    Ok(DrawSet {
        draws,
        n_obs: meta.n_obs,
        dim: meta.dim,
        config: meta.config,
        warnings: meta.warnings,
    })
}

/// Writes rows of a serializable type with a header from its field names.
pub fn write_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_traces_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_rows_csv(path, rows)
}

/// One row per grid point: coordinates then density value.
pub fn write_density_csv(path: &Path, est: &DensityEstimate) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = est.grid.dim();
    let mut head: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    head.push("density".into());
    w.write_record(&head)?;
    let mut p = vec![0.0; d];
    for (i, v) in est.values.iter().enumerate() {
        est.grid.point_into(i, &mut p);
        w.write_record(p.iter().chain(std::iter::once(v)).map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_csv(path: &Path, rows: &[Vec<f64>], header: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_psm_csv(path: &Path, psm: &Psm) -> Result<()> {
    write_matrix_csv(path, &psm.to_rows(), None)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

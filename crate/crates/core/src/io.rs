//! Instance persistence: headerless CSV matrices plus a small TOML
//! metadata file.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExamKind, ExaminationModel, Instance};

/// Writes a matrix as headerless CSV: one row per line, decimal floats.
pub fn write_matrix_csv(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for row in matrix.rows() {
        let record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writer.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads a headerless CSV of decimal floats into a matrix. Every row must
/// have the same number of columns.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| Error::Metadata {
                    path: path.display().to_string(),
                    detail: format!("cannot parse {cell:?} as a decimal float"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Metadata {
                    path: path.display().to_string(),
                    detail: format!(
                        "ragged csv: row {} has {} columns, expected {}",
                        rows.len() + 1,
                        row.len(),
                        first.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Metadata {
            path: path.display().to_string(),
            detail: "empty matrix file".into(),
        });
    }
    let (r, c) = (rows.len(), rows[0].len());
    Array2::from_shape_vec((r, c), rows.into_iter().flatten().collect()).map_err(|e| {
        Error::Metadata { path: path.display().to_string(), detail: e.to_string() }
    })
}

/// Generation provenance and examination settings stored next to the
/// preference matrices.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceMeta {
    pub n: usize,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// "log" or "inv"
    pub exam: String,
    /// Examination cutoff; omitted means full list length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
}

impl InstanceMeta {
    pub fn examination_model(&self) -> Result<ExaminationModel> {
        let kind: ExamKind = self.exam.parse()?;
        ExaminationModel::new(kind, self.threshold)
    }
}

const P1_FILE: &str = "p1.csv";
const P2_FILE: &str = "p2.csv";
const META_FILE: &str = "instance.toml";

/// Writes `p1.csv`, `p2.csv` and `instance.toml` into `dir`.
pub fn save_instance(dir: &Path, inst: &Instance, meta: &InstanceMeta) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_matrix_csv(&dir.join(P1_FILE), inst.p1())?;
    write_matrix_csv(&dir.join(P2_FILE), inst.p2())?;
    let text = toml::to_string_pretty(meta).map_err(|e| Error::Metadata {
        path: dir.join(META_FILE).display().to_string(),
        detail: e.to_string(),
    })?;
    std::fs::write(dir.join(META_FILE), text).map_err(|e| io_err(dir, e))?;
    Ok(())
}

/// Loads an instance directory written by [`save_instance`], validating
/// matrix shapes against the metadata.
pub fn load_instance(dir: &Path) -> Result<(Instance, InstanceMeta)> {
    let meta_path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: InstanceMeta = toml::from_str(&text).map_err(|e| Error::Metadata {
        path: meta_path.display().to_string(),
        detail: e.to_string(),
    })?;
    let p1 = read_matrix_csv(&dir.join(P1_FILE))?;
    let p2 = read_matrix_csv(&dir.join(P2_FILE))?;
    if p1.dim() != (meta.n, meta.m) {
        return Err(Error::Metadata {
            path: dir.join(P1_FILE).display().to_string(),
            detail: format!(
                "metadata says {}x{}, file is {}x{}",
                meta.n,
                meta.m,
                p1.nrows(),
                p1.ncols()
            ),
        });
    }
    let inst = Instance::new(p1, p2, meta.examination_model()?)?;
    Ok((inst, meta))
}

/// Builds an instance straight from two matrix files (no metadata).
pub fn load_instance_from_files(
    p1_path: &Path,
    p2_path: &Path,
    exam: ExaminationModel,
) -> Result<Instance> {
    let p1 = read_matrix_csv(p1_path)?;
    let p2 = read_matrix_csv(p2_path)?;
    Instance::new(p1, p2, exam)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source: e }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv { path: path.display().to_string(), source: e }
}

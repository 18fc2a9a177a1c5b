//! Dataset loading: CSV with a label column, and MNIST-style IDX files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use signsel::{FeatureMatrix, LabelVector, Scaling};
use thiserror::Error;

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("{path}: row {row}, column {column:?}: {msg}")]
    Cell {
        path: String,
        row: u64,
        column: String,
        msg: String,
    },
    #[error(transparent)]
    Data(#[from] signsel::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, msg: impl Into<String>) -> IngestError {
    IngestError::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Csv,
    Idx,
}

/// Shape and class counts of a loaded dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: SourceFormat,
    pub n_samples: usize,
    pub n_features: usize,
    pub class_histogram: BTreeMap<String, usize>,
    /// SHA-256 of the scaling statistics, once they are fitted.
    pub scaling_checksum: Option<String>,
}

impl DatasetManifest {
    fn new(format: SourceFormat, f: &FeatureMatrix, labels: &LabelVector) -> Self {
        let class_histogram = labels.classes().iter().cloned().zip(labels.histogram()).collect();
        Self {
            format,
            n_samples: f.rows(),
            n_features: f.cols(),
            class_histogram,
            scaling_checksum: None,
        }
    }

    pub fn with_scaling(mut self, s: &Scaling) -> Self {
        self.scaling_checksum = Some(scaling_checksum(s));
        self
    }

    /// True when the counts agree with the matrix and labels.
    pub fn matches(&self, f: &FeatureMatrix, labels: &LabelVector) -> bool {
        self.n_samples == f.rows()
            && self.n_features == f.cols()
            && labels.len() == f.rows()
            && self.class_histogram.values().sum::<usize>() == labels.len()
    }
}

pub fn scaling_checksum(s: &Scaling) -> String {
    let json = serde_json::to_string(s).expect("scaling serializes");
    format!("{:x}", Sha256::digest(json.as_bytes()))
}

/// Reads a CSV with a header row. `label_column` names the class column;
/// every other column must be numeric.
pub fn ingest_csv(
    path: &Path,
    label_column: &str,
) -> Result<(FeatureMatrix, LabelVector, DatasetManifest), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format_err(path, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| format_err(path, e.to_string()))?.clone();
    let Some(label_idx) = headers.iter().position(|h| h == label_column) else {
        let available: Vec<&str> = headers.iter().collect();
        return Err(format_err(
            path,
            format!(
                "no label column {label_column:?}; available columns: {}",
                available.join(", ")
            ),
        ));
    };
    let n = headers.len() - 1;
    if n == 0 {
        return Err(format_err(path, "no feature columns"));
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, pos } => IngestError::Format {
                path: path.display().to_string(),
                msg: format!(
                    "ragged row at line {}: {len} fields, expected {expected_len}",
                    pos.as_ref().map_or(0, |p| p.line())
                ),
            },
            _ => format_err(path, e.to_string()),
        })?;
        let line = rec.position().map_or(i as u64 + 2, |p| p.line());
        for (j, cell) in rec.iter().enumerate() {
            if j == label_idx {
                labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| IngestError::Cell {
                path: path.display().to_string(),
                row: line,
                column: headers[j].to_string(),
                msg: format!("non-numeric value {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(IngestError::Cell {
                    path: path.display().to_string(),
                    row: line,
                    column: headers[j].to_string(),
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(format_err(path, "no data rows"));
    }
    let f = FeatureMatrix::new(labels.len(), n, data)?;
    let l = LabelVector::from_labels(&labels)?;
    let m = DatasetManifest::new(SourceFormat::Csv, &f, &l);
    Ok((f, l, m))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn read_header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>, IngestError> {
    let header = 4 + 4 * dims;
    if bytes.len() < 4 {
        return Err(format_err(path, "file too short for an IDX magic number"));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(format_err(
            path,
            format!("bad magic number {found:#010x}, expected {magic:#010x}"),
        ));
    }
    if bytes.len() < header {
        return Err(format_err(
            path,
            format!(
                "length mismatch: file is {} bytes, shorter than its header",
                bytes.len()
            ),
        ));
    }
    let shape: Vec<usize> = (0..dims).map(|d| be_u32(bytes, 4 + 4 * d) as usize).collect();
    let expected = header + shape.iter().product::<usize>();
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!(
                "length mismatch: header implies {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    Ok(shape)
}

/// Reads an IDX image file and its label file. Pixels map to `[0, 1]` by
/// dividing by 255. With `center_crop`, only the central half-size window of
/// each image is kept (14×14 of a 28×28 image).
pub fn ingest_idx(
    images_path: &Path,
    labels_path: &Path,
    center_crop: bool,
) -> Result<(FeatureMatrix, LabelVector, DatasetManifest), IngestError> {
    let img = fs::read(images_path).map_err(io_err(images_path))?;
    let lab = fs::read(labels_path).map_err(io_err(labels_path))?;
    let shape = read_header(images_path, &img, IDX_IMAGES, 3)?;
    let [count, rows, cols] = [shape[0], shape[1], shape[2]];
    let n_labels = read_header(labels_path, &lab, IDX_LABELS, 1)?[0];
    if n_labels != count {
        return Err(format_err(
            labels_path,
            format!("length mismatch: {n_labels} labels for {count} images"),
        ));
    }
    if count == 0 || rows == 0 || cols == 0 {
        return Err(format_err(images_path, "empty image set"));
    }
    let pixels = &img[16..];
    let (r0, r1, c0, c1) = if center_crop {
        let (h, w) = (rows / 2, cols / 2);
        let (r0, c0) = ((rows - h) / 2, (cols - w) / 2);
        (r0, r0 + h, c0, c0 + w)
    } else {
        (0, rows, 0, cols)
    };
    let n = (r1 - r0) * (c1 - c0);
    let mut data = Vec::with_capacity(count * n);
    for im in pixels.chunks_exact(rows * cols) {
        for r in r0..r1 {
            data.extend(im[r * cols + c0..r * cols + c1].iter().map(|&p| f64::from(p) / 255.0));
        }
    }
    let labels: Vec<String> = lab[8..].iter().map(|b| b.to_string()).collect();
    let f = FeatureMatrix::new(count, n, data)?;
    let l = LabelVector::from_labels(&labels)?;
    let m = DatasetManifest::new(SourceFormat::Idx, &f, &l);
    Ok((f, l, m))
}

//! Dataset ingestion: IDX (the MNIST container), CSV, and the binary
//! weights format.
//!
//! IDX layout: two zero bytes, a dtype code (only `0x08`, unsigned byte, is
//! supported), the number of dimensions, then one big-endian `u32` per
//! dimension, then the payload. Images use magic `0x00000803`, labels
//! `0x00000801`.
//!
//! Labels in files are 0-based; they become classes `1..=C` here and
//! nowhere else.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{one_hot, Dataset, Weights};
use crate::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const DTYPE_U8: u8 = 0x08;

/// Weights file magic.
pub const WEIGHTS_MAGIC: &[u8; 4] = b"SMXW";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub dtype: u8,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn magic(&self) -> u32 {
        u32::from_be_bytes([0, 0, self.dtype, self.dims.len() as u8])
    }

    pub fn len(&self) -> usize {
        4 + 4 * self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn payload_len(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }
}

/// A parsed IDX file with an unsigned-byte payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxFile {
    pub header: IdxHeader,
    pub data: Vec<u8>,
}

impl IdxFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Format {
                offset: bytes.len() as u64,
                reason: "truncated magic number".into(),
            });
        }
        if bytes[0] != 0 || bytes[1] != 0 {
            return Err(Error::Format {
                offset: 0,
                reason: format!("bad magic prefix {:02x}{:02x}", bytes[0], bytes[1]),
            });
        }
        let dtype = bytes[2];
        if dtype != DTYPE_U8 {
            return Err(Error::Format {
                offset: 2,
                reason: format!("unsupported dtype 0x{dtype:02x}"),
            });
        }
        let ndim = bytes[3] as usize;
        let header_len = 4 + 4 * ndim;
        if bytes.len() < header_len {
            return Err(Error::Format {
                offset: bytes.len() as u64,
                reason: format!("truncated header: {ndim} dimensions need {header_len} bytes"),
            });
        }
        let dims: Vec<u32> = bytes[4..header_len]
            .chunks_exact(4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let header = IdxHeader { dtype, dims };
        let expected = header.payload_len();
        let actual = (bytes.len() - header_len) as u64;
        if actual < expected {
            return Err(Error::Format {
                offset: bytes.len() as u64,
                reason: format!("truncated payload: expected {expected} bytes, found {actual}"),
            });
        }
        if actual > expected {
            return Err(Error::Format {
                offset: header_len as u64 + expected,
                reason: format!("{} trailing bytes after payload", actual - expected),
            });
        }
        Ok(Self {
            header,
            data: bytes[header_len..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header.len() + self.data.len());
        out.extend_from_slice(&self.header.magic().to_be_bytes());
        for d in &self.header.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomically(path.as_ref(), &self.to_bytes())
    }

    fn expect_magic(&self, magic: u32) -> Result<()> {
        if self.header.magic() != magic {
            return Err(Error::Format {
                offset: 0,
                reason: format!(
                    "magic 0x{:08x}, expected 0x{magic:08x}",
                    self.header.magic()
                ),
            });
        }
        Ok(())
    }
}

/// How pixel bytes are mapped to features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PixelScale {
    /// `byte / 255`, in `[0, 1]`.
    #[default]
    Unit,
    /// The raw byte value.
    Raw,
}

impl PixelScale {
    fn factor(self) -> f64 {
        match self {
            PixelScale::Unit => 255.0,
            PixelScale::Raw => 1.0,
        }
    }
}

/// Image tensor `N×rows×cols` as a `(rows·cols)×N` matrix, each image
/// flattened row-major into one column.
pub fn images_to_matrix(idx: &IdxFile, scale: PixelScale) -> Result<Matrix> {
    idx.expect_magic(IMAGES_MAGIC)?;
    let dims = &idx.header.dims;
    let n = dims[0] as usize;
    let d = dims[1] as usize * dims[2] as usize;
    let f = scale.factor();
    if d == 0 {
        return Ok(Matrix::zeros(0, n));
    }
    Ok(Matrix::from_iterator(
        d,
        n,
        idx.data.iter().map(|&b| b as f64 / f),
    ))
}

/// Inverse of [`images_to_matrix`]; values are rounded to the nearest byte.
pub fn matrix_to_images(x: &Matrix, rows: u32, cols: u32, scale: PixelScale) -> Result<IdxFile> {
    if x.nrows() != (rows * cols) as usize {
        return Err(Error::Dimension(format!(
            "matrix has {} rows, images are {rows}x{cols}",
            x.nrows()
        )));
    }
    let f = scale.factor();
    let data = x
        .iter()
        .map(|&v| {
            let b = (v * f).round();
            if (0.0..=255.0).contains(&b) {
                Ok(b as u8)
            } else {
                Err(Error::InvalidInput(format!("pixel value {v} out of range")))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(IdxFile {
        header: IdxHeader {
            dtype: DTYPE_U8,
            dims: vec![x.ncols() as u32, rows, cols],
        },
        data,
    })
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Matrix> {
    load_idx_images_scaled(path, PixelScale::Unit)
}

pub fn load_idx_images_scaled(path: impl AsRef<Path>, scale: PixelScale) -> Result<Matrix> {
    images_to_matrix(&IdxFile::read(path)?, scale)
}

pub fn write_idx_images(path: impl AsRef<Path>, x: &Matrix, rows: u32, cols: u32) -> Result<()> {
    matrix_to_images(x, rows, cols, PixelScale::Unit)?.write(path)
}

/// Raw 0-based label bytes of a label file.
pub fn load_idx_label_bytes(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let idx = IdxFile::read(path)?;
    idx.expect_magic(LABELS_MAGIC)?;
    Ok(idx.data)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    IdxFile {
        header: IdxHeader {
            dtype: DTYPE_U8,
            dims: vec![labels.len() as u32],
        },
        data: labels.to_vec(),
    }
    .write(path)
}

/// One-hot targets from 0-based label bytes.
pub fn labels_to_targets(labels: &[u8], classes: usize) -> Result<Matrix> {
    let shifted: Vec<usize> = labels.iter().map(|&l| l as usize + 1).collect();
    one_hot(&shifted, classes).map_err(|e| match e {
        // report the label as it appears in the file
        Error::InvalidLabel { index, label, classes } => Error::InvalidLabel {
            index,
            label: label - 1,
            classes,
        },
        other => other,
    })
}

pub fn load_idx_labels(path: impl AsRef<Path>, classes: usize) -> Result<Matrix> {
    labels_to_targets(&load_idx_label_bytes(path)?, classes)
}

/// Images and labels from a pair of IDX files.
pub fn load_idx_dataset(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    classes: usize,
    scale: PixelScale,
) -> Result<Dataset> {
    let x = load_idx_images_scaled(images, scale)?;
    let labels = load_idx_label_bytes(labels)?;
    if labels.len() != x.ncols() {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            x.ncols(),
            labels.len()
        )));
    }
    Dataset::new(x, labels_to_targets(&labels, classes)?)
}

/// Reads a numeric CSV; `label_column` holds 0-based integer labels and
/// every other column is a feature.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: usize,
    classes: usize,
    has_header: bool,
) -> Result<Dataset> {
    parse_csv(fs::File::open(path)?, label_column, classes, has_header)
}

pub fn parse_csv(
    reader: impl Read,
    label_column: usize,
    classes: usize,
    has_header: bool,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut width = None;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                line,
                reason: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let cols = record.len();
        if label_column >= cols {
            return Err(Error::Parse {
                line,
                reason: format!("label column {label_column} missing ({cols} columns)"),
            });
        }
        width.get_or_insert(cols);
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                reason: format!("non-numeric cell '{cell}' in column {j}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    reason: format!("non-finite cell in column {j}"),
                });
            }
            if j == label_column {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Parse {
                        line,
                        reason: format!("label '{cell}' is not a non-negative integer"),
                    });
                }
                labels.push(value as usize + 1);
            } else {
                features.push(value);
            }
        }
    }
    let d = width.unwrap_or(1) - 1;
    let x = Matrix::from_vec(d, labels.len(), features);
    let t = one_hot(&labels, classes).map_err(|e| match e {
        Error::InvalidLabel { index, label, classes } => Error::InvalidLabel {
            index,
            label: label - 1,
            classes,
        },
        other => other,
    })?;
    Dataset::new(x, t)
}

/// Appends a constant-1 row.
pub fn add_bias_row(x: &Matrix) -> Matrix {
    let d = x.nrows();
    x.clone().insert_row(d, 1.0)
}

/// `SMXW`, `u32` C, `u32` D (little-endian), then `C·D` little-endian
/// `f64` values in row-major order.
pub fn encode_weights(w: &Weights) -> Vec<u8> {
    let m = w.as_matrix();
    let mut out = Vec::with_capacity(12 + 8 * m.len());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub fn decode_weights(bytes: &[u8]) -> Result<Weights> {
    if bytes.len() < 12 {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: "truncated weights header".into(),
        });
    }
    if &bytes[..4] != WEIGHTS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "bad weights magic".into(),
        });
    }
    let c = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + 8 * c * d;
    if bytes.len() != expected {
        return Err(Error::Format {
            offset: bytes.len().min(expected) as u64,
            reason: format!("expected {expected} bytes for {c}x{d} weights, found {}", bytes.len()),
        });
    }
    let values = bytes[12..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    Weights::new(Matrix::from_row_iterator(c, d, values))
}

pub fn write_weights(path: impl AsRef<Path>, w: &Weights) -> Result<()> {
    write_atomically(path.as_ref(), &encode_weights(w))
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<Weights> {
    decode_weights(&fs::read(path)?)
}

/// Writes through a sibling temporary file so a failed write leaves no
/// partial output.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

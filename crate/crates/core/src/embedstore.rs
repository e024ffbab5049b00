//! Labeled embedding tables and their on-disk formats.
//!
//! Two formats are supported:
//!
//! * **binary** (`.emb`): one JSON header line
//!   `{"version":1,"count":N,"dim":D,"labels":[...]}` followed by `N·D`
//!   little-endian `f32` values, row-major.
//! * **csv**: `label,v0,...,v{D-1}` per line, no header row.
//!
//! Values are held as `f64` in memory. Binary files store `f32`, so a table
//! survives a binary round trip exactly whenever its entries are
//! representable in `f32` (always true for tables that were loaded from a
//! binary file).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

/// Tolerance used to decide whether a row has unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// `.csv` selects CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    count: usize,
    dim: usize,
    labels: Vec<String>,
}

/// An ordered set of uniquely labeled, equal-length, finite vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    labels: Vec<String>,
    rows: Matrix,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.rows == other.rows
    }
}

impl EmbeddingTable {
    /// Build a table, checking every invariant.
    pub fn new(labels: Vec<String>, rows: Matrix) -> Result<Self> {
        if rows.cols() == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if labels.len() != rows.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} rows",
                labels.len(),
                rows.rows()
            )));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::DuplicateLabel {
                    label: label.clone(),
                    row: i,
                });
            }
            if let Some(col) = rows.row(i).iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i, col });
            }
        }
        Ok(Self {
            labels,
            rows,
            index,
        })
    }

    pub fn from_rows<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let labels = labels.into_iter().map(Into::into).collect();
        Self::new(labels, Matrix::from_rows(rows)?)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn row_by_label(&self, label: &str) -> Result<&[f64]> {
        self.index_of(label)
            .map(|i| self.row(i))
            .ok_or_else(|| Error::MissingLabel(label.to_string()))
    }

    /// Replace the rows, keeping labels. Used by transforms that preserve shape.
    pub fn with_matrix(&self, rows: Matrix) -> Result<Self> {
        if rows.rows() != self.len() || rows.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "expected {}x{}, got {}x{}",
                self.len(),
                self.dim(),
                rows.rows(),
                rows.cols()
            )));
        }
        if let Some((row, col)) = find_non_finite(&rows) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self {
            labels: self.labels.clone(),
            rows,
            index: self.index.clone(),
        })
    }

    /// Round every entry to the nearest `f32`, the precision of the binary format.
    pub fn quantize_f32(&self) -> Self {
        let mut rows = self.rows.clone();
        for v in rows.as_mut_slice() {
            *v = f64::from(*v as f32);
        }
        Self {
            labels: self.labels.clone(),
            rows,
            index: self.index.clone(),
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.first_non_unit_row().is_none()
    }

    fn first_non_unit_row(&self) -> Option<(usize, f64)> {
        (0..self.len())
            .map(|i| (i, norm(self.row(i))))
            .find(|(_, n)| (n - 1.0).abs() > UNIT_NORM_TOL)
    }
}

fn find_non_finite(m: &Matrix) -> Option<(usize, usize)> {
    m.as_slice()
        .iter()
        .position(|v| !v.is_finite())
        .map(|p| (p / m.cols(), p % m.cols()))
}

/// Scale every row to unit L2 norm.
pub fn normalize(table: &EmbeddingTable) -> Result<EmbeddingTable> {
    let mut rows = table.matrix().clone();
    for i in 0..rows.rows() {
        let n = norm(rows.row(i));
        if n == 0.0 {
            return Err(Error::ZeroVector {
                label: table.labels()[i].clone(),
            });
        }
        for v in rows.row_mut(i) {
            *v /= n;
        }
    }
    table.with_matrix(rows)
}

/// Pairwise cosine similarities of a normalized table.
pub fn similarity_matrix(table: &EmbeddingTable) -> Result<Matrix> {
    if let Some((i, n)) = table.first_non_unit_row() {
        return Err(Error::NotNormalized {
            label: table.labels()[i].clone(),
            norm: n,
        });
    }
    let n = table.len();
    let data: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..n).map(move |j| {
                if i == j {
                    1.0
                } else {
                    dot(table.row(i), table.row(j)).clamp(-1.0, 1.0)
                }
            })
        })
        .collect();
    Matrix::from_vec(n, n, data)
}

pub fn load_table(path: &Path, format: Format) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    match format {
        Format::Binary => read_binary(&mut reader).map_err(|e| with_path(e, path)),
        Format::Csv => read_csv(reader),
    }
}

pub fn save_table(table: &EmbeddingTable, path: &Path, format: Format) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Binary => write_binary(table, &mut w).map_err(|e| with_path(e, path))?,
        Format::Csv => write_csv(table, &mut w)?,
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

pub fn read_binary<R: BufRead>(reader: &mut R) -> Result<EmbeddingTable> {
    let mut line = Vec::new();
    reader
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::io("<binary>", e))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::MalformedHeader("missing header line".into()));
    }
    line.pop();
    let header: Header = serde_json::from_slice(&line)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.version != 1 {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {}",
            header.version
        )));
    }
    if header.dim == 0 {
        return Err(Error::MalformedHeader("dim must be positive".into()));
    }
    if header.labels.len() != header.count {
        return Err(Error::MalformedHeader(format!(
            "count {} but {} labels",
            header.count,
            header.labels.len()
        )));
    }
    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::io("<binary>", e))?;
    let row_bytes = header.dim * 4;
    let expected = header.count * row_bytes;
    if payload.len() != expected {
        let complete = payload.len() / row_bytes;
        let row = complete.min(header.count);
        return Err(Error::RowLength {
            row,
            expected: header.dim,
            found: if payload.len() > expected {
                header.dim + (payload.len() - expected) / 4
            } else {
                (payload.len() % row_bytes) / 4
            },
        });
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    EmbeddingTable::new(header.labels, Matrix::from_vec(header.count, header.dim, data)?)
}

pub fn write_binary<W: Write>(table: &EmbeddingTable, w: &mut W) -> Result<()> {
    let header = Header {
        version: 1,
        count: table.len(),
        dim: table.dim(),
        labels: table.labels().to_vec(),
    };
    let mut buf = serde_json::to_vec(&header)?;
    buf.push(b'\n');
    buf.reserve(table.len() * table.dim() * 4);
    for (p, &v) in table.matrix().as_slice().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite {
                row: p / table.dim(),
                col: p % table.dim(),
            });
        }
        buf.extend_from_slice(&f.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io("<binary>", e))
}

fn read_csv<R: Read>(reader: R) -> Result<EmbeddingTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row,
            value: e.to_string(),
        })?;
        let found = record.len().saturating_sub(1);
        let d = *dim.get_or_insert(found);
        if found != d || d == 0 {
            return Err(Error::RowLength {
                row,
                expected: d,
                found,
            });
        }
        labels.push(record[0].to_string());
        for (col, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            data.push(v);
        }
    }
    let Some(dim) = dim else {
        return Err(Error::MalformedHeader(
            "empty CSV carries no dimension".into(),
        ));
    };
    EmbeddingTable::new(labels.clone(), Matrix::from_vec(labels.len(), dim, data)?)
}

fn write_csv<W: Write>(table: &EmbeddingTable, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let to_err = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e.to_string()));
    for (i, label) in table.labels().iter().enumerate() {
        let mut record = Vec::with_capacity(table.dim() + 1);
        record.push(label.clone());
        record.extend(table.row(i).iter().map(|v| format!("{v}")));
        wtr.write_record(&record).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn abc() -> EmbeddingTable {
        EmbeddingTable::from_rows(
            ["a", "b", "c"],
            &[vec![1.0, 2.0], vec![3.0, 4.0], vec![-0.5, 0.25]],
        )
        .unwrap()
    }

    #[test]
    fn csv_three_rows() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "a,1,2\nb,3,4\nc,-0.5,0.25\n").unwrap();
        let t = load_table(&p, Format::Csv).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dim(), 2);
        assert_eq!(t, abc());
    }

    #[test]
    fn duplicate_label_is_named() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "dog,1,2\ncat,3,4\ndog,5,6\n").unwrap();
        match load_table(&p, Format::Csv) {
            Err(Error::DuplicateLabel { label, row }) => {
                assert_eq!(label, "dog");
                assert_eq!(row, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_row_length_and_non_finite_errors() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "a,1,2\nb,3\n").unwrap();
        assert!(matches!(
            load_table(&p, Format::Csv),
            Err(Error::RowLength { row: 1, expected: 2, found: 1 })
        ));
        std::fs::write(&p, "a,1,2\nb,3,NaN\n").unwrap();
        assert!(matches!(
            load_table(&p, Format::Csv),
            Err(Error::NonFinite { row: 1, col: 1 })
        ));
    }

    #[test]
    fn binary_malformed_header() {
        let mut bad = &b"{\"version\":1,\"count\":2}\n"[..];
        assert!(matches!(read_binary(&mut bad), Err(Error::MalformedHeader(_))));
        let mut no_newline = &b"{\"version\":1"[..];
        assert!(matches!(
            read_binary(&mut no_newline),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn binary_truncated_payload_reports_row() {
        let mut buf = Vec::new();
        write_binary(&abc(), &mut buf).unwrap();
        buf.truncate(buf.len() - 4);
        assert!(matches!(
            read_binary(&mut &buf[..]),
            Err(Error::RowLength { row: 2, .. })
        ));
    }

    #[test]
    fn binary_header_layout() {
        let mut buf = Vec::new();
        write_binary(&abc(), &mut buf).unwrap();
        let nl = buf.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(
            std::str::from_utf8(&buf[..nl]).unwrap(),
            r#"{"version":1,"count":3,"dim":2,"labels":["a","b","c"]}"#
        );
        assert_eq!(buf.len() - nl - 1, 3 * 2 * 4);
        assert_eq!(&buf[nl + 1..nl + 5], &1.0f32.to_le_bytes());
    }

    #[test]
    fn save_into_empty_directory_and_zero_rows() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("out.emb");
        save_table(&abc(), &p, Format::Binary).unwrap();
        assert_eq!(load_table(&p, Format::Binary).unwrap(), abc());

        let empty = EmbeddingTable::new(vec![], Matrix::zeros(0, 7)).unwrap();
        let p0 = dir.path().join("empty.emb");
        save_table(&empty, &p0, Format::Binary).unwrap();
        let back = load_table(&p0, Format::Binary).unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back.dim(), 7);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t = EmbeddingTable::from_rows(["x,y", "z"], &[vec![0.1, 1e-300], vec![-3.5, 2.0 / 3.0]])
            .unwrap();
        save_table(&t, &p, Format::Csv).unwrap();
        assert_eq!(load_table(&p, Format::Csv).unwrap(), t);
    }

    #[test]
    fn normalize_examples() {
        let t = EmbeddingTable::from_rows(["a"], &[vec![3.0, 4.0]]).unwrap();
        let n = normalize(&t).unwrap();
        assert!((n.row(0)[0] - 0.6).abs() < 1e-15);
        assert!((n.row(0)[1] - 0.8).abs() < 1e-15);

        let unit = EmbeddingTable::from_rows(["u"], &[vec![0.6, 0.8]]).unwrap();
        let nu = normalize(&unit).unwrap();
        for (a, b) in nu.row(0).iter().zip(unit.row(0)) {
            assert!((a - b).abs() < 1e-6);
        }

        let z = EmbeddingTable::from_rows(["zero"], &[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(normalize(&z), Err(Error::ZeroVector { label }) if label == "zero"));
    }

    #[test]
    fn similarity_of_orthonormal_rows_is_identity() {
        let t = EmbeddingTable::from_rows(
            ["a", "b", "c"],
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        )
        .unwrap();
        let s = similarity_matrix(&t).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(s.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
        assert!(matches!(
            similarity_matrix(&abc()),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("x.CSV")), Format::Csv);
        assert_eq!(Format::from_path(Path::new("x.emb")), Format::Binary);
    }
}

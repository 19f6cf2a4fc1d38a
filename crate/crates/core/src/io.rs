//! CSV ingestion, the binary sketch file, pair lists and JSON output.
//!
//! Sketch file layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "LPSK"
//!      4     4  version (u32) = 1
//!      8     8  n, number of rows (u64)
//!     16     8  D, row length (u64)
//!     24     4  p (u32)
//!     28     4  k (u32)
//!     32     1  strategy: 0 basic, 1 alternative
//!     33     1  family: 0 normal, 1 uniform, 2 three-point
//!     34     6  zero padding
//!     40     8  s, fourth moment of the entries (f64)
//!     48     8  master seed (u64)
//!     56        n row records
//! ```
//!
//! A row record is `2p - 2` f64 marginals `m_1..m_{2p-2}` followed by the
//! sketch vectors (`k` f64 each) in [`SketchLayout`](crate::sketcher::SketchLayout)
//! slot order. Row ids are implicit: record `i` is row `i`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DataMatrix, EvenOrder};
use crate::projections::{moment_s, ProjectionFamily};
use crate::sketcher::{RowSketch, SketchConfig, StrategyKind};

pub const MAGIC: &[u8; 4] = b"LPSK";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 56;

/// Reads a dense numeric matrix. With `header`, the first line is skipped.
/// Reported row indices count data rows from 0.
pub fn read_csv<R: Read>(reader: R, header: bool) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("csv row {row}: {e}")))?;
        let mut values = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                col,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            values.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(Error::DimensionMismatch {
                    left: first.len(),
                    right: values.len(),
                });
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Empty("no data rows".into()));
    }
    DataMatrix::from_rows(rows)
}

pub fn read_csv_path(path: &Path, header: bool) -> Result<DataMatrix> {
    read_csv(BufReader::new(File::open(path)?), header)
}

/// Rows of a sketch file plus the header fields they share.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchFile {
    pub config: SketchConfig,
    pub dim: usize,
    pub rows: Vec<RowSketch>,
}

impl SketchFile {
    /// Checks that every row matches `config` and `dim` and that row ids run
    /// `0..n`.
    pub fn new(config: SketchConfig, dim: usize, rows: Vec<RowSketch>) -> Result<Self> {
        config.validate()?;
        for (i, r) in rows.iter().enumerate() {
            if r.config != config || r.dim != dim {
                return Err(Error::IncompatibleSketch(format!(
                    "row {i} was sketched with a different configuration"
                )));
            }
            if r.row_id != i {
                return Err(Error::InvalidParameter(format!(
                    "row at position {i} has id {}; ids must run 0..n",
                    r.row_id
                )));
            }
        }
        Ok(SketchFile { config, dim, rows })
    }

    fn record_len(&self) -> usize {
        self.config.p.max_marginal() + self.config.layout().len() * self.config.k
    }
}

pub fn write_sketch_file<W: Write>(mut w: W, file: &SketchFile) -> Result<()> {
    let c = &file.config;
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&(file.rows.len() as u64).to_le_bytes());
    header.extend_from_slice(&(file.dim as u64).to_le_bytes());
    header.extend_from_slice(&c.p.get().to_le_bytes());
    header.extend_from_slice(&(c.k as u32).to_le_bytes());
    header.push(c.strategy.code());
    header.push(c.family.code());
    header.extend_from_slice(&[0u8; 6]);
    header.extend_from_slice(&moment_s(&c.family).to_le_bytes());
    header.extend_from_slice(&c.seed.to_le_bytes());
    debug_assert_eq!(header.len(), HEADER_LEN);
    w.write_all(&header)?;

    let mut buf = Vec::with_capacity(file.record_len() * 8);
    for row in &file.rows {
        buf.clear();
        for v in row.marginals.iter().chain(&row.vectors) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().unwrap())
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b.try_into().unwrap())
}

pub fn read_sketch_file<R: Read>(mut r: R) -> Result<SketchFile> {
    let mut h = [0u8; HEADER_LEN];
    read_exact_or(&mut r, &mut h, "header")?;
    if &h[0..4] != MAGIC {
        return Err(Error::Format("bad magic, not a sketch file".into()));
    }
    let version = le_u32(&h[4..8]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = usize::try_from(le_u64(&h[8..16]))
        .map_err(|_| Error::Format("row count too large".into()))?;
    let dim = usize::try_from(le_u64(&h[16..24]))
        .map_err(|_| Error::Format("dimension too large".into()))?;
    let p = EvenOrder::new(le_u32(&h[24..28]) as i64).map_err(|e| Error::Format(e.to_string()))?;
    let k = le_u32(&h[28..32]) as usize;
    let strategy = StrategyKind::from_code(h[32]).map_err(|e| Error::Format(e.to_string()))?;
    let s = f64::from_le_bytes(h[40..48].try_into().unwrap());
    let family = ProjectionFamily::from_code(h[33], s).map_err(|e| Error::Format(e.to_string()))?;
    if h[34..40].iter().any(|&b| b != 0) {
        return Err(Error::Format("nonzero header padding".into()));
    }
    if moment_s(&family) != s {
        return Err(Error::Format(format!(
            "stored s = {s} does not match the {} family",
            family.name()
        )));
    }
    let seed = le_u64(&h[48..56]);
    let config = SketchConfig::new(p, k, strategy, family, seed)
        .map_err(|e| Error::Format(e.to_string()))?;

    let n_marg = p.max_marginal();
    let n_vec = config.layout().len() * k;
    let mut buf = vec![0u8; (n_marg + n_vec) * 8];
    let mut rows = Vec::new();
    for row_id in 0..n {
        read_exact_or(&mut r, &mut buf, "row record")?;
        let mut vals = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
        let marginals: Vec<f64> = vals.by_ref().take(n_marg).collect();
        let vectors: Vec<f64> = vals.collect();
        rows.push(RowSketch {
            row_id,
            config,
            dim,
            marginals,
            vectors,
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after the last row".into()));
    }
    Ok(SketchFile { config, dim, rows })
}

pub fn read_sketch_path(path: &Path) -> Result<SketchFile> {
    read_sketch_file(BufReader::new(File::open(path)?))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_sketch_path(path: &Path, file: &SketchFile) -> Result<()> {
    write_atomic(path, |w| write_sketch_file(w, file))
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json_path<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = to_json(value)?;
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

/// Parses one pair per line, `i,j` or `i j`. Blank lines and text after `#`
/// are ignored. Reported rows are zero-based line numbers.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for (row, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                row,
                col: 0,
                value: line.to_string(),
            });
        }
        let parse = |col: usize| {
            fields[col].parse::<usize>().map_err(|_| Error::Parse {
                row,
                col,
                value: fields[col].to_string(),
            })
        };
        pairs.push((parse(0)?, parse(1)?));
    }
    Ok(pairs)
}

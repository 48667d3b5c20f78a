//! Fixed-width binary row store with exact read accounting.
//!
//! # File layout
//!
//! A store file begins with a 22-byte header:
//!
//! | offset | size | content                          |
//! |--------|------|----------------------------------|
//! | 0      | 4    | magic bytes `"BAGM"`             |
//! | 4      | 2    | format version, `u16` LE         |
//! | 6      | 8    | schema digest, `u64` LE          |
//! | 14     | 8    | row count `N`, `u64` LE          |
//!
//! followed by `N` fixed-width records. Every field occupies 8 bytes,
//! little-endian: numeric and response fields as `f64` bits, categorical
//! fields as a `u64` level code. Fixed-width records make random access a
//! single offset computation, which is what lets subsample fitting touch
//! only the rows it draws.
//!
//! The column layout itself lives in a JSON sidecar at
//! `<path>.schema.json`; the header stores only the schema's digest so a
//! file can never be silently read under the wrong schema.
//!
//! # Read accounting
//!
//! Every row fetched through the public API increments an atomic counter,
//! observable via [`RowStore::read_counter`]. Fitting an ensemble of `K`
//! subsamples of size `n` reads exactly `n * K` rows — the counter makes
//! that contract checkable.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sampler::hash64;

/// Store format version written to and accepted from headers.
pub const STORE_VERSION: u16 = 1;

/// Magic bytes at the start of every store file.
pub const STORE_MAGIC: [u8; 4] = *b"BAGM";

/// Total header size in bytes.
pub const HEADER_LEN: u64 = 22;

/// Bytes per field in a record.
const FIELD_BYTES: usize = 8;

/// How a column's 8-byte field is interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// An `f64` covariate. When the column was standardized at ingest, the
    /// original population mean and standard deviation are recorded here.
    Numeric {
        mean: Option<f64>,
        sd: Option<f64>,
    },
    /// A `u64` code indexing into `levels`. The first level is the
    /// baseline: expansion emits one indicator per remaining level.
    Categorical { levels: Vec<String> },
    /// The `f64` outcome the model is fit against.
    Response,
}

/// A named column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    /// A plain numeric covariate.
    pub fn numeric(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Numeric {
                mean: None,
                sd: None,
            },
        }
    }

    /// A numeric covariate carrying the moments it was standardized with.
    pub fn numeric_standardized(name: impl Into<String>, mean: f64, sd: f64) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Numeric {
                mean: Some(mean),
                sd: Some(sd),
            },
        }
    }

    /// A categorical covariate with an ordered level set; `levels[0]` is
    /// the baseline.
    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Categorical { levels },
        }
    }

    /// The response column.
    pub fn response(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Response,
        }
    }

    /// One-line human-readable description of a covariate column, or
    /// `None` for the response (it is reported separately).
    pub fn describe(&self) -> Option<String> {
        match &self.kind {
            ColumnKind::Numeric {
                mean: Some(m),
                sd: Some(s),
            } => Some(format!(
                "{:24} numeric, standardized (mean {m:.6}, sd {s:.6})",
                self.name
            )),
            ColumnKind::Numeric { .. } => {
                Some(format!("{:24} numeric, stored as-is", self.name))
            }
            ColumnKind::Categorical { levels } => Some(format!(
                "{:24} categorical, {} levels (baseline {:?})",
                self.name,
                levels.len(),
                levels[0]
            )),
            ColumnKind::Response => None,
        }
    }
}

/// Ordered column layout of a store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    /// Validate and build a schema. Requires unique non-empty column
    /// names, exactly one response column, and unique level names within
    /// each categorical column.
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::invalid("schema has no columns"));
        }
        let mut names = std::collections::HashSet::new();
        let mut responses = 0usize;
        for col in &columns {
            if col.name.is_empty() {
                return Err(Error::invalid("schema column with empty name"));
            }
            if !names.insert(col.name.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate column name {:?}",
                    col.name
                )));
            }
            match &col.kind {
                ColumnKind::Response => responses += 1,
                ColumnKind::Categorical { levels } => {
                    if levels.is_empty() {
                        return Err(Error::invalid(format!(
                            "categorical column {:?} has no levels",
                            col.name
                        )));
                    }
                    let mut seen = std::collections::HashSet::new();
                    for l in levels {
                        if !seen.insert(l.as_str()) {
                            return Err(Error::invalid(format!(
                                "duplicate level {l:?} in column {:?}",
                                col.name
                            )));
                        }
                    }
                }
                ColumnKind::Numeric { .. } => {}
            }
        }
        if responses != 1 {
            return Err(Error::invalid(format!(
                "schema must have exactly one response column, found {responses}"
            )));
        }
        Ok(Schema { columns })
    }

    /// The columns in record order.
    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Number of fields per record.
    pub fn n_fields(&self) -> usize {
        self.columns.len()
    }

    /// Bytes per record.
    pub fn record_bytes(&self) -> usize {
        self.columns.len() * FIELD_BYTES
    }

    /// Number of covariate coordinates after baseline-dropping expansion:
    /// one per numeric column, `levels - 1` per categorical column.
    pub fn covariate_dim(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Numeric { .. } => 1,
                ColumnKind::Categorical { levels } => levels.len() - 1,
                ColumnKind::Response => 0,
            })
            .sum()
    }

    /// Names of the expanded covariate coordinates, in record order.
    /// Indicator coordinates are written `column=level`.
    pub fn expanded_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.covariate_dim());
        for col in &self.columns {
            match &col.kind {
                ColumnKind::Numeric { .. } => names.push(col.name.clone()),
                ColumnKind::Categorical { levels } => {
                    for level in &levels[1..] {
                        names.push(format!("{}={}", col.name, level));
                    }
                }
                ColumnKind::Response => {}
            }
        }
        names
    }

    /// Name of the response column.
    pub fn response_name(&self) -> &str {
        self.columns
            .iter()
            .find(|c| matches!(c.kind, ColumnKind::Response))
            .map(|c| c.name.as_str())
            .expect("schema invariant: one response column")
    }

    /// Structural digest of the schema. Any change to column names, order,
    /// kinds, level sets, or recorded standardization moments changes the
    /// digest.
    pub fn digest(&self) -> u64 {
        fn push_str(parts: &mut Vec<u64>, s: &str) {
            let bytes = s.as_bytes();
            parts.push(bytes.len() as u64);
            for chunk in bytes.chunks(FIELD_BYTES) {
                let mut b = [0u8; FIELD_BYTES];
                b[..chunk.len()].copy_from_slice(chunk);
                parts.push(u64::from_le_bytes(b));
            }
        }
        fn push_opt(parts: &mut Vec<u64>, v: Option<f64>) {
            match v {
                Some(x) => {
                    parts.push(1);
                    parts.push(x.to_bits());
                }
                None => parts.push(0),
            }
        }

        let mut parts = vec![STORE_VERSION as u64, self.columns.len() as u64];
        for col in &self.columns {
            match &col.kind {
                ColumnKind::Numeric { mean, sd } => {
                    parts.push(1);
                    push_str(&mut parts, &col.name);
                    push_opt(&mut parts, *mean);
                    push_opt(&mut parts, *sd);
                }
                ColumnKind::Categorical { levels } => {
                    parts.push(2);
                    push_str(&mut parts, &col.name);
                    parts.push(levels.len() as u64);
                    for level in levels {
                        push_str(&mut parts, level);
                    }
                }
                ColumnKind::Response => {
                    parts.push(3);
                    push_str(&mut parts, &col.name);
                }
            }
        }
        hash64(&parts)
    }

    /// Check one row of field values against the schema.
    fn validate_values(&self, values: &[FieldValue], row: u64) -> Result<()> {
        if values.len() != self.columns.len() {
            return Err(Error::RaggedRow {
                row,
                expected: self.columns.len(),
                actual: values.len(),
            });
        }
        for (col, value) in self.columns.iter().zip(values) {
            match (&col.kind, value) {
                (ColumnKind::Numeric { .. } | ColumnKind::Response, FieldValue::Numeric(v)) => {
                    if !v.is_finite() {
                        return Err(Error::invalid(format!(
                            "non-finite value {v} for column {:?} at row {row}",
                            col.name
                        )));
                    }
                }
                (ColumnKind::Categorical { levels }, FieldValue::Code(c)) => {
                    if *c as usize >= levels.len() {
                        return Err(Error::invalid(format!(
                            "level code {c} out of range for column {:?} ({} levels) at row {row}",
                            col.name,
                            levels.len()
                        )));
                    }
                }
                (_, _) => {
                    return Err(Error::invalid(format!(
                        "field type mismatch for column {:?} at row {row}",
                        col.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Encode one validated row into `out` (cleared first).
    fn encode_into(&self, values: &[FieldValue], out: &mut Vec<u8>) {
        out.clear();
        for value in values {
            match value {
                FieldValue::Numeric(v) => out.extend_from_slice(&v.to_le_bytes()),
                FieldValue::Code(c) => out.extend_from_slice(&c.to_le_bytes()),
            }
        }
    }

    /// Decode one record into an expanded covariate row and response.
    /// `x_row` must have length `covariate_dim()`.
    fn decode_into(&self, record: &[u8], row: u64, x_row: &mut [f64], y: &mut f64) -> Result<()> {
        debug_assert_eq!(record.len(), self.record_bytes());
        let mut offset = 0usize;
        let mut xj = 0usize;
        for col in &self.columns {
            let field: [u8; FIELD_BYTES] =
                record[offset..offset + FIELD_BYTES].try_into().unwrap();
            offset += FIELD_BYTES;
            match &col.kind {
                ColumnKind::Numeric { .. } => {
                    x_row[xj] = f64::from_le_bytes(field);
                    xj += 1;
                }
                ColumnKind::Categorical { levels } => {
                    let code = u64::from_le_bytes(field);
                    if code as usize >= levels.len() {
                        return Err(Error::CorruptHeader {
                            reason: format!(
                                "record {row}: level code {code} out of range for column {:?} ({} levels)",
                                col.name,
                                levels.len()
                            ),
                        });
                    }
                    for level_idx in 1..levels.len() {
                        x_row[xj] = if code as usize == level_idx { 1.0 } else { 0.0 };
                        xj += 1;
                    }
                }
                ColumnKind::Response => {
                    *y = f64::from_le_bytes(field);
                }
            }
        }
        Ok(())
    }
}

/// One field of a row, matching the column kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldValue {
    /// Value for a numeric or response column.
    Numeric(f64),
    /// Level code for a categorical column.
    Code(u64),
}

/// A decoded batch of rows: the expanded design matrix and the response.
#[derive(Debug, Clone)]
pub struct DataBlock {
    /// Design matrix, one row per fetched row, `covariate_dim()` columns.
    pub x: Matrix,
    /// Response vector, aligned with the rows of `x`.
    pub y: Vec<f64>,
}

impl DataBlock {
    /// Number of rows in the block.
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }
}

enum Backing {
    /// Record bytes only (no header).
    Mem(Vec<u8>),
    /// Open store file; records start at [`HEADER_LEN`].
    File(File),
}

/// An open row store.
pub struct RowStore {
    schema: Schema,
    n_rows: u64,
    backing: Backing,
    reads: AtomicU64,
}

impl std::fmt::Debug for RowStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RowStore")
            .field("n_rows", &self.n_rows)
            .field("covariate_dim", &self.covariate_dim())
            .field("reads", &self.read_counter())
            .finish_non_exhaustive()
    }
}

impl RowStore {
    /// Open a store file, validating magic, version, length, and schema
    /// digest against the JSON sidecar at `<path>.schema.json`.
    pub fn open(path: impl AsRef<Path>) -> Result<RowStore> {
        let path = path.as_ref();
        let sidecar = sidecar_path(path);
        let schema_json = std::fs::read_to_string(&sidecar).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::CorruptHeader {
                    reason: format!("schema sidecar not found at {}", sidecar.display()),
                }
            } else {
                Error::Io(e)
            }
        })?;
        let schema: Schema = serde_json::from_str(&schema_json).map_err(|e| {
            Error::CorruptHeader {
                reason: format!("schema sidecar is not valid: {e}"),
            }
        })?;
        // Re-validate structural invariants on whatever the sidecar held.
        let schema = Schema::new(schema.columns)?;

        let mut file = File::open(path)?;
        let mut header = [0u8; HEADER_LEN as usize];
        let actual_len = file.metadata()?.len();
        if actual_len < HEADER_LEN {
            return Err(Error::TruncatedFile {
                expected: HEADER_LEN,
                actual: actual_len,
            });
        }
        file.read_exact(&mut header)?;

        if header[0..4] != STORE_MAGIC {
            return Err(Error::CorruptHeader {
                reason: format!("bad magic bytes {:?}", &header[0..4]),
            });
        }
        let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
        if version != STORE_VERSION {
            return Err(Error::CorruptHeader {
                reason: format!("unsupported format version {version}"),
            });
        }
        let header_digest = u64::from_le_bytes(header[6..14].try_into().unwrap());
        let schema_digest = schema.digest();
        if header_digest != schema_digest {
            return Err(Error::SchemaMismatch {
                expected: schema_digest,
                actual: header_digest,
            });
        }
        let n_rows = u64::from_le_bytes(header[14..22].try_into().unwrap());

        let record_bytes = schema.record_bytes() as u64;
        let expected_len = n_rows
            .checked_mul(record_bytes)
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::CorruptHeader {
                reason: format!("row count {n_rows} overflows the addressable file size"),
            })?;
        if actual_len < expected_len {
            return Err(Error::TruncatedFile {
                expected: expected_len,
                actual: actual_len,
            });
        }
        if actual_len > expected_len {
            return Err(Error::CorruptHeader {
                reason: format!(
                    "file is {actual_len} bytes but header implies {expected_len}"
                ),
            });
        }

        Ok(RowStore {
            schema,
            n_rows,
            backing: Backing::File(file),
            reads: AtomicU64::new(0),
        })
    }

    /// The store's schema.
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Total number of rows.
    pub fn n_rows(&self) -> u64 {
        self.n_rows
    }

    /// Expanded covariate dimension (delegates to the schema).
    pub fn covariate_dim(&self) -> usize {
        self.schema.covariate_dim()
    }

    /// Rows fetched through the public API since the store was opened (or
    /// since the last [`RowStore::reset_read_counter`]).
    pub fn read_counter(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    /// Reset the read counter, returning its previous value.
    pub fn reset_read_counter(&self) -> u64 {
        self.reads.swap(0, Ordering::Relaxed)
    }

    /// Fetch the given rows (duplicates allowed, as produced by sampling
    /// with replacement) into a decoded block. Counts `indices.len()` reads.
    pub fn fetch_rows(&self, indices: &[u64]) -> Result<DataBlock> {
        for &idx in indices {
            if idx >= self.n_rows {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    len: self.n_rows,
                });
            }
        }
        let record_bytes = self.schema.record_bytes();
        let p = self.schema.covariate_dim();
        let mut x = Matrix::zeros(indices.len(), p);
        let mut y = vec![0.0; indices.len()];
        let mut record = vec![0u8; record_bytes];
        for (out_row, &idx) in indices.iter().enumerate() {
            self.read_record(idx, &mut record)?;
            self.schema
                .decode_into(&record, idx, x.row_mut(out_row), &mut y[out_row])?;
        }
        self.reads.fetch_add(indices.len() as u64, Ordering::Relaxed);
        Ok(DataBlock { x, y })
    }

    /// Fetch a contiguous range of `len` rows starting at `start`. Counts
    /// `len` reads. Used for chunked full scans.
    pub fn fetch_range(&self, start: u64, len: usize) -> Result<DataBlock> {
        let end = start
            .checked_add(len as u64)
            .ok_or(Error::IndexOutOfRange {
                index: u64::MAX,
                len: self.n_rows,
            })?;
        if end > self.n_rows {
            return Err(Error::IndexOutOfRange {
                index: end.saturating_sub(1),
                len: self.n_rows,
            });
        }
        let record_bytes = self.schema.record_bytes();
        let p = self.schema.covariate_dim();
        let mut x = Matrix::zeros(len, p);
        let mut y = vec![0.0; len];
        let mut buf = vec![0u8; record_bytes * len];
        self.read_records(start, &mut buf)?;
        for out_row in 0..len {
            let record = &buf[out_row * record_bytes..(out_row + 1) * record_bytes];
            self.schema.decode_into(
                record,
                start + out_row as u64,
                x.row_mut(out_row),
                &mut y[out_row],
            )?;
        }
        self.reads.fetch_add(len as u64, Ordering::Relaxed);
        Ok(DataBlock { x, y })
    }

    /// Read one raw record (bounds already checked).
    fn read_record(&self, row: u64, buf: &mut [u8]) -> Result<()> {
        let record_bytes = self.schema.record_bytes() as u64;
        match &self.backing {
            Backing::Mem(data) => {
                let start = (row * record_bytes) as usize;
                buf.copy_from_slice(&data[start..start + record_bytes as usize]);
                Ok(())
            }
            Backing::File(file) => {
                use std::os::unix::fs::FileExt;
                let offset = HEADER_LEN + row * record_bytes;
                file.read_exact_at(buf, offset)?;
                Ok(())
            }
        }
    }

    /// Read a contiguous run of raw records (bounds already checked).
    fn read_records(&self, start: u64, buf: &mut [u8]) -> Result<()> {
        let record_bytes = self.schema.record_bytes() as u64;
        match &self.backing {
            Backing::Mem(data) => {
                let begin = (start * record_bytes) as usize;
                buf.copy_from_slice(&data[begin..begin + buf.len()]);
                Ok(())
            }
            Backing::File(file) => {
                use std::os::unix::fs::FileExt;
                let offset = HEADER_LEN + start * record_bytes;
                file.read_exact_at(buf, offset)?;
                Ok(())
            }
        }
    }
}

/// Path of the schema sidecar for a store file.
pub fn sidecar_path(store_path: &Path) -> PathBuf {
    let mut name = store_path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".schema.json");
    store_path.with_file_name(name)
}

/// Streaming writer for an on-disk store with a declared row count.
pub struct FileStoreWriter {
    writer: BufWriter<File>,
    schema: Schema,
    path: PathBuf,
    declared_rows: u64,
    written: u64,
    scratch: Vec<u8>,
}

impl FileStoreWriter {
    /// Create the store file and write its header. The number of rows must
    /// be known up front; [`FileStoreWriter::finish`] fails if the appended
    /// count differs.
    pub fn create(path: impl AsRef<Path>, schema: Schema, n_rows: u64) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path)?;
        let mut writer = BufWriter::new(file);
        writer.write_all(&STORE_MAGIC)?;
        writer.write_all(&STORE_VERSION.to_le_bytes())?;
        writer.write_all(&schema.digest().to_le_bytes())?;
        writer.write_all(&n_rows.to_le_bytes())?;
        Ok(FileStoreWriter {
            writer,
            schema,
            path,
            declared_rows: n_rows,
            written: 0,
            scratch: Vec::new(),
        })
    }

    /// Append one row. Values must match the schema's column kinds.
    pub fn append_row(&mut self, values: &[FieldValue]) -> Result<()> {
        if self.written >= self.declared_rows {
            return Err(Error::invalid(format!(
                "store declared {} rows; cannot append more",
                self.declared_rows
            )));
        }
        self.schema.validate_values(values, self.written)?;
        let mut scratch = std::mem::take(&mut self.scratch);
        self.schema.encode_into(values, &mut scratch);
        let result = self.writer.write_all(&scratch);
        self.scratch = scratch;
        result?;
        self.written += 1;
        Ok(())
    }

    /// Flush the file and write the schema sidecar. Fails if the number of
    /// appended rows differs from the declared count.
    pub fn finish(mut self) -> Result<()> {
        if self.written != self.declared_rows {
            return Err(Error::invalid(format!(
                "store declared {} rows but {} were appended",
                self.declared_rows, self.written
            )));
        }
        self.writer.flush()?;
        let sidecar = sidecar_path(&self.path);
        let json = serde_json::to_string_pretty(&self.schema)
            .expect("schema serialization cannot fail");
        std::fs::write(&sidecar, json)?;
        Ok(())
    }
}

/// Builder for an in-memory store, mainly for simulation and tests.
pub struct MemStoreBuilder {
    schema: Schema,
    data: Vec<u8>,
    rows: u64,
    scratch: Vec<u8>,
}

impl MemStoreBuilder {
    /// Start an empty in-memory store.
    pub fn new(schema: Schema) -> Self {
        MemStoreBuilder {
            schema,
            data: Vec::new(),
            rows: 0,
            scratch: Vec::new(),
        }
    }

    /// Pre-allocate space for `n_rows` records.
    pub fn with_capacity(schema: Schema, n_rows: u64) -> Self {
        let bytes = (n_rows as usize).saturating_mul(schema.record_bytes());
        MemStoreBuilder {
            schema,
            data: Vec::with_capacity(bytes),
            rows: 0,
            scratch: Vec::new(),
        }
    }

    /// Append one row. Values must match the schema's column kinds.
    pub fn append_row(&mut self, values: &[FieldValue]) -> Result<()> {
        self.schema.validate_values(values, self.rows)?;
        let mut scratch = std::mem::take(&mut self.scratch);
        self.schema.encode_into(values, &mut scratch);
        self.data.extend_from_slice(&scratch);
        self.scratch = scratch;
        self.rows += 1;
        Ok(())
    }

    /// Finalize into an openable store.
    pub fn finish(self) -> RowStore {
        RowStore {
            schema: self.schema,
            n_rows: self.rows,
            backing: Backing::Mem(self.data),
            reads: AtomicU64::new(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_schema() -> Schema {
        Schema::new(vec![
            Column::numeric("x1"),
            Column::categorical(
                "grade",
                vec!["a".to_string(), "b".to_string(), "c".to_string()],
            ),
            Column::response("y"),
        ])
        .unwrap()
    }

    fn sample_rows() -> Vec<Vec<FieldValue>> {
        vec![
            vec![
                FieldValue::Numeric(1.5),
                FieldValue::Code(0),
                FieldValue::Numeric(10.0),
            ],
            vec![
                FieldValue::Numeric(-2.0),
                FieldValue::Code(1),
                FieldValue::Numeric(20.0),
            ],
            vec![
                FieldValue::Numeric(0.25),
                FieldValue::Code(2),
                FieldValue::Numeric(30.0),
            ],
        ]
    }

    fn mem_store() -> RowStore {
        let mut b = MemStoreBuilder::new(test_schema());
        for row in sample_rows() {
            b.append_row(&row).unwrap();
        }
        b.finish()
    }

    #[test]
    fn schema_dimensions_and_names() {
        let s = test_schema();
        assert_eq!(s.n_fields(), 3);
        assert_eq!(s.record_bytes(), 24);
        assert_eq!(s.covariate_dim(), 3); // x1 + two indicators
        assert_eq!(s.expanded_names(), vec!["x1", "grade=b", "grade=c"]);
        assert_eq!(s.response_name(), "y");
    }

    #[test]
    fn digest_survives_the_sidecar_json_roundtrip() {
        // Standardization moments are usually irrational; the digest check
        // at open time needs them back bit-for-bit from the JSON sidecar.
        let schema = Schema::new(vec![
            Column::numeric_standardized("age", 45.0, 125f64.sqrt()),
            Column::numeric_standardized("w", 1.0 / 3.0, 2.0 / 7.0),
            Column::response("y"),
        ])
        .unwrap();
        let json = serde_json::to_string(&schema).unwrap();
        let back: Schema = serde_json::from_str(&json).unwrap();
        assert_eq!(schema, back);
        assert_eq!(schema.digest(), back.digest());
    }

    #[test]
    fn schema_rejects_invalid_layouts() {
        assert!(Schema::new(vec![]).is_err());
        assert!(Schema::new(vec![Column::numeric("x")]).is_err()); // no response
        assert!(Schema::new(vec![
            Column::response("y"),
            Column::response("z")
        ])
        .is_err());
        assert!(Schema::new(vec![
            Column::numeric("x"),
            Column::numeric("x"),
            Column::response("y"),
        ])
        .is_err());
        assert!(Schema::new(vec![
            Column::categorical("g", vec![]),
            Column::response("y"),
        ])
        .is_err());
        assert!(Schema::new(vec![
            Column::categorical("g", vec!["a".into(), "a".into()]),
            Column::response("y"),
        ])
        .is_err());
    }

    #[test]
    fn digest_is_sensitive_to_structure() {
        let base = test_schema().digest();
        let renamed = Schema::new(vec![
            Column::numeric("x9"),
            Column::categorical("grade", vec!["a".into(), "b".into(), "c".into()]),
            Column::response("y"),
        ])
        .unwrap()
        .digest();
        let reordered_levels = Schema::new(vec![
            Column::numeric("x1"),
            Column::categorical("grade", vec!["b".into(), "a".into(), "c".into()]),
            Column::response("y"),
        ])
        .unwrap()
        .digest();
        let with_moments = Schema::new(vec![
            Column::numeric_standardized("x1", 0.0, 1.0),
            Column::categorical("grade", vec!["a".into(), "b".into(), "c".into()]),
            Column::response("y"),
        ])
        .unwrap()
        .digest();
        assert_ne!(base, renamed);
        assert_ne!(base, reordered_levels);
        assert_ne!(base, with_moments);
        // Stable across calls.
        assert_eq!(base, test_schema().digest());
    }

    #[test]
    fn mem_roundtrip_expands_dummies() {
        let store = mem_store();
        assert_eq!(store.n_rows(), 3);
        let block = store.fetch_rows(&[0, 1, 2]).unwrap();
        assert_eq!(block.n_rows(), 3);
        // Row 0: baseline level -> both indicators zero.
        assert_eq!(block.x.row(0), &[1.5, 0.0, 0.0]);
        // Row 1: level "b" -> first indicator.
        assert_eq!(block.x.row(1), &[-2.0, 1.0, 0.0]);
        // Row 2: level "c" -> second indicator.
        assert_eq!(block.x.row(2), &[0.25, 0.0, 1.0]);
        assert_eq!(block.y, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn fetch_handles_duplicates_and_order() {
        let store = mem_store();
        let block = store.fetch_rows(&[2, 0, 2]).unwrap();
        assert_eq!(block.y, vec![30.0, 10.0, 30.0]);
        assert_eq!(block.x.row(0), block.x.row(2));
    }

    #[test]
    fn fetch_range_matches_fetch_rows() {
        let store = mem_store();
        let a = store.fetch_range(1, 2).unwrap();
        let b = store.fetch_rows(&[1, 2]).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn read_counter_counts_every_fetched_row() {
        let store = mem_store();
        assert_eq!(store.read_counter(), 0);
        store.fetch_rows(&[0, 1]).unwrap();
        assert_eq!(store.read_counter(), 2);
        store.fetch_rows(&[1, 1, 1]).unwrap(); // duplicates count
        assert_eq!(store.read_counter(), 5);
        store.fetch_range(0, 3).unwrap();
        assert_eq!(store.read_counter(), 8);
        assert_eq!(store.reset_read_counter(), 8);
        assert_eq!(store.read_counter(), 0);
    }

    #[test]
    fn out_of_range_fetches_fail() {
        let store = mem_store();
        assert!(matches!(
            store.fetch_rows(&[3]),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
        assert!(matches!(
            store.fetch_range(2, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn builder_validates_rows() {
        let mut b = MemStoreBuilder::new(test_schema());
        // Wrong arity.
        assert!(matches!(
            b.append_row(&[FieldValue::Numeric(1.0)]),
            Err(Error::RaggedRow { .. })
        ));
        // Kind mismatch.
        assert!(b
            .append_row(&[
                FieldValue::Code(0),
                FieldValue::Code(0),
                FieldValue::Numeric(0.0)
            ])
            .is_err());
        // Level code out of range.
        assert!(b
            .append_row(&[
                FieldValue::Numeric(0.0),
                FieldValue::Code(3),
                FieldValue::Numeric(0.0)
            ])
            .is_err());
        // Non-finite numeric.
        assert!(b
            .append_row(&[
                FieldValue::Numeric(f64::NAN),
                FieldValue::Code(0),
                FieldValue::Numeric(0.0)
            ])
            .is_err());
    }

    #[test]
    fn file_roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.store");
        let mut w = FileStoreWriter::create(&path, test_schema(), 3).unwrap();
        for row in sample_rows() {
            w.append_row(&row).unwrap();
        }
        w.finish().unwrap();

        assert!(sidecar_path(&path).exists());

        let store = RowStore::open(&path).unwrap();
        assert_eq!(store.n_rows(), 3);
        let from_file = store.fetch_rows(&[0, 1, 2]).unwrap();
        let from_mem = mem_store().fetch_rows(&[0, 1, 2]).unwrap();
        assert_eq!(from_file.x, from_mem.x);
        assert_eq!(from_file.y, from_mem.y);
        assert_eq!(store.read_counter(), 3);
    }

    #[test]
    fn header_bytes_are_exactly_as_documented() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.store");
        let schema = test_schema();
        let digest = schema.digest();
        let mut w = FileStoreWriter::create(&path, schema, 3).unwrap();
        for row in sample_rows() {
            w.append_row(&row).unwrap();
        }
        w.finish().unwrap();

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 22 + 3 * 24);
        assert_eq!(&bytes[0..4], b"BAGM");
        assert_eq!(u16::from_le_bytes(bytes[4..6].try_into().unwrap()), 1);
        assert_eq!(
            u64::from_le_bytes(bytes[6..14].try_into().unwrap()),
            digest
        );
        assert_eq!(u64::from_le_bytes(bytes[14..22].try_into().unwrap()), 3);
        // First record, first field: 1.5 as little-endian f64 bits.
        assert_eq!(
            f64::from_le_bytes(bytes[22..30].try_into().unwrap()),
            1.5
        );
        // First record, second field: level code 0.
        assert_eq!(u64::from_le_bytes(bytes[30..38].try_into().unwrap()), 0);
    }

    #[test]
    fn writer_enforces_declared_row_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.store");
        let mut w = FileStoreWriter::create(&path, test_schema(), 2).unwrap();
        let rows = sample_rows();
        w.append_row(&rows[0]).unwrap();
        // Finishing early fails.
        assert!(w.finish().is_err());

        let mut w = FileStoreWriter::create(&path, test_schema(), 1).unwrap();
        w.append_row(&rows[0]).unwrap();
        // Appending beyond the declared count fails.
        assert!(w.append_row(&rows[1]).is_err());
        w.finish().unwrap();
    }

    #[test]
    fn corruption_is_detected_on_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.store");
        let mut w = FileStoreWriter::create(&path, test_schema(), 3).unwrap();
        for row in sample_rows() {
            w.append_row(&row).unwrap();
        }
        w.finish().unwrap();
        let pristine = std::fs::read(&path).unwrap();

        // Bad magic.
        let mut bytes = pristine.clone();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            RowStore::open(&path),
            Err(Error::CorruptHeader { .. })
        ));

        // Unsupported version.
        let mut bytes = pristine.clone();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            RowStore::open(&path),
            Err(Error::CorruptHeader { .. })
        ));

        // Tampered digest.
        let mut bytes = pristine.clone();
        bytes[6] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            RowStore::open(&path),
            Err(Error::SchemaMismatch { .. })
        ));

        // Truncated records.
        std::fs::write(&path, &pristine[..pristine.len() - 8]).unwrap();
        assert!(matches!(
            RowStore::open(&path),
            Err(Error::TruncatedFile { .. })
        ));

        // Trailing garbage.
        let mut bytes = pristine.clone();
        bytes.extend_from_slice(&[0u8; 8]);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            RowStore::open(&path),
            Err(Error::CorruptHeader { .. })
        ));

        // Restore the data file but tamper with the sidecar schema: the
        // digest no longer matches.
        std::fs::write(&path, &pristine).unwrap();
        let sidecar = sidecar_path(&path);
        let tampered = std::fs::read_to_string(&sidecar)
            .unwrap()
            .replace("grade", "grado");
        std::fs::write(&sidecar, tampered).unwrap();
        assert!(matches!(
            RowStore::open(&path),
            Err(Error::SchemaMismatch { .. })
        ));

        // Remove the sidecar entirely.
        std::fs::remove_file(&sidecar).unwrap();
        assert!(matches!(
            RowStore::open(&path),
            Err(Error::CorruptHeader { .. })
        ));
    }
}

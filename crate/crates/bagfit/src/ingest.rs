//! CSV ingestion into the binary row store.
//!
//! Ingestion makes two streaming passes over the input so that it never
//! holds the dataset in memory:
//!
//! 1. **Moments pass** — validates every row, counts rows, accumulates the
//!    population mean and standard deviation of each numeric covariate,
//!    and collects categorical levels in first-seen order (or validates
//!    them against declared level sets).
//! 2. **Encode pass** — writes fixed-width records: numeric covariates
//!    standardized to `(x - mean) / sd`, categorical values as level
//!    codes, and the response unchanged.
//!
//! The resulting store records the moments and level sets in its schema,
//! so a fitted model's coefficients can always be mapped back to the
//! original units.

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::store::{Column, FieldValue, FileStoreWriter, RowStore, Schema};

/// Name of the constant column added by [`IngestOptions::add_intercept`].
pub const INTERCEPT_NAME: &str = "intercept";

/// How a CSV column enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    /// Continuous covariate, standardized during ingestion.
    Numeric,
    /// Discrete covariate, expanded to indicator columns at fit time.
    Categorical,
    /// The modeled outcome, stored unchanged.
    Response,
}

impl ColumnRole {
    fn parse(text: &str) -> Result<Self> {
        match text {
            "numeric" => Ok(ColumnRole::Numeric),
            "categorical" => Ok(ColumnRole::Categorical),
            "response" => Ok(ColumnRole::Response),
            other => Err(Error::invalid(format!(
                "unknown column role {other:?}; expected numeric, categorical, or response"
            ))),
        }
    }
}

/// One requested column: its CSV header name, its role, and (optionally)
/// a closed set of admissible levels for a categorical column. When levels
/// are declared, a value outside the set fails ingestion with
/// [`Error::UnknownLevel`]; without them, levels are collected from the
/// data in first-seen order.
#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
    pub levels: Option<Vec<String>>,
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            role: ColumnRole::Numeric,
            levels: None,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            role: ColumnRole::Categorical,
            levels: None,
        }
    }

    pub fn categorical_with_levels(name: impl Into<String>, levels: Vec<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            role: ColumnRole::Categorical,
            levels: Some(levels),
        }
    }

    pub fn response(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            role: ColumnRole::Response,
            levels: None,
        }
    }
}

/// Parse a comma-separated column specification such as
/// `"y:response,age:numeric,city:categorical"`.
pub fn parse_column_specs(text: &str) -> Result<Vec<ColumnSpec>> {
    let mut specs = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(Error::invalid(
                "empty entry in column specification; expected name:role pairs",
            ));
        }
        let (name, role) = part.split_once(':').ok_or_else(|| {
            Error::invalid(format!(
                "column entry {part:?} is not of the form name:role"
            ))
        })?;
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::invalid(format!("column entry {part:?} has an empty name")));
        }
        specs.push(ColumnSpec {
            name: name.to_string(),
            role: ColumnRole::parse(role.trim())?,
            levels: None,
        });
    }
    Ok(specs)
}

/// Ingestion settings.
#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Columns to ingest; CSV columns not listed here are ignored.
    pub specs: Vec<ColumnSpec>,
    /// Prepend a constant-one covariate named [`INTERCEPT_NAME`].
    pub add_intercept: bool,
}

impl IngestOptions {
    pub fn new(specs: Vec<ColumnSpec>) -> Self {
        IngestOptions {
            specs,
            add_intercept: false,
        }
    }

    pub fn with_intercept(mut self) -> Self {
        self.add_intercept = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::invalid("no columns requested"));
        }
        let responses = self
            .specs
            .iter()
            .filter(|s| s.role == ColumnRole::Response)
            .count();
        if responses != 1 {
            return Err(Error::invalid(format!(
                "exactly one response column is required, got {responses}"
            )));
        }
        if self.specs.len()
            == self
                .specs
                .iter()
                .filter(|s| s.role == ColumnRole::Response)
                .count()
        {
            return Err(Error::invalid("at least one covariate column is required"));
        }
        for (i, a) in self.specs.iter().enumerate() {
            if self.specs[i + 1..].iter().any(|b| b.name == a.name) {
                return Err(Error::invalid(format!(
                    "column {:?} is listed more than once",
                    a.name
                )));
            }
            if let Some(levels) = &a.levels {
                if a.role != ColumnRole::Categorical {
                    return Err(Error::invalid(format!(
                        "column {:?} declares levels but is not categorical",
                        a.name
                    )));
                }
                if levels.is_empty() {
                    return Err(Error::invalid(format!(
                        "column {:?} declares an empty level set",
                        a.name
                    )));
                }
            }
            if self.add_intercept && a.name == INTERCEPT_NAME {
                return Err(Error::invalid(format!(
                    "column name {INTERCEPT_NAME:?} collides with the added intercept"
                )));
            }
        }
        Ok(())
    }
}

/// Summary of a completed ingestion.
#[derive(Debug, Clone)]
pub struct IngestReport {
    /// Rows written to the store.
    pub n_rows: u64,
    /// Final schema, including standardization moments and level sets.
    pub schema: Schema,
}

impl IngestReport {
    /// Human-readable description of what was ingested and how each
    /// column is represented in the store.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("rows: {}\n", self.n_rows));
        out.push_str(&format!(
            "covariates (expanded dimension {}):\n",
            self.schema.covariate_dim()
        ));
        for column in self.schema.columns() {
            match column.describe() {
                Some(line) => out.push_str(&format!("  {line}\n")),
                None => {}
            }
        }
        out.push_str(&format!("response: {}\n", self.schema.response_name()));
        out
    }
}

/// Per-column state carried from the moments pass into the encode pass.
enum ColumnState {
    Numeric { mean: f64, sd: f64 },
    Categorical { levels: Vec<String> },
    Response,
}

/// Streaming mean/variance accumulator (Welford's recurrence), using the
/// population divisor `N` so the stored moments describe the dataset
/// itself rather than an estimate of a larger population.
struct MomentAccumulator {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MomentAccumulator {
    fn new() -> Self {
        MomentAccumulator {
            count: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn population_sd(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }
}

/// Ingest a CSV file into a binary row store at `store_path`.
///
/// The input must have a header row naming every requested column. See
/// the module docs for the two-pass layout.
pub fn ingest_csv(
    csv_path: impl AsRef<Path>,
    store_path: impl AsRef<Path>,
    options: &IngestOptions,
) -> Result<IngestReport> {
    options.validate()?;
    let csv_path = csv_path.as_ref();

    let (n_rows, states) = moments_pass(File::open(csv_path)?, options)?;
    let schema = build_schema(options, &states)?;

    let mut writer = FileStoreWriter::create(store_path, schema.clone(), n_rows)?;
    encode_pass(File::open(csv_path)?, options, &states, |values| {
        writer.append_row(values)
    })?;
    writer.finish()?;

    Ok(IngestReport { n_rows, schema })
}

fn reader_for(input: impl Read) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

/// Resolve each requested column to its position in the CSV header.
fn header_positions(
    headers: &csv::StringRecord,
    options: &IngestOptions,
) -> Result<Vec<usize>> {
    options
        .specs
        .iter()
        .map(|spec| {
            headers
                .iter()
                .position(|h| h == spec.name)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "column {:?} not found in csv header {:?}",
                        spec.name,
                        headers.iter().collect::<Vec<_>>()
                    ))
                })
        })
        .collect()
}

fn parse_numeric(column: &str, value: &str, row: u64) -> Result<f64> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumericValue {
            column: column.to_string(),
            value: value.to_string(),
            row,
        }),
    }
}

fn moments_pass(input: impl Read, options: &IngestOptions) -> Result<(u64, Vec<ColumnState>)> {
    let mut rdr = reader_for(input);
    let headers = rdr.headers()?.clone();
    let positions = header_positions(&headers, options)?;
    let expected_fields = headers.len();

    struct Collect {
        moments: Option<MomentAccumulator>,
        levels: Vec<String>,
        level_index: HashMap<String, u64>,
        declared: bool,
    }
    let mut collectors: Vec<Collect> = options
        .specs
        .iter()
        .map(|spec| {
            let declared = spec.levels.is_some();
            let levels = spec.levels.clone().unwrap_or_default();
            let level_index = levels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.clone(), i as u64))
                .collect();
            Collect {
                moments: (spec.role == ColumnRole::Numeric).then(MomentAccumulator::new),
                levels,
                level_index,
                declared,
            }
        })
        .collect();

    let mut n_rows: u64 = 0;
    for record in rdr.records() {
        let record = record?;
        n_rows += 1;
        if record.len() != expected_fields {
            return Err(Error::RaggedRow {
                row: n_rows,
                expected: expected_fields,
                actual: record.len(),
            });
        }
        for ((spec, &pos), collect) in options
            .specs
            .iter()
            .zip(&positions)
            .zip(collectors.iter_mut())
        {
            let value = &record[pos];
            match spec.role {
                ColumnRole::Numeric => {
                    let x = parse_numeric(&spec.name, value, n_rows)?;
                    collect
                        .moments
                        .as_mut()
                        .expect("numeric columns accumulate moments")
                        .push(x);
                }
                ColumnRole::Categorical => {
                    if value.is_empty() {
                        return Err(Error::invalid(format!(
                            "column {:?} has an empty value at row {n_rows}; \
                             categorical levels must be non-empty",
                            spec.name
                        )));
                    }
                    if !collect.level_index.contains_key(value) {
                        if collect.declared {
                            return Err(Error::UnknownLevel {
                                column: spec.name.clone(),
                                level: value.to_string(),
                                row: n_rows,
                            });
                        }
                        collect
                            .level_index
                            .insert(value.to_string(), collect.levels.len() as u64);
                        collect.levels.push(value.to_string());
                    }
                }
                ColumnRole::Response => {
                    parse_numeric(&spec.name, value, n_rows)?;
                }
            }
        }
    }
    if n_rows == 0 {
        return Err(Error::EmptyInput);
    }

    let states = options
        .specs
        .iter()
        .zip(collectors)
        .map(|(spec, collect)| match spec.role {
            ColumnRole::Numeric => {
                let acc = collect.moments.expect("numeric columns accumulate moments");
                let sd = acc.population_sd();
                if sd <= 0.0 {
                    return Err(Error::ZeroVariance {
                        column: spec.name.clone(),
                    });
                }
                Ok(ColumnState::Numeric {
                    mean: acc.mean(),
                    sd,
                })
            }
            ColumnRole::Categorical => {
                if collect.levels.len() < 2 && !collect.declared {
                    return Err(Error::ZeroVariance {
                        column: spec.name.clone(),
                    });
                }
                Ok(ColumnState::Categorical {
                    levels: collect.levels,
                })
            }
            ColumnRole::Response => Ok(ColumnState::Response),
        })
        .collect::<Result<Vec<_>>>()?;

    Ok((n_rows, states))
}

fn build_schema(options: &IngestOptions, states: &[ColumnState]) -> Result<Schema> {
    let mut columns = Vec::with_capacity(states.len() + 1);
    if options.add_intercept {
        columns.push(Column::numeric(INTERCEPT_NAME));
    }
    for (spec, state) in options.specs.iter().zip(states) {
        columns.push(match state {
            ColumnState::Numeric { mean, sd } => {
                Column::numeric_standardized(&spec.name, *mean, *sd)
            }
            ColumnState::Categorical { levels, .. } => {
                Column::categorical(&spec.name, levels.clone())
            }
            ColumnState::Response => Column::response(&spec.name),
        });
    }
    Schema::new(columns)
}

fn encode_pass(
    input: impl Read,
    options: &IngestOptions,
    states: &[ColumnState],
    mut sink: impl FnMut(&[FieldValue]) -> Result<()>,
) -> Result<()> {
    let mut rdr = reader_for(input);
    let headers = rdr.headers()?.clone();
    let positions = header_positions(&headers, options)?;

    let level_maps: Vec<Option<HashMap<&str, u64>>> = states
        .iter()
        .map(|state| match state {
            ColumnState::Categorical { levels, .. } => Some(
                levels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.as_str(), i as u64))
                    .collect(),
            ),
            _ => None,
        })
        .collect();

    let mut row: u64 = 0;
    let mut values = Vec::with_capacity(states.len() + 1);
    for record in rdr.records() {
        let record = record?;
        row += 1;
        values.clear();
        if options.add_intercept {
            values.push(FieldValue::Numeric(1.0));
        }
        for (((spec, &pos), state), level_map) in options
            .specs
            .iter()
            .zip(&positions)
            .zip(states)
            .zip(&level_maps)
        {
            let value = &record[pos];
            values.push(match state {
                ColumnState::Numeric { mean, sd } => {
                    let x = parse_numeric(&spec.name, value, row)?;
                    FieldValue::Numeric((x - mean) / sd)
                }
                ColumnState::Categorical { .. } => {
                    let map = level_map.as_ref().expect("categorical state has a map");
                    let code = map.get(value).ok_or_else(|| Error::UnknownLevel {
                        column: spec.name.clone(),
                        level: value.to_string(),
                        row,
                    })?;
                    FieldValue::Code(*code)
                }
                ColumnState::Response => {
                    FieldValue::Numeric(parse_numeric(&spec.name, value, row)?)
                }
            });
        }
        sink(&values)?;
    }
    Ok(())
}

/// Ingest CSV text from memory into an in-memory store (test and example
/// convenience; the encoding is identical to [`ingest_csv`]).
pub fn ingest_csv_text(text: &str, options: &IngestOptions) -> Result<(RowStore, IngestReport)> {
    options.validate()?;
    let (n_rows, states) = moments_pass(text.as_bytes(), options)?;
    let schema = build_schema(options, &states)?;
    let mut builder = crate::store::MemStoreBuilder::with_capacity(schema.clone(), n_rows);
    encode_pass(text.as_bytes(), options, &states, |values| {
        builder.append_row(values)
    })?;
    Ok((builder.finish(), IngestReport { n_rows, schema }))
}

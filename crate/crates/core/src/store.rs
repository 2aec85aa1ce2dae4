//! Immutable in-memory columnar table loaded from CSV.
//!
//! Continuous attributes are stored as `f64` vectors; nominal attributes are
//! dictionary encoded, with member IDs handed out in first-occurrence order.
//! Everything that leaves this module as a member list is sorted, so results
//! never depend on row order.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema file: {0}")]
    SchemaFile(#[from] serde_json::Error),
    #[error("attribute `{0}` declared more than once")]
    DuplicateAttribute(String),
    #[error("schema does not match data: {0}")]
    SchemaMismatch(String),
    #[error("malformed row at line {line}: expected {expected} fields, found {found}")]
    MalformedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("parse error at line {line}, column `{column}`: `{value}` is not a number")]
    ParseError {
        line: u64,
        column: String,
        value: String,
    },
    #[error("null value at line {line}, column `{column}`")]
    NullValue { line: u64, column: String },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{attr}` is not {expected}")]
    WrongKind {
        attr: String,
        expected: AttributeKind,
    },
    #[error("attribute `{0}` has no rows")]
    EmptyDataset(String),
    #[error("column `{column}` has {found} values, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Nominal,
    Continuous,
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeKind::Nominal => f.write_str("nominal"),
            AttributeKind::Continuous => f.write_str("continuous"),
        }
    }
}

/// One entry of a schema declaration file: `[{"name": "...", "kind": "nominal"}, ...]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDecl {
    pub name: String,
    pub kind: AttributeKind,
}

impl AttributeDecl {
    pub fn new(name: impl Into<String>, kind: AttributeKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn nominal(name: impl Into<String>) -> Self {
        Self::new(name, AttributeKind::Nominal)
    }

    pub fn continuous(name: impl Into<String>) -> Self {
        Self::new(name, AttributeKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
    /// Ordinal position in the schema.
    pub index: usize,
}

/// Reads a JSON schema declaration (a list of `{name, kind}` objects).
pub fn read_schema(path: impl AsRef<Path>) -> Result<Vec<AttributeDecl>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullPolicy {
    Reject,
    #[default]
    DropRow,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub null_policy: NullPolicy,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
            null_policy: NullPolicy::DropRow,
        }
    }
}

const NULL_TOKENS: [&str; 4] = ["", "NULL", "null", "NA"];

fn is_null(field: &str) -> bool {
    NULL_TOKENS.contains(&field.trim())
}

/// Dictionary-encoded nominal column.
#[derive(Debug, Clone, Default)]
pub struct NominalColumn {
    codes: Vec<u32>,
    members: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl NominalColumn {
    pub fn from_values<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut col = Self::default();
        for v in values {
            col.push(v.as_ref());
        }
        col
    }

    fn push(&mut self, value: &str) {
        let code = match self.lookup.get(value) {
            Some(&c) => c,
            None => {
                let c = self.members.len() as u32;
                self.members.push(value.to_owned());
                self.lookup.insert(value.to_owned(), c);
                c
            }
        };
        self.codes.push(code);
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    /// Member string for a dictionary ID.
    pub fn member(&self, code: u32) -> &str {
        &self.members[code as usize]
    }

    pub fn code_of(&self, member: &str) -> Option<u32> {
        self.lookup.get(member).copied()
    }

    /// Number of dictionary entries.
    pub fn cardinality(&self) -> usize {
        self.members.len()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

#[derive(Debug, Clone)]
pub enum Column {
    Continuous(Vec<f64>),
    Nominal(NominalColumn),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Nominal(n) => n.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> AttributeKind {
        match self {
            Column::Continuous(_) => AttributeKind::Continuous,
            Column::Nominal(_) => AttributeKind::Nominal,
        }
    }
}

/// Five-number summary of a continuous attribute. Consecutive boundaries
/// delimit the four quartile intervals used for filter sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl ContinuousStats {
    /// The four `[lo, hi]` intervals between consecutive boundaries.
    pub fn intervals(&self) -> [(f64, f64); 4] {
        [
            (self.min, self.q1),
            (self.q1, self.median),
            (self.median, self.q3),
            (self.q3, self.max),
        ]
    }
}

/// Quantile of an ascending slice by linear interpolation between closest ranks.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Vec<AttributeSchema>,
    columns: Vec<Column>,
    row_count: usize,
    dropped_rows: usize,
    by_name: HashMap<String, usize>,
}

fn index_schema(decls: &[AttributeDecl]) -> Result<(Vec<AttributeSchema>, HashMap<String, usize>)> {
    let mut by_name = HashMap::with_capacity(decls.len());
    let mut schema = Vec::with_capacity(decls.len());
    for (index, d) in decls.iter().enumerate() {
        if by_name.insert(d.name.clone(), index).is_some() {
            return Err(StoreError::DuplicateAttribute(d.name.clone()));
        }
        schema.push(AttributeSchema {
            name: d.name.clone(),
            kind: d.kind,
            index,
        });
    }
    Ok((schema, by_name))
}

impl Dataset {
    /// Assembles a dataset from already-materialized columns, in schema order.
    pub fn from_columns(decls: &[AttributeDecl], columns: Vec<Column>) -> Result<Self> {
        let (schema, by_name) = index_schema(decls)?;
        if columns.len() != schema.len() {
            return Err(StoreError::SchemaMismatch(format!(
                "{} columns for {} declared attributes",
                columns.len(),
                schema.len()
            )));
        }
        let row_count = columns.first().map_or(0, Column::len);
        for (attr, col) in schema.iter().zip(&columns) {
            if col.kind() != attr.kind {
                return Err(StoreError::WrongKind {
                    attr: attr.name.clone(),
                    expected: attr.kind,
                });
            }
            if col.len() != row_count {
                return Err(StoreError::LengthMismatch {
                    column: attr.name.clone(),
                    expected: row_count,
                    found: col.len(),
                });
            }
        }
        Ok(Self {
            schema,
            columns,
            row_count,
            dropped_rows: 0,
            by_name,
        })
    }

    pub fn schema(&self) -> &[AttributeSchema] {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    /// Rows skipped at load time under [`NullPolicy::DropRow`].
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn attribute(&self, name: &str) -> Result<&AttributeSchema> {
        self.by_name
            .get(name)
            .map(|&i| &self.schema[i])
            .ok_or_else(|| StoreError::UnknownAttribute(name.to_owned()))
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn continuous(&self, name: &str) -> Result<&[f64]> {
        let attr = self.attribute(name)?;
        match &self.columns[attr.index] {
            Column::Continuous(v) => Ok(v),
            Column::Nominal(_) => Err(StoreError::WrongKind {
                attr: name.to_owned(),
                expected: AttributeKind::Continuous,
            }),
        }
    }

    pub fn nominal(&self, name: &str) -> Result<&NominalColumn> {
        let attr = self.attribute(name)?;
        match &self.columns[attr.index] {
            Column::Nominal(n) => Ok(n),
            Column::Continuous(_) => Err(StoreError::WrongKind {
                attr: name.to_owned(),
                expected: AttributeKind::Nominal,
            }),
        }
    }

    pub fn continuous_stats(&self, name: &str) -> Result<ContinuousStats> {
        let values = self.continuous(name)?;
        if values.is_empty() {
            return Err(StoreError::EmptyDataset(name.to_owned()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(ContinuousStats {
            min: sorted[0],
            q1: quantile_sorted(&sorted, 0.25),
            median: quantile_sorted(&sorted, 0.5),
            q3: quantile_sorted(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }

    /// Sorted, deduplicated members observed in a nominal column.
    pub fn distinct_members(&self, name: &str) -> Result<Vec<String>> {
        let col = self.nominal(name)?;
        let mut seen = vec![false; col.cardinality()];
        for &c in col.codes() {
            seen[c as usize] = true;
        }
        let mut members: Vec<String> = seen
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(c, _)| col.member(c as u32).to_owned())
            .collect();
        members.sort();
        Ok(members)
    }
}

/// Loads a CSV file into a [`Dataset`] whose columns follow `decls` order.
///
/// With a header row, every header name must be declared and vice versa
/// (columns may appear in any order in the file). Without one, fields are
/// matched to declarations by position.
pub fn load_csv(path: impl AsRef<Path>, decls: &[AttributeDecl], options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, decls, options)
}

pub fn read_csv<R: std::io::Read>(reader: R, decls: &[AttributeDecl], options: &CsvOptions) -> Result<Dataset> {
    let (schema, by_name) = index_schema(decls)?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(true)
        .from_reader(reader);

    // file field position for each schema attribute
    let positions: Vec<usize> = if options.has_header {
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        if names.len() != schema.len() {
            return Err(StoreError::SchemaMismatch(format!(
                "header has {} columns, schema declares {}",
                names.len(),
                schema.len()
            )));
        }
        let mut positions = vec![usize::MAX; schema.len()];
        for (pos, name) in names.iter().enumerate() {
            let idx = *by_name
                .get(*name)
                .ok_or_else(|| StoreError::SchemaMismatch(format!("header column `{name}` is not declared")))?;
            positions[idx] = pos;
        }
        if let Some(missing) = positions.iter().position(|&p| p == usize::MAX) {
            return Err(StoreError::SchemaMismatch(format!(
                "declared attribute `{}` missing from header",
                schema[missing].name
            )));
        }
        positions
    } else {
        (0..schema.len()).collect()
    };

    let mut columns: Vec<Column> = schema
        .iter()
        .map(|a| match a.kind {
            AttributeKind::Continuous => Column::Continuous(Vec::new()),
            AttributeKind::Nominal => Column::Nominal(NominalColumn::default()),
        })
        .collect();
    let mut dropped = 0usize;
    let mut parsed = vec![0.0f64; schema.len()];
    let mut record = csv::StringRecord::new();

    'rows: while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != schema.len() {
            return Err(StoreError::MalformedRow {
                line,
                expected: schema.len(),
                found: record.len(),
            });
        }
        // validate the whole row before touching any column
        for (attr, &pos) in schema.iter().zip(&positions) {
            let field = &record[pos];
            if is_null(field) {
                match options.null_policy {
                    NullPolicy::DropRow => {
                        dropped += 1;
                        continue 'rows;
                    }
                    NullPolicy::Reject => {
                        return Err(StoreError::NullValue {
                            line,
                            column: attr.name.clone(),
                        })
                    }
                }
            }
            if attr.kind == AttributeKind::Continuous {
                let v: f64 = field.trim().parse().map_err(|_| StoreError::ParseError {
                    line,
                    column: attr.name.clone(),
                    value: field.to_owned(),
                })?;
                if !v.is_finite() {
                    return Err(StoreError::ParseError {
                        line,
                        column: attr.name.clone(),
                        value: field.to_owned(),
                    });
                }
                parsed[attr.index] = v;
            }
        }
        for ((attr, &pos), col) in schema.iter().zip(&positions).zip(columns.iter_mut()) {
            match col {
                Column::Continuous(v) => v.push(parsed[attr.index]),
                Column::Nominal(n) => n.push(record[pos].trim()),
            }
        }
    }

    if dropped > 0 {
        log::info!("dropped {dropped} rows containing null values");
    }
    let row_count = columns.first().map_or(0, Column::len);
    Ok(Dataset {
        schema,
        columns,
        row_count,
        dropped_rows: dropped,
        by_name,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decls() -> Vec<AttributeDecl> {
        vec![
            AttributeDecl::nominal("store_type"),
            AttributeDecl::nominal("computer_type"),
            AttributeDecl::continuous("sales"),
            AttributeDecl::continuous("revenue"),
        ]
    }

    fn load(text: &str, options: &CsvOptions) -> Result<Dataset> {
        read_csv(text.as_bytes(), &decls(), options)
    }

    #[test]
    fn loads_running_example_shape() {
        let csv = "store_type,computer_type,sales,revenue\n\
                   online,MAC,102,85\nonline,IBM,80,82\nphysical,MAC,95,61\nphysical,IBM,94,50\n";
        let ds = load(csv, &CsvOptions::default()).unwrap();
        assert_eq!(ds.row_count(), 4);
        let kinds: Vec<_> = ds.schema().iter().map(|a| a.kind).collect();
        assert_eq!(kinds.iter().filter(|k| **k == AttributeKind::Nominal).count(), 2);
        assert_eq!(kinds.iter().filter(|k| **k == AttributeKind::Continuous).count(), 2);
        assert_eq!(ds.distinct_members("store_type").unwrap(), ["online", "physical"]);
        assert_eq!(ds.continuous("sales").unwrap(), &[102.0, 80.0, 95.0, 94.0]);
    }

    #[test]
    fn header_only_file_is_empty_dataset() {
        let ds = load("store_type,computer_type,sales,revenue\n", &CsvOptions::default()).unwrap();
        assert_eq!(ds.row_count(), 0);
        assert!(matches!(ds.continuous_stats("sales"), Err(StoreError::EmptyDataset(_))));
    }

    #[test]
    fn non_numeric_continuous_value_names_row_and_column() {
        let csv = "store_type,computer_type,sales,revenue\nonline,MAC,abc,85\n";
        match load(csv, &CsvOptions::default()) {
            Err(StoreError::ParseError { line, column, value }) => {
                assert_eq!(line, 2);
                assert_eq!(column, "sales");
                assert_eq!(value, "abc");
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn wrong_arity_is_malformed() {
        let csv = "store_type,computer_type,sales,revenue\nonline,MAC,1\n";
        assert!(matches!(
            load(csv, &CsvOptions::default()),
            Err(StoreError::MalformedRow { expected: 4, found: 3, .. })
        ));
    }

    #[test]
    fn null_policy_drop_and_reject() {
        let csv = "store_type,computer_type,sales,revenue\nonline,MAC,,85\nonline,IBM,3,4\n";
        let ds = load(csv, &CsvOptions::default()).unwrap();
        assert_eq!(ds.row_count(), 1);
        assert_eq!(ds.dropped_rows(), 1);
        let reject = CsvOptions {
            null_policy: NullPolicy::Reject,
            ..CsvOptions::default()
        };
        assert!(matches!(load(csv, &reject), Err(StoreError::NullValue { .. })));
    }

    #[test]
    fn header_columns_may_be_reordered() {
        let csv = "sales,store_type,revenue,computer_type\n1,online,2,MAC\n";
        let ds = load(csv, &CsvOptions::default()).unwrap();
        assert_eq!(ds.continuous("revenue").unwrap(), &[2.0]);
        assert_eq!(ds.distinct_members("computer_type").unwrap(), ["MAC"]);
    }

    #[test]
    fn undeclared_header_column_is_rejected() {
        let csv = "store_type,computer_type,sales,profit\n";
        assert!(matches!(load(csv, &CsvOptions::default()), Err(StoreError::SchemaMismatch(_))));
    }

    #[test]
    fn headerless_semicolon_file() {
        let options = CsvOptions {
            delimiter: b';',
            has_header: false,
            ..CsvOptions::default()
        };
        let ds = load("a;b;1.5;2\nc;d;3;4\n", &options).unwrap();
        assert_eq!(ds.row_count(), 2);
        assert_eq!(ds.continuous("sales").unwrap(), &[1.5, 3.0]);
    }

    #[test]
    fn duplicate_declaration_rejected() {
        let d = vec![AttributeDecl::nominal("a"), AttributeDecl::continuous("a")];
        assert!(matches!(read_csv("a,a\n".as_bytes(), &d, &CsvOptions::default()), Err(StoreError::DuplicateAttribute(_))));
    }

    fn continuous_ds(values: Vec<f64>) -> Dataset {
        Dataset::from_columns(&[AttributeDecl::continuous("x")], vec![Column::Continuous(values)]).unwrap()
    }

    #[test]
    fn stats_one_to_thousand() {
        let ds = continuous_ds((1..=1000).map(f64::from).collect());
        let s = ds.continuous_stats("x").unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 250.75, 500.5, 750.25, 1000.0));
    }

    #[test]
    fn stats_five_points_and_constant() {
        let s = continuous_ds(vec![5.0, 3.0, 1.0, 4.0, 2.0]).continuous_stats("x").unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let s = continuous_ds(vec![7.0; 3]).continuous_stats("x").unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (7.0, 7.0, 7.0, 7.0, 7.0));
    }

    #[test]
    fn wrong_kind_errors() {
        let csv = "store_type,computer_type,sales,revenue\nonline,MAC,1,2\n";
        let ds = load(csv, &CsvOptions::default()).unwrap();
        assert!(matches!(ds.continuous_stats("store_type"), Err(StoreError::WrongKind { .. })));
        assert!(matches!(ds.distinct_members("sales"), Err(StoreError::WrongKind { .. })));
        assert!(matches!(ds.distinct_members("nope"), Err(StoreError::UnknownAttribute(_))));
    }

    #[test]
    fn distinct_members_sorted_regardless_of_insertion() {
        let raw = ["kiwi", "apple", "fig", "apple", "fig", "kiwi"];
        let ds = Dataset::from_columns(
            &[AttributeDecl::nominal("fruit")],
            vec![Column::Nominal(NominalColumn::from_values(raw))],
        )
        .unwrap();
        let mut oracle: Vec<&str> = raw.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        oracle.sort();
        assert_eq!(ds.distinct_members("fruit").unwrap(), oracle);

        let single = Dataset::from_columns(
            &[AttributeDecl::nominal("f")],
            vec![Column::Nominal(NominalColumn::from_values(["x", "x", "x"]))],
        )
        .unwrap();
        assert_eq!(single.distinct_members("f").unwrap(), ["x"]);
    }

    #[test]
    fn member_ids_follow_first_occurrence() {
        let col = NominalColumn::from_values(["b", "a", "b", "c"]);
        assert_eq!(col.codes(), &[0, 1, 0, 2]);
        assert_eq!(col.member(1), "a");
        assert_eq!(col.code_of("c"), Some(2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stats_permutation_invariant_and_bounding(
                mut values in prop::collection::vec(-1e6f64..1e6, 1..200),
                seed in any::<u64>(),
            ) {
                let a = continuous_ds(values.clone()).continuous_stats("x").unwrap();
                // deterministic shuffle
                let mut s = seed;
                for i in (1..values.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    values.swap(i, (s >> 33) as usize % (i + 1));
                }
                let ds = continuous_ds(values.clone());
                let b = ds.continuous_stats("x").unwrap();
                prop_assert_eq!(a, b);
                prop_assert!(b.min <= b.q1 && b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
                prop_assert!(values.iter().all(|v| b.min <= *v && *v <= b.max));
                prop_assert_eq!(b, ds.continuous_stats("x").unwrap());
            }

            #[test]
            fn distinct_members_equals_raw_set(raw in prop::collection::vec("[a-e]{1,2}", 1..60)) {
                let ds = Dataset::from_columns(
                    &[AttributeDecl::nominal("n")],
                    vec![Column::Nominal(NominalColumn::from_values(&raw))],
                ).unwrap();
                let oracle: std::collections::HashSet<&String> = raw.iter().collect();
                let got = ds.distinct_members("n").unwrap();
                prop_assert_eq!(got.len(), oracle.len());
                prop_assert!(got.iter().all(|m| oracle.contains(m)));
                prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}

//! Query templates and workload generation.
//!
//! A template names the aggregation targets and the attributes that may be
//! filtered. Generation samples BETWEEN filters from quartile intervals of the
//! continuous attributes, takes IN filters from the member combinations that
//! actually occur in the data, and pairs every continuous filter set with every
//! nominal one. Each (target, filter set) pair is a [`FlatQuery`]: a single
//! aggregate with no GROUP BY, so it always returns one scalar.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{self, ExecError, GroupByResult};
use crate::store::{AttributeKind, ContinuousStats, Dataset, StoreError};

#[derive(Debug, Error)]
pub enum QueryGenError {
    #[error("{func} cannot be applied to {kind} attribute `{attr}`")]
    InvalidTarget {
        func: AggregationFunction,
        attr: String,
        kind: AttributeKind,
    },
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("no member combinations observed for {0:?}")]
    EmptyCombos(Vec<String>),
    #[error("cannot pair filters: {0} set list is empty")]
    NoFilterSets(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least 3 queries to split, got {0}")]
    TooFewQueries(usize),
    #[error("invalid split fractions {0:?}")]
    InvalidFractions((f64, f64, f64)),
    #[error("workload line {line}: {source}")]
    WorkloadFormat {
        line: usize,
        source: serde_json::Error,
    },
    #[error("workload record at line {0} is not labeled")]
    Unlabeled(usize),
    #[error("template file: {0}")]
    TemplateFormat(#[from] serde_json::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = QueryGenError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationFunction {
    Avg,
    Sum,
    Count,
    CountDistinct,
    Median,
    Min,
    Max,
}

impl AggregationFunction {
    pub const ALL: [AggregationFunction; 7] = [
        Self::Avg,
        Self::Sum,
        Self::Count,
        Self::CountDistinct,
        Self::Median,
        Self::Min,
        Self::Max,
    ];

    /// Nominal attributes only admit counting aggregates.
    pub fn applies_to(self, kind: AttributeKind) -> bool {
        match kind {
            AttributeKind::Continuous => true,
            AttributeKind::Nominal => matches!(self, Self::Count | Self::CountDistinct),
        }
    }

    /// Whether the aggregate has a value (zero) over an empty row set.
    pub fn defined_on_empty(self) -> bool {
        matches!(self, Self::Count | Self::CountDistinct | Self::Sum)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Avg => "avg",
            Self::Sum => "sum",
            Self::Count => "count",
            Self::CountDistinct => "count_distinct",
            Self::Median => "median",
            Self::Min => "min",
            Self::Max => "max",
        }
    }
}

impl fmt::Display for AggregationFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AggregationTarget {
    pub func: AggregationFunction,
    pub attr: String,
}

impl AggregationTarget {
    pub fn new(func: AggregationFunction, attr: impl Into<String>) -> Self {
        Self {
            func,
            attr: attr.into(),
        }
    }

    pub fn to_sql(&self) -> String {
        match self.func {
            AggregationFunction::CountDistinct => format!("COUNT(DISTINCT {})", self.attr),
            f => format!("{}({})", f.name().to_uppercase(), self.attr),
        }
    }
}

/// Token form, e.g. `avg(sales)`.
impl fmt::Display for AggregationTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.func, self.attr)
    }
}

/// Inclusive range predicate on a continuous attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetweenFilter {
    pub attr: String,
    pub lower: f64,
    pub upper: f64,
}

/// Equality predicate binding a nominal attribute to one member.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InFilter {
    pub attr: String,
    pub member: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterSet {
    pub between: Vec<BetweenFilter>,
    #[serde(rename = "in")]
    pub ins: Vec<InFilter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatQuery {
    pub target: AggregationTarget,
    pub filters: FilterSet,
}

impl FlatQuery {
    pub fn new(target: AggregationTarget, between: Vec<BetweenFilter>, ins: Vec<InFilter>) -> Self {
        Self {
            target,
            filters: FilterSet { between, ins },
        }
    }

    /// Human-readable SQL; display only, never parsed back.
    pub fn to_sql(&self, table: &str) -> String {
        let mut preds: Vec<String> = self
            .filters
            .between
            .iter()
            .map(|b| format!("{} BETWEEN {} AND {}", b.attr, b.lower, b.upper))
            .collect();
        preds.extend(
            self.filters
                .ins
                .iter()
                .map(|i| format!("{} IN ('{}')", i.attr, i.member.replace('\'', "''"))),
        );
        let mut sql = format!("SELECT {} FROM {table}", self.target.to_sql());
        if !preds.is_empty() {
            sql.push_str(" WHERE ");
            sql.push_str(&preds.join(" AND "));
        }
        sql
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub query: FlatQuery,
    pub label: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupByQuery {
    pub targets: Vec<AggregationTarget>,
    pub between: Vec<BetweenFilter>,
    pub groupby_attrs: Vec<String>,
}

/// SELECT-clause request: every function applied to every attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectClause {
    pub funcs: Vec<AggregationFunction>,
    pub attrs: Vec<String>,
}

/// Expands `funcs × attrs` (attribute-major) into aggregation targets.
///
/// Pairs that put a non-counting aggregate on a nominal attribute are dropped,
/// or rejected with [`QueryGenError::InvalidTarget`] when `strict` is set.
pub fn build_select_clause(select: &SelectClause, ds: &Dataset, strict: bool) -> Result<Vec<AggregationTarget>> {
    let mut targets = Vec::new();
    for attr in &select.attrs {
        let kind = ds.attribute(attr)?.kind;
        for &func in &select.funcs {
            if func.applies_to(kind) {
                let t = AggregationTarget::new(func, attr.clone());
                if !targets.contains(&t) {
                    targets.push(t);
                }
            } else if strict {
                return Err(QueryGenError::InvalidTarget {
                    func,
                    attr: attr.clone(),
                    kind,
                });
            }
        }
    }
    Ok(targets)
}

fn default_samples() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub targets: Vec<AggregationTarget>,
    pub cont_filter_attrs: Vec<String>,
    /// Nominal filter attributes; also the GROUP BY attributes.
    pub nom_filter_attrs: Vec<String>,
    /// Number of continuous filter combinations to sample.
    #[serde(default = "default_samples")]
    pub n_cont_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Per-attribute decimal scale of the numeric grid; missing means 1
    /// (bounds rounded to integers).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub numeric_scales: BTreeMap<String, f64>,
}

impl QueryTemplate {
    pub fn scale_for(&self, attr: &str) -> f64 {
        self.numeric_scales.get(attr).copied().unwrap_or(1.0)
    }

    /// Checks the template against a dataset and orders the filter attribute
    /// lists by schema position, which is the canonical token order.
    pub fn canonicalize(mut self, ds: &Dataset) -> Result<Self> {
        if self.targets.is_empty() {
            return Err(QueryGenError::InvalidTemplate("no aggregation targets".into()));
        }
        if self.n_cont_samples == 0 {
            return Err(QueryGenError::InvalidTemplate("n_cont_samples must be positive".into()));
        }
        for t in &self.targets {
            let kind = ds.attribute(&t.attr)?.kind;
            if !t.func.applies_to(kind) {
                return Err(QueryGenError::InvalidTarget {
                    func: t.func,
                    attr: t.attr.clone(),
                    kind,
                });
            }
        }
        if has_duplicates(&self.targets) {
            return Err(QueryGenError::InvalidTemplate("duplicate aggregation target".into()));
        }
        for (list, kind) in [
            (&mut self.cont_filter_attrs, AttributeKind::Continuous),
            (&mut self.nom_filter_attrs, AttributeKind::Nominal),
        ] {
            let mut indexed = Vec::with_capacity(list.len());
            for name in list.iter() {
                let a = ds.attribute(name)?;
                if a.kind != kind {
                    return Err(StoreError::WrongKind {
                        attr: name.clone(),
                        expected: kind,
                    }
                    .into());
                }
                indexed.push((a.index, name.clone()));
            }
            indexed.sort();
            if indexed.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(QueryGenError::InvalidTemplate(format!("duplicate {kind} filter attribute")));
            }
            *list = indexed.into_iter().map(|(_, n)| n).collect();
        }
        for (attr, &s) in &self.numeric_scales {
            if !(s.is_finite() && s > 0.0) {
                return Err(QueryGenError::InvalidTemplate(format!("scale for `{attr}` must be positive")));
            }
        }
        Ok(self)
    }
}

fn has_duplicates<T: Ord + Clone>(items: &[T]) -> bool {
    let mut v = items.to_vec();
    v.sort();
    v.windows(2).any(|w| w[0] == w[1])
}

/// Template config file. Targets may be listed explicitly, expanded from a
/// `select` block, or both.
#[derive(Debug, Clone, Deserialize)]
pub struct TemplateFile {
    #[serde(default)]
    pub targets: Vec<AggregationTarget>,
    #[serde(default)]
    pub select: Option<SelectClause>,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub cont_filter_attrs: Vec<String>,
    #[serde(default)]
    pub nom_filter_attrs: Vec<String>,
    #[serde(default = "default_samples")]
    pub n_cont_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub numeric_scales: BTreeMap<String, f64>,
}

impl TemplateFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(self, ds: &Dataset) -> Result<QueryTemplate> {
        let mut targets = self.targets;
        if let Some(select) = &self.select {
            for t in build_select_clause(select, ds, self.strict)? {
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
        }
        QueryTemplate {
            targets,
            cont_filter_attrs: self.cont_filter_attrs,
            nom_filter_attrs: self.nom_filter_attrs,
            n_cont_samples: self.n_cont_samples,
            seed: self.seed,
            numeric_scales: self.numeric_scales,
        }
        .canonicalize(ds)
    }
}

/// Rounds `v` to the grid `k / scale`, staying inside `[lo, hi]` whenever the
/// interval contains a grid point.
pub fn quantize(v: f64, scale: f64, lo: f64, hi: f64) -> f64 {
    let first = (lo * scale).ceil();
    let last = (hi * scale).floor();
    let k = (v * scale).round();
    if first <= last {
        k.clamp(first, last) / scale
    } else {
        k / scale
    }
}

/// Samples `n` continuous filter combinations, one BETWEEN filter per attribute.
///
/// For each filter two of the four quartile intervals are drawn uniformly
/// (with replacement), one value is drawn uniformly from each, and the pair is
/// ordered into `(lower, upper)` after snapping to the attribute's grid.
/// With no attributes a single empty combination is returned.
pub fn gen_between_filters<R: Rng>(
    stats: &[(String, ContinuousStats)],
    n: usize,
    rng: &mut R,
    scales: &BTreeMap<String, f64>,
) -> Vec<Vec<BetweenFilter>> {
    if stats.is_empty() {
        return vec![Vec::new()];
    }
    (0..n)
        .map(|_| {
            stats
                .iter()
                .map(|(attr, s)| {
                    let scale = scales.get(attr).copied().unwrap_or(1.0);
                    let intervals = s.intervals();
                    let mut draw = || {
                        let (lo, hi) = intervals[rng.gen_range(0..4)];
                        let v = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
                        quantize(v, scale, s.min, s.max)
                    };
                    let a = draw();
                    let b = draw();
                    BetweenFilter {
                        attr: attr.clone(),
                        lower: a.min(b),
                        upper: a.max(b),
                    }
                })
                .collect()
        })
        .collect()
}

/// Turns observed member tuples into IN-filter sets. `attrs` names the
/// attribute for each tuple position. An empty attribute list yields one
/// empty set.
pub fn gen_in_filter_combinations(attrs: &[String], combos: &[Vec<String>]) -> Result<Vec<Vec<InFilter>>> {
    if attrs.is_empty() {
        return Ok(vec![Vec::new()]);
    }
    if combos.is_empty() {
        return Err(QueryGenError::EmptyCombos(attrs.to_vec()));
    }
    combos
        .iter()
        .map(|tuple| {
            if tuple.len() != attrs.len() {
                return Err(QueryGenError::ShapeMismatch(format!(
                    "member tuple of length {} for {} attributes",
                    tuple.len(),
                    attrs.len()
                )));
            }
            Ok(attrs
                .iter()
                .zip(tuple)
                .map(|(a, m)| InFilter {
                    attr: a.clone(),
                    member: m.clone(),
                })
                .collect())
        })
        .collect()
}

/// Cross product of continuous and nominal filter sets (continuous-major).
///
/// An empty side yields an empty result, or an error when `strict` is set.
pub fn pair_filters(between_sets: &[Vec<BetweenFilter>], in_sets: &[Vec<InFilter>], strict: bool) -> Result<Vec<FilterSet>> {
    if strict {
        if between_sets.is_empty() {
            return Err(QueryGenError::NoFilterSets("continuous"));
        }
        if in_sets.is_empty() {
            return Err(QueryGenError::NoFilterSets("nominal"));
        }
    }
    let mut out = Vec::with_capacity(between_sets.len() * in_sets.len());
    for b in between_sets {
        for i in in_sets {
            out.push(FilterSet {
                between: b.clone(),
                ins: i.clone(),
            });
        }
    }
    Ok(out)
}

/// Expands a GROUP BY result into one labeled flat query per (row, target).
pub fn flatten_groupby(gq: &GroupByQuery, result: &GroupByResult) -> Result<Vec<LabeledQuery>> {
    if result.groupby_attrs != gq.groupby_attrs {
        return Err(QueryGenError::ShapeMismatch(format!(
            "result grouped by {:?}, query by {:?}",
            result.groupby_attrs, gq.groupby_attrs
        )));
    }
    let mut out = Vec::with_capacity(result.rows.len() * gq.targets.len());
    for row in &result.rows {
        if row.members.len() != gq.groupby_attrs.len() || row.values.len() != gq.targets.len() {
            return Err(QueryGenError::ShapeMismatch(format!(
                "row has {} members and {} values, expected {} and {}",
                row.members.len(),
                row.values.len(),
                gq.groupby_attrs.len(),
                gq.targets.len()
            )));
        }
        let ins: Vec<InFilter> = gq
            .groupby_attrs
            .iter()
            .zip(&row.members)
            .map(|(a, m)| InFilter {
                attr: a.clone(),
                member: m.clone(),
            })
            .collect();
        for (target, &value) in gq.targets.iter().zip(&row.values) {
            out.push(LabeledQuery {
                query: FlatQuery::new(target.clone(), gq.between.clone(), ins.clone()),
                label: value,
                support: row.support,
            });
        }
    }
    Ok(out)
}

/// Generates the unlabeled workload for a template: every target crossed with
/// every paired filter set (target-major order).
pub fn generate_workload(ds: &Dataset, template: &QueryTemplate) -> Result<Vec<FlatQuery>> {
    let mut rng = ChaCha8Rng::seed_from_u64(template.seed);
    let stats = template
        .cont_filter_attrs
        .iter()
        .map(|a| Ok((a.clone(), ds.continuous_stats(a)?)))
        .collect::<Result<Vec<_>>>()?;
    let between = gen_between_filters(&stats, template.n_cont_samples, &mut rng, &template.numeric_scales);
    let combos = if template.nom_filter_attrs.is_empty() {
        Vec::new()
    } else {
        executor::extract_member_combinations(ds, &template.nom_filter_attrs)?
    };
    let ins = gen_in_filter_combinations(&template.nom_filter_attrs, &combos)?;
    let sets = pair_filters(&between, &ins, true)?;
    let mut out = Vec::with_capacity(sets.len() * template.targets.len());
    for t in &template.targets {
        for s in &sets {
            out.push(FlatQuery {
                target: t.clone(),
                filters: s.clone(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSplit<T = LabeledQuery> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.70, 0.15, 0.15);

/// Shuffles under `seed` and cuts at the train and train+validation marks.
/// Train and validation sizes are floored; test takes the remainder.
pub fn split<T>(mut workload: Vec<T>, fractions: (f64, f64, f64), seed: u64) -> Result<WorkloadSplit<T>> {
    let (ft, fv, fx) = fractions;
    if [ft, fv, fx].iter().any(|f| !(0.0..=1.0).contains(f)) || (ft + fv + fx - 1.0).abs() > 1e-9 {
        return Err(QueryGenError::InvalidFractions(fractions));
    }
    let n = workload.len();
    if n < 3 {
        return Err(QueryGenError::TooFewQueries(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    workload.shuffle(&mut rng);
    let n_train = (n as f64 * ft + 1e-9).floor() as usize;
    let n_val = (n as f64 * fv + 1e-9).floor() as usize;
    let test = workload.split_off(n_train + n_val);
    let validation = workload.split_off(n_train);
    Ok(WorkloadSplit {
        train: workload,
        validation,
        test,
    })
}

/// One line of a workload file. `label` and `support` are absent until the
/// workload has been labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRecord {
    pub target: AggregationTarget,
    pub filters: FilterSet,
    pub label: Option<f64>,
    pub support: Option<u64>,
}

impl From<&FlatQuery> for WorkloadRecord {
    fn from(q: &FlatQuery) -> Self {
        Self {
            target: q.target.clone(),
            filters: q.filters.clone(),
            label: None,
            support: None,
        }
    }
}

impl From<&LabeledQuery> for WorkloadRecord {
    fn from(q: &LabeledQuery) -> Self {
        Self {
            target: q.query.target.clone(),
            filters: q.query.filters.clone(),
            label: Some(q.label),
            support: Some(q.support),
        }
    }
}

impl WorkloadRecord {
    pub fn query(&self) -> FlatQuery {
        FlatQuery {
            target: self.target.clone(),
            filters: self.filters.clone(),
        }
    }
}

pub fn write_workload<W: Write, R: Into<WorkloadRecord>>(mut out: W, records: impl IntoIterator<Item = R>) -> Result<()> {
    for r in records {
        let rec: WorkloadRecord = r.into();
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_workload<R: BufRead>(input: R) -> Result<Vec<WorkloadRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| QueryGenError::WorkloadFormat { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}

/// Reads a workload whose every record is labeled.
pub fn read_labeled<R: BufRead>(input: R) -> Result<Vec<LabeledQuery>> {
    read_workload(input)?
        .into_iter()
        .enumerate()
        .map(|(i, r)| match (r.label, r.support) {
            (Some(label), Some(support)) => Ok(LabeledQuery {
                query: r.query(),
                label,
                support,
            }),
            _ => Err(QueryGenError::Unlabeled(i + 1)),
        })
        .collect()
}

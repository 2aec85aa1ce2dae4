//! Exact full-scan aggregation over a [`Dataset`].
//!
//! This is the labeler for generated workloads and the ground truth the
//! learned model is scored against. BETWEEN is inclusive on both bounds, the
//! median of an even count is the mean of the two middle values, and
//! COUNT(DISTINCT) is exact.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::querygen::{AggregationFunction, AggregationTarget, BetweenFilter, FlatQuery, GroupByQuery, InFilter, LabeledQuery};
use crate::store::{AttributeKind, Column, Dataset, StoreError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{attr}` is not {expected}")]
    WrongKind { attr: String, expected: AttributeKind },
    #[error("{0} over an empty row set is undefined")]
    EmptyAggregate(AggregationTarget),
    #[error("{func} cannot be applied to {kind} attribute `{attr}`")]
    InvalidTarget {
        func: AggregationFunction,
        attr: String,
        kind: AttributeKind,
    },
    #[error("group-by needs at least one attribute")]
    NoGroupByAttributes,
}

impl From<StoreError> for ExecError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::WrongKind { attr, expected } => ExecError::WrongKind { attr, expected },
            StoreError::UnknownAttribute(a) => ExecError::UnknownAttribute(a),
            other => ExecError::UnknownAttribute(other.to_string()),
        }
    }
}

pub type Result<T, E = ExecError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub members: Vec<String>,
    /// One value per target, in query order.
    pub values: Vec<f64>,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupByResult {
    pub groupby_attrs: Vec<String>,
    pub targets: Vec<AggregationTarget>,
    /// Sorted by member tuple; only groups with at least one row.
    pub rows: Vec<GroupRow>,
}

/// Filters resolved to column slices. An IN filter on a member absent from
/// the dictionary can never match.
struct CompiledFilters<'a> {
    ranges: Vec<(&'a [f64], f64, f64)>,
    members: Vec<(&'a [u32], u32)>,
    unsatisfiable: bool,
}

impl<'a> CompiledFilters<'a> {
    fn new(ds: &'a Dataset, between: &[BetweenFilter], ins: &[InFilter]) -> Result<Self> {
        let mut ranges = Vec::with_capacity(between.len());
        for b in between {
            ranges.push((ds.continuous(&b.attr)?, b.lower, b.upper));
        }
        let mut members = Vec::with_capacity(ins.len());
        let mut unsatisfiable = false;
        for i in ins {
            let col = ds.nominal(&i.attr)?;
            match col.code_of(&i.member) {
                Some(code) => members.push((col.codes(), code)),
                None => unsatisfiable = true,
            }
        }
        Ok(Self {
            ranges,
            members,
            unsatisfiable,
        })
    }

    #[inline]
    fn matches(&self, row: usize) -> bool {
        self.ranges.iter().all(|&(col, lo, hi)| {
            let v = col[row];
            lo <= v && v <= hi
        }) && self.members.iter().all(|&(codes, c)| codes[row] == c)
    }
}

#[derive(Clone, Copy)]
enum Source<'a> {
    Continuous(&'a [f64]),
    Nominal(&'a [u32]),
}

fn resolve_target<'a>(ds: &'a Dataset, t: &AggregationTarget) -> Result<Source<'a>> {
    let attr = ds.attribute(&t.attr)?;
    if !t.func.applies_to(attr.kind) {
        return Err(ExecError::InvalidTarget {
            func: t.func,
            attr: t.attr.clone(),
            kind: attr.kind,
        });
    }
    Ok(match ds.column(attr.index) {
        Column::Continuous(v) => Source::Continuous(v),
        Column::Nominal(n) => Source::Nominal(n.codes()),
    })
}

#[derive(Debug, Clone)]
enum Accumulator {
    Count(u64),
    Sum(f64),
    Avg { sum: f64, count: u64 },
    Min(f64),
    Max(f64),
    Median(Vec<f64>),
    DistinctValues(HashSet<u64>),
    DistinctMembers(HashSet<u32>),
}

impl Accumulator {
    fn new(func: AggregationFunction, source: Source<'_>) -> Self {
        use AggregationFunction::*;
        match (func, source) {
            (Count, _) => Self::Count(0),
            (Sum, _) => Self::Sum(0.0),
            (Avg, _) => Self::Avg { sum: 0.0, count: 0 },
            (Min, _) => Self::Min(f64::INFINITY),
            (Max, _) => Self::Max(f64::NEG_INFINITY),
            (Median, _) => Self::Median(Vec::new()),
            (CountDistinct, Source::Continuous(_)) => Self::DistinctValues(HashSet::new()),
            (CountDistinct, Source::Nominal(_)) => Self::DistinctMembers(HashSet::new()),
        }
    }

    #[inline]
    fn update(&mut self, source: Source<'_>, row: usize) {
        let value = || match source {
            Source::Continuous(v) => v[row],
            Source::Nominal(_) => unreachable!("non-counting aggregate on nominal attribute"),
        };
        match self {
            Self::Count(n) => *n += 1,
            Self::Sum(s) => *s += value(),
            Self::Avg { sum, count } => {
                *sum += value();
                *count += 1;
            }
            Self::Min(m) => *m = m.min(value()),
            Self::Max(m) => *m = m.max(value()),
            Self::Median(vs) => vs.push(value()),
            Self::DistinctValues(set) => {
                // fold -0.0 into 0.0
                set.insert((value() + 0.0).to_bits());
            }
            Self::DistinctMembers(set) => {
                if let Source::Nominal(codes) = source {
                    set.insert(codes[row]);
                }
            }
        }
    }

    /// `None` when the aggregate is undefined on zero rows.
    fn finish(self, support: u64) -> Option<f64> {
        match self {
            Self::Count(n) => Some(n as f64),
            Self::Sum(s) => Some(s),
            Self::DistinctValues(s) => Some(s.len() as f64),
            Self::DistinctMembers(s) => Some(s.len() as f64),
            _ if support == 0 => None,
            Self::Avg { sum, count } => Some(sum / count as f64),
            Self::Min(m) | Self::Max(m) => Some(m),
            Self::Median(mut vs) => {
                vs.sort_by(f64::total_cmp);
                let n = vs.len();
                Some(if n % 2 == 1 {
                    vs[n / 2]
                } else {
                    (vs[n / 2 - 1] + vs[n / 2]) / 2.0
                })
            }
        }
    }
}

/// Evaluates a flat query. Returns `(value, support)`; counting aggregates
/// and SUM over no rows give `(0, 0)`, the rest fail with
/// [`ExecError::EmptyAggregate`].
pub fn execute_flat(ds: &Dataset, q: &FlatQuery) -> Result<(f64, u64)> {
    let filters = CompiledFilters::new(ds, &q.filters.between, &q.filters.ins)?;
    let source = resolve_target(ds, &q.target)?;
    let mut acc = Accumulator::new(q.target.func, source);
    let mut support = 0u64;
    if !filters.unsatisfiable {
        for row in 0..ds.row_count() {
            if filters.matches(row) {
                support += 1;
                acc.update(source, row);
            }
        }
    }
    acc.finish(support)
        .map(|v| (v, support))
        .ok_or_else(|| ExecError::EmptyAggregate(q.target.clone()))
}

/// Maps a row's member codes to a dense group slot.
enum GroupKeyer<'a> {
    Dense {
        columns: Vec<&'a [u32]>,
        strides: Vec<usize>,
        slots: Vec<u32>,
    },
    Hashed {
        columns: Vec<&'a [u32]>,
        slots: HashMap<Vec<u32>, u32>,
        scratch: Vec<u32>,
    },
}

const DENSE_KEY_LIMIT: usize = 1 << 22;

impl<'a> GroupKeyer<'a> {
    fn new(columns: Vec<&'a [u32]>, cardinalities: &[usize]) -> Self {
        let space = cardinalities
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c.max(1)))
            .filter(|&s| s <= DENSE_KEY_LIMIT);
        match space {
            Some(space) => {
                let mut strides = vec![1usize; cardinalities.len()];
                for i in (0..cardinalities.len().saturating_sub(1)).rev() {
                    strides[i] = strides[i + 1] * cardinalities[i + 1].max(1);
                }
                Self::Dense {
                    columns,
                    strides,
                    slots: vec![u32::MAX; space],
                }
            }
            None => Self::Hashed {
                scratch: Vec::with_capacity(columns.len()),
                columns,
                slots: HashMap::new(),
            },
        }
    }

    /// Slot for `row`, allocating `next` when the group is new.
    #[inline]
    fn slot(&mut self, row: usize, next: u32) -> u32 {
        match self {
            Self::Dense { columns, strides, slots } => {
                let key: usize = columns.iter().zip(strides.iter()).map(|(c, s)| c[row] as usize * s).sum();
                if slots[key] == u32::MAX {
                    slots[key] = next;
                }
                slots[key]
            }
            Self::Hashed { columns, slots, scratch } => {
                scratch.clear();
                scratch.extend(columns.iter().map(|c| c[row]));
                if let Some(&s) = slots.get(scratch.as_slice()) {
                    s
                } else {
                    slots.insert(scratch.clone(), next);
                    next
                }
            }
        }
    }
}

/// Evaluates a GROUP BY query in one scan. Rows come back sorted by member
/// tuple and only for groups that have at least one matching row.
pub fn execute_groupby(ds: &Dataset, gq: &GroupByQuery) -> Result<GroupByResult> {
    if gq.groupby_attrs.is_empty() {
        return Err(ExecError::NoGroupByAttributes);
    }
    let filters = CompiledFilters::new(ds, &gq.between, &[])?;
    let nominal = gq
        .groupby_attrs
        .iter()
        .map(|a| ds.nominal(a))
        .collect::<Result<Vec<_>, _>>()?;
    let sources = gq
        .targets
        .iter()
        .map(|t| resolve_target(ds, t))
        .collect::<Result<Vec<_>>>()?;

    let cards: Vec<usize> = nominal.iter().map(|n| n.cardinality()).collect();
    let mut keyer = GroupKeyer::new(nominal.iter().map(|n| n.codes()).collect(), &cards);
    let mut first_rows: Vec<usize> = Vec::new();
    let mut supports: Vec<u64> = Vec::new();
    let mut accs: Vec<Vec<Accumulator>> = Vec::new();

    for row in 0..ds.row_count() {
        if !filters.matches(row) {
            continue;
        }
        let slot = keyer.slot(row, first_rows.len() as u32) as usize;
        if slot == first_rows.len() {
            first_rows.push(row);
            supports.push(0);
            accs.push(
                gq.targets
                    .iter()
                    .zip(&sources)
                    .map(|(t, &s)| Accumulator::new(t.func, s))
                    .collect(),
            );
        }
        supports[slot] += 1;
        for (acc, &src) in accs[slot].iter_mut().zip(&sources) {
            acc.update(src, row);
        }
    }

    let mut rows: Vec<GroupRow> = first_rows
        .into_iter()
        .zip(supports)
        .zip(accs)
        .map(|((first, support), accs)| GroupRow {
            members: nominal.iter().map(|n| n.member(n.codes()[first]).to_owned()).collect(),
            values: accs
                .into_iter()
                .map(|a| a.finish(support).expect("groups are non-empty"))
                .collect(),
            support,
        })
        .collect();
    rows.sort_by(|a, b| a.members.cmp(&b.members));
    Ok(GroupByResult {
        groupby_attrs: gq.groupby_attrs.clone(),
        targets: gq.targets.clone(),
        rows,
    })
}

/// Distinct member tuples observed over `attrs`, lexicographically sorted.
pub fn extract_member_combinations(ds: &Dataset, attrs: &[String]) -> Result<Vec<Vec<String>>> {
    let gq = GroupByQuery {
        targets: Vec::new(),
        between: Vec::new(),
        groupby_attrs: attrs.to_vec(),
    };
    Ok(execute_groupby(ds, &gq)?.rows.into_iter().map(|r| r.members).collect())
}

/// Outcome of labeling one query: `None` when the aggregate is undefined
/// because no rows matched.
pub type LabelOutcome = Option<(f64, u64)>;

type BatchKey = (Vec<String>, Vec<(String, u64, u64)>);

/// Labels a batch of flat queries, in input order.
///
/// Queries that share BETWEEN filters and IN-filter attributes are answered by
/// one GROUP BY scan; results equal [`execute_flat`] per query. Groups are
/// spread over `threads` workers.
pub fn label_batch(ds: &Dataset, queries: &[FlatQuery], threads: usize) -> Result<Vec<LabelOutcome>> {
    let mut batches: BTreeMap<BatchKey, Vec<usize>> = BTreeMap::new();
    for (i, q) in queries.iter().enumerate() {
        let key = (
            q.filters.ins.iter().map(|f| f.attr.clone()).collect(),
            q.filters
                .between
                .iter()
                .map(|b| (b.attr.clone(), b.lower.to_bits(), b.upper.to_bits()))
                .collect(),
        );
        batches.entry(key).or_default().push(i);
    }
    let batches: Vec<Vec<usize>> = batches.into_values().collect();

    let run = |idx: &[usize]| -> Result<Vec<(usize, LabelOutcome)>> {
        let first = &queries[idx[0]];
        if first.filters.ins.is_empty() {
            return idx
                .iter()
                .map(|&i| match execute_flat(ds, &queries[i]) {
                    Ok(r) => Ok((i, Some(r))),
                    Err(ExecError::EmptyAggregate(_)) => Ok((i, None)),
                    Err(e) => Err(e),
                })
                .collect();
        }
        let mut targets: Vec<AggregationTarget> = Vec::new();
        for &i in idx {
            if !targets.contains(&queries[i].target) {
                targets.push(queries[i].target.clone());
            }
        }
        let gq = GroupByQuery {
            targets,
            between: first.filters.between.clone(),
            groupby_attrs: first.filters.ins.iter().map(|f| f.attr.clone()).collect(),
        };
        let result = execute_groupby(ds, &gq)?;
        let by_members: HashMap<&[String], &GroupRow> = result.rows.iter().map(|r| (r.members.as_slice(), r)).collect();
        let mut out = Vec::with_capacity(idx.len());
        for &i in idx {
            let q = &queries[i];
            let members: Vec<String> = q.filters.ins.iter().map(|f| f.member.clone()).collect();
            let t = gq.targets.iter().position(|t| *t == q.target).expect("target collected above");
            let outcome = match by_members.get(members.as_slice()) {
                Some(row) => Some((row.values[t], row.support)),
                None if q.target.func.defined_on_empty() => Some((0.0, 0)),
                None => None,
            };
            out.push((i, outcome));
        }
        Ok(out)
    };

    let threads = threads.max(1).min(batches.len().max(1));
    let mut outcomes: Vec<LabelOutcome> = vec![None; queries.len()];
    if threads == 1 {
        for b in &batches {
            for (i, o) in run(b)? {
                outcomes[i] = o;
            }
        }
        return Ok(outcomes);
    }
    let next = AtomicUsize::new(0);
    // (batch index, outcomes keyed by query position)
    type GroupResult = (usize, Result<Vec<(usize, LabelOutcome)>>);
    let collected: Mutex<Vec<GroupResult>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let b = next.fetch_add(1, Ordering::Relaxed);
                if b >= batches.len() {
                    break;
                }
                let r = run(&batches[b]);
                collected.lock().unwrap().push((b, r));
            });
        }
    });
    let mut collected = collected.into_inner().unwrap();
    collected.sort_by_key(|(b, _)| *b);
    for (_, r) in collected {
        for (i, o) in r? {
            outcomes[i] = o;
        }
    }
    Ok(outcomes)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub total: usize,
    pub labeled: usize,
    /// Non-counting queries dropped because no rows matched.
    pub excluded_empty: usize,
    pub excluded_by_target: BTreeMap<String, usize>,
}

/// Labels a workload and drops queries whose aggregate is undefined.
pub fn label_workload(ds: &Dataset, queries: &[FlatQuery], threads: usize) -> Result<(Vec<LabeledQuery>, LabelReport)> {
    let outcomes = label_batch(ds, queries, threads)?;
    let mut report = LabelReport {
        total: queries.len(),
        ..LabelReport::default()
    };
    let mut labeled = Vec::with_capacity(queries.len());
    for (q, o) in queries.iter().zip(outcomes) {
        match o {
            Some((label, support)) => labeled.push(LabeledQuery {
                query: q.clone(),
                label,
                support,
            }),
            None => {
                report.excluded_empty += 1;
                *report.excluded_by_target.entry(q.target.to_string()).or_default() += 1;
            }
        }
    }
    report.labeled = labeled.len();
    Ok((labeled, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{AttributeDecl, NominalColumn};
    use AggregationFunction::*;

    fn ds() -> Dataset {
        Dataset::from_columns(
            &[
                AttributeDecl::nominal("store_type"),
                AttributeDecl::nominal("computer_type"),
                AttributeDecl::continuous("hour"),
                AttributeDecl::continuous("sales"),
            ],
            vec![
                Column::Nominal(NominalColumn::from_values(["online", "online", "online", "physical", "physical", "online"])),
                Column::Nominal(NominalColumn::from_values(["MAC", "MAC", "IBM", "MAC", "IBM", "MAC"])),
                Column::Continuous(vec![20.0, 21.0, 22.0, 23.0, 24.0, 23.0]),
                Column::Continuous(vec![100.0, 104.0, 80.0, 95.0, 94.0, 102.0]),
            ],
        )
        .unwrap()
    }

    fn q(func: AggregationFunction, attr: &str, between: &[(&str, f64, f64)], ins: &[(&str, &str)]) -> FlatQuery {
        FlatQuery::new(
            AggregationTarget::new(func, attr),
            between
                .iter()
                .map(|&(a, l, u)| BetweenFilter { attr: a.into(), lower: l, upper: u })
                .collect(),
            ins.iter()
                .map(|&(a, m)| InFilter { attr: a.into(), member: m.into() })
                .collect(),
        )
    }

    #[test]
    fn avg_of_matching_group() {
        let d = ds();
        let r = execute_flat(&d, &q(Avg, "sales", &[("hour", 20.0, 23.0)], &[("store_type", "online"), ("computer_type", "MAC")])).unwrap();
        assert_eq!(r, (102.0, 3));
    }

    #[test]
    fn empty_counting_and_noncounting() {
        let d = ds();
        let none = [("hour", 100.0, 200.0)];
        assert_eq!(execute_flat(&d, &q(Count, "sales", &none, &[])).unwrap(), (0.0, 0));
        assert_eq!(execute_flat(&d, &q(Sum, "sales", &none, &[])).unwrap(), (0.0, 0));
        assert_eq!(execute_flat(&d, &q(CountDistinct, "store_type", &none, &[])).unwrap(), (0.0, 0));
        for f in [Avg, Median, Min, Max] {
            assert!(matches!(execute_flat(&d, &q(f, "sales", &none, &[])), Err(ExecError::EmptyAggregate(_))));
        }
    }

    #[test]
    fn median_of_even_count() {
        let d = Dataset::from_columns(&[AttributeDecl::continuous("x")], vec![Column::Continuous(vec![4.0, 1.0, 3.0, 2.0])]).unwrap();
        let mut sorted = d.continuous("x").unwrap().to_vec();
        sorted.sort_by(f64::total_cmp);
        let oracle = (sorted[1] + sorted[2]) / 2.0;
        assert_eq!(execute_flat(&d, &q(Median, "x", &[], &[])).unwrap(), (oracle, 4));
        assert_eq!(oracle, 2.5);
    }

    #[test]
    fn between_is_inclusive() {
        let d = ds();
        assert_eq!(execute_flat(&d, &q(Count, "sales", &[("hour", 21.0, 23.0)], &[])).unwrap().1, 4);
        assert_eq!(execute_flat(&d, &q(Count, "sales", &[("hour", 23.0, 23.0)], &[])).unwrap().1, 2);
        assert_eq!(execute_flat(&d, &q(Count, "sales", &[("hour", 23.0 + 1e-9, 24.0 - 1e-9)], &[])).unwrap().1, 0);
    }

    #[test]
    fn unknown_member_matches_nothing_and_errors_propagate() {
        let d = ds();
        assert_eq!(execute_flat(&d, &q(Count, "sales", &[], &[("store_type", "kiosk")])).unwrap(), (0.0, 0));
        assert!(matches!(execute_flat(&d, &q(Count, "nope", &[], &[])), Err(ExecError::UnknownAttribute(_))));
        assert!(matches!(execute_flat(&d, &q(Count, "sales", &[("store_type", 0.0, 1.0)], &[])), Err(ExecError::WrongKind { .. })));
        assert!(matches!(execute_flat(&d, &q(Avg, "store_type", &[], &[])), Err(ExecError::InvalidTarget { .. })));
    }

    #[test]
    fn count_distinct_variants() {
        let d = ds();
        assert_eq!(execute_flat(&d, &q(CountDistinct, "computer_type", &[], &[("store_type", "online")])).unwrap(), (2.0, 4));
        assert_eq!(execute_flat(&d, &q(CountDistinct, "hour", &[], &[])).unwrap(), (5.0, 6));
    }

    #[test]
    fn groupby_shape_and_consistency() {
        let d = ds();
        let gq = GroupByQuery {
            targets: vec![AggregationTarget::new(Avg, "sales"), AggregationTarget::new(Median, "sales")],
            between: vec![BetweenFilter { attr: "hour".into(), lower: 20.0, upper: 24.0 }],
            groupby_attrs: vec!["store_type".into(), "computer_type".into()],
        };
        let r = execute_groupby(&d, &gq).unwrap();
        assert_eq!(r.rows.len(), 4);
        let tuples: Vec<_> = r.rows.iter().map(|r| r.members.join("/")).collect();
        assert_eq!(tuples, ["online/IBM", "online/MAC", "physical/IBM", "physical/MAC"]);
        let total: u64 = r.rows.iter().map(|r| r.support).sum();
        let flat = q(Count, "sales", &[("hour", 20.0, 24.0)], &[]);
        assert_eq!(total, execute_flat(&d, &flat).unwrap().1);
        for row in &r.rows {
            for (t, v) in gq.targets.iter().zip(&row.values) {
                let ins: Vec<(&str, &str)> = gq.groupby_attrs.iter().map(String::as_str).zip(row.members.iter().map(String::as_str)).collect();
                let fq = q(t.func, &t.attr, &[("hour", 20.0, 24.0)], &ins);
                assert_eq!(execute_flat(&d, &fq).unwrap(), (*v, row.support));
            }
        }
    }

    #[test]
    fn groupby_single_member() {
        let d = Dataset::from_columns(
            &[AttributeDecl::nominal("n"), AttributeDecl::continuous("x")],
            vec![Column::Nominal(NominalColumn::from_values(["a", "a"])), Column::Continuous(vec![1.0, 2.0])],
        )
        .unwrap();
        let gq = GroupByQuery {
            targets: vec![AggregationTarget::new(Sum, "x")],
            between: vec![],
            groupby_attrs: vec!["n".into()],
        };
        let r = execute_groupby(&d, &gq).unwrap();
        assert_eq!(r.rows, [GroupRow { members: vec!["a".into()], values: vec![3.0], support: 2 }]);
        assert!(matches!(
            execute_groupby(&d, &GroupByQuery { groupby_attrs: vec![], ..gq }),
            Err(ExecError::NoGroupByAttributes)
        ));
    }

    #[test]
    fn member_combinations() {
        let d = ds();
        let combos = extract_member_combinations(&d, &["store_type".into(), "computer_type".into()]).unwrap();
        assert_eq!(combos.len(), 4);
        let single = extract_member_combinations(&d, &["store_type".into()]).unwrap();
        let flat: Vec<String> = single.into_iter().flatten().collect();
        assert_eq!(flat, d.distinct_members("store_type").unwrap());
        assert!(matches!(extract_member_combinations(&d, &["hour".into()]), Err(ExecError::WrongKind { .. })));
    }

    #[test]
    fn octant_missing_gives_seven_tuples() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut c = Vec::new();
        for i in 0..8u32 {
            if i == 5 {
                continue;
            }
            for _ in 0..=i % 3 {
                a.push(if i & 1 == 0 { "a0" } else { "a1" });
                b.push(if i & 2 == 0 { "b0" } else { "b1" });
                c.push(if i & 4 == 0 { "c0" } else { "c1" });
            }
        }
        let oracle: HashSet<(&str, &str, &str)> = a.iter().zip(&b).zip(&c).map(|((x, y), z)| (*x, *y, *z)).collect();
        let d = Dataset::from_columns(
            &[AttributeDecl::nominal("a"), AttributeDecl::nominal("b"), AttributeDecl::nominal("c")],
            vec![
                Column::Nominal(NominalColumn::from_values(&a)),
                Column::Nominal(NominalColumn::from_values(&b)),
                Column::Nominal(NominalColumn::from_values(&c)),
            ],
        )
        .unwrap();
        let combos = extract_member_combinations(&d, &["a".into(), "b".into(), "c".into()]).unwrap();
        assert_eq!(combos.len(), oracle.len());
        assert_eq!(combos.len(), 7);
        assert!(combos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hashed_group_keys_match_dense() {
        let cards = [3000usize, 3000];
        let c0: Vec<u32> = (0..50).map(|i| (i * 7 % 3000) as u32).collect();
        let c1: Vec<u32> = (0..50).map(|i| (i % 4) as u32).collect();
        let mut hashed = GroupKeyer::new(vec![&c0, &c1], &cards);
        assert!(matches!(hashed, GroupKeyer::Hashed { .. }));
        let mut dense = GroupKeyer::new(vec![&c0, &c1], &[3000, 4]);
        assert!(matches!(dense, GroupKeyer::Dense { .. }));
        let (mut nh, mut nd) = (0, 0);
        for row in 0..50 {
            let h = hashed.slot(row, nh);
            let d = dense.slot(row, nd);
            if h == nh {
                nh += 1;
            }
            if d == nd {
                nd += 1;
            }
            assert_eq!(h, d);
        }
    }

    #[test]
    fn batch_labeling_matches_flat_execution() {
        let d = ds();
        let mut qs = Vec::new();
        for (lo, hi) in [(20.0, 22.0), (22.0, 24.0), (0.0, 1.0)] {
            for (s, c) in [("online", "MAC"), ("physical", "IBM"), ("physical", "MAC"), ("kiosk", "MAC")] {
                for f in [Avg, Count, Median, Sum] {
                    qs.push(q(f, "sales", &[("hour", lo, hi)], &[("store_type", s), ("computer_type", c)]));
                }
            }
        }
        qs.push(q(Max, "sales", &[("hour", 20.0, 21.0)], &[]));
        for threads in [1, 3] {
            let out = label_batch(&d, &qs, threads).unwrap();
            for (query, o) in qs.iter().zip(&out) {
                match execute_flat(&d, query) {
                    Ok(r) => assert_eq!(Some(r), *o),
                    Err(ExecError::EmptyAggregate(_)) => assert_eq!(None, *o),
                    Err(e) => panic!("{e}"),
                }
            }
        }
        let (labeled, report) = label_workload(&d, &qs, 2).unwrap();
        assert_eq!(report.total, qs.len());
        assert_eq!(report.labeled + report.excluded_empty, qs.len());
        assert!(labeled.iter().all(|l| l.label.is_finite()));
        assert!(labeled.iter().filter(|l| !l.query.target.func.defined_on_empty()).all(|l| l.support >= 1));
    }
}

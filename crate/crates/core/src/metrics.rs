//! Accuracy, timing and data-profile measures.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::EncodedQuery;
use crate::nnet::{self, NnetError, Predictor};
use crate::store::{Column, Dataset, StoreError};

/// Bin count used to discretize continuous columns for entropy.
pub const ENTROPY_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("labels span no range (all equal to {0})")]
    DegenerateRange(f64),
    #[error("attribute list is empty")]
    EmptyList,
    #[error("repetition count must be at least 1")]
    ZeroReps,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Model(#[from] NnetError),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// `sqrt((1/n) Σ (ŷ − y)²)`; the square root of the training loss.
pub fn rmse(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    match nnet::loss(predictions, labels) {
        Ok(mse) => Ok(mse.sqrt()),
        Err(NnetError::LengthMismatch(a, b)) => Err(MetricsError::LengthMismatch(a, b)),
        Err(_) => Err(MetricsError::Empty("prediction vector")),
    }
}

/// RMSE as a percentage of the true label range.
pub fn nrmse(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    let r = rmse(predictions, labels)?;
    let (lo, hi) = min_max(labels);
    if hi <= lo {
        return Err(MetricsError::DegenerateRange(lo));
    }
    Ok(100.0 * r / (hi - lo))
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Mean wall-clock milliseconds of one `predict_one` call. The first `warmup`
/// calls are not timed; queries are cycled if `reps` exceeds their count.
pub fn measure_ql<P: Predictor + ?Sized>(
    model: &P,
    queries: &[EncodedQuery],
    warmup: usize,
    reps: usize,
) -> Result<f64> {
    if reps == 0 {
        return Err(MetricsError::ZeroReps);
    }
    if queries.is_empty() {
        return Err(MetricsError::Empty("query list"));
    }
    let mut cycle = queries.iter().cycle();
    for _ in 0..warmup {
        std::hint::black_box(model.predict_one(cycle.next().unwrap())?);
    }
    let mut total = 0.0;
    for _ in 0..reps {
        let q = cycle.next().unwrap();
        let t = Instant::now();
        std::hint::black_box(model.predict_one(q)?);
        total += t.elapsed().as_secs_f64();
    }
    Ok(total * 1e3 / reps as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub queries: usize,
    pub seconds: f64,
    pub workers: usize,
    pub qps: f64,
}

/// Queries per second: batch size over batch wall-clock time.
pub fn throughput(queries: usize, seconds: f64) -> f64 {
    queries as f64 / seconds
}

/// Times one batch prediction of `queries` with `workers` threads.
pub fn measure_qt<P: Predictor + ?Sized>(model: &P, queries: &[EncodedQuery], workers: usize) -> Result<Throughput> {
    if queries.is_empty() {
        return Err(MetricsError::Empty("query batch"));
    }
    let t = Instant::now();
    let out = model.predict_many(queries, workers)?;
    let seconds = t.elapsed().as_secs_f64();
    std::hint::black_box(out);
    Ok(Throughput {
        queries: queries.len(),
        seconds,
        workers,
        qps: throughput(queries.len(), seconds),
    })
}

fn entropy_of_counts(counts: impl IntoIterator<Item = u64>, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let h: f64 = counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    // a single non-empty bucket gives -1·log2(1) = -0
    h.max(0.0)
}

/// Shannon entropy in bits. Nominal columns use member frequencies;
/// continuous ones are cut into ten equal-width bins over `[min, max]`, with
/// the maximum in the last bin.
pub fn column_entropy(ds: &Dataset, attr: &str) -> Result<f64> {
    let schema = ds.attribute(attr)?;
    match ds.column(schema.index) {
        Column::Nominal(col) => {
            let mut counts = vec![0u64; col.cardinality()];
            for &c in col.codes() {
                counts[c as usize] += 1;
            }
            Ok(entropy_of_counts(counts, col.len() as u64))
        }
        Column::Continuous(values) => Ok(entropy_of_counts(bin_counts(values), values.len() as u64)),
    }
}

fn bin_counts(values: &[f64]) -> [u64; ENTROPY_BINS] {
    let mut counts = [0u64; ENTROPY_BINS];
    let (lo, hi) = min_max(values);
    if values.is_empty() || hi <= lo {
        counts[0] = values.len() as u64;
        return counts;
    }
    let width = (hi - lo) / ENTROPY_BINS as f64;
    for &v in values {
        let b = ((v - lo) / width).floor() as usize;
        counts[b.min(ENTROPY_BINS - 1)] += 1;
    }
    counts
}

/// Arithmetic mean of [`column_entropy`] over `attrs`.
pub fn mean_entropy(ds: &Dataset, attrs: &[String]) -> Result<f64> {
    if attrs.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let mut sum = 0.0;
    for a in attrs {
        sum += column_entropy(ds, a)?;
    }
    Ok(sum / attrs.len() as f64)
}

/// Population variance over every cell of every matrix.
pub fn input_tensor_variance(encoded: &[EncodedQuery]) -> Result<f64> {
    let n: usize = encoded.iter().map(|q| q.cells().len()).sum();
    if n == 0 {
        return Err(MetricsError::Empty("encoded workload"));
    }
    let cells = || encoded.iter().flat_map(|q| q.cells().iter().map(|&c| c as f64));
    let mean = cells().sum::<f64>() / n as f64;
    Ok(cells().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: Option<String>,
    pub rmse: f64,
    pub nrmse_percent: f64,
    pub n_test: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ql_ms: Option<f64>,
    pub qt_qps: Option<f64>,
    /// Threads used for the throughput measurement.
    pub qt_workers: Option<usize>,
    pub mean_entropy: Option<f64>,
    pub input_tensor_variance: Option<f64>,
}

impl EvalReport {
    pub fn from_predictions(target: Option<String>, predictions: &[f64], labels: &[f64]) -> Result<Self> {
        let rmse = rmse(predictions, labels)?;
        let nrmse_percent = nrmse(predictions, labels)?;
        let (y_min, y_max) = min_max(labels);
        Ok(Self {
            target,
            rmse,
            nrmse_percent,
            n_test: labels.len(),
            y_min,
            y_max,
            ql_ms: None,
            qt_qps: None,
            qt_workers: None,
            mean_entropy: None,
            input_tensor_variance: None,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Aligned plain-text table, one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let header = [
        "Target",
        "Test queries",
        "RMSE",
        "NRMSE (%)",
        "QL (ms/q)",
        "QT (q/s)",
        "Mean entropy",
        "Input variance",
    ];
    let opt = |v: Option<f64>, prec: usize| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.prec$}"));
    let rows: Vec<[String; 8]> = reports
        .iter()
        .map(|r| {
            [
                r.target.clone().unwrap_or_else(|| "-".to_owned()),
                r.n_test.to_string(),
                format!("{:.4}", r.rmse),
                format!("{:.3}", r.nrmse_percent),
                opt(r.ql_ms, 3),
                opt(r.qt_qps, 0),
                opt(r.mean_entropy, 3),
                opt(r.input_tensor_variance, 4),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &mut header.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for row in &rows {
        line(&mut out, &mut row.iter().map(String::as_str));
    }
    out
}

//! Small built-in datasets for tests, demos and benchmarks.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::querygen::{AggregationFunction, AggregationTarget, QueryTemplate};
use crate::store::{AttributeDecl, Column, Dataset, NominalColumn, StoreError};

/// Cardinalities of `region`, `channel` and `category`.
pub const TRANSACTION_CARDINALITIES: [usize; 3] = [4, 5, 10];

pub fn transactions_schema() -> Vec<AttributeDecl> {
    vec![
        AttributeDecl::nominal("region"),
        AttributeDecl::nominal("channel"),
        AttributeDecl::nominal("category"),
        AttributeDecl::continuous("quantity"),
        AttributeDecl::continuous("amount"),
    ]
}

/// Synthetic sales table. `quantity` is uniform on [0, 1000]; `amount`
/// has a mean that moves smoothly with the three nominal members and rises
/// with quantity, plus uniform noise. Values carry two decimals.
pub fn transactions(rows: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [nr, nc, nk] = TRANSACTION_CARDINALITIES;
    let mut codes = [Vec::with_capacity(rows), Vec::with_capacity(rows), Vec::with_capacity(rows)];
    let mut quantity = Vec::with_capacity(rows);
    let mut amount = Vec::with_capacity(rows);
    let round2 = |v: f64| (v * 100.0).round() / 100.0;
    for _ in 0..rows {
        let r = rng.gen_range(0..nr);
        let c = rng.gen_range(0..nc);
        let k = rng.gen_range(0..nk);
        let q = rng.gen_range(0.0..=1000.0);
        let mean = 300.0 + 60.0 * r as f64 + 25.0 * c as f64 + 40.0 * (k as f64 * 0.6).sin();
        let a = mean + 0.5 * q + rng.gen_range(-50.0..50.0);
        codes[0].push(r);
        codes[1].push(c);
        codes[2].push(k);
        quantity.push(round2(q));
        amount.push(round2(a));
    }
    let names = |prefix: &str, v: &[usize]| NominalColumn::from_values(v.iter().map(|i| format!("{prefix}{i}")));
    Dataset::from_columns(
        &transactions_schema(),
        vec![
            Column::Nominal(names("r", &codes[0])),
            Column::Nominal(names("ch", &codes[1])),
            Column::Nominal(names("cat", &codes[2])),
            Column::Continuous(quantity),
            Column::Continuous(amount),
        ],
    )
    .expect("synthetic columns match the schema")
}

/// `avg(amount)` filtered by ranges on both continuous columns and one member
/// of each nominal column.
pub fn transactions_template(n_cont_samples: usize, seed: u64) -> QueryTemplate {
    QueryTemplate {
        targets: vec![AggregationTarget::new(AggregationFunction::Avg, "amount")],
        cont_filter_attrs: vec!["quantity".into(), "amount".into()],
        nom_filter_attrs: vec!["region".into(), "channel".into(), "category".into()],
        n_cont_samples,
        seed,
        numeric_scales: Default::default(),
    }
}

/// The eight-row store table used throughout the documentation: hour,
/// store type, computer type, hard disk size, sales and revenue.
pub fn running_example() -> Dataset {
    let rows: [(f64, &str, &str, f64, f64, f64); 8] = [
        (20.0, "online", "MAC", 500.0, 100.0, 85.0),
        (21.0, "online", "MAC", 300.0, 104.0, 85.0),
        (22.0, "online", "IBM", 200.0, 80.0, 82.0),
        (23.0, "physical", "MAC", 800.0, 95.0, 61.0),
        (21.0, "physical", "IBM", 150.0, 94.0, 50.0),
        (3.0, "online", "IBM", 990.0, 1.0, 1.0),
        (20.0, "physical", "IBM", 121.0, 94.0, 50.0),
        (22.0, "physical", "MAC", 820.0, 95.0, 61.0),
    ];
    Dataset::from_columns(
        &running_example_schema(),
        vec![
            Column::Continuous(rows.iter().map(|r| r.0).collect()),
            Column::Nominal(NominalColumn::from_values(rows.iter().map(|r| r.1))),
            Column::Nominal(NominalColumn::from_values(rows.iter().map(|r| r.2))),
            Column::Continuous(rows.iter().map(|r| r.3).collect()),
            Column::Continuous(rows.iter().map(|r| r.4).collect()),
            Column::Continuous(rows.iter().map(|r| r.5).collect()),
        ],
    )
    .expect("running example matches its schema")
}

pub fn running_example_schema() -> Vec<AttributeDecl> {
    vec![
        AttributeDecl::continuous("hour"),
        AttributeDecl::nominal("store_type"),
        AttributeDecl::nominal("computer_type"),
        AttributeDecl::continuous("harddisk_size"),
        AttributeDecl::continuous("sales"),
        AttributeDecl::continuous("revenue"),
    ]
}

/// Writes `ds` as comma-separated text with a header row.
pub fn write_csv<W: Write>(ds: &Dataset, out: W) -> Result<(), StoreError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ds.schema().iter().map(|a| a.name.as_str()))?;
    let mut record = Vec::with_capacity(ds.schema().len());
    for row in 0..ds.row_count() {
        record.clear();
        for attr in ds.schema() {
            record.push(match ds.column(attr.index) {
                Column::Continuous(v) => v[row].to_string(),
                Column::Nominal(c) => c.member(c.codes()[row]).to_owned(),
            });
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

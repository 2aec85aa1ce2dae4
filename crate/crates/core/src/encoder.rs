//! Query → binary matrix encoding.
//!
//! Every distinct token in the workload gets a sequential ID starting at 1
//! (0 is padding). A query becomes one row per token: the target, then for each
//! continuous filter its attribute token followed by the lower and upper
//! literals, then for each nominal filter its attribute token and member token.
//! Column 0 of a row flags numeric literals; the remaining `B` columns hold the
//! big-endian base-2 payload, so token ID 1 renders as `00001` when `B = 5`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::querygen::{BetweenFilter, FlatQuery, InFilter, QueryTemplate};

pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("literal {value} for `{attr}` does not fit in {bits} bits")]
    NumericOverflow { attr: String, value: f64, bits: u32 },
    #[error("query does not follow the vocabulary layout: {0}")]
    LayoutMismatch(String),
    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),
    #[error("token `{0}` would be assigned two roles")]
    AmbiguousToken(String),
    #[error("cannot build a vocabulary from an empty workload")]
    EmptyWorkload,
}

pub type Result<T, E = EncodeError> = std::result::Result<T, E>;

fn member_token(attr: &str, member: &str) -> String {
    format!("{attr}={member}")
}

/// Bits needed to write `x` in base 2 (0 for 0).
fn bit_length(x: u64) -> u32 {
    64 - x.leading_zeros()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabularyRepr {
    layout_version: u32,
    entries: Vec<String>,
    bit_width: u32,
    numeric_scales: BTreeMap<String, f64>,
    numeric_offsets: BTreeMap<String, i64>,
    cont_attrs: Vec<String>,
    nom_attrs: Vec<String>,
}

/// Bijective token ↔ ID map plus the numeric grid and sequence layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr")]
pub struct TokenVocabulary {
    pub layout_version: u32,
    /// Token with ID `i + 1` sits at index `i`.
    pub entries: Vec<String>,
    pub bit_width: u32,
    pub numeric_scales: BTreeMap<String, f64>,
    /// Added to the quantized literal before encoding so that negative
    /// domains stay representable; zero for non-negative attributes.
    pub numeric_offsets: BTreeMap<String, i64>,
    pub cont_attrs: Vec<String>,
    pub nom_attrs: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, u32>,
}

impl From<VocabularyRepr> for TokenVocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let ids = r
            .entries
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 1))
            .collect();
        Self {
            layout_version: r.layout_version,
            entries: r.entries,
            bit_width: r.bit_width,
            numeric_scales: r.numeric_scales,
            numeric_offsets: r.numeric_offsets,
            cont_attrs: r.cont_attrs,
            nom_attrs: r.nom_attrs,
            ids,
        }
    }
}

impl TokenVocabulary {
    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        id.checked_sub(1)
            .and_then(|i| self.entries.get(i as usize))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        1 + 3 * self.cont_attrs.len() + 2 * self.nom_attrs.len()
    }

    pub fn width(&self) -> usize {
        1 + self.bit_width as usize
    }

    /// `(sequence length, row width)` shared by every encoded query.
    pub fn input_shape(&self) -> (usize, usize) {
        (self.seq_len(), self.width())
    }

    pub fn scale(&self, attr: &str) -> f64 {
        self.numeric_scales.get(attr).copied().unwrap_or(1.0)
    }

    fn offset(&self, attr: &str) -> i64 {
        self.numeric_offsets.get(attr).copied().unwrap_or(0)
    }

    /// SHA-256 of the vocabulary's JSON form.
    pub fn content_hash(&self) -> String {
        crate::hash::json_hash(self).expect("vocabulary serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn quantized(v: f64, scale: f64) -> f64 {
    (v * scale).round()
}

/// Builds the vocabulary for a template's workload.
///
/// Token order: targets (template order), continuous then nominal attribute
/// tokens (template order), then member tokens sorted by attribute position
/// and member string. Only tokens that occur in the workload are included.
pub fn build_vocabulary(workload: &[FlatQuery], template: &QueryTemplate) -> Result<TokenVocabulary> {
    if workload.is_empty() {
        return Err(EncodeError::EmptyWorkload);
    }
    let mut entries: Vec<String> = Vec::new();
    for t in &template.targets {
        if workload.iter().any(|q| q.target == *t) {
            entries.push(t.to_string());
        }
    }
    entries.extend(template.cont_filter_attrs.iter().cloned());
    entries.extend(template.nom_filter_attrs.iter().cloned());

    let mut members: Vec<(usize, &str)> = Vec::new();
    let mut lo: BTreeMap<&str, f64> = BTreeMap::new();
    let mut hi: BTreeMap<&str, f64> = BTreeMap::new();
    for q in workload {
        for f in &q.filters.ins {
            if let Some(pos) = template.nom_filter_attrs.iter().position(|a| *a == f.attr) {
                members.push((pos, &f.member));
            }
        }
        for b in &q.filters.between {
            let s = template.scale_for(&b.attr);
            for v in [b.lower, b.upper] {
                let k = quantized(v, s);
                let l = lo.entry(&b.attr).or_insert(k);
                *l = l.min(k);
                let h = hi.entry(&b.attr).or_insert(k);
                *h = h.max(k);
            }
        }
    }
    members.sort_unstable();
    members.dedup();
    entries.extend(
        members
            .iter()
            .map(|&(pos, m)| member_token(&template.nom_filter_attrs[pos], m)),
    );

    let mut seen = std::collections::HashSet::new();
    for e in &entries {
        if !seen.insert(e.as_str()) {
            return Err(EncodeError::AmbiguousToken(e.clone()));
        }
    }

    let mut numeric_offsets = BTreeMap::new();
    let mut max_literal = 0u64;
    for attr in &template.cont_filter_attrs {
        let (Some(&l), Some(&h)) = (lo.get(attr.as_str()), hi.get(attr.as_str())) else {
            continue;
        };
        let offset = l.min(0.0) as i64;
        numeric_offsets.insert(attr.clone(), offset);
        max_literal = max_literal.max((h as i64 - offset) as u64);
    }
    let bit_width = bit_length(entries.len() as u64).max(bit_length(max_literal)).max(1);

    let numeric_scales = template
        .cont_filter_attrs
        .iter()
        .map(|a| (a.clone(), template.scale_for(a)))
        .collect();
    Ok(VocabularyRepr {
        layout_version: LAYOUT_VERSION,
        entries,
        bit_width,
        numeric_scales,
        numeric_offsets,
        cont_attrs: template.cont_filter_attrs.clone(),
        nom_attrs: template.nom_filter_attrs.clone(),
    }
    .into())
}

/// Fixed-shape 0/1 matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedQuery {
    rows: usize,
    width: usize,
    cells: Vec<u8>,
}

impl EncodedQuery {
    pub fn from_cells(rows: usize, width: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != rows * width {
            return Err(EncodeError::MalformedMatrix(format!(
                "{} cells for a {rows}x{width} matrix",
                cells.len()
            )));
        }
        Ok(Self { rows, width, cells })
    }

    pub fn zeros(rows: usize, width: usize) -> Self {
        Self {
            rows,
            width,
            cells: vec![0; rows * width],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.width)
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.cells[i * self.width..(i + 1) * self.width]
    }

    fn push_row(&mut self, flag: u8, payload: u64, bits: u32) {
        self.cells.push(flag);
        for b in (0..bits).rev() {
            self.cells.push(((payload >> b) & 1) as u8);
        }
        self.rows += 1;
    }

    /// Debug dump: one line of `0`/`1` characters per row.
    pub fn to_text_grid(&self) -> String {
        let mut s = String::with_capacity(self.rows * (self.width + 1));
        for r in 0..self.rows {
            for &c in self.row(r) {
                s.push(if c == 0 { '0' } else { '1' });
            }
            s.push('\n');
        }
        s
    }
}

fn find_single<'a, T>(items: &'a [T], attr: &str, attr_of: impl Fn(&T) -> &str) -> Result<&'a T> {
    let mut it = items.iter().filter(|x| attr_of(x) == attr);
    match (it.next(), it.next()) {
        (Some(x), None) => Ok(x),
        (None, _) => Err(EncodeError::LayoutMismatch(format!("no filter on `{attr}`"))),
        (Some(_), Some(_)) => Err(EncodeError::LayoutMismatch(format!("several filters on `{attr}`"))),
    }
}

pub fn encode(q: &FlatQuery, vocab: &TokenVocabulary) -> Result<EncodedQuery> {
    let bits = vocab.bit_width;
    let (seq_len, width) = vocab.input_shape();
    if q.filters.between.len() != vocab.cont_attrs.len() || q.filters.ins.len() != vocab.nom_attrs.len() {
        return Err(EncodeError::LayoutMismatch(format!(
            "{} between / {} in filters, layout expects {} / {}",
            q.filters.between.len(),
            q.filters.ins.len(),
            vocab.cont_attrs.len(),
            vocab.nom_attrs.len()
        )));
    }
    let mut m = EncodedQuery {
        rows: 0,
        width,
        cells: Vec::with_capacity(seq_len * width),
    };
    let token = |t: &str| vocab.id(t).ok_or_else(|| EncodeError::UnknownToken(t.to_owned()));
    m.push_row(0, token(&q.target.to_string())? as u64, bits);

    let limit = 1u64 << bits;
    for attr in &vocab.cont_attrs {
        let b = find_single(&q.filters.between, attr, |b| &b.attr)?;
        m.push_row(0, token(attr)? as u64, bits);
        let scale = vocab.scale(attr);
        let offset = vocab.offset(attr);
        for v in [b.lower, b.upper] {
            let k = quantized(v, scale);
            let shifted = k - offset as f64;
            if !shifted.is_finite() || shifted < 0.0 || shifted >= limit as f64 {
                return Err(EncodeError::NumericOverflow {
                    attr: attr.clone(),
                    value: v,
                    bits,
                });
            }
            m.push_row(1, shifted as u64, bits);
        }
    }
    for attr in &vocab.nom_attrs {
        let f = find_single(&q.filters.ins, attr, |f| &f.attr)?;
        m.push_row(0, token(attr)? as u64, bits);
        m.push_row(0, token(&member_token(attr, &f.member))? as u64, bits);
    }
    debug_assert_eq!(m.rows, seq_len);
    Ok(m)
}

pub fn encode_all(queries: &[FlatQuery], vocab: &TokenVocabulary) -> Result<Vec<EncodedQuery>> {
    queries.iter().map(|q| encode(q, vocab)).collect()
}

/// Inverse of [`encode`]; numeric literals come back on the quantization grid.
pub fn decode(m: &EncodedQuery, vocab: &TokenVocabulary, template: &QueryTemplate) -> Result<FlatQuery> {
    if template.cont_filter_attrs != vocab.cont_attrs || template.nom_filter_attrs != vocab.nom_attrs {
        return Err(EncodeError::LayoutMismatch("template and vocabulary disagree on filter attributes".into()));
    }
    let (seq_len, width) = vocab.input_shape();
    if m.shape() != (seq_len, width) {
        return Err(EncodeError::MalformedMatrix(format!(
            "shape {:?}, expected {:?}",
            m.shape(),
            (seq_len, width)
        )));
    }
    if let Some(c) = m.cells.iter().find(|&&c| c > 1) {
        return Err(EncodeError::MalformedMatrix(format!("cell value {c}")));
    }
    let read = |r: usize| -> (u8, u64) {
        let row = m.row(r);
        let payload = row[1..].iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        (row[0], payload)
    };
    let token_at = |r: usize| -> Result<&str> {
        match read(r) {
            (0, id) => u32::try_from(id)
                .ok()
                .and_then(|id| vocab.token(id))
                .ok_or_else(|| EncodeError::MalformedMatrix(format!("row {r}: token id {id} outside 1..={}", vocab.len()))),
            _ => Err(EncodeError::MalformedMatrix(format!("row {r}: expected a token, found a literal"))),
        }
    };
    let literal_at = |r: usize, attr: &str| -> Result<f64> {
        match read(r) {
            (1, k) => Ok((k as i64 + vocab.offset(attr)) as f64 / vocab.scale(attr)),
            _ => Err(EncodeError::MalformedMatrix(format!("row {r}: expected a literal"))),
        }
    };
    let expect_token = |r: usize, want: &str| -> Result<()> {
        let got = token_at(r)?;
        if got == want {
            Ok(())
        } else {
            Err(EncodeError::MalformedMatrix(format!("row {r}: expected `{want}`, found `{got}`")))
        }
    };

    let target_token = token_at(0)?;
    let target = template
        .targets
        .iter()
        .find(|t| t.to_string() == target_token)
        .cloned()
        .ok_or_else(|| EncodeError::MalformedMatrix(format!("row 0: `{target_token}` is not a target")))?;

    let mut r = 1;
    let mut between = Vec::with_capacity(vocab.cont_attrs.len());
    for attr in &vocab.cont_attrs {
        expect_token(r, attr)?;
        between.push(BetweenFilter {
            attr: attr.clone(),
            lower: literal_at(r + 1, attr)?,
            upper: literal_at(r + 2, attr)?,
        });
        r += 3;
    }
    let mut ins = Vec::with_capacity(vocab.nom_attrs.len());
    for attr in &vocab.nom_attrs {
        expect_token(r, attr)?;
        let tok = token_at(r + 1)?;
        let member = tok
            .strip_prefix(attr.as_str())
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| EncodeError::MalformedMatrix(format!("row {}: `{tok}` is not a member of `{attr}`", r + 1)))?;
        ins.push(InFilter {
            attr: attr.clone(),
            member: member.to_owned(),
        });
        r += 2;
    }
    Ok(FlatQuery::new(target, between, ins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::querygen::AggregationFunction::*;
    use crate::querygen::AggregationTarget;

    fn template() -> QueryTemplate {
        QueryTemplate {
            targets: vec![AggregationTarget::new(Avg, "sales")],
            cont_filter_attrs: vec!["hour".into(), "harddisk_size".into()],
            nom_filter_attrs: vec!["store_type".into(), "computer_type".into()],
            n_cont_samples: 1,
            seed: 0,
            numeric_scales: BTreeMap::new(),
        }
    }

    fn query(h: (f64, f64), d: (f64, f64), store: &str, comp: &str) -> FlatQuery {
        FlatQuery::new(
            AggregationTarget::new(Avg, "sales"),
            vec![
                BetweenFilter { attr: "hour".into(), lower: h.0, upper: h.1 },
                BetweenFilter { attr: "harddisk_size".into(), lower: d.0, upper: d.1 },
            ],
            vec![
                InFilter { attr: "store_type".into(), member: store.into() },
                InFilter { attr: "computer_type".into(), member: comp.into() },
            ],
        )
    }

    fn running() -> FlatQuery {
        query((20.0, 23.0), (121.0, 820.0), "online", "Mac")
    }

    #[test]
    fn first_target_is_id_one() {
        let vocab = build_vocabulary(&[running()], &template()).unwrap();
        assert_eq!(vocab.id("avg(sales)"), Some(1));
        assert_eq!(vocab.token(1), Some("avg(sales)"));
        assert_eq!(vocab.entries, ["avg(sales)", "hour", "harddisk_size", "store_type", "computer_type", "store_type=online", "computer_type=Mac"]);
        // 7 tokens need 3 bits, 820 needs 10
        assert_eq!(vocab.bit_width, 10);
    }

    #[test]
    fn token_id_rendering_at_five_bits() {
        let mut q = running();
        q.filters.between[0].upper = 23.0;
        q.filters.between[1] = BetweenFilter { attr: "harddisk_size".into(), lower: 1.0, upper: 20.0 };
        let vocab = build_vocabulary(&[q.clone()], &template()).unwrap();
        assert_eq!(vocab.bit_width, 5);
        let m = encode(&q, &vocab).unwrap();
        assert_eq!(m.row(0), &[0, 0, 0, 0, 0, 1]);
        // hour upper bound 23 = 10111
        assert_eq!(m.row(3), &[1, 1, 0, 1, 1, 1]);
        assert!(m.to_text_grid().starts_with("000001\n"));
    }

    #[test]
    fn bit_width_from_vocab_size_or_literal() {
        assert_eq!(bit_length(31), 5);
        assert_eq!(bit_length(1000), 10);
        assert_eq!(bit_length(31).max(bit_length(1000)), 10);
        assert_eq!(bit_length(0), 0);
    }

    #[test]
    fn running_example_has_eleven_rows() {
        let vocab = build_vocabulary(&[running()], &template()).unwrap();
        let m = encode(&running(), &vocab).unwrap();
        // hand-built token sequence: target, (hour, 20, 23), (harddisk_size, 121, 820),
        // (store_type, online), (computer_type, Mac)
        let expected: Vec<(u8, u64)> = vec![
            (0, 1),
            (0, 2),
            (1, 20),
            (1, 23),
            (0, 3),
            (1, 121),
            (1, 820),
            (0, 4),
            (0, 6),
            (0, 5),
            (0, 7),
        ];
        assert_eq!(m.shape(), (11, 11));
        for (r, (flag, payload)) in expected.into_iter().enumerate() {
            let row = m.row(r);
            assert_eq!(row[0], flag, "row {r}");
            assert_eq!(row[1..].iter().fold(0u64, |a, &b| (a << 1) | b as u64), payload, "row {r}");
        }
    }

    #[test]
    fn roundtrip_and_errors() {
        let t = template();
        let w = vec![running(), query((0.0, 5.0), (3.0, 999.0), "physical", "IBM")];
        let vocab = build_vocabulary(&w, &t).unwrap();
        for q in &w {
            assert_eq!(decode(&encode(q, &vocab).unwrap(), &vocab, &t).unwrap(), *q);
        }
        let (l, wd) = vocab.input_shape();
        assert!(matches!(decode(&EncodedQuery::zeros(l, wd), &vocab, &t), Err(EncodeError::MalformedMatrix(_))));

        let mut bad = encode(&running(), &vocab).unwrap();
        // token row with payload past the vocabulary
        let last = bad.width * 10;
        for c in &mut bad.cells[last + 1..last + bad.width] {
            *c = 1;
        }
        assert!(matches!(decode(&bad, &vocab, &t), Err(EncodeError::MalformedMatrix(_))));

        let unknown = query((0.0, 5.0), (3.0, 999.0), "kiosk", "IBM");
        assert!(matches!(encode(&unknown, &vocab), Err(EncodeError::UnknownToken(_))));
        let overflow = query((0.0, 5.0), (3.0, 5000.0), "online", "IBM");
        assert!(matches!(encode(&overflow, &vocab), Err(EncodeError::NumericOverflow { .. })));
        let mut missing = running();
        missing.filters.ins.pop();
        assert!(matches!(encode(&missing, &vocab), Err(EncodeError::LayoutMismatch(_))));
    }

    #[test]
    fn negative_and_fractional_literals() {
        let mut t = template();
        t.numeric_scales.insert("hour".into(), 10.0);
        let q = query((-3.5, 0.3), (-40.0, 7.0), "online", "Mac");
        let vocab = build_vocabulary(std::slice::from_ref(&q), &t).unwrap();
        assert_eq!(vocab.numeric_offsets["hour"], -35);
        let back = decode(&encode(&q, &vocab).unwrap(), &vocab, &t).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn vocabulary_json_roundtrip_and_hash() {
        let vocab = build_vocabulary(&[running()], &template()).unwrap();
        let back = TokenVocabulary::from_json(&vocab.to_json()).unwrap();
        assert_eq!(back, vocab);
        assert_eq!(back.id("computer_type=Mac"), Some(7));
        assert_eq!(back.content_hash(), vocab.content_hash());
        let again = build_vocabulary(&[running()], &template()).unwrap();
        assert_eq!(again.to_json(), vocab.to_json());
    }

    #[test]
    fn distinct_tokens_have_distinct_payloads() {
        let vocab = build_vocabulary(&[running(), query((1.0, 2.0), (3.0, 4.0), "physical", "IBM")], &template()).unwrap();
        let ids: std::collections::HashSet<u32> = vocab.entries.iter().map(|e| vocab.id(e).unwrap()).collect();
        assert_eq!(ids.len(), vocab.len());
        assert_eq!(*ids.iter().max().unwrap() as usize, vocab.len());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_query() -> impl Strategy<Value = FlatQuery> {
            (0u32..24, 0u32..24, 0u32..1000, 0u32..1000, 0usize..2, 0usize..3).prop_map(|(a, b, c, d, s, k)| {
                query(
                    (a.min(b) as f64, a.max(b) as f64),
                    (c.min(d) as f64, c.max(d) as f64),
                    ["online", "physical"][s],
                    ["Mac", "IBM", "Dell"][k],
                )
            })
        }

        proptest! {
            #[test]
            fn decode_inverts_encode_and_is_injective(w in prop::collection::vec(arb_query(), 1..40)) {
                let t = template();
                let vocab = build_vocabulary(&w, &t).unwrap();
                let mut seen = HashMap::new();
                for q in &w {
                    let m = encode(q, &vocab).unwrap();
                    prop_assert_eq!(m.shape(), vocab.input_shape());
                    prop_assert!(m.cells().iter().all(|&c| c <= 1));
                    prop_assert_eq!(&decode(&m, &vocab, &t).unwrap(), q);
                    if let Some(prev) = seen.insert(m, q.clone()) {
                        prop_assert_eq!(prev, q.clone());
                    }
                }
            }
        }
    }
}

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, MatRef};
use super::{EncodedSet, LabelNorm, ModelConfig, NnetError, Result};
use crate::encoder::EncodedQuery;

/// Queries per inference block. Fixed so that results never depend on how
/// work is divided between threads.
const PREDICT_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    /// `input width × 4·units`, gate blocks in order input, forget, cell, output.
    InputWeights,
    /// `units × 4·units`.
    RecurrentWeights,
    GateBias,
    /// `units × dense units`.
    DenseWeights,
    DenseBias,
    OutputWeights,
    OutputBias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 7] = [
        ParamGroup::InputWeights,
        ParamGroup::RecurrentWeights,
        ParamGroup::GateBias,
        ParamGroup::DenseWeights,
        ParamGroup::DenseBias,
        ParamGroup::OutputWeights,
        ParamGroup::OutputBias,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub seq_len: usize,
    pub input: usize,
    pub hidden: usize,
    pub dense: usize,
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            seq_len: config.input_shape.0,
            input: config.input_shape.1,
            hidden: config.lstm_units,
            dense: config.dense_units,
        }
    }

    pub fn gates(&self) -> usize {
        4 * self.hidden
    }

    fn sizes(&self) -> [usize; 7] {
        let g = self.gates();
        [self.input * g, self.hidden * g, g, self.hidden * self.dense, self.dense, self.dense, 1]
    }

    pub fn range(&self, group: ParamGroup) -> Range<usize> {
        let sizes = self.sizes();
        let idx = group as usize;
        let start: usize = sizes[..idx].iter().sum();
        start..start + sizes[idx]
    }

    pub fn len(&self) -> usize {
        self.sizes().iter().sum()
    }

    fn cells(&self) -> usize {
        self.seq_len * self.input
    }
}

struct Views<'a> {
    wx: &'a [f64],
    wh: &'a [f64],
    b: &'a [f64],
    wd: &'a [f64],
    bd: &'a [f64],
    wo: &'a [f64],
    bo: f64,
}

fn views<'a>(layout: &Layout, p: &'a [f64]) -> Views<'a> {
    let r = |g| &p[layout.range(g)];
    Views {
        wx: r(ParamGroup::InputWeights),
        wh: r(ParamGroup::RecurrentWeights),
        b: r(ParamGroup::GateBias),
        wd: r(ParamGroup::DenseWeights),
        bd: r(ParamGroup::DenseBias),
        wo: r(ParamGroup::OutputWeights),
        bo: p[layout.range(ParamGroup::OutputBias).start],
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one block, kept for backpropagation.
#[derive(Default)]
pub(crate) struct Workspace {
    n: usize,
    /// `seq_len × n × 4·units`, post-activation.
    gates: Vec<f64>,
    /// `(seq_len + 1) × n × units`; slot 0 is the zero initial state.
    cell: Vec<f64>,
    hidden: Vec<f64>,
    /// `seq_len × n × units`, tanh of the cell state.
    cell_tanh: Vec<f64>,
    pre_dense: Vec<f64>,
    dense: Vec<f64>,
    pub out: Vec<f64>,
}

impl Workspace {
    fn prepare(&mut self, layout: &Layout, n: usize) {
        let (l, h, g, d) = (layout.seq_len, layout.hidden, layout.gates(), layout.dense);
        self.n = n;
        self.gates.resize(l * n * g, 0.0);
        self.cell.resize((l + 1) * n * h, 0.0);
        self.hidden.resize((l + 1) * n * h, 0.0);
        self.cell[..n * h].fill(0.0);
        self.hidden[..n * h].fill(0.0);
        self.cell_tanh.resize(l * n * h, 0.0);
        self.pre_dense.resize(n * d, 0.0);
        self.dense.resize(n * d, 0.0);
        self.out.resize(n, 0.0);
    }
}

#[derive(Default)]
pub(crate) struct Scratch {
    d_gates: Vec<f64>,
    d_hidden: Vec<f64>,
    d_cell: Vec<f64>,
    d_dense: Vec<f64>,
}

/// Runs `n` samples packed back to back in `x`; normalized outputs land in
/// `ws.out`.
pub(crate) fn forward_block(layout: &Layout, params: &[f64], x: &[f64], n: usize, ws: &mut Workspace) {
    debug_assert_eq!(x.len(), n * layout.cells());
    ws.prepare(layout, n);
    let (l, w, h, g, d) = (layout.seq_len, layout.input, layout.hidden, layout.gates(), layout.dense);
    let v = views(layout, params);
    let Workspace {
        gates,
        cell,
        hidden,
        cell_tanh,
        pre_dense,
        dense,
        out,
        ..
    } = ws;

    for t in 0..l {
        let z = &mut gates[t * n * g..(t + 1) * n * g];
        for row in z.chunks_exact_mut(g) {
            row.copy_from_slice(v.b);
        }
        gemm(MatRef::strided(&x[t * w..], n, w, l * w, 1), MatRef::new(v.wx, w, g), z, 1.0);
        if t > 0 {
            let h_prev = &hidden[t * n * h..(t + 1) * n * h];
            gemm(MatRef::new(h_prev, n, h), MatRef::new(v.wh, h, g), z, 1.0);
        }
        let (c_lo, c_hi) = cell.split_at_mut((t + 1) * n * h);
        let c_prev = &c_lo[t * n * h..];
        let c_next = &mut c_hi[..n * h];
        let h_next = &mut hidden[(t + 1) * n * h..(t + 2) * n * h];
        let tc = &mut cell_tanh[t * n * h..(t + 1) * n * h];
        for r in 0..n {
            let zr = &mut z[r * g..(r + 1) * g];
            for j in 0..h {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[h + j]);
                let gg = zr[2 * h + j].tanh();
                let o = sigmoid(zr[3 * h + j]);
                zr[j] = i;
                zr[h + j] = f;
                zr[2 * h + j] = gg;
                zr[3 * h + j] = o;
                let k = r * h + j;
                let c = f * c_prev[k] + i * gg;
                c_next[k] = c;
                let ct = c.tanh();
                tc[k] = ct;
                h_next[k] = o * ct;
            }
        }
    }

    let h_last = &hidden[l * n * h..(l + 1) * n * h];
    for row in pre_dense.chunks_exact_mut(d) {
        row.copy_from_slice(v.bd);
    }
    gemm(MatRef::new(h_last, n, h), MatRef::new(v.wd, h, d), pre_dense, 1.0);
    for (r, a) in dense.iter_mut().zip(pre_dense.iter()) {
        *r = a.max(0.0);
    }
    for (o, row) in out.iter_mut().zip(dense.chunks_exact(d)) {
        let mut acc = v.bo;
        for (a, b) in row.iter().zip(v.wo) {
            acc += a * b;
        }
        *o = acc;
    }
}

/// Mean squared error of the block against normalized labels `y`, with its
/// gradient written to `grad` (overwritten, same layout as the parameters).
pub(crate) fn backward_block(
    layout: &Layout,
    params: &[f64],
    x: &[f64],
    y: &[f64],
    ws: &mut Workspace,
    scratch: &mut Scratch,
    grad: &mut [f64],
) -> f64 {
    let n = y.len();
    forward_block(layout, params, x, n, ws);
    let (l, w, h, g, d) = (layout.seq_len, layout.input, layout.hidden, layout.gates(), layout.dense);
    let v = views(layout, params);
    grad.fill(0.0);

    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let d_out: Vec<f64> = ws
        .out
        .iter()
        .zip(y)
        .map(|(o, t)| {
            let e = o - t;
            loss += e * e;
            2.0 * e * inv_n
        })
        .collect();
    loss *= inv_n;

    scratch.d_dense.resize(n * d, 0.0);
    scratch.d_hidden.resize(n * h, 0.0);
    scratch.d_cell.resize(n * h, 0.0);
    scratch.d_gates.resize(n * g, 0.0);
    let Scratch {
        d_gates,
        d_hidden,
        d_cell,
        d_dense,
    } = scratch;

    {
        let g_wo = layout.range(ParamGroup::OutputWeights);
        let g_bo = layout.range(ParamGroup::OutputBias).start;
        for r in 0..n {
            let row = &ws.dense[r * d..(r + 1) * d];
            for (gw, a) in grad[g_wo.clone()].iter_mut().zip(row) {
                *gw += a * d_out[r];
            }
            grad[g_bo] += d_out[r];
            for j in 0..d {
                d_dense[r * d + j] = if ws.pre_dense[r * d + j] > 0.0 { d_out[r] * v.wo[j] } else { 0.0 };
            }
        }
    }
    let h_last = &ws.hidden[l * n * h..(l + 1) * n * h];
    gemm(
        MatRef::new(h_last, n, h).t(),
        MatRef::new(d_dense, n, d),
        &mut grad[layout.range(ParamGroup::DenseWeights)],
        0.0,
    );
    let bd = layout.range(ParamGroup::DenseBias);
    for row in d_dense.chunks_exact(d) {
        for (gb, dv) in grad[bd.clone()].iter_mut().zip(row) {
            *gb += dv;
        }
    }
    gemm(MatRef::new(d_dense, n, d), MatRef::new(v.wd, h, d).t(), d_hidden, 0.0);
    d_cell.fill(0.0);

    let wx = layout.range(ParamGroup::InputWeights);
    let wh = layout.range(ParamGroup::RecurrentWeights);
    let gb = layout.range(ParamGroup::GateBias);
    for t in (0..l).rev() {
        let acts = &ws.gates[t * n * g..(t + 1) * n * g];
        let c_prev = &ws.cell[t * n * h..(t + 1) * n * h];
        let tc = &ws.cell_tanh[t * n * h..(t + 1) * n * h];
        for r in 0..n {
            let a = &acts[r * g..(r + 1) * g];
            let dz = &mut d_gates[r * g..(r + 1) * g];
            for j in 0..h {
                let k = r * h + j;
                let (i, f, gg, o) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                let dh = d_hidden[k];
                let ct = tc[k];
                let dc = d_cell[k] + dh * o * (1.0 - ct * ct);
                dz[j] = dc * gg * i * (1.0 - i);
                dz[h + j] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                dz[3 * h + j] = dh * ct * o * (1.0 - o);
                d_cell[k] = dc * f;
            }
        }
        gemm(
            MatRef::strided(&x[t * w..], n, w, l * w, 1).t(),
            MatRef::new(d_gates, n, g),
            &mut grad[wx.clone()],
            1.0,
        );
        for row in d_gates.chunks_exact(g) {
            for (gv, dv) in grad[gb.clone()].iter_mut().zip(row) {
                *gv += dv;
            }
        }
        if t > 0 {
            let h_prev = &ws.hidden[t * n * h..(t + 1) * n * h];
            gemm(MatRef::new(h_prev, n, h).t(), MatRef::new(d_gates, n, g), &mut grad[wh.clone()], 1.0);
            gemm(MatRef::new(d_gates, n, g), MatRef::new(v.wh, h, g).t(), d_hidden, 0.0);
        }
    }
    loss
}

/// Single-layer LSTM regressor with its label statistics and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub(crate) config: ModelConfig,
    pub(crate) layout: Layout,
    pub(crate) params: Vec<f64>,
    pub(crate) norm: LabelNorm,
    pub(crate) vocab_hash: Option<String>,
    pub(crate) adam: super::train::AdamState,
    pub(crate) epochs_trained: usize,
    pub(crate) best_val_mse: Option<f64>,
}

impl LstmModel {
    /// Xavier-uniform weights per gate block, zero biases except the forget
    /// gate (1.0). Deterministic in `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (w, h, d) = (layout.input, layout.hidden, layout.dense);

        let mut fill_blocks = |group: ParamGroup, rows: usize, cols: usize, blocks: usize| {
            let range = layout.range(group);
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let stride = cols * blocks;
            for b in 0..blocks {
                for r in 0..rows {
                    for c in 0..cols {
                        params[range.start + r * stride + b * cols + c] = dist.sample(&mut rng);
                    }
                }
            }
        };
        fill_blocks(ParamGroup::InputWeights, w, h, 4);
        fill_blocks(ParamGroup::RecurrentWeights, h, h, 4);
        fill_blocks(ParamGroup::DenseWeights, h, d, 1);
        fill_blocks(ParamGroup::OutputWeights, d, 1, 1);
        let gb = layout.range(ParamGroup::GateBias);
        params[gb.start + h..gb.start + 2 * h].fill(1.0);

        let n = params.len();
        Ok(Self {
            config,
            layout,
            params,
            norm: LabelNorm::identity(),
            vocab_hash: None,
            adam: super::train::AdamState::new(n),
            epochs_trained: 0,
            best_val_mse: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.config.input_shape
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self, group: ParamGroup) -> &[f64] {
        &self.params[self.layout.range(group)]
    }

    pub fn parameters_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        let r = self.layout.range(group);
        &mut self.params[r]
    }

    pub fn all_parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn label_norm(&self) -> &LabelNorm {
        &self.norm
    }

    pub fn set_label_norm(&mut self, norm: LabelNorm) {
        self.norm = norm;
    }

    pub fn vocabulary_hash(&self) -> Option<&str> {
        self.vocab_hash.as_deref()
    }

    pub fn set_vocabulary_hash(&mut self, hash: impl Into<String>) {
        self.vocab_hash = Some(hash.into());
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    pub fn best_validation_mse(&self) -> Option<f64> {
        self.best_val_mse
    }

    fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        if shape != self.config.input_shape {
            return Err(NnetError::ShapeMismatch {
                expected: self.config.input_shape,
                found: shape,
            });
        }
        Ok(())
    }

    /// Predicted label (denormalized) for one encoded query.
    pub fn forward(&self, x: &EncodedQuery) -> Result<f64> {
        self.check_shape(x.shape())?;
        let cells: Vec<f64> = x.cells().iter().map(|&c| c as f64).collect();
        let mut ws = Workspace::default();
        forward_block(&self.layout, &self.params, &cells, 1, &mut ws);
        Ok(self.norm.denormalize(ws.out[0]))
    }

    /// Element-wise `forward`, spread over up to `workers` threads. The
    /// output is identical for every worker count.
    pub fn predict_batch(&self, xs: &[EncodedQuery], workers: usize) -> Result<Vec<f64>> {
        for x in xs {
            self.check_shape(x.shape())?;
        }
        let z = self.predict_normalized(xs.len(), workers, |range, buf| {
            for q in &xs[range] {
                buf.extend(q.cells().iter().map(|&c| c as f64));
            }
        });
        Ok(z.into_iter().map(|v| self.norm.denormalize(v)).collect())
    }

    pub fn predict_set(&self, set: &EncodedSet, workers: usize) -> Result<Vec<f64>> {
        self.check_shape(set.shape())?;
        let z = self.predict_normalized(set.len(), workers, |range, buf| {
            let c = self.layout.cells();
            buf.extend_from_slice(&set.x[range.start * c..range.end * c]);
        });
        Ok(z.into_iter().map(|v| self.norm.denormalize(v)).collect())
    }

    /// MSE of the model on `set` in normalized label space.
    pub fn normalized_mse(&self, set: &EncodedSet) -> Result<f64> {
        self.check_shape(set.shape())?;
        let z = self.predict_normalized(set.len(), 1, |range, buf| {
            let c = self.layout.cells();
            buf.extend_from_slice(&set.x[range.start * c..range.end * c]);
        });
        let y: Vec<f64> = set.y.iter().map(|&v| self.norm.normalize(v)).collect();
        super::loss(&z, &y)
    }

    fn predict_normalized<F>(&self, n: usize, workers: usize, pack: F) -> Vec<f64>
    where
        F: Fn(Range<usize>, &mut Vec<f64>) + Sync,
    {
        let chunks = n.div_ceil(PREDICT_CHUNK);
        let run_chunk = |idx: usize, buf: &mut Vec<f64>, ws: &mut Workspace| -> Vec<f64> {
            let range = idx * PREDICT_CHUNK..((idx + 1) * PREDICT_CHUNK).min(n);
            let len = range.len();
            buf.clear();
            pack(range, buf);
            forward_block(&self.layout, &self.params, buf, len, ws);
            ws.out[..len].to_vec()
        };
        let workers = workers.clamp(1, chunks.max(1));
        let mut out = Vec::with_capacity(n);
        if workers == 1 {
            let (mut buf, mut ws) = (Vec::new(), Workspace::default());
            for idx in 0..chunks {
                out.extend(run_chunk(idx, &mut buf, &mut ws));
            }
            return out;
        }
        let next = AtomicUsize::new(0);
        let mut parts: Vec<(usize, Vec<f64>)> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let (mut buf, mut ws) = (Vec::new(), Workspace::default());
                        let mut done = Vec::new();
                        loop {
                            let idx = next.fetch_add(1, Ordering::Relaxed);
                            if idx >= chunks {
                                break done;
                            }
                            done.push((idx, run_chunk(idx, &mut buf, &mut ws)));
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("prediction worker panicked"))
                .collect()
        });
        parts.sort_unstable_by_key(|(idx, _)| *idx);
        for (_, p) in parts {
            out.extend(p);
        }
        out
    }
}

/// Anything that maps encoded queries to labels. Used by the timing
/// measurements so they can be exercised without a trained network.
pub trait Predictor: Sync {
    fn predict_one(&self, x: &EncodedQuery) -> Result<f64>;

    /// Predictions for `xs` in input order. The default splits the input into
    /// `workers` contiguous parts, one thread each.
    fn predict_many(&self, xs: &[EncodedQuery], workers: usize) -> Result<Vec<f64>> {
        let workers = workers.clamp(1, xs.len().max(1));
        if workers == 1 {
            return xs.iter().map(|x| self.predict_one(x)).collect();
        }
        let per = xs.len().div_ceil(workers);
        let parts: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
            let handles: Vec<_> = xs
                .chunks(per)
                .map(|part| s.spawn(move || part.iter().map(|x| self.predict_one(x)).collect()))
                .collect();
            handles.into_iter().map(|h| h.join().expect("prediction worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(xs.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

impl Predictor for LstmModel {
    fn predict_one(&self, x: &EncodedQuery) -> Result<f64> {
        self.forward(x)
    }

    fn predict_many(&self, xs: &[EncodedQuery], workers: usize) -> Result<Vec<f64>> {
        self.predict_batch(xs, workers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn small_config(shape: (usize, usize)) -> ModelConfig {
        ModelConfig {
            lstm_units: 6,
            dense_units: 5,
            seed: 7,
            ..ModelConfig::new(shape)
        }
    }

    fn random_query(rng: &mut impl Rng, l: usize, w: usize) -> EncodedQuery {
        let cells = (0..l * w).map(|_| rng.gen_range(0..2u8)).collect();
        EncodedQuery::from_cells(l, w, cells).unwrap()
    }

    #[test]
    fn layout_ranges_tile_the_parameter_vector() {
        let layout = Layout::new(&small_config((3, 4)));
        let mut end = 0;
        for g in ParamGroup::ALL {
            let r = layout.range(g);
            assert_eq!(r.start, end);
            end = r.end;
        }
        assert_eq!(end, layout.len());
        assert_eq!(layout.len(), 4 * 24 + 6 * 24 + 24 + 6 * 5 + 5 + 5 + 1);
    }

    #[test]
    fn xavier_block_variance() {
        let cfg = ModelConfig {
            lstm_units: 100,
            dense_units: 8,
            ..ModelConfig::new((2, 3))
        };
        let m = LstmModel::init(cfg).unwrap();
        let wh = m.parameters(ParamGroup::RecurrentWeights);
        // one gate block: rows 0..100, columns 0..100 of a 100×400 matrix
        let block: Vec<f64> = (0..100).flat_map(|r| wh[r * 400..r * 400 + 100].iter().copied()).collect();
        let mean = block.iter().sum::<f64>() / block.len() as f64;
        let var = block.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / block.len() as f64;
        let expected = 2.0 / 200.0;
        assert!((var - expected).abs() <= 0.2 * expected, "variance {var} vs {expected}");
        let bound = (6.0f64 / 200.0).sqrt();
        assert!(block.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn init_biases_and_determinism() {
        let cfg = small_config((3, 4));
        let a = LstmModel::init(cfg.clone()).unwrap();
        let b = LstmModel::init(cfg.clone()).unwrap();
        assert_eq!(a.all_parameters(), b.all_parameters());
        let bias = a.parameters(ParamGroup::GateBias);
        let h = cfg.lstm_units;
        assert!(bias[h..2 * h].iter().all(|&v| v == 1.0));
        assert!(bias[..h].iter().chain(&bias[2 * h..]).all(|&v| v == 0.0));
        assert!(a.parameters(ParamGroup::DenseBias).iter().all(|&v| v == 0.0));
        assert_eq!(a.parameters(ParamGroup::OutputBias), &[0.0]);
        let other = LstmModel::init(ModelConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.all_parameters(), other.all_parameters());
    }

    #[test]
    fn zero_network_and_bias_passthrough() {
        let mut m = LstmModel::init(small_config((3, 4))).unwrap();
        for g in ParamGroup::ALL {
            m.parameters_mut(g).fill(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            assert_eq!(m.forward(&random_query(&mut rng, 3, 4)).unwrap(), 0.0);
        }
        m.parameters_mut(ParamGroup::OutputBias)[0] = 3.25;
        assert_eq!(m.forward(&random_query(&mut rng, 3, 4)).unwrap(), 3.25);
    }

    #[test]
    fn forward_matches_hand_computation() {
        // one unit, one dense unit, single step with a one-cell input
        let cfg = ModelConfig {
            lstm_units: 1,
            dense_units: 1,
            ..ModelConfig::new((1, 1))
        };
        let mut m = LstmModel::init(cfg).unwrap();
        m.parameters_mut(ParamGroup::InputWeights).copy_from_slice(&[0.5, -0.25, 0.75, 1.5]);
        m.parameters_mut(ParamGroup::GateBias).copy_from_slice(&[0.1, 1.0, -0.2, 0.0]);
        m.parameters_mut(ParamGroup::DenseWeights).copy_from_slice(&[2.0]);
        m.parameters_mut(ParamGroup::DenseBias).copy_from_slice(&[0.05]);
        m.parameters_mut(ParamGroup::OutputWeights).copy_from_slice(&[-1.5]);
        m.parameters_mut(ParamGroup::OutputBias).copy_from_slice(&[0.3]);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.6);
        let g = (0.55f64).tanh();
        let o = sig(1.5);
        let c = i * g;
        let h = o * c.tanh();
        let expected = 0.3 - 1.5 * (2.0 * h + 0.05).max(0.0);
        let x = EncodedQuery::from_cells(1, 1, vec![1]).unwrap();
        assert!((m.forward(&x).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let m = LstmModel::init(small_config((3, 4))).unwrap();
        let x = EncodedQuery::zeros(3, 5);
        assert!(matches!(m.forward(&x), Err(NnetError::ShapeMismatch { .. })));
        assert!(matches!(m.predict_batch(&[x], 2), Err(NnetError::ShapeMismatch { .. })));
    }

    #[test]
    fn predict_batch_equals_forward_for_any_worker_count() {
        let mut m = LstmModel::init(ModelConfig {
            lstm_units: 16,
            dense_units: 12,
            seed: 3,
            ..ModelConfig::new((5, 7))
        })
        .unwrap();
        m.set_label_norm(LabelNorm {
            kind: super::super::LabelNormKind::ZScore,
            shift: 10.0,
            scale: 4.0,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<_> = (0..300).map(|_| random_query(&mut rng, 5, 7)).collect();
        let single: Vec<f64> = xs.iter().map(|x| m.forward(x).unwrap()).collect();
        let one = m.predict_batch(&xs, 1).unwrap();
        let eight = m.predict_batch(&xs, 8).unwrap();
        assert_eq!(single, one);
        assert_eq!(one, eight);
        assert_eq!(m.predict_batch(&xs[..1], 4).unwrap(), vec![m.forward(&xs[0]).unwrap()]);
        assert!(m.predict_batch(&[], 3).unwrap().is_empty());
        let set = EncodedSet::new(&xs, &single).unwrap();
        assert_eq!(m.predict_set(&set, 3).unwrap(), one);
    }
}

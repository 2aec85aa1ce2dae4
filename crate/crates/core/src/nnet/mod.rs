//! Sequence regression network: one LSTM layer, a rectified-linear dense
//! layer and a single linear output, trained with mini-batch Adam on MSE.
//!
//! All math is `f64`. Backpropagation through time runs over the whole
//! (short, fixed-length) sequence.

mod checkpoint;
mod gemm;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::EncodedQuery;

pub use checkpoint::CHECKPOINT_VERSION;
pub use model::{LstmModel, ParamGroup, Predictor};
pub use train::{EpochRecord, GradientCheck, StopReason, TrainReport};

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("input shape {found:?} does not match model shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("loss diverged to {loss} at epoch {epoch}")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("checkpoint vocabulary {found} does not match {expected}")]
    VocabularyMismatch { expected: String, found: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelNormKind {
    #[default]
    ZScore,
    MinMax,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lstm_units: usize,
    pub dense_units: usize,
    /// `(sequence length, row width)` of the encoded queries.
    pub input_shape: (usize, usize),
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub label_norm: LabelNormKind,
}

impl ModelConfig {
    pub fn new(input_shape: (usize, usize)) -> Self {
        Self {
            lstm_units: 128,
            dense_units: 200,
            input_shape,
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 500,
            patience: 20,
            seed: 0,
            label_norm: LabelNormKind::ZScore,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (l, w) = self.input_shape;
        let bad = |m: &str| Err(NnetError::InvalidConfig(m.to_owned()));
        if self.lstm_units == 0 || self.dense_units == 0 {
            return bad("layer sizes must be positive");
        }
        if l == 0 || w == 0 {
            return bad("input shape must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epoch budget must be positive");
        }
        Ok(())
    }
}

/// Affine label transform: the network predicts `(y - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelNorm {
    pub kind: LabelNormKind,
    pub shift: f64,
    pub scale: f64,
}

impl LabelNorm {
    pub fn identity() -> Self {
        Self {
            kind: LabelNormKind::None,
            shift: 0.0,
            scale: 1.0,
        }
    }

    pub fn fit(kind: LabelNormKind, labels: &[f64]) -> Self {
        let (shift, scale) = match kind {
            LabelNormKind::None => (0.0, 1.0),
            LabelNormKind::ZScore => {
                let n = labels.len().max(1) as f64;
                let mean = labels.iter().sum::<f64>() / n;
                let var = labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
                (mean, var.sqrt())
            }
            LabelNormKind::MinMax => {
                let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if lo.is_finite() {
                    (lo, hi - lo)
                } else {
                    (0.0, 1.0)
                }
            }
        };
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        Self { kind, shift, scale }
    }

    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.scale + self.shift
    }
}

/// Encoded inputs and labels packed for training: `x` holds `len` matrices of
/// `seq_len × width` cells back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub seq_len: usize,
    pub width: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl EncodedSet {
    pub fn new(queries: &[EncodedQuery], labels: &[f64]) -> Result<Self> {
        if queries.len() != labels.len() {
            return Err(NnetError::LengthMismatch(queries.len(), labels.len()));
        }
        let (seq_len, width) = queries.first().map_or((0, 0), EncodedQuery::shape);
        let mut x = Vec::with_capacity(queries.len() * seq_len * width);
        for q in queries {
            if q.shape() != (seq_len, width) {
                return Err(NnetError::ShapeMismatch {
                    expected: (seq_len, width),
                    found: q.shape(),
                });
            }
            x.extend(q.cells().iter().map(|&c| c as f64));
        }
        Ok(Self {
            seq_len,
            width,
            x,
            y: labels.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.seq_len, self.width)
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.seq_len * self.width;
        &self.x[i * n..(i + 1) * n]
    }
}

/// Mean squared error, `(1/n) Σ (ŷ − y)²`.
pub fn loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(NnetError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(NnetError::Empty("prediction vector"));
    }
    let sse: f64 = predictions.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sse / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss(&[2.0, 4.0], &[0.0, 0.0]).unwrap(), 10.0);
        assert_eq!(loss(&[3.0], &[1.0]).unwrap(), 4.0);
        assert!(matches!(loss(&[1.0], &[1.0, 2.0]), Err(NnetError::LengthMismatch(1, 2))));
        assert!(matches!(loss(&[], &[]), Err(NnetError::Empty(_))));
    }

    proptest::proptest! {
        #[test]
        fn label_norm_roundtrip(ys in proptest::collection::vec(-1e7f64..1e7, 1..50), k in 0usize..3) {
            let kind = [LabelNormKind::ZScore, LabelNormKind::MinMax, LabelNormKind::None][k];
            let n = LabelNorm::fit(kind, &ys);
            for &y in &ys {
                let back = n.denormalize(n.normalize(y));
                // relative to the magnitudes the affine map passes through
                let tol = 1e-12 * y.abs().max(n.shift.abs() + n.scale).max(1.0);
                proptest::prop_assert!((back - y).abs() <= tol, "{:?} {} {}", kind, y, back);
            }
        }
    }

    #[test]
    fn constant_labels_keep_unit_scale() {
        let constant = LabelNorm::fit(LabelNormKind::ZScore, &[5.0, 5.0]);
        assert_eq!(constant.scale, 1.0);
        assert_eq!(constant.normalize(5.0), 0.0);
    }

    #[test]
    fn zscore_statistics() {
        let n = LabelNorm::fit(LabelNormKind::ZScore, &[1.0, 3.0]);
        assert_eq!((n.shift, n.scale), (2.0, 1.0));
        let m = LabelNorm::fit(LabelNormKind::MinMax, &[1.0, 3.0, 2.0]);
        assert_eq!((m.shift, m.scale), (1.0, 2.0));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::new((3, 4)).validate().is_ok());
        let mut c = ModelConfig::new((3, 4));
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        c = ModelConfig::new((0, 4));
        assert!(c.validate().is_err());
    }

    #[test]
    fn encoded_set_rejects_mixed_shapes() {
        let a = EncodedQuery::zeros(2, 3);
        let b = EncodedQuery::zeros(3, 3);
        assert!(matches!(EncodedSet::new(&[a.clone(), b], &[1.0, 2.0]), Err(NnetError::ShapeMismatch { .. })));
        assert!(matches!(EncodedSet::new(&[a], &[]), Err(NnetError::LengthMismatch(1, 0))));
    }
}

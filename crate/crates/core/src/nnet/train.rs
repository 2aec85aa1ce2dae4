use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward_block, forward_block, LstmModel, ParamGroup, Scratch, Workspace};
use super::{EncodedSet, LabelNorm, NnetError, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powf(self.step as f64);
        let c2 = 1.0 - BETA2.powf(self.step as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPSILON);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based count over the model's whole training history.
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
}

/// Losses are in normalized label space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub label_norm: LabelNorm,
    /// Validation MSE of the parameters training started from.
    pub initial_val_mse: f64,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub stopping_epoch: usize,
    /// `None` when no epoch beat the starting point of a resumed run.
    pub best_epoch: Option<usize>,
    pub best_val_mse: f64,
    pub final_val_mse: f64,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// Equality ignoring wall-clock time.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        let strip = |r: &TrainReport| TrainReport {
            wall_clock_secs: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    /// Fraction of the starting validation MSE removed by training.
    pub fn val_reduction(&self) -> f64 {
        if self.initial_val_mse > 0.0 {
            1.0 - self.best_val_mse / self.initial_val_mse
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub per_group: Vec<(ParamGroup, f64)>,
    pub checked: usize,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

fn normalized_labels(norm: &LabelNorm, set: &EncodedSet) -> Vec<f64> {
    set.y.iter().map(|&y| norm.normalize(y)).collect()
}

impl LstmModel {
    fn check_sets(&self, train: &EncodedSet, val: &EncodedSet) -> Result<()> {
        for (set, what) in [(train, "training set"), (val, "validation set")] {
            if set.is_empty() {
                return Err(NnetError::Empty(what));
            }
            if set.shape() != self.config.input_shape {
                return Err(NnetError::ShapeMismatch {
                    expected: self.config.input_shape,
                    found: set.shape(),
                });
            }
        }
        Ok(())
    }

    /// Trains from the current parameters with fresh optimizer state and
    /// label statistics taken from `train`. Keeps the parameters of the best
    /// validation epoch.
    pub fn fit(&mut self, train: &EncodedSet, val: &EncodedSet) -> Result<TrainReport> {
        self.check_sets(train, val)?;
        self.norm = LabelNorm::fit(self.config.label_norm, &train.y);
        self.adam = AdamState::new(self.params.len());
        self.epochs_trained = 0;
        self.best_val_mse = None;
        let epochs = self.config.max_epochs;
        self.run_epochs(train, val, epochs, false)
    }

    /// Continues training from the current parameters, optimizer moments and
    /// label statistics for up to `epochs` more epochs. The validation MSE at
    /// entry is the baseline, so the retained parameters are never worse on
    /// `val` than the ones training started from.
    pub fn resume_training(
        &mut self,
        train: &EncodedSet,
        val: &EncodedSet,
        vocab_hash: Option<&str>,
        epochs: usize,
    ) -> Result<TrainReport> {
        if let (Some(expected), Some(found)) = (self.vocab_hash.as_deref(), vocab_hash) {
            if expected != found {
                return Err(NnetError::VocabularyMismatch {
                    expected: expected.to_owned(),
                    found: found.to_owned(),
                });
            }
        }
        self.check_sets(train, val)?;
        self.run_epochs(train, val, epochs, true)
    }

    fn run_epochs(&mut self, train: &EncodedSet, val: &EncodedSet, epochs: usize, baseline: bool) -> Result<TrainReport> {
        let started = Instant::now();
        let cfg = self.config.clone();
        let layout = self.layout;
        let cells = layout.seq_len * layout.input;
        let y_train = normalized_labels(&self.norm, train);

        let initial_val_mse = self.normalized_mse(val)?;
        let mut best = if baseline { initial_val_mse } else { f64::INFINITY };
        let mut best_epoch = None;
        let mut snapshot = baseline.then(|| (self.params.clone(), self.adam.clone()));
        let mut wait = 0;
        let mut records = Vec::new();
        let mut stop_reason = StopReason::MaxEpochs;

        let (mut ws, mut scratch) = (Workspace::default(), Scratch::default());
        let mut grad = vec![0.0; self.params.len()];
        let (mut xb, mut yb) = (Vec::new(), Vec::new());
        let mut order: Vec<usize> = Vec::with_capacity(train.len());

        for _ in 0..epochs {
            let epoch = self.epochs_trained + 1;
            order.clear();
            order.extend(0..train.len());
            order.shuffle(&mut epoch_rng(cfg.seed, epoch));

            let mut sse = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                xb.clear();
                yb.clear();
                for &i in batch {
                    xb.extend_from_slice(&train.x[i * cells..(i + 1) * cells]);
                    yb.push(y_train[i]);
                }
                let loss = backward_block(&layout, &self.params, &xb, &yb, &mut ws, &mut scratch, &mut grad);
                if !loss.is_finite() {
                    return Err(NnetError::DivergedLoss { epoch, loss });
                }
                sse += loss * batch.len() as f64;
                self.adam.update(&mut self.params, &grad, cfg.learning_rate);
            }
            let train_mse = sse / train.len() as f64;
            let val_mse = self.normalized_mse(val)?;
            if !val_mse.is_finite() || self.params.iter().any(|p| !p.is_finite()) {
                return Err(NnetError::DivergedLoss { epoch, loss: val_mse });
            }
            self.epochs_trained = epoch;
            records.push(EpochRecord {
                epoch,
                train_mse,
                val_mse,
            });
            log::debug!("epoch {epoch}: train {train_mse:.6e} val {val_mse:.6e}");

            if val_mse < best {
                best = val_mse;
                best_epoch = Some(epoch);
                snapshot = Some((self.params.clone(), self.adam.clone()));
                wait = 0;
            } else {
                wait += 1;
                if wait >= cfg.patience {
                    stop_reason = StopReason::EarlyStopping;
                    break;
                }
            }
        }

        let final_val_mse = records.last().map_or(initial_val_mse, |r| r.val_mse);
        if let Some((params, adam)) = snapshot {
            self.params = params;
            self.adam = adam;
        }
        self.best_val_mse = Some(best);
        Ok(TrainReport {
            label_norm: self.norm,
            initial_val_mse,
            stopping_epoch: self.epochs_trained,
            epochs: records,
            stop_reason,
            best_epoch,
            best_val_mse: best,
            final_val_mse,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        })
    }

    /// Normalized-label MSE on `set` and its gradient over all parameters,
    /// with the whole set as one batch.
    pub fn loss_and_gradient(&self, set: &EncodedSet) -> Result<(f64, Vec<f64>)> {
        if set.shape() != self.config.input_shape {
            return Err(NnetError::ShapeMismatch {
                expected: self.config.input_shape,
                found: set.shape(),
            });
        }
        if set.is_empty() {
            return Err(NnetError::Empty("batch"));
        }
        let y = normalized_labels(&self.norm, set);
        let mut grad = vec![0.0; self.params.len()];
        let loss = backward_block(
            &self.layout,
            &self.params,
            &set.x,
            &y,
            &mut Workspace::default(),
            &mut Scratch::default(),
            &mut grad,
        );
        Ok((loss, grad))
    }

    /// Compares analytic gradients with central differences (step 1e-5) on
    /// up to `per_group` randomly chosen parameters from every group.
    /// Relative error is `|ga - gn| / max(|ga| + |gn|, 1e-12)`.
    pub fn gradient_check(&self, batch: &EncodedSet, per_group: usize, seed: u64) -> Result<GradientCheck> {
        const STEP: f64 = 1e-5;
        let (_, analytic) = self.loss_and_gradient(batch)?;
        let y = normalized_labels(&self.norm, batch);
        let mut ws = Workspace::default();
        let mut params = self.params.clone();
        let mut loss_at = |params: &[f64]| {
            forward_block(&self.layout, params, &batch.x, y.len(), &mut ws);
            let sse: f64 = ws.out.iter().zip(&y).map(|(o, t)| (o - t) * (o - t)).sum();
            sse / y.len() as f64
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut per_group_err = Vec::new();
        let mut checked = 0;
        for group in ParamGroup::ALL {
            let range = self.layout.range(group);
            let picks = index::sample(&mut rng, range.len(), per_group.min(range.len()));
            let mut worst = 0.0f64;
            for offset in picks.iter() {
                let k = range.start + offset;
                let orig = params[k];
                params[k] = orig + STEP;
                let up = loss_at(&params);
                params[k] = orig - STEP;
                let down = loss_at(&params);
                params[k] = orig;
                let numeric = (up - down) / (2.0 * STEP);
                let ga = analytic[k];
                let rel = (ga - numeric).abs() / (ga.abs() + numeric.abs()).max(1e-12);
                worst = worst.max(rel);
                checked += 1;
            }
            per_group_err.push((group, worst));
        }
        let max_rel_error = per_group_err.iter().map(|(_, e)| *e).fold(0.0, f64::max);
        Ok(GradientCheck {
            max_rel_error,
            per_group: per_group_err,
            checked,
        })
    }
}

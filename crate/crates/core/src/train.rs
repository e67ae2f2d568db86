//! Adam with global-norm clipping, mini-batch training and early stopping.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{
    answer_question, build_loss, build_scores, init_params, Answer, Example, ModelConfig, ModelKind,
};
use crate::params::{GradSet, ParamStore};
use crate::tensor::Tensor;

/// Named `(β₁, β₂)` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdamPreset {
    /// `β₁ = 0.1`, `β₂ = 0.001`, taken literally.
    Paper,
    /// `β₁ = 0.9`, `β₂ = 0.999`.
    Standard,
}

impl AdamPreset {
    pub fn betas(self) -> (f64, f64) {
        match self {
            AdamPreset::Paper => (0.1, 0.001),
            AdamPreset::Standard => (0.9, 0.999),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub const DEFAULT_LR: f64 = 0.002;
    pub const EPS: f64 = 1e-8;

    pub fn preset(preset: AdamPreset, lr: f64) -> Self {
        let (beta1, beta2) = preset.betas();
        Self {
            lr,
            beta1,
            beta2,
            eps: Self::EPS,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::preset(AdamPreset::Standard, Self::DEFAULT_LR)
    }
}

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: BTreeMap<String, Tensor> = params
            .iter()
            .map(|(k, t)| (k.to_string(), Tensor::zeros(t.shape())))
            .collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.m.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.v.get(name)
    }
}

/// One bias-corrected Adam update. Parameters without a gradient entry are
/// left alone.
pub fn adam_step(params: &mut ParamStore, grads: &GradSet, state: &mut AdamState) -> Result<()> {
    for (name, g) in &grads.tensors {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(Error::shape("adam_step", p.shape(), g.shape()));
        }
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (name, g) in &grads.tensors {
        let p = params.get_mut(name)?;
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let iter = p
            .data_mut()
            .iter_mut()
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
            .zip(g.data());
        for (((theta, m), v), &g) in iter {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales all gradients jointly so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut GradSet, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.tensors.values_mut() {
            for x in t.data_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Everything in `f64`.
    #[default]
    Double,
    /// Parameters are rounded to `f32` after every update.
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub precision: Precision,
    pub adam_preset: AdamPreset,
    pub learning_rate: f64,
    /// Overrides the preset when set.
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            max_epochs: 50,
            patience: 5,
            clip_norm: 10.0,
            seed: 0,
            precision: Precision::Double,
            adam_preset: AdamPreset::Standard,
            learning_rate: AdamConfig::DEFAULT_LR,
            beta1: None,
            beta2: None,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size, patience and max_epochs must be at least 1".into(),
            ));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config(format!(
                "clip_norm must be positive, got {}",
                self.clip_norm
            )));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be non-negative".into()));
        }
        self.model.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        let mut a = AdamConfig::preset(self.adam_preset, self.learning_rate);
        if let Some(b) = self.beta1 {
            a.beta1 = b;
        }
        if let Some(b) = self.beta2 {
            a.beta2 = b;
        }
        a
    }
}

/// Outcome of observing one more validation score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Verdict {
        match self.best {
            Some((_, best)) if score <= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    Verdict::Stop
                } else {
                    Verdict::Continue
                }
            }
            _ => {
                self.best = Some((epoch, score));
                self.stale = 0;
                Verdict::Improved
            }
        }
    }

    /// `(epoch, score)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub params: ParamStore,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<EpochRecord>,
}

/// Loss and parameter gradients for one example.
pub fn example_gradients(
    kind: ModelKind,
    params: &ParamStore,
    ex: &Example,
) -> Result<(f64, GradSet)> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let scores = build_scores(&mut g, kind, &bound, &ex.video, &ex.sentences)?;
    let loss = build_loss(&mut g, scores, ex.gt_index)?;
    let grads = g.backward(loss)?;
    Ok((g.value(loss).item(), bound.gradients(&grads)))
}

/// Mean loss and mean gradient over `batch`.
pub fn batch_gradients(
    kind: ModelKind,
    params: &ParamStore,
    batch: &[&Example],
) -> Result<(f64, GradSet)> {
    let mut total = GradSet::zeros_like(params);
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        let (l, g) = example_gradients(kind, params, ex)?;
        loss += l;
        total.add_scaled(&g, scale)?;
    }
    Ok((loss * scale, total))
}

/// Answers for every example, in input order.
pub fn predict_all(
    kind: ModelKind,
    params: &ParamStore,
    examples: &[Example],
) -> Result<Vec<Answer>> {
    examples
        .iter()
        .map(|ex| answer_question(kind, params, &ex.video, &ex.sentences))
        .collect()
}

pub fn accuracy(kind: ModelKind, params: &ParamStore, examples: &[Example]) -> Result<f64> {
    let answers = predict_all(kind, params, examples)?;
    let correct = answers
        .iter()
        .zip(examples)
        .filter(|(a, ex)| a.predicted == ex.gt_index)
        .count();
    Ok(correct as f64 / examples.len() as f64)
}

/// Trains `kind` from a seeded initialization.
pub fn train(
    kind: ModelKind,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::arg("training and validation sets must be non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(kind, &cfg.model, &mut rng)?;
    if cfg.precision == Precision::Single {
        round_params(&mut params);
    }
    let mut adam = AdamState::new(cfg.adam(), &params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grads) = batch_gradients(kind, &params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    value: loss,
                });
            }
            epoch_loss += loss * batch.len() as f64;
            let norm = clip_gradients(&mut grads, cfg.clip_norm);
            debug!("epoch {epoch} batch {b}: loss {loss:.4}, grad norm {norm:.3}");
            adam_step(&mut params, &grads, &mut adam)?;
            if cfg.precision == Precision::Single {
                round_params(&mut params);
            }
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_accuracy = accuracy(kind, &params, val_set)?;
        info!("{kind} epoch {epoch}: train loss {train_loss:.4}, val accuracy {val_accuracy:.4}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });
        match stopper.observe(epoch, val_accuracy) {
            Verdict::Improved => best_params = params.clone(),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    let (best_epoch, best_val_accuracy) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best_params,
        best_epoch,
        best_val_accuracy,
        history,
    })
}

fn round_params(params: &mut ParamStore) {
    for (_, t) in params.iter_mut() {
        t.round_to_f32();
    }
}

/// `epoch,train_loss,val_accuracy` with a header row.
pub fn write_history_csv(history: &[EpochRecord], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_accuracy")?;
    for r in history {
        writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_accuracy)?;
    }
    Ok(())
}

pub fn save_history_csv(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_history_csv(history, &mut buf).map_err(|e| Error::io(path, e))?;
    crate::io::write_atomic(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads(entries: &[(&str, Vec<f64>)]) -> GradSet {
        GradSet {
            tensors: entries
                .iter()
                .map(|(k, v)| (k.to_string(), Tensor::vector(v)))
                .collect(),
        }
    }

    fn params(entries: &[(&str, Vec<f64>)]) -> ParamStore {
        let mut p = ParamStore::new();
        for (k, v) in entries {
            p.insert(*k, Tensor::vector(v));
        }
        p
    }

    #[test]
    fn early_stopping_definition() {
        let mut s = EarlyStopping::new(2);
        let verdicts: Vec<_> = [0.5, 0.6, 0.6, 0.6]
            .iter()
            .enumerate()
            .map(|(i, &a)| s.observe(i + 1, a))
            .collect();
        assert_eq!(
            verdicts,
            [
                Verdict::Improved,
                Verdict::Improved,
                Verdict::Continue,
                Verdict::Stop
            ]
        );
        assert_eq!(s.best(), Some((2, 0.6)));
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = params(&[("a", vec![1.0, -2.0])]);
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), &p);
        adam_step(&mut p, &grads(&[("a", vec![0.0, 0.0])]), &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p = params(&[("a", vec![1.0, -2.0])]);
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::preset(AdamPreset::Standard, 0.0), &p);
        for _ in 0..3 {
            adam_step(&mut p, &grads(&[("a", vec![0.3, -7.0])]), &mut st).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-3, 0.5, 42.0, -3.0] {
            let mut p = params(&[("a", vec![0.0])]);
            let mut st = AdamState::new(AdamConfig::preset(AdamPreset::Standard, 0.01), &p);
            adam_step(&mut p, &grads(&[("a", vec![g])]), &mut st).unwrap();
            let moved = p.get("a").unwrap().data()[0];
            assert!((moved.abs() - 0.01).abs() < 1e-7, "g={g}: {moved}");
            assert_eq!(moved.signum(), -g.signum());
        }
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut p = params(&[("a", vec![0.0, 1.0])]);
        let mut st = AdamState::new(AdamConfig::default(), &p);
        assert!(adam_step(&mut p, &grads(&[("a", vec![0.0])]), &mut st).is_err());
        assert_eq!(st.t, 0);
    }

    #[test]
    fn clip_examples() {
        let mut small = grads(&[("a", vec![3.0]), ("b", vec![4.0])]);
        let before = small.clone();
        assert_eq!(clip_gradients(&mut small, 10.0), 5.0);
        assert_eq!(small, before);

        let mut big = grads(&[("a", vec![20.0])]);
        clip_gradients(&mut big, 10.0);
        assert_eq!(big.tensors["a"].data(), &[10.0]);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            clip_norm: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            adam_preset: AdamPreset::Paper,
            beta2: Some(0.5),
            ..TrainConfig::default()
        };
        let a = c.adam();
        assert_eq!((a.beta1, a.beta2, a.lr), (0.1, 0.5, 0.002));
    }

    #[test]
    fn empty_dataset_rejected() {
        let c = TrainConfig {
            model: ModelConfig::toy(),
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(ModelKind::Rewatcher, &[], &[], &c),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn history_csv_layout() {
        let mut out = Vec::new();
        let h = [EpochRecord {
            epoch: 1,
            train_loss: 2.0,
            val_accuracy: 0.25,
        }];
        write_history_csv(&h, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "epoch,train_loss,val_accuracy\n1,2,0.25\n"
        );
    }
}

//! Losses, Adam, dataset splitting and the training loop.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::argmax;
use crate::netcore::{backward, Tape};
use crate::safepredictor::{Features, SafePredictor, CHUNK_ROWS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Asymmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Penalty multiplier for mis-ranking errors in the asymmetric loss.
    pub asymmetric_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0003,
            batch_size: 1 << 16,
            epochs: 500,
            seed: 0,
            loss: LossKind::Mse,
            asymmetric_weight: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Spec("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Spec("batch_size must be positive".into()));
        }
        if !(self.asymmetric_weight > 0.0) || !self.asymmetric_weight.is_finite() {
            return Err(Error::Spec("asymmetric_weight must be positive".into()));
        }
        Ok(())
    }
}

/// Inputs, targets and optional stratum labels, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub strata: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>, strata: Option<Vec<usize>>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nrows(),
                got: targets.nrows(),
            });
        }
        if let Some(s) = &strata {
            if s.len() != inputs.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: inputs.nrows(),
                    got: s.len(),
                });
            }
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Spec("dataset contains non-finite values".into()));
        }
        Ok(Self {
            inputs,
            targets,
            strata,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
            strata: self.strata.as_ref().map(|s| rows.iter().map(|&r| s[r]).collect()),
        }
    }
}

/// Seeded train/test split, stratified when labels are present. Each
/// stratum contributes `round(n_s * train_fraction)` training samples.
pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Precondition(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    match &ds.strata {
        Some(strata) => {
            for (i, &s) in strata.iter().enumerate() {
                groups.entry(s).or_default().push(i);
            }
            if let Some((s, g)) = groups.iter().find(|(_, g)| g.len() < 2) {
                log::warn!(
                    "stratum {s} has {} sample(s); falling back to an unstratified split",
                    g.len()
                );
                groups = BTreeMap::from([(0, (0..ds.len()).collect())]);
            }
        }
        None => {
            groups.insert(0, (0..ds.len()).collect());
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut members in groups.into_values() {
        members.shuffle(&mut rng);
        let cut = (members.len() as f64 * train_fraction).round() as usize;
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.select(&train), ds.select(&test)))
}

fn check_arity(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            got: pred.len(),
        });
    }
    Ok(())
}

/// Mean of squared coordinate differences.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_arity(pred, target)?;
    if pred.is_empty() {
        return Err(Error::Precondition("loss of an empty vector".into()));
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

pub const ADVISORY_COUNT: usize = 9;

fn asymmetric_weights<'a>(pred: &'a [f64], target: &'a [f64], weight: f64) -> impl Iterator<Item = f64> + 'a {
    let best = argmax(target);
    pred.iter().zip(target).enumerate().map(move |(j, (p, t))| {
        let undershoots_best = j == best && p < t;
        let overshoots_other = j != best && p > t;
        if undershoots_best || overshoots_other {
            weight
        } else {
            1.0
        }
    })
}

/// Weighted squared error over 9 advisory scores: errors that push the
/// optimal advisory down or any other advisory up cost `weight` times more.
pub fn loss_asymmetric(pred: &[f64], target: &[f64], weight: f64) -> Result<f64> {
    check_arity(pred, target)?;
    if pred.len() != ADVISORY_COUNT {
        return Err(Error::DimensionMismatch {
            expected: ADVISORY_COUNT,
            got: pred.len(),
        });
    }
    Ok(asymmetric_weights(pred, target, weight)
        .zip(pred.iter().zip(target))
        .map(|(w, (p, t))| w * (p - t) * (p - t))
        .sum())
}

/// Per-sample loss and its gradient with respect to the prediction.
fn sample_loss_grad(
    kind: LossKind,
    weight: f64,
    pred: ArrayView1<'_, f64>,
    target: ArrayView1<'_, f64>,
    mut grad: ArrayViewMut1<'_, f64>,
) -> Result<f64> {
    let p = pred.to_vec();
    let p = p.as_slice();
    let t = target.to_vec();
    match kind {
        LossKind::Mse => {
            let n = p.len() as f64;
            for (g, (a, b)) in grad.iter_mut().zip(p.iter().zip(&t)) {
                *g = 2.0 * (a - b) / n;
            }
            loss_mse(p, &t)
        }
        LossKind::Asymmetric => {
            let value = loss_asymmetric(p, &t, weight)?;
            for (g, (w, (a, b))) in grad
                .iter_mut()
                .zip(asymmetric_weights(p, &t, weight).zip(p.iter().zip(&t)))
            {
                *g = 2.0 * w * (a - b);
            }
            Ok(value)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update; increments `state.t` first.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            epoch: 0,
            step: state.t as usize + 1,
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Mean loss and mean gradient over the rows of `feats`. Rows are processed
/// in fixed chunks whose partial sums are reduced in chunk order, so the
/// result does not depend on the number of worker threads.
pub fn loss_and_grad(
    model: &SafePredictor,
    feats: &Features,
    targets: &Array2<f64>,
    kind: LossKind,
    weight: f64,
) -> Result<(f64, Vec<f64>)> {
    let rows = feats.rows();
    if rows == 0 {
        return Err(Error::EmptyDataset);
    }
    if targets.nrows() != rows || targets.ncols() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.output_dim(),
            got: targets.ncols(),
        });
    }
    let chunks: Vec<(usize, usize)> = (0..rows)
        .step_by(CHUNK_ROWS)
        .map(|s| (s, (s + CHUNK_ROWS).min(rows)))
        .collect();
    let partials: Vec<(f64, Vec<f64>)> = chunks
        .into_par_iter()
        .map(|(start, end)| {
            let chunk = feats.slice(start..end);
            let mut tape = Tape::new(model.params().values());
            let rec = model.record(&mut tape, &chunk)?;
            let out = tape.value(rec.output);
            let mut seed = Array2::zeros(out.dim());
            let mut total = 0.0;
            for r in 0..out.nrows() {
                total += sample_loss_grad(kind, weight, out.row(r), targets.row(start + r), seed.row_mut(r))?;
            }
            Ok((total, backward(&tape, rec.output, &seed)?))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.params().len()];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let n = rows as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

/// Mean loss without gradients.
pub fn evaluate_loss(model: &SafePredictor, feats: &Features, targets: &Array2<f64>, kind: LossKind, weight: f64) -> Result<f64> {
    let pred = model.predict_features(feats)?;
    if pred.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (p, t) in pred.rows().into_iter().zip(targets.rows()) {
        let (p, t) = (p.to_vec(), t.to_vec());
        total += match kind {
            LossKind::Mse => loss_mse(&p, &t)?,
            LossKind::Asymmetric => loss_asymmetric(&p, &t, weight)?,
        };
    }
    Ok(total / pred.nrows() as f64)
}

/// Extra measurements attached to an epoch by the training callback.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Checkpoint {
    pub accuracy: Option<f64>,
    /// `(violations, probes)` when the model was verified at this epoch.
    pub violations: Option<(u64, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub checkpoint: Checkpoint,
}

/// Mini-batch Adam over all model parameters (networks and proximity
/// functions). `on_epoch` runs on the initial model (epoch 0) and after every
/// epoch; its result is recorded with the full training loss.
pub fn train<F>(model: &mut SafePredictor, ds: &Dataset, config: &TrainConfig, mut on_epoch: F) -> Result<Vec<EpochMetrics>>
where
    F: FnMut(usize, &SafePredictor) -> Result<Checkpoint>,
{
    config.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if ds.input_dim() != model.input_dim() || ds.output_dim() != model.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: ds.input_dim(),
        });
    }
    let feats = model.features(ds.inputs.view())?;
    let batch = config.batch_size.min(ds.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(model.params().len());
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs + 1);

    let mut record = |epoch: usize, model: &SafePredictor| -> Result<()> {
        let loss = evaluate_loss(model, &feats, &ds.targets, config.loss, config.asymmetric_weight)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(epoch));
        }
        let checkpoint = on_epoch(epoch, model)?;
        log::info!("epoch {epoch}: loss {loss:.6}");
        metrics.push(EpochMetrics {
            epoch,
            loss,
            checkpoint,
        });
        Ok(())
    };

    record(0, model)?;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (step, rows) in order.chunks(batch).enumerate() {
            let batch_feats = feats.select(rows);
            let targets = ds.targets.select(Axis(0), rows);
            let (loss, grad) = loss_and_grad(model, &batch_feats, &targets, config.loss, config.asymmetric_weight)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(epoch));
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { epoch, step });
            }
            adam_step(model.params_mut().values_mut(), &grad, &mut adam, config.learning_rate)?;
        }
        record(epoch, model)?;
    }
    Ok(metrics)
}

pub const METRICS_HEADER: [&str; 5] = ["epoch", "loss", "accuracy", "violations", "probes"];

/// Writes one row per epoch; unmeasured fields are left empty.
pub fn write_metrics_csv<W: Write>(out: W, metrics: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for m in metrics {
        let (violations, probes) = match m.checkpoint.violations {
            Some((v, p)) => (v.to_string(), p.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            m.epoch.to_string(),
            m.loss.to_string(),
            m.checkpoint.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            violations,
            probes,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_metrics_csv(path: &Path, metrics: &[EpochMetrics]) -> Result<()> {
    write_metrics_csv(std::fs::File::create(path)?, metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{AxisBox, ConstraintSet, ConstraintSpec, ConvexOutputSet, InputRegion};
    use crate::safepredictor::{build_safe_predictor, Architecture};
    use ndarray::array;

    fn toy(n: usize, strata: Option<Vec<usize>>) -> Dataset {
        let inputs = Array2::from_shape_fn((n, 1), |(r, _)| r as f64);
        let targets = Array2::from_shape_fn((n, 1), |(r, _)| 2.0 * r as f64);
        Dataset::new(inputs, targets, strata).unwrap()
    }

    #[test]
    fn plain_split_sizes() {
        let (train, test) = split_dataset(&toy(100, None), 0.8, 0).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        let mut all: Vec<f64> = train.inputs.iter().chain(test.inputs.iter()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..100).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_split_keeps_proportions() {
        let strata: Vec<usize> = (0..100).map(|i| usize::from(i >= 60)).collect();
        let (train, _) = split_dataset(&toy(100, Some(strata)), 0.8, 3).unwrap();
        let s = train.strata.unwrap();
        let zeros = s.iter().filter(|&&v| v == 0).count();
        assert!((47..=49).contains(&zeros));
        assert!((31..=33).contains(&(s.len() - zeros)));
    }

    #[test]
    fn split_is_seeded() {
        let ds = toy(50, Some((0..50).map(|i| i % 3).collect()));
        let a = split_dataset(&ds, 0.8, 9).unwrap();
        let b = split_dataset(&ds, 0.8, 9).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&ds, 0.8, 10).unwrap();
        assert_ne!(a.0.inputs, c.0.inputs);
    }

    #[test]
    fn tiny_strata_degrade_to_unstratified() {
        let mut strata = vec![0; 20];
        strata[7] = 1;
        let (train, test) = split_dataset(&toy(20, Some(strata)), 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (16, 4));
        assert!(split_dataset(&toy(20, None), 1.0, 1).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(loss_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 2.5);
        let base = loss_mse(&[0.3, -0.7], &[0.1, 0.2]).unwrap();
        let doubled = loss_mse(&[0.5, -1.6], &[0.1, 0.2]).unwrap();
        assert!((doubled - 4.0 * base).abs() < 1e-12);
        assert!(loss_mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn asymmetric_examples() {
        let mut target = [0.0; 9];
        target[0] = 1.0;
        assert_eq!(loss_asymmetric(&target, &target, 10.0).unwrap(), 0.0);
        let mut low_best = target;
        low_best[0] = 0.5;
        assert_eq!(loss_asymmetric(&low_best, &target, 10.0).unwrap(), 2.5);
        let mut high_other = target;
        high_other[1] = 0.5;
        assert_eq!(loss_asymmetric(&high_other, &target, 10.0).unwrap(), 2.5);
        let mut low_other = target;
        low_other[1] = -0.5;
        assert_eq!(loss_asymmetric(&low_other, &target, 10.0).unwrap(), 0.25);
        assert!(loss_asymmetric(&[0.0; 8], &[0.0; 8], 10.0).is_err());
    }

    #[test]
    fn adam_first_steps() {
        let mut p = [1.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[0.0], &mut s, 0.0003).unwrap();
        assert_eq!(p, [1.0]);

        let mut p = [1.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.0003).unwrap();
        assert!((p[0] - (1.0 - 0.0003 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!(adam_step(&mut p, &[f64::NAN], &mut s, 0.0003).is_err());
    }

    #[test]
    fn adam_three_scalar_steps_match_hand_computation() {
        // With constant g = 1 the bias-corrected moments are exactly 1.
        let mut p = [0.5];
        let mut s = AdamState::new(1);
        let step = 0.001 / (1.0 + 1e-8);
        for k in 1..=3 {
            adam_step(&mut p, &[1.0], &mut s, 0.001).unwrap();
            assert!((p[0] - (0.5 - k as f64 * step)).abs() < 1e-12);
        }
        // Alternating signs: g = 1, then g = -1.
        let mut p = [0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.1).unwrap();
        adam_step(&mut p, &[-1.0], &mut s, 0.1).unwrap();
        let m_hat = (0.9 * 0.1 - 0.1) / (1.0 - 0.81);
        let v_hat: f64 = (0.999 * 0.001 + 0.001) / (1.0 - 0.998001);
        let expected = -0.1 / (1.0 + 1e-8) - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-12);
    }

    fn toy_model() -> (SafePredictor, Dataset) {
        let domain = InputRegion::single(AxisBox::new(vec![[-2.0, 2.0]]).unwrap());
        let c = ConstraintSpec {
            name: "pos".into(),
            region: InputRegion::single(AxisBox::new(vec![[0.0, 2.0]]).unwrap()),
            output: ConvexOutputSet::HalfLineAbove { lo: 0.0 },
        };
        let set = ConstraintSet::new(domain, vec![1.0], 1, vec![c]).unwrap();
        let arch = Architecture::new(vec![1, 6], vec![6, 1]).unwrap();
        let model = build_safe_predictor(&set, &arch, 0).unwrap();
        let xs: Vec<f64> = (0..64).map(|i| -2.0 + 4.0 * i as f64 / 63.0).collect();
        let inputs = Array2::from_shape_vec((64, 1), xs.clone()).unwrap();
        let targets = Array2::from_shape_vec((64, 1), xs.iter().map(|x| (2.0 * x).tanh()).collect()).unwrap();
        (model, Dataset::new(inputs, targets, None).unwrap())
    }

    #[test]
    fn zero_epochs_leave_parameters_alone() {
        let (mut model, ds) = toy_model();
        let before = model.params().values().to_vec();
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let metrics = train(&mut model, &ds, &config, |_, _| Ok(Checkpoint::default())).unwrap();
        assert_eq!(model.params().values(), before.as_slice());
        assert_eq!(metrics.len(), 1);
    }

    #[test]
    fn training_reduces_loss_deterministically() {
        let config = TrainConfig {
            epochs: 40,
            batch_size: 16,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let run = || {
            let (mut model, ds) = toy_model();
            let m = train(&mut model, &ds, &config, |_, _| Ok(Checkpoint::default())).unwrap();
            (model.params().values().to_vec(), m)
        };
        let (p1, m1) = run();
        let (p2, m2) = run();
        assert_eq!(p1, p2);
        assert_eq!(m1, m2);
        assert!(m1.last().unwrap().loss < m1[0].loss);
        let mut csv = Vec::new();
        write_metrics_csv(&mut csv, &m1).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("epoch,loss,accuracy,violations,probes\n0,"));
        assert_eq!(text.lines().count(), 42);
    }

    #[test]
    fn mean_gradient_matches_finite_difference_of_mean_loss() {
        let (model, ds) = toy_model();
        let feats = model.features(ds.inputs.view()).unwrap();
        let (loss, grad) = loss_and_grad(&model, &feats, &ds.targets, LossKind::Mse, 10.0).unwrap();
        assert!((loss - evaluate_loss(&model, &feats, &ds.targets, LossKind::Mse, 10.0).unwrap()).abs() < 1e-12);
        let h = 1e-6;
        for i in [0, 3, model.params().len() - 1] {
            let mut up = model.clone();
            up.params_mut().values_mut()[i] += h;
            let mut down = model.clone();
            down.params_mut().values_mut()[i] -= h;
            let fd = (evaluate_loss(&up, &feats, &ds.targets, LossKind::Mse, 10.0).unwrap()
                - evaluate_loss(&down, &feats, &ds.targets, LossKind::Mse, 10.0).unwrap())
                / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * fd.abs().max(1.0), "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(array![[1.0]], array![[1.0], [2.0]], None).is_err());
        assert!(Dataset::new(array![[f64::NAN]], array![[1.0]], None).is_err());
        assert!(Dataset::new(array![[1.0]], array![[1.0]], Some(vec![0, 1])).is_err());
    }

    #[test]
    fn config_defaults_and_json() {
        let c: TrainConfig = serde_json::from_str(r#"{"loss": "asymmetric", "epochs": 3}"#).unwrap();
        assert_eq!(c.learning_rate, 0.0003);
        assert_eq!(c.batch_size, 65536);
        assert_eq!(c.loss, LossKind::Asymmetric);
        assert_eq!(c.epochs, 3);
        assert!(TrainConfig { learning_rate: -1.0, ..c }.validate().is_err());
    }
}

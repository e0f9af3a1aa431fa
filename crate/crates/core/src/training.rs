//! Losses, metrics, evaluation and the training loop.

use std::fmt::Write;
use std::time::Instant;

use mou_autograd::{Adam, Tape, Tensor, TensorError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{PreparedData, WindowSet};
use crate::error::{MouError, Result};
use crate::moa::Pass;
use crate::model::MoUModel;
use crate::params::ParamStore;

fn check_lengths(op: &'static str, pred: &[f32], truth: &[f32]) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(TensorError::dim(op, format!("{} predictions for {} targets", pred.len(), truth.len())).into());
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(pred: &[f32], truth: &[f32]) -> Result<f64> {
    check_lengths("mse", pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(&p, &t)| (p as f64 - t as f64).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Mean absolute error.
pub fn mae(pred: &[f32], truth: &[f32]) -> Result<f64> {
    check_lengths("mae", pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(&p, &t)| (p as f64 - t as f64).abs()).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

/// Anything that maps `[B×L]` windows to `[B×T]` forecasts.
pub trait Forecaster {
    fn predict(&self, inputs: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Forecaster for MoUModel<f32> {
    fn predict(&self, inputs: &Tensor<f32>) -> Result<Tensor<f32>> {
        MoUModel::predict(self, inputs)
    }
}

/// Repeats the last observed value over the horizon.
#[derive(Debug, Clone, Copy)]
pub struct Persistence {
    pub horizon: usize,
}

impl Forecaster for Persistence {
    fn predict(&self, inputs: &Tensor<f32>) -> Result<Tensor<f32>> {
        let (b, l) = (inputs.shape()[0], inputs.shape()[1]);
        let data = (0..b).flat_map(|i| std::iter::repeat_n(inputs.data()[i * l + l - 1], self.horizon)).collect();
        Ok(Tensor::new(vec![b, self.horizon], data)?)
    }
}

/// Averages errors over every window and variable of `windows`.
pub fn evaluate(model: &impl Forecaster, windows: &WindowSet, batch_size: usize) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(MouError::config("dataset", "cannot evaluate an empty split"));
    }
    let (mut se, mut ae, mut count) = (0.0f64, 0.0f64, 0usize);
    let all: Vec<usize> = (0..windows.len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let (x, y) = windows.assemble(chunk);
        let pred = model.predict(&x)?;
        check_lengths("evaluate", pred.data(), y.data())?;
        for (&p, &t) in pred.data().iter().zip(y.data()) {
            let d = p as f64 - t as f64;
            se += d * d;
            ae += d.abs();
        }
        count += y.numel();
    }
    Ok(Metrics { mse: se / count as f64, mae: ae / count as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Gradient shards per batch; each runs on its own thread and the
    /// shard gradients are reduced in a fixed order.
    pub shards: usize,
    /// Optimisation steps per epoch (0 = one pass over the training set).
    pub steps_per_epoch: usize,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            epochs: 30,
            batch_size: 32,
            seed: 2024,
            patience: 10,
            shards: 1,
            steps_per_epoch: 0,
            eval_batch_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(MouError::config("train.lr", "must be a finite non-negative number"));
        }
        for (key, v) in [
            ("train.epochs", self.epochs),
            ("train.batch_size", self.batch_size),
            ("train.shards", self.shards),
            ("train.eval_batch_size", self.eval_batch_size),
        ] {
            if v == 0 {
                return Err(MouError::config(key, "must be at least 1"));
            }
        }
        if self.shards > self.batch_size {
            return Err(MouError::config("train.shards", "more shards than samples per batch"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the lowest validation MSE.
    pub best_epoch: usize,
    /// Test metrics of the parameters from `best_epoch`.
    pub test: Metrics,
    pub steps: usize,
    pub wall_s: f64,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_mse,val_mae\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{},{}", e.epoch, e.train_loss, e.val_mse, e.val_mae);
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:>5}  {:>12}  {:>12}  {:>12}\n", "epoch", "train_loss", "val_mse", "val_mae");
        for e in &self.epochs {
            let mark = if e.epoch == self.best_epoch { " *" } else { "" };
            let _ = writeln!(s, "{:>5}  {:>12.6}  {:>12.6}  {:>12.6}{mark}", e.epoch, e.train_loss, e.val_mse, e.val_mae);
        }
        let _ = writeln!(s, "test at best epoch {}: mse {:.6}, mae {:.6}", self.best_epoch, self.test.mse, self.test.mae);
        s
    }
}

/// Loss sum and gradients of one shard.
fn shard_gradients(
    model: &MoUModel<f32>,
    x: Tensor<f32>,
    y: Tensor<f32>,
    noise: Option<Tensor<f32>>,
    denom: f32,
) -> mou_autograd::Result<(f64, Vec<Tensor<f32>>)> {
    let tape = Tape::new();
    let params = model.params().bind(&tape, true);
    let pass = Pass::new(&params, model.config().norm_eps);
    let pred = model.forward_var(&pass, &tape.constant(x), noise.as_ref())?;
    let loss = pred.sub(&tape.constant(y))?.square()?.sum()?.scale(1.0 / denom)?;
    let value = loss.value().data()[0] as f64;
    let grads = tape.backward(&loss)?;
    Ok((value, params.gradients(&grads)))
}

/// Mean-squared-error loss and its gradient over `samples` of `windows`.
fn batch_gradients(
    model: &MoUModel<f32>,
    windows: &WindowSet,
    samples: &[usize],
    noise: Option<&Tensor<f32>>,
    shards: usize,
) -> mou_autograd::Result<(f64, Vec<Tensor<f32>>)> {
    let b = samples.len();
    let denom = (b * model.config().horizon) as f32;
    let tokens = model.config().n_tokens();
    let parts: Vec<(usize, usize)> = {
        let shards = shards.clamp(1, b);
        (0..shards).map(|s| (s * b / shards, (s + 1) * b / shards)).collect()
    };
    let job = |&(lo, hi): &(usize, usize)| {
        let (x, y) = windows.assemble(&samples[lo..hi]);
        let noise = noise.map(|n| {
            let c = n.shape()[1];
            Tensor::new(vec![(hi - lo) * tokens, c], n.data()[lo * tokens * c..hi * tokens * c].to_vec()).expect("noise rows")
        });
        shard_gradients(model, x, y, noise, denom)
    };
    let results: Vec<_> = if parts.len() == 1 {
        parts.iter().map(job).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = parts.iter().map(|part| scope.spawn(move || job(part))).collect();
            handles.into_iter().map(|h| h.join().expect("shard worker panicked")).collect()
        })
    };
    let mut total = 0.0;
    let mut grads: Option<Vec<Tensor<f32>>> = None;
    for r in results {
        let (loss, g) = r?;
        total += loss;
        grads = Some(match grads {
            None => g,
            Some(mut acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    a.data_mut().iter_mut().zip(b.data()).for_each(|(x, &y)| *x += y);
                }
                acc
            }
        });
    }
    Ok((total, grads.expect("at least one shard")))
}

fn diverged(epoch: usize, step: usize, detail: impl Into<String>) -> MouError {
    MouError::Training { epoch, step, detail: detail.into() }
}

/// Trains with Adam on shuffled mini-batches, keeps the parameters with the
/// lowest validation MSE (they are left in `model`), and reports test
/// metrics for them.
pub fn train(model: &mut MoUModel<f32>, data: &PreparedData, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.lr as f32);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, ParamStore<f32>)> = None;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        let n_steps = if cfg.steps_per_epoch == 0 { batches.len() } else { cfg.steps_per_epoch.min(batches.len()) };
        let (mut loss_sum, mut seen) = (0.0f64, 0usize);
        for batch in &batches[..n_steps] {
            let noise = model.noise_shape(batch.len()).map(|[r, c]| {
                let draws = (0..r * c).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
                Tensor::new(vec![r, c], draws).expect("noise shape")
            });
            let (loss, grads) = batch_gradients(model, &data.train, batch, noise.as_ref(), cfg.shards)
                .map_err(|e| diverged(epoch, step, e.to_string()))?;
            if !loss.is_finite() {
                return Err(diverged(epoch, step, format!("loss is {loss}")));
            }
            adam.step_refs(model.params_mut().tensors_mut(), &grads).map_err(|e| diverged(epoch, step, e.to_string()))?;
            if let Some(name) = model.params().iter().find(|(_, t)| !t.is_finite()).map(|(n, _)| n.to_string()) {
                return Err(diverged(epoch, step, format!("parameter `{name}` became non-finite")));
            }
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            step += 1;
        }
        let val = evaluate(model, &data.val, cfg.eval_batch_size)?;
        let record = EpochRecord { epoch, train_loss: loss_sum / seen.max(1) as f64, val_mse: val.mse, val_mae: val.mae };
        log::info!(
            "epoch {epoch}: train {:.6}, val mse {:.6}, val mae {:.6}",
            record.train_loss,
            record.val_mse,
            record.val_mae
        );
        epochs.push(record);
        if best.as_ref().is_none_or(|(_, v, _)| val.mse < *v) {
            best = Some((epoch, val.mse, model.params().clone()));
        } else if epoch - best.as_ref().unwrap().0 >= cfg.patience {
            break;
        }
    }
    let (best_epoch, _, params) = best.expect("at least one epoch");
    *model.params_mut() = params;
    let test = evaluate(model, &data.test, cfg.eval_batch_size)?;
    Ok(TrainReport { epochs, best_epoch, test, steps: step, wall_s: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{prepare, synthetic, Features};
    use crate::model::{ExtractorKind, ModelConfig};

    #[test]
    fn metric_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[2.0, 2.0], &[0.0, 2.0]).unwrap(), 2.0);
        assert!((mse(&[1.5, 2.5, -0.5], &[1.0, 2.0, -1.0]).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(mae(&[2.0, 2.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), mae(&[3.0, 1.0], &[2.0, 2.0]).unwrap());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[1.0], &[]).is_err());
    }

    #[test]
    fn persistence_on_random_walk() {
        let sigma = 0.1;
        let table = synthetic::random_walk(30_000, sigma, 4);
        let d = prepare(&table, "6:2:2".parse().unwrap(), Features::Univariate, 16, 8, false).unwrap();
        let m = evaluate(&Persistence { horizon: 8 }, &d.test, 512).unwrap();
        // Step h ahead the error variance is h·σ²; averaged over h = 1..=8.
        let expect = sigma * sigma * 4.5;
        assert!((m.mse - expect).abs() < 0.1 * expect, "{} vs {expect}", m.mse);
        assert_eq!(evaluate(&Persistence { horizon: 8 }, &d.test, 100).unwrap().mse.to_bits(), m.mse.to_bits());
    }

    fn small_setup(lr: f64) -> (MoUModel<f32>, PreparedData, TrainConfig) {
        let table = synthetic::Sines::seeded(1, 0.1).generate(600, 1);
        let data = prepare(&table, "6:2:2".parse().unwrap(), Features::Univariate, 32, 8, true).unwrap();
        let cfg = ModelConfig { lookback: 32, horizon: 8, d_model: 8, heads: 2, d_state: 4, ..ModelConfig::default() };
        let model = MoUModel::new(cfg, 0).unwrap();
        let tc = TrainConfig { lr, epochs: 3, batch_size: 16, steps_per_epoch: 5, ..TrainConfig::default() };
        (model, data, tc)
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (mut model, data, tc) = small_setup(0.0);
        let before = model.params().clone();
        let report = train(&mut model, &data, &tc).unwrap();
        assert_eq!(model.params(), &before);
        let v = report.epochs[0].val_mse;
        assert!(report.epochs.iter().all(|e| e.val_mse == v));
        assert_eq!(report.best_epoch, 0);
    }

    #[test]
    fn training_is_deterministic_and_shard_count_only_reorders_sums() {
        let (mut a, data, tc) = small_setup(1e-3);
        let mut b = a.clone();
        let ra = train(&mut a, &data, &tc).unwrap();
        let rb = train(&mut b, &data, &tc).unwrap();
        assert_eq!((ra.epochs.clone(), ra.test), (rb.epochs.clone(), rb.test));
        assert_eq!(a.params(), b.params());

        let (mut c, _, _) = small_setup(1e-3);
        let rc = train(&mut c, &data, &TrainConfig { shards: 2, ..tc.clone() }).unwrap();
        for (x, y) in ra.epochs.iter().zip(&rc.epochs) {
            assert!((x.val_mse - y.val_mse).abs() < 1e-4 * x.val_mse.max(1.0));
        }
    }

    #[test]
    fn reported_test_metrics_belong_to_the_best_epoch() {
        let (mut model, data, tc) = small_setup(3e-3);
        let report = train(&mut model, &data, &TrainConfig { epochs: 4, ..tc }).unwrap();
        let best = report.epochs.iter().map(|e| e.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(report.best().val_mse, best);
        assert_eq!(evaluate(&model, &data.val, 256).unwrap().mse, best);
        assert_eq!(evaluate(&model, &data.test, 256).unwrap(), report.test);
        assert!(report.to_csv().starts_with("epoch,train_loss,val_mse,val_mae\n"));
    }

    #[test]
    fn divergence_is_reported_with_position() {
        let (mut model, data, tc) = small_setup(1e30);
        let mut cfg = model.config().clone();
        cfg.extractor = ExtractorKind::Linear;
        model = MoUModel::new(cfg, 0).unwrap();
        match train(&mut model, &data, &TrainConfig { epochs: 50, ..tc }) {
            Err(MouError::Training { epoch, step, .. }) => assert!(step >= 1 && epoch < 50),
            other => panic!("{other:?}"),
        }
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::{LrSchedule, ModelConfig, TrainConfig};
use super::model::{Model, PreparedGraph};
use super::optim::{adamw_step, cosine_lr, AdamState, AdamW};
use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::graphio::{Dataset, Split};
use crate::metrics::{ConfusionMatrix, Weighting};
use crate::parallel::par_map;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Quadratic-weighted validation kappa; `None` when undefined.
    pub val_kappa: Option<f64>,
    /// Learning rate at the start of the epoch.
    pub lr: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters of the best-validation epoch.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn final_val_kappa(&self) -> Option<f64> {
        self.log.last().and_then(|l| l.val_kappa)
    }
}

/// `epoch,train_loss,val_kappa,lr` with shortest round-trip float formatting;
/// an undefined kappa is written as `NaN`.
pub fn metrics_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,val_kappa,lr\n");
    for l in log {
        let kappa = l.val_kappa.unwrap_or(f64::NAN);
        out.push_str(&format!("{},{},{},{}\n", l.epoch, l.train_loss, kappa, l.lr));
    }
    out
}

fn prepare_all(model: &Model, ds: &Dataset, split: Split, threads: usize) -> Result<Vec<PreparedGraph>> {
    let graphs = ds.split(split);
    if graphs.is_empty() {
        return Err(Error::InvalidArgument(format!("dataset {:?} has an empty {split} split", ds.name)));
    }
    par_map(&graphs, threads, |g| model.prepare(g)).into_iter().collect()
}

fn val_kappa(model: &Model, val: &[PreparedGraph], threads: usize) -> Result<Option<f64>> {
    let preds: Vec<usize> = par_map(val, threads, |g| model.predict(g)).into_iter().collect::<Result<_>>()?;
    let mut cm = ConfusionMatrix::new(model.config.num_classes);
    for (g, p) in val.iter().zip(preds) {
        cm.add(g.label, p)?;
    }
    match cm.kappa(Weighting::Quadratic) {
        Ok(k) => Ok(Some(k)),
        Err(Error::UndefinedKappa) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Mini-batch AdamW training. Each epoch reshuffles the train split; the
/// graphs of a batch run on independent tapes (up to `threads` at once) and
/// their gradients are summed in graph-index order, then divided by the batch
/// length. Returns the parameters of the epoch with the best quadratic
/// validation kappa (ties go to the later epoch). The result is identical
/// for every thread count.
pub fn train(ds: &Dataset, model_cfg: &ModelConfig, cfg: &TrainConfig, threads: usize) -> Result<TrainOutcome> {
    train_from(Model::build(model_cfg.clone())?, ds, cfg, threads)
}

pub fn train_from(mut model: Model, ds: &Dataset, cfg: &TrainConfig, threads: usize) -> Result<TrainOutcome> {
    cfg.validate()?;
    ds.validate()?;
    if ds.feature_dim != model.config.d_in || ds.num_classes != model.config.num_classes {
        return Err(Error::Config(format!(
            "dataset has d={} and C={}, model expects d={} and C={}",
            ds.feature_dim, ds.num_classes, model.config.d_in, model.config.num_classes
        )));
    }
    let threads = threads.max(1);
    let train_set = prepare_all(&model, ds, Split::Train, threads)?;
    let val_set = prepare_all(&model, ds, Split::Val, threads)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model.params.tensors);
    let batches_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let lr_at = |step: usize| match cfg.schedule {
        LrSchedule::Constant => cfg.lr,
        LrSchedule::Cosine => cosine_lr(step, total_steps, cfg.lr),
    };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let epoch_lr = lr_at(step);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut batch = batch.to_vec();
            batch.sort_unstable();
            let results = par_map(&batch, threads.min(cfg.batch_size), |&i| model.loss_and_grads(&train_set[i]));
            let mut merged: Option<Vec<Tensor>> = None;
            for r in results {
                let (loss, grads) = r?;
                loss_sum += loss;
                match merged.as_mut() {
                    None => merged = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let mut grads = merged.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grads {
                for x in g.data_mut() {
                    *x *= inv;
                }
            }
            let opt = AdamW {
                lr: lr_at(step),
                weight_decay: cfg.weight_decay,
                beta1: cfg.betas[0],
                beta2: cfg.betas[1],
                eps: cfg.eps,
            };
            adamw_step(&mut model.params.tensors, &grads, &model.params.names, &mut state, &opt)?;
            step += 1;
        }
        let kappa = val_kappa(&model, &val_set, threads)?;
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_kappa: kappa,
            lr: epoch_lr,
        });
        if let Some(k) = kappa {
            if best.as_ref().is_none_or(|(b, _, _)| k >= *b) {
                best = Some((k, epoch, model.params.tensors.clone()));
            }
        }
    }
    let epoch = match best {
        Some((_, epoch, tensors)) => {
            model.params.tensors = tensors;
            epoch
        }
        // no defined validation kappa: keep the final parameters
        None => cfg.epochs,
    };
    let checkpoint = Checkpoint::new(model, cfg.clone(), epoch, log.clone());
    Ok(TrainOutcome { checkpoint, log })
}

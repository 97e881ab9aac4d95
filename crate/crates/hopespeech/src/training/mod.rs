//! Fine-tuning: mini-batch optimization over the train split with
//! per-epoch dev scoring, best-checkpoint selection by dev macro-F1,
//! and a full run log for the manifest.

pub mod checkpoint;
pub mod loss;
pub mod optim;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::classifier::{domain_seed, ClassifierError, HyperParams, Model};
use crate::corpus::{DatasetSplit, Label};
use crate::encoding::{encode, pad_batch, Encoding, TokenizerHandle};
use crate::metrics::{report, MetricsError, MetricsReport};
use crate::textclean::clean;
use checkpoint::CheckpointError;
use loss::loss_and_grad;
use optim::{clip_global_norm, Optimizer};

/// Global gradient-norm ceiling applied before every optimizer step; a
/// safety rail for the non-finite-loss abort path. Recorded in the run
/// manifest.
pub const MAX_GRAD_NORM: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("{role} split is empty")]
    EmptySplit { role: &'static str },
    #[error("{role} instance '{id}' has no label; this operation requires fully labeled data")]
    Unlabeled { role: &'static str, id: String },
    #[error("loss got {logits} logit rows but {labels} labels")]
    LengthMismatch { logits: usize, labels: usize },
    #[error(
        "non-finite loss {loss} at epoch {epoch}, batch {batch}; aborting \
         (check the learning rate, and the data for degenerate instances)"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One epoch's worth of log: mean train loss and dev-set scores.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-instance loss over the epoch's batches.
    pub train_loss: f64,
    pub dev_macro_f1: f64,
    pub dev_accuracy: f64,
}

/// Everything a finished run reports: the hyperparameters it ran with,
/// the per-epoch log, which epoch won, and where its checkpoint lives.
#[derive(Debug, Clone, Serialize)]
pub struct TrainRun {
    pub params: HyperParams,
    pub epoch_log: Vec<EpochRecord>,
    /// Index into `epoch_log` of the highest dev macro-F1 (earliest on
    /// ties).
    pub best_epoch: usize,
    pub checkpoint_path: PathBuf,
}

impl TrainRun {
    /// The winning epoch's dev macro-F1 — by construction the max over
    /// the log.
    pub fn best_dev_macro_f1(&self) -> f64 {
        self.epoch_log[self.best_epoch].dev_macro_f1
    }

    /// Key-value lines for the run manifest (the CLI prepends data
    /// digests and paths).
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let p = &self.params;
        out.push_str(&format!("model_architecture={}\n", p.model_architecture));
        out.push_str(&format!("optimizer={:?}\n", p.optimizer));
        out.push_str(&format!("loss={:?}\n", p.loss));
        out.push_str(&format!("learning_rate={}\n", p.learning_rate));
        out.push_str(&format!("batch_size={}\n", p.batch_size));
        out.push_str(&format!("num_epochs={}\n", p.num_epochs));
        out.push_str(&format!("seed={}\n", p.seed));
        out.push_str(&format!("max_grad_norm={MAX_GRAD_NORM}\n"));
        for rec in &self.epoch_log {
            out.push_str(&format!(
                "epoch.{}.train_loss={:.6}\nepoch.{}.dev_macro_f1={:.6}\nepoch.{}.dev_accuracy={:.6}\n",
                rec.epoch, rec.train_loss, rec.epoch, rec.dev_macro_f1, rec.epoch, rec.dev_accuracy
            ));
        }
        out.push_str(&format!("best_epoch={}\n", self.best_epoch));
        out.push_str(&format!("best_dev_macro_f1={:.6}\n", self.best_dev_macro_f1()));
        out.push_str(&format!("checkpoint_path={}\n", self.checkpoint_path.display()));
        out
    }
}

/// Run-level knobs that do not belong to the hyperparameters: which
/// tokenizer produced the vocabulary the model embeds, and where the
/// best checkpoint goes.
pub struct TrainOptions<'a> {
    pub tokenizer: &'a TokenizerHandle,
    pub checkpoint_dir: PathBuf,
}

/// Cleans and encodes a fully labeled split once, up front; batches are
/// then padded views over these encodings.
fn prepare(
    split: &DatasetSplit,
    tokenizer: &TokenizerHandle,
    max_len: usize,
) -> Result<Vec<(Encoding, Label)>, TrainingError> {
    let role = split.name.as_str();
    if split.is_empty() {
        return Err(TrainingError::EmptySplit { role });
    }
    split
        .instances
        .iter()
        .map(|inst| {
            let label = inst.label.ok_or_else(|| TrainingError::Unlabeled {
                role,
                id: inst.id.clone(),
            })?;
            Ok((encode(&clean(&inst.text), tokenizer, max_len), label))
        })
        .collect()
}

/// Eval-mode predictions over pre-encoded instances, batched to bound
/// memory, scored against their gold labels.
fn score_encoded(
    model: &Model,
    data: &[(Encoding, Label)],
    pad_id: u32,
    batch_size: usize,
) -> Result<MetricsReport, TrainingError> {
    let mut pred = Vec::with_capacity(data.len());
    for chunk in data.chunks(batch_size) {
        let batch = pad_batch(chunk.iter().map(|(e, _)| e), pad_id);
        let out = model.forward(&batch)?;
        pred.extend(crate::classifier::predict(&out));
    }
    let gold: Vec<Label> = data.iter().map(|&(_, l)| l).collect();
    Ok(report(&gold, &pred)?)
}

/// Fine-tunes the model in place.
///
/// Runs `num_epochs` epochs of shuffled mini-batch optimization (batch
/// size, optimizer, and learning rate from the model's hyperparameters;
/// shuffle order derived from the run seed), scores dev macro-F1 and
/// accuracy after each epoch, and saves a checkpoint whenever dev
/// macro-F1 strictly improves — so the checkpoint on disk is always the
/// best epoch's, and ties keep the earliest. The model itself is left
/// in its final-epoch state; reload the checkpoint for the best one.
///
/// Aborts with a diagnostic if any batch loss goes non-finite.
pub fn train(
    model: &mut Model,
    train_split: &DatasetSplit,
    dev_split: &DatasetSplit,
    opts: &TrainOptions,
) -> Result<TrainRun, TrainingError> {
    let params = model.params.clone();
    params.validate()?;
    let max_len = params.effective_max_len(&model.backbone.config);
    let pad_id = opts.tokenizer.pad_id();
    let train_data = prepare(train_split, opts.tokenizer, max_len)?;
    let dev_data = prepare(dev_split, opts.tokenizer, max_len)?;

    let mut optimizer = Optimizer::new(params.optimizer, params.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::from_seed(domain_seed(params.seed, "shuffle"));
    let mut epoch_log: Vec<EpochRecord> = Vec::with_capacity(params.num_epochs);
    let mut best: Option<(usize, f64)> = None;

    for epoch in 0..params.num_epochs {
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(params.batch_size).enumerate() {
            let batch = pad_batch(chunk.iter().map(|&i| &train_data[i].0), pad_id);
            let gold: Vec<Label> = chunk.iter().map(|&i| train_data[i].1).collect();

            let (out, cache) = model.forward_train(&batch)?;
            let (batch_loss, dlogits) = loss_and_grad(&out, &gold, params.loss)?;
            if !batch_loss.is_finite() {
                return Err(TrainingError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    loss: batch_loss,
                });
            }
            loss_sum += batch_loss * chunk.len() as f64;

            model.zero_grads();
            model.backward(&cache, &dlogits);
            clip_global_norm(model, MAX_GRAD_NORM);
            optimizer.step(model);
        }

        let dev = score_encoded(model, &dev_data, pad_id, params.batch_size)?;
        epoch_log.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_data.len() as f64,
            dev_macro_f1: dev.macro_f1,
            dev_accuracy: dev.accuracy,
        });
        let improved = match best {
            None => true,
            Some((_, best_f1)) => dev.macro_f1 > best_f1,
        };
        if improved {
            best = Some((epoch, dev.macro_f1));
            checkpoint::save_checkpoint(model, &opts.checkpoint_dir)?;
        }
    }

    let (best_epoch, _) = best.expect("validate() guarantees num_epochs >= 1");
    Ok(TrainRun {
        params,
        epoch_log,
        best_epoch,
        checkpoint_path: opts.checkpoint_dir.clone(),
    })
}

/// Cleans, encodes, and classifies raw texts in eval mode, batched by
/// the model's batch size.
pub fn predict_labels(
    model: &Model,
    tokenizer: &TokenizerHandle,
    texts: &[String],
) -> Result<Vec<Label>, TrainingError> {
    let max_len = model.params.effective_max_len(&model.backbone.config);
    let mut pred = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(model.params.batch_size.max(1)) {
        let cleaned: Vec<_> = chunk.iter().map(|t| clean(t)).collect();
        let encoded: Vec<Encoding> = cleaned
            .iter()
            .map(|c| encode(c, tokenizer, max_len))
            .collect();
        let batch = pad_batch(&encoded, tokenizer.pad_id());
        let out = model.forward(&batch)?;
        pred.extend(crate::classifier::predict(&out));
    }
    Ok(pred)
}

/// Scores the model on a fully labeled split (the dev/test evaluation
/// path of the command-line tool).
pub fn evaluate_split(
    model: &Model,
    split: &DatasetSplit,
    tokenizer: &TokenizerHandle,
) -> Result<MetricsReport, TrainingError> {
    let max_len = model.params.effective_max_len(&model.backbone.config);
    let data = prepare(split, tokenizer, max_len)?;
    score_encoded(
        model,
        &data,
        tokenizer.pad_id(),
        model.params.batch_size.max(1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{build_model, BackboneSource};
    use crate::corpus::SplitName;
    use crate::toydata;
    use optim::global_grad_norm;

    fn toy_setup() -> (Model, TokenizerHandle, DatasetSplit, DatasetSplit) {
        let tok = TokenizerHandle::toy();
        let params = toydata::params();
        let source =
            BackboneSource::Fresh(toydata::backbone_config(tok.vocab_size(), &params));
        let model = build_model(&params, &source).unwrap();
        (
            model,
            tok,
            toydata::split(SplitName::Train),
            toydata::split(SplitName::Dev),
        )
    }

    #[test]
    fn overfits_the_separable_fixture() {
        let (mut model, tok, train_split, dev_split) = toy_setup();
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions {
            tokenizer: &tok,
            checkpoint_dir: dir.path().join("ckpt"),
        };
        let run = train(&mut model, &train_split, &dev_split, &opts).unwrap();
        assert_eq!(run.epoch_log.len(), model.params.num_epochs);
        let final_score = evaluate_split(&model, &train_split, &tok).unwrap();
        assert_eq!(
            final_score.accuracy, 1.0,
            "fixture not memorized; epoch log: {:?}",
            run.epoch_log
        );
        // Selection invariant: reported best equals the max over the log.
        let max_f1 = run
            .epoch_log
            .iter()
            .map(|r| r.dev_macro_f1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(run.best_dev_macro_f1(), max_f1);
        // The checkpoint holds the best epoch, which for the fixture
        // also scores perfectly.
        let best = checkpoint::load_checkpoint(&run.checkpoint_path, Some(&model.params))
            .unwrap();
        let best_score = evaluate_split(&best, &dev_split, &tok).unwrap();
        assert_eq!(best_score.accuracy, 1.0);
    }

    #[test]
    fn single_epoch_logs_one_record_with_best_zero() {
        let (_, tok, train_split, dev_split) = toy_setup();
        let mut params = toydata::params();
        params.num_epochs = 1;
        let source =
            BackboneSource::Fresh(toydata::backbone_config(tok.vocab_size(), &params));
        let mut model = build_model(&params, &source).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions {
            tokenizer: &tok,
            checkpoint_dir: dir.path().join("ckpt"),
        };
        let run = train(&mut model, &train_split, &dev_split, &opts).unwrap();
        assert_eq!(run.epoch_log.len(), 1);
        assert_eq!(run.best_epoch, 0);
        assert!(run.checkpoint_path.join("weights.bin").exists());
    }

    #[test]
    fn identical_seeds_produce_identical_epoch_logs() {
        let logs: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let (mut model, tok, train_split, dev_split) = toy_setup();
                let mut params = model.params.clone();
                params.num_epochs = 3;
                model.params = params.clone();
                let dir = tempfile::tempdir().unwrap();
                let opts = TrainOptions {
                    tokenizer: &tok,
                    checkpoint_dir: dir.path().join("ckpt"),
                };
                let run = train(&mut model, &train_split, &dev_split, &opts).unwrap();
                run.epoch_log.iter().map(|r| r.train_loss).collect()
            })
            .collect();
        assert_eq!(logs[0], logs[1], "same seed, same data, different losses");
    }

    #[test]
    fn empty_split_is_rejected() {
        let (mut model, tok, train_split, _) = toy_setup();
        let empty = DatasetSplit {
            name: SplitName::Dev,
            instances: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions {
            tokenizer: &tok,
            checkpoint_dir: dir.path().join("ckpt"),
        };
        let err = train(&mut model, &train_split, &empty, &opts).unwrap_err();
        assert!(matches!(err, TrainingError::EmptySplit { role: "dev" }), "{err}");
    }

    #[test]
    fn unlabeled_instance_is_named() {
        let (mut model, tok, mut train_split, dev_split) = toy_setup();
        train_split.instances[5].label = None;
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions {
            tokenizer: &tok,
            checkpoint_dir: dir.path().join("ckpt"),
        };
        let err = train(&mut model, &train_split, &dev_split, &opts).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("toy-05") && msg.contains("train"), "{msg}");
    }

    #[test]
    fn poisoned_weights_abort_with_a_non_finite_loss_diagnostic() {
        let (mut model, tok, train_split, dev_split) = toy_setup();
        model.for_each_param(&mut |mut p| {
            if p.name() == "head.dense2.bias" {
                p.value_slice_mut()[0] = f64::NAN;
            }
        });
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions {
            tokenizer: &tok,
            checkpoint_dir: dir.path().join("ckpt"),
        };
        let err = train(&mut model, &train_split, &dev_split, &opts).unwrap_err();
        assert!(
            matches!(
                err,
                TrainingError::NonFiniteLoss {
                    epoch: 0,
                    batch: 0,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn untrained_loss_sits_near_the_uniform_baseline() {
        let (mut model, tok, train_split, _) = toy_setup();
        let max_len = model.params.effective_max_len(&model.backbone.config);
        let data = prepare(&train_split, &tok, max_len).unwrap();
        let batch = pad_batch(data.iter().map(|(e, _)| e), tok.pad_id());
        let gold: Vec<Label> = data.iter().map(|&(_, l)| l).collect();
        let (out, _) = model.forward_train(&batch).unwrap();
        let loss = loss::compute_loss(&out, &gold, model.params.loss).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!(loss >= 0.0 && loss <= ln2 + 3.0);
        // Symmetric small-scale init keeps logits near zero.
        assert!((loss - ln2).abs() < 0.1, "loss {loss} far from ln 2");
    }

    #[test]
    fn clipping_caps_the_global_gradient_norm() {
        let (mut model, tok, train_split, _) = toy_setup();
        let max_len = model.params.effective_max_len(&model.backbone.config);
        let data = prepare(&train_split, &tok, max_len).unwrap();
        let batch = pad_batch(data.iter().take(8).map(|(e, _)| e), tok.pad_id());
        let gold: Vec<Label> = data.iter().take(8).map(|&(_, l)| l).collect();
        let (out, cache) = model.forward_train(&batch).unwrap();
        // Inflate the gradient so the clip has something to do.
        let (_, mut dlogits) = loss_and_grad(&out, &gold, model.params.loss).unwrap();
        dlogits *= 1e4;
        model.zero_grads();
        model.backward(&cache, &dlogits);
        let before = global_grad_norm(&mut model);
        let reported = clip_global_norm(&mut model, MAX_GRAD_NORM);
        assert_eq!(reported, before);
        assert!(before > MAX_GRAD_NORM, "test needs an oversized gradient");
        let after = global_grad_norm(&mut model);
        assert!((after - MAX_GRAD_NORM).abs() < 1e-9, "after = {after}");
    }
}

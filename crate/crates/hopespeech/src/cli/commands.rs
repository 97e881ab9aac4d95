//! The five batch commands. Each returns an error (nonzero exit) on
//! any failure path and writes output files atomically, so a failed
//! run never leaves partial artifacts behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use hopespeech::corpus::{
    self, load_split, split_statistics, verify_expected_counts, DatasetSplit, SplitName,
};
use hopespeech::training::checkpoint::load_checkpoint;
use hopespeech::training::{evaluate_split, predict_labels, train, TrainOptions, TrainRun};
use hopespeech::{build_model, metrics, textclean, MetricsReport, TokenizerHandle};

use super::config::RunConfig;
use super::{io, submission, Device};

/// The build is CPU-only; the flag exists so invocations written for an
/// accelerator-equipped deployment fail loudly here instead of silently
/// running on the wrong device.
fn ensure_cpu(device: Device) -> Result<()> {
    match device {
        Device::Cpu => Ok(()),
        Device::Accelerator => bail!(
            "accelerator support is not compiled into this build; rerun with --device cpu"
        ),
    }
}

/// `stats`: class counts for one corpus file, optionally verified
/// against the published reference rows.
pub fn cmd_stats(data: &Path, split: SplitName, expect: Option<&str>) -> Result<()> {
    let ds = load_split(data, split, false)?;
    let counts = split_statistics(&ds);
    println!("file={}", data.display());
    println!("split={split}");
    println!("{counts}");
    if let Some(key) = expect {
        let expected = corpus::expected::lookup(key).with_context(|| {
            let names: Vec<&str> = corpus::expected::ALL.iter().map(|(k, _)| *k).collect();
            format!(
                "unknown reference key '{key}' (available: {})",
                names.join(", ")
            )
        })?;
        let report = verify_expected_counts(counts, expected);
        print!("{}", report.to_key_value());
        if !report.pass {
            bail!(
                "counts in {} do not match reference '{key}'",
                data.display()
            );
        }
    }
    Ok(())
}

/// `clean`: run the text-cleaning pipeline over a corpus file, keeping
/// ids and any labels, and write the same schema back out.
pub fn cmd_clean(input: &Path, output: &Path) -> Result<()> {
    let ds = load_split(input, SplitName::Train, false)?;
    let with_labels = ds.instances.iter().any(|i| i.label.is_some());
    let cleaned = DatasetSplit {
        name: ds.name,
        instances: ds
            .instances
            .into_iter()
            .map(|mut inst| {
                inst.text = textclean::clean(&inst.text).into_string();
                inst
            })
            .collect(),
    };
    let mut buf = Vec::new();
    corpus::write_split(&cleaned, with_labels, &mut buf)?;
    io::write_atomic(output, &buf)?;
    println!(
        "cleaned {} instances: {} -> {}",
        cleaned.len(),
        input.display(),
        output.display()
    );
    Ok(())
}

/// The manifest ties a finished run to exactly what produced it:
/// config provenance, data digests, the epoch log, and the final
/// train-split accuracy. Deliberately timestamp-free so identical
/// invocations produce identical manifests.
fn build_manifest(
    rc: &RunConfig,
    run: &TrainRun,
    train_path: &Path,
    dev_path: &Path,
    final_train_accuracy: f64,
    tokenizer: &TokenizerHandle,
) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "command=train");
    let _ = writeln!(out, "language={}", rc.language.as_str());
    let _ = writeln!(out, "preset={}", rc.preset.as_deref().unwrap_or("inline"));
    let _ = writeln!(out, "device=cpu");
    let _ = writeln!(out, "tokenizer={}", tokenizer.model_id());
    let _ = writeln!(out, "train_file={}", train_path.display());
    let _ = writeln!(out, "train_sha256={}", io::sha256_hex(train_path)?);
    let _ = writeln!(out, "dev_file={}", dev_path.display());
    let _ = writeln!(out, "dev_sha256={}", io::sha256_hex(dev_path)?);
    out.push_str(&run.to_key_value());
    let _ = writeln!(out, "final_train_accuracy={final_train_accuracy:.6}");
    Ok(out)
}

/// `train`: fine-tune per the run config and leave checkpoint +
/// manifest in the output directory.
pub fn cmd_train(config: &Path, device: Device) -> Result<()> {
    ensure_cpu(device)?;
    let rc = RunConfig::load(config)?;
    let train_path = rc
        .train
        .clone()
        .context("run config does not name a 'train' file")?;
    let dev_path = rc
        .dev
        .clone()
        .context("run config does not name a 'dev' file")?;
    let train_ds = load_split(&train_path, SplitName::Train, true)?;
    let dev_ds = load_split(&dev_path, SplitName::Dev, true)?;
    let tokenizer = rc.tokenizer()?;
    let source = rc.backbone_source(&tokenizer);
    let mut model = build_model(&rc.params, &source)?;
    for warning in &model.warnings {
        eprintln!("warning: {warning}");
    }

    let opts = TrainOptions {
        tokenizer: &tokenizer,
        checkpoint_dir: rc.checkpoint_dir(),
    };
    let run = train(&mut model, &train_ds, &dev_ds, &opts)?;
    let final_train = evaluate_split(&model, &train_ds, &tokenizer)?;

    let manifest = build_manifest(
        &rc,
        &run,
        &train_path,
        &dev_path,
        final_train.accuracy,
        &tokenizer,
    )?;
    let manifest_path = rc.output_dir.join("manifest.txt");
    io::write_atomic(&manifest_path, manifest.as_bytes())?;

    println!(
        "trained {} epochs; best epoch {} (dev macro-F1 {:.4})",
        run.epoch_log.len(),
        run.best_epoch,
        run.best_dev_macro_f1()
    );
    println!("checkpoint={}", run.checkpoint_path.display());
    println!("manifest={}", manifest_path.display());
    Ok(())
}

/// `predict`: load a checkpoint, classify the test file, and write the
/// id,label submission.
pub fn cmd_predict(
    config: &Path,
    checkpoint: Option<&Path>,
    output: Option<&Path>,
    device: Device,
) -> Result<()> {
    ensure_cpu(device)?;
    let rc = RunConfig::load(config)?;
    let test_path = rc
        .test
        .clone()
        .context("run config does not name a 'test' file")?;
    let test_ds = load_split(&test_path, SplitName::Test, false)?;
    let tokenizer = rc.tokenizer()?;
    let ckpt_dir: PathBuf = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| rc.checkpoint_dir());
    let model = load_checkpoint(&ckpt_dir, Some(&rc.params))?;
    if model.backbone.config.vocab_size != tokenizer.vocab_size() {
        bail!(
            "checkpoint vocabulary ({} entries) does not match tokenizer '{}' ({} entries)",
            model.backbone.config.vocab_size,
            tokenizer.model_id(),
            tokenizer.vocab_size()
        );
    }

    let texts: Vec<String> = test_ds.instances.iter().map(|i| i.text.clone()).collect();
    let labels = predict_labels(&model, &tokenizer, &texts)?;
    let bytes = submission::to_csv(&test_ds, &labels)?;
    let out_path: PathBuf = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| rc.output_dir.join("submission.csv"));
    io::write_atomic(&out_path, &bytes)?;
    println!("wrote {} predictions to {}", labels.len(), out_path.display());
    Ok(())
}

/// The four headline numbers, 4 decimals, in reporting order.
fn headline(report: &MetricsReport) -> String {
    format!(
        "macro_precision={:.4}\nmacro_recall={:.4}\nmacro_f1={:.4}\naccuracy={:.4}\n",
        report.macro_precision, report.macro_recall, report.macro_f1, report.accuracy
    )
}

/// `evaluate`: score a submission against gold labels, joining on id.
pub fn cmd_evaluate(gold: &Path, predictions: &Path, output: Option<&Path>) -> Result<()> {
    let gold_ds = load_split(gold, SplitName::Test, true)?;
    if gold_ds.is_empty() {
        bail!("gold file {} has no instances to score", gold.display());
    }
    let pred = submission::read(predictions)?;
    let (gold_labels, pred_labels) = submission::join(&gold_ds, &pred)?;
    let report = metrics::report(&gold_labels, &pred_labels)?;
    print!("{}", headline(&report));
    if let Some(path) = output {
        io::write_atomic(path, report.to_key_value().as_bytes())?;
        println!("report={}", path.display());
    }
    Ok(())
}

//! The shared-task submission format: a two-column CSV of `id,label`
//! with labels serialized exactly as "Hope" / "Not Hope". Scoring joins
//! on id, never on row order.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hopespeech::corpus::{DatasetSplit, Label};

/// Serializes one prediction per instance, in corpus order.
pub fn to_csv(split: &DatasetSplit, labels: &[Label]) -> Result<Vec<u8>> {
    assert_eq!(
        split.len(),
        labels.len(),
        "one prediction per instance is a caller invariant"
    );
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["id", "label"])?;
    for (inst, label) in split.instances.iter().zip(labels) {
        writer.write_record([inst.id.as_str(), label.as_str()])?;
    }
    Ok(writer.into_inner().context("flushing submission buffer")?)
}

/// Reads a submission file back. Rows keep file order; duplicate ids
/// and unknown label strings are errors.
pub fn read(path: &Path) -> Result<Vec<(String, Label)>> {
    if !path.exists() {
        bail!("submission file not found: {}", path.display());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |want: &str| headers.iter().position(|h| h.trim() == want);
    let (Some(id_col), Some(label_col)) = (col("id"), col("label")) else {
        bail!(
            "{} is not a submission file: header must contain 'id' and 'label'",
            path.display()
        );
    };
    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.with_context(|| format!("row {row} of {}", path.display()))?;
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            bail!("row {row} of {} has an empty id", path.display());
        }
        if let Some(first) = seen.insert(id.clone(), row) {
            bail!(
                "duplicate id '{id}' in {} (rows {first} and {row})",
                path.display()
            );
        }
        let raw = record.get(label_col).unwrap_or("");
        let label = Label::parse(raw).with_context(|| {
            format!(
                "row {row} of {} has unknown label '{raw}' (expected \"Hope\" or \"Not Hope\")",
                path.display()
            )
        })?;
        rows.push((id, label));
    }
    Ok(rows)
}

/// Formats up to ten ids for an error message.
fn id_list(ids: &[&str]) -> String {
    let shown: Vec<&str> = ids.iter().take(10).copied().collect();
    let mut out = shown.join(", ");
    if ids.len() > shown.len() {
        out.push_str(&format!(", … and {} more", ids.len() - shown.len()));
    }
    out
}

/// Aligns predictions to gold instances by id and returns the two label
/// sequences in gold order. Every gold id must be predicted exactly
/// once and no prediction may target an unknown id; violations are
/// reported with the offending ids.
pub fn join(gold: &DatasetSplit, pred: &[(String, Label)]) -> Result<(Vec<Label>, Vec<Label>)> {
    let by_id: HashMap<&str, Label> =
        pred.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let missing: Vec<&str> = gold
        .instances
        .iter()
        .filter(|inst| !by_id.contains_key(inst.id.as_str()))
        .map(|inst| inst.id.as_str())
        .collect();
    if !missing.is_empty() {
        bail!(
            "predictions are missing {} gold id(s): {}",
            missing.len(),
            id_list(&missing)
        );
    }
    let gold_ids: std::collections::HashSet<&str> =
        gold.instances.iter().map(|i| i.id.as_str()).collect();
    let extra: Vec<&str> = pred
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| !gold_ids.contains(id))
        .collect();
    if !extra.is_empty() {
        bail!(
            "predictions contain {} id(s) not in the gold file: {}",
            extra.len(),
            id_list(&extra)
        );
    }
    let mut gold_labels = Vec::with_capacity(gold.len());
    let mut pred_labels = Vec::with_capacity(gold.len());
    for inst in &gold.instances {
        let Some(label) = inst.label else {
            bail!("gold instance '{}' has no label", inst.id);
        };
        gold_labels.push(label);
        pred_labels.push(by_id[inst.id.as_str()]);
    }
    Ok((gold_labels, pred_labels))
}

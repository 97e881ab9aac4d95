//! Training losses and their logit gradients.
//!
//! Cross-entropy works on the two-logit output directly. Binary
//! cross-entropy treats `z = logit[1] - logit[0]` as the sigmoid input,
//! which is exact for the single-logit head's `[0, z]` convention and
//! shift-invariant for any other. Both losses return gradients in the
//! `[n, 2]` logit layout the model's backward pass expects, already
//! divided by the batch size (losses are per-instance means).

use ndarray::Array2;

use super::TrainingError;
use crate::classifier::{ClassifierOutput, LossKind};
use crate::corpus::Label;

/// Stable `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean loss over the batch.
pub fn compute_loss(
    out: &ClassifierOutput,
    gold: &[Label],
    kind: LossKind,
) -> Result<f64, TrainingError> {
    loss_and_grad(out, gold, kind).map(|(loss, _)| loss)
}

/// Mean loss and its gradient with respect to the exposed logits.
pub fn loss_and_grad(
    out: &ClassifierOutput,
    gold: &[Label],
    kind: LossKind,
) -> Result<(f64, Array2<f64>), TrainingError> {
    let n = out.len();
    if n != gold.len() {
        return Err(TrainingError::LengthMismatch {
            logits: n,
            labels: gold.len(),
        });
    }
    assert!(n > 0, "loss needs at least one instance");
    let scale = 1.0 / n as f64;
    let mut total = 0.0;
    let mut dlogits = Array2::zeros((n, 2));
    for (i, (row, &label)) in out.logits.rows().into_iter().zip(gold).enumerate() {
        let (l0, l1) = (row[0], row[1]);
        let y = label.index(); // 0 = Not Hope, 1 = Hope
        match kind {
            LossKind::CrossEntropy => {
                let m = l0.max(l1);
                let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
                let gold_logit = if y == 1 { l1 } else { l0 };
                total += lse - gold_logit;
                let p0 = (l0 - lse).exp();
                let p1 = (l1 - lse).exp();
                dlogits[[i, 0]] = (p0 - if y == 0 { 1.0 } else { 0.0 }) * scale;
                dlogits[[i, 1]] = (p1 - if y == 1 { 1.0 } else { 0.0 }) * scale;
            }
            LossKind::BinaryCrossEntropy => {
                let z = l1 - l0;
                // -[y ln p + (1-y) ln (1-p)] with p = sigmoid(z).
                total += softplus(z) - (y as f64) * z;
                let p = 1.0 / (1.0 + (-z).exp());
                let dz = (p - y as f64) * scale;
                dlogits[[i, 0]] = -dz;
                dlogits[[i, 1]] = dz;
            }
        }
    }
    Ok((total * scale, dlogits))
}

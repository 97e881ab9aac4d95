//! Per-class and aggregate precision, recall, F1, accuracy, and the
//! confusion matrix for the binary task.
//!
//! All arithmetic runs in f64; values are rounded to four decimals only
//! when a report is displayed. A 0/0 ratio is defined as 0 and flagged so
//! degenerate predictions stay visible instead of crashing the scorer.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Label;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("gold and prediction lengths differ: {gold} vs {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("cannot score an empty label sequence")]
    Empty,
}

/// 2x2 tally indexed `(gold, predicted)` over (NotHope, Hope).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn get(&self, gold: Label, pred: Label) -> usize {
        self.counts[gold.index()][pred.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Correctly classified instances.
    pub fn diagonal(&self) -> usize {
        self.counts[0][0] + self.counts[1][1]
    }

    /// Gold instances of `class`.
    pub fn support(&self, class: Label) -> usize {
        self.counts[class.index()].iter().sum()
    }

    /// Instances predicted as `class`.
    pub fn predicted(&self, class: Label) -> usize {
        self.counts[0][class.index()] + self.counts[1][class.index()]
    }
}

/// Exact tally of gold versus predicted labels.
pub fn confusion(gold: &[Label], pred: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut counts = [[0usize; 2]; 2];
    for (&g, &p) in gold.iter().zip(pred) {
        counts[g.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Precision, recall, and F1 for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Full scoring output: per-class metrics, macro and weighted averages,
/// accuracy, and the underlying confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Indexed by `Label::index()`: `[NotHope, Hope]`.
    pub per_class: [ClassMetrics; 2],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub matrix: ConfusionMatrix,
    /// Fields whose denominator was zero, e.g. `"Hope.precision"`.
    pub zero_division_flags: Vec<String>,
}

fn ratio(num: usize, den: usize, field: String, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(field);
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores predictions against gold labels.
///
/// `precision_c = TP_c / (TP_c + FP_c)`, `recall_c = TP_c / (TP_c + FN_c)`,
/// `f1_c = 2PR / (P + R)`; macro values are the unweighted two-class means,
/// `weighted_f1` weights per-class F1 by gold support.
pub fn report(gold: &[Label], pred: &[Label]) -> Result<MetricsReport, MetricsError> {
    let matrix = confusion(gold, pred)?;
    let mut flags = Vec::new();
    let per_class = Label::ALL.map(|class| {
        let tp = matrix.get(class, class);
        let precision = ratio(tp, matrix.predicted(class), format!("{class}.precision"), &mut flags);
        let recall = ratio(tp, matrix.support(class), format!("{class}.recall"), &mut flags);
        let f1 = if precision + recall == 0.0 {
            flags.push(format!("{class}.f1"));
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics { precision, recall, f1, support: matrix.support(class) }
    });
    let total = matrix.total() as f64;
    Ok(MetricsReport {
        macro_precision: (per_class[0].precision + per_class[1].precision) / 2.0,
        macro_recall: (per_class[0].recall + per_class[1].recall) / 2.0,
        macro_f1: (per_class[0].f1 + per_class[1].f1) / 2.0,
        weighted_f1: per_class
            .iter()
            .map(|m| m.f1 * m.support as f64 / total)
            .sum(),
        accuracy: matrix.diagonal() as f64 / total,
        per_class,
        matrix,
        zero_division_flags: flags,
    })
}

impl MetricsReport {
    /// Machine-readable key-value form, full precision.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for class in Label::ALL {
            let m = &self.per_class[class.index()];
            let key = class.as_str().replace(' ', "_").to_lowercase();
            out.push_str(&format!("{key}.precision={}\n", m.precision));
            out.push_str(&format!("{key}.recall={}\n", m.recall));
            out.push_str(&format!("{key}.f1={}\n", m.f1));
            out.push_str(&format!("{key}.support={}\n", m.support));
        }
        out.push_str(&format!("macro_precision={}\n", self.macro_precision));
        out.push_str(&format!("macro_recall={}\n", self.macro_recall));
        out.push_str(&format!("macro_f1={}\n", self.macro_f1));
        out.push_str(&format!("weighted_f1={}\n", self.weighted_f1));
        out.push_str(&format!("accuracy={}\n", self.accuracy));
        for (g, p) in [
            (Label::NotHope, Label::NotHope),
            (Label::NotHope, Label::Hope),
            (Label::Hope, Label::NotHope),
            (Label::Hope, Label::Hope),
        ] {
            out.push_str(&format!(
                "confusion.gold_{}.pred_{}={}\n",
                g.as_str().replace(' ', "_").to_lowercase(),
                p.as_str().replace(' ', "_").to_lowercase(),
                self.matrix.get(g, p)
            ));
        }
        if !self.zero_division_flags.is_empty() {
            out.push_str(&format!(
                "zero_division_flags={}\n",
                self.zero_division_flags.join(",")
            ));
        }
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>9} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1", "support")?;
        for class in Label::ALL {
            let m = &self.per_class[class.index()];
            writeln!(
                f,
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9}",
                class.as_str(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            )?;
        }
        writeln!(f)?;
        writeln!(f, "macro_precision {:.4}", self.macro_precision)?;
        writeln!(f, "macro_recall    {:.4}", self.macro_recall)?;
        writeln!(f, "macro_f1        {:.4}", self.macro_f1)?;
        writeln!(f, "weighted_f1     {:.4}", self.weighted_f1)?;
        writeln!(f, "accuracy        {:.4}", self.accuracy)?;
        writeln!(f)?;
        writeln!(f, "confusion (gold x pred) {:>12} {:>12}", "Not Hope", "Hope")?;
        for g in Label::ALL {
            writeln!(
                f,
                "{:<23} {:>12} {:>12}",
                g.as_str(),
                self.matrix.get(g, Label::NotHope),
                self.matrix.get(g, Label::Hope)
            )?;
        }
        if !self.zero_division_flags.is_empty() {
            writeln!(f, "zero-division (0/0 -> 0): {}", self.zero_division_flags.join(", "))?;
        }
        Ok(())
    }
}

/// Orders named reports descending by macro F1; ties break by accuracy,
/// then ascending by name.
pub fn rank_submissions<'a>(
    reports: &'a [(String, MetricsReport)],
) -> Vec<&'a (String, MetricsReport)> {
    let mut ranked: Vec<_> = reports.iter().collect();
    ranked.sort_by(|a, b| {
        b.1.macro_f1
            .total_cmp(&a.1.macro_f1)
            .then(b.1.accuracy.total_cmp(&a.1.accuracy))
            .then(a.0.cmp(&b.0))
    });
    ranked
}

//! Loading, validation, and statistics for labeled social-media splits.
//!
//! Splits are CSV files, UTF-8, with a header row `id,text,label`; the
//! label column is optional for test splits. Loading never drops rows.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary class of one text instance.
///
/// Serialized forms are exactly `"Hope"` and `"Not Hope"`. The integer
/// encoding is fixed so that Hope is the positive class in metric terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    NotHope,
    Hope,
}

impl Label {
    /// Fixed integer encoding: NotHope -> 0, Hope -> 1.
    pub fn index(self) -> usize {
        match self {
            Label::NotHope => 0,
            Label::Hope => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::NotHope),
            1 => Some(Label::Hope),
            _ => None,
        }
    }

    /// Canonical serialized form: `"Hope"` / `"Not Hope"`.
    pub fn as_str(self) -> &'static str {
        match self {
            Label::NotHope => "Not Hope",
            Label::Hope => "Hope",
        }
    }

    /// Parses a label string leniently: surrounding whitespace, arbitrary
    /// casing, and internal space runs are all tolerated ("  NOT   hope ").
    pub fn parse(raw: &str) -> Option<Label> {
        let canon = raw
            .split_whitespace()
            .map(|w| w.to_lowercase())
            .collect::<Vec<_>>()
            .join(" ");
        match canon.as_str() {
            "hope" => Some(Label::Hope),
            "not hope" => Some(Label::NotHope),
            _ => None,
        }
    }

    pub const ALL: [Label; 2] = [Label::NotHope, Label::Hope];
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One social-media post, the unit flowing through the whole pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextInstance {
    pub id: String,
    /// Raw, uncleaned text as found in the source file.
    pub text: String,
    pub label: Option<Label>,
}

/// Which split a file is meant to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "train" => Ok(SplitName::Train),
            "dev" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            other => Err(format!("unknown split name '{other}' (expected train, dev, or test)")),
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An ordered, immutable sequence of instances read from one file.
///
/// Order is preserved from the source; prediction files join on id, but a
/// stable order keeps debugging sane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub instances: Vec<TextInstance>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// True when every instance carries a label.
    pub fn fully_labeled(&self) -> bool {
        self.instances.iter().all(|i| i.label.is_some())
    }
}

/// Per-class instance counts for one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub total: usize,
    pub hope: usize,
    pub not_hope: usize,
}

impl ClassCounts {
    pub const fn new(total: usize, hope: usize, not_hope: usize) -> Self {
        Self { total, hope, not_hope }
    }
}

impl fmt::Display for ClassCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "total={} hope={} not_hope={}",
            self.total, self.hope, self.not_hope
        )
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {0}")]
    MissingFile(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus file {path}: {detail}")]
    Malformed { path: PathBuf, detail: String },
    #[error("missing required column '{column}' in {path} (header must contain id and text)")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path} has no label column but split '{split}' requires labels")]
    LabelColumnRequired { path: PathBuf, split: SplitName },
    #[error("row {row} (id '{id}') in {path} has an empty label but split '{split}' requires labels")]
    MissingLabel {
        path: PathBuf,
        row: usize,
        id: String,
        split: SplitName,
    },
    #[error("row {row} (id '{id}') in {path} has unknown label '{raw}' (expected \"Hope\" or \"Not Hope\")")]
    UnknownLabel {
        path: PathBuf,
        row: usize,
        id: String,
        raw: String,
    },
    #[error("duplicate id '{id}' at row {row} in {path}")]
    DuplicateId { path: PathBuf, row: usize, id: String },
    #[error("row {row} in {path} has an empty id")]
    EmptyId { path: PathBuf, row: usize },
    #[error("failed to write {path}: {detail}")]
    Write { path: PathBuf, detail: String },
}

/// Loads one split from a CSV file.
///
/// Columns are located by header name (`id`, `text`, optional `label`) in
/// any order; unknown extra columns are ignored. A zero-byte file loads as
/// an empty split. With `require_labels`, a missing label column or any
/// unlabeled row is an error rather than a warning: silent label loss
/// corrupts training.
pub fn load_split(
    path: &Path,
    name: SplitName,
    require_labels: bool,
) -> Result<DatasetSplit, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let content = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    // Tolerate a UTF-8 BOM from spreadsheet exports.
    let content = content.strip_prefix('\u{feff}').unwrap_or(&content);
    if content.trim().is_empty() {
        return Ok(DatasetSplit { name, instances: Vec::new() });
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(content.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?
        .clone();
    let col = |want: &str| headers.iter().position(|h| h.trim() == want);
    let id_col = col("id").ok_or_else(|| CorpusError::MissingColumn {
        path: path.to_path_buf(),
        column: "id".into(),
    })?;
    let text_col = col("text").ok_or_else(|| CorpusError::MissingColumn {
        path: path.to_path_buf(),
        column: "text".into(),
    })?;
    let label_col = col("label");
    if require_labels && label_col.is_none() {
        return Err(CorpusError::LabelColumnRequired {
            path: path.to_path_buf(),
            split: name,
        });
    }

    let mut instances = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header line
        let record = record.map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            detail: format!("row {row}: {e}"),
        })?;
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(CorpusError::EmptyId { path: path.to_path_buf(), row });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                row,
                id,
            });
        }
        let text = record.get(text_col).unwrap_or("").to_string();
        let label = match label_col {
            None => None,
            Some(c) => {
                let raw = record.get(c).unwrap_or("");
                if raw.trim().is_empty() {
                    if require_labels {
                        return Err(CorpusError::MissingLabel {
                            path: path.to_path_buf(),
                            row,
                            id,
                            split: name,
                        });
                    }
                    None
                } else {
                    Some(Label::parse(raw).ok_or_else(|| CorpusError::UnknownLabel {
                        path: path.to_path_buf(),
                        row,
                        id: id.clone(),
                        raw: raw.to_string(),
                    })?)
                }
            }
        };
        instances.push(TextInstance { id, text, label });
    }

    Ok(DatasetSplit { name, instances })
}

/// Writes a split back in the corpus schema. The label column is included
/// exactly when `with_labels` is set; unlabeled instances then get an
/// empty label field.
pub fn write_split<W: Write>(split: &DatasetSplit, with_labels: bool, out: W) -> Result<(), CorpusError> {
    let mut writer = csv::Writer::from_writer(out);
    let header: &[&str] = if with_labels { &["id", "text", "label"] } else { &["id", "text"] };
    let as_write_err = |e: csv::Error| CorpusError::Write {
        path: PathBuf::from("<writer>"),
        detail: e.to_string(),
    };
    writer.write_record(header).map_err(as_write_err)?;
    for inst in &split.instances {
        if with_labels {
            let label = inst.label.map(|l| l.as_str()).unwrap_or("");
            writer
                .write_record([inst.id.as_str(), inst.text.as_str(), label])
                .map_err(as_write_err)?;
        } else {
            writer
                .write_record([inst.id.as_str(), inst.text.as_str()])
                .map_err(as_write_err)?;
        }
    }
    writer.flush().map_err(|e| CorpusError::Write {
        path: PathBuf::from("<writer>"),
        detail: e.to_string(),
    })?;
    Ok(())
}

/// Exact label tally. Unlabeled instances count toward `total` only.
pub fn split_statistics(split: &DatasetSplit) -> ClassCounts {
    let mut counts = ClassCounts::new(split.len(), 0, 0);
    for inst in &split.instances {
        match inst.label {
            Some(Label::Hope) => counts.hope += 1,
            Some(Label::NotHope) => counts.not_hope += 1,
            None => {}
        }
    }
    counts
}

/// One field that disagreed during count verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CountDiff {
    pub field: &'static str,
    pub actual: usize,
    pub expected: usize,
}

/// Result of checking observed counts against a reference row.
/// Mismatches are reported, never raised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub pass: bool,
    pub actual: ClassCounts,
    pub expected: ClassCounts,
    pub diffs: Vec<CountDiff>,
}

impl VerificationReport {
    /// Machine-readable key-value form for CI logs.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("pass={}\n", self.pass));
        for (field, a, e) in [
            ("total", self.actual.total, self.expected.total),
            ("hope", self.actual.hope, self.expected.hope),
            ("not_hope", self.actual.not_hope, self.expected.not_hope),
        ] {
            out.push_str(&format!("{field}.actual={a}\n{field}.expected={e}\n"));
        }
        for diff in &self.diffs {
            out.push_str(&format!(
                "diff.{}={:+}\n",
                diff.field,
                diff.actual as i64 - diff.expected as i64
            ));
        }
        out
    }
}

/// Compares observed counts against expected ones, field by field.
pub fn verify_expected_counts(stats: ClassCounts, expected: ClassCounts) -> VerificationReport {
    let mut diffs = Vec::new();
    for (field, actual, exp) in [
        ("total", stats.total, expected.total),
        ("hope", stats.hope, expected.hope),
        ("not_hope", stats.not_hope, expected.not_hope),
    ] {
        if actual != exp {
            diffs.push(CountDiff { field, actual, expected: exp });
        }
    }
    VerificationReport {
        pass: diffs.is_empty(),
        actual: stats,
        expected,
        diffs,
    }
}

/// Published reference statistics for the PolyHope English and German
/// splits, used to guard against corrupted or truncated downloads. Test
/// splits are distributed unlabeled, so their class counts are zero.
pub mod expected {
    use super::ClassCounts;

    pub const POLYHOPE_EN_TRAIN: ClassCounts = ClassCounts::new(4541, 2296, 2245);
    pub const POLYHOPE_EN_DEV: ClassCounts = ClassCounts::new(1650, 834, 816);
    pub const POLYHOPE_EN_TEST: ClassCounts = ClassCounts::new(2065, 0, 0);
    pub const POLYHOPE_DE_TRAIN: ClassCounts = ClassCounts::new(11573, 4924, 6649);
    pub const POLYHOPE_DE_DEV: ClassCounts = ClassCounts::new(4208, 1790, 2418);
    pub const POLYHOPE_DE_TEST: ClassCounts = ClassCounts::new(5262, 0, 0);

    /// All reference rows keyed by the name the `stats --expect` flag takes.
    pub const ALL: [(&str, ClassCounts); 6] = [
        ("polyhope-en-train", POLYHOPE_EN_TRAIN),
        ("polyhope-en-dev", POLYHOPE_EN_DEV),
        ("polyhope-en-test", POLYHOPE_EN_TEST),
        ("polyhope-de-train", POLYHOPE_DE_TRAIN),
        ("polyhope-de-dev", POLYHOPE_DE_DEV),
        ("polyhope-de-test", POLYHOPE_DE_TEST),
    ];

    pub fn lookup(key: &str) -> Option<ClassCounts> {
        ALL.iter().find(|(k, _)| *k == key).map(|(_, c)| *c)
    }
}

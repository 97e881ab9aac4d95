//! Subword encoding: cleaned text in, token ids and attention masks out.
//!
//! A [`TokenizerHandle`] wraps a pretrained byte-level BPE vocabulary
//! (see [`bpe`]) together with the special-token ids the classifier
//! needs. [`encode`] produces sentinel-wrapped, truncated id sequences
//! for one instance; [`batch_encode`] right-pads a batch to its longest
//! member so the sequences can be stacked into one tensor.

pub mod bpe;

use std::path::Path;

use crate::textclean::CleanText;
use bpe::{BpeError, BpeVocab, BOS_TOKEN, EOS_TOKEN, PAD_TOKEN, UNK_TOKEN};

/// A loaded tokenizer: vocabulary, merges, and resolved special ids.
///
/// Read-only after construction, so shared references can encode in
/// parallel. English and German runs differ only in which vocabulary
/// directory the handle is loaded from.
#[derive(Debug, Clone)]
pub struct TokenizerHandle {
    model_id: String,
    vocab: BpeVocab,
    pad_id: u32,
    bos_id: u32,
    eos_id: u32,
    unk_id: u32,
}

impl TokenizerHandle {
    /// Loads `vocab.json` + `merges.txt` from a model directory and
    /// resolves the `<s>` / `</s>` / `<pad>` / `<unk>` special tokens.
    pub fn from_dir(model_id: impl Into<String>, dir: &Path) -> Result<Self, BpeError> {
        let vocab = BpeVocab::from_dir(dir)?;
        let bos_id = vocab.special_id(BOS_TOKEN)?;
        let eos_id = vocab.special_id(EOS_TOKEN)?;
        let pad_id = vocab.special_id(PAD_TOKEN)?;
        let unk_id = vocab.special_id(UNK_TOKEN)?;
        Ok(Self {
            model_id: model_id.into(),
            vocab,
            pad_id,
            bos_id,
            eos_id,
            unk_id,
        })
    }

    /// Builds a small character-level vocabulary covering exactly the
    /// cleaned-text alphabet (a-z, umlauts, ß, space), with no merges.
    /// Meant for tests and the bundled overfit corpus, where a real
    /// pretrained vocabulary would be overkill.
    pub fn toy() -> Self {
        let mut tokens: Vec<String> = vec![
            BOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
            PAD_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
        ];
        // One token per byte symbol that cleaned text can produce.
        let probe = BpeVocab::new(Default::default(), Vec::new());
        let mut seen = std::collections::BTreeSet::new();
        for ch in "abcdefghijklmnopqrstuvwxyzäöüß ".chars() {
            let mut buf = [0u8; 4];
            for &b in ch.encode_utf8(&mut buf).as_bytes() {
                seen.insert(probe.byte_symbol(b));
            }
        }
        tokens.extend(seen.into_iter().map(|c| c.to_string()));
        let map = tokens
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i as u32))
            .collect();
        let vocab = BpeVocab::new(map, Vec::new());
        Self {
            model_id: "toy-char".to_string(),
            bos_id: vocab.special_id(BOS_TOKEN).unwrap(),
            eos_id: vocab.special_id(EOS_TOKEN).unwrap(),
            pad_id: vocab.special_id(PAD_TOKEN).unwrap(),
            unk_id: vocab.special_id(UNK_TOKEN).unwrap(),
            vocab,
        }
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.vocab_size()
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    pub fn bos_id(&self) -> u32 {
        self.bos_id
    }

    pub fn eos_id(&self) -> u32 {
        self.eos_id
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    /// Maps ids back to text, dropping special tokens.
    pub fn decode(&self, ids: &[u32]) -> String {
        self.vocab.decode(ids)
    }
}

/// One encoded instance: ids, mask, and the count of real positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    /// Number of non-pad positions; equals the mask sum.
    pub length: usize,
}

/// Encodes one cleaned text: subword ids wrapped in the begin/end
/// sentinels, truncated so the total never exceeds `max_len` (the body
/// is cut to `max_len - 2`, keeping the leading tokens). No padding is
/// applied at the single-example level.
///
/// Encoding is total here: cleaned text is valid UTF-8 and the
/// byte-level vocabulary falls back to `unk` for unseen symbols, so
/// there is no failure path.
///
/// # Panics
/// If `max_len < 2` — there must be room for both sentinels.
pub fn encode(text: &CleanText, tok: &TokenizerHandle, max_len: usize) -> Encoding {
    assert!(max_len >= 2, "max_len must be >= 2, got {max_len}");
    let mut body = tok.vocab.tokenize(text.as_str(), tok.unk_id);
    body.truncate(max_len - 2);
    let mut input_ids = Vec::with_capacity(body.len() + 2);
    input_ids.push(tok.bos_id);
    input_ids.extend(body);
    input_ids.push(tok.eos_id);
    let length = input_ids.len();
    Encoding {
        attention_mask: vec![1; length],
        input_ids,
        length,
    }
}

/// Encodes a batch and right-pads every member with `pad_id` (mask 0)
/// to the longest length in the batch.
///
/// # Panics
/// If the batch is empty or `max_len < 2`.
pub fn batch_encode(texts: &[CleanText], tok: &TokenizerHandle, max_len: usize) -> Vec<Encoding> {
    assert!(!texts.is_empty(), "batch_encode requires a non-empty batch");
    let encodings: Vec<Encoding> = texts.iter().map(|t| encode(t, tok, max_len)).collect();
    pad_batch(&encodings, tok.pad_id)
}

/// Right-pads already-encoded instances with `pad_id` (mask 0) to the
/// longest length among them. The training loop encodes each instance
/// once up front and pads per mini-batch through this.
pub fn pad_batch<'a>(
    encodings: impl IntoIterator<Item = &'a Encoding>,
    pad_id: u32,
) -> Vec<Encoding> {
    let members: Vec<&Encoding> = encodings.into_iter().collect();
    let widest = members.iter().map(|e| e.length).max().unwrap_or(0);
    members
        .into_iter()
        .map(|e| {
            let mut padded = e.clone();
            padded.input_ids.resize(widest, pad_id);
            padded.attention_mask.resize(widest, 0);
            padded
        })
        .collect()
}

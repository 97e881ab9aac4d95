//! Byte-level byte-pair encoding over a pretrained vocabulary.
//!
//! Consumes the standard `vocab.json` + `merges.txt` pair: bytes are first
//! mapped into a printable unicode alphabet, words are then merged
//! greedily by merge rank, and the resulting symbols are looked up in the
//! vocabulary. Pre-tokenization splits on spaces and attaches each space
//! to the following word, which is exact for cleaned text (lowercase
//! letters, umlauts, single spaces).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("tokenizer file not found: {0}")]
    MissingFile(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed vocabulary in {path}: {detail}")]
    MalformedVocab { path: PathBuf, detail: String },
    #[error("malformed merges line {line} in {path}: '{content}'")]
    MalformedMerges {
        path: PathBuf,
        line: usize,
        content: String,
    },
    #[error("special token '{0}' is missing from the vocabulary")]
    MissingSpecial(&'static str),
}

/// Special token forms used by the RoBERTa vocabulary family.
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Maps every byte to a printable char, the reversible scheme byte-level
/// BPE vocabularies are written in. Printable bytes map to themselves;
/// the rest are shifted past U+00FF (space 0x20 becomes 'Ġ', U+0120).
fn byte_to_unicode_table() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut shift = 0u32;
    for b in 0usize..256 {
        let printable = (0x21..=0x7e).contains(&b) || (0xa1..=0xac).contains(&b) || (0xae..=0xff).contains(&b);
        if printable {
            table[b] = char::from_u32(b as u32).unwrap();
        } else {
            table[b] = char::from_u32(0x100 + shift).unwrap();
            shift += 1;
        }
    }
    table
}

/// A loaded byte-level BPE vocabulary with its merge ranks.
#[derive(Debug, Clone)]
pub struct BpeVocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: HashMap<u32, String>,
    /// (left, right) -> rank; lower rank merges first.
    merges: HashMap<(String, String), usize>,
    byte_to_char: [char; 256],
    char_to_byte: HashMap<char, u8>,
}

impl BpeVocab {
    pub fn new(
        token_to_id: HashMap<String, u32>,
        merge_pairs: Vec<(String, String)>,
    ) -> Self {
        let byte_to_char = byte_to_unicode_table();
        let char_to_byte = byte_to_char
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect();
        let id_to_token = token_to_id.iter().map(|(t, &i)| (i, t.clone())).collect();
        let merges = merge_pairs
            .into_iter()
            .enumerate()
            .map(|(rank, pair)| (pair, rank))
            .collect();
        Self {
            token_to_id,
            id_to_token,
            merges,
            byte_to_char,
            char_to_byte,
        }
    }

    /// Loads `vocab.json` and `merges.txt` from a model directory.
    pub fn from_dir(dir: &Path) -> Result<Self, BpeError> {
        let vocab_path = dir.join("vocab.json");
        let merges_path = dir.join("merges.txt");
        for p in [&vocab_path, &merges_path] {
            if !p.exists() {
                return Err(BpeError::MissingFile(p.clone()));
            }
        }
        let vocab_raw = std::fs::read_to_string(&vocab_path).map_err(|source| BpeError::Io {
            path: vocab_path.clone(),
            source,
        })?;
        let token_to_id: HashMap<String, u32> =
            serde_json::from_str(&vocab_raw).map_err(|e| BpeError::MalformedVocab {
                path: vocab_path.clone(),
                detail: e.to_string(),
            })?;

        let merges_raw = std::fs::read_to_string(&merges_path).map_err(|source| BpeError::Io {
            path: merges_path.clone(),
            source,
        })?;
        let mut merge_pairs = Vec::new();
        for (i, line) in merges_raw.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || (i == 0 && line.starts_with("#version")) {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => merge_pairs.push((a.to_string(), b.to_string())),
                _ => {
                    return Err(BpeError::MalformedMerges {
                        path: merges_path.clone(),
                        line: i + 1,
                        content: line.to_string(),
                    })
                }
            }
        }
        Ok(Self::new(token_to_id, merge_pairs))
    }

    pub fn vocab_size(&self) -> usize {
        self.token_to_id.len()
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    /// The printable char one byte maps to under the byte-level scheme.
    pub fn byte_symbol(&self, byte: u8) -> char {
        self.byte_to_char[byte as usize]
    }

    /// Id of a special token, or an error naming the missing form.
    pub fn special_id(&self, token: &'static str) -> Result<u32, BpeError> {
        self.token_id(token).ok_or(BpeError::MissingSpecial(token))
    }

    /// Splits text into pre-tokens: the first word bare, every following
    /// word carrying its leading space, matching how byte-level
    /// vocabularies store mid-sentence words ("Ġhope").
    fn pre_tokenize<'a>(&self, text: &'a str) -> Vec<(bool, &'a str)> {
        let mut out = Vec::new();
        for (i, word) in text.split(' ').filter(|w| !w.is_empty()).enumerate() {
            out.push((i > 0, word));
        }
        out
    }

    /// Runs the merge loop on one pre-token and returns vocabulary ids,
    /// falling back to `unk` for symbols outside the vocabulary.
    fn bpe_word(&self, word: &str, leading_space: bool, unk_id: u32) -> Vec<u32> {
        let mut symbols: Vec<String> = Vec::new();
        if leading_space {
            symbols.push(self.byte_to_char[b' ' as usize].to_string());
        }
        for byte in word.bytes() {
            symbols.push(self.byte_to_char[byte as usize].to_string());
        }
        loop {
            let mut best: Option<(usize, usize)> = None; // (rank, position)
            for i in 0..symbols.len().saturating_sub(1) {
                let pair = (symbols[i].clone(), symbols[i + 1].clone());
                if let Some(&rank) = self.merges.get(&pair) {
                    if best.map_or(true, |(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((_, at)) = best else { break };
            // Merge every occurrence of the winning pair, left to right.
            let (left, right) = (symbols[at].clone(), symbols[at + 1].clone());
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(symbols[i].clone());
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
            .iter()
            .map(|s| self.token_id(s).unwrap_or(unk_id))
            .collect()
    }

    /// Tokenizes text into vocabulary ids, without sentinel tokens.
    pub fn tokenize(&self, text: &str, unk_id: u32) -> Vec<u32> {
        let mut ids = Vec::new();
        for (leading_space, word) in self.pre_tokenize(text) {
            ids.extend(self.bpe_word(word, leading_space, unk_id));
        }
        ids
    }

    /// Maps ids back to text: tokens -> chars -> bytes -> UTF-8 (lossy).
    /// Unknown ids and special tokens render as empty.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut bytes = Vec::new();
        for id in ids {
            let Some(token) = self.id_to_token.get(id) else { continue };
            if token.starts_with('<') && token.ends_with('>') {
                continue;
            }
            for c in token.chars() {
                if let Some(&b) = self.char_to_byte.get(&c) {
                    bytes.push(b);
                }
            }
        }
        String::from_utf8_lossy(&bytes).into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_vocab() -> BpeVocab {
        // Byte symbols for h/o/p/e plus merged forms and a space variant.
        let tokens = [
            ("<s>", 0u32),
            ("</s>", 1),
            ("<pad>", 2),
            ("<unk>", 3),
            ("h", 4),
            ("o", 5),
            ("p", 6),
            ("e", 7),
            ("ho", 8),
            ("pe", 9),
            ("hope", 10),
            ("Ġ", 11),
            ("Ġhope", 12),
        ];
        let vocab: HashMap<String, u32> =
            tokens.iter().map(|(t, i)| (t.to_string(), *i)).collect();
        let merges = vec![
            ("h".to_string(), "o".to_string()),
            ("p".to_string(), "e".to_string()),
            ("ho".to_string(), "pe".to_string()),
            ("Ġ".to_string(), "hope".to_string()),
        ];
        BpeVocab::new(vocab, merges)
    }

    #[test]
    fn byte_table_matches_known_anchors() {
        let table = byte_to_unicode_table();
        assert_eq!(table[b' ' as usize], 'Ġ');
        assert_eq!(table[b'a' as usize], 'a');
        assert_eq!(table[b'!' as usize], '!');
        assert_eq!(table[0xc3], 'Ã');
        assert_eq!(table[0xa4], '¤');
        // All 256 outputs distinct.
        let mut seen: Vec<char> = table.to_vec();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 256);
    }

    #[test]
    fn merges_apply_in_rank_order() {
        let vocab = tiny_vocab();
        assert_eq!(vocab.tokenize("hope", 3), vec![10]);
        assert_eq!(vocab.tokenize("hope hope", 3), vec![10, 12]);
        // 'ep' has no merge: e p stay separate symbols.
        assert_eq!(vocab.tokenize("ep", 3), vec![7, 6]);
    }

    #[test]
    fn unknown_symbols_fall_back_to_unk() {
        let vocab = tiny_vocab();
        assert_eq!(vocab.tokenize("hz", 3), vec![4, 3]);
    }

    #[test]
    fn decode_round_trips_cleaned_text() {
        let vocab = tiny_vocab();
        let ids = vocab.tokenize("hope hope", 3);
        assert_eq!(vocab.decode(&ids), "hope hope");
    }

    #[test]
    fn decode_skips_specials_and_unknown_ids() {
        let vocab = tiny_vocab();
        assert_eq!(vocab.decode(&[0, 10, 1, 99]), "hope");
    }

    #[test]
    fn loads_from_directory_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("vocab.json"),
            r#"{"<s>":0,"</s>":1,"<pad>":2,"<unk>":3,"a":4,"b":5,"ab":6}"#,
        )
        .unwrap();
        std::fs::write(dir.path().join("merges.txt"), "#version: 0.2\na b\n").unwrap();
        let vocab = BpeVocab::from_dir(dir.path()).unwrap();
        assert_eq!(vocab.vocab_size(), 7);
        assert_eq!(vocab.tokenize("ab", 3), vec![6]);
        assert_eq!(vocab.special_id(PAD_TOKEN).unwrap(), 2);
    }

    #[test]
    fn malformed_merges_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("vocab.json"), r#"{"<s>":0}"#).unwrap();
        std::fs::write(dir.path().join("merges.txt"), "a b c\n").unwrap();
        let err = BpeVocab::from_dir(dir.path()).unwrap_err();
        assert!(matches!(err, BpeError::MalformedMerges { line: 1, .. }));
    }

    #[test]
    fn missing_files_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let err = BpeVocab::from_dir(dir.path()).unwrap_err();
        assert!(matches!(err, BpeError::MissingFile(_)));
    }

    #[test]
    fn umlauts_tokenize_through_byte_symbols() {
        // 'ä' is 0xC3 0xA4 -> symbols "Ã" "¤"; with a merge they fuse.
        let tokens = [
            ("<unk>", 0u32),
            ("Ã", 1),
            ("¤", 2),
            ("Ã¤", 3),
            ("g", 4),
        ];
        let vocab: HashMap<String, u32> =
            tokens.iter().map(|(t, i)| (t.to_string(), *i)).collect();
        let merges = vec![("Ã".to_string(), "¤".to_string())];
        let v = BpeVocab::new(vocab, merges);
        assert_eq!(v.tokenize("gä", 0), vec![4, 3]);
        assert_eq!(v.decode(&[4, 3]), "gä");
    }
}

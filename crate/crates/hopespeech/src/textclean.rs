//! Social-media text cleaning: lowercasing, URL removal, and a
//! German-compatible letter filter.
//!
//! The pipeline order is fixed: [`lowercase`] -> [`strip_urls`] ->
//! [`strip_non_letters`] -> [`normalize_whitespace`]. URL stripping has to
//! run before the letter filter, otherwise URL bodies leak back in as
//! letter runs ("httpstcoabc").

use serde::{Deserialize, Serialize};

/// Text that has passed the full cleaning pipeline.
///
/// Holds only lowercase basic Latin letters, the German letters
/// ä ö ü ß, and single interior spaces. No leading/trailing whitespace.
/// The only way to build one is [`clean`], which establishes the invariant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CleanText(String);

impl CleanText {
    /// The cleaned string.
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when cleaning removed everything.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl std::fmt::Display for CleanText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Letters the filter keeps, lowercase and uppercase forms.
fn is_allowed_letter(c: char) -> bool {
    c.is_ascii_alphabetic() || matches!(c, 'ä' | 'ö' | 'ü' | 'ß' | 'Ä' | 'Ö' | 'Ü')
}

/// True if `s` already satisfies the [`CleanText`] invariant.
pub fn is_clean(s: &str) -> bool {
    let ok_chars = s
        .chars()
        .all(|c| c == ' ' || (is_allowed_letter(c) && !c.is_uppercase()));
    ok_chars && s == normalize_whitespace(s)
}

/// Unicode-aware lowercasing of every character (Ä -> ä, Ö -> ö, Ü -> ü).
pub fn lowercase(text: &str) -> String {
    text.to_lowercase()
}

/// Deletes every maximal non-whitespace token that begins with `http://`,
/// `https://`, or `www.`. Whitespace and all other text stay untouched, so
/// "see https://t.co/x now" keeps its two spaces until
/// [`normalize_whitespace`] runs.
pub fn strip_urls(text: &str) -> String {
    const PREFIXES: [&str; 3] = ["http://", "https://", "www."];
    let mut out = String::with_capacity(text.len());
    let mut token = String::new();
    let flush = |token: &mut String, out: &mut String| {
        if !PREFIXES.iter().any(|p| token.starts_with(p)) {
            out.push_str(token);
        }
        token.clear();
    };
    for c in text.chars() {
        if c.is_whitespace() {
            flush(&mut token, &mut out);
            out.push(c);
        } else {
            token.push(c);
        }
    }
    flush(&mut token, &mut out);
    out
}

/// Deletes every character that is neither an allowed letter nor
/// whitespace. One rule covers punctuation, digits, symbols, and emoji.
/// Removed characters leave no space behind, so "a+b" fuses to "ab".
pub fn strip_non_letters(text: &str) -> String {
    text.chars()
        .filter(|&c| c.is_whitespace() || is_allowed_letter(c))
        .collect()
}

/// Collapses every whitespace run to a single space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Runs the full cleaning pipeline.
///
/// Texts that clean down to nothing are kept as empty [`CleanText`] so ids
/// stay aligned with predictions; callers flag them instead of dropping.
pub fn clean(text: &str) -> CleanText {
    let lowered = lowercase(text);
    let no_urls = strip_urls(&lowered);
    let letters = strip_non_letters(&no_urls);
    CleanText(normalize_whitespace(&letters))
}

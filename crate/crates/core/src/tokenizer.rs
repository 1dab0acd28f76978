//! Comment normalization, WordPiece segmentation and fixed-length framing.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const MENTION: &str = "@mention";

/// Words longer than this (in chars) map straight to `[UNK]`.
pub const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizerError {
    #[error("vocabulary is empty")]
    EmptyVocab,
    #[error("duplicate vocabulary token `{token}` at line {line}")]
    DuplicateToken { token: String, line: usize },
    #[error("vocabulary lacks required token {0}")]
    MissingSpecial(&'static str),
    #[error("max_len {0} leaves no room for [CLS], [SEP] and content")]
    MaxLenTooSmall(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub max_len: usize,
    pub continuation_prefix: String,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            max_len: 200,
            continuation_prefix: "##".to_string(),
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<(), TokenizerError> {
        if self.max_len < 3 {
            return Err(TokenizerError::MaxLenTooSmall(self.max_len));
        }
        Ok(())
    }

    /// Content tokens that fit between `[CLS]` and `[SEP]`.
    pub fn content_capacity(&self) -> usize {
        self.max_len.saturating_sub(2)
    }
}

/// Token ↔ id table. Ids are line numbers of the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: BTreeMap<String, u32>,
    cls: u32,
    sep: u32,
    pad: u32,
    unk: u32,
    mention: u32,
}

impl Vocabulary {
    /// Build from tokens in id order. `@mention` is appended when absent.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if list.is_empty() {
            return Err(TokenizerError::EmptyVocab);
        }
        let mut ids = BTreeMap::new();
        for (line, tok) in list.iter().enumerate() {
            if ids.insert(tok.clone(), line as u32).is_some() {
                return Err(TokenizerError::DuplicateToken {
                    token: tok.clone(),
                    line: line + 1,
                });
            }
        }
        if !ids.contains_key(MENTION) {
            ids.insert(MENTION.to_string(), list.len() as u32);
            list.push(MENTION.to_string());
        }
        let special = |name: &'static str| {
            ids.get(name)
                .copied()
                .ok_or(TokenizerError::MissingSpecial(name))
        };
        Ok(Vocabulary {
            cls: special(CLS)?,
            sep: special(SEP)?,
            pad: special(PAD)?,
            unk: special(UNK)?,
            mention: special(MENTION)?,
            tokens: list,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }
    pub fn sep_id(&self) -> u32 {
        self.sep
    }
    pub fn pad_id(&self) -> u32 {
        self.pad
    }
    pub fn unk_id(&self) -> u32 {
        self.unk
    }
    pub fn mention_id(&self) -> u32 {
        self.mention
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Punctuation that the basic tokenizer isolates: ASCII punctuation plus the
/// common Unicode punctuation blocks.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c, '¡' | '¿' | '«' | '»' | '·' | '§' | '¶')
        || ('\u{2000}'..='\u{206F}').contains(&c) && !c.is_whitespace()
        || ('\u{3000}'..='\u{303F}').contains(&c) && !c.is_whitespace()
}

/// Replace every `@handle` with `@mention`, optionally lowercase, collapse
/// whitespace runs and trim.
pub fn normalize(text: &str, cfg: &TokenizerConfig) -> String {
    let mut replaced = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '@' && chars.peek().copied().is_some_and(is_word_char) {
            while chars.peek().copied().is_some_and(is_word_char) {
                chars.next();
            }
            replaced.push_str(MENTION);
        } else {
            replaced.push(c);
        }
    }
    let cased = if cfg.lowercase {
        replaced.to_lowercase()
    } else {
        replaced
    };
    let mut out = String::with_capacity(cased.len());
    for word in cased.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Split normalized text into words: whitespace boundaries, with punctuation
/// isolated into single-character words. `@mention` is never split.
pub fn pre_tokenize(normalized: &str) -> Vec<&str> {
    let mut words = Vec::new();
    for chunk in normalized.split_whitespace() {
        let mut start = 0;
        let mut iter = chunk.char_indices().peekable();
        while let Some((i, c)) = iter.next() {
            if c == '@' && chunk[i..].starts_with(MENTION) {
                let end = i + MENTION.len();
                if !chunk[end..].chars().next().is_some_and(is_word_char) {
                    if start < i {
                        words.push(&chunk[start..i]);
                    }
                    words.push(&chunk[i..end]);
                    while iter.peek().is_some_and(|(j, _)| *j < end) {
                        iter.next();
                    }
                    start = end;
                    continue;
                }
            }
            if is_punctuation(c) {
                if start < i {
                    words.push(&chunk[start..i]);
                }
                let end = i + c.len_utf8();
                words.push(&chunk[i..end]);
                start = end;
            }
        }
        if start < chunk.len() {
            words.push(&chunk[start..]);
        }
    }
    words
}

/// Greedy longest-match-first segmentation of a single word.
pub fn wordpiece(word: &str, vocab: &Vocabulary, cfg: &TokenizerConfig) -> Vec<String> {
    wordpiece_ids(word, vocab, cfg)
        .into_iter()
        .map(|id| vocab.token(id).unwrap_or(UNK).to_string())
        .collect()
}

pub fn wordpiece_ids(word: &str, vocab: &Vocabulary, cfg: &TokenizerConfig) -> Vec<u32> {
    if word.chars().count() > MAX_WORD_CHARS {
        return alloc::vec![vocab.unk_id()];
    }
    if let Some(id) = vocab.id(word) {
        return alloc::vec![id];
    }
    let boundaries: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain([word.len()])
        .collect();
    let mut pieces = Vec::new();
    let mut candidate = String::new();
    let mut start = 0;
    while start + 1 < boundaries.len() {
        let mut found = None;
        for end in (start + 1..boundaries.len()).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(&cfg.continuation_prefix);
            }
            candidate.push_str(&word[boundaries[start]..boundaries[end]]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some((id, end));
                break;
            }
        }
        match found {
            Some((id, end)) => {
                pieces.push(id);
                start = end;
            }
            None => return alloc::vec![vocab.unk_id()],
        }
    }
    pieces
}

/// Content token ids of a comment before truncation.
pub fn content_ids(text: &str, vocab: &Vocabulary, cfg: &TokenizerConfig) -> Vec<u32> {
    let normalized = normalize(text, cfg);
    pre_tokenize(&normalized)
        .into_iter()
        .flat_map(|w| wordpiece_ids(w, vocab, cfg))
        .collect()
}

/// A framed encoder input: `[CLS] content [SEP] [PAD]...` of exactly
/// `max_len` ids, with matching attention mask and all-zero segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub segments: Vec<u32>,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of real (unmasked) positions, `[CLS]` and `[SEP]` included.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    /// Frame pre-computed content ids, truncating to `max_len - 2`.
    pub fn frame(content: &[u32], vocab: &Vocabulary, max_len: usize) -> Self {
        let keep = content.len().min(max_len.saturating_sub(2));
        let mut ids = Vec::with_capacity(max_len);
        ids.push(vocab.cls_id());
        ids.extend_from_slice(&content[..keep]);
        ids.push(vocab.sep_id());
        let real = ids.len();
        ids.resize(max_len, vocab.pad_id());
        let mut mask = alloc::vec![1u8; real];
        mask.resize(max_len, 0);
        EncodedInput {
            ids,
            mask,
            segments: alloc::vec![0; max_len],
        }
    }
}

pub fn encode(text: &str, vocab: &Vocabulary, cfg: &TokenizerConfig) -> EncodedInput {
    EncodedInput::frame(&content_ids(text, vocab, cfg), vocab, cfg.max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn vocab(extra: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens([PAD, UNK, CLS, SEP].iter().chain(extra.iter()).copied()).unwrap()
    }

    #[test]
    fn vocab_construction() {
        let v = vocab(&["a", "b", "c", "d", "e", "f"]);
        assert_eq!(v.len(), 11);
        assert_eq!(v.mention_id(), 10);
        let v = vocab(&["a", "b", "c", "d", "e", MENTION]);
        assert_eq!(v.len(), 10);
        assert_eq!(v.mention_id(), 9);
        assert!(matches!(
            Vocabulary::from_tokens([PAD, UNK, CLS, SEP, "a", "a"]),
            Err(TokenizerError::DuplicateToken { line: 6, .. })
        ));
        assert_eq!(
            Vocabulary::from_tokens(Vec::<String>::new()),
            Err(TokenizerError::EmptyVocab)
        );
        assert_eq!(
            Vocabulary::from_tokens([PAD, UNK, CLS]),
            Err(TokenizerError::MissingSpecial(SEP))
        );
    }

    #[test]
    fn normalize_examples() {
        let cfg = TokenizerConfig::default();
        assert_eq!(
            normalize("Dear, @MyCompany, my WiFi is down", &cfg),
            "dear, @mention, my wifi is down"
        );
        assert_eq!(normalize("", &cfg), "");
        assert_eq!(normalize("@a @b hi", &cfg), "@mention @mention hi");
        assert_eq!(normalize("  lots\t of \n space ", &cfg), "lots of space");
        let cased = TokenizerConfig {
            lowercase: false,
            ..cfg
        };
        assert_eq!(normalize("Ciao @Tim_99!", &cased), "Ciao @mention!");
        assert_eq!(normalize("a @ b", &cased), "a @ b");
    }

    #[test]
    fn pre_tokenize_isolates_punctuation_but_keeps_mention() {
        assert_eq!(
            pre_tokenize("dear, @mention, my wifi is down!"),
            vec!["dear", ",", "@mention", ",", "my", "wifi", "is", "down", "!"]
        );
        assert_eq!(pre_tokenize("x@mention."), vec!["x", "@mention", "."]);
        assert_eq!(pre_tokenize("@mentions"), vec!["@", "mentions"]);
        assert_eq!(pre_tokenize("can't"), vec!["can", "'", "t"]);
    }

    #[test]
    fn wordpiece_examples() {
        let cfg = TokenizerConfig::default();
        let v = vocab(&["un", "##aff", "##able", "wifi"]);
        assert_eq!(wordpiece("wifi", &v, &cfg), vec!["wifi"]);
        assert_eq!(
            wordpiece("unaffable", &v, &cfg),
            vec!["un", "##aff", "##able"]
        );
        assert_eq!(wordpiece("unz", &v, &cfg), vec![UNK]);
        let long: String = core::iter::repeat_n('a', 101).collect();
        let v = vocab(&["a", "##a"]);
        assert_eq!(wordpiece(&long, &v, &cfg), vec![UNK]);
        assert_eq!(wordpiece(&long[..100], &v, &cfg).len(), 100);
    }

    #[test]
    fn encode_framing() {
        let v = vocab(&["my", "wifi", "down"]);
        let cfg = TokenizerConfig::default();
        let e = encode("my wifi down", &v, &cfg);
        assert_eq!(e.len(), 200);
        assert_eq!(e.real_len(), 5);
        assert_eq!(e.ids[0], v.cls_id());
        assert_eq!(e.ids[4], v.sep_id());
        assert!(e.ids[5..].iter().all(|&i| i == v.pad_id()));
        assert!(e.segments.iter().all(|&s| s == 0));

        let long = ["wifi"; 250].join(" ");
        let e = encode(&long, &v, &cfg);
        assert_eq!(e.real_len(), 200);
        assert_eq!(e.ids[199], v.sep_id());
        assert_eq!(
            e.ids[1..199]
                .iter()
                .filter(|&&i| i == v.id("wifi").unwrap())
                .count(),
            198
        );

        let e = encode("", &v, &cfg);
        assert_eq!(&e.ids[..2], &[v.cls_id(), v.sep_id()]);
        assert_eq!(e.ids[2..].len(), 198);
        assert!(e.ids[2..].iter().all(|&i| i == v.pad_id()));

        let e = encode("hey @bob", &v, &cfg);
        assert_eq!(e.ids[1..3], [v.unk_id(), v.mention_id()]);
    }

    #[test]
    fn config_validation() {
        let cfg = TokenizerConfig {
            max_len: 2,
            ..Default::default()
        };
        assert_eq!(cfg.validate(), Err(TokenizerError::MaxLenTooSmall(2)));
        assert!(TokenizerConfig::default().validate().is_ok());
    }
}

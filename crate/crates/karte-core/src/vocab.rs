//! Character-level vocabulary: a bijection between Unicode scalar values
//! and token ids, with fixed special symbols.
//!
//! Findings are tokenized one code point at a time -- no word splitting, no
//! grapheme clustering -- so CJK text needs no dictionary.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub const PAD: u32 = 0;
pub const START: u32 = 1;
pub const END: u32 = 2;
pub const UNK: u32 = 3;

/// Names used for the specials in the vocabulary file header and in
/// attention-trace token lists.
pub const SPECIAL_NAMES: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

#[derive(Debug, Clone, PartialEq)]
pub enum VocabError {
    EmptyCorpus,
    IdOutOfRange { id: u32, size: usize },
    MalformedFile { line: usize, detail: String },
}

impl fmt::Display for VocabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VocabError::EmptyCorpus => write!(f, "cannot build a vocabulary from an empty corpus"),
            VocabError::IdOutOfRange { id, size } => {
                write!(f, "token id {id} out of range for vocabulary size {size}")
            }
            VocabError::MalformedFile { line, detail } => {
                write!(f, "vocabulary file line {line}: {detail}")
            }
        }
    }
}

impl core::error::Error for VocabError {}

/// Immutable after construction; ids 0..=3 are the specials, characters
/// start at id 4 in first-occurrence order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    char_to_id: BTreeMap<char, u32>,
    id_to_char: Vec<char>, // index 0 holds the char for id 4
}

impl Vocabulary {
    /// Ids are assigned in first-occurrence order over the corpus strings.
    pub fn build(corpus: &[impl AsRef<str>]) -> Result<Self, VocabError> {
        if corpus.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        let mut char_to_id = BTreeMap::new();
        let mut id_to_char = Vec::new();
        for finding in corpus {
            for ch in finding.as_ref().chars() {
                if let alloc::collections::btree_map::Entry::Vacant(slot) = char_to_id.entry(ch) {
                    slot.insert(4 + id_to_char.len() as u32);
                    id_to_char.push(ch);
                }
            }
        }
        Ok(Vocabulary {
            char_to_id,
            id_to_char,
        })
    }

    /// Total size K including the four specials.
    pub fn size(&self) -> usize {
        4 + self.id_to_char.len()
    }

    pub fn id_of(&self, ch: char) -> Option<u32> {
        self.char_to_id.get(&ch).copied()
    }

    pub fn char_of(&self, id: u32) -> Option<char> {
        if id < 4 {
            None
        } else {
            self.id_to_char.get(id as usize - 4).copied()
        }
    }

    /// Display form of any token id: the character itself, or the special's
    /// angle-bracket name.
    pub fn display_token(&self, id: u32) -> String {
        if (id as usize) < 4 {
            String::from(SPECIAL_NAMES[id as usize])
        } else {
            self.char_of(id).map(String::from).unwrap_or_else(|| String::from("<bad>"))
        }
    }

    /// One token per Unicode scalar value; unknown characters become
    /// `<unk>`. `bounded` wraps the sequence in `<start>`/`<end>`.
    pub fn encode(&self, text: &str, bounded: bool) -> TokenSequence {
        let mut ids = Vec::with_capacity(text.chars().count() + 2);
        if bounded {
            ids.push(START);
        }
        for ch in text.chars() {
            ids.push(self.id_of(ch).unwrap_or(UNK));
        }
        if bounded {
            ids.push(END);
        }
        TokenSequence { ids, bounded }
    }

    /// Specials are omitted; generation is truncated at the first `<end>`.
    pub fn decode(&self, seq: &TokenSequence) -> Result<String, VocabError> {
        let mut out = String::new();
        for &id in &seq.ids {
            if id as usize >= self.size() {
                return Err(VocabError::IdOutOfRange {
                    id,
                    size: self.size(),
                });
            }
            if id == END {
                break;
            }
            if let Some(ch) = self.char_of(id) {
                out.push(ch);
            }
        }
        Ok(out)
    }

    /// Serialized form: four special header lines then one character per
    /// line, so the line number equals the id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for name in SPECIAL_NAMES {
            out.push_str(name);
            out.push('\n');
        }
        for &ch in &self.id_to_char {
            out.push(ch);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let mut char_to_id = BTreeMap::new();
        let mut id_to_char = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i < 4 {
                if line != SPECIAL_NAMES[i] {
                    return Err(VocabError::MalformedFile {
                        line: i + 1,
                        detail: alloc::format!("expected special `{}`, found `{line}`", SPECIAL_NAMES[i]),
                    });
                }
                continue;
            }
            let mut chars = line.chars();
            let ch = chars.next().ok_or(VocabError::MalformedFile {
                line: i + 1,
                detail: String::from("empty character line"),
            })?;
            if chars.next().is_some() {
                return Err(VocabError::MalformedFile {
                    line: i + 1,
                    detail: String::from("more than one character on a line"),
                });
            }
            let id = 4 + id_to_char.len() as u32;
            if char_to_id.insert(ch, id).is_some() {
                return Err(VocabError::MalformedFile {
                    line: i + 1,
                    detail: String::from("duplicate character"),
                });
            }
            id_to_char.push(ch);
        }
        if id_to_char.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        Ok(Vocabulary {
            char_to_id,
            id_to_char,
        })
    }
}

/// A list of token ids, optionally wrapped in `<start>`/`<end>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub bounded: bool,
}

impl TokenSequence {
    pub fn from_ids(ids: Vec<u32>, bounded: bool) -> Self {
        TokenSequence { ids, bounded }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of `<unk>` tokens, reported as a data-quality metric.
    pub fn unk_count(&self) -> usize {
        self.ids.iter().filter(|&&id| id == UNK).count()
    }

    /// True when the bounds invariant holds: first `<start>`, last `<end>`,
    /// neither occurring elsewhere.
    pub fn bounds_ok(&self) -> bool {
        if !self.bounded {
            return true;
        }
        if self.ids.len() < 2 || self.ids[0] != START || *self.ids.last().unwrap() != END {
            return false;
        }
        !self.ids[1..self.ids.len() - 1]
            .iter()
            .any(|&id| id == START || id == END)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn first_occurrence_order() {
        let v = Vocabulary::build(&["ab", "ba"]).unwrap();
        assert_eq!(v.size(), 6);
        assert_eq!(v.id_of('a'), Some(4));
        assert_eq!(v.id_of('b'), Some(5));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let corpus: [&str; 0] = [];
        assert_eq!(Vocabulary::build(&corpus), Err(VocabError::EmptyCorpus));
    }

    #[test]
    fn cjk_finding_counts_scalar_values() {
        // 7 distinct characters -> K = 11
        let v = Vocabulary::build(&["左上肺野異常影"]).unwrap();
        assert_eq!(v.size(), 11);
    }

    #[test]
    fn encode_bounded_empty_and_ab() {
        let v = Vocabulary::build(&["ab", "ba"]).unwrap();
        assert_eq!(v.encode("", true).ids, vec![START, END]);
        assert_eq!(v.encode("ab", true).ids, vec![1, 4, 5, 2]);
    }

    #[test]
    fn unknown_maps_to_unk_and_is_counted() {
        let v = Vocabulary::build(&["ab"]).unwrap();
        let seq = v.encode("axb", false);
        assert_eq!(seq.ids, vec![4, UNK, 5]);
        assert_eq!(seq.unk_count(), 1);
    }

    #[test]
    fn decode_skips_specials_and_truncates_at_end() {
        let v = Vocabulary::build(&["ab"]).unwrap();
        let empty = TokenSequence::from_ids(vec![START, END], true);
        assert_eq!(v.decode(&empty).unwrap(), "");
        let truncated = TokenSequence::from_ids(vec![START, 4, 5, END, 4], false);
        assert_eq!(v.decode(&truncated).unwrap(), "ab");
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let v = Vocabulary::build(&["ab"]).unwrap();
        let bad = TokenSequence::from_ids(vec![9], false);
        assert!(matches!(v.decode(&bad), Err(VocabError::IdOutOfRange { id: 9, .. })));
    }

    #[test]
    fn text_round_trip() {
        let v = Vocabulary::build(&["左上肺野異常影", "abc"]).unwrap();
        let text = v.to_text();
        let back = Vocabulary::from_text(&text).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn from_text_rejects_bad_header() {
        let err = Vocabulary::from_text("<pad>\n<start>\n<oops>\n<unk>\na\n").unwrap_err();
        assert!(matches!(err, VocabError::MalformedFile { line: 3, .. }));
    }

    #[test]
    fn bounds_invariant_detects_stray_specials() {
        let good = TokenSequence::from_ids(vec![START, 4, END], true);
        assert!(good.bounds_ok());
        let bad = TokenSequence::from_ids(vec![START, END, END], true);
        assert!(!bad.bounds_ok());
    }

    proptest! {
        // Round trip: decode(encode(s)) == s for in-vocabulary text, and the
        // unbounded token count equals the number of Unicode scalar values.
        #[test]
        fn encode_decode_round_trip(s in "[a-z肺野異常影左右上下円線輪状]{0,24}") {
            let corpus = ["abcdefghijklmnopqrstuvwxyz肺野異常影左右上下円線輪状"];
            let v = Vocabulary::build(&corpus).unwrap();
            let bounded = v.encode(&s, true);
            prop_assert!(bounded.bounds_ok());
            prop_assert_eq!(v.decode(&bounded).unwrap(), s.clone());
            let flat = v.encode(&s, false);
            prop_assert_eq!(flat.len(), s.chars().count());
        }
    }
}

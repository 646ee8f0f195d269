//! Character vocabulary and one-hot text quantization.
//!
//! The alphabet is the standard 69-symbol set used by character-level CNNs:
//!
//! ```text
//! abcdefghijklmnopqrstuvwxyz0123456789-,;.!?:'"/\|_@#$%^&*~`+=<>()[]{}
//! ```
//!
//! followed by the newline character. Anything else, including space, maps to
//! an all-zero column.

use std::collections::HashMap;

pub const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789-,;.!?:'\"/\\|_@#$%^&*~`+=<>()[]{}\n";
pub const VOCAB_SIZE: usize = 69;
pub const DEFAULT_WINDOW: usize = 1014;

const NONE: u8 = u8::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocabulary {
    chars: Vec<char>,
    index: HashMap<char, u8>,
}

impl Default for CharVocabulary {
    fn default() -> Self {
        Self::from_alphabet(ALPHABET).expect("standard alphabet is valid")
    }
}

impl CharVocabulary {
    /// Builds a vocabulary from an alphabet string of 69 distinct characters.
    pub fn from_alphabet(alphabet: &str) -> Option<Self> {
        let chars: Vec<char> = alphabet.chars().collect();
        let index: HashMap<char, u8> = chars.iter().enumerate().map(|(i, &c)| (c, i as u8)).collect();
        (chars.len() == VOCAB_SIZE && index.len() == VOCAB_SIZE).then_some(CharVocabulary { chars, index })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn row_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).map(|&i| usize::from(i))
    }

    pub fn char_at(&self, row: usize) -> Option<char> {
        self.chars.get(row).copied()
    }

    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }

    /// One-hot encodes lowercased `text` into `window` columns. Characters
    /// past the window are dropped, missing ones padded with zero columns.
    /// `reverse` reads the text backwards (last character in column 0).
    pub fn quantize(&self, text: &str, window: usize, reverse: bool) -> QuantizedText {
        let lowered = text.to_lowercase();
        let mut rows = vec![NONE; window];
        let encode = |c: char| self.index.get(&c).copied().unwrap_or(NONE);
        if reverse {
            for (slot, c) in rows.iter_mut().zip(lowered.chars().rev()) {
                *slot = encode(c);
            }
        } else {
            for (slot, c) in rows.iter_mut().zip(lowered.chars()) {
                *slot = encode(c);
            }
        }
        QuantizedText { rows }
    }
}

/// Forward-order quantization with the standard vocabulary and window.
pub fn quantize_text(text: &str, vocab: &CharVocabulary) -> QuantizedText {
    vocab.quantize(text, DEFAULT_WINDOW, false)
}

/// A `69 x window` binary matrix stored column-wise as the hot row per column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedText {
    rows: Vec<u8>,
}

impl QuantizedText {
    pub fn from_rows(rows: Vec<Option<usize>>) -> Self {
        QuantizedText {
            rows: rows
                .into_iter()
                .map(|r| r.map_or(NONE, |r| {
                    assert!(r < VOCAB_SIZE, "row {r} outside vocabulary");
                    r as u8
                }))
                .collect(),
        }
    }

    pub fn window(&self) -> usize {
        self.rows.len()
    }

    /// The hot row of column `col`, if any.
    pub fn row_at(&self, col: usize) -> Option<usize> {
        match self.rows[col] {
            NONE => None,
            r => Some(usize::from(r)),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.row_at(col) == Some(row)
    }

    pub fn nonzero_columns(&self) -> usize {
        self.rows.iter().filter(|&&r| r != NONE).count()
    }

    /// Dense row-major `69 x window` matrix of 0/1.
    pub fn to_dense(&self) -> Vec<u8> {
        let w = self.window();
        let mut m = vec![0u8; VOCAB_SIZE * w];
        for col in 0..w {
            if let Some(r) = self.row_at(col) {
                m[r * w + col] = 1;
            }
        }
        m
    }
}

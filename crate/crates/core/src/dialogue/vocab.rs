use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::unit_codec::ALPHABET;

/// Turn-structure and speech markers appended after the text characters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Special {
    TurnStart,
    TurnEnd,
    System,
    User,
    Assistant,
    SpeechStart,
    SpeechEnd,
    Speech,
}

impl Special {
    pub const ALL: [Special; 8] = [
        Special::TurnStart,
        Special::TurnEnd,
        Special::System,
        Special::User,
        Special::Assistant,
        Special::SpeechStart,
        Special::SpeechEnd,
        Special::Speech,
    ];

    pub fn surface(self) -> &'static str {
        match self {
            Special::TurnStart => "<|im_start|>",
            Special::TurnEnd => "<|im_end|>",
            Special::System => "system",
            Special::User => "user",
            Special::Assistant => "assistant",
            Special::SpeechStart => "<sosp>",
            Special::SpeechEnd => "<eosp>",
            Special::Speech => "<speech>",
        }
    }
}

/// Character-level text vocabulary extended with [`Special`] tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    chars: Vec<char>,
    index: HashMap<char, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new(ALPHABET)
    }
}

impl Vocabulary {
    pub fn new(alphabet: &str) -> Self {
        let mut chars: Vec<char> = alphabet.chars().collect();
        chars.sort_unstable();
        chars.dedup();
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        Self { chars, index }
    }

    pub fn text_size(&self) -> usize {
        self.chars.len()
    }

    /// Total vocabulary size `N`.
    pub fn size(&self) -> usize {
        self.chars.len() + Special::ALL.len()
    }

    pub fn special(&self, s: Special) -> u32 {
        let offset = Special::ALL.iter().position(|&x| x == s).expect("listed");
        (self.chars.len() + offset) as u32
    }

    pub fn as_special(&self, id: u32) -> Option<Special> {
        let id = id as usize;
        id.checked_sub(self.chars.len())
            .and_then(|i| Special::ALL.get(i).copied())
    }

    pub fn char_of(&self, id: u32) -> Option<char> {
        self.chars.get(id as usize).copied()
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<u32>> {
        text.chars()
            .map(|c| self.index.get(&c).copied().ok_or(Error::UnknownTextCharacter(c)))
            .collect()
    }

    /// Renders ids back to text, spelling out special tokens.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            match (self.char_of(id), self.as_special(id)) {
                (Some(c), _) => out.push(c),
                (None, Some(s)) => out.push_str(s.surface()),
                (None, None) => out.push_str(&format!("<unk:{id}>")),
            }
        }
        out
    }

    /// Text characters only; specials and unknown ids are dropped.
    pub fn decode_text(&self, ids: &[u32]) -> String {
        ids.iter().filter_map(|&id| self.char_of(id)).collect()
    }
}

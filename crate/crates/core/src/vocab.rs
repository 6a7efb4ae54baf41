//! Closed-vocabulary tokenizer: whitespace plus punctuation splitting.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::templates::Catalog;
use crate::world::{LANDMARK_WORDS, OBJECT_WORDS};

pub type TokenId = u32;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
/// Largest numeral with its own token.
pub const MAX_NUMERAL: usize = 99;
const PUNCT: &[char] = &['(', ')', ',', '.', ':', '?', ';'];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

/// Splits text into raw token strings without vocabulary lookup.
pub fn split(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if PUNCT.contains(&ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

impl Vocab {
    /// Specials, numerals 0..=99, punctuation, then every catalog, landmark
    /// and object word in sorted order.
    pub fn standard() -> &'static Vocab {
        static VOCAB: OnceLock<Vocab> = OnceLock::new();
        VOCAB.get_or_init(|| {
            let mut words = BTreeSet::new();
            for text in Catalog::standard().all_text() {
                words.extend(split(&text));
            }
            words.extend(LANDMARK_WORDS.iter().map(|s| s.to_string()));
            words.extend(OBJECT_WORDS.iter().map(|s| s.to_string()));
            Vocab::from_words(words)
        })
    }

    fn from_words(words: BTreeSet<String>) -> Vocab {
        let mut tokens: Vec<String> = vec![PAD.into(), BOS.into(), EOS.into()];
        tokens.extend((0..=MAX_NUMERAL).map(|n| n.to_string()));
        tokens.extend(PUNCT.iter().map(|c| c.to_string()));
        for w in words {
            if !tokens.contains(&w) {
                tokens.push(w);
            }
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<TokenId> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::Oov(token.to_string()))
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn bos(&self) -> TokenId {
        1
    }

    pub fn eos(&self) -> TokenId {
        2
    }

    pub fn numeral(&self, n: usize) -> Result<TokenId> {
        if n > MAX_NUMERAL {
            return Err(Error::Oov(n.to_string()));
        }
        Ok(3 + n as TokenId)
    }

    pub fn parse_numeral(&self, id: TokenId) -> Option<usize> {
        let n = (id as usize).checked_sub(3)?;
        (n <= MAX_NUMERAL).then_some(n)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        split(text).iter().map(|t| self.id(t)).collect()
    }

    /// Inverse of `encode` up to whitespace: parentheses hug their content.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        let mut glue = true;
        for &id in ids {
            let t = self.token(id);
            if !glue && t != ")" {
                out.push(' ');
            }
            out.push_str(t);
            glue = t == "(";
        }
        out
    }
}

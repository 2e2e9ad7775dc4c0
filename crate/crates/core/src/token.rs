//! Interned source symbols and token sequences.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

/// Interned identifier of one source symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Token(pub u32);

/// Bijective map between surface strings and [`Token`] ids.
///
/// Ids are assigned densely in order of first interning, so the order in
/// which a corpus is read fixes the token order used by every tie-break.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    names: Vec<String>,
    ids: HashMap<String, Token>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> Token {
        if let Some(&t) = self.ids.get(name) {
            return t;
        }
        let t = Token(self.names.len() as u32);
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), t);
        t
    }

    pub fn get(&self, name: &str) -> Option<Token> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, token: Token) -> &str {
        &self.names[token.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Interns each character of `text` as its own token.
    pub fn chars(&mut self, text: &str) -> Sequence {
        let tokens = text.chars().map(|c| self.intern(c.encode_utf8(&mut [0; 4]))).collect();
        Sequence(tokens)
    }

    /// Interns whitespace-separated words.
    pub fn words(&mut self, text: &str) -> Sequence {
        Sequence(text.split_whitespace().map(|w| self.intern(w)).collect())
    }

    /// Renders a sequence as space-separated surface names.
    pub fn render(&self, seq: &[Token]) -> String {
        let mut out = String::new();
        for (i, &t) in seq.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.name(t));
        }
        out
    }
}

/// An ordered, non-empty list of tokens. Length counts tokens, not characters.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Sequence(Vec<Token>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("a sequence must contain at least one token")]
pub struct EmptySequence;

impl Sequence {
    pub fn new(tokens: Vec<Token>) -> Result<Self, EmptySequence> {
        if tokens.is_empty() {
            return Err(EmptySequence);
        }
        Ok(Sequence(tokens))
    }

    pub fn single(token: Token) -> Self {
        Sequence(vec![token])
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.0
    }

    pub(crate) fn from_vec_unchecked(tokens: Vec<Token>) -> Self {
        Sequence(tokens)
    }
}

impl Deref for Sequence {
    type Target = [Token];

    fn deref(&self) -> &[Token] {
        &self.0
    }
}

impl Borrow<[Token]> for Sequence {
    fn borrow(&self) -> &[Token] {
        &self.0
    }
}

impl TryFrom<Vec<Token>> for Sequence {
    type Error = EmptySequence;

    fn try_from(tokens: Vec<Token>) -> Result<Self, EmptySequence> {
        Sequence::new(tokens)
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "#{}", t.0)?;
        }
        Ok(())
    }
}

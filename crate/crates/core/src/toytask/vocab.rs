use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A token id, dense in `0..V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(u8);

impl Token {
    pub const fn new(id: u8) -> Self {
        Token(id)
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub const fn id(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";
pub const EOS: &str = "<eos>";
pub const PAD: &str = "<pad>";

const SYMBOLS: [&str; 22] = [
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "+", "-", "*", "/", "(", ")", "=", ",",
    ANSWER_OPEN, ANSWER_CLOSE, EOS, PAD,
];

/// Symbol table shared by the policy and the exploration networks.
///
/// Digits occupy ids 0..=9 so a digit token's id is its value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<&'static str>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::standard()
    }
}

impl Vocabulary {
    pub fn standard() -> Self {
        Vocabulary {
            symbols: SYMBOLS.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol(&self, token: Token) -> &'static str {
        self.symbols[token.index()]
    }

    pub fn symbols(&self) -> &[&'static str] {
        &self.symbols
    }

    fn lookup(&self, symbol: &str) -> Token {
        let id = self
            .symbols
            .iter()
            .position(|s| *s == symbol)
            .expect("symbol is part of the standard table");
        Token(id as u8)
    }

    pub fn digit(&self, d: u8) -> Token {
        debug_assert!(d < 10);
        Token(d)
    }

    pub fn answer_open(&self) -> Token {
        self.lookup(ANSWER_OPEN)
    }

    pub fn answer_close(&self) -> Token {
        self.lookup(ANSWER_CLOSE)
    }

    pub fn eos(&self) -> Token {
        self.lookup(EOS)
    }

    pub fn pad(&self) -> Token {
        self.lookup(PAD)
    }

    pub fn separator(&self) -> Token {
        self.lookup(",")
    }

    pub fn equals(&self) -> Token {
        self.lookup("=")
    }

    pub fn contains(&self, token: Token) -> bool {
        token.index() < self.symbols.len()
    }

    /// Greedy longest-match tokenization. Fails on the first character that
    /// does not start a known symbol.
    pub fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        let mut out = Vec::with_capacity(text.len());
        let mut pos = 0;
        while pos < text.len() {
            let rest = &text[pos..];
            let best = self
                .symbols
                .iter()
                .enumerate()
                .filter(|(_, s)| rest.starts_with(**s))
                .max_by_key(|(_, s)| s.len());
            match best {
                Some((id, s)) => {
                    out.push(Token(id as u8));
                    pos += s.len();
                }
                None => {
                    let symbol = rest.chars().next().map(String::from).unwrap_or_default();
                    return Err(Error::UnknownSymbol {
                        position: pos,
                        symbol,
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn detokenize(&self, tokens: &[Token]) -> String {
        tokens.iter().map(|t| self.symbol(*t)).collect()
    }
}

use crate::error::{Error, Result};

/// Case-insensitive output alphabet. The end-of-string token takes the last
/// class index, after every symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Charset {
    symbols: Vec<char>,
}

impl Charset {
    /// 10 digits followed by 26 letters: 37 classes with eos.
    pub fn alphanumeric() -> Self {
        Self {
            symbols: ('0'..='9').chain('a'..='z').collect(),
        }
    }

    /// The 10 digits: 11 classes with eos.
    pub fn digits() -> Self {
        Self {
            symbols: ('0'..='9').collect(),
        }
    }

    pub fn from_symbols(symbols: &str) -> Result<Self> {
        let mut out: Vec<char> = Vec::new();
        for ch in symbols.chars().map(|c| c.to_ascii_lowercase()) {
            if !ch.is_ascii_alphanumeric() {
                return Err(Error::input(format!("charset symbol {:?} is not alphanumeric", ch)));
            }
            if out.contains(&ch) {
                return Err(Error::input(format!("charset symbol {:?} repeated", ch)));
            }
            out.push(ch);
        }
        if out.is_empty() {
            return Err(Error::input("empty charset"));
        }
        Ok(Self { symbols: out })
    }

    /// Parses `alnum`, `digits`, or an explicit symbol list.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "alnum" | "alphanumeric" => Ok(Self::alphanumeric()),
            "digits" => Ok(Self::digits()),
            other => Self::from_symbols(other),
        }
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn as_string(&self) -> String {
        self.symbols.iter().collect()
    }

    /// Number of output classes including eos.
    pub fn classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn eos(&self) -> usize {
        self.symbols.len()
    }

    pub fn index_of(&self, ch: char) -> Option<usize> {
        let ch = ch.to_ascii_lowercase();
        self.symbols.iter().position(|&s| s == ch)
    }

    /// Class indices of `text`, without the trailing eos.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|ch| {
                self.index_of(ch)
                    .ok_or_else(|| Error::input(format!("symbol {:?} is not in the charset", ch)))
            })
            .collect()
    }

    /// Text for class indices; stops at the first eos.
    pub fn decode(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .take_while(|&&i| i != self.eos())
            .filter_map(|&i| self.symbols.get(i))
            .collect()
    }
}

use crate::error::{Error, Result};

/// Class index reserved for the CTC blank.
pub const BLANK: usize = 0;
/// Printable stand-in for the blank.
pub const BLANK_SYMBOL: char = '_';
/// Token that marks a word boundary inside a character transcript.
pub const WORD_SEPARATOR: char = '|';

/// Character vocabulary. Class 0 is the blank; classes `1..C` are the
/// characters in the order given at construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<char>,
}

/// Non-blank label sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Transcript {
    labels: Vec<usize>,
}

impl Transcript {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.contains(&BLANK) {
            return Err(Error::Contract("transcripts may not contain the blank".into()));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Vocab {
    /// Builds a vocabulary from the non-blank symbols, e.g. `"abcdefgh|"`.
    pub fn new(symbols: &str) -> Result<Self> {
        let mut tokens = vec![BLANK_SYMBOL];
        for c in symbols.chars() {
            if c == BLANK_SYMBOL || c.is_whitespace() || tokens.contains(&c) {
                return Err(Error::Config(format!("invalid or duplicate vocabulary symbol {c:?}")));
            }
            tokens.push(c);
        }
        if tokens.len() < 2 {
            return Err(Error::Config("vocabulary needs at least one symbol besides blank".into()));
        }
        Ok(Self { tokens })
    }

    /// Number of classes including the blank.
    pub fn classes(&self) -> usize {
        self.tokens.len()
    }

    /// Non-blank symbols, as accepted by [`Vocab::new`].
    pub fn symbols(&self) -> String {
        self.tokens[1..].iter().collect()
    }

    pub fn has_word_separator(&self) -> bool {
        self.tokens.contains(&WORD_SEPARATOR)
    }

    /// Encodes space-separated words; spaces become the word separator token.
    pub fn encode(&self, text: &str) -> Result<Transcript> {
        let words: Vec<&str> = text.split_whitespace().collect();
        let mut labels = Vec::new();
        for (i, w) in words.iter().enumerate() {
            if i > 0 {
                labels.push(self.index(WORD_SEPARATOR)?);
            }
            for c in w.chars() {
                labels.push(self.index(c)?);
            }
        }
        Transcript::new(labels)
    }

    /// Renders labels as text, mapping the word separator back to a space.
    pub fn decode(&self, t: &Transcript) -> String {
        t.labels()
            .iter()
            .map(|&l| match self.tokens.get(l) {
                Some(&WORD_SEPARATOR) => ' ',
                Some(&c) => c,
                None => '?',
            })
            .collect()
    }

    fn index(&self, c: char) -> Result<usize> {
        self.tokens
            .iter()
            .position(|&t| t == c)
            .filter(|&i| i != BLANK)
            .ok_or_else(|| Error::Contract(format!("symbol {c:?} is not in the vocabulary")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode() {
        let v = Vocab::new("abc|").unwrap();
        assert_eq!(v.classes(), 5);
        let t = v.encode("ab  ca").unwrap();
        assert_eq!(t.labels(), &[1, 2, 4, 3, 1]);
        assert_eq!(v.decode(&t), "ab ca");
        assert!(v.encode("abz").is_err());
    }

    #[test]
    fn rejects_bad_symbols() {
        assert!(Vocab::new("").is_err());
        assert!(Vocab::new("aa").is_err());
        assert!(Vocab::new("a_").is_err());
        assert!(Transcript::new(vec![1, 0]).is_err());
    }
}

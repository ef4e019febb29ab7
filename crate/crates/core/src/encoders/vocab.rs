use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Default padded question length.
pub const DEFAULT_MAX_LEN: usize = 14;

/// Dense token → index map with `PAD = 0` and `UNK = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.push(PAD_TOKEN);
        v.push(UNK_TOKEN);
        v
    }
}

impl Vocabulary {
    /// Vocabulary holding `tokens` (after the reserved entries) in the
    /// given order. Duplicates and reserved names are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::default();
        for t in tokens {
            v.push(t.as_ref());
        }
        v
    }

    /// Builds from raw question texts: tokens ordered by descending count,
    /// ties lexicographic.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for tok in clean_tokens(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t))
    }

    fn push(&mut self, token: &str) {
        if !self.index.contains_key(token) {
            self.index.insert(token.to_string(), self.tokens.len());
            self.tokens.push(token.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> Result<&str> {
        self.tokens
            .get(index)
            .map(String::as_str)
            .ok_or(Error::Index {
                what: "vocabulary",
                index,
                len: self.tokens.len(),
            })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Cleans, maps and pads `text` to exactly `max_len` indices.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = clean_tokens(text)
            .iter()
            .map(|t| self.lookup(t))
            .take(max_len)
            .collect();
        if ids.is_empty() {
            ids.push(UNK);
        }
        ids.resize(max_len.max(1), PAD);
        ids
    }
}

/// Lowercase, strip punctuation, split on whitespace.
pub fn clean_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Number of leading non-PAD positions.
pub fn valid_len(ids: &[usize]) -> usize {
    ids.iter().rposition(|&i| i != PAD).map_or(0, |p| p + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        let v = Vocabulary::from_tokens(["is", "it", "red"]);
        assert_eq!(v.get("is"), Some(2));
        let ids = v.tokenize("Is it red?", DEFAULT_MAX_LEN);
        let mut expected = vec![2, 3, 4];
        expected.resize(14, 0);
        assert_eq!(ids, expected);

        assert_eq!(v.tokenize("is it blue", 4), vec![2, 3, UNK, PAD]);

        let long = "is ".repeat(20);
        let ids = v.tokenize(&long, 14);
        assert_eq!(ids.len(), 14);
        assert!(ids.iter().all(|&i| i == 2));

        assert_eq!(v.tokenize("?!", 3), vec![UNK, PAD, PAD]);
    }

    #[test]
    fn build_orders_by_count_then_name() {
        let v = Vocabulary::build(["b a", "a c", "c a"]);
        assert_eq!(&v.tokens()[2..], &["a", "c", "b"]);
        assert_eq!(v.token(0).unwrap(), PAD_TOKEN);
        assert_eq!(v.token(1).unwrap(), UNK_TOKEN);
        assert!(v.token(99).is_err());
    }

    #[test]
    fn valid_length_ignores_trailing_pad() {
        assert_eq!(valid_len(&[3, 4, 0, 0]), 2);
        assert_eq!(valid_len(&[0, 0]), 0);
        assert_eq!(valid_len(&[1]), 1);
    }
}

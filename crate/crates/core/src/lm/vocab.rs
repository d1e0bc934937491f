use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const END_OF_QUERY: char = '\n';

/// Character inventory. Regular characters occupy indices `0..n` in code
/// point order, followed by the end-of-query marker, UNK and padding.
///
/// Putting the marker after the regular characters makes "lowest index" and
/// "lexicographically first continuation" agree for everything a decoder can
/// emit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<char>", into = "Vec<char>")]
pub struct Vocabulary {
    chars: Vec<char>,
    #[serde(skip)]
    index: BTreeMap<char, usize>,
}

impl TryFrom<Vec<char>> for Vocabulary {
    type Error = String;

    fn try_from(chars: Vec<char>) -> Result<Self, Self::Error> {
        if chars.windows(2).any(|w| w[0] >= w[1]) {
            return Err("vocabulary characters must be strictly increasing".into());
        }
        if chars.contains(&END_OF_QUERY) {
            return Err("end-of-query marker is reserved".into());
        }
        Ok(Self::from_sorted(chars))
    }
}

impl From<Vocabulary> for Vec<char> {
    fn from(v: Vocabulary) -> Self {
        v.chars
    }
}

impl Vocabulary {
    fn from_sorted(chars: Vec<char>) -> Self {
        let index = chars.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        Self { chars, index }
    }

    /// Characters seen at least `min_count` times in the queries.
    pub fn build<S: AsRef<str>>(queries: &[S], min_count: usize) -> Self {
        let mut counts: BTreeMap<char, usize> = BTreeMap::new();
        for q in queries {
            for c in q.as_ref().chars() {
                *counts.entry(c).or_default() += 1;
            }
        }
        let chars = counts.into_iter().filter(|&(c, n)| n >= min_count && c != END_OF_QUERY).map(|(c, _)| c).collect();
        Self::from_sorted(chars)
    }

    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let mut v: Vec<char> = chars.into_iter().filter(|c| *c != END_OF_QUERY).collect();
        v.sort_unstable();
        v.dedup();
        Self::from_sorted(v)
    }

    pub fn len(&self) -> usize {
        self.chars.len() + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn regular_chars(&self) -> &[char] {
        &self.chars
    }

    pub fn eoq(&self) -> usize {
        self.chars.len()
    }

    pub fn unk(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn pad(&self) -> usize {
        self.chars.len() + 2
    }

    /// Index of `c`, UNK when absent.
    pub fn index(&self, c: char) -> usize {
        if c == END_OF_QUERY {
            return self.eoq();
        }
        self.index.get(&c).copied().unwrap_or(self.unk())
    }

    pub fn char_at(&self, idx: usize) -> Option<char> {
        self.chars.get(idx).copied()
    }

    /// Symbols a decoder may produce: regular characters and the marker.
    pub fn emittable(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.eoq()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_unk() {
        let v = Vocabulary::build(&["ab", "ba", "a"], 1);
        assert_eq!(v.len(), 5);
        assert_eq!(v.index('a'), 0);
        assert_eq!(v.index('b'), 1);
        assert_eq!(v.index('\n'), 2);
        assert_eq!(v.index('z'), v.unk());
        assert_eq!(v.pad(), 4);
        assert!(!v.emittable().contains(&v.pad()));
    }

    #[test]
    fn rare_chars_collapse() {
        let v = Vocabulary::build(&["aaaaa", "b"], 5);
        assert_eq!(v.regular_chars(), &['a']);
        assert_eq!(v.index('b'), v.unk());
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocabulary::from_chars("hello world".chars());
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.index('w'), v.index('w'));
    }
}

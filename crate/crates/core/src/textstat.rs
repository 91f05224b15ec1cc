//! Tokenization, document statistics and keyword profiles.
//!
//! The statistics mirror the classic TextStat report: character class counts,
//! word/sentence/paragraph counts, an approximate syllable rate, the Flesch
//! reading-ease index and a word-frequency list. Ratios whose denominator is
//! zero are `None`, never `0.0`, because zero is a legitimate Flesch score.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_KEYWORDS: usize = 10;

const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "did", "do",
    "does", "for", "from", "had", "has", "have", "he", "her", "his", "i", "if", "in", "into", "is",
    "it", "its", "not", "of", "on", "or", "our", "she", "so", "than", "that", "the", "their",
    "them", "then", "there", "these", "they", "this", "those", "to", "was", "we", "were", "what",
    "which", "who", "will", "with", "would", "you", "your",
];

/// Splits text into maximal runs of alphanumeric characters, lowercased.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Approximate syllable count: vowel groups, less one for a trailing silent `e`.
///
/// The silent-`e` rule applies only when the final `e` forms a group on its
/// own (so "free" keeps its single group), the word does not end in "le", and
/// at least one syllable would remain. Words without vowels count as one.
pub fn count_syllables(word: &str) -> Result<usize> {
    if word.is_empty() {
        return Err(Error::invalid("cannot count syllables of an empty word"));
    }
    let chars: Vec<char> = word.chars().flat_map(char::to_lowercase).collect();
    let mut groups = 0;
    let mut prev_vowel = false;
    for &c in &chars {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }

    let n = chars.len();
    let lone_final_e = n >= 2 && chars[n - 1] == 'e' && !is_vowel(chars[n - 2]);
    let ends_le = n >= 2 && chars[n - 2] == 'l' && chars[n - 1] == 'e';
    if lone_final_e && !ends_le && groups > 1 {
        groups -= 1;
    }
    Ok(groups.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextStats {
    pub paragraphs: usize,
    pub words: usize,
    pub sentences: usize,
    /// Every non-control character, spaces included.
    pub printable_chars: usize,
    pub spaces: usize,
    pub tabs: usize,
    pub carriage_returns: usize,
    pub line_feeds: usize,
    /// Control characters other than tab, CR and LF.
    pub nonprintable_others: usize,
    pub syllables: usize,
    pub words_per_sentence: Option<f64>,
    pub syllables_per_word: Option<f64>,
    pub flesch_index: Option<f64>,
    /// Descending by count, ties in ascending token order.
    pub word_frequencies: Vec<(String, usize)>,
}

/// Flesch reading ease from raw counts. `None` when either denominator is zero.
pub fn flesch_reading_ease(words: usize, sentences: usize, syllables: usize) -> Option<f64> {
    if words == 0 || sentences == 0 {
        return None;
    }
    let wps = words as f64 / sentences as f64;
    let spw = syllables as f64 / words as f64;
    Some(206.835 - 1.015 * wps - 84.6 * spw)
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn count_sentence_ends(text: &str) -> usize {
    let mut count = 0;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if !is_terminator(c) {
            continue;
        }
        while chars.peek().is_some_and(|&n| is_terminator(n)) {
            chars.next();
        }
        match chars.peek() {
            None => count += 1,
            Some(n) if n.is_whitespace() => count += 1,
            Some(_) => {}
        }
    }
    count
}

fn count_paragraphs(text: &str) -> usize {
    let mut paragraphs = 0;
    let mut block_has_word = false;
    for line in text.split('\n') {
        if line.trim().is_empty() {
            if block_has_word {
                paragraphs += 1;
            }
            block_has_word = false;
        } else if line.chars().any(char::is_alphanumeric) {
            block_has_word = true;
        }
    }
    if block_has_word {
        paragraphs += 1;
    }
    paragraphs
}

fn sorted_frequencies<I: IntoIterator<Item = String>>(tokens: I) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in tokens {
        *counts.entry(t).or_default() += 1;
    }
    let mut list: Vec<(String, usize)> = counts.into_iter().collect();
    list.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    list
}

pub fn text_statistics(text: &str) -> TextStats {
    let mut printable_chars = 0;
    let mut spaces = 0;
    let mut tabs = 0;
    let mut carriage_returns = 0;
    let mut line_feeds = 0;
    let mut nonprintable_others = 0;
    for c in text.chars() {
        match c {
            '\t' => tabs += 1,
            '\r' => carriage_returns += 1,
            '\n' => line_feeds += 1,
            c if c.is_control() => nonprintable_others += 1,
            c => {
                printable_chars += 1;
                if c == ' ' {
                    spaces += 1;
                }
            }
        }
    }

    let tokens = tokenize(text);
    let words = tokens.len();
    let syllables: usize = tokens
        .iter()
        .map(|t| count_syllables(t).expect("tokens are never empty"))
        .sum();
    let mut sentences = count_sentence_ends(text);
    if sentences == 0 && words > 0 {
        sentences = 1;
    }

    TextStats {
        paragraphs: count_paragraphs(text),
        words,
        sentences,
        printable_chars,
        spaces,
        tabs,
        carriage_returns,
        line_feeds,
        nonprintable_others,
        syllables,
        words_per_sentence: (sentences > 0).then(|| words as f64 / sentences as f64),
        syllables_per_word: (words > 0).then(|| syllables as f64 / words as f64),
        flesch_index: flesch_reading_ease(words, sentences, syllables),
        word_frequencies: sorted_frequencies(tokens),
    }
}

fn fmt_ratio(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.2}"),
        None => "undefined".to_owned(),
    }
}

impl fmt::Display for TextStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Number of paragraphs: {}", self.paragraphs)?;
        writeln!(f, "Number of words: {}", self.words)?;
        writeln!(f, "Number of sentences: {}", self.sentences)?;
        writeln!(
            f,
            "Number of printable characters (including spaces): {}",
            self.printable_chars
        )?;
        writeln!(f, "Number of spaces: {}", self.spaces)?;
        writeln!(f, "Number of tabulations: {}", self.tabs)?;
        writeln!(f, "Number of Carriage Return: {}", self.carriage_returns)?;
        writeln!(f, "Number of Line Feed: {}", self.line_feeds)?;
        writeln!(
            f,
            "Number of non-printable characters (others than the above): {}",
            self.nonprintable_others
        )?;
        writeln!(
            f,
            "Number of words per sentence: {}",
            fmt_ratio(self.words_per_sentence)
        )?;
        writeln!(
            f,
            "Number of syllables per word (approximate): {}",
            fmt_ratio(self.syllables_per_word)
        )?;
        writeln!(f, "Flesch index: {}", fmt_ratio(self.flesch_index))?;
        writeln!(f, "Start of list:")?;
        for (token, count) in &self.word_frequencies {
            writeln!(f, "{token}\t{count}")?;
        }
        Ok(())
    }
}

/// Tokens excluded from keyword profiles and from queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords(DEFAULT_STOPWORDS.iter().map(|s| (*s).to_owned()).collect())
    }
}

impl Stopwords {
    pub fn empty() -> Self {
        Stopwords(HashSet::new())
    }

    /// One token per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading stopwords {}", path.display()), e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sorted, one per line; the inverse of [`Stopwords::parse`].
    pub fn to_file_contents(&self) -> String {
        let mut words: Vec<&str> = self.0.iter().map(String::as_str).collect();
        words.sort_unstable();
        let mut out = String::new();
        for w in words {
            out.push_str(w);
            out.push('\n');
        }
        out
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        Stopwords(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// The top keywords of one document with their in-document frequencies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordProfile(pub Vec<(String, u32)>);

impl KeywordProfile {
    pub fn frequency(&self, token: &str) -> Option<u32> {
        self.0.iter().find(|(t, _)| t == token).map(|&(_, f)| f)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(t, f)| (t.as_str(), *f))
    }
}

/// Top-`k` tokens by frequency after dropping stopwords and one-character tokens.
pub fn extract_keywords(text: &str, stopwords: &Stopwords, k: usize) -> Result<KeywordProfile> {
    if k == 0 {
        return Err(Error::invalid("keyword count must be at least 1"));
    }
    let eligible = tokenize(text)
        .into_iter()
        .filter(|t| t.chars().count() > 1 && !stopwords.contains(t));
    let mut list = sorted_frequencies(eligible);
    list.truncate(k);
    Ok(KeywordProfile(
        list.into_iter()
            .map(|(t, n)| (t, u32::try_from(n).unwrap_or(u32::MAX)))
            .collect(),
    ))
}

//! Social-media text cleaning and a lexicon-average polarity classifier.
//!
//! The cleaning pipeline applies six steps in a fixed order:
//! HTML-entity decoding, stopword removal, lowercasing, repeated-character
//! squeezing, link/mention/"RT" stripping, and punctuation removal. Each
//! step is also usable on its own. The lexicon classifier averages
//! per-token polarity scores and thresholds the mean at +/-0.1.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use crate::core::Polarity;
use crate::error::{Error, Result};

/// Lowercase stopwords matched case-insensitively against whole tokens.
#[derive(Debug, Clone, Default)]
pub struct StopwordSet {
    words: HashSet<String>,
}

impl StopwordSet {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = HashSet::new();
        for w in words {
            let w = w.as_ref();
            if w.chars().any(char::is_whitespace) {
                return Err(Error::InvalidStopword(w.to_string()));
            }
            if !w.is_empty() {
                set.insert(w.to_lowercase());
            }
        }
        Ok(Self { words: set })
    }

    /// Parses the one-word-per-line format; `#` starts a comment.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut words = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let entry = line.split('#').next().unwrap_or("").trim();
            if !entry.is_empty() {
                words.push(entry.to_string());
            }
        }
        Self::new(words)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Word -> polarity score in [-1, 1], keys lowercase.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, f64>,
}

impl Lexicon {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        let mut map = HashMap::new();
        for (word, score) in entries {
            let word = word.as_ref();
            if !(-1.0..=1.0).contains(&score) || !score.is_finite() {
                return Err(Error::InvalidLexiconEntry {
                    word: word.to_string(),
                    detail: format!("score {score} outside [-1, 1]"),
                });
            }
            map.insert(word.to_lowercase(), score);
        }
        Ok(Self { entries: map })
    }

    /// Parses the word<TAB>score format; `#` starts a comment.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut entries = Vec::new();
        for (number, line) in reader.lines().enumerate() {
            let line = line?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut parts = content.splitn(2, '\t');
            let word = parts.next().unwrap_or("").trim();
            let score = parts
                .next()
                .map(str::trim)
                .ok_or_else(|| Error::MalformedLine {
                    line: number + 1,
                    detail: "expected word<TAB>score".into(),
                })?;
            let score: f64 = score.parse().map_err(|_| Error::MalformedLine {
                line: number + 1,
                detail: format!("cannot parse score {score:?}"),
            })?;
            entries.push((word.to_string(), score));
        }
        Self::new(entries)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn score(&self, word: &str) -> Option<f64> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Replaces named and numeric HTML entities by their characters in a single
/// pass; unknown entities stay verbatim, so `&amp;amp;` yields `&amp;`.
pub fn decode_html_entities(text: &str) -> String {
    html_escape::decode_html_entities(text).into_owned()
}

/// Unicode-aware lowercasing.
pub fn lowercase(text: &str) -> String {
    text.to_lowercase()
}

fn is_social_token(token: &str) -> bool {
    if token.starts_with('@') {
        return true;
    }
    let lower = token.to_lowercase();
    lower == "rt"
        || lower.starts_with("http://")
        || lower.starts_with("https://")
        || lower.starts_with("www.")
}

/// Drops links, @-mentions and the Twitter "RT" marker; remaining tokens are
/// rejoined with single spaces.
pub fn strip_social_tokens(text: &str) -> String {
    text.split_whitespace()
        .filter(|t| !is_social_token(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Caps every run of three or more identical characters at exactly two.
pub fn squeeze_repeats(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut run_char: Option<char> = None;
    let mut run_len = 0usize;
    for c in text.chars() {
        if Some(c) == run_char {
            run_len += 1;
        } else {
            run_char = Some(c);
            run_len = 1;
        }
        if run_len <= 2 {
            out.push(c);
        }
    }
    out
}

/// Replaces every character outside lowercase ASCII letters, digits and
/// whitespace by a space, then collapses whitespace runs and trims. Also
/// removes emojis and symbols left over from entity decoding.
pub fn remove_punctuation(text: &str) -> String {
    let replaced: String = text
        .chars()
        .map(|c| {
            if c.is_ascii_lowercase() || c.is_ascii_digit() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    replaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Drops tokens whose lowercase form is in the stopword set.
pub fn remove_stopwords(text: &str, stopwords: &StopwordSet) -> String {
    text.split_whitespace()
        .filter(|t| !stopwords.contains(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// The full six-step cleaning pipeline, in order: entity decoding, stopword
/// removal, lowercasing, run squeezing, social-token stripping, punctuation
/// removal.
pub fn clean_pipeline(text: &str, stopwords: &StopwordSet) -> String {
    let step1 = decode_html_entities(text);
    let step2 = remove_stopwords(&step1, stopwords);
    let step3 = lowercase(&step2);
    let step4 = squeeze_repeats(&step3);
    let step5 = strip_social_tokens(&step4);
    remove_punctuation(&step5)
}

/// Mean per-token lexicon score and its thresholded class.
///
/// Tokens missing from the lexicon contribute 0 and are counted in the
/// average; empty input scores 0. Scores strictly below -0.1 classify
/// Negative, strictly above 0.1 Positive, everything else Neutral (the
/// boundaries themselves are Neutral).
pub fn lexicon_polarity(text: &str, lexicon: &Lexicon) -> (f64, Polarity) {
    let mut sum = 0.0;
    let mut count = 0usize;
    for token in text.split_whitespace() {
        sum += lexicon.score(token).unwrap_or(0.0);
        count += 1;
    }
    let score = if count == 0 { 0.0 } else { sum / count as f64 };
    (score, classify_score(score))
}

/// Threshold rule shared by the lexicon classifier and its CLI wrapper.
pub fn classify_score(score: f64) -> Polarity {
    if score < -0.1 {
        Polarity::Negative
    } else if score > 0.1 {
        Polarity::Positive
    } else {
        Polarity::Neutral
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stopwords(words: &[&str]) -> StopwordSet {
        StopwordSet::new(words.iter().copied()).unwrap()
    }

    #[test]
    fn decode_standard_entity() {
        assert_eq!(decode_html_entities("a &amp; b"), "a & b");
    }

    #[test]
    fn decode_numeric_entity() {
        assert_eq!(decode_html_entities("&#38;"), "&");
    }

    #[test]
    fn decode_is_single_pass() {
        assert_eq!(decode_html_entities("&amp;amp;"), "&amp;");
    }

    #[test]
    fn lowercase_cases() {
        assert_eq!(lowercase("SoOO"), "sooo");
        assert_eq!(lowercase("abc"), "abc");
        assert_eq!(lowercase("RT"), "rt");
    }

    #[test]
    fn strip_social_removes_rt_and_mentions() {
        assert_eq!(strip_social_tokens("RT @bob hello"), "hello");
    }

    #[test]
    fn strip_social_removes_links() {
        assert_eq!(strip_social_tokens("see https://t.co/x now"), "see now");
        assert_eq!(strip_social_tokens("go www.example.com go"), "go go");
    }

    #[test]
    fn strip_social_identity_on_plain_text() {
        assert_eq!(strip_social_tokens("hello world"), "hello world");
    }

    #[test]
    fn squeeze_single_run() {
        assert_eq!(squeeze_repeats("aaaa"), "aa");
    }

    #[test]
    fn squeeze_identity() {
        assert_eq!(squeeze_repeats("abc"), "abc");
    }

    // Reference oracle: split into maximal runs, emit min(len, 2) copies.
    fn squeeze_oracle(text: &str) -> String {
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::new();
        let mut i = 0;
        while i < chars.len() {
            let mut j = i;
            while j < chars.len() && chars[j] == chars[i] {
                j += 1;
            }
            for _ in 0..(j - i).min(2) {
                out.push(chars[i]);
            }
            i = j;
        }
        out
    }

    #[test]
    fn squeeze_matches_linear_scan_oracle() {
        let expected = squeeze_oracle("sooo happppyy");
        assert_eq!(expected, "soo happyy");
        assert_eq!(squeeze_repeats("sooo happppyy"), expected);
        for s in ["", "aa", "aaa", "aabbaaa", "ababab", "xxxxyyyyzzzz!"] {
            assert_eq!(squeeze_repeats(s), squeeze_oracle(s), "input {s:?}");
        }
    }

    #[test]
    fn punctuation_removal_cases() {
        assert_eq!(remove_punctuation("so happy!!!"), "so happy");
        assert_eq!(remove_punctuation("a & b"), "a b");
        assert_eq!(remove_punctuation("c'mon"), "c mon");
    }

    #[test]
    fn stopword_removal_cases() {
        let sw = stopwords(&["the"]);
        assert_eq!(remove_stopwords("the cat", &sw), "cat");
        assert_eq!(remove_stopwords("cat", &sw), "cat");
        assert_eq!(remove_stopwords("The THE the", &sw), "");
    }

    #[test]
    fn stopword_entries_reject_whitespace() {
        assert!(StopwordSet::new(["new york"]).is_err());
    }

    #[test]
    fn pipeline_worked_example() {
        // Hand-application of the six steps in order:
        //   decode   -> RT @u GREAT daaaay http://x.co & the best!!!
        //   stopword -> RT @u GREAT daaaay http://x.co & best!!!
        //   lower    -> rt @u great daaaay http://x.co & best!!!
        //   squeeze  -> rt @u great daay http://x.co & best!!
        //   social   -> great daay & best!!
        //   punct    -> great daay best
        let sw = stopwords(&["the"]);
        assert_eq!(
            clean_pipeline("RT @u GREAT daaaay http://x.co &amp; the best!!!", &sw),
            "great daay best"
        );
    }

    #[test]
    fn pipeline_empty_input() {
        assert_eq!(clean_pipeline("", &StopwordSet::default()), "");
    }

    #[test]
    fn pipeline_clean_input_is_fixed_point() {
        assert_eq!(clean_pipeline("hello", &StopwordSet::default()), "hello");
    }

    #[test]
    fn lexicon_single_word() {
        let lex = Lexicon::new([("happy", 0.8)]).unwrap();
        let (score, class) = lexicon_polarity("happy", &lex);
        assert_eq!(score, 0.8);
        assert_eq!(class, Polarity::Positive);
    }

    #[test]
    fn lexicon_symmetric_words_cancel() {
        let lex = Lexicon::new([("good", 0.7), ("bad", -0.7)]).unwrap();
        let (score, class) = lexicon_polarity("good bad", &lex);
        assert_eq!(score, 0.0);
        assert_eq!(class, Polarity::Neutral);
    }

    #[test]
    fn lexicon_empty_input_is_neutral() {
        let (score, class) = lexicon_polarity("", &Lexicon::default());
        assert_eq!(score, 0.0);
        assert_eq!(class, Polarity::Neutral);
    }

    #[test]
    fn lexicon_unknown_words_dilute_the_average() {
        let lex = Lexicon::new([("great", 0.9)]).unwrap();
        let (score, _) = lexicon_polarity("great xyzzy xyzzy", &lex);
        assert!((score - 0.3).abs() < 1e-12);
    }

    #[test]
    fn threshold_boundaries_are_neutral() {
        assert_eq!(classify_score(0.1), Polarity::Neutral);
        assert_eq!(classify_score(-0.1), Polarity::Neutral);
        assert_eq!(classify_score(0.10001), Polarity::Positive);
        assert_eq!(classify_score(-0.10001), Polarity::Negative);
    }

    #[test]
    fn lexicon_rejects_out_of_range_scores() {
        assert!(Lexicon::new([("big", 1.5)]).is_err());
    }
}

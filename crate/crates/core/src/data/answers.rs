use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::vqa::AnnotationRecord;
use crate::error::{Error, Result};

/// Default answer-space size.
pub const DEFAULT_ANSWER_VOCAB: usize = 3000;

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// Canonical form used for every answer comparison: lowercase, no
/// articles, number words as digits, no periods (except inside decimals)
/// or trailing punctuation, single spaces. Idempotent.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out: Vec<String> = Vec::new();
    for raw in lower.split_whitespace() {
        let chars: Vec<char> = raw.chars().collect();
        let mut token: String = chars
            .iter()
            .enumerate()
            .filter(|(i, c)| {
                **c != '.'
                    || (*i > 0
                        && chars[i - 1].is_ascii_digit()
                        && chars.get(i + 1).is_some_and(char::is_ascii_digit))
            })
            .map(|(_, c)| *c)
            .collect();
        while token.ends_with(['!', '?', ',', ';', ':']) {
            token.pop();
        }
        if token.is_empty() || matches!(token.as_str(), "a" | "an" | "the") {
            continue;
        }
        if let Some(d) = NUMBER_WORDS.iter().position(|w| *w == token) {
            token = d.to_string();
        }
        out.push(token);
    }
    out.join(" ")
}

/// Answer label space: the most frequent normalized human answers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct AnswerVocab {
    answers: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for AnswerVocab {
    fn from(answers: Vec<String>) -> Self {
        Self::from_answers(answers)
    }
}

impl From<AnswerVocab> for Vec<String> {
    fn from(v: AnswerVocab) -> Self {
        v.answers
    }
}

impl AnswerVocab {
    pub fn from_answers(answers: Vec<String>) -> Self {
        let index = answers
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        Self { answers, index }
    }

    /// Counts all ten human answers of every annotation and keeps the top
    /// `size`, ties broken lexicographically. Input order is irrelevant.
    pub fn build(annotations: &[AnnotationRecord], size: usize) -> Result<Self> {
        if annotations.is_empty() {
            return Err(Error::Validation("cannot build answer vocabulary from no annotations".into()));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for a in annotations {
            for h in &a.answers {
                *counts.entry(normalize_answer(h)).or_default() += 1;
            }
        }
        if size > counts.len() {
            log::warn!(
                "answer vocabulary size {size} exceeds the {} distinct answers; keeping all",
                counts.len()
            );
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(size);
        Ok(Self::from_answers(ranked.into_iter().map(|(a, _)| a).collect()))
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    /// Index of an already-normalized answer.
    pub fn get(&self, answer: &str) -> Option<usize> {
        self.index.get(answer).copied()
    }

    pub fn answer(&self, index: usize) -> Result<&str> {
        self.answers
            .get(index)
            .map(String::as_str)
            .ok_or(Error::Index {
                what: "answer vocabulary",
                index,
                len: self.answers.len(),
            })
    }

    pub fn answers(&self) -> &[String] {
        &self.answers
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ann(qid: u64, answers: &[&str]) -> AnnotationRecord {
        AnnotationRecord {
            question_id: qid,
            answer_type: "other".into(),
            multiple_choice_answer: answers[0].into(),
            answers: answers.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Red"), "red");
        assert_eq!(normalize_answer("two"), "2");
        assert_eq!(normalize_answer("yes"), "yes");
        assert_eq!(normalize_answer("  A   dog. "), "dog");
        assert_eq!(normalize_answer("3.5"), "3.5");
        assert_eq!(normalize_answer("red ! the"), "red");
        assert_eq!(normalize_answer("yes!?"), "yes");
    }

    #[test]
    fn vocabulary_counts_every_human_answer() {
        let mut anns = vec![ann(1, &["yes"; 10]), ann(2, &["no"; 10])];
        anns[1].answers[..5].iter_mut().for_each(|a| *a = "yes".into());
        let v = AnswerVocab::build(&anns, 1).unwrap();
        assert_eq!(v.answers(), &["yes"]);
        assert_eq!(v.get("yes"), Some(0));
    }

    #[test]
    fn ties_are_lexicographic_and_oversize_keeps_all() {
        let mut a = ann(1, &["red"; 10]);
        a.answers[5..].iter_mut().for_each(|x| *x = "Blue".into());
        let v = AnswerVocab::build(&[a], 10).unwrap();
        assert_eq!(v.answers(), &["blue", "red"]);
        assert!(AnswerVocab::build(&[], 3).is_err());
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "[ a-zA-Z0-9.!?,;:]{0,24}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once);
        }

        #[test]
        fn vocabulary_ignores_annotation_order(seed in 0u64..1000) {
            use rand::seq::{IndexedRandom, SliceRandom};
            use rand::SeedableRng;
            let words = ["red", "blue", "two", "the cube", "yes", "no"];
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut anns: Vec<AnnotationRecord> = (0..12u64)
                .map(|q| {
                    let picks: Vec<&str> = (0..10).map(|_| *words.choose(&mut rng).unwrap()).collect();
                    ann(q, &picks)
                })
                .collect();
            let v = AnswerVocab::build(&anns, 4).unwrap();
            anns.shuffle(&mut rng);
            prop_assert_eq!(AnswerVocab::build(&anns, 4).unwrap(), v);
        }
    }
}

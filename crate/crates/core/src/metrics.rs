//! Consensus accuracy against ten human answers and its aggregations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{normalize_answer, AnnotationRecord, Prediction, HUMAN_ANSWERS};
use crate::error::{Error, Result};

pub const ANSWER_TYPES: [&str; 3] = ["yes/no", "number", "other"];

/// Per-question score in exact units of 1/30.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Score(pub u32);

impl Score {
    pub const FULL: Score = Score(30);

    pub fn value(self) -> f64 {
        f64::from(self.0) / 30.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyRule {
    /// `min(matches / 3, 1)`.
    #[default]
    Literal,
    /// Mean of the literal rule over the ten leave-one-human-out subsets.
    LeaveOneOut,
}

/// Score of `prediction` against exactly ten human answers. Both sides
/// are normalized before matching.
pub fn vqa_score(prediction: &str, humans: &[String], rule: AccuracyRule) -> Result<Score> {
    if humans.len() != HUMAN_ANSWERS {
        return Err(Error::Contract(format!(
            "expected {HUMAN_ANSWERS} human answers, got {}",
            humans.len()
        )));
    }
    let predicted = normalize_answer(prediction);
    let matched: Vec<bool> = humans
        .iter()
        .map(|h| normalize_answer(h) == predicted)
        .collect();
    let total = matched.iter().filter(|m| **m).count() as u32;
    Ok(match rule {
        AccuracyRule::Literal => Score(total.min(3) * 10),
        AccuracyRule::LeaveOneOut => Score(
            matched
                .iter()
                .map(|m| (total - u32::from(*m)).min(3))
                .sum(),
        ),
    })
}

/// Literal consensus accuracy as a number in `{0, 1/3, 2/3, 1}`.
pub fn vqa_accuracy(prediction: &str, humans: &[String]) -> Result<f64> {
    Ok(vqa_score(prediction, humans, AccuracyRule::Literal)?.value())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub overall: f64,
    /// Mean score per answer type; types with no questions are absent.
    pub per_type: BTreeMap<String, f64>,
    pub count: usize,
    #[serde(skip)]
    pub scores: BTreeMap<u64, Score>,
}

fn mean(scores: impl Iterator<Item = Score>) -> (f64, usize) {
    let (sum, n) = scores.fold((0u64, 0usize), |(s, n), x| (s + u64::from(x.0), n + 1));
    (sum as f64 / (30.0 * n as f64), n)
}

/// Overall and per-answer-type means. `scores` and `annotations` must
/// cover the same question ids.
pub fn aggregate(scores: &BTreeMap<u64, Score>, annotations: &[AnnotationRecord]) -> Result<EvalResult> {
    let types: BTreeMap<u64, &str> = annotations
        .iter()
        .map(|a| (a.question_id, a.answer_type.as_str()))
        .collect();
    if types.len() != scores.len() || scores.keys().any(|id| !types.contains_key(id)) {
        let unscored: Vec<_> = types.keys().filter(|id| !scores.contains_key(id)).collect();
        let unknown: Vec<_> = scores.keys().filter(|id| !types.contains_key(id)).collect();
        return Err(Error::Alignment(format!(
            "annotated questions without scores: {unscored:?}; scores without annotations: {unknown:?}"
        )));
    }
    if scores.is_empty() {
        return Err(Error::Alignment("nothing to aggregate".into()));
    }
    let (overall, count) = mean(scores.values().copied());
    let mut buckets: BTreeMap<String, Vec<Score>> = BTreeMap::new();
    for (id, s) in scores {
        buckets.entry(types[id].to_string()).or_default().push(*s);
    }
    let per_type = buckets
        .into_iter()
        .map(|(t, v)| (t, mean(v.into_iter()).0))
        .collect();
    Ok(EvalResult {
        overall,
        per_type,
        count,
        scores: scores.clone(),
    })
}

/// Scores one prediction per annotated question. Every prediction must
/// name an annotated question, ids may not repeat, and no annotated
/// question may be left without a prediction.
pub fn score(
    predictions: &[Prediction],
    annotations: &[AnnotationRecord],
    rule: AccuracyRule,
) -> Result<EvalResult> {
    if predictions.is_empty() {
        return Err(Error::Alignment("no predictions to score".into()));
    }
    let by_id: BTreeMap<u64, &AnnotationRecord> =
        annotations.iter().map(|a| (a.question_id, a)).collect();
    let mut answers: BTreeMap<u64, &str> = BTreeMap::new();
    let mut duplicates = Vec::new();
    for p in predictions {
        if answers.insert(p.question_id, &p.answer).is_some() {
            duplicates.push(p.question_id);
        }
    }
    if !duplicates.is_empty() {
        return Err(Error::Validation(format!(
            "duplicate question ids in predictions: {duplicates:?}"
        )));
    }
    let unknown: Vec<u64> = answers.keys().filter(|id| !by_id.contains_key(id)).copied().collect();
    if !unknown.is_empty() {
        return Err(Error::Alignment(format!(
            "predictions for unknown question ids: {unknown:?}"
        )));
    }
    let unanswered: Vec<u64> = by_id.keys().filter(|id| !answers.contains_key(id)).copied().collect();
    if !unanswered.is_empty() {
        return Err(Error::Alignment(format!(
            "annotated questions without predictions: {unanswered:?}"
        )));
    }
    let scores = answers
        .iter()
        .map(|(id, answer)| Ok((*id, vqa_score(answer, &by_id[id].answers, rule)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    aggregate(&scores, annotations)
}

/// `overall − baseline overall` for every named result, in input order.
pub fn delta_vs_baseline(results: &[(String, f64)], baseline: &str) -> Result<Vec<(String, f64)>> {
    let base = results
        .iter()
        .find(|(n, _)| n == baseline)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Lookup(format!("baseline '{baseline}' not among results")))?;
    Ok(results.iter().map(|(n, v)| (n.clone(), v - base)).collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn humans(matching: usize, answer: &str) -> Vec<String> {
        (0..10)
            .map(|i| if i < matching { answer.to_string() } else { format!("other{i}") })
            .collect()
    }

    #[test]
    fn literal_rule_values() {
        let expected = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0, 1.0];
        for (m, want) in expected.iter().enumerate() {
            let got = vqa_accuracy("red", &humans(m, "red")).unwrap();
            assert!((got - want).abs() < 1e-12, "{m}: {got}");
        }
        assert_eq!(vqa_accuracy("The red", &vec!["red".to_string(); 10]).unwrap(), 1.0);
        assert!(matches!(
            vqa_accuracy("red", &humans(3, "red")[..9]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn leave_one_out_rule() {
        // 3 matches: 3 subsets drop a match (2/3), 7 keep all three (1).
        let s = vqa_score("red", &humans(3, "red"), AccuracyRule::LeaveOneOut).unwrap();
        assert_eq!(s, Score(3 * 2 + 7 * 3));
        let s = vqa_score("red", &humans(10, "red"), AccuracyRule::LeaveOneOut).unwrap();
        assert_eq!(s, Score::FULL);
    }

    fn ann(id: u64, kind: &str) -> AnnotationRecord {
        AnnotationRecord {
            question_id: id,
            answer_type: kind.into(),
            multiple_choice_answer: "x".into(),
            answers: vec!["x".into(); 10],
        }
    }

    #[test]
    fn aggregation_buckets() {
        let anns = [ann(1, "yes/no"), ann(2, "number")];
        let scores = BTreeMap::from([(1, Score::FULL), (2, Score(0))]);
        let r = aggregate(&scores, &anns).unwrap();
        assert_eq!(r.overall, 0.5);
        assert_eq!(r.per_type["yes/no"], 1.0);
        assert_eq!(r.per_type["number"], 0.0);
        assert!(!r.per_type.contains_key("other"));

        let bad = BTreeMap::from([(1, Score::FULL), (3, Score(0))]);
        assert!(matches!(aggregate(&bad, &anns), Err(Error::Alignment(_))));
    }

    #[test]
    fn deltas() {
        let rs = vec![("base".to_string(), 0.55), ("att".to_string(), 0.60)];
        let d = delta_vs_baseline(&rs, "base").unwrap();
        assert_eq!(d[0].1, 0.0);
        assert!((d[1].1 - 0.05).abs() < 1e-12);
        assert!(matches!(delta_vs_baseline(&rs, "nope"), Err(Error::Lookup(_))));
    }

    #[test]
    fn scoring_checks_ids() {
        let anns = [ann(1, "yes/no"), ann(2, "other")];
        let p = |id: u64, a: &str| Prediction { question_id: id, answer: a.into() };
        let r = score(&[p(1, "x"), p(2, "y")], &anns, AccuracyRule::Literal).unwrap();
        assert_eq!((r.overall, r.per_type["yes/no"], r.per_type["other"]), (0.5, 1.0, 0.0));
        let cases = [
            (vec![], "alignment"),
            (vec![p(1, "x"), p(1, "x"), p(2, "x")], "validation"),
            (vec![p(1, "x"), p(2, "x"), p(7, "x"), p(9, "x")], "alignment"),
            (vec![p(1, "x")], "alignment"),
        ];
        for (preds, kind) in cases {
            match (score(&preds, &anns, AccuracyRule::Literal), kind) {
                (Err(Error::Alignment(_)), "alignment") | (Err(Error::Validation(_)), "validation") => {}
                (other, _) => panic!("{preds:?}: {other:?}"),
            }
        }
        match score(&[p(1, "x"), p(2, "x"), p(7, "x"), p(9, "x")], &anns, AccuracyRule::Literal) {
            Err(Error::Alignment(msg)) => assert!(msg.contains("[7, 9]"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn score_depends_on_answer_multiset(
            picks in proptest::collection::vec(0usize..4, 10),
            pred in 0usize..4,
            rotate in 0usize..10,
        ) {
            let words = ["red", "blue", "two", "yes"];
            let hs: Vec<String> = picks.iter().map(|i| words[*i].to_string()).collect();
            let mut rotated = hs.clone();
            rotated.rotate_left(rotate);
            rotated.reverse();
            for rule in [AccuracyRule::Literal, AccuracyRule::LeaveOneOut] {
                let a = vqa_score(words[pred], &hs, rule).unwrap();
                prop_assert_eq!(a, vqa_score(words[pred], &rotated, rule).unwrap());
                prop_assert!(a.0 <= 30);
            }
            let lit = vqa_score(words[pred], &hs, AccuracyRule::Literal).unwrap();
            prop_assert!([0, 10, 20, 30].contains(&lit.0));
        }

        #[test]
        fn overall_lies_between_buckets(raw in proptest::collection::vec((0u32..4, 0usize..3), 1..40)) {
            let anns: Vec<AnnotationRecord> = raw.iter().enumerate()
                .map(|(i, (_, t))| ann(i as u64, ANSWER_TYPES[*t])).collect();
            let scores: BTreeMap<u64, Score> = raw.iter().enumerate()
                .map(|(i, (s, _))| (i as u64, Score(s * 10))).collect();
            let r = aggregate(&scores, &anns).unwrap();
            let lo = r.per_type.values().cloned().fold(f64::MAX, f64::min);
            let hi = r.per_type.values().cloned().fold(f64::MIN, f64::max);
            prop_assert!(r.overall >= lo - 1e-12 && r.overall <= hi + 1e-12);
        }
    }
}

//! VQA v2 question, annotation and prediction JSON files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

pub const HUMAN_ANSWERS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: u64,
    pub image_id: u64,
    pub question: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub question_id: u64,
    /// `yes/no`, `number` or `other`, kept verbatim.
    pub answer_type: String,
    /// The designated training answer.
    pub multiple_choice_answer: String,
    pub answers: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: u64,
    pub answer: String,
}

fn read_json(path: &Path) -> Result<(Value, String)> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value = parse_json(&text, &name)?;
    Ok((value, name))
}

pub(crate) fn parse_json(text: &str, source_name: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| {
        // serde_json reports 1-based line/column; turn that into a byte offset.
        let offset: usize = text
            .split_inclusive('\n')
            .take(e.line().saturating_sub(1))
            .map(str::len)
            .sum::<usize>()
            + e.column().saturating_sub(1);
        Error::Format {
            source_name: source_name.to_string(),
            offset: offset as u64,
            detail: e.to_string(),
        }
    })
}

fn top_array<'v>(doc: &'v Value, key: &str, source_name: &str) -> Result<&'v Vec<Value>> {
    doc.get(key).and_then(Value::as_array).ok_or_else(|| Error::Parse {
        source_name: source_name.to_string(),
        location: "top level".into(),
        detail: format!("missing \"{key}\" array"),
    })
}

struct Fields<'a> {
    obj: Option<&'a Map<String, Value>>,
    source_name: &'a str,
    location: String,
}

impl<'a> Fields<'a> {
    fn new(value: &'a Value, source_name: &'a str, location: String) -> Self {
        Self {
            obj: value.as_object(),
            source_name,
            location,
        }
    }

    fn error(&self, detail: String) -> Error {
        Error::Parse {
            source_name: self.source_name.to_string(),
            location: self.location.clone(),
            detail,
        }
    }

    fn field(&self, key: &str) -> Result<&'a Value> {
        self.obj
            .and_then(|o| o.get(key))
            .ok_or_else(|| self.error(format!("missing field \"{key}\"")))
    }

    fn u64(&self, key: &str) -> Result<u64> {
        self.field(key)?
            .as_u64()
            .ok_or_else(|| self.error(format!("\"{key}\" is not a non-negative integer")))
    }

    fn string(&self, key: &str) -> Result<String> {
        self.field(key)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| self.error(format!("\"{key}\" is not a string")))
    }
}

pub fn parse_questions(path: &Path) -> Result<Vec<QuestionRecord>> {
    let (doc, name) = read_json(path)?;
    let records = questions_from_value(&doc, &name)?;
    log::info!("parsed {} questions from {name}", records.len());
    Ok(records)
}

pub fn questions_from_value(doc: &Value, source_name: &str) -> Result<Vec<QuestionRecord>> {
    top_array(doc, "questions", source_name)?
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let f = Fields::new(q, source_name, format!("questions[{i}]"));
            let record = QuestionRecord {
                question_id: f.u64("question_id")?,
                image_id: f.u64("image_id")?,
                question: f.string("question")?,
            };
            if record.question.trim().is_empty() {
                return Err(f.error("empty question text".into()));
            }
            Ok(record)
        })
        .collect()
}

pub fn parse_annotations(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let (doc, name) = read_json(path)?;
    let records = annotations_from_value(&doc, &name)?;
    log::info!("parsed {} annotations from {name}", records.len());
    Ok(records)
}

pub fn annotations_from_value(doc: &Value, source_name: &str) -> Result<Vec<AnnotationRecord>> {
    top_array(doc, "annotations", source_name)?
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let f = Fields::new(a, source_name, format!("annotations[{i}]"));
            let question_id = f.u64("question_id")?;
            let answers = f
                .field("answers")?
                .as_array()
                .ok_or_else(|| f.error("\"answers\" is not an array".into()))?
                .iter()
                .enumerate()
                .map(|(j, h)| {
                    Fields::new(h, source_name, format!("annotations[{i}].answers[{j}]"))
                        .string("answer")
                })
                .collect::<Result<Vec<_>>>()?;
            if answers.len() != HUMAN_ANSWERS {
                return Err(Error::Validation(format!(
                    "question {question_id} has {} human answers, expected {HUMAN_ANSWERS}",
                    answers.len()
                )));
            }
            Ok(AnnotationRecord {
                question_id,
                answer_type: f.string("answer_type")?,
                multiple_choice_answer: f.string("multiple_choice_answer")?,
                answers,
            })
        })
        .collect()
}

pub fn questions_to_value(questions: &[QuestionRecord]) -> Value {
    json!({ "questions": questions })
}

pub fn annotations_to_value(annotations: &[AnnotationRecord]) -> Value {
    let list: Vec<Value> = annotations
        .iter()
        .map(|a| {
            let answers: Vec<Value> = a
                .answers
                .iter()
                .enumerate()
                .map(|(i, h)| json!({ "answer": h, "answer_id": i + 1 }))
                .collect();
            json!({
                "question_id": a.question_id,
                "answer_type": a.answer_type,
                "multiple_choice_answer": a.multiple_choice_answer,
                "answers": answers,
            })
        })
        .collect();
    json!({ "annotations": list })
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let (doc, name) = read_json(path)?;
    let list = doc.as_array().ok_or_else(|| Error::Parse {
        source_name: name.clone(),
        location: "top level".into(),
        detail: "expected an array of predictions".into(),
    })?;
    list.iter()
        .enumerate()
        .map(|(i, p)| {
            let f = Fields::new(p, &name, format!("[{i}]"));
            Ok(Prediction {
                question_id: f.u64("question_id")?,
                answer: f.string("answer")?,
            })
        })
        .collect()
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    write_json(path, &serde_json::to_value(predictions)?)
}

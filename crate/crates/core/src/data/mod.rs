//! Dataset ingestion: VQA v2 JSON, answer vocabularies, region-feature
//! files and the synthetic task.

mod answers;
mod dataset;
mod features;
mod synthetic;
mod vqa;

pub use answers::{normalize_answer, AnswerVocab, DEFAULT_ANSWER_VOCAB};
pub use dataset::{Dataset, Split, SplitPaths};
pub use features::{load_region_features, FeatureFile};
pub use synthetic::{
    generate_synthetic, parse_question, question_text, Attribute, SyntheticDataset,
    SyntheticSplit, SyntheticTaskConfig, DEFAULT_COLORS, DEFAULT_SHAPES,
};
pub use vqa::{
    annotations_from_value, annotations_to_value, parse_annotations, parse_questions,
    questions_from_value, questions_to_value, read_predictions, write_json, write_predictions,
    AnnotationRecord, Prediction, QuestionRecord, HUMAN_ANSWERS,
};

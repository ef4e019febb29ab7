use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::features::{load_region_features, FeatureFile};
use super::synthetic::{SyntheticDataset, SyntheticSplit};
use super::vqa::{parse_annotations, parse_questions, AnnotationRecord, QuestionRecord};
use crate::encoders::TokenFeatureStore;
use crate::error::{Error, Result};

/// One split with questions and annotations aligned by position.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub questions: Vec<QuestionRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub features: FeatureFile,
    pub token_features: Option<TokenFeatureStore>,
}

/// Files making up one VQA-format split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPaths {
    pub questions: PathBuf,
    pub annotations: PathBuf,
    pub features: PathBuf,
    pub token_features: Option<PathBuf>,
}

impl Split {
    /// Pairs every question with its annotation (sorted by question id)
    /// and checks that each image has features.
    pub fn new(
        mut questions: Vec<QuestionRecord>,
        annotations: Vec<AnnotationRecord>,
        features: FeatureFile,
        token_features: Option<TokenFeatureStore>,
    ) -> Result<Self> {
        questions.sort_by_key(|q| q.question_id);
        let ids: BTreeSet<u64> = questions.iter().map(|q| q.question_id).collect();
        if ids.len() != questions.len() {
            return Err(Error::Validation("duplicate question ids in split".into()));
        }
        let mut by_id: std::collections::BTreeMap<u64, AnnotationRecord> = annotations
            .into_iter()
            .map(|a| (a.question_id, a))
            .collect();
        let mut aligned = Vec::with_capacity(questions.len());
        let mut missing = Vec::new();
        for q in &questions {
            match by_id.remove(&q.question_id) {
                Some(a) => aligned.push(a),
                None => missing.push(q.question_id),
            }
            if !features.images.contains_key(&q.image_id) {
                return Err(Error::Alignment(format!(
                    "question {} refers to image {} without region features",
                    q.question_id, q.image_id
                )));
            }
            if let Some(tf) = &token_features {
                tf.get(q.question_id)?;
            }
        }
        if !missing.is_empty() || !by_id.is_empty() {
            return Err(Error::Alignment(format!(
                "questions without annotations: {missing:?}; annotations without questions: {:?}",
                by_id.keys().collect::<Vec<_>>()
            )));
        }
        if questions.is_empty() {
            return Err(Error::Validation("split has no questions".into()));
        }
        Ok(Self {
            questions,
            annotations: aligned,
            features,
            token_features,
        })
    }

    pub fn load(paths: &SplitPaths) -> Result<Self> {
        let token_features = paths
            .token_features
            .as_deref()
            .map(TokenFeatureStore::read)
            .transpose()?;
        Self::new(
            parse_questions(&paths.questions)?,
            parse_annotations(&paths.annotations)?,
            load_region_features(&paths.features)?,
            token_features,
        )
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

impl TryFrom<SyntheticSplit> for Split {
    type Error = Error;

    fn try_from(s: SyntheticSplit) -> Result<Self> {
        Split::new(s.questions, s.annotations, s.features, None)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub val: Split,
}

impl Dataset {
    pub fn from_synthetic(data: SyntheticDataset) -> Result<Self> {
        Ok(Self {
            train: data.train.try_into()?,
            val: data.val.try_into()?,
        })
    }

    pub fn load(train: &SplitPaths, val: &SplitPaths) -> Result<Self> {
        let d = Self {
            train: Split::load(train)?,
            val: Split::load(val)?,
        };
        if (d.train.features.regions, d.train.features.dim) != (d.val.features.regions, d.val.features.dim) {
            return Err(Error::Validation(
                "train and val region features have different shapes".into(),
            ));
        }
        Ok(d)
    }
}

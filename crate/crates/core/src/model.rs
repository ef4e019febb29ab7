//! Full question-answering model assembled from named components.
//!
//! Pipeline: word features → question encoder → attention over regions →
//! linear projections of both sides → fusion → answer classifier.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::attention::{build_attention, Attention, AttentionConfig, AttentionInput};
use crate::data::{normalize_answer, AnswerVocab, Split, DEFAULT_ANSWER_VOCAB};
use crate::encoders::{
    build_question_encoder, load_pretrained_vectors, prepare_visual, valid_len, EmbeddingTable,
    QuestionEncoder, QuestionEncoderConfig, VisualKind, VisualMode, Vocabulary, DEFAULT_MAX_LEN,
};
use crate::error::{Error, Result};
use crate::fusion::{build_fusion, Fusion};
use crate::layers::{AnswerLogits, Linear};
use crate::params::{InitRng, ParamGroup, ParamStore};
use crate::tensor::{Activation, Tape, Tensor, Var};

/// Where the encoder's per-token input rows come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    /// Randomly initialized embedding table.
    Learned,
    /// Table read from a word-vector text file.
    Pretrained(PathBuf),
    /// Per-question token features stored alongside the split.
    Ingested,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: String,
    pub hidden: usize,
    pub layers: usize,
    pub embed_dim: usize,
    pub text: TextSource,
    pub trainable_embeddings: bool,
    /// Identity-initialized linear layer on ingested token features.
    pub ingested_adapter: bool,
    pub max_len: usize,
    pub visual: VisualKind,
    pub attention: String,
    pub activation: Activation,
    pub glimpses: usize,
    pub attention_hidden: usize,
    pub l2_normalize: bool,
    pub fusion: String,
    pub question_proj: usize,
    pub visual_proj: usize,
    pub answer_vocab: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small dimensions that train in minutes on one core.
    pub fn desk() -> Self {
        Self {
            encoder: "bigru".into(),
            hidden: 64,
            layers: 1,
            embed_dim: 32,
            text: TextSource::Learned,
            trainable_embeddings: true,
            ingested_adapter: false,
            max_len: DEFAULT_MAX_LEN,
            visual: VisualKind::Regions,
            attention: "none".into(),
            activation: Activation::Relu,
            glimpses: 1,
            attention_hidden: 128,
            l2_normalize: true,
            fusion: "mult".into(),
            question_proj: 128,
            visual_proj: 128,
            answer_vocab: DEFAULT_ANSWER_VOCAB,
        }
    }

    /// Full-size dimensions of the reference architecture.
    pub fn full() -> Self {
        Self {
            encoder: "bilstm".into(),
            hidden: 2048,
            embed_dim: 300,
            attention_hidden: 512,
            question_proj: 1024,
            visual_proj: 1024,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(Error::Config(format!(
                "unknown model preset '{other}' (available: desk, full)"
            ))),
        }
    }

    pub fn encoder_config(&self) -> QuestionEncoderConfig {
        QuestionEncoderConfig {
            kind: self.encoder.clone(),
            hidden: self.hidden,
            layers: self.layers,
            embed_dim: self.embed_dim,
        }
    }

    /// Checks everything that does not depend on the data. Runs before any
    /// model is built or file written.
    pub fn validate(&self) -> Result<()> {
        let encoder = self.encoder_config();
        encoder.validate()?;
        let fusion = build_fusion(&self.fusion)?;
        if self.question_proj == 0 || self.visual_proj == 0 {
            return Err(Error::Config("projection sizes must be positive".into()));
        }
        if fusion.kind() != "concat" && self.question_proj != self.visual_proj {
            return Err(Error::Config(format!(
                "{} fusion needs equal projection sizes, got question {} and visual {}",
                fusion.kind(),
                self.question_proj,
                self.visual_proj
            )));
        }
        if self.max_len == 0 || self.answer_vocab == 0 {
            return Err(Error::Config("max_len and answer_vocab must be positive".into()));
        }
        if self.ingested_adapter && self.text != TextSource::Ingested {
            return Err(Error::Config(
                "ingested_adapter only applies to text = ingested".into(),
            ));
        }
        // Word-level widths are known before building: recurrent encoders
        // always emit them, linear_gap never does.
        let word_dim = (self.encoder != "linear_gap").then_some(self.hidden);
        self.attention_config(1, 1, word_dim).validate()
    }

    fn attention_config(&self, region_dim: usize, question_dim: usize, word_dim: Option<usize>) -> AttentionConfig {
        AttentionConfig {
            kind: self.attention.clone(),
            activation: self.activation,
            glimpses: self.glimpses,
            hidden: self.attention_hidden,
            l2_normalize: self.l2_normalize,
            region_dim,
            question_dim,
            word_dim,
        }
    }
}

/// Facts about the data a model needs at construction time.
#[derive(Clone, Debug)]
pub struct DataShape {
    pub vocab: Vocabulary,
    pub answers: AnswerVocab,
    pub regions: usize,
    pub region_dim: usize,
    /// Width of ingested token features, when the split has them.
    pub token_dim: Option<usize>,
}

impl DataShape {
    /// Question vocabulary from the training questions; answer vocabulary
    /// from the human answers of both splits.
    pub fn from_splits(train: &Split, val: &Split, answer_vocab: usize) -> Result<Self> {
        let vocab = Vocabulary::build(train.questions.iter().map(|q| q.question.as_str()));
        let all: Vec<_> = train.annotations.iter().chain(&val.annotations).cloned().collect();
        let answers = AnswerVocab::build(&all, answer_vocab)?;
        Ok(Self {
            vocab,
            answers,
            regions: train.features.regions,
            region_dim: train.features.dim,
            token_dim: train.token_features.as_ref().and_then(|t| t.dim()),
        })
    }
}

/// Model-ready form of one question.
#[derive(Clone, Debug)]
pub struct Example {
    pub question_id: u64,
    /// Token ids padded to `max_len`; empty with ingested text.
    pub tokens: Vec<usize>,
    pub valid_len: usize,
    pub token_features: Option<Tensor>,
    /// Regions already adapted to the visual mode.
    pub regions: Tensor,
    /// Answer index of the designated answer, if in the vocabulary.
    pub target: Option<usize>,
}

#[derive(Debug)]
enum TextInput {
    Table(EmbeddingTable),
    Ingested { adapter: Option<Linear> },
}

#[derive(Debug)]
pub struct VqaModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub vocab: Vocabulary,
    pub answers: AnswerVocab,
    pub visual_mode: VisualMode,
    text: TextInput,
    encoder: Box<dyn QuestionEncoder>,
    attention: Box<dyn Attention>,
    question_proj: Linear,
    visual_proj: Linear,
    fusion: Box<dyn Fusion>,
    classifier: Linear,
}

impl VqaModel {
    pub fn build(config: &ModelConfig, shape: DataShape, rng: &mut InitRng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let text = match &config.text {
            TextSource::Learned => TextInput::Table(EmbeddingTable::random(
                &mut store,
                "embedding",
                shape.vocab.len(),
                config.embed_dim,
                config.trainable_embeddings,
                rng,
            )),
            TextSource::Pretrained(path) => {
                let (table, _) = load_pretrained_vectors(
                    &mut store,
                    "embedding",
                    path,
                    &shape.vocab,
                    config.trainable_embeddings,
                    rng,
                )?;
                if table.dim != config.embed_dim {
                    return Err(Error::Config(format!(
                        "word vectors in {} have dimension {}, config says {}",
                        path.display(),
                        table.dim,
                        config.embed_dim
                    )));
                }
                TextInput::Table(table)
            }
            TextSource::Ingested => {
                let dim = shape.token_dim.ok_or_else(|| {
                    Error::Config("text = ingested but the data has no token features".into())
                })?;
                if dim != config.embed_dim {
                    return Err(Error::Config(format!(
                        "token features have dimension {dim}, config says {}",
                        config.embed_dim
                    )));
                }
                let adapter = config.ingested_adapter.then(|| {
                    let layer = Linear::identity(&mut store, "adapter", dim);
                    store.set_group(layer.weight, ParamGroup::Ingested);
                    store.set_group(layer.bias, ParamGroup::Ingested);
                    layer
                });
                TextInput::Ingested { adapter }
            }
        };
        let encoder = build_question_encoder(&config.encoder_config(), "encoder", &mut store, rng)?;
        let visual_mode = match config.visual {
            VisualKind::Regions => VisualMode::regions(shape.regions, shape.region_dim)?,
            VisualKind::PooledVector => VisualMode::pooled(shape.region_dim)?,
        };
        let attention = build_attention(
            &config.attention_config(shape.region_dim, encoder.output_dim(), encoder.word_dim()),
            "attention",
            &mut store,
            rng,
        )?;
        let question_proj = Linear::new(
            &mut store,
            "question_proj",
            encoder.output_dim(),
            config.question_proj,
            rng,
        );
        let visual_proj = Linear::new(
            &mut store,
            "visual_proj",
            attention.output_dim(),
            config.visual_proj,
            rng,
        );
        let fusion = build_fusion(&config.fusion)?;
        let fused = fusion.output_dim(config.question_proj, config.visual_proj)?;
        let classifier = Linear::new(&mut store, "classifier", fused, shape.answers.len(), rng);
        Ok(Self {
            config: config.clone(),
            store,
            vocab: shape.vocab,
            answers: shape.answers,
            visual_mode,
            text,
            encoder,
            attention,
            question_proj,
            visual_proj,
            fusion,
            classifier,
        })
    }

    /// Trainable scalars; frozen tables are excluded.
    pub fn count_parameters(&self) -> usize {
        self.store.count_trainable()
    }

    pub fn embedding(&self) -> Option<&EmbeddingTable> {
        match &self.text {
            TextInput::Table(t) => Some(t),
            TextInput::Ingested { .. } => None,
        }
    }

    pub fn prepare(&self, split: &Split) -> Result<Vec<Example>> {
        split
            .questions
            .iter()
            .zip(&split.annotations)
            .map(|(q, a)| {
                let (tokens, token_features, valid) = match &self.text {
                    TextInput::Table(_) => {
                        let ids = self.vocab.tokenize(&q.question, self.config.max_len);
                        let n = valid_len(&ids);
                        (ids, None, n)
                    }
                    TextInput::Ingested { .. } => {
                        let tf = split
                            .token_features
                            .as_ref()
                            .ok_or_else(|| Error::Lookup("split has no token features".into()))?
                            .get(q.question_id)?
                            .clone();
                        let n = tf.shape()[0];
                        (Vec::new(), Some(tf), n)
                    }
                };
                let regions = prepare_visual(split.features.get(q.image_id)?, &self.visual_mode)?;
                Ok(Example {
                    question_id: q.question_id,
                    tokens,
                    valid_len: valid,
                    token_features,
                    regions: regions.into_matrix(),
                    target: self.answers.get(&normalize_answer(&a.multiple_choice_answer)),
                })
            })
            .collect()
    }

    /// Answer logits for one example.
    pub fn forward<'t>(&self, tape: &'t Tape, example: &Example) -> Result<Var<'t>> {
        self.forward_with(tape, &self.store, example)
    }

    /// [`forward`](Self::forward) with parameter values taken from `store`,
    /// which must share this model's layout.
    pub fn forward_with<'t>(&self, tape: &'t Tape, store: &ParamStore, example: &Example) -> Result<Var<'t>> {
        let feats = match (&self.text, &example.token_features) {
            (TextInput::Table(table), _) => table.embed(tape, store, &example.tokens)?,
            (TextInput::Ingested { adapter }, Some(tf)) => {
                let x = tape.constant(tf.clone());
                match adapter {
                    Some(layer) => layer.forward(tape, store, &x, None)?,
                    None => x,
                }
            }
            (TextInput::Ingested { .. }, None) => {
                return Err(Error::Contract(format!(
                    "question {} has no token features",
                    example.question_id
                )))
            }
        };
        let encoded = self.encoder.encode(tape, store, &feats, example.valid_len)?;
        let attended = self.attention.attend(
            tape,
            store,
            &AttentionInput {
                regions: tape.constant(example.regions.clone()),
                question: encoded.q,
                words: encoded.words,
                valid_len: example.valid_len,
            },
        )?;
        let q = self.question_proj.forward(tape, store, &encoded.q, None)?;
        let v = self.visual_proj.forward(tape, store, &attended.visual, None)?;
        let fused = self.fusion.fuse(&q, &v)?;
        self.classifier.forward(tape, store, &fused, None)
    }

    pub fn predict(&self, example: &Example) -> Result<AnswerLogits> {
        let tape = Tape::new();
        let logits = self.forward(&tape, example)?;
        AnswerLogits::from_logits(logits.value())
    }

    pub fn predict_answer(&self, example: &Example) -> Result<&str> {
        self.answers.answer(self.predict(example)?.argmax())
    }
}

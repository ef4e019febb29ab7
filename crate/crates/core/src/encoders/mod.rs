//! Question-side encoders and visual feature modes.
//!
//! Question encoders consume an `n×E` matrix of word features (from an
//! [`EmbeddingTable`] or from ingested [`TokenFeatureStore`] records) and
//! produce a [`QuestionEncoding`]. Variants are looked up by name in
//! [`registry`].

mod embedding;
mod linear_gap;
mod recurrent;
mod token_features;
mod visual;
mod vocab;

pub use embedding::{
    load_pretrained_vectors, read_word_vectors, save_word_vectors, EmbeddingTable, LoadedVectors,
    MISSING_ROW_STD,
};
pub use linear_gap::linear_gap_encode;
pub use recurrent::{
    bidirectional_encode, rnn_encode, CellKind, GateWeights, RecurrentLayer, RecurrentStack,
    RnnOutput,
};
pub(crate) use token_features::Cursor;
pub use token_features::{load_precomputed_token_features, TokenFeatureStore};
pub use visual::{adapt_visual, prepare_visual, RegionFeatures, VisualKind, VisualMode};
pub use vocab::{
    clean_tokens, valid_len, Vocabulary, DEFAULT_MAX_LEN, PAD, PAD_TOKEN, UNK, UNK_TOKEN,
};

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::params::{InitRng, ParamId, ParamStore};
use crate::registry::Registry;
use crate::tensor::{Tape, Var};

/// Global question vector plus optional word-level features.
#[derive(Clone, Copy, Debug)]
pub struct QuestionEncoding<'t> {
    pub q: Var<'t>,
    /// n×width, zero rows at PAD positions.
    pub words: Option<Var<'t>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuestionEncoderConfig {
    pub kind: String,
    pub hidden: usize,
    pub layers: usize,
    pub embed_dim: usize,
}

impl QuestionEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        registry().get(&self.kind)?;
        if self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::Config(
                "question encoder sizes must be positive".into(),
            ));
        }
        if !(1..=2).contains(&self.layers) {
            return Err(Error::Config(format!(
                "question encoder layers must be 1 or 2, got {}",
                self.layers
            )));
        }
        Ok(())
    }
}

pub trait QuestionEncoder: Debug + Send + Sync {
    fn kind(&self) -> &'static str;

    /// Width of `q`.
    fn output_dim(&self) -> usize;

    /// Width of the word-level rows, when produced.
    fn word_dim(&self) -> Option<usize>;

    fn param_count(&self) -> usize;

    /// Encodes `feats` (n×E) whose first `valid_len` rows are real tokens.
    fn encode<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        feats: &Var<'t>,
        valid_len: usize,
    ) -> Result<QuestionEncoding<'t>>;
}

pub type EncoderCtor = fn(
    &QuestionEncoderConfig,
    &str,
    &mut ParamStore,
    &mut InitRng,
) -> Result<Box<dyn QuestionEncoder>>;

/// Built-in question encoders: `gru`, `lstm`, `bigru`, `bilstm`,
/// `linear_gap`.
pub fn registry() -> Registry<EncoderCtor> {
    Registry::<EncoderCtor>::new("question encoder")
        .with("gru", build_gru)
        .with("lstm", build_lstm)
        .with("bigru", build_bigru)
        .with("bilstm", build_bilstm)
        .with("linear_gap", LinearGapEncoder::build)
}

macro_rules! rnn_ctor {
    ($name:ident, $cell:expr, $bi:expr) => {
        fn $name(
            c: &QuestionEncoderConfig,
            n: &str,
            s: &mut ParamStore,
            r: &mut InitRng,
        ) -> Result<Box<dyn QuestionEncoder>> {
            RnnEncoder::build(c, n, s, r, $cell, $bi)
        }
    };
}

rnn_ctor!(build_gru, CellKind::Gru, false);
rnn_ctor!(build_lstm, CellKind::Lstm, false);
rnn_ctor!(build_bigru, CellKind::Gru, true);
rnn_ctor!(build_bilstm, CellKind::Lstm, true);

pub fn build_question_encoder(
    config: &QuestionEncoderConfig,
    name: &str,
    store: &mut ParamStore,
    rng: &mut InitRng,
) -> Result<Box<dyn QuestionEncoder>> {
    config.validate()?;
    registry().get(&config.kind)?(config, name, store, rng)
}

/// Unidirectional or bidirectional recurrent encoder.
#[derive(Clone, Debug)]
pub struct RnnEncoder {
    pub kind: &'static str,
    pub forward: RecurrentStack,
    pub backward: Option<RecurrentStack>,
}

impl RnnEncoder {
    fn build(
        config: &QuestionEncoderConfig,
        name: &str,
        store: &mut ParamStore,
        rng: &mut InitRng,
        cell: CellKind,
        bidirectional: bool,
    ) -> Result<Box<dyn QuestionEncoder>> {
        let stack = |dir: &str, store: &mut ParamStore, rng: &mut InitRng| {
            RecurrentStack::new(
                store,
                &format!("{name}.{dir}"),
                cell,
                config.embed_dim,
                config.hidden,
                config.layers,
                rng,
            )
        };
        let forward = stack("fwd", store, rng);
        let backward = bidirectional.then(|| stack("bwd", store, rng));
        let kind = match (cell, bidirectional) {
            (CellKind::Gru, false) => "gru",
            (CellKind::Lstm, false) => "lstm",
            (CellKind::Gru, true) => "bigru",
            (CellKind::Lstm, true) => "bilstm",
        };
        Ok(Box::new(Self {
            kind,
            forward,
            backward,
        }))
    }
}

impl QuestionEncoder for RnnEncoder {
    fn kind(&self) -> &'static str {
        self.kind
    }

    fn output_dim(&self) -> usize {
        self.forward.hidden() + self.backward.as_ref().map_or(0, RecurrentStack::hidden)
    }

    fn word_dim(&self) -> Option<usize> {
        Some(self.output_dim())
    }

    fn param_count(&self) -> usize {
        self.forward.param_count() + self.backward.as_ref().map_or(0, RecurrentStack::param_count)
    }

    fn encode<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        feats: &Var<'t>,
        valid_len: usize,
    ) -> Result<QuestionEncoding<'t>> {
        let out = match &self.backward {
            None => rnn_encode(tape, store, &self.forward, feats, valid_len)?,
            Some(bwd) => bidirectional_encode(tape, store, &self.forward, bwd, feats, valid_len)?,
        };
        Ok(QuestionEncoding {
            q: out.last,
            words: Some(out.states),
        })
    }
}

/// Per-token projection followed by a temporal mean.
#[derive(Clone, Debug)]
pub struct LinearGapEncoder {
    pub weight: ParamId,
    pub embed_dim: usize,
    pub hidden: usize,
}

impl LinearGapEncoder {
    fn build(
        config: &QuestionEncoderConfig,
        name: &str,
        store: &mut ParamStore,
        rng: &mut InitRng,
    ) -> Result<Box<dyn QuestionEncoder>> {
        let weight = store.uniform(
            format!("{name}.weight"),
            vec![config.embed_dim, config.hidden],
            config.embed_dim,
            rng,
        );
        Ok(Box::new(Self {
            weight,
            embed_dim: config.embed_dim,
            hidden: config.hidden,
        }))
    }
}

impl QuestionEncoder for LinearGapEncoder {
    fn kind(&self) -> &'static str {
        "linear_gap"
    }

    fn output_dim(&self) -> usize {
        self.hidden
    }

    fn word_dim(&self) -> Option<usize> {
        None
    }

    fn param_count(&self) -> usize {
        self.embed_dim * self.hidden
    }

    fn encode<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        feats: &Var<'t>,
        valid_len: usize,
    ) -> Result<QuestionEncoding<'t>> {
        let w = tape.param(store, self.weight);
        let (q, _) = linear_gap_encode(tape, feats, &w, valid_len)?;
        Ok(QuestionEncoding { q, words: None })
    }
}

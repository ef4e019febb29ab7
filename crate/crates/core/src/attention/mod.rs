//! Attention over image regions.
//!
//! Every mechanism turns the `k×dv` region matrix into one visual vector,
//! optionally conditioned on the question. Variants are looked up by name
//! in [`registry`]: `none` (mean over regions), `top_down` and
//! `co_attention`.

mod co_attention;
mod top_down;

pub use co_attention::{co_attention, CoAttended};
pub use top_down::{top_down_attention, TopDownVars};

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::params::{InitRng, ParamStore};
use crate::registry::Registry;
use crate::tensor::{Activation, Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig {
    pub kind: String,
    /// Nonlinearity on the joint region-question rows (top-down only).
    pub activation: Activation,
    pub glimpses: usize,
    /// Width of the question projection and joint rows (top-down only).
    pub hidden: usize,
    /// Unit-L2 rows before similarity (co-attention only).
    pub l2_normalize: bool,
    pub region_dim: usize,
    pub question_dim: usize,
    /// Width of the encoder's word-level rows, if it produces them.
    pub word_dim: Option<usize>,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        registry().get(&self.kind)?;
        if self.glimpses == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "attention glimpses and hidden size must be positive".into(),
            ));
        }
        if self.kind == "co_attention" && self.word_dim.is_none() {
            return Err(Error::Config(
                "co_attention needs word-level question features; \
                 the configured question encoder does not produce them"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Per-example inputs.
#[derive(Clone, Copy, Debug)]
pub struct AttentionInput<'t> {
    /// k×dv
    pub regions: Var<'t>,
    pub question: Var<'t>,
    /// n×w, zero rows after `valid_len`.
    pub words: Option<Var<'t>>,
    pub valid_len: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Attended<'t> {
    pub visual: Var<'t>,
    /// Region weights, when the mechanism computes any.
    pub mask: Option<Var<'t>>,
}

pub trait Attention: Debug + Send + Sync {
    fn kind(&self) -> &'static str;

    /// Width of the attended visual vector.
    fn output_dim(&self) -> usize;

    fn param_count(&self) -> usize;

    fn attend<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        input: &AttentionInput<'t>,
    ) -> Result<Attended<'t>>;
}

pub type AttentionCtor =
    fn(&AttentionConfig, &str, &mut ParamStore, &mut InitRng) -> Result<Box<dyn Attention>>;

pub fn registry() -> Registry<AttentionCtor> {
    Registry::<AttentionCtor>::new("attention")
        .with("none", MeanPool::build)
        .with("top_down", TopDown::build)
        .with("co_attention", CoAttention::build)
}

pub fn build_attention(
    config: &AttentionConfig,
    name: &str,
    store: &mut ParamStore,
    rng: &mut InitRng,
) -> Result<Box<dyn Attention>> {
    config.validate()?;
    registry().get(&config.kind)?(config, name, store, rng)
}

/// No attention: regions are averaged.
#[derive(Clone, Debug)]
pub struct MeanPool {
    pub region_dim: usize,
}

impl MeanPool {
    fn build(
        config: &AttentionConfig,
        _: &str,
        _: &mut ParamStore,
        _: &mut InitRng,
    ) -> Result<Box<dyn Attention>> {
        Ok(Box::new(Self {
            region_dim: config.region_dim,
        }))
    }
}

impl Attention for MeanPool {
    fn kind(&self) -> &'static str {
        "none"
    }

    fn output_dim(&self) -> usize {
        self.region_dim
    }

    fn param_count(&self) -> usize {
        0
    }

    fn attend<'t>(
        &self,
        _: &'t Tape,
        _: &ParamStore,
        input: &AttentionInput<'t>,
    ) -> Result<Attended<'t>> {
        Ok(Attended {
            visual: input.regions.mean(0)?,
            mask: None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TopDown {
    pub question: Linear,
    pub joint: Linear,
    pub glimpse: Linear,
    pub activation: Activation,
    pub region_dim: usize,
    pub glimpses: usize,
}

impl TopDown {
    fn build(
        config: &AttentionConfig,
        name: &str,
        store: &mut ParamStore,
        rng: &mut InitRng,
    ) -> Result<Box<dyn Attention>> {
        let a = config.hidden;
        Ok(Box::new(Self {
            question: Linear::new(store, &format!("{name}.question"), config.question_dim, a, rng),
            joint: Linear::new(store, &format!("{name}.joint"), config.region_dim + a, a, rng),
            glimpse: Linear::new(store, &format!("{name}.glimpse"), a, config.glimpses, rng),
            activation: config.activation,
            region_dim: config.region_dim,
            glimpses: config.glimpses,
        }))
    }

    pub fn bind<'t>(&self, tape: &'t Tape, store: &ParamStore) -> TopDownVars<'t> {
        TopDownVars {
            question_weight: tape.param(store, self.question.weight),
            question_bias: tape.param(store, self.question.bias),
            joint_weight: tape.param(store, self.joint.weight),
            joint_bias: tape.param(store, self.joint.bias),
            glimpse_weight: tape.param(store, self.glimpse.weight),
            glimpse_bias: tape.param(store, self.glimpse.bias),
        }
    }
}

impl Attention for TopDown {
    fn kind(&self) -> &'static str {
        "top_down"
    }

    fn output_dim(&self) -> usize {
        self.region_dim * self.glimpses
    }

    fn param_count(&self) -> usize {
        self.question.param_count() + self.joint.param_count() + self.glimpse.param_count()
    }

    fn attend<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        input: &AttentionInput<'t>,
    ) -> Result<Attended<'t>> {
        let vars = self.bind(tape, store);
        let (visual, mask) =
            top_down_attention(&input.regions, &input.question, &vars, self.activation)?;
        Ok(Attended {
            visual,
            mask: Some(mask),
        })
    }
}

/// Word rows are projected to the region width before [`co_attention`].
#[derive(Clone, Debug)]
pub struct CoAttention {
    pub words: Linear,
    pub normalize: bool,
    pub region_dim: usize,
}

impl CoAttention {
    fn build(
        config: &AttentionConfig,
        name: &str,
        store: &mut ParamStore,
        rng: &mut InitRng,
    ) -> Result<Box<dyn Attention>> {
        let word_dim = config.word_dim.ok_or_else(|| {
            Error::Config("co_attention needs word-level question features".into())
        })?;
        Ok(Box::new(Self {
            words: Linear::new(store, &format!("{name}.words"), word_dim, config.region_dim, rng),
            normalize: config.l2_normalize,
            region_dim: config.region_dim,
        }))
    }
}

impl Attention for CoAttention {
    fn kind(&self) -> &'static str {
        "co_attention"
    }

    fn output_dim(&self) -> usize {
        self.region_dim
    }

    fn param_count(&self) -> usize {
        self.words.param_count()
    }

    fn attend<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        input: &AttentionInput<'t>,
    ) -> Result<Attended<'t>> {
        let words = input
            .words
            .ok_or_else(|| Error::Contract("co_attention called without word features".into()))?;
        let n = words.shape()[0];
        let valid = input.valid_len.clamp(1, n);
        let rows = if valid == n {
            words
        } else {
            words.gather_rows(&(0..valid).collect::<Vec<_>>(), None)?
        };
        let projected = self.words.forward(tape, store, &rows, None)?;
        let out = co_attention(&input.regions, &projected, self.normalize)?;
        Ok(Attended {
            visual: out.visual,
            mask: Some(out.weights),
        })
    }
}

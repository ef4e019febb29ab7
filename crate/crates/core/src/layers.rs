//! Fully-connected projections and the answer classifier.

use crate::error::{Error, Result};
use crate::params::{InitRng, ParamId, ParamStore};
use crate::tensor::{Activation, Tape, Tensor, Var};

/// `φ(x·W + b)`, identity when `activation` is `None`. Works on a vector or
/// on every row of a matrix.
pub fn project<'t>(
    x: &Var<'t>,
    weight: &Var<'t>,
    bias: &Var<'t>,
    activation: Option<Activation>,
) -> Result<Var<'t>> {
    let y = x.matmul(weight)?.add_row(bias)?;
    Ok(match activation {
        Some(a) => y.activation(a),
        None => y,
    })
}

/// Weight and bias of one fully-connected layer.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut InitRng,
    ) -> Self {
        let weight = store.uniform(format!("{name}.weight"), vec![in_dim, out_dim], in_dim, rng);
        let bias = store.uniform(format!("{name}.bias"), vec![out_dim], in_dim, rng);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// Square layer initialized to the identity map with zero bias.
    pub fn identity(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), Tensor::identity(dim), true);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![dim]), true);
        Self {
            weight,
            bias,
            in_dim: dim,
            out_dim: dim,
        }
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        x: &Var<'t>,
        activation: Option<Activation>,
    ) -> Result<Var<'t>> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        project(x, &w, &b, activation)
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Answer scores for one question.
#[derive(Clone, Debug)]
pub struct AnswerLogits {
    pub logits: Tensor,
    pub probabilities: Tensor,
}

impl AnswerLogits {
    pub fn from_logits(logits: Tensor) -> Result<Self> {
        let probabilities = crate::tensor::softmax(&logits, 0)?;
        Ok(Self {
            logits,
            probabilities,
        })
    }

    /// Index of the highest logit; the first one wins ties.
    pub fn argmax(&self) -> usize {
        argmax(self.logits.data())
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `fused·W_out + b` followed by a softmax over answers.
pub fn classify<'t>(fused: &Var<'t>, weight: &Var<'t>, bias: &Var<'t>) -> Result<Var<'t>> {
    if fused.shape().len() != 1 {
        return Err(Error::dim("classify", &fused.shape(), &weight.shape()));
    }
    project(fused, weight, bias, None)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::tensor::gradcheck::{self, random_tensor};

    #[test]
    fn project_examples() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.5, -2.0]));
        let eye = tape.constant(Tensor::identity(2));
        let zero = tape.constant(Tensor::zeros(vec![2]));
        assert_eq!(project(&x, &eye, &zero, None).unwrap().value(), x.value());

        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let w = tape.constant(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap());
        let b = tape.constant(Tensor::zeros(vec![1]));
        assert_eq!(project(&x, &w, &b, None).unwrap().value().data(), &[3.0]);

        let bad = tape.constant(Tensor::zeros(vec![3, 1]));
        assert!(matches!(
            project(&x, &bad, &b, None),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn project_gradients() {
        let mut rng = InitRng::seed_from_u64(5);
        for act in [None, Some(Activation::Tanh), Some(Activation::GatedTanh)] {
            for _ in 0..5 {
                let inputs = vec![
                    random_tensor(&[4], -2.0, 2.0, &mut rng),
                    random_tensor(&[4, 3], -2.0, 2.0, &mut rng),
                    random_tensor(&[3], -2.0, 2.0, &mut rng),
                ];
                let r = gradcheck::check(&inputs, gradcheck::STEP, move |_, v| {
                    project(&v[0], &v[1], &v[2], act)
                })
                .unwrap();
                assert!(r.passes(1e-5), "{r:?}");
            }
        }
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let tape = Tape::new();
        let fused = tape.constant(Tensor::vector(vec![0.3, -1.0, 2.0]));
        let w = tape.constant(Tensor::zeros(vec![3, 5]));
        let b = tape.constant(Tensor::zeros(vec![5]));
        let out = AnswerLogits::from_logits(classify(&fused, &w, &b).unwrap().value()).unwrap();
        for p in out.probabilities.data() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn classifier_probabilities_and_argmax() {
        let mut rng = InitRng::seed_from_u64(8);
        for _ in 0..20 {
            let tape = Tape::new();
            let fused = tape.constant(random_tensor(&[6], -2.0, 2.0, &mut rng));
            let w = tape.constant(random_tensor(&[6, 9], -2.0, 2.0, &mut rng));
            let b = tape.constant(random_tensor(&[9], -2.0, 2.0, &mut rng));
            let out =
                AnswerLogits::from_logits(classify(&fused, &w, &b).unwrap().value()).unwrap();
            let total: f64 = out.probabilities.data().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            assert_eq!(argmax(out.probabilities.data()), out.argmax());
        }
    }

    #[test]
    fn classify_gradients() {
        let mut rng = InitRng::seed_from_u64(9);
        for _ in 0..5 {
            let inputs = vec![
                random_tensor(&[5], -2.0, 2.0, &mut rng),
                random_tensor(&[5, 4], -2.0, 2.0, &mut rng),
                random_tensor(&[4], -2.0, 2.0, &mut rng),
            ];
            let r = gradcheck::check(&inputs, gradcheck::STEP, |_, v| {
                classify(&v[0], &v[1], &v[2])?.cross_entropy(2)
            })
            .unwrap();
            assert!(r.passes(1e-5), "{r:?}");
        }
    }
}

//! Fusion of the projected question and visual vectors.

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::tensor::Var;

pub trait Fusion: Debug + Send + Sync {
    fn kind(&self) -> &'static str;

    /// Width of the fused vector; errors when the input widths do not
    /// suit the strategy.
    fn output_dim(&self, question: usize, visual: usize) -> Result<usize>;

    fn fuse<'t>(&self, question: &Var<'t>, visual: &Var<'t>) -> Result<Var<'t>>;
}

/// Element-wise (Hadamard) product.
#[derive(Clone, Copy, Debug, Default)]
pub struct Mult;

#[derive(Clone, Copy, Debug, Default)]
pub struct Concat;

#[derive(Clone, Copy, Debug, Default)]
pub struct Sum;

fn vectors(op: &'static str, a: &Var<'_>, b: &Var<'_>) -> Result<()> {
    if a.shape().len() != 1 || b.shape().len() != 1 {
        return Err(Error::dim(op, &a.shape(), &b.shape()));
    }
    Ok(())
}

fn same_width(op: &'static str, question: usize, visual: usize) -> Result<usize> {
    if question != visual {
        return Err(Error::dim(op, &[question], &[visual]));
    }
    Ok(question)
}

impl Fusion for Mult {
    fn kind(&self) -> &'static str {
        "mult"
    }

    fn output_dim(&self, question: usize, visual: usize) -> Result<usize> {
        same_width("fuse mult", question, visual)
    }

    fn fuse<'t>(&self, question: &Var<'t>, visual: &Var<'t>) -> Result<Var<'t>> {
        vectors("fuse mult", question, visual)?;
        question.mul(visual)
    }
}

impl Fusion for Concat {
    fn kind(&self) -> &'static str {
        "concat"
    }

    fn output_dim(&self, question: usize, visual: usize) -> Result<usize> {
        Ok(question + visual)
    }

    fn fuse<'t>(&self, question: &Var<'t>, visual: &Var<'t>) -> Result<Var<'t>> {
        vectors("fuse concat", question, visual)?;
        question.concat(visual, 0)
    }
}

impl Fusion for Sum {
    fn kind(&self) -> &'static str {
        "sum"
    }

    fn output_dim(&self, question: usize, visual: usize) -> Result<usize> {
        same_width("fuse sum", question, visual)
    }

    fn fuse<'t>(&self, question: &Var<'t>, visual: &Var<'t>) -> Result<Var<'t>> {
        vectors("fuse sum", question, visual)?;
        question.add(visual)
    }
}

pub type FusionCtor = fn() -> Box<dyn Fusion>;

/// Built-in fusion strategies: `mult`, `concat`, `sum`.
pub fn registry() -> Registry<FusionCtor> {
    Registry::<FusionCtor>::new("fusion strategy")
        .with("mult", || Box::new(Mult))
        .with("concat", || Box::new(Concat))
        .with("sum", || Box::new(Sum))
}

pub fn build_fusion(name: &str) -> Result<Box<dyn Fusion>> {
    Ok(registry().get(name)?())
}

/// Fuses two vectors with the strategy registered as `strategy`.
pub fn fuse<'t>(a: &Var<'t>, b: &Var<'t>, strategy: &str) -> Result<Var<'t>> {
    build_fusion(strategy)?.fuse(a, b)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::params::InitRng;
    use crate::tensor::gradcheck::{self, random_tensor};
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn identities_and_hand_values() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.5, -2.0, 0.25]));
        let ones = tape.constant(Tensor::full(vec![3], 1.0));
        let zeros = tape.constant(Tensor::zeros(vec![3]));
        assert_eq!(fuse(&a, &ones, "mult").unwrap().value(), a.value());
        assert_eq!(fuse(&a, &zeros, "sum").unwrap().value(), a.value());

        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        assert_eq!(fuse(&x, &y, "mult").unwrap().value().data(), &[3.0, 8.0]);
        assert_eq!(
            fuse(&x, &y, "concat").unwrap().value().data(),
            &[1.0, 2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn dimension_rules() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(vec![2]));
        let b = tape.constant(Tensor::zeros(vec![3]));
        assert!(matches!(fuse(&a, &b, "mult"), Err(Error::Dimension { .. })));
        assert!(matches!(fuse(&a, &b, "sum"), Err(Error::Dimension { .. })));
        assert_eq!(fuse(&a, &b, "concat").unwrap().shape(), vec![5]);
        assert!(matches!(fuse(&a, &a, "outer"), Err(Error::Config(_))));
    }

    #[test]
    fn commutativity() {
        let mut rng = InitRng::seed_from_u64(1);
        let tape = Tape::new();
        let a = tape.constant(random_tensor(&[4], -1.0, 1.0, &mut rng));
        let b = tape.constant(random_tensor(&[4], -1.0, 1.0, &mut rng));
        for s in ["mult", "sum"] {
            assert_eq!(fuse(&a, &b, s).unwrap().value(), fuse(&b, &a, s).unwrap().value());
        }
        assert_ne!(
            fuse(&a, &b, "concat").unwrap().value(),
            fuse(&b, &a, "concat").unwrap().value()
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = InitRng::seed_from_u64(2);
        for strategy in registry().names() {
            for n in 1..=5 {
                let inputs = vec![
                    random_tensor(&[n], -2.0, 2.0, &mut rng),
                    random_tensor(&[n], -2.0, 2.0, &mut rng),
                ];
                let r = gradcheck::check(&inputs, gradcheck::STEP, |_, v| {
                    fuse(&v[0], &v[1], strategy)
                })
                .unwrap();
                assert!(r.passes(1e-5), "{strategy}: {r:?}");
            }
        }
    }
}

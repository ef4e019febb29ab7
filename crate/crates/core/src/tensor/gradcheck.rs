//! Central finite-difference checking of reverse-mode gradients.
//!
//! The numeric side only ever evaluates forward values on throwaway tapes,
//! so it shares no code with the backward rules it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::params::ParamStore;

/// Default perturbation for central differences.
pub const STEP: f64 = 1e-6;

/// Denominator floor for the relative error, so gradients that are
/// numerically zero are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradReport {
    pub max_rel_error: f64,
    /// `(input index, element index)` of the worst mismatch.
    pub worst_at: (usize, usize),
    pub checked: usize,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Uniform random tensor in `[lo, hi)`.
pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor {
    let mut t = Tensor::zeros(shape.to_vec());
    for x in t.data_mut() {
        *x = rng.random_range(lo..hi);
    }
    t
}

/// Compares backward gradients of `f` against central differences for
/// every element of every input. Non-scalar outputs are contracted with
/// fixed pseudo-random weights first, so that e.g. softmax (whose plain sum
/// is constant) still gets a non-trivial check.
pub fn check<F>(inputs: &[Tensor], step: f64, f: F) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |vals: &[Tensor], track: bool| -> Result<(f64, Vec<Tensor>)> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = vals.iter().map(|v| tape.leaf(v.clone(), track)).collect();
        let out = f(&tape, &vars)?;
        let loss = contract(&tape, out)?;
        let value = loss.item();
        if !track {
            return Ok((value, Vec::new()));
        }
        let grads = tape.backward(loss)?;
        let g = vars
            .iter()
            .map(|v| grads.wrt(v).cloned().expect("leaf tracked"))
            .collect();
        Ok((value, g))
    };

    let (_, analytic) = eval(inputs, true)?;
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_at: (0, 0),
        checked: 0,
    };
    let mut work = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for ei in 0..input.numel() {
            let orig = input.data()[ei];
            work[ti].data_mut()[ei] = orig + step;
            let (plus, _) = eval(&work, false)?;
            work[ti].data_mut()[ei] = orig - step;
            let (minus, _) = eval(&work, false)?;
            work[ti].data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic[ti].data()[ei], numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_at = (ti, ei);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Like [`check`], but perturbs the trainable entries of `store` that `f`
/// binds through [`Tape::param`]. `worst_at.0` is the parameter index.
pub fn check_params<F>(store: &ParamStore, step: f64, f: F) -> Result<GradReport>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let eval = |s: &ParamStore| -> Result<f64> {
        let tape = Tape::new();
        let out = f(&tape, s)?;
        Ok(contract(&tape, out)?.item())
    };
    let tape = Tape::new();
    let out = f(&tape, store)?;
    let grads = tape.backward(contract(&tape, out)?)?;
    let analytic: std::collections::HashMap<usize, Tensor> = grads
        .params()
        .map(|(id, g)| (id.index(), g.clone()))
        .collect();
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_at: (0, 0),
        checked: 0,
    };
    let mut work = store.clone();
    let ids: Vec<_> = store.ids().filter(|id| store.get(*id).trainable).collect();
    for id in ids {
        for ei in 0..store.value(id).numel() {
            let orig = store.value(id).data()[ei];
            work.value_mut(id).data_mut()[ei] = orig + step;
            let plus = eval(&work)?;
            work.value_mut(id).data_mut()[ei] = orig - step;
            let minus = eval(&work)?;
            work.value_mut(id).data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(&id.index()).map_or(0.0, |g| g.data()[ei]);
            let err = relative_error(a, numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_at = (id.index(), ei);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

fn contract<'t>(tape: &'t Tape, out: Var<'t>) -> Result<Var<'t>> {
    let shape = out.shape();
    if shape.iter().product::<usize>() == 1 {
        return out.reshape(Vec::<usize>::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let weights = random_tensor(&shape, -1.0, 1.0, &mut rng);
    Ok(out.mul(&tape.constant(weights))?.sum_all())
}

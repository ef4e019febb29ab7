use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{self, random_tensor};
use super::*;
use crate::error::Error;
use crate::params::ParamStore;

const TOL: f64 = 1e-5;

fn m(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
    a.max_abs_diff(b).is_some_and(|d| d <= tol)
}

#[test]
fn matmul_examples() {
    let tape = Tape::new();
    let i2 = tape.constant(Tensor::identity(2));
    let a = tape.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
    assert_eq!(i2.matmul(&a).unwrap().value(), a.value());

    let row = tape.constant(m(&[&[1.0, 2.0]]));
    let col = tape.constant(m(&[&[3.0], &[4.0]]));
    assert_eq!(row.matmul(&col).unwrap().value(), m(&[&[11.0]]));
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::zeros(vec![2, 3]));
    let b = tape.constant(Tensor::zeros(vec![2, 3]));
    match a.matmul(&b) {
        Err(Error::Dimension { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn grad_of_summed_product_is_column_sums() {
    // d/dA sum(A·B) = 1·Bᵀ: every row equals the row sums of B.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_tensor(&[3, 4], -2.0, 2.0, &mut rng);
    let b = random_tensor(&[4, 5], -2.0, 2.0, &mut rng);
    let tape = Tape::new();
    let av = tape.leaf(a.clone(), true);
    let bv = tape.leaf(b.clone(), false);
    let loss = av.matmul(&bv).unwrap().sum_all();
    let grads = tape.backward(loss).unwrap();
    let ga = grads.wrt(&av).unwrap();
    for r in 0..3 {
        for k in 0..4 {
            let expected: f64 = b.row(k).iter().sum();
            assert!((ga.row(r)[k] - expected).abs() < 1e-12);
        }
    }
    let report = gradcheck::check(&[a, b], gradcheck::STEP, |_, v| {
        Ok(v[0].matmul(&v[1])?.sum_all())
    })
    .unwrap();
    assert!(report.passes(TOL), "{report:?}");
}

#[test]
fn softmax_examples() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
    let y = x.softmax(0).unwrap().value();
    for v in y.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let x = tape.constant(Tensor::vector(vec![0.0, 2f64.ln()]));
    let y = x.softmax(0).unwrap().value();
    assert!((y.data()[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!((y.data()[1] - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn softmax_rejects_non_finite_and_bad_axis() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![0.0, f64::NAN]));
    assert!(matches!(x.softmax(0), Err(Error::NumericDomain { .. })));
    let x = tape.constant(Tensor::vector(vec![0.0, 1.0]));
    assert!(x.softmax(1).is_err());
}

#[test]
fn l2_normalize_examples() {
    let tape = Tape::new();
    let x = tape.constant(m(&[&[3.0, 4.0]]));
    let (y, flags) = x.l2_normalize(1).unwrap();
    assert!(close(&y.value(), &m(&[&[0.6, 0.8]]), 1e-15));
    assert_eq!(flags, vec![false]);

    let unit = tape.constant(m(&[&[0.6, 0.8]]));
    let (y, _) = unit.l2_normalize(1).unwrap();
    assert!(close(&y.value(), &unit.value(), 1e-15));

    let zero = tape.constant(m(&[&[0.0, 0.0]]));
    let (y, flags) = zero.l2_normalize(1).unwrap();
    assert_eq!(y.value(), zero.value());
    assert_eq!(flags, vec![true]);
}

#[test]
fn cross_entropy_examples() {
    let tape = Tape::new();
    let c = 7;
    let x = tape.constant(Tensor::zeros(vec![c]));
    let loss = x.cross_entropy(3).unwrap().item();
    assert!((loss - (c as f64).ln()).abs() < 1e-14);

    let mut logits = vec![0.0; 5];
    logits[2] = 30.0;
    let x = tape.constant(Tensor::vector(logits));
    assert!(x.cross_entropy(2).unwrap().item() < 1e-9);

    assert!(matches!(x.cross_entropy(5), Err(Error::Index { .. })));
}

#[test]
fn cross_entropy_gradient_is_probs_minus_onehot() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let logits = random_tensor(&[6], -2.0, 2.0, &mut rng);
    let tape = Tape::new();
    let x = tape.leaf(logits.clone(), true);
    let p = x.softmax(0).unwrap().value();
    let loss = x.cross_entropy(4).unwrap();
    let g = tape.backward(loss).unwrap().wrt(&x).unwrap().clone();
    for (i, (gv, pv)) in g.data().iter().zip(p.data()).enumerate() {
        let onehot = if i == 4 { 1.0 } else { 0.0 };
        assert!((gv - (pv - onehot)).abs() < 1e-14);
    }
}

#[test]
fn shape_op_examples() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::vector(vec![1.0]));
    let b = tape.constant(Tensor::vector(vec![2.0]));
    assert_eq!(a.concat(&b, 0).unwrap().value(), Tensor::vector(vec![1.0, 2.0]));

    let x = tape.constant(m(&[&[1.0, 3.0], &[5.0, 7.0]]));
    assert_eq!(x.mean(0).unwrap().value(), Tensor::vector(vec![3.0, 5.0]));
    assert_eq!(x.sum(1).unwrap().value(), Tensor::vector(vec![4.0, 12.0]));
    assert!(x.reshape(vec![3]).is_err());
    let c = tape.constant(Tensor::zeros(vec![3, 3]));
    assert!(matches!(x.concat(&c, 0), Err(Error::Dimension { .. })));
}

#[test]
fn backward_examples_and_contracts() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0), true);
    let y = x.mul(&x).unwrap();
    let grads = tape.backward(y).unwrap();
    assert_eq!(grads.wrt(&x).unwrap().item(), 6.0);
    // second replay is an error, not accumulation
    assert!(matches!(tape.backward(y), Err(Error::Contract(_))));

    let tape = Tape::new();
    let v = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
    assert!(matches!(tape.backward(v), Err(Error::Contract(_))));
}

#[test]
fn unreached_leaves_get_zero_gradients() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
    let unused = tape.leaf(Tensor::zeros(vec![2, 3]), true);
    let loss = x.sum_all();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.wrt(&unused).unwrap(), &Tensor::zeros(vec![2, 3]));
}

#[test]
fn parameters_bind_once_and_collect_gradients() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::vector(vec![2.0, -1.0]), true);
    let frozen = store.add("f", Tensor::vector(vec![1.0, 1.0]), false);
    let tape = Tape::new();
    let a = tape.param(&store, w);
    let b = tape.param(&store, w);
    let f = tape.param(&store, frozen);
    // loss = sum(w ⊙ w ⊙ f) → grad 2w
    let loss = a.mul(&b).unwrap().mul(&f).unwrap().sum_all();
    let grads = tape.backward(loss).unwrap();
    grads.accumulate_into(&mut store);
    assert_eq!(store.get(w).grad.as_ref().unwrap().data(), &[4.0, -2.0]);
    assert!(store.get(frozen).grad.is_none());
}

#[test]
fn gather_rows_skips_frozen_row() {
    let tape = Tape::new();
    let table = tape.leaf(m(&[&[0.0, 0.0], &[1.0, 2.0], &[3.0, 4.0]]), true);
    let rows = table.gather_rows(&[2, 0, 2], Some(0)).unwrap();
    assert_eq!(rows.value(), m(&[&[3.0, 4.0], &[0.0, 0.0], &[3.0, 4.0]]));
    let grads = tape.backward(rows.sum_all()).unwrap();
    assert_eq!(grads.wrt(&table).unwrap().data(), &[0.0, 0.0, 0.0, 0.0, 2.0, 2.0]);
    assert!(matches!(
        table.gather_rows(&[3], None),
        Err(Error::Index { .. })
    ));
}

/// Runs `f` through the finite-difference oracle on five random shape
/// draws (each extent in `1..=max`) with inputs uniform in [−2, 2].
fn sweep<F>(seed: u64, shapes: impl Fn(&mut ChaCha8Rng) -> Vec<Vec<usize>>, f: F)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> crate::Result<Var<'t>> + Copy,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..5 {
        let inputs: Vec<Tensor> = shapes(&mut rng)
            .iter()
            .map(|s| random_tensor(s, -2.0, 2.0, &mut rng))
            .collect();
        let report = gradcheck::check(&inputs, gradcheck::STEP, f).unwrap();
        assert!(report.passes(TOL), "{report:?} for {:?}", inputs);
    }
}

fn dim(rng: &mut ChaCha8Rng, max: usize) -> usize {
    rng.random_range(1..=max)
}

use rand::Rng;

#[test]
fn gradcheck_matmul() {
    sweep(
        11,
        |r| {
            let (a, b, c) = (dim(r, 5), dim(r, 7), dim(r, 5));
            vec![vec![a, b], vec![b, c]]
        },
        |_, v| v[0].matmul(&v[1]),
    );
    sweep(
        12,
        |r| {
            let (b, c) = (dim(r, 7), dim(r, 5));
            vec![vec![b], vec![b, c]]
        },
        |_, v| v[0].matmul(&v[1]),
    );
}

#[test]
fn gradcheck_softmax_both_axes() {
    for axis in 0..2 {
        sweep(
            20 + axis as u64,
            |r| vec![vec![dim(r, 5), dim(r, 7)]],
            move |_, v| v[0].softmax(axis),
        );
    }
}

#[test]
fn gradcheck_activations() {
    for (i, act) in Activation::ALL.into_iter().enumerate() {
        sweep(
            30 + i as u64,
            |r| vec![vec![dim(r, 5), dim(r, 7)]],
            move |_, v| Ok(v[0].activation(act)),
        );
    }
}

#[test]
fn gradcheck_l2_normalize() {
    for axis in 0..2 {
        sweep(
            40 + axis as u64,
            |r| vec![vec![dim(r, 5), 1 + dim(r, 6)]],
            move |_, v| Ok(v[0].l2_normalize(axis)?.0),
        );
    }
}

#[test]
fn gradcheck_cross_entropy() {
    sweep(
        50,
        |r| vec![vec![1 + dim(r, 6)]],
        |_, v| v[0].cross_entropy(0),
    );
}

#[test]
fn gradcheck_shape_ops() {
    sweep(
        60,
        |r| {
            let (a, b, c) = (dim(r, 5), dim(r, 5), dim(r, 7));
            vec![vec![a, c], vec![b, c]]
        },
        |_, v| v[0].concat(&v[1], 0),
    );
    sweep(
        61,
        |r| {
            let (a, b, c) = (dim(r, 5), dim(r, 7), dim(r, 7));
            vec![vec![a, b], vec![a, c]]
        },
        |_, v| v[0].concat(&v[1], 1),
    );
    for axis in 0..2 {
        sweep(
            62 + axis as u64,
            |r| vec![vec![dim(r, 5), dim(r, 7)]],
            move |_, v| v[0].mean(axis),
        );
        sweep(
            64 + axis as u64,
            |r| vec![vec![dim(r, 5), dim(r, 7)]],
            move |_, v| v[0].sum(axis),
        );
    }
    sweep(
        66,
        |r| vec![vec![dim(r, 5), dim(r, 7)]],
        |_, v| {
            let s = v[0].shape();
            v[0].reshape(vec![s[0] * s[1]])
        },
    );
    sweep(
        67,
        |r| vec![vec![dim(r, 5), dim(r, 7)]],
        |_, v| v[0].transpose(),
    );
}

#[test]
fn gradcheck_elementwise_and_broadcast() {
    sweep(
        70,
        |r| {
            let s = vec![dim(r, 5), dim(r, 7)];
            vec![s.clone(), s]
        },
        |_, v| v[0].mul(&v[1]),
    );
    sweep(
        71,
        |r| {
            let s = vec![dim(r, 5), dim(r, 7)];
            vec![s.clone(), s]
        },
        |_, v| v[0].add(&v[1]),
    );
    sweep(
        72,
        |r| {
            let (a, b) = (dim(r, 5), dim(r, 7));
            vec![vec![a, b], vec![b]]
        },
        |_, v| v[0].add_row(&v[1]),
    );
    sweep(
        73,
        |r| vec![vec![dim(r, 7)]],
        |_, v| v[0].repeat_rows(3),
    );
    sweep(
        74,
        |r| vec![vec![2 + dim(r, 4), dim(r, 7)]],
        |_, v| v[0].row(1),
    );
    sweep(
        75,
        |r| vec![vec![dim(r, 7)]],
        |_, v| Ok(v[0].one_minus().scale(2.5)),
    );
    sweep(
        76,
        |r| vec![vec![4, dim(r, 7)]],
        |_, v| v[0].gather_rows(&[3, 1, 3], Some(0)),
    );
}

#[test]
fn identical_op_sequences_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let tape = Tape::new();
        let a = tape.leaf(random_tensor(&[5, 7], -2.0, 2.0, &mut rng), true);
        let b = tape.leaf(random_tensor(&[7, 3], -2.0, 2.0, &mut rng), true);
        let y = a.matmul(&b).unwrap().tanh().softmax(0).unwrap();
        let loss = y.mul(&y).unwrap().sum_all();
        let g = tape.backward(loss).unwrap().wrt(&a).unwrap().clone();
        (y.value(), g)
    };
    let (y1, g1) = run();
    let (y2, g2) = run();
    assert_eq!(y1.data(), y2.data());
    assert_eq!(g1.data(), g2.data());
}

fn matrix_strategy() -> impl Strategy<Value = Tensor> {
    (1usize..=5, 1usize..=7).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-2.0f64..2.0, r * c)
            .prop_map(move |d| Tensor::new(vec![r, c], d).unwrap())
    })
}

proptest! {
    #[test]
    fn softmax_slices_sum_to_one_and_shift_invariant(x in matrix_strategy(), shift in -50.0f64..50.0, axis in 0usize..2) {
        let tape = Tape::new();
        let v = tape.constant(x.clone());
        let y = v.softmax(axis).unwrap().value();
        let summed = tape.constant(y.clone()).sum(axis).unwrap().value();
        for s in summed.data() {
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
        let shifted = tape.constant(x.map(|e| e + shift)).softmax(axis).unwrap().value();
        prop_assert!(close(&y, &shifted, 1e-12));
    }

    #[test]
    fn l2_normalize_idempotent(x in matrix_strategy(), axis in 0usize..2) {
        let tape = Tape::new();
        let (once, flags) = tape.constant(x).l2_normalize(axis).unwrap();
        prop_assume!(flags.iter().all(|f| !f));
        let (twice, _) = once.l2_normalize(axis).unwrap();
        prop_assert!(close(&once.value(), &twice.value(), 1e-12));
    }
}

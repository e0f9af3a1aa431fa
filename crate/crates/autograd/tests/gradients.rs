use mou_autograd::gradcheck::check_gradients;
use mou_autograd::{Conv1dSpec, Elementwise, Result, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_shape(rng: &mut ChaCha8Rng, rank: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.random_range(1..=8)).collect()
}

/// Projects an output onto fixed random weights so every element matters.
fn project<'t>(tape: &'t Tape<f64>, y: &Var<'t, f64>, seed: u64) -> Result<Var<'t, f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(random(&mut rng, y.shape()));
    y.mul(&w)?.sum()
}

fn assert_check<B>(inputs: &[Tensor<f64>], label: &str, f: B)
where
    B: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let report = check_gradients(inputs, H, 64, f).unwrap();
    assert!(report.max_error() < TOL, "{label}: relative errors {:?}", report.relative_errors);
}

#[test]
fn unary_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ops = [Elementwise::Exp, Elementwise::Softplus, Elementwise::Silu, Elementwise::Sigmoid, Elementwise::Relu];
    for trial in 0..10 {
        let rank = 1 + trial % 3;
        let shape = random_shape(&mut rng, rank);
        let mut x = random(&mut rng, &shape);
        // Keep relu away from its kink.
        x.data_mut().iter_mut().for_each(|v| if v.abs() < 1e-3 { *v = 0.5 });
        for op in ops {
            assert_check(&[x.clone()], &format!("{op:?} {shape:?}"), |tape, v| {
                project(tape, &v[0].elementwise(op, None)?, 7)
            });
        }
        assert_check(&[x.clone()], "square/neg/scale", |tape, v| {
            project(tape, &v[0].square()?.neg()?.scale(1.7)?.add_scalar(0.3)?, 3)
        });
    }
}

#[test]
fn binary_ops_with_broadcast() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let shape = random_shape(&mut rng, 3);
        let a = random(&mut rng, &shape);
        let same = random(&mut rng, &shape);
        let suffix = random(&mut rng, &shape[1..]);
        for b in [same, suffix] {
            assert_check(&[a.clone(), b.clone()], "add", |t, v| project(t, &v[0].add(&v[1])?, 1));
            assert_check(&[a.clone(), b.clone()], "sub", |t, v| project(t, &v[0].sub(&v[1])?, 1));
            assert_check(&[a.clone(), b.clone()], "mul", |t, v| project(t, &v[0].mul(&v[1])?, 1));
            assert_check(&[b.clone(), a.clone()], "mul (left broadcast)", |t, v| project(t, &v[0].mul(&v[1])?, 1));
        }
    }
}

#[test]
fn matmul_and_bmm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let s = random_shape(&mut rng, 4);
        let (g, m, k, n) = (s[0], s[1], s[2], s[3]);
        let a = random(&mut rng, &[g, m, k]);
        let b = random(&mut rng, &[k, n]);
        assert_check(&[a.clone(), b], "matmul", |t, v| project(t, &v[0].matmul(&v[1])?, 2));
        let bb = random(&mut rng, &[g, k, n]);
        assert_check(&[a.clone(), bb], "bmm", |t, v| project(t, &v[0].bmm(&v[1], false)?, 2));
        let bt = random(&mut rng, &[g, n, k]);
        assert_check(&[a, bt], "bmm transposed", |t, v| project(t, &v[0].bmm(&v[1], true)?, 2));
    }
}

#[test]
fn softmax_layernorm_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let shape = random_shape(&mut rng, 3);
        let x = random(&mut rng, &shape);
        assert_check(std::slice::from_ref(&x), "softmax", |t, v| project(t, &v[0].softmax()?, 5));
        let d = shape[2];
        let gamma = random(&mut rng, &[d]);
        let beta = random(&mut rng, &[d]);
        if d > 1 {
            assert_check(&[x.clone(), gamma, beta], "layernorm", |t, v| {
                project(t, &v[0].layernorm(&v[1], &v[2], 1e-5)?, 6)
            });
        }
        for axis in 0..3 {
            assert_check(std::slice::from_ref(&x), "mean_axis", |t, v| project(t, &v[0].mean_axis(axis)?, 8));
        }
        assert_check(std::slice::from_ref(&x), "mean", |_, v| v[0].square()?.mean());
    }
}

#[test]
fn shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let shape = random_shape(&mut rng, 3);
        let x = random(&mut rng, &shape);
        assert_check(std::slice::from_ref(&x), "permute", |t, v| project(t, &v[0].permute(&[2, 0, 1])?, 9));
        assert_check(std::slice::from_ref(&x), "reshape", |t, v| project(t, &v[0].reshape(&[shape.iter().product()])?, 9));
        let small = random(&mut rng, &[shape[0], 1, shape[2]]);
        assert_check(&[small], "expand", |t, v| project(t, &v[0].expand(&shape)?, 9));
        let mat = random(&mut rng, &[shape[0], shape[1]]);
        let rows: Vec<usize> = (0..5).map(|i| (i * 7 + 3) % shape[0]).collect();
        assert_check(std::slice::from_ref(&mat), "gather_rows", |t, v| project(t, &v[0].gather_rows(&rows)?, 10));
        assert_check(std::slice::from_ref(&mat), "gather", |t, v| project(t, &v[0].gather(vec![0, 0, mat.numel() - 1], &[3])?, 10));
        let src = random(&mut rng, &[rows.len(), shape[1]]);
        assert_check(&[src], "index_add_rows", |t, v| project(t, &v[0].index_add_rows(shape[0], &rows)?, 11));
    }
}

#[test]
fn convolutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let s = random_shape(&mut rng, 4);
        let (b, cin, cout) = (s[0].min(3), s[1], s[2]);
        let k = 1 + s[3] % 4;
        let t = k + rng.random_range(0..8);
        let x = random(&mut rng, &[b, cin, t]);
        let w = random(&mut rng, &[cout, cin, k]);
        for spec in [Conv1dSpec::new(1, 1), Conv1dSpec::new(2, 0), Conv1dSpec::causal()] {
            assert_check(&[x.clone(), w.clone()], &format!("conv1d {spec:?}"), |tt, v| {
                project(tt, &v[0].conv1d(&v[1], spec)?, 12)
            });
        }
        let xt = random(&mut rng, &[b, t, cin]);
        let dw = random(&mut rng, &[cin, k]);
        assert_check(&[xt, dw], "depthwise", |tt, v| project(tt, &v[0].causal_depthwise_conv1d(&v[1])?, 13));
    }
}

#[test]
fn backward_linear_and_square() {
    let tape = Tape::<f64>::new();
    let w = tape.leaf(Tensor::from_f64(vec![3], &[0.1, 0.2, 0.3]).unwrap(), true);
    let x = tape.constant(Tensor::from_f64(vec![3], &[4.0, -5.0, 6.0]).unwrap());
    let loss = w.mul(&x).unwrap().sum().unwrap();
    let grads = tape.backward(&loss).unwrap();
    assert_eq!(grads.wrt(&w).data(), x.data());

    let tape = Tape::<f64>::new();
    let w = tape.leaf(Tensor::scalar(3.0), true);
    let grads = tape.backward(&w.square().unwrap()).unwrap();
    assert_eq!(grads.wrt(&w).data(), &[6.0]);
}

#[test]
fn reused_tensor_accumulates() {
    let make = |uses: &[bool]| {
        let tape = Tape::<f64>::new();
        let w = tape.leaf(Tensor::from_f64(vec![2], &[0.7, -1.3]).unwrap(), true);
        let mut terms = Vec::new();
        if uses[0] {
            terms.push(w.exp().unwrap().sum().unwrap());
        }
        if uses[1] {
            terms.push(w.square().unwrap().sum().unwrap());
        }
        let mut loss = terms[0].clone();
        for t in &terms[1..] {
            loss = loss.add(t).unwrap();
        }
        tape.backward(&loss).unwrap().wrt(&w)
    };
    let both = make(&[true, true]);
    let (first, second) = (make(&[true, false]), make(&[false, true]));
    for i in 0..2 {
        assert!((both.data()[i] - (first.data()[i] + second.data()[i])).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, values in prop::collection::vec(-1e3f64..1e3, 1..48)) {
        let n = values.len() / rows.min(values.len());
        let used = &values[..n * (values.len() / n)];
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_f64(vec![used.len() / n, n], used).unwrap(), false);
        let y = x.softmax().unwrap();
        for row in y.data().chunks(n) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn delta_kernel_conv_is_identity(cin in 1usize..4, t in 1usize..12, half in 0usize..3, seed in 0u64..1000) {
        let k = 2 * half + 1;
        prop_assume!(t + 2 * half >= k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[cin, t]);
        let mut w = Tensor::<f64>::zeros(vec![cin, cin, k]);
        for c in 0..cin {
            w.data_mut()[(c * cin + c) * k + half] = 1.0;
        }
        let tape = Tape::<f64>::new();
        let y = tape.constant(x.clone()).conv1d(&tape.constant(w), Conv1dSpec::new(1, half)).unwrap();
        prop_assert_eq!(y.data(), x.data());
    }
}

use mou_autograd::{Tape, Tensor};
use mou_core::mof::{mof_forward, route_topk, router_scores};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn router_score_examples() {
    let w_gate = Tensor::<f64>::from_f64(vec![2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
    let w_noise = Tensor::<f64>::zeros(vec![2, 3]);
    let noise = [1.0, -2.0, 0.5];
    let h = router_scores(&[0.0, 0.0], &w_gate, &w_noise, &noise).unwrap();
    for (h, n) in h.iter().zip(noise) {
        assert!((h - n * 2f64.ln()).abs() < 1e-15);
    }
    // Larger noise weights widen the noise for a positive pre-activation.
    let x = [1.0, 0.5];
    let small = router_scores(&x, &w_gate, &Tensor::full(vec![2, 3], 0.3), &noise).unwrap();
    let big = router_scores(&x, &w_gate, &Tensor::full(vec![2, 3], 0.6), &noise).unwrap();
    let clean = router_scores(&x, &w_gate, &w_noise, &[0.0; 3]).unwrap();
    for i in 0..3 {
        assert!((big[i] - clean[i]).abs() > (small[i] - clean[i]).abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decisions_are_sparse_and_convex(scores in prop::collection::vec(-50.0f64..50.0, 1..9), k in 1usize..9) {
        let c = scores.len();
        let k = k.min(c);
        let d = route_topk(&scores, k).unwrap();
        let dense = d.dense();
        prop_assert_eq!(dense.iter().filter(|&&w| w > 0.0).count(), k);
        prop_assert!((dense.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let mut idx = d.indices.clone();
        idx.sort();
        idx.dedup();
        prop_assert_eq!(idx.len(), k);
        // Every kept score dominates every dropped one.
        let kept_min = d.indices.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        for (i, &s) in scores.iter().enumerate() {
            if !d.indices.contains(&i) {
                prop_assert!(s <= kept_min);
            }
        }
    }

    #[test]
    fn decisions_are_shift_invariant(ints in prop::collection::vec(-64i32..64, 1..9), k in 1usize..9, shift in -64i32..64) {
        // Dyadic values keep the shifted scores exact.
        let scores: Vec<f64> = ints.iter().map(|&v| v as f64 / 4.0).collect();
        let shifted: Vec<f64> = scores.iter().map(|&v| v + shift as f64 / 2.0).collect();
        let k = k.min(scores.len());
        let (a, b) = (route_topk(&scores, k).unwrap(), route_topk(&shifted, k).unwrap());
        prop_assert_eq!(a.indices, b.indices);
        prop_assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn expert_permutation_is_equivariant(seed in 0u64..500, c in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (r, p, d) = (6, 5, 3);
        let x = random(&mut rng, &[r, p]);
        let experts: Vec<(Tensor<f64>, Tensor<f64>)> = (0..c).map(|_| (random(&mut rng, &[p, d]), random(&mut rng, &[d]))).collect();
        let gate = random(&mut rng, &[p, c]);
        let wn = random(&mut rng, &[p, c]);
        let noise = random(&mut rng, &[r, c]);
        let perm: Vec<usize> = (0..c).rev().collect();
        let permute_cols = |t: &Tensor<f64>| {
            let rows = t.shape()[0];
            let data = (0..rows).flat_map(|i| perm.iter().map(move |&j| (i, j))).map(|(i, j)| t.data()[i * c + j]).collect();
            Tensor::new(vec![rows, c], data).unwrap()
        };
        let run = |experts: &[(Tensor<f64>, Tensor<f64>)], gate: &Tensor<f64>, wn: &Tensor<f64>, noise: &Tensor<f64>| {
            let tape = Tape::inference();
            let ev: Vec<_> = experts.iter().map(|(w, b)| (tape.constant(w.clone()), tape.constant(b.clone()))).collect();
            let (y, _) = mof_forward(&tape.constant(x.clone()), &ev, &tape.constant(gate.clone()), &tape.constant(wn.clone()), 2.min(c), Some(noise)).unwrap();
            y.value().clone()
        };
        let base = run(&experts, &gate, &wn, &noise);
        let pe: Vec<_> = perm.iter().map(|&j| experts[j].clone()).collect();
        let permuted = run(&pe, &permute_cols(&gate), &permute_cols(&wn), &permute_cols(&noise));
        prop_assert_eq!(base.data(), permuted.data());
    }
}

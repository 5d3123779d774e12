use actlab::tensor::{SeededRng, Tensor2};
use proptest::prelude::*;

fn triple_loop(a: &Tensor2, b: &Tensor2) -> Vec<f64> {
    let mut out = vec![0.0; a.rows() * b.cols()];
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out[i * b.cols() + j] = s;
        }
    }
    out
}

fn close(got: &Tensor2, want: &[f64]) -> bool {
    got.data().iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn products_match_the_triple_loop(m in 1usize..40, k in 1usize..40, n in 1usize..40, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let a = Tensor2::rand_uniform(&mut rng, m, k, -1.0, 1.0).unwrap();
        let b = Tensor2::rand_uniform(&mut rng, k, n, -1.0, 1.0).unwrap();
        let want = triple_loop(&a, &b);
        prop_assert!(close(&a.matmul(&b).unwrap(), &want));
        prop_assert!(close(&a.transpose().t_matmul(&b).unwrap(), &want));
        prop_assert!(close(&a.matmul_t(&b.transpose()).unwrap(), &want));
        prop_assert_eq!(a.matmul(&Tensor2::identity(k).unwrap()).unwrap(), a.clone());
    }

    #[test]
    fn draws_replay_from_seed_and_label(seed in any::<u64>(), label in "[a-z/0-9]{0,12}") {
        let a = SeededRng::new(seed).substream(&label);
        let b = SeededRng::new(seed).substream(&label);
        let ta = Tensor2::rand_normal(&mut a.clone(), 3, 4, 0.0, 1.0).unwrap();
        let tb = Tensor2::rand_normal(&mut b.clone(), 3, 4, 0.0, 1.0).unwrap();
        prop_assert!(ta.data().iter().zip(tb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn mismatched_shapes_are_errors() {
    let a = Tensor2::zeros(3, 2).unwrap();
    assert!(a.matmul(&a).is_err());
    assert!(a.t_matmul(&Tensor2::zeros(2, 2).unwrap()).is_err());
    assert!(a.matmul_t(&Tensor2::zeros(3, 3).unwrap()).is_err());
    assert_eq!(
        Tensor2::from_vec(1, 1, vec![2.0]).unwrap().matmul(&Tensor2::from_vec(1, 1, vec![3.0]).unwrap()).unwrap().data(),
        &[6.0]
    );
}

#[test]
fn uniform_mean_obeys_the_law_of_large_numbers() {
    // sd of the mean of 1e5 U(0,1) draws is sqrt(1/12/1e5) ~ 9.1e-4; 0.01 is ~11 sigma.
    let mut rng = SeededRng::new(2024);
    let t = Tensor2::rand_uniform(&mut rng, 1000, 100, 0.0, 1.0).unwrap();
    assert!((t.reduce_mean() - 0.5).abs() < 0.01);
    let half = Tensor2::rand_uniform(&mut rng, 1000, 100, 0.0, 0.5).unwrap();
    assert!(half.data().iter().all(|&v| (0.0..0.5).contains(&v)));
}

#[test]
fn reductions() {
    assert_eq!(Tensor2::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap().reduce_mean(), 2.5);
    assert_eq!(Tensor2::filled(3, 3, 7.25).unwrap().reduce_std(), 0.0);
    assert_eq!(Tensor2::from_vec(1, 2, vec![0.0, 2.0]).unwrap().reduce_std(), 1.0);
}

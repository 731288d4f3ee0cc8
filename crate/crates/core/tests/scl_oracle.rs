mod common;

use common::{brute_scl, brute_scl_anchor, rel_err, SclInstance};
use nested_entail::contrastive::{
    build_positive_mask, scl_loss, scl_loss_and_gradient, Matrix, PCountConvention, SclParams,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(tau: f64, p_count: PCountConvention) -> SclParams {
    SclParams { temperature: tau, p_count }
}

#[test]
fn loss_matches_double_loop_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..1000 {
        let n = rng.gen_range(3..=12);
        let tau = [0.05, 0.07, 1.0][trial % 3];
        let inst = SclInstance::random(&mut rng, n);
        for (conv, exclude) in [(PCountConvention::Literal, false), (PCountConvention::ExcludeSelf, true)] {
            let got = scl_loss(&inst.matrix(), &inst.mask(), &params(tau, conv)).unwrap();
            let want = brute_scl(&inst.s, &inst.labels, tau, exclude);
            assert!((got - want).abs() < 1e-9, "trial {trial}: {got} vs {want}");
        }
    }
}

/// Central differences in f64 carry an absolute error near 1e-9 here, so
/// entries are compared relative to the largest gradient in their row; an
/// entry-wise ratio is meaningless once a softmax weight drops below that.
#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-6;
    for _ in 0..50 {
        let n = rng.gen_range(3..=12);
        let tau = [0.05, 0.07, 1.0][rng.gen_range(0..3)];
        let inst = SclInstance::random(&mut rng, n);
        let p = params(tau, PCountConvention::Literal);
        let (_, grad) = scl_loss_and_gradient(&inst.matrix(), &inst.mask(), &p).unwrap();
        for _ in 0..10 {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let eval = |d: f64| {
                let mut s = inst.s.clone();
                s[i][j] += d;
                brute_scl_anchor(&s, &inst.labels, tau, false, i)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let g = grad.get(i, j);
            let row_scale = (0..n).map(|a| grad.get(i, a).abs()).fold(0.0, f64::max);
            let err = (fd - g).abs() / g.abs().max(row_scale);
            assert!(err < 1e-6, "({i},{j}) fd {fd} analytic {g}");
            if i == j {
                assert_eq!(g, 0.0);
            }
            if g.abs() > 1e-2 {
                assert!(rel_err(fd, g) < 1e-6);
            }
        }
    }
}

#[test]
fn off_diagonal_row_sums_vanish() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.gen_range(3..=12);
        let inst = SclInstance::random(&mut rng, n);
        for conv in [PCountConvention::Literal, PCountConvention::ExcludeSelf] {
            let (_, grad) = scl_loss_and_gradient(&inst.matrix(), &inst.mask(), &params(0.07, conv)).unwrap();
            for i in 0..n {
                let sum: f64 = (0..n).filter(|&a| a != i).map(|a| grad.get(i, a)).sum();
                assert!(sum.abs() < 1e-9, "row {i} sums to {sum}");
            }
        }
    }
}

/// With every logit equal the softmax is uniform over N - 1 entries, so each
/// anchor contributes `(#positives / |P(i)|) · log(N - 1)`.
#[test]
fn large_temperature_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let n = rng.gen_range(3..=12);
        let inst = SclInstance::random(&mut rng, n);
        let mask = inst.mask();
        let log_n1 = ((n - 1) as f64).ln();
        let literal: f64 = (0..n)
            .map(|i| {
                let c = mask.row_count(i) as f64;
                (c - 1.0) / c * log_n1
            })
            .sum();
        let exclude = n as f64 * log_n1;
        let got = scl_loss(&inst.matrix(), &mask, &params(1e6, PCountConvention::Literal)).unwrap();
        assert!((got - literal).abs() < 1e-3, "{got} vs {literal}");
        let got = scl_loss(&inst.matrix(), &mask, &params(1e6, PCountConvention::ExcludeSelf)).unwrap();
        assert!((got - exclude).abs() < 1e-3);
    }
}

#[test]
fn stable_at_small_temperature() {
    let inst = SclInstance {
        s: vec![vec![1.0, 1.0, -1.0], vec![1.0, 1.0, -1.0], vec![-1.0, 0.9, 1.0]],
        labels: vec![0, 0, 0],
    };
    let loss = scl_loss(&inst.matrix(), &inst.mask(), &params(1e-4, PCountConvention::Literal)).unwrap();
    assert!(loss.is_finite() && loss >= 0.0);
}

#[test]
fn zero_loss_in_single_term_case() {
    // Two examples of one label: each anchor's denominator has a single
    // term, which is its only positive.
    let s = Matrix::from_rows(vec![vec![0.3, -0.2], vec![0.5, 0.1]]);
    let mask = build_positive_mask(&[0, 0]);
    assert!(scl_loss(&s, &mask, &SclParams::default()).unwrap().abs() < 1e-15);
}

#[test]
fn anchor_without_positive_rejected() {
    let s = Matrix::from_rows(vec![vec![0.0; 3]; 3]);
    let mask = build_positive_mask(&[0, 0, 1]);
    assert!(scl_loss(&s, &mask, &SclParams::default()).is_err());
}

proptest! {
    #[test]
    fn loss_nonnegative_and_matches_oracle(seed in any::<u64>(), n in 3usize..=12, tau in 0.05f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = SclInstance::random(&mut rng, n);
        let got = scl_loss(&inst.matrix(), &inst.mask(), &params(tau, PCountConvention::Literal)).unwrap();
        prop_assert!(got >= -1e-12);
        prop_assert!((got - brute_scl(&inst.s, &inst.labels, tau, false)).abs() < 1e-9);
    }

    #[test]
    fn loss_invariant_to_joint_permutation(seed in any::<u64>(), n in 3usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = SclInstance::random(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let s: Vec<Vec<f64>> = perm.iter().map(|&i| perm.iter().map(|&j| inst.s[i][j]).collect()).collect();
        let labels: Vec<usize> = perm.iter().map(|&i| inst.labels[i]).collect();
        let p = SclParams::default();
        let a = scl_loss(&inst.matrix(), &inst.mask(), &p).unwrap();
        let b = scl_loss(&Matrix::from_rows(s), &build_positive_mask(&labels), &p).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}

use super::*;
use crate::error::SgrError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

fn p(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::param(shape, data.to_vec()).unwrap()
}

#[test]
fn matmul_identity_is_exact() {
    let tape = Tape::no_grad();
    let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let i = Tensor::eye(2);
    let left = tape.matmul(&i, &a).unwrap();
    let right = tape.matmul(&a, &i).unwrap();
    assert_eq!(left.to_vec(), a.to_vec());
    assert_eq!(right.to_vec(), a.to_vec());
}

#[test]
fn matmul_annihilator() {
    let tape = Tape::no_grad();
    let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let z = Tensor::zeros(&[2, 2]);
    let c = tape.matmul(&a, &z).unwrap();
    assert_eq!(c.to_vec(), vec![0.0; 4]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let tape = Tape::no_grad();
    let a = t(&[2, 3], &[0.0; 6]);
    let b = t(&[2, 2], &[0.0; 4]);
    let err = tape.matmul(&a, &b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
    assert!(matches!(err, SgrError::Dimension(_)));
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = p(&[3, 2], &(0..6).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>());
    let b = p(&[2, 4], &(0..8).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>());
    let report = grad_check(
        |tape| {
            let c = tape.matmul(&a, &b)?;
            tape.sum(&c, None)
        },
        &[a.clone(), b.clone()],
        1e-6,
        1e-5,
    )
    .unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
}

#[test]
fn sigmoid_at_zero_is_half() {
    let tape = Tape::no_grad();
    let y = tape.sigmoid(&t(&[1], &[0.0])).unwrap();
    assert_eq!(y.to_vec(), vec![0.5]);
}

#[test]
fn relu_clamps_negative() {
    let tape = Tape::no_grad();
    let y = tape.relu(&t(&[1], &[-3.2])).unwrap();
    assert_eq!(y.to_vec(), vec![0.0]);
}

#[test]
fn tanh_gradient_closed_form_and_fd() {
    let x = p(&[1], &[0.7]);
    let tape = Tape::new();
    let y = tape.tanh(&x).unwrap();
    let loss = tape.sum(&y, None).unwrap();
    tape.backward(&loss).unwrap();
    let analytic = x.grad().unwrap()[0];
    let expected = 1.0 - 0.7f64.tanh().powi(2);
    assert!((analytic - expected).abs() < 1e-15);

    let h = 1e-6_f64;
    let fd = ((0.7_f64 + h).tanh() - (0.7_f64 - h).tanh()) / (2.0 * h);
    assert!((analytic - fd).abs() < 1e-10, "analytic {analytic} fd {fd}");
}

#[test]
fn mean_of_vector() {
    let tape = Tape::no_grad();
    let m = tape.mean(&t(&[3], &[2.0, 4.0, 6.0]), None).unwrap();
    assert_eq!(m.item().unwrap(), 4.0);
}

#[test]
fn sum_of_empty_is_zero() {
    let tape = Tape::no_grad();
    let empty = Tensor::from_vec(&[0], vec![]).unwrap();
    let s = tape.sum(&empty, None).unwrap();
    assert_eq!(s.item().unwrap(), 0.0);
}

#[test]
fn reduction_axis_out_of_range() {
    let tape = Tape::no_grad();
    let err = tape.sum(&t(&[2, 2], &[0.0; 4]), Some(2)).unwrap_err();
    assert!(matches!(err, SgrError::Index(_)));
}

#[test]
fn max_backward_routes_to_first_maximal() {
    let x = p(&[3], &[1.0, 5.0, 5.0]);
    let tape = Tape::new();
    let m = tape.max(&x, None).unwrap();
    assert_eq!(m.item().unwrap(), 5.0);
    let loss = tape.scale(&m, 2.5).unwrap();
    tape.backward(&loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.0, 2.5, 0.0]);
}

#[test]
fn max_gradient_matches_fd_away_from_ties() {
    let x = p(&[4], &[0.3, 1.7, -0.9, 0.4]);
    let report = grad_check(|tape| tape.max(&x, None), &[x.clone()], 1e-5, 1e-4).unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
}

#[test]
fn axis_reductions_match_hand_values() {
    let tape = Tape::no_grad();
    let m = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    assert_eq!(tape.sum(&m, Some(0)).unwrap().to_vec(), vec![5.0, 7.0, 9.0]);
    assert_eq!(tape.sum(&m, Some(1)).unwrap().to_vec(), vec![6.0, 15.0]);
    assert_eq!(tape.mean(&m, Some(0)).unwrap().to_vec(), vec![2.5, 3.5, 4.5]);
    assert_eq!(tape.max(&m, Some(1)).unwrap().to_vec(), vec![3.0, 6.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let x = p(&[2], &[1.0, 2.0]);
    let tape = Tape::new();
    let y = tape.relu(&x).unwrap();
    let err = tape.backward(&y).unwrap_err();
    assert!(matches!(err, SgrError::Contract(_)));
}

#[test]
fn repeated_backward_accumulates() {
    let x = p(&[2], &[1.0, 2.0]);
    let tape = Tape::new();
    let y = tape.mul(&x, &x).unwrap();
    let loss = tape.sum(&y, None).unwrap();
    tape.backward(&loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
    tape.backward(&loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![4.0, 8.0]);
}

#[test]
fn tape_is_linear_over_summed_losses() {
    let x = p(&[2], &[0.5, -1.5]);

    let tape = Tape::new();
    let l1 = tape.sum(&tape.mul(&x, &x).unwrap(), None).unwrap();
    let l2 = tape.sum(&tape.scale(&x, 3.0).unwrap(), None).unwrap();
    let both = tape.add(&l1, &l2).unwrap();
    tape.backward(&both).unwrap();
    let combined = x.grad().unwrap();

    x.zero_grad();
    let tape = Tape::new();
    let l1 = tape.sum(&tape.mul(&x, &x).unwrap(), None).unwrap();
    tape.backward(&l1).unwrap();
    let g1 = x.grad().unwrap();
    x.zero_grad();
    let tape = Tape::new();
    let l2 = tape.sum(&tape.scale(&x, 3.0).unwrap(), None).unwrap();
    tape.backward(&l2).unwrap();
    let g2 = x.grad().unwrap();

    for i in 0..2 {
        assert!((combined[i] - (g1[i] + g2[i])).abs() < 1e-15);
    }
}

#[test]
fn grad_check_square_function() {
    let x = p(&[1], &[3.0]);
    let report = grad_check(
        |tape| {
            let y = tape.mul(&x, &x)?;
            tape.sum(&y, None)
        },
        &[x.clone()],
        1e-6,
        1e-9,
    )
    .unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
    // analytic gradient is 6 at x = 3
    let tape = Tape::new();
    x.zero_grad();
    let y = tape.mul(&x, &x).unwrap();
    let loss = tape.sum(&y, None).unwrap();
    tape.backward(&loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![6.0]);
}

#[test]
fn grad_check_constant_function() {
    let x = p(&[2], &[1.0, -1.0]);
    let report = grad_check(
        |tape| {
            // constant w.r.t. x: multiply by zero
            let y = tape.scale(&x, 0.0)?;
            tape.sum(&y, None)
        },
        &[x.clone()],
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.pass);
    assert_eq!(report.max_rel_err, 0.0);
}

#[test]
fn grad_check_rejects_bad_step() {
    let x = p(&[1], &[1.0]);
    let err = grad_check(|tape| tape.sum(&x, None), &[x.clone()], 0.0, 1e-4).unwrap_err();
    assert!(matches!(err, SgrError::Contract(_)));
}

#[test]
fn scalar_broadcast_binary_ops() {
    let tape = Tape::no_grad();
    let v = t(&[3], &[1.0, 2.0, 3.0]);
    let s = Tensor::scalar(2.0).unwrap();
    assert_eq!(tape.mul(&v, &s).unwrap().to_vec(), vec![2.0, 4.0, 6.0]);
    assert_eq!(tape.mul(&s, &v).unwrap().to_vec(), vec![2.0, 4.0, 6.0]);
    assert_eq!(tape.sub(&s, &v).unwrap().to_vec(), vec![1.0, 0.0, -1.0]);
    assert_eq!(tape.add(&v, &s).unwrap().to_vec(), vec![3.0, 4.0, 5.0]);
}

#[test]
fn elementwise_shape_mismatch_is_dimension_error() {
    let tape = Tape::no_grad();
    let a = t(&[2], &[1.0, 2.0]);
    let b = t(&[3], &[1.0, 2.0, 3.0]);
    assert!(matches!(tape.add(&a, &b).unwrap_err(), SgrError::Dimension(_)));
}

#[test]
fn conv1d_same3_hand_case() {
    let tape = Tape::no_grad();
    let x = t(&[4], &[1.0, 2.0, 3.0, 4.0]);
    let k = t(&[3], &[0.5, 1.0, -1.0]);
    let b = Tensor::scalar(0.25).unwrap();
    let y = tape.conv1d_same3(&x, &k, &b).unwrap();
    // y[i] = 0.5*x[i-1] + 1.0*x[i] - 1.0*x[i+1] + 0.25, zero padded
    assert_eq!(
        y.to_vec(),
        vec![
            1.0 - 2.0 + 0.25,
            0.5 + 2.0 - 3.0 + 0.25,
            1.0 + 3.0 - 4.0 + 0.25,
            1.5 + 4.0 + 0.25,
        ]
    );
}

#[test]
fn softmax_rows_sum_to_one() {
    let tape = Tape::no_grad();
    let m = t(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.0, 1.0]);
    let y = tape.softmax(&m).unwrap();
    let d = y.to_vec();
    for r in 0..2 {
        let s: f64 = d[r * 3..(r + 1) * 3].iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sum_vecs_is_order_invariant() {
    let a = t(&[3], &[0.1, 1e16, -0.3]);
    let b = t(&[3], &[0.2, 1.0, 0.3]);
    let c = t(&[3], &[-0.1, -1e16, 1.0]);
    let tape = Tape::no_grad();
    let fwd = tape.sum_vecs(&[a.clone(), b.clone(), c.clone()]).unwrap().to_vec();
    let rev = tape.sum_vecs(&[c, b, a]).unwrap().to_vec();
    assert_eq!(fwd, rev);
}

#[test]
fn structural_ops_differentiate() {
    let m = p(&[2, 3], &[0.3, -0.8, 1.2, 0.5, 0.9, -1.1]);
    let v = p(&[2], &[0.4, -0.6]);
    let report = grad_check(
        |tape| {
            let r0 = tape.row(&m, 0)?;
            let r1 = tape.row(&m, 1)?;
            let cat = tape.concat(&[&r0, &v])?;
            let stack = tape.stack_rows(&[cat.clone(), cat])?;
            let biased = tape.add_bias(&stack, &tape.concat(&[&r1, &v])?)?;
            let sm = tape.softmax(&biased)?;
            let ln = tape.ln_clamped(&sm, 1e-12)?;
            tape.sum(&ln, None)
        },
        &[m.clone(), v.clone()],
        1e-6,
        1e-6,
    )
    .unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
}

// Every differentiable op against central finite differences on randomized
// inputs in [-2, 2], 100 seeded trials (kinks avoided by construction).
#[test]
fn all_ops_pass_fd_sweep() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // keep magnitudes off zero so relu probes stay away from the kink
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let mag = rng.random_range(0.05..2.0);
                    if rng.random_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect()
        };
        let a = p(&[2, 3], &draw(6));
        let b = p(&[2, 3], &draw(6));
        let w = p(&[3, 2], &draw(6));
        let k = p(&[3], &draw(3));
        let bias = p(&[1], &draw(1));

        let report = grad_check(
            |tape| {
                let sum = tape.add(&a, &b)?;
                let diff = tape.sub(&a, &b)?;
                let prod = tape.mul(&sum, &diff)?;
                let act = tape.tanh(&tape.sigmoid(&tape.relu(&prod)?)?)?;
                let proj = tape.matmul(&act, &w)?;
                let row = tape.row(&proj, 1)?;
                let conv = tape.conv1d_same3(&row, &k, &bias)?;
                let m = tape.mean(&conv, None)?;
                let mx = tape.max(&proj, None)?;
                let s0 = tape.sum(&proj, Some(0))?;
                let s0m = tape.mean(&s0, None)?;
                let total = tape.add(&tape.add(&m, &mx)?, &s0m)?;
                Ok(total)
            },
            &[a.clone(), b.clone(), w.clone(), k.clone(), bias.clone()],
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(
            report.pass,
            "seed {seed}: max rel err {}",
            report.max_rel_err
        );
    }
}

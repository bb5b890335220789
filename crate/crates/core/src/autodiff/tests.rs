use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;

type T = f64;

/// Independent central-difference oracle over a param's coordinates.
fn fd_gradient<F>(param: &Param<T>, mut f: F, h: T) -> Vec<T>
where
    F: FnMut() -> T,
{
    let n = param.numel();
    let mut grad = vec![0.0; n];
    for i in 0..n {
        param.perturb(i, h);
        let fp = f();
        param.perturb(i, -2.0 * h);
        let fm = f();
        param.perturb(i, h);
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

#[test]
fn matmul_identity() {
    let tape: Tape<T> = Tape::new();
    let eye = tape.matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
    let m = tape.matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
    let out = eye.matmul(&m).unwrap();
    assert_eq!(out.values(), vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_selection_row() {
    let tape: Tape<T> = Tape::new();
    let sel = tape.matrix(1, 2, vec![1.0, 0.0]);
    let col = tape.matrix(2, 1, vec![2.0, 5.0]);
    let out = sel.matmul(&col).unwrap();
    assert_eq!(out.shape(), &[1, 1]);
    assert_eq!(out.values(), vec![2.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let tape: Tape<T> = Tape::new();
    let a = tape.matrix(2, 3, vec![0.0; 6]);
    let b = tape.matrix(2, 2, vec![0.0; 4]);
    let err = a.matmul(&b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    // d sum(A x B) / dA at A = ones, B = I2 is all-ones
    let a = Param::new(&[2, 2], vec![1.0, 1.0, 1.0, 1.0]);
    let forward = |p: &Param<T>| {
        let tape: Tape<T> = Tape::new();
        let at = tape.leaf(p);
        let b = tape.matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let prod = at.matmul(&b).unwrap();
        // sum via mean * numel
        let flat = concat(&[prod.row(0).unwrap(), prod.row(1).unwrap()]).unwrap();
        flat.reduce_mean(0).unwrap().scale(4.0)
    };
    let expected = fd_gradient(&a, || forward(&a).item(), 1e-4);
    a.zero_grad();
    forward(&a).backward().unwrap();
    let got = a.grad();
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-6, "{g} vs {e}");
        assert!((g - 1.0).abs() < 1e-9);
    }
}

#[test]
fn elementwise_examples() {
    let tape: Tape<T> = Tape::new();
    let relu = tape.vector(vec![-1.0, 0.0, 2.0]).relu();
    assert_eq!(relu.values(), vec![0.0, 0.0, 2.0]);
    let sig = tape.scalar(0.0).sigmoid();
    assert_eq!(sig.item(), 0.5);
    let sum = tape
        .vector(vec![1.0, 2.0])
        .add(&tape.vector(vec![3.0, 4.0]))
        .unwrap();
    assert_eq!(sum.values(), vec![4.0, 6.0]);
}

#[test]
fn add_broadcasts_bias_over_last_axis() {
    let tape: Tape<T> = Tape::new();
    let m = tape.matrix(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    let b = tape.vector(vec![10.0, 20.0, 30.0]);
    let out = m.add(&b).unwrap();
    assert_eq!(out.values(), vec![10.0, 21.0, 32.0, 13.0, 24.0, 35.0]);
}

#[test]
fn add_incompatible_shapes_is_error() {
    let tape: Tape<T> = Tape::new();
    let a = tape.vector(vec![1.0, 2.0]);
    let b = tape.vector(vec![1.0, 2.0, 3.0]);
    assert!(a.add(&b).is_err());
}

#[test]
fn softmax_examples() {
    let tape: Tape<T> = Tape::new();
    let s = tape.vector(vec![0.0, 0.0]).softmax().unwrap();
    assert_eq!(s.values(), vec![0.5, 0.5]);

    // huge inputs must not overflow thanks to max subtraction
    let s = tape.vector(vec![1000.0, 1000.0, 1000.0]).softmax().unwrap();
    for v in s.values() {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    let s = tape.vector(vec![(2.0f64).ln(), 0.0]).softmax().unwrap();
    let v = s.values();
    assert!((v[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((v[1] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn softmax_rows_sum_to_one_for_large_magnitudes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tape: Tape<T> = Tape::new();
    for _ in 0..50 {
        let vals: Vec<T> = (0..8).map(|_| rng.random_range(-1e3..1e3)).collect();
        let s = tape.vector(vals).softmax().unwrap();
        let sum: T = s.values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }
}

#[test]
fn concat_mean_weighted_sum_examples() {
    let tape: Tape<T> = Tape::new();
    let c = concat(&[tape.vector(vec![1.0, 2.0]), tape.vector(vec![3.0])]).unwrap();
    assert_eq!(c.values(), vec![1.0, 2.0, 3.0]);

    let m = tape.matrix(1, 2, vec![2.0, 4.0]).reduce_mean(1).unwrap();
    assert_eq!(m.values(), vec![3.0]);

    let w = tape.vector(vec![1.0, 0.0]);
    let x = tape.matrix(2, 2, vec![5.0, 5.0, 9.0, 9.0]);
    let ws = weighted_sum(&w, &x).unwrap();
    assert_eq!(ws.values(), vec![5.0, 5.0]);
}

#[test]
fn backward_square_at_three() {
    let p = Param::new(&[1], vec![3.0]);
    let tape: Tape<T> = Tape::new();
    let x = tape.leaf(&p);
    let y = x.mul(&x).unwrap();
    assert_eq!(y.item(), 9.0);
    y.backward().unwrap();
    assert_eq!(p.grad(), vec![6.0]);
}

#[test]
fn backward_dead_relu_unit() {
    let p = Param::new(&[1], vec![2.0]);
    let tape: Tape<T> = Tape::new();
    let y = tape.leaf(&p).neg().relu();
    y.backward().unwrap();
    assert_eq!(p.grad(), vec![0.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let tape: Tape<T> = Tape::new();
    let v = tape.vector(vec![1.0, 2.0]);
    assert!(matches!(v.backward(), Err(TensorError::NotScalar { .. })));
}

#[test]
fn backward_composite_matches_finite_differences() {
    // softmax -> weighted_sum -> mean on a random 3x4 input
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let vals: Vec<T> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p = Param::new(&[3, 4], vals);
    let wv: Vec<T> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let forward = |p: &Param<T>| {
        let tape: Tape<T> = Tape::new();
        let x = tape.leaf(p);
        let s = x.softmax().unwrap();
        let w = tape.vector(wv.clone());
        weighted_sum(&w, &s).unwrap().reduce_mean(0).unwrap()
    };
    let expected = fd_gradient(&p, || forward(&p).item(), 1e-4);
    p.zero_grad();
    forward(&p).backward().unwrap();
    for (g, e) in p.grad().iter().zip(&expected) {
        let denom = 1.0f64.max(g.abs()).max(e.abs());
        assert!((g - e).abs() / denom < 1e-3, "{g} vs {e}");
    }
}

#[test]
fn backward_twice_doubles_gradients() {
    let p = Param::new(&[2], vec![1.5, -0.5]);
    let tape: Tape<T> = Tape::new();
    let x = tape.leaf(&p);
    let y = x.mul(&x).unwrap().reduce_mean(0).unwrap();
    y.backward().unwrap();
    let once = p.grad();
    y.backward().unwrap();
    let twice = p.grad();
    for (a, b) in once.iter().zip(&twice) {
        assert_eq!(*b, 2.0 * a);
    }
}

#[test]
fn adam_first_step_magnitude_is_step_size() {
    let p = Param::new(&[3], vec![1.0, 2.0, 3.0]);
    p.accumulate_grad(&[0.3, -0.7, 1.9]);
    let mut state = AdamState::new(3, 1e-4);
    adam_update(&p, &mut state);
    let v = p.values();
    let expect: [f64; 3] = [1.0 - 1e-4, 2.0 + 1e-4, 3.0 - 1e-4];
    for (got, want) in v.iter().zip(&expect) {
        // bias correction makes |update| ~ step size on the first step
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
    assert_eq!(state.step, 1);
}

#[test]
fn adam_zero_gradient_leaves_params_bit_identical() {
    let p = Param::new(&[2], vec![0.25, -4.0]);
    let mut state = AdamState::new(2, 1e-4);
    adam_update(&p, &mut state);
    assert_eq!(p.values(), vec![0.25, -4.0]);
    assert_eq!(state.step, 1);
}

#[test]
fn adam_two_steps_match_hand_recurrence() {
    // independent recurrence evaluation, constant grad 1
    let (lr, b1, b2, eps) = (1e-4f64, 0.9, 0.999, 1e-8);
    let mut x = 5.0f64;
    let (mut m, mut v) = (0.0f64, 0.0f64);
    for t in 1..=2 {
        m = b1 * m + (1.0 - b1) * 1.0;
        v = b2 * v + (1.0 - b2) * 1.0;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        x -= lr * m_hat / (v_hat.sqrt() + eps);
    }

    let p = Param::new(&[1], vec![5.0]);
    let mut state = AdamState::new(1, 1e-4);
    for _ in 0..2 {
        p.zero_grad();
        p.accumulate_grad(&[1.0]);
        adam_update(&p, &mut state);
    }
    assert!((p.values()[0] - x).abs() < 1e-15, "{} vs {x}", p.values()[0]);
    assert_eq!(state.step, 2);
}

#[test]
fn grad_check_passes_on_quadratic_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vals: Vec<T> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut params: ParamSet<T> = ParamSet::new();
    let p = params.insert("x", Param::new(&[2, 3], vals));
    let report = grad_check(
        &params,
        |tape| {
            let x = tape.leaf(&p);
            let sq = x.mul(&x)?;
            sq.reduce_mean(0)?.reduce_mean(0)
        },
        1e-5,
    )
    .unwrap();
    assert!(report.pass, "max rel {}", report.max_rel);
    assert_eq!(report.per_param[0].skipped, 0);
}

#[test]
fn grad_check_skips_relu_kink() {
    let mut params: ParamSet<T> = ParamSet::new();
    let p = params.insert("x", Param::new(&[3], vec![-1.0, 0.0, 2.0]));
    let report = grad_check(
        &params,
        |tape| tape.leaf(&p).relu().reduce_mean(0),
        1e-5,
    )
    .unwrap();
    assert!(report.pass);
    // the coordinate sitting exactly on the kink is excluded
    assert_eq!(report.per_param[0].skipped, 1);
    assert_eq!(report.per_param[0].checked, 2);
}

#[test]
fn grad_check_reports_non_finite() {
    let mut params: ParamSet<T> = ParamSet::new();
    let p = params.insert("x", Param::new(&[1], vec![-1.0]));
    let res = grad_check(&params, |tape| Ok(tape.leaf(&p).ln()), 1e-5);
    assert!(matches!(res, Err(TensorError::NonFinite { .. })));
}

#[test]
fn leaf_gradients_flow_through_lstm_like_gates() {
    // sigmoid/tanh mix exercised against the FD oracle
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = Param::new(&[2, 2], (0..4).map(|_| rng.random_range(-0.5..0.5)).collect());
    let b = Param::new(&[2], (0..2).map(|_| rng.random_range(-0.5..0.5)).collect());
    let forward = |w: &Param<T>, b: &Param<T>| {
        let tape: Tape<T> = Tape::new();
        let x = tape.vector(vec![0.3, -0.8]);
        let h = tape
            .leaf(w)
            .matmul(&x)
            .unwrap()
            .add(&tape.leaf(b))
            .unwrap();
        h.sigmoid().mul(&h.tanh()).unwrap().reduce_mean(0).unwrap()
    };
    for p in [&w, &b] {
        let expected = fd_gradient(p, || forward(&w, &b).item(), 1e-4);
        w.zero_grad();
        b.zero_grad();
        forward(&w, &b).backward().unwrap();
        for (g, e) in p.grad().iter().zip(&expected) {
            assert!((g - e).abs() < 1e-6, "{g} vs {e}");
        }
    }
}

#[test]
fn transpose_row_column_gradients() {
    let p = Param::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let forward = |p: &Param<T>| {
        let tape: Tape<T> = Tape::new();
        let x = tape.leaf(p);
        let t = x.transpose().unwrap(); // [3,2]
        let r = t.row(1).unwrap(); // [2]
        let c = x.column(2).unwrap(); // [2]
        concat(&[r, c]).unwrap().reduce_mean(0).unwrap()
    };
    let expected = fd_gradient(&p, || forward(&p).item(), 1e-4);
    p.zero_grad();
    forward(&p).backward().unwrap();
    for (g, e) in p.grad().iter().zip(&expected) {
        assert!((g - e).abs() < 1e-6, "{g} vs {e}");
    }
}

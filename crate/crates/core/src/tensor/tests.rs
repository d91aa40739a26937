use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::testutil::{fd_max_rel_err, rand_t};

fn vec_t(v: &[f64]) -> Tensor {
    Tensor::vector(v.to_vec())
}

#[test]
fn tensor_rejects_bad_lengths() {
    assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    assert!(Tensor::new(vec![2, 2, 2], vec![0.0; 8]).is_err());
    let t = Tensor::matrix(2, 3, (0..6).map(f64::from).collect()).unwrap();
    assert_eq!(t.row(1), &[3.0, 4.0, 5.0]);
    assert_eq!(t.get(0, 2), 2.0);
}

#[test]
fn mul_and_add_values() {
    let mut g = Graph::new();
    let a = g.constant(vec_t(&[1.0, 2.0, 3.0]));
    let b = g.constant(vec_t(&[4.0, 5.0, 6.0]));
    let c = g.mul(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[4.0, 10.0, 18.0]);
    let z = g.constant(Tensor::zeros(&[3]));
    let d = g.add(a, z).unwrap();
    assert_eq!(g.value(d).data(), g.value(a).data());
}

#[test]
fn elementwise_shape_error_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2]));
    let err = g.add(a, b).unwrap_err().to_string();
    assert!(err.contains("[2, 3]") && err.contains("[2]"), "{err}");
}

#[test]
fn row_broadcast_applies_vector_to_every_row() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = g.constant(vec_t(&[10.0, 20.0]));
    let c = g.add(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[11.0, 22.0, 13.0, 24.0]);
}

#[test]
fn elementwise_gradients_match_finite_differences() {
    let a = rand_t(&[3, 4], 1);
    let b = rand_t(&[3, 4], 2);
    for kind in [ElemOp::Add, ElemOp::Sub, ElemOp::Mul] {
        let err = fd_max_rel_err(&[a.clone(), b.clone()], |g, v| g.elementwise(kind, v[0], v[1]));
        assert!(err < 1e-6, "{kind:?}: {err}");
    }
    let row = rand_t(&[4], 3);
    let err = fd_max_rel_err(&[a, row], |g, v| g.mul(v[0], v[1]));
    assert!(err < 1e-6, "broadcast mul: {err}");
}

#[test]
fn matmul_values_and_errors() {
    let mut g = Graph::new();
    let eye = g.constant(Tensor::matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap());
    let x = g.constant(vec_t(&[7.0, -2.0, 0.5]));
    let y = g.matmul(eye, x).unwrap();
    assert_eq!(g.value(y).data(), &[7.0, -2.0, 0.5]);

    let a = g.constant(Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap());
    let ones = g.constant(Tensor::matrix(2, 1, vec![1., 1.]).unwrap());
    let c = g.matmul(a, ones).unwrap();
    assert_eq!(g.shape(c), &[2, 1]);
    assert_eq!(g.value(c).data(), &[3.0, 7.0]);
    assert!(g.matmul(a, x).is_err());
}

#[test]
fn matmul_and_linear_gradients() {
    let err = fd_max_rel_err(&[rand_t(&[2, 3], 4), rand_t(&[3, 2], 5)], |g, v| g.matmul(v[0], v[1]));
    assert!(err < 1e-6, "matmul {err}");
    let err = fd_max_rel_err(&[rand_t(&[3, 4], 6), rand_t(&[4], 7)], |g, v| g.matmul(v[0], v[1]));
    assert!(err < 1e-6, "matvec {err}");
    let err = fd_max_rel_err(
        &[rand_t(&[3, 4], 8), rand_t(&[2, 4], 9), rand_t(&[2], 10)],
        |g, v| g.linear(v[0], v[1], Some(v[2])),
    );
    assert!(err < 1e-6, "linear {err}");
    let err = fd_max_rel_err(&[rand_t(&[2, 3], 11)], |g, v| g.transpose(v[0]));
    assert!(err < 1e-6, "transpose {err}");
}

#[test]
fn sigmoid_and_tanh_at_zero() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(0.0), true);
    let s = g.sigmoid(x);
    let t = g.tanh(x);
    assert_eq!(g.value(s).item(), 0.5);
    assert_eq!(g.value(t).item(), 0.0);
    let grads = g.backward(s).unwrap();
    let analytic = grads.get(x).unwrap()[0];
    let fd = (graph::sigmoid_scalar(1e-6) - graph::sigmoid_scalar(-1e-6)) / 2e-6;
    assert!((analytic - 0.25).abs() < 1e-15);
    assert!((analytic - fd).abs() < 1e-9);
}

#[test]
fn nonlinearity_gradients() {
    let x = rand_t(&[3, 4], 12);
    assert!(fd_max_rel_err(std::slice::from_ref(&x), |g, v| Ok(g.sigmoid(v[0]))) < 1e-6);
    assert!(fd_max_rel_err(std::slice::from_ref(&x), |g, v| Ok(g.tanh(v[0]))) < 1e-6);
    assert!(fd_max_rel_err(&[x], |g, v| Ok(g.scale_shift(v[0], -2.5, 1.0))) < 1e-6);
}

#[test]
fn softmax_fixtures() {
    let mut g = Graph::new();
    let a = g.constant(vec_t(&[0.0, 0.0]));
    let sa = g.softmax(a, 0).unwrap();
    assert_eq!(g.value(sa).data(), &[0.5, 0.5]);
    let b = g.constant(vec_t(&[1000.0, 1000.0]));
    let sb = g.softmax(b, 0).unwrap();
    assert_eq!(g.value(sb).data(), &[0.5, 0.5]);
    let c = g.constant(vec_t(&[0.0, 3f64.ln()]));
    let sc = g.softmax(c, 0).unwrap();
    assert!((g.value(sc).data()[0] - 0.25).abs() < 1e-15);
    assert!((g.value(sc).data()[1] - 0.75).abs() < 1e-15);
    assert!(g.softmax(c, 1).is_err());
}

#[test]
fn softmax_gradients_both_axes() {
    let x = rand_t(&[3, 4], 13);
    assert!(fd_max_rel_err(std::slice::from_ref(&x), |g, v| g.softmax(v[0], 0)) < 1e-6);
    assert!(fd_max_rel_err(&[x], |g, v| g.softmax(v[0], 1)) < 1e-6);
}

#[test]
fn concat_shapes_and_gradient_routing() {
    let mut g = Graph::new();
    let parts: Vec<Var> = (0..4)
        .map(|k| g.leaf(Tensor::full(&[2], k as f64), true))
        .collect();
    let c = g.concat(&parts[..2], 0).unwrap();
    assert_eq!(g.shape(c), &[4]);
    let all = g.concat(&parts, 0).unwrap();
    assert_eq!(g.shape(all), &[8]);
    let loss = g.sum(all);
    let grads = g.backward(loss).unwrap();
    for p in &parts {
        assert_eq!(grads.get(*p).unwrap(), &[1.0, 1.0]);
    }
    let m = g.constant(Tensor::zeros(&[2, 3]));
    let n = g.constant(Tensor::zeros(&[3, 3]));
    assert!(g.concat(&[m, n], 1).is_err());
    assert!(g.concat(&[m, n], 0).is_ok());

    let err = fd_max_rel_err(&[rand_t(&[2, 3], 14), rand_t(&[2, 2], 15)], |g, v| g.concat(v, 1));
    assert!(err < 1e-6);
}

#[test]
fn row_stack_gather_gradients() {
    let err = fd_max_rel_err(&[rand_t(&[3, 2], 16)], |g, v| {
        let a = g.row(v[0], 2)?;
        let b = g.row(v[0], 0)?;
        g.stack_rows(&[a, b, a])
    });
    assert!(err < 1e-6);
    let err = fd_max_rel_err(&[rand_t(&[4, 3], 17)], |g, v| {
        g.gather_rows(v[0], &[Some(1), None, Some(1), Some(3)])
    });
    assert!(err < 1e-6);
    let err = fd_max_rel_err(&[rand_t(&[3, 4], 18), rand_t(&[3], 19)], |g, v| g.add_col(v[0], v[1]));
    assert!(err < 1e-6);
}

#[test]
fn conv_and_max_pool_gradients() {
    let err = fd_max_rel_err(
        &[rand_t(&[6, 2], 20), rand_t(&[3, 10], 21), rand_t(&[3], 22)],
        |g, v| {
            let c = g.conv1d(v[0], v[1], v[2], 5)?;
            let t = g.tanh(c);
            g.max_over_rows(t)
        },
    );
    assert!(err < 1e-5, "{err}");
}

#[test]
fn dropout_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[100_000], 1.0));
    assert_eq!(g.dropout(x, 0.0, true, &mut rng).unwrap(), x);
    assert_eq!(g.dropout(x, 0.2, false, &mut rng).unwrap(), x);
    assert!(g.dropout(x, 1.0, true, &mut rng).is_err());
    assert!(g.dropout(x, -0.1, true, &mut rng).is_err());
    let d = g.dropout(x, 0.5, true, &mut rng).unwrap();
    let mean = g.value(d).data().iter().sum::<f64>() / 100_000.0;
    assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
}

#[test]
fn backward_basics() {
    let mut g = Graph::new();
    let x = g.leaf(rand_t(&[5], 23), true);
    let s = g.sum(x);
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[1.0; 5]);
    assert_eq!(grads.get(s).unwrap(), &[1.0]);

    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(3.0), true);
    let y = g.add(x, x).unwrap();
    let grads = g.backward(y).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[2.0]);

    let mut g = Graph::new();
    let v = g.leaf(Tensor::zeros(&[2]), true);
    assert!(g.backward(v).is_err());
}

#[test]
fn fan_out_gradient_is_sum_of_paths() {
    // y = sigmoid(x) * tanh(x) * x with x feeding three consumers.
    let x0 = rand_t(&[4], 24);
    let mut g = Graph::new();
    let x = g.leaf(x0.clone(), true);
    let s = g.sigmoid(x);
    let t = g.tanh(x);
    let st = g.mul(s, t).unwrap();
    let y = g.mul(st, x).unwrap();
    let loss = g.sum(y);
    let total = g.backward(loss).unwrap().get(x).unwrap().to_vec();

    // Each path alone, holding the other two uses constant.
    let path = |which: usize| -> Vec<f64> {
        let mut g = Graph::new();
        let live = g.leaf(x0.clone(), true);
        let fixed = g.constant(x0.clone());
        let pick = |k: usize| if k == which { live } else { fixed };
        let s = g.sigmoid(pick(0));
        let t = g.tanh(pick(1));
        let st = g.mul(s, t).unwrap();
        let y = g.mul(st, pick(2)).unwrap();
        let loss = g.sum(y);
        g.backward(loss).unwrap().get(live).unwrap().to_vec()
    };
    let (p0, p1, p2) = (path(0), path(1), path(2));
    for i in 0..4 {
        assert!((total[i] - (p0[i] + p1[i] + p2[i])).abs() < 1e-14);
    }
}

#[test]
fn nll_value_and_floor() {
    let mut g = Graph::new();
    let p = g.leaf(vec_t(&[0.25, 0.75]), true);
    let l = g.nll(p, 0).unwrap();
    assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-15);
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(p).unwrap(), &[-4.0, 0.0]);
    let z = g.leaf(vec_t(&[0.0, 1.0]), true);
    let lz = g.nll(z, 0).unwrap();
    assert!((g.value(lz).item() - 1e-12f64.ln().abs()).abs() < 1e-9);
    assert!(g.nll(z, 2).is_err());
}

fn gru_params(g: &mut Graph, input: usize, hidden: usize, seed: u64) -> GruParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut leaf = |shape: &[usize]| g.leaf(Tensor::uniform(shape, 0.8, &mut rng), true);
    GruParams {
        w_z: leaf(&[hidden, input]),
        w_r: leaf(&[hidden, input]),
        w_h: leaf(&[hidden, input]),
        u_z: leaf(&[hidden, hidden]),
        u_r: leaf(&[hidden, hidden]),
        u_h: leaf(&[hidden, hidden]),
        b_z: leaf(&[hidden]),
        b_r: leaf(&[hidden]),
        b_h: leaf(&[hidden]),
    }
}

fn gru_from(v: &[Var]) -> GruParams {
    GruParams {
        w_z: v[0],
        w_r: v[1],
        w_h: v[2],
        u_z: v[3],
        u_r: v[4],
        u_h: v[5],
        b_z: v[6],
        b_r: v[7],
        b_h: v[8],
    }
}

fn gru_tensors(input: usize, hidden: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = [
        vec![hidden, input],
        vec![hidden, input],
        vec![hidden, input],
        vec![hidden, hidden],
        vec![hidden, hidden],
        vec![hidden, hidden],
        vec![hidden],
        vec![hidden],
        vec![hidden],
    ];
    shapes
        .iter()
        .map(|s| Tensor::uniform(s, 0.8, &mut rng))
        .collect()
}

#[test]
fn gru_cell_limits() {
    let mut g = Graph::new();
    let mut p = gru_params(&mut g, 3, 4, 1);
    let x = g.constant(Tensor::zeros(&[3]));
    let h = g.constant(Tensor::zeros(&[4]));
    for w in [&mut p.w_z, &mut p.w_r, &mut p.w_h, &mut p.u_z, &mut p.u_r, &mut p.u_h, &mut p.b_z, &mut p.b_r, &mut p.b_h] {
        let shape = g.shape(*w).to_vec();
        *w = g.constant(Tensor::zeros(&shape));
    }
    let out = gru_cell(&mut g, x, h, &p).unwrap();
    assert_eq!(g.value(out).data(), &[0.0; 4]);

    // Update gate closed keeps the previous state.
    p.b_z = g.constant(Tensor::full(&[4], -40.0));
    let xr = g.constant(rand_t(&[3], 2));
    let hr = g.constant(rand_t(&[4], 3));
    let out = gru_cell(&mut g, xr, hr, &p).unwrap();
    for (a, b) in g.value(out).data().iter().zip(g.value(hr).data()) {
        assert!((a - b).abs() < 1e-15);
    }
    let bad = g.constant(Tensor::zeros(&[5]));
    assert!(gru_cell(&mut g, bad, hr, &p).is_err());
}

#[test]
fn gru_cell_is_convex_between_state_and_candidate() {
    let mut g = Graph::new();
    let p = gru_params(&mut g, 3, 4, 7);
    let x = g.constant(rand_t(&[3], 8));
    let h = g.constant(rand_t(&[4], 9));
    let out = gru_cell(&mut g, x, h, &p).unwrap();
    // Recompute the candidate independently.
    let xh = g.linear(x, p.w_h, Some(p.b_h)).unwrap();
    let xr = g.linear(x, p.w_r, Some(p.b_r)).unwrap();
    let ur = g.matmul(p.u_r, h).unwrap();
    let rpre = g.add(xr, ur).unwrap();
    let r = g.sigmoid(rpre);
    let rh = g.mul(r, h).unwrap();
    let uh = g.matmul(p.u_h, rh).unwrap();
    let cpre = g.add(xh, uh).unwrap();
    let cand = g.tanh(cpre);
    for i in 0..4 {
        let (lo, hi) = {
            let a = g.value(h).data()[i];
            let b = g.value(cand).data()[i];
            (a.min(b), a.max(b))
        };
        let v = g.value(out).data()[i];
        assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
    }
}

#[test]
fn gru_cell_gradient() {
    let mut inputs = gru_tensors(3, 4, 30);
    inputs.push(rand_t(&[3], 31));
    inputs.push(rand_t(&[4], 32));
    let err = fd_max_rel_err(&inputs, |g, v| {
        let p = gru_from(v);
        gru_cell(g, v[9], v[10], &p)
    });
    assert!(err < 1e-5, "{err}");
}

#[test]
fn bigru_shapes_and_degenerate_length() {
    let mut g = Graph::new();
    let f = gru_params(&mut g, 3, 2, 40);
    let b = gru_params(&mut g, 3, 2, 41);
    let seq = g.constant(rand_t(&[1, 3], 42));
    let out = bigru(&mut g, seq, &f, &b).unwrap();
    assert_eq!(g.shape(out.states), &[1, 4]);
    assert_eq!(g.value(out.states).data(), g.value(out.final_state).data());
    let empty = g.constant(Tensor::zeros(&[0, 3]));
    assert!(bigru(&mut g, empty, &f, &b).is_err());
}

#[test]
fn bigru_reversal_swaps_directions() {
    let x = rand_t(&[3, 3], 43);
    let rev = Tensor::from_rows(&(0..3).rev().map(|i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    let mut g = Graph::new();
    let f = gru_params(&mut g, 3, 2, 44);
    let b = gru_params(&mut g, 3, 2, 45);
    let s1 = g.constant(x);
    let s2 = g.constant(rev);
    let a = bigru(&mut g, s1, &f, &b).unwrap();
    // Swapped parameter roles on the reversed sequence.
    let c = bigru(&mut g, s2, &b, &f).unwrap();
    let (va, vc) = (g.value(a.states), g.value(c.states));
    for i in 0..3 {
        let ra = va.row(i);
        let rc = vc.row(2 - i);
        assert_eq!(&ra[..2], &rc[2..]);
        assert_eq!(&ra[2..], &rc[..2]);
    }
}

#[test]
fn bigru_gradient_length_three() {
    let mut inputs = gru_tensors(2, 3, 50);
    inputs.extend(gru_tensors(2, 3, 51));
    inputs.push(rand_t(&[3, 2], 52));
    let err = fd_max_rel_err(&inputs, |g, v| {
        let f = gru_from(&v[..9]);
        let b = gru_from(&v[9..18]);
        let out = bigru(g, v[18], &f, &b)?;
        Ok(out.states)
    });
    assert!(err < 1e-5, "{err}");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_is_a_distribution_and_shift_invariant(
            xs in prop::collection::vec(-50.0f64..50.0, 1..12),
            shift in -100.0f64..100.0,
        ) {
            let mut g = Graph::new();
            let a = g.constant(Tensor::vector(xs.clone()));
            let b = g.constant(Tensor::vector(xs.iter().map(|x| x + shift).collect()));
            let sa = g.softmax(a, 0).unwrap();
            let sb = g.softmax(b, 0).unwrap();
            let total: f64 = g.value(sa).data().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for (p, q) in g.value(sa).data().iter().zip(g.value(sb).data()) {
                prop_assert!(*p >= 0.0);
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn sigmoid_stays_inside_unit_interval(x in -30.0f64..30.0) {
            let s = graph::sigmoid_scalar(x);
            prop_assert!(s > 0.0 && s < 1.0);
        }
    }
}

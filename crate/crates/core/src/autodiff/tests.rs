use super::{concat, free_graph, grad_check, Value};
use crate::{Error, Tensor};

fn tracked(data: &[f64]) -> Value {
    Value::leaf(vec![data.len()], data.to_vec(), true).unwrap()
}

#[test]
fn matmul_identity_and_1x1() {
    let eye = Value::leaf(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0], false).unwrap();
    let col = Value::leaf(vec![2, 1], vec![3.0, 4.0], false).unwrap();
    let out = eye.matmul(&col).unwrap();
    assert_eq!(out.shape(), vec![2, 1]);
    assert_eq!(out.to_vec(), vec![3.0, 4.0]);

    let row = Value::leaf(vec![1, 2], vec![1.0, 2.0], false).unwrap();
    let out = row.matmul(&col).unwrap();
    assert_eq!(out.to_vec(), vec![11.0]);

    // Matrix-vector path.
    let v = Value::constant(vec![3.0, 4.0]);
    let out = eye.matmul(&v).unwrap();
    assert_eq!(out.shape(), vec![2]);
    assert_eq!(out.to_vec(), vec![3.0, 4.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let a = Value::leaf(vec![2, 3], vec![0.0; 6], false).unwrap();
    let b = Value::constant(vec![1.0, 2.0]);
    match a.matmul(&b) {
        Err(Error::Dimension { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2]);
        }
        other => panic!("expected dimension error, got {other:?}", other = other.map(|v| v.shape())),
    }
}

#[test]
fn softmax_symmetry_cases() {
    let out = Value::constant(vec![0.0, 0.0]).softmax().unwrap();
    assert_eq!(out.to_vec(), vec![0.5, 0.5]);
    let out = Value::constant(vec![0.0; 5]).softmax().unwrap();
    for x in out.to_vec() {
        assert!((x - 0.2).abs() < 1e-15);
    }
}

#[test]
fn softmax_survives_huge_logits() {
    let out = Value::constant(vec![1000.0, 0.0]).softmax().unwrap();
    let v = out.to_vec();
    assert!(v.iter().all(|x| x.is_finite()));
    assert!(v[0] > 1.0 - 1e-12 && v[1] < 1e-12);
    assert!((v[0] + v[1] - 1.0).abs() < 1e-12);
}

#[test]
fn softmax_rejects_nan() {
    let err = Value::constant(vec![f64::NAN, 0.0]).softmax().unwrap_err();
    assert!(matches!(err, Error::Numeric(_)));
}

#[test]
fn cumsum_directions() {
    let v = Value::constant(vec![1.0, 2.0, 3.0]);
    assert_eq!(v.cumsum_fwd().unwrap().to_vec(), vec![1.0, 3.0, 6.0]);
    assert_eq!(v.cumsum_bwd().unwrap().to_vec(), vec![6.0, 5.0, 3.0]);
}

#[test]
fn elementwise_trivia() {
    assert_eq!(
        Value::constant(vec![1.0, 0.0]).repeat_chunks(2).unwrap().to_vec(),
        vec![1.0, 1.0, 0.0, 0.0]
    );
    assert_eq!(Value::scalar(0.0).sigmoid().to_vec(), vec![0.5]);
    assert_eq!(Value::scalar(0.0).tanh().to_vec(), vec![0.0]);
    let c = concat(&[Value::constant(vec![1.0, 2.0]), Value::constant(vec![3.0])]).unwrap();
    assert_eq!(c.to_vec(), vec![1.0, 2.0, 3.0]);
}

#[test]
fn concat_gradient_splits_to_parents() {
    let a = tracked(&[1.0, 2.0]);
    let b = tracked(&[3.0]);
    let c = concat(&[a.clone(), b.clone()]).unwrap();
    c.mul(&Value::constant(vec![2.0, 5.0, 7.0]))
        .unwrap()
        .sum()
        .backward()
        .unwrap();
    assert_eq!(a.grad().unwrap(), vec![2.0, 5.0]);
    assert_eq!(b.grad().unwrap(), vec![7.0]);
}

#[test]
fn repeat_chunks_backward_sums_within_chunks() {
    let v = tracked(&[0.5, -1.0]);
    v.repeat_chunks(3).unwrap().sum().backward().unwrap();
    // Constant gradient over each chunk sums to the chunk size.
    assert_eq!(v.grad().unwrap(), vec![3.0, 3.0]);
}

#[test]
fn shared_subgraphs_accumulate_once_per_path() {
    // f = s + s with s = x * x: df/dx = 4x.
    let x = tracked(&[3.0]);
    let s = x.mul(&x).unwrap();
    let f = s.add(&s).unwrap();
    f.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![12.0]);
}

#[test]
fn untracked_inputs_contribute_no_gradient_flow() {
    let x = tracked(&[2.0]);
    let c = Value::scalar(5.0);
    let f = x.mul(&c).unwrap().sum();
    assert!(f.is_tracked());
    f.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![5.0]);
    assert!(c.grad().is_none());

    // A graph of constants only cannot be differentiated.
    let g = c.mul(&c).unwrap().sum();
    assert!(matches!(g.backward(), Err(Error::Input(_))));
}

#[test]
fn grad_check_quadratic_at_three() {
    let params = vec![("x".to_string(), Tensor::vector(vec![3.0]))];
    let report = grad_check(&params, 1e-5, 1e-6, |leaves| {
        Ok(leaves[0].mul(&leaves[0])?.sum())
    })
    .unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
    assert!(report.max_rel_err < 1e-6);
}

#[test]
fn softmax_normalization_has_zero_gradient() {
    // f = sum(softmax(x)) is constant 1; both analytic and FD gradients
    // must vanish.
    let x = tracked(&[0.3, -1.2, 0.7]);
    let f = x.softmax().unwrap().sum();
    assert!((f.item() - 1.0).abs() < 1e-12);
    f.backward().unwrap();
    for g in x.grad().unwrap() {
        assert!(g.abs() < 1e-8, "analytic grad {g}");
    }
    let eps = 1e-5;
    let mut data = vec![0.3, -1.2, 0.7];
    for j in 0..3 {
        let orig = data[j];
        data[j] = orig + eps;
        let plus = Value::constant(data.clone()).softmax().unwrap().sum().item();
        data[j] = orig - eps;
        let minus = Value::constant(data.clone()).softmax().unwrap().sum().item();
        data[j] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        assert!(fd.abs() < 1e-8, "fd grad {fd}");
    }
}

#[test]
fn grad_check_rejects_out_of_range_eps() {
    let params = vec![("x".to_string(), Tensor::vector(vec![1.0]))];
    let err = grad_check(&params, 1e-3, 1e-6, |leaves| Ok(leaves[0].sum())).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn grad_check_reports_non_finite_objective() {
    let params = vec![("x".to_string(), Tensor::vector(vec![0.0]))];
    // ln(x) at x = 0 explodes once perturbed negative.
    let err = grad_check(&params, 1e-5, 1e-6, |leaves| Ok(leaves[0].ln().sum()));
    assert!(err.is_err());
}

#[test]
fn backward_frees_the_graph_and_leaves_survive() {
    let x = tracked(&[1.0, 2.0]);
    let y = x.scale(3.0).sum();
    y.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![3.0, 3.0]);
    // The root is detached; re-running backward sees a leaf-only graph.
    y.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![3.0, 3.0]);
}

#[test]
fn deep_chains_do_not_overflow_on_free() {
    let x = tracked(&[1.0]);
    let mut v = x.clone();
    for _ in 0..200_000 {
        v = v.shift(1.0);
    }
    assert_eq!(v.item(), 200_001.0);
    free_graph(&[&v]);
    drop(v);
}

#[test]
fn deep_chain_backward_is_iterative() {
    let x = tracked(&[1.0]);
    let mut v = x.clone();
    for _ in 0..100_000 {
        v = v.scale(1.0);
    }
    v.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0]);
}

#[test]
fn slice_extracts_and_routes_gradient() {
    let v = tracked(&[1.0, 2.0, 3.0, 4.0]);
    let s = v.slice(1, 2).unwrap();
    assert_eq!(s.to_vec(), vec![2.0, 3.0]);
    s.sum().backward().unwrap();
    assert_eq!(v.grad().unwrap(), vec![0.0, 1.0, 1.0, 0.0]);
}

#[test]
fn clamp_blocks_gradient_outside_range() {
    let v = tracked(&[-2.0, 0.5, 2.0]);
    let c = v.clamp(-1.0, 1.0);
    assert_eq!(c.to_vec(), vec![-1.0, 0.5, 1.0]);
    c.sum().backward().unwrap();
    assert_eq!(v.grad().unwrap(), vec![0.0, 1.0, 0.0]);
}

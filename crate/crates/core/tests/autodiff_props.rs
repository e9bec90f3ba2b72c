//! Property tests: every exported operation's analytic gradient agrees
//! with central finite differences, plus the softmax/cumsum invariants.
//!
//! Inputs are drawn away from kinks and cancellation points so the 1e-6
//! relative tolerance is meaningful against finite-difference noise.

use proptest::prelude::*;
use stagenet_core::autodiff::{concat, grad_check, Value};
use stagenet_core::Tensor;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-6;

/// Entries with magnitude in [0.3, 2], either sign.
fn away_from_zero(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0.3f64..2.0, prop::bool::ANY), n).prop_map(|v| {
        v.into_iter()
            .map(|(m, neg)| if neg { -m } else { m })
            .collect()
    })
}

fn smallish(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn positive(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

/// Random positive probe weights keep per-coordinate gradients away from
/// zero for linear ops.
fn probe(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.5f64..1.5, n)
}

fn check1(x: Vec<f64>, w: Vec<f64>, f: impl Fn(&Value) -> stagenet_core::Result<Value>) {
    let params = vec![("x".to_string(), Tensor::vector(x))];
    let report = grad_check(&params, EPS, TOL, |leaves| {
        let out = f(&leaves[0])?;
        let wv = Value::leaf(out.shape(), w.clone(), false)?;
        Ok(out.mul(&wv)?.sum())
    })
    .unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
}

fn check2(
    a: Vec<f64>,
    b: Vec<f64>,
    ashape: Vec<usize>,
    bshape: Vec<usize>,
    w: Vec<f64>,
    f: impl Fn(&Value, &Value) -> stagenet_core::Result<Value>,
) {
    let params = vec![
        ("a".to_string(), Tensor::new(ashape, a).unwrap()),
        ("b".to_string(), Tensor::new(bshape, b).unwrap()),
    ];
    let report = grad_check(&params, EPS, TOL, |leaves| {
        let out = f(&leaves[0], &leaves[1])?;
        let wv = Value::leaf(out.shape(), w.clone(), false)?;
        Ok(out.mul(&wv)?.sum())
    })
    .unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
}

proptest! {
    #[test]
    fn add_gradients(a in smallish(5), b in smallish(5), w in probe(5)) {
        check2(a, b, vec![5], vec![5], w, |x, y| x.add(y));
    }

    #[test]
    fn sub_gradients(a in smallish(5), b in smallish(5), w in probe(5)) {
        check2(a, b, vec![5], vec![5], w, |x, y| x.sub(y));
    }

    #[test]
    fn mul_gradients(a in away_from_zero(5), b in away_from_zero(5), w in probe(5)) {
        check2(a, b, vec![5], vec![5], w, |x, y| x.mul(y));
    }

    #[test]
    fn mul_scalar_gradients(a in away_from_zero(5), s in away_from_zero(1), w in probe(5)) {
        check2(a, s, vec![5], vec![1], w, |x, y| x.mul_scalar(y));
    }

    #[test]
    fn scale_and_shift_gradients(a in smallish(4), c in 0.5f64..2.0, w in probe(4)) {
        check1(a.clone(), w.clone(), |x| Ok(x.scale(c)));
        check1(a, w, |x| Ok(x.shift(c)));
    }

    #[test]
    fn matmul_vector_gradients(a in positive(6, 0.3, 2.0), b in positive(3, 0.3, 2.0), w in probe(2)) {
        check2(a, b, vec![2, 3], vec![3], w, |x, y| x.matmul(y));
    }

    #[test]
    fn matmul_matrix_gradients(a in positive(6, 0.3, 2.0), b in positive(6, 0.3, 2.0), w in probe(4)) {
        check2(a, b, vec![2, 3], vec![3, 2], w, |x, y| x.matmul(y));
    }

    #[test]
    fn softmax_gradients(x in smallish(4), w in probe(4)) {
        // Skip draws where some coordinate's true gradient nearly vanishes:
        // the finite-difference noise floor swamps the 1e-6 tolerance there.
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
        let t: f64 = e.iter().sum();
        let y: Vec<f64> = e.iter().map(|v| v / t).collect();
        let wbar: f64 = w.iter().zip(&y).map(|(wi, yi)| wi * yi).sum();
        prop_assume!(y.iter().zip(&w).all(|(yi, wi)| (yi * (wi - wbar)).abs() > 1e-3));
        check1(x, w, |v| v.softmax());
    }

    #[test]
    fn cumsum_gradients(x in smallish(5), w in probe(5)) {
        check1(x.clone(), w.clone(), |v| v.cumsum_fwd());
        check1(x, w, |v| v.cumsum_bwd());
    }

    #[test]
    fn sigmoid_tanh_gradients(x in smallish(4), w in probe(4)) {
        check1(x.clone(), w.clone(), |v| Ok(v.sigmoid()));
        check1(x, w, |v| Ok(v.tanh()));
    }

    #[test]
    fn relu_gradients(x in away_from_zero(5), w in probe(5)) {
        check1(x, w, |v| Ok(v.relu()));
    }

    #[test]
    fn ln_gradients(x in positive(4, 0.2, 3.0), w in probe(4)) {
        check1(x, w, |v| Ok(v.ln()));
    }

    #[test]
    fn clamp_gradients(x in away_from_zero(5), w in probe(5)) {
        // Magnitudes lie in [0.3, 2]; bounds at ±{0.25, 2.1} keep every
        // entry at least 0.05 from a kink.
        check1(x, w, |v| Ok(v.clamp(-2.1, 2.1)));
        // And a clamp that actually bites (entries below 0.25 in magnitude
        // do not exist, entries above 1.0 are cut).
        let x2: Vec<f64> = vec![0.5, -1.8, 0.4, 1.9, -0.6];
        let w2 = vec![1.0; 5];
        check1(x2, w2, |v| Ok(v.clamp(-1.0, 1.0)));
    }

    #[test]
    fn mean_sum_gradients(x in smallish(6), w in probe(1)) {
        check1(x.clone(), w.clone(), |v| Ok(v.mean()));
        check1(x, w, |v| Ok(v.sum()));
    }

    #[test]
    fn concat_gradients(a in smallish(3), b in smallish(2), w in probe(5)) {
        check2(a, b, vec![3], vec![2], w, |x, y| concat(&[x.clone(), y.clone()]));
    }

    #[test]
    fn slice_gradients(x in smallish(6), w in probe(3)) {
        check1(x, w, |v| v.slice(2, 3));
    }

    #[test]
    fn repeat_chunks_gradients(x in smallish(3), c in 1usize..4, w_seed in 0u64..1000) {
        // Probe length depends on c; derive deterministically.
        let n = 3 * c;
        let w: Vec<f64> = (0..n).map(|i| 0.5 + ((w_seed as usize + i) % 7) as f64 / 7.0).collect();
        check1(x, w, |v| v.repeat_chunks(c));
    }

    // ---- invariants -------------------------------------------------------

    #[test]
    // Logit spread stays below ~34 so no output rounds to exactly 0 or 1
    // in f64; strict openness is a real-arithmetic property.
    fn softmax_is_a_distribution(x in prop::collection::vec(-15.0f64..15.0, 2..8)) {
        let y = Value::constant(x).softmax().unwrap().to_vec();
        let total: f64 = y.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for v in y {
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn cumsum_monotone_on_nonnegative(x in prop::collection::vec(0.0f64..3.0, 1..8)) {
        let fwd = Value::constant(x.clone()).cumsum_fwd().unwrap().to_vec();
        for w in fwd.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        let bwd = Value::constant(x).cumsum_bwd().unwrap().to_vec();
        for w in bwd.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn repeat_chunks_linearity(x in smallish(4), c in 1usize..5) {
        // Backward of a constant-weight sum over chunks multiplies the
        // gradient by c.
        let leaf = Value::leaf(vec![4], x, true).unwrap();
        leaf.repeat_chunks(c).unwrap().sum().backward().unwrap();
        for g in leaf.grad().unwrap() {
            prop_assert!((g - c as f64).abs() < 1e-15);
        }
    }
}

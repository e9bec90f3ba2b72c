use super::*;
use crate::autodiff::grad_check;
use crate::rng::stream_rng;
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn window_from_data(hidden: &[Vec<f64>], s_norms: &[f64]) -> StageWindow {
    StageWindow {
        hidden: hidden.iter().map(|h| Value::constant(h.clone())).collect(),
        s_norms: s_norms.iter().map(|&s| Value::scalar(s)).collect(),
    }
}

fn random_window(k: usize, nh: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let hidden = (0..k)
        .map(|_| (0..nh).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let s_norms = (0..k).map(|_| rng.gen_range(0.0..0.9)).collect();
    (hidden, s_norms)
}

#[test]
fn zero_history_gives_uniform_weights() {
    let window = window_from_data(&vec![vec![0.0; 4]; 5], &[0.0; 5]);
    let ds = stage_weights(&window).unwrap().to_vec();
    for w in &ds {
        assert!((w - 0.2).abs() < 1e-12);
    }
}

#[test]
fn constant_stage_variation_hand_case() {
    // S = [1, 1, 1]: cumsum [1, 2, 3], softmax([1, 2, 3]).
    let window = window_from_data(&vec![vec![0.0; 2]; 3], &[1.0, 1.0, 1.0]);
    let ds = stage_weights(&window).unwrap().to_vec();
    let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).collect();
    let total: f64 = e.iter().sum();
    for (got, want) in ds.iter().zip(e.iter().map(|x| x / total)) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!((ds[0] - 0.0900).abs() < 5e-5);
    assert!((ds[1] - 0.2447).abs() < 5e-5);
    assert!((ds[2] - 0.6652).abs() < 5e-5);
}

#[test]
fn weights_sum_to_one_and_rise_toward_the_present() {
    for seed in 0..50 {
        let mut rng = stream_rng(seed, 31);
        let (hidden, s_norms) = random_window(6, 3, &mut rng);
        let window = window_from_data(&hidden, &s_norms);
        let ds = stage_weights(&window).unwrap().to_vec();
        let total: f64 = ds.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
        for w in ds.windows(2) {
            assert!(w[1] >= w[0] - 1e-15, "weights must be nondecreasing: {ds:?}");
        }
    }
}

#[test]
fn doubling_constant_variation_sharpens_the_newest_weight() {
    let mut last = 0.0;
    for i in 0..6 {
        let delta = 0.25 * i as f64;
        let window = window_from_data(&vec![vec![0.0; 2]; 4], &[delta; 4]);
        let ds = stage_weights(&window).unwrap().to_vec();
        assert!(
            ds[3] >= last - 1e-15,
            "newest weight should grow with delta: {ds:?}"
        );
        last = ds[3];
    }
    assert!(last > 0.6, "sharpened weight {last}");
}

// Triple-nested scalar oracle for the stage-weighted convolution.
fn conv_oracle(kernels: &Tensor, hidden: &[Vec<f64>], ds: &[f64], nh: usize, k: usize) -> Vec<f64> {
    let n_kernels = kernels.shape[0];
    let mut out = vec![0.0; n_kernels];
    for i in 0..n_kernels {
        for j in 0..nh {
            for kk in 0..k {
                // Column layout is position-major: kk * nh + j.
                out[i] += kernels.data[i * (k * nh) + kk * nh + j] * hidden[kk][j] * ds[kk];
            }
        }
    }
    out
}

#[test]
fn conv_of_zero_window_is_zero() {
    let mut rng = stream_rng(1, 32);
    let (k, nh) = (3, 4);
    let kernels = Tensor::new(
        vec![nh, k * nh],
        (0..nh * k * nh).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let w_conv = Value::leaf(kernels.shape.clone(), kernels.data.clone(), false).unwrap();
    let window = window_from_data(&vec![vec![0.0; nh]; k], &[0.1, 0.5, 0.2]);
    let ds = stage_weights(&window).unwrap();
    let u = stage_conv(&window, &ds, &w_conv).unwrap();
    assert!(u.to_vec().iter().all(|&x| x == 0.0));
}

#[test]
fn all_ones_kernel_with_uniform_weights_averages_the_window() {
    let (k, nh) = (4, 3);
    let w_conv = Value::leaf(vec![1, k * nh], vec![1.0; k * nh], false).unwrap();
    let mut rng = stream_rng(2, 32);
    let (hidden, _) = random_window(k, nh, &mut rng);
    // Zero s_norm: uniform stage weights 1/K.
    let window = window_from_data(&hidden, &vec![0.0; k]);
    let ds = stage_weights(&window).unwrap();
    let u = stage_conv(&window, &ds, &w_conv).unwrap();
    let total: f64 = hidden.iter().flatten().sum();
    assert!((u.to_vec()[0] - total / k as f64).abs() < 1e-12);
}

#[test]
fn stage_conv_matches_triple_loop_oracle() {
    for seed in 0..120 {
        let mut rng = stream_rng(seed, 33);
        let (k, nh) = (3, 4);
        let kernels = Tensor::new(
            vec![nh, k * nh],
            (0..nh * k * nh).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let w_conv = Value::leaf(kernels.shape.clone(), kernels.data.clone(), false).unwrap();
        let (hidden, s_norms) = random_window(k, nh, &mut rng);
        let window = window_from_data(&hidden, &s_norms);
        let ds = stage_weights(&window).unwrap();
        let u = stage_conv(&window, &ds, &w_conv).unwrap();
        let oracle = conv_oracle(&kernels, &hidden, &ds.to_vec(), nh, k);
        for (a, b) in u.to_vec().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-12, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn theme_of_equal_rows_is_row_over_k() {
    let k = 5;
    let row = vec![0.7, -0.3, 1.1];
    let window = window_from_data(&vec![row.clone(); k], &vec![0.0; k]);
    let ds = stage_weights(&window).unwrap();
    let z = progression_theme(&window, &ds).unwrap().to_vec();
    for (a, b) in z.iter().zip(&row) {
        assert!((a - b / k as f64).abs() < 1e-12);
    }
}

#[test]
fn progression_theme_matches_scalar_oracle() {
    for seed in 0..120 {
        let mut rng = stream_rng(seed, 34);
        let (k, nh) = (4, 3);
        let (hidden, s_norms) = random_window(k, nh, &mut rng);
        let window = window_from_data(&hidden, &s_norms);
        let ds = stage_weights(&window).unwrap();
        let z = progression_theme(&window, &ds).unwrap().to_vec();
        let dsv = ds.to_vec();
        for j in 0..nh {
            let mut want = 0.0;
            for kk in 0..k {
                want += dsv[kk] * hidden[kk][j];
            }
            want /= k as f64;
            assert!((z[j] - want).abs() <= 1e-12, "seed {seed}");
        }
    }
}

#[test]
fn module_is_linear_in_the_hidden_states() {
    let mut rng = stream_rng(4, 35);
    let (k, nh) = (3, 4);
    let kernels: Vec<f64> = (0..nh * k * nh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w_conv = Value::leaf(vec![nh, k * nh], kernels, false).unwrap();
    let (hidden, s_norms) = random_window(k, nh, &mut rng);
    let alpha = 2.75;
    let scaled: Vec<Vec<f64>> = hidden
        .iter()
        .map(|row| row.iter().map(|x| x * alpha).collect())
        .collect();
    let w1 = window_from_data(&hidden, &s_norms);
    let w2 = window_from_data(&scaled, &s_norms);
    let ds = stage_weights(&w1).unwrap();
    let (u1, z1) = (
        stage_conv(&w1, &ds, &w_conv).unwrap().to_vec(),
        progression_theme(&w1, &ds).unwrap().to_vec(),
    );
    let (u2, z2) = (
        stage_conv(&w2, &ds, &w_conv).unwrap().to_vec(),
        progression_theme(&w2, &ds).unwrap().to_vec(),
    );
    for (a, b) in u1.iter().zip(&u2) {
        assert!((a * alpha - b).abs() < 1e-12);
    }
    for (a, b) in z1.iter().zip(&z2) {
        assert!((a * alpha - b).abs() < 1e-12);
    }
}

fn random_conv_params(nh: usize, nx: usize, k: usize, rng: &mut ChaCha8Rng) -> ConvParams {
    let mk = |shape: Vec<usize>, rng: &mut ChaCha8Rng| {
        let n: usize = shape.iter().product();
        Value::leaf(shape, (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect(), false).unwrap()
    };
    ConvParams {
        w_conv: mk(vec![nh, k * nh], rng),
        w_x2: mk(vec![nx, nh], rng),
        w_x1: mk(vec![nh, nx], rng),
    }
}

#[test]
fn zero_excitation_halves_the_patterns() {
    let nh = 4;
    let p = ConvParams {
        w_conv: Value::leaf(vec![nh, nh], vec![0.0; nh * nh], false).unwrap(),
        w_x2: Value::leaf(vec![2, nh], vec![0.0; 2 * nh], false).unwrap(),
        w_x1: Value::leaf(vec![nh, 2], vec![0.0; nh * 2], false).unwrap(),
    };
    let u = Value::constant(vec![0.4, -1.0, 2.0, 0.0]);
    let z = Value::constant(vec![1.0; nh]);
    let (u_tilde, x) = recalibrate(&u, &z, &p).unwrap();
    assert!(x.to_vec().iter().all(|&v| v == 0.5));
    for (a, b) in u_tilde.to_vec().iter().zip(u.to_vec()) {
        assert_eq!(*a, 0.5 * b);
    }
}

#[test]
fn zero_patterns_stay_zero_under_any_excitation() {
    let mut rng = stream_rng(6, 36);
    let p = random_conv_params(4, 2, 3, &mut rng);
    let u = Value::constant(vec![0.0; 4]);
    let z = Value::constant((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let (u_tilde, _) = recalibrate(&u, &z, &p).unwrap();
    assert!(u_tilde.to_vec().iter().all(|&v| v == 0.0));
}

#[test]
fn recalibration_attenuates_elementwise() {
    for seed in 0..100 {
        let mut rng = stream_rng(seed, 37);
        let p = random_conv_params(5, 2, 3, &mut rng);
        let u = Value::constant((0..5).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let z = Value::constant((0..5).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let (u_tilde, x) = recalibrate(&u, &z, &p).unwrap();
        for v in x.to_vec() {
            assert!(v > 0.0 && v < 1.0);
        }
        for (ut, uu) in u_tilde.to_vec().iter().zip(u.to_vec()) {
            assert!(ut.abs() <= uu.abs() + 1e-15);
        }
    }
}

#[test]
fn full_module_gradients_match_finite_differences() {
    // Parameters include the window contents, so the check covers the path
    // through the stage weights into both the convolution and the theme.
    let mut rng = stream_rng(12, 38);
    let (k, nh, nx) = (3, 4, 2);
    let mut named: Vec<(String, Tensor)> = Vec::new();
    for i in 0..k {
        named.push((
            format!("h{i}"),
            Tensor::vector((0..nh).map(|_| rng.gen_range(-1.0..1.0)).collect()),
        ));
        named.push((
            format!("s{i}"),
            Tensor::vector(vec![rng.gen_range(0.05..0.8)]),
        ));
    }
    named.push((
        "w_conv".into(),
        Tensor::new(
            vec![nh, k * nh],
            (0..nh * k * nh).map(|_| rng.gen_range(-0.8..0.8)).collect(),
        )
        .unwrap(),
    ));
    named.push((
        "w_x2".into(),
        Tensor::new(vec![nx, nh], (0..nx * nh).map(|_| rng.gen_range(-0.8..0.8)).collect()).unwrap(),
    ));
    named.push((
        "w_x1".into(),
        Tensor::new(vec![nh, nx], (0..nh * nx).map(|_| rng.gen_range(-0.8..0.8)).collect()).unwrap(),
    ));
    let probe: Vec<f64> = (0..nh).map(|_| rng.gen_range(0.5..1.5)).collect();

    let report = grad_check(&named, 1e-5, 1e-4, |leaves| {
        let window = StageWindow {
            hidden: (0..k).map(|i| leaves[2 * i].clone()).collect(),
            s_norms: (0..k).map(|i| leaves[2 * i + 1].clone()).collect(),
        };
        let p = ConvParams {
            w_conv: leaves[2 * k].clone(),
            w_x2: leaves[2 * k + 1].clone(),
            w_x1: leaves[2 * k + 2].clone(),
        };
        let ds = stage_weights(&window)?;
        let u = stage_conv(&window, &ds, &p.w_conv)?;
        let z = progression_theme(&window, &ds)?;
        let (u_tilde, _) = recalibrate(&u, &z, &p)?;
        Ok(u_tilde.mul(&Value::constant(probe.clone()))?.sum())
    })
    .unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
}

#[test]
fn window_build_pads_on_the_left_with_exact_zeros() {
    let recent = vec![(Value::constant(vec![1.0, 2.0]), Value::scalar(0.3))];
    let w = StageWindow::build(&recent, 3, 2).unwrap();
    assert_eq!(w.k(), 3);
    assert_eq!(w.hidden[0].to_vec(), vec![0.0, 0.0]);
    assert_eq!(w.s_norms[0].to_vec(), vec![0.0]);
    assert_eq!(w.hidden[2].to_vec(), vec![1.0, 2.0]);
    // Padded rows contribute nothing to the convolution regardless of
    // their softmax weight.
    let w_conv = Value::leaf(vec![2, 6], vec![1.0; 12], false).unwrap();
    let ds = stage_weights(&w).unwrap();
    let u = stage_conv(&w, &ds, &w_conv).unwrap();
    let expect = (1.0 + 2.0) * ds.to_vec()[2];
    for v in u.to_vec() {
        assert!((v - expect).abs() < 1e-12);
    }
}

//! Adam with bias correction, plus global-norm gradient clipping.

use crate::{Error, Result};

use super::{ModelConfig, ParamSet};

/// Scales all gradients by `max_norm / norm` when the global L2 norm
/// exceeds `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for &x in g {
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

/// One Adam update over the whole parameter set. `grads` must be in
/// canonical parameter order.
pub fn adam_step(params: &mut ParamSet, grads: &[Vec<f64>], cfg: &ModelConfig) -> Result<()> {
    if grads.len() != super::PARAM_NAMES.len() {
        return Err(Error::Training(format!(
            "gradient count {} does not match parameter count {}",
            grads.len(),
            super::PARAM_NAMES.len()
        )));
    }
    params.step += 1;
    let t = params.step;
    let bias1 = 1.0 - cfg.beta1.powi(t as i32);
    let bias2 = 1.0 - cfg.beta2.powi(t as i32);
    for ((name, p), g) in params.named_mut().into_iter().zip(grads) {
        if g.len() != p.value.numel() {
            return Err(Error::Training(format!(
                "gradient for {name} has length {}, expected {}",
                g.len(),
                p.value.numel()
            )));
        }
        for (j, &gj) in g.iter().enumerate() {
            if !gj.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite gradient for parameter {name}[{j}]"
                )));
            }
            p.m[j] = cfg.beta1 * p.m[j] + (1.0 - cfg.beta1) * gj;
            p.v[j] = cfg.beta2 * p.v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = p.m[j] / bias1;
            let v_hat = p.v[j] / bias2;
            p.value.data[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            hidden: 4,
            chunk: 2,
            window: 2,
            bottleneck: 2,
            learning_rate: 0.1,
            ..ModelConfig::with_features(2)
        }
    }

    fn zero_grads(ps: &ParamSet) -> Vec<Vec<f64>> {
        ps.named()
            .iter()
            .map(|(_, p)| vec![0.0; p.value.numel()])
            .collect()
    }

    #[test]
    fn zero_gradient_leaves_everything_unchanged() {
        let cfg = tiny_cfg();
        let mut ps = ParamSet::init(&cfg).unwrap();
        let before = ps.clone();
        let grads = zero_grads(&ps);
        adam_step(&mut ps, &grads, &cfg).unwrap();
        assert_eq!(ps.step, 1);
        for ((_, a), (_, b)) in ps.named().iter().zip(before.named().iter()) {
            assert_eq!(a.value, b.value);
            assert!(a.m.iter().all(|&x| x == 0.0));
            assert!(a.v.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = tiny_cfg();
        let mut ps = ParamSet::init(&cfg).unwrap();
        let theta0 = ps.w_f.value.data[0];
        let mut grads = zero_grads(&ps);
        grads[6][0] = 0.37; // w_f is index 6 in canonical order
        adam_step(&mut ps, &grads, &cfg).unwrap();
        // Bias-corrected first step: lr * g / (|g| + eps) ~= lr * sign(g).
        let moved = theta0 - ps.w_f.value.data[0];
        assert!(
            (moved - cfg.learning_rate).abs() < 1e-6,
            "first-step size {moved}"
        );
    }

    #[test]
    fn converges_on_a_scalar_quadratic() {
        // Minimise f(theta) = theta^2 starting from 1, lr = 0.1.
        let cfg = tiny_cfg();
        let mut ps = ParamSet::init(&cfg).unwrap();
        ps.b_y.value.data[0] = 1.0;
        for _ in 0..100 {
            let mut grads = zero_grads(&ps);
            let theta = ps.b_y.value.data[0];
            let gi = grads.len() - 1; // b_y is last
            grads[gi][0] = 2.0 * theta;
            adam_step(&mut ps, &grads, &cfg).unwrap();
        }
        assert!(ps.b_y.value.data[0].abs() < 1e-2, "theta = {}", ps.b_y.value.data[0]);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let cfg = tiny_cfg();
        let mut ps = ParamSet::init(&cfg).unwrap();
        let mut grads = zero_grads(&ps);
        grads[0][1] = f64::NAN;
        let err = adam_step(&mut ps, &grads, &cfg).unwrap_err();
        assert!(err.to_string().contains("w_mf"), "{err}");
    }

    #[test]
    fn clip_rescales_only_above_the_threshold() {
        let mut grads = vec![vec![3.0, 4.0]];
        let norm = clip_global_norm(&mut grads, 10.0);
        assert_eq!(norm, 5.0);
        assert_eq!(grads[0], vec![3.0, 4.0]);
        let norm = clip_global_norm(&mut grads, 1.0);
        assert_eq!(norm, 5.0);
        let new_norm: f64 = grads[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((new_norm - 1.0).abs() < 1e-12);
    }
}

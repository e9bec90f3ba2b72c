//! Central finite-difference verification of analytic gradients.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

use super::Value;

/// Per-parameter comparison of analytic vs finite-difference gradients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub tol_rel: f64,
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Relative error with an absolute floor, so near-zero pairs compare sanely.
pub fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8)
}

/// Checks the gradient of a scalar-valued function of the given parameters.
///
/// `f` receives one `Value` per parameter (same order) and must build the
/// graph from those leaves; it is called once tracked for the analytic
/// gradient and `2 * numel` times untracked for central differences, so it
/// must be deterministic (freeze any stochastic masks).
pub fn grad_check<F>(
    params: &[(String, Tensor)],
    eps: f64,
    tol_rel: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&[Value]) -> Result<Value>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::Config(format!(
            "grad_check eps must lie in [1e-6, 1e-4], got {eps}"
        )));
    }
    if params.is_empty() {
        return Err(Error::Input("grad_check with no parameters".into()));
    }

    // Analytic pass.
    let leaves: Vec<Value> = params
        .iter()
        .map(|(_, t)| Value::leaf(t.shape.clone(), t.data.clone(), true))
        .collect::<Result<_>>()?;
    let y = f(&leaves)?;
    if y.len() != 1 {
        return Err(Error::Input("grad_check target must be scalar".into()));
    }
    if !y.item().is_finite() {
        return Err(Error::Numeric("grad_check target is non-finite at base point".into()));
    }
    y.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| l.grad().expect("tracked leaf has gradient"))
        .collect();

    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let vals: Vec<Value> = tensors
            .iter()
            .map(|t| Value::leaf(t.shape.clone(), t.data.clone(), false))
            .collect::<Result<_>>()?;
        Ok(f(&vals)?.item())
    };

    let mut work: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut entries = Vec::with_capacity(params.len());
    let mut global_max_rel: f64 = 0.0;
    for (pi, (name, tensor)) in params.iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for j in 0..tensor.numel() {
            let orig = tensor.data[j];
            work[pi].data[j] = orig + eps;
            let f_plus = eval(&work)?;
            work[pi].data[j] = orig - eps;
            let f_minus = eval(&work)?;
            work[pi].data[j] = orig;
            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite objective while perturbing {name}[{j}]"
                )));
            }
            let fd = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic[pi][j];
            max_abs = max_abs.max((a - fd).abs());
            max_rel = max_rel.max(rel_err(a, fd));
        }
        global_max_rel = global_max_rel.max(max_rel);
        entries.push(GradCheckEntry {
            name: name.clone(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            pass: max_rel <= tol_rel,
        });
    }

    let pass = entries.iter().all(|e| e.pass);
    Ok(GradCheckReport {
        eps,
        tol_rel,
        entries,
        max_rel_err: global_max_rel,
        pass,
    })
}

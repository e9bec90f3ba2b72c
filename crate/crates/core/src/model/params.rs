//! Parameter storage and its differentiable lift.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Value;
use crate::cell::CellParams;
use crate::conv::ConvParams;
use crate::rng::stream_rng;
use crate::tensor::Tensor;
use crate::{Error, Result};

use super::ModelConfig;

const STREAM_PARAM_INIT: u64 = 0x7061_7261_0000_0000;

/// One named parameter tensor with its Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Param {
    fn new(value: Tensor) -> Self {
        let n = value.numel();
        Param {
            value,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Canonical parameter order used everywhere gradients or checkpoints are
/// exchanged.
pub const PARAM_NAMES: [&str; 23] = [
    "w_mf", "u_mf", "b_mf", "w_mi", "u_mi", "b_mi", "w_f", "u_f", "b_f", "w_i", "u_i", "b_i",
    "w_o", "u_o", "b_o", "w_c", "u_c", "b_c", "w_conv", "w_x2", "w_x1", "w_y", "b_y",
];

/// Full parameter set plus the optimizer step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub step: u64,
    pub w_mf: Param,
    pub u_mf: Param,
    pub b_mf: Param,
    pub w_mi: Param,
    pub u_mi: Param,
    pub b_mi: Param,
    pub w_f: Param,
    pub u_f: Param,
    pub b_f: Param,
    pub w_i: Param,
    pub u_i: Param,
    pub b_i: Param,
    pub w_o: Param,
    pub u_o: Param,
    pub b_o: Param,
    pub w_c: Param,
    pub u_c: Param,
    pub b_c: Param,
    pub w_conv: Param,
    pub w_x2: Param,
    pub w_x1: Param,
    pub w_y: Param,
    pub b_y: Param,
}

/// `(name, [rows, cols])` or `(name, [len])` for every parameter.
pub fn expected_shapes(cfg: &ModelConfig) -> Vec<(&'static str, Vec<usize>)> {
    let nv = cfg.n_features;
    let nh = cfg.hidden;
    let nm = cfg.master_dim();
    let k = cfg.window;
    let nx = cfg.bottleneck;
    vec![
        ("w_mf", vec![nm, nv + 1]),
        ("u_mf", vec![nm, nh + 1]),
        ("b_mf", vec![nm]),
        ("w_mi", vec![nm, nv + 1]),
        ("u_mi", vec![nm, nh + 1]),
        ("b_mi", vec![nm]),
        ("w_f", vec![nh, nv + 1]),
        ("u_f", vec![nh, nh + 1]),
        ("b_f", vec![nh]),
        ("w_i", vec![nh, nv + 1]),
        ("u_i", vec![nh, nh + 1]),
        ("b_i", vec![nh]),
        ("w_o", vec![nh, nv + 1]),
        ("u_o", vec![nh, nh + 1]),
        ("b_o", vec![nh]),
        ("w_c", vec![nh, nv + 1]),
        ("u_c", vec![nh, nh + 1]),
        ("b_c", vec![nh]),
        ("w_conv", vec![nh, k * nh]),
        ("w_x2", vec![nx, nh]),
        ("w_x1", vec![nh, nx]),
        ("w_y", vec![1, nh]),
        ("b_y", vec![1]),
    ]
}

impl ParamSet {
    /// Fresh parameters: weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(cfg: &ModelConfig) -> Result<ParamSet> {
        cfg.validate()?;
        let mut rng = stream_rng(cfg.seed, STREAM_PARAM_INIT);
        let mut tensors = Vec::new();
        for (_, shape) in expected_shapes(cfg) {
            let tensor = if shape.len() == 2 {
                let fan_in = shape[1];
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..shape[0] * shape[1])
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                Tensor::new(shape, data)?
            } else {
                Tensor::zeros(shape)
            };
            tensors.push(tensor);
        }
        ParamSet::from_tensors(tensors.into_iter().map(Param::new).collect(), 0)
    }

    fn from_tensors(mut params: Vec<Param>, step: u64) -> Result<ParamSet> {
        if params.len() != PARAM_NAMES.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, got {}",
                PARAM_NAMES.len(),
                params.len()
            )));
        }
        let mut drain = params.drain(..);
        let mut next = || drain.next().expect("length checked above");
        Ok(ParamSet {
            step,
            w_mf: next(),
            u_mf: next(),
            b_mf: next(),
            w_mi: next(),
            u_mi: next(),
            b_mi: next(),
            w_f: next(),
            u_f: next(),
            b_f: next(),
            w_i: next(),
            u_i: next(),
            b_i: next(),
            w_o: next(),
            u_o: next(),
            b_o: next(),
            w_c: next(),
            u_c: next(),
            b_c: next(),
            w_conv: next(),
            w_x2: next(),
            w_x1: next(),
            w_y: next(),
            b_y: next(),
        })
    }

    /// Rebuild from named `(tensor, m, v)` triples in any order, validating
    /// names and shapes against the config.
    pub fn restore(
        cfg: &ModelConfig,
        entries: &[(String, Tensor, Vec<f64>, Vec<f64>)],
        step: u64,
    ) -> Result<ParamSet> {
        let expected = expected_shapes(cfg);
        let mut params = Vec::with_capacity(expected.len());
        for (name, shape) in &expected {
            let found = entries
                .iter()
                .find(|(n, _, _, _)| n == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let (_, tensor, m, v) = found;
            if &tensor.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    tensor.shape, shape
                )));
            }
            if m.len() != tensor.numel() || v.len() != tensor.numel() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} moments have wrong length"
                )));
            }
            params.push(Param {
                value: tensor.clone(),
                m: m.clone(),
                v: v.clone(),
            });
        }
        if entries.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, expected {}",
                entries.len(),
                expected.len()
            )));
        }
        ParamSet::from_tensors(params, step)
    }

    pub fn named(&self) -> Vec<(&'static str, &Param)> {
        vec![
            ("w_mf", &self.w_mf),
            ("u_mf", &self.u_mf),
            ("b_mf", &self.b_mf),
            ("w_mi", &self.w_mi),
            ("u_mi", &self.u_mi),
            ("b_mi", &self.b_mi),
            ("w_f", &self.w_f),
            ("u_f", &self.u_f),
            ("b_f", &self.b_f),
            ("w_i", &self.w_i),
            ("u_i", &self.u_i),
            ("b_i", &self.b_i),
            ("w_o", &self.w_o),
            ("u_o", &self.u_o),
            ("b_o", &self.b_o),
            ("w_c", &self.w_c),
            ("u_c", &self.u_c),
            ("b_c", &self.b_c),
            ("w_conv", &self.w_conv),
            ("w_x2", &self.w_x2),
            ("w_x1", &self.w_x1),
            ("w_y", &self.w_y),
            ("b_y", &self.b_y),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![
            ("w_mf", &mut self.w_mf),
            ("u_mf", &mut self.u_mf),
            ("b_mf", &mut self.b_mf),
            ("w_mi", &mut self.w_mi),
            ("u_mi", &mut self.u_mi),
            ("b_mi", &mut self.b_mi),
            ("w_f", &mut self.w_f),
            ("u_f", &mut self.u_f),
            ("b_f", &mut self.b_f),
            ("w_i", &mut self.w_i),
            ("u_i", &mut self.u_i),
            ("b_i", &mut self.b_i),
            ("w_o", &mut self.w_o),
            ("u_o", &mut self.u_o),
            ("b_o", &mut self.b_o),
            ("w_c", &mut self.w_c),
            ("u_c", &mut self.u_c),
            ("b_c", &mut self.b_c),
            ("w_conv", &mut self.w_conv),
            ("w_x2", &mut self.w_x2),
            ("w_x1", &mut self.w_x1),
            ("w_y", &mut self.w_y),
            ("b_y", &mut self.b_y),
        ]
    }

    /// Named tensors in canonical order (for the gradient checker).
    pub fn to_named_tensors(&self) -> Vec<(String, Tensor)> {
        self.named()
            .into_iter()
            .map(|(name, p)| (name.to_string(), p.value.clone()))
            .collect()
    }
}

/// Differentiable parameter handles for one forward/backward pass.
///
/// `leaves` are the raw tracked leaves in canonical order; the `cell`,
/// `conv` and head fields may wrap them (dropconnect masks the recurrent
/// matrices), so gradients are always read off `leaves`.
pub struct LiveParams {
    pub cell: CellParams,
    pub conv: ConvParams,
    pub w_y: Value,
    pub b_y: Value,
    leaves: Vec<Value>,
}

impl LiveParams {
    pub fn new(ps: &ParamSet, tracked: bool) -> Result<LiveParams> {
        let leaves: Vec<Value> = ps
            .named()
            .into_iter()
            .map(|(_, p)| Value::leaf(p.value.shape.clone(), p.value.data.clone(), tracked))
            .collect::<Result<_>>()?;
        Self::assemble(leaves, None)
    }

    /// Lift with dropconnect: every recurrent matrix `u_*` is multiplied by
    /// a Bernoulli(1 - p) zero/one mask sampled once for the whole batch.
    pub fn with_dropconnect(
        ps: &ParamSet,
        p: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<LiveParams> {
        let leaves: Vec<Value> = ps
            .named()
            .into_iter()
            .map(|(_, prm)| Value::leaf(prm.value.shape.clone(), prm.value.data.clone(), true))
            .collect::<Result<_>>()?;
        let masks: Vec<Value> = ps
            .named()
            .into_iter()
            .map(|(name, prm)| {
                if name.starts_with("u_") {
                    let data = (0..prm.value.numel())
                        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { 1.0 })
                        .collect();
                    Value::leaf(prm.value.shape.clone(), data, false)
                } else {
                    // Placeholder, unused for non-recurrent parameters.
                    Ok(Value::scalar(1.0))
                }
            })
            .collect::<Result<_>>()?;
        Self::assemble(leaves, Some(masks))
    }

    /// Build from externally supplied leaves in canonical order (used by the
    /// gradient checker). No dropconnect.
    pub fn from_leaves(vals: &[Value]) -> Result<LiveParams> {
        if vals.len() != PARAM_NAMES.len() {
            return Err(Error::Input(format!(
                "expected {} parameter values, got {}",
                PARAM_NAMES.len(),
                vals.len()
            )));
        }
        Self::assemble(vals.to_vec(), None)
    }

    fn assemble(leaves: Vec<Value>, masks: Option<Vec<Value>>) -> Result<LiveParams> {
        let eff = |i: usize| -> Result<Value> {
            match &masks {
                Some(ms) if PARAM_NAMES[i].starts_with("u_") => leaves[i].mul(&ms[i]),
                _ => Ok(leaves[i].clone()),
            }
        };
        let cell = CellParams {
            w_mf: eff(0)?,
            u_mf: eff(1)?,
            b_mf: eff(2)?,
            w_mi: eff(3)?,
            u_mi: eff(4)?,
            b_mi: eff(5)?,
            w_f: eff(6)?,
            u_f: eff(7)?,
            b_f: eff(8)?,
            w_i: eff(9)?,
            u_i: eff(10)?,
            b_i: eff(11)?,
            w_o: eff(12)?,
            u_o: eff(13)?,
            b_o: eff(14)?,
            w_c: eff(15)?,
            u_c: eff(16)?,
            b_c: eff(17)?,
        };
        let conv = ConvParams {
            w_conv: eff(18)?,
            w_x2: eff(19)?,
            w_x1: eff(20)?,
        };
        let w_y = eff(21)?;
        let b_y = eff(22)?;
        Ok(LiveParams {
            cell,
            conv,
            w_y,
            b_y,
            leaves,
        })
    }

    /// Accumulated gradients in canonical order (zeros when untracked).
    pub fn leaf_grads(&self) -> Vec<Vec<f64>> {
        self.leaves
            .iter()
            .map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.len()]))
            .collect()
    }
}

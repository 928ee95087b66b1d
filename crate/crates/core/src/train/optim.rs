use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};

/// Momentum SGD with global-norm clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    velocity: Vec<Tensor>,
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt()
}

impl Sgd {
    pub fn new<P: ParamSet>(params: &P, learning_rate: f64, momentum: f64, clip_norm: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            clip_norm,
            velocity: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    /// Scales `grads` to norm at most `clip_norm`, then applies
    /// `v ← μ·v + g`, `θ ← θ − η·v`. Returns the pre-clip norm.
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &[Tensor]) -> Result<f64> {
        let mut slots = params.tensors_mut();
        if slots.len() != grads.len() || slots.len() != self.velocity.len() {
            return Err(Error::Contract(format!(
                "{} parameters, {} gradients, {} velocity slots",
                slots.len(),
                grads.len(),
                self.velocity.len()
            )));
        }
        let norm = global_norm(grads);
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("gradient norm is {norm}")));
        }
        let scale = if norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        for ((p, g), v) in slots.iter_mut().zip(grads).zip(&mut self.velocity) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension {
                    op: "sgd",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = self.momentum * *vv + scale * gv;
                *pv -= self.learning_rate * *vv;
            }
        }
        Ok(norm)
    }
}

//! GCN, GAT and MLP encoders plus fully connected heads.
//!
//! Every encoder runs either over the full normalized adjacency or over the
//! per-layer blocks of a [`BatchPlan`](crate::sampling::BatchPlan). Layer
//! `k` computes `Â_k (H W_k) + b_k`, with the activation applied between
//! layers and not after the last one.

mod gnn;
mod mlp;

use serde::{Deserialize, Serialize};

pub use gnn::Encoder;
pub use mlp::Mlp;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tensor::{Bound, ParamId, ParamStore, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gcn,
    Gat,
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Prelu,
    Relu,
    Elu,
}

/// Dropout is active only in training mode; `seed` keys every mask drawn
/// during one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatConfig {
    pub num_heads: usize,
    pub attn_drop: f64,
    pub negative_slope: f64,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            num_heads: 4,
            attn_drop: 0.1,
            negative_slope: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Output width of each layer; its length is the number of layers.
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    /// Dropout on every layer input during training.
    pub in_drop: f64,
    /// Required when `kind` is GAT, rejected otherwise.
    pub gat: Option<GatConfig>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::gcn(vec![256, 256])
    }
}

impl EncoderConfig {
    pub fn gcn(hidden_dims: Vec<usize>) -> Self {
        Self {
            kind: EncoderKind::Gcn,
            hidden_dims,
            activation: Activation::Prelu,
            in_drop: 0.0,
            gat: None,
        }
    }

    pub fn gat(hidden_dims: Vec<usize>, gat: GatConfig) -> Self {
        Self {
            kind: EncoderKind::Gat,
            hidden_dims,
            activation: Activation::Elu,
            in_drop: 0.0,
            gat: Some(gat),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len()
    }

    pub fn out_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "encoder needs at least one layer with positive widths, got {:?}",
                self.hidden_dims
            )));
        }
        if !(0.0..1.0).contains(&self.in_drop) {
            return Err(Error::Config(format!("encoder.in_drop {} outside [0, 1)", self.in_drop)));
        }
        match (&self.kind, &self.gat) {
            (EncoderKind::Gat, Some(g)) => {
                if g.num_heads == 0 {
                    return Err(Error::Config("encoder.gat.num_heads must be positive".into()));
                }
                if !(0.0..1.0).contains(&g.attn_drop) {
                    return Err(Error::Config(format!("encoder.gat.attn_drop {} outside [0, 1)", g.attn_drop)));
                }
                if !(0.0..1.0).contains(&g.negative_slope) {
                    return Err(Error::Config(format!(
                        "encoder.gat.negative_slope {} outside [0, 1)",
                        g.negative_slope
                    )));
                }
                let k = self.hidden_dims.len();
                if let Some(d) = self.hidden_dims[..k - 1].iter().find(|&&d| d % g.num_heads != 0) {
                    return Err(Error::Config(format!(
                        "hidden width {d} is not divisible by {} heads",
                        g.num_heads
                    )));
                }
                Ok(())
            }
            (EncoderKind::Gat, None) => Err(Error::Config("encoder.kind = \"gat\" needs an [encoder.gat] table".into())),
            (_, Some(_)) => Err(Error::Config("[encoder.gat] is only allowed when encoder.kind = \"gat\"".into())),
            _ => Ok(()),
        }
    }
}

/// An activation together with its learnable slope, if any.
#[derive(Clone, Copy, Debug)]
pub(crate) enum ActivationParam {
    Prelu(ParamId),
    Relu,
    Elu,
}

impl ActivationParam {
    pub(crate) fn register(act: Activation, store: &mut ParamStore, prefix: &str) -> Self {
        match act {
            Activation::Prelu => ActivationParam::Prelu(store.insert(format!("{prefix}.prelu"), Matrix::scalar(0.25))),
            Activation::Relu => ActivationParam::Relu,
            Activation::Elu => ActivationParam::Elu,
        }
    }

    pub(crate) fn apply(self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        match self {
            ActivationParam::Prelu(a) => tape.prelu(x, bound.var(a)),
            ActivationParam::Relu => Ok(tape.relu(x)),
            ActivationParam::Elu => Ok(tape.elu(x)),
        }
    }
}

#[cfg(test)]
mod tests;

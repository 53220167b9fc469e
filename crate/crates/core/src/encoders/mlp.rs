use super::{Activation, ActivationParam, Mode};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Rng};
use crate::tensor::{xavier_uniform, Bound, ParamId, ParamStore, Tape, Var};

/// Fully connected head: `dims[0] -> dims[1] -> ... -> dims[last]` with the
/// activation between layers and none after the last.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    acts: Vec<ActivationParam>,
    dropout: f64,
    dims: Vec<usize>,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        dims: &[usize],
        activation: Activation,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("mlp dims must have >= 2 positive entries, got {dims:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidArgument(format!("mlp dropout {dropout} outside [0, 1)")));
        }
        let n = dims.len() - 1;
        let mut layers = Vec::with_capacity(n);
        let mut acts = Vec::with_capacity(n.saturating_sub(1));
        for l in 0..n {
            let w = store.insert(format!("{prefix}.{l}.weight"), xavier_uniform(dims[l], dims[l + 1], rng));
            let b = store.insert(format!("{prefix}.{l}.bias"), Matrix::zeros(1, dims[l + 1]));
            layers.push((w, b));
            if l + 1 < n {
                acts.push(ActivationParam::register(activation, store, &format!("{prefix}.{l}")));
            }
        }
        Ok(Self {
            layers,
            acts,
            dropout,
            dims: dims.to_vec(),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var, mode: Mode) -> Result<Var> {
        let mut h = x;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            if l > 0 {
                if let Mode::Train { seed } = mode {
                    h = tape.dropout(h, self.dropout, rng::derive_index(seed, l as u64))?;
                }
            }
            let z = tape.matmul(h, bound.var(w))?;
            h = tape.add_row(z, bound.var(b))?;
            if let Some(act) = self.acts.get(l) {
                h = act.apply(tape, bound, h)?;
            }
        }
        Ok(h)
    }

    /// Evaluation-mode forward on a concrete matrix.
    pub fn predict(&self, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &bound, xv, Mode::Eval)?;
        Ok(tape.value(out).clone())
    }
}

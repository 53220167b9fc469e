use std::sync::Arc;

use super::{ActivationParam, EncoderConfig, EncoderKind, Mode};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SparseMatrix};
use crate::rng::{self, Rng};
use crate::sampling::BatchPlan;
use crate::tensor::{attention_weights, xavier_uniform, Bound, ParamId, ParamStore, Tape, Var};

#[derive(Clone, Debug)]
struct Head {
    weight: ParamId,
    attn_l: ParamId,
    attn_r: ParamId,
}

#[derive(Clone, Debug)]
enum Transform {
    Gcn(ParamId),
    Mlp(ParamId),
    Gat { heads: Vec<Head>, concat: bool },
}

#[derive(Clone, Debug)]
struct Layer {
    transform: Transform,
    bias: ParamId,
    act: Option<ActivationParam>,
}

/// Message-passing encoder whose parameters live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Encoder {
    cfg: EncoderConfig,
    in_dim: usize,
    layers: Vec<Layer>,
}

impl Encoder {
    /// Register the encoder's parameters under `prefix`.
    pub fn new(cfg: &EncoderConfig, in_dim: usize, prefix: &str, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        if in_dim == 0 {
            return Err(Error::InvalidArgument("encoder input width must be positive".into()));
        }
        let k = cfg.num_layers();
        let mut layers = Vec::with_capacity(k);
        let mut d_in = in_dim;
        for (l, &d_out) in cfg.hidden_dims.iter().enumerate() {
            let p = format!("{prefix}.{l}");
            let last = l + 1 == k;
            let transform = match cfg.kind {
                EncoderKind::Gcn => Transform::Gcn(store.insert(format!("{p}.weight"), xavier_uniform(d_in, d_out, rng))),
                EncoderKind::Mlp => Transform::Mlp(store.insert(format!("{p}.weight"), xavier_uniform(d_in, d_out, rng))),
                EncoderKind::Gat => {
                    let g = cfg.gat.as_ref().expect("validated gat config");
                    let per_head = if last { d_out } else { d_out / g.num_heads };
                    let heads = (0..g.num_heads)
                        .map(|h| Head {
                            weight: store.insert(format!("{p}.h{h}.weight"), xavier_uniform(d_in, per_head, rng)),
                            attn_l: store.insert(format!("{p}.h{h}.attn_l"), xavier_uniform(per_head, 1, rng)),
                            attn_r: store.insert(format!("{p}.h{h}.attn_r"), xavier_uniform(per_head, 1, rng)),
                        })
                        .collect();
                    Transform::Gat { heads, concat: !last }
                }
            };
            let bias = store.insert(format!("{p}.bias"), Matrix::zeros(1, d_out));
            let act = (!last).then(|| ActivationParam::register(cfg.activation, store, &p));
            layers.push(Layer { transform, bias, act });
            d_in = d_out;
        }
        Ok(Self {
            cfg: cfg.clone(),
            in_dim,
            layers,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.cfg.out_dim()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Sum of all layer widths: the width of concatenated per-layer outputs.
    pub fn concat_dim(&self) -> usize {
        self.cfg.hidden_dims.iter().sum()
    }

    /// Full-graph forward. Returns the output of every layer; the last entry
    /// is the embedding.
    pub fn forward_full(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        adj: &Arc<SparseMatrix>,
        x: Var,
        mode: Mode,
    ) -> Result<Vec<Var>> {
        let blocks = vec![Arc::clone(adj); self.layers.len()];
        self.forward_blocks(tape, bound, &blocks, x, mode)
    }

    /// Mini-batch forward. `x` holds the features of the plan's input nodes
    /// (`layer_nodes[K]`, in plan order); layer `k` produces rows for
    /// `layer_nodes[K - 1 - k]`, so the last output covers the batch's
    /// output nodes.
    pub fn forward_minibatch(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        plan: &BatchPlan,
        x: Var,
        mode: Mode,
    ) -> Result<Vec<Var>> {
        if plan.num_layers() != self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "plan has {} blocks for a {}-layer encoder",
                plan.num_layers(),
                self.layers.len()
            )));
        }
        if tape.shape(x).0 != plan.input_nodes().len() {
            return Err(Error::shape(
                "forward_minibatch",
                format!("{} feature rows for {} input nodes", tape.shape(x).0, plan.input_nodes().len()),
            ));
        }
        let blocks: Vec<Arc<SparseMatrix>> = plan.blocks.iter().rev().cloned().collect();
        self.forward_blocks(tape, bound, &blocks, x, mode)
    }

    /// Forward over explicit blocks in input-to-output order: `blocks[k]`
    /// is used by layer `k`.
    pub fn forward_blocks(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        blocks: &[Arc<SparseMatrix>],
        x: Var,
        mode: Mode,
    ) -> Result<Vec<Var>> {
        if blocks.len() != self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} blocks for a {}-layer encoder",
                blocks.len(),
                self.layers.len()
            )));
        }
        if tape.shape(x).1 != self.in_dim {
            return Err(Error::shape(
                "encoder",
                format!("input width {} but encoder expects {}", tape.shape(x).1, self.in_dim),
            ));
        }
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (l, (layer, block)) in self.layers.iter().zip(blocks).enumerate() {
            if tape.shape(h).0 != block.cols() {
                return Err(Error::shape(
                    "encoder",
                    format!("layer {l} input has {} rows, block expects {}", tape.shape(h).0, block.cols()),
                ));
            }
            let layer_seed = match mode {
                Mode::Train { seed } => Some(rng::derive_index(seed, l as u64)),
                Mode::Eval => None,
            };
            if let Some(s) = layer_seed {
                h = tape.dropout(h, self.cfg.in_drop, rng::derive(s, "in_drop"))?;
            }
            let z = self.transform(tape, bound, layer, block, h, layer_seed)?;
            let mut out = tape.add_row(z, bound.var(layer.bias))?;
            if let Some(act) = layer.act {
                out = act.apply(tape, bound, out)?;
            }
            outputs.push(out);
            h = out;
        }
        Ok(outputs)
    }

    fn transform(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        layer: &Layer,
        block: &Arc<SparseMatrix>,
        h: Var,
        seed: Option<u64>,
    ) -> Result<Var> {
        match &layer.transform {
            Transform::Gcn(w) => {
                let hw = tape.matmul(h, bound.var(*w))?;
                tape.spmm(block, hw)
            }
            Transform::Mlp(w) => {
                let hw = tape.matmul(h, bound.var(*w))?;
                tape.head_rows(hw, block.rows())
            }
            Transform::Gat { heads, concat } => {
                let gat = self.cfg.gat.as_ref().expect("validated gat config");
                let attn_drop = if seed.is_some() { gat.attn_drop } else { 0.0 };
                let mut outs = Vec::with_capacity(heads.len());
                for (i, head) in heads.iter().enumerate() {
                    let z = tape.matmul(h, bound.var(head.weight))?;
                    let el = tape.matmul(z, bound.var(head.attn_l))?;
                    let er = tape.matmul(z, bound.var(head.attn_r))?;
                    let s = seed.map_or(0, |s| rng::derive_index(rng::derive(s, "attn"), i as u64));
                    outs.push(tape.gat_aggregate(block, z, el, er, gat.negative_slope, attn_drop, s)?);
                }
                if *concat {
                    tape.concat_cols(&outs)
                } else {
                    let mut acc = outs[0];
                    for &o in &outs[1..] {
                        acc = tape.add(acc, o)?;
                    }
                    Ok(if outs.len() > 1 { tape.scale(acc, 1.0 / outs.len() as f64) } else { acc })
                }
            }
        }
    }

    /// Full-graph, evaluation-mode embedding of every node.
    pub fn embed(&self, store: &ParamStore, adj: &Arc<SparseMatrix>, x: &Matrix) -> Result<Matrix> {
        Ok(self.embed_layers(store, adj, x)?.pop().expect("encoder has layers"))
    }

    /// Full-graph, evaluation-mode outputs of every layer.
    pub fn embed_layers(&self, store: &ParamStore, adj: &Arc<SparseMatrix>, x: &Matrix) -> Result<Vec<Matrix>> {
        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let outs = self.forward_full(&mut tape, &bound, adj, xv, Mode::Eval)?;
        Ok(outs.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    /// Evaluate one GAT layer on `hin` over `block` without dropout.
    /// Returns the layer output before its activation (heads concatenated
    /// or averaged, bias added) and, per head, the attention weight of every
    /// stored block entry.
    pub fn gat_attention(
        &self,
        store: &ParamStore,
        layer: usize,
        block: &Arc<SparseMatrix>,
        hin: &Matrix,
    ) -> Result<(Matrix, Vec<Vec<f64>>)> {
        let l = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::InvalidArgument(format!("layer {layer} of {}", self.layers.len())))?;
        let Transform::Gat { heads, .. } = &l.transform else {
            return Err(Error::InvalidArgument("gat_attention on a non-GAT encoder".into()));
        };
        let slope = self.cfg.gat.as_ref().expect("validated gat config").negative_slope;
        let mut weights = Vec::with_capacity(heads.len());
        for head in heads {
            let z = hin.matmul(store.get(head.weight))?;
            let el = z.matmul(store.get(head.attn_l))?;
            let er = z.matmul(store.get(head.attn_r))?;
            if block.cols() != z.rows() || block.rows() > block.cols() {
                return Err(Error::shape("gat_attention", "block does not match input rows"));
            }
            weights.push(attention_weights(block, &el, &er, slope).0);
        }
        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        let h = tape.constant(hin.clone());
        let z = self.transform(&mut tape, &bound, l, block, h, None)?;
        let out = tape.add_row(z, bound.var(l.bias))?;
        Ok((tape.value(out).clone(), weights))
    }
}

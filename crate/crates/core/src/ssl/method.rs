use std::collections::HashSet;
use std::sync::Arc;

use super::augment::{drop_block_edges, drop_edges, drop_features, filter_block, mask_edges, sample_indices};
use super::augment::{EdgeDrop, FeatureDrop};
use super::config::{BgrlParams, GcaParams, GraphmaeParams, MethodConfig, MethodKind, S2gaeParams};
use super::losses;
use crate::encoders::{Activation, Encoder, EncoderConfig, GatConfig, Mlp, Mode};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, SparseGraph};
use crate::linalg::{Matrix, SparseMatrix};
use crate::rng;
use crate::sampling::{BatchPlan, Strategy};
use crate::tensor::{xavier_uniform, Adam, AdamConfig, Bound, ParamId, ParamStore, Tape, Var};

/// Graph, normalized adjacency and features a method trains on.
#[derive(Clone, Copy)]
pub struct Inputs<'a> {
    pub graph: &'a SparseGraph,
    pub adj: &'a Arc<SparseMatrix>,
    pub features: &'a Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    /// Elements the tape held for backward during this step.
    pub retained_elements: usize,
}

enum Head {
    Gbt,
    CcaSsg { lambda: f64 },
    Bgrl { predictor: Mlp, target: ParamStore, ema_decay: f64 },
    Gca { projector: Mlp, tau: f64 },
    Graphmae { token: ParamId, enc_to_dec: ParamId, decoder: Encoder },
    S2gae { decoder: Mlp },
}

/// An SSL objective with its encoder, auxiliary parameters and optimizer.
pub struct SslMethod {
    cfg: MethodConfig,
    encoder: Encoder,
    store: ParamStore,
    optimizer: Adam,
    head: Head,
    steps: usize,
    seed: u64,
}

/// One (possibly augmented) view of a batch: blocks in input-to-output
/// order, features of the input nodes, and the number of output rows.
struct View {
    blocks: Vec<Arc<SparseMatrix>>,
    x: Matrix,
    out_rows: usize,
}

impl SslMethod {
    pub fn new(cfg: &MethodConfig, in_dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind == MethodKind::Graphmae && cfg.graphmae_params().replace_rate != 0.0 {
            log::warn!("graphmae.replace_rate is not used by this objective and is ignored");
        }
        let enc_cfg = cfg.encoder_config();
        let mut store = ParamStore::new();
        let mut init = rng::seeded(rng::derive(seed, "init"));
        let encoder = Encoder::new(&enc_cfg, in_dim, "enc", &mut store, &mut init)?;
        let d = encoder.out_dim();
        let head = match cfg.kind {
            MethodKind::Gbt => Head::Gbt,
            MethodKind::CcaSsg => Head::CcaSsg {
                lambda: cfg.cca_ssg_params().lambda,
            },
            MethodKind::Bgrl => {
                let p = cfg.bgrl_params();
                let mut target = ParamStore::new();
                Encoder::new(&enc_cfg, in_dim, "enc", &mut target, &mut rng::seeded(0))?;
                copy_prefix(&mut target, &store)?;
                let predictor = Mlp::new(&mut store, "pred", &[d, p.predictor_hidden, d], Activation::Prelu, 0.0, &mut init)?;
                Head::Bgrl {
                    predictor,
                    target,
                    ema_decay: p.ema_decay,
                }
            }
            MethodKind::Gca => Head::Gca {
                projector: Mlp::new(&mut store, "proj", &[d, d, d], Activation::Elu, 0.0, &mut init)?,
                tau: cfg.gca_params().tau,
            },
            MethodKind::Graphmae => {
                let token = store.insert("mask_token", Matrix::zeros(1, in_dim));
                let enc_to_dec = store.insert("enc_to_dec", xavier_uniform(d, d, &mut init));
                let dec_cfg = EncoderConfig {
                    hidden_dims: vec![in_dim],
                    in_drop: 0.0,
                    gat: enc_cfg.gat.as_ref().map(|g| GatConfig { num_heads: 1, ..g.clone() }),
                    ..enc_cfg.clone()
                };
                let decoder = Encoder::new(&dec_cfg, d, "dec", &mut store, &mut init)?;
                Head::Graphmae {
                    token,
                    enc_to_dec,
                    decoder,
                }
            }
            MethodKind::S2gae => {
                let p = cfg.s2gae_params();
                let mut dims = vec![encoder.concat_dim()];
                dims.extend(std::iter::repeat_n(p.decode_channels, p.decode_layers - 1));
                dims.push(1);
                Head::S2gae {
                    decoder: Mlp::new(&mut store, "edge_dec", &dims, Activation::Relu, 0.0, &mut init)?,
                }
            }
        };
        let optimizer = Adam::new(AdamConfig::new(cfg.effective_lr(), cfg.weight_decay), &store);
        Ok(Self {
            cfg: cfg.clone(),
            encoder,
            store,
            optimizer,
            head,
            steps: 0,
            seed,
        })
    }

    pub fn config(&self) -> &MethodConfig {
        &self.cfg
    }

    pub fn kind(&self) -> MethodKind {
        self.cfg.kind
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Number of message-passing layers a batch plan must provide.
    pub fn depth(&self) -> usize {
        match self.head {
            Head::Graphmae { .. } => self.encoder.num_layers() + 1,
            _ => self.encoder.num_layers(),
        }
    }

    /// Width of the matrix returned by [`SslMethod::embed`].
    pub fn embed_dim(&self) -> usize {
        match self.head {
            Head::S2gae { .. } => self.encoder.concat_dim(),
            _ => self.encoder.out_dim(),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// All trainable parameters (encoder first).
    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// EMA target encoder parameters, present only for BGRL.
    pub fn target_params(&self) -> Option<&ParamStore> {
        match &self.head {
            Head::Bgrl { target, .. } => Some(target),
            _ => None,
        }
    }

    /// Overwrite the trainable parameters, e.g. from a checkpoint.
    pub fn load_params(&mut self, params: &ParamStore) -> Result<()> {
        self.store.copy_from(params)
    }

    /// One optimizer step on a batch. `plan` is `None` (or a full-strategy
    /// plan) for full-batch training.
    pub fn training_step(&mut self, inputs: &Inputs, plan: Option<&BatchPlan>) -> Result<StepStats> {
        let plan = plan.filter(|p| p.strategy != Strategy::Full);
        if let Some(p) = plan {
            if p.num_layers() != self.depth() {
                return Err(Error::InvalidArgument(format!(
                    "{} needs a {}-layer plan, got {}",
                    self.cfg.kind,
                    self.depth(),
                    p.num_layers()
                )));
            }
        }
        let seed = rng::derive_index(rng::derive(self.seed, "step"), self.steps as u64);
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let loss = self.loss(&mut tape, &bound, inputs, plan, seed)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.steps,
                value,
            });
        }
        let retained_elements = tape.retained_elements();
        let mut grads = tape.backward(loss)?;
        let grads = bound.collect(&mut grads);
        self.optimizer.step(&mut self.store, &grads)?;
        if let Head::Bgrl { target, ema_decay, .. } = &mut self.head {
            ema_update(target, &self.store, *ema_decay)?;
        }
        self.steps += 1;
        Ok(StepStats {
            loss: value,
            retained_elements,
        })
    }

    /// Loss of one batch for the augmentation and masking draws keyed by
    /// `seed`, without updating anything.
    pub fn evaluate_loss(&self, inputs: &Inputs, plan: Option<&BatchPlan>, seed: u64) -> Result<f64> {
        let plan = plan.filter(|p| p.strategy != Strategy::Full);
        let mut tape = Tape::new();
        let bound = self.store.bind_frozen(&mut tape);
        let loss = self.loss(&mut tape, &bound, inputs, plan, seed)?;
        Ok(tape.scalar(loss))
    }

    /// Loss of one batch recorded on `tape` with parameters bound as
    /// `bound`. Exposed for gradient checks.
    pub fn loss(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &Inputs,
        plan: Option<&BatchPlan>,
        seed: u64,
    ) -> Result<Var> {
        match &self.head {
            Head::Gbt => {
                let p = self.cfg.gbt_params();
                let (z1, z2) = self.two_views(
                    tape,
                    bound,
                    inputs,
                    plan,
                    seed,
                    uniform_pair(p.p_e, p.p_x),
                )?;
                losses::gbt_loss(tape, z1, z2)
            }
            Head::CcaSsg { lambda } => {
                let p = self.cfg.cca_ssg_params();
                let (z1, z2) = self.two_views(
                    tape,
                    bound,
                    inputs,
                    plan,
                    seed,
                    uniform_pair(p.der, p.dfr),
                )?;
                losses::cca_ssg_loss(tape, z1, z2, *lambda)
            }
            Head::Bgrl {
                predictor, target, ..
            } => self.bgrl_loss(tape, bound, inputs, plan, seed, predictor, target),
            Head::Gca { projector, tau } => {
                let rules = gca_rules(&self.cfg.gca_params(), inputs);
                let (z1, z2) = self.two_views(tape, bound, inputs, plan, seed, rules)?;
                let h1 = projector.forward(tape, bound, z1, Mode::Eval)?;
                let h2 = projector.forward(tape, bound, z2, Mode::Eval)?;
                losses::gca_infonce_loss(tape, h1, h2, *tau)
            }
            Head::Graphmae {
                token,
                enc_to_dec,
                decoder,
            } => self.graphmae_loss(tape, bound, inputs, plan, seed, *token, *enc_to_dec, decoder),
            Head::S2gae { decoder } => self.s2gae_loss(tape, bound, inputs, plan, seed, decoder),
        }
    }

    fn two_views(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &Inputs,
        plan: Option<&BatchPlan>,
        seed: u64,
        rules: [(EdgeDrop, FeatureDrop); 2],
    ) -> Result<(Var, Var)> {
        let mut out = Vec::with_capacity(2);
        for (i, (edge, feat)) in rules.iter().enumerate() {
            let s = rng::derive_index(seed, i as u64);
            let view = build_view(inputs, plan, self.depth(), edge, feat, s);
            out.push(encode(&self.encoder, tape, bound, &view, rng::derive(s, "encoder"))?);
        }
        Ok((out[0], out[1]))
    }

    #[allow(clippy::too_many_arguments)]
    fn bgrl_loss(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &Inputs,
        plan: Option<&BatchPlan>,
        seed: u64,
        predictor: &Mlp,
        target: &ParamStore,
    ) -> Result<Var> {
        let p: BgrlParams = self.cfg.bgrl_params();
        let target_bound = target.bind_frozen(tape);
        let rules = [
            (EdgeDrop::Uniform(p.drop_edge_p_1), FeatureDrop::Uniform(p.drop_feat_p_1)),
            (EdgeDrop::Uniform(p.drop_edge_p_2), FeatureDrop::Uniform(p.drop_feat_p_2)),
        ];
        let mut preds = Vec::with_capacity(2);
        let mut targets = Vec::with_capacity(2);
        for (i, (edge, feat)) in rules.iter().enumerate() {
            let s = rng::derive_index(seed, i as u64);
            let view = build_view(inputs, plan, self.depth(), edge, feat, s);
            let enc_seed = rng::derive(s, "encoder");
            let online = encode(&self.encoder, tape, bound, &view, enc_seed)?;
            preds.push(predictor.forward(tape, bound, online, Mode::Eval)?);
            targets.push(encode(&self.encoder, tape, &target_bound, &view, enc_seed)?);
        }
        losses::bgrl_loss(tape, preds[0], targets[1], preds[1], targets[0])
    }

    #[allow(clippy::too_many_arguments)]
    fn graphmae_loss(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &Inputs,
        plan: Option<&BatchPlan>,
        seed: u64,
        token: ParamId,
        enc_to_dec: ParamId,
        decoder: &Encoder,
    ) -> Result<Var> {
        let p: GraphmaeParams = self.cfg.graphmae_params();
        let view = build_view(
            inputs,
            plan,
            self.depth(),
            &EdgeDrop::Uniform(p.drop_edge_rate),
            &FeatureDrop::Uniform(0.0),
            seed,
        );
        let masked = Arc::new(sample_indices(view.out_rows, p.mask_rate, 1, rng::derive(seed, "mask")));
        let mut kept = view.x.clone();
        let mut indicator = Matrix::zeros(view.x.rows(), 1);
        for &i in masked.iter() {
            kept.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
            indicator.set(i, 0, 1.0);
        }
        let kept = tape.constant(kept);
        let indicator = tape.constant(indicator);
        let tok = tape.matmul(indicator, bound.var(token))?;
        let x_in = tape.add(kept, tok)?;

        let k = self.encoder.num_layers();
        let mode = Mode::Train {
            seed: rng::derive(seed, "encoder"),
        };
        let h = *self.encoder.forward_blocks(tape, bound, &view.blocks[..k], x_in, mode)?.last().expect("layers");
        let rep = tape.matmul(h, bound.var(enc_to_dec))?;
        let dec_mode = Mode::Train {
            seed: rng::derive(seed, "decoder"),
        };
        let recon = *decoder.forward_blocks(tape, bound, &view.blocks[k..], rep, dec_mode)?.last().expect("layer");
        let recon = tape.gather_rows(recon, Arc::clone(&masked))?;
        let targets = tape.constant(view.x.gather_rows(&masked));
        losses::graphmae_loss(tape, targets, recon, p.alpha_l)
    }

    fn s2gae_loss(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        inputs: &Inputs,
        plan: Option<&BatchPlan>,
        seed: u64,
        decoder: &Mlp,
    ) -> Result<Var> {
        let p: S2gaeParams = self.cfg.s2gae_params();
        let mask_seed = rng::derive(seed, "mask");
        let (view, mut positives) = match plan {
            None => {
                let (visible, hidden) = mask_edges(inputs.graph, p.mask_ratio, mask_seed)?;
                let adj = Arc::new(normalize_adjacency(&visible));
                let view = View {
                    blocks: vec![adj; self.depth()],
                    x: inputs.features.clone(),
                    out_rows: inputs.graph.num_nodes(),
                };
                (view, hidden)
            }
            Some(plan) => s2gae_minibatch_view(inputs, plan, p.mask_ratio, mask_seed),
        };
        if positives.len() > p.max_pos_per_step {
            let keep = sample_indices(positives.len(), 0.0, p.max_pos_per_step, rng::derive(seed, "cap"));
            positives = keep.into_iter().map(|i| positives[i]).collect();
        }
        let num_neg = positives.len().max(1);
        let mut neg_rng = rng::seeded(rng::derive(seed, "negatives"));
        let negatives: Vec<(usize, usize)> = (0..num_neg)
            .map(|_| random_pair(&mut neg_rng, view.out_rows))
            .collect();

        let mode = Mode::Train {
            seed: rng::derive(seed, "encoder"),
        };
        let xv = tape.constant(view.x.clone());
        let outs = self.encoder.forward_blocks(tape, bound, &view.blocks, xv, mode)?;
        let heads = outs
            .into_iter()
            .map(|o| tape.head_rows(o, view.out_rows))
            .collect::<Result<Vec<_>>>()?;
        let h = tape.concat_cols(&heads)?;
        let neg_logits = score_pairs(tape, bound, decoder, h, &negatives)?;
        if positives.is_empty() {
            let all = tape.transpose(neg_logits);
            return tape.bce_with_logits(all, Arc::new(vec![0.0; num_neg]));
        }
        let pos_logits = score_pairs(tape, bound, decoder, h, &positives)?;
        losses::s2gae_loss(tape, pos_logits, neg_logits)
    }

    /// Full-graph, evaluation-mode embedding of every node.
    pub fn embed(&self, adj: &Arc<SparseMatrix>, features: &Matrix) -> Result<Matrix> {
        match self.head {
            Head::S2gae { .. } => {
                let layers = self.encoder.embed_layers(&self.store, adj, features)?;
                Matrix::hcat(&layers.iter().collect::<Vec<_>>())
            }
            _ => self.encoder.embed(&self.store, adj, features),
        }
    }
}

/// Exponential moving average `θ_t ← τ θ_t + (1 - τ) θ_o` over the
/// parameters of `target`, matched by position with the leading parameters
/// of `online`.
pub fn ema_update(target: &mut ParamStore, online: &ParamStore, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("ema decay {tau} outside [0, 1]")));
    }
    let pairs: Vec<_> = target.ids().zip(online.iter()).collect();
    for (id, (_, o)) in pairs {
        let t = target.get_mut(id);
        *t = t.zip_map(o, |a, b| tau * a + (1.0 - tau) * b)?;
    }
    Ok(())
}

fn copy_prefix(target: &mut ParamStore, online: &ParamStore) -> Result<()> {
    let pairs: Vec<_> = target.ids().zip(online.iter().map(|(_, m)| m.clone())).collect();
    for (id, m) in pairs {
        if target.get(id).shape() != m.shape() {
            return Err(Error::InvalidArgument("target layout differs from online encoder".into()));
        }
        *target.get_mut(id) = m;
    }
    Ok(())
}

fn uniform_pair(edge: f64, feat: f64) -> [(EdgeDrop, FeatureDrop); 2] {
    let rule = (EdgeDrop::Uniform(edge), FeatureDrop::Uniform(feat));
    [rule.clone(), rule]
}

fn gca_rules(p: &GcaParams, inputs: &Inputs) -> [(EdgeDrop, FeatureDrop); 2] {
    let edge = |r| {
        if p.degree_centrality {
            EdgeDrop::degree_weighted(inputs.graph, r)
        } else {
            EdgeDrop::Uniform(r)
        }
    };
    let feat = |r| {
        if p.degree_centrality {
            FeatureDrop::degree_weighted(inputs.graph, inputs.features, r)
        } else {
            FeatureDrop::Uniform(r)
        }
    };
    [
        (edge(p.drop_edge_rate_1), feat(p.drop_feature_rate_1)),
        (edge(p.drop_edge_rate_2), feat(p.drop_feature_rate_2)),
    ]
}

fn build_view(
    inputs: &Inputs,
    plan: Option<&BatchPlan>,
    depth: usize,
    edge: &EdgeDrop,
    feat: &FeatureDrop,
    seed: u64,
) -> View {
    let edge_seed = rng::derive(seed, "edges");
    let feat_seed = rng::derive(seed, "features");
    let edge_noop = matches!(edge, EdgeDrop::Uniform(p) if *p == 0.0);
    match plan {
        None => {
            let adj = if edge_noop {
                Arc::clone(inputs.adj)
            } else {
                Arc::new(normalize_adjacency(&drop_edges(inputs.graph, edge, edge_seed)))
            };
            View {
                blocks: vec![adj; depth],
                x: drop_features(inputs.features, feat, feat_seed),
                out_rows: inputs.graph.num_nodes(),
            }
        }
        Some(plan) => {
            let blocks = (0..plan.num_layers())
                .rev()
                .map(|l| {
                    if edge_noop {
                        Arc::clone(&plan.blocks[l])
                    } else {
                        Arc::new(drop_block_edges(
                            inputs.graph,
                            &plan.blocks[l],
                            &plan.layer_nodes[l],
                            &plan.layer_nodes[l + 1],
                            edge,
                            edge_seed,
                        ))
                    }
                })
                .collect();
            View {
                blocks,
                x: drop_features(&inputs.features.gather_rows(plan.input_nodes()), feat, feat_seed),
                out_rows: plan.output_nodes().len(),
            }
        }
    }
}

fn encode(encoder: &Encoder, tape: &mut Tape, bound: &Bound, view: &View, seed: u64) -> Result<Var> {
    let x = tape.constant(view.x.clone());
    let outs = encoder.forward_blocks(tape, bound, &view.blocks, x, Mode::Train { seed })?;
    Ok(*outs.last().expect("encoder has layers"))
}

/// Hide a share of the edges between output nodes of a mini-batch and
/// remove them from every block. Returned pairs are local output indices.
fn s2gae_minibatch_view(inputs: &Inputs, plan: &BatchPlan, ratio: f64, seed: u64) -> (View, Vec<(usize, usize)>) {
    let out = plan.output_nodes();
    let mut local = std::collections::HashMap::with_capacity(out.len());
    out.iter().enumerate().for_each(|(i, &g)| {
        local.insert(g, i);
    });
    let mut candidates = Vec::new();
    for (i, &u) in out.iter().enumerate() {
        for v in inputs.graph.neighbors(u) {
            if let Some(&j) = local.get(v) {
                if j > i {
                    candidates.push((i, j));
                }
            }
        }
    }
    let hidden: Vec<(usize, usize)> = sample_indices(candidates.len(), ratio, 0, seed)
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    let hidden_global: HashSet<(usize, usize)> = hidden
        .iter()
        .map(|&(i, j)| (out[i].min(out[j]), out[i].max(out[j])))
        .collect();
    let blocks = (0..plan.num_layers())
        .rev()
        .map(|l| {
            if hidden_global.is_empty() {
                Arc::clone(&plan.blocks[l])
            } else {
                Arc::new(filter_block(&plan.blocks[l], &plan.layer_nodes[l], &plan.layer_nodes[l + 1], |u, v| {
                    !hidden_global.contains(&(u.min(v), u.max(v)))
                }))
            }
        })
        .collect();
    let view = View {
        blocks,
        x: inputs.features.gather_rows(plan.input_nodes()),
        out_rows: out.len(),
    };
    (view, hidden)
}

fn random_pair(r: &mut rng::Rng, n: usize) -> (usize, usize) {
    use rand::Rng as _;
    if n < 2 {
        return (0, 0);
    }
    let u = r.random_range(0..n);
    let mut v = r.random_range(0..n - 1);
    if v >= u {
        v += 1;
    }
    (u, v)
}

fn score_pairs(tape: &mut Tape, bound: &Bound, decoder: &Mlp, h: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let src = tape.gather_rows(h, Arc::new(pairs.iter().map(|p| p.0).collect()))?;
    let dst = tape.gather_rows(h, Arc::new(pairs.iter().map(|p| p.1).collect()))?;
    let prod = tape.mul(src, dst)?;
    decoder.forward(tape, bound, prod, Mode::Eval)
}

impl std::fmt::Debug for SslMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SslMethod")
            .field("kind", &self.cfg.kind)
            .field("params", &self.store.num_elements())
            .field("steps", &self.steps)
            .finish()
    }
}

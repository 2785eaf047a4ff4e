use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{EDGE_NUMERIC_DIM, NODE_NUMERIC_DIM};
use super::layers::{self, AttentionParams, GatParams, GcnParams, GreatParams, HeadParams};
use super::{GnnError, GraphBatch, ModelConfig, Result, Task};
use crate::dfg::GnnKind;
use crate::nncore::{uniform_init, Indices, ParamStore, Tape, Tensor, Var};

/// Vocabulary-dependent dimensions of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSizes {
    pub activity_vocab: usize,
    pub resource_vocab: usize,
    pub num_classes: usize,
}

#[derive(Clone, Copy, Debug)]
struct Attn {
    wq: usize,
    wk: usize,
    wv: usize,
    edge: Option<usize>,
    mix: Option<usize>,
}

#[derive(Clone, Debug)]
enum LayerIds {
    Gcn { w1: usize, w2: usize, b: usize },
    Gat { w1: usize, b: usize, attn: Attn },
    Great { w1: usize, b: usize, pred: Attn, succ: Attn },
}

#[derive(Clone, Debug)]
struct Layout {
    act_emb: usize,
    res_emb: usize,
    in_w: usize,
    in_b: usize,
    layers: Vec<LayerIds>,
    head: [usize; 4],
}

/// A GNN encoder with one task head. Parameters live in `params`, in a
/// fixed registration order that depends only on config, task and sizes.
#[derive(Clone, Debug)]
pub struct PpmModel {
    pub config: ModelConfig,
    pub task: Task,
    pub sizes: ModelSizes,
    pub params: ParamStore,
    layout: Layout,
}

struct Builder<'a> {
    store: ParamStore,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn weight(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let t = uniform_init(self.rng, rows, cols, rows);
        self.store.add(name, t)
    }

    fn bias(&mut self, name: String, cols: usize) -> usize {
        self.store.add(name, Tensor::zeros(1, cols))
    }

    fn attn(&mut self, prefix: &str, h: usize, heads: usize, edge: bool) -> Attn {
        Attn {
            wq: self.weight(format!("{prefix}.wq"), h, h),
            wk: self.weight(format!("{prefix}.wk"), h, h),
            wv: self.weight(format!("{prefix}.wv"), h, h),
            edge: edge.then(|| self.weight(format!("{prefix}.we"), EDGE_NUMERIC_DIM, h)),
            mix: (heads > 1).then(|| self.weight(format!("{prefix}.wo"), h, h)),
        }
    }
}

impl PpmModel {
    pub fn new(config: ModelConfig, task: Task, sizes: ModelSizes, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { store: ParamStore::new(), rng: &mut rng };
        let (da, dr, h) = (config.activity_embed_dim, config.resource_embed_dim, config.hidden_dim);
        let heads = config.attention_heads;
        let act_emb = b.weight("act_emb".into(), sizes.activity_vocab, da);
        let res_emb = b.weight("res_emb".into(), sizes.resource_vocab, dr);
        let in_dim = da
            + dr
            + match config.gnn_kind {
                GnnKind::Great => EDGE_NUMERIC_DIM,
                _ => NODE_NUMERIC_DIM,
            };
        let in_w = b.weight("input.w".into(), in_dim, h);
        let in_b = b.bias("input.b".into(), h);
        let layers = (0..config.num_layers)
            .map(|l| {
                let p = format!("layer{l}");
                match config.gnn_kind {
                    GnnKind::Gcn => LayerIds::Gcn {
                        w1: b.weight(format!("{p}.w1"), h, h),
                        w2: b.weight(format!("{p}.w2"), h, h),
                        b: b.bias(format!("{p}.b"), h),
                    },
                    GnnKind::Gat => LayerIds::Gat {
                        w1: b.weight(format!("{p}.w1"), h, h),
                        b: b.bias(format!("{p}.b"), h),
                        attn: b.attn(&p, h, heads, true),
                    },
                    GnnKind::Great => LayerIds::Great {
                        w1: b.weight(format!("{p}.w1"), h, h),
                        b: b.bias(format!("{p}.b"), h),
                        pred: b.attn(&format!("{p}.pred"), h, heads, false),
                        succ: b.attn(&format!("{p}.succ"), h, heads, false),
                    },
                }
            })
            .collect();
        let out = match task {
            Task::NextActivity => sizes.num_classes,
            Task::RemainingTime => 1,
        };
        let m = config.mlp_hidden_dim;
        let head = [
            b.weight("head.w1".into(), 2 * h, m),
            b.bias("head.b1".into(), m),
            b.weight("head.w2".into(), m, out),
            b.bias("head.b2".into(), out),
        ];
        let params = b.store;
        Ok(Self {
            config,
            task,
            sizes,
            params,
            layout: Layout { act_emb, res_emb, in_w, in_b, layers, head },
        })
    }

    /// Rebuilds a model around loaded parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, task: Task, sizes: ModelSizes, params: ParamStore) -> Result<Self> {
        let mut model = Self::new(config, task, sizes, 0)?;
        if model.params.len() != params.len() {
            return Err(GnnError::Mismatch(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for ((name, t), (got_name, got)) in model.params.iter().zip(params.iter()) {
            if name != got_name || t.shape() != got.shape() {
                return Err(GnnError::Mismatch(format!(
                    "parameter `{got_name}` {:?} where `{name}` {:?} was expected",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    fn attn(vars: &[Var], a: &Attn) -> AttentionParams {
        AttentionParams {
            wq: vars[a.wq],
            wk: vars[a.wk],
            wv: vars[a.wv],
            edge: a.edge.map(|e| vars[e]),
            mix: a.mix.map(|m| vars[m]),
        }
    }

    fn dropout(&self, tape: &mut Tape, x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let p = self.config.dropout_rate;
        let Some(rng) = rng.filter(|_| p > 0.0) else {
            return Ok(x);
        };
        let (r, c) = tape.value(x).shape();
        let keep = 1.0 / (1.0 - p);
        let mask = (0..r * c).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let mask = tape.constant(Tensor::new(r, c, mask)?);
        Ok(tape.mul(x, mask)?)
    }

    fn embed(&self, tape: &mut Tape, vars: &[Var], act: &Indices, res: &Indices, numeric: &Tensor) -> Result<Var> {
        let a = tape.embedding_lookup(vars[self.layout.act_emb], act.clone())?;
        let r = tape.embedding_lookup(vars[self.layout.res_emb], res.clone())?;
        let n = tape.constant(numeric.clone());
        let x = tape.concat_cols(&[a, r, n])?;
        let x = tape.matmul(x, vars[self.layout.in_w])?;
        Ok(tape.add_row(x, vars[self.layout.in_b])?)
    }

    /// Trace vectors `[sum ; last]`, `num_graphs x 2 hidden`. `vars` are the
    /// tape handles of `self.params` in store order. Dropout is applied
    /// after every layer when `rng` is given.
    pub fn encode(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &GraphBatch,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        if batch.variant != self.config.variant() {
            return Err(GnnError::Mismatch(format!(
                "batch holds {} graphs, model is {}",
                batch.variant,
                self.config.variant()
            )));
        }
        let heads = self.config.attention_heads;
        let mut x = match self.config.gnn_kind {
            GnnKind::Great => self.embed(tape, vars, &batch.edge_activity, &batch.edge_resource, &batch.edge_numeric)?,
            _ => self.embed(tape, vars, &batch.node_activity, &batch.node_resource, &batch.node_numeric)?,
        };
        let edge_x = tape.constant(batch.edge_numeric.clone());
        for layer in &self.layout.layers {
            x = match *layer {
                LayerIds::Gcn { w1, w2, b } => {
                    let p = GcnParams { w1: vars[w1], w2: vars[w2], b: vars[b] };
                    layers::gcn_layer(tape, x, batch, &p)?
                }
                LayerIds::Gat { w1, b, ref attn } => {
                    let p = GatParams { w1: vars[w1], b: vars[b], attn: Self::attn(vars, attn) };
                    layers::gat_layer(tape, x, edge_x, batch, heads, &p)?
                }
                LayerIds::Great { w1, b, ref pred, ref succ } => {
                    let p = GreatParams {
                        w1: vars[w1],
                        b: vars[b],
                        pred: Self::attn(vars, pred),
                        succ: Self::attn(vars, succ),
                    };
                    layers::great_layer(tape, x, batch, heads, &p)?
                }
            };
            x = self.dropout(tape, x, rng.as_deref_mut())?;
        }
        if self.config.gnn_kind == GnnKind::Great {
            x = layers::edges_to_nodes(tape, x, batch)?;
        }
        layers::readout(tape, x, batch)
    }

    /// Head output: logits `num_graphs x num_classes` or `num_graphs x 1`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], batch: &GraphBatch, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let v = self.encode(tape, vars, batch, rng)?;
        let [w1, b1, w2, b2] = self.layout.head.map(|i| vars[i]);
        layers::predict(tape, v, &HeadParams { w1, b1, w2, b2 })
    }

    /// Mean cross-entropy against class labels, or mean absolute error
    /// against scaled targets.
    pub fn loss(&self, tape: &mut Tape, output: Var, targets: &Targets) -> Result<Var> {
        match (self.task, targets) {
            (Task::NextActivity, Targets::Classes(labels)) => Ok(tape.cross_entropy(output, labels.clone())?),
            (Task::RemainingTime, Targets::Values(values)) => {
                let t = tape.constant(Tensor::column(values.clone()));
                let d = tape.sub(output, t)?;
                let a = tape.abs(d);
                Ok(tape.mean(a))
            }
            (model, t) => Err(GnnError::TaskMismatch { model, asked: t.task() }),
        }
    }

    /// Head output values without recording gradients for later use.
    pub fn predict(&self, batch: &GraphBatch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = tape.params(&self.params);
        let out = self.forward(&mut tape, &vars, batch, None)?;
        Ok(tape.value(out).clone())
    }
}

/// Supervision for one batch, aligned with its graphs.
#[derive(Clone, Debug)]
pub enum Targets {
    Classes(Indices),
    Values(Vec<f64>),
}

impl Targets {
    pub fn task(&self) -> Task {
        match self {
            Targets::Classes(_) => Task::NextActivity,
            Targets::Values(_) => Task::RemainingTime,
        }
    }
}

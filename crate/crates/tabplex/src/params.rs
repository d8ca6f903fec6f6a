//! Trainable parameter storage.
//!
//! All tensors live in one flat `Vec<f64>` addressed through a layout
//! computed from the model dimensions. Flat storage makes the optimizer,
//! finite-difference checks, and checkpointing uniform; typed accessors keep
//! call sites readable.

use crate::error::{Error, Result};
use crate::table::{NormStats, Vocabulary};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use std::path::Path;

/// How neighbors are combined within one relation layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggKind {
    Attention,
    Mean,
    Sum,
}

impl std::str::FromStr for AggKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<AggKind> {
        match s {
            "attention" => Ok(AggKind::Attention),
            "mean" => Ok(AggKind::Mean),
            "sum" => Ok(AggKind::Sum),
            other => Err(Error::Validation(format!(
                "unknown aggregation kind {other:?}; expected attention, mean, or sum"
            ))),
        }
    }
}

/// Shapes of every tensor in the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Vocabulary size (including reserved ids) per featurized categorical column.
    pub cat_vocab_sizes: Vec<usize>,
    /// Embedding width per categorical column.
    pub emb_dims: Vec<usize>,
    /// Number of numerical feature columns.
    pub n_numeric: usize,
    /// Encoder output width.
    pub hidden_dim: usize,
    /// Number of encoder MLP layers.
    pub layer_size: usize,
    pub n_relations: usize,
    /// Projected width inside each relation.
    pub d0: usize,
    /// Per-relation output width (must be divisible by `n_heads`).
    pub d1: usize,
    pub n_heads: usize,
    /// Width of the fusion scoring network.
    pub fusion_dim: usize,
    /// Aggregation hops stacked per relation.
    pub n_hops: usize,
    pub agg: AggKind,
}

/// Default per-column embedding width.
pub const DEFAULT_EMB_CAP: usize = 16;

impl ModelDims {
    /// Standard dimensioning given the feature shape and a hidden width.
    pub fn standard(
        cat_vocab_sizes: Vec<usize>,
        n_numeric: usize,
        hidden_dim: usize,
        layer_size: usize,
        n_relations: usize,
        n_heads: usize,
        agg: AggKind,
    ) -> ModelDims {
        let emb_dims = cat_vocab_sizes
            .iter()
            .map(|&v| DEFAULT_EMB_CAP.min(hidden_dim).min(v).max(1))
            .collect();
        ModelDims {
            cat_vocab_sizes,
            emb_dims,
            n_numeric,
            hidden_dim,
            layer_size,
            n_relations,
            d0: hidden_dim,
            d1: hidden_dim,
            n_heads,
            fusion_dim: hidden_dim,
            n_hops: 1,
            agg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.d0 == 0 || self.d1 == 0 || self.fusion_dim == 0 {
            return Err(Error::Model("all model widths must be positive".into()));
        }
        if self.layer_size == 0 {
            return Err(Error::Model("encoder needs at least one layer".into()));
        }
        if self.n_relations == 0 {
            return Err(Error::Model("model needs at least one relation".into()));
        }
        if self.n_heads == 0 || self.d1 % self.n_heads != 0 {
            return Err(Error::Model(format!(
                "head count {} must divide the relation output width {}",
                self.n_heads, self.d1
            )));
        }
        if self.n_hops == 0 {
            return Err(Error::Model("hop count must be at least 1".into()));
        }
        if self.cat_vocab_sizes.len() != self.emb_dims.len() {
            return Err(Error::Model("embedding widths do not match column count".into()));
        }
        if self.emb_dims.contains(&0) {
            return Err(Error::Model("embedding widths must be positive".into()));
        }
        Ok(())
    }

    /// Width of the concatenated embedding + numeric vector fed to the MLP.
    pub fn concat_width(&self) -> usize {
        self.emb_dims.iter().sum::<usize>() + self.n_numeric
    }

    /// Encoder layer input width.
    pub fn enc_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.concat_width()
        } else {
            self.hidden_dim
        }
    }

    /// Projection input width for a hop (hop 0 consumes encoder output).
    pub fn hop_in(&self, hop: usize) -> usize {
        if hop == 0 {
            self.hidden_dim
        } else {
            self.d1
        }
    }

    pub fn head_width(&self) -> usize {
        self.d1 / self.n_heads
    }
}

#[derive(Clone, Debug)]
pub struct Layout {
    pub emb: Vec<Range<usize>>,
    pub enc_w: Vec<Range<usize>>,
    pub enc_b: Vec<Range<usize>>,
    /// Indexed `[relation][hop]`.
    pub proj: Vec<Vec<Range<usize>>>,
    pub agg_w: Vec<Vec<Range<usize>>>,
    /// Indexed `[relation][hop][head]`.
    pub attn: Vec<Vec<Vec<Range<usize>>>>,
    pub fusion_w: Range<usize>,
    pub fusion_b: Range<usize>,
    pub fusion_q: Range<usize>,
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn build(dims: &ModelDims) -> Layout {
        let mut cursor = 0usize;
        let mut alloc = |len: usize| {
            let r = cursor..cursor + len;
            cursor += len;
            r
        };
        let emb = dims
            .cat_vocab_sizes
            .iter()
            .zip(&dims.emb_dims)
            .map(|(&v, &e)| alloc(v * e))
            .collect();
        let mut enc_w = Vec::new();
        let mut enc_b = Vec::new();
        for l in 0..dims.layer_size {
            enc_w.push(alloc(dims.hidden_dim * dims.enc_in(l)));
            enc_b.push(alloc(dims.hidden_dim));
        }
        let mut proj = Vec::new();
        let mut agg_w = Vec::new();
        let mut attn = Vec::new();
        for _r in 0..dims.n_relations {
            let mut p_h = Vec::new();
            let mut w_h = Vec::new();
            let mut a_h = Vec::new();
            for hop in 0..dims.n_hops {
                p_h.push(alloc(dims.d0 * dims.hop_in(hop)));
                w_h.push(alloc(dims.d1 * dims.d0));
                let mut heads = Vec::new();
                for _h in 0..dims.n_heads {
                    heads.push(alloc(2 * dims.d0));
                }
                a_h.push(heads);
            }
            proj.push(p_h);
            agg_w.push(w_h);
            attn.push(a_h);
        }
        let fusion_w = alloc(dims.fusion_dim * dims.d1);
        let fusion_b = alloc(dims.fusion_dim);
        let fusion_q = alloc(dims.fusion_dim);
        let head_w = alloc(dims.d1);
        let head_b = alloc(1);
        Layout {
            emb,
            enc_w,
            enc_b,
            proj,
            agg_w,
            attn,
            fusion_w,
            fusion_b,
            fusion_q,
            head_w,
            head_b,
            total: cursor,
        }
    }
}

/// All trainable tensors of one model instance.
#[derive(Clone, Debug)]
pub struct Params {
    pub dims: ModelDims,
    pub layout: Layout,
    pub data: Vec<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, data: &mut [f64], fan_in: usize, fan_out: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in data.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
}

impl Params {
    pub fn zeros(dims: ModelDims) -> Params {
        let layout = Layout::build(&dims);
        let data = vec![0.0; layout.total];
        Params { dims, layout, data }
    }

    /// Seeded initialization: uniform ±√(6/(fan_in+fan_out)) for matrices,
    /// zeros for biases.
    pub fn init(dims: ModelDims, seed: u64) -> Params {
        let mut p = Params::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = p.dims.clone();
        let layout = p.layout.clone();
        for (i, r) in layout.emb.iter().enumerate() {
            glorot(&mut rng, &mut p.data[r.clone()], dims.cat_vocab_sizes[i], dims.emb_dims[i]);
        }
        for l in 0..dims.layer_size {
            glorot(
                &mut rng,
                &mut p.data[layout.enc_w[l].clone()],
                dims.enc_in(l),
                dims.hidden_dim,
            );
        }
        for r in 0..dims.n_relations {
            for hop in 0..dims.n_hops {
                glorot(
                    &mut rng,
                    &mut p.data[layout.proj[r][hop].clone()],
                    dims.hop_in(hop),
                    dims.d0,
                );
                glorot(&mut rng, &mut p.data[layout.agg_w[r][hop].clone()], dims.d0, dims.d1);
                for h in 0..dims.n_heads {
                    glorot(&mut rng, &mut p.data[layout.attn[r][hop][h].clone()], 2 * dims.d0, 1);
                }
            }
        }
        glorot(&mut rng, &mut p.data[layout.fusion_w.clone()], dims.d1, dims.fusion_dim);
        glorot(&mut rng, &mut p.data[layout.fusion_q.clone()], dims.fusion_dim, 1);
        glorot(&mut rng, &mut p.data[layout.head_w.clone()], dims.d1, 1);
        p
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    // typed views -----------------------------------------------------------

    pub fn emb(&self, col: usize) -> &[f64] {
        &self.data[self.layout.emb[col].clone()]
    }

    pub fn emb_row(&self, col: usize, id: usize) -> &[f64] {
        let e = self.dims.emb_dims[col];
        let base = self.layout.emb[col].start + id * e;
        &self.data[base..base + e]
    }

    pub fn enc_w(&self, layer: usize) -> &[f64] {
        &self.data[self.layout.enc_w[layer].clone()]
    }

    pub fn enc_b(&self, layer: usize) -> &[f64] {
        &self.data[self.layout.enc_b[layer].clone()]
    }

    pub fn proj(&self, r: usize, hop: usize) -> &[f64] {
        &self.data[self.layout.proj[r][hop].clone()]
    }

    pub fn agg_w(&self, r: usize, hop: usize) -> &[f64] {
        &self.data[self.layout.agg_w[r][hop].clone()]
    }

    pub fn attn(&self, r: usize, hop: usize, head: usize) -> &[f64] {
        &self.data[self.layout.attn[r][hop][head].clone()]
    }

    pub fn fusion_w(&self) -> &[f64] {
        &self.data[self.layout.fusion_w.clone()]
    }

    pub fn fusion_b(&self) -> &[f64] {
        &self.data[self.layout.fusion_b.clone()]
    }

    pub fn fusion_q(&self) -> &[f64] {
        &self.data[self.layout.fusion_q.clone()]
    }

    pub fn head_w(&self) -> &[f64] {
        &self.data[self.layout.head_w.clone()]
    }

    pub fn head_b(&self) -> f64 {
        self.data[self.layout.head_b.start]
    }
}

/// Serialized model state: every parameter tensor plus the artifacts needed
/// to reproduce the forward pass on new data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dims: ModelDims,
    pub params: Vec<f64>,
    /// Relation fusion weights frozen at the best validation epoch; the
    /// prediction path reuses them instead of recomputing from data.
    pub beta: Vec<f64>,
    pub layer_names: Vec<String>,
    pub vocab: Vocabulary,
    pub stats: NormStats,
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Validation(format!("cannot read checkpoint {}: {e}", path.display()))
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        ckpt.dims.validate()?;
        let expected = Layout::build(&ckpt.dims).total;
        if ckpt.params.len() != expected {
            return Err(Error::Validation(format!(
                "checkpoint holds {} parameters but the layout expects {expected}",
                ckpt.params.len()
            )));
        }
        Ok(ckpt)
    }

    pub fn to_params(&self) -> Params {
        let layout = Layout::build(&self.dims);
        Params {
            dims: self.dims.clone(),
            layout,
            data: self.params.clone(),
        }
    }
}

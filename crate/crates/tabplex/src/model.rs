//! The multiplex network: relation-specific projection, attention (or
//! mean/sum) aggregation over each relation's incoming neighborhoods,
//! attention-weighted fusion of the per-relation embeddings, and a linear
//! prediction head. The forward pass records every intermediate needed for
//! an exact reverse sweep.

use crate::encoder::{encode_backward, encode_batch, make_drop_scale, EncTrace};
use crate::error::{Error, Result};
use crate::graph::{LayerIndex, MultiplexGraph};
use crate::linalg::{
    axpy, dot, leaky_relu, leaky_relu_grad, linear, linear_back_input, linear_back_weight, relu,
    relu_grad, sigmoid, softmax_backward, softmax_inplace, Mat,
};
use crate::params::{AggKind, Params};
use crate::table::FeatureMatrix;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Task> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            other => Err(Error::Validation(format!(
                "unknown task {other:?}; expected classification or regression"
            ))),
        }
    }
}

/// Row-wise linear map: out = rows of `h` sent through `m` (d_out × d_in).
pub fn project(h: &Mat, m: &[f64], d_out: usize) -> Mat {
    let d_in = h.cols;
    assert_eq!(m.len(), d_out * d_in, "projection shape mismatch");
    let mut out = Mat::zeros(h.rows, d_out);
    for r in 0..h.rows {
        linear(m, d_out, d_in, h.row(r), out.row_mut(r));
    }
    out
}

/// Trace of one relation hop.
#[derive(Clone, Debug)]
pub struct HopTrace {
    /// Projected features, n × d0.
    pub hat: Mat,
    /// Raw attention logits per (entry, head), before the leaky rectifier.
    pub att_e: Vec<f64>,
    /// Softmax attention weights per (entry, head).
    pub att_a: Vec<f64>,
    /// Aggregated messages: n × (H·d0) for attention, n × d0 otherwise.
    pub msg: Mat,
    /// Pre-activation, n × d1.
    pub pre: Mat,
    /// Hop output, n × d1.
    pub z: Mat,
}

#[inline]
fn entry_base(layer: &LayerIndex, x: usize) -> usize {
    layer.offsets[x] + x
}

fn entry_count(layer: &LayerIndex, n: usize) -> usize {
    layer.offsets[n] + n
}

/// Aggregate one relation layer: every node combines itself and its incoming
/// neighbors in the projected space, then maps the result through the
/// relation's weight matrix and a rectifier.
pub fn aggregate_layer(
    layer: &LayerIndex,
    hat: Mat,
    params: &Params,
    r: usize,
    hop: usize,
) -> HopTrace {
    let dims = &params.dims;
    let n = hat.rows;
    let d0 = dims.d0;
    let d1 = dims.d1;
    let kind = dims.agg;
    let heads = if kind == AggKind::Attention { dims.n_heads } else { 1 };
    let hw = d1 / dims.n_heads;
    let n_entries = entry_count(layer, n);

    let mut att_e = Vec::new();
    let mut att_a = Vec::new();
    let msg_w = if kind == AggKind::Attention { heads * d0 } else { d0 };
    let mut msg = Mat::zeros(n, msg_w);
    if kind == AggKind::Attention {
        att_e = vec![0.0; n_entries * heads];
        att_a = vec![0.0; n_entries * heads];
    }

    let w = params.agg_w(r, hop);
    let mut pre = Mat::zeros(n, d1);
    let mut scratch: Vec<f64> = Vec::new();
    for x in 0..n {
        let incoming = layer.incoming(x);
        let deg = incoming.len() + 1;
        let base = entry_base(layer, x);
        match kind {
            AggKind::Attention => {
                for h in 0..dims.n_heads {
                    let a = params.attn(r, hop, h);
                    let (a_self, a_nbr) = a.split_at(d0);
                    let self_score = dot(a_self, hat.row(x));
                    scratch.clear();
                    scratch.resize(deg, 0.0);
                    for j in 0..deg {
                        let u = if j == 0 { x } else { incoming[j - 1] as usize };
                        let e_raw = self_score + dot(a_nbr, hat.row(u));
                        att_e[(base + j) * dims.n_heads + h] = e_raw;
                        scratch[j] = leaky_relu(e_raw);
                    }
                    softmax_inplace(&mut scratch);
                    let m_row = msg.row_mut(x);
                    let m_h = &mut m_row[h * d0..(h + 1) * d0];
                    for j in 0..deg {
                        let u = if j == 0 { x } else { incoming[j - 1] as usize };
                        att_a[(base + j) * dims.n_heads + h] = scratch[j];
                        axpy(scratch[j], hat.row(u), m_h);
                    }
                }
                // per-head block of the weight matrix maps its message
                let m_row = msg.row(x);
                let pre_row = pre.row_mut(x);
                for h in 0..dims.n_heads {
                    let w_block = &w[h * hw * d0..(h + 1) * hw * d0];
                    let m_h = &m_row[h * d0..(h + 1) * d0];
                    linear(w_block, hw, d0, m_h, &mut pre_row[h * hw..(h + 1) * hw]);
                }
            }
            AggKind::Mean | AggKind::Sum => {
                let m_row = msg.row_mut(x);
                for j in 0..deg {
                    let u = if j == 0 { x } else { incoming[j - 1] as usize };
                    axpy(1.0, hat.row(u), m_row);
                }
                if kind == AggKind::Mean {
                    let inv = 1.0 / deg as f64;
                    for v in m_row.iter_mut() {
                        *v *= inv;
                    }
                }
                linear(w, d1, d0, msg.row(x), pre.row_mut(x));
            }
        }
    }
    let mut z = Mat::zeros(n, d1);
    for i in 0..pre.data.len() {
        z.data[i] = relu(pre.data[i]);
    }
    HopTrace {
        hat,
        att_e,
        att_a,
        msg,
        pre,
        z,
    }
}

/// Fuse the per-relation embeddings with a shared attention score per
/// relation: score each node's embedding through a one-layer tanh network,
/// average over `nodes`, softmax across relations, and mix.
pub fn fuse_relations(
    z_list: &[Mat],
    q: &[f64],
    w: &[f64],
    b: &[f64],
    nodes: &[u32],
) -> (Vec<f64>, Vec<f64>, Mat, Vec<Mat>) {
    let n_rel = z_list.len();
    let n = z_list[0].rows;
    let d1 = z_list[0].cols;
    let fdim = q.len();
    let m = nodes.len().max(1) as f64;
    let mut s = vec![0.0; n_rel];
    let mut t_all = Vec::with_capacity(n_rel);
    for (r, z_r) in z_list.iter().enumerate() {
        let mut t_mat = Mat::zeros(nodes.len(), fdim);
        let mut acc = 0.0;
        for (i, &x) in nodes.iter().enumerate() {
            let t_row = t_mat.row_mut(i);
            linear(w, fdim, d1, z_r.row(x as usize), t_row);
            for (v, bv) in t_row.iter_mut().zip(b) {
                *v = (*v + bv).tanh();
            }
            acc += dot(q, t_row);
        }
        s[r] = acc / m;
        t_all.push(t_mat);
    }
    let mut beta = s.clone();
    softmax_inplace(&mut beta);
    let z = mix_relations(z_list, &beta, n, d1);
    (s, beta, z, t_all)
}

fn mix_relations(z_list: &[Mat], beta: &[f64], n: usize, d1: usize) -> Mat {
    let mut z = Mat::zeros(n, d1);
    for (r, z_r) in z_list.iter().enumerate() {
        let b = beta[r];
        for i in 0..z.data.len() {
            z.data[i] += b * z_r.data[i];
        }
    }
    z
}

/// Linear head: logistic for classification, identity for regression.
pub fn predict_head(z: &[f64], w: &[f64], b: f64, task: Task) -> f64 {
    let o = dot(w, z) + b;
    match task {
        Task::Classification => sigmoid(o),
        Task::Regression => o,
    }
}

/// Everything the reverse sweep needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub enc: EncTrace,
    /// Inverted-dropout scale on the encoder output (empty in eval mode).
    pub gnn_drop_scale: Vec<f64>,
    /// Encoder output after dropout; input to every relation's first hop.
    pub h_in: Mat,
    /// Indexed `[relation][hop]`.
    pub rel: Vec<Vec<HopTrace>>,
    /// Per relation: tanh scores for the fusion nodes (empty with a frozen β).
    pub fusion_t: Vec<Mat>,
    pub beta_nodes: Vec<u32>,
    pub s: Vec<f64>,
    pub beta: Vec<f64>,
    /// Fused embedding, n × d1.
    pub z: Mat,
    pub logits: Vec<f64>,
    pub yhat: Vec<f64>,
}

/// Forward-pass mode.
pub enum Mode<'a> {
    /// Deterministic pass; fusion weights computed over all nodes unless a
    /// frozen β is supplied.
    Eval { frozen_beta: Option<&'a [f64]> },
    /// Dropout active; fusion weights averaged over `beta_nodes`.
    Train {
        dropout: f64,
        rng: &'a mut ChaCha8Rng,
        beta_nodes: &'a [u32],
    },
}

pub fn forward(
    graph: &MultiplexGraph,
    fm: &FeatureMatrix,
    params: &Params,
    task: Task,
    mode: Mode,
) -> Result<ForwardTrace> {
    let dims = &params.dims;
    dims.validate()?;
    if graph.n_nodes != fm.n_rows {
        return Err(Error::Model(format!(
            "graph has {} nodes but the table has {} rows",
            graph.n_nodes, fm.n_rows
        )));
    }
    if graph.n_relations() != dims.n_relations {
        return Err(Error::Model(format!(
            "graph has {} layers but the model expects {}",
            graph.n_relations(),
            dims.n_relations
        )));
    }
    let n = fm.n_rows;

    let (dropout, mut rng, beta_nodes, frozen_beta): (f64, Option<&mut ChaCha8Rng>, Vec<u32>, Option<Vec<f64>>) =
        match mode {
            Mode::Eval { frozen_beta } => (
                0.0,
                None,
                (0..n as u32).collect(),
                frozen_beta.map(|b| b.to_vec()),
            ),
            Mode::Train {
                dropout,
                rng,
                beta_nodes,
            } => (dropout, Some(rng), beta_nodes.to_vec(), None),
        };
    if let Some(b) = &frozen_beta {
        if b.len() != dims.n_relations {
            return Err(Error::Model(format!(
                "frozen fusion weights have length {} but the model has {} relations",
                b.len(),
                dims.n_relations
            )));
        }
    }

    let enc = encode_batch(fm, params, dropout, rng.as_deref_mut())?;
    let gnn_drop_scale = make_drop_scale(n * dims.hidden_dim, dropout, rng)
        .filter(|_| dropout > 0.0)
        .unwrap_or_default();
    let mut h_in = enc.h.clone();
    if !gnn_drop_scale.is_empty() {
        for (v, s) in h_in.data.iter_mut().zip(&gnn_drop_scale) {
            *v *= s;
        }
    }

    let mut rel: Vec<Vec<HopTrace>> = Vec::with_capacity(dims.n_relations);
    for r in 0..dims.n_relations {
        let layer = &graph.layers[r];
        let mut hops: Vec<HopTrace> = Vec::with_capacity(dims.n_hops);
        for hop in 0..dims.n_hops {
            let input = if hop == 0 { &h_in } else { &hops[hop - 1].z };
            let hat = project(input, params.proj(r, hop), dims.d0);
            hops.push(aggregate_layer(layer, hat, params, r, hop));
        }
        rel.push(hops);
    }

    let z_final: Vec<&Mat> = rel.iter().map(|hops| &hops[dims.n_hops - 1].z).collect();
    let z_owned: Vec<Mat> = z_final.iter().map(|m| (*m).clone()).collect();
    let (s, beta, z, fusion_t) = match &frozen_beta {
        Some(b) => {
            let z = mix_relations(&z_owned, b, n, dims.d1);
            (vec![0.0; dims.n_relations], b.clone(), z, Vec::new())
        }
        None => fuse_relations(
            &z_owned,
            params.fusion_q(),
            params.fusion_w(),
            params.fusion_b(),
            &beta_nodes,
        ),
    };

    let mut logits = vec![0.0; n];
    let mut yhat = vec![0.0; n];
    let hw = params.head_w();
    let hb = params.head_b();
    for x in 0..n {
        let o = dot(hw, z.row(x)) + hb;
        logits[x] = o;
        yhat[x] = match task {
            Task::Classification => sigmoid(o),
            Task::Regression => o,
        };
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model("non-finite values in the forward pass".into()));
    }

    Ok(ForwardTrace {
        enc,
        gnn_drop_scale,
        h_in,
        rel,
        fusion_t,
        beta_nodes,
        s,
        beta,
        z,
        logits,
        yhat,
    })
}

/// Exact gradients of a scalar loss with respect to every parameter, given
/// `dlogits[x] = ∂loss/∂logit_x` (zero for nodes outside the loss).
pub fn backward(
    graph: &MultiplexGraph,
    fm: &FeatureMatrix,
    params: &Params,
    trace: &ForwardTrace,
    dlogits: &[f64],
) -> Vec<f64> {
    let dims = &params.dims;
    let n = fm.n_rows;
    let d0 = dims.d0;
    let d1 = dims.d1;
    let hw_w = d1 / dims.n_heads;
    let mut grad = vec![0.0; params.len()];

    // head
    let head_w = params.head_w();
    let mut dz = Mat::zeros(n, d1);
    {
        let hw_range = params.layout.head_w.clone();
        let hb_idx = params.layout.head_b.start;
        for x in 0..n {
            let g = dlogits[x];
            if g == 0.0 {
                continue;
            }
            let zr = trace.z.row(x);
            for c in 0..d1 {
                grad[hw_range.start + c] += g * zr[c];
            }
            grad[hb_idx] += g;
            axpy(g, head_w, dz.row_mut(x));
        }
    }

    // fusion mixing: z = Σ_r β_r z_r
    let mut dz_rel: Vec<Mat> = (0..dims.n_relations).map(|_| Mat::zeros(n, d1)).collect();
    let mut dbeta = vec![0.0; dims.n_relations];
    for r in 0..dims.n_relations {
        let z_r = &trace.rel[r][dims.n_hops - 1].z;
        let b = trace.beta[r];
        for x in 0..n {
            let g = dz.row(x);
            let dst = dz_rel[r].row_mut(x);
            axpy(b, g, dst);
            dbeta[r] += dot(g, z_r.row(x));
        }
    }

    // fusion scoring network (skipped when β was frozen)
    if !trace.fusion_t.is_empty() {
        let mut ds = vec![0.0; dims.n_relations];
        softmax_backward(&trace.beta, &dbeta, &mut ds);
        let m = trace.beta_nodes.len().max(1) as f64;
        let fdim = dims.fusion_dim;
        let q = params.fusion_q();
        let w = params.fusion_w();
        let wq_range = params.layout.fusion_q.clone();
        let ww_range = params.layout.fusion_w.clone();
        let wb_range = params.layout.fusion_b.clone();
        let mut du = vec![0.0; fdim];
        for r in 0..dims.n_relations {
            let scale = ds[r] / m;
            if scale == 0.0 {
                continue;
            }
            let z_r = &trace.rel[r][dims.n_hops - 1].z;
            for (i, &x) in trace.beta_nodes.iter().enumerate() {
                let t = trace.fusion_t[r].row(i);
                // dq += t · scale ; du = q·scale ⊙ (1 − t²)
                for c in 0..fdim {
                    grad[wq_range.start + c] += scale * t[c];
                    du[c] = scale * q[c] * (1.0 - t[c] * t[c]);
                }
                let zx = z_r.row(x as usize);
                linear_back_weight(&mut grad[ww_range.clone()], fdim, d1, &du, zx);
                for c in 0..fdim {
                    grad[wb_range.start + c] += du[c];
                }
                linear_back_input(w, fdim, d1, &du, dz_rel[r].row_mut(x as usize));
            }
        }
    }

    // relations, hops in reverse
    let mut dh_in = Mat::zeros(n, dims.hidden_dim);
    for r in 0..dims.n_relations {
        let layer = &graph.layers[r];
        let mut dz_hop = std::mem::replace(&mut dz_rel[r], Mat::zeros(0, 0));
        for hop in (0..dims.n_hops).rev() {
            let ht = &trace.rel[r][hop];
            let w = params.agg_w(r, hop);
            let w_range = params.layout.agg_w[r][hop].clone();
            let mut dhat = Mat::zeros(n, d0);
            match dims.agg {
                AggKind::Attention => {
                    let heads = dims.n_heads;
                    let mut dmsg = Mat::zeros(n, heads * d0);
                    for x in 0..n {
                        // dpre = dz ⊙ relu'(pre)
                        let mut dpre = dz_hop.row(x).to_vec();
                        for c in 0..d1 {
                            dpre[c] *= relu_grad(ht.pre.get(x, c));
                        }
                        let m_row = ht.msg.row(x);
                        let dm_row = dmsg.row_mut(x);
                        for h in 0..heads {
                            let w_block = &w[h * hw_w * d0..(h + 1) * hw_w * d0];
                            let dp = &dpre[h * hw_w..(h + 1) * hw_w];
                            let m_h = &m_row[h * d0..(h + 1) * d0];
                            linear_back_weight(
                                &mut grad[w_range.start + h * hw_w * d0..w_range.start + (h + 1) * hw_w * d0],
                                hw_w,
                                d0,
                                dp,
                                m_h,
                            );
                            linear_back_input(w_block, hw_w, d0, dp, &mut dm_row[h * d0..(h + 1) * d0]);
                        }
                    }
                    // attention softmax and logits
                    let mut dalpha: Vec<f64> = Vec::new();
                    let mut de: Vec<f64> = Vec::new();
                    for x in 0..n {
                        let incoming = layer.incoming(x);
                        let deg = incoming.len() + 1;
                        let base = entry_base(layer, x);
                        for h in 0..heads {
                            let a_range = params.layout.attn[r][hop][h].clone();
                            let a = params.attn(r, hop, h);
                            let (a_self, a_nbr) = a.split_at(d0);
                            let dm_h = &dmsg.row(x)[h * d0..(h + 1) * d0];
                            dalpha.clear();
                            dalpha.resize(deg, 0.0);
                            let mut alpha = vec![0.0; deg];
                            for j in 0..deg {
                                let u = if j == 0 { x } else { incoming[j - 1] as usize };
                                alpha[j] = ht.att_a[(base + j) * heads + h];
                                dalpha[j] = dot(dm_h, ht.hat.row(u));
                                // aggregation path into neighbor features
                                axpy(alpha[j], dm_h, dhat.row_mut(u));
                            }
                            de.clear();
                            de.resize(deg, 0.0);
                            softmax_backward(&alpha, &dalpha, &mut de);
                            for j in 0..deg {
                                let u = if j == 0 { x } else { incoming[j - 1] as usize };
                                let e_raw = ht.att_e[(base + j) * heads + h];
                                let g = de[j] * leaky_relu_grad(e_raw);
                                if g == 0.0 {
                                    continue;
                                }
                                let hat_x = ht.hat.row(x);
                                let hat_u = ht.hat.row(u);
                                for c in 0..d0 {
                                    grad[a_range.start + c] += g * hat_x[c];
                                    grad[a_range.start + d0 + c] += g * hat_u[c];
                                }
                                axpy(g, a_self, dhat.row_mut(x));
                                axpy(g, a_nbr, dhat.row_mut(u));
                            }
                        }
                    }
                }
                AggKind::Mean | AggKind::Sum => {
                    let mut dm = vec![0.0; d0];
                    for x in 0..n {
                        let mut dpre = dz_hop.row(x).to_vec();
                        for c in 0..d1 {
                            dpre[c] *= relu_grad(ht.pre.get(x, c));
                        }
                        let m_row = ht.msg.row(x);
                        linear_back_weight(&mut grad[w_range.clone()], d1, d0, &dpre, m_row);
                        dm.iter_mut().for_each(|v| *v = 0.0);
                        linear_back_input(w, d1, d0, &dpre, &mut dm);
                        let incoming = layer.incoming(x);
                        let deg = incoming.len() + 1;
                        let scale = if dims.agg == AggKind::Mean {
                            1.0 / deg as f64
                        } else {
                            1.0
                        };
                        for j in 0..deg {
                            let u = if j == 0 { x } else { incoming[j - 1] as usize };
                            axpy(scale, &dm, dhat.row_mut(u));
                        }
                    }
                }
            }

            // projection: hat = input · projᵀ
            let proj = params.proj(r, hop);
            let proj_range = params.layout.proj[r][hop].clone();
            let in_w = dims.hop_in(hop);
            let input: &Mat = if hop == 0 { &trace.h_in } else { &trace.rel[r][hop - 1].z };
            let mut d_input = Mat::zeros(n, in_w);
            for x in 0..n {
                let dh = dhat.row(x);
                linear_back_weight(&mut grad[proj_range.clone()], d0, in_w, dh, input.row(x));
                linear_back_input(proj, d0, in_w, dh, d_input.row_mut(x));
            }
            if hop == 0 {
                for i in 0..dh_in.data.len() {
                    dh_in.data[i] += d_input.data[i];
                }
            } else {
                dz_hop = d_input;
            }
        }
    }

    // dropout on the encoder output
    let mut dh = dh_in;
    if !trace.gnn_drop_scale.is_empty() {
        for (v, s) in dh.data.iter_mut().zip(&trace.gnn_drop_scale) {
            *v *= s;
        }
    }
    encode_backward(fm, params, &trace.enc, &dh, &mut grad);
    grad
}

/// A trained (or freshly initialized) model with optional frozen fusion
/// weights. Prediction uses the frozen weights when present, so a node's
/// output depends only on its own incoming neighborhood.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub params: Params,
    pub beta: Option<Vec<f64>>,
    pub task: Task,
}

impl ModelState {
    pub fn predict(&self, graph: &MultiplexGraph, fm: &FeatureMatrix) -> Result<ForwardTrace> {
        forward(
            graph,
            fm,
            &self.params,
            self.task,
            Mode::Eval {
                frozen_beta: self.beta.as_deref(),
            },
        )
    }
}

/// Single-relation mean-aggregation network over a flattened (merged-layer)
/// graph: the homogeneous baseline. Uses the first relation's projection and
/// weight tensors and the shared encoder/head.
pub fn homogeneous_mean_forward(
    merged: &MultiplexGraph,
    fm: &FeatureMatrix,
    params: &Params,
    task: Task,
) -> Result<Vec<f64>> {
    if merged.n_relations() != 1 {
        return Err(Error::Model("homogeneous path expects a single merged layer".into()));
    }
    let enc = encode_batch(fm, params, 0.0, None)?;
    let hat = project(&enc.h, params.proj(0, 0), params.dims.d0);
    let layer = &merged.layers[0];
    let n = fm.n_rows;
    let d0 = params.dims.d0;
    let d1 = params.dims.d1;
    let w = params.agg_w(0, 0);
    let mut yhat = vec![0.0; n];
    let head_w = params.head_w();
    let head_b = params.head_b();
    let mut m = vec![0.0; d0];
    let mut pre = vec![0.0; d1];
    for x in 0..n {
        m.iter_mut().for_each(|v| *v = 0.0);
        let incoming = layer.incoming(x);
        let deg = incoming.len() + 1;
        axpy(1.0, hat.row(x), &mut m);
        for &u in incoming {
            axpy(1.0, hat.row(u as usize), &mut m);
        }
        let inv = 1.0 / deg as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        linear(w, d1, d0, &m, &mut pre);
        let z: Vec<f64> = pre.iter().map(|&v| relu(v)).collect();
        yhat[x] = predict_head(&z, head_w, head_b, task);
    }
    Ok(yhat)
}

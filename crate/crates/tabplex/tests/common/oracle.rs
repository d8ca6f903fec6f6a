//! Independent dense reference implementations, written as straight-line
//! loops over explicit neighbor lists with naive softmax. These deliberately
//! avoid the library's adjacency indexes and kernels so the two paths share
//! only the parameter values.

#![allow(dead_code)]

use tabplex::graph::MultiplexGraph;
use tabplex::model::Task;
use tabplex::params::{AggKind, Params};
use tabplex::table::FeatureMatrix;

pub struct DenseOut {
    pub h: Vec<Vec<f64>>,
    pub z_rel: Vec<Vec<Vec<f64>>>,
    pub s: Vec<f64>,
    pub beta: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub yhat: Vec<f64>,
}

fn naive_softmax(v: &[f64]) -> Vec<f64> {
    let exps: Vec<f64> = v.iter().map(|&x| x.exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

fn rect(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Full model forward with explicit neighbor lists and naive arithmetic.
pub fn dense_forward(
    graph: &MultiplexGraph,
    fm: &FeatureMatrix,
    params: &Params,
    task: Task,
) -> DenseOut {
    let dims = &params.dims;
    let n = fm.n_rows;

    // encoder: embedding lookups, concat, MLP
    let mut h: Vec<Vec<f64>> = Vec::with_capacity(n);
    for row in 0..n {
        let mut concat = Vec::new();
        for (col, ids) in fm.cat_ids.iter().enumerate() {
            let id = ids[row] as usize;
            let e = dims.emb_dims[col];
            let table = params.emb(col);
            for k in 0..e {
                concat.push(table[id * e + k]);
            }
        }
        for c in 0..dims.n_numeric {
            concat.push(fm.num.get(row, c));
        }
        let mut act = concat;
        for l in 0..dims.layer_size {
            let w = params.enc_w(l);
            let b = params.enc_b(l);
            let n_in = act.len();
            let mut next = vec![0.0; dims.hidden_dim];
            for (o, nx) in next.iter_mut().enumerate() {
                let mut acc = b[o];
                for (i, &a) in act.iter().enumerate() {
                    acc += w[o * n_in + i] * a;
                }
                *nx = acc;
            }
            if l + 1 < dims.layer_size {
                for v in next.iter_mut() {
                    *v = rect(*v);
                }
            }
            act = next;
        }
        h.push(act);
    }

    // per relation: project, aggregate, rectify (stacking hops)
    let mut z_rel: Vec<Vec<Vec<f64>>> = Vec::with_capacity(dims.n_relations);
    for r in 0..dims.n_relations {
        // explicit incoming neighbor lists from the arc list
        let arcs = graph.layer_edges(r);
        let mut input: Vec<Vec<f64>> = h.clone();
        for hop in 0..dims.n_hops {
            let proj = params.proj(r, hop);
            let in_w = input[0].len();
            let hat: Vec<Vec<f64>> = input
                .iter()
                .map(|x| {
                    (0..dims.d0)
                        .map(|o| (0..in_w).map(|i| proj[o * in_w + i] * x[i]).sum())
                        .collect()
                })
                .collect();
            let w = params.agg_w(r, hop);
            let hw = dims.d1 / dims.n_heads;
            let mut z_hop: Vec<Vec<f64>> = Vec::with_capacity(n);
            for x in 0..n {
                let mut nbrs: Vec<usize> = vec![x];
                for &(src, dst) in &arcs {
                    if dst as usize == x {
                        nbrs.push(src as usize);
                    }
                }
                let mut pre = vec![0.0; dims.d1];
                match dims.agg {
                    AggKind::Attention => {
                        for head in 0..dims.n_heads {
                            let a = params.attn(r, hop, head);
                            let logits: Vec<f64> = nbrs
                                .iter()
                                .map(|&u| {
                                    let mut e = 0.0;
                                    for k in 0..dims.d0 {
                                        e += a[k] * hat[x][k] + a[dims.d0 + k] * hat[u][k];
                                    }
                                    leaky(e)
                                })
                                .collect();
                            let alpha = naive_softmax(&logits);
                            let mut msg = vec![0.0; dims.d0];
                            for (j, &u) in nbrs.iter().enumerate() {
                                for k in 0..dims.d0 {
                                    msg[k] += alpha[j] * hat[u][k];
                                }
                            }
                            for o in 0..hw {
                                let mut acc = 0.0;
                                for k in 0..dims.d0 {
                                    acc += w[(head * hw + o) * dims.d0 + k] * msg[k];
                                }
                                pre[head * hw + o] = acc;
                            }
                        }
                    }
                    AggKind::Mean | AggKind::Sum => {
                        let mut msg = vec![0.0; dims.d0];
                        for &u in &nbrs {
                            for k in 0..dims.d0 {
                                msg[k] += hat[u][k];
                            }
                        }
                        if dims.agg == AggKind::Mean {
                            for v in msg.iter_mut() {
                                *v /= nbrs.len() as f64;
                            }
                        }
                        for (o, p) in pre.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for k in 0..dims.d0 {
                                acc += w[o * dims.d0 + k] * msg[k];
                            }
                            *p = acc;
                        }
                    }
                }
                z_hop.push(pre.iter().map(|&v| rect(v)).collect());
            }
            input = z_hop;
        }
        z_rel.push(input);
    }

    // fusion across relations
    let q = params.fusion_q();
    let wf = params.fusion_w();
    let bf = params.fusion_b();
    let fdim = dims.fusion_dim;
    let mut s = vec![0.0; dims.n_relations];
    for r in 0..dims.n_relations {
        let mut acc = 0.0;
        for x in 0..n {
            for o in 0..fdim {
                let mut u = bf[o];
                for k in 0..dims.d1 {
                    u += wf[o * dims.d1 + k] * z_rel[r][x][k];
                }
                acc += q[o] * u.tanh();
            }
        }
        s[r] = acc / n as f64;
    }
    let beta = naive_softmax(&s);
    let mut z: Vec<Vec<f64>> = vec![vec![0.0; dims.d1]; n];
    for r in 0..dims.n_relations {
        for x in 0..n {
            for k in 0..dims.d1 {
                z[x][k] += beta[r] * z_rel[r][x][k];
            }
        }
    }

    let hw = params.head_w();
    let hb = params.head_b();
    let yhat: Vec<f64> = z
        .iter()
        .map(|zx| {
            let mut o = hb;
            for k in 0..dims.d1 {
                o += hw[k] * zx[k];
            }
            match task {
                Task::Classification => 1.0 / (1.0 + (-o).exp()),
                Task::Regression => o,
            }
        })
        .collect();

    DenseOut {
        h,
        z_rel,
        s,
        beta,
        z,
        yhat,
    }
}

/// Straight-line encoder for a single sample: embed, concat, MLP.
pub fn dense_encode(cat_ids: &[u32], num: &[f64], params: &Params) -> Vec<f64> {
    let dims = &params.dims;
    let mut concat = Vec::new();
    for (col, &id) in cat_ids.iter().enumerate() {
        let e = dims.emb_dims[col];
        let table = params.emb(col);
        for k in 0..e {
            concat.push(table[id as usize * e + k]);
        }
    }
    concat.extend_from_slice(num);
    let mut act = concat;
    for l in 0..dims.layer_size {
        let w = params.enc_w(l);
        let b = params.enc_b(l);
        let n_in = act.len();
        let mut next = vec![0.0; dims.hidden_dim];
        for (o, nx) in next.iter_mut().enumerate() {
            let mut acc = b[o];
            for (i, &a) in act.iter().enumerate() {
                acc += w[o * n_in + i] * a;
            }
            *nx = acc;
        }
        if l + 1 < dims.layer_size {
            for v in next.iter_mut() {
                *v = rect(*v);
            }
        }
        act = next;
    }
    act
}

/// AUC by explicit enumeration of every positive/negative pair.
pub fn pair_counting_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut wins = 0.0_f64;
    let mut pairs = 0.0_f64;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1.0 && labels[j] == 0.0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// MSE by direct summation.
pub fn naive_mse(pred: &[f64], target: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..pred.len() {
        let d = pred[i] - target[i];
        acc += d * d;
    }
    acc / pred.len() as f64
}

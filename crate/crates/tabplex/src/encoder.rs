//! Mixed-type feature encoding: per-column embedding lookups for categorical
//! ids, concatenation with numerical values, and an MLP that maps the concat
//! to a fixed-length vector. Hidden layers are rectified; the final layer is
//! linear. Inverted dropout acts on hidden activations in training mode.

use crate::error::{Error, Result};
use crate::linalg::{linear, linear_back_input, linear_back_weight, relu, relu_grad, Mat};
use crate::params::Params;
use crate::table::FeatureMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Intermediates of one encoder pass, enough for an exact reverse sweep.
#[derive(Clone, Debug)]
pub struct EncTrace {
    /// n × concat_width embedding/numeric concatenation.
    pub concat: Mat,
    /// Pre-activation of every MLP layer, n × hidden each.
    pub pre: Vec<Mat>,
    /// Inverted-dropout scale per hidden layer (0 or 1/(1−p) per unit);
    /// empty vectors in eval mode.
    pub drop_scale: Vec<Vec<f64>>,
    /// Final encoder output, n × hidden.
    pub h: Mat,
}

fn fill_concat(fm: &FeatureMatrix, params: &Params, row: usize, out: &mut [f64]) -> Result<()> {
    let dims = &params.dims;
    let mut off = 0usize;
    for (col, ids) in fm.cat_ids.iter().enumerate() {
        let id = ids[row] as usize;
        if id >= dims.cat_vocab_sizes[col] {
            return Err(Error::Model(format!(
                "categorical id {id} out of range for column {col} (vocab {})",
                dims.cat_vocab_sizes[col]
            )));
        }
        let e = dims.emb_dims[col];
        out[off..off + e].copy_from_slice(params.emb_row(col, id));
        off += e;
    }
    out[off..off + dims.n_numeric].copy_from_slice(fm.num.row(row));
    Ok(())
}

/// Encode every row. `dropout` is applied with `rng` when provided
/// (training); pass `None` for deterministic evaluation.
pub fn encode_batch(
    fm: &FeatureMatrix,
    params: &Params,
    dropout: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<EncTrace> {
    let dims = &params.dims;
    let n = fm.n_rows;
    let d_in = dims.concat_width();
    let hidden = dims.hidden_dim;
    let layers = dims.layer_size;

    let mut concat = Mat::zeros(n, d_in);
    for row in 0..n {
        fill_concat(fm, params, row, concat.row_mut(row))?;
    }

    let mut pre: Vec<Mat> = (0..layers).map(|_| Mat::zeros(n, hidden)).collect();
    let mut drop_scale: Vec<Vec<f64>> = Vec::new();
    let mut act = concat.clone();
    for l in 0..layers {
        let w = params.enc_w(l);
        let b = params.enc_b(l);
        let n_in = dims.enc_in(l);
        for row in 0..n {
            let (src, dst) = (act.row(row), pre[l].row_mut(row));
            linear(w, hidden, n_in, src, dst);
            for (o, bo) in dst.iter_mut().zip(b) {
                *o += bo;
            }
        }
        if l + 1 < layers {
            let mut next = Mat::zeros(n, hidden);
            let scale = make_drop_scale(n * hidden, dropout, rng.as_deref_mut());
            for row in 0..n {
                for c in 0..hidden {
                    let mut v = relu(pre[l].get(row, c));
                    if let Some(s) = &scale {
                        v *= s[row * hidden + c];
                    }
                    next.set(row, c, v);
                }
            }
            drop_scale.push(scale.unwrap_or_default());
            act = next;
        } else {
            act = pre[l].clone();
        }
    }

    Ok(EncTrace {
        concat,
        pre,
        drop_scale,
        h: act,
    })
}

/// Build an inverted-dropout scale vector, or `None` in eval mode.
pub fn make_drop_scale(len: usize, p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<f64>> {
    let rng = rng?;
    if p <= 0.0 {
        return Some(vec![1.0; len]);
    }
    let keep = 1.0 - p;
    Some(
        (0..len)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { 1.0 / keep })
            .collect(),
    )
}

/// Encode one sample in evaluation mode.
pub fn encode(cat_ids: &[u32], num: &[f64], params: &Params) -> Result<Vec<f64>> {
    let fm = FeatureMatrix {
        n_rows: 1,
        cat_ids: cat_ids.iter().map(|&id| vec![id]).collect(),
        cat_vocab_sizes: params.dims.cat_vocab_sizes.clone(),
        num: Mat::from_vec(1, num.len(), num.to_vec()),
    };
    let trace = encode_batch(&fm, params, 0.0, None)?;
    Ok(trace.h.row(0).to_vec())
}

/// Reverse sweep: accumulate gradients of every encoder parameter given
/// `dh = ∂L/∂h`, and consume the trace produced by `encode_batch`.
pub fn encode_backward(
    fm: &FeatureMatrix,
    params: &Params,
    trace: &EncTrace,
    dh: &Mat,
    grad: &mut [f64],
) {
    let dims = &params.dims;
    let n = fm.n_rows;
    let hidden = dims.hidden_dim;
    let layers = dims.layer_size;

    // activations feeding each layer (post-relu/post-dropout), rebuilt from
    // the stored pre-activations
    let mut acts: Vec<Mat> = Vec::with_capacity(layers);
    acts.push(trace.concat.clone());
    for l in 0..layers.saturating_sub(1) {
        let mut a = Mat::zeros(n, hidden);
        for row in 0..n {
            for c in 0..hidden {
                let mut v = relu(trace.pre[l].get(row, c));
                if !trace.drop_scale[l].is_empty() {
                    v *= trace.drop_scale[l][row * hidden + c];
                }
                a.set(row, c, v);
            }
        }
        acts.push(a);
    }

    let mut d_out = dh.clone();
    for l in (0..layers).rev() {
        let n_in = dims.enc_in(l);
        let w = params.enc_w(l);
        let w_range = params.layout.enc_w[l].clone();
        let b_range = params.layout.enc_b[l].clone();
        let mut d_in_mat = Mat::zeros(n, n_in);
        for row in 0..n {
            // gradient w.r.t. this layer's pre-activation
            let mut dpre = d_out.row(row).to_vec();
            if l + 1 < layers {
                for c in 0..hidden {
                    let mut g = dpre[c];
                    if !trace.drop_scale[l].is_empty() {
                        g *= trace.drop_scale[l][row * hidden + c];
                    }
                    g *= relu_grad(trace.pre[l].get(row, c));
                    dpre[c] = g;
                }
            }
            let x = acts[l].row(row);
            linear_back_weight(&mut grad[w_range.clone()], hidden, n_in, &dpre, x);
            for (gb, dp) in grad[b_range.clone()].iter_mut().zip(&dpre) {
                *gb += dp;
            }
            linear_back_input(w, hidden, n_in, &dpre, d_in_mat.row_mut(row));
        }
        d_out = d_in_mat;
    }

    // d_out is now the gradient w.r.t. the concat; scatter into embeddings
    for row in 0..n {
        let mut off = 0usize;
        for (col, ids) in fm.cat_ids.iter().enumerate() {
            let e = dims.emb_dims[col];
            let id = ids[row] as usize;
            let base = params.layout.emb[col].start + id * e;
            for k in 0..e {
                grad[base + k] += d_out.get(row, off + k);
            }
            off += e;
        }
        // numeric features are inputs, not parameters
    }
}

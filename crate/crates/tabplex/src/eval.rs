//! Metrics, embedding export, and the concatenate-and-refit downstream
//! harness that measures what the learned embeddings add to a plain linear
//! model on the original features.

use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid, Mat};
use crate::model::Task;
use crate::table::Dataset;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Probability that a uniformly random positive outranks a random negative;
/// ties count one half. Computed from tie-averaged ranks, which equals the
/// quadratic pair count exactly.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Metric(format!(
            "score and label lengths differ: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l == 1.0).count();
    let neg = labels.iter().filter(|&&l| l == 0.0).count();
    if pos + neg != labels.len() {
        return Err(Error::Metric("labels must be 0 or 1".into()));
    }
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("both classes required to compute ranking quality".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // 1-based average rank of the tie group
        for &idx in &order[i..=j] {
            rank[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = labels
        .iter()
        .zip(&rank)
        .filter(|(&l, _)| l == 1.0)
        .map(|(_, &r)| r)
        .sum();
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Mean squared error.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Metric(format!(
            "prediction and target lengths differ: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Metric("mean squared error over an empty set".into()));
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(total / pred.len() as f64)
}

/// Exported per-row embeddings with the fusion-weight snapshot and the
/// fingerprint of the configuration that produced them.
#[derive(Clone, Debug)]
pub struct EmbeddingMatrix {
    pub row_ids: Vec<u32>,
    pub vectors: Mat,
    pub beta: Vec<f64>,
    pub fingerprint: String,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingSidecar {
    beta: Vec<f64>,
    fingerprint: String,
}

/// Write embeddings as a delimited file: a header naming each dimension,
/// then one line per row with the row id and the embedding values. A small
/// JSON sidecar records the fusion weights and config fingerprint.
pub fn export_embeddings(em: &EmbeddingMatrix, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "row_id")?;
    for c in 0..em.vectors.cols {
        write!(f, ",z{c}")?;
    }
    writeln!(f)?;
    for (i, &id) in em.row_ids.iter().enumerate() {
        write!(f, "{id}")?;
        for &v in em.vectors.row(i) {
            write!(f, ",{v}")?;
        }
        writeln!(f)?;
    }
    drop(f);
    let sidecar = EmbeddingSidecar {
        beta: em.beta.clone(),
        fingerprint: em.fingerprint.clone(),
    };
    std::fs::write(
        path.with_extension("meta.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let f = std::fs::File::open(path).map_err(|e| {
        Error::Validation(format!("cannot open embeddings file {}: {e}", path.display()))
    })?;
    let mut lines = std::io::BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Validation("empty embeddings file".into()))??;
    let cols = header.split(',').count() - 1;
    let mut row_ids = Vec::new();
    let mut data = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let id: u32 = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Validation(format!("bad embeddings line {line:?}")))?;
        row_ids.push(id);
        for v in it {
            data.push(v.parse::<f64>().map_err(|_| {
                Error::Validation(format!("bad embedding value {v:?}"))
            })?);
        }
    }
    let rows = row_ids.len();
    if data.len() != rows * cols {
        return Err(Error::Validation("ragged embeddings file".into()));
    }
    let sidecar: EmbeddingSidecar = match std::fs::read_to_string(path.with_extension("meta.json")) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => EmbeddingSidecar {
            beta: vec![],
            fingerprint: String::new(),
        },
    };
    Ok(EmbeddingMatrix {
        row_ids,
        vectors: Mat::from_vec(rows, cols, data),
        beta: sidecar.beta,
        fingerprint: sidecar.fingerprint,
    })
}

/// One-hot categorical features plus z-scored numerics: the design matrix
/// the downstream linear model consumes.
pub fn design_matrix(ds: &Dataset) -> Mat {
    let n = ds.table.n_rows;
    let mut width = 0usize;
    for col in &ds.table.cat {
        if col.kind.is_featurized() {
            width += ds.vocab.column(&col.name).map(|v| v.size()).unwrap_or(0);
        }
    }
    width += ds.table.num.len();
    let mut x = Mat::zeros(n, width);
    let mut off = 0usize;
    for col in &ds.table.cat {
        if !col.kind.is_featurized() {
            continue;
        }
        let size = ds.vocab.column(&col.name).map(|v| v.size()).unwrap_or(0);
        let ids = col.ids.as_ref().expect("dataset is encoded");
        for row in 0..n {
            x.set(row, off + ids[row] as usize, 1.0);
        }
        off += size;
    }
    for col in &ds.table.num {
        let vals = col.normalized.as_ref().expect("dataset is normalized");
        for row in 0..n {
            x.set(row, off, vals[row]);
        }
        off += 1;
    }
    x
}

fn hstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.rows, b.rows);
    let mut out = Mat::zeros(a.rows, a.cols + b.cols);
    for r in 0..a.rows {
        out.row_mut(r)[..a.cols].copy_from_slice(a.row(r));
        out.row_mut(r)[a.cols..].copy_from_slice(b.row(r));
    }
    out
}

const RIDGE_LAMBDA: f64 = 1e-4;
const LOGISTIC_ITERS: usize = 400;
const LOGISTIC_LR: f64 = 0.5;

/// L2-regularized logistic regression by full-batch gradient descent.
/// Deterministic: zero initialization, fixed iteration count.
fn fit_logistic(x: &Mat, y: &[f64], rows: &[u32]) -> Vec<f64> {
    let d = x.cols;
    let mut w = vec![0.0; d + 1]; // last entry is the intercept
    let m = rows.len() as f64;
    let mut grad = vec![0.0; d + 1];
    for _ in 0..LOGISTIC_ITERS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &row in rows {
            let r = row as usize;
            let o = dot(&w[..d], x.row(r)) + w[d];
            let err = sigmoid(o) - y[r];
            for (g, &xv) in grad[..d].iter_mut().zip(x.row(r)) {
                *g += err * xv;
            }
            grad[d] += err;
        }
        for c in 0..d {
            w[c] -= LOGISTIC_LR * (grad[c] / m + RIDGE_LAMBDA * w[c]);
        }
        w[d] -= LOGISTIC_LR * grad[d] / m;
    }
    w
}

/// Ridge least squares via normal equations and a hand-rolled Cholesky
/// factorization; the intercept is unpenalized.
fn fit_ridge(x: &Mat, y: &[f64], rows: &[u32]) -> Vec<f64> {
    let d = x.cols + 1;
    let mut xtx = vec![0.0; d * d];
    let mut xty = vec![0.0; d];
    for &row in rows {
        let r = row as usize;
        let xr = x.row(r);
        for i in 0..d {
            let xi = if i < x.cols { xr[i] } else { 1.0 };
            xty[i] += xi * y[r];
            for j in i..d {
                let xj = if j < x.cols { xr[j] } else { 1.0 };
                xtx[i * d + j] += xi * xj;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            xtx[i * d + j] = xtx[j * d + i];
        }
    }
    let m = rows.len().max(1) as f64;
    for i in 0..x.cols {
        xtx[i * d + i] += RIDGE_LAMBDA * m;
    }
    // tiny jitter keeps the intercept row factorizable for degenerate input
    xtx[(d - 1) * d + (d - 1)] += 1e-12;
    cholesky_solve(&mut xtx, &xty, d)
}

fn cholesky_solve(a: &mut [f64], b: &[f64], n: usize) -> Vec<f64> {
    // in-place lower-triangular factorization
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                a[i * n + j] = sum.max(1e-30).sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
    }
    // forward then backward substitution
    let mut yv = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= a[i * n + k] * yv[k];
        }
        yv[i] = sum / a[i * n + i];
    }
    let mut w = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = yv[i];
        for k in (i + 1)..n {
            sum -= a[k * n + i] * w[k];
        }
        w[i] = sum / a[i * n + i];
    }
    w
}

fn predict_linear(x: &Mat, w: &[f64], rows: &[u32], logistic: bool) -> Vec<f64> {
    let d = x.cols;
    rows.iter()
        .map(|&row| {
            let o = dot(&w[..d], x.row(row as usize)) + w[d];
            if logistic {
                sigmoid(o)
            } else {
                o
            }
        })
        .collect()
}

/// Side-by-side metrics for the plain features and the embedding-augmented
/// features, with the relative improvement (positive = better).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DownstreamReport {
    pub task: Task,
    pub original: f64,
    pub augmented: f64,
    pub improvement_pct: f64,
    /// Set when the feature matrix is degenerate (all-constant columns only).
    pub degenerate_features: bool,
}

/// Fit the downstream linear model on the original features and on the
/// original features concatenated with the embeddings; evaluate both on
/// `eval_ids` under the same protocol.
pub fn concat_and_fit_downstream(
    ds: &Dataset,
    z: &Mat,
    task: Task,
    train_ids: &[u32],
    eval_ids: &[u32],
) -> Result<DownstreamReport> {
    if z.rows != ds.table.n_rows {
        return Err(Error::Validation(format!(
            "embeddings cover {} rows but the table has {}",
            z.rows,
            ds.table.n_rows
        )));
    }
    let x = design_matrix(ds);
    let degenerate = (0..x.cols).all(|c| {
        let first = x.get(0, c);
        (0..x.rows).all(|r| x.get(r, c) == first)
    });
    let x_aug = hstack(&x, z);
    let y = &ds.table.target.values;

    let evaluate = |design: &Mat| -> Result<f64> {
        let labels: Vec<f64> = eval_ids.iter().map(|&i| y[i as usize]).collect();
        match task {
            Task::Classification => {
                let w = fit_logistic(design, y, train_ids);
                let scores = predict_linear(design, &w, eval_ids, true);
                auc(&scores, &labels)
            }
            Task::Regression => {
                let w = fit_ridge(design, y, train_ids);
                let scores = predict_linear(design, &w, eval_ids, false);
                mse(&scores, &labels)
            }
        }
    };

    let original = evaluate(&x)?;
    let augmented = evaluate(&x_aug)?;
    let improvement_pct = match task {
        Task::Classification => {
            if original.abs() > 0.0 {
                (augmented - original) / original * 100.0
            } else {
                0.0
            }
        }
        Task::Regression => {
            if original.abs() > 0.0 {
                (original - augmented) / original * 100.0
            } else {
                0.0
            }
        }
    };
    Ok(DownstreamReport {
        task,
        original,
        augmented,
        improvement_pct,
        degenerate_features: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.1], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.9], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn auc_rejects_single_class_and_bad_labels() {
        assert!(auc(&[0.5, 0.6], &[1.0, 1.0]).is_err());
        assert!(auc(&[0.5, 0.6], &[1.0, 2.0]).is_err());
        assert!(auc(&[0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn auc_matches_the_well_known_four_point_case() {
        let got = auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((got - 0.75).abs() < 1e-12);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0], &[3.0]).unwrap(), 9.0);
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn embeddings_round_trip_through_text() {
        let em = EmbeddingMatrix {
            row_ids: vec![0, 1, 2],
            vectors: Mat::from_vec(
                3,
                4,
                vec![
                    0.125, -3.5e-7, 1.0 / 3.0, 2.0,
                    -0.75, 0.0, 9.25, -1.125,
                    0.5, 0.25, -0.0625, 7.0,
                ],
            ),
            beta: vec![0.6, 0.4],
            fingerprint: "abc123".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        export_embeddings(&em, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4); // header + 3 rows
        assert_eq!(lines[0], "row_id,z0,z1,z2,z3");
        assert_eq!(lines[1].split(',').count(), 5);

        let back = load_embeddings(&path).unwrap();
        assert_eq!(back.row_ids, em.row_ids);
        assert_eq!(back.beta, em.beta);
        for (a, b) in em.vectors.data.iter().zip(&back.vectors.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn ridge_recovers_a_linear_relationship() {
        // y = 2x − 1
        let x = Mat::from_vec(5, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = vec![-1.0, 1.0, 3.0, 5.0, 7.0];
        let rows: Vec<u32> = (0..5).collect();
        let w = fit_ridge(&x, &y, &rows);
        assert!((w[0] - 2.0).abs() < 1e-2);
        assert!((w[1] + 1.0).abs() < 1e-2);
    }

    #[test]
    fn logistic_separates_a_separable_set() {
        let x = Mat::from_vec(6, 1, vec![-2.0, -1.5, -1.0, 1.0, 1.5, 2.0]);
        let y = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let rows: Vec<u32> = (0..6).collect();
        let w = fit_logistic(&x, &y, &rows);
        let scores = predict_linear(&x, &w, &rows, true);
        assert_eq!(auc(&scores, &y).unwrap(), 1.0);
    }
}

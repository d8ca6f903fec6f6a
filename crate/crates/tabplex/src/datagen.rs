//! Synthetic benchmark data with a planted relational signal: the label
//! depends on the average feature of a row's hidden group, so a model that
//! aggregates along the group relation can recover it while a row-local
//! model cannot.

use crate::schema::{ColumnKind, ColumnSchema, SchemaFile};
use crate::table::{CatColumn, NumColumn, Table, TargetColumn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct PlantedConfig {
    pub n_rows: usize,
    pub group_size: usize,
    /// Strength of the group-mean effect on the label logit.
    pub signal_scale: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_rows: 2000,
            group_size: 20,
            signal_scale: 3.0,
            seed: 2024,
        }
    }
}

/// Build the planted-signal table. Column `group_a` carries the signal
/// (labels follow the group's standardized mean of `f`); `group_b` is an
/// equally-shaped random grouping with no bearing on the label. Both are id
/// columns: relation keys only, never model features.
pub fn planted_signal_table(cfg: &PlantedConfig) -> Table {
    let n = cfg.n_rows;
    let gs = cfg.group_size.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let assign_groups = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut g = vec![0usize; n];
        for (pos, &row) in order.iter().enumerate() {
            g[row] = pos / gs;
        }
        g
    };
    let group_a = assign_groups(&mut rng);
    let group_b = assign_groups(&mut rng);

    let f: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();

    let n_groups = n.div_ceil(gs);
    let mut sums = vec![0.0; n_groups];
    let mut counts = vec![0usize; n_groups];
    for row in 0..n {
        sums[group_a[row]] += f[row];
        counts[group_a[row]] += 1;
    }
    let y: Vec<f64> = (0..n)
        .map(|row| {
            let g = group_a[row];
            let mean = sums[g] / counts[g] as f64;
            let standardized = mean * (counts[g] as f64).sqrt();
            let p = crate::linalg::sigmoid(cfg.signal_scale * standardized);
            if rng.gen::<f64>() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect();

    let schema = SchemaFile {
        delimiter: ",".into(),
        columns: vec![
            ColumnSchema {
                name: "group_a".into(),
                kind: ColumnKind::Id,
                usable_for_relations: true,
            },
            ColumnSchema {
                name: "group_b".into(),
                kind: ColumnKind::Id,
                usable_for_relations: true,
            },
            ColumnSchema {
                name: "f".into(),
                kind: ColumnKind::Numerical,
                usable_for_relations: true,
            },
            ColumnSchema {
                name: "label".into(),
                kind: ColumnKind::Target,
                usable_for_relations: false,
            },
        ],
    };
    Table {
        schema,
        n_rows: n,
        cat: vec![
            CatColumn {
                name: "group_a".into(),
                kind: ColumnKind::Id,
                raw: group_a.iter().map(|g| Some(format!("a{g}"))).collect(),
                ids: None,
            },
            CatColumn {
                name: "group_b".into(),
                kind: ColumnKind::Id,
                raw: group_b.iter().map(|g| Some(format!("b{g}"))).collect(),
                ids: None,
            },
        ],
        num: vec![NumColumn {
            name: "f".into(),
            raw: f,
            missing: vec![false; n],
            normalized: None,
        }],
        timestamp: None,
        target: TargetColumn {
            name: "label".into(),
            values: y,
        },
    }
}

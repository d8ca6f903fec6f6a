//! Property tests for the data pipeline, the metrics, and numeric safety of
//! the model under extreme parameters.

mod common;

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tabplex::eval::{auc, mse};
use tabplex::graph::{assemble, EdgeSet};
use tabplex::linalg::Mat;
use tabplex::model::{forward, Mode, Task};
use tabplex::params::{AggKind, ModelDims, Params};
use tabplex::schema::{ColumnKind, ColumnSchema, SchemaFile};
use tabplex::table::{
    compute_norm_stats, encode_categorical_ids, impute, normalize_numeric, temporal_split,
    CatColumn, FeatureMatrix, NumColumn, Table, TargetColumn, TsColumn,
};
use tabplex::train::loss;

fn table_from(cat: Vec<Option<String>>, num: Vec<Option<f64>>, ts: Option<Vec<f64>>) -> Table {
    let n = cat.len();
    let mut columns = vec![
        ColumnSchema {
            name: "c".into(),
            kind: ColumnKind::Categorical,
            usable_for_relations: true,
        },
        ColumnSchema {
            name: "x".into(),
            kind: ColumnKind::Numerical,
            usable_for_relations: true,
        },
    ];
    if ts.is_some() {
        columns.push(ColumnSchema {
            name: "t".into(),
            kind: ColumnKind::Timestamp,
            usable_for_relations: false,
        });
    }
    columns.push(ColumnSchema {
        name: "y".into(),
        kind: ColumnKind::Target,
        usable_for_relations: false,
    });
    Table {
        schema: SchemaFile {
            delimiter: ",".into(),
            columns,
        },
        n_rows: n,
        cat: vec![CatColumn {
            name: "c".into(),
            kind: ColumnKind::Categorical,
            raw: cat,
            ids: None,
        }],
        num: vec![NumColumn {
            name: "x".into(),
            raw: num.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            missing: num.iter().map(|v| v.is_none()).collect(),
            normalized: None,
        }],
        timestamp: ts.map(|values| TsColumn {
            name: "t".into(),
            values,
        }),
        target: TargetColumn {
            name: "y".into(),
            values: vec![0.0; n],
        },
    }
}

fn cat_value() -> impl Strategy<Value = Option<String>> {
    prop_oneof![
        3 => prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(|s| Some(s.to_string())),
        1 => Just(None),
    ]
}

fn num_value() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![
        3 => (-1e3f64..1e3).prop_map(Some),
        1 => Just(None),
    ]
}

proptest! {
    #[test]
    fn impute_then_normalize_is_idempotent(
        cat in prop::collection::vec(cat_value(), 2..40),
        num in prop::collection::vec(num_value(), 2..40),
    ) {
        let n = cat.len().min(num.len());
        let t = table_from(cat[..n].to_vec(), num[..n].to_vec(), None);
        let t = impute(t);
        let (t1, stats1) = normalize_numeric(t, None);
        // run the same stages again on the output
        let t2 = impute(t1.clone());
        let (t2, stats2) = normalize_numeric(t2, None);
        prop_assert_eq!(t1.num[0].raw.clone(), t2.num[0].raw.clone());
        prop_assert_eq!(
            t1.num[0].normalized.clone().unwrap(),
            t2.num[0].normalized.clone().unwrap()
        );
        prop_assert_eq!(stats1.columns[0].mean.to_bits(), stats2.columns[0].mean.to_bits());
        // normalized output is finite
        prop_assert!(t1.num[0].normalized.as_ref().unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn train_artifacts_keep_test_data_in_range(
        train_cat in prop::collection::vec(cat_value(), 2..30),
        test_cat in prop::collection::vec(
            prop_oneof![
                2 => prop::sample::select(vec!["a", "b", "zzz", "novel", "c"]).prop_map(|s| Some(s.to_string())),
                1 => Just(None),
            ],
            2..30
        ),
        train_num in prop::collection::vec(num_value(), 2..30),
        test_num in prop::collection::vec(num_value(), 2..30),
    ) {
        let n_train = train_cat.len().min(train_num.len());
        let n_test = test_cat.len().min(test_num.len());
        let train_t = impute(table_from(train_cat[..n_train].to_vec(), train_num[..n_train].to_vec(), None));
        let stats = compute_norm_stats(&train_t, None);
        let (_, vocab) = encode_categorical_ids(train_t, None);

        let test_t = impute(table_from(test_cat[..n_test].to_vec(), test_num[..n_test].to_vec(), None));
        let (test_t, _) = normalize_numeric(test_t, Some(stats));
        let (test_t, vocab) = encode_categorical_ids(test_t, Some(vocab));

        let size = vocab.columns[0].size() as u32;
        for &id in test_t.cat[0].ids.as_ref().unwrap() {
            prop_assert!(id < size);
        }
        for &v in test_t.num[0].normalized.as_ref().unwrap() {
            prop_assert!(v.is_finite());
        }
    }

    #[test]
    fn temporal_split_never_trains_on_the_future(
        ts in prop::collection::vec(0i64..50, 3..60),
        ratio in 0.05f64..0.9,
    ) {
        let ts: Vec<f64> = ts.iter().map(|&v| v as f64).collect();
        let t = table_from(
            vec![Some("a".into()); ts.len()],
            vec![Some(0.0); ts.len()],
            Some(ts.clone()),
        );
        let s = temporal_split(&t, ratio, true, 0).unwrap();
        prop_assert_eq!(s.valid.len(), (ratio * ts.len() as f64).ceil() as usize);
        let max_train = s.train.iter().map(|&i| ts[i as usize]).fold(f64::MIN, f64::max);
        let min_valid = s.valid.iter().map(|&i| ts[i as usize]).fold(f64::MAX, f64::min);
        prop_assert!(s.train.is_empty() || max_train <= min_valid);
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms(
        scores in prop::collection::vec(-10.0f64..10.0, 4..60),
        flips in prop::collection::vec(any::<bool>(), 4..60),
    ) {
        let n = scores.len().min(flips.len());
        let scores = &scores[..n];
        let labels: Vec<f64> = flips[..n].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        prop_assume!(labels.iter().any(|&l| l == 1.0) && labels.iter().any(|&l| l == 0.0));
        let base = auc(scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|&s| 3.0 * s + 7.0).collect();
        let logistic: Vec<f64> = scores.iter().map(|&s| 1.0 / (1.0 + (-s).exp())).collect();
        prop_assert!((auc(&affine, &labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((auc(&logistic, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn auc_of_negated_scores_complements(
        raw in prop::collection::vec(0u32..1000, 4..60),
        flips in prop::collection::vec(any::<bool>(), 4..60),
    ) {
        let n = raw.len().min(flips.len());
        // distinct-ish scores: keep only cases with no ties
        let scores: Vec<f64> = raw[..n].iter().map(|&v| v as f64).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
        let labels: Vec<f64> = flips[..n].iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        prop_assume!(labels.iter().any(|&l| l == 1.0) && labels.iter().any(|&l| l == 0.0));
        let a = auc(&scores, &labels).unwrap();
        let negated: Vec<f64> = scores.iter().map(|&s| -s).collect();
        let b = auc(&negated, &labels).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mse_is_a_symmetric_premetric(
        a in prop::collection::vec(-100.0f64..100.0, 1..40),
        b in prop::collection::vec(-100.0f64..100.0, 1..40),
    ) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let ab = mse(a, b).unwrap();
        let ba = mse(b, a).unwrap();
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(mse(a, a).unwrap(), 0.0);
        if ab == 0.0 {
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn encoder_matches_a_straight_line_reimplementation() {
    // two categorical columns, three numeric features, hidden width eight
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for trial in 0..20 {
        let dims = ModelDims::standard(vec![6, 9], 3, 8, 1 + trial % 3, 1, 1, AggKind::Mean);
        let params = Params::init(dims, 1000 + trial as u64);
        let cat = [rng.gen_range(0..6u32), rng.gen_range(0..9u32)];
        let num: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let fast = tabplex::encoder::encode(&cat, &num, &params).unwrap();
        let slow = common::oracle::dense_encode(&cat, &num, &params);
        assert_eq!(fast.len(), 8);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-6, "trial {trial}: {a} vs {b}");
        }
    }
}

#[test]
fn zero_params_give_exactly_ln_two_loss() {
    let dims = ModelDims::standard(vec![3], 2, 8, 2, 1, 2, AggKind::Attention);
    let params = Params::zeros(dims);
    let n = 16usize; // power of two keeps the mean exact
    let fm = FeatureMatrix {
        n_rows: n,
        cat_ids: vec![vec![0; n]],
        cat_vocab_sizes: vec![3],
        num: Mat::zeros(n, 2),
    };
    let graph = assemble(n, vec![EdgeSet::new("r", vec![(0, 1), (2, 3)], true)]).unwrap();
    let trace = forward(&graph, &fm, &params, Task::Classification, Mode::Eval { frozen_beta: None }).unwrap();
    assert!(trace.yhat.iter().all(|&v| v == 0.5));
    let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let l = loss(&y, &trace.yhat, Task::Classification).unwrap();
    assert_eq!(l.to_bits(), std::f64::consts::LN_2.to_bits());
}

#[test]
fn forward_stays_finite_under_exploded_parameters() {
    // large weights saturate the softmax inputs; max-subtraction must keep
    // every output finite
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for scale in [1.0, 10.0, 100.0, 1000.0] {
        let dims = ModelDims::standard(vec![4], 2, 8, 2, 2, 2, AggKind::Attention);
        let mut params = Params::init(dims, 3);
        for v in params.data.iter_mut() {
            *v *= scale;
        }
        let n = 12;
        let fm = FeatureMatrix {
            n_rows: n,
            cat_ids: vec![(0..n).map(|_| rng.gen_range(0..4u32)).collect()],
            cat_vocab_sizes: vec![4],
            num: Mat::from_vec(n, 2, (0..n * 2).map(|_| rng.gen_range(-3.0..3.0)).collect()),
        };
        let mut pairs = Vec::new();
        for u in 0..n as u32 {
            for v in 0..n as u32 {
                if u != v && rng.gen::<f64>() < 0.2 {
                    pairs.push((u, v));
                }
            }
        }
        let graph = assemble(
            n,
            vec![
                EdgeSet::new("a", pairs.clone(), true),
                EdgeSet::new("b", pairs.into_iter().map(|(u, v)| (v, u)).collect(), true),
            ],
        )
        .unwrap();
        match forward(&graph, &fm, &params, Task::Classification, Mode::Eval { frozen_beta: None }) {
            Ok(trace) => {
                assert!(trace.yhat.iter().all(|v| v.is_finite()));
                assert!((trace.beta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            Err(e) => panic!("scale {scale}: {e}"),
        }
    }
}

#[test]
fn repeated_loads_assign_identical_row_ids() {
    use std::io::Write;
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(
        f,
        "c,x,y\na,1,0\nb,2,1\na,3,0\nc,,1\n,5,0\n"
    )
    .unwrap();
    let schema = SchemaFile {
        delimiter: ",".into(),
        columns: vec![
            ColumnSchema { name: "c".into(), kind: ColumnKind::Categorical, usable_for_relations: true },
            ColumnSchema { name: "x".into(), kind: ColumnKind::Numerical, usable_for_relations: true },
            ColumnSchema { name: "y".into(), kind: ColumnKind::Target, usable_for_relations: false },
        ],
    };
    let a = tabplex::table::load_table(f.path(), &schema).unwrap();
    let b = tabplex::table::load_table(f.path(), &schema).unwrap();
    assert_eq!(a.cat[0].raw, b.cat[0].raw);
    assert_eq!(a.target.values, b.target.values);
    let (ea, va) = encode_categorical_ids(impute(a), None);
    let (eb, vb) = encode_categorical_ids(impute(b), None);
    assert_eq!(ea.cat[0].ids, eb.cat[0].ids);
    assert_eq!(va.columns[0].values, vb.columns[0].values);
}

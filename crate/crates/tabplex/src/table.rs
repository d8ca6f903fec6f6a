//! Loading delimited files under a schema, imputation, normalization,
//! id assignment for categorical values, and temporally-aware splits.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::schema::{ColumnKind, SchemaFile};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

/// Internal token categorical imputation substitutes for a missing cell.
/// Contains NUL bytes so it cannot collide with real data.
pub const MISSING_SENTINEL: &str = "\u{0}missing\u{0}";

fn is_missing_marker(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty()
        || t.eq_ignore_ascii_case("na")
        || t.eq_ignore_ascii_case("n/a")
        || t.eq_ignore_ascii_case("nan")
        || t.eq_ignore_ascii_case("null")
        || t.eq_ignore_ascii_case("none")
}

/// Categorical-like column (categorical, text-as-categorical, id).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CatColumn {
    pub name: String,
    pub kind: ColumnKind,
    /// Raw string values; `None` marks a missing cell until imputation.
    pub raw: Vec<Option<String>>,
    /// Dense ids, present after `encode_categorical_ids`.
    pub ids: Option<Vec<u32>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NumColumn {
    pub name: String,
    /// Parsed values; missing cells hold NaN until imputation, 0.0 after.
    pub raw: Vec<f64>,
    /// Which cells were originally missing. Kept so relation extraction can
    /// refuse to connect rows on imputed values.
    pub missing: Vec<bool>,
    /// z-scored values, present after `normalize_numeric`.
    pub normalized: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TsColumn {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TargetColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// Columnar sample store. Row ids are the dense indexes `0..n_rows`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Table {
    pub schema: SchemaFile,
    pub n_rows: usize,
    pub cat: Vec<CatColumn>,
    pub num: Vec<NumColumn>,
    pub timestamp: Option<TsColumn>,
    pub target: TargetColumn,
}

impl Table {
    pub fn cat_column(&self, name: &str) -> Option<&CatColumn> {
        self.cat.iter().find(|c| c.name == name)
    }

    pub fn num_column(&self, name: &str) -> Option<&NumColumn> {
        self.num.iter().find(|c| c.name == name)
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamp.as_ref().map(|t| t.values.as_slice())
    }
}

fn parse_timestamp(cell: &str) -> Option<f64> {
    let t = cell.trim();
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(t, fmt) {
            return Some(dt.and_utc().timestamp() as f64);
        }
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp() as f64);
    }
    None
}

/// Load a delimited file under `schema`. Rows keep file order; the header
/// must contain exactly the schema's column names (any order).
pub fn load_table(path: &Path, schema: &SchemaFile) -> Result<Table> {
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Validation(format!("cannot open data file {}: {e}", path.display()))
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .has_headers(true)
        .flexible(false)
        .from_reader(file);

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut header_pos: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if header_pos.insert(h.as_str(), i).is_some() {
            return Err(Error::Schema(format!("duplicate header column {h:?}")));
        }
    }
    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        match header_pos.get(col.name.as_str()) {
            Some(&i) => positions.push(i),
            None => {
                return Err(Error::Schema(format!(
                    "schema column {:?} not found in header {:?}",
                    col.name, headers
                )))
            }
        }
    }
    if headers.len() != schema.columns.len() {
        return Err(Error::Schema(format!(
            "header has {} columns but schema declares {}",
            headers.len(),
            schema.columns.len()
        )));
    }

    let mut cat: Vec<CatColumn> = Vec::new();
    let mut num: Vec<NumColumn> = Vec::new();
    let mut timestamp: Option<TsColumn> = None;
    let mut target = TargetColumn {
        name: schema.target_name().to_string(),
        values: Vec::new(),
    };
    for col in &schema.columns {
        match col.kind {
            k if k.is_categorical_like() => cat.push(CatColumn {
                name: col.name.clone(),
                kind: k,
                raw: Vec::new(),
                ids: None,
            }),
            ColumnKind::Numerical => num.push(NumColumn {
                name: col.name.clone(),
                raw: Vec::new(),
                missing: Vec::new(),
                normalized: None,
            }),
            ColumnKind::Timestamp => {
                timestamp = Some(TsColumn {
                    name: col.name.clone(),
                    values: Vec::new(),
                })
            }
            _ => {}
        }
    }

    let mut n_rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = row_idx + 1; // 1-based data row for error reporting
        let mut cat_i = 0usize;
        let mut num_i = 0usize;
        for (col, &pos) in schema.columns.iter().zip(&positions) {
            let cell = record.get(pos).unwrap_or("");
            match col.kind {
                k if k.is_categorical_like() => {
                    let v = if is_missing_marker(cell) {
                        None
                    } else {
                        Some(cell.trim().to_string())
                    };
                    cat[cat_i].raw.push(v);
                    cat_i += 1;
                }
                ColumnKind::Numerical => {
                    if is_missing_marker(cell) {
                        num[num_i].raw.push(f64::NAN);
                        num[num_i].missing.push(true);
                    } else {
                        let v = cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                            row: row_no,
                            column: col.name.clone(),
                            message: format!("cannot parse {cell:?} as a number"),
                        })?;
                        num[num_i].raw.push(v);
                        num[num_i].missing.push(false);
                    }
                    num_i += 1;
                }
                ColumnKind::Timestamp => {
                    if is_missing_marker(cell) {
                        return Err(Error::Parse {
                            row: row_no,
                            column: col.name.clone(),
                            message: "missing timestamp".into(),
                        });
                    }
                    let v = parse_timestamp(cell).ok_or_else(|| Error::Parse {
                        row: row_no,
                        column: col.name.clone(),
                        message: format!("cannot parse {cell:?} as a timestamp"),
                    })?;
                    timestamp.as_mut().unwrap().values.push(v);
                }
                ColumnKind::Target => {
                    if is_missing_marker(cell) {
                        return Err(Error::Parse {
                            row: row_no,
                            column: col.name.clone(),
                            message: "missing target value".into(),
                        });
                    }
                    let v = cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                        row: row_no,
                        column: col.name.clone(),
                        message: format!("cannot parse {cell:?} as a target value"),
                    })?;
                    target.values.push(v);
                }
                _ => unreachable!(),
            }
        }
        n_rows += 1;
    }

    Ok(Table {
        schema: schema.clone(),
        n_rows,
        cat,
        num,
        timestamp,
        target,
    })
}

/// Replace missing cells: categorical missing becomes the reserved missing
/// token, numerical missing becomes 0 (pre-normalization). Idempotent.
pub fn impute(mut table: Table) -> Table {
    for col in &mut table.cat {
        for v in &mut col.raw {
            if v.is_none() {
                *v = Some(MISSING_SENTINEL.to_string());
            }
        }
    }
    for col in &mut table.num {
        for v in &mut col.raw {
            if v.is_nan() {
                *v = 0.0;
            }
        }
    }
    table
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColStats {
    pub column: String,
    pub mean: f64,
    pub std: f64,
}

/// Per-column mean and population standard deviation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormStats {
    pub columns: Vec<ColStats>,
}

/// Compute normalization statistics over `rows` (all rows when `None`).
/// Call after `impute`.
pub fn compute_norm_stats(table: &Table, rows: Option<&[u32]>) -> NormStats {
    let idx: Vec<usize> = match rows {
        Some(r) => r.iter().map(|&i| i as usize).collect(),
        None => (0..table.n_rows).collect(),
    };
    let columns = table
        .num
        .iter()
        .map(|col| {
            let n = idx.len().max(1) as f64;
            let mean = idx.iter().map(|&i| col.raw[i]).sum::<f64>() / n;
            let var = idx.iter().map(|&i| (col.raw[i] - mean).powi(2)).sum::<f64>() / n;
            ColStats {
                column: col.name.clone(),
                mean,
                std: var.sqrt(),
            }
        })
        .collect();
    NormStats { columns }
}

/// z-score numerical columns. With `stats: None` the statistics are computed
/// from this table's rows; passing existing stats is the test-time path.
/// Zero-variance columns map to all-zero.
pub fn normalize_numeric(mut table: Table, stats: Option<NormStats>) -> (Table, NormStats) {
    let stats = stats.unwrap_or_else(|| compute_norm_stats(&table, None));
    assert_eq!(
        stats.columns.len(),
        table.num.len(),
        "normalization stats do not match the table's numerical columns"
    );
    for (col, st) in table.num.iter_mut().zip(&stats.columns) {
        let normalized = col
            .raw
            .iter()
            .map(|&v| if st.std > 0.0 { (v - st.mean) / st.std } else { 0.0 })
            .collect();
        col.normalized = Some(normalized);
    }
    (table, stats)
}

/// Value-to-id mapping for one categorical-like column. Real values take ids
/// `0..values.len()` in first-appearance order; two reserved ids follow.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnVocab {
    pub column: String,
    pub values: Vec<String>,
    pub missing_id: u32,
    pub unseen_id: u32,
}

impl ColumnVocab {
    pub fn size(&self) -> usize {
        self.values.len() + 2
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vocabulary {
    pub columns: Vec<ColumnVocab>,
}

impl Vocabulary {
    pub fn column(&self, name: &str) -> Option<&ColumnVocab> {
        self.columns.iter().find(|c| c.column == name)
    }
}

/// Assign dense ids to categorical-like columns. Builds the vocabulary from
/// the table when `vocab` is `None`; under a provided vocabulary, novel
/// values map to the reserved unseen id. Call after `impute`.
pub fn encode_categorical_ids(mut table: Table, vocab: Option<Vocabulary>) -> (Table, Vocabulary) {
    let vocab = vocab.unwrap_or_else(|| {
        let columns = table
            .cat
            .iter()
            .map(|col| {
                let mut values = Vec::new();
                let mut seen: HashMap<&str, u32> = HashMap::new();
                for v in col.raw.iter().flatten() {
                    if v != MISSING_SENTINEL && !seen.contains_key(v.as_str()) {
                        seen.insert(v.as_str(), values.len() as u32);
                        values.push(v.clone());
                    }
                }
                let missing_id = values.len() as u32;
                ColumnVocab {
                    column: col.name.clone(),
                    values,
                    missing_id,
                    unseen_id: missing_id + 1,
                }
            })
            .collect();
        Vocabulary { columns }
    });
    assert_eq!(
        vocab.columns.len(),
        table.cat.len(),
        "vocabulary does not match the table's categorical columns"
    );
    for (col, cv) in table.cat.iter_mut().zip(&vocab.columns) {
        let map: HashMap<&str, u32> = cv
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i as u32))
            .collect();
        let ids = col
            .raw
            .iter()
            .map(|v| match v {
                Some(s) if s == MISSING_SENTINEL => cv.missing_id,
                Some(s) => *map.get(s.as_str()).unwrap_or(&cv.unseen_id),
                None => cv.missing_id,
            })
            .collect();
        col.ids = Some(ids);
    }
    (table, vocab)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<u32>,
    pub valid: Vec<u32>,
}

/// Split rows into train and validation ids.
///
/// Temporal mode reserves the `⌈valid_ratio·n⌉` rows with the latest
/// timestamps for validation (boundary ties resolved deterministically by
/// row id, later rows preferred for validation). Non-temporal mode draws a
/// uniform sample under `seed`.
pub fn temporal_split(table: &Table, valid_ratio: f64, temporal: bool, seed: u64) -> Result<Splits> {
    if !(valid_ratio > 0.0 && valid_ratio < 1.0) {
        return Err(Error::Validation(format!(
            "valid_ratio must be in (0, 1), got {valid_ratio}"
        )));
    }
    let n = table.n_rows;
    let k = ((valid_ratio * n as f64).ceil() as usize).min(n);
    if temporal {
        let ts = table
            .timestamps()
            .ok_or_else(|| Error::Validation("temporal split requires a timestamp column".into()))?;
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by(|&a, &b| {
            ts[b as usize]
                .partial_cmp(&ts[a as usize])
                .unwrap()
                .then(b.cmp(&a))
        });
        let mut valid: Vec<u32> = order[..k].to_vec();
        let mut train: Vec<u32> = order[k..].to_vec();
        valid.sort_unstable();
        train.sort_unstable();
        Ok(Splits { train, valid })
    } else {
        let mut rows: Vec<u32> = (0..n as u32).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rows.shuffle(&mut rng);
        let mut valid: Vec<u32> = rows[..k].to_vec();
        let mut train: Vec<u32> = rows[k..].to_vec();
        valid.sort_unstable();
        train.sort_unstable();
        Ok(Splits { train, valid })
    }
}

/// The prepared, model-ready bundle an ingest run produces.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    pub table: Table,
    pub vocab: Vocabulary,
    pub stats: NormStats,
    pub splits: Splits,
    pub seed: u64,
}

/// Full ingestion pipeline: impute, split, normalize with train-row
/// statistics, and encode categorical ids over all rows (the graph is
/// transductive, so every row needs an embedding id).
///
/// When the table has a timestamp column it is also appended as a numerical
/// feature before normalization.
pub fn prepare(table: Table, valid_ratio: f64, temporal: Option<bool>, seed: u64) -> Result<Dataset> {
    let mut table = impute(table);
    if let Some(ts) = &table.timestamp {
        table.num.push(NumColumn {
            name: ts.name.clone(),
            raw: ts.values.clone(),
            missing: vec![false; ts.values.len()],
            normalized: None,
        });
    }
    let temporal = temporal.unwrap_or(table.timestamp.is_some());
    let splits = temporal_split(&table, valid_ratio, temporal, seed)?;
    let stats = compute_norm_stats(&table, Some(&splits.train));
    let (table, stats) = normalize_numeric(table, Some(stats));
    let (table, vocab) = encode_categorical_ids(table, None);
    Ok(Dataset {
        table,
        vocab,
        stats,
        splits,
        seed,
    })
}

/// Model-facing view of a prepared dataset: id vectors for featurized
/// categorical columns and a dense matrix of normalized numerical features.
#[derive(Clone, Debug)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub cat_ids: Vec<Vec<u32>>,
    pub cat_vocab_sizes: Vec<usize>,
    pub num: Mat,
}

impl FeatureMatrix {
    pub fn from_dataset(ds: &Dataset) -> FeatureMatrix {
        let mut cat_ids = Vec::new();
        let mut cat_vocab_sizes = Vec::new();
        for col in &ds.table.cat {
            if col.kind.is_featurized() {
                let ids = col.ids.clone().expect("dataset is encoded");
                let vocab = ds
                    .vocab
                    .column(&col.name)
                    .expect("vocabulary covers every categorical column");
                cat_ids.push(ids);
                cat_vocab_sizes.push(vocab.size());
            }
        }
        let n = ds.table.n_rows;
        let n_num = ds.table.num.len();
        let mut num = Mat::zeros(n, n_num);
        for (j, col) in ds.table.num.iter().enumerate() {
            let vals = col.normalized.as_ref().expect("dataset is normalized");
            for i in 0..n {
                num.set(i, j, vals[i]);
            }
        }
        FeatureMatrix {
            n_rows: n,
            cat_ids,
            cat_vocab_sizes,
            num,
        }
    }
}

//! Relation-aware prediction on flat tables.
//!
//! tabplex turns a delimited table into a directed multiplex graph — one
//! edge layer per declared row relation (same value, product of values,
//! numeric proximity, top-K similarity) — and trains an attention-based
//! network over it: mixed-type feature encoding, per-relation neighborhood
//! attention, attention-weighted fusion across relations, and a linear head
//! for classification or regression. Edges always point from earlier rows to
//! later ones when timestamps exist, so a row never aggregates information
//! from its future.
//!
//! The crate ships a CLI (`tabplex`) that runs the pipeline as separate
//! stages with file handoffs: `ingest`, `build-graph`, `train`, `predict`,
//! `export-embeddings`, `evaluate`, and `tune`.

pub mod cli;
pub mod datagen;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod manifest;
pub mod model;
pub mod params;
pub mod schema;
pub mod table;
pub mod train;

pub use error::{Error, Result};

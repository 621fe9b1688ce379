//! Benchmark engine and webly-supervised metric learning for human-centric
//! visual relationship detection.
//!
//! The crate is organised as a pipeline:
//!
//! * [`relmodel`] – boxes, triplets, vocabularies and annotation records.
//! * [`geometry`] – IoU, per-category NMS and human/object pair generation.
//! * [`ingest`] – predicate normalisation, object merging, human subtyping,
//!   split construction and dataset statistics.
//! * [`metric`] – the two-branch embedding model, the lifted structured loss
//!   with analytic gradients, and the training loop.
//! * [`webfilter`] – attention-pooled group training used to score and prune
//!   noisy web samples.
//! * [`infer`] – exact k-NN retrieval, category-constrained predicate ranking
//!   and the class-mean cosine baseline.
//! * [`evalbench`] – Recall@K for predicate, phrase and relationship detection.
//! * [`featstore`] – the binary `HCVF` feature store codec.
//! * [`synth`] – seeded synthetic corpora used by tests and the bundled fixture.

pub mod error;
pub mod evalbench;
pub mod featstore;
pub mod geometry;
pub mod infer;
pub mod ingest;
pub mod metric;
pub mod relmodel;
pub mod synth;
pub mod webfilter;

pub use error::{Error, Result};
pub use relmodel::{BoundingBox, HumanSubtype, RelType, RelationshipTriplet, Vocabulary};

//! Library half of the `sgt` harness: schema parsing, CSV ingestion,
//! prequential evaluation, and MIL cross-validation. The binary in `main.rs`
//! is a thin argument layer over these modules, and integration tests drive
//! them directly.

pub mod eval;
pub mod ingest;
pub mod milcv;
pub mod schema;

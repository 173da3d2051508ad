//! Mixed-type tabular data: schemas, CSV ingestion, encoding, subsampling.

mod encoder;
mod schema;

pub use encoder::{fit_encoder, EncodedMatrix, Encoder, Group, GroupKind, GroupMap};
pub use schema::{
    carve_indices, load_schema, load_table, sample_indices, subsample, write_table, Cell,
    ColumnKind, ColumnSpec, RawTable, TableSchema, MISSING_CATEGORY,
};

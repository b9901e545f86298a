//! Transaction ingestion, the sparse interaction matrix, the leave-one-out
//! split, and triplet sampling.

mod ingest;
mod matrix;
mod split;
mod triplet;

pub use ingest::{ingest_csv, CsvSchema, IngestReport};
pub use matrix::{build_matrix, write_csv, InteractionMatrix, InteractionRecord, NO_TIMESTAMP};
pub use split::{leave_one_out_split, LeaveOneOutSplit};
pub use triplet::{sample_triplets, Triplet};

//! Labelled image sets, their file formats, and the seeded choices made on
//! them (splits, prototypes, batch order).

mod dataset;
mod manifest;
pub mod pnm;
mod sampling;
mod synthetic;
pub mod tns;

pub use dataset::Dataset;
pub use manifest::load_manifest;
pub use pnm::{load_pnm, parse_pnm};
pub use sampling::{batches, select_prototypes, stratified_split, Batch, PrototypeSet, Split, SplitSpec};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use tns::{decode_tns, encode_tns, load_tns, save_tns, TensorMap};

//! File formats: image containers, checkpoints, CSV tables and patch extraction.

pub mod checkpoint;
pub mod container;
pub mod csv;
pub mod header;
pub mod patches;

pub use checkpoint::{checkpoint_dtype, decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use container::{decode_hsi, decode_msi, encode_hsi, encode_msi, read_hsi, read_msi, write_hsi, write_msi};
pub use patches::{extract_patches, patch_windows};

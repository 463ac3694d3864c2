//! On-disk formats: raw images, dataset manifests, checkpoints and the
//! flat training config.

mod checkpoint;
mod config;
mod image;
mod manifest;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{config_to_text, parse_config};
pub use image::{decode_image, encode_image, read_image, write_image, IMAGE_HEADER_LEN, IMAGE_MAGIC};
pub use manifest::{
    image_file_name, manifest_to_string, parse_manifest, read_dataset, write_dataset, Dataset, DatasetManifest, ImageRecord,
    MANIFEST_FILE, MANIFEST_VERSION,
};

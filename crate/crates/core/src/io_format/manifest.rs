use std::collections::HashSet;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use super::image::{read_image, write_image};
use crate::color_math::{CheckerColors, IlluminantRGB, PixelRect, CHECKER_PATCHES};
use crate::error::{Error, Result};
use crate::scene_synth::{IlluminantParams, LabeledImage, SensorParams, SynthConfig, SynthDataset};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    /// Path relative to the dataset directory.
    pub file: String,
    pub scene_id: usize,
    pub illuminant_id: usize,
    pub illuminant: [f64; 3],
    pub checker: Vec<[f64; 3]>,
    pub checker_region: PixelRect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: Option<u64>,
    pub sensor: SensorParams,
    pub synth_config: Option<SynthConfig>,
    /// Generating illuminants, indexed by `illuminant_id`; empty for ingested data.
    pub illuminants: Vec<IlluminantParams>,
    pub images: Vec<ImageRecord>,
}

/// A dataset loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<LabeledImage>,
}

fn manifest_err(msg: impl Into<String>) -> Error {
    Error::Manifest(msg.into())
}

pub fn image_file_name(index: usize) -> String {
    format!("images/scene_{index:05}.clccimg")
}

pub fn manifest_to_string(m: &DatasetManifest) -> Result<String> {
    let mut s = serde_json::to_string_pretty(m)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == MANIFEST_VERSION as u64 => {}
        Some(v) => return Err(Error::UnsupportedVersion(format!("manifest version {v}"))),
        None => return Err(manifest_err("missing format_version")),
    }
    Ok(serde_json::from_value(value)?)
}

/// Writes every image plus `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, ds: &SynthDataset) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir.join("images")).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(ds.images.len());
    for (i, s) in ds.images.iter().enumerate() {
        let file = image_file_name(i);
        write_image(&dir.join(&file), &s.image)?;
        records.push(ImageRecord {
            file,
            scene_id: s.scene_id,
            illuminant_id: s.illuminant_id,
            illuminant: s.illuminant.rgb(),
            checker: s.checker.rows().to_vec(),
            checker_region: s.checker_region,
        });
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        seed: Some(ds.seed),
        sensor: ds.sensor,
        synth_config: Some(ds.config),
        illuminants: ds.illuminants.clone(),
        images: records,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest_to_string(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn is_safe_relative(file: &str) -> bool {
    let p = Path::new(file);
    !file.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_)))
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = parse_manifest(&text)?;
    let mut seen = HashSet::new();
    let mut images = Vec::with_capacity(manifest.images.len());
    for (i, r) in manifest.images.iter().enumerate() {
        if !is_safe_relative(&r.file) {
            return Err(manifest_err(format!("image {i}: file path {:?} must be relative", r.file)));
        }
        if !seen.insert(r.scene_id) {
            return Err(manifest_err(format!("image {i}: duplicate scene_id {}", r.scene_id)));
        }
        if !manifest.illuminants.is_empty() && r.illuminant_id >= manifest.illuminants.len() {
            return Err(manifest_err(format!("image {i}: illuminant_id {} out of range", r.illuminant_id)));
        }
        if r.checker.len() != CHECKER_PATCHES {
            return Err(manifest_err(format!("image {i}: checker needs {CHECKER_PATCHES} rows, found {}", r.checker.len())));
        }
        let image = read_image(&dir.join(&r.file))?;
        let reg = r.checker_region;
        if reg.x + reg.width > image.width() || reg.y + reg.height > image.height() {
            return Err(manifest_err(format!("image {i}: checker region exceeds the image")));
        }
        let rows: [[f64; 3]; CHECKER_PATCHES] = std::array::from_fn(|k| r.checker[k]);
        let checker = CheckerColors::new(rows).map_err(|e| manifest_err(format!("image {i}: {e}")))?;
        let illuminant = IlluminantRGB::new(r.illuminant).map_err(|e| manifest_err(format!("image {i}: {e}")))?;
        images.push(LabeledImage {
            image,
            illuminant,
            checker,
            checker_region: reg,
            scene_id: r.scene_id,
            illuminant_id: r.illuminant_id,
        });
    }
    Ok(Dataset { manifest, images })
}

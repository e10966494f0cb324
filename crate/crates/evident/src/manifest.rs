//! Dataset directories: one `manifest.json` plus DARR files per sample.

use std::fs;
use std::path::{Path, PathBuf};

use evident_core::datagen::SceneSample;
use evident_core::grid::{Mask, PointMap, ScalarMap};
use serde::{Deserialize, Serialize};

use crate::darr::{read_array, read_dims, write_array};
use crate::error::{EvidentError, Result};

pub const DATA_SCHEMA: &str = "evident-data-v1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub features: String,
    pub gt: String,
    pub base_pred: String,
    pub mask: String,
    pub sigma: String,
    pub hard_mask: String,
}

impl ManifestEntry {
    /// `(role, relative path, expected channels)`; `None` = any channel count.
    fn files(&self) -> [(&'static str, &str, Option<usize>); 6] {
        [
            ("features", &self.features, None),
            ("gt", &self.gt, Some(3)),
            ("base_pred", &self.base_pred, Some(3)),
            ("mask", &self.mask, Some(1)),
            ("sigma", &self.sigma, Some(1)),
            ("hard_mask", &self.hard_mask, Some(1)),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub samples: Vec<ManifestEntry>,
}

/// A loaded dataset, in manifest order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub ids: Vec<String>,
    pub samples: Vec<SceneSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| EvidentError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| EvidentError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| EvidentError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| EvidentError::io(path, e))
}

/// Parses `dir/manifest.json` and checks that every referenced file exists
/// and that all of a sample's arrays share `H x W`.
pub fn manifest(dir: &Path) -> Result<Manifest> {
    let m: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    if m.schema != DATA_SCHEMA {
        return Err(EvidentError::Incompatible(format!(
            "{}: schema '{}' (expected '{DATA_SCHEMA}')",
            dir.join(MANIFEST_FILE).display(),
            m.schema
        )));
    }
    for entry in &m.samples {
        let err = |detail: String| EvidentError::Manifest {
            sample: entry.id.clone(),
            detail,
        };
        let mut reference: Option<(&str, usize, usize)> = None;
        for (role, rel, channels) in entry.files() {
            let path = dir.join(rel);
            if !path.is_file() {
                return Err(err(format!("missing {role} file {}", path.display())));
            }
            let (h, w, c) = read_dims(&path)?;
            if let Some(want) = channels {
                if c != want {
                    return Err(err(format!("{role} file {rel} has {c} channels, expected {want}")));
                }
            }
            match reference {
                None => reference = Some((rel, h, w)),
                Some((first, rh, rw)) if (rh, rw) != (h, w) => {
                    return Err(err(format!("{first} is {rh}x{rw} but {rel} is {h}x{w}")));
                }
                _ => {}
            }
        }
    }
    Ok(m)
}

fn to_err(id: &str) -> impl Fn(evident_core::CoreError) -> EvidentError + '_ {
    move |e| EvidentError::Manifest {
        sample: id.to_string(),
        detail: e.to_string(),
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let m = manifest(dir)?;
    let mut ids = Vec::with_capacity(m.samples.len());
    let mut samples = Vec::with_capacity(m.samples.len());
    for e in &m.samples {
        let conv = to_err(&e.id);
        let sample = SceneSample {
            features: read_array(&dir.join(&e.features))?,
            gt: PointMap::from_grid(&read_array(&dir.join(&e.gt))?).map_err(&conv)?,
            base_pred: PointMap::from_grid(&read_array(&dir.join(&e.base_pred))?).map_err(&conv)?,
            mask: Mask::from_grid(&read_array(&dir.join(&e.mask))?).map_err(&conv)?,
            noise_sigma_map: ScalarMap::from_grid(&read_array(&dir.join(&e.sigma))?).map_err(&conv)?,
            hard_mask: Mask::from_grid(&read_array(&dir.join(&e.hard_mask))?).map_err(&conv)?,
        };
        sample.validate().map_err(&conv)?;
        ids.push(e.id.clone());
        samples.push(sample);
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        ids,
        samples,
    })
}

/// Writes samples as `<id>_<role>.darr` files plus the manifest.
pub fn write_dataset(dir: &Path, ids: &[String], samples: &[SceneSample]) -> Result<()> {
    if ids.len() != samples.len() {
        return Err(EvidentError::Config(format!(
            "{} ids for {} samples",
            ids.len(),
            samples.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| EvidentError::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (id, s) in ids.iter().zip(samples) {
        let name = |role: &str| format!("{id}_{role}.darr");
        let entry = ManifestEntry {
            id: id.clone(),
            features: name("features"),
            gt: name("gt"),
            base_pred: name("base_pred"),
            mask: name("mask"),
            sigma: name("sigma"),
            hard_mask: name("hard_mask"),
        };
        write_array(&dir.join(&entry.features), &s.features)?;
        write_array(&dir.join(&entry.gt), &s.gt.to_grid())?;
        write_array(&dir.join(&entry.base_pred), &s.base_pred.to_grid())?;
        write_array(&dir.join(&entry.mask), &s.mask.to_grid())?;
        write_array(&dir.join(&entry.sigma), &s.noise_sigma_map.to_grid())?;
        write_array(&dir.join(&entry.hard_mask), &s.hard_mask.to_grid())?;
        entries.push(entry);
    }
    write_json(
        &dir.join(MANIFEST_FILE),
        &Manifest {
            schema: DATA_SCHEMA.into(),
            samples: entries,
        },
    )
}

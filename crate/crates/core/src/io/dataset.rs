//! Dataset persistence: `images.mrc`, optional `clean.mrc` and a JSON
//! sidecar with groups, filters, noise model and simulation settings.
//! Also reads and writes standalone CTF parameter files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ctf::{CtfParams, Filter};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::mrc::{read_mrc, write_mrc, MrcStack};
use crate::simulate::{Dataset, NoiseModel, SimulationConfig};

pub const SIDECAR_VERSION: u32 = 1;
pub const IMAGES_FILE: &str = "images.mrc";
pub const CLEAN_FILE: &str = "clean.mrc";
pub const SIDECAR_FILE: &str = "dataset.json";

/// One entry of a CTF parameter file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtfRecord {
    pub group: usize,
    #[serde(flatten)]
    pub params: CtfParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u32,
    pub grid_size: usize,
    pub pixel_size: f64,
    pub num_images: usize,
    pub group_of: Vec<usize>,
    pub filters: Vec<Filter>,
    pub noise: NoiseModel,
    pub simulation: Option<SimulationConfig>,
    pub measured_snr: Option<f64>,
    pub has_clean: bool,
    /// Free-form settings of the producing run.
    #[serde(default)]
    pub run_config: serde_json::Value,
}

pub fn write_dataset(dir: impl AsRef<Path>, d: &Dataset, run_config: serde_json::Value) -> Result<()> {
    d.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let stack = MrcStack::from_images(&d.images)?.with_label("noisy images");
    write_mrc(&stack, dir.join(IMAGES_FILE))?;
    if let Some(clean) = &d.clean {
        write_mrc(&MrcStack::from_images(clean)?.with_label("clean images"), dir.join(CLEAN_FILE))?;
    }
    let first = d.images.first().ok_or_else(|| Error::InvalidParameter("empty dataset".into()))?;
    let sidecar = Sidecar {
        version: SIDECAR_VERSION,
        grid_size: first.size(),
        pixel_size: first.pixel_size(),
        num_images: d.images.len(),
        group_of: d.group_of.clone(),
        filters: d.filters.clone(),
        noise: d.noise,
        simulation: d.config,
        measured_snr: d.measured_snr,
        has_clean: d.clean.is_some(),
        run_config,
    };
    fs::write(dir.join(SIDECAR_FILE), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_sidecar(dir: impl AsRef<Path>) -> Result<Sidecar> {
    let text = fs::read_to_string(dir.as_ref().join(SIDECAR_FILE))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
    if sidecar.version != SIDECAR_VERSION {
        return Err(Error::VersionMismatch {
            expected: SIDECAR_VERSION,
            found: sidecar.version,
        });
    }
    Ok(sidecar)
}

/// Reads a dataset written by [`write_dataset`]. Pixel values come back as
/// the stored 32-bit floats.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let sidecar = read_sidecar(dir)?;
    let images = with_pixel_size(read_mrc(dir.join(IMAGES_FILE))?.to_images(), sidecar.pixel_size)?;
    if images.len() != sidecar.num_images || images.first().map(|i| i.size()) != Some(sidecar.grid_size) {
        return Err(Error::Schema("image stack does not match sidecar".into()));
    }
    let clean = if sidecar.has_clean {
        Some(with_pixel_size(
            read_mrc(dir.join(CLEAN_FILE))?.to_images(),
            sidecar.pixel_size,
        )?)
    } else {
        None
    };
    let d = Dataset {
        images,
        group_of: sidecar.group_of,
        filters: sidecar.filters,
        noise: sidecar.noise,
        clean,
        config: sidecar.simulation,
        measured_snr: sidecar.measured_snr,
    };
    d.validate()?;
    Ok(d)
}

/// The MRC header stores the pixel size as `f32`; the sidecar keeps it exact.
fn with_pixel_size(images: Vec<Image>, pixel_size: f64) -> Result<Vec<Image>> {
    images
        .into_iter()
        .map(|im| Image::from_vec(im.size(), pixel_size, im.into_vec()))
        .collect()
}

/// Reads a CTF file (JSON array of records keyed by `group`); groups must be
/// exactly `0..M`.
pub fn read_ctf_file(path: impl AsRef<Path>) -> Result<Vec<CtfParams>> {
    let text = fs::read_to_string(path)?;
    let mut records: Vec<CtfRecord> =
        serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
    records.sort_by_key(|r| r.group);
    for (g, r) in records.iter().enumerate() {
        if r.group != g {
            return Err(Error::Schema(format!("CTF groups must be 0..M, found {}", r.group)));
        }
        r.params.validate()?;
    }
    Ok(records.into_iter().map(|r| r.params).collect())
}

pub fn write_ctf_file(path: impl AsRef<Path>, params: &[CtfParams]) -> Result<()> {
    let records: Vec<CtfRecord> = params
        .iter()
        .enumerate()
        .map(|(group, &params)| CtfRecord { group, params })
        .collect();
    fs::write(path, serde_json::to_string_pretty(&records)?)?;
    Ok(())
}

//! Dataset manifest: CSV with header `id,tau_years,cohort,fold,image_path`,
//! image paths relative to the manifest's directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{raster, Subject};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub tau_years: f64,
    pub cohort: String,
    pub fold: usize,
    pub image_path: String,
}

/// Write rasters into `dir/images/` and the manifest to `dir/manifest.csv`.
pub fn save_dataset(dir: &Path, subjects: &[Subject]) -> Result<std::path::PathBuf> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images)?;
    let manifest_path = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest_path)?;
    for s in subjects {
        let rel = format!("images/{}.rast", s.id);
        raster::write_raster(&dir.join(&rel), &s.image)?;
        w.serialize(ManifestRow {
            id: s.id.clone(),
            tau_years: s.tau,
            cohort: s.cohort.clone(),
            fold: s.fold,
            image_path: rel,
        })?;
    }
    w.flush()?;
    Ok(manifest_path)
}

/// Read only the manifest rows (ids, targets, cohorts, folds), no rasters.
pub fn read_rows(manifest_path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(manifest_path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn load_dataset(manifest_path: &Path) -> Result<Vec<Subject>> {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut r = csv::Reader::from_path(manifest_path)?;
    let mut subjects = Vec::new();
    for rec in r.deserialize() {
        let row: ManifestRow = rec?;
        let image = raster::read_raster(&base.join(&row.image_path))?;
        subjects.push(Subject {
            id: row.id,
            tau: row.tau_years,
            cohort: row.cohort,
            fold: row.fold,
            image,
        });
    }
    if subjects.is_empty() {
        return Err(Error::Format(format!(
            "{}: empty manifest",
            manifest_path.display()
        )));
    }
    Ok(subjects)
}

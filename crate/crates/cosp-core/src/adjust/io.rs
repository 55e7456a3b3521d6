//! CSV observation files.
//!
//! One row per image measurement:
//! `image_id,col,row,lon,lat,h,sigma_px,role,tie_id`.
//! Control and check rows carry geodetic ground coordinates; tie rows leave
//! them empty and carry a `tie_id` instead. Rows sharing a `tie_id` form one
//! tie point.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdjustError, GcpRecord, GcpRole, TiePoint};
use crate::geo::{geodetic_to_ecef, GeodeticPoint};
use crate::pancam::PixelPoint;

#[derive(Debug, Serialize, Deserialize)]
struct ObsRow {
    image_id: String,
    col: f64,
    row: f64,
    lon: Option<f64>,
    lat: Option<f64>,
    h: Option<f64>,
    sigma_px: f64,
    role: String,
    tie_id: Option<String>,
}

/// Read GCP and tie-point observations from a CSV file.
pub fn read_observations_csv(
    path: impl AsRef<Path>,
) -> Result<(Vec<GcpRecord>, Vec<TiePoint>), AdjustError> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut gcps = Vec::new();
    // BTreeMap keeps tie ordering independent of row order hashing.
    let mut ties: BTreeMap<String, TiePoint> = BTreeMap::new();
    for (i, row) in reader.deserialize::<ObsRow>().enumerate() {
        let row = row?;
        let line = i + 2; // header is line 1
        let pixel = PixelPoint { col: row.col, row: row.row };
        if !(row.sigma_px.is_finite() && row.sigma_px > 0.0) {
            return Err(AdjustError::Format(format!(
                "line {line}: sigma_px must be positive, got {}",
                row.sigma_px
            )));
        }
        match row.role.as_str() {
            "control" | "check" => {
                let (lon, lat, h) = match (row.lon, row.lat, row.h) {
                    (Some(lon), Some(lat), Some(h)) => (lon, lat, h),
                    _ => {
                        return Err(AdjustError::Format(format!(
                            "line {line}: {} rows need lon, lat and h",
                            row.role
                        )))
                    }
                };
                let role = if row.role == "control" { GcpRole::Control } else { GcpRole::Check };
                gcps.push(GcpRecord {
                    image_id: row.image_id,
                    pixel,
                    ground: geodetic_to_ecef(GeodeticPoint::new(lon, lat, h)),
                    sigma_px: row.sigma_px,
                    role,
                });
            }
            "tie" => {
                let id = row.tie_id.filter(|s| !s.is_empty()).ok_or_else(|| {
                    AdjustError::Format(format!("line {line}: tie rows need a tie_id"))
                })?;
                let entry = ties.entry(id.clone()).or_insert_with(|| TiePoint {
                    id,
                    observations: Vec::new(),
                    sigma_px: row.sigma_px,
                    ground: None,
                });
                entry.observations.push((row.image_id, pixel));
            }
            other => {
                return Err(AdjustError::Format(format!(
                    "line {line}: unknown role {other:?} (expected control, check or tie)"
                )))
            }
        }
    }
    let ties: Vec<TiePoint> = ties.into_values().collect();
    for tie in &ties {
        if tie.observations.len() < 2 {
            return Err(AdjustError::Format(format!(
                "tie {} has {} observation(s), at least 2 required",
                tie.id,
                tie.observations.len()
            )));
        }
    }
    Ok((gcps, ties))
}

/// Write observations in the format accepted by [`read_observations_csv`].
pub fn write_observations_csv(
    path: impl AsRef<Path>,
    gcps: &[GcpRecord],
    ties: &[TiePoint],
) -> Result<(), AdjustError> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    for gcp in gcps {
        let geo = crate::geo::ecef_to_geodetic(gcp.ground)?;
        writer.serialize(ObsRow {
            image_id: gcp.image_id.clone(),
            col: gcp.pixel.col,
            row: gcp.pixel.row,
            lon: Some(geo.lon),
            lat: Some(geo.lat),
            h: Some(geo.h),
            sigma_px: gcp.sigma_px,
            role: match gcp.role {
                GcpRole::Control => "control".into(),
                GcpRole::Check => "check".into(),
            },
            tie_id: None,
        })?;
    }
    for tie in ties {
        for (image_id, pixel) in &tie.observations {
            writer.serialize(ObsRow {
                image_id: image_id.clone(),
                col: pixel.col,
                row: pixel.row,
                lon: None,
                lat: None,
                h: None,
                sigma_px: tie.sigma_px,
                role: "tie".into(),
                tie_id: Some(tie.id.clone()),
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

//! Tie points returned by the matcher, with screening and CSV interchange.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GcpError, TileSpec};
use crate::pancam::PixelPoint;

/// Matches below this confidence are dropped during screening.
pub const MIN_CONFIDENCE: f64 = 0.5;
/// Screening keeps at most this many matches per tile (best first), so one
/// feature-rich tile cannot dominate the solution.
pub const MAX_MATCHES_PER_TILE: usize = 200;

/// One correspondence between a panoramic-image pixel and a geographic
/// location on the reference basemap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundMatch {
    pub tile_id: String,
    pub corona_px: PixelPoint,
    /// Matched location on the reference, degrees.
    pub ref_lonlat: (f64, f64),
    /// Matcher confidence in `[0, 1]`.
    pub confidence: f64,
}

/// All matches from one matcher run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<GroundMatch>,
}

impl MatchSet {
    pub fn new(matches: Vec<GroundMatch>) -> Self {
        MatchSet { matches }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Check every match is well-formed and lands inside the tile window it
    /// claims to come from.
    pub fn validate_against(&self, tiles: &[TileSpec]) -> Result<(), GcpError> {
        let by_id: HashMap<&str, &TileSpec> =
            tiles.iter().map(|t| (t.tile_id.as_str(), t)).collect();
        for m in &self.matches {
            if !(0.0..=1.0).contains(&m.confidence)
                || !m.corona_px.col.is_finite()
                || !m.corona_px.row.is_finite()
                || !m.ref_lonlat.0.is_finite()
                || !m.ref_lonlat.1.is_finite()
            {
                return Err(GcpError::Format(format!(
                    "malformed match in tile {}: {m:?}",
                    m.tile_id
                )));
            }
            let tile = by_id
                .get(m.tile_id.as_str())
                .ok_or_else(|| GcpError::UnknownTile(m.tile_id.clone()))?;
            if !tile.contains(m.corona_px) {
                return Err(GcpError::MatchOutsideTile {
                    tile_id: m.tile_id.clone(),
                    col: m.corona_px.col,
                    row: m.corona_px.row,
                });
            }
        }
        Ok(())
    }

    /// Apply the confidence floor and the per-tile cap, keeping the most
    /// confident matches of each tile.
    pub fn screened(&self) -> MatchSet {
        let mut per_tile: HashMap<&str, Vec<&GroundMatch>> = HashMap::new();
        for m in &self.matches {
            if m.confidence >= MIN_CONFIDENCE {
                per_tile.entry(m.tile_id.as_str()).or_default().push(m);
            }
        }
        let mut kept = Vec::new();
        for bucket in per_tile.values_mut() {
            bucket.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
            kept.extend(bucket.iter().take(MAX_MATCHES_PER_TILE).map(|m| (*m).clone()));
        }
        // Stable output order regardless of hash-map iteration.
        kept.sort_by(|a, b| {
            a.tile_id.cmp(&b.tile_id).then(a.corona_px.row.total_cmp(&b.corona_px.row))
                .then(a.corona_px.col.total_cmp(&b.corona_px.col))
        });
        MatchSet { matches: kept }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), GcpError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["tile_id", "corona_col", "corona_row", "ref_lon", "ref_lat",
            "confidence"])?;
        for m in &self.matches {
            w.write_record([
                m.tile_id.as_str(),
                &format!("{:.4}", m.corona_px.col),
                &format!("{:.4}", m.corona_px.row),
                &format!("{:.9}", m.ref_lonlat.0),
                &format!("{:.9}", m.ref_lonlat.1),
                &format!("{:.4}", m.confidence),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, GcpError> {
        let mut r = csv::Reader::from_path(path)?;
        let expect = ["tile_id", "corona_col", "corona_row", "ref_lon", "ref_lat", "confidence"];
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != expect {
            return Err(GcpError::Format(format!("unexpected match CSV header {header:?}")));
        }
        let mut matches = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<f64, GcpError> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| GcpError::Format(format!("bad match row {rec:?}")))
            };
            matches.push(GroundMatch {
                tile_id: rec
                    .get(0)
                    .ok_or_else(|| GcpError::Format("missing tile_id".into()))?
                    .to_string(),
                corona_px: PixelPoint::new(field(1)?, field(2)?),
                ref_lonlat: (field(3)?, field(4)?),
                confidence: field(5)?,
            });
        }
        Ok(MatchSet { matches })
    }
}

//! GeoTIFF reading and writing for [`RasterGrid`].
//!
//! Grids are stored as single-band 32-bit float imagery. North-up transforms
//! use the pixel-scale and tiepoint tags; rotated transforms fall back to the
//! full 4x4 model transformation matrix. The nodata value travels in the GDAL
//! nodata tag and the coordinate system in a minimal geokey directory.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;

use super::{GeoError, RasterGrid};

const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
const TAG_MODEL_TIEPOINT: u16 = 33922;
const TAG_MODEL_TRANSFORMATION: u16 = 34264;
const TAG_GEO_KEY_DIRECTORY: u16 = 34735;
const TAG_GDAL_NODATA: u16 = 42113;

const KEY_MODEL_TYPE: u16 = 1024;
const KEY_RASTER_TYPE: u16 = 1025;
const KEY_GEOGRAPHIC_TYPE: u16 = 2048;
const KEY_PROJECTED_TYPE: u16 = 3072;

fn epsg_code(crs: &str) -> Option<u16> {
    crs.strip_prefix("EPSG:")?.parse().ok()
}

fn geo_key_directory(crs: &str) -> Option<Vec<u16>> {
    let code = epsg_code(crs)?;
    let (model, cs_key) = if code == 4326 {
        (2u16, KEY_GEOGRAPHIC_TYPE)
    } else {
        (1u16, KEY_PROJECTED_TYPE)
    };
    // Header (version 1.1.0, 3 keys), then one 4-short record per key.
    Some(vec![
        1, 1, 0, 3,
        KEY_MODEL_TYPE, 0, 1, model,
        KEY_RASTER_TYPE, 0, 1, 1, // PixelIsArea: corner-anchored cells
        cs_key, 0, 1, code,
    ])
}

fn crs_from_keys(keys: &[u16]) -> String {
    let mut model = None;
    let mut code = None;
    for rec in keys[4.min(keys.len())..].chunks_exact(4) {
        match rec[0] {
            KEY_MODEL_TYPE => model = Some(rec[3]),
            KEY_GEOGRAPHIC_TYPE | KEY_PROJECTED_TYPE if rec[1] == 0 => code = Some(rec[3]),
            _ => {}
        }
    }
    match (model, code) {
        (_, Some(c)) => format!("EPSG:{c}"),
        (Some(2), None) => "EPSG:4326".to_string(),
        _ => "unknown".to_string(),
    }
}

pub fn write_geotiff(grid: &RasterGrid, path: &Path) -> Result<(), GeoError> {
    let file = BufWriter::new(File::create(path)?);
    let mut encoder = TiffEncoder::new(file)?;
    let mut image =
        encoder.new_image::<colortype::Gray32Float>(grid.width as u32, grid.height as u32)?;

    let g = &grid.geotransform;
    let north_up = g[2] == 0.0 && g[4] == 0.0 && g[5] < 0.0;
    if north_up {
        let scale = [g[1], -g[5], 0.0];
        let tiepoint = [0.0, 0.0, 0.0, g[0], g[3], 0.0];
        image.encoder().write_tag(Tag::Unknown(TAG_MODEL_PIXEL_SCALE), &scale[..])?;
        image.encoder().write_tag(Tag::Unknown(TAG_MODEL_TIEPOINT), &tiepoint[..])?;
    } else {
        let m = [
            g[1], g[2], 0.0, g[0],
            g[4], g[5], 0.0, g[3],
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ];
        image.encoder().write_tag(Tag::Unknown(TAG_MODEL_TRANSFORMATION), &m[..])?;
    }
    if let Some(keys) = geo_key_directory(&grid.crs) {
        image.encoder().write_tag(Tag::Unknown(TAG_GEO_KEY_DIRECTORY), &keys[..])?;
    }
    image.encoder().write_tag(
        Tag::Unknown(TAG_GDAL_NODATA),
        format!("{}", grid.nodata).as_str(),
    )?;
    image.write_data(grid.data())?;
    Ok(())
}

pub fn read_geotiff(path: &Path) -> Result<RasterGrid, GeoError> {
    let mut decoder = Decoder::new(BufReader::new(File::open(path)?))?;
    let (width, height) = decoder.dimensions()?;
    let (width, height) = (width as usize, height as usize);

    let geotransform = if let Some(v) = decoder.find_tag(Tag::Unknown(TAG_MODEL_TRANSFORMATION))? {
        let m = v.into_f64_vec()?;
        if m.len() < 16 {
            return Err(GeoError::UnsupportedFormat(
                "short model transformation matrix".into(),
            ));
        }
        [m[3], m[0], m[1], m[7], m[4], m[5]]
    } else {
        let scale = decoder
            .find_tag(Tag::Unknown(TAG_MODEL_PIXEL_SCALE))?
            .map(|v| v.into_f64_vec())
            .transpose()?
            .ok_or_else(|| GeoError::UnsupportedFormat("no georeferencing tags".into()))?;
        let tp = decoder
            .find_tag(Tag::Unknown(TAG_MODEL_TIEPOINT))?
            .map(|v| v.into_f64_vec())
            .transpose()?
            .unwrap_or_else(|| vec![0.0; 6]);
        if scale.len() < 2 || tp.len() < 5 {
            return Err(GeoError::UnsupportedFormat("short georeferencing tags".into()));
        }
        // Tiepoint maps pixel (tp0, tp1) to world (tp3, tp4).
        let x0 = tp[3] - tp[0] * scale[0];
        let y0 = tp[4] + tp[1] * scale[1];
        [x0, scale[0], 0.0, y0, 0.0, -scale[1]]
    };

    let nodata = match decoder.find_tag(Tag::Unknown(TAG_GDAL_NODATA))? {
        Some(v) => v.into_string()?.trim().trim_end_matches('\0').parse().unwrap_or(f32::NAN),
        None => f32::NAN,
    };
    let crs = match decoder.find_tag(Tag::Unknown(TAG_GEO_KEY_DIRECTORY))? {
        Some(v) => crs_from_keys(&v.into_u16_vec()?),
        None => "unknown".to_string(),
    };

    let data = match decoder.read_image()? {
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::U8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(|x| x as f32).collect(),
        _ => return Err(GeoError::UnsupportedFormat("unhandled sample type".into())),
    };
    RasterGrid::from_data(width, height, geotransform, nodata, crs, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn north_up_round_trip() {
        let mut g =
            RasterGrid::north_up(5, 4, 500_000.0, 4_200_000.0, 30.0, 30.0, -9999.0, "EPSG:32642")
                .unwrap();
        for (i, v) in g.data_mut().iter_mut().enumerate() {
            *v = i as f32 * 1.5;
        }
        g.set(2, 1, -9999.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.tif");
        g.write(&p).unwrap();
        let back = RasterGrid::read(&p).unwrap();
        assert_eq!(back.width, 5);
        assert_eq!(back.height, 4);
        assert_eq!(back.crs, "EPSG:32642");
        assert_eq!(back.nodata, -9999.0);
        for i in 0..6 {
            assert!((back.geotransform[i] - g.geotransform[i]).abs() < 1e-9);
        }
        assert_eq!(back.data(), g.data());
    }

    #[test]
    fn rotated_transform_round_trip() {
        let gt = [10.0, 0.9, 0.3, 55.0, 0.3, -0.9];
        let g = RasterGrid::from_data(3, 3, gt, f32::NAN, "EPSG:4326", vec![1.0; 9]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rot.tif");
        g.write(&p).unwrap();
        let back = RasterGrid::read(&p).unwrap();
        for i in 0..6 {
            assert!((back.geotransform[i] - gt[i]).abs() < 1e-12);
        }
        assert!(back.nodata.is_nan());
        assert_eq!(back.crs, "EPSG:4326");
    }
}

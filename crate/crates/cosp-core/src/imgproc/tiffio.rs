//! Grayscale TIFF input and output.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};

use super::{GrayImage, ImageError};

pub fn write_u8(img: &GrayImage, path: &Path) -> Result<(), ImageError> {
    let data: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| {
            if v.is_finite() {
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    let mut enc = TiffEncoder::new(BufWriter::new(File::create(path)?))?;
    enc.write_image::<colortype::Gray8>(img.width as u32, img.height as u32, &data)?;
    Ok(())
}

pub fn write_f32(img: &GrayImage, path: &Path) -> Result<(), ImageError> {
    let mut enc = TiffEncoder::new(BufWriter::new(File::create(path)?))?;
    enc.write_image::<colortype::Gray32Float>(img.width as u32, img.height as u32, img.data())?;
    Ok(())
}

pub fn read(path: &Path) -> Result<GrayImage, ImageError> {
    let mut dec = Decoder::new(BufReader::new(File::open(path)?))?;
    let (w, h) = dec.dimensions()?;
    let data: Vec<f32> = match dec.read_image()? {
        DecodingResult::U8(v) => v.into_iter().map(|x| x as f32 / 255.0).collect(),
        DecodingResult::U16(v) => v.into_iter().map(|x| x as f32 / 65535.0).collect(),
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        _ => return Err(ImageError::Unsupported("sample type".into())),
    };
    GrayImage::from_data(w as usize, h as usize, data)
}

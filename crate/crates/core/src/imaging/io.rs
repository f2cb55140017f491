//! PNG and JPEG codecs for [`ImageBuffer`].

use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{DynamicImage, ExtendedColorType, ImageFormat};

use super::ImageBuffer;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Image(#[from] image::ImageError),
    #[error("decoded image has unusable dimensions")]
    Shape,
}

fn color_type(img: &ImageBuffer) -> ExtendedColorType {
    if img.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    }
}

/// Decodes any supported format. Gray and gray-alpha inputs stay single
/// channel; everything else becomes RGB.
pub fn decode(bytes: &[u8]) -> Result<ImageBuffer, CodecError> {
    let dynamic = image::load_from_memory(bytes)?;
    from_dynamic(dynamic)
}

fn from_dynamic(dynamic: DynamicImage) -> Result<ImageBuffer, CodecError> {
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let gray = matches!(dynamic, DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_));
    let buf = if gray {
        ImageBuffer::from_raw(w, h, 1, dynamic.into_luma8().into_raw())
    } else {
        ImageBuffer::from_raw(w, h, 3, dynamic.into_rgb8().into_raw())
    };
    buf.map_err(|_| CodecError::Shape)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer, CodecError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CodecError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>, CodecError> {
    let mut out = Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        img.data(),
        img.width() as u32,
        img.height() as u32,
        color_type(img),
        ImageFormat::Png,
    )?;
    Ok(out.into_inner())
}

pub fn write_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<(), CodecError> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|source| CodecError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn encode_jpeg(img: &ImageBuffer, quality: u8) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    let mut enc = JpegEncoder::new_with_quality(&mut out, quality.clamp(1, 100));
    enc.encode(img.data(), img.width() as u32, img.height() as u32, color_type(img))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_rgb_and_gray() {
        let rgb = ImageBuffer::from_fn_rgb(17, 9, |x, y| [x as u8 * 10, y as u8 * 20, 7]).unwrap();
        assert_eq!(decode(&encode_png(&rgb).unwrap()).unwrap(), rgb);
        let gray = rgb.to_gray();
        assert_eq!(decode(&encode_png(&gray).unwrap()).unwrap(), gray);
    }

    #[test]
    fn jpeg_is_decodable_and_close() {
        let img = ImageBuffer::from_rgb_fill(32, 16, [120, 60, 200]).unwrap();
        let jpg = encode_jpeg(&img, 90).unwrap();
        assert_eq!(&jpg[..2], &[0xFF, 0xD8]);
        let back = decode(&jpg).unwrap();
        assert_eq!((back.width(), back.height()), (32, 16));
        assert!((back.mean() - img.mean()).abs() < 4.0);
    }
}
